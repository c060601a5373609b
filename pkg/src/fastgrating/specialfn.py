"""Bessel functions J0, J1, Y0, Y1 and Hankel functions H0^(1), H1^(1).

Real positive arguments only. Three regimes are used:

* ``x < 4``: ascending power series (Horner form in x^2/4).
* ``4 <= x < 25``: local Taylor expansions about centres spaced 1/8 apart.
  Centre values come from the ascending series summed in 60-digit decimal
  arithmetic at import time; higher Taylor coefficients follow from the
  Bessel ODE recurrence.
* ``x >= 25``: Hankel's asymptotic expansion, 20 terms.

All evaluations are vectorized over numpy arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal, localcontext
from math import factorial

import numpy as np

__all__ = [
    "DomainError",
    "HankelPair",
    "hankel01",
    "hankel01_array",
    "bessel_jy01",
    "EULER_GAMMA",
]

EULER_GAMMA = 0.57721566490153286061

SERIES_MAX = 4.0
ASYMPTOTIC_MIN = 25.0
_TABLE_SPACING = 0.125
_TAYLOR_TERMS = 11
_SERIES_TERMS = 22
_ASYMPTOTIC_TERMS = 20

_PI_DEC = "3.14159265358979323846264338327950288419716939937510582097494459"
_GAMMA_DEC = "0.57721566490153286060651209008240243104215933593992359880576723"


class DomainError(ValueError):
    """Raised for arguments outside the supported domain."""


@dataclass(frozen=True)
class HankelPair:
    h0: complex
    h1: complex


# --------------------------------------------------------------------------
# ascending series coefficients (double precision)

def _series_coefficients(n):
    harmonic = np.cumsum(np.r_[0.0, 1.0 / np.arange(1, n)])
    k = np.arange(n)
    fact = np.array([float(factorial(int(j))) for j in k])
    sign = (-1.0) ** k
    # J0 = sum sign z^k / k!^2, z = x^2/4
    j0 = sign / fact**2
    # Y0 smooth part: (2/pi) sum (-1)^(k+1) H_k z^k / k!^2
    y0 = -sign * harmonic / fact**2
    # J1 = (x/2) sum sign z^k / (k!(k+1)!)
    j1 = sign / (fact * fact * (k + 1))
    # Y1 smooth part uses psi(k+1) + psi(k+2) = H_k + H_{k+1} - 2 gamma
    psi_sum = harmonic + np.r_[harmonic[1:], harmonic[-1] + 1.0 / n] - 2 * EULER_GAMMA
    y1 = sign * psi_sum / (fact * fact * (k + 1))
    return j0, y0, j1, y1


_SJ0, _SY0, _SJ1, _SY1 = _series_coefficients(_SERIES_TERMS)


def _horner(coef, z):
    out = np.full_like(z, coef[-1])
    for c in coef[-2::-1]:
        out = out * z + c
    return out


def _series(x):
    z = 0.25 * x * x
    j0 = _horner(_SJ0, z)
    j1 = 0.5 * x * _horner(_SJ1, z)
    log_term = np.log(0.5 * x) + EULER_GAMMA
    y0 = (2 / np.pi) * (log_term * j0 + _horner(_SY0, z))
    y1 = (
        -2 / (np.pi * x)
        + (2 / np.pi) * np.log(0.5 * x) * j1
        - (1 / np.pi) * 0.5 * x * _horner(_SY1, z)
    )
    return j0, y0, j1, y1


# --------------------------------------------------------------------------
# middle range: Taylor table built from extended-precision centre values

def _decimal_jy01(x: Decimal):
    """J0, Y0, J1, Y1 at ``x`` by the ascending series in decimal arithmetic."""
    pi = Decimal(_PI_DEC)
    gamma = Decimal(_GAMMA_DEC)
    half = x / 2
    z = half * half
    term = Decimal(1)  # z^k / k!^2
    harmonic = Decimal(0)
    j0 = Decimal(0)
    y0s = Decimal(0)
    j1 = Decimal(0)
    y1s = Decimal(0)
    k = 0
    while True:
        sign = 1 if k % 2 == 0 else -1
        t1 = term / (k + 1)  # z^k / (k!(k+1)!)
        harmonic_next = harmonic + Decimal(1) / (k + 1)
        j0 += sign * term
        y0s += -sign * harmonic * term
        j1 += sign * t1
        y1s += sign * (harmonic + harmonic_next - 2 * gamma) * t1
        if k > 10 and abs(term) < Decimal(10) ** -70:
            break
        k += 1
        term = term * z / (k * k)
        harmonic = harmonic_next
    ln_half = half.ln()
    j1 = half * j1
    y0 = (2 / pi) * ((ln_half + gamma) * j0 + y0s)
    y1 = -2 / (pi * x) + (2 / pi) * ln_half * j1 - (1 / pi) * half * y1s
    return j0, y0, j1, y1


def _taylor_coefficients(c: Decimal, value: Decimal, deriv: Decimal, order: int):
    """Taylor coefficients about ``c`` of a solution of Bessel's ODE of given order.

    From (c+h)^2 y'' + (c+h) y' + ((c+h)^2 - nu^2) y = 0.
    """
    nu2 = order * order
    a = [value, deriv]
    for k in range(0, _TAYLOR_TERMS - 2):
        am1 = a[k - 1] if k >= 1 else Decimal(0)
        am2 = a[k - 2] if k >= 2 else Decimal(0)
        rhs = (
            (2 * k * (k + 1) + (k + 1)) * c * a[k + 1]
            + (k * k + c * c - nu2) * a[k]
            + 2 * c * am1
            + am2
        )
        a.append(-rhs / (c * c * (k + 2) * (k + 1)))
    return [float(v) for v in a]


def _build_table():
    centres = np.arange(SERIES_MAX + _TABLE_SPACING / 2, ASYMPTOTIC_MIN, _TABLE_SPACING)
    table = np.empty((_TAYLOR_TERMS, len(centres), 4))
    with localcontext() as ctx:
        ctx.prec = 60
        for i, c in enumerate(centres):
            cd = Decimal(repr(float(c)))
            j0, y0, j1, y1 = _decimal_jy01(cd)
            # C0' = -C1 and C1' = C0 - C1/x for any cylinder function C
            table[:, i, 0] = _taylor_coefficients(cd, j0, -j1, 0)
            table[:, i, 1] = _taylor_coefficients(cd, y0, -y1, 0)
            table[:, i, 2] = _taylor_coefficients(cd, j1, j0 - j1 / cd, 1)
            table[:, i, 3] = _taylor_coefficients(cd, y1, y0 - y1 / cd, 1)
    return centres, table


_CENTRES, _TABLE = _build_table()


def _taylor(x):
    idx = np.floor((x - SERIES_MAX) / _TABLE_SPACING).astype(np.intp)
    idx = np.clip(idx, 0, len(_CENTRES) - 1)
    h = (x - _CENTRES[idx])[:, None]
    out = _TABLE[-1][idx]
    for k in range(_TAYLOR_TERMS - 2, -1, -1):
        out *= h
        out += _TABLE[k][idx]
    return out[:, 0], out[:, 1], out[:, 2], out[:, 3]


# --------------------------------------------------------------------------
# large argument: Hankel asymptotic expansion

def _asymptotic_coefficients(nu: int, n: int):
    mu = 4 * nu * nu
    coef = [1.0]
    for k in range(1, n):
        coef.append(coef[-1] * (mu - (2 * k - 1) ** 2) / (k * 8))
    # multiply by i^k
    return np.array(coef) * (1j ** np.arange(n))


_ASY0 = _asymptotic_coefficients(0, _ASYMPTOTIC_TERMS)
_ASY1 = _asymptotic_coefficients(1, _ASYMPTOTIC_TERMS)


def _asymptotic(x):
    inv = 1.0 / x
    s0 = np.zeros(x.shape, dtype=complex)
    s1 = np.zeros(x.shape, dtype=complex)
    for c0, c1 in zip(_ASY0[::-1], _ASY1[::-1]):
        s0 = s0 * inv + c0
        s1 = s1 * inv + c1
    # cos/sin of the exact double x, phase shifts applied separately
    eix = np.cos(x) + 1j * np.sin(x)
    amp = np.sqrt(2.0 / (np.pi * x))
    shift = np.exp(-0.25j * np.pi)
    h0 = amp * eix * shift * s0
    h1 = amp * eix * shift * (-1j) * s1
    return h0.real, h0.imag, h1.real, h1.imag


# --------------------------------------------------------------------------

def _check(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        raise DomainError("Bessel argument must be finite and positive")
    return x


def bessel_jy01(x):
    """Return ``(J0, Y0, J1, Y1)`` evaluated elementwise at ``x > 0``."""
    x = _check(x)
    shape = x.shape
    flat = x.ravel()
    out = np.empty((4, flat.size))
    lo = flat < SERIES_MAX
    hi = flat >= ASYMPTOTIC_MIN
    mid = ~(lo | hi)
    if lo.any():
        out[:, lo] = _series(flat[lo])
    if mid.any():
        out[:, mid] = _taylor(flat[mid])
    if hi.any():
        out[:, hi] = _asymptotic(flat[hi])
    return tuple(o.reshape(shape) for o in out)


def hankel01_array(x):
    """Vectorized ``(H0^(1)(x), H1^(1)(x))`` for real ``x > 0``."""
    j0, y0, j1, y1 = bessel_jy01(x)
    return j0 + 1j * y0, j1 + 1j * y1


def hankel01(x: float) -> HankelPair:
    """Outgoing Hankel functions of orders 0 and 1 at a positive real ``x``."""
    h0, h1 = hankel01_array(np.float64(x))
    return HankelPair(complex(h0), complex(h1))
