"""Field evaluation, Bragg amplitudes and flux balance."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .sommerfeld import grating_orders, wall_fields

__all__ = [
    "BraggSpectrum",
    "eval_field",
    "bragg_amplitudes",
    "bragg_from_samples",
    "line_samples",
    "flux_error",
    "write_field_grid",
    "read_field_grid",
    "FieldDomainError",
]


class FieldDomainError(ValueError):
    pass


def _check_points(form, points, P):
    if np.any(form.inside(points, P)):
        raise FieldDomainError("evaluation point lies inside an obstacle copy")


def eval_field(solution, points, gradient=False, check=True):
    """Scattered field (and optionally its gradient) at points of the unit cell.

    Points must satisfy |x| <= d/2 and lie outside the obstacle copies.
    Accuracy degrades within a few node spacings of the boundary, where the
    plain trapezoid rule is used without close-evaluation corrections.
    """
    sys = solution.system
    form = sys.pre.form
    P = sys.P
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if np.any(np.abs(points[:, 0]) > form.period / 2 + 1e-14):
        raise FieldDomainError("points must lie in the unit cell |x| <= d/2")
    if check:
        _check_points(form, points, P)
    V, Gx, Gy = form.field_matrices(points, sys.alpha, P, gradient=gradient)
    W, Wx, Wy = wall_fields(points, sys.contour, form.period, sys.alpha, gradient=gradient)
    u = V @ solution.eta + W @ solution.xi
    if gradient:
        ux = Gx @ solution.eta + Wx @ solution.xi
        uy = Gy @ solution.eta + Wy @ solution.xi
    for (kap, kv), a in zip(sys.wood_orders, solution.mode_coeffs):
        m = a * np.exp(1j * (kap * points[:, 0] + kv * points[:, 1]))
        u = u + m
        if gradient:
            ux = ux + 1j * kap * m
            uy = uy + 1j * kv * m
    if gradient:
        return u, ux, uy
    return u


@dataclass(frozen=True)
class BraggSpectrum:
    theta: float
    omega: float
    n: np.ndarray
    kappa: np.ndarray
    k: np.ndarray
    propagating: np.ndarray
    c: np.ndarray          # upward scattered amplitudes, referenced to y = y0
    d: np.ndarray          # downward scattered amplitudes, referenced to y = -y0
    t: np.ndarray          # downward total amplitudes (d plus the incident wave)
    y0: float

    @property
    def flux_up(self):
        return self._fraction(self.c)

    @property
    def flux_down(self):
        return self._fraction(self.t)

    @property
    def flux_fraction(self):
        return self.flux_up + self.flux_down

    @property
    def flux_error(self):
        return flux_error(self, self.omega, self.theta)

    def _fraction(self, amp):
        out = np.zeros(len(self.n))
        p = self.propagating
        out[p] = self.k[p].real * np.abs(amp[p]) ** 2 / (self.omega * abs(np.sin(self.theta)))
        return out


def _split(U, dU, k, sign):
    """Outgoing amplitude from value and y-derivative of one Fourier mode.

    The outgoing wave is exp(sign i k y); the incoming one has the opposite
    sign. For k ~ 0 the two are indistinguishable and the value is used.
    """
    out = U.copy()
    big = np.abs(k) > 1e-8
    out[big] = 0.5 * (U[big] + sign * dU[big] / (1j * k[big]))
    return out


def line_samples(d, samples):
    """Midpoint abscissae in the unit cell used for Bragg extraction."""
    return -d / 2 + (np.arange(samples) + 0.5) * d / samples


def bragg_from_samples(omega, theta, d, y0, top, bottom, window=None) -> BraggSpectrum:
    """Rayleigh-Bloch amplitudes from (u, du/dy) sampled on y = y0 and y = -y0.

    ``top`` and ``bottom`` are pairs of arrays at ``line_samples(d, S)``.
    ``c_n`` multiplies exp(i kappa_n x + i k_n (y - y0)) above the grating and
    ``d_n`` multiplies exp(i kappa_n x - i k_n (y + y0)) below it.
    """
    orders = grating_orders(omega, theta, d, window)
    samples = len(top[0])
    xs = line_samples(d, samples)
    phase = np.exp(-1j * np.outer(orders.kappa, xs)) / samples
    amps = []
    for (u, uy), sgn in ((top, 1.0), (bottom, -1.0)):
        amps.append(_split(phase @ np.asarray(u), phase @ np.asarray(uy), orders.k, sgn))
    c, dn = amps
    t = dn.copy()
    i0 = orders.index(0)
    t[i0] += np.exp(1j * orders.k[i0] * y0)
    return BraggSpectrum(theta, omega, orders.n, orders.kappa, orders.k, orders.propagating, c, dn, t, y0)


def bragg_amplitudes(solution, y0=None, samples=40, window=None) -> BraggSpectrum:
    """Rayleigh-Bloch amplitudes from samples on the lines y = +-y0."""
    sys = solution.system
    form = sys.pre.form
    prob = sys.pre.problem
    omega, d, theta = prob.omega, prob.period, solution.theta
    y0 = sys.y0 if y0 is None else float(y0)
    _, _, ymin, ymax = form.disc.curve.bounding_box()
    if y0 <= max(abs(ymin), abs(ymax)):
        raise FieldDomainError("y0 must clear the obstacle's vertical extent")
    norders = len(grating_orders(omega, theta, d, window).n)
    if samples < 2 * norders + 2 and window is None:
        samples = 2 * norders + 2
    xs = line_samples(d, samples)
    lines = []
    for sgn in (1.0, -1.0):
        pts = np.stack([xs, np.full(samples, sgn * y0)], axis=1)
        u, _, uy = eval_field(solution, pts, gradient=True, check=False)
        lines.append((u, uy))
    return bragg_from_samples(omega, theta, d, y0, lines[0], lines[1], window)



def flux_error(spectrum: BraggSpectrum, omega=None, theta=None) -> float:
    """|1 - outgoing energy flux / incident energy flux| over one period."""
    omega = spectrum.omega if omega is None else omega
    theta = spectrum.theta if theta is None else theta
    p = spectrum.propagating
    if not np.any(p):
        raise ValueError("no propagating orders")
    k = spectrum.k[p].real
    out = np.sum(k * (np.abs(spectrum.c[p]) ** 2 + np.abs(spectrum.t[p]) ** 2))
    return float(abs(1 - out / (omega * abs(np.sin(theta)))))


def write_field_grid(path, values, origin, spacing, shape):
    """Raw little-endian complex128 values (row-major, y slowest) plus a sidecar.

    The sidecar ``<path>.txt`` holds ``origin``, ``spacing`` and ``shape``
    lines (x then y).
    """
    path = Path(path)
    arr = np.asarray(values, dtype="<c16").reshape(shape[1], shape[0])
    side = (
        f"origin {origin[0]!r} {origin[1]!r}\n"
        f"spacing {spacing[0]!r} {spacing[1]!r}\n"
        f"shape {shape[0]} {shape[1]}\n"
        "dtype complex128 little-endian, row-major with y slowest\n"
    )
    for target, data in ((path, arr.tobytes()), (Path(str(path) + ".txt"), side.encode())):
        tmp = target.with_name(f".{target.name}.tmp")
        tmp.write_bytes(data)
        os.replace(tmp, target)


def read_field_grid(path):
    path = Path(path)
    meta = {}
    for line in Path(str(path) + ".txt").read_text().splitlines():
        parts = line.split()
        if parts and parts[0] in ("origin", "spacing"):
            meta[parts[0]] = (float(parts[1]), float(parts[2]))
        elif parts and parts[0] == "shape":
            meta["shape"] = (int(parts[1]), int(parts[2]))
    nx, ny = meta["shape"]
    vals = np.frombuffer(path.read_bytes(), dtype="<c16").reshape(ny, nx)
    return vals, meta
