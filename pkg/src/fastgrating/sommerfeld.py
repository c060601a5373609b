"""Sommerfeld-contour quadrature and the periodizing blocks B, C, Q.

Wall densities live in the Fourier variable k along a tanh-shaped contour

    k(s) = s - i A tanh((s - s0) / w),   s in [-K, K],

with s = K sinh(b u) / sinh(b) and the midpoint rule in u on [-1, 1]. The
stretching clusters nodes near the branch points +-omega, where the
integrand varies fastest, and spends few on the exponentially decaying
tails. The contour passes from the second
to the fourth quadrant, above the poles at -k_n and below those at +k_n; a
real shift ``s0 > 0`` moves the real-axis crossing to the right so that it
passes above the pole +k_n* of a grazing order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Discretization, GeometryError, translate, Lattice

__all__ = [
    "ContourError",
    "SommerfeldContour",
    "GratingOrders",
    "spectral_sqrt",
    "bloch_phase",
    "build_contour",
    "default_truncation",
    "default_shape",
    "grating_orders",
    "wall_fields",
    "obstacle_to_wall",
    "assemble_B",
    "assemble_C",
    "assemble_Q",
]

# decay exponent: integrand must fall by e^-37 (about 1e-16) over half a period
_DECAY = 73.7


def default_shape(omega):
    """(height A, width w, stretch b) of the contour for wavenumber omega."""
    return (min(6.0, max(1.0, 0.5 * omega)), min(8.0, max(1.0, 0.6 * omega)),
            2.0 + 3.0 / np.sqrt(omega))


class ContourError(ValueError):
    pass


def spectral_sqrt(omega, k):
    """sqrt(omega^2 - k^2) with branch cuts on (-inf, -omega] and [omega, inf).

    The product of principal roots is non-negative real or positive
    imaginary on the real axis and analytic along the Sommerfeld contour.
    """
    k = np.asarray(k, dtype=complex)
    return np.sqrt(omega - k) * np.sqrt(omega + k)


def bloch_phase(omega, theta, d):
    return np.exp(1j * omega * d * np.cos(theta))


@dataclass(frozen=True)
class SommerfeldContour:
    nodes: np.ndarray
    weights: np.ndarray
    omega: float
    K: float
    s0: float = 0.0
    height: float = 1.0
    width: float = 1.0
    stretch: float = 1.0

    @property
    def M(self):
        return len(self.nodes)

    @property
    def root(self):
        """sqrt(omega^2 - k_j^2) at the nodes."""
        return spectral_sqrt(self.omega, self.nodes)


def default_truncation(omega, d):
    return float(np.hypot(omega, _DECAY / d))


def build_contour(omega, d, M=90, s0=0.0, height=None, width=None, K=None, stretch=None,
                  clearance=1e-3) -> SommerfeldContour:
    """Nodes and weights on the stretched tanh contour.

    ``K`` defaults to sqrt(omega^2 + (73.7/d)^2); ``height``, ``width`` and
    ``stretch`` default to ``default_shape(omega)``.
    """
    if M < 40 or M % 2:
        raise ContourError(f"M must be even and >= 40, got {M}")
    if omega <= 0 or d <= 0:
        raise ContourError("omega and d must be positive")
    A0, w0, b0 = default_shape(omega)
    height = A0 if height is None else float(height)
    width = w0 if width is None else float(width)
    stretch = b0 if stretch is None else float(stretch)
    K = default_truncation(omega, d) if K is None else float(K)
    if abs(s0) >= K:
        raise ContourError("contour shift exceeds truncation")
    h = 2.0 / M
    u = -1 + (np.arange(M) + 0.5) * h
    scale = K / np.sinh(stretch)
    s = scale * np.sinh(stretch * u)
    ds = scale * stretch * np.cosh(stretch * u) * h
    t = np.tanh((s - s0) / width)
    nodes = s - 1j * height * t
    weights = ds * (1 - 1j * (height / width) * (1 - t * t))
    gap = min(np.abs(nodes - omega).min(), np.abs(nodes + omega).min())
    if gap < clearance:
        raise ContourError(f"contour passes within {gap:.2e} of a branch point")
    return SommerfeldContour(nodes, weights, float(omega), K, float(s0), height, width, stretch)


@dataclass(frozen=True)
class GratingOrders:
    n: np.ndarray
    kappa: np.ndarray
    k: np.ndarray
    propagating: np.ndarray
    alpha: complex

    def index(self, order):
        return int(np.flatnonzero(self.n == order)[0])


def grating_orders(omega, theta, d, window=None) -> GratingOrders:
    """Bragg orders |n| <= window; by default all with |kappa_n| <= omega + 10/d.

    ``k_n`` is computed as sqrt((omega - kappa)(omega + kappa)) and snapped to
    zero when |kappa_n| is within 16 ulps of omega, so an exact Wood's anomaly
    gives k_n = 0 rather than a rounding residue.
    """
    kx = omega * np.cos(theta)
    step = 2 * np.pi / d
    if window is None:
        lo = int(np.ceil((-omega - 10 / d - kx) / step))
        hi = int(np.floor((omega + 10 / d - kx) / step))
        n = np.arange(lo, hi + 1)
    else:
        n = np.arange(-int(window), int(window) + 1)
    kappa = kx + step * n
    graze = np.abs(omega - np.abs(kappa)) < 16 * np.finfo(float).eps * omega
    kappa = np.where(graze, np.sign(kappa) * omega, kappa)
    k = spectral_sqrt(omega, kappa + 0j)
    k = np.where(graze, 0.0, k)
    prop = np.abs(kappa) <= omega
    return GratingOrders(n, kappa, k, prop, complex(bloch_phase(omega, theta, d)))


def _check_strip(points, d):
    if np.any(np.abs(points[:, 0]) >= d / 2):
        raise GeometryError("obstacle must lie strictly inside the unit-cell strip |x| < d/2")


def wall_fields(points, contour: SommerfeldContour, d, alpha, gradient=False):
    """Fields at ``points`` of unit wall densities at each contour node.

    Returns ``(V, Gx, Gy)``; ``V`` has shape (npts, 2M) with the single-layer
    (mu) columns first and the double-layer (nu) columns second, contour
    weights included, walls at x = -d/2 (weight 1) and x = d/2 (weight
    alpha). ``Gx`` and ``Gy`` are the x and y derivatives, or None.
    Points must lie strictly between the walls.
    """
    x = points[:, 0][:, None]
    y = points[:, 1][:, None]
    k = contour.nodes[None, :]
    r = contour.root[None, :]
    w = contour.weights[None, :]
    ey = np.exp(1j * k * y) * w
    eL = np.exp(1j * r * (x + d / 2)) * ey
    eR = alpha * np.exp(1j * r * (d / 2 - x)) * ey
    V = np.hstack([0.5j * (eL + eR) / r, 0.5 * (eL - eR)])
    if not gradient:
        return V, None, None
    # d/dx: left wall sign +1, right wall sign -1
    Gx = np.hstack([-0.5 * (eL - eR), 0.5j * r * (eL + eR)])
    Gy = V * np.hstack([1j * k, 1j * k])
    return V, Gx, Gy


def assemble_B(disc: Discretization, contour: SommerfeldContour, d, alpha):
    """Wall densities to Dirichlet values on the obstacle nodes (N x 2M)."""
    _check_strip(disc.nodes, d)
    return wall_fields(disc.nodes, contour, d, alpha)[0]


def obstacle_to_wall(nodes, normals, weights, contour: SommerfeldContour, x0, omega=None):
    """Fourier wall data generated by boundary densities.

    Returns a dict of (M x N) matrices ``S``, ``D`` (Fourier values on the
    wall x = x0 of single and double layers) and ``Ds``, ``T`` (Fourier
    x-derivatives), each including the boundary quadrature weights. The
    wavenumber defaults to the contour's.
    """
    omega = contour.omega if omega is None else omega
    k = contour.nodes[:, None]
    r = spectral_sqrt(omega, contour.nodes)[:, None]
    x = nodes[None, :, 0]
    y = nodes[None, :, 1]
    sgn = np.sign(x - x0)
    e = np.exp(-1j * k * y + 1j * r * np.abs(x - x0)) * (weights[None, :] / (4 * np.pi))
    nx = normals[None, :, 0]
    ny = normals[None, :, 1]
    return {
        "S": 1j * e / r,
        "D": e * (-sgn * nx + (k / r) * ny),
        "Ds": e * sgn,
        "T": 1j * e * (r * nx - k * sgn * ny),
    }


def _combined_rows(disc, contour, x0, omega):
    f = obstacle_to_wall(disc.nodes, disc.normals, disc.weights, contour, x0, omega)
    return f["D"] - 1j * omega * f["S"], f["T"] - 1j * omega * f["Ds"]


def assemble_C(disc: Discretization, contour: SommerfeldContour, d, alpha, P=0):
    """Obstacle density to Fourier wall mismatch (2M x N), Dirichlet case.

    Only the outermost images survive the telescoping sum over j = -P..P:
    alpha^P (image +P seen from the left wall) minus alpha^-(P+1) (image -P
    seen from the right wall).
    """
    if P not in (0, 1, 2):
        raise ValueError("P must be 0, 1 or 2")
    _check_strip(disc.nodes, d)
    lat = Lattice(d)
    right = translate(disc, P, lat)
    left = translate(disc, -P, lat)
    if np.any(right.nodes[:, 0] <= -d / 2) or np.any(left.nodes[:, 0] >= d / 2):
        raise GeometryError("translated image crosses a wall")
    omega = contour.omega
    vL, dL = _combined_rows(right, contour, -d / 2, omega)
    vR, dR = _combined_rows(left, contour, d / 2, omega)
    a = alpha**P
    b = alpha ** (-(P + 1))
    return np.vstack([a * vL - b * vR, a * dL - b * dR])


def assemble_Q(contour: SommerfeldContour, d, alpha):
    """Wall densities to Fourier wall mismatch (2M x 2M), four diagonal blocks.

    The constant part [[0, 1], [-1, 0]] comes from the jumps of the wall
    potentials at their own wall: the double layer jumps in value, the
    single layer in x-derivative.
    """
    r = contour.root
    e = 0.5 * np.exp(1j * r * d)
    plus = alpha + 1 / alpha
    minus = 1j * (alpha - 1 / alpha)
    q11 = e * minus / r
    q12 = 1 - e * plus
    q21 = e * plus - 1
    q22 = e * minus * r
    return np.block([[np.diag(q11), np.diag(q12)], [np.diag(q21), np.diag(q22)]])
