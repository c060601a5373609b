"""Helmholtz layer-potential kernels and Nystrom matrices on a closed curve.

The self-interaction matrix of the combined-field operator
``I/2 + D - i omega S`` uses the 6th-order Kapur-Rokhlin corrected trapezoid
rule; interactions between distinct lattice copies use the plain rule.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Discretization, GeometryError
from .specialfn import DomainError, hankel01_array

__all__ = [
    "KR6_RING_CORRECTIONS",
    "ring_weights",
    "green",
    "green_normal_deriv",
    "layer_kernels",
    "NystromBlock",
    "CombinedFieldSelf",
    "assemble_self",
    "assemble_neighbor",
    "combined_field_matrix",
    "layer_gradients",
    "ConfigurationError",
]

# Per-ring corrections gamma_j + gamma_{-j}, j = 1..6, of the 6th-order
# Kapur-Rokhlin rule for a logarithmic singularity.
KR6_RING_CORRECTIONS = np.array([
    4.967362978287758,
    -16.20501504859126,
    25.85153761832639,
    -22.22599466791883,
    9.930104998037539,
    -1.817995878141594,
])


class ConfigurationError(ValueError):
    pass


def ring_weights(n: int) -> np.ndarray:
    """R_j for j = 0..n-1: zero on the diagonal, corrected on six rings."""
    if n <= 12:
        raise ConfigurationError("Kapur-Rokhlin correction needs N > 12")
    r = np.ones(n)
    r[0] = 0.0
    for j, g in enumerate(KR6_RING_CORRECTIONS, 1):
        r[j] = r[n - j] = 1.0 + g
    return r


def green(omega, x, y):
    """Free-space Green's function (i/4) H0^(1)(omega |x - y|)."""
    r = float(np.hypot(x[0] - y[0], x[1] - y[1]))
    if r == 0:
        raise DomainError("coincident points")
    h0, _ = hankel01_array(np.float64(omega * r))
    return complex(0.25j * h0)


def green_normal_deriv(omega, x, y, n_y):
    """Normal derivative of the Green's function with respect to the source."""
    dx, dy = x[0] - y[0], x[1] - y[1]
    r = float(np.hypot(dx, dy))
    if r == 0:
        raise DomainError("coincident points")
    _, h1 = hankel01_array(np.float64(omega * r))
    return complex(0.25j * omega * h1 * (dx * n_y[0] + dy * n_y[1]) / r)


def layer_kernels(k, targets, sources, which, t_normals=None, s_normals=None, mask=None):
    """Kernel matrices between point sets for wavenumber ``k``.

    ``which`` is a string of kernel codes:

    ``S``  G(x, y)
    ``D``  dG/dn_y
    ``A``  dG/dn_x (adjoint double layer)
    ``T``  d^2 G / dn_x dn_y

    Entries where ``mask`` is true (coincident points) are returned as zero.
    Returns a dict of complex arrays of shape (len(targets), len(sources)).
    """
    targets = np.asarray(targets, dtype=float)
    sources = np.asarray(sources, dtype=float)
    dx = targets[:, None, 0] - sources[None, :, 0]
    dy = targets[:, None, 1] - sources[None, :, 1]
    r = np.hypot(dx, dy)
    if mask is not None:
        r = np.where(mask, 1.0, r)
    elif np.any(r == 0):
        raise GeometryError("coincident source and target points")
    h0, h1 = hankel01_array(k * r)
    out = {}
    inv_r = 1.0 / r
    if "S" in which:
        out["S"] = 0.25j * h0
    if "D" in which or "T" in which:
        dn_s = (dx * s_normals[None, :, 0] + dy * s_normals[None, :, 1]) * inv_r
    if "A" in which or "T" in which:
        dn_t = (dx * t_normals[:, None, 0] + dy * t_normals[:, None, 1]) * inv_r
    if "D" in which:
        out["D"] = 0.25j * k * h1 * dn_s
    if "A" in which:
        out["A"] = -0.25j * k * h1 * dn_t
    if "T" in which:
        nn = t_normals[:, None, 0] * s_normals[None, :, 0] + t_normals[:, None, 1] * s_normals[None, :, 1]
        out["T"] = 0.25j * k * (h1 * nn * inv_r + (k * h0 - 2 * h1 * inv_r) * dn_t * dn_s)
    if mask is not None:
        for key in out:
            out[key][mask] = 0.0
    return out


def combined_field_matrix(omega, targets, sources, s_normals, s_weights, mask=None):
    """Plain-trapezoid matrix of (D - i omega S) from sources to targets."""
    kern = layer_kernels(omega, targets, sources, "SD", s_normals=s_normals, mask=mask)
    return (kern["D"] - 1j * omega * kern["S"]) * s_weights[None, :]


def layer_gradients(k, targets, sources, s_normals):
    """Target gradients of the single- and double-layer kernels.

    Returns ``(Sx, Sy, Dx, Dy)``, each (len(targets), len(sources)).
    """
    targets = np.asarray(targets, dtype=float)
    sources = np.asarray(sources, dtype=float)
    dx = targets[:, None, 0] - sources[None, :, 0]
    dy = targets[:, None, 1] - sources[None, :, 1]
    r = np.hypot(dx, dy)
    if np.any(r == 0):
        raise GeometryError("coincident source and target points")
    h0, h1 = hankel01_array(k * r)
    inv_r = 1.0 / r
    gs = -0.25j * k * h1 * inv_r
    dn = dx * s_normals[None, :, 0] + dy * s_normals[None, :, 1]
    c1 = 0.25j * k * (k * h0 * dn * inv_r**2 - 2 * h1 * dn * inv_r**3)
    c2 = 0.25j * k * h1 * inv_r
    return (
        gs * dx,
        gs * dy,
        c1 * dx + c2 * s_normals[None, :, 0],
        c1 * dy + c2 * s_normals[None, :, 1],
    )


@dataclass(frozen=True)
class NystromBlock:
    entries: np.ndarray
    role: str
    omega: float


class CombinedFieldSelf:
    """Entry oracle for the self matrix A = I/2 + D - i omega S on one curve.

    ``block(rows, cols)`` returns A[rows][:, cols] without forming A. The
    proxy methods return the matrices used by the HBS compressor to stand in
    for far-field rows and columns.
    """

    def __init__(self, disc: Discretization, omega: float):
        self.disc = disc
        self.omega = float(omega)
        self.size = disc.n
        self.points = disc.nodes
        self._ring = ring_weights(disc.n)
        self._w = disc.weights

    def block(self, rows, cols):
        rows = np.asarray(rows, dtype=np.intp)
        cols = np.asarray(cols, dtype=np.intp)
        diag = rows[:, None] == cols[None, :]
        d = self.disc
        mat = combined_field_matrix(
            self.omega, d.nodes[rows], d.nodes[cols], d.normals[cols], self._w[cols], mask=diag
        )
        mat *= self._ring[(rows[:, None] - cols[None, :]) % self.size]
        mat[diag] = 0.5
        return mat

    def dense(self):
        idx = np.arange(self.size)
        return self.block(idx, idx)

    def proxy_rows(self, rows, proxy_points, proxy_normals):
        """Fields of proxy single/double layer sources at the ``rows`` targets."""
        kern = layer_kernels(
            self.omega, self.disc.nodes[rows], proxy_points, "SD", s_normals=proxy_normals
        )
        return np.hstack([kern["S"], kern["D"]])

    def proxy_cols(self, cols, proxy_points, proxy_normals):
        """Value and normal derivative on the proxy circle of the ``cols`` sources."""
        d = self.disc
        kern = layer_kernels(
            self.omega, proxy_points, d.nodes[cols], "SDAT",
            t_normals=proxy_normals, s_normals=d.normals[cols],
        )
        w = self._w[cols][None, :]
        val = (kern["D"] - 1j * self.omega * kern["S"]) * w
        der = (kern["T"] - 1j * self.omega * kern["A"]) * w
        return np.vstack([val, der])


def assemble_self(disc: Discretization, omega: float) -> NystromBlock:
    op = CombinedFieldSelf(disc, omega)
    return NystromBlock(op.dense(), "self", float(omega))


def _min_distance(a, b):
    from scipy.spatial import cKDTree

    dist, _ = cKDTree(b).query(a)
    return float(dist.min())


def assemble_neighbor(target: Discretization, source: Discretization, omega: float, role="neighbor"):
    """Combined-field matrix from ``source`` nodes to ``target`` nodes, no corrections."""
    if _min_distance(target.nodes, source.nodes) <= 0:
        raise GeometryError("target and source copies overlap")
    mat = combined_field_matrix(omega, target.nodes, source.nodes, source.normals, source.weights)
    return NystromBlock(mat, role, float(omega))
