"""Dielectric (transmission) obstacles with paired layer densities.

Exterior field D_w tau + S_w sigma, interior field D_nw tau + S_nw sigma.
Matching value and normal derivative of the total field across the
boundary gives, per node, an identity plus bounded kernel differences:

    sigma-row:  sigma - (A_w - A_nw) sigma - (T_w - T_nw) tau =  du_inc/dn
    tau-row:    tau + (S_w - S_nw) sigma + (D_w - D_nw) tau   = -u_inc

Unknowns and rows are interlaced, [sigma_1, tau_1, sigma_2, tau_2, ...], so
that each node's pair stays together in the hierarchical partition.
Neighbor images and walls radiate at the exterior wavenumber only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Discretization, GeometryError, Lattice, translate
from .kernels import ConfigurationError, NystromBlock, layer_gradients, layer_kernels, ring_weights
from .sommerfeld import SommerfeldContour, _check_strip, obstacle_to_wall, wall_fields

__all__ = [
    "InterlacedDensity",
    "MullerSelf",
    "TransmissionFormulation",
    "assemble_self_transmission",
    "assemble_periodizing_transmission",
    "interior_field",
]


@dataclass(frozen=True)
class InterlacedDensity:
    values: np.ndarray

    @property
    def sigma(self):
        return self.values[0::2]

    @property
    def tau(self):
        return self.values[1::2]

    @classmethod
    def from_pair(cls, sigma, tau):
        v = np.empty(2 * len(sigma), dtype=complex)
        v[0::2] = sigma
        v[1::2] = tau
        return cls(v)


def _check_index(index):
    index = float(index)
    if not index > 0:
        raise ConfigurationError("refractive index must be positive")
    if index == 1.0:
        raise ConfigurationError("index 1 is degenerate: the obstacle does not scatter")
    return index


class MullerSelf:
    """Entry oracle for the 2N x 2N interlaced self matrix of one obstacle."""

    def __init__(self, disc: Discretization, omega: float, index: float):
        self.disc = disc
        self.omega = float(omega)
        self.index = _check_index(index)
        self.size = 2 * disc.n
        self.points = np.repeat(disc.nodes, 2, axis=0)
        self._ring = ring_weights(disc.n)
        self._w = disc.weights

    def _node_blocks(self, a, b):
        """Per node pair (a, b): the four kernel-difference blocks, weighted."""
        d = self.disc
        mask = a[:, None] == b[None, :]
        kw = dict(t_normals=d.normals[a], s_normals=d.normals[b], mask=mask)
        out = layer_kernels(self.omega, d.nodes[a], d.nodes[b], "SDAT", **kw)
        inn = layer_kernels(self.index * self.omega, d.nodes[a], d.nodes[b], "SDAT", **kw)
        wt = self._ring[(a[:, None] - b[None, :]) % self.disc.n] * self._w[b][None, :]
        E = np.empty((len(a), len(b), 2, 2), dtype=complex)
        E[:, :, 0, 0] = -(out["A"] - inn["A"]) * wt
        E[:, :, 0, 1] = -(out["T"] - inn["T"]) * wt
        E[:, :, 1, 0] = (out["S"] - inn["S"]) * wt
        E[:, :, 1, 1] = (out["D"] - inn["D"]) * wt
        return E

    def block(self, rows, cols):
        rows = np.asarray(rows, dtype=np.intp)
        cols = np.asarray(cols, dtype=np.intp)
        a, ia = np.unique(rows // 2, return_inverse=True)
        b, ib = np.unique(cols // 2, return_inverse=True)
        E = self._node_blocks(a, b)
        mat = E[ia[:, None], ib[None, :], (rows % 2)[:, None], (cols % 2)[None, :]]
        mat[rows[:, None] == cols[None, :]] = 1.0
        return mat

    def dense(self):
        idx = np.arange(self.size)
        return self.block(idx, idx)

    def proxy_rows(self, rows, proxy_points, proxy_normals):
        """Derivative (sigma-rows) or value (tau-rows) of proxy sources at both wavenumbers."""
        rows = np.asarray(rows, dtype=np.intp)
        d = self.disc
        node = rows // 2
        parts = []
        for k in (self.omega, self.index * self.omega):
            kern = layer_kernels(k, d.nodes[node], proxy_points, "SDAT",
                                 t_normals=d.normals[node], s_normals=proxy_normals)
            sig = (rows % 2 == 0)[:, None]
            parts.append(np.where(sig, kern["A"], kern["S"]))
            parts.append(np.where(sig, kern["T"], kern["D"]))
        return np.hstack(parts)

    def proxy_cols(self, cols, proxy_points, proxy_normals):
        """Value and normal derivative on the proxy circle of each density column."""
        cols = np.asarray(cols, dtype=np.intp)
        d = self.disc
        node = cols // 2
        tau = (cols % 2 == 1)[None, :]
        w = self._w[node][None, :]
        parts = []
        for k in (self.omega, self.index * self.omega):
            kern = layer_kernels(k, proxy_points, d.nodes[node], "SDAT",
                                 t_normals=proxy_normals, s_normals=d.normals[node])
            parts.append(np.where(tau, kern["D"], kern["S"]) * w)
            parts.append(np.where(tau, kern["T"], kern["A"]) * w)
        return np.vstack(parts)


def assemble_self_transmission(disc: Discretization, omega, index) -> NystromBlock:
    op = MullerSelf(disc, omega, index)
    return NystromBlock(op.dense(), "self", float(omega))


def _exterior_rows(omega, targets, t_normals, sources, s_normals, s_weights):
    """Exterior contribution of a separate copy: interlaced rows and columns."""
    kern = layer_kernels(omega, targets, sources, "SDAT", t_normals=t_normals, s_normals=s_normals)
    w = s_weights[None, :]
    out = np.empty((2 * len(targets), 2 * len(sources)), dtype=complex)
    out[0::2, 0::2] = -kern["A"] * w
    out[0::2, 1::2] = -kern["T"] * w
    out[1::2, 0::2] = kern["S"] * w
    out[1::2, 1::2] = kern["D"] * w
    return out


def assemble_periodizing_transmission(disc: Discretization, contour: SommerfeldContour, d, alpha, P=0):
    """B (2N x 2M) and C (2M x 2N) blocks for interlaced densities."""
    _check_strip(disc.nodes, d)
    V, Gx, Gy = wall_fields(disc.nodes, contour, d, alpha, gradient=True)
    nx, ny = disc.normals[:, :1], disc.normals[:, 1:]
    B = np.empty((2 * disc.n, V.shape[1]), dtype=complex)
    B[0::2] = -(nx * Gx + ny * Gy)
    B[1::2] = V
    if P not in (0, 1, 2):
        raise ValueError("P must be 0, 1 or 2")
    lat = Lattice(d)
    right = translate(disc, P, lat)
    left = translate(disc, -P, lat)
    if np.any(right.nodes[:, 0] <= -d / 2) or np.any(left.nodes[:, 0] >= d / 2):
        raise GeometryError("translated image crosses a wall")

    def rows(img, x0):
        f = obstacle_to_wall(img.nodes, img.normals, img.weights, contour, x0)
        val = np.empty((contour.M, 2 * disc.n), dtype=complex)
        der = np.empty_like(val)
        val[:, 0::2], val[:, 1::2] = f["S"], f["D"]
        der[:, 0::2], der[:, 1::2] = f["Ds"], f["T"]
        return val, der

    vL, dL = rows(right, -d / 2)
    vR, dR = rows(left, d / 2)
    a = alpha**P
    b = alpha ** (-(P + 1))
    C = np.vstack([a * vL - b * vR, a * dL - b * dR])
    return B, C


class TransmissionFormulation:
    """Dielectric obstacle of refractive index ``index`` in a periodic array."""

    kind = "transmission"

    def __init__(self, disc: Discretization, omega, period, index):
        self.disc = disc
        self.omega = float(omega)
        self.period = float(period)
        self.index = _check_index(index)
        self.lattice = Lattice(period)
        self.size = 2 * disc.n
        self.points = np.repeat(disc.nodes, 2, axis=0)
        if np.any(np.abs(disc.nodes[:, 0]) >= period / 2):
            raise GeometryError("obstacle must lie strictly inside |x| < d/2")

    def self_operator(self):
        return MullerSelf(self.disc, self.omega, self.index)

    def image(self, j):
        return translate(self.disc, j, self.lattice)

    def neighbor_block(self, j, rows=None, cols=None):
        src = self.image(j)
        d = self.disc
        rows = np.arange(self.size) if rows is None else np.asarray(rows, dtype=np.intp)
        cols = np.arange(self.size) if cols is None else np.asarray(cols, dtype=np.intp)
        a, ia = np.unique(rows // 2, return_inverse=True)
        b, ib = np.unique(cols // 2, return_inverse=True)
        full = _exterior_rows(self.omega, d.nodes[a], d.normals[a], src.nodes[b], src.normals[b], src.weights[b])
        return full[(2 * ia + rows % 2)[:, None], (2 * ib + cols % 2)[None, :]]

    def neighbor_columns(self, src: Discretization, idx):
        d = self.disc
        return _exterior_rows(self.omega, d.nodes, d.normals, src.nodes[idx], src.normals[idx],
                              src.weights[idx])

    def image_points(self, j):
        return self.image(j).nodes

    def neighbor_proxy(self, ppts, pnrm):
        d = self.disc
        kern = layer_kernels(self.omega, d.nodes, ppts, "SDAT", t_normals=d.normals, s_normals=pnrm)
        out = np.empty((self.size, 2 * len(ppts)), dtype=complex)
        out[0::2] = np.hstack([kern["A"], kern["T"]])
        out[1::2] = np.hstack([kern["S"], kern["D"]])
        return out

    def wall_block(self, contour, alpha):
        return assemble_periodizing_transmission(self.disc, contour, self.period, alpha, 0)[0]

    def wall_rows(self, contour, alpha, P):
        return assemble_periodizing_transmission(self.disc, contour, self.period, alpha, P)[1]

    def _boundary_pair(self, u, ux, uy):
        nx, ny = self.disc.normals.T
        out = np.empty(self.size, dtype=complex)
        out[0::2] = nx * ux + ny * uy
        out[1::2] = u
        return out

    def rhs(self, thetas):
        from .periodic_solver import incident_wave

        cols = []
        for t in thetas:
            u, ux, uy = incident_wave(self.omega, t, self.disc.nodes)
            v = self._boundary_pair(u, ux, uy)
            v[1::2] *= -1
            cols.append(v)
        return np.stack(cols, axis=1)

    def mode_column(self, kappa, k):
        x, y = self.disc.nodes.T
        v = np.exp(1j * (kappa * x + k * y))
        out = self._boundary_pair(v, 1j * kappa * v, 1j * k * v)
        out[0::2] *= -1
        return out

    def field_matrices(self, points, alpha, P, gradient=False):
        V = np.zeros((len(points), self.size), dtype=complex)
        Gx = Gy = None
        if gradient:
            Gx = np.zeros_like(V)
            Gy = np.zeros_like(V)
        for j in range(-P, P + 1):
            src = self.image(j)
            ph = alpha**j
            w = src.weights[None, :]
            kern = layer_kernels(self.omega, points, src.nodes, "SD", s_normals=src.normals)
            V[:, 0::2] += ph * kern["S"] * w
            V[:, 1::2] += ph * kern["D"] * w
            if gradient:
                sx, sy, dx, dy = layer_gradients(self.omega, points, src.nodes, src.normals)
                Gx[:, 0::2] += ph * sx * w
                Gx[:, 1::2] += ph * dx * w
                Gy[:, 0::2] += ph * sy * w
                Gy[:, 1::2] += ph * dy * w
        return V, Gx, Gy

    def inside(self, points, P):
        hit = np.zeros(len(points), dtype=bool)
        for j in range(-P - 1, P + 2):
            hit |= self.disc.curve.contains(points, (j * self.period, 0.0))
        return hit


def interior_field(form: TransmissionFormulation, eta, points):
    """Field inside the central obstacle, D_nw tau + S_nw sigma."""
    d = form.disc
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if not np.all(d.curve.contains(points)):
        raise GeometryError("interior evaluation points must lie inside the obstacle")
    kern = layer_kernels(form.index * form.omega, points, d.nodes, "SD", s_normals=d.normals)
    w = d.weights[None, :]
    return (kern["S"] * w) @ eta[0::2] + (kern["D"] * w) @ eta[1::2]
