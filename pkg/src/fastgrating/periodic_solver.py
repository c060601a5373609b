"""Periodized boundary integral system: block solve, Woodbury neighbor update,
and augmentation at Wood's anomalies.

The unknowns are the obstacle density eta (one value per node, or an
interlaced pair for transmission) and the Fourier wall densities
xi = [mu; nu] at the Sommerfeld nodes. For a Bloch phase alpha the system is

    [ A~  B ] [eta]   [b]
    [ C   Q ] [xi ] = [0],      A~ = A + sum_{0<|j|<=P} alpha^j A_j.

A is inverted once per frequency in compressed form; A_j = P_nb R_j share
one interpolation basis, so A~^{-1} follows from the Woodbury identity.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .geometry import BoundaryCurve, Discretization, GeometryError, Lattice, discretize, translate
from .hbs import CompressedInverse, apply_inverse, build_inverse, compress, id_decompose
from .kernels import CombinedFieldSelf, combined_field_matrix, layer_gradients, layer_kernels
from .sommerfeld import (
    SommerfeldContour,
    assemble_B,
    assemble_C,
    assemble_Q,
    bloch_phase,
    build_contour,
    grating_orders,
    wall_fields,
)

__all__ = [
    "SolverError",
    "WoodAnomalyError",
    "GratingProblem",
    "DirichletFormulation",
    "NeighborFactors",
    "Precomputed",
    "PeriodicSystem",
    "Solution",
    "make_formulation",
    "factor_neighbors",
    "precompute",
    "detect_wood",
    "wood_shift",
    "assemble_system",
    "augment_wood",
    "apply_Atilde_inverse",
    "solve_block",
    "solve_angles",
    "bucket_angles",
    "incident_wave",
]

WOOD_FRACTION = 0.1


class SolverError(RuntimeError):
    pass


class WoodAnomalyError(SolverError):
    pass


@dataclass(frozen=True)
class GratingProblem:
    curve: BoundaryCurve
    period: float
    omega: float
    N: int
    M: int = 90
    P: int = 1
    eps: float = 1e-10
    problem: str = "dirichlet"
    index: float | None = None
    leaf_size: int = 64
    wood: str = "auto"

    def __post_init__(self):
        if self.P not in (0, 1, 2):
            raise ValueError("P must be 0, 1 or 2")
        if self.problem not in ("dirichlet", "transmission"):
            raise ValueError(f"unknown problem type {self.problem!r}")
        if self.wood not in ("auto", "off", "force"):
            raise ValueError(f"unknown wood mode {self.wood!r}")
        if self.problem == "transmission" and self.index is None:
            raise ValueError("transmission needs a refractive index")


def incident_wave(omega, theta, points):
    """Plane wave exp(i omega (x cos theta + y sin theta)) and its gradient."""
    c, s = np.cos(theta), np.sin(theta)
    u = np.exp(1j * omega * (points[:, 0] * c + points[:, 1] * s))
    return u, 1j * omega * c * u, 1j * omega * s * u


class DirichletFormulation:
    """Sound-soft obstacle with the combined-field density."""

    kind = "dirichlet"

    def __init__(self, disc: Discretization, omega, period):
        self.disc = disc
        self.omega = float(omega)
        self.period = float(period)
        self.lattice = Lattice(period)
        self.size = disc.n
        self.points = disc.nodes
        if np.any(np.abs(disc.nodes[:, 0]) >= period / 2):
            raise GeometryError("obstacle must lie strictly inside |x| < d/2")

    def self_operator(self):
        return CombinedFieldSelf(self.disc, self.omega)

    def image(self, j):
        return translate(self.disc, j, self.lattice)

    def neighbor_block(self, j, rows=None, cols=None):
        """Rows/columns of A_j (effect on this copy of image j's density)."""
        src = self.image(j)
        d = self.disc
        r = slice(None) if rows is None else rows
        c = slice(None) if cols is None else cols
        return combined_field_matrix(
            self.omega, d.nodes[r], src.nodes[c], src.normals[c], src.weights[c]
        )

    def neighbor_columns(self, src: Discretization, idx):
        """All rows of this copy against sources ``src.nodes[idx]``."""
        return combined_field_matrix(
            self.omega, self.disc.nodes, src.nodes[idx], src.normals[idx], src.weights[idx]
        )

    def image_points(self, j):
        return self.image(j).nodes

    def neighbor_proxy(self, ppts, pnrm):
        kern = layer_kernels(self.omega, self.disc.nodes, ppts, "SD", s_normals=pnrm)
        return np.hstack([kern["S"], kern["D"]])

    def wall_block(self, contour, alpha):
        return assemble_B(self.disc, contour, self.period, alpha)

    def wall_rows(self, contour, alpha, P):
        return assemble_C(self.disc, contour, self.period, alpha, P)

    def rhs(self, thetas):
        return np.stack([-incident_wave(self.omega, t, self.disc.nodes)[0] for t in thetas], axis=1)

    def mode_column(self, kappa, k):
        """Boundary data of the plane wave exp(i kappa x + i k y)."""
        x, y = self.disc.nodes.T
        return np.exp(1j * (kappa * x + k * y))

    def field_matrices(self, points, alpha, P, gradient=False):
        """Map eta to the obstacle-image part of the field at ``points``.

        Returns (V, Gx, Gy); gradients are None unless requested.
        """
        V = np.zeros((len(points), self.size), dtype=complex)
        Gx = Gy = None
        if gradient:
            Gx = np.zeros_like(V)
            Gy = np.zeros_like(V)
        w = self.omega
        for j in range(-P, P + 1):
            src = self.image(j)
            ph = alpha**j
            V += ph * combined_field_matrix(w, points, src.nodes, src.normals, src.weights)
            if gradient:
                sx, sy, dx, dy = layer_gradients(w, points, src.nodes, src.normals)
                Gx += ph * (dx - 1j * w * sx) * src.weights[None, :]
                Gy += ph * (dy - 1j * w * sy) * src.weights[None, :]
        return V, Gx, Gy

    def inside(self, points, P):
        """True for points inside any obstacle copy j = -P-1..P+1."""
        hit = np.zeros(len(points), dtype=bool)
        for j in range(-P - 1, P + 2):
            hit |= self.disc.curve.contains(points, (j * self.period, 0.0))
        return hit


def make_formulation(problem: GratingProblem, disc=None):
    disc = discretize(problem.curve, problem.N) if disc is None else disc
    if problem.problem == "dirichlet":
        return DirichletFormulation(disc, problem.omega, problem.period)
    from .transmission import TransmissionFormulation

    return TransmissionFormulation(disc, problem.omega, problem.period, problem.index)


# --------------------------------------------------------------------------
# neighbor factorization


@dataclass(frozen=True)
class NeighborFactors:
    P_nb: np.ndarray                 # size x l interpolation matrix
    skeleton: np.ndarray             # J(1..l)
    R: dict                          # j -> l x size rows A_j(J, :)
    rank: int
    proxy_radius: float
    near: dict                       # j -> near column indices of image j


def factor_neighbors(form, P, eps=1e-10, proxy_count=75, proxy_factor=2.0,
                     near_margin=1.5, near_resolution=20.0) -> NeighborFactors:
    """One interpolative decomposition shared by all 2P neighbor blocks.

    Columns of the ID: a proxy circle concentric with the obstacle, radius
    ``proxy_factor`` times the largest node distance from the center, plus
    near-field sources on every image inside ``near_margin`` times that
    radius (sources just outside the circle have large traces on it and are
    cheaper to keep exactly). Near sources are taken from a coarse copy of
    the image curve whose spacing is 1/``near_resolution`` of the gap
    between obstacle and images: kernels are smooth at that scale, so the
    coarse columns span the same range as the N fine ones, and the ID costs
    O(N) instead of O(N^2).
    """
    if P not in (1, 2):
        raise ValueError("neighbor factorization needs P in {1, 2}")
    disc = form.disc
    center = np.array(disc.center)
    radius = proxy_factor * float(np.hypot(*(disc.nodes - center).T).max())
    t = 2 * np.pi * np.arange(proxy_count) / proxy_count
    pnrm = np.stack([np.cos(t), np.sin(t)], axis=-1)
    ppts = center + radius * pnrm
    coarse = _coarse_copy(form, near_resolution)
    near = {}
    blocks = []
    for j in range(-P, P + 1):
        if j == 0:
            continue
        img = translate(coarse, j, form.lattice)
        idx = np.flatnonzero(np.hypot(*(img.nodes - center).T) < near_margin * radius)
        near[j] = idx
        if len(idx):
            blocks.append(form.neighbor_columns(img, idx))
    blocks.append((2 * np.pi * radius / proxy_count) * form.neighbor_proxy(ppts, pnrm))
    idf = id_decompose(np.hstack(blocks), eps)
    J = np.sort(idf.skeleton)
    # re-derive the interpolation matrix for the sorted skeleton order
    order = np.argsort(idf.skeleton)
    P_nb = idf.P[:, order]
    R = {j: form.neighbor_block(j, rows=J) for j in range(-P, P + 1) if j}
    return NeighborFactors(P_nb, J, R, idf.rank, radius, near)


def _coarse_copy(form, resolution):
    """The obstacle discretized at spacing ~ gap / resolution (never finer than N)."""
    from scipy.spatial import cKDTree

    disc = form.disc
    img = form.image(1).nodes
    gap = min(float(cKDTree(img).query(disc.nodes)[0].min()),
              float(cKDTree(form.image(-1).nodes).query(disc.nodes)[0].min()))
    n = int(np.ceil(resolution * disc.length / gap))
    n += n % 2
    if n >= disc.n:
        return disc
    return discretize(disc.curve, max(n, 16))


# --------------------------------------------------------------------------
# precomputation


@dataclass
class Precomputed:
    problem: GratingProblem
    form: object
    inverse: CompressedInverse
    neighbors: NeighborFactors | None
    timings: dict = field(default_factory=dict)
    ranks: dict = field(default_factory=dict)


def precompute(problem: GratingProblem, inverse: CompressedInverse | None = None) -> Precomputed:
    """Discretize, compress and invert A, and factor the neighbor blocks."""
    t0 = time.perf_counter()
    form = make_formulation(problem)
    timings = {}
    ranks = {}
    if inverse is None:
        tree = compress(form.self_operator(), problem.eps, problem.leaf_size)
        t1 = time.perf_counter()
        inverse = build_inverse(tree)
        t2 = time.perf_counter()
        timings["compress"] = t1 - t0
        timings["invert"] = t2 - t1
        ranks = {"max_hbs_rank": max(tree.ranks().values(), default=0)}
    elif inverse.size != form.size:
        raise SolverError(f"loaded factorization has size {inverse.size}, expected {form.size}")
    t3 = time.perf_counter()
    nb = factor_neighbors(form, problem.P, problem.eps) if problem.P > 0 else None
    timings["neighbors"] = time.perf_counter() - t3
    timings["precompute"] = time.perf_counter() - t0
    if nb is not None:
        ranks["neighbor_rank"] = nb.rank
    return Precomputed(problem, form, inverse, nb, timings, ranks)


# --------------------------------------------------------------------------
# Wood's anomalies


def detect_wood(omega, theta, d, threshold=None):
    """Orders whose |k_n| falls below ``threshold`` (default 0.1 * 2 pi / d)."""
    threshold = WOOD_FRACTION * 2 * np.pi / d if threshold is None else threshold
    orders = grating_orders(omega, theta, d)
    hit = np.flatnonzero(np.abs(orders.k) < threshold)
    return orders, hit


def wood_shift(orders, crossed, contour_height, contour_width):
    """Real contour shift s0 that passes above the poles +k_n of ``crossed``.

    s0 sits halfway between the largest crossed pole and the next real pole
    to its right (or omega), and is reduced if needed so that the contour
    stays below every evanescent pole i|k_m| on the imaginary axis.
    """
    kc = np.abs(orders.k[crossed]).max()
    others = np.delete(np.arange(len(orders.k)), crossed)
    real = orders.k[others][orders.propagating[others]].real
    right = real[real > kc]
    omega = float(np.max(np.abs(orders.kappa[orders.propagating]), initial=0.0))
    nxt = right.min() if len(right) else max(omega, kc + 1.0)
    s0 = 0.5 * (kc + nxt)
    evan = np.abs(orders.k[~orders.propagating].imag)
    if len(evan):
        cap = 0.5 * evan.min()
        if contour_height * np.tanh(s0 / contour_width) > cap:
            s0 = contour_width * np.arctanh(min(cap / contour_height, 0.999))
    if s0 <= kc:
        raise WoodAnomalyError("no admissible contour shift separates the grazing pole")
    return float(s0)


# --------------------------------------------------------------------------
# per-alpha system


@dataclass
class PeriodicSystem:
    pre: Precomputed
    alpha: complex
    contour: SommerfeldContour
    B: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    L: np.ndarray | None
    Rmat: np.ndarray | None
    AinvB: np.ndarray
    AinvL: np.ndarray | None
    capacitance: tuple | None
    AtinvB: np.ndarray
    schur: tuple
    wood_orders: list = field(default_factory=list)  # (kappa, k) per crossed mode
    extra_cols: int = 0
    inverse_calls: int = 0
    inverse_vectors: int = 0
    y0: float = 0.0
    samples: int = 40

    @property
    def M(self):
        return self.contour.M

    @property
    def P(self):
        return self.pre.problem.P


def _lu(mat, what, err=SolverError):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu = sla.lu_factor(mat, check_finite=False)
    d = np.abs(np.diag(lu[0]))
    ratio = d.min() / max(d.max(), 1e-300)
    if not np.isfinite(ratio) or ratio < 1e-14:
        raise err(f"{what} is numerically singular (pivot ratio {ratio:.1e})")
    return lu


def default_y0(form, period):
    curve = form.disc.curve
    _, _, ymin, ymax = curve.bounding_box()
    return max(abs(ymin), abs(ymax)) + 0.2 * period


def _line_functional(form, system_like, alpha, P, contour, y, kappa, kvert, samples):
    """Row of the functional (ik U + dU/dy) on line y for Fourier mode kappa.

    Returns the parts acting on eta and on xi.
    """
    d = form.period
    xs = -d / 2 + (np.arange(samples) + 0.5) * d / samples
    pts = np.stack([xs, np.full(samples, y)], axis=1)
    V, _, Gy = form.field_matrices(pts, alpha, P, gradient=True)
    W, _, Wy = wall_fields(pts, contour, d, alpha, gradient=True)
    ph = np.exp(-1j * kappa * xs) / samples
    r_eta = ph @ (1j * kvert * V + Gy)
    r_xi = ph @ (1j * kvert * W + Wy)
    return r_eta, r_xi


def assemble_system(pre: Precomputed, alpha, theta_ref=None, wood=None, s0=None,
                    y0=None, samples=40, crossed=None) -> PeriodicSystem:
    """Assemble B, C, Q for one Bloch phase and apply A~^{-1} to [B | L].

    ``theta_ref`` is any angle with this Bloch phase; it is needed for
    Wood's-anomaly detection. ``wood`` overrides the problem's mode;
    ``crossed`` forces the augmented orders (indices into the order table).
    """
    prob = pre.problem
    form = pre.form
    d = prob.period
    omega = prob.omega
    P = prob.P
    wood = prob.wood if wood is None else wood
    y0 = default_y0(form, d) if y0 is None else y0

    wood_modes = []
    contour_s0 = 0.0 if s0 is None else s0
    contour = build_contour(omega, d, prob.M, s0=contour_s0)
    if theta_ref is not None and wood != "off":
        orders, hit = detect_wood(omega, theta_ref, d)
        if crossed is not None:
            hit = np.asarray(crossed)
        elif wood == "force" and len(hit) == 0:
            prop = np.flatnonzero(orders.propagating)
            hit = prop[[np.argmin(np.abs(orders.k[prop]))]]
        if len(hit) > 2:
            raise WoodAnomalyError(f"{len(hit)} simultaneous grazing orders are not supported")
        if len(hit):
            if s0 is None:
                contour_s0 = wood_shift(orders, hit, contour.height, contour.width)
            contour = build_contour(omega, d, prob.M, s0=contour_s0)
            wood_modes = [(float(orders.kappa[i]), complex(orders.k[i])) for i in hit]

    B = form.wall_block(contour, alpha)
    C = form.wall_rows(contour, alpha, P)
    Q = assemble_Q(contour, d, alpha)
    if wood_modes:
        extra_b = np.stack([form.mode_column(kap, kv) for kap, kv in wood_modes], axis=1)
        rows_eta, rows_xi, rows_a = [], [], []
        for kap, kv in wood_modes:
            r_eta, r_xi = _line_functional(form, None, alpha, P, contour, -y0, kap, kv, samples)
            rows_eta.append(r_eta)
            rows_xi.append(r_xi)
            # the modes themselves: exp(i kappa x + i k y) on y = -y0
            ra = []
            for kap2, kv2 in wood_modes:
                same = np.isclose(kap, kap2)
                ra.append((1j * kv + 1j * kv2) * np.exp(-1j * kv2 * y0) if same else 0.0)
            rows_a.append(ra)
        B = np.hstack([B, extra_b])
        C = np.vstack([C, np.array(rows_eta)])
        m = 2 * prob.M
        e = len(wood_modes)
        Qx = np.zeros((m + e, m + e), dtype=complex)
        Qx[:m, :m] = Q
        Qx[m:, :m] = np.array(rows_xi)
        Qx[m:, m:] = np.array(rows_a)
        Q = Qx

    nb = pre.neighbors
    inv = pre.inverse
    if nb is not None and P > 0:
        js = [j for j in range(-P, P + 1) if j]
        L = np.hstack([alpha**j * nb.P_nb for j in js])
        Rmat = np.vstack([nb.R[j] for j in js])
        block = apply_inverse(inv, np.hstack([B, L]))
        AinvB, AinvL = block[:, : B.shape[1]], block[:, B.shape[1]:]
        cap = np.eye(L.shape[1]) + Rmat @ AinvL
        caplu = _lu(cap, "capacitance matrix")
        AtinvB = AinvB - AinvL @ sla.lu_solve(caplu, Rmat @ AinvB, check_finite=False)
        nvec = B.shape[1] + L.shape[1]
    else:
        L = Rmat = AinvL = caplu = None
        AinvB = apply_inverse(inv, B)
        AtinvB = AinvB
        nvec = B.shape[1]
    schur = _lu(Q - C @ AtinvB, "Schur complement", WoodAnomalyError)
    return PeriodicSystem(
        pre, complex(alpha), contour, B, C, Q, L, Rmat, AinvB, AinvL, caplu, AtinvB, schur,
        wood_modes, len(wood_modes), 1, nvec, float(y0), samples,
    )


def augment_wood(system: PeriodicSystem, theta_ref, crossed=None, s0=None) -> PeriodicSystem:
    """Rebuild ``system`` with a displaced contour and bordered unknowns."""
    return assemble_system(
        system.pre, system.alpha, theta_ref, wood="force", s0=s0,
        y0=system.y0, samples=system.samples, crossed=crossed,
    )


def apply_Atilde_inverse(system: PeriodicSystem, X):
    """A~^{-1} X via one compressed-inverse call and the cached A^{-1} L."""
    X = np.asarray(X)
    Z = apply_inverse(system.pre.inverse, X)
    system.inverse_calls += 1
    system.inverse_vectors += 1 if X.ndim == 1 else X.shape[1]
    if system.L is None:
        return Z
    corr = sla.lu_solve(system.capacitance, system.Rmat @ Z, check_finite=False)
    return Z - system.AinvL @ corr


@dataclass
class Solution:
    theta: float
    alpha: complex
    eta: np.ndarray
    xi: np.ndarray
    mode_coeffs: np.ndarray
    system: PeriodicSystem = field(repr=False)


def solve_block(system: PeriodicSystem, b):
    """Solve for a block of right-hand sides sharing the system's Bloch phase.

    Returns (eta, xi, a) with ``a`` the crossed-mode coefficients (empty
    when no augmentation is active).
    """
    b = np.asarray(b, dtype=complex)
    vec = b.ndim == 1
    b = b.reshape(len(b), -1)
    Atb = apply_Atilde_inverse(system, b)
    rhs = -(system.C @ Atb)
    sol = sla.lu_solve(system.schur, rhs, check_finite=False)
    eta = Atb - system.AtinvB @ sol
    m = 2 * system.M
    xi, a = sol[:m], sol[m:]
    if vec:
        return eta[:, 0], xi[:, 0], a[:, 0]
    return eta, xi, a


def bucket_angles(omega, d, thetas, tol=1e-12):
    """Group angle indices by Bloch phase; returns list of (alpha, [indices])."""
    buckets = []
    for i, th in enumerate(thetas):
        a = bloch_phase(omega, th, d)
        for entry in buckets:
            if abs(entry[0] - a) <= tol:
                entry[1].append(i)
                break
        else:
            buckets.append((a, [i]))
    return buckets


def solve_angles(pre: Precomputed, thetas, y0=None, samples=40, stats=None):
    """Solve every angle, one block solve per Bloch-phase bucket.

    Returns Solutions in input order. If ``stats`` is a list, one dict per
    bucket (alpha, q, timings, inverse calls and vector counts) is appended.
    """
    thetas = [float(t) for t in thetas]
    for t in thetas:
        if not -np.pi < t < 0:
            raise ValueError(f"incident angle {t} outside (-pi, 0)")
    prob = pre.problem
    out = [None] * len(thetas)
    for alpha, idx in bucket_angles(prob.omega, prob.period, thetas):
        t0 = time.perf_counter()
        system = assemble_system(pre, alpha, thetas[idx[0]], y0=y0, samples=samples)
        b = pre.form.rhs([thetas[i] for i in idx])
        eta, xi, a = solve_block(system, b)
        elapsed = time.perf_counter() - t0
        for col, i in enumerate(idx):
            out[i] = Solution(thetas[i], complex(alpha), eta[:, col], xi[:, col], a[:, col], system)
        if stats is not None:
            stats.append({
                "alpha": complex(alpha),
                "q": len(idx),
                "seconds": elapsed,
                "inverse_calls": system.inverse_calls,
                "inverse_vectors": system.inverse_vectors,
                "wood_modes": len(system.wood_orders),
            })
    return out
