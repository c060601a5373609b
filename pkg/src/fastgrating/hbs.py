"""Hierarchically block-separable (HBS) compression and inversion.

The matrix is accessed only through an entry oracle: an object with

* ``size`` and ``points`` (one 2-vector per index, used for geometry),
* ``block(rows, cols)`` returning the dense sub-block,
* ``proxy_rows(rows, pts, normals)`` and ``proxy_cols(cols, pts, normals)``
  returning interactions with equivalent sources on a proxy circle.

Indices are split into a binary tree of contiguous intervals. Going up the
tree, every node gets row and column skeletons from interpolative
decompositions of its interactions with nearby active indices and with the
proxy circle, so far-field blocks are never formed. Row and column ranks are
equalized per node so the telescoping inverse is well defined.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.spatial import cKDTree

__all__ = [
    "FactorizationError",
    "IdFactorization",
    "id_decompose",
    "HbsNode",
    "HbsTree",
    "CompressedInverse",
    "compress",
    "build_inverse",
    "apply_inverse",
    "dump_inverse",
    "load_inverse",
]

FORMAT_VERSION = 1


class FactorizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class IdFactorization:
    """Row interpolative decomposition M ~= P @ M[J[:rank], :]."""

    P: np.ndarray
    J: np.ndarray
    rank: int

    @property
    def skeleton(self):
        return self.J[: self.rank]


def _pivoted_r(M):
    # column-pivoted QR of M^H; deterministic for fixed input
    R, piv = sla.qr(M.conj().T, mode="r", pivoting=True, check_finite=False)
    return R, piv


def id_decompose(M, eps, rank=None) -> IdFactorization:
    """Row ID of ``M`` to relative tolerance ``eps`` (or fixed ``rank``).

    Rows are chosen by column-pivoted QR of M^H; the rank is the number of
    pivots with |R_ii| > eps |R_00|.
    """
    M = np.asarray(M)
    m = M.shape[0]
    if m == 0:
        return IdFactorization(np.zeros((0, 0), complex), np.arange(0), 0)
    if M.shape[1] == 0:
        return IdFactorization(np.zeros((m, 0), complex), np.arange(m), 0)
    R, piv = _pivoted_r(M)
    diag = np.abs(np.diag(R))
    if rank is None:
        if diag[0] == 0:
            rank = 0
        else:
            rank = int(np.count_nonzero(diag > eps * diag[0]))
    rank = min(rank, m, R.shape[0])
    P = np.zeros((m, rank), dtype=np.result_type(M.dtype, complex))
    P[piv[:rank]] = np.eye(rank)
    if rank < m:
        r11 = R[:rank, :rank]
        r12 = R[:rank, rank:]
        T = sla.solve_triangular(r11, r12, check_finite=False) if rank else np.zeros((0, m - rank))
        P[piv[rank:]] = T.conj().T
    return IdFactorization(P, piv, rank)


def _id_ranked(M, eps):
    """Pivot order and numerical rank, without forming the interpolation matrix."""
    if M.shape[0] == 0 or M.shape[1] == 0:
        return np.arange(M.shape[0]), 0
    R, piv = _pivoted_r(M)
    diag = np.abs(np.diag(R))
    rank = 0 if diag[0] == 0 else int(np.count_nonzero(diag > eps * diag[0]))
    return piv, rank


@dataclass
class HbsNode:
    start: int
    stop: int
    level: int
    children: tuple = ()
    parent: int = -1
    # active index sets (original indices) before and after skeletonization
    rows: np.ndarray = None
    cols: np.ndarray = None
    skel_rows: np.ndarray = None
    skel_cols: np.ndarray = None
    U: np.ndarray = None        # len(rows) x k
    Vh: np.ndarray = None       # k x len(cols)  (V^*)
    D: np.ndarray = None        # leaf: dense diagonal block
    coupling: tuple = ()        # parent only: (A(r_a, c_b), A(r_b, c_a))
    dense: bool = False         # compression was not profitable

    @property
    def is_leaf(self):
        return not self.children

    @property
    def rank(self):
        return 0 if self.skel_rows is None else len(self.skel_rows)


@dataclass
class HbsTree:
    nodes: list
    size: int
    eps: float
    leaf_size: int
    levels: list = field(default_factory=list)  # node ids per level, root first

    @property
    def depth(self):
        return len(self.levels) - 1

    @property
    def leaves(self):
        return self.levels[-1]

    def ranks(self):
        return {i: n.rank for i, n in enumerate(self.nodes) if n.parent >= 0}

    def stored_entries(self):
        total = 0
        for n in self.nodes:
            for a in (n.U, n.Vh, n.D):
                if a is not None:
                    total += a.size
            for a in n.coupling:
                total += a.size
        return total

    def matvec(self, X):
        """Apply the compressed forward operator to a block of vectors."""
        X = np.asarray(X)
        vec = X.ndim == 1
        X = X.reshape(self.size, -1)
        xh = {}
        for lvl in reversed(self.levels[1:]):
            for i in lvl:
                n = self.nodes[i]
                src = X[n.start:n.stop] if n.is_leaf else np.vstack([xh[c] for c in n.children])
                xh[i] = n.Vh @ src
        yh = {}
        Y = np.zeros((self.size, X.shape[1]), dtype=complex)
        for lvl in self.levels[:-1]:
            for i in lvl:
                n = self.nodes[i]
                a, b = n.children
                ya = n.coupling[0] @ xh[b]
                yb = n.coupling[1] @ xh[a]
                if n.parent >= 0:
                    up = n.U @ yh[i]
                    ka = self.nodes[a].rank
                    ya = ya + up[:ka]
                    yb = yb + up[ka:]
                yh[a], yh[b] = ya, yb
        for i in self.leaves:
            n = self.nodes[i]
            y = n.D @ X[n.start:n.stop]
            if n.parent >= 0:
                y = y + n.U @ yh[i]
            Y[n.start:n.stop] = y
        return Y[:, 0] if vec else Y

    def dense(self):
        return self.matvec(np.eye(self.size, dtype=complex))


def _build_tree(size, leaf_size):
    nodes = [HbsNode(0, size, 0)]
    levels = [[0]]
    while True:
        nxt = []
        for i in levels[-1]:
            n = nodes[i]
            if n.stop - n.start <= leaf_size:
                continue
            mid = (n.start + n.stop) // 2
            ids = []
            for lo, hi in ((n.start, mid), (mid, n.stop)):
                nodes.append(HbsNode(lo, hi, n.level + 1, parent=i))
                ids.append(len(nodes) - 1)
            n.children = tuple(ids)
            nxt.extend(ids)
        if not nxt:
            break
        levels.append(nxt)
    # keep the tree balanced: every leaf on the deepest level
    for lvl in levels[:-1]:
        for i in lvl:
            if nodes[i].is_leaf:
                raise FactorizationError("size must split evenly into a balanced tree")
    return nodes, levels


def _proxy_circle(center, radius, count):
    t = 2 * np.pi * np.arange(count) / count
    normals = np.stack([np.cos(t), np.sin(t)], axis=-1)
    return center + radius * normals, normals


def compress(op, eps=1e-10, leaf_size=64, proxy_factor=1.75, proxy_count=75) -> HbsTree:
    """Skeletonize ``op`` level by level, leaves first."""
    N = op.size
    pts = np.asarray(op.points, dtype=float)
    nodes, levels = _build_tree(N, leaf_size)
    tree = HbsTree(nodes, N, eps, leaf_size, levels)
    if len(levels) == 1:
        root = nodes[0]
        idx = np.arange(N)
        root.rows = root.cols = idx
        root.D = op.block(idx, idx)
        return tree

    for i in levels[-1]:
        n = nodes[i]
        n.rows = n.cols = np.arange(n.start, n.stop)
        n.D = op.block(n.rows, n.cols)

    for depth in range(len(levels) - 1, 0, -1):
        lvl = levels[depth]
        if depth < len(levels) - 1:
            for i in lvl:
                n = nodes[i]
                n.rows = np.concatenate([nodes[c].skel_rows for c in n.children])
                n.cols = np.concatenate([nodes[c].skel_cols for c in n.children])
        owner_r = np.concatenate([np.full(len(nodes[i].rows), i) for i in lvl])
        owner_c = np.concatenate([np.full(len(nodes[i].cols), i) for i in lvl])
        act_r = np.concatenate([nodes[i].rows for i in lvl])
        act_c = np.concatenate([nodes[i].cols for i in lvl])
        tree_r = cKDTree(pts[act_r])
        tree_c = cKDTree(pts[act_c])
        for i in lvl:
            n = nodes[i]
            box = pts[n.start:n.stop]
            center = box.mean(axis=0)
            radius = proxy_factor * max(np.hypot(*(box - center).T).max(), 1e-12)
            ppts, pnrm = _proxy_circle(center, radius, proxy_count)
            pscale = 2 * np.pi * radius / proxy_count
            near_c = np.array(sorted(tree_c.query_ball_point(center, radius)), dtype=np.intp)
            near_c = act_c[near_c[owner_c[near_c] != i]] if len(near_c) else near_c
            near_r = np.array(sorted(tree_r.query_ball_point(center, radius)), dtype=np.intp)
            near_r = act_r[near_r[owner_r[near_r] != i]] if len(near_r) else near_r
            mr = np.hstack([op.block(n.rows, near_c), pscale * op.proxy_rows(n.rows, ppts, pnrm)])
            mc = np.vstack([op.block(near_r, n.cols), pscale * op.proxy_cols(n.cols, ppts, pnrm)])
            piv_r, kr = _id_ranked(mr, eps)
            piv_c, kc = _id_ranked(mc.T, eps)
            k = max(kr, kc)
            size = len(n.rows)
            if k >= size:
                n.dense = True
                n.U = np.eye(size, dtype=complex)
                n.Vh = np.eye(size, dtype=complex)
                n.skel_rows = n.rows.copy()
                n.skel_cols = n.cols.copy()
                continue
            idr = id_decompose(mr, eps, rank=k)
            idc = id_decompose(mc.T, eps, rank=k)
            n.U = idr.P
            n.Vh = idc.P.T
            n.skel_rows = n.rows[idr.skeleton]
            n.skel_cols = n.cols[idc.skeleton]
        for i in levels[depth - 1]:
            p = nodes[i]
            a, b = (nodes[c] for c in p.children)
            p.coupling = (op.block(a.skel_rows, b.skel_cols), op.block(b.skel_rows, a.skel_cols))
    root = nodes[0]
    root.rows = np.concatenate([nodes[c].skel_rows for c in root.children])
    root.cols = np.concatenate([nodes[c].skel_cols for c in root.children])
    return tree


@dataclass
class CompressedInverse:
    """Per-node E, F^*, G plus the dense inverse of the root system."""

    size: int
    levels: list
    children: list
    bounds: np.ndarray          # (nnodes, 2) index interval per node
    E: dict
    Fh: dict
    G: dict
    root_inv: np.ndarray
    apply_count: int = 0

    @property
    def leaves(self):
        return self.levels[-1]


def _inv(mat, where):
    if mat.size == 0:
        return np.zeros(mat.shape, dtype=complex)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu = sla.lu_factor(mat, check_finite=False)
    except (ValueError, sla.LinAlgError) as exc:
        raise FactorizationError(f"singular block at {where}") from exc
    diag = np.abs(np.diag(lu[0]))
    if diag.min() <= 1e-15 * max(diag.max(), 1e-300):
        raise FactorizationError(
            f"singular block at {where}: pivot ratio {diag.min() / max(diag.max(), 1e-300):.2e}"
        )
    return sla.lu_solve(lu, np.eye(len(mat), dtype=complex), check_finite=False)


def build_inverse(tree: HbsTree) -> CompressedInverse:
    nodes = tree.nodes
    E, Fh, G = {}, {}, {}
    dhat = {}
    for depth in range(len(tree.levels) - 1, 0, -1):
        for i in tree.levels[depth]:
            n = nodes[i]
            if n.is_leaf:
                D = n.D
            else:
                a, b = n.children
                D = np.block([[dhat[a], n.coupling[0]], [n.coupling[1], dhat[b]]])
            Dinv = _inv(D, f"node {i} (level {depth})")
            dh = _inv(n.Vh @ Dinv @ n.U, f"node {i} (level {depth}, reduced)")
            E[i] = Dinv @ n.U @ dh
            Fh[i] = dh @ n.Vh @ Dinv
            G[i] = Dinv - E[i] @ (n.Vh @ Dinv)
            dhat[i] = dh
    root = nodes[0]
    if root.is_leaf:
        Droot = root.D
    else:
        a, b = root.children
        Droot = np.block([[dhat[a], root.coupling[0]], [root.coupling[1], dhat[b]]])
    root_inv = _inv(Droot, "root")
    bounds = np.array([[n.start, n.stop] for n in nodes], dtype=np.int64)
    children = [tuple(n.children) for n in nodes]
    return CompressedInverse(tree.size, [list(l) for l in tree.levels], children, bounds, E, Fh, G, root_inv)


def apply_inverse(inv: CompressedInverse, X):
    """Apply the compressed inverse to a vector or an N x r block."""
    X = np.asarray(X)
    vec = X.ndim == 1
    if X.shape[0] != inv.size:
        raise ValueError(f"dimension mismatch: expected {inv.size} rows, got {X.shape[0]}")
    X = X.reshape(inv.size, -1)
    inv.apply_count += 1
    levels = inv.levels
    if len(levels) == 1:
        Y = inv.root_inv @ X
        return Y[:, 0] if vec else Y
    q = {}
    qh = {}
    for depth in range(len(levels) - 1, 0, -1):
        for i in levels[depth]:
            ch = inv.children[i]
            if ch:
                q[i] = np.vstack([qh[c] for c in ch])
            else:
                lo, hi = inv.bounds[i]
                q[i] = X[lo:hi]
            qh[i] = inv.Fh[i] @ q[i]
    a, b = inv.children[0]
    top = inv.root_inv @ np.vstack([qh[a], qh[b]])
    uh = {a: top[: len(qh[a])], b: top[len(qh[a]):]}
    Y = np.empty((inv.size, X.shape[1]), dtype=complex)
    for depth in range(1, len(levels)):
        for i in levels[depth]:
            u = inv.E[i] @ uh[i] + inv.G[i] @ q[i]
            ch = inv.children[i]
            if ch:
                ka = len(qh[ch[0]])
                uh[ch[0]], uh[ch[1]] = u[:ka], u[ka:]
            else:
                lo, hi = inv.bounds[i]
                Y[lo:hi] = u
    return Y[:, 0] if vec else Y


def dump_inverse(inv: CompressedInverse, path, meta=None):
    """Write the inverse as a versioned .npz archive.

    Layout: ``version``, ``size``, ``bounds`` (nnodes x 2), ``children``
    (nnodes x 2, -1 for leaves), ``levels`` (flattened node ids with
    ``level_sizes``), ``root_inv``, and ``E_<i>``, ``F_<i>``, ``G_<i>`` for
    every non-root node; ``meta_<key>`` entries carry caller metadata.
    """
    arrays = {
        "version": np.array(FORMAT_VERSION),
        "size": np.array(inv.size),
        "bounds": inv.bounds,
        "children": np.array([c if c else (-1, -1) for c in inv.children], dtype=np.int64),
        "levels": np.array([i for l in inv.levels for i in l], dtype=np.int64),
        "level_sizes": np.array([len(l) for l in inv.levels], dtype=np.int64),
        "root_inv": inv.root_inv,
    }
    for i in inv.E:
        arrays[f"E_{i}"] = inv.E[i]
        arrays[f"F_{i}"] = inv.Fh[i]
        arrays[f"G_{i}"] = inv.G[i]
    for key, val in (meta or {}).items():
        arrays[f"meta_{key}"] = np.asarray(val)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    if hasattr(path, "write"):
        path.write(buf.getvalue())
        return
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_inverse(path):
    """Read an archive written by ``dump_inverse``; returns (inverse, meta)."""
    with np.load(path, allow_pickle=False) as z:
        version = int(z["version"])
        if version != FORMAT_VERSION:
            raise FactorizationError(f"unsupported factorization version {version}")
        flat = z["levels"].tolist()
        levels, pos = [], 0
        for s in z["level_sizes"].tolist():
            levels.append(flat[pos:pos + s])
            pos += s
        children = [() if c[0] < 0 else (int(c[0]), int(c[1])) for c in z["children"]]
        E, Fh, G = {}, {}, {}
        meta = {}
        for key in z.files:
            if key.startswith("E_"):
                i = int(key[2:])
                E[i] = z[key]
                Fh[i] = z[f"F_{i}"]
                G[i] = z[f"G_{i}"]
            elif key.startswith("meta_"):
                meta[key[5:]] = z[key]
        inv = CompressedInverse(int(z["size"]), levels, children, z["bounds"], E, Fh, G, z["root_inv"])
    return inv, meta
