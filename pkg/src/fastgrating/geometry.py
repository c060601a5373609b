"""Star-shaped obstacle boundaries, their Nystrom discretization, lattice copies."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

__all__ = [
    "GeometryError",
    "BoundaryCurve",
    "Discretization",
    "Lattice",
    "discretize",
    "translate",
    "random_fourier_curve",
    "read_geometry",
    "write_geometry",
]


class GeometryError(ValueError):
    """Invalid or incompatible geometry."""


@dataclass(frozen=True)
class BoundaryCurve:
    """Closed curve z(t) = center + f(t) (cos t, sin t) with a radial Fourier series.

    ``cos_coeffs[m]`` multiplies cos(m t) (``cos_coeffs[0]`` is the constant
    a0); ``sin_coeffs[m]`` multiplies sin(m t), and ``sin_coeffs[0]`` is
    ignored.
    """

    cos_coeffs: tuple
    sin_coeffs: tuple = ()
    center: tuple = (0.0, 0.0)

    def __post_init__(self):
        a = tuple(float(v) for v in self.cos_coeffs)
        b = tuple(float(v) for v in self.sin_coeffs)
        n = max(len(a), len(b), 1)
        a = a + (0.0,) * (n - len(a))
        b = b + (0.0,) * (n - len(b))
        object.__setattr__(self, "cos_coeffs", a)
        object.__setattr__(self, "sin_coeffs", (0.0,) + b[1:])
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))

    @classmethod
    def circle(cls, radius=1.0, center=(0.0, 0.0)):
        return cls((radius,), (), center)

    @property
    def modes(self):
        return len(self.cos_coeffs) - 1

    def radius(self, t, deriv=0):
        """f(t) or its ``deriv``-th derivative."""
        t = np.asarray(t, dtype=float)
        m = np.arange(len(self.cos_coeffs))
        a = np.asarray(self.cos_coeffs)
        b = np.asarray(self.sin_coeffs)
        mt = np.multiply.outer(t, m)
        c, s = np.cos(mt), np.sin(mt)
        # d^k/dt^k of (a cos + b sin) cycles through four forms
        k = deriv % 4
        scale = m.astype(float) ** deriv
        if k == 0:
            val = a * c + b * s
        elif k == 1:
            val = -a * s + b * c
        elif k == 2:
            val = -a * c - b * s
        else:
            val = a * s - b * c
        return val @ scale

    def point(self, t):
        t = np.asarray(t, dtype=float)
        f = self.radius(t)
        return np.stack([self.center[0] + f * np.cos(t), self.center[1] + f * np.sin(t)], axis=-1)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        f = self.radius(t)
        fp = self.radius(t, 1)
        c, s = np.cos(t), np.sin(t)
        return np.stack([fp * c - f * s, fp * s + f * c], axis=-1)

    def min_radius(self, samples=4096):
        t = 2 * np.pi * np.arange(samples) / samples
        return float(self.radius(t).min())

    def bounding_box(self, samples=4096):
        """(xmin, xmax, ymin, ymax) from a dense sample of the curve."""
        t = 2 * np.pi * np.arange(samples) / samples
        p = self.point(t)
        return p[:, 0].min(), p[:, 0].max(), p[:, 1].min(), p[:, 1].max()

    def contains(self, points, shift=(0.0, 0.0)):
        """True for points strictly inside the (shifted) curve."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        dx = p[:, 0] - self.center[0] - shift[0]
        dy = p[:, 1] - self.center[1] - shift[1]
        r = np.hypot(dx, dy)
        t = np.arctan2(dy, dx)
        return r < self.radius(t)

    def translated(self, offset):
        return replace(self, center=(self.center[0] + offset[0], self.center[1] + offset[1]))


@dataclass(frozen=True)
class Discretization:
    """Periodic-trapezoid Nystrom nodes on a boundary curve.

    Node ``i`` (0-based) sits at parameter t = 2 pi (i + 1) / N.
    """

    nodes: np.ndarray
    normals: np.ndarray
    speeds: np.ndarray
    t: np.ndarray
    curve: BoundaryCurve = field(repr=False)
    shift: tuple = (0.0, 0.0)

    @property
    def n(self):
        return len(self.speeds)

    @property
    def spacing(self):
        return 2 * np.pi / self.n

    @property
    def weights(self):
        """Trapezoid arclength weights (2 pi / N) |z'(t_j)|."""
        return self.spacing * self.speeds

    @property
    def length(self):
        return float(self.weights.sum())

    @property
    def center(self):
        return (self.curve.center[0] + self.shift[0], self.curve.center[1] + self.shift[1])

    def contains(self, points):
        return self.curve.contains(points, self.shift)


@dataclass(frozen=True)
class Lattice:
    period: float

    def __post_init__(self):
        if not self.period > 0:
            raise GeometryError("lattice period must be positive")

    @property
    def vector(self):
        return np.array([self.period, 0.0])


def discretize(curve: BoundaryCurve, n: int) -> Discretization:
    if n < 4 or n % 2:
        raise GeometryError(f"N must be even and >= 4, got {n}")
    t = 2 * np.pi * np.arange(1, n + 1) / n
    f = curve.radius(t)
    if np.any(f <= 0):
        raise GeometryError("radial function is non-positive at a node")
    nodes = curve.point(t)
    dz = curve.derivative(t)
    speeds = np.hypot(dz[:, 0], dz[:, 1])
    # counterclockwise parametrization: (z'_y, -z'_x) points outward
    normals = np.stack([dz[:, 1], -dz[:, 0]], axis=-1) / speeds[:, None]
    return Discretization(nodes, normals, speeds, t, curve)


def translate(disc: Discretization, j: int, lattice: Lattice) -> Discretization:
    if j == 0:
        return disc
    offset = j * lattice.period
    nodes = disc.nodes + np.array([offset, 0.0])
    return replace(disc, nodes=nodes, shift=(disc.shift[0] + offset, disc.shift[1]))


def random_fourier_curve(
    seed: int,
    terms: int,
    ellipse_bias: float = 0.0,
    radius: float = 0.3,
    roughness: float = 0.02,
    center=(0.0, 0.0),
) -> BoundaryCurve:
    """Reproducible random radial Fourier series with ``terms`` coefficients.

    ``terms = 2K + 1`` counts a0 plus K cosine and K sine coefficients.
    Mode m >= 1 draws standard normals scaled by ``roughness / m**2``; the
    cos(2t) coefficient is then offset by ``-ellipse_bias``, which stretches
    the shape vertically. If the radius is not positive on a 4096-point
    grid the higher modes are halved and the check repeated, up to ten times.
    """
    if terms < 1 or terms % 2 == 0:
        raise GeometryError("terms must be odd and >= 1")
    modes = (terms - 1) // 2
    rng = np.random.default_rng(seed)
    m = np.arange(1, modes + 1)
    a_raw = rng.standard_normal(modes) * roughness / m**2
    b_raw = rng.standard_normal(modes) * roughness / m**2
    scale = 1.0
    for _ in range(10):
        a = np.r_[radius, scale * a_raw]
        b = np.r_[0.0, scale * b_raw]
        if modes >= 2:
            a[2] -= ellipse_bias
        curve = BoundaryCurve(tuple(a), tuple(b), center)
        if curve.min_radius() > 0:
            return curve
        scale *= 0.5
    raise GeometryError("could not generate a curve with positive radius")


def read_geometry(path) -> BoundaryCurve:
    """Parse ``a <m> <value>``, ``b <m> <value>`` and ``center <x> <y>`` lines.

    Blank lines and ``#`` comments are skipped; anything else is an error.
    """
    a, b = {}, {}
    center = (0.0, 0.0)
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        key = parts[0]
        try:
            if key in ("a", "b") and len(parts) == 3:
                m = int(parts[1])
                if m < 0 or (key == "b" and m == 0):
                    raise ValueError
                (a if key == "a" else b)[m] = float(parts[2])
            elif key == "center" and len(parts) == 3:
                center = (float(parts[1]), float(parts[2]))
            else:
                raise ValueError
        except ValueError:
            raise GeometryError(f"{path}:{lineno}: cannot parse {raw!r}") from None
    if not a:
        raise GeometryError(f"{path}: no cosine coefficients")
    n = max(list(a) + list(b)) + 1
    cos = tuple(a.get(m, 0.0) for m in range(n))
    sin = tuple(b.get(m, 0.0) for m in range(n))
    return BoundaryCurve(cos, sin, center)


def write_geometry(curve: BoundaryCurve, path):
    lines = [f"center {curve.center[0]!r} {curve.center[1]!r}"]
    for m, v in enumerate(curve.cos_coeffs):
        if v != 0.0 or m == 0:
            lines.append(f"a {m} {v!r}")
    for m, v in enumerate(curve.sin_coeffs):
        if m and v != 0.0:
            lines.append(f"b {m} {v!r}")
    Path(path).write_text("\n".join(lines) + "\n")
