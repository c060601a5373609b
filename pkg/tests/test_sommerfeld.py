import numpy as np
import pytest

from fastgrating.geometry import BoundaryCurve, GeometryError, Lattice, discretize, translate
from fastgrating.kernels import layer_kernels
from fastgrating.sommerfeld import (
    ContourError,
    assemble_B,
    assemble_C,
    assemble_Q,
    bloch_phase,
    build_contour,
    grating_orders,
    obstacle_to_wall,
    spectral_sqrt,
    wall_fields,
)
from oracles import mp_green

J2 = np.array([[0, 1], [-1, 0]])


def sommerfeld_green(contour, x, y):
    """Contour quadrature of the spectral representation of (i/4) H0(omega r)."""
    r = contour.root
    return np.sum(contour.weights * 1j / r * np.exp(1j * r * abs(x) + 1j * contour.nodes * y)) / (4 * np.pi)


def test_contour_symmetry():
    c = build_contour(10.0, 1.0, 100)
    # tanh is odd, so the unshifted contour is symmetric under k -> -k
    assert np.allclose(c.nodes, -c.nodes[::-1], atol=1e-13)
    assert np.allclose(c.weights, c.weights[::-1], atol=1e-13)
    assert np.all(c.nodes[c.nodes.real < -5].imag > 0)
    assert np.all(c.nodes[c.nodes.real > 5].imag < 0)


def test_contour_rejects_bad_M():
    with pytest.raises(ContourError):
        build_contour(10.0, 1.0, 38)
    with pytest.raises(ContourError):
        build_contour(10.0, 1.0, 91)


def test_branch_is_continuous_and_outgoing():
    c = build_contour(10.0, 1.0, 200)
    r = c.root
    assert np.all(r.imag >= -1e-14)
    assert np.all(np.abs(np.diff(r)) <= 2 * np.abs(np.diff(c.nodes)))
    # on the real axis: non-negative real inside (-omega, omega), positive imaginary outside
    k = np.array([-12.0, -3.0, 0.0, 4.0, 11.0])
    s = spectral_sqrt(10.0, k)
    assert np.all(s[[1, 2, 3]].real > 0) and np.all(s[[0, 4]].imag > 0)


def test_green_reproduction_single_point():
    c = build_contour(10.0, 1.0, 90)
    val = sommerfeld_green(c, 1.0, 0.3)
    assert abs(val - mp_green(10.0, np.hypot(1.0, 0.3))) < 1e-12


def test_contour_tails_negligible():
    c = build_contour(10.0, 1.0, 90)
    f = np.abs(c.weights / c.root * np.exp(1j * c.root * 0.5))
    assert max(f[0], f[-1]) < 1e-14 * f.max()


@pytest.mark.parametrize("omega,M", [(1.0, 90), (10.0, 90), (30.0, 120)])
def test_green_reproduction_other_frequencies(omega, M):
    c = build_contour(omega, 1.0, M)
    pts = [(x, y) for x in (0.5, 1.0, 1.5) for y in (-1.0, 0.0, 0.6)]
    worst = max(abs(sommerfeld_green(c, x, y) - mp_green(omega, np.hypot(x, y))) for x, y in pts)
    assert worst <= 1e-12


def test_green_reproduction_grid():
    c = build_contour(10.0, 1.0, 90)
    worst = 0.0
    for x in np.linspace(0.5, 1.5, 6):
        for y in np.linspace(-1, 1, 9):
            for sx in (1, -1):
                worst = max(worst, abs(sommerfeld_green(c, sx * x, y) - mp_green(10.0, np.hypot(x, y))))
    assert worst <= 1e-12


def test_grating_orders_examples():
    o = grating_orders(10.0, -np.pi / 5, 1.0)
    assert o.k[o.index(0)].real == pytest.approx(10 * np.sin(np.pi / 5), abs=1e-12)
    assert abs(o.k[o.index(0)] - 5.87785) < 1e-5
    assert set(o.n[o.propagating].tolist()) == {-2, -1, 0}
    assert np.allclose(np.diff(o.kappa), 2 * np.pi)
    assert np.all((o.k.imag == 0) == o.propagating | (o.k == 0))


def test_exact_wood_anomaly_has_zero_k():
    o = grating_orders(30.0, -np.arccos(1 - 2 * np.pi / 30), 1.0)
    assert o.k[o.index(1)] == 0


def test_window_argument():
    o = grating_orders(10.0, -1.0, 1.0, window=4)
    assert o.n.tolist() == list(range(-4, 5))


def test_B_columns_match_integrand(star):
    disc = discretize(star, 32)
    c = build_contour(10.0, 1.0, 40)
    alpha = bloch_phase(10.0, -0.6, 1.0)
    B = assemble_B(disc, c, 1.0, alpha)
    j, m = 7, 11
    k, r, w = c.nodes[m], c.root[m], c.weights[m]
    x, y = disc.nodes[j]
    left = np.exp(1j * r * abs(x + 0.5) + 1j * k * y)
    right = np.exp(1j * r * abs(x - 0.5) + 1j * k * y)
    assert abs(B[j, m] - w * 0.5j / r * (left + alpha * right)) < 1e-14
    # the double-layer columns change sign across each wall
    assert abs(B[j, 40 + m] - w * 0.5 * (left - alpha * right)) < 1e-14


def test_B_alpha_difference_rank(star):
    disc = discretize(star, 128)
    c = build_contour(10.0, 1.0, 40)
    d = assemble_B(disc, c, 1.0, bloch_phase(10.0, -0.6, 1.0)) - assemble_B(disc, c, 1.0, bloch_phase(10.0, -1.3, 1.0))
    sv = np.linalg.svd(d, compute_uv=False)
    assert np.count_nonzero(sv > 1e-12 * sv[0]) <= c.M + 1


def test_B_rejects_obstacle_outside_strip():
    disc = discretize(BoundaryCurve.circle(0.3, center=(0.3, 0.0)), 32)
    with pytest.raises(GeometryError):
        assemble_B(disc, build_contour(10.0, 1.0, 40), 1.0, 1.0)


def test_wall_data_entrywise_circle():
    # each wall entry, inverse-transformed along the contour, is the kernel at the wall point
    disc = discretize(BoundaryCurve.circle(0.3), 16)
    c = build_contour(10.0, 1.0, 120)
    x0 = -0.8
    f = obstacle_to_wall(disc.nodes, disc.normals, disc.weights, c, x0)
    ys = np.array([-0.4, 0.1, 0.7])
    synth = np.exp(1j * np.outer(ys, c.nodes)) * c.weights[None, :]
    wall = np.stack([np.full(3, x0), ys], axis=1)
    ex = np.tile([[1.0, 0.0]], (3, 1))
    kern = layer_kernels(10.0, wall, disc.nodes, "SDAT", t_normals=ex, s_normals=disc.normals)
    w = disc.weights[None, :]
    assert np.max(np.abs(synth @ f["S"] - kern["S"] * w)) < 1e-11
    assert np.max(np.abs(synth @ f["D"] - kern["D"] * w)) < 1e-11
    assert np.max(np.abs(synth @ f["Ds"] - kern["A"] * w)) < 1e-10
    assert np.max(np.abs(synth @ f["T"] - kern["T"] * w)) < 1e-10


def test_C_telescoped_images(star):
    disc = discretize(star, 32)
    c = build_contour(10.0, 1.0, 40)
    alpha = bloch_phase(10.0, -0.6, 1.0)
    lat = Lattice(1.0)
    for P in (0, 1):
        C = assemble_C(disc, c, 1.0, alpha, P)
        fL = obstacle_to_wall(*_geo(translate(disc, P, lat)), c, -0.5)
        fR = obstacle_to_wall(*_geo(translate(disc, -P, lat)), c, 0.5)
        v = alpha**P * (fL["D"] - 10j * fL["S"]) - alpha ** (-P - 1) * (fR["D"] - 10j * fR["S"])
        dv = alpha**P * (fL["T"] - 10j * fL["Ds"]) - alpha ** (-P - 1) * (fR["T"] - 10j * fR["Ds"])
        assert np.allclose(C, np.vstack([v, dv]), rtol=0, atol=1e-15)


def _geo(disc):
    return disc.nodes, disc.normals, disc.weights


def test_C_rejects_obstacle_outside_strip():
    disc = discretize(BoundaryCurve.circle(0.45), 32)
    with pytest.raises(GeometryError):
        assemble_C(disc, build_contour(10.0, 0.8, 40), 0.8, 1.0, P=1)


def test_C_symmetric_cancellation():
    # alpha = 1, mirror-symmetric obstacle and even density: value rows cancel
    curve = BoundaryCurve((0.3, 0.0, 0.05))
    disc = discretize(curve, 64)
    c = build_contour(10.0, 1.0, 40)
    C = assemble_C(disc, c, 1.0, 1.0, 0)
    eta = np.cos(disc.t) ** 2 + 0.3 * np.sin(disc.t)  # even under x -> -x (t -> pi - t)
    assert np.max(np.abs(C[: c.M] @ eta)) < 1e-13 * np.max(np.abs(C))


def test_Q_alpha_one():
    c = build_contour(10.0, 1.0, 40)
    Q = assemble_Q(c, 1.0, 1.0)
    e = np.exp(1j * c.root * 1.0) / 2
    M = c.M
    assert np.allclose(np.diag(Q[:M, :M]), 0)
    assert np.allclose(np.diag(Q[:M, M:]), 1 - 2 * e)
    assert np.allclose(np.diag(Q[M:, :M]), -1 + 2 * e)
    assert np.allclose(np.diag(Q[M:, M:]), 0)


def test_Q_alpha_i_multiplier():
    c = build_contour(10.0, 1.0, 40)
    Q = assemble_Q(c, 1.0, 1j)
    e = np.exp(1j * c.root) / 2
    assert np.allclose(np.diag(Q[: c.M, : c.M]), -2 * e / c.root)


def test_Q_tails_and_alpha_form():
    c = build_contour(10.0, 1.0, 90)
    alpha = bloch_phase(10.0, -0.6, 1.0)
    Q = assemble_Q(c, 1.0, alpha)
    M = c.M
    for j in (0, M - 1):
        blk = Q[np.ix_([j, M + j], [j, M + j])]
        assert np.max(np.abs(blk - J2)) < 1e-14
    assert np.array_equal(Q, assemble_Q(c, 1.0, 1 / np.conj(alpha)))


def test_wall_field_gradient_finite_difference():
    c = build_contour(10.0, 1.0, 40)
    pts = np.array([[0.1, 0.2], [-0.3, -0.1]])
    _, Gx, Gy = wall_fields(pts, c, 1.0, 0.3 + 0.4j, gradient=True)
    h = 1e-6
    for axis, G in ((0, Gx), (1, Gy)):
        e = np.zeros(2)
        e[axis] = h
        fd = (wall_fields(pts + e, c, 1.0, 0.3 + 0.4j)[0] - wall_fields(pts - e, c, 1.0, 0.3 + 0.4j)[0]) / (2 * h)
        assert np.max(np.abs(fd - G)) < 1e-6 * np.max(np.abs(G))
