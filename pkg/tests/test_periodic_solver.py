import numpy as np
import pytest

from fastgrating.geometry import BoundaryCurve
from fastgrating.hbs import apply_inverse
from fastgrating.periodic_solver import (
    GratingProblem,
    Solution,
    SolverError,
    WoodAnomalyError,
    _lu,
    apply_Atilde_inverse,
    assemble_system,
    augment_wood,
    bucket_angles,
    detect_wood,
    factor_neighbors,
    precompute,
    solve_angles,
    solve_block,
)
from fastgrating.postprocess import bragg_amplitudes, eval_field
from fastgrating.sommerfeld import bloch_phase
from oracles import dense_solve

THETA = -np.pi / 5
# order 1 has k = 1.5 here: a propagating order well away from grazing
THETA_K15 = -np.arccos((np.sqrt(100 - 2.25) - 2 * np.pi) / 10)


def system_for(pre, theta, **kw):
    alpha = bloch_phase(pre.problem.omega, theta, pre.problem.period)
    return assemble_system(pre, alpha, theta, **kw)


def one_solution(pre, theta, **kw):
    sys_ = system_for(pre, theta, **kw)
    eta, xi, a = solve_block(sys_, pre.form.rhs([theta]))
    return Solution(theta, sys_.alpha, eta[:, 0], xi[:, 0], a[:, 0], sys_)


@pytest.mark.parametrize("P", [1, 2])
def test_neighbor_reconstruction(star_pre_512, P):
    form = star_pre_512.form
    nb = factor_neighbors(form, P, 1e-10)
    assert np.array_equal(nb.P_nb[nb.skeleton], np.eye(nb.rank))
    for j in [j for j in range(-P, P + 1) if j]:
        Aj = form.neighbor_block(j)
        assert np.abs(Aj - nb.P_nb @ nb.R[j]).max() <= 10 * 1e-10 * np.abs(Aj).max()


def test_neighbor_factor_needs_images(star_pre_512):
    with pytest.raises(ValueError):
        factor_neighbors(star_pre_512.form, 0)


def test_p0_reduces_to_plain_inverse(star_pre_512_p0):
    pre = star_pre_512_p0
    sys_ = system_for(pre, THETA)
    X = np.random.default_rng(0).standard_normal((pre.form.size, 3)) + 0j
    assert np.array_equal(apply_Atilde_inverse(sys_, X), apply_inverse(pre.inverse, X))


def test_woodbury_against_dense(star_pre_512):
    pre = star_pre_512
    sys_ = system_for(pre, THETA)
    form = pre.form
    At = form.self_operator().dense()
    for j in (-1, 1):
        At = At + sys_.alpha**j * form.neighbor_block(j)
    Z = apply_Atilde_inverse(sys_, np.eye(form.size))
    assert np.abs(At @ Z - np.eye(form.size)).max() <= 1e-10 * np.abs(At).max() * 10


def test_same_alpha_is_deterministic(star_pre_512):
    a = one_solution(star_pre_512, THETA)
    b = one_solution(star_pre_512, THETA)
    assert np.array_equal(a.eta, b.eta) and np.array_equal(a.xi, b.xi)


def test_zero_rhs(star_pre_512):
    sys_ = system_for(star_pre_512, THETA)
    eta, xi, a = solve_block(sys_, np.zeros(star_pre_512.form.size))
    assert not eta.any() and not xi.any()


def test_block_of_three_equals_single_solves(star_pre_512):
    pre = star_pre_512
    sys_ = system_for(pre, THETA)
    # same alpha: shift omega d cos(theta) by 2 pi
    c = np.cos(THETA)
    thetas = [THETA, -np.arccos(c - 2 * np.pi / 10), -np.arccos(c - 4 * np.pi / 10)]
    b = pre.form.rhs(thetas)
    eta, xi, _ = solve_block(sys_, b)
    for i in range(3):
        e1, x1, _ = solve_block(sys_, b[:, i])
        assert np.abs(eta[:, i] - e1).max() <= 1e-12 * np.abs(e1).max()
        assert np.abs(xi[:, i] - x1).max() <= 1e-12 * max(np.abs(x1).max(), 1e-300)


@pytest.mark.parametrize("q", [1, 3])
def test_two_inverse_calls_per_solve(star_pre_512, q):
    pre = star_pre_512
    before = pre.inverse.apply_count
    sys_ = system_for(pre, THETA)
    solve_block(sys_, pre.form.rhs([THETA] * q))
    assert pre.inverse.apply_count - before == 2


def test_dense_residual_small_case(star):
    pre = precompute(GratingProblem(star, 1.0, 10.0, 256))
    sol = one_solution(pre, THETA)
    ref = dense_solve(pre, THETA, contour=sol.system.contour)
    assert ref.residual(sol.eta, sol.xi) <= 1e-9


def test_bucket_examples():
    w, d = 10.0, 1.0
    c = -0.3
    thetas = [-np.arccos(c), -np.arccos(c + 2 * np.pi / (w * d)), -np.arccos(c + 0.1)]
    b = bucket_angles(w, d, thetas)
    assert [idx for _, idx in b] == [[0, 1], [2]]


def test_bucket_two_hundred_angles():
    w, d = 30.0, 1.0
    step = 2 * np.pi / (21 * w * d)
    cos = -0.995 + step * np.arange(200)
    buckets = bucket_angles(w, d, -np.arccos(cos))
    sizes = sorted(len(i) for _, i in buckets)
    assert len(buckets) == 21
    assert sizes[0] >= 9 and sizes[-1] <= 10
    # q ~ omega d / pi angles per Bloch phase
    assert abs(np.mean(sizes) - w * d / np.pi) < 1


def test_solve_angles_order_and_buckets(star_pre_512):
    pre = star_pre_512
    c = np.cos(THETA)
    thetas = [-np.arccos(c - 2 * np.pi / 10), -1.2, THETA]
    stats = []
    sols = solve_angles(pre, thetas, stats=stats)
    assert [s.theta for s in sols] == thetas
    assert sorted(s["q"] for s in stats) == [1, 2]
    single = one_solution(pre, THETA)
    assert np.abs(sols[2].eta - single.eta).max() <= 1e-12 * np.abs(single.eta).max()


def test_angle_out_of_range(star_pre_512):
    with pytest.raises(ValueError):
        solve_angles(star_pre_512, [0.3])


def test_problem_validation(star):
    with pytest.raises(ValueError):
        GratingProblem(star, 1.0, 10.0, 256, P=3)
    with pytest.raises(ValueError):
        GratingProblem(star, 1.0, 10.0, 256, problem="transmission")


def test_detect_wood_exact():
    orders, hit = detect_wood(30.0, -np.arccos(1 - 2 * np.pi / 30), 1.0)
    assert orders.n[hit].tolist() == [1]
    _, none = detect_wood(10.0, THETA, 1.0)
    assert len(none) == 0


def test_auto_matches_off_away_from_wood(star_pre_512):
    a = one_solution(star_pre_512, THETA, wood="auto")
    b = one_solution(star_pre_512, THETA, wood="off")
    assert np.array_equal(a.eta, b.eta)
    assert a.system.extra_cols == 0


def test_shifted_contour_without_crossing(star):
    pre = precompute(GratingProblem(star, 1.0, 10.0, 512, M=140))
    pts = np.array([[0.2, 0.7], [-0.4, -0.8], [0.5, 0.0]])
    u0 = eval_field(one_solution(pre, THETA, wood="off", s0=0.0), pts)
    u2 = eval_field(one_solution(pre, THETA, wood="off", s0=2.0), pts)
    assert np.abs(u0 - u2).max() <= 1e-10


def test_forced_augmentation_agrees_with_plain(star):
    pre = precompute(GratingProblem(star, 1.0, 10.0, 1024, M=200))
    plain = one_solution(pre, THETA_K15, wood="off")
    aug = augment_wood(plain.system, THETA_K15)
    eta, xi, a = solve_block(aug, pre.form.rhs([THETA_K15]))
    forced = Solution(THETA_K15, aug.alpha, eta[:, 0], xi[:, 0], a[:, 0], aug)
    assert aug.contour.s0 > 1.5 and len(aug.wood_orders) == 1
    assert aug.B.shape[1] == 2 * aug.M + 1 and aug.Q.shape == (2 * aug.M + 1,) * 2
    sp, sf = bragg_amplitudes(plain), bragg_amplitudes(forced)
    assert np.abs(sp.t - sf.t).max() <= 1e-7
    assert np.abs(sp.c - sf.c).max() <= 1e-7
    assert sf.flux_error <= 1e-8


def test_too_many_crossings(star_pre_512):
    with pytest.raises(WoodAnomalyError):
        system_for(star_pre_512, THETA, wood="force", crossed=[0, 1, 2])


def test_singular_schur_reported():
    with pytest.raises(WoodAnomalyError):
        _lu(np.ones((4, 4), complex), "Schur complement", WoodAnomalyError)
    assert issubclass(WoodAnomalyError, SolverError)


def test_loaded_inverse_size_checked(star, star_pre_512):
    with pytest.raises(SolverError):
        precompute(GratingProblem(star, 1.0, 10.0, 256), inverse=star_pre_512.inverse)
