import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fastgrating.geometry import (
    BoundaryCurve,
    GeometryError,
    Lattice,
    discretize,
    random_fourier_curve,
    read_geometry,
    translate,
    write_geometry,
)


def test_unit_circle_four_nodes():
    disc = discretize(BoundaryCurve.circle(1.0), 4)
    expect = np.array([[0, 1], [-1, 0], [0, -1], [1, 0]], dtype=float)
    assert np.allclose(disc.nodes, expect, atol=1e-15)
    assert np.allclose(disc.normals, expect, atol=1e-15)
    assert np.allclose(disc.weights, np.pi / 2)


def test_star_radius_extremes(star):
    assert star.radius(0.0) == pytest.approx(0.455, abs=1e-15)
    assert star.radius(np.pi / 3) == pytest.approx(0.245, abs=1e-15)


def test_circle_length():
    assert discretize(BoundaryCurve.circle(1.0), 64).length == pytest.approx(2 * np.pi, abs=1e-13)


def test_translate_example():
    disc = discretize(BoundaryCurve.circle(0.3), 8)
    img = translate(disc, 2, Lattice(1.0))
    assert np.allclose(img.nodes - disc.nodes, [[2.0, 0.0]])
    assert np.array_equal(img.normals, disc.normals)
    assert img.center == (2.0, 0.0)


@pytest.mark.parametrize("n", [3, 5, 2, 0])
def test_bad_node_counts(n):
    with pytest.raises(GeometryError):
        discretize(BoundaryCurve.circle(1.0), n)


def test_nonpositive_radius_rejected():
    with pytest.raises(GeometryError):
        discretize(BoundaryCurve((0.1, 0.0, 0.0, 0.3)), 64)


def test_random_curve_reproducible():
    a = random_fourier_curve(7, 21, ellipse_bias=0.05)
    b = random_fourier_curve(7, 21, ellipse_bias=0.05)
    assert a == b
    assert random_fourier_curve(8, 21) != a


def test_random_curve_one_term_is_circle():
    c = random_fourier_curve(3, 1, radius=0.25)
    assert c.cos_coeffs == (0.25,)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([3, 11, 41, 101]), st.floats(0.0, 0.1))
def test_random_curve_positive(seed, terms, bias):
    c = random_fourier_curve(seed, terms, ellipse_bias=bias)
    assert c.min_radius() > 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 1000), st.sampled_from([16, 64, 128]))
def test_normals_are_unit_outward_and_orthogonal(seed, n):
    curve = random_fourier_curve(seed, 11)
    disc = discretize(curve, n)
    dz = curve.derivative(disc.t)
    assert np.allclose(np.hypot(*disc.normals.T), 1.0)
    assert np.max(np.abs(np.sum(dz * disc.normals, axis=1))) < 1e-13
    # a short step along the normal leaves the curve
    eps = 1e-4 * curve.min_radius()
    assert not np.any(curve.contains(disc.nodes + eps * disc.normals))
    assert np.all(curve.contains(disc.nodes - eps * disc.normals))


@settings(max_examples=25, deadline=None)
@given(st.integers(-3, 3), st.floats(0.5, 3.0))
def test_translate_commutes_with_discretize(j, period):
    curve = BoundaryCurve((0.2, 0.01, 0.02), (0.0, 0.03))
    lat = Lattice(period)
    a = translate(discretize(curve, 32), j, lat)
    b = discretize(curve.translated((j * period, 0.0)), 32)
    assert np.allclose(a.nodes, b.nodes, atol=1e-14)
    assert np.allclose(a.normals, b.normals)
    assert np.allclose(a.weights, b.weights)


def test_geometry_file_roundtrip(tmp_path):
    curve = BoundaryCurve((0.35, 0.0, 0.01, 0.105), (0.0, 0.02), (0.1, -0.2))
    path = tmp_path / "c.geom"
    write_geometry(curve, path)
    assert read_geometry(path) == curve


def test_geometry_file_rejects_unknown_lines(tmp_path):
    path = tmp_path / "bad.geom"
    path.write_text("a 0 0.3\nradius 0.4\n")
    with pytest.raises(GeometryError):
        read_geometry(path)


def test_lattice_needs_positive_period():
    with pytest.raises(GeometryError):
        Lattice(0.0)
