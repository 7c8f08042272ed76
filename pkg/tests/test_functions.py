import math

import numpy as np
import pytest
from scipy.special import gamma as G

from lpjohn import numerics as nm
from lpjohn.functions import (FunctionError, GaugePower, GridPotential, Indicator, PointMass,
                              entropy_mass, from_spec, gauge_power, gaussian, gl_image,
                              indicator, lp_asplund_sum, lp_scalar_mult, polar,
                              support_function, to_spec, total_mass)


def test_gaussian_mass_and_support():
    f = gaussian(np.diag([4.0, 1.0]))
    assert total_mass(f) == pytest.approx(math.pi)
    y = np.array([2.0, 1.0])
    assert support_function(f, y) == pytest.approx(0.5 * (4 / 4 + 1))


def test_gaussian_entropy_mass():
    # J(f^diamond) = n J - int u e^-u = (n/2) J for Gaussians
    f = gaussian(np.diag([9.0, 1.0]))
    assert entropy_mass(f) == pytest.approx(total_mass(f), rel=1e-14)


@pytest.mark.parametrize("q", [1.5, 2.0, 4.0])
def test_gauge_power_mass_closed_form(square, q):
    f = gauge_power(square, q)
    expect = 4.0 * G(2 / q + 1) * q ** (2 / q)
    assert total_mass(f) == pytest.approx(expect, rel=1e-12)
    assert total_mass(f, method="grid", points_per_axis=257) == pytest.approx(expect, rel=2e-3)


@pytest.mark.parametrize("q", [1.5, 2.0, 4.0])
def test_gauge_power_entropy_by_quadrature(hexagon, q):
    f = gauge_power(hexagon, q)
    assert entropy_mass(f) == pytest.approx(entropy_mass(f, "grid", 257), rel=3e-3)


def test_gauge_power_conjugate(square):
    # (||x||^q / q)* = h_K^q' / q'
    f = gauge_power(square, 4.0)
    y = np.array([[0.3, -0.7], [1.5, 0.2]])
    qc = 4 / 3
    np.testing.assert_allclose(support_function(f, y), square.support(y) ** qc / qc)


def test_polar_of_gaussian():
    f = gaussian(np.diag([4.0, 1.0]))
    fo = polar(f)
    np.testing.assert_allclose(fo.potential.Q, np.diag([0.25, 1.0]))


def test_polar_of_gauge_power(square):
    fo = polar(gauge_power(square, 4.0))
    assert isinstance(fo.potential, GaugePower)
    assert fo.potential.q == pytest.approx(4 / 3)


def test_grid_polar_is_involutive(smooth_max):
    fo = polar(smooth_max)
    foo = polar(fo)
    X = np.random.default_rng(0).uniform(-2, 2, (50, 2))
    np.testing.assert_allclose(foo.potential.value(X), smooth_max.potential.value(X), atol=5e-3)


def test_gl_image_gaussian():
    T = np.array([[1.0, 0.5], [0.0, 2.0]])
    f = gl_image(gaussian(np.eye(2)), T)
    np.testing.assert_allclose(f.potential.Q, T.T @ T)
    assert total_mass(f) == pytest.approx(2 * math.pi / 2.0)


def test_gl_image_gauge_power_mass(randpoly):
    T = np.array([[1.2, 0.3], [-0.4, 0.9]])
    f = gauge_power(randpoly, 2.0)
    assert total_mass(gl_image(f, T)) == pytest.approx(total_mass(f) / abs(np.linalg.det(T)))


def test_gl_image_grid_mass(smooth_max):
    T = np.array([[1.1, 0.2], [0.0, 0.8]])
    assert total_mass(gl_image(smooth_max, T)) == pytest.approx(
        total_mass(smooth_max) / abs(np.linalg.det(T)), rel=1e-3)


def test_gl_image_rejects_singular():
    with pytest.raises(FunctionError, match="singular"):
        gl_image(gaussian(np.eye(2)), np.array([[1.0, 1.0], [1.0, 1.0 + 1e-12]]))


def test_scalar_multiplication_scales_support(square):
    f = gauge_power(square, 4.0)
    g = lp_scalar_mult(3.0, f, 2.0)
    y = np.array([0.4, -1.1])
    assert support_function(g, y) == pytest.approx(3.0 ** 0.5 * support_function(f, y))


def test_asplund_sum_of_gaussians():
    # h = (h1^p + h2^p)^(1/p); for p = 1 and equal Gaussians: h = 2 h_gamma -> Q = I/2
    f = gaussian(np.eye(2))
    s = lp_asplund_sum(f, f, 1.0, 1.0, 1.0, points_per_axis=129)
    assert total_mass(s) == pytest.approx(2 * math.pi * 2.0, rel=2e-3)


def test_asplund_sum_of_indicators(square):
    s = lp_asplund_sum(indicator(square), indicator(square), 1.0, 1.0, 1.0)
    assert isinstance(s.potential, Indicator)
    y = np.array([1.0, 0.3])
    assert support_function(s, y) == pytest.approx(2 * square.support(y), rel=1e-9)


def test_asplund_zero_coefficients_give_point_mass():
    s = lp_asplund_sum(gaussian(np.eye(2)), gaussian(np.eye(2)), 0.0, 0.0, 2.0)
    assert isinstance(s.potential, PointMass)


def test_grid_potential_validation():
    g = nm.Grid.from_function(lambda x: np.sum(x * x, axis=-1) / 2 + 1.0, 2, 8.0, 65)
    with pytest.raises(FunctionError, match="u\\(0\\)"):
        GridPotential(g)
    g = nm.Grid.from_function(lambda x: np.sin(3 * x[..., 0]) ** 2 + 0.5 * np.sum(x * x, axis=-1),
                              2, 8.0, 65)
    with pytest.raises(FunctionError, match="convex"):
        GridPotential(g)


def test_from_callable_picks_decay_box(smooth_max):
    u = smooth_max.potential
    assert u.grid.points_per_axis == 257
    assert 4.0 < u.grid.half_width < 8.0
    assert total_mass(smooth_max) == pytest.approx(4.5144, abs=1e-4)


def test_q_range_enforced(square):
    with pytest.raises(FunctionError):
        gauge_power(square, 0.5)
    with pytest.raises(FunctionError):
        gauge_power(square, 9.0)


@pytest.mark.parametrize("spec", [
    {"type": "gaussian", "Q": [[4, 0], [0, 1]]},
    {"type": "gaussian", "Q": [2, 0.5, 0.5, 1]},
    {"type": "gauge_power", "body": {"normals": [[1, 0], [0, 1], [-1, 0], [0, -1]],
                                     "offsets": [1, 1, 1, 1]}, "q": 4},
    {"type": "gauge_power", "body": {"vertices": [[1, 0], [0, 1], [-1, 0], [0, -1]]}, "q": 1.5},
])
def test_spec_round_trip(spec):
    f = from_spec(spec)
    g = from_spec(to_spec(f))
    X = np.random.default_rng(0).standard_normal((20, 2))
    np.testing.assert_allclose(f.potential.value(X), g.potential.value(X), rtol=1e-12)


def test_grid_spec_round_trip(smooth_max):
    g = from_spec(to_spec(smooth_max))
    np.testing.assert_array_equal(g.potential.grid.values, smooth_max.potential.grid.values)


@pytest.mark.parametrize("spec, match", [
    ({"type": "gaussian", "Q": [[1, 2], [2, 1]]}, "positive definite"),
    ({"type": "gaussian"}, "needs 'Q'"),
    ({"type": "cube"}, "unknown function type"),
    ({"Q": [[1]]}, "type"),
    ({"type": "gauge_power", "body": {"vertices": [[1, 1], [2, 1], [1, 2]]}, "q": 2}, "origin"),
])
def test_spec_errors(spec, match):
    with pytest.raises(FunctionError, match=match):
        from_spec(spec)


def test_indicator_has_no_polar(square):
    with pytest.raises(FunctionError):
        polar(indicator(square))
