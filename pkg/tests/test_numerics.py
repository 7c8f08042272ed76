import math

import numpy as np
import pytest

from lpjohn import _legendre_py, kernels
from lpjohn import numerics as nm
from lpjohn.functions import GridPotential, Quadratic


def quad_grid(dim, R, N, a=1.0):
    return nm.Grid.from_function(lambda x: 0.5 * a * np.sum(x * x, axis=-1), dim, R, N)


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_gaussian_mass_by_trapezoid(dim):
    g = quad_grid(dim, 8.0, nm.default_points(dim))
    J = nm.integrate(g.like(np.exp(-g.values)))
    assert abs(J - (2 * math.pi) ** (dim / 2)) < 1e-6 * (2 * math.pi) ** (dim / 2)


def test_decay_check_names_face():
    g = quad_grid(2, 3.0, 65)
    with pytest.raises(nm.DecayError, match="face"):
        nm.integrate(g.like(np.exp(-g.values)))


def test_grid_rejects_even_points():
    with pytest.raises(ValueError):
        nm.Grid(1, 1.0, 10, np.zeros(10))


def test_quadratic_conjugate_exact_with_refine():
    g = quad_grid(1, 10.0, 513)
    u = nm.legendre_transform(g, dual_half_width=8.0, refine=True)
    y = u.axis
    assert np.max(np.abs(u.values - 0.5 * y * y)) < 1e-10


def test_quartic_conjugate_on_gradient_range():
    # u = x^4/4 has u*(y) = (3/4)|y|^(4/3)
    g = nm.Grid.from_function(lambda x: x[..., 0] ** 4 / 4, 1, 3.0, 1025)
    u = nm.legendre_transform(g, refine=True)
    y = u.axis
    inside = np.abs(y) < 0.9 * nm.gradient_range(g)
    err = np.abs(u.values - 0.75 * np.abs(y) ** (4 / 3))[inside]
    assert err.max() < 1e-3


def test_legendre_is_order_reversing_and_convex():
    g = quad_grid(2, 6.0, 65)
    g2 = g.like(2 * g.values)  # u2 >= u
    a = nm.legendre_transform(g, dual_half_width=4.0)
    b = nm.legendre_transform(g2, dual_half_width=4.0)
    assert np.all(b.values <= a.values + 1e-12)
    v = a.values[32]
    assert np.all(v[:-2] + v[2:] - 2 * v[1:-1] >= -1e-9)


def test_double_conjugate_small_on_convex_input():
    g = quad_grid(1, 6.0, 257)
    assert nm.double_conjugate_check(g) < 1e-3


def test_fenchel_young_on_grid():
    u = GridPotential(Quadratic(np.diag([2.0, 0.5])).sample(12.0, 129))
    g = u.grid
    grad = nm.node_gradients(g, order=4)
    X = g.nodes()
    ok = np.all(np.abs(X) < 0.5 * g.half_width, axis=-1)
    x, y = X[ok], grad[ok]
    res = np.abs(g.values[ok] + u.conj(y) - np.sum(x * y, axis=-1))
    assert res.max() < 10 * g.spacing**2


@pytest.mark.parametrize("shape", [(7, 33), (1, 5), (40, 129)])
def test_backends_agree(shape):
    rng = np.random.default_rng(1)
    x = np.linspace(-2, 2, shape[1])
    vals = np.cumsum(np.cumsum(rng.uniform(0, 1, shape), axis=1), axis=1) / shape[1]
    y = np.linspace(-3, 3, 17)
    for refine in (False, True):
        a = _legendre_py.legendre_lines(vals, x, y, refine)
        b = kernels.legendre_lines(vals, x, y, refine)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


def test_backend_handles_infinite_values():
    x = np.linspace(-1, 1, 9)
    vals = np.where(np.abs(x) < 0.6, x * x, np.inf)[None, :]
    y = np.array([-1.0, 0.0, 2.0])
    out = kernels.legendre_lines(np.ascontiguousarray(vals), x, y, False)
    ref = np.max(np.where(np.isfinite(vals[0]), x[None, :] * y[:, None] - vals[0], -np.inf), axis=1)
    np.testing.assert_allclose(out[0], ref)


def test_backend_name():
    assert kernels.BACKEND in ("cython", "python")


def test_spd_helpers():
    rng = np.random.default_rng(3)
    Q = nm.random_spd(3, rng, det=1.0, spread=1.5)
    assert abs(np.linalg.det(Q) - 1) < 1e-12
    S = nm.spd_sqrt(Q)
    np.testing.assert_allclose(S @ S, Q, atol=1e-12)
    np.testing.assert_allclose(nm.spd_power(Q, -1), np.linalg.inv(Q), atol=1e-10)
    with pytest.raises(nm.NotSPDError):
        nm.as_spd(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(nm.NotSPDError):
        nm.as_spd(np.array([[1.0, 0.5], [0.0, 1.0]]))


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_sphere_quadrature_area(dim):
    om, w = nm.sphere_quadrature(dim)
    area = dim * nm.unit_ball_volume(dim)
    assert abs(w.sum() - area) < 1e-10
    np.testing.assert_allclose(np.linalg.norm(om, axis=1), 1.0)


def test_gradient_fourth_order():
    g = nm.Grid.from_function(lambda x: np.sum(x**4, axis=-1) / 4, 1, 2.0, 129)
    d2 = nm.node_gradients(g, order=2)[..., 0]
    d4 = nm.node_gradients(g, order=4)[..., 0]
    exact = g.axis**3
    inner = slice(4, -4)
    assert np.abs(d4 - exact)[inner].max() < np.abs(d2 - exact)[inner].max()
