import math

import numpy as np
import pytest

from lpjohn import numerics as nm
from lpjohn.bodies import Polytope
from lpjohn.functions import Quadratic, gauge_power, gaussian, indicator
from lpjohn.oracle import (OracleConfig, OracleError, dense_conjugate, grid_search_Sbar,
                           mc_total_mass, q_of)
from lpjohn.solver import solve_Sbar


def test_q_of_has_det_one():
    assert np.linalg.det(q_of(7.0, 0.3)) == pytest.approx(1.0)


def test_search_standard_gaussian(gamma2):
    Q, d = grid_search_Sbar(gamma2, 2.0)
    assert nm.op_norm(Q - np.eye(2)) < 1e-4
    assert d == pytest.approx(1.0, abs=1e-9)


def test_search_anisotropic_gaussian():
    Q, d = grid_search_Sbar(gaussian(np.diag([4.0, 1.0])), 1.0)
    assert nm.op_norm(Q - np.diag([2.0, 0.5])) < 1e-4


def test_search_matches_solver_on_triangle(triangle):
    f = gauge_power(triangle, 4.0)
    for p in (1.0, 2.0):
        Q, d = grid_search_Sbar(f, p)
        Qs, ds, _, _ = solve_Sbar(f, p)
        assert nm.op_norm(Q - Qs) < 1e-4
        assert d == pytest.approx(ds, rel=1e-6)


def test_search_grid_refinement_stable(square):
    f = gauge_power(square, 4.0)
    coarse = OracleConfig(eigen_ratio_grid=np.geomspace(1 / 16, 16, 21),
                          rotation_grid=np.linspace(0, math.pi, 18, endpoint=False))
    _, d1 = grid_search_Sbar(f, 2.0, coarse)
    _, d2 = grid_search_Sbar(f, 2.0)
    assert abs(d1 / d2 - 1) < 1e-3


def test_search_one_dimensional():
    Q, d = grid_search_Sbar(gaussian(np.array([[3.0]])), 2.0)
    assert Q.shape == (1, 1)


def test_config_validation():
    with pytest.raises(ValueError):
        OracleConfig(eigen_ratio_grid=[])
    with pytest.raises(ValueError):
        OracleConfig(mc_samples=0)


@pytest.mark.parametrize("f, exact", [
    (gaussian(np.eye(2)), 2 * math.pi),
    (indicator(Polytope.cube(2)), 4.0),
    (gaussian(np.diag([4.0, 1.0])), math.pi),
])
def test_mc_mass(f, exact):
    est, se = mc_total_mass(f, OracleConfig(mc_samples=100_000, seed=3))
    assert abs(est - exact) < 3 * se


def test_mc_deterministic(gamma2):
    cfg = OracleConfig(mc_samples=10_000, seed=11)
    assert mc_total_mass(gamma2, cfg) == mc_total_mass(gamma2, cfg)


def test_dense_conjugate_closed_forms():
    assert dense_conjugate(Quadratic(np.eye(2)), [1.0, 2.0], 5.0) == pytest.approx(2.5, abs=1e-8)
    assert dense_conjugate(lambda x: x[..., 0] ** 4 / 4, [1.0], 3.0) == pytest.approx(0.75, abs=1e-9)
    assert dense_conjugate(indicator(Polytope.cube(2)), [1.0, 1.0], 1.5) == pytest.approx(2.0, abs=1e-6)


def test_dense_conjugate_boundary_detection():
    with pytest.raises(OracleError, match="boundary"):
        dense_conjugate(Quadratic(np.eye(2)), [3.0, 0.0], 2.0)
