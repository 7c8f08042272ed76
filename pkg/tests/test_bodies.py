import math

import numpy as np
import pytest

from lpjohn.bodies import (BodyError, Ellipsoid, Polytope, body_from_spec,
                           random_symmetric_polytope)


def test_square_volume_gauge_support(square):
    assert abs(square.volume() - 4.0) < 1e-12
    assert square.gauge(np.array([0.5, -1.0])) == pytest.approx(1.0)
    assert square.support(np.array([1.0, 1.0])) == pytest.approx(2.0)


def test_hexagon_volume(hexagon):
    assert abs(hexagon.volume() - 1.5 * math.sqrt(3)) < 1e-12


def test_polar_of_square_is_cross_polytope(square):
    P = square.polar()
    assert abs(P.volume() - 2.0) < 1e-12
    assert P.gauge(np.array([1.0, 1.0])) == pytest.approx(2.0)


def test_gauge_support_duality(randpoly):
    rng = np.random.default_rng(0)
    X = rng.standard_normal((200, 2))
    # <x, y> <= ||x||_K h_K(y)
    Y = rng.standard_normal((200, 2))
    assert np.all(np.sum(X * Y, axis=1) <= randpoly.gauge(X) * randpoly.support(Y) + 1e-12)
    # polar gauge equals support function
    np.testing.assert_allclose(randpoly.polar().gauge(Y), randpoly.support(Y), rtol=1e-9)


def test_halfspace_and_vertex_constructions_agree():
    A = Polytope.from_halfspaces([[1, 0], [0, 1], [-1, 0], [0, -1]], [1, 2, 1, 2])
    B = Polytope.from_vertices([[1, 2], [-1, 2], [-1, -2], [1, -2]])
    assert A.volume() == pytest.approx(B.volume())
    x = np.array([[0.3, -1.7], [0.9, 0.1]])
    np.testing.assert_allclose(A.gauge(x), B.gauge(x))


def test_origin_outside_rejected():
    with pytest.raises(BodyError, match="origin"):
        Polytope.from_vertices([[1, 1], [2, 1], [1, 2]])
    with pytest.raises(BodyError, match="origin"):
        Polytope.from_halfspaces([[1, 0], [-1, 0], [0, 1], [0, -1]], [1, 1, 1, -0.5])


def test_unbounded_rejected():
    with pytest.raises(BodyError):
        Polytope.from_halfspaces([[1, 0], [0, 1]], [1, 1])


def test_preimage(square):
    T = np.array([[2.0, 0.0], [0.0, 1.0]])
    K = square.preimage(T)
    assert K.volume() == pytest.approx(2.0)
    x = np.array([0.5, 1.0])
    assert K.gauge(x) == pytest.approx(square.gauge(T @ x))


def test_ellipsoid_ray_data_integrates_volume():
    E = Ellipsoid(np.diag([4.0, 1.0]))
    a, c, x = E.ray_data()
    # int_K 1 = sum c_j / n
    assert c.sum() / 2 == pytest.approx(E.volume(), rel=1e-12)
    np.testing.assert_allclose(E.gauge(x), 1.0)


def test_polytope_ray_data_integrates_volume(randpoly):
    a, c, x = randpoly.ray_data()
    assert c.sum() / 2 == pytest.approx(randpoly.volume(), rel=1e-12)
    np.testing.assert_allclose(randpoly.gauge(x), 1.0)


def test_symmetry_detection(square, triangle):
    assert square.is_symmetric()
    assert not triangle.is_symmetric()
    assert random_symmetric_polytope(2, 4, np.random.default_rng(5)).is_symmetric()


def test_cube_3d():
    C = Polytope.cube(3)
    assert C.volume() == pytest.approx(8.0)
    assert C.polar().volume() == pytest.approx(8 / 6)


def test_body_from_spec_errors():
    with pytest.raises(BodyError):
        body_from_spec({"normals": [[1, 0]]})
    with pytest.raises(BodyError):
        body_from_spec([1, 2])
    assert isinstance(body_from_spec({"ellipsoid": [[1, 0], [0, 2]]}), Ellipsoid)
