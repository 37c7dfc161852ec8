"""Generator set algebra: supports, sums, membership, coupling sets."""

import numpy as np
import pytest

from nestmpc.sets import (Box, ConvexSet, contains_point,
                          coupling_disturbance_set, linear_image,
                          minkowski_sum, scale, support)


def box_support(box: Box, d: np.ndarray) -> float:
    """Closed-form support of an axis-aligned box."""
    return float(sum(di * (box.hi[j] if di >= 0 else box.lo[j])
                     for j, di in enumerate(d)))


def test_box_requires_origin_interior():
    with pytest.raises(ValueError, match="origin"):
        Box([0.0, -1.0], [1.0, 1.0])
    with pytest.raises(ValueError, match="origin"):
        Box([-1.0], [0.0])
    with pytest.raises(ValueError, match="finite"):
        Box([-np.inf], [1.0])
    with pytest.raises(ValueError, match="same length"):
        Box([-1.0], [1.0, 1.0])


def test_box_vertices_and_facets():
    b = Box([-1.0, -2.0], [3.0, 4.0])
    v = b.vertices()
    assert v.shape == (4, 2)
    assert {tuple(p) for p in v} == {(-1, -2), (-1, 4), (3, -2), (3, 4)}
    for c, d in b.facets():
        assert (v @ c).max() == pytest.approx(d)


def test_box_scale_degenerates_cleanly():
    b = Box([-1.0, -2.0], [3.0, 4.0])
    z = b.scale(0.0)
    assert (z.lo == 0).all() and (z.hi == 0).all()
    half = b.scale(0.5)
    np.testing.assert_allclose(half.hi, [1.5, 2.0])
    with pytest.raises(ValueError, match="scale factor"):
        b.scale(1.5)
    with pytest.raises(ValueError, match="scale factor"):
        scale(b.to_set(), -0.1)


def test_support_matches_box_closed_form():
    rng = np.random.default_rng(0)
    b = Box([-1.0, -3.0, -0.5], [2.0, 1.0, 4.0])
    S = b.to_set()
    for _ in range(50):
        d = rng.standard_normal(3)
        assert support(S, d) == pytest.approx(box_support(b, d), abs=1e-12)


def test_minkowski_sum_support_additivity():
    rng = np.random.default_rng(1)
    S1 = ConvexSet(rng.standard_normal((5, 2)))
    S2 = ConvexSet(rng.standard_normal((4, 2)))
    S = minkowski_sum(S1, S2)
    for _ in range(100):
        d = rng.standard_normal(2)
        assert support(S, d) == pytest.approx(support(S1, d) + support(S2, d),
                                              abs=1e-10)
    assert len(S.summand_generators) == 2


def test_linear_image_support_identity():
    rng = np.random.default_rng(2)
    S = ConvexSet(rng.standard_normal((6, 3)))
    T = rng.standard_normal((2, 3))
    TS = linear_image(T, S)
    for _ in range(50):
        d = rng.standard_normal(2)
        assert support(TS, d) == pytest.approx(support(S, T.T @ d), abs=1e-10)


def test_scale_support_homogeneity():
    rng = np.random.default_rng(3)
    S = ConvexSet(rng.standard_normal((5, 2)))
    half = scale(S, 0.5)
    for _ in range(20):
        d = rng.standard_normal(2)
        assert support(half, d) == pytest.approx(0.5 * support(S, d), abs=1e-12)


def test_contains_point_box():
    S = Box([-1.0, -1.0], [1.0, 1.0]).to_set()
    assert contains_point(S, [0.5, -0.5])
    assert contains_point(S, [1.0, 1.0])
    assert not contains_point(S, [1.1, 0.0])
    assert not contains_point(S, [0.0, -1.5])


def test_contains_point_hull_of_generators():
    S = ConvexSet(np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, -1.0]]))
    assert contains_point(S, [0.0, 0.0])
    assert contains_point(S, [0.5, 0.5])
    assert not contains_point(S, [0.9, 0.9])


def test_dimension_mismatches_raise():
    S = ConvexSet(np.zeros((1, 2)))
    with pytest.raises(ValueError):
        support(S, [1.0])
    with pytest.raises(ValueError):
        contains_point(S, [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        minkowski_sum(S, ConvexSet(np.zeros((1, 3))))
    with pytest.raises(ValueError):
        linear_image(np.zeros((2, 3)), S)


def test_coupling_set_single_neighbour_closed_form():
    X = {2: Box([-2.0], [2.0])}
    U = {2: Box([-4.0], [4.0])}
    Aij = np.array([[0.5]])
    Bij = np.array([[0.25]])
    W = coupling_disturbance_set({2: (Aij, Bij)}, X, U, {2: 1.0}, {2: 1.0}, 1)
    # 0.5*[-2,2] + 0.25*[-4,4] = [-2, 2]
    assert support(W, [1.0]) == pytest.approx(2.0)
    assert support(W, [-1.0]) == pytest.approx(2.0)


def test_coupling_set_scaling_gives_planned_unplanned_split():
    X = {2: Box([-2.0], [2.0]), 3: Box([-1.0], [1.0])}
    U = {2: Box([-4.0], [4.0]), 3: Box([-1.0], [1.0])}
    couplings = {2: (np.array([[0.5]]), np.array([[0.25]])),
                 3: (np.array([[1.0]]), np.array([[0.0]]))}
    full = coupling_disturbance_set(couplings, X, U, {2: 1.0, 3: 1.0},
                                    {2: 1.0, 3: 1.0}, 1)
    a = {2: 0.9, 3: 0.8}
    planned = coupling_disturbance_set(couplings, X, U, a, a, 1)
    unplanned = coupling_disturbance_set(couplings, X, U,
                                         {j: 1.0 - a[j] for j in a},
                                         {j: 1.0 - a[j] for j in a}, 1)
    rng = np.random.default_rng(4)
    for _ in range(100):
        d = rng.standard_normal(1)
        assert support(planned, d) + support(unplanned, d) == pytest.approx(
            support(full, d), abs=1e-10)


def test_coupling_set_unknown_neighbour():
    with pytest.raises(KeyError):
        coupling_disturbance_set({9: (np.eye(1), np.eye(1))}, {}, {},
                                 {9: 1.0}, {9: 1.0}, 1)
