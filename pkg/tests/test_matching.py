import numpy as np
import pytest

from tests.oracles import brute_force_assignment
from tracking.matching import (
    FORBIDDEN,
    cosine_distance,
    cosine_distance_matrix,
    gated_matches,
    hungarian,
    iou,
    iou_matrix,
)


class TestIou:
    def test_identical(self):
        assert iou([1.0, 2.0, 3.0, 4.0], [1.0, 2.0, 3.0, 4.0]) == 1.0

    def test_disjoint(self):
        assert iou([0.0, 0.0, 1.0, 1.0], [5.0, 5.0, 1.0, 1.0]) == 0.0

    def test_half_shift(self):
        assert iou([0.0, 0.0, 2.0, 2.0], [1.0, 0.0, 2.0, 2.0]) == pytest.approx(1 / 3)

    def test_matrix_matches_pairwise(self):
        rng = np.random.default_rng(0)
        a = np.c_[rng.uniform(0, 10, (4, 2)), rng.uniform(1, 5, (4, 2))]
        b = np.c_[rng.uniform(0, 10, (3, 2)), rng.uniform(1, 5, (3, 2))]
        want = [[iou(x, y) for y in b] for x in a]
        np.testing.assert_allclose(iou_matrix(a, b), want, rtol=1e-12)

    def test_empty_matrix(self):
        assert iou_matrix(np.zeros((0, 4)), np.ones((2, 4))).shape == (0, 2)


class TestCosine:
    def test_identical_opposite_orthogonal(self):
        e = np.array([0.6, 0.8])
        assert cosine_distance(e, e) == pytest.approx(0.0, abs=1e-12)
        assert cosine_distance(e, -e) == pytest.approx(2.0)
        assert cosine_distance(e, np.array([0.8, -0.6])) == pytest.approx(1.0)

    def test_degenerate(self):
        assert cosine_distance(np.zeros(3), np.ones(3)) == 1.0

    def test_matrix_matches_pairwise(self):
        rng = np.random.default_rng(1)
        a, b = rng.standard_normal((3, 5)), rng.standard_normal((4, 5))
        b[2] = 0.0
        want = [[cosine_distance(x, y) for y in b] for x in a]
        np.testing.assert_allclose(cosine_distance_matrix(a, b), want, rtol=1e-12, atol=1e-12)


class TestHungarian:
    def test_diagonal(self):
        cost = np.ones((3, 3)) - np.eye(3)
        assert hungarian(cost) == [(0, 0), (1, 1), (2, 2)]

    def test_two_by_two(self):
        cost = np.array([[1.0, 2.0], [2.0, 4.0]])
        pairs = hungarian(cost)
        assert pairs == [(0, 1), (1, 0)]
        assert sum(cost[r, c] for r, c in pairs) == 4.0

    def test_forbidden_never_used(self):
        cost = np.array([[FORBIDDEN, 1.0], [FORBIDDEN, 0.5]])
        assert hungarian(cost) == [(1, 1)]

    def test_prefers_more_pairs(self):
        cost = np.array([[5.0, 0.0], [FORBIDDEN, 1.0]])
        assert hungarian(cost) == [(0, 0), (1, 1)]

    def test_all_forbidden_and_empty(self):
        assert hungarian(np.full((2, 2), FORBIDDEN)) == []
        assert hungarian(np.zeros((0, 3))) == []

    def test_matches_brute_force(self):
        for seed in range(1000):
            rng = np.random.default_rng(seed)
            n, m = rng.integers(1, 8, size=2)
            if seed % 2:
                cost = rng.uniform(-1.0, 3.0, (n, m))
            else:
                cost = rng.integers(0, 4, (n, m)).astype(np.float64)
            cost[rng.random((n, m)) < rng.uniform(0.0, 0.8)] = FORBIDDEN
            pairs = hungarian(cost)
            count, total = brute_force_assignment(cost)
            assert len(pairs) == count, seed
            assert sum(cost[r, c] for r, c in pairs) == pytest.approx(total, abs=1e-9), seed
            assert len({r for r, _ in pairs}) == len({c for _, c in pairs}) == len(pairs), seed
            assert all(np.isfinite(cost[r, c]) for r, c in pairs), seed


class TestGatedMatches:
    def test_threshold_forbids(self):
        cost = np.array([[0.2, 0.9], [0.8, 0.6]])
        matches, rows, cols = gated_matches(cost, 0.5)
        assert matches == [(0, 0)]
        assert rows == [1]
        assert cols == [1]

    def test_threshold_inclusive(self):
        matches, _, _ = gated_matches(np.array([[0.5]]), 0.5)
        assert matches == [(0, 0)]
