import numpy as np
import pytest

from matchmarket.fair import brute_force_fair, max_weight_assignment, solve_fair
from matchmarket.market import make_instance


class TestSolveFair:
    def test_identity(self):
        sol = solve_fair(make_instance(np.eye(3)))
        assert sol.value == pytest.approx(3.0)
        np.testing.assert_allclose(sol.matching.u, 1.0)

    def test_rectangular(self):
        sol = solve_fair(make_instance([[0.4, 1.0]]))
        assert sol.value == pytest.approx(1.0)
        assert sol.assignment.row_match[0] == 1

    def test_more_rows_than_cols(self):
        sol = solve_fair(make_instance([[0.9], [0.8], [0.7]]))
        assert sol.value == pytest.approx(0.9)
        assert list(sol.assignment.row_match).count(-1) == 2

    def test_zero_matrix_unmatched(self):
        sol = solve_fair(make_instance(np.zeros((3, 3))))
        assert sol.value == 0.0
        assert all(j == -1 for j in sol.assignment.row_match)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(123)
        for _ in range(200):
            m = int(rng.integers(1, 7))
            n = int(rng.integers(1, 7))
            inst = make_instance(rng.random((m, n)))
            assert solve_fair(inst).value == pytest.approx(
                brute_force_fair(inst), abs=1e-9)

    def test_transpose_invariance(self):
        rng = np.random.default_rng(7)
        w = rng.random((3, 5))
        a = solve_fair(make_instance(w)).value
        b = solve_fair(make_instance(w.T)).value
        assert a == pytest.approx(b, abs=1e-12)

    def test_deterministic(self):
        w = np.full((4, 4), 0.5)  # fully degenerate ties
        a = solve_fair(make_instance(w))
        b = solve_fair(make_instance(w))
        np.testing.assert_array_equal(a.assignment.row_match,
                                      b.assignment.row_match)


class TestDuals:
    def test_certificate(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            g = rng.random((5, 4)) * 2 - 0.5  # includes negative entries
            res = max_weight_assignment(g)
            assert res.beta.min() >= -1e-9
            assert res.sigma.min() >= -1e-9
            slack = res.beta[:, None] + res.sigma[None, :] - g
            assert slack.min() >= -1e-9
            # strong duality: dual objective equals primal value
            x = res.x_matrix(g.shape)
            used_rows = x.sum(axis=1)
            used_cols = x.sum(axis=0)
            comp = (res.beta * (1 - used_rows)).sum() + \
                (res.sigma * (1 - used_cols)).sum()
            assert res.beta.sum() + res.sigma.sum() - comp == pytest.approx(
                res.value, abs=1e-8)

    def test_negative_edges_never_used(self):
        res = max_weight_assignment(np.array([[-0.5, -0.2]]))
        assert res.row_match[0] == -1
        assert res.value == 0.0


class TestBruteForce:
    def test_limits(self):
        with pytest.raises(ValueError):
            brute_force_fair(make_instance(np.ones((9, 9)) * 0.5))

    def test_small_exact(self):
        inst = make_instance([[0.8, 0.6], [0.7, 0.9]])
        assert brute_force_fair(inst) == pytest.approx(1.7)
