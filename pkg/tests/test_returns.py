import numpy as np
import pytest

from matchmarket.returns import (
    GRID_NODES,
    ReturnModel,
    ReturnModelError,
    argmax_pi_competition,
    check_assumptions,
    eval_q,
    eval_q_prime,
    grid,
    parametric,
    pi_competition,
    pi_monopoly,
    pi_monopoly_prime,
    q_peak,
)

ALPHAS = [0.0, 0.25, 0.5, 0.75]


class TestModels:
    def test_parametric_validation(self):
        parametric(0.0)
        parametric(0.999)
        with pytest.raises(ReturnModelError):
            parametric(1.0)
        with pytest.raises(ReturnModelError):
            parametric(-0.1)

    def test_grid_validation(self):
        grid(np.linspace(0, 1, GRID_NODES) * 0.5)
        with pytest.raises(ReturnModelError):
            grid(np.zeros(GRID_NODES - 1))
        with pytest.raises(ReturnModelError):
            grid(np.full(GRID_NODES, 1.5))

    def test_grid_endpoints_pinned(self):
        g = grid(np.full(GRID_NODES, 0.5))
        assert g.values[0] == 0.0
        assert g.values[-1] == 0.0

    def test_json_round_trip(self):
        for model in (parametric(0.3), grid(np.linspace(0, 1, GRID_NODES) * (1 - np.linspace(0, 1, GRID_NODES)))):
            back = ReturnModel.from_json(model.to_json())
            assert back.cache_key() == model.cache_key()


class TestEvalQ:
    def test_known_values(self):
        m = parametric(0.0)
        assert eval_q(m, 0.5) == pytest.approx(0.25)
        assert eval_q(m, 0.0) == 0.0
        assert eval_q(m, 1.0) == 0.0

    def test_alpha_changes_shape(self):
        # q(u) = u (1-u)^(1-alpha): larger alpha decays less before u=1
        assert eval_q(parametric(0.5), 0.5) == pytest.approx(0.5 * 0.5**0.5)

    def test_domain_check(self):
        with pytest.raises(ReturnModelError):
            eval_q(parametric(0.0), 1.5)

    def test_grid_interpolation(self):
        vals = np.zeros(GRID_NODES)
        vals[10] = 0.8  # node u = 0.5
        g = grid(vals)
        assert eval_q(g, 0.5) == pytest.approx(0.8)
        assert eval_q(g, 0.475) == pytest.approx(0.4)


class TestDerivatives:
    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_matches_central_differences(self, alpha):
        m = parametric(alpha)
        us = np.linspace(0.005, 0.95, 99)
        h = 1e-6
        numeric = (eval_q(m, us + h) - eval_q(m, us - h)) / (2 * h)
        np.testing.assert_allclose(eval_q_prime(m, us), numeric, atol=1e-5)

    def test_slope_at_zero_is_one(self):
        for alpha in ALPHAS:
            assert eval_q_prime(parametric(alpha), 0.0) == pytest.approx(1.0)

    def test_grid_derivative(self):
        nodes = np.linspace(0, 1, GRID_NODES)
        g = grid(nodes * (1 - nodes))
        # piecewise-linear: slope between first two nodes
        expected = (g.values[1] - g.values[0]) / 0.05
        assert eval_q_prime(g, 0.025) == pytest.approx(expected, abs=1e-6)


class TestStationary:
    def test_pi_monopoly_value(self):
        assert pi_monopoly(parametric(0.0), 0.5) == pytest.approx(0.2)

    def test_pi_monopoly_prime_matches_differences(self):
        m = parametric(0.25)
        us = np.linspace(0.01, 0.9, 50)
        h = 1e-6
        numeric = (pi_monopoly(m, us + h) - pi_monopoly(m, us - h)) / (2 * h)
        np.testing.assert_allclose(pi_monopoly_prime(m, us), numeric, atol=1e-5)

    def test_pi_competition_below_monopoly(self):
        m = parametric(0.0)
        us = np.linspace(0.0, 1.0, 101)
        for eps in (0.01, 0.1, 0.5, 1.0):
            assert np.all(pi_competition(m, us, eps) <= pi_monopoly(m, us) + 1e-12)

    def test_pi_competition_eps_validation(self):
        with pytest.raises(ReturnModelError):
            pi_competition(parametric(0.0), 0.5, 0.0)


class TestAssumptions:
    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_parametric_family_passes(self, alpha):
        rep = check_assumptions(parametric(alpha))
        assert rep.all_ok
        assert rep.max_second_diff < 0.0

    def test_non_concave_grid_fails_a3(self):
        vals = np.zeros(GRID_NODES)
        vals[5] = 0.5
        vals[15] = 0.5
        rep = check_assumptions(grid(vals))
        assert not rep.a3_ok

    def test_grid_size_validation(self):
        with pytest.raises(ReturnModelError):
            check_assumptions(parametric(0.0), grid_size=5)


class TestPeaks:
    def test_q_peak_alpha0(self):
        assert q_peak(parametric(0.0)) == pytest.approx(0.5, abs=1e-8)

    def test_argmax_pi_competition_example(self):
        # eps = -q(0.8)^2 / q'(0.8) = 0.0256 / 0.6 for q = u(1-u)
        u = argmax_pi_competition(parametric(0.0), 0.0256 / 0.6)
        assert u == pytest.approx(0.8, abs=1e-4)

    def test_argmax_monotone_in_eps(self):
        m = parametric(0.0)
        us = [argmax_pi_competition(m, e) for e in (0.1, 0.01, 0.001, 1e-4)]
        assert all(b > a for a, b in zip(us, us[1:]))
        assert us[-1] > 0.98

    def test_argmax_is_actual_maximizer(self):
        m = parametric(0.25)
        for eps in (0.05, 0.005):
            star = argmax_pi_competition(m, eps)
            us = np.linspace(0.0, 1.0, 2001)
            best = us[int(np.argmax(pi_competition(m, us, eps)))]
            assert abs(star - best) < 1e-3

    def test_argmax_requires_concavity(self):
        vals = np.zeros(GRID_NODES)
        vals[5] = 0.5
        vals[15] = 0.5
        with pytest.raises(ReturnModelError):
            argmax_pi_competition(grid(vals), 0.1)
