"""Optimal acquisition: curvature recursion, schedules, costs, oracles."""

import numpy as np
import pytest

from kylelab.errors import InvalidInput, LengthMismatch, NonPositiveMu
from kylelab.execution import (
    ImpactPath,
    expected_cost,
    optimal_schedule,
    schedule_from_thetas,
    simulate_cost,
    solve_mu,
)


class TestSolveMu:
    def test_single_period_terminal_value(self):
        mu = solve_mu(ImpactPath(lambdas=[1.0]))
        assert mu[0] == pytest.approx(1.0)

    def test_two_period_hand_value(self):
        # mu_2 = 1, mu_1 = 1 - 1/(4*1) = 0.75
        mu = solve_mu(ImpactPath(lambdas=[1.0, 1.0]))
        assert mu.tolist() == pytest.approx([0.75, 1.0])

    def test_nonpositive_mu_is_an_error(self):
        # Large early impact against tiny terminal curvature drives mu_1 < 0.
        path = ImpactPath(lambdas=[10.0, 0.1])
        with pytest.raises(NonPositiveMu) as exc:
            solve_mu(path)
        assert exc.value.step == 1

    def test_bad_horizon_rejected(self):
        with pytest.raises(InvalidInput):
            solve_mu(ImpactPath(lambdas=[1.0]), N=2)


class TestOptimalSchedule:
    def test_single_period_buys_everything(self):
        s = optimal_schedule(ImpactPath(lambdas=[2.0]), Q=350.0)
        assert s.theta.tolist() == [1.0]
        assert s.x.tolist() == [350.0]
        assert s.Q_path.tolist() == [0.0]

    @pytest.mark.parametrize("N", [2, 5, 20, 50])
    def test_constant_impact_risk_neutral_is_twap(self, N):
        # alpha = 0, phi = 0, constant lambda: theta_n = 1/(N - n + 1).
        s = optimal_schedule(ImpactPath(lambdas=np.full(N, 1.7)), Q=1000.0)
        expected = 1.0 / (N - np.arange(1, N + 1) + 1)
        assert np.max(np.abs(s.theta - expected)) < 1e-12

    def test_two_period_even_split(self):
        s = optimal_schedule(ImpactPath(lambdas=[1.0, 1.0]), Q=100.0)
        assert s.theta[0] == pytest.approx(0.5)
        assert s.x.tolist() == pytest.approx([50.0, 50.0])

    def test_front_loading_increases_with_risk_aversion(self):
        thetas = [
            optimal_schedule(ImpactPath(lambdas=np.ones(10), phi=phi), 100.0).theta[0]
            for phi in (0.0, 0.1, 1.0, 10.0)
        ]
        assert all(a < b for a, b in zip(thetas, thetas[1:]))
        assert thetas[-1] > 0.9  # extreme risk aversion buys almost everything now

    def test_exact_acquisition(self):
        rng = np.random.default_rng(0)
        done = 0
        while done < 50:
            N = int(rng.integers(1, 12))
            path = ImpactPath(lambdas=rng.uniform(0.2, 2.0, N),
                              alpha=float(rng.uniform(0, 1)),
                              phi=float(rng.uniform(0, 0.5)))
            try:
                s = optimal_schedule(path, Q=float(rng.uniform(10, 2000)))
            except NonPositiveMu:
                continue  # draw again: only valid paths have an optimum
            assert s.Q_path[-1] == 0.0  # sequential inventory ends exactly empty
            assert s.theta[-1] == 1.0
            done += 1

    def test_noise_variances_do_not_change_the_schedule(self):
        lams = [0.5, 1.5, 1.0]
        a = optimal_schedule(ImpactPath(lambdas=lams, phi=0.1), 100.0)
        b = optimal_schedule(
            ImpactPath(lambdas=lams, phi=0.1, sigma_u_sq=400.0, sigma_eps_sq=25.0),
            100.0,
        )
        assert np.array_equal(a.x, b.x)


class TestExpectedCost:
    def test_zero_inventory_costs_nothing(self):
        assert expected_cost(ImpactPath(lambdas=[1.0, 1.0]), Q=0.0, p_tilde0=10.0) == 0.0

    def test_single_period_hand_value(self):
        # p~0 * Q + mu_1 * Q^2 = 10*2 + 1*4 = 24
        assert expected_cost(ImpactPath(lambdas=[1.0]), Q=2.0, p_tilde0=10.0) == 24.0

    def test_matches_deterministic_simulation_at_optimum(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            N = int(rng.integers(1, 8))
            path = ImpactPath(lambdas=rng.uniform(0.2, 2.0, N),
                              alpha=float(rng.uniform(0, 1)),
                              phi=float(rng.uniform(0, 0.3)))
            Q = float(rng.uniform(1, 100))
            p0 = float(rng.uniform(10, 100))
            s = optimal_schedule(path, Q)
            sim = simulate_cost(path, s.x, Q, p0)[0]
            assert sim == pytest.approx(expected_cost(path, Q, p_tilde0=p0), rel=1e-10)

    def test_mc_mean_matches_plan(self):
        # Costs are linear in the noise, so the Monte Carlo mean estimates the
        # planned expectation.
        path = ImpactPath(lambdas=[1.0, 2.0, 1.5], alpha=0.4, phi=0.05,
                          sigma_u_sq=25.0, sigma_eps_sq=9.0)
        s = optimal_schedule(path, 10.0)
        costs = simulate_cost(path, s.x, 10.0, 100.0, np.random.default_rng(1), 40_000)
        se = costs.std() / np.sqrt(len(costs))
        assert abs(costs.mean() - expected_cost(path, 10.0, p_tilde0=100.0)) < 3 * se


class TestOptimality:
    def test_beats_single_theta_perturbations(self):
        # Perturb one fraction and renormalize by the forced final fill; the
        # optimal schedule must cost no more, within Monte Carlo error.
        rng = np.random.default_rng(4)
        for _ in range(10):
            N = int(rng.integers(2, 6))
            path = ImpactPath(lambdas=rng.uniform(0.3, 2.0, N),
                              alpha=float(rng.uniform(0, 1)),
                              phi=float(rng.uniform(0, 0.2)),
                              sigma_u_sq=25.0)
            Q, p0 = 50.0, 200.0
            s = optimal_schedule(path, Q)
            noise_rng = np.random.default_rng(77)
            base = simulate_cost(path, s.x, Q, p0, noise_rng, 4000)
            for n in range(N - 1):
                for eps in (-0.05, 0.05):
                    theta = s.theta.copy()
                    theta[n] = np.clip(theta[n] + eps, 0.0, 1.0)
                    theta[-1] = 1.0
                    x = schedule_from_thetas(theta, Q)
                    pert = simulate_cost(path, x, Q, p0, np.random.default_rng(77), 4000)
                    diff = pert - base
                    se = diff.std() / np.sqrt(len(diff))
                    assert diff.mean() >= -3.0 * se

    def test_grid_search_cannot_beat_recursion_small_case(self):
        # Coarse sanity variant of the acceptance brute force (step 0.1).
        path = ImpactPath(lambdas=[1.0, 0.6, 1.4], alpha=0.5, phi=0.03)
        Q, p0 = 20.0, 150.0
        best = np.inf
        for t1 in np.arange(0.0, 1.0001, 0.1):
            for t2 in np.arange(0.0, 1.0001, 0.1):
                x = schedule_from_thetas([t1, t2, 1.0], Q)
                best = min(best, simulate_cost(path, x, Q, p0)[0])
        opt = expected_cost(path, Q, p_tilde0=p0)
        assert best >= opt - 1e-9
        assert best <= opt * 1.05  # grid of 0.1 lands close to the optimum


class TestValidation:
    def test_alpha_outside_unit_interval_rejected(self):
        with pytest.raises(InvalidInput):
            ImpactPath(lambdas=[1.0], alpha=1.5)

    def test_empty_lambdas_rejected(self):
        with pytest.raises(InvalidInput):
            ImpactPath(lambdas=[])

    def test_simulation_length_checked(self):
        with pytest.raises(LengthMismatch):
            simulate_cost(ImpactPath(lambdas=[1.0]), [1.0, 1.0], 2.0, 10.0)


class TestCsv:
    def test_schedule_serialization(self):
        s = optimal_schedule(ImpactPath(lambdas=[1.0, 1.0]), Q=100.0)
        lines = s.to_csv().strip().split("\n")
        assert lines[0] == "n,mu,theta,x,Q_remaining"
        assert len(lines) == 3
        n, mu, theta, x, q_rem = lines[1].split(",")
        assert (int(n), float(theta), float(x)) == (1, 0.5, 50.0)
