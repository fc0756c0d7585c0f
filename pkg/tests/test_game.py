"""The trading game: resets, action maps, rewards, invariants, serialization."""

import io
import math

import numpy as np
import pytest

from kylelab import market
from kylelab.errors import ActionOutOfDomain, EpisodeFinished, InvalidConfig
from kylelab.game import (
    GameConfig,
    LobMode,
    MarketGame,
    PolicyParam,
    ResetMode,
    Variant,
    implied_coefficients,
    read_traces_csv,
    run_episode,
    squash_lambda,
    write_traces_csv,
)


def config(**kw):
    defaults = dict(variant=Variant.KYLE_ONLY, num_market_makers=2, horizon=20, seed=0)
    defaults.update(kw)
    return GameConfig(**defaults)


def lam_raw(lam, cfg):
    """Raw maker action whose squashed value equals ``lam``."""
    return cfg.lambda_max * math.atanh(lam / cfg.lambda_max)


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kw",
        [
            {"horizon": 0},
            {"num_market_makers": 0},
            {"price_cap_fraction": 1.2},
            {"theta_bounds": (1.0, 0.0)},
            {"terminal_penalty": 0.005},  # must exceed risk aversion
            {"mean_reversion": 1.5},
            {"mu_v": -5.0},
            {"lambda_floor": 0.0},
        ],
    )
    def test_invalid_configs_rejected(self, kw):
        with pytest.raises(InvalidConfig):
            config(**kw).validate()

    def test_noise_scaling_flag(self):
        assert config(horizon=5).sigma_u_step == 50.0
        scaled = config(horizon=5, scale_noise_by_horizon=True)
        assert scaled.sigma_u_step == pytest.approx(50.0 * math.sqrt(20.0 / 5.0))
        neutral = config(horizon=20, scale_noise_by_horizon=True)
        assert neutral.sigma_u_step == pytest.approx(50.0)


class TestReset:
    def test_eval_up_fixes_price_and_bounds(self):
        env = MarketGame(config(mu_v=1000.0))
        env.reset(ResetMode.EVAL_UP)
        assert env.v == 1000.0
        assert env.p0 == 1300.0
        assert env.price_bounds == (500.0, 1500.0)

    def test_eval_down_opens_below(self):
        env = MarketGame(config(mu_v=1000.0))
        env.reset("down")
        assert env.p0 == 700.0

    def test_degenerate_prior_fixes_fundamental(self):
        env = MarketGame(config(sigma_v=0.0))
        for seed in range(5):
            env.reset("train", rng=np.random.default_rng(seed))
            assert env.v == 1000.0

    def test_training_draw_inside_band(self):
        env = MarketGame(config())
        for seed in range(20):
            env.reset("train", rng=np.random.default_rng(seed))
            lo, hi = env.price_bounds
            assert lo <= env.p0 <= hi
            assert lo == pytest.approx(0.5 * env.v)
            assert hi == pytest.approx(1.5 * env.v)

    def test_all_roles_observed_at_reset(self):
        env = MarketGame(config(variant=Variant.FULL))
        obs = env.reset("down")
        assert set(obs) == {"informed", "liquidity", "maker"}
        assert obs["maker"].shape == (2, env.config.observation_dim("maker"))


class TestLinearActionMap:
    def test_informed_order_scales_mispricing(self):
        # Open 30% below a fundamental of 333.33 for a gap of ~100 cents;
        # a coefficient of 2 then orders ~200 units.
        cfg = config(mu_v=1000.0 / 3.0, sigma_u=50.0)
        env = MarketGame(cfg)
        env.reset("down")
        gap = env.v - env.p0
        env.submit_orders({"informed": 2.0})
        env.submit_quotes([lam_raw(0.5, cfg)] * 2)
        assert env.trace.x_it[0] == pytest.approx(2.0 * gap)
        assert env.trace.x_it[0] == pytest.approx(200.0, rel=1e-9)

    def test_informed_order_capped(self):
        env = MarketGame(config())
        env.reset("down")  # gap = 300
        env.submit_orders({"informed": 100.0})
        env.submit_quotes([0.1, 0.1])
        assert env.trace.x_it[0] == pytest.approx(10.0 * 50.0)  # 10 sigma_u cap

    def test_maker_quote_prior_plus_impact(self):
        # sigma_u = 0 and a chosen coefficient make the flow exactly -100.
        cfg = config(sigma_u=0.0)
        env = MarketGame(cfg)
        env.reset("down")  # prior 700, v 1000, gap 300
        env.submit_orders({"informed": -1.0 / 3.0})
        result = env.submit_quotes([lam_raw(0.5, cfg)] * 2)
        q = env.trace.q_total[0]
        assert q == pytest.approx(-100.0, rel=1e-9)
        assert env.trace.quotes[0, 0] == pytest.approx(700.0 + 0.5 * q, rel=1e-9)
        assert result.step == 1

    def test_liquidity_full_acquisition_step(self):
        cfg = config(variant=Variant.FULL, target_inventory=350.0)
        env = MarketGame(cfg)
        env.reset("down")
        env.submit_orders({"informed": 0.0, "liquidity": 1.0})
        env.submit_quotes([0.5, 0.5])
        assert env.trace.x_lt[0] == pytest.approx(350.0)
        assert env.q_remaining == 0.0

    def test_theta_clipped_to_bounds(self):
        cfg = config(variant=Variant.LT_VS_MMS, target_inventory=100.0)
        env = MarketGame(cfg)
        env.reset("down")
        env.submit_orders({"liquidity": 3.7})
        env.submit_quotes([0.5, 0.5])
        assert env.trace.x_lt[0] == pytest.approx(100.0)

    def test_lambda_squash_band(self):
        cfg = config()
        assert abs(squash_lambda(0.0, cfg)) == cfg.lambda_floor
        assert squash_lambda(1e9, cfg) <= cfg.lambda_max
        assert squash_lambda(-1e9, cfg) >= -cfg.lambda_max
        assert abs(squash_lambda(1e-9, cfg)) == cfg.lambda_floor


class TestNonlinearActionMap:
    def test_raw_outputs_are_order_and_quote(self):
        cfg = config(policy_param=PolicyParam.NONLINEAR, sigma_u=0.0)
        env = MarketGame(cfg)
        env.reset("down")
        env.submit_orders({"informed": 200.0})
        env.submit_quotes([810.0, 790.0])
        assert env.trace.x_it[0] == 200.0
        assert env.trace.quotes[0].tolist() == [810.0, 790.0]

    def test_quotes_clamped_into_band(self):
        cfg = config(policy_param=PolicyParam.NONLINEAR, sigma_u=0.0)
        env = MarketGame(cfg)
        env.reset("down")
        env.submit_orders({"informed": 10.0})
        env.submit_quotes([5000.0, 100.0])
        assert env.trace.quotes[0].tolist() == [1500.0, 500.0]

    def test_implied_coefficients_recovered(self):
        cfg = config(policy_param=PolicyParam.NONLINEAR, sigma_u=0.0, horizon=2)
        env = MarketGame(cfg)
        env.reset("down")  # prior 700, v 1000: gap 100 after scaling below
        env.submit_orders({"informed": 200.0})  # q = 200
        env.submit_quotes([700.0 + 0.5 * 200.0] * 2)
        env.submit_orders({"informed": 0.0})  # q = 0: denominators vanish
        env.submit_quotes([800.0, 800.0])
        beta_hat, lambda_hat = implied_coefficients(env.trace)
        assert beta_hat[0] == pytest.approx(200.0 / (1000.0 - 700.0))
        assert lambda_hat[0, 0] == pytest.approx(0.5)
        assert math.isnan(lambda_hat[1, 0])

    def test_zero_gap_beta_missing(self):
        cfg = config(policy_param=PolicyParam.NONLINEAR, sigma_u=0.0, horizon=1,
                     mu_v=1000.0)
        env = MarketGame(cfg)
        env.reset("train", rng=np.random.default_rng(0))
        # Force the degenerate no-mispricing state (white box: the trace
        # snapshot of v/p0 must follow the override).
        env.v = env.p0 = env._vwap_prev = 1000.0
        env._trace.v = env._trace.p0 = 1000.0
        env.submit_orders({"informed": 50.0})
        env.submit_quotes([1010.0, 1010.0])
        beta_hat, _ = implied_coefficients(env.trace)
        assert math.isnan(beta_hat[0])


class TestStepRewards:
    def test_symmetric_quotes_zero_maker_rewards(self):
        env = MarketGame(config())
        env.reset("down")
        env.submit_orders({"informed": 0.5})
        result = env.submit_quotes([0.8, 0.8])
        assert result.rewards["maker"].sum() == pytest.approx(0.0, abs=1e-12)

    def test_no_flow_no_rewards(self):
        env = MarketGame(config(sigma_u=0.0))
        env.reset("down")
        env.submit_orders({"informed": 0.0})
        result = env.submit_quotes([0.3, 0.9])
        assert env.trace.q_total[0] == 0.0
        assert np.all(env.trace.allocations[0] == 0.0)
        assert np.all(result.rewards["maker"] == 0.0)
        assert result.rewards["informed"] == 0.0

    def test_informed_reward_in_dollars(self):
        cfg = config(sigma_u=0.0)
        env = MarketGame(cfg)
        env.reset("down")
        env.submit_orders({"informed": 1.0})  # x = 300
        env.submit_quotes([lam_raw(0.5, cfg)] * 2)
        vw = env.trace.vwap[0]
        assert env.trace.reward_it[0] == pytest.approx((1000.0 - vw) * 300.0 / 100.0)

    def test_terminal_penalty_vanishes_on_full_fill(self):
        cfg = config(variant=Variant.LT_VS_MMS, horizon=2, sigma_u=0.0,
                     target_inventory=100.0)
        env = MarketGame(cfg)
        env.reset("down")
        env.submit_orders({"liquidity": 0.5})
        env.submit_quotes([0.5, 0.5])
        env.submit_orders({"liquidity": 1.0})  # buys the remaining 50
        result = env.submit_quotes([0.5, 0.5])
        vw = env.trace.vwap[1]
        q_pre = 50.0
        expected = -(50.0 * vw + cfg.risk_aversion * q_pre**2) / 100.0
        assert result.rewards["liquidity"] == pytest.approx(expected)

    def test_terminal_penalty_charged_on_shortfall(self):
        cfg = config(variant=Variant.LT_VS_MMS, horizon=1, sigma_u=0.0,
                     target_inventory=100.0)
        env = MarketGame(cfg)
        env.reset("down")
        env.submit_orders({"liquidity": 0.0})
        result = env.submit_quotes([0.5, 0.5])
        expected = -(cfg.risk_aversion * 100.0**2 + cfg.terminal_penalty * 100.0**2) / 100.0
        assert result.rewards["liquidity"] == pytest.approx(expected)


class TestEpisodeProtocol:
    def test_phase_errors(self):
        env = MarketGame(config(horizon=1))
        env.reset("down")
        with pytest.raises(EpisodeFinished):
            env.submit_quotes([0.1, 0.1])  # quotes before orders
        env.submit_orders({"informed": 0.0})
        with pytest.raises(EpisodeFinished):
            env.submit_orders({"informed": 0.0})  # orders twice
        env.submit_quotes([0.1, 0.1])
        with pytest.raises(EpisodeFinished):
            env.submit_orders({"informed": 0.0})  # episode over

    def test_nonfinite_actions_rejected(self):
        env = MarketGame(config())
        env.reset("down")
        with pytest.raises(ActionOutOfDomain):
            env.submit_orders({"informed": float("nan")})
        env.submit_orders({"informed": 0.0})
        with pytest.raises(ActionOutOfDomain):
            env.submit_quotes([float("inf"), 0.1])

    def test_wrong_maker_count_rejected(self):
        env = MarketGame(config())
        env.reset("down")
        env.submit_orders({"informed": 0.0})
        with pytest.raises(ActionOutOfDomain):
            env.submit_quotes([0.1])


class TestRunEpisode:
    POLICIES = {"informed": lambda o: 0.5, "maker": lambda o: 0.8}

    def test_trace_has_horizon_rows(self):
        trace = run_episode(self.POLICIES, config(horizon=20), "down",
                            rng=np.random.default_rng(0))
        assert trace.N == 20
        assert len(trace.vwap) == 20

    def test_same_seed_identical_traces(self):
        a = run_episode(self.POLICIES, config(), "train", rng=np.random.default_rng(5))
        b = run_episode(self.POLICIES, config(), "train", rng=np.random.default_rng(5))
        assert np.array_equal(a.vwap, b.vwap)
        assert np.array_equal(a.u, b.u)
        assert a.v == b.v and a.p0 == b.p0

    def test_per_maker_policies(self):
        policies = {"informed": lambda o: 0.5,
                    "maker": [lambda o: 0.2, lambda o: 0.9]}
        trace = run_episode(policies, config(sigma_u=0.0), "down",
                            rng=np.random.default_rng(0))
        assert trace.quotes[0, 0] != trace.quotes[0, 1]


class TestInvariants:
    @pytest.mark.parametrize("variant", list(Variant))
    def test_maker_rewards_zero_sum_every_step(self, variant):
        cfg = config(variant=variant, num_market_makers=4)
        policies = {"informed": lambda o: 0.4, "liquidity": lambda o: 0.1,
                    "maker": lambda o: float(o[-1]) * 1e-3 + 0.3}
        trace = run_episode(policies, cfg, "train", rng=np.random.default_rng(2))
        assert np.max(np.abs(trace.reward_mm.sum(axis=1))) < 1e-6

    def test_inventory_accounting_exact(self):
        cfg = config(variant=Variant.FULL, target_inventory=1000.0)
        policies = {"informed": lambda o: 0.2, "liquidity": lambda o: 0.13,
                    "maker": lambda o: 0.5}
        trace = run_episode(policies, cfg, "down", rng=np.random.default_rng(3))
        q = cfg.target_inventory
        for n in range(trace.N):
            q = q - trace.x_lt[n]
            assert trace.q_remaining[n] == q  # bitwise: same subtraction order

    def test_vwap_recursion_pre_tick(self):
        cfg = config(variant=Variant.FULL, num_market_makers=3)
        policies = {"informed": lambda o: 0.4, "liquidity": lambda o: 0.05,
                    "maker": lambda o: 0.7}
        trace = run_episode(policies, cfg, "train", rng=np.random.default_rng(8))
        for n in range(1, trace.N + 1):
            quotes = [market.Quote(i, float(trace.quotes[n - 1, i]),
                                   float(trace.lam_eff[n - 1, i]))
                      for i in range(trace.M)]
            expected = trace.prior_vwap(n) + trace.q_total[n - 1] * \
                market.effective_lambda(quotes)
            assert trace.vwap[n - 1] == pytest.approx(expected, rel=1e-6)

    def test_full_game_with_idle_lt_reduces_to_kyle_only(self):
        maker = lambda o: 0.8  # noqa: E731
        kyle = run_episode({"informed": lambda o: 0.5, "maker": maker},
                           config(variant=Variant.KYLE_ONLY), "down",
                           rng=np.random.default_rng(7))
        full = run_episode({"informed": lambda o: 0.5, "liquidity": lambda o: 0.0,
                            "maker": maker},
                           config(variant=Variant.FULL), "down",
                           rng=np.random.default_rng(7))
        assert np.array_equal(kyle.vwap, full.vwap)
        assert np.array_equal(kyle.q_total, full.q_total)

    def test_information_firewall(self):
        # Global observations at step n must be reconstructible from the
        # trace prefix through n-1 plus the agent's private fields; makers
        # additionally see the current net flow (they quote after traders).
        cfg = config(variant=Variant.FULL, num_market_makers=3,
                     lob_mode=LobMode.EXCHANGE)
        policies = {"informed": lambda o: 0.4, "liquidity": lambda o: 0.07,
                    "maker": lambda o: 0.6}
        trace, observed = run_episode(policies, cfg, "down",
                                      rng=np.random.default_rng(1),
                                      collect_observations=True)
        p_min, p_max = 500.0, 1500.0
        for n in range(1, trace.N + 1):
            prior = trace.prior_vwap(n)
            expected_global = [market.clamp_and_tick(prior, p_min, p_max)]
            if n == 1:
                for _ in range(trace.M):
                    expected_global.extend((0.0, expected_global[0]))
            else:
                rows = sorted(
                    (1.0 / abs(trace.lam_eff[n - 2, i]), trace.quotes[n - 2, i])
                    for i in range(trace.M)
                )
                rows.sort(key=lambda r: r[1])
                for depth, price in rows:
                    expected_global.extend(
                        (min(depth, 1.0 / cfg.lambda_floor),
                         market.clamp_and_tick(price, p_min, p_max))
                    )
            got = observed[n - 1]
            g = len(expected_global)
            for role in ("informed", "liquidity"):
                assert got[role][:g].tolist() == pytest.approx(expected_global)
            assert got["maker"][0][:g].tolist() == pytest.approx(expected_global)
            # private tails
            assert got["informed"][g:].tolist() == [n * cfg.tau, trace.v]
            q_pre = cfg.target_inventory - trace.x_lt[:n - 1].sum()
            assert got["liquidity"][g:].tolist() == pytest.approx([n * cfg.tau, q_pre])
            assert got["maker"][0][g:].tolist() == pytest.approx(
                [n * cfg.tau, trace.q_total[n - 1]]
            )


class TestTraceCsv:
    def _traces(self, variant=Variant.FULL):
        cfg = config(variant=variant)
        policies = {"informed": lambda o: 0.4, "liquidity": lambda o: 0.06,
                    "maker": lambda o: 0.5}
        return [run_episode(policies, cfg, "down", rng=np.random.default_rng(s))
                for s in (0, 1)]

    def test_round_trip(self):
        traces = self._traces()
        buf = io.StringIO()
        write_traces_csv(traces, buf, manifest_hash="cafef00dcafe")
        buf.seek(0)
        back = read_traces_csv(buf)
        assert len(back) == 2
        for a, b in zip(traces, back):
            assert np.array_equal(a.vwap, b.vwap)
            assert np.array_equal(a.x_lt, b.x_lt)
            assert np.array_equal(a.quotes, b.quotes)
            assert a.p0 == b.p0 and a.v == b.v

    def test_manifest_comment_line(self):
        buf = io.StringIO()
        write_traces_csv(self._traces(), buf, manifest_hash="cafef00dcafe")
        assert buf.getvalue().startswith("# manifest: cafef00dcafe\n")

    def test_kyle_only_has_no_lt_columns(self):
        kyle = run_episode({"informed": lambda o: 0.4, "maker": lambda o: 0.5},
                           config(), "down", rng=np.random.default_rng(0))
        buf = io.StringIO()
        write_traces_csv([kyle], buf)
        header = buf.getvalue().splitlines()[0]
        assert "x_lt" not in header
        assert "reward_lt" not in header
        assert "Q_remaining" not in header
        assert "x_it" in header

    def test_write_is_deterministic(self):
        traces = self._traces()
        a, b = io.StringIO(), io.StringIO()
        write_traces_csv(traces, a, "ff")
        write_traces_csv(traces, b, "ff")
        assert a.getvalue() == b.getvalue()
