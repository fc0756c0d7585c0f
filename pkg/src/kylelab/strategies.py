"""Execution strategies for the liquidity trader and their comparison.

Five ways to run the acquisition against frozen informed/maker policies in
the full game: the jointly trained PPO policy, a trajectory-based VWAP
schedule built from reference episodes, an even TWAP split, the analytical
schedule fed by the Kyle-equilibrium impact path, and a PPO policy retrained
single-agent against the frozen opponents. Performance is implementation
shortfall: average fill price versus the opening price, normalized by the
opening price.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .equilibrium import KyleEquilibrium, solve_kyle
from .errors import InvalidInput, ZeroTotalVolume
from .execution import ImpactPath, optimal_schedule
from .game import ROLE_LIQUIDITY, EpisodeTrace, GameConfig, ResetMode, Variant
from .marl import evaluate_policies, train_marl
from .ppo import PpoConfig


class StrategyKind(str, Enum):
    PPO_MULTI = "ppo"
    VWAP_TRAJECTORY = "vwap"
    TWAP = "twap"
    ANALYTICAL_KYLE_LAMBDA = "analytical"
    PPO_SINGLE = "ppo_single"


def _require_integer(Q: float) -> int:
    if abs(Q - round(Q)) > 1e-9:
        raise InvalidInput(f"schedule needs an integer target, got Q={Q!r}")
    return int(round(Q))


def twap_schedule(Q: float, N: int) -> np.ndarray:
    """Split Q evenly over N steps; remainder units go to the earliest steps."""
    if N < 1:
        raise InvalidInput(f"N={N} must be >= 1")
    Qi = _require_integer(Q)
    base, rem = divmod(Qi, N)
    x = np.full(N, base, dtype=int)
    x[:rem] += 1
    return x


def vwap_schedule(reference_traces: list[EpisodeTrace], Q: float) -> np.ndarray:
    """Allocate Q proportionally to the mean per-step traded volume of the
    reference episodes.

    Volume is gross flow |x_it| + |x_lt| + |u|. Integerized by largest
    remainder (ties to the earliest step), so the sizes sum to Q exactly.
    """
    if not reference_traces:
        raise ZeroTotalVolume("no reference traces")
    Qi = _require_integer(Q)
    vol = np.mean(
        [np.abs(t.x_it) + np.abs(t.x_lt) + np.abs(t.u) for t in reference_traces],
        axis=0,
    )
    total = vol.sum()
    if total <= 0:
        raise ZeroTotalVolume("reference traces carry no volume")
    frac = Qi * vol / total
    x = np.floor(frac).astype(int)
    shortfall = Qi - int(x.sum())
    if shortfall > 0:
        order = np.argsort(-(frac - np.floor(frac)), kind="stable")
        x[order[:shortfall]] += 1
    return x


def analytical_schedule(
    kyle_eq: KyleEquilibrium,
    phi: float,
    alpha: float,
    Q: float,
    N: int | None = None,
    lambda_rescale: float = 1.0,
) -> np.ndarray:
    """Optimal acquisition sizes for the Kyle-equilibrium impact path.

    Open loop: the schedule never reacts to realized prices. The rescale knob
    adjusts the impact units before they enter the cost recursion.
    """
    path = ImpactPath(lambdas=kyle_eq.lam * lambda_rescale, alpha=alpha, phi=phi)
    return optimal_schedule(path, Q, N).x


class SchedulePolicy:
    """Liquidity-trader policy that follows a fixed size schedule.

    Converts sizes to inventory fractions using the remaining inventory from
    the raw observation; the final step always takes fraction 1 so the target
    is acquired exactly regardless of earlier rounding.
    """

    def __init__(self, sizes: np.ndarray):
        self.sizes = np.asarray(sizes, dtype=float)
        self._step = 0

    def begin_episode(self) -> None:
        self._step = 0

    def __call__(self, obs: np.ndarray) -> float:
        self._step += 1
        n, N = self._step, len(self.sizes)
        if n >= N:
            return 1.0
        remaining = float(obs[-1])  # last private field of the LT observation
        if remaining <= 0:
            return 0.0
        return float(min(max(self.sizes[n - 1] / remaining, 0.0), 1.0))


def implementation_shortfall(trace: EpisodeTrace, Q: float | None = None) -> float:
    """(sum_n p_n x_n / Q - p0) / p0 with x the trader's own executed sizes.

    Returns NaN when total executed volume is below one unit (nothing was
    acquired, so the average fill price is undefined).
    """
    x = trace.x_lt
    if np.sum(np.abs(x)) < 1.0:
        return math.nan
    Q = float(Q) if Q is not None else float(np.sum(x))
    avg_fill = float(np.dot(trace.vwap, x)) / Q
    return (avg_fill - trace.p0) / trace.p0


@dataclass
class ShortfallReport:
    strategy: StrategyKind
    mode: ResetMode
    per_episode: np.ndarray  # NaN marks episodes with no executed volume
    episodes: int

    @property
    def mean(self) -> float:
        finite = self.per_episode[np.isfinite(self.per_episode)]
        return float(finite.mean()) if finite.size else math.nan

    @property
    def std(self) -> float:
        finite = self.per_episode[np.isfinite(self.per_episode)]
        return float(finite.std()) if finite.size else math.nan

    @property
    def n_missing(self) -> int:
        return int(np.sum(~np.isfinite(self.per_episode)))


def evaluate_strategy(
    kind: StrategyKind,
    policies: dict,
    config: GameConfig,
    mode: ResetMode | str,
    episodes: int = 30,
    schedule: np.ndarray | None = None,
    lt_policy=None,
    base_seed: int | None = None,
) -> tuple[ShortfallReport, list[EpisodeTrace]]:
    """Run the full game with the liquidity trader driven by one strategy.

    ``policies`` supplies the frozen informed/maker policies. Schedule
    strategies need ``schedule``; the retrained PPO strategy needs
    ``lt_policy``. Episode noise is seeded by episode index, so strategies
    compared at the same seed face the same draws.
    """
    kind = StrategyKind(kind)
    if config.variant is not Variant.FULL:
        raise InvalidInput("strategy evaluation runs in the full game variant")
    eval_policies = dict(policies)
    if kind is StrategyKind.PPO_MULTI:
        eval_policies[ROLE_LIQUIDITY] = policies[ROLE_LIQUIDITY]
    elif kind is StrategyKind.PPO_SINGLE:
        if lt_policy is None:
            raise InvalidInput("ppo_single needs the retrained liquidity policy")
        eval_policies[ROLE_LIQUIDITY] = lt_policy
    else:
        if schedule is None:
            raise InvalidInput(f"{kind.value} needs a size schedule")
        eval_policies[ROLE_LIQUIDITY] = SchedulePolicy(schedule)
    traces = evaluate_policies(eval_policies, config, mode, episodes, base_seed)
    is_values = np.array(
        [implementation_shortfall(t, Q=config.target_inventory) for t in traces]
    )
    return ShortfallReport(kind, ResetMode(mode), is_values, episodes), traces


def retrain_single(
    policies: dict, config: GameConfig, ppo: PpoConfig, episodes: int = 500
):
    """Retrain only the liquidity trader against frozen opponents."""
    frozen = {k: v for k, v in policies.items() if k != ROLE_LIQUIDITY}
    ppo_single = PpoConfig(
        **{**ppo.__dict__, "total_episodes": episodes}
    )
    trained, curves = train_marl(config, ppo_single, frozen=frozen)
    return trained[ROLE_LIQUIDITY], curves


def compare_strategies(
    policies: dict,
    config: GameConfig,
    ppo: PpoConfig,
    episodes: int = 30,
    ppo_single_episodes: int = 500,
    kyle_eq: KyleEquilibrium | None = None,
    lambda_rescale: float = 1.0,
    modes: tuple = (ResetMode.EVAL_DOWN, ResetMode.EVAL_UP),
):
    """Evaluate all five strategies in both evaluation modes.

    Returns (reports, traces_by_strategy_and_mode). The VWAP volume curve is
    built from the multi-agent PPO evaluation episodes of the same mode; the
    analytical schedule uses the equilibrium impact path for the game's noise
    scale.
    """
    if kyle_eq is None:
        kyle_eq = solve_kyle(
            config.sigma_v**2, config.sigma_u_step**2, config.tau, config.horizon
        )
    lt_single, _ = retrain_single(policies, config, ppo, ppo_single_episodes)
    twap = twap_schedule(config.target_inventory, config.horizon)
    analytical = analytical_schedule(
        kyle_eq, config.risk_aversion, config.mean_reversion,
        config.target_inventory, config.horizon, lambda_rescale,
    )
    reports: list[ShortfallReport] = []
    traces: dict[tuple[str, str], list[EpisodeTrace]] = {}
    for mode in modes:
        ppo_report, ppo_traces = evaluate_strategy(
            StrategyKind.PPO_MULTI, policies, config, mode, episodes
        )
        vwap = vwap_schedule(ppo_traces, config.target_inventory)
        plan = [
            (ppo_report, ppo_traces),
            evaluate_strategy(StrategyKind.VWAP_TRAJECTORY, policies, config, mode,
                              episodes, schedule=vwap),
            evaluate_strategy(StrategyKind.TWAP, policies, config, mode,
                              episodes, schedule=twap),
            evaluate_strategy(StrategyKind.ANALYTICAL_KYLE_LAMBDA, policies, config,
                              mode, episodes, schedule=analytical),
            evaluate_strategy(StrategyKind.PPO_SINGLE, policies, config, mode,
                              episodes, lt_policy=lt_single),
        ]
        for report, trs in plan:
            reports.append(report)
            traces[(report.strategy.value, ResetMode(mode).value)] = trs
    return reports, traces


def comparison_csv(reports: list[ShortfallReport], config: GameConfig,
                   header_comment: str | None = None) -> str:
    """Comparison table matching the reporting schema
    (act_type, lob, phi, mode, strategy, mean_is, std_is); missing means are
    left empty."""
    lines = []
    if header_comment:
        lines.append(f"# {header_comment}")
    lines.append("act_type,lob,phi,mode,strategy,mean_is,std_is")
    act = "linear" if config.policy_param.value == "linear" else "non-linear"
    lob = 1 if config.lob_mode.value == "exchange" else 0
    for r in reports:
        mean = "" if math.isnan(r.mean) else repr(r.mean)
        std = "" if math.isnan(r.std) else repr(r.std)
        lines.append(
            f"{act},{lob},{config.risk_aversion!r},{r.mode.value},"
            f"{r.strategy.value},{mean},{std}"
        )
    return "\n".join(lines) + "\n"
