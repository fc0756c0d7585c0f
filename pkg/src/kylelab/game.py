"""Multi-period trading game with endogenous price formation.

Three variants of the same market: an informed trader against competing
market makers (the price-discovery game), a liquidity trader against makers
(the execution game), and the full game with both traders. A representative
noise trader adds Gaussian flow in every variant.

Each period is a hybrid sequential-simultaneous round: traders submit orders
simultaneously, makers then observe the aggregate net flow and quote
simultaneously, the flow is split pro rata by quoted depth, and everyone
clears at the depth-weighted average price. The environment therefore steps
in two phases — ``submit_orders`` followed by ``submit_quotes`` — which
together make up one trading period.

Conventions: prices in cents, quantities in units, rewards in dollars
(cents / 100). Clearing math runs on unrounded prices; only prices surfaced
in observations are rounded to the integer cent.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, TextIO

import numpy as np

from . import market
from .errors import ActionOutOfDomain, EpisodeFinished, InvalidConfig
from .market import LobSnapshot, NetOrderFlow, Quote


class Variant(str, Enum):
    KYLE_ONLY = "kyle_only"
    LT_VS_MMS = "lt_vs_mms"
    FULL = "full"


class LobMode(str, Enum):
    OTC = "otc"
    EXCHANGE = "exchange"


class PolicyParam(str, Enum):
    LINEAR = "linear"
    NONLINEAR = "nonlinear"


class ResetMode(str, Enum):
    TRAIN_RANDOM = "train"
    EVAL_DOWN = "down"
    EVAL_UP = "up"


ROLE_INFORMED = "informed"
ROLE_LIQUIDITY = "liquidity"
ROLE_MAKER = "maker"


@dataclass(frozen=True)
class GameConfig:
    """Full specification of one market game."""

    horizon: int = 20
    num_market_makers: int = 20
    variant: Variant = Variant.FULL
    lob_mode: LobMode = LobMode.OTC
    policy_param: PolicyParam = PolicyParam.LINEAR
    mu_v: float = 1000.0  # cents
    sigma_v: float = 100.0  # cents
    sigma_u: float = 50.0  # units
    scale_noise_by_horizon: bool = False  # sigma_u^2 * 20/N when set
    price_cap_fraction: float = 0.5
    target_inventory: float = 1000.0  # Q, units
    risk_aversion: float = 0.01  # phi, cents per unit^2
    terminal_penalty: float = 10.0  # cents per unit^2; must exceed phi
    mean_reversion: float = 0.0  # alpha
    tau: float = 1.0
    theta_bounds: tuple[float, float] = (0.0, 1.0)
    seed: int = 0
    # Action-map knobs (maker impact band, informed order cap in noise stds).
    lambda_floor: float = 1e-4
    lambda_max: float = 10.0
    it_order_cap_sigmas: float = 10.0

    def validate(self) -> "GameConfig":
        if self.horizon < 1:
            raise InvalidConfig(f"horizon={self.horizon} must be >= 1")
        if self.num_market_makers < 1:
            raise InvalidConfig(f"num_market_makers={self.num_market_makers} must be >= 1")
        if not 0.0 < self.price_cap_fraction < 1.0:
            raise InvalidConfig(f"price_cap_fraction={self.price_cap_fraction} outside (0,1)")
        if self.theta_bounds[0] > self.theta_bounds[1]:
            raise InvalidConfig(f"theta_bounds={self.theta_bounds} misordered")
        if self.risk_aversion < 0:
            raise InvalidConfig("risk_aversion must be >= 0")
        if self.terminal_penalty <= self.risk_aversion:
            raise InvalidConfig("terminal_penalty must exceed risk_aversion")
        if not 0.0 <= self.mean_reversion <= 1.0:
            raise InvalidConfig(f"mean_reversion={self.mean_reversion} outside [0,1]")
        if self.mu_v <= 0 or self.sigma_v < 0 or self.sigma_u < 0 or self.tau <= 0:
            raise InvalidConfig("mu_v/tau must be positive; sigma_v/sigma_u nonnegative")
        if self.lambda_floor <= 0 or self.lambda_max <= self.lambda_floor:
            raise InvalidConfig("need 0 < lambda_floor < lambda_max")
        return self

    @property
    def sigma_u_step(self) -> float:
        """Per-step noise std, optionally rescaled to keep total variance
        comparable across horizons (sigma_u^2 * 20 / N)."""
        if self.scale_noise_by_horizon:
            return self.sigma_u * math.sqrt(20.0 / self.horizon)
        return self.sigma_u

    @property
    def informed_present(self) -> bool:
        return self.variant in (Variant.KYLE_ONLY, Variant.FULL)

    @property
    def liquidity_present(self) -> bool:
        return self.variant in (Variant.LT_VS_MMS, Variant.FULL)

    def roles(self) -> tuple[str, ...]:
        out = []
        if self.informed_present:
            out.append(ROLE_INFORMED)
        if self.liquidity_present:
            out.append(ROLE_LIQUIDITY)
        out.append(ROLE_MAKER)
        return tuple(out)

    def observation_dim(self, role: str) -> int:
        global_dim = 1
        if self.lob_mode is LobMode.EXCHANGE:
            global_dim += 2 * self.num_market_makers
        return global_dim + 2  # every role appends [t, private scalar]


@dataclass
class EpisodeTrace:
    """Per-step record of one episode.

    ``vwap`` is the unrounded clearing price after each period; the opening
    price ``p0`` is kept separately. ``q_remaining`` is the liquidity
    trader's unfilled inventory after each period's trade. Maker arrays are
    indexed (step, maker).
    """

    variant: Variant
    mode: ResetMode
    N: int
    M: int
    v: float
    p0: float
    vwap: np.ndarray
    q_total: np.ndarray
    x_it: np.ndarray
    x_lt: np.ndarray
    u: np.ndarray
    q_remaining: np.ndarray
    reward_it: np.ndarray
    reward_lt: np.ndarray
    reward_mm: np.ndarray
    quotes: np.ndarray
    allocations: np.ndarray
    lam_eff: np.ndarray

    @property
    def price_path(self) -> np.ndarray:
        """[p0, vwap_1, ..., vwap_N]."""
        return np.concatenate(([self.p0], self.vwap))

    def prior_vwap(self, n: int) -> float:
        """Clearing price entering period n (1-based)."""
        return self.p0 if n == 1 else float(self.vwap[n - 2])

    def flows(self, n: int) -> NetOrderFlow:
        return NetOrderFlow.build(
            float(self.x_it[n - 1]), float(self.x_lt[n - 1]), float(self.u[n - 1])
        )


@dataclass
class StepResult:
    rewards: dict
    observations: dict | None  # trader-phase observations for the next period
    done: bool
    step: int


def squash_lambda(raw: float, cfg: GameConfig) -> float:
    """Map a raw maker output into [-lambda_max, lambda_max] excluding the
    open band around zero, so quoted depth stays finite."""
    lam = cfg.lambda_max * math.tanh(raw / cfg.lambda_max)
    if abs(lam) < cfg.lambda_floor:
        lam = math.copysign(cfg.lambda_floor, lam if lam != 0.0 else 1.0)
    return lam


def _check_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ActionOutOfDomain(f"{name} action is {value!r}")
    return value


class MarketGame:
    """One episode-at-a-time environment instance.

    Single-threaded (mutable episode state); run several instances with
    distinct seeds for parallel rollouts. A period is advanced by calling
    ``submit_orders`` with the traders' raw actions and then
    ``submit_quotes`` with the makers' raw actions.
    """

    def __init__(self, config: GameConfig):
        self.config = config.validate()
        self._rng: np.random.Generator | None = None
        self._done = True
        self._phase = "orders"

    # -- episode lifecycle -------------------------------------------------

    def reset(
        self,
        mode: ResetMode | str = ResetMode.TRAIN_RANDOM,
        rng: np.random.Generator | None = None,
    ) -> dict:
        """Start a new episode and return the period-1 observation set.

        Training draws the fundamental from its prior and the opening price
        uniformly inside the admissible band; evaluation fixes the
        fundamental at its mean and opens 30% below ("down") or above ("up")
        it. Price bounds are the symmetric cap around the drawn fundamental.
        """
        cfg = self.config
        mode = ResetMode(mode)
        self._rng = rng if rng is not None else np.random.default_rng(cfg.seed)
        if mode is ResetMode.TRAIN_RANDOM:
            v = float(self._rng.normal(cfg.mu_v, cfg.sigma_v))
            while v <= 0.0:  # keep the price band valid; ~10 sigma event at defaults
                v = float(self._rng.normal(cfg.mu_v, cfg.sigma_v))
            self._p_min = (1.0 - cfg.price_cap_fraction) * v
            self._p_max = (1.0 + cfg.price_cap_fraction) * v
            p0 = float(self._rng.uniform(self._p_min, self._p_max))
        else:
            v = cfg.mu_v
            self._p_min = (1.0 - cfg.price_cap_fraction) * v
            self._p_max = (1.0 + cfg.price_cap_fraction) * v
            p0 = 0.7 * cfg.mu_v if mode is ResetMode.EVAL_DOWN else 1.3 * cfg.mu_v
        self.mode = mode
        self.v = v
        self.p0 = p0
        self._vwap_prev = p0
        self._lob_prev: LobSnapshot | None = None
        self._n = 1
        self._phase = "orders"
        self._done = False
        self._q_pre = cfg.target_inventory if cfg.liquidity_present else 0.0
        N, M = cfg.horizon, cfg.num_market_makers
        self._trace = EpisodeTrace(
            variant=cfg.variant, mode=mode, N=N, M=M, v=v, p0=p0,
            vwap=np.zeros(N), q_total=np.zeros(N), x_it=np.zeros(N),
            x_lt=np.zeros(N), u=np.zeros(N), q_remaining=np.zeros(N),
            reward_it=np.zeros(N), reward_lt=np.zeros(N),
            reward_mm=np.zeros((N, M)), quotes=np.zeros((N, M)),
            allocations=np.zeros((N, M)), lam_eff=np.zeros((N, M)),
        )
        obs = self.trader_observations()
        obs[ROLE_MAKER] = self.maker_observations(q=0.0)  # placeholder until orders arrive
        return obs

    @property
    def done(self) -> bool:
        return self._done

    @property
    def step_index(self) -> int:
        """Period about to trade (1-based)."""
        return self._n

    @property
    def price_bounds(self) -> tuple[float, float]:
        return self._p_min, self._p_max

    @property
    def q_remaining(self) -> float:
        """Liquidity trader's unfilled inventory entering the current period."""
        return self._q_pre

    # -- observations --------------------------------------------------------

    def _global_obs(self) -> list[float]:
        out = [market.clamp_and_tick(self._vwap_prev, self._p_min, self._p_max)]
        if self.config.lob_mode is LobMode.EXCHANGE:
            if self._lob_prev is None:
                for _ in range(self.config.num_market_makers):
                    out.extend((0.0, out[0]))
            else:
                max_depth = 1.0 / self.config.lambda_floor
                for depth, price in self._lob_prev.rows:
                    out.extend((min(depth, max_depth),
                                market.clamp_and_tick(price, self._p_min, self._p_max)))
        return out

    def trader_observations(self) -> dict:
        """Observations for the order-submission phase of the current period."""
        g = self._global_obs()
        t = self._n * self.config.tau
        obs: dict = {}
        if self.config.informed_present:
            obs[ROLE_INFORMED] = np.array(g + [t, self.v])
        if self.config.liquidity_present:
            obs[ROLE_LIQUIDITY] = np.array(g + [t, self._q_pre])
        return obs

    def maker_observations(self, q: float) -> np.ndarray:
        """(M, obs_dim) observations for the quoting phase, given net flow q."""
        g = self._global_obs()
        t = self._n * self.config.tau
        row = np.array(g + [t, q])
        return np.tile(row, (self.config.num_market_makers, 1))

    # -- the two phases of one trading period --------------------------------

    def submit_orders(self, orders: dict) -> np.ndarray:
        """Map raw trader actions to orders, draw the noise flow, and return
        the makers' quoting-phase observations."""
        if self._done:
            raise EpisodeFinished("episode is over; call reset()")
        if self._phase != "orders":
            raise EpisodeFinished("orders already submitted for this period")
        cfg = self.config
        # No noise scale means no cap (degenerate test configurations).
        cap = cfg.it_order_cap_sigmas * cfg.sigma_u_step or math.inf

        x_it = 0.0
        if cfg.informed_present:
            raw = _check_finite(ROLE_INFORMED, orders[ROLE_INFORMED])
            if cfg.policy_param is PolicyParam.LINEAR:
                x_it = raw * (self.v - self._vwap_prev) * cfg.tau
            else:
                x_it = raw
            x_it = min(max(x_it, -cap), cap)

        x_lt = 0.0
        if cfg.liquidity_present:
            theta = _check_finite(ROLE_LIQUIDITY, orders[ROLE_LIQUIDITY])
            theta = min(max(theta, cfg.theta_bounds[0]), cfg.theta_bounds[1])
            x_lt = theta * self._q_pre

        u = float(self._rng.normal(0.0, cfg.sigma_u_step * math.sqrt(cfg.tau)))
        self._flow = NetOrderFlow.build(informed=x_it, liquidity=x_lt, noise=u)
        self._phase = "quotes"
        return self.maker_observations(q=self._flow.total)

    def submit_quotes(self, maker_actions: Sequence[float] | np.ndarray) -> StepResult:
        """Clear the current period given the makers' raw actions."""
        if self._done:
            raise EpisodeFinished("episode is over; call reset()")
        if self._phase != "quotes":
            raise EpisodeFinished("submit orders before quotes")
        cfg = self.config
        M = cfg.num_market_makers
        acts = np.asarray(maker_actions, dtype=float).reshape(-1)
        if len(acts) != M:
            raise ActionOutOfDomain(f"expected {M} maker actions, got {len(acts)}")
        for i, a in enumerate(acts):
            _check_finite(f"maker_{i}", a)

        n = self._n
        q = self._flow.total
        prior = self._vwap_prev

        lam_policy = np.empty(M)
        cleared = np.empty(M)
        for i in range(M):
            if cfg.policy_param is PolicyParam.LINEAR:
                lam_policy[i] = squash_lambda(acts[i], cfg)
                raw_price = prior + lam_policy[i] * q
            else:
                lam_policy[i] = math.nan
                raw_price = acts[i]
            cleared[i] = market.clamp(raw_price, self._p_min, self._p_max)

        # Effective impact consistent with the realized (clamped) quote, so
        # depth, allocation and the VWAP recursion stay mutually coherent.
        lam_eff = np.empty(M)
        for i in range(M):
            if q != 0.0:
                le = (cleared[i] - prior) / q
                if abs(le) < 1e-12:  # quote landed on the prior: near-infinite depth
                    fallback = lam_policy[i] if math.isfinite(lam_policy[i]) else 1.0
                    le = math.copysign(1e-12, le if le != 0.0 else fallback)
                lam_eff[i] = le
            else:
                lam_eff[i] = lam_policy[i] if math.isfinite(lam_policy[i]) else 1.0

        quotes = [Quote(i, float(cleared[i]), float(lam_eff[i])) for i in range(M)]
        alloc = np.array(market.allocate_pro_rata(q, quotes))
        vw = market.vwap(quotes)

        x_it, x_lt = self._flow.informed, self._flow.liquidity
        reward_it = (self.v - vw) * x_it / 100.0
        reward_mm = alloc * (cleared - vw) / 100.0
        reward_lt = 0.0
        if cfg.liquidity_present:
            reward_lt = -(x_lt * vw + cfg.risk_aversion * self._q_pre**2) / 100.0
            if n == cfg.horizon:
                unfilled = self._q_pre - x_lt
                reward_lt -= cfg.terminal_penalty * unfilled**2 / 100.0

        tr = self._trace
        tr.vwap[n - 1] = vw
        tr.q_total[n - 1] = q
        tr.x_it[n - 1] = x_it
        tr.x_lt[n - 1] = x_lt
        tr.u[n - 1] = self._flow.noise
        tr.reward_it[n - 1] = reward_it
        tr.reward_lt[n - 1] = reward_lt
        tr.reward_mm[n - 1] = reward_mm
        tr.quotes[n - 1] = cleared
        tr.allocations[n - 1] = alloc
        tr.lam_eff[n - 1] = lam_eff
        self._q_pre -= x_lt
        tr.q_remaining[n - 1] = self._q_pre

        self._vwap_prev = vw
        self._lob_prev = LobSnapshot.from_quotes(quotes, prior_vwap=vw)
        self._done = n == cfg.horizon
        self._n = n + 1
        self._phase = "orders"

        rewards: dict = {ROLE_MAKER: reward_mm}
        if cfg.informed_present:
            rewards[ROLE_INFORMED] = reward_it
        if cfg.liquidity_present:
            rewards[ROLE_LIQUIDITY] = reward_lt
        return StepResult(
            rewards=rewards,
            observations=None if self._done else self.trader_observations(),
            done=self._done,
            step=n,
        )

    @property
    def trace(self) -> EpisodeTrace:
        return self._trace


# -- driving an episode with policies ----------------------------------------


def _begin(policy) -> None:
    if hasattr(policy, "begin_episode"):
        policy.begin_episode()


def _maker_actions(policies: dict, obs: np.ndarray) -> np.ndarray:
    """Shared maker policy applied row-wise, or one policy per maker."""
    maker = policies[ROLE_MAKER]
    if isinstance(maker, (list, tuple)):
        return np.array([float(p(obs[i])) for i, p in enumerate(maker)])
    return np.array([float(maker(row)) for row in obs])


def run_episode(
    policies: dict,
    config: GameConfig,
    mode: ResetMode | str = ResetMode.TRAIN_RANDOM,
    rng: np.random.Generator | None = None,
    collect_observations: bool = False,
):
    """Play one full episode and return its trace.

    ``policies`` maps roles to callables (raw observation -> raw action);
    the maker entry may be a single shared callable or a list of M callables.
    Deterministic given (config, mode, rng state, policies). With
    ``collect_observations`` also returns the per-period observation dicts.
    """
    env = MarketGame(config)
    obs = env.reset(mode, rng=rng)
    for p in policies.values():
        if isinstance(p, (list, tuple)):
            for sub in p:
                _begin(sub)
        else:
            _begin(p)
    observed = []
    while not env.done:
        orders = {}
        for role in (ROLE_INFORMED, ROLE_LIQUIDITY):
            if role in obs:
                orders[role] = float(policies[role](obs[role]))
        maker_obs = env.submit_orders(orders)
        if collect_observations:
            observed.append({**{r: o for r, o in obs.items() if r != ROLE_MAKER},
                             ROLE_MAKER: maker_obs})
        result = env.submit_quotes(_maker_actions(policies, maker_obs))
        obs = result.observations or {}
    if collect_observations:
        return env.trace, observed
    return env.trace


def implied_coefficients(trace: EpisodeTrace, tau: float = 1.0):
    """Recover linear-policy coefficients from a (possibly nonlinear) trace.

    Returns per-step implied trading intensity (N,) and per-maker implied
    impact (N, M); entries are NaN where the defining quotient degenerates
    (no mispricing, or zero net flow).
    """
    N, M = trace.N, trace.M
    beta_hat = np.full(N, np.nan)
    lambda_hat = np.full((N, M), np.nan)
    for n in range(1, N + 1):
        prior = trace.prior_vwap(n)
        gap = (trace.v - prior) * tau
        if abs(gap) > 1e-12:
            beta_hat[n - 1] = trace.x_it[n - 1] / gap
        q = trace.q_total[n - 1]
        if abs(q) > 1e-12:
            lambda_hat[n - 1] = (trace.quotes[n - 1] - prior) / q
    return beta_hat, lambda_hat


# -- trace serialization ------------------------------------------------------


def _trace_columns(variant: Variant, M: int) -> list[str]:
    cols = ["episode", "n", "v", "vwap", "q_total"]
    if variant in (Variant.KYLE_ONLY, Variant.FULL):
        cols.append("x_it")
    if variant in (Variant.LT_VS_MMS, Variant.FULL):
        cols.append("x_lt")
    cols.append("u")
    if variant in (Variant.LT_VS_MMS, Variant.FULL):
        cols.append("Q_remaining")
    if variant in (Variant.KYLE_ONLY, Variant.FULL):
        cols.append("reward_it")
    if variant in (Variant.LT_VS_MMS, Variant.FULL):
        cols.append("reward_lt")
    cols.append("reward_mm_sum")
    cols.extend(f"quote_{i}" for i in range(M))
    cols.extend(f"alloc_{i}" for i in range(M))
    cols.append("p0")
    return cols


def write_traces_csv(traces: Sequence[EpisodeTrace], f: TextIO,
                     manifest_hash: str | None = None) -> None:
    """One row per (episode, step); numbers use repr so reads round-trip."""
    first = traces[0]
    if manifest_hash:
        f.write(f"# manifest: {manifest_hash}\n")
    cols = _trace_columns(first.variant, first.M)
    writer = csv.writer(f, lineterminator="\n")
    writer.writerow(cols)
    for e, tr in enumerate(traces):
        for n in range(1, tr.N + 1):
            row: list = [e, n, repr(float(tr.v)), repr(float(tr.vwap[n - 1])),
                         repr(float(tr.q_total[n - 1]))]
            if "x_it" in cols:
                row.append(repr(float(tr.x_it[n - 1])))
            if "x_lt" in cols:
                row.append(repr(float(tr.x_lt[n - 1])))
            row.append(repr(float(tr.u[n - 1])))
            if "Q_remaining" in cols:
                row.append(repr(float(tr.q_remaining[n - 1])))
            if "reward_it" in cols:
                row.append(repr(float(tr.reward_it[n - 1])))
            if "reward_lt" in cols:
                row.append(repr(float(tr.reward_lt[n - 1])))
            row.append(repr(float(tr.reward_mm[n - 1].sum())))
            row.extend(repr(float(x)) for x in tr.quotes[n - 1])
            row.extend(repr(float(x)) for x in tr.allocations[n - 1])
            row.append(repr(float(tr.p0)))
            writer.writerow(row)


def read_traces_csv(f: TextIO) -> list[EpisodeTrace]:
    """Inverse of ``write_traces_csv`` (manifest comment lines are skipped)."""
    rows = [line for line in f if not line.startswith("#")]
    reader = csv.DictReader(rows)
    cols = reader.fieldnames or []
    M = sum(1 for c in cols if c.startswith("quote_"))
    has_it = "x_it" in cols
    has_lt = "x_lt" in cols
    if has_it and has_lt:
        variant = Variant.FULL
    elif has_it:
        variant = Variant.KYLE_ONLY
    else:
        variant = Variant.LT_VS_MMS
    by_episode: dict[int, list[dict]] = {}
    for rec in reader:
        by_episode.setdefault(int(rec["episode"]), []).append(rec)
    traces = []
    for e in sorted(by_episode):
        recs = sorted(by_episode[e], key=lambda r: int(r["n"]))
        N = len(recs)
        tr = EpisodeTrace(
            variant=variant, mode=ResetMode.TRAIN_RANDOM, N=N, M=M,
            v=float(recs[0]["v"]), p0=float(recs[0]["p0"]),
            vwap=np.array([float(r["vwap"]) for r in recs]),
            q_total=np.array([float(r["q_total"]) for r in recs]),
            x_it=np.array([float(r["x_it"]) for r in recs]) if has_it else np.zeros(N),
            x_lt=np.array([float(r["x_lt"]) for r in recs]) if has_lt else np.zeros(N),
            u=np.array([float(r["u"]) for r in recs]),
            q_remaining=(np.array([float(r["Q_remaining"]) for r in recs])
                         if has_lt else np.zeros(N)),
            reward_it=(np.array([float(r["reward_it"]) for r in recs])
                       if has_it else np.zeros(N)),
            reward_lt=(np.array([float(r["reward_lt"]) for r in recs])
                       if has_lt else np.zeros(N)),
            reward_mm=np.zeros((N, M)),
            quotes=np.array([[float(r[f"quote_{i}"]) for i in range(M)] for r in recs]),
            allocations=np.array([[float(r[f"alloc_{i}"]) for i in range(M)] for r in recs]),
            lam_eff=np.zeros((N, M)),
        )
        # Per-maker reward splits are not serialized; keep the sum in column 0.
        tr.reward_mm[:, 0] = [float(r["reward_mm_sum"]) for r in recs]
        traces.append(tr)
    return traces
