"""Independent-PPO training over the market game, one learner per role.

Every learning agent owns its policy, value function, optimizer and rollout
buffer; there is no centralized critic. Market makers share one parameter
set by default (they play a symmetric role and all see the same
observations), with per-maker rollouts feeding the shared learner; set
``share_maker_parameters=False`` in the PPO config for fully independent
maker learners. Frozen roles act with their deterministic mean action and
receive no updates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .game import (
    ROLE_INFORMED,
    ROLE_LIQUIDITY,
    ROLE_MAKER,
    EpisodeTrace,
    GameConfig,
    MarketGame,
    ResetMode,
    run_episode,
)
from .ppo import Adam, GaussianPolicy, PpoConfig, RewardScaler, RolloutBuffer, ppo_update


@dataclass
class LearningCurves:
    """Mean per-episode reward per role, one row per PPO update."""

    roles: tuple[str, ...]
    rewards: dict[str, list] = field(default_factory=dict)
    updates: list = field(default_factory=list)

    def append(self, update: int, means: dict[str, float]) -> None:
        self.updates.append(update)
        for role in self.roles:
            self.rewards.setdefault(role, []).append(means[role])

    def to_csv(self, header_comment: str | None = None) -> str:
        lines = []
        if header_comment:
            lines.append(f"# {header_comment}")
        lines.append("update," + ",".join(f"reward_{r}" for r in self.roles))
        for i, u in enumerate(self.updates):
            lines.append(
                f"{u},"
                + ",".join(repr(float(self.rewards[r][i])) for r in self.roles)
            )
        return "\n".join(lines) + "\n"


@dataclass
class _Learner:
    policy: GaussianPolicy
    adam: Adam
    buffer: RolloutBuffer
    scaler: RewardScaler


# Fresh policies start from economically neutral behavior rather than "do
# nothing": makers get a small positive output bias (of the two branches of
# the zero-sum quoting game only positive impact coefficients survive
# learning, so early price updates point with the order flow), and the
# liquidity trader starts near the middle of its fractional-order range so
# the terminal-shortfall penalty is felt from the first updates.
MAKER_INIT_BIAS = 0.2
LIQUIDITY_INIT_BIAS = 0.5


def _new_policy(cfg: GameConfig, role: str, rng: np.random.Generator) -> GaussianPolicy:
    policy = GaussianPolicy(cfg.observation_dim(role), 1, rng=rng)
    if role == ROLE_MAKER:
        policy.net.params["bmu"][:] = MAKER_INIT_BIAS
    elif role == ROLE_LIQUIDITY:
        policy.net.params["bmu"][:] = LIQUIDITY_INIT_BIAS
    return policy


def _collect_episode(env, learners, frozen, cfg, env_rng, act_rng):
    """Play one training episode.

    Returns ``(totals, maker_totals)``: per-role episode reward sums for the
    learning curves (makers averaged), plus the per-maker episode returns for
    reward scaling.
    """
    obs = env.reset(ResetMode.TRAIN_RANDOM, rng=env_rng)
    M = cfg.num_market_makers
    shared_maker = ROLE_MAKER in learners or ROLE_MAKER in frozen
    totals = {role: 0.0 for role in cfg.roles()}
    maker_totals = np.zeros(M)
    # Per-episode staging so maker trajectories stay contiguous in the buffer.
    staged = {role: [] for role in learners}

    while not env.done:
        orders = {}
        for role in (ROLE_INFORMED, ROLE_LIQUIDITY):
            if role not in obs:
                continue
            if role in learners:
                a, logp, v, nobs = learners[role].policy.step(obs[role], act_rng)
                orders[role] = float(a[0])
                staged[role].append([nobs, a, logp, v, None])
            else:
                orders[role] = float(frozen[role](obs[role]))
        maker_obs = env.submit_orders(orders)

        maker_actions = np.empty(M)
        maker_records = []
        for m in range(M):
            key = ROLE_MAKER if shared_maker else f"{ROLE_MAKER}_{m}"
            if key in learners:
                a, logp, v, nobs = learners[key].policy.step(maker_obs[m], act_rng)
                maker_actions[m] = float(a[0])
                maker_records.append((key, m, [nobs, a, logp, v, None]))
            else:
                maker_actions[m] = float(frozen[key](maker_obs[m]))
        result = env.submit_quotes(maker_actions)

        for role in (ROLE_INFORMED, ROLE_LIQUIDITY):
            if role in staged and role in obs:
                staged[role][-1][4] = result.rewards[role]
        for key, m, rec in maker_records:
            rec[4] = result.rewards[ROLE_MAKER][m]
            staged.setdefault(key, []).append((m, rec))
        if ROLE_INFORMED in result.rewards:
            totals[ROLE_INFORMED] += result.rewards[ROLE_INFORMED]
        if ROLE_LIQUIDITY in result.rewards:
            totals[ROLE_LIQUIDITY] += result.rewards[ROLE_LIQUIDITY]
        maker_totals += result.rewards[ROLE_MAKER]
        totals[ROLE_MAKER] += float(np.mean(result.rewards[ROLE_MAKER]))
        obs = result.observations or {}

    # Flush trader trajectories, then one contiguous trajectory per maker.
    N = cfg.horizon
    for role in (ROLE_INFORMED, ROLE_LIQUIDITY):
        if role in staged:
            for t, (nobs, a, logp, v, r) in enumerate(staged[role]):
                learners[role].buffer.add(nobs, a, logp, r, v, t == N - 1)
    for key, items in staged.items():
        if not key.startswith(ROLE_MAKER):
            continue
        by_maker: dict[int, list] = {}
        for m, rec in items:
            by_maker.setdefault(m, []).append(rec)
        for m in sorted(by_maker):
            for t, (nobs, a, logp, v, r) in enumerate(by_maker[m]):
                learners[key].buffer.add(nobs, a, logp, r, v, t == N - 1)
    return totals, maker_totals


def train_marl(
    config: GameConfig,
    ppo: PpoConfig,
    frozen: dict[str, GaussianPolicy] | None = None,
    progress: bool = False,
):
    """Train one independent PPO learner per non-frozen role.

    ``frozen`` maps roles to fixed policies (the maker entry covers all
    makers when parameters are shared). Returns ``(policies, curves)`` where
    ``policies`` contains the trained and the frozen policies keyed by role;
    with shared maker parameters the maker entry is a single policy,
    otherwise a list of per-maker policies. Deterministic given the configs.
    """
    config = config.validate()
    ppo = ppo.validate()
    frozen = dict(frozen or {})
    ss = np.random.SeedSequence(config.seed)
    init_rng, env_rng, act_rng, update_rng = (
        np.random.default_rng(s) for s in ss.spawn(4)
    )

    maker_keys = (
        [ROLE_MAKER]
        if ppo.share_maker_parameters
        else [f"{ROLE_MAKER}_{m}" for m in range(config.num_market_makers)]
    )
    # Expand a single frozen maker policy to per-maker keys if needed.
    if ROLE_MAKER in frozen and not ppo.share_maker_parameters:
        shared = frozen.pop(ROLE_MAKER)
        for k in maker_keys:
            frozen.setdefault(k, shared)

    learners: dict[str, _Learner] = {}
    for role in config.roles():
        keys = maker_keys if role == ROLE_MAKER else [role]
        for key in keys:
            if key in frozen:
                continue
            pol = _new_policy(config, ROLE_MAKER if key.startswith(ROLE_MAKER) else key,
                              init_rng)
            learners[key] = _Learner(pol, Adam(pol.net.params, ppo.learning_rate),
                                     RolloutBuffer(), RewardScaler())

    env = MarketGame(config)
    curves = LearningCurves(roles=config.roles())
    n_updates = ppo.total_episodes // ppo.episodes_per_update
    leftover = ppo.total_episodes - n_updates * ppo.episodes_per_update
    episode = 0
    for update in range(n_updates + (1 if leftover else 0)):
        batch = ppo.episodes_per_update if update < n_updates else leftover
        sums = {role: 0.0 for role in config.roles()}
        for _ in range(batch):
            totals, maker_totals = _collect_episode(env, learners, frozen, config,
                                                    env_rng, act_rng)
            for role, tot in totals.items():
                sums[role] += tot
            for key, lr in learners.items():
                if key == ROLE_MAKER:
                    for r in maker_totals:
                        lr.scaler.update(float(r))
                elif key.startswith(ROLE_MAKER):
                    lr.scaler.update(float(maker_totals[int(key.rsplit("_", 1)[1])]))
                else:
                    lr.scaler.update(totals[key])
            episode += 1
        for key, lr in learners.items():
            # Reward scaling tames the traders' dollar-scale return targets.
            # Maker rewards stay unscaled: their game is zero-sum and
            # relative, and sharpening that weak signal only accelerates a
            # degenerate widen-the-quote drift.
            scale = 1.0 if key.startswith(ROLE_MAKER) else lr.scaler.scale
            ppo_update(lr.policy.net, lr.buffer, ppo, update_rng, lr.adam,
                       reward_scale=scale)
            lr.buffer = RolloutBuffer()
        curves.append(update, {r: sums[r] / batch for r in sums})
        if progress:
            fields = " ".join(f"{r}={sums[r] / batch:.2f}" for r in sums)
            print(f"update {update + 1}: episodes={episode} {fields}")

    policies: dict = {}
    for role in config.roles():
        if role == ROLE_MAKER:
            if ppo.share_maker_parameters:
                policies[ROLE_MAKER] = (
                    learners[ROLE_MAKER].policy
                    if ROLE_MAKER in learners
                    else frozen[ROLE_MAKER]
                )
            else:
                policies[ROLE_MAKER] = [
                    learners[k].policy if k in learners else frozen[k]
                    for k in maker_keys
                ]
        else:
            policies[role] = (
                learners[role].policy if role in learners else frozen[role]
            )
    for policy in policies.values():
        for p in policy if isinstance(policy, list) else [policy]:
            p.adapt_normalizer = False
    return policies, curves


def save_policy_set(policies: dict, directory, config: GameConfig,
                    manifest_hash: str = "") -> None:
    """Persist a role-keyed policy set as npz checkpoints plus meta.json."""
    import json
    from pathlib import Path

    from .ppo import save_policy

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    roles = {}
    for role, policy in policies.items():
        if isinstance(policy, list):
            names = [f"{role}_{m}.npz" for m in range(len(policy))]
            for name, p in zip(names, policy):
                save_policy(p, directory / name)
            roles[role] = names
        else:
            save_policy(policy, directory / f"{role}.npz")
            roles[role] = f"{role}.npz"
    meta = {
        "roles": roles,
        "variant": config.variant.value,
        "num_market_makers": config.num_market_makers,
        "manifest_hash": manifest_hash,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def load_policy_set(directory) -> dict:
    """Inverse of ``save_policy_set``; loaded policies act deterministically."""
    import json
    from pathlib import Path

    from .errors import VersionMismatch
    from .ppo import load_policy

    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise VersionMismatch(f"no meta.json in {directory}")
    meta = json.loads(meta_path.read_text())
    policies: dict = {}
    for role, entry in meta["roles"].items():
        if isinstance(entry, list):
            policies[role] = [load_policy(directory / name) for name in entry]
        else:
            policies[role] = load_policy(directory / entry)
    return policies


def evaluate_policies(
    policies: dict,
    config: GameConfig,
    mode: ResetMode | str,
    episodes: int = 30,
    base_seed: int | None = None,
) -> list[EpisodeTrace]:
    """Roll out deterministic policies over seeded holdout episodes.

    Episode i draws its noise from a generator seeded by
    (base_seed, mode, i), so results are reproducible and identical episode
    indices share noise across strategy comparisons.
    """
    mode = ResetMode(mode)
    if base_seed is None:
        base_seed = config.seed
    mode_key = {ResetMode.TRAIN_RANDOM: 0, ResetMode.EVAL_DOWN: 1, ResetMode.EVAL_UP: 2}
    traces = []
    for i in range(episodes):
        rng = np.random.default_rng([base_seed, mode_key[mode], i])
        traces.append(run_episode(policies, config, mode, rng=rng))
    return traces
