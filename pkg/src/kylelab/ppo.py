"""Minimal self-contained PPO on small tanh MLPs, in plain numpy.

The policy is a two-hidden-layer (64, 64) tanh network with a Gaussian action
head (state-independent learned log-std) and a value head sharing the trunk.
Gradients are hand-derived backprop; the optimizer is Adam. Everything is
deterministic given the generators passed in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    IncompleteEpisode,
    InvalidConfig,
    NonFiniteLoss,
    VersionMismatch,
)

CHECKPOINT_VERSION = 1
LOG_STD_BOUNDS = (-5.0, 2.0)
_PARAM_KEYS = ("W1", "b1", "W2", "b2", "Wmu", "bmu", "Wv", "bv", "log_std")
_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PpoConfig:
    clip_eps: float = 0.2
    learning_rate: float = 3e-4
    gae_lambda: float = 0.95
    gamma: float = 1.0  # finite undiscounted episodes
    epochs_per_update: int = 10
    minibatch_size: int = 256
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    grad_clip: float = 0.5
    episodes_per_update: int = 10
    total_episodes: int = 1000
    share_maker_parameters: bool = True

    def validate(self) -> "PpoConfig":
        if self.clip_eps <= 0:
            raise InvalidConfig("clip_eps must be > 0")
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidConfig("gamma must be in (0, 1]")
        if min(self.learning_rate, self.epochs_per_update, self.minibatch_size,
               self.episodes_per_update) <= 0:
            raise InvalidConfig("learning_rate/epochs/minibatch/episodes must be positive")
        if self.total_episodes < 0:
            raise InvalidConfig("total_episodes must be >= 0")
        return self


def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    # C-contiguous so matmuls hit the same BLAS path as checkpoint-loaded
    # parameters (bit-for-bit reproducibility across save/load).
    return np.ascontiguousarray(gain * q)


class MlpPolicy:
    """Tanh MLP with Gaussian action mean, value head, and learned log-std."""

    def __init__(self, obs_dim: int, act_dim: int = 1, hidden: int = 64,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.hidden = hidden
        self.params: dict[str, np.ndarray] = {
            "W1": _orthogonal(rng, obs_dim, hidden, math.sqrt(2.0)),
            "b1": np.zeros(hidden),
            "W2": _orthogonal(rng, hidden, hidden, math.sqrt(2.0)),
            "b2": np.zeros(hidden),
            "Wmu": _orthogonal(rng, hidden, act_dim, 0.01),
            "bmu": np.zeros(act_dim),
            "Wv": _orthogonal(rng, hidden, 1, 1.0),
            "bv": np.zeros(1),
            "log_std": np.zeros(act_dim),
        }

    # -- parameter vector ----------------------------------------------------

    @property
    def flat_params(self) -> np.ndarray:
        return np.concatenate([self.params[k].ravel() for k in _PARAM_KEYS])

    @flat_params.setter
    def flat_params(self, vec: np.ndarray) -> None:
        i = 0
        for k in _PARAM_KEYS:
            n = self.params[k].size
            self.params[k] = np.asarray(vec[i:i + n], dtype=float).reshape(
                self.params[k].shape
            ).copy()
            i += n
        if i != len(vec):
            raise DimensionMismatch(f"flat vector has {len(vec)} entries, expected {i}")

    # -- forward / backward ----------------------------------------------------

    def forward(self, X: np.ndarray):
        """Batch forward pass: (mean, value, cache)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.obs_dim:
            raise DimensionMismatch(f"observation dim {X.shape[1]} != {self.obs_dim}")
        p = self.params
        h1 = np.tanh(X @ p["W1"] + p["b1"])
        h2 = np.tanh(h1 @ p["W2"] + p["b2"])
        mu = h2 @ p["Wmu"] + p["bmu"]
        value = (h2 @ p["Wv"] + p["bv"])[:, 0]
        return mu, value, (X, h1, h2)

    def backward(self, cache, dmu: np.ndarray, dvalue: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients given upstream gradients on mean and value."""
        X, h1, h2 = cache
        p = self.params
        g = {}
        g["Wmu"] = h2.T @ dmu
        g["bmu"] = dmu.sum(axis=0)
        g["Wv"] = h2.T @ dvalue[:, None]
        g["bv"] = np.array([dvalue.sum()])
        dh2 = dmu @ p["Wmu"].T + dvalue[:, None] @ p["Wv"].T
        dz2 = dh2 * (1.0 - h2 * h2)
        g["W2"] = h1.T @ dz2
        g["b2"] = dz2.sum(axis=0)
        dh1 = dz2 @ p["W2"].T
        dz1 = dh1 * (1.0 - h1 * h1)
        g["W1"] = X.T @ dz1
        g["b1"] = dz1.sum(axis=0)
        return g

    # -- Gaussian head ---------------------------------------------------------

    def log_prob(self, mu: np.ndarray, actions: np.ndarray) -> np.ndarray:
        std = np.exp(self.params["log_std"])
        z = (actions - mu) / std
        return -0.5 * np.sum(z * z + 2.0 * self.params["log_std"] + _LOG_2PI, axis=1)

    def entropy(self) -> float:
        return float(np.sum(self.params["log_std"] + 0.5 * (1.0 + _LOG_2PI)))

    def sample(self, obs: np.ndarray, rng: np.random.Generator):
        """Draw one stochastic action; returns (action, log_prob, value)."""
        mu, value, _ = self.forward(obs)
        std = np.exp(self.params["log_std"])
        action = mu[0] + std * rng.standard_normal(self.act_dim)
        logp = self.log_prob(mu, action[None, :])[0]
        return action, float(logp), float(value[0])

    def mean_action(self, obs: np.ndarray) -> np.ndarray:
        mu, _, _ = self.forward(obs)
        return mu[0]

    def logp_param_grad(self, obs: np.ndarray, action: np.ndarray) -> np.ndarray:
        """Flat-parameter gradient of log pi(action | obs), for gradient checks."""
        mu, _, cache = self.forward(obs)
        a = np.atleast_2d(action)
        std = np.exp(self.params["log_std"])
        dmu = (a - mu) / std**2
        grads = self.backward(cache, dmu, np.zeros(mu.shape[0]))
        grads["log_std"] = (((a - mu) / std) ** 2 - 1.0).sum(axis=0)
        return np.concatenate([grads[k].ravel() for k in _PARAM_KEYS])


class RewardScaler:
    """Running std of episode returns, used to rescale rewards per learner.

    Dollar-scale returns (1e4..1e5 here) swamp the shared-trunk value loss
    under gradient clipping; dividing rewards by the running return std keeps
    value targets O(1) without touching the (scale-free) normalized policy
    advantages. The scale only ever shrinks rewards — a learner whose returns
    are already small (the near-zero-sum makers) is left untouched rather
    than having its weak signal amplified. Training-loop state only; never
    persisted.
    """

    def __init__(self):
        self.count = 0
        self.mean = 0.0
        self._m2 = 0.0

    def update(self, episode_return: float) -> None:
        self.count += 1
        delta = episode_return - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (episode_return - self.mean)

    @property
    def scale(self) -> float:
        if self.count < 2:
            return 1.0
        std = math.sqrt(self._m2 / (self.count - 1))
        return min(1.0, 1.0 / std) if std > 1e-8 else 1.0


class RunningNormalizer:
    """Per-dimension running mean/std; frozen at evaluation time."""

    def __init__(self, dim: int):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 0.0

    def update(self, batch: np.ndarray) -> None:
        batch = np.atleast_2d(batch)
        b_mean = batch.mean(axis=0)
        b_var = batch.var(axis=0)
        b_count = batch.shape[0]
        if self.count == 0:
            self.mean, self.var, self.count = b_mean, b_var, float(b_count)
            return
        total = self.count + b_count
        delta = b_mean - self.mean
        self.mean = self.mean + delta * (b_count / total)
        m_a = self.var * self.count
        m_b = b_var * b_count
        self.var = (m_a + m_b + delta**2 * self.count * b_count / total) / total
        self.count = total

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / np.sqrt(self.var + 1e-8)


class GaussianPolicy:
    """MLP policy plus its observation normalizer.

    Calling the object returns the deterministic (mean) action for a raw
    observation — the evaluation-time interface. ``step`` is the stochastic
    rollout interface and returns the normalized observation actually fed to
    the network so updates see exactly what the policy saw.
    """

    def __init__(self, obs_dim: int, act_dim: int = 1,
                 rng: np.random.Generator | None = None):
        self.net = MlpPolicy(obs_dim, act_dim, rng=rng)
        self.normalizer = RunningNormalizer(obs_dim)
        self.adapt_normalizer = True

    def step(self, obs: np.ndarray, rng: np.random.Generator):
        if self.adapt_normalizer:
            self.normalizer.update(obs)
        norm_obs = self.normalizer.normalize(obs)
        action, logp, value = self.net.sample(norm_obs, rng)
        return action, logp, value, norm_obs

    def __call__(self, obs: np.ndarray) -> float:
        act = self.net.mean_action(self.normalizer.normalize(obs))
        return float(act[0]) if act.size == 1 else act


def save_policy(policy: GaussianPolicy, path) -> None:
    np.savez(
        path,
        version=np.array([CHECKPOINT_VERSION]),
        obs_dim=np.array([policy.net.obs_dim]),
        act_dim=np.array([policy.net.act_dim]),
        hidden=np.array([policy.net.hidden]),
        flat_params=policy.net.flat_params,
        norm_mean=policy.normalizer.mean,
        norm_var=policy.normalizer.var,
        norm_count=np.array([policy.normalizer.count]),
    )


def load_policy(path) -> GaussianPolicy:
    try:
        with np.load(path) as data:
            if "version" not in data or int(data["version"][0]) != CHECKPOINT_VERSION:
                raise VersionMismatch(f"unsupported checkpoint version in {path}")
            policy = GaussianPolicy(int(data["obs_dim"][0]), int(data["act_dim"][0]))
            policy.net.flat_params = data["flat_params"]
            policy.normalizer.mean = data["norm_mean"].copy()
            policy.normalizer.var = data["norm_var"].copy()
            policy.normalizer.count = float(data["norm_count"][0])
            policy.adapt_normalizer = False
            return policy
    except VersionMismatch:
        raise
    except Exception as exc:  # zip/pickle/key errors: not a checkpoint
        raise VersionMismatch(f"cannot read checkpoint {path}: {exc}") from exc


# -- rollout storage and advantage estimation ----------------------------------


@dataclass
class RolloutBuffer:
    """Flat storage of complete episodes for one learner."""

    observations: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)
    dones: list = field(default_factory=list)

    def add(self, obs, action, logp, reward, value, done) -> None:
        self.observations.append(np.asarray(obs, dtype=float))
        self.actions.append(np.atleast_1d(np.asarray(action, dtype=float)))
        self.log_probs.append(float(logp))
        self.rewards.append(float(reward))
        self.values.append(float(value))
        self.dones.append(bool(done))

    def __len__(self) -> int:
        return len(self.rewards)

    def tensors(self, gamma: float, lam: float, reward_scale: float = 1.0):
        """Stacked arrays plus GAE advantages (normalized) and returns.

        ``reward_scale`` multiplies rewards before advantage estimation so
        that values are learned in rescaled units.
        """
        obs = np.stack(self.observations)
        acts = np.stack(self.actions)
        logp = np.array(self.log_probs)
        rewards = np.array(self.rewards) * reward_scale
        values = np.array(self.values)
        dones = np.array(self.dones, dtype=bool)
        adv, ret = gae_advantages(rewards, values, dones, gamma, lam)
        std = adv.std()
        norm_adv = (adv - adv.mean()) / (std + 1e-8)
        return obs, acts, logp, norm_adv, ret


def gae_advantages(rewards, values, dones, gamma: float, lam: float):
    """Generalized advantage estimation over concatenated complete episodes.

    Terminal steps bootstrap a value of zero. With lam=1 the advantage is the
    discounted return minus the value; with lam=0 it is the one-step TD
    residual.
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    dones = np.asarray(dones, dtype=bool)
    T = len(rewards)
    if T == 0 or not dones[-1]:
        raise IncompleteEpisode("buffer must end on an episode boundary")
    adv = np.zeros(T)
    running = 0.0
    for t in range(T - 1, -1, -1):
        if dones[t]:
            next_value = 0.0
            running = 0.0
        else:
            next_value = values[t + 1]
        delta = rewards[t] + gamma * next_value - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
    return adv, adv + values


# -- optimization ---------------------------------------------------------------


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            params[k] -= self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads.values():
            g *= scale
    return total


def ppo_loss_and_grads(policy: MlpPolicy, obs, actions, logp_old, advantages,
                       returns, cfg: PpoConfig):
    """Clipped-surrogate loss, its parameter gradients, and summary stats."""
    B = obs.shape[0]
    mu, value, cache = policy.forward(obs)
    logp = policy.log_prob(mu, actions)
    ratio = np.exp(logp - logp_old)
    clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
    surr_raw = ratio * advantages
    surr_clip = clipped * advantages
    policy_loss = -np.mean(np.minimum(surr_raw, surr_clip))
    value_err = value - returns
    value_loss = np.mean(value_err**2)
    entropy = policy.entropy()
    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
    if not np.isfinite(loss):
        raise NonFiniteLoss(f"loss={loss!r}")

    # d(loss)/d(logp): gradient flows only where the unclipped branch is active.
    active = surr_raw <= surr_clip
    dlogp = np.where(active, -advantages * ratio, 0.0) / B
    std = np.exp(policy.params["log_std"])
    dmu = dlogp[:, None] * (actions - mu) / std**2
    dlog_std = (dlogp[:, None] * (((actions - mu) / std) ** 2 - 1.0)).sum(axis=0)
    dlog_std -= cfg.entropy_coef * 1.0
    dvalue = cfg.value_coef * 2.0 * value_err / B
    grads = policy.backward(cache, dmu, dvalue)
    grads["log_std"] = dlog_std
    stats = {
        "loss": float(loss),
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy),
        "mean_ratio": float(ratio.mean()),
        "clip_fraction": float(np.mean(~active)),
    }
    return loss, grads, stats


def ppo_update(policy: MlpPolicy, buffer: RolloutBuffer, cfg: PpoConfig,
               rng: np.random.Generator, adam: Adam | None = None,
               reward_scale: float = 1.0) -> dict:
    """Run the PPO epochs over one rollout buffer; returns averaged stats."""
    cfg = cfg.validate()
    if len(buffer) == 0:
        raise IncompleteEpisode("empty rollout buffer")
    obs, acts, logp_old, adv, ret = buffer.tensors(cfg.gamma, cfg.gae_lambda,
                                                   reward_scale)
    if adam is None:
        adam = Adam(policy.params, cfg.learning_rate)
    B = obs.shape[0]
    mb = min(cfg.minibatch_size, B)
    agg: dict[str, float] = {}
    count = 0
    for _ in range(cfg.epochs_per_update):
        order = rng.permutation(B)
        for start in range(0, B, mb):
            idx = order[start:start + mb]
            _, grads, stats = ppo_loss_and_grads(
                policy, obs[idx], acts[idx], logp_old[idx], adv[idx], ret[idx], cfg
            )
            clip_grad_norm(grads, cfg.grad_clip)
            adam.step(policy.params, grads)
            np.clip(policy.params["log_std"], *LOG_STD_BOUNDS,
                    out=policy.params["log_std"])
            for k, s in stats.items():
                agg[k] = agg.get(k, 0.0) + s
            count += 1
    return {k: s / count for k, s in agg.items()}
