"""Closed-form optimal acquisition under an exogenous time-varying impact.

A trader must buy ``Q`` units over ``N`` periods against a price that carries
temporary impact ``lam[n] * (x + u)`` on top of a mean-reverting pre-trade
price, with a quadratic running penalty ``phi`` on inventory still to acquire.
The optimal fraction of remaining inventory to buy each period comes from a
backward recursion on cost curvature ``mu``:

    mu[N] = alpha*lam[N-1] + lam[N] + phi
    mu[n] = alpha*lam[n-1] + lam[n] + phi - lam[n]^2 (1+alpha)^2 / (4 mu[n+1])
    theta[n] = 1 - lam[n] (1+alpha) / (2 mu[n+1]),  theta[N] = 1,

valid only while every ``mu[n] > 0`` (a non-positive value is an error, never
silently clamped). The noise variances play no role in the optimal schedule;
they only matter when simulating realized costs.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, LengthMismatch, NonPositiveMu


@dataclass(frozen=True)
class ImpactPath:
    """Exogenous market environment for the acquisition problem.

    ``lambdas[n-1]`` is the impact coefficient of period n (cents per unit);
    the pre-episode coefficient lam[0] is defined to be zero. ``alpha`` blends
    the previous pre-trade price with the last execution price (permanent
    impact), ``phi`` is the per-period inventory penalty, and the two
    variances drive the simulated (not the planned) cost.
    """

    lambdas: np.ndarray
    alpha: float = 0.0
    phi: float = 0.0
    sigma_eps_sq: float = 0.0
    sigma_u_sq: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "lambdas", np.asarray(self.lambdas, dtype=float))
        if self.lambdas.ndim != 1 or len(self.lambdas) == 0:
            raise InvalidInput("lambdas must be a nonempty 1-d sequence")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidInput(f"alpha={self.alpha} outside [0, 1]")
        if self.phi < 0 or self.sigma_eps_sq < 0 or self.sigma_u_sq < 0:
            raise InvalidInput("phi and variances must be nonnegative")

    def lam(self, n: int) -> float:
        """Impact coefficient of period n, with lam(0) == 0."""
        return 0.0 if n == 0 else float(self.lambdas[n - 1])


@dataclass(frozen=True)
class ExecutionSchedule:
    """Optimal acquisition plan: curvatures, fractions, sizes, inventory."""

    mu: np.ndarray  # mu[n-1] is mu^(n)
    theta: np.ndarray  # fraction of remaining inventory bought in period n
    x: np.ndarray  # order sizes; sums exactly to Q
    Q_path: np.ndarray  # remaining inventory after each period's trade
    Q: float

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        buf.write("n,mu,theta,x,Q_remaining\n")
        for n in range(1, len(self.x) + 1):
            buf.write(
                f"{n},{float(self.mu[n - 1])!r},{float(self.theta[n - 1])!r},"
                f"{float(self.x[n - 1])!r},{float(self.Q_path[n - 1])!r}\n"
            )
        return buf.getvalue()


def solve_mu(path: ImpactPath, N: int | None = None) -> np.ndarray:
    """Backward recursion for the cost curvature sequence.

    Raises NonPositiveMu at the first (largest) period where the positivity
    condition fails.
    """
    N = len(path.lambdas) if N is None else N
    if N < 1 or N > len(path.lambdas):
        raise InvalidInput(f"N={N} incompatible with {len(path.lambdas)} impact coefficients")
    a, phi = path.alpha, path.phi
    mu = np.empty(N)
    mu[N - 1] = a * path.lam(N - 1) + path.lam(N) + phi
    if mu[N - 1] <= 0:
        raise NonPositiveMu(N, mu[N - 1])
    for n in range(N - 1, 0, -1):
        lam_n = path.lam(n)
        mu[n - 1] = (
            a * path.lam(n - 1) + lam_n + phi
            - lam_n**2 * (1.0 + a) ** 2 / (4.0 * mu[n])
        )
        if mu[n - 1] <= 0:
            raise NonPositiveMu(n, mu[n - 1])
    return mu


def optimal_schedule(path: ImpactPath, Q: float, N: int | None = None) -> ExecutionSchedule:
    """Optimal order sizes for acquiring Q units over N periods.

    The final fraction is pinned to one, so the sizes telescope and sum to Q
    exactly (also in floating point).
    """
    N = len(path.lambdas) if N is None else N
    mu = solve_mu(path, N)
    theta = np.empty(N)
    for n in range(1, N):
        theta[n - 1] = 1.0 - path.lam(n) * (1.0 + path.alpha) / (2.0 * mu[n])
    theta[N - 1] = 1.0
    x = np.empty(N)
    Q_path = np.empty(N)
    remaining = float(Q)
    for n in range(N):
        x[n] = theta[n] * remaining
        remaining -= x[n]
        Q_path[n] = remaining
    return ExecutionSchedule(mu=mu, theta=theta, x=x, Q_path=Q_path, Q=float(Q))


def expected_cost(path: ImpactPath, Q: float, N: int | None = None, p_tilde0: float = 0.0) -> float:
    """Planned expected cost from the initial state: p~0 * Q + mu^(1) * Q^2."""
    mu = solve_mu(path, N)
    return p_tilde0 * Q + mu[0] * Q * Q


def simulate_cost(
    path: ImpactPath,
    x: np.ndarray,
    Q: float,
    p0: float,
    rng: np.random.Generator | None = None,
    n_paths: int = 1,
) -> np.ndarray:
    """Realized acquisition cost of a fixed schedule over noise paths.

    Implements the same objective the recursion optimizes: execution outlay
    plus ``phi`` times the squared inventory remaining at the start of each
    period (the period-1 term is the constant phi*Q^2). Vectorized over
    ``n_paths`` independent draws of noise flow and news; with both variances
    zero a single deterministic path suffices.

    Returns an array of per-path total costs (cents * units).
    """
    x = np.asarray(x, dtype=float)
    N = len(x)
    if N > len(path.lambdas):
        raise LengthMismatch(f"schedule has {N} steps but only {len(path.lambdas)} impacts")
    if rng is None:
        rng = np.random.default_rng()
    sig_u = np.sqrt(path.sigma_u_sq)
    sig_e = np.sqrt(path.sigma_eps_sq)
    u = rng.normal(0.0, sig_u, size=(n_paths, N)) if sig_u > 0 else np.zeros((n_paths, N))
    eps = rng.normal(0.0, sig_e, size=(n_paths, N)) if sig_e > 0 else np.zeros((n_paths, N))

    a = path.alpha
    p_hat = np.full(n_paths, float(p0))  # pre-trade price, period 0
    p_exec = np.full(n_paths, float(p0))  # execution price, period 0
    remaining = float(Q)
    cost = np.zeros(n_paths)
    for n in range(1, N + 1):
        p_hat = a * p_hat + (1.0 - a) * p_exec + eps[:, n - 1]
        p_exec = p_hat + path.lam(n) * (x[n - 1] + u[:, n - 1])
        cost += p_exec * x[n - 1] + path.phi * remaining**2
        remaining -= x[n - 1]
    return cost


def schedule_from_thetas(thetas: np.ndarray, Q: float) -> np.ndarray:
    """Order sizes implied by per-period fractions of remaining inventory."""
    thetas = np.asarray(thetas, dtype=float)
    x = np.empty(len(thetas))
    remaining = float(Q)
    for n, th in enumerate(thetas):
        x[n] = th * remaining
        remaining -= x[n]
    return x
