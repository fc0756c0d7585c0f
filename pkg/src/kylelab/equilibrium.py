"""Numerical solver for the discrete-time Kyle recursive linear equilibrium.

The equilibrium consists of sequences ``beta`` (trading intensity), ``lam``
(price impact), ``alpha``/``delta`` (value-function curvature/intercept) and
``sigma_sq`` (residual variance of the fundamental) tied together by a
backward recursion with terminal conditions ``alpha[N] = delta[N] = 0`` and a
boundary condition on the initial variance.

Solution strategy: shoot on the terminal variance. For a guessed
``sigma_sq[N]`` the whole backward pass is determined — at each period the
impact coefficient solves a scalar cubic

    2*K*a*x^3 - 2*K*x^2 - 2*S*a*x + S = 0,   K = sigma_u_sq * dt,

with ``a`` the current curvature and ``S`` the current variance (a pure
quadratic when ``a == 0``). Exactly one real root satisfies the second-order
condition ``x * (1 - a*x) > 0``; picking it and stepping the variance via
``sigma_prev = sigma / (1 - beta * lam * dt)`` yields the implied initial
variance, which is monotone in the guess, so a bisection closes the loop.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput, LengthMismatch, NoConvergence


@dataclass(frozen=True)
class KyleEquilibrium:
    """Solved equilibrium sequences.

    ``beta`` and ``lam`` have length N and are indexed by period - 1.
    ``alpha``, ``delta`` and ``sigma_sq`` have length N + 1 and are indexed by
    period, so ``alpha[0]``/``delta[0]`` give the informed trader's ex-ante
    value-function coefficients and ``sigma_sq[0]`` is the implied initial
    variance (equal to the requested one up to the solver tolerance).
    """

    beta: np.ndarray
    lam: np.ndarray
    alpha: np.ndarray
    delta: np.ndarray
    sigma_sq: np.ndarray
    sigma0_sq: float
    sigma_u_sq: float
    dt: float
    N: int

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            buf.write(f"# {header_comment}\n")
        buf.write("n,beta,lambda,alpha,delta,sigma_sq\n")
        for n in range(1, self.N + 1):
            buf.write(
                f"{n},{float(self.beta[n - 1])!r},{float(self.lam[n - 1])!r},"
                f"{float(self.alpha[n])!r},{float(self.delta[n])!r},"
                f"{float(self.sigma_sq[n])!r}\n"
            )
        return buf.getvalue()


def _impact_root(curvature: float, variance: float, K: float) -> float:
    """Solve the per-period scalar equation for the impact coefficient.

    Keeps the unique real root satisfying the second-order condition
    ``x * (1 - curvature * x) > 0``; raises NoConvergence if zero or several
    survive (the recursion left its valid domain).
    """
    if curvature == 0.0:
        return float(np.sqrt(variance / (2.0 * K)))

    coeffs = [2.0 * K * curvature, -2.0 * K, -2.0 * variance * curvature, variance]
    roots = np.roots(coeffs)
    real = [float(r.real) for r in roots if abs(r.imag) <= 1e-8 * max(1.0, abs(r))]
    admissible = [x for x in real if x * (1.0 - curvature * x) > 0.0]
    if len(admissible) != 1:
        raise NoConvergence(
            0, float("inf"),
            f"{len(admissible)} admissible roots for the impact equation "
            f"(curvature={curvature:.6g}, variance={variance:.6g})",
        )
    x = admissible[0]
    # Newton polish; np.roots is an eigenvalue method and can lose a few ulps.
    for _ in range(6):
        f = 2 * K * curvature * x**3 - 2 * K * x**2 - 2 * variance * curvature * x + variance
        fp = 6 * K * curvature * x**2 - 4 * K * x - 2 * variance * curvature
        if fp == 0.0:
            break
        step = f / fp
        x -= step
        if abs(step) <= 1e-16 * abs(x):
            break
    return x


def _backward_pass(
    terminal_sigma_sq: float, sigma_u_sq: float, dt: float, N: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Run the recursion from a terminal-variance guess back to period 0."""
    K = sigma_u_sq * dt
    beta = np.empty(N)
    lam = np.empty(N)
    alpha = np.empty(N + 1)
    delta = np.empty(N + 1)
    sigma = np.empty(N + 1)
    alpha[N] = 0.0
    delta[N] = 0.0
    sigma[N] = terminal_sigma_sq
    for n in range(N, 0, -1):
        x = _impact_root(alpha[n], sigma[n], K)
        lam[n - 1] = x
        beta[n - 1] = x * sigma_u_sq / sigma[n]
        ratio = 1.0 - beta[n - 1] * x * dt
        if not 0.0 < ratio < 1.0:
            raise NoConvergence(
                0, float("inf"), f"variance ratio {ratio:.6g} outside (0,1) at period {n}"
            )
        sigma[n - 1] = sigma[n] / ratio
        alpha[n - 1] = 1.0 / (4.0 * x * (1.0 - alpha[n] * x))
        delta[n - 1] = delta[n] + alpha[n] * x * x * sigma_u_sq * dt
    return beta, lam, alpha, delta, sigma


def solve_kyle(
    sigma0_sq: float,
    sigma_u_sq: float,
    dt: float = 1.0,
    N: int = 20,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> KyleEquilibrium:
    """Solve the N-period recursive equilibrium for a given initial variance.

    Bisects the terminal variance over (0, sigma0_sq); per backward step the
    variance at most doubles, so the bracket always contains the solution.
    Raises NoConvergence (with iteration count and best residual) if the
    boundary match does not reach ``tol * sigma0_sq`` within ``max_iter``
    bisection steps.
    """
    if not (sigma0_sq > 0 and sigma_u_sq > 0 and dt > 0 and tol > 0) or N < 1:
        raise InvalidInput(
            "need sigma0_sq > 0, sigma_u_sq > 0, dt > 0, tol > 0 and N >= 1"
        )

    def implied_sigma0(guess: float):
        parts = _backward_pass(guess, sigma_u_sq, dt, N)
        return parts[4][0], parts

    lo = sigma0_sq / 2.0 ** min(N, 60)
    hi = sigma0_sq
    best_resid = np.inf
    best_parts = None
    iterations = 0
    # Bisect as far as the floating-point bracket allows; `tol` is the
    # acceptance threshold, not the stopping target.
    for it in range(1, max_iter + 1):
        iterations = it
        guess = 0.5 * (lo + hi)
        if not lo < guess < hi:
            break
        implied, parts = implied_sigma0(guess)
        resid = abs(implied - sigma0_sq) / sigma0_sq
        if resid < best_resid:
            best_resid = resid
            best_parts = parts
        if resid == 0.0:
            break
        if implied < sigma0_sq:
            lo = guess
        else:
            hi = guess
    if best_parts is None or best_resid > tol:
        raise NoConvergence(iterations, best_resid)
    beta, lam, alpha, delta, sigma = best_parts
    return KyleEquilibrium(
        beta=beta, lam=lam, alpha=alpha, delta=delta, sigma_sq=sigma,
        sigma0_sq=sigma0_sq, sigma_u_sq=sigma_u_sq, dt=dt, N=N,
    )


def recursion_residuals(eq: KyleEquilibrium) -> dict[str, float]:
    """Max-norm residual of each equilibrium equation, plus the boundary.

    ``alpha`` and ``beta`` residuals are absolute (both quantities are O(1));
    ``lambda``, ``delta``, ``sigma`` and ``boundary`` residuals are scaled by
    the magnitude of their own equation terms so a uniform tolerance applies.
    """
    b, l, a, d, s = eq.beta, eq.lam, eq.alpha, eq.delta, eq.sigma_sq
    K = eq.sigma_u_sq * eq.dt
    r_alpha = r_beta = r_lambda = r_delta = r_sigma = 0.0
    for n in range(1, eq.N + 1):
        x = l[n - 1]
        soc = x * (1.0 - a[n] * x)
        r_alpha = max(r_alpha, abs(a[n - 1] - 1.0 / (4.0 * soc)))
        r_beta = max(
            r_beta, abs(b[n - 1] * eq.dt - (1.0 - 2.0 * a[n] * x) / (2.0 * soc))
        )
        r_lambda = max(
            r_lambda, abs(x - b[n - 1] * s[n] / eq.sigma_u_sq) / max(1.0, abs(x))
        )
        r_delta = max(
            r_delta,
            abs(d[n - 1] - d[n] - a[n] * x * x * K) / max(1.0, abs(d[n - 1])),
        )
        r_sigma = max(
            r_sigma, abs(s[n] - (1.0 - b[n - 1] * x * eq.dt) * s[n - 1]) / s[n - 1]
        )
    return {
        "alpha": r_alpha,
        "beta": r_beta,
        "lambda": r_lambda,
        "delta": r_delta,
        "sigma": r_sigma,
        "boundary": abs(s[0] - eq.sigma0_sq) / eq.sigma0_sq,
    }


def second_order_condition_holds(eq: KyleEquilibrium) -> bool:
    return all(
        eq.lam[n - 1] * (1.0 - eq.alpha[n] * eq.lam[n - 1]) > 0.0
        for n in range(1, eq.N + 1)
    )


def equilibrium_schedule(
    eq: KyleEquilibrium, v: float, p0: float, noise_draws: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate the equilibrium order/price path for one fundamental draw.

    Returns ``(orders, prices)`` of length N; ``prices[n-1]`` is the price
    after period n (the initial price ``p0`` is not repeated in the output).
    With zero noise the pricing error contracts by ``1 - lam*beta*dt`` each
    period.
    """
    u = np.asarray(noise_draws, dtype=float)
    if u.shape != (eq.N,):
        raise LengthMismatch(f"need {eq.N} noise draws, got shape {u.shape}")
    orders = np.empty(eq.N)
    prices = np.empty(eq.N)
    p = p0
    for n in range(1, eq.N + 1):
        x = eq.beta[n - 1] * (v - p) * eq.dt
        p = p + eq.lam[n - 1] * (x + u[n - 1])
        orders[n - 1] = x
        prices[n - 1] = p
    return orders, prices
