"""Price-discovery and stylized-fact diagnostics over evaluation traces.

The battery: an AR(1) fit of pricing errors (with its decay half-life), a
regression of price changes on net order flow, excess kurtosis of returns, an
Anderson-Darling normality test (parameters estimated), and Engle's ARCH-LM
test for volatility clustering. Regressions are plain OLS without intercept
and p-values use the Gaussian approximation of the t statistic; episodes are
pooled by stacking within-episode lag pairs, never across episode boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import (
    DegenerateRegressor,
    DegenerateVariance,
    InsufficientData,
)
from .game import EpisodeTrace


def _normal_sf2(t: float) -> float:
    """Two-sided p-value of a t statistic under the Gaussian approximation."""
    return float(special.erfc(abs(t) / math.sqrt(2.0)))


def _ols_no_intercept(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    sxx = float(x @ x)
    if sxx <= 0.0:
        raise DegenerateRegressor("regressor has no variation")
    b = float(x @ y) / sxx
    resid = y - b * x
    dof = max(len(x) - 1, 1)
    s2 = float(resid @ resid) / dof
    if s2 == 0.0:
        return b, 0.0
    return b, _normal_sf2(b / math.sqrt(s2 / sxx))


def half_life_from_phi(phi: float) -> float:
    """-log 2 / log |phi|: positive for |phi| < 1, negative for |phi| > 1
    (matching how explosive fits are reported), +inf at |phi| = 1, zero at
    phi = 0."""
    a = abs(phi)
    if a == 0.0:
        return 0.0
    if a == 1.0:
        return math.inf
    return -math.log(2.0) / math.log(a)


def ar1_half_life(errors) -> tuple[float, float, float]:
    """Fit e_n = phi * e_{n-1} pooled within episodes; return
    (phi, p_value, half_life).

    ``errors`` is one array or a list of per-episode arrays; each episode
    needs at least 3 observations.
    """
    if isinstance(errors, np.ndarray) and errors.ndim == 1:
        errors = [errors]
    xs, ys = [], []
    for e in errors:
        e = np.asarray(e, dtype=float)
        if len(e) < 3:
            raise InsufficientData("need >= 3 observations per episode")
        xs.append(e[:-1])
        ys.append(e[1:])
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    phi, p = _ols_no_intercept(x, y)
    return phi, p, half_life_from_phi(phi)


def kyle_regression(delta_p: np.ndarray, q: np.ndarray) -> tuple[float, float]:
    """Slope of price changes on net signed flow (no intercept); a positive,
    significant slope means order flow moves prices in its own direction."""
    delta_p = np.asarray(delta_p, dtype=float)
    q = np.asarray(q, dtype=float)
    if len(delta_p) != len(q):
        raise InsufficientData(f"length mismatch {len(delta_p)} vs {len(q)}")
    if len(q) < 3:
        raise InsufficientData("need at least 3 observations")
    return _ols_no_intercept(q, delta_p)


def excess_kurtosis(returns: np.ndarray) -> float:
    """Fourth standardized sample moment minus three."""
    r = np.asarray(returns, dtype=float)
    if len(r) < 4:
        raise InsufficientData("need at least 4 observations")
    c = r - r.mean()
    m2 = float(np.mean(c**2))
    if m2 == 0.0:
        raise DegenerateVariance("zero variance sample")
    return float(np.mean(c**4) / m2**2 - 3.0)


def anderson_darling_normality(sample: np.ndarray) -> tuple[float, float]:
    """A^2 against the normal with estimated mean and variance.

    Applies the finite-sample correction A*^2 = A^2 (1 + 0.75/n + 2.25/n^2)
    and the standard four-branch exponential p-value map for the
    estimated-parameters case. Returns (corrected statistic, p-value).
    """
    x = np.sort(np.asarray(sample, dtype=float))
    n = len(x)
    if n < 8:
        raise InsufficientData("need at least 8 observations")
    s = x.std(ddof=1)
    if s == 0.0:
        raise InsufficientData("zero variance sample")
    z = special.ndtr((x - x.mean()) / s)
    z = np.clip(z, 1e-300, 1.0 - 1e-16)
    i = np.arange(1, n + 1)
    a2 = -n - np.mean((2 * i - 1) * (np.log(z) + np.log(1.0 - z[::-1])))
    a2c = a2 * (1.0 + 0.75 / n + 2.25 / n**2)
    if a2c < 0.2:
        p = 1.0 - math.exp(-13.436 + 101.14 * a2c - 223.73 * a2c**2)
    elif a2c < 0.34:
        p = 1.0 - math.exp(-8.318 + 42.796 * a2c - 59.938 * a2c**2)
    elif a2c < 0.6:
        p = math.exp(0.9177 - 4.279 * a2c - 1.38 * a2c**2)
    elif a2c <= 13.0:
        p = math.exp(1.2937 - 5.709 * a2c + 0.0186 * a2c**2)
    else:
        p = 0.0
    return float(a2c), float(min(max(p, 0.0), 1.0))


def arch_lm(returns: np.ndarray, lags: int = 5) -> tuple[float, float]:
    """Engle's LM test: regress squared demeaned returns on their own lags
    (with intercept); LM = nobs * R^2 is chi-square with ``lags`` degrees of
    freedom under the no-ARCH null."""
    r = np.asarray(returns, dtype=float)
    n = len(r)
    if lags < 1:
        raise InsufficientData("lags must be >= 1")
    if n <= lags + 2:
        raise InsufficientData(f"need more than lags + 2 = {lags + 2} observations")
    eps2 = (r - r.mean()) ** 2
    y = eps2[lags:]
    X = np.column_stack(
        [np.ones(n - lags)] + [eps2[lags - k : n - k] for k in range(1, lags + 1)]
    )
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst == 0.0:
        raise InsufficientData("squared returns have no variation")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    ssr = float(np.sum((y - X @ coef) ** 2))
    r2 = 1.0 - ssr / sst
    nobs = len(y)
    lm = nobs * r2
    # Chi-square survival function via the regularized incomplete gamma.
    p = float(special.gammaincc(lags / 2.0, max(lm, 0.0) / 2.0))
    return float(lm), p


@dataclass
class DiscoveryReport:
    """One row of the price-discovery table; NaN marks fields whose
    statistic degenerated on the given traces."""

    act_type: str
    n_mm: int
    lob: int
    mode: str
    phi: float = math.nan
    p_phi: float = math.nan
    half_life: float = math.nan
    lambda_hat: float = math.nan
    p_lambda: float = math.nan
    excess_kurtosis: float = math.nan
    ad_p: float = math.nan
    archlm_p: float = math.nan

    CSV_HEADER = "act_type,n_mm,lob,mode,phi,p_phi,half_life,lambda,p_lambda,kurt,ad_p,archlm_p"

    def csv_row(self) -> str:
        def fmt(x: float) -> str:
            return "" if isinstance(x, float) and math.isnan(x) else repr(x)

        return ",".join(
            [self.act_type, str(self.n_mm), str(self.lob), self.mode]
            + [fmt(v) for v in (self.phi, self.p_phi, self.half_life,
                                self.lambda_hat, self.p_lambda,
                                self.excess_kurtosis, self.ad_p, self.archlm_p)]
        )


def report_csv(reports: list[DiscoveryReport], header_comment: str | None = None) -> str:
    lines = []
    if header_comment:
        lines.append(f"# {header_comment}")
    lines.append(DiscoveryReport.CSV_HEADER)
    lines.extend(r.csv_row() for r in reports)
    return "\n".join(lines) + "\n"


def full_report(traces: list[EpisodeTrace], mode: str = "",
                act_type: str = "", lob: int = 0) -> DiscoveryReport:
    """Pool evaluation episodes into one diagnostics row.

    Pricing errors include the opening price; returns are within-episode log
    differences of the clearing-price path, pooled across episodes. Fields
    whose statistic cannot be computed on the given traces stay NaN.
    """
    if not traces:
        raise InsufficientData("no traces")
    report = DiscoveryReport(
        act_type=act_type, n_mm=traces[0].M, lob=lob,
        mode=mode or traces[0].mode.value,
    )
    errors = [t.v - t.price_path for t in traces]
    try:
        report.phi, report.p_phi, report.half_life = ar1_half_life(errors)
    except (InsufficientData, DegenerateRegressor):
        pass
    dp = np.concatenate([np.diff(t.price_path) for t in traces])
    q = np.concatenate([t.q_total for t in traces])
    try:
        report.lambda_hat, report.p_lambda = kyle_regression(dp, q)
    except (InsufficientData, DegenerateRegressor):
        pass
    returns = np.concatenate([np.diff(np.log(t.price_path)) for t in traces])
    try:
        report.excess_kurtosis = excess_kurtosis(returns)
    except (InsufficientData, DegenerateVariance):
        pass
    try:
        _, report.ad_p = anderson_darling_normality(returns)
    except InsufficientData:
        pass
    try:
        _, report.archlm_p = arch_lm(returns)
    except InsufficientData:
        pass
    return report
