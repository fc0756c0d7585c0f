"""Market-clearing mechanics shared by every game variant.

All prices are in cents and all quantities in units of volume. A market
maker's quote is a price plus a signed impact coefficient ``lam`` (cents per
unit); the implied depth is ``1/|lam|``. Net order flow is split pro rata by
depth, every trader clears at the depth-weighted average price (the VWAP),
and the book exposes only sorted (depth, price) pairs so maker identity
cannot be recovered from it.

All functions here are pure and safe to call concurrently.
"""

from __future__ import annotations

import math
from typing import Iterable, NamedTuple, Sequence

from .errors import EmptyQuoteSet, ZeroLambda


class Quote(NamedTuple):
    """One market maker's standing quote."""

    maker_id: int
    price: float  # cents
    lam: float  # impact coefficient, cents per unit; must be nonzero


class NetOrderFlow(NamedTuple):
    """Signed per-step order flow by origin; ``total`` is their sum."""

    informed: float
    liquidity: float
    noise: float
    total: float

    @classmethod
    def build(cls, informed: float = 0.0, liquidity: float = 0.0, noise: float = 0.0):
        return cls(informed, liquidity, noise, informed + liquidity + noise)


class LobSnapshot(NamedTuple):
    """Anonymous book: (depth, price) rows sorted by price, plus prior VWAP.

    Rows keep the stable order of maker index on price ties, so snapshots are
    deterministic under fixed seeds.
    """

    rows: tuple[tuple[float, float], ...]
    prior_vwap: float

    @classmethod
    def from_quotes(cls, quotes: Sequence[Quote], prior_vwap: float) -> "LobSnapshot":
        _check_quotes(quotes)
        ordered = sorted(quotes, key=lambda q: q.price)  # sorted() is stable
        rows = tuple((1.0 / abs(q.lam), q.price) for q in ordered)
        return cls(rows, prior_vwap)

    def flatten(self) -> list[float]:
        """Rows flattened as [d_1, p_1, ..., d_M, p_M] for observations."""
        out: list[float] = []
        for depth, price in self.rows:
            out.extend((depth, price))
        return out


def _check_quotes(quotes: Sequence[Quote]) -> None:
    if len(quotes) == 0:
        raise EmptyQuoteSet("at least one quote is required")
    for q in quotes:
        if q.lam == 0.0 or not math.isfinite(q.lam):
            raise ZeroLambda(f"maker {q.maker_id} quoted lambda={q.lam!r}")


def _depths(quotes: Sequence[Quote]) -> list[float]:
    d = [1.0 / abs(q.lam) for q in quotes]
    if sum(d) == 0.0:
        raise ZeroLambda("total depth underflowed to zero")
    return d


def allocate_pro_rata(total_flow: float, quotes: Sequence[Quote]) -> list[float]:
    """Split ``total_flow`` across makers proportionally to depth 1/|lam|.

    The allocations sum to ``total_flow`` exactly in real arithmetic and to
    within ~1e-9 relative in floating point.
    """
    _check_quotes(quotes)
    d = _depths(quotes)
    total_depth = sum(d)
    return [total_flow * di / total_depth for di in d]


def vwap(quotes: Sequence[Quote]) -> float:
    """Depth-weighted average quote price.

    Because pro-rata allocations are proportional to depth, this is the price
    every trader pays regardless of the size of the net flow, and it always
    lies between the lowest and highest quoted price.
    """
    _check_quotes(quotes)
    d = _depths(quotes)
    return sum(di * q.price for di, q in zip(d, quotes)) / sum(d)


def effective_lambda(quotes: Sequence[Quote]) -> float:
    """Aggregate impact slope: sum of signs over total depth.

    For quotes built as ``prior + lam_i * q`` the VWAP equals
    ``prior + q * effective_lambda(quotes)``; with all coefficients equal the
    result is that common coefficient.
    """
    _check_quotes(quotes)
    d = _depths(quotes)
    signs = sum(1.0 if q.lam > 0 else -1.0 for q in quotes)
    return signs / sum(d)


def round_half_away(x: float) -> float:
    """Round to the nearest integer, halves away from zero."""
    return math.floor(x + 0.5) if x >= 0 else math.ceil(x - 0.5)


def clamp_and_tick(raw_price: float, p_min: float, p_max: float) -> float:
    """Round to the nearest integer cent, then clip into [p_min, p_max].

    Total function: never raises. The clip runs after rounding, so the result
    is an integer unless it lands on a fractional bound.
    """
    return min(max(round_half_away(raw_price), p_min), p_max)


def clamp(raw_price: float, p_min: float, p_max: float) -> float:
    """Clip a price into [p_min, p_max] without rounding."""
    return min(max(raw_price, p_min), p_max)


def quotes_from_common_prior(
    prior: float, lams: Iterable[float], flow: float
) -> list[Quote]:
    """Build the quote set implied by a shared prior and per-maker impacts."""
    return [Quote(i, prior + lam * flow, lam) for i, lam in enumerate(lams)]
