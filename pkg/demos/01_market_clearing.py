#!/usr/bin/env python3
"""Walk through the market-clearing mechanics on a toy quote set.

Market makers quote a price plus an impact coefficient; depth is the inverse
of its magnitude. Orders split pro rata by depth, and everyone clears at the
depth-weighted average price, which makes the clearing price independent of
the order size and the makers' aggregate profit exactly zero.
"""

import numpy as np

from kylelab import Quote, allocate_pro_rata, effective_lambda, vwap
from kylelab.market import LobSnapshot, quotes_from_common_prior

# Three makers with different aggressiveness. Tighter impact = deeper quote.
quotes = [
    Quote(maker_id=0, price=1010.0, lam=0.5),   # depth 2.0
    Quote(maker_id=1, price=1030.0, lam=1.5),   # depth 0.667
    Quote(maker_id=2, price=1005.0, lam=0.25),  # depth 4.0
]

print("quotes (maker, price, impact, depth):")
for q in quotes:
    print(f"  maker {q.maker_id}: price {q.price:7.1f}  lam {q.lam:5.2f}  "
          f"depth {1 / abs(q.lam):5.2f}")

flow = 120.0
alloc = allocate_pro_rata(flow, quotes)
print(f"\nnet flow {flow}: allocations {np.round(alloc, 2)} "
      f"(sum {sum(alloc):.2f})")

pbar = vwap(quotes)
print(f"clearing price (depth-weighted): {pbar:.3f} cents")

# The flow size does not change the price anyone pays.
for test_flow in (10.0, 120.0, -500.0):
    a = allocate_pro_rata(test_flow, quotes)
    fill = sum(ai * qi.price for ai, qi in zip(a, quotes)) / test_flow
    print(f"  flow {test_flow:7.1f}: average fill {fill:.3f}")

# Aggregate maker profit at the clearing price is identically zero.
profit = sum(ai * (qi.price - pbar) for ai, qi in zip(alloc, quotes))
print(f"\nmaker zero-sum check: total profit = {profit:.2e} cents")

# When quotes come from a shared prior plus per-maker impact, the price
# update is linear in the flow with slope effective_lambda.
prior, q_flow = 1000.0, 80.0
lams = [0.5, 1.5, 0.25]
derived = quotes_from_common_prior(prior, lams, q_flow)
lam_eff = effective_lambda(derived)
print(f"\nprior {prior} + flow {q_flow} with impacts {lams}:")
print(f"  effective impact {lam_eff:.4f}  ->  predicted price "
      f"{prior + q_flow * lam_eff:.3f}  vs  vwap {vwap(derived):.3f}")

# The anonymous book: sorted (depth, price) rows only.
snap = LobSnapshot.from_quotes(derived, prior_vwap=vwap(derived))
print("\nanonymous book rows (depth, price):")
for depth, price in snap.rows:
    print(f"  {depth:6.2f}  {price:9.3f}")
