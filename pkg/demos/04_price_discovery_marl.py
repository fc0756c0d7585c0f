#!/usr/bin/env python3
"""Train the price-discovery game and measure how fast prices find the value.

Two market makers quote against an informed trader plus noise flow, each side
learning with its own PPO. After training we evaluate from openings 30% below
and above the fundamental and run the diagnostics battery: AR(1) decay of the
pricing error (with half-life), the impact regression, and the stylized-fact
tests. Takes a few seconds at this scaled-down budget.
"""

from pathlib import Path

import numpy as np

from kylelab import GameConfig, PpoConfig, Variant, evaluate_policies, train_marl
from kylelab.diagnostics import full_report, report_csv
from kylelab.plotting import price_path_figure

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

config = GameConfig(
    variant=Variant.KYLE_ONLY,
    num_market_makers=2,
    horizon=20,
    seed=2,
)
print("training independent PPO agents (300 episodes)...")
policies, curves = train_marl(config, PpoConfig(total_episodes=300))
print(f"informed reward per update: first {curves.rewards['informed'][0]:,.0f}, "
      f"last {curves.rewards['informed'][-1]:,.0f} dollars")

reports = []
for mode in ("down", "up"):
    traces = evaluate_policies(policies, config, mode, episodes=30)
    rep = full_report(traces, mode=mode, act_type="linear", lob=0)
    reports.append(rep)
    err_open = np.mean([abs(t.v - t.p0) for t in traces])
    err_last = np.mean([abs(t.v - t.vwap[-1]) for t in traces])
    print(f"\nmode {mode}: mean |pricing error| {err_open:.0f} -> {err_last:.0f} cents")
    print(f"  AR(1) phi {rep.phi:.3f} (p {rep.p_phi:.1e}), "
          f"half-life {rep.half_life:.2f} steps")
    print(f"  impact slope {rep.lambda_hat:.3f} (p {rep.p_lambda:.1e}), "
          f"excess kurtosis {rep.excess_kurtosis:.2f}")
    price_path_figure(traces, OUT / f"discovery_{mode}.svg")

(OUT / "discovery_report.csv").write_text(report_csv(reports))
print(f"\nwrote {OUT / 'discovery_report.csv'} and price-path figures")
