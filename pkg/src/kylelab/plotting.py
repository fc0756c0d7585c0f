"""Static SVG figures of evaluation episodes.

Output is byte-deterministic: a fixed SVG hash salt, no embedded creation
date, and the Agg backend. Price figures overlay every episode's clearing
path with the fundamental value as a dashed red reference line; inventory
figures show the liquidity trader's unfilled quantity.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .game import EpisodeTrace  # noqa: E402

_SAVEFIG_KWARGS = {"format": "svg", "metadata": {"Date": None}}


def _new_figure():
    plt.rcParams["svg.hashsalt"] = "kylelab"
    return plt.subplots(figsize=(6.0, 3.6), dpi=100)


def price_path_figure(traces: list[EpisodeTrace], path: str | Path) -> Path:
    """All episodes' price paths plus their mean and the fundamental value."""
    fig, ax = _new_figure()
    steps = np.arange(traces[0].N + 1)
    paths = np.array([t.price_path for t in traces])
    for row in paths:
        ax.plot(steps, row / 100.0, color="steelblue", lw=0.6, alpha=0.45)
    ax.plot(steps, paths.mean(axis=0) / 100.0, color="navy", lw=1.8, label="mean price")
    ax.axhline(traces[0].v / 100.0, color="red", ls="--", lw=1.2, label="fundamental value")
    ax.set_xlabel("trading step")
    ax.set_ylabel("price (dollars)")
    ax.set_title(f"transaction prices over {len(traces)} episodes")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, **_SAVEFIG_KWARGS)
    plt.close(fig)
    return path


def inventory_figure(traces: list[EpisodeTrace], path: str | Path) -> Path:
    """Unfilled-inventory trajectories of the liquidity trader."""
    fig, ax = _new_figure()
    steps = np.arange(traces[0].N + 1)
    target = max(float(t.q_remaining[0] + t.x_lt[0]) for t in traces)
    for t in traces:
        inv = np.concatenate(([t.q_remaining[0] + t.x_lt[0]], t.q_remaining))
        ax.plot(steps, inv, color="darkorange", lw=0.6, alpha=0.45)
    mean_inv = np.mean(
        [np.concatenate(([t.q_remaining[0] + t.x_lt[0]], t.q_remaining)) for t in traces],
        axis=0,
    )
    ax.plot(steps, mean_inv, color="saddlebrown", lw=1.8, label="mean inventory")
    ax.axhline(0.0, color="gray", lw=0.8)
    ax.set_xlabel("trading step")
    ax.set_ylabel("unfilled inventory (units)")
    ax.set_ylim(-0.05 * target, 1.05 * target)
    ax.set_title(f"unfilled inventory over {len(traces)} episodes")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, **_SAVEFIG_KWARGS)
    plt.close(fig)
    return path
