"""Figures for benchmark output."""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bench import ScalingRow, TimingRow  # noqa: E402


def plot_timing(rows: Sequence[TimingRow], path) -> None:
    depth = [r.depth for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ax1.semilogy(depth, [r.precompute_per_tree for r in rows], "o-", color="C0")
    ref = np.array(depth, float)
    base = rows[0].precompute_per_tree
    ax1.semilogy(depth, base * 6.0 ** (ref - ref[0]), "--", color="0.6", label="6x per level")
    ax1.set_xlabel("depth")
    ax1.set_ylabel("precompute per tree [s]")
    ax1.legend(frameon=False)
    ax2.plot(depth, [1e3 * r.explain_per_point for r in rows], "o-", color="C1")
    ax2.set_xlabel("depth")
    ax2.set_ylabel("explain per point [ms]")
    for ax in (ax1, ax2):
        ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_scaling(rows: Sequence[ScalingRow], path) -> None:
    size = [r.size for r in rows]
    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.loglog(size, [r.rmse for r in rows], "o-", label="RMSE")
    ax.loglog(size, [r.max_entry_rmse for r in rows], "s-", label="worst entry")
    ax.loglog(size, [r.bound for r in rows], "--", color="0.5", label="bound")
    ax.set_xlabel("|D|")
    ax.set_ylabel("error")
    ax.legend(frameon=False)
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
