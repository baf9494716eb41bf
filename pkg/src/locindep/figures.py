"""Report figures for experiment results.

Only the CLI report path imports this module, so the core library carries no
plotting dependency at import time.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from locindep.experiments import LevelPowerResult, ShdResult

_ORDER_COLORS = {1: "#4878cf", 2: "#d65f5f"}


def level_power_figure(result: LevelPowerResult, path: str) -> None:
    """Grouped bars of rejection fractions per structure, one bar per order."""
    structures = list(result.config.structures)
    orders = list(result.config.orders)
    x = np.arange(len(structures), dtype=float)
    width = 0.8 / max(len(orders), 1)
    fig, ax = plt.subplots(figsize=(1.6 * len(structures) + 2, 4))
    for i, order in enumerate(orders):
        cells = [result.cell(s, order) for s in structures]
        pos = x + (i - (len(orders) - 1) / 2) * width
        ax.bar(
            pos,
            [c.fraction for c in cells],
            width=width,
            yerr=[c.se for c in cells],
            capsize=3,
            color=_ORDER_COLORS.get(order),
            label=f"order {order}",
        )
    ax.axhline(result.config.alpha, color="black", linestyle=":", linewidth=1)
    ax.set_xticks(x, structures)
    ax.set_ylabel("rejection fraction")
    ax.set_title(f"rejection rates, {result.config.repetitions} repetitions")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def pvalue_ecdf_figure(result: LevelPowerResult, path: str) -> None:
    """Empirical CDFs of the per-repetition p-values, one panel per structure."""
    structures = list(result.config.structures)
    orders = list(result.config.orders)
    ncols = min(3, len(structures))
    nrows = -(-len(structures) // ncols)
    fig, axes = plt.subplots(
        nrows, ncols, figsize=(3.2 * ncols, 3.0 * nrows), squeeze=False
    )
    for idx, s in enumerate(structures):
        ax = axes[idx // ncols][idx % ncols]
        for order in orders:
            ps = np.sort(result.p_values(s, order))
            if ps.size:
                ax.step(
                    np.concatenate(([0.0], ps, [1.0])),
                    np.concatenate(([0.0], np.arange(1, ps.size + 1) / ps.size, [1.0])),
                    where="post",
                    color=_ORDER_COLORS.get(order),
                    label=f"order {order}",
                )
        ax.plot([0, 1], [0, 1], color="grey", linewidth=0.8, linestyle="--")
        ax.set_title(s)
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
    for idx in range(len(structures), nrows * ncols):
        axes[idx // ncols][idx % ncols].axis("off")
    axes[0][0].legend(loc="lower right", fontsize=8)
    fig.suptitle("p-value ECDFs")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def shd_figure(result: ShdResult, path: str) -> None:
    """Side-by-side boxplots of the graph distances per dimension and order."""
    dims = list(result.config.dims)
    orders = list(result.config.orders)
    fig, ax = plt.subplots(figsize=(1.4 * len(dims) + 2.5, 4))
    width = 0.8 / max(len(orders), 1)
    for i, order in enumerate(orders):
        data = [result.distances(d, order) for d in dims]
        pos = [
            x + (i - (len(orders) - 1) / 2) * width
            for x in range(len(dims))
        ]
        box = ax.boxplot(
            data,
            positions=pos,
            widths=0.9 * width,
            patch_artist=True,
            medianprops={"color": "black"},
        )
        for patch in box["boxes"]:
            patch.set_facecolor(_ORDER_COLORS.get(order, "grey"))
            patch.set_alpha(0.7)
    ax.set_xticks(range(len(dims)), [str(d) for d in dims])
    ax.set_xlabel("dimension")
    ax.set_ylabel("structural Hamming distance")
    handles = [
        plt.Line2D([0], [0], color=_ORDER_COLORS.get(o), linewidth=6, alpha=0.7)
        for o in orders
    ]
    ax.legend(handles, [f"order {o}" for o in orders])
    ax.set_title(f"graph recovery, {result.config.repetitions} graphs per dimension")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
