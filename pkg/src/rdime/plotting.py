"""Figure helpers for the report path.

Figures are drawn with the object-oriented API on ``Agg`` canvases, so no
pyplot state or display is involved. PNG metadata is stripped to keep output
bytes stable between runs.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Mapping, Sequence

from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
}
PALETTE = ("#4C72B0", "#DD8452", "#55A868", "#C44E52", "#8172B3", "#937860", "#DA8BC3")


def new_figure(width: float = 7.0, height: float | None = None, ncols: int = 1):
    """Figure of ``width`` inches, golden-ratio height unless given."""
    if height is None:
        height = width * (math.sqrt(5) - 1) / 2 / max(1, ncols - 0.5)
    fig = Figure(figsize=(width, height), dpi=120)
    FigureCanvasAgg(fig)
    axes = fig.subplots(1, ncols, squeeze=False)[0]
    return fig, axes


def _apply_style(ax) -> None:
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    ax.tick_params(direction="out")
    for label in ax.get_xticklabels() + ax.get_yticklabels():
        label.set_fontsize(STYLE["xtick.labelsize"])
    ax.xaxis.label.set_fontsize(STYLE["axes.labelsize"])
    ax.yaxis.label.set_fontsize(STYLE["axes.labelsize"])
    ax.title.set_fontsize(STYLE["axes.titlesize"])


def retained_boxplot(ax, fractions: Mapping[str, Sequence[float]], title: str = "") -> None:
    """Per-query retained-fraction distributions, one box per label."""
    labels = list(fractions)
    data = [[100.0 * f for f in fractions[k]] for k in labels]
    bp = ax.boxplot(data, patch_artist=True, widths=0.6)
    for i, box in enumerate(bp["boxes"]):
        box.set_facecolor(PALETTE[i % len(PALETTE)])
        box.set_alpha(0.6)
    ax.set_xticks(range(1, len(labels) + 1), labels)
    ax.set_ylabel("dimensions retained (%)")
    ax.set_ylim(0, 105)
    if title:
        ax.set_title(title)
    _apply_style(ax)


def policy_bars(ax, values: Mapping[str, Mapping[str, float]], metric: str, title: str = "") -> None:
    """Grouped bars: one group per estimator, one bar per policy."""
    groups = list(values)
    policies: list[str] = []
    for g in groups:
        for p in values[g]:
            if p not in policies:
                policies.append(p)
    width = 0.8 / max(1, len(policies))
    for j, pol in enumerate(policies):
        xs = [i + (j - (len(policies) - 1) / 2) * width for i in range(len(groups))]
        ys = [values[g].get(pol, float("nan")) for g in groups]
        ax.bar(xs, ys, width=width, label=pol, color=PALETTE[j % len(PALETTE)])
    ax.set_xticks(range(len(groups)), groups)
    ax.set_ylabel(metric)
    ax.set_ylim(0, 1.05)
    ax.legend(frameon=False, fontsize=STYLE["legend.fontsize"], loc="upper left", bbox_to_anchor=(1.0, 1.0))
    if title:
        ax.set_title(title)
    _apply_style(ax)


def save(fig: Figure, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None})
    return path
