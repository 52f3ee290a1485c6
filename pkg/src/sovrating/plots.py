"""Matplotlib figures written next to the CSV outputs (PNG, Agg backend).

PNG metadata omits the software version so reruns are byte-identical.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import LinearSegmentedColormap  # noqa: E402

from .explain import HIGH_RGB, LOW_RGB, ShapExplanation, _tidy  # noqa: E402

_META = {"Software": None}
SHAP_CMAP = LinearSegmentedColormap.from_list(
    "shap", [tuple(c / 255 for c in LOW_RGB), tuple(c / 255 for c in HIGH_RGB)])


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)
    return path


def beeswarm_png(explanations: Sequence[ShapExplanation], path, names=None, seed: int = 0,
                 title: str = "") -> Path:
    """SHAP values per feature (most important at the top), coloured by feature value."""
    phi, _, col, order = _tidy(explanations, names)
    names = list(names) if names is not None else [f"x{i}" for i in range(phi.shape[1])]
    rng = np.random.default_rng(seed)
    fig, ax = plt.subplots(figsize=(7, 0.45 * len(order) + 1.2))
    for row, j in enumerate(order):
        ypos = len(order) - 1 - row
        jitter = rng.uniform(-0.3, 0.3, size=len(phi))
        ax.scatter(phi[:, j], ypos + jitter, c=col[:, j], cmap=SHAP_CMAP, vmin=0, vmax=1,
                   s=8, linewidths=0)
    ax.set_yticks(range(len(order)))
    ax.set_yticklabels([names[j] for j in order][::-1])
    ax.axvline(0.0, color="0.6", linewidth=0.8)
    ax.set_xlabel("SHAP value (notches)")
    if title:
        ax.set_title(title)
    sm = plt.cm.ScalarMappable(cmap=SHAP_CMAP)
    cbar = fig.colorbar(sm, ax=ax, ticks=[0, 1])
    cbar.ax.set_yticklabels(["low", "high"])
    cbar.set_label("feature value")
    fig.tight_layout()
    return _save(fig, path)


def notch_png(results, path) -> Path:
    """Grouped bars of the deviation distribution for each evaluated model."""
    labels = ["2 below", "1 below", "exact", "1 above", "2 above"]
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.8 / max(1, len(results))
    x = np.arange(len(labels))
    for i, res in enumerate(results):
        m = res.mean
        ax.bar(x + i * width, [m.below2, m.below1, m.exact, m.above1, m.above2], width,
               label=res.label)
    ax.set_xticks(x + width * (len(results) - 1) / 2)
    ax.set_xticklabels(labels)
    ax.set_ylabel("% of predictions")
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)


def grid_png(result, path) -> Path:
    """Mean accuracy (± std) per cell, cells in grid order."""
    means = np.array([c.mean for c in result.cells])
    stds = np.array([c.std for c in result.cells])
    fig, ax = plt.subplots(figsize=(8, 4))
    x = np.arange(len(means))
    ax.errorbar(x, means, yerr=stds, fmt="o", markersize=3, linewidth=0.8)
    best = result.cells.index(result.selected)
    ax.plot([best], [means[best]], "r*", markersize=10, label="selected")
    ax.set_xlabel("cell")
    ax.set_ylabel("mean exact accuracy (%)")
    ax.set_title(result.spec.name)
    ax.legend()
    fig.tight_layout()
    return _save(fig, path)
