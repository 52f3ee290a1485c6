"""Exact Shapley attributions by enumerating every feature coalition.

Features outside a coalition are marginalized interventionally: the model is
averaged over background rows whose coalition columns are overwritten with the
explained instance. With 9 features that is 512 coalition values per instance,
each computed once and shared by all features.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from math import factorial
from pathlib import Path
from typing import Callable, Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np
from scipy.stats import rankdata

from .errors import EmptyBackground


@dataclass(frozen=True)
class ExplainTarget:
    """Scalar model output in notches; ``f`` maps an (n, d) array to n values."""

    f: Callable[[np.ndarray], np.ndarray]
    label: str = "model"

    def __call__(self, X) -> np.ndarray:
        return np.asarray(self.f(np.atleast_2d(np.asarray(X, dtype=float))), dtype=float)


def mlp_target(model, label: str = "MLP") -> ExplainTarget:
    """Expected numeric rating under the MLP's class probabilities."""
    return ExplainTarget(model.expected_rating, label)


def cart_target(model, label: str = "CART") -> ExplainTarget:
    return ExplainTarget(lambda X: model.predict(X).astype(float), label)


def ol_target(model, label: str = "OL") -> ExplainTarget:
    def expected(X):
        p = model.predict_proba(X)
        return p @ np.arange(1, p.shape[1] + 1, dtype=float)
    return ExplainTarget(expected, label)


@dataclass(frozen=True)
class ShapExplanation:
    phi0: float
    phi: np.ndarray
    x: np.ndarray
    fx: float

    @property
    def local_error(self) -> float:
        return abs(self.phi0 + float(self.phi.sum()) - self.fx)


def background_sample(X, size: int = 100, seed: int = 0) -> np.ndarray:
    """Up to ``size`` rows drawn without replacement (all rows if fewer)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if len(X) == 0:
        raise EmptyBackground("background set is empty")
    if len(X) <= size:
        return X.copy()
    idx = np.sort(np.random.default_rng(seed).choice(len(X), size, replace=False))
    return X[idx]


def _mask_of(S: Iterable[int] | int) -> int:
    if isinstance(S, (int, np.integer)):
        return int(S)
    m = 0
    for i in S:
        m |= 1 << int(i)
    return m


def _masks_to_bits(masks: np.ndarray, d: int) -> np.ndarray:
    return ((masks[:, None] >> np.arange(d)) & 1).astype(bool)


def coalition_value(target: ExplainTarget, x, background, S) -> float:
    """Mean model output over ``background`` with the features in ``S`` set to ``x``.

    ``S`` is an iterable of feature indices or an integer bitmask.
    """
    background = np.atleast_2d(np.asarray(background, dtype=float))
    if background.size == 0:
        raise EmptyBackground("background set is empty")
    x = np.asarray(x, dtype=float)
    bits = _masks_to_bits(np.array([_mask_of(S)]), len(x))[0]
    rows = np.where(bits, x, background)
    return float(target(rows).mean())


def coalition_values(target: ExplainTarget, x, background) -> np.ndarray:
    """Value of every coalition, indexed by bitmask (bit i set = feature i known)."""
    background = np.atleast_2d(np.asarray(background, dtype=float))
    if background.size == 0:
        raise EmptyBackground("background set is empty")
    x = np.asarray(x, dtype=float)
    d = len(x)
    masks = np.arange(1 << d)
    bits = _masks_to_bits(masks, d)
    m = len(background)
    out = np.empty(len(masks))
    chunk = max(1, 65536 // m)
    for start in range(0, len(masks), chunk):
        b = bits[start:start + chunk]
        rows = np.where(b[:, None, :], x[None, None, :], background[None, :, :])
        out[start:start + chunk] = target(rows.reshape(-1, d)).reshape(len(b), m).mean(axis=1)
    return out


def shapley_weights(d: int) -> np.ndarray:
    """``|S|! (d - |S| - 1)! / d!`` for coalition sizes 0..d-1."""
    return np.array([factorial(s) * factorial(d - s - 1) / factorial(d) for s in range(d)])


def shapley_from_values(values: np.ndarray, d: int) -> np.ndarray:
    masks = np.arange(1 << d)
    size = np.array([bin(int(mk)).count("1") for mk in masks])
    w = shapley_weights(d)
    phi = np.empty(d)
    for i in range(d):
        bit = 1 << i
        without = masks[(masks & bit) == 0]
        phi[i] = float((w[size[without]] * (values[without | bit] - values[without])).sum())
    return phi


def shapley(target: ExplainTarget, x, background) -> ShapExplanation:
    x = np.asarray(x, dtype=float)
    values = coalition_values(target, x, background)
    d = len(x)
    return ShapExplanation(float(values[0]), shapley_from_values(values, d), x.copy(),
                           float(values[(1 << d) - 1]))


def explain_rows(target: ExplainTarget, X, background) -> list[ShapExplanation]:
    return [shapley(target, x, background) for x in np.atleast_2d(np.asarray(X, dtype=float))]


@dataclass(frozen=True)
class RankedFeature:
    rank: int
    index: int
    name: str
    mean_abs_phi: float


def importance_ranking(explanations: Sequence[ShapExplanation],
                       names: Sequence[str] | None = None) -> list[RankedFeature]:
    """Features by descending mean |phi|; ties keep the lower feature index first."""
    if not explanations:
        raise ValueError("need at least one explanation")
    phi = np.array([e.phi for e in explanations])
    score = np.abs(phi).mean(axis=0)
    names = list(names) if names is not None else [f"x{i}" for i in range(phi.shape[1])]
    order = sorted(range(len(score)), key=lambda j: (-score[j], j))
    return [RankedFeature(r + 1, j, names[j], float(score[j])) for r, j in enumerate(order)]


def ranking_csv(rankings: dict[str, list[RankedFeature]]) -> str:
    """One row per feature, one rank column per model."""
    models = list(rankings)
    names = [rf.name for rf in sorted(next(iter(rankings.values())), key=lambda r: r.index)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", *(f"{m}_rank" for m in models), *(f"{m}_mean_abs_phi" for m in models)])
    by_model = {m: {rf.name: rf for rf in r} for m, r in rankings.items()}
    for name in names:
        w.writerow([name, *(by_model[m][name].rank for m in models),
                    *(f"{by_model[m][name].mean_abs_phi:.6f}" for m in models)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# beeswarm export
# ---------------------------------------------------------------------------

LOW_RGB = (0, 139, 251)
HIGH_RGB = (255, 0, 82)


def color_percentiles(values: np.ndarray) -> np.ndarray:
    """Within-column percentile rank in [0, 1] (average rank for ties, 0.5 for one row)."""
    values = np.asarray(values, dtype=float)
    n = len(values)
    if n == 1:
        return np.full(values.shape, 0.5)
    return (rankdata(values, axis=0) - 1.0) / (n - 1.0)


def _hex(c: float) -> str:
    rgb = [round(lo + (hi - lo) * c) for lo, hi in zip(LOW_RGB, HIGH_RGB)]
    return "#{:02x}{:02x}{:02x}".format(*rgb)


def _tidy(explanations, names):
    phi = np.array([e.phi for e in explanations])
    raw = np.array([e.x for e in explanations])
    col = color_percentiles(raw)
    order = [rf.index for rf in importance_ranking(explanations, names)]
    return phi, raw, col, order


def beeswarm_csv(explanations: Sequence[ShapExplanation], names: Sequence[str]) -> str:
    phi, raw, col, order = _tidy(explanations, names)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["feature", "phi", "raw_value", "color_percentile", "instance_id"])
    for j in order:
        for i in range(len(explanations)):
            w.writerow([names[j], repr(float(phi[i, j])), repr(float(raw[i, j])),
                        f"{col[i, j]:.6f}", i])
    return buf.getvalue()


def beeswarm_svg(explanations: Sequence[ShapExplanation], names: Sequence[str],
                 seed: int = 0, title: str = "") -> str:
    """Static SVG: one row per feature (most important on top), x = phi in notches."""
    phi, raw, col, order = _tidy(explanations, names)
    rng = np.random.default_rng(seed)
    left, right, top, row_h = 190.0, 30.0, 40.0, 36.0
    width = 760.0
    plot_w = width - left - right
    height = top + row_h * len(order) + 60.0
    lo, hi = float(min(phi.min(), 0.0)), float(max(phi.max(), 0.0))
    if hi - lo < 1e-12:
        lo, hi = -1.0, 1.0
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad

    def sx(v):
        return left + (v - lo) / (hi - lo) * plot_w

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}">',
        '<rect x="0" y="0" width="100%" height="100%" fill="#ffffff"/>',
    ]
    if title:
        out.append(f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="14">{escape(title)}</text>')
    zero = sx(0.0)
    bottom = top + row_h * len(order)
    out.append(f'<line x1="{zero:.2f}" y1="{top:.2f}" x2="{zero:.2f}" y2="{bottom:.2f}" '
               'stroke="#999999" stroke-width="1"/>')
    points = []
    for r, j in enumerate(order):
        cy = top + row_h * (r + 0.5)
        out.append(f'<text x="{left - 10:.1f}" y="{cy + 4:.2f}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="12">{escape(names[j])}</text>')
        out.append(f'<line x1="{left:.2f}" y1="{cy:.2f}" x2="{width - right:.2f}" y2="{cy:.2f}" '
                   'stroke="#eeeeee" stroke-width="1"/>')
        jitter = rng.uniform(-0.38, 0.38, len(explanations)) * row_h
        for i in range(len(explanations)):
            points.append(f'<circle class="point" cx="{sx(phi[i, j]):.2f}" cy="{cy + jitter[i]:.2f}" '
                          f'r="3" fill="{_hex(col[i, j])}" fill-opacity="0.8"/>')
    out.extend(points)
    out.append(f'<line x1="{left:.2f}" y1="{bottom:.2f}" x2="{width - right:.2f}" y2="{bottom:.2f}" '
               'stroke="#333333" stroke-width="1"/>')
    for tick in np.linspace(lo + pad, hi - pad, 5):
        tx = sx(tick)
        out.append(f'<line x1="{tx:.2f}" y1="{bottom:.2f}" x2="{tx:.2f}" y2="{bottom + 5:.2f}" stroke="#333333"/>')
        out.append(f'<text x="{tx:.2f}" y="{bottom + 18:.2f}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="11">{tick:.2f}</text>')
    out.append(f'<text x="{left + plot_w / 2:.1f}" y="{bottom + 40:.2f}" text-anchor="middle" '
               'font-family="sans-serif" font-size="12">SHAP value (notches from baseline)</text>')
    out.append('</svg>')
    return "\n".join(out) + "\n"


def beeswarm_export(explanations: Sequence[ShapExplanation], path: str | Path,
                    names: Sequence[str], seed: int = 0, title: str = "") -> tuple[Path, Path]:
    """Write ``<path>.csv`` (tidy points) and ``<path>.svg``; returns both paths."""
    if not explanations:
        raise ValueError("need at least one explanation")
    base = Path(path)
    if base.suffix in (".csv", ".svg"):
        base = base.with_suffix("")
    csv_path, svg_path = base.with_suffix(".csv"), base.with_suffix(".svg")
    csv_path.write_text(beeswarm_csv(explanations, names), encoding="utf-8")
    svg_path.write_text(beeswarm_svg(explanations, names, seed, title), encoding="utf-8")
    return csv_path, svg_path
