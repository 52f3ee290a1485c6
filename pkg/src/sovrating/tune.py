"""Hyperparameter grids evaluated by cross-validation with shared fold seeds.

Every cell of a grid sees the same replication and fold assignments, so
differences between cells are not fold noise.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import cart
from .dataset import Dataset
from .evaluate import MlpSpec, cross_validate, fold_plan
from .mlp import MlpConfig

HIDDEN_LAYERS = (1, 2, 3)
NEURONS = (8, 16, 32, 64, 128, 256, 512)
DROPOUT = (0.0, 0.1, 0.2)
EPOCHS = (20, 50, 100, 200, 400, 800)
BATCH_SIZES = (4, 8, 16, 32)
MAX_DEPTHS = tuple(range(10, 21))
MIN_SAMPLES_SPLIT = (2, 3, 4, 5)
MIN_IMPURITY_DECREASE = tuple(round(i * 1e-5, 5) for i in range(21))
DEFAULT_ALPHAS = (0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0)


@dataclass(frozen=True)
class Protocol:
    k: int = 10
    replications: int = 5
    master_seed: int = 0


@dataclass(frozen=True)
class GridSpec:
    """Named axes with value lists.

    ``direction`` gives, per axis, +1 if larger values mean a more complex model
    and -1 if smaller values do. ``None`` means "no limit" and counts as the most
    complex setting. ``extra`` lists cells outside the product (e.g. a baseline).
    """

    name: str
    axes: tuple[tuple[str, tuple], ...]
    direction: tuple[int, ...]
    protocol: Protocol = field(default_factory=Protocol)
    extra: tuple[tuple[tuple[str, object], ...], ...] = ()

    def __post_init__(self):
        if not self.axes or any(len(v) == 0 for _, v in self.axes):
            raise ValueError("every axis needs at least one value")
        if len(self.direction) != len(self.axes):
            raise ValueError("one direction per axis")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.axes)

    def cells(self) -> list[tuple[tuple[str, object], ...]]:
        prod = [tuple(zip(self.names, combo))
                for combo in itertools.product(*(v for _, v in self.axes))]
        return prod + list(self.extra)

    @property
    def n_cells(self) -> int:
        return math.prod(len(v) for _, v in self.axes) + len(self.extra)

    def complexity(self, params) -> tuple:
        p = dict(params)
        key = []
        for (name, _), sign in zip(self.axes, self.direction):
            v = p[name]
            key.append(math.inf if v is None else sign * v)
        return tuple(key)


@dataclass(frozen=True)
class GridCell:
    params: tuple[tuple[str, object], ...]
    mean: float
    std: float
    accuracies: tuple[float, ...] = ()

    def __getitem__(self, name):
        return dict(self.params)[name]

    @property
    def values(self) -> tuple:
        return tuple(v for _, v in self.params)


@dataclass
class GridResult:
    spec: GridSpec
    cells: list[GridCell]

    @classmethod
    def from_means(cls, spec: GridSpec, means: dict) -> "GridResult":
        """Build a result from precomputed ``{axis values tuple: mean}`` (std 0)."""
        cells = [GridCell(params, float(means[tuple(v for _, v in params)]), 0.0)
                 for params in spec.cells() if tuple(v for _, v in params) in means]
        return cls(spec, cells)

    @property
    def best_by_accuracy(self) -> GridCell:
        return select_best(self, "max_accuracy")

    @property
    def selected(self) -> GridCell:
        return select_best(self, "parsimony", 0.5)

    def cell(self, **params) -> GridCell:
        for c in self.cells:
            if dict(c.params) == params:
                return c
        raise KeyError(params)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([*self.spec.names, "mean", "std"])
        for c in self.cells:
            w.writerow([*("none" if v is None else v for v in c.values),
                        f"{c.mean:.4f}", f"{c.std:.4f}"])
        return buf.getvalue()

    def to_text(self) -> str:
        """Last axis across, remaining axes down; entries ``mean ± std``."""
        names = self.spec.names
        last_name, last_vals = self.spec.axes[-1]
        by_key = {c.values: c for c in self.cells if len(c.params) == len(names)}
        row_axes = [v for _, v in self.spec.axes[:-1]]
        col_heads = [f"{last_name}={v}" for v in last_vals]
        widths = [max(14, len(h) + 2) for h in col_heads]
        head = " ".join(f"{n:>10}" for n in names[:-1])
        lines = [f"{self.spec.name}: mean exact accuracy (%) ± std over replications",
                 head + " " + "".join(h.rjust(w) for h, w in zip(col_heads, widths))]
        for combo in itertools.product(*row_axes):
            row = " ".join(f"{str(v):>10}" for v in combo) + " "
            for v, w in zip(last_vals, widths):
                c = by_key.get((*combo, v))
                row += (f"{c.mean:.1f} ± {c.std:.1f}" if c else "-").rjust(w)
            lines.append(row)
        for c in self.cells:
            if len(c.params) == len(names) and c.values in by_key:
                continue
            desc = ", ".join(f"{n}={v}" for n, v in c.params)
            lines.append(f"{desc}: {c.mean:.1f} ± {c.std:.1f}")
        best, sel = self.best_by_accuracy, self.selected
        lines.append("best by accuracy: " + _describe(best))
        lines.append("selected (parsimony 0.5): " + _describe(sel))
        return "\n".join(lines) + "\n"


def _describe(c: GridCell) -> str:
    return ", ".join(f"{n}={v}" for n, v in c.params) + f" ({c.mean:.1f})"


def select_best(result: GridResult, rule: str = "max_accuracy", delta: float = 0.5) -> GridCell:
    """``max_accuracy``: top mean, ties to the least complex cell.
    ``parsimony``: least complex cell whose mean is at least ``best - delta``.
    """
    if not result.cells:
        raise ValueError("empty grid result")
    top = max(c.mean for c in result.cells)
    if rule == "max_accuracy":
        floor = top
    elif rule == "parsimony":
        if delta < 0:
            raise ValueError("delta must be >= 0")
        floor = top - delta
    else:
        raise ValueError(f"unknown rule {rule!r}")
    eligible = [c for c in result.cells if c.mean >= floor - 1e-9]
    return min(eligible, key=lambda c: result.spec.complexity(c.params))


def _summarize(acc: np.ndarray) -> tuple[float, float]:
    acc = np.asarray(acc, dtype=float)
    std = float(acc.std(ddof=1)) if len(acc) > 1 else 0.0
    return float(acc.mean()), std


def evaluate_grid(spec: GridSpec, data: Dataset, make_model: Callable, jobs: int = 1) -> GridResult:
    """Cross-validate ``make_model(params)`` for every cell under ``spec.protocol``."""
    p = spec.protocol
    cells = []
    for params in spec.cells():
        res = cross_validate(make_model(dict(params)), data, p.k, p.replications, p.master_seed, jobs)
        mean, std = _summarize(res.accuracies)
        cells.append(GridCell(params, mean, std, tuple(res.accuracies.tolist())))
    return GridResult(spec, cells)


# ---------------------------------------------------------------------------
# MLP grids
# ---------------------------------------------------------------------------

def mlp_structure_spec(protocol: Protocol = Protocol(), hidden_layers=HIDDEN_LAYERS,
                       neurons=NEURONS, dropout=DROPOUT) -> GridSpec:
    return GridSpec("mlp_structure",
                    (("hidden_layers", tuple(hidden_layers)), ("neurons_per_layer", tuple(neurons)),
                     ("dropout_rate", tuple(dropout))),
                    (1, 1, 1), protocol)


def mlp_estimation_spec(protocol: Protocol = Protocol(), epochs=EPOCHS,
                        batch_sizes=BATCH_SIZES) -> GridSpec:
    return GridSpec("mlp_estimation",
                    (("epochs", tuple(epochs)), ("batch_size", tuple(batch_sizes))),
                    (1, 1), protocol)


def mlp_structure_grid(data: Dataset, protocol: Protocol = Protocol(), *,
                       base: MlpConfig = MlpConfig(epochs=400, batch_size=8), jobs: int = 1,
                       **axes) -> GridResult:
    spec = mlp_structure_spec(protocol, **axes)
    return evaluate_grid(spec, data, lambda prm: MlpSpec(replace(base, **prm)), jobs)


def mlp_estimation_grid(data: Dataset, structure: MlpConfig = MlpConfig(),
                        protocol: Protocol = Protocol(), *, jobs: int = 1, **axes) -> GridResult:
    spec = mlp_estimation_spec(protocol, **axes)
    return evaluate_grid(spec, data, lambda prm: MlpSpec(replace(structure, **prm)), jobs)


# ---------------------------------------------------------------------------
# CART grids
# ---------------------------------------------------------------------------

BASELINE = (("max_depth", None), ("min_samples_split", 2), ("min_impurity_decrease", 0.0))


def cart_restriction_spec(protocol: Protocol = Protocol(), max_depths=MAX_DEPTHS,
                          min_samples_split=MIN_SAMPLES_SPLIT,
                          min_impurity_decrease=MIN_IMPURITY_DECREASE) -> GridSpec:
    return GridSpec("cart_restriction",
                    (("max_depth", tuple(max_depths)), ("min_samples_split", tuple(min_samples_split)),
                     ("min_impurity_decrease", tuple(min_impurity_decrease))),
                    (1, -1, -1), protocol, (BASELINE,))


class _PathTable:
    """Root-to-leaf node paths of test rows through one fully grown tree.

    A growth restriction turns some internal nodes into leaves; the prediction
    under it is the value of the first stopping node on each row's path.
    """

    def __init__(self, model: cart.CartModel, X):
        nodes = list(model.nodes())
        self.depth = np.array([nd.depth for nd in nodes])
        self.n_samples = np.array([nd.n_samples for nd in nodes])
        self.decrease = np.array([nd.weighted_decrease for nd in nodes])
        self.leaf = np.array([nd.is_leaf for nd in nodes])
        feat, thr, left, right, value = model._flatten()
        self.value = value
        X = np.atleast_2d(X)
        idx = np.zeros(len(X), dtype=np.int64)
        path = [idx.copy()]
        rows = np.arange(len(X))
        while not self.leaf[idx].all():
            nxt = idx.copy()
            act = ~self.leaf[idx]
            r, nd = rows[act], idx[act]
            nxt[r] = np.where(X[r, feat[nd]] <= thr[nd], left[nd], right[nd])
            idx = nxt
            path.append(idx.copy())
        self.paths = np.stack(path, axis=1)

    def predict(self, config: cart.CartConfig) -> np.ndarray:
        stop = self.leaf | (self.n_samples < config.min_samples_split) | (
            self.decrease < config.min_impurity_decrease)
        if config.max_depth is not None:
            stop |= self.depth >= config.max_depth
        first = np.argmax(stop[self.paths], axis=1)
        return self.value[self.paths[np.arange(len(self.paths)), first]]


def _cart_correct(data: Dataset, protocol: Protocol, n_cells: int,
                  per_fold: Callable[[cart.CartModel, np.ndarray], Sequence[np.ndarray]]) -> np.ndarray:
    """Exact-accuracy % per (cell, replication); each fold's tree is grown once."""
    X, y = data.X, data.y
    n = len(y)
    correct = np.zeros((n_cells, protocol.replications), dtype=np.int64)
    for r, _, tr, te, _ in fold_plan(n, protocol.k, protocol.replications, protocol.master_seed):
        full = cart.grow(X[tr], y[tr])
        for c, pred in enumerate(per_fold(full, X[te])):
            correct[c, r] += int(np.count_nonzero(pred == y[te]))
    return 100.0 * correct / n


def _cells_from_acc(spec: GridSpec, params_list, acc) -> GridResult:
    cells = []
    for params, a in zip(params_list, acc):
        mean, std = _summarize(a)
        cells.append(GridCell(params, mean, std, tuple(a.tolist())))
    return GridResult(spec, cells)


def cart_restriction_grid(data: Dataset, protocol: Protocol = Protocol(), **axes) -> GridResult:
    spec = cart_restriction_spec(protocol, **axes)
    params_list = spec.cells()
    configs = [cart.CartConfig(**dict(p)) for p in params_list]

    def per_fold(full, X_test):
        table = _PathTable(full, X_test)
        return [table.predict(cfg) for cfg in configs]

    return _cells_from_acc(spec, params_list, _cart_correct(data, protocol, len(configs), per_fold))


def cart_alpha_spec(alphas=DEFAULT_ALPHAS, protocol: Protocol = Protocol()) -> GridSpec:
    alphas = tuple(float(a) for a in alphas)
    if not alphas or min(alphas) < 0:
        raise ValueError("alphas must be non-empty and >= 0")
    return GridSpec("cart_alpha", (("ccp_alpha", alphas),), (-1,), protocol)


def cart_alpha_sweep(data: Dataset, alphas=DEFAULT_ALPHAS, protocol: Protocol = Protocol()) -> GridResult:
    """Cross-validated accuracy per pruning strength, pruning each fold's full tree."""
    spec = cart_alpha_spec(alphas, protocol)
    params_list = spec.cells()
    alphas = [dict(p)["ccp_alpha"] for p in params_list]

    def per_fold(full, X_test):
        return [cart.prune(full, a).predict(X_test) for a in alphas]

    return _cells_from_acc(spec, params_list, _cart_correct(data, protocol, len(alphas), per_fold))


def restricted_predict(model: cart.CartModel, X, config: cart.CartConfig) -> np.ndarray:
    """Predictions of ``cart.restrict(model, config)`` without building the tree."""
    return _PathTable(model, X).predict(config)
