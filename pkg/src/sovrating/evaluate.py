"""Replicated random k-fold cross-validation, notch-accuracy tables and a
paired comparison test between models."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Protocol, Sequence

import numpy as np
from scipy import stats

from . import cart, mlp, ordlogit
from .dataset import Dataset, derive_seed, make_folds
from .errors import InvalidK, LengthMismatch, MismatchedDesign


@dataclass(frozen=True)
class NotchTable:
    """Percentages of predictions by signed notch deviation, plus MAE in notches."""

    below2: float
    below1: float
    exact: float
    above1: float
    above2: float
    within1: float
    within2: float
    mae: float

    COLUMNS = ("2below", "1below", "exact", "1above", "2above", "within1", "within2", "mae")

    def values(self) -> tuple[float, ...]:
        return tuple(getattr(self, f.name) for f in fields(self))

    def check(self, tol: float = 1e-9) -> bool:
        ok1 = abs(self.within1 - (self.exact + self.below1 + self.above1)) <= tol
        ok2 = abs(self.within2 - (self.within1 + self.below2 + self.above2)) <= tol
        in_range = all(0 <= v <= 100 + tol for v in self.values()[:-1]) and self.mae >= 0
        return ok1 and ok2 and in_range

    @classmethod
    def mean(cls, tables: Sequence["NotchTable"]) -> "NotchTable":
        arr = np.array([t.values() for t in tables])
        return cls(*(float(v) for v in arr.mean(axis=0)))

    @classmethod
    def from_components(cls, below2, below1, exact, above1, above2, mae=0.0) -> "NotchTable":
        w1 = exact + below1 + above1
        return cls(below2, below1, exact, above1, above2, w1, w1 + below2 + above2, mae)

    def formatted(self) -> list[str]:
        return [f"{v:.1f}" for v in self.values()[:-1]] + [f"{self.mae:.2f}"]


def notch_table(predicted, actual) -> NotchTable:
    predicted = np.asarray(predicted, dtype=np.int64)
    actual = np.asarray(actual, dtype=np.int64)
    if predicted.shape != actual.shape or predicted.size == 0:
        raise LengthMismatch(f"predicted {predicted.shape} vs actual {actual.shape}")
    d = predicted - actual
    n = d.size
    cnt = {u: int(np.count_nonzero(d == u)) for u in (-2, -1, 0, 1, 2)}
    pct = {u: 100.0 * c / n for u, c in cnt.items()}
    within1 = 100.0 * (cnt[-1] + cnt[0] + cnt[1]) / n
    within2 = 100.0 * (cnt[-2] + cnt[-1] + cnt[0] + cnt[1] + cnt[2]) / n
    return NotchTable(pct[-2], pct[-1], pct[0], pct[1], pct[2], within1, within2,
                      float(np.abs(d).mean()))


# ---------------------------------------------------------------------------
# model specs
# ---------------------------------------------------------------------------

class ModelSpec(Protocol):
    label: str

    def fit(self, X: np.ndarray, y: np.ndarray, seed: int): ...


@dataclass(frozen=True)
class MlpSpec:
    """MLP on standardized features (scaler fitted on the training fold)."""

    config: mlp.MlpConfig = field(default_factory=mlp.MlpConfig)
    label: str = "MLP"

    def fit(self, X, y, seed):
        return mlp.train(replace(self.config, seed=seed), X, y, standardize=True)


@dataclass(frozen=True)
class CartSpec:
    """CART on raw features; a positive ``ccp_alpha`` prunes each fold's tree."""

    config: cart.CartConfig = field(default_factory=cart.CartConfig)
    label: str = "CART"

    def fit(self, X, y, seed):
        return cart.grow(X, y, self.config)


@dataclass(frozen=True)
class OlSpec:
    """Ordered logit on standardized included features (default: all but gov_debt)."""

    included: Optional[tuple] = None
    label: str = "OL"

    def fit(self, X, y, seed):
        return ordlogit.fit(X, y, self.included, compute_se=False)[0]


@dataclass(frozen=True)
class ConstantSpec:
    """Predicts one fixed class; a calibration dummy."""

    value: int
    label: str = "constant"

    def fit(self, X, y, seed):
        value = self.value

        class _Const:
            def predict(self, X):
                return np.full(len(np.atleast_2d(X)), value, dtype=np.int64)

        return _Const()


# ---------------------------------------------------------------------------
# cross-validation
# ---------------------------------------------------------------------------

@dataclass
class CvResult:
    label: str
    k: int
    replications: int
    master_seed: int
    n: int
    tables: list[NotchTable]
    predictions: np.ndarray = field(repr=False)

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([t.exact for t in self.tables])

    @property
    def mean(self) -> NotchTable:
        return NotchTable.mean(self.tables)


def replication_seed(master_seed: int, r: int) -> int:
    return derive_seed(master_seed, r)


def _fold_job(spec, X, y, train_idx, test_idx, seed):
    model = spec.fit(X[train_idx], y[train_idx], seed)
    return np.asarray(model.predict(X[test_idx]), dtype=np.int64)


def fold_plan(n: int, k: int, replications: int, master_seed: int):
    """``(r, fold, train_idx, test_idx, model_seed)`` for every job, in reduction order."""
    for r in range(replications):
        seed_r = replication_seed(master_seed, r)
        folds = make_folds(n, k, seed_r)
        for f in range(k):
            yield r, f, folds.train_indices(f), folds.test_indices(f), derive_seed(seed_r, f)


def cross_validate(spec: ModelSpec, data: Dataset, k: int = 10, replications: int = 100,
                   master_seed: int = 0, jobs: int = 1) -> CvResult:
    """Pool the out-of-fold predictions of each replication into one notch table."""
    if k < 2:
        raise InvalidK("k must be >= 2")
    if replications < 1:
        raise ValueError("replications must be >= 1")
    X, y = data.X, data.y
    n = len(y)
    preds = np.zeros((replications, n), dtype=np.int64)
    plan = list(fold_plan(n, k, replications, master_seed))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_fold_job, spec, X, y, tr, te, s) for _, _, tr, te, s in plan]
            outs = [fut.result() for fut in futures]
    else:
        outs = [_fold_job(spec, X, y, tr, te, s) for _, _, tr, te, s in plan]
    for (r, _, _, te, _), out in zip(plan, outs):
        preds[r, te] = out
    tables = [notch_table(preds[r], y) for r in range(replications)]
    return CvResult(spec.label, k, replications, master_seed, n, tables, preds)


# ---------------------------------------------------------------------------
# comparison
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Comparison:
    label_a: str
    label_b: str
    difference: float
    statistic: float
    p_value: float
    significant_at_99: bool
    degenerate: bool = False


def paired_t_test(acc_a, acc_b) -> tuple[float, float, float, bool]:
    """Two-sided paired t-test of ``acc_a - acc_b``; returns (mean diff, t, p, degenerate)."""
    d = np.asarray(acc_a, dtype=float) - np.asarray(acc_b, dtype=float)
    mean = float(d.mean())
    if len(d) < 2:
        return mean, float("nan"), float("nan"), True
    sd = float(d.std(ddof=1))
    if sd <= 1e-12 * max(1.0, abs(mean)):
        if mean == 0.0:
            return 0.0, 0.0, 1.0, True
        return mean, float(np.copysign(np.inf, mean)), 0.0, True
    t = mean / (sd / np.sqrt(len(d)))
    p = float(2.0 * stats.t.sf(abs(t), df=len(d) - 1))
    return mean, float(t), p, False


def compare_models(a: CvResult, b: CvResult) -> Comparison:
    """Paired test over per-replication exact accuracies (same folds for both models)."""
    if (a.replications, a.k, a.master_seed, a.n) != (b.replications, b.k, b.master_seed, b.n):
        raise MismatchedDesign("results must share replications, k, master seed and dataset size")
    diff, t, p, degenerate = paired_t_test(a.accuracies, b.accuracies)
    return Comparison(a.label, b.label, diff, t, p, bool(p < 0.01), degenerate)


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def results_csv(results: Sequence[CvResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", *NotchTable.COLUMNS])
    for res in results:
        w.writerow([res.label, *res.mean.formatted()])
    return buf.getvalue()


def results_text(results: Sequence[CvResult]) -> str:
    head = ["2 below", "1 below", "Exact", "1 above", "2 above", "Within 1", "Within 2", "MAE"]
    lines = [f"{'':<8}" + "".join(f"{h:>10}" for h in head)]
    for res in results:
        lines.append(f"{res.label:<8}" + "".join(f"{v:>10}" for v in res.mean.formatted()))
    if results:
        r0 = results[0]
        lines.append(f"(averages of {r0.replications} replications of {r0.k}-fold cross-validation, "
                     f"master seed {r0.master_seed}; all but MAE in %)")
    return "\n".join(lines) + "\n"


def comparisons_csv(comps: Sequence[Comparison]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model_a", "model_b", "difference", "t_statistic", "p_value", "significant_at_99", "degenerate"])
    for c in comps:
        w.writerow([c.label_a, c.label_b, f"{c.difference:.4f}", f"{c.statistic:.4f}",
                    f"{c.p_value:.6g}", str(c.significant_at_99).lower(), str(c.degenerate).lower()])
    return buf.getvalue()
