"""Pooled ordered logit fitted by maximum likelihood.

The latent score ``x'beta + eps`` (logistic ``eps``, intercept pinned at 0)
is cut into ordered classes at increasing thresholds. Thresholds are optimized
as ``t1, log(tau2 - tau1), ...`` so their order can never break.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .dataset import DEFAULT_SCHEMA, N_CLASSES, Standardizer
from .errors import Degenerate, ShapeMismatch

LOG_FLOOR = 1e-12
DEFAULT_EXCLUDED = ("gov_debt",)


def default_features(schema=DEFAULT_SCHEMA) -> list[int]:
    """All schema features except government debt."""
    return [i for i, name in enumerate(schema.names) if name not in DEFAULT_EXCLUDED]


@dataclass(eq=False)
class OrderedLogitModel:
    beta: np.ndarray
    thresholds: np.ndarray
    classes: np.ndarray = None
    n_classes: int = N_CLASSES
    feature_index: Optional[Sequence[int]] = None
    n_features_in: Optional[int] = None
    standardizer: Optional[Standardizer] = None
    feature_names: Optional[list[str]] = None

    def __post_init__(self):
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        self.thresholds = np.atleast_1d(np.asarray(self.thresholds, dtype=float))
        if self.classes is None:
            self.classes = np.arange(1, len(self.thresholds) + 2)
        self.classes = np.asarray(self.classes, dtype=np.int64)
        if len(self.classes) != len(self.thresholds) + 1:
            raise ShapeMismatch("need exactly one more class than thresholds")
        if np.any(np.diff(self.thresholds) <= 0):
            raise ValueError("thresholds must be strictly increasing")
        if self.feature_index is None:
            self.feature_index = list(range(len(self.beta)))
        self.feature_index = [int(i) for i in self.feature_index]
        if self.n_features_in is None:
            self.n_features_in = len(self.feature_index)

    def design(self, X) -> np.ndarray:
        """Select included columns (if given full rows) and standardize."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] == self.n_features_in:
            X = X[:, self.feature_index]
        elif X.shape[1] != len(self.feature_index):
            raise ShapeMismatch(
                f"expected {self.n_features_in} or {len(self.feature_index)} columns, got {X.shape[1]}")
        if self.standardizer is not None:
            X = self.standardizer.transform(X)
        return X

    def linear_predictor(self, X) -> np.ndarray:
        return self.design(X) @ self.beta

    def predict_proba(self, X) -> np.ndarray:
        return class_probabilities(self, X)

    def predict(self, X) -> np.ndarray:
        return predict(self, X)

    @property
    def coef_raw(self) -> np.ndarray:
        """Coefficients per unit of the original (unstandardized) features."""
        if self.standardizer is None:
            return self.beta.copy()
        return self.beta / self.standardizer.std


def _interval_probs(eta, upper, lower):
    """``F(upper - eta) - F(lower - eta)`` computed on the tail that avoids cancellation."""
    a = upper - eta
    b = lower - eta
    left_tail = expit(a) - expit(b)
    right_tail = expit(-b) - expit(-a)
    return np.where(b > 0, right_tail, left_tail)


def _bounds(thresholds, k):
    """Upper and lower cut for observed-class index ``k`` (0-based)."""
    tau = np.concatenate(([-np.inf], thresholds, [np.inf]))
    return tau[k + 1], tau[k]


def class_probabilities(model: OrderedLogitModel, X) -> np.ndarray:
    """Probability of every numeric class 1..n_classes; classes unseen in fitting get 0."""
    eta = model.linear_predictor(X)
    tau = np.concatenate(([-np.inf], model.thresholds, [np.inf]))
    cdf = expit(tau[None, :] - eta[:, None])
    cdf[:, 0], cdf[:, -1] = 0.0, 1.0
    p_obs = np.diff(cdf, axis=1)
    # recompute the upper half on the survival side to keep tiny probabilities accurate
    sf = expit(eta[:, None] - tau[None, :])
    sf[:, 0], sf[:, -1] = 1.0, 0.0
    p_sf = -np.diff(sf, axis=1)
    use_sf = (tau[None, :-1] - eta[:, None]) > 0
    p_obs = np.where(use_sf, p_sf, p_obs)
    out = np.zeros((len(eta), model.n_classes))
    out[:, model.classes - 1] = p_obs
    return out


def predict(model: OrderedLogitModel, X) -> np.ndarray:
    """Class with the highest probability, lowest class on ties."""
    return np.argmax(class_probabilities(model, X), axis=1) + 1


def _unpack(theta, p):
    beta = theta[:p]
    t = theta[p:]
    tau = np.cumsum(np.concatenate((t[:1], np.exp(t[1:]))))
    return beta, tau


def _pack(beta, tau):
    return np.concatenate((beta, tau[:1], np.log(np.diff(tau))))


def _loglik_and_grad(theta, Z, k, n_cut):
    """Total log-likelihood and its gradient in the (beta, t) parameterization."""
    p = Z.shape[1]
    beta, tau = _unpack(theta, p)
    eta = Z @ beta
    ext = np.concatenate(([-np.inf], tau, [np.inf]))
    upper, lower = ext[k + 1], ext[k]
    prob = _interval_probs(eta, upper, lower)
    pf = np.maximum(prob, LOG_FLOOR)
    ll = float(np.log(pf).sum())
    a, b = upper - eta, lower - eta
    fa = np.where(np.isfinite(a), expit(a) * expit(-a), 0.0)
    fb = np.where(np.isfinite(b), expit(b) * expit(-b), 0.0)
    g_eta = -(fa - fb) / pf
    g_beta = Z.T @ g_eta
    # d ll / d tau_j: rows whose upper cut is tau_j, minus rows whose lower cut is tau_j
    g_tau = np.bincount(k, weights=fa / pf, minlength=n_cut + 1)[:n_cut] \
        - np.bincount(k, weights=fb / pf, minlength=n_cut + 1)[1:n_cut + 1]
    # chain rule through the cumulative-exp threshold map
    tail = np.cumsum(g_tau[::-1])[::-1]
    g_t = tail.copy()
    g_t[1:] *= np.exp(theta[p + 1:])
    return ll, np.concatenate((g_beta, g_t))


def log_likelihood(model: OrderedLogitModel, X, y) -> float:
    """Sum of log class probabilities of the observed labels, floored at 1e-12."""
    probs = class_probabilities(model, X)
    y = np.asarray(y, dtype=np.int64)
    return float(np.log(np.maximum(probs[np.arange(len(y)), y - 1], LOG_FLOOR)).sum())


def log_likelihood_gradient(model: OrderedLogitModel, X, y) -> np.ndarray:
    """Gradient of :func:`log_likelihood` w.r.t. ``(beta, thresholds)``."""
    Z = model.design(X)
    k = np.searchsorted(model.classes, np.asarray(y, dtype=np.int64))
    p = len(model.beta)
    g = _loglik_and_grad(_pack(model.beta, model.thresholds), Z, k, len(model.thresholds))[1]
    # undo the chain rule of the log-gap map: g_t = reverse cumsum of g_tau, scaled by the gaps
    tail = g[p:].copy()
    tail[1:] /= np.diff(model.thresholds)
    g_tau = tail - np.append(tail[1:], 0.0)
    return np.concatenate((g[:p], g_tau))


@dataclass
class FitReport:
    names: list[str]
    coef: np.ndarray
    se: np.ndarray
    pvalue: np.ndarray
    log_likelihood: float
    iterations: int
    converged: bool
    history: list[float] = field(default_factory=list, repr=False)

    def to_text(self) -> str:
        width = max(12, *(len(n) for n in self.names)) + 2
        lines = [f"{'':<{width}}{'Coefficients':>14}{'S.E.':>10}{'p-value':>10}"]
        for name, c, s, p in zip(self.names, self.coef, self.se, self.pvalue):
            lines.append(f"{name:<{width}}{c:>14.4f}{s:>10.4f}{p:>10.4f}")
        lines.append(f"log-likelihood {self.log_likelihood:.4f}  iterations {self.iterations}"
                     f"  converged {str(self.converged).lower()}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "coef", "se", "pvalue"])
        for name, c, s, p in zip(self.names, self.coef, self.se, self.pvalue):
            w.writerow([name, f"{c:.10g}", f"{s:.10g}", f"{p:.10g}"])
        return buf.getvalue()


def _resolve_features(included, n_features, schema):
    if included is None:
        return default_features(schema) if n_features == len(schema) else list(range(n_features))
    out = []
    for f in included:
        out.append(schema.index(f) if isinstance(f, str) else int(f))
    return out


def fit(X, y, included=None, *, standardize: bool = True, n_classes: int = N_CLASSES,
        max_iter: int = 10_000, tol: float = 1e-6, compute_se: bool = True,
        schema=DEFAULT_SCHEMA) -> tuple[OrderedLogitModel, FitReport]:
    """Maximum-likelihood fit by gradient ascent with Barzilai-Borwein trial steps
    and Armijo backtracking (the log-likelihood never decreases).

    Convergence: infinity-norm of the mean-log-likelihood gradient below ``tol``.
    Rows are put in a canonical order first, so the result does not depend on
    input row order.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=np.int64)
    feats = _resolve_features(included, X.shape[1], schema)
    classes = np.unique(y)
    if len(classes) < 2:
        raise Degenerate("ordered logit needs at least two distinct classes")
    order = np.lexsort((*X.T[::-1], y))
    X, y = X[order], y[order]
    Xi = X[:, feats]
    scaler = Standardizer.fit(Xi) if standardize else None
    Z = scaler.transform(Xi) if scaler is not None else Xi
    n, p = Z.shape
    k = np.searchsorted(classes, y)
    n_cut = len(classes) - 1

    cum = np.cumsum(np.bincount(k, minlength=n_cut + 1))[:-1] / n
    tau0 = np.log(cum) - np.log1p(-cum)
    theta = _pack(np.zeros(p), tau0)

    def objective(th):
        ll, g = _loglik_and_grad(th, Z, k, n_cut)
        return ll / n, g / n

    f, g = objective(theta)
    history = [f * n]
    step = 1.0
    converged = bool(np.max(np.abs(g)) < tol)
    it = 0
    while not converged and it < max_iter:
        gg = float(g @ g)
        while True:
            cand = theta + step * g
            f_new, g_new = objective(cand)
            if np.isfinite(f_new) and f_new >= f + 1e-4 * step * gg:
                break
            step *= 0.5
            if step < 1e-20:
                break
        if step < 1e-20:
            break
        s_vec, y_vec = cand - theta, g_new - g
        theta, f, g = cand, f_new, g_new
        it += 1
        history.append(f * n)
        converged = bool(np.max(np.abs(g)) < tol)
        curv = -float(s_vec @ y_vec)
        step = float(s_vec @ s_vec) / curv if curv > 0 else step * 2.0
        step = min(max(step, 1e-10), 1e10)

    beta, tau = _unpack(theta, p)
    names = [schema.names[i] if X.shape[1] == len(schema) else f"x{i}" for i in feats]
    model = OrderedLogitModel(beta, tau, classes, n_classes, feats, X.shape[1], scaler, names)

    if compute_se:
        cov = _covariance(theta, Z, k, n_cut)
        se_std = np.sqrt(np.clip(np.diag(cov)[:p], 0, None))
    else:
        se_std = np.full(p, np.nan)
    scale = scaler.std if scaler is not None else np.ones(p)
    coef = beta / scale
    se = se_std / scale
    with np.errstate(divide="ignore", invalid="ignore"):
        pval = 2.0 * norm.sf(np.abs(coef / se))
    report = FitReport(names, coef, se, pval, history[-1], it, converged, history)
    return model, report


def _covariance(theta, Z, k, n_cut, h=1e-5):
    """Inverse observed information from a central-difference Hessian of the analytic gradient."""
    d = len(theta)
    H = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h * max(1.0, abs(theta[j]))
        gp = _loglik_and_grad(theta + e, Z, k, n_cut)[1]
        gm = _loglik_and_grad(theta - e, Z, k, n_cut)[1]
        H[:, j] = (gp - gm) / (2 * e[j])
    H = 0.5 * (H + H.T)
    try:
        return np.linalg.inv(-H)
    except np.linalg.LinAlgError:
        return np.linalg.pinv(-H)
