"""Feed-forward classifier written directly in numpy.

Hidden layers use ReLU, the output layer softmax, and training minimizes the
summed categorical cross-entropy with mini-batch Adam and inverted dropout.
All parameters live in one flat float64 buffer; ``weights``/``biases`` are views.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .dataset import DEFAULT_SCHEMA, N_CLASSES, Standardizer
from .errors import EmptyTrainingSet, ParseError, ShapeMismatch

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class MlpConfig:
    hidden_layers: int = 1
    neurons_per_layer: int = 256
    dropout_rate: float = 0.1
    epochs: int = 400
    batch_size: int = 8
    step_size: float = 0.001
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7

    def __post_init__(self):
        if self.hidden_layers < 1 or self.neurons_per_layer < 1:
            raise ValueError("need at least one hidden layer with at least one neuron")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.step_size > 0:
            raise ValueError("step_size must be > 0")


def _layout(sizes):
    """Offsets of each (W, b) pair inside the flat buffer. W is (out, in)."""
    spans, offset = [], 0
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = (offset, offset + fan_out * fan_in, (fan_out, fan_in))
        offset = w[1]
        b = (offset, offset + fan_out)
        offset = b[1]
        spans.append((w, b))
    return spans, offset


def _views(buf, spans):
    return [(buf[w0:w1].reshape(shape), buf[b0:b1]) for (w0, w1, shape), (b0, b1) in spans]


@dataclass(eq=False)
class MlpModel:
    sizes: tuple[int, ...]
    params: np.ndarray
    config: MlpConfig = field(default_factory=MlpConfig)
    standardizer: Optional[Standardizer] = None
    schema_digest: str = ""

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        self._spans, total = _layout(self.sizes)
        self.params = np.ascontiguousarray(self.params, dtype=float)
        if self.params.shape != (total,):
            raise ShapeMismatch(f"parameter buffer has {self.params.size} entries, layout needs {total}")
        self.layers = _views(self.params, self._spans)

    @classmethod
    def initialize(cls, sizes, config: MlpConfig | None = None, rng=None, **kw) -> "MlpModel":
        """Glorot-uniform weights, zero biases."""
        config = config or MlpConfig()
        rng = rng if rng is not None else np.random.default_rng(config.seed)
        spans, total = _layout(sizes)
        params = np.zeros(total)
        for (w0, w1, (fan_out, fan_in)), _ in spans:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            params[w0:w1] = rng.uniform(-limit, limit, w1 - w0)
        return cls(tuple(sizes), params, config, **kw)

    @property
    def weights(self) -> list[np.ndarray]:
        return [w for w, _ in self.layers]

    @property
    def biases(self) -> list[np.ndarray]:
        return [b for _, b in self.layers]

    @property
    def n_inputs(self) -> int:
        return self.sizes[0]

    @property
    def n_classes(self) -> int:
        return self.sizes[-1]

    def copy(self) -> "MlpModel":
        return MlpModel(self.sizes, self.params.copy(), self.config, self.standardizer, self.schema_digest)

    def _inputs(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.standardizer is not None:
            X = self.standardizer.transform(X)
        return X

    def predict_proba(self, X) -> np.ndarray:
        """Class probabilities for raw feature rows (the stored standardizer is applied)."""
        return forward(self, self._inputs(X))[0]

    def predict(self, X) -> np.ndarray:
        """Numeric class (1-based) with the highest probability; ties go to the lower class."""
        return predict_from_proba(self.predict_proba(X))

    def expected_rating(self, X) -> np.ndarray:
        p = self.predict_proba(X)
        return p @ np.arange(1, p.shape[1] + 1, dtype=float)


def relu(z):
    return np.maximum(z, 0.0)


def softmax(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(p_hat, y_onehot) -> float:
    """Summed categorical cross-entropy with probabilities floored at 1e-12."""
    p_hat = np.atleast_2d(np.asarray(p_hat, dtype=float))
    y_onehot = np.atleast_2d(np.asarray(y_onehot, dtype=float))
    return float(-(y_onehot * np.log(np.maximum(p_hat, LOG_FLOOR))).sum())


def one_hot(y, n_classes: int = N_CLASSES) -> np.ndarray:
    """One-hot rows for 1-based labels."""
    y = np.asarray(y, dtype=np.int64)
    out = np.zeros((len(y), n_classes))
    out[np.arange(len(y)), y - 1] = 1.0
    return out


def predict_from_proba(p) -> np.ndarray:
    return np.argmax(np.atleast_2d(p), axis=1) + 1


def dropout_masks(model: MlpModel, batch: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Inverted-dropout masks for each hidden layer: 0 or 1/(1-rate)."""
    rate = model.config.dropout_rate
    keep = 1.0 - rate
    return [(rng.random((batch, n)) >= rate) / keep for n in model.sizes[1:-1]]


def forward(model: MlpModel, X, masks=None, rng=None, train: bool = False):
    """Run the network on (already standardized) inputs.

    In train mode each hidden unit is dropped with probability ``dropout_rate``
    using ``masks`` (or fresh masks from ``rng``). Returns ``(probs, cache)``
    where ``cache`` holds pre-activations and layer outputs for backprop.
    """
    h = np.atleast_2d(np.asarray(X, dtype=float))
    if h.shape[1] != model.n_inputs:
        raise ShapeMismatch(f"expected {model.n_inputs} input features, got {h.shape[1]}")
    if train and masks is None and model.config.dropout_rate > 0:
        masks = dropout_masks(model, len(h), rng if rng is not None else np.random.default_rng())
    if not train:
        masks = None
    acts, pre = [h], []
    for i, (W, b) in enumerate(model.layers[:-1]):
        z = h @ W.T + b
        h = np.maximum(z, 0.0)
        if masks is not None:
            h = h * masks[i]
        pre.append(z)
        acts.append(h)
    W, b = model.layers[-1]
    logits = h @ W.T + b
    probs = softmax(logits)
    return probs, {"acts": acts, "pre": pre, "masks": masks, "logits": logits}


def backward(model: MlpModel, cache, probs, Y, grad: np.ndarray | None = None) -> np.ndarray:
    """Gradient of the summed cross-entropy w.r.t. the flat parameter buffer."""
    if grad is None:
        grad = np.empty_like(model.params)
    gviews = _views(grad, model._spans)
    acts, pre, masks = cache["acts"], cache["pre"], cache["masks"]
    delta = probs - Y
    for i in range(len(model.layers) - 1, -1, -1):
        gW, gb = gviews[i]
        np.dot(delta.T, acts[i], out=gW)
        np.sum(delta, axis=0, out=gb)
        if i == 0:
            break
        delta = delta @ model.layers[i][0]
        if masks is not None:
            delta *= masks[i - 1]
        delta *= pre[i - 1] > 0
    return grad


def gradients(model: MlpModel, X, y, masks=None) -> np.ndarray:
    """Analytic gradient of the summed cross-entropy for one batch.

    ``y`` holds 1-based labels (or a one-hot matrix). With ``masks`` given the
    pass runs in train mode with those fixed dropout masks.
    """
    Y = np.asarray(y)
    if Y.ndim == 1:
        Y = one_hot(Y, model.n_classes)
    probs, cache = forward(model, X, masks=masks, train=masks is not None)
    return backward(model, cache, probs, Y)


def loss(model: MlpModel, X, y, masks=None) -> float:
    Y = np.asarray(y)
    if Y.ndim == 1:
        Y = one_hot(Y, model.n_classes)
    probs, _ = forward(model, X, masks=masks, train=masks is not None)
    return cross_entropy(probs, Y)


def train(config: MlpConfig, X, y, *, n_classes: int = N_CLASSES,
          standardize: bool = True, init: MlpModel | None = None) -> MlpModel:
    """Mini-batch Adam on shuffled data for ``config.epochs`` passes.

    ``y`` holds labels 1..n_classes. When ``standardize`` is set, a
    :class:`Standardizer` is fitted on ``X`` and stored with the model.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise EmptyTrainingSet("cannot train on zero rows")
    if y.min() < 1 or y.max() > n_classes:
        raise ValueError(f"labels must lie in 1..{n_classes}")
    scaler = Standardizer.fit(X) if standardize else None
    Xs = scaler.transform(X) if scaler is not None else X
    rng = np.random.default_rng(config.seed)
    sizes = (X.shape[1], *([config.neurons_per_layer] * config.hidden_layers), n_classes)
    if init is None:
        model = MlpModel.initialize(sizes, config, rng, standardizer=scaler,
                                    schema_digest=DEFAULT_SCHEMA.digest() if X.shape[1] == 9 else "")
    else:
        model = init.copy()
        model.config, model.standardizer = config, scaler
    Y = one_hot(y, n_classes)
    n = len(Xs)
    bs = config.batch_size
    b1, b2, lr, eps = config.beta1, config.beta2, config.step_size, config.epsilon
    params = model.params
    grad = np.empty_like(params)
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    tmp = np.empty_like(params)
    dropout = config.dropout_rate > 0
    t = 0
    hidden = model.sizes[1:-1]
    keep = 1.0 - config.dropout_rate
    for _ in range(config.epochs):
        order = rng.permutation(n)
        Xe, Ye = Xs[order], Y[order]
        if dropout:
            # masks for the whole epoch, drawn in one call per layer
            epoch_masks = [(rng.random((n, k)) >= config.dropout_rate) / keep for k in hidden]
        for start in range(0, n, bs):
            stop = min(start + bs, n)
            masks = [mk[start:stop] for mk in epoch_masks] if dropout else None
            probs, cache = forward(model, Xe[start:stop], masks=masks, train=dropout)
            backward(model, cache, probs, Ye[start:stop], grad)
            t += 1
            # Adam on the batch-mean gradient; bias correction folded into the step size
            grad /= stop - start
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            np.multiply(grad, grad, out=tmp)
            tmp *= 1.0 - b2
            v += tmp
            lr_t = lr * np.sqrt(1.0 - b2 ** t) / (1.0 - b1 ** t)
            np.sqrt(v, out=tmp)
            tmp += eps
            np.divide(m, tmp, out=tmp)
            tmp *= lr_t
            params -= tmp
    return model


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

_MAGIC = "sovrating-mlp 1"


def save_model(model: MlpModel, path: str | Path) -> None:
    """Plain-text dump: header lines, layer shapes, then one parameter per line (repr)."""
    cfg = model.config
    lines = [
        _MAGIC,
        "config " + " ".join(f"{k}={getattr(cfg, k)!r}" for k in cfg.__dataclass_fields__),
        f"schema {model.schema_digest or '-'}",
    ]
    if model.standardizer is None:
        lines.append("standardizer none")
    else:
        lines.append("standardizer " + " ".join(repr(float(v)) for v in model.standardizer.mean))
        lines.append("scale " + " ".join(repr(float(v)) for v in model.standardizer.std))
    lines.append("sizes " + " ".join(str(s) for s in model.sizes))
    lines.append(f"params {model.params.size}")
    lines.extend(repr(float(v)) for v in model.params)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> MlpModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != _MAGIC:
        raise ParseError("not a saved MLP model", line=1)
    it = iter(lines[1:])
    cfg_fields = dict(kv.split("=", 1) for kv in next(it).split()[1:])
    types = {k: f.type for k, f in MlpConfig.__dataclass_fields__.items()}
    cfg = MlpConfig(**{k: (int(v) if types[k] in (int, "int") else float(v)) for k, v in cfg_fields.items()})
    digest = next(it).split()[1]
    std_line = next(it).split()
    scaler = None
    if std_line[1] != "none":
        mean = [float(v) for v in std_line[1:]]
        scale = [float(v) for v in next(it).split()[1:]]
        scaler = Standardizer(np.array(mean), np.array(scale))
    sizes = tuple(int(v) for v in next(it).split()[1:])
    count = int(next(it).split()[1])
    params = np.array([float(next(it)) for _ in range(count)])
    return MlpModel(sizes, params, cfg, scaler, "" if digest == "-" else digest)


def with_config(config: MlpConfig, **changes) -> MlpConfig:
    return replace(config, **changes)
