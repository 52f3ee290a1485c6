"""Binary classification tree grown greedily on Gini impurity, with minimal
cost-complexity pruning on squared numeric-class error.

Split search compares candidate splits with exact integer arithmetic, so the
tie rule (lowest feature index, then lowest threshold) does not depend on
floating-point rounding.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .dataset import N_CLASSES
from .errors import EmptyBranch, EmptyNode, EmptyTrainingSet, ParseError


@dataclass(frozen=True)
class CartConfig:
    max_depth: Optional[int] = None
    min_samples_split: int = 2
    min_impurity_decrease: float = 0.0
    ccp_alpha: float = 0.0

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.min_impurity_decrease < 0 or self.ccp_alpha < 0:
            raise ValueError("min_impurity_decrease and ccp_alpha must be >= 0")


@dataclass(eq=False)
class Node:
    counts: np.ndarray
    feature: int = -1
    threshold: float = 0.0
    left: Optional["Node"] = None
    right: Optional["Node"] = None
    depth: int = 0
    weighted_decrease: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    @property
    def n_samples(self) -> int:
        return int(self.counts.sum())

    @property
    def prediction(self) -> int:
        # argmax picks the first maximum, i.e. the lowest numeric class on ties
        return int(np.argmax(self.counts)) + 1

    def sse(self) -> int:
        """Squared numeric-class error of predicting ``prediction`` for every row here."""
        classes = np.arange(1, len(self.counts) + 1)
        return int((self.counts * (classes - self.prediction) ** 2).sum())


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    impurity_decrease: float


def gini_impurity(class_counts) -> float:
    counts = np.asarray(class_counts, dtype=float)
    total = counts.sum()
    if total <= 0:
        raise EmptyNode("Gini impurity of an empty node is undefined")
    p = counts / total
    return float((p * (1.0 - p)).sum())


def split_gini(left_counts, right_counts) -> float:
    """Size-weighted average impurity of the two branches."""
    left = np.asarray(left_counts, dtype=float)
    right = np.asarray(right_counts, dtype=float)
    n1, n2 = left.sum(), right.sum()
    if n1 <= 0 or n2 <= 0:
        raise EmptyBranch("both branches of a split must be non-empty")
    n = n1 + n2
    return n1 / n * gini_impurity(left) + n2 / n * gini_impurity(right)


def _class_counts(y, n_classes):
    return np.bincount(np.asarray(y, dtype=np.int64) - 1, minlength=n_classes).astype(np.int64)


def _best_in_feature(col, y_idx, n_classes):
    """Best split position on one feature.

    Returns ``(num, den, threshold)`` where ``num/den`` equals
    ``S_l/n_l + S_r/n_r`` (S = sum of squared class counts), the quantity a
    Gini split maximizes; or ``None`` if the column is constant.
    """
    order = np.argsort(col, kind="stable")
    v = col[order]
    cand = np.flatnonzero(v[:-1] < v[1:])
    if cand.size == 0:
        return None
    onehot = np.zeros((len(v), n_classes), dtype=np.int64)
    onehot[np.arange(len(v)), y_idx[order]] = 1
    cum = np.cumsum(onehot, axis=0)
    left = cum[cand]
    right = cum[-1] - left
    n_l = cand + 1
    n_r = len(v) - n_l
    s_l = (left * left).sum(axis=1)
    s_r = (right * right).sum(axis=1)
    score = s_l / n_l + s_r / n_r
    top = score.max()
    near = np.flatnonzero(score >= top - 1e-9 * max(1.0, abs(top)))
    best = None
    for j in near:  # ascending position == ascending threshold
        num = int(s_l[j]) * int(n_r[j]) + int(s_r[j]) * int(n_l[j])
        den = int(n_l[j]) * int(n_r[j])
        if best is None or num * best[1] > best[0] * den:
            best = (num, den, j)
    num, den, j = best
    i = cand[j]
    threshold = 0.5 * (v[i] + v[i + 1])
    if not threshold < v[i + 1]:  # adjacent floats: midpoint rounds up
        threshold = v[i]
    return num, den, float(threshold)


def best_split(X, y, config: CartConfig = CartConfig(), n_classes: int = N_CLASSES,
               n_total: int | None = None) -> Optional[Split]:
    """Exhaustive search over features and midpoint thresholds.

    ``impurity_decrease`` is the unweighted ``G(node) - split_gini``; the
    ``min_impurity_decrease`` test uses it weighted by ``n_node / n_total``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=np.int64)
    n = len(y)
    if n == 0:
        raise EmptyNode("best_split needs at least one row")
    n_total = n if n_total is None else n_total
    counts = _class_counts(y, n_classes)
    if n < config.min_samples_split or np.count_nonzero(counts) <= 1:
        return None
    y_idx = y - 1
    best = None
    for f in range(X.shape[1]):
        res = _best_in_feature(X[:, f], y_idx, n_classes)
        if res is None:
            continue
        num, den, thr = res
        if best is None or num * best[1] > best[0] * den:
            best = (num, den, f, thr)
    if best is None:
        return None
    num, den, f, thr = best
    s_node = int((counts * counts).sum())
    # strictly positive decrease: num/den * n > s_node / n * n ... in integers
    if num * n <= s_node * den:
        return None
    decrease = num / (den * n) - s_node / (n * n)
    if (n / n_total) * decrease < config.min_impurity_decrease:
        return None
    return Split(f, thr, float(decrease))


@dataclass(eq=False)
class CartModel:
    root: Node
    n_classes: int = N_CLASSES
    config: CartConfig = field(default_factory=CartConfig)
    _flat: Optional[tuple] = field(default=None, repr=False)

    def nodes(self) -> Iterator[Node]:
        """Preorder traversal."""
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf:
                stack.append(node.right)
                stack.append(node.left)

    @property
    def n_leaves(self) -> int:
        return sum(1 for nd in self.nodes() if nd.is_leaf)

    @property
    def n_nodes(self) -> int:
        return sum(1 for _ in self.nodes())

    @property
    def depth(self) -> int:
        return max(nd.depth for nd in self.nodes())

    def _flatten(self):
        if self._flat is None:
            nodes = list(self.nodes())
            pos = {id(nd): i for i, nd in enumerate(nodes)}
            feat = np.array([nd.feature for nd in nodes], dtype=np.int64)
            thr = np.array([nd.threshold for nd in nodes], dtype=float)
            left = np.array([pos[id(nd.left)] if not nd.is_leaf else -1 for nd in nodes], dtype=np.int64)
            right = np.array([pos[id(nd.right)] if not nd.is_leaf else -1 for nd in nodes], dtype=np.int64)
            value = np.array([nd.prediction for nd in nodes], dtype=np.int64)
            self._flat = (feat, thr, left, right, value)
        return self._flat

    def apply(self, X) -> np.ndarray:
        """Index (preorder) of the leaf each row lands in; ``x <= threshold`` goes left."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        feat, thr, left, right, _ = self._flatten()
        idx = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = left[idx] >= 0
        while active.any():
            r = rows[active]
            node = idx[r]
            go_left = X[r, feat[node]] <= thr[node]
            idx[r] = np.where(go_left, left[node], right[node])
            active = left[idx] >= 0
        return idx

    def predict(self, X) -> np.ndarray:
        return self._flatten()[4][self.apply(X)]

    def to_text(self) -> str:
        return tree_to_text(self)


def grow(X, y, config: CartConfig = CartConfig(), n_classes: int = N_CLASSES) -> CartModel:
    """Recursive greedy splitting until no admissible split remains or ``max_depth`` is hit.

    A positive ``config.ccp_alpha`` prunes the grown tree before returning it.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise EmptyTrainingSet("cannot grow a tree on zero rows")
    if y.min() < 1 or y.max() > n_classes:
        raise ValueError(f"labels must lie in 1..{n_classes}")
    n_total = len(y)
    root = Node(_class_counts(y, n_classes), depth=0)
    stack = [(root, np.arange(n_total))]
    while stack:
        node, idx = stack.pop()
        if config.max_depth is not None and node.depth >= config.max_depth:
            continue
        split = best_split(X[idx], y[idx], config, n_classes, n_total)
        if split is None:
            continue
        go_left = X[idx, split.feature] <= split.threshold
        li, ri = idx[go_left], idx[~go_left]
        node.feature, node.threshold = split.feature, split.threshold
        node.weighted_decrease = (len(idx) / n_total) * split.impurity_decrease
        node.left = Node(_class_counts(y[li], n_classes), depth=node.depth + 1)
        node.right = Node(_class_counts(y[ri], n_classes), depth=node.depth + 1)
        stack.append((node.right, ri))
        stack.append((node.left, li))
    model = CartModel(root, n_classes, config)
    if config.ccp_alpha > 0:
        model = prune(model, config.ccp_alpha)
    return model


def restrict(model: CartModel, config: CartConfig) -> CartModel:
    """The tree ``grow`` would build under the stricter growth limits in ``config``.

    Limits only decide whether a node splits, never which split it takes, so
    truncating a fully grown tree gives the same result without re-searching.
    """
    def stops(node: Node) -> bool:
        return ((config.max_depth is not None and node.depth >= config.max_depth)
                or node.n_samples < config.min_samples_split
                or node.weighted_decrease < config.min_impurity_decrease)

    def copy(node: Node) -> Node:
        out = Node(node.counts, depth=node.depth)
        if not node.is_leaf and not stops(node):
            out.feature, out.threshold = node.feature, node.threshold
            out.weighted_decrease = node.weighted_decrease
            out.left, out.right = copy(node.left), copy(node.right)
        return out

    restricted = CartModel(copy(model.root), model.n_classes, config)
    if config.ccp_alpha > 0:
        restricted = prune(restricted, config.ccp_alpha)
    return restricted


# ---------------------------------------------------------------------------
# cost-complexity pruning
# ---------------------------------------------------------------------------

def _postorder(root: Node) -> list[Node]:
    out, stack = [], [root]
    while stack:
        node = stack.pop()
        out.append(node)
        if not node.is_leaf:
            stack.append(node.left)
            stack.append(node.right)
    return out[::-1]


def cost_complexity(model: CartModel, alpha: float) -> float:
    """Sum over leaves of squared numeric-class error plus ``alpha`` per leaf."""
    leaves = [nd for nd in model.nodes() if nd.is_leaf]
    return sum(nd.sse() for nd in leaves) + alpha * len(leaves)


def prune(model: CartModel, alpha: float, X=None, y=None) -> CartModel:
    """Subtree of ``model`` minimizing ``SSE + alpha * |leaves|``.

    Leaf costs come from the class counts recorded during growth (``X, y``
    are accepted for interface symmetry and ignored). Among minimizers the
    largest subtree wins, and ``alpha == 0`` returns ``model`` unchanged.
    """
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    if alpha == 0:
        return model
    best: dict[int, tuple[int, int]] = {}  # id -> (sse, leaves) of optimal subtree
    keep: dict[int, bool] = {}
    for node in _postorder(model.root):
        own = node.sse()
        if node.is_leaf:
            best[id(node)] = (own, 1)
            continue
        sl, ll = best[id(node.left)]
        sr, lr = best[id(node.right)]
        sse_c, leaves_c = sl + sr, ll + lr
        # keep the split unless collapsing is strictly cheaper
        if own - sse_c < alpha * (leaves_c - 1):
            keep[id(node)] = False
            best[id(node)] = (own, 1)
        else:
            keep[id(node)] = True
            best[id(node)] = (sse_c, leaves_c)
    return CartModel(_copy_pruned(model.root, keep), model.n_classes, model.config)


def _copy_pruned(root: Node, keep: dict[int, bool]) -> Node:
    new_root = Node(root.counts.copy(), root.feature, root.threshold, depth=root.depth)
    stack = [(root, new_root)]
    while stack:
        old, new = stack.pop()
        if old.is_leaf or not keep.get(id(old), True):
            new.feature, new.threshold = -1, 0.0
            continue
        new.left = Node(old.left.counts.copy(), old.left.feature, old.left.threshold, depth=old.left.depth)
        new.right = Node(old.right.counts.copy(), old.right.feature, old.right.threshold, depth=old.right.depth)
        stack.append((old.left, new.left))
        stack.append((old.right, new.right))
    return new_root


def effective_alphas(model: CartModel) -> np.ndarray:
    """Sorted positive alphas at which ``prune(model, alpha)`` changes.

    Each internal node has one critical alpha: the split survives for
    ``alpha`` up to and including it and collapses beyond. It is found by
    intersecting ``SSE(node) + alpha`` with the (concave, piecewise linear)
    optimal cost of the two child subtrees.
    """
    # cost function as segments [(start, leaves, sse)] on [0, inf)
    funcs: dict[int, list[tuple[float, int, int]]] = {}
    crit: dict[int, float] = {}
    for node in _postorder(model.root):
        own = node.sse()
        if node.is_leaf:
            funcs[id(node)] = [(0.0, 1, own)]
            continue
        segs = _add_piecewise(funcs.pop(id(node.left)), funcs.pop(id(node.right)))
        a_star = None
        for k, (start, leaves, sse) in enumerate(segs):
            end = segs[k + 1][0] if k + 1 < len(segs) else np.inf
            root = (own - sse) / (leaves - 1)
            if k == 0 and root < start:
                a_star = root
                break
            if start <= root < end:
                a_star = root
                break
        crit[id(node)] = a_star
        if a_star <= 0:
            funcs[id(node)] = [(0.0, 1, own)]
        else:
            kept = [s for s in segs if s[0] < a_star]
            funcs[id(node)] = kept + [(a_star, 1, own)]
    # a node's own critical alpha only matters if no ancestor collapses first
    pos = set()
    stack = [(model.root, np.inf)]
    while stack:
        node, limit = stack.pop()
        if node.is_leaf:
            continue
        a = crit[id(node)]
        if 0 < a < limit:
            pos.add(a)
        stack.append((node.left, min(limit, a)))
        stack.append((node.right, min(limit, a)))
    return np.array(sorted(pos), dtype=float)


def _add_piecewise(f, g):
    starts = sorted({s for s, _, _ in f} | {s for s, _, _ in g})
    out = []
    for s in starts:
        lf = max(seg for seg in f if seg[0] <= s)
        lg = max(seg for seg in g if seg[0] <= s)
        out.append((s, lf[1] + lg[1], lf[2] + lg[2]))
    return out


# ---------------------------------------------------------------------------
# text persistence
# ---------------------------------------------------------------------------

_MAGIC = "sovrating-cart 1"


def tree_to_text(model: CartModel) -> str:
    """Preorder, one node per line: ``split f<idx> <= <thr>`` or ``leaf c1 c2 ... c17``."""
    lines = [_MAGIC, f"classes {model.n_classes}"]
    stack = [model.root]
    while stack:
        nd = stack.pop()
        pad = "  " * nd.depth
        if nd.is_leaf:
            lines.append(pad + "leaf " + " ".join(str(int(c)) for c in nd.counts))
        else:
            lines.append(f"{pad}split f{nd.feature} <= {nd.threshold!r}")
            stack.append(nd.right)
            stack.append(nd.left)
    return "\n".join(lines) + "\n"


def tree_from_text(text: str) -> CartModel:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != _MAGIC:
        raise ParseError("not a saved CART model", line=1)
    n_classes = int(lines[1].split()[1])
    pos = 2

    def parse(depth):
        nonlocal pos
        if pos >= len(lines):
            raise ParseError("truncated tree", line=pos + 1)
        tok = lines[pos].split()
        pos += 1
        if tok[0] == "leaf":
            counts = np.array([int(t) for t in tok[1:]], dtype=np.int64)
            if len(counts) != n_classes:
                raise ParseError("leaf count vector has wrong length", line=pos)
            return Node(counts, depth=depth)
        if tok[0] != "split" or tok[2] != "<=":
            raise ParseError(f"bad node line {lines[pos - 1]!r}", line=pos)
        node = Node(np.zeros(n_classes, dtype=np.int64), int(tok[1][1:]), float(tok[3]), depth=depth)
        node.left = parse(depth + 1)
        node.right = parse(depth + 1)
        node.counts = node.left.counts + node.right.counts
        return node

    root = parse(0)
    return CartModel(root, n_classes)


def save_tree(model: CartModel, path: str | Path) -> None:
    Path(path).write_text(tree_to_text(model), encoding="utf-8")


def load_tree(path: str | Path) -> CartModel:
    return tree_from_text(Path(path).read_text(encoding="utf-8"))


def dump(model: CartModel, feature_names=None) -> str:
    """Indented human-readable rendering of the tree."""
    names = feature_names or [f"f{i}" for i in range(64)]
    lines = []
    stack = [model.root]
    while stack:
        nd = stack.pop()
        pad = "|   " * nd.depth
        if nd.is_leaf:
            lines.append(f"{pad}class {nd.prediction}  (n={nd.n_samples})")
        else:
            lines.append(f"{pad}{names[nd.feature]} <= {nd.threshold:.6g}  (n={nd.n_samples})")
            stack.append(nd.right)
            stack.append(nd.left)
    return "\n".join(lines) + "\n"
