import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sovrating import cart
from sovrating.cart import CartConfig
from sovrating.errors import EmptyBranch, EmptyNode, EmptyTrainingSet

from oracles import brute_force_prune_cost, exhaustive_split


@st.composite
def small_problems(draw, max_n=50, max_features=3, max_classes=4):
    n = draw(st.integers(2, max_n))
    p = draw(st.integers(1, max_features))
    k = draw(st.integers(2, max_classes))
    X = draw(arrays(np.int64, (n, p), elements=st.integers(0, 6))).astype(float)
    y = draw(arrays(np.int64, n, elements=st.integers(1, k)))
    return X, y, k


def test_default_config_is_unrestricted():
    c = CartConfig()
    assert (c.max_depth, c.min_samples_split, c.min_impurity_decrease, c.ccp_alpha) == (None, 2, 0.0, 0.0)


def test_gini_examples():
    assert cart.gini_impurity([5, 0, 0]) == 0.0
    assert cart.gini_impurity([3, 3]) == 0.5
    assert cart.gini_impurity([2, 1, 1]) == pytest.approx(0.625)
    with pytest.raises(EmptyNode):
        cart.gini_impurity([0, 0])


@given(st.lists(st.integers(0, 20), min_size=1, max_size=17))
def test_gini_bounds(counts):
    assume(sum(counts) > 0)
    g = cart.gini_impurity(counts)
    assert -1e-15 <= g <= 1 - 1 / len(counts) + 1e-12


def test_split_gini_examples():
    assert cart.split_gini([3, 0], [0, 2]) == 0.0
    assert cart.split_gini([2, 2], [1, 1]) == pytest.approx(0.5)
    assert cart.split_gini([4, 0], [1, 3]) == pytest.approx(0.1875)
    with pytest.raises(EmptyBranch):
        cart.split_gini([0, 0], [1, 1])


def test_pure_node_has_no_split():
    assert cart.best_split(np.array([[1.0], [2.0]]), np.array([3, 3])) is None


def test_feature_tie_goes_to_lowest_index():
    X = np.array([[0.0, 0.0], [1.0, 1.0]])
    s = cart.best_split(X, np.array([1, 2]), n_classes=2)
    assert (s.feature, s.threshold) == (0, 0.5)


def _node_rows(model, X):
    """Rows reaching each node, keyed by node id."""
    out = {}
    stack = [(model.root, np.arange(len(X)))]
    while stack:
        node, idx = stack.pop()
        out[id(node)] = idx
        if not node.is_leaf:
            left = X[idx, node.feature] <= node.threshold
            stack.append((node.left, idx[left]))
            stack.append((node.right, idx[~left]))
    return out


@given(small_problems())
def test_every_split_matches_exhaustive_oracle(problem):
    X, y, k = problem
    model = cart.grow(X, y, n_classes=k)
    rows = _node_rows(model, X)
    for node in model.nodes():
        idx = rows[id(node)]
        expected = exhaustive_split(X[idx], y[idx])
        if node.is_leaf:
            assert expected is None
        else:
            assert (node.feature, node.threshold) == expected
            assert 0 < (X[idx, node.feature] <= node.threshold).sum() < len(idx)


def test_single_threshold_problem():
    X = np.array([[1.0, 5.0], [2.0, 3.0], [3.0, 9.0], [4.0, 1.0]])
    y = np.array([2, 2, 7, 7])
    m = cart.grow(X, y)
    assert m.depth == 1 and (m.predict(X) == y).all()


def test_unique_rows_are_fit_exactly(nonlinear_data):
    m = cart.grow(nonlinear_data.X, nonlinear_data.y)
    assert (m.predict(nonlinear_data.X) == nonlinear_data.y).all()


def test_max_depth_zero_is_majority_leaf():
    y = np.array([3, 3, 5, 5, 5, 1])
    m = cart.grow(np.arange(6.0)[:, None], y, CartConfig(max_depth=0))
    assert m.n_nodes == 1 and m.predict(np.array([[100.0]])).tolist() == [5]


def test_majority_tie_goes_to_lower_class():
    m = cart.grow(np.zeros((4, 1)), np.array([4, 4, 9, 9]))
    assert m.predict(np.zeros((1, 1))).tolist() == [4]


def test_threshold_boundary_goes_left():
    m = cart.grow(np.array([[0.0], [2.0]]), np.array([1, 2]))
    assert m.root.threshold == 1.0
    assert m.predict(np.array([[1.0], [1.0 + 1e-12]])).tolist() == [1, 2]


def test_empty_training_set():
    with pytest.raises(EmptyTrainingSet):
        cart.grow(np.zeros((0, 2)), np.zeros(0, dtype=int))


def test_min_impurity_decrease_is_node_weighted():
    # root split: decrease 0.5 on 4 of 4 rows; a 2-row child split: decrease 0.5 weighted by 2/4
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([1, 1, 2, 3])
    full = cart.grow(X, y, n_classes=3)
    assert full.n_leaves == 3
    assert cart.grow(X, y, CartConfig(min_impurity_decrease=0.3), n_classes=3).n_leaves == 2


@given(small_problems(max_n=30), st.integers(0, 4), st.integers(2, 5), st.sampled_from([0.0, 0.01, 0.05]))
def test_restrict_equals_regrow(problem, depth, mss, mid):
    X, y, k = problem
    cfg = CartConfig(max_depth=depth, min_samples_split=mss, min_impurity_decrease=mid)
    full = cart.grow(X, y, n_classes=k)
    assert cart.tree_to_text(cart.restrict(full, cfg)) == cart.tree_to_text(cart.grow(X, y, cfg, n_classes=k))


# ---------------------------------------------------------------------------
# pruning
# ---------------------------------------------------------------------------

def test_prune_zero_is_identity(nonlinear_data):
    m = cart.grow(nonlinear_data.X, nonlinear_data.y)
    assert cart.prune(m, 0.0) is m


def test_huge_alpha_leaves_root(nonlinear_data):
    m = cart.grow(nonlinear_data.X, nonlinear_data.y)
    p = cart.prune(m, 1e9)
    assert p.n_nodes == 1
    majority = np.bincount(nonlinear_data.y).argmax()
    assert p.predict(nonlinear_data.X[:3]).tolist() == [majority] * 3


@given(small_problems(max_n=14, max_features=2, max_classes=6), st.floats(0.01, 40.0))
def test_prune_matches_subtree_enumeration(problem, alpha):
    X, y, k = problem
    m = cart.grow(X, y, n_classes=k)
    assume(m.n_nodes <= 15)
    best, leaves = brute_force_prune_cost(m, alpha)
    p = cart.prune(m, alpha)
    assert cart.cost_complexity(p, alpha) == pytest.approx(best, abs=1e-9)
    assert p.n_leaves == leaves


@given(small_problems(max_n=40, max_features=3, max_classes=8))
def test_pruned_tree_changes_only_at_breakpoints(problem):
    X, y, k = problem
    m = cart.grow(X, y, n_classes=k)
    bps = cart.effective_alphas(m)
    edges = np.concatenate(([0.0], bps, [bps[-1] * 2 + 1 if len(bps) else 1.0]))
    texts = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        inside = [lo + (hi - lo) * f for f in (1e-6, 0.5, 1.0)]
        versions = {cart.tree_to_text(cart.prune(m, a)) for a in inside}
        assert len(versions) == 1
        texts.append(versions.pop())
    assert all(a != b for a, b in zip(texts, texts[1:]))


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def test_text_roundtrip(nonlinear_data, tmp_path):
    m = cart.grow(nonlinear_data.X, nonlinear_data.y, CartConfig(max_depth=6))
    path = tmp_path / "tree.txt"
    cart.save_tree(m, path)
    back = cart.load_tree(path)
    assert cart.tree_to_text(back) == cart.tree_to_text(m)
    assert np.array_equal(back.predict(nonlinear_data.X), m.predict(nonlinear_data.X))
    assert path.read_text().splitlines()[2].startswith("split f")


def test_dump_names_features(linear_data):
    m = cart.grow(linear_data.X, linear_data.y, CartConfig(max_depth=2))
    text = cart.dump(m, linear_data.schema.names)
    assert linear_data.schema.names[m.root.feature] in text
