import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sovrating import cart, tune
from sovrating.dataset import make_folds, synthesize_dataset
from sovrating.evaluate import CartSpec, cross_validate, replication_seed
from sovrating.mlp import MlpConfig
from sovrating.tune import GridCell, GridResult, GridSpec, Protocol, select_best

from reference_tables import ESTIMATION_MEANS, STRUCTURE_MEANS


def test_grid_cell_counts():
    assert tune.mlp_structure_spec().n_cells == len(tune.mlp_structure_spec().cells()) == 63
    assert tune.mlp_estimation_spec().n_cells == len(tune.mlp_estimation_spec().cells()) == 24
    spec = tune.cart_restriction_spec()
    assert spec.n_cells == len(spec.cells()) == 925
    assert tune.MIN_IMPURITY_DECREASE[0] == 0.0 and tune.MIN_IMPURITY_DECREASE[-1] == 0.0002
    assert len(tune.MIN_IMPURITY_DECREASE) == 21 and tune.MAX_DEPTHS == tuple(range(10, 21))


def test_empty_axis_rejected():
    with pytest.raises(ValueError):
        GridSpec("x", (("a", ()),), (1,))


def test_structure_selection_on_reported_values():
    result = GridResult.from_means(tune.mlp_structure_spec(), STRUCTURE_MEANS)
    assert len(result.cells) == 63
    best = select_best(result, "max_accuracy")
    assert best.values == (2, 256, 0.2) and best.mean == 70.0
    chosen = select_best(result, "parsimony", 0.5)
    assert chosen.values == (1, 256, 0.1) and chosen.mean == 69.7


def test_estimation_selection_on_reported_values():
    result = GridResult.from_means(tune.mlp_estimation_spec(), ESTIMATION_MEANS)
    assert select_best(result, "max_accuracy").values == (200, 8)
    assert select_best(result, "parsimony", 0.5).values == (200, 8)


def test_single_cell_grid():
    spec = GridSpec("one", (("a", (3,)),), (1,))
    result = GridResult(spec, [GridCell((("a", 3),), 50.0, 1.0)])
    assert select_best(result, "max_accuracy") is result.cells[0]
    assert select_best(result, "parsimony", 5.0) is result.cells[0]


def test_unknown_rule():
    result = GridResult.from_means(tune.mlp_estimation_spec(), ESTIMATION_MEANS)
    with pytest.raises(ValueError):
        select_best(result, "fastest")


@given(st.lists(st.integers(0, 1000), min_size=24, max_size=24, unique=True))
def test_zero_delta_parsimony_equals_max_accuracy(values):
    means = {key: v / 10 for key, v in zip(ESTIMATION_MEANS, values)}
    result = GridResult.from_means(tune.mlp_estimation_spec(), means)
    assert select_best(result, "parsimony", 0.0) is select_best(result, "max_accuracy")


def test_unrestricted_depth_counts_as_most_complex():
    spec = tune.cart_restriction_spec()
    assert spec.complexity(tune.BASELINE) > spec.complexity(spec.cells()[-2])


@pytest.fixture(scope="module")
def small_panel():
    return synthesize_dataset(300, 8, "nonlinear")


def test_restriction_grid_matches_direct_cross_validation(small_panel):
    protocol = Protocol(k=4, replications=2, master_seed=5)
    result = tune.cart_restriction_grid(small_panel, protocol, max_depths=(3, 50),
                                        min_samples_split=(2, 6), min_impurity_decrease=(0.0, 0.002))
    assert len(result.cells) == 2 * 2 * 2 + 1
    for cell in result.cells:
        cfg = cart.CartConfig(**dict(cell.params))
        direct = cross_validate(CartSpec(cfg), small_panel, 4, 2, 5)
        assert np.allclose(cell.accuracies, direct.accuracies)
    inactive = result.cell(max_depth=50, min_samples_split=2, min_impurity_decrease=0.0)
    baseline = result.cell(max_depth=None, min_samples_split=2, min_impurity_decrease=0.0)
    assert inactive.accuracies == baseline.accuracies


@given(st.integers(0, 500), st.sampled_from([None, 0, 1, 3, 8]), st.integers(2, 9),
       st.sampled_from([0.0, 1e-3, 1e-2]))
def test_path_prediction_equals_restricted_tree(seed, depth, mss, mid):
    d = synthesize_dataset(80, seed, "nonlinear")
    full = cart.grow(d.X[:60], d.y[:60])
    cfg = cart.CartConfig(depth, mss, mid)
    assert np.array_equal(tune.restricted_predict(full, d.X[60:], cfg),
                          cart.restrict(full, cfg).predict(d.X[60:]))


def test_alpha_sweep(small_panel):
    protocol = Protocol(k=4, replications=2, master_seed=1)
    sweep = tune.cart_alpha_sweep(small_panel, (0.0, 3.0, 1e12), protocol)
    base = tune.cart_restriction_grid(small_panel, protocol, max_depths=(10,), min_samples_split=(2,),
                                      min_impurity_decrease=(0.0,))
    assert sweep.cell(ccp_alpha=0.0).accuracies == base.cell(
        max_depth=None, min_samples_split=2, min_impurity_decrease=0.0).accuracies
    # a root-only tree predicts each training fold's majority class
    y, n = small_panel.y, len(small_panel.y)
    expected = []
    for r in range(2):
        folds = make_folds(n, 4, replication_seed(1, r))
        hits = 0
        for f in range(4):
            tr, te = folds.train_indices(f), folds.test_indices(f)
            hits += np.sum(y[te] == np.bincount(y[tr]).argmax())
        expected.append(100 * hits / n)
    assert np.allclose(sweep.cell(ccp_alpha=1e12).accuracies, expected)


def test_alpha_sweep_rejects_negative(small_panel):
    with pytest.raises(ValueError):
        tune.cart_alpha_sweep(small_panel, (-1.0,))


def test_mlp_grids_at_reduced_scale(small_panel):
    protocol = Protocol(k=3, replications=1, master_seed=0)
    base = MlpConfig(epochs=15, batch_size=16)
    structure = tune.mlp_structure_grid(small_panel, protocol, base=base, hidden_layers=(1,),
                                        neurons=(2, 64), dropout=(0.0,))
    assert len({c.mean for c in structure.cells}) > 1
    estimation = tune.mlp_estimation_grid(small_panel, MlpConfig(neurons_per_layer=64), protocol,
                                          epochs=(2, 60), batch_sizes=(8, 32))
    best = estimation.best_by_accuracy
    assert estimation.cell(epochs=2, batch_size=32).mean < best.mean


def test_outputs(small_panel):
    result = tune.cart_alpha_sweep(small_panel, (0.0, 5.0), Protocol(3, 2, 0))
    lines = result.to_csv().splitlines()
    assert lines[0] == "ccp_alpha,mean,std" and len(lines) == 3
    assert all(c.std >= 0 for c in result.cells)
    text = result.to_text()
    assert "ccp_alpha=5.0" in text and "selected" in text
    grid = GridResult.from_means(tune.mlp_structure_spec(), STRUCTURE_MEANS)
    assert "neurons_per_layer" in grid.to_text()
    restr = tune.cart_restriction_grid(small_panel, Protocol(3, 1, 0), max_depths=(4,),
                                       min_samples_split=(2,), min_impurity_decrease=(0.0,))
    assert restr.to_csv().splitlines()[-1].startswith("none,2,0.0,")
