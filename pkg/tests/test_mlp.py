import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sovrating import mlp
from sovrating.errors import EmptyTrainingSet, ShapeMismatch
from sovrating.mlp import MlpConfig, MlpModel

from oracles import numeric_gradient


def _zero_model(sizes):
    return MlpModel(sizes, np.zeros(mlp._layout(sizes)[1]), MlpConfig(dropout_rate=0.0))


def test_default_config_is_selected_model():
    c = MlpConfig()
    assert (c.hidden_layers, c.neurons_per_layer, c.dropout_rate, c.epochs, c.batch_size) == (1, 256, 0.1, 400, 8)
    assert (c.step_size, c.beta1, c.beta2, c.epsilon) == (0.001, 0.9, 0.999, 1e-7)


@pytest.mark.parametrize("kw", [dict(epochs=0), dict(hidden_layers=0), dict(dropout_rate=1.0),
                                dict(batch_size=0), dict(step_size=0.0)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        MlpConfig(**kw)


def test_relu_examples():
    assert mlp.relu(np.array([-3.0, 0.0, 2.0])).tolist() == [0.0, 0.0, 2.0]
    assert not mlp.relu(-np.arange(1.0, 5.0)).any()
    v = np.array([0.0, 1.5, 7.0])
    assert np.array_equal(mlp.relu(v), v)


def test_softmax_examples():
    assert np.allclose(mlp.softmax(np.zeros(17)), 1 / 17)
    assert np.allclose(mlp.softmax(np.log([1.0, 3.0])), [0.25, 0.75])
    z = np.array([1000.0, 999.0, -5.0])
    assert np.isfinite(mlp.softmax(z)).all()


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=17), st.floats(-100, 100))
def test_softmax_shift_invariant(z, c):
    z = np.array(z)
    assert np.allclose(mlp.softmax(z), mlp.softmax(z + c), atol=1e-12)


def test_cross_entropy_examples():
    Y = mlp.one_hot(np.array([2]), 3)
    assert mlp.cross_entropy(np.array([[0.0, 1.0, 0.0]]), Y) == 0.0
    assert mlp.cross_entropy(np.array([[0.25, 0.5, 0.25]]), Y) == pytest.approx(0.693147, abs=1e-6)
    P = np.array([[0.2, 0.3, 0.5], [0.1, 0.6, 0.3]])
    Y2 = mlp.one_hot(np.array([3, 2]), 3)
    assert mlp.cross_entropy(P, Y2) == pytest.approx(
        mlp.cross_entropy(P[:1], Y2[:1]) + mlp.cross_entropy(P[1:], Y2[1:]))
    assert np.isfinite(mlp.cross_entropy(np.array([[1.0, 0.0, 0.0]]), Y))


def test_zero_network_outputs_uniform():
    m = _zero_model((9, 4, 17))
    p, _ = mlp.forward(m, np.ones((3, 9)))
    assert np.allclose(p, 1 / 17)


def test_hand_built_network():
    # two inputs, two hidden units, two outputs, all weights one, biases zero
    sizes = (2, 2, 2)
    m = MlpModel(sizes, np.zeros(mlp._layout(sizes)[1]), MlpConfig(dropout_rate=0.0))
    for W, _ in m.layers:
        W[:] = 1.0
    p, cache = mlp.forward(m, np.array([[1.0, 1.0]]))
    assert cache["acts"][1].tolist() == [[2.0, 2.0]]
    assert cache["logits"].tolist() == [[4.0, 4.0]]
    assert np.allclose(p, [[0.5, 0.5]])


def test_shape_mismatch():
    m = _zero_model((9, 3, 17))
    with pytest.raises(ShapeMismatch):
        mlp.forward(m, np.ones((2, 8)))


def test_no_dropout_train_equals_infer(rng):
    m = MlpModel.initialize((9, 6, 6, 17), MlpConfig(dropout_rate=0.0), rng)
    X = rng.normal(size=(5, 9))
    assert np.array_equal(mlp.forward(m, X, rng=rng, train=True)[0], mlp.forward(m, X)[0])


def test_inverted_dropout_keeps_expected_activation(rng):
    m = MlpModel.initialize((9, 400, 17), MlpConfig(dropout_rate=0.3), rng)
    masks = mlp.dropout_masks(m, 2000, rng)
    assert set(np.unique(masks[0]).round(12)) <= {0.0, round(1 / 0.7, 12)}
    assert masks[0].mean() == pytest.approx(1.0, abs=0.01)


@given(st.integers(1, 3), st.integers(2, 8), st.integers(1, 8), st.integers(0, 10_000))
def test_probabilities_are_distributions(layers, width, batch, seed):
    r = np.random.default_rng(seed)
    m = MlpModel.initialize((9, *[width] * layers, 17), MlpConfig(), r)
    p, _ = mlp.forward(m, r.normal(scale=3, size=(batch, 9)))
    assert (p >= 0).all() and np.allclose(p.sum(axis=1), 1, atol=1e-9)


def _fd_check(model, X, y, masks=None, eps=1e-5):
    g = mlp.gradients(model, X, y, masks)

    def f(theta):
        m = MlpModel(model.sizes, theta, model.config)
        return mlp.loss(m, X, y, masks)

    num = numeric_gradient(f, model.params.copy(), eps)
    rel = np.abs(g - num) / np.maximum(1e-8, np.abs(g) + np.abs(num))
    return rel


@given(st.integers(1, 3), st.integers(2, 8), st.integers(1, 8), st.integers(0, 10_000))
def test_gradient_matches_finite_differences(layers, width, batch, seed):
    r = np.random.default_rng(seed)
    m = MlpModel.initialize((4, *[width] * layers, 5), MlpConfig(dropout_rate=0.0), r)
    m.params[:] += r.normal(scale=0.1, size=m.params.shape)  # non-zero biases too
    X = r.normal(size=(batch, 4))
    y = r.integers(1, 6, size=batch)
    rel = _fd_check(m, X, y)
    assert np.mean(rel < 1e-4) > 0.99


def test_gradient_with_fixed_dropout_masks(rng):
    m = MlpModel.initialize((4, 6, 6, 5), MlpConfig(dropout_rate=0.5), rng)
    m.params[:] += rng.normal(scale=0.1, size=m.params.shape)  # keep pre-activations off the kink
    X = rng.normal(size=(6, 4))
    y = rng.integers(1, 6, size=6)
    masks = mlp.dropout_masks(m, 6, rng)
    assert np.mean(_fd_check(m, X, y, masks) < 1e-4) > 0.99


def test_zero_network_output_bias_gradient():
    m = _zero_model((3, 2, 4))
    g = mlp.gradients(m, np.ones((1, 3)), np.array([2]))
    gb = mlp._views(g, m._spans)[-1][1]
    assert np.allclose(gb, np.full(4, 0.25) - np.array([0, 1, 0, 0]))


def test_duplicated_row_doubles_gradient(rng):
    m = MlpModel.initialize((4, 5, 3), MlpConfig(dropout_rate=0.0), rng)
    x = rng.normal(size=(1, 4))
    g1 = mlp.gradients(m, x, np.array([2]))
    g2 = mlp.gradients(m, np.vstack([x, x]), np.array([2, 2]))
    assert np.allclose(g2, 2 * g1)


def test_linearly_separable_toy_problem():
    X = np.array([[-2.0, -1.0], [-1.5, -2.0], [1.0, 2.0], [2.0, 1.5]])
    y = np.array([1, 1, 2, 2])
    m = mlp.train(MlpConfig(hidden_layers=1, neurons_per_layer=8, dropout_rate=0.0,
                            epochs=200, batch_size=2, step_size=0.01), X, y, n_classes=2)
    assert (m.predict(X) == y).all()


def test_xor_needs_and_gets_a_hidden_layer():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]] * 4)
    y = np.array([1, 2, 2, 1] * 4)
    m = mlp.train(MlpConfig(hidden_layers=1, neurons_per_layer=8, dropout_rate=0.0,
                            epochs=400, batch_size=4, step_size=0.02, seed=3), X, y, n_classes=2,
                  standardize=False)
    assert (m.predict(X) == y).all()


def test_single_epoch_moves_parameters(linear_data):
    cfg = MlpConfig(neurons_per_layer=16, epochs=1, seed=5)
    init = MlpModel.initialize((9, 16, 17), cfg, np.random.default_rng(5))
    trained = mlp.train(cfg, linear_data.X, linear_data.y)
    assert trained.params.shape == init.params.shape
    assert not np.array_equal(trained.params, init.params)


def test_empty_training_set():
    with pytest.raises(EmptyTrainingSet):
        mlp.train(MlpConfig(epochs=1), np.zeros((0, 9)), np.zeros(0, dtype=int))


def test_training_lowers_loss(linear_data):
    cfg = MlpConfig(neurons_per_layer=32, epochs=30, seed=2)
    start = mlp.train(cfg, linear_data.X, linear_data.y, init=None)
    init = MlpModel.initialize((9, 32, 17), cfg, np.random.default_rng(cfg.seed),
                               standardizer=start.standardizer)
    Z = start.standardizer.transform(linear_data.X)
    assert mlp.loss(start, Z, linear_data.y) <= mlp.loss(init, Z, linear_data.y)


def test_training_is_deterministic(linear_data):
    cfg = MlpConfig(neurons_per_layer=16, epochs=5, seed=9)
    a = mlp.train(cfg, linear_data.X, linear_data.y)
    b = mlp.train(cfg, linear_data.X, linear_data.y)
    assert np.array_equal(a.params, b.params)


def test_prediction_tie_rule():
    p = np.full((1, 17), 0.0)
    p[0, 8] = 0.9
    assert mlp.predict_from_proba(p).tolist() == [9]
    p = np.zeros((1, 17))
    p[0, [7, 11]] = 0.5
    assert mlp.predict_from_proba(p).tolist() == [8]
    assert mlp.predict_from_proba(np.full((1, 17), 1 / 17)).tolist() == [1]


def test_save_load_reproduces_predictions(tmp_path, linear_data):
    m = mlp.train(MlpConfig(hidden_layers=2, neurons_per_layer=8, epochs=3), linear_data.X, linear_data.y)
    path = tmp_path / "model.txt"
    mlp.save_model(m, path)
    back = mlp.load_model(path)
    assert back.config == m.config and back.sizes == m.sizes
    assert np.array_equal(back.predict_proba(linear_data.X), m.predict_proba(linear_data.X))
