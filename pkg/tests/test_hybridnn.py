import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qmoons.ansatz import gate_list
from qmoons.dataset import generate
from qmoons.hybridnn import (
    DenseLayer,
    FFNNModel,
    Gradients,
    HybridModel,
    ModelFormatError,
    TrainConfig,
    accuracy,
    backward,
    ffnn_baseline,
    forward,
    load_model,
    load_model_dict,
    loss_mae,
    one_hot,
    sgd_step,
    train,
    trainable_count,
)
from qmoons.statevector import expectation_z, oracle_apply, zero_state

FIXTURES = Path(__file__).parent / "fixtures"


def _zero_hybrid(n=2, layers=4):
    m = HybridModel.create(n, layers)
    for layer in m.layers:
        layer.weights[:] = 0
        layer.bias[:] = 0
    return m


def _randomize(model, rng, scale=1.0):
    for layer in model.layers:
        layer.weights[:] = rng.uniform(-scale, scale, layer.weights.shape)
        layer.bias[:] = rng.uniform(-scale, scale, layer.bias.shape)
    return model


def test_zero_model_is_indifferent():
    np.testing.assert_allclose(forward(_zero_hybrid(), [0.3, -1.2]), [0.5, 0.5], atol=1e-15)


def test_forward_is_a_distribution(rng):
    m = _randomize(HybridModel.create(3, 2), rng, 3.0)
    p = forward(m, rng.uniform(-2, 3, (50, 2)))
    assert np.all((p > 0) & (p < 1))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_forward_rejects_non_finite():
    with pytest.raises(FloatingPointError):
        forward(HybridModel.create(), [math.nan, 0.0])


def _oracle_forward(model, x):
    theta = model.input_dense.weights @ x + model.input_dense.bias
    state = zero_state(model.spec.n_qubits)
    for g in gate_list(model.spec, theta):
        state = oracle_apply(state, g)
    e = np.array([expectation_z(state, q) for q in range(model.spec.n_qubits)])
    z = model.output_dense.weights @ e + model.output_dense.bias
    return np.exp(z) / np.exp(z).sum()


def test_golden_model():
    fixture = json.loads((FIXTURES / "golden_hybrid.json").read_text())
    model = load_model_dict(fixture["model"])
    p = forward(model, fixture["x"])
    np.testing.assert_allclose(p, fixture["p"], atol=1e-12)
    np.testing.assert_allclose(_oracle_forward(model, np.array(fixture["x"])), fixture["p"], atol=1e-12)


def test_mae_examples():
    assert loss_mae([1, 0], [1, 0]) == 0
    assert loss_mae([0.5, 0.5], [1, 0]) == 0.5
    assert loss_mae([0.8, 0.2], [0, 1]) == pytest.approx(0.8)
    with pytest.raises(ValueError):
        loss_mae([0.5, 0.5], [1, 0, 0])


def test_accuracy_examples():
    assert accuracy([[1, 0], [0, 1]], [0, 1]) == 1.0
    assert accuracy([[1, 0], [1, 0]], [0, 1]) == 0.5
    assert accuracy([[0.5, 0.5]], [0]) == 1.0
    with pytest.raises(ValueError):
        accuracy([], [])


probs = st.floats(0.0, 1.0, allow_nan=False)


@given(probs, st.integers(0, 1))
def test_mae_bounded_for_two_classes(p0, label):
    loss = loss_mae([p0, 1 - p0], one_hot([label], 2)[0])
    assert 0.0 <= loss <= 1.0


# grid values keep the maps strictly monotone in floating point
grid_probs = st.integers(0, 1000).map(lambda k: k / 1000)


@given(st.lists(st.tuples(grid_probs, grid_probs), min_size=1, max_size=20), st.data())
def test_accuracy_invariant_under_monotone_map(pairs, data):
    labels = data.draw(st.lists(st.integers(0, 1), min_size=len(pairs), max_size=len(pairs)))
    p = np.array(pairs)
    for f in (np.exp, lambda v: 3 * v + 1, lambda v: v**3):
        assert accuracy(f(p), labels) == accuracy(p, labels)


def test_bias_shift_leaves_softmax_unchanged(rng):
    m = _randomize(HybridModel.create(2, 2), rng)
    x = rng.uniform(-2, 2, (10, 2))
    before = forward(m, x)
    m.output_dense.bias += 7.5
    np.testing.assert_allclose(forward(m, x), before, atol=1e-12)


def test_parameter_counts():
    assert HybridModel.create(2, 4).spec.param_count == 16
    assert trainable_count(HybridModel.create(2, 4)) == 54
    assert trainable_count(HybridModel.create(3, 4)) == 80
    ffnn = ffnn_baseline(0)
    assert [layer.n_params for layer in ffnn.layers] == [48, 272, 34]
    assert trainable_count(ffnn) == 354


def test_ffnn_output_sums_to_one(rng):
    p = forward(ffnn_baseline(3), rng.uniform(-2, 2, (20, 2)))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def _loss(model, x, y):
    return loss_mae(model.predict(x), y)


def fd_gradients(model, x, y, h=1e-5):
    """Central differences over every weight, one at a time."""
    grads = []
    for layer in model.layers:
        pair = []
        for arr in (layer.weights, layer.bias):
            g = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                old = arr[idx]
                arr[idx] = old + h
                up = _loss(model, x, y)
                arr[idx] = old - h
                down = _loss(model, x, y)
                arr[idx] = old
                g[idx] = (up - down) / (2 * h)
            pair.append(g)
        grads.append(tuple(pair))
    return Gradients(grads)


def assert_grads_close(analytic, numeric, rel=1e-5, floor=1e-7):
    a, n = analytic.flat(), numeric.flat()
    err = np.abs(a - n)
    assert np.all(err <= np.maximum(rel * np.abs(n), floor)), float(np.max(err))


@pytest.mark.parametrize("n", [1, 2, 3])
@pytest.mark.parametrize("layers", [1, 2, 4])
def test_hybrid_gradient_matches_fd(rng, n, layers):
    m = _randomize(HybridModel.create(n, layers), rng)
    x = rng.uniform(-1.5, 2.5, (4, 2))
    y = one_hot(rng.integers(0, 2, 4), 2)
    assert_grads_close(backward(m, x, y), fd_gradients(m, x, y))


def test_ffnn_gradient_matches_fd(rng):
    m = _randomize(ffnn_baseline(0), rng)
    x = rng.uniform(-1.5, 2.5, (4, 2))
    y = one_hot(rng.integers(0, 2, 4), 2)
    assert_grads_close(backward(m, x, y), fd_gradients(m, x, y))


def test_no_signal_no_gradient():
    m = _zero_hybrid()
    x = np.array([[0.1, 0.2], [1.0, -0.3]])
    y = m.predict(x)  # exact match with the targets
    assert backward(m, x, y).max_abs() == 0.0


def test_batch_gradient_is_mean_of_singles(rng):
    m = _randomize(HybridModel.create(2, 2), rng)
    x = rng.uniform(-1, 2, (2, 2))
    y = one_hot([0, 1], 2)
    both = backward(m, x, y).flat()
    singles = (backward(m, x[:1], y[:1]).flat() + backward(m, x[1:], y[1:]).flat()) / 2
    np.testing.assert_allclose(both, singles, atol=1e-12)


def test_backward_rejects_empty_batch():
    with pytest.raises(ValueError):
        backward(HybridModel.create(), np.zeros((0, 2)), np.zeros((0, 2)))


def test_sgd_step_cases(rng):
    m = _randomize(HybridModel.create(2, 1), rng)
    g = backward(m, [[0.5, 0.5]], [[1.0, 0.0]])
    before = m.copy()
    sgd_step(m, g, 0.0)
    for a, b in zip(m.layers, before.layers):
        np.testing.assert_array_equal(a.weights, b.weights)

    layer = DenseLayer([[1.0]], [0.0])
    model = FFNNModel([DenseLayer([[1.0]], [0.0], "softmax")])
    sgd_step(model, Gradients([(np.array([[2.0]]), np.array([0.0]))]), 0.1)
    assert model.layers[0].weights[0, 0] == pytest.approx(0.8)
    assert layer.n_params == 2

    twice, once = m.copy(), m.copy()
    sgd_step(sgd_step(twice, g, 0.1), g, 0.1)
    sgd_step(once, g, 0.2)
    for a, b in zip(twice.layers, once.layers):
        np.testing.assert_allclose(a.weights, b.weights, atol=1e-14)
        np.testing.assert_allclose(a.bias, b.bias, atol=1e-14)

    with pytest.raises(ValueError):
        sgd_step(m, Gradients(g.layers[:1]), 0.1)


def test_softmax_layer_bounds():
    layer = DenseLayer([[1.0, -2.0], [0.5, 3.0]], [0.0, 1.0], "softmax")
    out = layer(np.array([[1000.0, -1000.0]]))
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out.sum(), 1.0, atol=1e-12)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=-1)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)


def test_train_rejects_oversized_batch_and_unsplit():
    from qmoons.dataset import make_moons

    with pytest.raises(ValueError):
        train(HybridModel.create(), generate(20, 0.1, 0), TrainConfig(batch_size=50))
    with pytest.raises(ValueError):
        train(HybridModel.create(), make_moons(20, 0.1, 0), TrainConfig())


def test_training_is_deterministic():
    data = generate(200, 0.1, 5)
    runs = [train(HybridModel.create(seed=5), data, TrainConfig(epochs=3, seed=5)) for _ in range(2)]
    assert runs[0].to_csv() == runs[1].to_csv()
    assert runs[0].test_accuracy == runs[1].test_accuracy
    assert len(runs[0].records) == 3
    for r in runs[0].records:
        assert 0 <= r.accuracy <= 1 and 0 <= r.val_accuracy <= 1


def test_training_reaches_full_accuracy_on_clean_moons():
    data = generate(1000, 0.05, 0)
    history = train(HybridModel.create(2, 4, seed=0), data, TrainConfig(seed=0))
    assert history.test_accuracy == 1.0


def test_ffnn_trains_with_same_loop():
    data = generate(1000, 0.25, 0)
    history = train(ffnn_baseline(0), data, TrainConfig(seed=0))
    assert history.records[-1].accuracy >= history.records[-1].val_accuracy
    assert history.records[-1].accuracy > 0.8


@pytest.mark.parametrize("model", [HybridModel.create(3, 2, seed=4), ffnn_baseline(4)])
def test_json_round_trip(tmp_path, model):
    path = tmp_path / "w.json"
    model.save(path)
    loaded = load_model(path)
    d = json.loads(path.read_text())
    assert d["format_version"] == 1
    assert loaded.to_dict() == model.to_dict()
    x = np.array([[0.3, 0.1], [1.5, -0.4]])
    np.testing.assert_array_equal(loaded.predict(x), model.predict(x))


def test_json_validation():
    d = HybridModel.create(2, 4).to_dict()
    bad = json.loads(json.dumps(d))
    bad["n_qubits"] = 3
    with pytest.raises(ModelFormatError):
        load_model_dict(bad)
    bad = json.loads(json.dumps(d))
    bad["layers"][0]["out_dim"] = 15
    with pytest.raises(ModelFormatError):
        load_model_dict(bad)
    bad = json.loads(json.dumps(d))
    bad["format_version"] = 99
    with pytest.raises(ModelFormatError):
        load_model_dict(bad)
