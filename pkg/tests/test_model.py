import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from congait.ingest import N_CHANNELS
from congait.model import (
    Conv1D,
    DegenerateDataset,
    Dense,
    GlobalAveragePool,
    InputShapeMismatch,
    ModelSpec,
    ReLU,
    ShapeMismatch,
    Softmax,
    TrainConfig,
    UnknownLayerKind,
    conv_output_length,
    forward_activations,
    forward_logits,
    gradient,
    load_model,
    predict,
    reference_model,
    save_model,
    softmax_stable,
    train,
)
from conftest import make_window, random_positive_window


def tiny_model(n_classes=3, channels=3, length=32, seed=0, scale=0.5):
    """Small conv-conv-pool-dense model for cheap numeric checks."""
    rng = np.random.default_rng(seed)
    conv1 = Conv1D(channels, 4, 5, 2,
                   rng.normal(0, scale, size=(4, channels, 5)),
                   rng.normal(0, 0.1, size=4))
    len1 = conv_output_length(length, 5, 2)
    conv2 = Conv1D(4, 6, 3, 2,
                   rng.normal(0, scale, size=(6, 4, 3)),
                   rng.normal(0, 0.1, size=6))
    assert conv_output_length(len1, 3, 2) >= 1
    dense = Dense(6, n_classes, rng.normal(0, scale, size=(n_classes, 6)),
                  rng.normal(0, 0.1, size=n_classes))
    return ModelSpec(
        layers=(conv1, ReLU(), conv2, ReLU(), GlobalAveragePool(), dense, Softmax()),
        class_labels=tuple(float(i) for i in range(n_classes)),
        input_channels=channels,
        input_length=length,
    )


def tiny_window(rng, channels=3, length=32):
    return make_window(rng.normal(0.8, 0.6, size=(channels, length)).clip(min=0.0))


# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------

def conv_oracle(x, weights, bias, stride):
    """Direct triple-loop valid convolution; x (C, L), weights (O, C, K)."""
    out_ch, in_ch, kernel = weights.shape
    out_len = (x.shape[1] - kernel) // stride + 1
    out = np.zeros((out_ch, out_len))
    for o in range(out_ch):
        for t in range(out_len):
            acc = bias[o]
            for c in range(in_ch):
                for k in range(kernel):
                    acc += weights[o, c, k] * x[c, t * stride + k]
            out[o, t] = acc
    return out


def fd_gradient(spec, window, target_class, h=1e-5, coords=None):
    """Central finite differences of the target logit w.r.t. input samples."""
    base = np.asarray(window.samples, dtype=np.float64)
    if coords is None:
        coords = [(c, t) for c in range(base.shape[0]) for t in range(base.shape[1])]
    grads = {}
    for c, t in coords:
        plus = base.copy()
        minus = base.copy()
        plus[c, t] += h
        minus[c, t] -= h
        lp = forward_logits(spec, plus[None])[0, target_class]
        lm = forward_logits(spec, minus[None])[0, target_class]
        grads[(c, t)] = (lp - lm) / (2 * h)
    return grads


# ---------------------------------------------------------------------------
# forward / predict
# ---------------------------------------------------------------------------

class TestForward:
    def test_hand_computed_convolution(self):
        x = np.array([[1.0, 2.0, 3.0, 4.0]])
        layer = Conv1D(1, 1, 2, 1, np.array([[[1.0, 1.0]]]), np.zeros(1))
        acts = forward_activations([layer], x[None])
        assert np.allclose(acts[-1][0], [[3.0, 5.0, 7.0]])
        assert np.allclose(acts[-1][0], conv_oracle(x, layer.weights, layer.bias, 1))

    def test_vectorized_conv_matches_loop_oracle(self, rng):
        x = rng.normal(size=(5, 40))
        weights = rng.normal(size=(7, 5, 6))
        bias = rng.normal(size=7)
        layer = Conv1D(5, 7, 6, 3, weights, bias)
        fast = forward_activations([layer], x[None])[-1][0]
        assert np.allclose(fast, conv_oracle(x, weights, bias, 3), atol=1e-12)

    def test_zero_weights_give_uniform_probabilities(self):
        layers = (
            Conv1D(N_CHANNELS, 4, 7, 3, np.zeros((4, N_CHANNELS, 7)), np.zeros(4)),
            ReLU(),
            GlobalAveragePool(),
            Dense(4, 4, np.zeros((4, 4)), np.zeros(4)),
            Softmax(),
        )
        spec = ModelSpec(layers=layers)
        window = make_window(np.ones((N_CHANNELS, 1000)))
        p = predict(spec, window)
        assert p.probabilities == pytest.approx((0.25, 0.25, 0.25, 0.25))
        assert p.predicted_stage == spec.class_labels[0]  # lowest-index tie-break

    def test_wrong_channel_count_rejected(self, rng):
        spec = tiny_model()
        window = make_window(rng.normal(size=(2, 32)))
        with pytest.raises(InputShapeMismatch):
            predict(spec, window)

    def test_predict_is_pure(self, rng):
        spec = tiny_model(seed=5)
        window = tiny_window(rng)
        a = predict(spec, window)
        b = predict(spec, window)
        assert a.logits == b.logits
        assert a.probabilities == b.probabilities
        assert a.model_id == b.model_id == spec.model_id

    def test_probabilities_sum_to_one(self, rng):
        spec = tiny_model(seed=9)
        for _ in range(10):
            window = tiny_window(rng)
            p = predict(spec, window)
            assert abs(sum(p.probabilities) - 1.0) <= 1e-9

    @given(st.floats(min_value=-50, max_value=50))
    @settings(max_examples=50, deadline=None)
    def test_softmax_shift_invariance(self, shift):
        logits = np.array([0.3, -1.2, 4.0, 2.2])
        a = softmax_stable(logits)
        b = softmax_stable(logits + shift)
        assert np.max(np.abs(a - b)) <= 1e-12

    def test_final_dense_scaling_scales_logits(self, rng):
        spec = tiny_model(seed=3)
        window = tiny_window(rng)
        base = forward_logits(spec, np.asarray(window.samples)[None])[0]
        dense = spec.layers[-2]
        scaled_dense = Dense(dense.in_dim, dense.out_dim,
                             3.0 * dense.weights, 3.0 * dense.bias)
        scaled = ModelSpec(layers=spec.layers[:-2] + (scaled_dense, Softmax()),
                           class_labels=spec.class_labels,
                           input_channels=spec.input_channels,
                           input_length=spec.input_length)
        out = forward_logits(scaled, np.asarray(window.samples)[None])[0]
        assert np.allclose(out, 3.0 * base, rtol=1e-12)


# ---------------------------------------------------------------------------
# model files
# ---------------------------------------------------------------------------

class TestModelFiles:
    def test_save_load_round_trip_is_canonical(self):
        spec = tiny_model(seed=1)
        doc = save_model(spec)
        loaded = load_model(doc)
        assert save_model(loaded) == doc
        assert loaded.model_id == spec.model_id

    def test_model_id_stable(self):
        spec = tiny_model(seed=1)
        again = tiny_model(seed=1)
        assert spec.model_id == again.model_id
        assert len(spec.model_id) == 64
        assert spec.model_id == spec.model_id.lower()

    def test_dense_in_dim_mismatch_rejected(self):
        doc = json.loads(save_model(tiny_model(seed=1)))
        doc["layers"][-2]["in_dim"] = 5
        doc["layers"][-2]["weights"] = [[0.0] * 5 for _ in range(3)]
        with pytest.raises(ShapeMismatch):
            load_model(json.dumps(doc))

    def test_unknown_layer_kind(self):
        doc = json.loads(save_model(tiny_model(seed=1)))
        doc["layers"][1] = {"kind": "batch_norm"}
        with pytest.raises(UnknownLayerKind):
            load_model(json.dumps(doc))

    def test_non_finite_weight_rejected(self):
        doc = json.loads(save_model(tiny_model(seed=1)))
        doc["layers"][0]["weights"][0][0][0] = 1e400  # serializes as Infinity
        text = json.dumps(doc)
        from congait.model import NonFiniteWeight
        with pytest.raises(NonFiniteWeight):
            load_model(text)

    def test_reference_model_shapes(self):
        spec = reference_model(seed=0)
        assert spec.input_channels == 18 and spec.input_length == 1000
        assert spec.class_labels == (0.0, 2.0, 2.5, 3.0)
        window = make_window(np.ones((18, 1000)))
        p = predict(spec, window)
        assert len(p.probabilities) == 4

    def test_packaged_reference_model_loads_with_stable_id(self):
        from importlib import resources
        text = resources.files("congait.data").joinpath(
            "reference.model").read_text("utf-8")
        first = load_model(text)
        second = load_model(text)
        assert first.model_id == second.model_id
        assert save_model(first) == text  # shipped file is already canonical


# ---------------------------------------------------------------------------
# gradient
# ---------------------------------------------------------------------------

class TestGradient:
    def test_zero_weight_model_zero_gradient(self):
        layers = (
            Conv1D(3, 4, 5, 2, np.zeros((4, 3, 5)), np.zeros(4)),
            ReLU(),
            GlobalAveragePool(),
            Dense(4, 2, np.zeros((2, 4)), np.zeros(2)),
            Softmax(),
        )
        spec = ModelSpec(layers=layers, class_labels=(0.0, 1.0),
                         input_channels=3, input_length=32)
        window = make_window(np.ones((3, 32)))
        g = gradient(spec, window, 0)
        assert np.all(g == 0.0)

    def test_pure_dense_gradient_is_weight_row(self, rng):
        w = rng.normal(size=(3, 4))
        layers = (GlobalAveragePool(), Dense(4, 3, w, np.zeros(3)), Softmax())
        spec = ModelSpec(layers=layers, class_labels=(0.0, 1.0, 2.0),
                         input_channels=4, input_length=1)
        window = make_window(rng.normal(size=(4, 1)), sample_rate_hz=1.0)
        for target in range(3):
            g = gradient(spec, window, target)
            # pooling over length 1 is identity, so d logit/d input = weight row
            assert np.allclose(g[:, 0], w[target], atol=1e-12)

    def test_matches_finite_differences(self, rng):
        spec = tiny_model(seed=11, scale=0.4)
        window = tiny_window(rng)
        target = 1
        analytic = gradient(spec, window, target)
        coords = [(int(c), int(t)) for c, t in
                  zip(rng.integers(0, 3, 25), rng.integers(0, 32, 25))]
        fd = fd_gradient(spec, window, target, coords=coords)
        scale = max(max(abs(v) for v in fd.values()), 1e-10)
        for (c, t), v in fd.items():
            assert abs(analytic[c, t] - v) / scale <= 1e-4

    def test_reference_architecture_spot_check(self, rng):
        spec = reference_model(seed=2, weight_scale=0.6)
        window = random_positive_window(rng)
        analytic = gradient(spec, window, 2)
        coords = [(int(c), int(t)) for c, t in
                  zip(rng.integers(0, 18, 8), rng.integers(0, 1000, 8))]
        fd = fd_gradient(spec, window, 2, coords=coords)
        scale = max(max(abs(v) for v in fd.values()), 1e-10)
        for (c, t), v in fd.items():
            assert abs(analytic[c, t] - v) / scale <= 1e-4


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def separable_dataset(rng, n=60, channels=3, length=32):
    data = []
    for i in range(n):
        label = float(i % 2)
        level = 0.5 if label == 0.0 else 2.5
        data.append((np.abs(rng.normal(level, 0.3, size=(channels, length))), label))
    return data


class TestTrain:
    def test_zero_learning_rate_keeps_weights(self, rng):
        spec = tiny_model(n_classes=2, seed=4)
        data = separable_dataset(rng)
        result = train(spec, data, TrainConfig(epochs=2, learning_rate=0.0,
                                               batch_size=8, seed=7))
        for before, after in zip(spec.layers, result.spec.layers):
            if isinstance(before, (Conv1D, Dense)):
                assert np.array_equal(before.weights, after.weights)
                assert np.array_equal(before.bias, after.bias)

    def test_single_class_rejected(self, rng):
        spec = tiny_model(n_classes=2, seed=4)
        data = [(np.ones((3, 32)), 0.0) for _ in range(10)]
        with pytest.raises(DegenerateDataset):
            train(spec, data, TrainConfig(epochs=1, learning_rate=0.1,
                                          batch_size=4, seed=1))

    def test_separable_set_learns(self, rng):
        spec = tiny_model(n_classes=2, seed=4, scale=0.3)
        data = separable_dataset(rng, n=80)
        result = train(spec, data, TrainConfig(epochs=15, learning_rate=0.05,
                                               batch_size=8, seed=7))
        assert result.final_accuracy >= 0.95
        assert result.epoch_losses[-1] < result.epoch_losses[0]

    def test_training_is_seed_reproducible(self, rng):
        spec = tiny_model(n_classes=2, seed=4)
        data = separable_dataset(rng)
        cfg = TrainConfig(epochs=3, learning_rate=0.05, batch_size=8, seed=13)
        a = train(spec, data, cfg)
        b = train(spec, data, cfg)
        assert a.epoch_losses == b.epoch_losses
        for la, lb in zip(a.spec.layers, b.spec.layers):
            if isinstance(la, (Conv1D, Dense)):
                assert np.array_equal(la.weights, lb.weights)

    def test_divergence_detected(self, rng):
        # no ReLU, so runaway weights compound multiplicatively to overflow
        from congait.model import DivergenceDetected
        init = np.random.default_rng(3)
        spec = ModelSpec(
            layers=(Conv1D(3, 4, 5, 2, init.normal(0, 0.5, size=(4, 3, 5)),
                           np.zeros(4)),
                    GlobalAveragePool(),
                    Dense(4, 2, init.normal(0, 0.5, size=(2, 4)), np.zeros(2)),
                    Softmax()),
            class_labels=(0.0, 1.0), input_channels=3, input_length=32)
        data = separable_dataset(rng)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(DivergenceDetected):
                train(spec, data, TrainConfig(epochs=30, learning_rate=1e12,
                                              batch_size=8, seed=1))

    def test_train_does_not_mutate_input(self, rng):
        spec = tiny_model(n_classes=2, seed=4)
        snapshot = [l.weights.copy() for l in spec.layers
                    if isinstance(l, (Conv1D, Dense))]
        data = separable_dataset(rng)
        train(spec, data, TrainConfig(epochs=2, learning_rate=0.1,
                                      batch_size=8, seed=3))
        current = [l.weights for l in spec.layers if isinstance(l, (Conv1D, Dense))]
        for before, after in zip(snapshot, current):
            assert np.array_equal(before, after)
