"""Portable 1D-CNN staging model: load/save, deterministic inference, training.

All numerics are float64. A model is an immutable ModelSpec whose document
form is canonical JSON (sorted keys, compact, shortest round-trip floats);
model_id is the lowercase hex SHA-256 of those bytes. Forward passes are pure
functions, safe for concurrent use; training never mutates its input spec.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .canonical import canonical_json, content_hash
from .errors import CongaitError
from .ingest import GaitWindow

DEFAULT_CLASS_LABELS: tuple[float, ...] = (0.0, 2.0, 2.5, 3.0)
DEFAULT_INPUT_CHANNELS = 18
DEFAULT_INPUT_LENGTH = 1000


class ModelError(CongaitError):
    pass


class ModelDocumentError(ModelError):
    pass


class UnknownLayerKind(ModelError):
    def __init__(self, kind: str) -> None:
        self.kind = kind
        super().__init__(f"unknown layer kind: {kind!r}")


class ShapeMismatch(ModelError):
    def __init__(self, layer_index: int, detail: str) -> None:
        self.layer_index = layer_index
        super().__init__(f"layer {layer_index}: {detail}")


class NonFiniteWeight(ModelError):
    def __init__(self, layer_index: int) -> None:
        self.layer_index = layer_index
        super().__init__(f"layer {layer_index}: non-finite weight or bias")


class InputShapeMismatch(ModelError):
    def __init__(self, expected: tuple[int, int], got: tuple[int, ...]) -> None:
        super().__init__(f"expected input shape {expected}, got {tuple(got)}")


class DegenerateDataset(ModelError):
    def __init__(self) -> None:
        super().__init__("training needs at least two classes present")


class DivergenceDetected(ModelError):
    def __init__(self, epoch: int) -> None:
        self.epoch = epoch
        super().__init__(f"non-finite loss during epoch {epoch}")


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Conv1D:
    in_channels: int
    out_channels: int
    kernel: int
    stride: int
    weights: np.ndarray  # (out, in, kernel)
    bias: np.ndarray     # (out,)

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", _readonly(self.weights))
        object.__setattr__(self, "bias", _readonly(self.bias))


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class GlobalAveragePool:
    pass


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int
    weights: np.ndarray  # (out, in)
    bias: np.ndarray     # (out,)

    def __post_init__(self) -> None:
        object.__setattr__(self, "weights", _readonly(self.weights))
        object.__setattr__(self, "bias", _readonly(self.bias))


@dataclass(frozen=True)
class Softmax:
    pass


Layer = Conv1D | ReLU | GlobalAveragePool | Dense | Softmax


def conv_output_length(length: int, kernel: int, stride: int) -> int:
    return (length - kernel) // stride + 1


def _validate_layers(layers: Sequence[Layer], input_channels: int,
                     input_length: int, n_classes: int) -> None:
    if not layers or not isinstance(layers[-1], Softmax):
        raise ShapeMismatch(len(layers) - 1 if layers else 0,
                            "model must end with a single softmax layer")
    if sum(isinstance(l, Softmax) for l in layers) != 1:
        raise ShapeMismatch(len(layers) - 1, "exactly one softmax layer allowed")

    pooled = False
    channels, length = input_channels, input_length
    last_param_width = None
    for i, layer in enumerate(layers):
        if isinstance(layer, Conv1D):
            if pooled:
                raise ShapeMismatch(i, "conv layer after pooling")
            if layer.in_channels != channels:
                raise ShapeMismatch(
                    i, f"conv expects {layer.in_channels} channels, input has {channels}")
            if layer.weights.shape != (layer.out_channels, layer.in_channels, layer.kernel):
                raise ShapeMismatch(i, "conv weight array shape mismatch")
            if layer.bias.shape != (layer.out_channels,):
                raise ShapeMismatch(i, "conv bias shape mismatch")
            if not (np.isfinite(layer.weights).all() and np.isfinite(layer.bias).all()):
                raise NonFiniteWeight(i)
            out_len = conv_output_length(length, layer.kernel, layer.stride)
            if layer.kernel < 1 or layer.stride < 1 or out_len < 1:
                raise ShapeMismatch(i, f"kernel {layer.kernel} does not fit length {length}")
            channels, length = layer.out_channels, out_len
            last_param_width = channels
        elif isinstance(layer, ReLU):
            pass
        elif isinstance(layer, GlobalAveragePool):
            if pooled:
                raise ShapeMismatch(i, "duplicate pooling layer")
            pooled = True
        elif isinstance(layer, Dense):
            if not pooled:
                raise ShapeMismatch(i, "dense layer requires pooled (vector) input")
            if layer.in_dim != channels:
                raise ShapeMismatch(
                    i, f"dense expects {layer.in_dim} inputs, previous width is {channels}")
            if layer.weights.shape != (layer.out_dim, layer.in_dim):
                raise ShapeMismatch(i, "dense weight array shape mismatch")
            if layer.bias.shape != (layer.out_dim,):
                raise ShapeMismatch(i, "dense bias shape mismatch")
            if not (np.isfinite(layer.weights).all() and np.isfinite(layer.bias).all()):
                raise NonFiniteWeight(i)
            channels = layer.out_dim
            last_param_width = channels
        elif isinstance(layer, Softmax):
            if i != len(layers) - 1:
                raise ShapeMismatch(i, "softmax must be the terminal layer")
        else:
            raise UnknownLayerKind(type(layer).__name__)
    if last_param_width != n_classes:
        raise ShapeMismatch(
            len(layers) - 1,
            f"class count {n_classes} does not match final layer width {last_param_width}")


@dataclass(frozen=True)
class ModelSpec:
    layers: tuple[Layer, ...]
    class_labels: tuple[float, ...] = DEFAULT_CLASS_LABELS
    input_channels: int = DEFAULT_INPUT_CHANNELS
    input_length: int = DEFAULT_INPUT_LENGTH
    model_id: str = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "class_labels",
                           tuple(float(c) for c in self.class_labels))
        _validate_layers(self.layers, self.input_channels, self.input_length,
                         len(self.class_labels))
        object.__setattr__(self, "model_id", content_hash(spec_to_document(self)))

    @property
    def n_classes(self) -> int:
        return len(self.class_labels)


@dataclass(frozen=True)
class Prediction:
    window: GaitWindow | None
    probabilities: tuple[float, ...]
    logits: tuple[float, ...]
    predicted_stage: float
    model_id: str
    created_at: str


def spec_to_document(spec: ModelSpec) -> dict:
    layers = []
    for layer in spec.layers:
        if isinstance(layer, Conv1D):
            layers.append({
                "kind": "conv1d",
                "in_channels": layer.in_channels,
                "out_channels": layer.out_channels,
                "kernel": layer.kernel,
                "stride": layer.stride,
                "weights": layer.weights.tolist(),
                "bias": layer.bias.tolist(),
            })
        elif isinstance(layer, ReLU):
            layers.append({"kind": "relu"})
        elif isinstance(layer, GlobalAveragePool):
            layers.append({"kind": "global_average_pool"})
        elif isinstance(layer, Dense):
            layers.append({
                "kind": "dense",
                "in_dim": layer.in_dim,
                "out_dim": layer.out_dim,
                "weights": layer.weights.tolist(),
                "bias": layer.bias.tolist(),
            })
        elif isinstance(layer, Softmax):
            layers.append({"kind": "softmax"})
    return {
        "class_labels": [float(c) for c in spec.class_labels],
        "input_channels": spec.input_channels,
        "input_length": spec.input_length,
        "layers": layers,
    }


def save_model(spec: ModelSpec) -> str:
    """Canonical document form of a model."""
    return canonical_json(spec_to_document(spec))


def load_model(document: str) -> ModelSpec:
    """Parse and validate a model document; the returned spec's model_id is
    the SHA-256 of the document's canonical form."""
    import json

    try:
        doc = json.loads(document)
    except json.JSONDecodeError as e:
        raise ModelDocumentError(f"not a valid model document: {e}") from None
    if not isinstance(doc, dict) or "layers" not in doc:
        raise ModelDocumentError("model document must be an object with layers")

    layers: list[Layer] = []
    for i, entry in enumerate(doc["layers"]):
        kind = entry.get("kind")
        if kind == "conv1d":
            layers.append(Conv1D(
                in_channels=int(entry["in_channels"]),
                out_channels=int(entry["out_channels"]),
                kernel=int(entry["kernel"]),
                stride=int(entry["stride"]),
                weights=np.asarray(entry["weights"], dtype=np.float64),
                bias=np.asarray(entry["bias"], dtype=np.float64),
            ))
        elif kind == "relu":
            layers.append(ReLU())
        elif kind == "global_average_pool":
            layers.append(GlobalAveragePool())
        elif kind == "dense":
            layers.append(Dense(
                in_dim=int(entry["in_dim"]),
                out_dim=int(entry["out_dim"]),
                weights=np.asarray(entry["weights"], dtype=np.float64),
                bias=np.asarray(entry["bias"], dtype=np.float64),
            ))
        elif kind == "softmax":
            layers.append(Softmax())
        else:
            raise UnknownLayerKind(str(kind))

    return ModelSpec(
        layers=tuple(layers),
        class_labels=tuple(float(c) for c in doc.get("class_labels", DEFAULT_CLASS_LABELS)),
        input_channels=int(doc.get("input_channels", DEFAULT_INPUT_CHANNELS)),
        input_length=int(doc.get("input_length", DEFAULT_INPUT_LENGTH)),
    )


# ---------------------------------------------------------------------------
# forward / backward primitives (batched, x is (B, C, L))
# ---------------------------------------------------------------------------

def _conv_forward(x: np.ndarray, layer: Conv1D) -> np.ndarray:
    xv = sliding_window_view(x, layer.kernel, axis=2)[:, :, ::layer.stride, :]
    out = np.einsum("bctk,ock->bot", xv, layer.weights, optimize=True)
    return out + layer.bias[None, :, None]


def _conv_backward_input(dy: np.ndarray, layer: Conv1D, in_len: int) -> np.ndarray:
    b, _, t = dy.shape
    dx = np.zeros((b, layer.in_channels, in_len))
    for k in range(layer.kernel):
        contrib = np.einsum("bot,oc->bct", dy, layer.weights[:, :, k], optimize=True)
        dx[:, :, k:k + layer.stride * t:layer.stride] += contrib
    return dx


def _conv_param_grads(dy: np.ndarray, x: np.ndarray,
                      layer: Conv1D) -> tuple[np.ndarray, np.ndarray]:
    xv = sliding_window_view(x, layer.kernel, axis=2)[:, :, ::layer.stride, :]
    dw = np.einsum("bot,bctk->ock", dy, xv, optimize=True)
    db = dy.sum(axis=(0, 2))
    return dw, db


def _apply_layer(layer: Layer, x: np.ndarray) -> np.ndarray:
    if isinstance(layer, Conv1D):
        return _conv_forward(x, layer)
    if isinstance(layer, ReLU):
        return np.maximum(x, 0.0)
    if isinstance(layer, GlobalAveragePool):
        return x.mean(axis=2)
    if isinstance(layer, Dense):
        return x @ layer.weights.T + layer.bias
    raise UnknownLayerKind(type(layer).__name__)


def forward_activations(layers: Sequence[Layer], x: np.ndarray) -> list[np.ndarray]:
    """Boundary activations for every non-softmax layer; last entry is logits."""
    acts = [x]
    for layer in layers:
        if isinstance(layer, Softmax):
            break
        x = _apply_layer(layer, x)
        acts.append(x)
    return acts


def forward_logits(spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    return forward_activations(spec.layers, x)[-1]


def softmax_stable(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _check_input(spec: ModelSpec, samples: np.ndarray) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape != (spec.input_channels, spec.input_length):
        raise InputShapeMismatch((spec.input_channels, spec.input_length), samples.shape)
    return samples


def now_utc() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="microseconds")


def predict(spec: ModelSpec, window: GaitWindow, created_at: str | None = None) -> Prediction:
    """Deterministic forward pass over one window.

    Ties in the argmax break to the lowest class index.
    """
    samples = _check_input(spec, window.samples)
    logits = forward_logits(spec, samples[None])[0]
    probs = softmax_stable(logits)
    idx = int(np.argmax(probs))
    return Prediction(
        window=window,
        probabilities=tuple(float(p) for p in probs),
        logits=tuple(float(v) for v in logits),
        predicted_stage=spec.class_labels[idx],
        model_id=spec.model_id,
        created_at=created_at if created_at is not None else now_utc(),
    )


def _backward_input(layers: Sequence[Layer], acts: list[np.ndarray],
                    dlogits: np.ndarray) -> np.ndarray:
    """Propagate an output-side gradient back to the input (no param grads)."""
    dy = dlogits
    idx = len(acts) - 2
    for layer in reversed([l for l in layers if not isinstance(l, Softmax)]):
        x_in = acts[idx]
        if isinstance(layer, Conv1D):
            dy = _conv_backward_input(dy, layer, x_in.shape[2])
        elif isinstance(layer, ReLU):
            dy = dy * (x_in > 0.0)
        elif isinstance(layer, GlobalAveragePool):
            dy = np.repeat(dy[:, :, None], x_in.shape[2], axis=2) / x_in.shape[2]
        elif isinstance(layer, Dense):
            dy = dy @ layer.weights
        idx -= 1
    return dy


def gradient(spec: ModelSpec, window: GaitWindow, target_class: int) -> np.ndarray:
    """Analytic d(logit[target_class])/d(input), same shape as the window."""
    samples = _check_input(spec, window.samples)
    acts = forward_activations(spec.layers, samples[None])
    dlogits = np.zeros_like(acts[-1])
    dlogits[0, target_class] = 1.0
    return _backward_input(spec.layers, acts, dlogits)[0]


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    learning_rate: float
    batch_size: int
    seed: int


@dataclass(frozen=True)
class TrainResult:
    spec: ModelSpec
    epoch_losses: tuple[float, ...]
    final_accuracy: float


def _as_samples(item) -> np.ndarray:
    if isinstance(item, GaitWindow):
        return np.asarray(item.samples, dtype=np.float64)
    return np.asarray(item, dtype=np.float64)


def train(spec: ModelSpec, dataset: Sequence[tuple[object, float]],
          hyper: TrainConfig) -> TrainResult:
    """Seeded mini-batch gradient descent on cross-entropy.

    The dataset is (window-or-array, class label) pairs; labels must belong to
    the spec's class set. Returns a fresh spec plus the per-epoch mean loss
    trajectory; the input spec is never mutated.
    """
    label_to_idx = {c: i for i, c in enumerate(spec.class_labels)}
    xs, ys = [], []
    for item, label in dataset:
        samples = _as_samples(item)
        if samples.shape != (spec.input_channels, spec.input_length):
            raise InputShapeMismatch((spec.input_channels, spec.input_length),
                                     samples.shape)
        xs.append(samples)
        ys.append(label_to_idx[float(label)])
    if len(set(ys)) < 2:
        raise DegenerateDataset()
    if hyper.epochs < 0 or hyper.batch_size < 1:
        raise ValueError("invalid hyperparameters")

    x_all = np.stack(xs)
    y_all = np.asarray(ys, dtype=np.int64)
    n = x_all.shape[0]
    layers = list(spec.layers)
    rng = np.random.default_rng(hyper.seed)

    epoch_losses = []
    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, hyper.batch_size):
            batch = order[start:start + hyper.batch_size]
            xb, yb = x_all[batch], y_all[batch]
            acts = forward_activations(layers, xb)
            logits = acts[-1]
            shifted = logits - logits.max(axis=1, keepdims=True)
            log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
            batch_loss = -log_probs[np.arange(len(batch)), yb]
            loss_sum += float(batch_loss.sum())
            if not math.isfinite(loss_sum):
                raise DivergenceDetected(epoch)

            dlogits = np.exp(log_probs)
            dlogits[np.arange(len(batch)), yb] -= 1.0
            dlogits /= len(batch)
            layers = _sgd_step(layers, acts, dlogits, hyper.learning_rate)
        epoch_losses.append(loss_sum / n)

    new_spec = replace(spec, layers=tuple(layers))
    logits = forward_logits(new_spec, x_all)
    accuracy = float(np.mean(np.argmax(logits, axis=1) == y_all))
    return TrainResult(spec=new_spec, epoch_losses=tuple(epoch_losses),
                       final_accuracy=accuracy)


def _sgd_step(layers: list[Layer], acts: list[np.ndarray], dlogits: np.ndarray,
              lr: float) -> list[Layer]:
    updated: list[Layer] = list(layers)
    dy = dlogits
    idx = len(acts) - 2
    for pos in range(len(layers) - 1, -1, -1):
        layer = layers[pos]
        if isinstance(layer, Softmax):
            continue
        x_in = acts[idx]
        if isinstance(layer, Conv1D):
            dw, db = _conv_param_grads(dy, x_in, layer)
            dy = _conv_backward_input(dy, layer, x_in.shape[2])
            updated[pos] = replace(layer, weights=layer.weights - lr * dw,
                                   bias=layer.bias - lr * db)
        elif isinstance(layer, ReLU):
            dy = dy * (x_in > 0.0)
        elif isinstance(layer, GlobalAveragePool):
            dy = np.repeat(dy[:, :, None], x_in.shape[2], axis=2) / x_in.shape[2]
        elif isinstance(layer, Dense):
            dw = np.einsum("bo,bi->oi", dy, x_in, optimize=True)
            db = dy.sum(axis=0)
            dy = dy @ layer.weights
            updated[pos] = replace(layer, weights=layer.weights - lr * dw,
                                   bias=layer.bias - lr * db)
        idx -= 1
    return updated


# ---------------------------------------------------------------------------
# reference architecture
# ---------------------------------------------------------------------------

def reference_model(seed: int = 0, class_labels: Sequence[float] = DEFAULT_CLASS_LABELS,
                    input_channels: int = DEFAULT_INPUT_CHANNELS,
                    input_length: int = DEFAULT_INPUT_LENGTH,
                    zero_bias: bool = False,
                    weight_scale: float = 1.0) -> ModelSpec:
    """Seeded random instance of the stock conv-conv-pool-dense architecture."""
    rng = np.random.default_rng(seed)

    def he(fan_in: float) -> float:
        return weight_scale * math.sqrt(2.0 / fan_in)

    def bias(n: int) -> np.ndarray:
        if zero_bias:
            return np.zeros(n)
        return rng.normal(0.0, 0.01, size=n)

    conv1 = Conv1D(input_channels, 16, 7, 3,
                   rng.normal(0.0, he(input_channels * 7), size=(16, input_channels, 7)),
                   bias(16))
    len1 = conv_output_length(input_length, 7, 3)
    conv2 = Conv1D(16, 32, 5, 2,
                   rng.normal(0.0, he(16 * 5), size=(32, 16, 5)),
                   bias(32))
    _ = conv_output_length(len1, 5, 2)
    n_classes = len(class_labels)
    dense = Dense(32, n_classes,
                  rng.normal(0.0, he(32), size=(n_classes, 32)),
                  bias(n_classes))
    return ModelSpec(
        layers=(conv1, ReLU(), conv2, ReLU(), GlobalAveragePool(), dense, Softmax()),
        class_labels=tuple(float(c) for c in class_labels),
        input_channels=input_channels,
        input_length=input_length,
    )
