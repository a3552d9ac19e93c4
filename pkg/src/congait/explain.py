"""Layer-wise relevance propagation and sensor/segment aggregation.

Relevance starts at the target logit (pre-softmax) and is redistributed
backward layer by layer. Dense layers use the epsilon rule; conv layers use
epsilon by default or the z-plus rule when configured. ReLU passes relevance
through to its pre-activation; global average pooling spreads each output's
relevance uniformly over the samples it pooled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import CongaitError
from .ingest import CHANNEL_NAMES, GaitWindow
from .model import (
    Conv1D,
    Dense,
    GlobalAveragePool,
    ModelSpec,
    Prediction,
    ReLU,
    Softmax,
    _check_input,
    _conv_backward_input,
    forward_activations,
)


class UnsupportedLayer(CongaitError):
    def __init__(self, kind: str) -> None:
        super().__init__(f"relevance propagation does not support layer kind {kind!r}")


class ConvRule(str, Enum):
    EPSILON = "epsilon"
    ZPLUS = "zplus"


@dataclass(frozen=True)
class LrpConfig:
    epsilon: float = 1e-6
    conv_rule: ConvRule = ConvRule.EPSILON

    def __post_init__(self) -> None:
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class RelevanceMap:
    prediction: Prediction | None
    window: GaitWindow
    target_class: int
    values: np.ndarray  # same shape as the window's samples
    config: LrpConfig

    def __post_init__(self) -> None:
        self.values.setflags(write=False)


@dataclass(frozen=True)
class Segment:
    start_s: float
    end_s: float
    mass: float


@dataclass(frozen=True)
class SensorRelevance:
    channel_sums: tuple[float, ...]      # one per channel, signed
    ranking: tuple[str, ...]             # channel names, descending |sum|, stable
    top_segments: tuple[Segment, ...]


def _stabilized(z: np.ndarray, epsilon: float) -> np.ndarray:
    return z + epsilon * np.where(z >= 0.0, 1.0, -1.0)


def _conv_forward_with(x: np.ndarray, layer: Conv1D, weights: np.ndarray) -> np.ndarray:
    xv = sliding_window_view(x, layer.kernel, axis=2)[:, :, ::layer.stride, :]
    return np.einsum("bctk,ock->bot", xv, weights, optimize=True)


def lrp(spec: ModelSpec, window: GaitWindow, target_class: int,
        config: LrpConfig = LrpConfig(),
        prediction: Prediction | None = None) -> RelevanceMap:
    """Relevance of every input sample for the target class logit."""
    samples = _check_input(spec, window.samples)
    acts = forward_activations(spec.layers, samples[None])
    logits = acts[-1]

    relevance = np.zeros_like(logits)
    relevance[0, target_class] = logits[0, target_class]

    idx = len(acts) - 2
    for layer in reversed([l for l in spec.layers if not isinstance(l, Softmax)]):
        x_in = acts[idx]
        z_out = acts[idx + 1]
        if isinstance(layer, Dense):
            s = relevance / _stabilized(z_out, config.epsilon)
            relevance = x_in * (s @ layer.weights)
        elif isinstance(layer, Conv1D):
            if config.conv_rule is ConvRule.ZPLUS:
                w_plus = np.maximum(layer.weights, 0.0)
                z_plus = _conv_forward_with(x_in, layer, w_plus)
                s = np.divide(relevance, z_plus,
                              out=np.zeros_like(relevance), where=z_plus != 0.0)
                pos_layer = Conv1D(layer.in_channels, layer.out_channels,
                                   layer.kernel, layer.stride, w_plus,
                                   np.zeros_like(layer.bias))
                relevance = x_in * _conv_backward_input(s, pos_layer, x_in.shape[2])
            else:
                s = relevance / _stabilized(z_out, config.epsilon)
                relevance = x_in * _conv_backward_input(s, layer, x_in.shape[2])
        elif isinstance(layer, ReLU):
            pass  # relevance attaches to the pre-activation unchanged
        elif isinstance(layer, GlobalAveragePool):
            relevance = np.repeat(relevance[:, :, None], x_in.shape[2], axis=2) \
                / x_in.shape[2]
        else:
            raise UnsupportedLayer(type(layer).__name__)
        idx -= 1

    values = relevance[0]
    if not np.isfinite(values).all():
        raise CongaitError("relevance propagation produced non-finite values")
    return RelevanceMap(prediction=prediction, window=window,
                        target_class=target_class, values=values, config=config)


def aggregate_relevance(rmap: RelevanceMap, k: int = 3,
                        segment_seconds: float = 1.0) -> SensorRelevance:
    """Channel sums plus the top-k time bins by absolute relevance mass.

    Channel sums use the same summation as the map's column sums so the two
    agree exactly; ranking is by descending absolute sum with channel-index
    tie-break. Segment times are relative to the window start.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    sums = rmap.values.sum(axis=1)
    order = sorted(range(len(sums)), key=lambda c: (-abs(sums[c]), c))
    ranking = tuple(CHANNEL_NAMES[c] for c in order)

    duration = rmap.window.window_seconds
    rate = rmap.window.record.sample_rate_hz
    n = rmap.values.shape[1]
    n_bins = math.ceil(duration / segment_seconds - 1e-12)
    masses = []
    for i in range(n_bins):
        lo = min(n, round(i * segment_seconds * rate))
        hi = min(n, round((i + 1) * segment_seconds * rate))
        masses.append(float(np.abs(rmap.values[:, lo:hi]).sum()))
    top = sorted(range(n_bins), key=lambda i: (-masses[i], i))[:k]
    segments = tuple(
        Segment(start_s=i * segment_seconds,
                end_s=min((i + 1) * segment_seconds, duration),
                mass=masses[i])
        for i in top
    )
    return SensorRelevance(
        channel_sums=tuple(float(v) for v in sums),
        ranking=ranking,
        top_segments=segments,
    )


def relevance_export(rmap: RelevanceMap, sensor: SensorRelevance,
                     include_matrix: bool = False) -> dict:
    """Structured document consumed by the dashboard heatmap."""
    doc = {
        "shape": list(rmap.values.shape),
        "target_class": rmap.target_class,
        "rule": {"epsilon": rmap.config.epsilon,
                 "conv_rule": rmap.config.conv_rule.value},
        "channel_sums": list(sensor.channel_sums),
        "ranking": list(sensor.ranking),
        "top_segments": [[s.start_s, s.end_s, s.mass] for s in sensor.top_segments],
    }
    if include_matrix:
        doc["values"] = rmap.values.tolist()
    return doc
