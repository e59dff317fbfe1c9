"""Spiking network model: LIF neurons, T-step simulation and backprop through time."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import kernels
from .errors import ContractViolation, NumericalError

SURROGATE_ALPHA = 2.0


class LayerKind(str, Enum):
    CONV2D = "Conv2D"
    DENSE = "Dense"


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    c_in: int
    c_out: int
    kernel: int = 1
    stride: int = 1
    padding: int = 0
    has_lif: bool = True

    def __post_init__(self):
        if min(self.c_in, self.c_out, self.kernel, self.stride) < 1 or self.padding < 0:
            raise ContractViolation(f"invalid layer geometry: {self}")
        if self.kind is LayerKind.DENSE and (self.kernel != 1 or self.stride != 1 or self.padding):
            raise ContractViolation("dense layers have kernel=1, stride=1, padding=0")

    @property
    def params(self) -> int:
        return self.c_out * self.c_in * self.kernel * self.kernel

    @property
    def weight_shape(self) -> tuple:
        if self.kind is LayerKind.CONV2D:
            return (self.c_out, self.c_in, self.kernel, self.kernel)
        return (self.c_out, self.c_in)


@dataclass(frozen=True)
class LifParams:
    v_threshold: float = 1.0
    tau: float = 2.0
    v_reset: float = 0.0
    decay_input: bool = False

    def __post_init__(self):
        if not (self.v_threshold > 0 and self.tau > 1 and self.v_reset < self.v_threshold):
            raise ContractViolation(f"invalid LIF parameters: {self}")
        if self.decay_input:
            raise ContractViolation("decayed input currents are not supported")


@dataclass
class Layer:
    spec: LayerSpec
    weight: np.ndarray
    lif: LifParams | None = None


@dataclass
class SpikingNetwork:
    """Sequential stack of conv/dense layers; every layer but the readout spikes."""

    layers: list[Layer]
    timesteps: int
    input_shape: tuple
    surrogate_alpha: float = SURROGATE_ALPHA

    def __post_init__(self):
        self.input_shape = tuple(int(v) for v in self.input_shape)
        self.validate()

    def validate(self) -> None:
        if self.timesteps < 1:
            raise ContractViolation("timesteps must be >= 1")
        if not self.layers:
            raise ContractViolation("network has no layers")
        shape = self.input_shape
        for i, layer in enumerate(self.layers):
            spec = layer.spec
            last = i == len(self.layers) - 1
            if spec.has_lif == last:
                raise ContractViolation(f"layer {i}: only the final readout may lack LIF neurons")
            if last and spec.kind is not LayerKind.DENSE:
                raise ContractViolation("the readout layer must be dense")
            if spec.has_lif and layer.lif is None:
                raise ContractViolation(f"layer {i}: LIF parameters missing")
            if tuple(layer.weight.shape) != spec.weight_shape:
                raise ContractViolation(
                    f"layer {i}: weight shape {layer.weight.shape} != {spec.weight_shape}"
                )
            if spec.kind is LayerKind.CONV2D:
                if len(shape) != 3 or shape[0] != spec.c_in:
                    raise ContractViolation(f"layer {i}: conv input {shape} incompatible with c_in={spec.c_in}")
                ho = kernels.conv_output_size(shape[1], spec.kernel, spec.stride, spec.padding)
                wo = kernels.conv_output_size(shape[2], spec.kernel, spec.stride, spec.padding)
                if ho < 1 or wo < 1:
                    raise ContractViolation(f"layer {i}: empty spatial output")
                shape = (spec.c_out, ho, wo)
            else:
                if math.prod(shape) != spec.c_in:
                    raise ContractViolation(f"layer {i}: dense c_in={spec.c_in} but input has {math.prod(shape)} features")
                shape = (spec.c_out,)

    def output_shapes(self) -> list[tuple]:
        shapes, shape = [], self.input_shape
        for layer in self.layers:
            spec = layer.spec
            if spec.kind is LayerKind.CONV2D:
                shape = (
                    spec.c_out,
                    kernels.conv_output_size(shape[1], spec.kernel, spec.stride, spec.padding),
                    kernels.conv_output_size(shape[2], spec.kernel, spec.stride, spec.padding),
                )
            else:
                shape = (spec.c_out,)
            shapes.append(shape)
        return shapes

    def input_shapes(self) -> list[tuple]:
        return [self.input_shape] + self.output_shapes()[:-1]

    @property
    def prunable(self) -> list[int]:
        """Indices of layers whose output channels may be pruned (all but the readout)."""
        return list(range(len(self.layers) - 1))

    @property
    def n_classes(self) -> int:
        return self.layers[-1].spec.c_out

    def param_count(self) -> int:
        return sum(layer.spec.params for layer in self.layers)

    def copy(self) -> "SpikingNetwork":
        layers = [Layer(l.spec, l.weight.copy(), l.lif) for l in self.layers]
        return replace(self, layers=layers)


@dataclass
class SpikeRecord:
    """Per-neuron spike counts summed over time, keyed by layer index.

    Each entry has shape (N, *layer_output_shape) with integer counts in [0, T].
    """

    counts: dict[int, np.ndarray] = field(default_factory=dict)
    timesteps: int = 1

    @property
    def per_layer_totals(self) -> list[int]:
        return [int(self.counts[i].sum()) for i in sorted(self.counts)]


# ---------------------------------------------------------------------------
# LIF neuron and surrogate


def surrogate_grad(x, alpha: float = SURROGATE_ALPHA):
    """Derivative of the arctan surrogate ``atan(pi/2*alpha*x)/pi + 1/2``."""
    x = np.asarray(x, dtype=np.float64)
    return (alpha / 2.0) / (1.0 + (math.pi / 2.0 * alpha * x) ** 2)


def surrogate_fn(x, alpha: float = SURROGATE_ALPHA):
    x = np.asarray(x, dtype=np.float64)
    return np.arctan(math.pi / 2.0 * alpha * x) / math.pi + 0.5


def lif_step(state, current, p: LifParams):
    """One hard-reset LIF update. Returns ``(spikes, new_state)``."""
    state = np.asarray(state, dtype=np.float64)
    current = np.asarray(current, dtype=np.float64)
    if state.shape != current.shape:
        raise ContractViolation(f"state shape {state.shape} != input shape {current.shape}")
    h = state - (state - p.v_reset) / p.tau + current
    spikes = (h >= p.v_threshold).astype(np.float64)
    return spikes, np.where(spikes > 0, p.v_reset, h)


def lif_forward(currents, p: LifParams, relaxed: bool = False, alpha: float = SURROGATE_ALPHA):
    """Run LIF neurons over currents of shape (T, ...).

    Returns ``(out, h, spikes)`` where ``h`` is the pre-reset potential per step.
    With ``relaxed`` the emitted output is the smooth surrogate of ``h`` instead
    of the binary spike; the reset still uses the hard spike.
    """
    currents = np.asarray(currents, dtype=np.float64)
    h_seq = np.empty_like(currents)
    s_seq = np.empty_like(currents)
    decay = 1.0 - 1.0 / p.tau
    leak_to = p.v_reset / p.tau
    v = np.zeros(currents.shape[1:])
    for t in range(currents.shape[0]):
        h = h_seq[t]
        np.multiply(v, decay, out=h)
        if leak_to:
            h += leak_to
        h += currents[t]
        fired = h >= p.v_threshold
        s_seq[t] = fired
        v = np.where(fired, p.v_reset, h)
    out = surrogate_fn(h_seq - p.v_threshold, alpha) if relaxed else s_seq
    return out, h_seq, s_seq


def lif_backward(grad_out, h_seq, s_seq, p: LifParams, alpha: float = SURROGATE_ALPHA):
    """Gradient w.r.t. input currents; the reset path is detached."""
    decay = 1.0 - 1.0 / p.tau
    grad_in = np.empty_like(h_seq)
    grad_v = np.zeros(h_seq.shape[1:])
    for t in range(h_seq.shape[0] - 1, -1, -1):
        g = grad_out[t] * surrogate_grad(h_seq[t] - p.v_threshold, alpha) + grad_v * (1.0 - s_seq[t])
        grad_in[t] = g
        grad_v = g * decay
    return grad_in


# ---------------------------------------------------------------------------
# Network forward / backward


def _apply(layer: Layer, x: np.ndarray):
    w = layer.weight.astype(np.float64, copy=False)
    spec = layer.spec
    if spec.kind is LayerKind.CONV2D:
        return kernels.conv2d(x, w, spec.stride, spec.padding)
    x2 = x.reshape(x.shape[0], -1)
    return kernels.dense(x2, w), x2


def _check_batch(net: SpikingNetwork, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 4 or tuple(batch.shape[1:]) != net.input_shape:
        raise ContractViolation(f"batch shape {batch.shape} does not match input {net.input_shape}")
    return batch


def _simulate(net: SpikingNetwork, batch: np.ndarray, keep_cache: bool):
    T = net.timesteps
    n = batch.shape[0]
    caches = []
    spikes = None  # (T, N, ...) output of the previous spiking layer
    counts = {}
    logits = None
    for i, layer in enumerate(net.layers):
        if i == 0:
            cur, aux = _apply(layer, batch)
            static = True
        else:
            flat = spikes.reshape((T * n,) + spikes.shape[2:])
            cur, aux = _apply(layer, flat)
            cur = cur.reshape((T, n) + cur.shape[1:])
            static = False
        if not np.isfinite(cur).all():
            raise NumericalError(f"non-finite activation in layer {i}", layer_index=i)
        if not layer.spec.has_lif:
            logits = np.broadcast_to(cur, (T,) + cur.shape) if static else cur
            if keep_cache:
                caches.append({"aux": aux, "static": static})
            break
        seq = np.broadcast_to(cur, (T,) + cur.shape) if static else cur
        _, h_seq, s_seq = lif_forward(seq, layer.lif, alpha=net.surrogate_alpha)
        counts[i] = s_seq.sum(axis=0).astype(np.int64)
        if keep_cache:
            x_shape = batch.shape if static else (T * n,) + spikes.shape[2:]
            caches.append({"aux": aux, "static": static, "h": h_seq, "s": s_seq, "x_shape": x_shape})
        spikes = s_seq
    return np.array(logits), SpikeRecord(counts, T), caches


def forward_t(net: SpikingNetwork, batch) -> tuple[np.ndarray, SpikeRecord]:
    """Simulate ``net`` for T steps on a static batch replicated along time.

    Returns per-timestep logits of shape (T, N, classes) and the spike record.
    """
    batch = _check_batch(net, batch)
    logits, record, _ = _simulate(net, batch, keep_cache=False)
    return logits, record


def forward_backward(net: SpikingNetwork, batch, labels):
    """Loss and per-layer weight gradients for one batch (BPTT, surrogate spikes)."""
    batch = _check_batch(net, batch)
    logits, record, caches = _simulate(net, batch, keep_cache=True)
    loss, grad_logits = tet_loss_and_grad(logits, labels)
    T, n = logits.shape[0], batch.shape[0]
    grads: list[np.ndarray | None] = [None] * len(net.layers)
    grad = grad_logits  # gradient w.r.t. current layer's output sequence
    for i in range(len(net.layers) - 1, -1, -1):
        layer, cache = net.layers[i], caches[i]
        spec = layer.spec
        if spec.has_lif:
            grad = lif_backward(grad, cache["h"], cache["s"], layer.lif, net.surrogate_alpha)
        if cache["static"]:
            grad = grad.sum(axis=0)
        else:
            grad = grad.reshape((T * n,) + grad.shape[2:])
        w = layer.weight.astype(np.float64, copy=False)
        need_x = i > 0
        if spec.kind is LayerKind.CONV2D:
            gx, gw = kernels.conv2d_backward(
                grad, cache["aux"], cache["x_shape"], w, spec.stride, spec.padding, need_x
            )
        else:
            gx, gw = kernels.dense_backward(grad, cache["aux"], w, need_x)
        grads[i] = gw
        if need_x:
            prev_shape = net.output_shapes()[i - 1]
            grad = gx.reshape((T, n) + prev_shape)
    return loss, grads, logits, record


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def tet_loss(logits, labels) -> float:
    """Mean over timesteps of the batch-mean cross-entropy."""
    return tet_loss_and_grad(logits, labels)[0]


def tet_loss_and_grad(logits, labels):
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    T, n, k = logits.shape
    if labels.shape != (n,) or labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ContractViolation("labels out of range or mis-shaped")
    logp = log_softmax(logits)
    idx = np.arange(n)
    loss = -logp[:, idx, labels].mean()
    grad = np.exp(logp)
    grad[:, idx, labels] -= 1.0
    return float(loss), grad / (T * n)


# ---------------------------------------------------------------------------
# Construction


def desk_architecture(input_shape, n_classes: int, channels=(8, 16, 16)) -> list[LayerSpec]:
    """Conv(s1) -> Conv(s2) -> Conv(s2) -> Dense readout; all 3x3, padding 1."""
    specs = []
    c, h, w = input_shape
    for j, c_out in enumerate(channels):
        stride = 1 if j == 0 else 2
        specs.append(LayerSpec(LayerKind.CONV2D, c, c_out, 3, stride, 1))
        c = c_out
        h = kernels.conv_output_size(h, 3, stride, 1)
        w = kernels.conv_output_size(w, 3, stride, 1)
    specs.append(LayerSpec(LayerKind.DENSE, c * h * w, n_classes, has_lif=False))
    return specs


def init_network(
    specs: list[LayerSpec],
    input_shape,
    timesteps: int,
    rng: np.random.Generator,
    lif: LifParams | None = None,
    gain: float = 2.0,
) -> SpikingNetwork:
    """Gaussian init with std ``gain / sqrt(fan_in)``; weights stored as float32."""
    lif = lif or LifParams()
    layers = []
    for spec in specs:
        fan_in = spec.c_in * spec.kernel * spec.kernel
        w = rng.normal(0.0, gain / math.sqrt(fan_in), size=spec.weight_shape).astype(np.float32)
        layers.append(Layer(spec, w, lif if spec.has_lif else None))
    return SpikingNetwork(layers, timesteps, tuple(input_shape))
