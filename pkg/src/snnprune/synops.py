"""Synaptic-operation accounting.

SynOps for one sample is the sum over presynaptic neurons of
``spikes_fired * outgoing_synapses``. Per-layer values are attributed to the
*receiving* layer, i.e. the layer whose synapses carry the spikes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .data import Dataset
from .errors import ContractViolation
from .snn import LayerKind, SpikeRecord, SpikingNetwork, forward_t

ALL = None
DEFAULT_SUBSET_SEED = 7


@dataclass
class FanoutMap:
    """Outgoing synapse count per neuron, keyed by receiving layer index.

    ``per_layer[l]`` has the shape of layer ``l``'s input map.
    """

    per_layer: dict[int, np.ndarray]


@dataclass
class SynOpsReport:
    total: float
    per_layer: list[float]
    n_samples_used: int
    exact: bool


@dataclass
class CalibrationCurve:
    points: list[tuple[int, float]] = field(default_factory=list)
    tolerance: float = 0.01
    converged_at: int | None = None


def _check_masks(net: SpikingNetwork, masks) -> list[np.ndarray]:
    if masks is None:
        return [np.ones(l.spec.c_out, dtype=bool) for l in net.layers]
    if len(masks) != len(net.layers):
        raise ContractViolation(f"expected {len(net.layers)} masks, got {len(masks)}")
    out = []
    for i, (m, layer) in enumerate(zip(masks, net.layers)):
        m = np.asarray(m, dtype=bool)
        if m.shape != (layer.spec.c_out,):
            raise ContractViolation(f"mask {i} has shape {m.shape}, layer has {layer.spec.c_out} channels")
        if not m.any():
            raise ContractViolation(f"mask {i} removes every channel")
        out.append(m)
    if not out[-1].all():
        raise ContractViolation("the readout layer cannot be masked")
    return out


def axis_cover(n_in: int, kernel: int, stride: int, padding: int) -> np.ndarray:
    """How many kernel placements along one axis touch each input position."""
    n_out = (n_in + 2 * padding - kernel) // stride + 1
    cover = np.zeros(n_in, dtype=np.int64)
    for o in range(n_out):
        lo = o * stride - padding
        cover[max(lo, 0) : max(min(lo + kernel, n_in), 0)] += 1
    return cover


@lru_cache(maxsize=256)
def _fanout_cached(geometry: tuple, mask_key: tuple, include_input: bool):
    per_layer = {}
    start = 0 if include_input else 1
    for i in range(start, len(geometry)):
        kind, k, s, p, in_shape = geometry[i]
        n_out = int(np.count_nonzero(mask_key[i]))
        if kind is LayerKind.CONV2D:
            c, h, w = in_shape
            plane = np.outer(axis_cover(h, k, s, p), axis_cover(w, k, s, p)) * n_out
            fan = np.broadcast_to(plane, (c, h, w)).copy()
        else:
            fan = np.full(in_shape, n_out, dtype=np.int64)
        if i > 0:
            prev_keep = np.asarray(mask_key[i - 1], dtype=bool)
            fan[~prev_keep] = 0
        fan.flags.writeable = False
        per_layer[i] = fan
    return per_layer


def fanout(net: SpikingNetwork, masks=None, include_input: bool = False) -> FanoutMap:
    """Fan-out of every presynaptic neuron, respecting stride/padding and masks.

    Layer 0's inputs are the analog image and only get an entry with
    ``include_input``.
    """
    masks = _check_masks(net, masks)
    in_shapes = net.input_shapes()
    geometry = []
    for i, layer in enumerate(net.layers):
        spec = layer.spec
        geometry.append((spec.kind, spec.kernel, spec.stride, spec.padding, tuple(in_shapes[i])))
    mask_key = tuple(tuple(bool(v) for v in m) for m in masks)
    return FanoutMap(dict(_fanout_cached(tuple(geometry), mask_key, include_input)))


def synops_per_layer(record: SpikeRecord, fan: FanoutMap, inputs=None) -> np.ndarray:
    """(n_receiving_layers_in_fan, N) matrix of per-sample SynOps.

    Rows are ordered by receiving layer index. Spike-driven rows are exact
    integers; a layer-0 row (analog input term) needs ``inputs``.
    """
    expected = {l - 1 for l in fan.per_layer if l > 0}
    if set(record.counts) != expected:
        raise ContractViolation(
            f"spike record covers layers {sorted(record.counts)}, fan-out expects {sorted(expected)}"
        )
    rows = []
    for l in sorted(fan.per_layer):
        f = fan.per_layer[l]
        if l == 0:
            if inputs is None:
                raise ContractViolation("analog input term requested but no inputs given")
            s = np.asarray(inputs, dtype=np.float64) * record.timesteps
            rows.append((s.reshape(len(s), -1) @ f.reshape(-1).astype(np.float64)))
            continue
        s = record.counts[l - 1]
        if s.shape[1:] != f.shape:
            raise ContractViolation(f"layer {l - 1} spike map {s.shape[1:]} != fan-out {f.shape}")
        rows.append(s.reshape(len(s), -1) @ f.reshape(-1))
    if not rows:
        return np.zeros((0, 0))
    return np.stack(rows)


def synops_per_sample(record: SpikeRecord, fan: FanoutMap, inputs=None) -> np.ndarray:
    """Total SynOps of each sample in the recorded batch."""
    return synops_per_layer(record, fan, inputs).sum(axis=0)


def sample_synops(
    net: SpikingNetwork, x: np.ndarray, masks=None, include_input=False, batch_size: int = 500
) -> np.ndarray:
    """Per-layer, per-sample SynOps matrix of shape (n_layers, N) for inputs ``x``."""
    fan = fanout(net, masks, include_input)
    out = np.zeros((len(net.layers), len(x)), dtype=np.float64 if include_input else np.int64)
    for start in range(0, len(x), batch_size):
        xb = x[start : start + batch_size]
        _, record = forward_t(net, xb)
        rows = synops_per_layer(record, fan, xb if include_input else None)
        for r, l in enumerate(sorted(fan.per_layer)):
            out[l, start : start + len(xb)] = rows[r]
    return out


def subset_indices(n: int, subset_size, seed: int = DEFAULT_SUBSET_SEED) -> np.ndarray:
    if subset_size is ALL:
        return np.arange(n)
    if subset_size < 1:
        raise ContractViolation("subset must contain at least one sample")
    if subset_size > n:
        raise ContractViolation(f"subset of {subset_size} exceeds dataset size {n}")
    return np.sort(np.random.default_rng(seed).choice(n, size=subset_size, replace=False))


def synops_average(
    net: SpikingNetwork,
    data: Dataset,
    subset_size=ALL,
    seed: int = DEFAULT_SUBSET_SEED,
    masks=None,
    include_input: bool = False,
) -> SynOpsReport:
    """Mean SynOps over the whole dataset (``ALL``) or a seeded random subset."""
    if len(data) == 0:
        raise ContractViolation("empty dataset")
    idx = subset_indices(len(data), subset_size, seed)
    per = sample_synops(net, data.x[idx], masks, include_input)
    n = len(idx)
    if include_input:
        per_layer = [math.fsum(row) / n for row in per]
        total = math.fsum(per.ravel()) / n
    else:
        per_layer = [int(row.sum()) / n for row in per]
        total = int(per.sum()) / n
    return SynOpsReport(total, per_layer, n, subset_size is ALL)


def calibrate_subset(
    net: SpikingNetwork,
    data: Dataset,
    tolerance: float = 0.01,
    step: int = 10,
    seed: int = DEFAULT_SUBSET_SEED,
    include_input: bool = False,
) -> CalibrationCurve:
    """Grow a random subset ``step`` samples at a time and track relative error
    of its mean SynOps against the full-dataset mean."""
    if tolerance < 0 or step < 1:
        raise ContractViolation("tolerance must be >= 0 and step >= 1")
    n = len(data)
    if n == 0:
        raise ContractViolation("empty dataset")
    totals = sample_synops(net, data.x, None, include_input).sum(axis=0)
    order = np.random.default_rng(seed).permutation(n)
    prefix = np.cumsum(totals[order])
    full_sum = prefix[-1]
    sizes = list(range(step, n, step)) + [n]
    curve = CalibrationCurve(tolerance=tolerance)
    for m in sizes:
        # cross-multiplied to keep integer SynOps exact: (S_m/m - S/n) / (S/n)
        diff = prefix[m - 1] * n - full_sum * m
        denom = full_sum * m
        err = abs(float(diff) / float(denom)) if denom else (0.0 if diff == 0 else math.inf)
        curve.points.append((m, err))
        if curve.converged_at is None and err < tolerance:
            curve.converged_at = m
    return curve


def param_count(net: SpikingNetwork, masks=None) -> int:
    """Weights left after masking: sum of kept_out * kept_in * k * k."""
    masks = _check_masks(net, masks)
    in_shapes = net.input_shapes()
    total = 0
    for i, layer in enumerate(net.layers):
        spec = layer.spec
        kept_out = int(masks[i].sum())
        if i == 0:
            kept_in = spec.c_in
        else:
            kept_prev = int(masks[i - 1].sum())
            if spec.kind is LayerKind.DENSE:
                per_channel = math.prod(in_shapes[i]) // in_shapes[i][0]
                kept_in = kept_prev * per_channel
            else:
                kept_in = kept_prev
        total += kept_out * kept_in * spec.kernel * spec.kernel
    return total
