"""L1-norm structured channel pruning.

Pruning is physical: removed output channels disappear from the layer's weight
tensor and the matching input slices disappear from the next layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset
from .errors import ContractViolation
from .snn import Layer, LayerKind, SpikingNetwork
from .synops import DEFAULT_SUBSET_SEED, synops_average


@dataclass(frozen=True)
class PruningPolicy:
    ratios: tuple

    def __post_init__(self):
        ratios = tuple(float(r) for r in self.ratios)
        for i, r in enumerate(ratios):
            if not (0.0 <= r < 1.0):
                raise ContractViolation(f"ratio {i} = {r} outside [0, 1)")
        object.__setattr__(self, "ratios", ratios)

    def __len__(self) -> int:
        return len(self.ratios)

    @classmethod
    def identity(cls, n_layers: int) -> "PruningPolicy":
        return cls((0.0,) * n_layers)


def keep_count(c_out: int, ratio: float) -> int:
    return max(1, math.ceil(c_out * (1.0 - ratio)))


def l1_scores(net: SpikingNetwork, layer_index: int) -> np.ndarray:
    """Sum of absolute weights of each output channel."""
    if layer_index not in net.prunable:
        raise ContractViolation(f"layer {layer_index} is not prunable")
    w = net.layers[layer_index].weight.astype(np.float64)
    return np.abs(w).reshape(w.shape[0], -1).sum(axis=1)


def select_channels(scores: np.ndarray, n_keep: int) -> np.ndarray:
    """Indices of the ``n_keep`` channels to keep, ascending.

    Lowest scores are pruned first; equal scores prune the lower index first.
    """
    scores = np.asarray(scores)
    order = np.lexsort((np.arange(len(scores)), scores))
    return np.sort(order[len(scores) - n_keep :])


def prune_layer(net: SpikingNetwork, layer_index: int, ratio: float):
    """Remove the lowest-L1 output channels of one layer.

    Returns ``(new_net, kept_indices)``; ``net`` is not modified.
    """
    if not 0.0 <= ratio < 1.0:
        raise ContractViolation(f"ratio {ratio} outside [0, 1)")
    layer = net.layers[layer_index]
    c_out = layer.spec.c_out
    keep = select_channels(l1_scores(net, layer_index), keep_count(c_out, ratio))
    layers = [Layer(l.spec, l.weight.copy(), l.lif) for l in net.layers]
    layers[layer_index] = Layer(
        replace(layer.spec, c_out=len(keep)), layer.weight[keep].copy(), layer.lif
    )
    nxt = net.layers[layer_index + 1]
    w = nxt.weight
    if nxt.spec.kind is LayerKind.CONV2D:
        w_new = w[:, keep]
        c_in = len(keep)
    else:
        out_shape = net.output_shapes()[layer_index]
        per_channel = math.prod(out_shape[1:])
        w_new = w.reshape(w.shape[0], c_out, per_channel)[:, keep].reshape(w.shape[0], -1)
        c_in = len(keep) * per_channel
    layers[layer_index + 1] = Layer(replace(nxt.spec, c_in=c_in), np.ascontiguousarray(w_new), nxt.lif)
    return replace(net, layers=layers), keep


def apply_policy(net: SpikingNetwork, policy: PruningPolicy):
    """Prune every prunable layer in order; each layer is scored after its
    predecessors were pruned.

    Returns ``(pruned_net, masks)`` where ``masks[i]`` is the keep-vector over
    the original output channels of layer ``i``.
    """
    if len(policy) != len(net.prunable):
        raise ContractViolation(f"policy has {len(policy)} ratios, network has {len(net.prunable)} prunable layers")
    masks = [np.ones(l.spec.c_out, dtype=bool) for l in net.layers]
    pruned = net
    for i, ratio in zip(net.prunable, policy.ratios):
        pruned, keep = prune_layer(pruned, i, ratio)
        masks[i] = np.zeros(net.layers[i].spec.c_out, dtype=bool)
        masks[i][keep] = True
    return pruned, masks


def pre_finetune_synops(
    net: SpikingNetwork,
    policy: PruningPolicy,
    data: Dataset,
    subset_size: int | None = 500,
    seed: int = DEFAULT_SUBSET_SEED,
    include_input: bool = False,
) -> float:
    pruned, _ = apply_policy(net, policy)
    return synops_average(pruned, data, subset_size, seed, include_input=include_input).total
