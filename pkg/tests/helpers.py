"""Independent oracles and tiny-model builders shared by the tests.

The oracles deliberately avoid the package's vectorised code paths: SynOps are
counted by walking every synapse, regression uses the normal equations, and
so on.
"""

import itertools
import math

import numpy as np

from snnprune.data import Dataset, SyntheticDatasetSpec, make_synthetic
from snnprune.snn import Layer, LayerKind, LayerSpec, LifParams, SpikingNetwork, init_network


def dense_net(sizes, weights=None, timesteps=4, lif=None):
    """Chain of dense layers over a (sizes[0], 1, 1) input; last layer is the readout."""
    lif = lif or LifParams()
    layers = []
    for j, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = j == len(sizes) - 2
        w = np.zeros((b, a), dtype=np.float32) if weights is None else np.asarray(weights[j], dtype=np.float32)
        layers.append(Layer(LayerSpec(LayerKind.DENSE, a, b, has_lif=not last), w, None if last else lif))
    return SpikingNetwork(layers, timesteps, (sizes[0], 1, 1))


def random_tiny_net(rng, max_layers=3, max_channels=8, timesteps=None):
    """Random conv/dense stack of at most ``max_layers`` layers, readout included."""
    n_layers = int(rng.integers(2, max_layers + 1))
    c = int(rng.integers(1, max_channels + 1))
    h = int(rng.integers(3, 8))
    w = int(rng.integers(3, 8))
    input_shape = (c, h, w)
    specs, shape = [], input_shape
    for j in range(n_layers - 1):
        c_out = int(rng.integers(1, max_channels + 1))
        if len(shape) == 3 and rng.random() < 0.7:
            k = int(rng.choice([1, 2, 3]))
            s = int(rng.choice([1, 2]))
            p = int(rng.integers(0, k))
            ho = (shape[1] + 2 * p - k) // s + 1
            wo = (shape[2] + 2 * p - k) // s + 1
            if ho >= 1 and wo >= 1:
                specs.append(LayerSpec(LayerKind.CONV2D, shape[0], c_out, k, s, p))
                shape = (c_out, ho, wo)
                continue
        specs.append(LayerSpec(LayerKind.DENSE, math.prod(shape), c_out))
        shape = (c_out,)
    specs.append(LayerSpec(LayerKind.DENSE, math.prod(shape), int(rng.integers(2, 5)), has_lif=False))
    T = timesteps or int(rng.integers(1, 5))
    net = init_network(specs, input_shape, T, rng, gain=3.0)
    return net


def random_masks(net, rng):
    masks = []
    for i, layer in enumerate(net.layers):
        c = layer.spec.c_out
        if i == len(net.layers) - 1:
            masks.append(np.ones(c, dtype=bool))
            continue
        m = rng.random(c) < 0.6
        m[rng.integers(c)] = True
        masks.append(m)
    return masks


def enumerate_synops(net, counts, masks=None):
    """SynOps of one sample by replaying each spike over every synapse it drives.

    ``counts[l]`` is layer ``l``'s spike-count map for the sample. Synapses from
    or to masked channels do not exist.
    """
    masks = masks or [np.ones(l.spec.c_out, dtype=bool) for l in net.layers]
    in_shapes = [net.input_shape] + [tuple(counts[i].shape) for i in range(len(net.layers) - 1)]
    total = 0
    for l in range(1, len(net.layers)):
        spec = net.layers[l].spec
        src = counts[l - 1]
        src_keep = masks[l - 1]
        if spec.kind is LayerKind.DENSE:
            flat = src.reshape(-1)
            per_channel = flat.size // len(src_keep)
            for j, s in enumerate(flat):
                if not src_keep[j // per_channel]:
                    continue
                for o in range(spec.c_out):
                    if masks[l][o]:
                        total += int(s)
            continue
        c, h, w = in_shapes[l]
        ho = (h + 2 * spec.padding - spec.kernel) // spec.stride + 1
        wo = (w + 2 * spec.padding - spec.kernel) // spec.stride + 1
        for o, oy, ox, ci, ky, kx in itertools.product(
            range(spec.c_out), range(ho), range(wo), range(c), range(spec.kernel), range(spec.kernel)
        ):
            if not masks[l][o] or not src_keep[ci]:
                continue
            iy = oy * spec.stride - spec.padding + ky
            ix = ox * spec.stride - spec.padding + kx
            if 0 <= iy < h and 0 <= ix < w:
                total += int(src[ci, iy, ix])
    return total


def normal_equations(x, y):
    """Slope and intercept from the 2x2 normal equations."""
    a = np.array([[np.sum(x * x), np.sum(x)], [np.sum(x), len(x)]], dtype=np.float64)
    rhs = np.array([np.sum(x * y), np.sum(y)], dtype=np.float64)
    w, b = np.linalg.solve(a, rhs)
    return float(w), float(b)


def blob_data(n=240, n_test=80, n_classes=2, size=8, seed=0, separation=1.5, noise=0.5):
    spec = SyntheticDatasetSpec(
        n_train=n, n_test=n_test, n_classes=n_classes, channels=2, height=size, width=size,
        separation=separation, noise=noise, blob_width=2.0, seed=seed,
    )
    return make_synthetic(spec)


def small_conv_net(input_shape, n_classes, channels=(6, 8), seed=0, timesteps=4):
    """Conv stride 1 then stride-2 convs, dense readout."""
    from snnprune.snn import desk_architecture

    return init_network(
        desk_architecture(input_shape, n_classes, channels), input_shape, timesteps,
        np.random.default_rng(seed),
    )


def constant_dataset(x, n, n_classes=2):
    xs = np.repeat(np.asarray(x, dtype=np.float32)[None], n, axis=0)
    return Dataset(xs, np.zeros(n, dtype=np.int64), n_classes)
