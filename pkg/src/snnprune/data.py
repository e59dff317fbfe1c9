"""Datasets: the SPKD binary container and a synthetic Gaussian-blob generator.

SPKD layout (little-endian)::

    b"SPKD" | version u32 | n_samples u32 | C u32 | H u32 | W u32 | n_classes u32
    | f32 samples (n*C*H*W, row-major) | u16 labels (n)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractViolation

MAGIC = b"SPKD"
VERSION = 1
_HEADER = struct.Struct("<4s6I")


@dataclass
class Dataset:
    x: np.ndarray  # (N, C, H, W) float32
    y: np.ndarray  # (N,) int64
    n_classes: int

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float32)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 4 or self.x.shape[0] != self.y.shape[0]:
            raise ContractViolation(f"inconsistent dataset shapes {self.x.shape} / {self.y.shape}")
        if len(self.y) and (self.y.min() < 0 or self.y.max() >= self.n_classes):
            raise ContractViolation("label out of range")

    def __len__(self) -> int:
        return int(self.y.shape[0])

    @property
    def sample_shape(self) -> tuple:
        return tuple(self.x.shape[1:])

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.x[idx], self.y[idx], self.n_classes)

    def split_holdout(self, fraction: float) -> tuple["Dataset", "Dataset"]:
        """Split off the last ``fraction`` of samples as a validation set."""
        n_val = int(round(len(self) * fraction))
        cut = len(self) - n_val
        return self.subset(np.arange(cut)), self.subset(np.arange(cut, len(self)))


def write_spkd(path, ds: Dataset) -> None:
    n, c, h, w = ds.x.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, c, h, w, ds.n_classes))
        fh.write(np.ascontiguousarray(ds.x, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(ds.y, dtype="<u2").tobytes())


def read_spkd(path) -> Dataset:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ContractViolation(f"{path}: truncated header")
    magic, version, n, c, h, w, k = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ContractViolation(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise ContractViolation(f"{path}: unsupported version {version}")
    n_x = n * c * h * w
    expected = _HEADER.size + 4 * n_x + 2 * n
    if len(raw) != expected:
        raise ContractViolation(f"{path}: expected {expected} bytes, found {len(raw)}")
    x = np.frombuffer(raw, dtype="<f4", count=n_x, offset=_HEADER.size).reshape(n, c, h, w)
    y = np.frombuffer(raw, dtype="<u2", count=n, offset=_HEADER.size + 4 * n_x)
    return Dataset(x.astype(np.float32), y.astype(np.int64), k)


@dataclass(frozen=True)
class SyntheticDatasetSpec:
    n_train: int = 2000
    n_test: int = 500
    n_val_holdout_fraction: float = 0.2
    n_classes: int = 4
    channels: int = 2
    height: int = 16
    width: int = 16
    separation: float = 1.5
    noise: float = 0.5
    blob_width: float = 2.5
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ContractViolation("n_classes must be >= 2")
        if self.separation <= 0:
            raise ContractViolation("separation must be positive")
        if self.noise < 0 or self.blob_width <= 0:
            raise ContractViolation("noise must be >= 0 and blob_width > 0")
        if min(self.n_train, self.channels, self.height, self.width) < 1 or self.n_test < 0:
            raise ContractViolation("dataset dimensions must be positive")
        if not 0 <= self.n_val_holdout_fraction < 1:
            raise ContractViolation("holdout fraction must lie in [0, 1)")


def class_prototypes(spec: SyntheticDatasetSpec, rng: np.random.Generator) -> np.ndarray:
    """One Gaussian blob per (class, channel) at a random centre; peak value 1."""
    yy, xx = np.mgrid[0 : spec.height, 0 : spec.width]
    protos = np.empty((spec.n_classes, spec.channels, spec.height, spec.width))
    for k in range(spec.n_classes):
        for c in range(spec.channels):
            cy = rng.uniform(0, spec.height - 1)
            cx = rng.uniform(0, spec.width - 1)
            protos[k, c] = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * spec.blob_width**2))
    return protos


def make_synthetic(spec: SyntheticDatasetSpec) -> tuple[Dataset, Dataset]:
    """Return ``(train, test)`` drawn from the same class-conditional distribution."""
    rng = np.random.default_rng(spec.seed)
    protos = class_prototypes(spec, rng)

    def draw(n):
        y = rng.integers(0, spec.n_classes, size=n)
        x = spec.separation * protos[y] + spec.noise * rng.standard_normal((n,) + protos.shape[1:])
        return Dataset(x.astype(np.float32), y, spec.n_classes)

    return draw(spec.n_train), draw(spec.n_test)
