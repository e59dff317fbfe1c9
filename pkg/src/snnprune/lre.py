"""Linear estimator of post-finetune SynOps from pre-finetune SynOps."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .data import Dataset
from .errors import ContractViolation, DegenerateDesignError, TrainingDiverged
from .prune import PruningPolicy, apply_policy
from .snn import SpikingNetwork
from .synops import DEFAULT_SUBSET_SEED, synops_average
from .train import TrainConfig, train

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LrePoint:
    policy_id: int
    pre: float
    post: float

    def __post_init__(self):
        if not (self.pre > 0 and self.post > 0):
            raise ContractViolation(f"SynOps must be positive, got pre={self.pre} post={self.post}")


@dataclass(frozen=True)
class LreModel:
    """``post ~= w * pre + b``. ``mse`` holds the root-mean-square residual."""

    w: float
    b: float
    mse: float = 0.0
    r2: float | None = 1.0


def random_policy(rng: np.random.Generator, n_layers: int, max_ratio: float = 0.9) -> PruningPolicy:
    return PruningPolicy(tuple(rng.uniform(0.0, max_ratio, size=n_layers)))


def finetune_config(pretrain: TrainConfig, fraction: float = 0.25, seed: int | None = None) -> TrainConfig:
    """Shortened schedule used after pruning."""
    epochs = max(1, int(pretrain.epochs * fraction))
    warmup = min(int(pretrain.warmup_epochs * fraction), epochs - 1)
    return replace(pretrain, epochs=epochs, warmup_epochs=warmup, seed=pretrain.seed if seed is None else seed)


def gen_dataset(
    net: SpikingNetwork,
    data: Dataset,
    n_policies: int,
    finetune_cfg: TrainConfig,
    *,
    train_data: Dataset | None = None,
    seed: int = 0,
    subset_size: int | None = 500,
    subset_seed: int = DEFAULT_SUBSET_SEED,
    max_ratio: float = 0.9,
    include_identity: bool = False,
    include_input: bool = False,
) -> list[LrePoint]:
    """Prune with random policies, finetune, and record (pre, post) SynOps pairs.

    SynOps are measured on the same fixed subset of ``data`` before and after
    finetuning; finetuning uses ``train_data`` (defaults to ``data``).
    """
    if n_policies < 2:
        raise ContractViolation("at least two policies are needed to fit a line")
    train_data = data if train_data is None else train_data
    rng = np.random.default_rng(seed)
    n_layers = len(net.prunable)
    points = []
    for pid in range(n_policies):
        if include_identity and pid == 0:
            policy = PruningPolicy.identity(n_layers)
        else:
            policy = random_policy(rng, n_layers, max_ratio)
        pruned, _ = apply_policy(net, policy)
        pre = synops_average(pruned, data, subset_size, subset_seed, include_input=include_input).total
        try:
            tuned, _ = train(pruned, train_data, replace(finetune_cfg, seed=finetune_cfg.seed + pid))
        except TrainingDiverged as exc:
            log.warning("policy %d: finetuning diverged (%s); point dropped", pid, exc)
            continue
        post = synops_average(tuned, data, subset_size, subset_seed, include_input=include_input).total
        if pre <= 0 or post <= 0:
            log.warning("policy %d: network went silent (pre=%g, post=%g); point dropped", pid, pre, post)
            continue
        log.info("policy %d: ratios=%s pre=%.1f post=%.1f", pid, np.round(policy.ratios, 3), pre, post)
        points.append(LrePoint(pid, pre, post))
    return points


def _residual_stats(pre: np.ndarray, post: np.ndarray, pred: np.ndarray):
    resid = post - pred
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((post - post.mean()) ** 2))
    rmse = math.sqrt(ss_res / len(post))
    r2 = None if ss_tot == 0 else 1.0 - ss_res / ss_tot
    return rmse, r2


def fit(points: list[LrePoint]) -> LreModel:
    """Closed-form ordinary least squares on the centred data."""
    if len(points) < 2:
        raise ContractViolation("need at least two points")
    x = np.array([p.pre for p in points], dtype=np.float64)
    y = np.array([p.post for p in points], dtype=np.float64)
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0.0:
        raise DegenerateDesignError("all pre-finetune SynOps are identical")
    w = float(xc @ (y - y.mean())) / sxx
    b = float(y.mean() - w * x.mean())
    rmse, r2 = _residual_stats(x, y, w * x + b)
    return LreModel(w, b, rmse, r2)


def predict(model: LreModel, pre: float) -> float:
    if pre < 0:
        raise ContractViolation("SynOps cannot be negative")
    return max(0.0, model.w * pre + model.b)


def metrics(model: LreModel, holdout: list[LrePoint]):
    """``(rmse, r2)`` of the model on ``holdout``; r2 is None when targets are constant."""
    if not holdout:
        raise ContractViolation("holdout set is empty")
    x = np.array([p.pre for p in holdout], dtype=np.float64)
    y = np.array([p.post for p in holdout], dtype=np.float64)
    pred = np.array([predict(model, v) for v in x])
    return _residual_stats(x, y, pred)


def split_holdout(points: list[LrePoint], n_holdout: int):
    """Fit set and holdout set; the holdout is the highest policy ids."""
    ordered = sorted(points, key=lambda p: p.policy_id)
    if not 0 < n_holdout < len(ordered):
        raise ContractViolation(f"cannot hold out {n_holdout} of {len(ordered)} points")
    return ordered[:-n_holdout], ordered[-n_holdout:]
