"""Pipeline stages shared by the CLI and the test-suite.

Each stage reads its inputs from and writes its outputs to one directory.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import io, lre
from .agent import DdpgAgent
from .config import RunConfig
from .data import Dataset, SyntheticDatasetSpec, make_synthetic, read_spkd, write_spkd
from .errors import ContractViolation, MissingArtifactError
from .search import PruningEnv, SearchConfig, SearchOutcome, TarConfig, finalize, run_search
from .snn import LifParams, SpikingNetwork, desk_architecture, init_network
from .synops import calibrate_subset, synops_average
from .train import TrainConfig, evaluate, train

log = logging.getLogger(__name__)

TRAIN_FILE = "train.spkd"
TEST_FILE = "test.spkd"
PRETRAINED = "pretrained.spnn"
HISTORY = "pretrain_history.csv"
LRE_DATASET = "lre_dataset.csv"
LRE_MODEL = "lre_model.txt"
BEST_POLICY = "best_policy.csv"
SEARCH_LOG = "search_log.csv"
AGENT = "agent.spag"
COMPRESSED = "compressed.spnn"
FINAL_REPORT = "final_report.csv"
SYNOPS_REPORT = "synops_report.csv"
CALIBRATION = "calibration.csv"


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(f"{what} not found: {path}")
    return path


def dataset_spec(cfg: RunConfig) -> SyntheticDatasetSpec:
    d = cfg.data
    return SyntheticDatasetSpec(
        n_train=d.n_train, n_test=d.n_test, n_val_holdout_fraction=d.val_fraction,
        n_classes=d.n_classes, channels=d.channels, height=d.height, width=d.width,
        separation=d.separation, noise=d.noise, blob_width=d.blob_width, seed=cfg.subseed("data"),
    )


def train_config(cfg: RunConfig) -> TrainConfig:
    t = cfg.train
    return TrainConfig(
        epochs=t.epochs, warmup_epochs=t.warmup_epochs, max_lr=t.max_lr, momentum=t.momentum,
        weight_decay=t.weight_decay, batch_size=t.batch_size, seed=cfg.subseed("train"),
    )


def finetune_cfg(cfg: RunConfig) -> TrainConfig:
    return lre.finetune_config(train_config(cfg), cfg.train.finetune_fraction)


@dataclass
class Datasets:
    full: Dataset  # SynOps are measured here
    train: Dataset
    val: Dataset
    test: Dataset


def load_datasets(cfg: RunConfig, out: Path) -> Datasets:
    full = read_spkd(_require(out / TRAIN_FILE, "training data"))
    test = read_spkd(_require(out / TEST_FILE, "test data"))
    train_part, val = full.split_holdout(cfg.data.val_fraction)
    return Datasets(full, train_part, val, test)


def load_pretrained(out: Path) -> SpikingNetwork:
    return io.load_network(_require(out / PRETRAINED, "pretrained checkpoint"))


def gen_data(cfg: RunConfig, out: Path) -> tuple[Dataset, Dataset]:
    out.mkdir(parents=True, exist_ok=True)
    train_ds, test_ds = make_synthetic(dataset_spec(cfg))
    write_spkd(out / TRAIN_FILE, train_ds)
    write_spkd(out / TEST_FILE, test_ds)
    return train_ds, test_ds


def build_network(cfg: RunConfig, sample_shape, n_classes: int) -> SpikingNetwork:
    m = cfg.model
    net = init_network(
        desk_architecture(sample_shape, n_classes, m.conv_channels),
        sample_shape,
        m.timesteps,
        np.random.default_rng(cfg.subseed("model")),
        LifParams(m.v_threshold, m.tau, m.v_reset),
        gain=m.init_gain,
    )
    net.surrogate_alpha = m.surrogate_alpha
    return net


@dataclass
class PretrainResult:
    net: SpikingNetwork
    val_acc: float
    test_acc: float


def pretrain(cfg: RunConfig, out: Path) -> PretrainResult:
    ds = load_datasets(cfg, out)
    net = build_network(cfg, ds.full.sample_shape, ds.full.n_classes)
    net, hist = train(net, ds.train, train_config(cfg))
    io.save_network(out / PRETRAINED, net)
    io.write_csv(
        out / HISTORY, ["epoch", "lr", "loss", "train_acc"],
        [(i, lr, l, a) for i, (lr, l, a) in enumerate(zip(hist.lr, hist.loss, hist.train_acc))],
    )
    return PretrainResult(net, evaluate(net, ds.val), evaluate(net, ds.test))


@dataclass
class LreResult:
    points: list
    model: lre.LreModel
    holdout_rmse: float
    holdout_r2: float | None


def fit_lre(cfg: RunConfig, out: Path) -> LreResult:
    net = load_pretrained(out)
    ds = load_datasets(cfg, out)
    points = lre.gen_dataset(
        net, ds.full, cfg.lre.n_policies, finetune_cfg(cfg),
        train_data=ds.train, seed=cfg.subseed("lre"),
        subset_size=min(cfg.search.subset_size, len(ds.full)), subset_seed=cfg.search.subset_seed,
        max_ratio=cfg.lre.max_ratio, include_identity=cfg.lre.include_identity,
        include_input=cfg.search.include_input_synops,
    )
    io.write_lre_points(out / LRE_DATASET, points)
    fit_set, holdout = lre.split_holdout(points, cfg.lre.n_holdout)
    model = lre.fit(fit_set)
    io.write_lre_model(out / LRE_MODEL, model)
    rmse, r2 = lre.metrics(model, holdout)
    return LreResult(points, model, rmse, r2)


def make_env(cfg: RunConfig, out: Path, net=None, model=None) -> PruningEnv:
    net = net or load_pretrained(out)
    model = model or io.read_lre_model(_require(out / LRE_MODEL, "LRE model"))
    ds = load_datasets(cfg, out)
    s = cfg.search
    mode = s.mode
    return PruningEnv.with_target_ratios(
        net, ds.full, ds.val, model,
        cfg.targets.synops_ratio if mode in ("S", "SP") else None,
        cfg.targets.params_ratio if mode in ("P", "SP") else None,
        TarConfig(s.tar_lambda, s.tar_alpha, mode),
        subset_size=s.subset_size, subset_seed=s.subset_seed, include_input=s.include_input_synops,
    )


def search(cfg: RunConfig, out: Path) -> tuple[SearchOutcome, PruningEnv]:
    env = make_env(cfg, out)
    agent = DdpgAgent(cfg.agent, cfg.subseed("agent"))
    outcome = run_search(
        env, SearchConfig(cfg.search.num_episodes, cfg.search.warmup_episodes),
        cfg.agent, seed=cfg.subseed("search"), agent=agent,
    )
    io.write_policy(out / BEST_POLICY, outcome.best.policy, env.layers)
    io.write_search_log(out / SEARCH_LOG, outcome.history, env.base_synops, env.base_params)
    agent.save(out / AGENT)
    return outcome, env


def finalize_policy(cfg: RunConfig, out: Path, policy_path: Path | None = None):
    net = load_pretrained(out)
    ds = load_datasets(cfg, out)
    policy, indices = io.read_policy(_require(policy_path or out / BEST_POLICY, "policy file"))
    if indices != net.prunable:
        raise ContractViolation(f"policy covers layers {indices}, network prunes {net.prunable}")
    compressed, report = finalize(
        net, policy, finetune_cfg(cfg),
        train_data=ds.train, synops_data=ds.full, test_data=ds.test,
        s_ratio=cfg.targets.synops_ratio, p_ratio=cfg.targets.params_ratio,
        include_input=cfg.search.include_input_synops,
    )
    io.save_network(out / COMPRESSED, compressed)
    io.write_final_report(out / FINAL_REPORT, report)
    return compressed, report


def report(cfg: RunConfig, out: Path, checkpoint: Path | None = None, calibrate: bool = False,
           tolerance: float = 0.01, step: int = 10):
    net = io.load_network(_require(checkpoint or out / PRETRAINED, "checkpoint"))
    ds = load_datasets(cfg, out)
    include = cfg.search.include_input_synops
    rep = synops_average(net, ds.full, include_input=include)
    io.write_synops_report(out / SYNOPS_REPORT, net, rep)
    curve = None
    if calibrate:
        curve = calibrate_subset(net, ds.full, tolerance, step, cfg.search.subset_seed, include)
        io.write_csv(out / CALIBRATION, io.CALIBRATION_HEADER, curve.points)
    return rep, curve
