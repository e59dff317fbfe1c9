"""Layer-wise pruning environment, target-aware reward and the search loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import lre
from .agent import (
    AgentConfig,
    DdpgAgent,
    NoiseSchedule,
    ReplayBuffer,
    Transition,
    push_trajectory,
)
from .data import Dataset
from .errors import ConfigError, ContractViolation
from .prune import PruningPolicy, apply_policy, prune_layer
from .snn import SpikingNetwork
from .synops import DEFAULT_SUBSET_SEED, param_count, synops_average
from .train import TrainConfig, evaluate, train

log = logging.getLogger(__name__)


class TarMode(str, Enum):
    S = "S"
    P = "P"
    SP = "SP"


@dataclass(frozen=True)
class TarConfig:
    lam: float = 1.0
    alpha: float = 1.2
    mode: TarMode = TarMode.SP

    def __post_init__(self):
        if self.lam <= 0:
            raise ConfigError("penalty weight lambda must be positive")
        if self.alpha <= 0:
            raise ConfigError("penalty exponent alpha must be positive")
        object.__setattr__(self, "mode", TarMode(self.mode))


@dataclass(frozen=True)
class Targets:
    s_target: float | None = None
    p_target: float | None = None

    def __post_init__(self):
        for name in ("s_target", "p_target"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigError(f"{name} must be positive")


def penalty_f(x: float, t: float, lam: float = 1.0, alpha: float = 1.2) -> float:
    """One-sided overshoot penalty ``-lam * max(x/t - 1, 0) ** alpha``."""
    if t <= 0:
        raise ContractViolation("target must be positive")
    over = max(x / t - 1.0, 0.0)
    return -lam * over**alpha if over > 0 else 0.0


def _penalties(s_es, p_cur, targets: Targets, cfg: TarConfig) -> list[float]:
    out = []
    if cfg.mode in (TarMode.S, TarMode.SP):
        if targets.s_target is None:
            raise ConfigError(f"mode {cfg.mode.value} needs a SynOps target")
        out.append(penalty_f(s_es, targets.s_target, cfg.lam, cfg.alpha))
    if cfg.mode in (TarMode.P, TarMode.SP):
        if targets.p_target is None:
            raise ConfigError(f"mode {cfg.mode.value} needs a parameter target")
        out.append(penalty_f(p_cur, targets.p_target, cfg.lam, cfg.alpha))
    return out


def tar(acc: float, s_es: float, p_cur: float, targets: Targets, cfg: TarConfig) -> float:
    """Accuracy plus the penalties selected by ``cfg.mode``."""
    if not 0.0 <= acc <= 1.0:
        raise ContractViolation(f"accuracy {acc} outside [0, 1]")
    reward = acc
    for pen in _penalties(s_es, p_cur, targets, cfg):
        reward += pen
    return reward


def is_feasible(s_es: float, p_cur: float, targets: Targets, cfg: TarConfig) -> bool:
    return all(p == 0.0 for p in _penalties(s_es, p_cur, targets, cfg))


@dataclass
class EpisodeResult:
    policy: PruningPolicy
    acc: float
    s_es: float
    p_cur: int
    reward: float
    feasible: bool
    mode: str = ""
    sigma: float = 0.0


class PruningEnv:
    """Pretrained network plus everything needed to score a pruning episode.

    SynOps are always measured on one fixed subset of ``synops_data`` so that
    states and rewards of different episodes are comparable.
    """

    def __init__(
        self,
        net: SpikingNetwork,
        synops_data: Dataset,
        val_data: Dataset,
        lre_model: lre.LreModel | None,
        targets: Targets,
        tar_cfg: TarConfig,
        subset_size: int | None = 500,
        subset_seed: int = DEFAULT_SUBSET_SEED,
        include_input: bool = False,
    ):
        if lre_model is None:
            raise ConfigError("an LRE model is required")
        self.net = net
        self.synops_data = synops_data
        self.val_data = val_data
        self.lre_model = lre_model
        self.targets = targets
        self.tar_cfg = tar_cfg
        self.subset_size = min(subset_size, len(synops_data)) if subset_size else None
        self.subset_seed = subset_seed
        self.include_input = include_input
        _penalties(0.0, 0.0, targets, tar_cfg)  # fail fast on a missing target

        self.layers = net.prunable
        self.base_synops = synops_average(
            net, synops_data, self.subset_size, subset_seed, include_input=include_input
        ).total
        self.base_params = param_count(net)
        self.base_acc = evaluate(net, val_data)
        specs = [net.layers[i].spec for i in self.layers]
        self.max_channels = max(max(s.c_in, s.c_out) for s in specs)
        self.max_stride = max(s.stride for s in specs)
        self.max_kernel = max(s.kernel for s in specs)
        self.max_layer_params = max(s.params for s in specs)
        self.synops_scale = max(self.base_synops, lre.predict(lre_model, self.base_synops))
        # a pruned network is fully determined by its per-layer kept-channel
        # counts, so measurements are memoised on that key
        self._synops_cache: dict[tuple, float] = {}
        self._acc_cache: dict[tuple, float] = {}

    @classmethod
    def with_target_ratios(cls, net, synops_data, val_data, lre_model, s_ratio, p_ratio, tar_cfg, **kw):
        """Build an environment whose targets are fractions of the measured baseline."""
        env = cls(net, synops_data, val_data, lre_model, Targets(1.0, 1.0), tar_cfg, **kw)
        env.targets = Targets(
            None if s_ratio is None else s_ratio * env.base_synops,
            None if p_ratio is None else p_ratio * env.base_params,
        )
        _penalties(0.0, 0.0, env.targets, tar_cfg)
        return env

    def structure_key(self, net: SpikingNetwork) -> tuple:
        return tuple(net.layers[i].spec.c_out for i in self.layers)

    def synops_of(self, net: SpikingNetwork) -> float:
        """Pre-finetune SynOps of ``net`` on the fixed evaluation subset."""
        key = self.structure_key(net)
        if key not in self._synops_cache:
            self._synops_cache[key] = synops_average(
                net, self.synops_data, self.subset_size, self.subset_seed, include_input=self.include_input
            ).total
        return self._synops_cache[key]

    def accuracy_of(self, net: SpikingNetwork) -> float:
        key = self.structure_key(net)
        if key not in self._acc_cache:
            self._acc_cache[key] = evaluate(net, self.val_data)
        return self._acc_cache[key]

    def featurize(self, ctx: SpikingNetwork, step: int, a_prev: float, pre_synops: float | None = None) -> np.ndarray:
        """State of prunable layer number ``step`` (0-based) in context ``ctx``.

        ``ctx`` has layers before ``step`` pruned and the rest untouched.
        """
        li = self.layers[step]
        spec = ctx.layers[li].spec
        if pre_synops is None:
            pre_synops = self.base_synops if step == 0 else self.synops_of(ctx)
        s_es = lre.predict(self.lre_model, pre_synops)
        p_rest = sum(self.net.layers[j].spec.params for j in self.layers[step + 1 :])
        raw = [
            (step + 1) / len(self.layers),
            spec.c_in / self.max_channels,
            spec.c_out / self.max_channels,
            spec.stride / self.max_stride,
            spec.kernel / self.max_kernel,
            spec.params / self.max_layer_params,
            s_es / self.synops_scale,
            param_count(ctx) / self.base_params,
            p_rest / self.base_params,
            a_prev,
        ]
        return np.clip(np.array(raw, dtype=np.float64), 0.0, 1.0)

    def score(self, pruned: SpikingNetwork, policy: PruningPolicy) -> EpisodeResult:
        acc = self.accuracy_of(pruned)
        s_es = lre.predict(self.lre_model, self.synops_of(pruned))
        p_cur = param_count(pruned)
        reward = tar(acc, s_es, p_cur, self.targets, self.tar_cfg)
        feasible = is_feasible(s_es, p_cur, self.targets, self.tar_cfg)
        return EpisodeResult(policy, acc, s_es, p_cur, reward, feasible)

    def evaluate_policy(self, policy: PruningPolicy) -> EpisodeResult:
        pruned, _ = apply_policy(self.net, policy)
        return self.score(pruned, policy)


def run_episode(env: PruningEnv, agent, mode: str, noise: NoiseSchedule | None = None):
    """Prune layer by layer with the agent; returns ``(result, transitions)``.

    ``mode`` is ``warmup`` (actions from the warm-up distribution),
    ``explore`` (actor output plus noise) or ``exploit`` (actor output).
    """
    if mode not in ("warmup", "explore", "exploit"):
        raise ContractViolation(f"unknown episode mode {mode!r}")
    ctx = env.net
    states, actions = [], []
    a_prev = 0.0
    for step, li in enumerate(env.layers):
        state = env.featurize(ctx, step, a_prev)
        if mode == "warmup":
            a = agent.warmup_action()
        elif mode == "explore":
            a = agent.act(state, noise)
        else:
            a = agent.act(state, None)
        ctx, _ = prune_layer(ctx, li, a)
        states.append(state)
        actions.append(a)
        a_prev = a
    policy = PruningPolicy(tuple(actions))
    result = env.score(ctx, policy)
    result.mode = mode
    last = len(states) - 1
    transitions = [
        Transition(
            states[j],
            actions[j],
            result.reward if j == last else 0.0,
            None if j == last else states[j + 1],
            j == last,
        )
        for j in range(len(states))
    ]
    return result, transitions


@dataclass
class SearchConfig:
    num_episodes: int = 300
    warmup_episodes: int = 50

    def __post_init__(self):
        if self.num_episodes < 1:
            raise ConfigError("num_episodes must be >= 1")
        if not 0 <= self.warmup_episodes <= self.num_episodes:
            raise ConfigError("warmup_episodes must lie in [0, num_episodes]")


@dataclass
class SearchOutcome:
    best: EpisodeResult
    history: list[EpisodeResult] = field(default_factory=list)
    agent: DdpgAgent | None = None


def _preferred(new: EpisodeResult, best: EpisodeResult | None) -> bool:
    if best is None:
        return True
    return (new.feasible, new.reward) > (best.feasible, best.reward)


def run_search(
    env: PruningEnv,
    cfg: SearchConfig | None = None,
    agent_cfg: AgentConfig | None = None,
    seed: int = 0,
    agent: DdpgAgent | None = None,
) -> SearchOutcome:
    """Warm-up rollouts, then noisy actor rollouts; agent updated after each episode.

    The best episode prefers feasible results, then higher reward.
    """
    cfg = cfg or SearchConfig()
    agent_cfg = agent_cfg or AgentConfig()
    agent = agent or DdpgAgent(agent_cfg, seed)
    buffer = ReplayBuffer(agent_cfg.capacity, seed + 1)
    noise = NoiseSchedule(agent_cfg.sigma0, agent_cfg.sigma_decay)
    best, history = None, []
    for episode in range(cfg.num_episodes):
        if episode < cfg.warmup_episodes:
            mode, sigma = "warmup", agent_cfg.warmup_sigma
            result, traj = run_episode(env, agent, mode)
        else:
            mode, sigma = "explore", noise.sigma
            result, traj = run_episode(env, agent, mode, noise)
            noise.step()
        result.sigma = sigma
        push_trajectory(buffer, traj)
        if len(buffer) >= agent_cfg.batch_size:
            agent.update(buffer, agent_cfg.batch_size, agent_cfg.updates_per_episode)
        history.append(result)
        if _preferred(result, best):
            best = result
        log.info(
            "episode %d %s reward=%.4f acc=%.3f s=%.3f p=%.3f sigma=%.4f",
            episode, mode, result.reward, result.acc,
            result.s_es / env.base_synops, result.p_cur / env.base_params, sigma,
        )
    return SearchOutcome(best, history, agent)


@dataclass
class FinalReport:
    acc: float
    synops_abs: float
    synops_ratio: float
    params_abs: int
    params_ratio: float
    s_feasible: bool
    p_feasible: bool


def finalize(
    net: SpikingNetwork,
    policy: PruningPolicy,
    finetune_cfg: TrainConfig,
    *,
    train_data: Dataset,
    synops_data: Dataset,
    test_data: Dataset,
    s_ratio: float | None,
    p_ratio: float | None,
    include_input: bool = False,
    baseline_synops: float | None = None,
):
    """Prune with ``policy``, finetune, and measure the compressed network.

    SynOps are exact (whole ``synops_data``). A policy that removes no channel
    is returned without finetuning. Returns ``(compressed_net, FinalReport)``.
    """
    pruned, masks = apply_policy(net, policy)
    if all(m.all() for m in masks):
        compressed = pruned
    else:
        compressed, _ = train(pruned, train_data, finetune_cfg)
    if baseline_synops is None:
        baseline_synops = synops_average(net, synops_data, include_input=include_input).total
    synops_abs = synops_average(compressed, synops_data, include_input=include_input).total
    params_abs = param_count(compressed)
    s_r = synops_abs / baseline_synops if baseline_synops else 0.0
    p_r = params_abs / param_count(net)
    report = FinalReport(
        acc=evaluate(compressed, test_data),
        synops_abs=synops_abs,
        synops_ratio=s_r,
        params_abs=params_abs,
        params_ratio=p_r,
        s_feasible=s_ratio is None or s_r <= s_ratio,
        p_feasible=p_ratio is None or p_r <= p_ratio,
    )
    return compressed, report
