"""Run configuration: line-oriented ``section.key = value`` text files.

Blank lines and ``#`` comments are ignored. ``seed = N`` (no section) sets the
root seed; each subsystem derives its own seed as ``seed + SUBSYSTEM[name]``.
"""

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import get_type_hints

from .agent import AgentConfig
from .errors import ConfigError

SUBSYSTEM = {"data": 0, "model": 1, "train": 2, "lre": 3, "agent": 4, "search": 5}


@dataclass
class DataSection:
    n_train: int = 2000
    n_test: int = 500
    val_fraction: float = 0.2
    n_classes: int = 4
    channels: int = 2
    height: int = 16
    width: int = 16
    separation: float = 0.6
    noise: float = 1.0
    blob_width: float = 2.5


@dataclass
class ModelSection:
    conv_channels: tuple = (8, 16, 16)
    timesteps: int = 4
    v_threshold: float = 1.0
    tau: float = 2.0
    v_reset: float = 0.0
    surrogate_alpha: float = 2.0
    init_gain: float = 2.0


@dataclass
class TrainSection:
    epochs: int = 12
    warmup_epochs: int = 1
    max_lr: float = 0.1
    momentum: float = 0.9
    weight_decay: float = 5e-5
    batch_size: int = 32
    finetune_fraction: float = 0.25


@dataclass
class LreSection:
    n_policies: int = 24
    max_ratio: float = 0.9
    n_holdout: int = 6
    include_identity: bool = False


@dataclass
class SearchSection:
    num_episodes: int = 300
    warmup_episodes: int = 50
    mode: str = "SP"
    tar_lambda: float = 1.0
    tar_alpha: float = 1.2
    subset_size: int = 500
    subset_seed: int = 7
    include_input_synops: bool = False


@dataclass
class TargetsSection:
    synops_ratio: float = 0.5
    params_ratio: float = 0.5


@dataclass
class RunConfig:
    seed: int = 42
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainSection = field(default_factory=TrainSection)
    lre: LreSection = field(default_factory=LreSection)
    agent: AgentConfig = field(default_factory=AgentConfig)
    search: SearchSection = field(default_factory=SearchSection)
    targets: TargetsSection = field(default_factory=TargetsSection)

    def subseed(self, subsystem: str) -> int:
        return self.seed + SUBSYSTEM[subsystem]

    def validate(self) -> "RunConfig":
        s, t, d = self.search, self.targets, self.data
        if s.tar_lambda <= 0:
            raise ConfigError("search.tar_lambda must be > 0")
        if s.tar_alpha <= 0:
            raise ConfigError("search.tar_alpha must be > 0")
        for name in ("synops_ratio", "params_ratio"):
            if not 0 < getattr(t, name) <= 1:
                raise ConfigError(f"targets.{name} must lie in (0, 1]")
        if s.warmup_episodes >= s.num_episodes:
            raise ConfigError("search.warmup_episodes must be smaller than search.num_episodes")
        if s.warmup_episodes < 0:
            raise ConfigError("search.warmup_episodes must be >= 0")
        if s.mode not in ("S", "P", "SP"):
            raise ConfigError("search.mode must be one of S, P, SP")
        if s.subset_size < 1:
            raise ConfigError("search.subset_size must be >= 1")
        if d.n_classes < 2:
            raise ConfigError("data.n_classes must be >= 2")
        if d.separation <= 0:
            raise ConfigError("data.separation must be > 0")
        if not 0 < d.val_fraction < 1:
            raise ConfigError("data.val_fraction must lie in (0, 1)")
        if d.n_train < 2 or d.n_test < 1:
            raise ConfigError("data.n_train must be >= 2 and data.n_test >= 1")
        if self.train.epochs < 1 or not 0 <= self.train.warmup_epochs < self.train.epochs:
            raise ConfigError("train.warmup_epochs must lie in [0, train.epochs)")
        if self.train.max_lr <= 0 or self.train.batch_size < 1:
            raise ConfigError("train.max_lr must be > 0 and train.batch_size >= 1")
        if not 0 < self.train.finetune_fraction <= 1:
            raise ConfigError("train.finetune_fraction must lie in (0, 1]")
        if self.lre.n_policies < 3 or not 0 < self.lre.n_holdout < self.lre.n_policies - 1:
            raise ConfigError("lre.n_holdout must leave at least two fitting points")
        if not 0 < self.lre.max_ratio < 1:
            raise ConfigError("lre.max_ratio must lie in (0, 1)")
        if not self.model.conv_channels or min(self.model.conv_channels) < 1:
            raise ConfigError("model.conv_channels must list positive channel counts")
        if self.model.timesteps < 1:
            raise ConfigError("model.timesteps must be >= 1")
        a = self.agent
        if a.batch_size > a.capacity:
            raise ConfigError("agent.batch_size must not exceed agent.capacity")
        if not 0 < a.tau_soft <= 1 or a.sigma0 <= 0 or not 0 < a.sigma_decay <= 1:
            raise ConfigError("agent.tau_soft, agent.sigma0 or agent.sigma_decay out of range")
        return self


def _coerce(raw: str, typ, where: str):
    try:
        if typ is bool:
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typ is tuple:
            return tuple(int(v) for v in raw.split(",") if v.strip())
        return typ(raw)
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {typ.__name__}") from None


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    cfg = base or RunConfig()
    sections = {f.name: getattr(cfg, f.name) for f in fields(cfg) if f.name != "seed"}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        where = f"line {lineno}"
        if not sep:
            raise ConfigError(f"{where}: expected 'section.key = value'")
        if key == "seed":
            cfg.seed = _coerce(value, int, where)
            continue
        section, _, name = key.partition(".")
        if section not in sections:
            raise ConfigError(f"{where}: unknown section {section!r}")
        obj = sections[section]
        hints = get_type_hints(type(obj))
        if name not in hints:
            raise ConfigError(f"{where}: unknown key {key!r}")
        setattr(obj, name, _coerce(value, hints[name], where))
    return cfg.validate()


def load_config(path=None, seed: int | None = None) -> RunConfig:
    if path is None:
        cfg = RunConfig()
    else:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        cfg = parse_config(text)
    if seed is not None:
        cfg = replace(cfg, seed=seed)
    return cfg.validate()


def dump_config(cfg: RunConfig) -> str:
    lines = [f"seed = {cfg.seed}"]
    for f in fields(cfg):
        if f.name == "seed":
            continue
        obj = getattr(cfg, f.name)
        for sub in fields(obj):
            v = getattr(obj, sub.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = str(v).lower()
            lines.append(f"{f.name}.{sub.name} = {v}")
    return "\n".join(lines) + "\n"
