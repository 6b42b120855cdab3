"""TOML experiment configuration: schema, defaults, and validation.

A config file drives the whole pipeline: world generation, scenario sweeps,
and the class-incremental comparison demo. Unknown keys are rejected so typos
fail loudly; semantic errors name the offending section and key.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .core import ConfigError
from .partition import GridSpec, PartitionPattern


@dataclass(frozen=True)
class WorldConfig:
    num_classes: int = 26
    feature_dim: int = 24
    concentration: float = 40.0
    seed: int = 7


@dataclass(frozen=True)
class SessionConfig:
    count: int = 25
    samples_per_class: int = 20
    test_samples_per_class: int = 8
    drift: float = 0.08
    seed: int = 0


@dataclass(frozen=True)
class ScenarioConfig:
    ids: tuple = (0, 1, 2, 3, 4, 5)
    classes_per_model: int = 10
    num_models: int = 4
    seed: int = 11


@dataclass(frozen=True)
class SweepConfig:
    strategies: tuple = ("us", "rr", "entropy", "replay")
    n_values: tuple = (1, 2, 5, 10, 20)
    seeds: tuple = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class StrategyDefaults:
    oversample_factor: float = 10.0
    replay_count: int = 1
    khot_k: int = 0  # 0 disables sparsification
    base_strategy: str = "rr"


@dataclass(frozen=True)
class TrainSection:
    hidden_dim: int = 64
    learning_rate: float = 2.0
    epochs: int = 120
    batch_size: int = 32
    temperature: float = 1.0
    seed: int = 3


@dataclass(frozen=True)
class FusionSection:
    lam: float = 1e-3
    tau: float = -1.0  # negative means the default gate 0.5*ln(C)


@dataclass(frozen=True)
class DemoSection:
    sessions: int = 5
    drift: float = 0.35
    samples_per_class: int = 30
    test_samples_per_class: int = 10
    buffer_per_class: int = 2
    seeds: tuple = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class PartitionSection:
    pattern: str = ""  # path of a pattern file; empty means no partition step
    points: int = 2000
    seed: int = 5


@dataclass(frozen=True)
class OutputSection:
    dir: str = "out"


@dataclass(frozen=True)
class ExperimentConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    sessions: SessionConfig = field(default_factory=SessionConfig)
    scenarios: ScenarioConfig = field(default_factory=ScenarioConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    strategy: StrategyDefaults = field(default_factory=StrategyDefaults)
    train: TrainSection = field(default_factory=TrainSection)
    fusion: FusionSection = field(default_factory=FusionSection)
    demo: DemoSection = field(default_factory=DemoSection)
    partition: PartitionSection = field(default_factory=PartitionSection)
    output: OutputSection = field(default_factory=OutputSection)


_SECTIONS = {
    "world": WorldConfig,
    "sessions": SessionConfig,
    "scenarios": ScenarioConfig,
    "sweep": SweepConfig,
    "strategy": StrategyDefaults,
    "train": TrainSection,
    "fusion": FusionSection,
    "demo": DemoSection,
    "partition": PartitionSection,
    "output": OutputSection,
}

# TOML spells this key "lambda"; the dataclass field avoids the keyword.
_KEY_ALIASES = {("fusion", "lambda"): "lam"}


def _build_section(name: str, cls, raw: dict):
    allowed = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        field_name = _KEY_ALIASES.get((name, key), key)
        if field_name not in allowed:
            raise ConfigError(f"{name}.{key}: unknown key")
        if isinstance(value, list):
            value = tuple(value)
        kwargs[field_name] = value
    try:
        section = cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{name}: {exc}") from None
    _check_types(name, section)
    return section


def _check_types(name: str, section) -> None:
    for f in fields(section):
        value = getattr(section, f.name)
        if isinstance(value, bool):
            raise ConfigError(f"{name}.{f.name}: booleans are not valid here")
        default = getattr(type(section)(), f.name)
        if isinstance(default, int) and not isinstance(value, int):
            raise ConfigError(f"{name}.{f.name}: expected an integer, got {value!r}")
        if isinstance(default, float) and not isinstance(value, (int, float)):
            raise ConfigError(f"{name}.{f.name}: expected a number, got {value!r}")
        if isinstance(default, str) and not isinstance(value, str):
            raise ConfigError(f"{name}.{f.name}: expected a string, got {value!r}")
        if isinstance(default, tuple) and not isinstance(value, tuple):
            raise ConfigError(f"{name}.{f.name}: expected a list, got {value!r}")


def parse_experiment_config(raw: dict, source: str = "<config>") -> ExperimentConfig:
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"{source}: unknown sections {sorted(unknown)}")
    sections = {}
    for name, cls in _SECTIONS.items():
        part = raw.get(name, {})
        if not isinstance(part, dict):
            raise ConfigError(f"{source}: section [{name}] must be a table")
        sections[name] = _build_section(name, cls, part)
    config = ExperimentConfig(**sections)
    _validate(config)
    return config


def _validate(config: ExperimentConfig) -> None:
    if config.world.num_classes < 2:
        raise ConfigError("world.num_classes: need at least 2")
    if config.world.feature_dim < 2:
        raise ConfigError("world.feature_dim: need at least 2")
    if config.world.concentration <= 0:
        raise ConfigError("world.concentration: must be > 0")
    if config.sessions.count < 1:
        raise ConfigError("sessions.count: need at least 1")
    if config.sessions.samples_per_class < 1 or config.sessions.test_samples_per_class < 1:
        raise ConfigError("sessions: samples per class must be >= 1")
    if config.sessions.drift < 0:
        raise ConfigError("sessions.drift: must be >= 0")
    if not config.scenarios.ids:
        raise ConfigError("scenarios.ids: need at least one scenario")
    if config.scenarios.classes_per_model < 1:
        raise ConfigError("scenarios.classes_per_model: must be >= 1")
    if config.scenarios.num_models < 2:
        raise ConfigError("scenarios.num_models: need a student and at least one teacher")
    if not config.sweep.strategies or not config.sweep.n_values or not config.sweep.seeds:
        raise ConfigError("sweep: strategies, n_values, and seeds must be non-empty")
    if any(n < 1 for n in config.sweep.n_values):
        raise ConfigError("sweep.n_values: all values must be >= 1")
    from .sampling import STRATEGIES

    for s in config.sweep.strategies:
        if s not in STRATEGIES:
            raise ConfigError(f"sweep.strategies: unknown strategy {s!r}")
    if config.strategy.khot_k < 0:
        raise ConfigError("strategy.khot_k: must be >= 0 (0 disables)")
    if config.strategy.khot_k > config.world.feature_dim:
        raise ConfigError("strategy.khot_k: cannot exceed world.feature_dim")
    if config.train.hidden_dim < 0:
        raise ConfigError("train.hidden_dim: must be >= 0")
    if config.fusion.lam <= 0:
        raise ConfigError("fusion.lambda: must be > 0")
    if config.demo.sessions < 2:
        raise ConfigError("demo.sessions: need at least 2")
    if config.demo.buffer_per_class < 1:
        raise ConfigError("demo.buffer_per_class: must be >= 1")
    if config.partition.points < 1:
        raise ConfigError("partition.points: must be >= 1")


def load_experiment_config(path) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_experiment_config(raw, source=str(path))


def load_pattern(path) -> PartitionPattern:
    """Pattern file: a min_samples_per_class key plus one [[grid]] table per grid."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    known = {"min_samples_per_class", "grid"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    grid_tables = raw.get("grid", [])
    if not grid_tables:
        raise ConfigError(f"{path}: need at least one [[grid]] table")
    grids = []
    grid_fields = {f.name for f in fields(GridSpec)}
    for i, table in enumerate(grid_tables):
        bad = set(table) - grid_fields
        if bad:
            raise ConfigError(f"{path}: grid {i}: unknown keys {sorted(bad)}")
        try:
            grids.append(GridSpec(**table))
        except TypeError as exc:
            raise ConfigError(f"{path}: grid {i}: {exc}") from None
    return PartitionPattern(
        grids=tuple(grids), min_samples_per_class=int(raw.get("min_samples_per_class", 1))
    )
