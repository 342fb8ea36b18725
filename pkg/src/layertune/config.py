"""Declarative TOML configuration with sections data, weights, sweep, train, analysis."""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigInvalid


@dataclass
class DataConfig:
    source: str = "catalog"  # "catalog" or "synthetic"
    catalog: str | None = None
    endpoint: str | None = None
    columns: dict = field(default_factory=dict)
    scale: float = 0.1
    width: int = 2048
    height: int = 2048
    image_size: int = 512
    subset: int | None = 1000
    subset_seed: int | None = None
    train_fraction: float = 0.7
    split_seed: int = 42
    class_weights: str = "inverse_frequency"
    cache_dir: str = "cache"
    dataset_dir: str = "work/dataset"
    fetch_workers: int = 4
    retries: int = 3
    timeout: float = 30.0
    synthetic_count: int = 300
    synthetic_seed: int = 0


@dataclass
class WeightsConfig:
    mode: str = "pretrained"  # or "random"
    dir: str | None = None
    download: bool = True


@dataclass
class SweepConfig:
    archs: list = field(default_factory=list)
    schedules: dict = field(default_factory=dict)
    results_dir: str = "results"


@dataclass
class TrainSection:
    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 1e-4
    optimizer: str = "adam"
    seed: int = 42
    early_stop_patience: int | None = None


@dataclass
class AnalysisConfig:
    out_dir: str = "report"
    dip_delta: float = 1.5
    near_peak_eps: float = 0.15


@dataclass
class Config:
    data: DataConfig = field(default_factory=DataConfig)
    weights: WeightsConfig = field(default_factory=WeightsConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    train: TrainSection = field(default_factory=TrainSection)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    base_dir: Path = field(default=Path("."), repr=False)

    def path(self, value: str | None) -> Path | None:
        if value is None:
            return None
        p = Path(value).expanduser()
        return p if p.is_absolute() else self.base_dir / p

    def snapshot(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    def require(self, dotted: str) -> Any:
        section, key = dotted.split(".")
        value = getattr(getattr(self, section), key)
        if value in (None, "", []):
            raise ConfigInvalid(f"missing required config key {dotted!r}")
        return value


_SECTIONS = {
    "data": DataConfig,
    "weights": WeightsConfig,
    "sweep": SweepConfig,
    "train": TrainSection,
    "analysis": AnalysisConfig,
}

_FLOAT_KEYS = {"scale", "train_fraction", "timeout", "learning_rate", "dip_delta", "near_peak_eps"}


def _section(cls, raw: dict, name: str):
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigInvalid(f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}")
    values = {}
    for key, value in raw.items():
        if key in _FLOAT_KEYS and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        values[key] = value
    return cls(**values)


def config_from_dict(raw: dict, base_dir: str | Path = ".") -> Config:
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise ConfigInvalid(f"unknown config section(s): {', '.join(sorted(unknown))}")
    cfg = Config(**{name: _section(cls, raw.get(name, {}), name) for name, cls in _SECTIONS.items()}, base_dir=Path(base_dir))
    validate(cfg)
    return cfg


def load_config(path: str | Path) -> Config:
    path = Path(path)
    if not path.exists():
        raise ConfigInvalid(f"config file {path} does not exist")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from exc
    return config_from_dict(raw, base_dir=path.parent)


def validate(cfg: Config) -> None:
    d, w, t = cfg.data, cfg.weights, cfg.train
    if d.source not in ("catalog", "synthetic"):
        raise ConfigInvalid(f"data.source must be 'catalog' or 'synthetic', got {d.source!r}")
    if not 0 < d.train_fraction < 1:
        raise ConfigInvalid("data.train_fraction must lie in (0, 1)")
    if d.class_weights not in ("inverse_frequency", "none"):
        raise ConfigInvalid(f"data.class_weights must be 'inverse_frequency' or 'none', got {d.class_weights!r}")
    if w.mode not in ("pretrained", "random"):
        raise ConfigInvalid(f"weights.mode must be 'pretrained' or 'random', got {w.mode!r}")
    if t.epochs < 1 or t.batch_size < 1 or not t.learning_rate > 0:
        raise ConfigInvalid("train.epochs, train.batch_size and train.learning_rate must be positive")
    if not isinstance(cfg.sweep.archs, list):
        raise ConfigInvalid("sweep.archs must be a list of architecture names")
