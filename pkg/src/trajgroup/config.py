"""Run configuration: defaults, JSON config files and per-dataset clustering overrides.

A config file is a JSON object; every key is optional::

    {
      "data_dir": "data",
      "out_dir": "runs",
      "seed": 0,
      "datasets": ["ETH", "HOTEL"],
      "frame_step": "auto",
      "stride": 1,
      "n_samples": 20,
      "train": {"lr": 1e-4, "batch_size": 64, "epochs": 200, "beta": 1.0},
      "clustering": {"UNIV": {"cf": {"window": 8}, "db": {"theta": 0.2}}}
    }
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .coherence import DATASET_PARAMS, CoherentFilterParams, DbscanParams
from .errors import ConfigError
from .trajdata import BENCHMARK_SETS, Dataset
from .training import TrainConfig

DATA_DIR_ENV = "TRAJGROUP_DATA_DIR"


def _default_data_dir() -> str:
    return os.environ.get(DATA_DIR_ENV, "data")


@dataclass
class RunConfig:
    data_dir: str = field(default_factory=_default_data_dir)
    out_dir: str = "runs"
    seed: int = 0
    datasets: list[Dataset] = field(default_factory=lambda: list(BENCHMARK_SETS))
    frame_step: int | str = "auto"
    stride: int = 1
    n_samples: int = 20
    train: TrainConfig = field(default_factory=TrainConfig)
    clustering: dict[Dataset, tuple[CoherentFilterParams, DbscanParams]] = field(
        default_factory=lambda: dict(DATASET_PARAMS)
    )

    def __post_init__(self):
        self.datasets = [Dataset.parse(d) for d in self.datasets]
        if self.frame_step != "auto":
            try:
                self.frame_step = int(self.frame_step)
            except (TypeError, ValueError):
                raise ConfigError(f"frame_step must be an integer or 'auto', got {self.frame_step!r}") from None
            if self.frame_step < 1:
                raise ConfigError(f"frame_step must be positive, got {self.frame_step}")
        if self.stride < 1:
            raise ConfigError(f"stride must be positive, got {self.stride}")
        if self.n_samples < 1:
            raise ConfigError(f"n_samples must be positive, got {self.n_samples}")

    def clustering_for(self, dataset: Dataset | str) -> tuple[CoherentFilterParams, DbscanParams]:
        return self.clustering[Dataset.parse(dataset)]

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        kwargs = {k: v for k, v in raw.items() if k not in ("train", "clustering")}
        cfg = cls(**kwargs)
        if "train" in raw:
            cfg.train = _override(TrainConfig(), raw["train"], "train")
        for name, groups in raw.get("clustering", {}).items():
            ds = Dataset.parse(name)
            cf, db = cfg.clustering[ds]
            cfg.clustering[ds] = (
                _override(cf, groups.get("cf", {}), f"clustering.{name}.cf"),
                _override(db, groups.get("db", {}), f"clustering.{name}.db"),
            )
        return cfg

    @classmethod
    def load(cls, path: str | Path | None) -> "RunConfig":
        if path is None:
            return cls()
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} does not exist") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        return cls.from_dict(raw)


def _override(obj, values: dict, where: str):
    if not isinstance(values, dict):
        raise ConfigError(f"{where} must be an object")
    allowed = {f.name for f in fields(obj)}
    bad = sorted(set(values) - allowed)
    if bad:
        raise ConfigError(f"unknown keys in {where}: {bad}")
    try:
        return replace(obj, **values)
    except TypeError as exc:
        raise ConfigError(f"invalid {where}: {exc}") from None
