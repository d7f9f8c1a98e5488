"""Experiment configuration files (JSON) and dataset source resolution."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .baselines import BaselineConfig
from .data import Dataset, load_csv
from .evolution import SearchConfig

SEARCH_METHODS = ("ccssl", "eassl")
ALL_METHODS = SEARCH_METHODS + ("st", "hco", "ls", "lr_ref", "svm_ref")
DEV_DATASETS = (28, 44, 46)


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class DatasetSource:
    kind: str  # "csv" | "openml" | "synthetic"
    value: object
    label_column: str | None = None
    name: str | None = None

    def key(self) -> dict:
        return {"kind": self.kind, "value": self.value, "label_column": self.label_column, "name": self.name}

    @property
    def display_name(self) -> str:
        if self.name:
            return self.name
        if self.kind == "openml":
            return f"openml_{self.value}"
        if self.kind == "csv":
            return Path(self.value).stem
        return "synthetic"

    def load(self, cache_dir=None) -> Dataset:
        if self.kind == "csv":
            label = self.label_column
            if label is None:
                import pandas as pd

                label = pd.read_csv(self.value, nrows=0).columns[-1]
            return load_csv(self.value, label, self.name)
        if self.kind == "openml":
            from .openml import fetch_openml

            return fetch_openml(int(self.value), cache_dir=cache_dir)
        from .synthetic import gaussian_blobs

        return gaussian_blobs(**dict(self.value), name=self.name)

    def is_dev(self, dev) -> bool:
        dev = {str(d) for d in dev}
        return str(self.value) in dev if self.kind == "openml" else self.display_name in dev


@dataclass
class ExperimentConfig:
    datasets: list[DatasetSource]
    lfs: list[float]
    seeds: list[int]
    methods: list[str]
    search: SearchConfig = field(default_factory=SearchConfig)
    baselines: BaselineConfig = field(default_factory=BaselineConfig)
    output_dir: Path = Path("out")
    workers: int = 1
    dev_datasets: tuple = DEV_DATASETS
    cache_dir: str | None = None


def _parse_source(entry, path: str, base: Path) -> DatasetSource:
    if isinstance(entry, int):
        return DatasetSource("openml", entry)
    if isinstance(entry, str):
        entry = {"source": entry}
    if not isinstance(entry, dict):
        raise ConfigError(path, "expected an object, a path or an OpenML id")
    name = entry.get("name")
    if "openml_id" in entry:
        return DatasetSource("openml", int(entry["openml_id"]), name=name)
    if "synthetic" in entry:
        if not isinstance(entry["synthetic"], dict):
            raise ConfigError(f"{path}.synthetic", "expected an object of generator arguments")
        return DatasetSource("synthetic", dict(sorted(entry["synthetic"].items())), name=name)
    src = entry.get("source")
    if isinstance(src, int) or (isinstance(src, str) and src.startswith("openml:")):
        return DatasetSource("openml", int(str(src).split(":")[-1]), name=name)
    if not isinstance(src, str):
        raise ConfigError(f"{path}.source", "missing dataset source")
    p = Path(src)
    if not p.is_absolute():
        p = base / p
    return DatasetSource("csv", str(p), entry.get("label_column"), name)


def _list(data, key, typ, path):
    val = data.get(key)
    if not isinstance(val, list) or not val:
        raise ConfigError(f"{path}.{key}", "must be a non-empty list")
    for i, v in enumerate(val):
        if not isinstance(v, typ) or isinstance(v, bool):
            raise ConfigError(f"{path}.{key}[{i}]", f"expected {getattr(typ, '__name__', typ)}, got {v!r}")
    return val


def parse_config(data: dict, base: Path = Path(".")) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("$", "top level must be an object")
    known = {"datasets", "lfs", "seeds", "methods", "search", "baselines", "output_dir", "workers",
             "dev_datasets", "cache_dir"}
    for key in data:
        if key not in known:
            raise ConfigError(f"$.{key}", "unknown field")
    raw = data.get("datasets")
    if not isinstance(raw, list) or not raw:
        raise ConfigError("$.datasets", "must be a non-empty list")
    datasets = [_parse_source(e, f"$.datasets[{i}]", base) for i, e in enumerate(raw)]
    lfs = [float(v) for v in _list(data, "lfs", (int, float), "$")]
    for i, lf in enumerate(lfs):
        if not 0 < lf <= 1:
            raise ConfigError(f"$.lfs[{i}]", "labeled fraction must lie in (0, 1]")
    seeds = _list(data, "seeds", int, "$")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("$.seeds", "seeds must be distinct")
    methods = _list(data, "methods", str, "$")
    for i, m in enumerate(methods):
        if m not in ALL_METHODS:
            raise ConfigError(f"$.methods[{i}]", f"unknown method {m!r}; choose from {ALL_METHODS}")
    try:
        search = SearchConfig.from_dict(data.get("search"))
    except (TypeError, ValueError) as exc:
        raise ConfigError("$.search", str(exc)) from None
    try:
        baselines = BaselineConfig.from_dict(data.get("baselines"))
    except (TypeError, ValueError) as exc:
        raise ConfigError("$.baselines", str(exc)) from None
    workers = data.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("$.workers", "must be a positive integer")
    out = Path(data.get("output_dir", "out"))
    if not out.is_absolute():
        out = base / out
    return ExperimentConfig(
        datasets, lfs, list(seeds), list(methods), search, baselines, out, workers,
        tuple(data.get("dev_datasets", DEV_DATASETS)), data.get("cache_dir"),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON ({exc})") from None
    return parse_config(data, path.parent)
