"""Experiment orchestration: benchmark cells, staged tuning grids and reports."""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
import multiprocessing as mp
import os
import re
import sys
import time
import traceback
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .baselines import BaselineConfig, run_baseline
from .config import SEARCH_METHODS, DatasetSource, ExperimentConfig
from .data import make_split, resample_labeled, restandardize
from .evolution import SearchConfig, run_ccssl, run_eassl
from .stats import count_wins, describe

log = logging.getLogger(__name__)

RUNS_FILE = "runs.jsonl"
FAILURES_FILE = "failures.jsonl"


class ProtocolError(RuntimeError):
    pass


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, default=str, separators=(",", ":"))


@dataclass(frozen=True)
class Job:
    method: str
    source: DatasetSource
    lf: float
    seed: int
    search: SearchConfig
    baselines: BaselineConfig
    cache_dir: str | None = None

    def content(self) -> dict:
        body = {"method": self.method, "source": self.source.key(), "lf": self.lf, "seed": self.seed}
        if self.method in SEARCH_METHODS:
            body["search"] = self.search.to_dict()
        else:
            body["baselines"] = self.baselines.to_dict()
        return body

    @property
    def cell_hash(self) -> str:
        return hashlib.sha256(_canonical(self.content()).encode()).hexdigest()

    @property
    def run_id(self) -> str:
        name = re.sub(r"[^A-Za-z0-9_.]+", "_", self.source.display_name)
        return f"{self.method}-{name}-lf{self.lf:g}-s{self.seed}-{self.cell_hash[:10]}"


_DATASETS: dict = {}


def _dataset(source: DatasetSource, cache_dir):
    key = _canonical(source.key())
    if key not in _DATASETS:
        try:
            _DATASETS[key] = source.load(cache_dir)
        except Exception as exc:  # remembered so every cell of this dataset fails fast
            _DATASETS[key] = exc
    ds = _DATASETS[key]
    if isinstance(ds, Exception):
        raise ds
    return ds


def prepare(source: DatasetSource, lf: float, seed: int, cache_dir=None):
    """Paired split for a cell plus features z-scored on the pool and validation rows."""
    raw = _dataset(source, cache_dir)
    plan = make_split(raw, lf, seed)
    ds = restandardize(raw, np.concatenate([plan.pool_idx, plan.val_idx]))
    return ds, plan


def execute(job: Job):
    """Run one cell. Returns (summary dict | None, trajectory rows | None, error | None)."""
    start = time.perf_counter()
    try:
        ds, plan = prepare(job.source, job.lf, job.seed, job.cache_dir)
    except Exception as exc:
        return None, None, f"dataset load failed: {type(exc).__name__}: {exc}"
    try:
        traj = None
        if job.method in SEARCH_METHODS:
            driver = run_ccssl if job.method == "ccssl" else run_eassl
            res = driver(ds, plan, job.search)
            summary = res.summary
            traj = [g.to_dict() for g in res.logs]
        else:
            summary = run_baseline(job.method, ds, plan, resample_labeled(plan, ds, 0), job.baselines)
    except Exception:
        return None, None, traceback.format_exc()
    summary.duration_s = time.perf_counter() - start
    row = summary.to_dict()
    row["dataset"] = job.source.display_name
    row["cell_hash"] = job.cell_hash
    row["run_id"] = job.run_id
    return row, traj, None


def experiment_jobs(cfg: ExperimentConfig, search: SearchConfig | None = None, methods=None) -> list[Job]:
    return [
        Job(m, src, lf, seed, search or cfg.search, cfg.baselines, cfg.cache_dir)
        for src, lf, seed, m in itertools.product(cfg.datasets, cfg.lfs, cfg.seeds, methods or cfg.methods)
    ]


def _results(jobs, workers):
    """Yield (job, result) in job order whatever the worker count."""
    if workers <= 1 or len(jobs) <= 1:
        for job in jobs:
            yield job, execute(job)
        return
    ctx = mp.get_context("fork") if sys.platform != "win32" else None
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        futures = [pool.submit(execute, job) for job in jobs]
        for job, fut in zip(jobs, futures):
            yield job, fut.result()


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def completed_hashes(out_dir: Path) -> set[str]:
    path = Path(out_dir) / RUNS_FILE
    if not path.exists():
        return set()
    done = set()
    for line in path.read_text().splitlines():
        if line.strip():
            try:
                done.add(json.loads(line)["cell_hash"])
            except (json.JSONDecodeError, KeyError):
                continue  # torn final line from an interrupted run
    return done


@dataclass
class RunReport:
    computed: int
    skipped: int
    failed: list

    @property
    def exit_code(self) -> int:
        return 1 if self.failed else 0


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> RunReport:
    out = Path(cfg.output_dir)
    (out / "trajectories").mkdir(parents=True, exist_ok=True)
    runs_path = out / RUNS_FILE
    _drop_torn_tail(runs_path)
    done = completed_hashes(out)
    jobs = experiment_jobs(cfg)
    todo = [j for j in jobs if j.cell_hash not in done]
    failed = []
    with open(runs_path, "a") as runs:
        for job, (row, traj, err) in _results(todo, workers or cfg.workers):
            if err is not None:
                log.error("cell %s failed: %s", job.run_id, err.strip().splitlines()[-1])
                failed.append({"run_id": job.run_id, "cell_hash": job.cell_hash, "error": err})
                continue
            if traj is not None:
                lines = "".join(_canonical(r) + "\n" for r in traj)
                _write_atomic(out / "trajectories" / f"{job.run_id}.jsonl", lines)
            runs.write(_canonical(row) + "\n")
            runs.flush()
    if failed:
        with open(out / FAILURES_FILE, "w") as fh:
            for f in failed:
                fh.write(_canonical(f) + "\n")
    elif (out / FAILURES_FILE).exists():
        (out / FAILURES_FILE).unlink()
    return RunReport(len(todo) - len(failed), len(jobs) - len(todo), failed)


def _drop_torn_tail(path: Path) -> None:
    if not path.exists():
        return
    text = path.read_text()
    if text and not text.endswith("\n"):
        _write_atomic(path, text[: text.rfind("\n") + 1])


def read_runs(out_dir) -> list[dict]:
    path = Path(out_dir) / RUNS_FILE
    if not path.exists():
        return []
    return [json.loads(line) for line in path.read_text().splitlines() if line.strip()]


# tuning

STAGE1_SIZES = ((6, 6, 50), (8, 8, 38), (10, 10, 30))
STAGE2_GRID = {
    "pA_cx": (0.70, 0.85, 0.95),
    "pA_mut": (0.25, 0.45, 0.65),
    "pB_cx": (0.70, 0.85, 0.95),
    "pB_mut": (0.35, 0.55, 0.75),
}
STAGE3_GRID = {
    "lambda_std": (0.0, 0.2, 0.4),
    "lambda_bias": (0.3, 0.7, 1.1),
    "lambda_add": (0.0, 0.0002, 0.0005),
}


def tune_grid(stage: int, method: str = "ccssl") -> list[dict]:
    """SearchConfig overrides for one tuning stage."""
    if stage == 1:
        if method == "ccssl":
            return [{"pop_a": a, "pop_b": b, "generations": g} for a, b, g in STAGE1_SIZES]
        return [{"pop_mono": a + b, "generations": g} for a, b, g in STAGE1_SIZES]
    if stage == 2:
        key = "operators" if method == "ccssl" else "ea_operators"
        names = list(STAGE2_GRID)
        return [{key: dict(zip(names, combo))} for combo in itertools.product(*STAGE2_GRID.values())]
    if stage == 3:
        names = list(STAGE3_GRID)
        return [{"weights": dict(zip(names, combo))} for combo in itertools.product(*STAGE3_GRID.values())]
    raise ValueError(f"unknown tuning stage {stage}")


def _override(search: SearchConfig, patch: dict) -> SearchConfig:
    base = search.to_dict()
    base.update(patch)
    return SearchConfig.from_dict(base)


def rank_candidates(rows: list[dict]) -> list[dict]:
    """Mean test MacroF1 descending, then seed dispersion ascending, then mean TTT ascending."""
    return sorted(rows, key=lambda r: (-r["mean_test_macro_f1"], r["std_test_macro_f1"], r["mean_ttt"]))


def run_tuning(cfg: ExperimentConfig, stage: int, force: bool = False, method: str = "ccssl",
               workers: int | None = None) -> dict:
    outside = [s.display_name for s in cfg.datasets if not s.is_dev(cfg.dev_datasets)]
    if outside and not force:
        raise ProtocolError(
            f"tuning refused: {outside} not in the development set {list(cfg.dev_datasets)} (use --force to override)"
        )
    candidates = tune_grid(stage, method)
    rows = []
    for i, patch in enumerate(candidates):
        search = _override(cfg.search, patch)
        jobs = experiment_jobs(cfg, search, methods=[method])
        scores, ttts, errors = [], [], []
        for job, (row, _, err) in _results(jobs, workers or cfg.workers):
            if err:
                errors.append(err)
                continue
            scores.append(row["test_macro_f1"])
            ttts.append(row["ttt"] or 0.0)
        if not scores:
            raise RuntimeError(f"every tuning cell failed for candidate {i}: {errors[0].strip()}")
        rows.append({
            "candidate": i,
            "config": _canonical(patch),
            "mean_test_macro_f1": float(np.mean(scores)),
            "std_test_macro_f1": float(np.std(scores)),
            "mean_ttt": float(np.mean(ttts)),
            "n_cells": len(scores),
            "n_failed": len(errors),
        })
    ranked = rank_candidates(rows)
    out = Path(cfg.output_dir) / "tune"
    out.mkdir(parents=True, exist_ok=True)
    import pandas as pd

    pd.DataFrame(ranked).to_csv(out / f"stage{stage}.csv", index=False)
    selection = {
        "stage": stage,
        "method": method,
        "selected": json.loads(ranked[0]["config"]),
        "search": _override(cfg.search, json.loads(ranked[0]["config"])).to_dict(),
        "top3": [json.loads(r["config"]) for r in ranked[:3]],
        "forced": bool(force),
        "non_dev_datasets": outside,
    }
    _write_atomic(out / f"stage{stage}_selected.json", json.dumps(selection, indent=2, default=str))
    return selection


# reporting


def _group(n_classes) -> str:
    return "binary" if n_classes == 2 else "multiclass"


def build_tables(runs: list[dict]):
    """Descriptive table (per group, method, lf) and per-dataset median/IQR table with win flags."""
    wins, _ = count_wins(runs, methods=tuple(sorted({r["method"] for r in runs})))
    per_cell = defaultdict(list)
    for r in runs:
        per_cell[(r["dataset"], r["lf"], r["method"])].append(r["test_macro_f1"])
    groups = {r["dataset"]: _group(r["n_classes"]) for r in runs}
    per_dataset = []
    for (dataset, lf, method), vals in sorted(per_cell.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])):
        d = describe(vals)
        per_dataset.append({
            "group": groups[dataset], "dataset": dataset, "lf": lf, "method": method,
            "median": d["median"], "iqr": d["iqr"], "n_seeds": len(vals),
            "significant_win": dataset in wins.get(method, {}).get(lf, []),
        })
    descriptive = []
    keys = sorted({(row["group"], row["method"], row["lf"]) for row in per_dataset})
    for group, method, lf in keys:
        meds = [row["median"] for row in per_dataset if (row["group"], row["method"], row["lf"]) == (group, method, lf)]
        d = describe(meds)
        n_wins = sum(1 for ds in wins.get(method, {}).get(lf, []) if groups[ds] == group)
        descriptive.append({"group": group, "method": method, "lf": lf, **d, "wins": n_wins})
    return descriptive, per_dataset


def _trajectory_frame(out_dir: Path, runs: list[dict]):
    import pandas as pd

    frames = []
    for r in runs:
        if r["method"] not in SEARCH_METHODS:
            continue
        path = out_dir / "trajectories" / f"{r['run_id']}.jsonl"
        if not path.exists():
            continue
        for line in path.read_text().splitlines():
            g = json.loads(line)
            frames.append({"method": r["method"], "lf": r["lf"], "dataset": r["dataset"], "gen": g["gen"],
                           "best_so_far_F": g["best_so_far_F"], **g["diversity"]})
    return pd.DataFrame(frames)


def _line_plot(df, value, path: Path, ylabel: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "evossl"
    fig, ax = plt.subplots(figsize=(6, 4))
    for (method, lf), grp in df.groupby(["method", "lf"]):
        ax.plot(grp["gen"], grp[value], label=f"{method} lf={lf:g}")
    ax.set_xlabel("generation")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _box_plot(runs: list[dict], field: str, path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    groups = defaultdict(list)
    for r in runs:
        if r.get(field) is not None:
            groups[f"{r['method']}\nlf={r['lf']:g}"].append(r[field])
    if not groups:
        return
    labels = sorted(groups)
    fig, ax = plt.subplots(figsize=(max(4, len(labels)), 4))
    ax.boxplot([groups[k] for k in labels])
    ax.set_xticks(range(1, len(labels) + 1), labels, fontsize=7)
    ax.set_ylabel(field)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_report(runs_dir) -> list[Path]:
    import pandas as pd

    runs_dir = Path(runs_dir)
    runs = read_runs(runs_dir)
    if not runs:
        raise FileNotFoundError(f"no runs found in {runs_dir / RUNS_FILE}")
    out = runs_dir / "report"
    out.mkdir(exist_ok=True)
    written = []
    meta = {
        "iqr": "Q3-Q1 of per-dataset seed medians (descriptive.csv); Q3-Q1 over seeds (per_dataset.csv)",
        "wins": "paired Wilcoxon vs every baseline present, alpha=0.01 Bonferroni-divided by the baseline count",
        "n_runs": len(runs),
    }
    _write_atomic(out / "metadata.json", json.dumps(meta, indent=2))
    written.append(out / "metadata.json")
    descriptive, per_dataset = build_tables(runs)
    for name, table in (("descriptive.csv", descriptive), ("per_dataset.csv", per_dataset)):
        pd.DataFrame(table).to_csv(out / name, index=False)
        written.append(out / name)

    traj = _trajectory_frame(runs_dir, runs)
    if not traj.empty:
        med = traj.groupby(["method", "lf", "gen"]).median(numeric_only=True).reset_index()
        med.to_csv(out / "trajectories_median.csv", index=False)
        written.append(out / "trajectories_median.csv")
        plots = (("best_so_far_F", "median best-so-far fitness"), ("maskJaccard", "mask Jaccard diversity"),
                 ("policyNumeric", "policy numeric dispersion"), ("policyBoolean", "policy boolean disagreement"))
        for col, label in plots:
            _line_plot(med, col, out / f"{col}.svg", label)
            written.append(out / f"{col}.svg")

    box_fields = ("ttt", "gtt", "pseudo_added", "optimism")
    pd.DataFrame([{k: r.get(k) for k in ("method", "dataset", "lf", "seed") + box_fields} for r in runs]).to_csv(
        out / "boxplot_data.csv", index=False
    )
    written.append(out / "boxplot_data.csv")
    for f in box_fields:
        _box_plot(runs, f, out / f"{f}.svg")
        if (out / f"{f}.svg").exists():
            written.append(out / f"{f}.svg")
    return written
