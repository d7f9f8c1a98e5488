"""Per-run result record shared by the search methods and the baselines."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .metrics import macro_f1

WALL_CLOCK_FIELDS = ("duration_s", "ttt", "wall_clock_cum")


@dataclass
class RunSummary:
    method: str
    dataset: str
    lf: float
    seed: int
    test_macro_f1: float
    test_accuracy: float
    val_macro_f1: float | None
    probe_drop: float | None
    pseudo_added: int | None
    optimism: float | None
    split_hash: str
    n_classes: int
    duration_s: float = 0.0
    gtt: int | None = None
    ttt: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def summarize_predictions(method, ds, plan, test_pred, val_pred=None, probe_drop=None, pseudo_added=None, **extra):
    y = ds.labels
    test = macro_f1(y[plan.test_idx], test_pred, ds.n_classes)
    val = None if val_pred is None else macro_f1(y[plan.val_idx], val_pred, ds.n_classes).macro_f1
    return RunSummary(
        method=method,
        dataset=ds.name,
        lf=plan.lf,
        seed=plan.seed,
        test_macro_f1=test.macro_f1,
        test_accuracy=test.accuracy,
        val_macro_f1=val,
        probe_drop=None if probe_drop is None else float(probe_drop),
        pseudo_added=None if pseudo_added is None else int(pseudo_added),
        optimism=None if val is None else float(val - test.macro_f1),
        split_hash=plan.digest(),
        n_classes=ds.n_classes,
        extra={k: _plain(v) for k, v in extra.items()},
    )


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


def mask_wall_clock(obj):
    """Copy of a JSON-like structure with wall-clock fields zeroed (for determinism checks)."""
    if isinstance(obj, dict):
        return {k: (0 if k in WALL_CLOCK_FIELDS and v is not None else mask_wall_clock(v)) for k, v in obj.items()}
    if isinstance(obj, list):
        return [mask_wall_clock(v) for v in obj]
    return obj
