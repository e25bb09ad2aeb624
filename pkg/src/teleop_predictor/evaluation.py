"""Error metrics, per-axis accuracy, constraint monitors, comparison tables.

MSE is the mean over samples of the squared 3D error norm; MAE is the mean
absolute component error over samples and axes. Per-axis accuracy is
``100 * max(0, 1 - MAE_axis / range_axis)`` with the range taken from the
ground truth being evaluated.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data_io import POSITION_CHANNELS, SAMPLE_RATE_HZ
from .errors import ComparisonError, DegenerateRangeError, EmptyError, LengthMismatchError, SplitMismatchError

AXES = POSITION_CHANNELS

METRIC_DEFINITIONS = {
    "mse": "mean over samples of the squared 3D error norm",
    "mae": "mean over samples and axes of the absolute component error",
    "rmse": "sqrt(mse)",
    "accuracy_pct": "100 * max(0, 1 - MAE_axis / range_axis); range = max - min of ground truth on the evaluated split",
}


def _pair(truth, pred) -> tuple[np.ndarray, np.ndarray]:
    truth = np.asarray(truth, dtype=float).reshape(-1, 3)
    pred = np.asarray(pred, dtype=float).reshape(-1, 3)
    if len(truth) != len(pred):
        raise LengthMismatchError(f"{len(truth)} truth samples vs {len(pred)} predictions")
    if len(truth) == 0:
        raise EmptyError("no samples to score")
    return truth, pred


def compute_errors(truth, pred) -> dict:
    """Aggregate and per-axis error metrics over paired [N, 3] positions."""
    truth, pred = _pair(truth, pred)
    err = pred - truth
    mse = float(np.mean(np.sum(err**2, axis=1)))
    per_axis = {}
    for k, name in enumerate(AXES):
        e = err[:, k]
        axis_mse = float(np.mean(e**2))
        per_axis[name] = {"mse": axis_mse, "rmse": math.sqrt(axis_mse), "mae": float(np.mean(np.abs(e)))}
    return {"mse": mse, "mae": float(np.mean(np.abs(err))), "rmse": math.sqrt(mse), "per_axis": per_axis}


def _axis_index(axis) -> int:
    return AXES.index(axis) if isinstance(axis, str) else int(axis)


def per_axis_accuracy(truth, pred, axis) -> float:
    truth, pred = _pair(truth, pred)
    k = _axis_index(axis)
    rng = float(truth[:, k].max() - truth[:, k].min())
    if not rng > 0:
        raise DegenerateRangeError(f"ground truth on axis {AXES[k]} has zero range")
    mae = float(np.mean(np.abs(pred[:, k] - truth[:, k])))
    return 100.0 * max(0.0, 1.0 - mae / rng)


@dataclass
class ConstraintSpec:
    """Smoothness bound on consecutive predictions and a closed workspace box."""

    eps_sync: float
    p_min: np.ndarray | None = None
    p_max: np.ndarray | None = None
    dt: float = 1.0 / SAMPLE_RATE_HZ

    def __post_init__(self):
        if not self.eps_sync > 0:
            raise ValueError("eps_sync must be > 0")
        if (self.p_min is None) != (self.p_max is None):
            raise ValueError("give both p_min and p_max or neither")
        if self.p_min is not None:
            self.p_min = np.asarray(self.p_min, dtype=float)
            self.p_max = np.asarray(self.p_max, dtype=float)
            if self.p_min.shape != (3,) or self.p_max.shape != (3,) or not np.all(self.p_min < self.p_max):
                raise ValueError("p_min < p_max must hold componentwise for 3-vectors")

    def to_dict(self) -> dict:
        return {
            "eps_sync": self.eps_sync,
            "p_min": None if self.p_min is None else self.p_min.tolist(),
            "p_max": None if self.p_max is None else self.p_max.tolist(),
            "dt": self.dt,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConstraintSpec":
        return cls(**d)


def max_step(trajectories: Sequence) -> float:
    steps = [np.linalg.norm(np.diff(np.asarray(p, dtype=float), axis=0), axis=1)
             for p in trajectories if len(p) >= 2]
    if not steps:
        raise EmptyError("need a trajectory with at least two samples")
    return float(max(s.max() for s in steps))


def default_constraints(train_positions: Sequence, margin: float = 0.10, sync_factor: float = 1.5,
                        dt: float = 1.0 / SAMPLE_RATE_HZ) -> ConstraintSpec:
    """Box = per-axis training min/max widened by ``margin`` of the range; eps = ``sync_factor`` x largest true step."""
    data = np.concatenate([np.asarray(p, dtype=float) for p in train_positions], axis=0)
    lo, hi = data.min(axis=0), data.max(axis=0)
    pad = margin * (hi - lo)
    return ConstraintSpec(sync_factor * max_step(train_positions), lo - pad, hi + pad, dt)


def check_constraints(pred, spec: ConstraintSpec) -> dict:
    """Violation counts only; predictions are never clamped."""
    pred = np.asarray(pred, dtype=float).reshape(-1, 3)
    sync = 0
    if len(pred) >= 2:
        sync = int(np.sum(np.linalg.norm(np.diff(pred, axis=0), axis=1) > spec.eps_sync))
    bounds = 0
    if spec.p_min is not None:
        outside = np.any((pred < spec.p_min) | (pred > spec.p_max), axis=1)
        bounds = int(np.sum(outside))
    return {"sync_violations": sync, "bounds_violations": bounds}


@dataclass
class EvalReport:
    model_id: str
    mse: float
    mae: float
    rmse: float
    per_axis: dict = field(default_factory=dict)
    sync_violations: int = 0
    bounds_violations: int = 0
    n_windows: int = 0
    split_hash: str = ""
    channel: dict = field(default_factory=dict)
    param_count: int | None = None
    seeds: list = field(default_factory=list)
    metadata: dict = field(default_factory=lambda: dict(METRIC_DEFINITIONS))

    def __post_init__(self):
        for axis in self.per_axis.values():
            acc = axis.get("accuracy_pct")
            if acc is not None and not 0.0 <= acc <= 100.0:
                raise ValueError(f"accuracy {acc} outside [0, 100]")

    def accuracy(self, axis: str) -> float:
        return self.per_axis[axis]["accuracy_pct"]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "EvalReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def evaluate_predictions(model_id: str, truth, pred, constraint_pred: Sequence = (),
                         constraints: ConstraintSpec | None = None, **extra) -> EvalReport:
    """Score [N, 3] predictions against truth and monitor the given trajectories.

    ``constraint_pred`` is a list of contiguous predicted trajectories, each
    checked separately so no step spans a gap between windows.
    """
    core = compute_errors(truth, pred)
    truth_arr = np.asarray(truth, dtype=float).reshape(-1, 3)
    for name in AXES:
        k = AXES.index(name)
        core["per_axis"][name]["range"] = float(truth_arr[:, k].max() - truth_arr[:, k].min())
        core["per_axis"][name]["accuracy_pct"] = per_axis_accuracy(truth, pred, k)
    sync = bounds = 0
    if constraints is not None:
        for traj in constraint_pred:
            c = check_constraints(traj, constraints)
            sync += c["sync_violations"]
            bounds += c["bounds_violations"]
    return EvalReport(model_id=model_id, mse=core["mse"], mae=core["mae"], rmse=core["rmse"],
                      per_axis=core["per_axis"], sync_violations=sync, bounds_violations=bounds, **extra)


# comparison

TABLE_COLUMNS = ("model", "mse", "mae", "rmse")


@dataclass
class ComparisonTable:
    rows: list  # EvalReport, sorted by mse then model id
    split_hash: str

    @property
    def order(self) -> list[str]:
        return [r.model_id for r in self.rows]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        for r in self.rows:
            w.writerow((r.model_id, "%.9g" % r.mse, "%.9g" % r.mae, "%.9g" % r.rmse))
        return buf.getvalue()

    def to_text(self) -> str:
        cells = [TABLE_COLUMNS] + [(r.model_id, f"{r.mse:.6f}", f"{r.mae:.6f}", f"{r.rmse:.6f}") for r in self.rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(TABLE_COLUMNS))]
        lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
                 for row in cells]
        return "\n".join(lines) + "\n"


def compare_models(reports: Sequence[EvalReport]) -> ComparisonTable:
    if len(reports) < 2:
        raise ComparisonError("comparison needs at least two reports")
    hashes = {r.split_hash for r in reports}
    if len(hashes) != 1:
        raise SplitMismatchError(f"reports come from different splits: {sorted(hashes)}")
    rows = sorted(reports, key=lambda r: (r.mse, r.model_id))
    return ComparisonTable(rows, hashes.pop())


# overlay

OVERLAY_COLUMNS = ("t", "axis", "truth", "received", "predicted", "lost")


def emit_overlay(truth, received, pred, lost, t=None, dt: float = 1.0 / SAMPLE_RATE_HZ) -> str:
    """CSV text of one row per sample and axis for truth/received/prediction overlays.

    ``lost`` may be a boolean mask or anything with a ``lost`` attribute (a
    channel trace).
    """
    truth = np.asarray(truth, dtype=float).reshape(-1, 3)
    received = np.asarray(received, dtype=float).reshape(-1, 3)
    pred = np.asarray(pred, dtype=float).reshape(-1, 3)
    lost = np.asarray(getattr(lost, "lost", lost)).astype(bool)
    n = len(truth)
    if not (len(received) == len(pred) == len(lost) == n):
        raise LengthMismatchError("truth, received, pred and lost must align")
    t = np.arange(n) * dt if t is None else np.asarray(t, dtype=float)
    if len(t) != n:
        raise LengthMismatchError("time axis must align with the samples")
    lines = [",".join(OVERLAY_COLUMNS)]
    for i in range(n):
        for k, name in enumerate(AXES):
            lines.append("%.9g,%s,%.9g,%.9g,%.9g,%d" % (t[i], name, truth[i, k], received[i, k], pred[i, k], lost[i]))
    return "\n".join(lines) + "\n"


def write_overlay(path, *args, **kwargs) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(emit_overlay(*args, **kwargs))
    return path
