"""One training harness shared by every model kind.

Inputs are normalized corrupted positions with lost frames zeroed (zero is
the normalized mean) plus an optional 0/1 loss-mask channel. Targets are the
normalized ground-truth positions of the horizon. The loss is the mean over
horizon steps of the squared 3D error norm.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import nn_core as nn
from .channel_sim import CorruptedWindow
from .data_io import NormStats
from .errors import EmptySplitError, ShapeError
from .nn_core import Adam, Module, save_checkpoint

EVAL_BATCH = 256


def build_features(p_hat: np.ndarray, mask: np.ndarray, norm: NormStats, use_mask: bool = True) -> np.ndarray:
    """[L, 3] corrupted positions -> [L, 3 (+1)] model inputs."""
    p_hat = np.asarray(p_hat, dtype=float)
    lost = np.asarray(mask).astype(bool)
    z = norm.transform(p_hat)
    z[lost] = 0.0
    if use_mask:
        z = np.concatenate([z, lost[:, None].astype(float)], axis=1)
    return z


@dataclass
class WindowSet:
    """Stacked model inputs ``x`` [N, enc_len, C] and normalized targets ``y`` [N, pred_len, 3]."""

    x: np.ndarray
    y: np.ndarray
    trial_ids: list = field(default_factory=list)
    starts: list = field(default_factory=list)  # index of the first target frame

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if len(self.x) != len(self.y):
            raise ShapeError(f"{len(self.x)} inputs vs {len(self.y)} targets")

    def __len__(self) -> int:
        return len(self.x)


@dataclass
class TrainReport:
    kind: str
    seed: int
    epochs: list  # [{"epoch", "train_mse", "val_mse"}]
    best_epoch: int
    best_val_mse: float
    initial_val_mse: float
    wall_time_s: float
    param_count: int
    config: dict
    checkpoint: str | None = None

    @property
    def train_curve(self) -> list[float]:
        return [e["train_mse"] for e in self.epochs]

    @property
    def val_curve(self) -> list[float]:
        return [e["val_mse"] for e in self.epochs]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        return path

    @classmethod
    def from_dict(cls, d: dict) -> "TrainReport":
        return cls(**d)


def predict(model: Module, x: np.ndarray, batch: int = EVAL_BATCH) -> np.ndarray:
    """Inference-mode predictions in normalized units."""
    x = np.asarray(x, dtype=float)
    outs = [model(x[i : i + batch]).data for i in range(0, len(x), batch)]
    if not outs:
        return np.zeros((0,) + tuple(model(np.zeros((1,) + x.shape[1:])).shape[1:]))
    return np.concatenate(outs, axis=0)


def evaluate_mse(model: Module, data: WindowSet, batch: int = EVAL_BATCH) -> float:
    pred = predict(model, data.x, batch)
    return float(np.sum((pred - data.y) ** 2) / (data.y.shape[0] * data.y.shape[1]))


def train_model(model: Module, train: WindowSet, val: WindowSet, config, checkpoint_path=None,
                meta: dict | None = None, log=None) -> TrainReport:
    """Adam on the squared-error loss with early stopping on validation MSE.

    ``config`` supplies ``lr``, ``batch``, ``max_epochs``, ``patience`` and
    ``seed``. The best epoch's weights are restored into ``model`` and, when a
    path is given, saved as a checkpoint.
    """
    if len(train) == 0 or len(val) == 0:
        raise EmptySplitError(f"train has {len(train)} windows, val has {len(val)}")
    start = time.perf_counter()
    rng = np.random.default_rng(config.seed + 1)
    opt = Adam(model.parameters(), lr=config.lr)
    initial = evaluate_mse(model, val)
    best_val, best_epoch, best_state = initial, 0, model.state_dict()
    epochs, bad = [], 0
    n = len(train)
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for i in range(0, n, config.batch):
            idx = order[i : i + config.batch]
            opt.zero_grad()
            loss = nn.mse_loss(model(train.x[idx], rng=rng, training=True), train.y[idx])
            loss.backward()
            opt.step()
            total += loss.item() * len(idx)
        val_mse = evaluate_mse(model, val)
        epochs.append({"epoch": epoch, "train_mse": total / n, "val_mse": val_mse})
        if log is not None:
            log(f"{model.kind} epoch {epoch}: train {total / n:.6f} val {val_mse:.6f}")
        if val_mse < best_val:
            best_val, best_epoch, best_state, bad = val_mse, epoch, model.state_dict(), 0
        else:
            bad += 1
            if bad >= config.patience:
                break
    model.load_state_dict(best_state)
    cfg = config.to_dict()
    report = TrainReport(kind=model.kind, seed=config.seed, epochs=epochs, best_epoch=best_epoch,
                         best_val_mse=best_val, initial_val_mse=initial,
                         wall_time_s=time.perf_counter() - start,
                         param_count=model.num_parameters(), config=cfg)
    if checkpoint_path is not None:
        ck_meta = {"kind": model.kind, "config": cfg, "best_epoch": best_epoch, **(meta or {})}
        report.checkpoint = str(save_checkpoint(checkpoint_path, best_state, ck_meta))
    return report


train_baseline = train_model


def predict_window(model: Module, window: CorruptedWindow, norm: NormStats, use_mask: bool = True) -> np.ndarray:
    """[pred_len, 3] de-normalized prediction from one corrupted encoder window."""
    enc_len = model.config.enc_len
    if len(window) != enc_len:
        raise ShapeError(f"window has {len(window)} frames, model expects {enc_len}")
    x = build_features(window.p_hat, window.mask, norm, use_mask)
    if x.shape[1] != model.config.in_channels:
        raise ShapeError(f"features have {x.shape[1]} channels, model expects {model.config.in_channels}")
    return norm.inverse(model(x[None]).data[0])
