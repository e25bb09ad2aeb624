"""JSON experiment configuration.

Schema (every key optional except ``seed``; missing keys take the defaults
below)::

    {
      "seed": 0,
      "data": {"source": "synthetic" | "jigsaws" | "csv",
               "n_trials": 20, "n_samples": 2000, "synthetic": {...},
               "paths": [...], "block": "slave-left"},
      "channel": {"P": [[...]], "initial_state": 0, "base_delay": 0.01, ...},
      "window": {"enc_len": 96, "label_len": 48, "pred_len": 24, "stride": 1, "tau": 0},
      "eval_stride": null,            # defaults to pred_len
      "use_mask": true,
      "model": {"kind": "informer"},  # kind used by `train`
      "models": {"informer": {...}, "rnn": {...}, "lstm": {...}, "tcn": {...}},
      "capacity_match": true,         # tune baseline hidden widths to the Informer
      "training": {"lr": 1e-4, "batch": 32, "max_epochs": 50, "patience": 5},
      "model_seeds": null,            # defaults to [seed, seed + 1, seed + 2]
      "constraints": {"margin": 0.1, "sync_factor": 1.5, "eps_sync": null,
                      "p_min": null, "p_max": null},
      "out": "runs/experiment"
    }

A run manifest is accepted wherever a config is: its ``config`` entry is used.
"""

from __future__ import annotations

import copy
import glob
import json
from dataclasses import dataclass, field
from pathlib import Path

from .baselines import KINDS as BASELINE_KINDS
from .channel_sim import ChannelConfig
from .data_io import BLOCKS, DEFAULT_BLOCK, SyntheticParams, WindowSpec
from .errors import ConfigError

MODEL_KINDS = ("informer",) + BASELINE_KINDS
DATA_SOURCES = ("synthetic", "jigsaws", "csv")

# slow multi-sine motion around a workspace offset, in meters
DEFAULT_SYNTHETIC = {
    "amplitudes": [[0.030, 0.010], [0.025, 0.008], [0.020, 0.012]],
    "frequencies": [[0.15, 0.55], [0.20, 0.45], [0.25, 0.70]],
    "phases": [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]],
    "offsets": [-0.05, 0.03, -0.10],
    "noise_std": [0.0005, 0.0005, 0.0005],
    "random_phase": True,
}

DEFAULTS = {
    "seed": None,
    "data": {"source": "synthetic", "n_trials": 20, "n_samples": 2000, "synthetic": DEFAULT_SYNTHETIC,
             "paths": [], "block": DEFAULT_BLOCK},
    "channel": {},
    "window": {"enc_len": 96, "label_len": 48, "pred_len": 24, "stride": 1, "tau": 0},
    "eval_stride": None,
    "use_mask": True,
    "model": {"kind": "informer"},
    "models": {k: {} for k in MODEL_KINDS},
    "capacity_match": True,
    "training": {"lr": 1e-4, "batch": 32, "max_epochs": 50, "patience": 5},
    "model_seeds": None,
    "constraints": {"margin": 0.1, "sync_factor": 1.5, "eps_sync": None, "p_min": None, "p_max": None},
    "out": "runs/experiment",
}

# keys a per-model section may not override: they come from window, use_mask, training and seeds
_DERIVED_MODEL_KEYS = ("enc_len", "label_len", "pred_len", "in_channels", "out_channels", "seed", "kind")


def _merge(base: dict, over: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key!r}")
        if isinstance(base[key], dict) and isinstance(value, dict) and key not in ("channel", "synthetic"):
            out[key] = _merge(base[key], value, f"{where}{key}.") if base[key] else copy.deepcopy(value)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass
class ExperimentConfig:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if "manifest_version" in d:
            d = d["config"]
        cfg = cls(_merge(DEFAULTS, d))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(d)

    def override(self, **kv) -> "ExperimentConfig":
        d = copy.deepcopy(self.raw)
        for key, value in kv.items():
            if value is None:
                continue
            node = d
            *parents, last = key.split(".")
            for p in parents:
                node = node[p]
            node[last] = value
        return ExperimentConfig.from_dict(d)

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    # typed views

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def data(self) -> dict:
        return self.raw["data"]

    @property
    def synthetic(self) -> SyntheticParams:
        return SyntheticParams.from_dict(self.data["synthetic"])

    @property
    def channel(self) -> ChannelConfig:
        return ChannelConfig.from_dict(self.raw["channel"])

    @property
    def window(self) -> WindowSpec:
        return WindowSpec(**self.raw["window"])

    @property
    def eval_stride(self) -> int:
        s = self.raw["eval_stride"]
        return int(s) if s is not None else self.window.pred_len

    @property
    def use_mask(self) -> bool:
        return bool(self.raw["use_mask"])

    @property
    def model_kind(self) -> str:
        return self.raw["model"]["kind"]

    @property
    def model_seeds(self) -> list[int]:
        s = self.raw["model_seeds"]
        return [self.seed + k for k in range(3)] if s is None else [int(v) for v in s]

    @property
    def out(self) -> Path:
        return Path(self.raw["out"])

    def model_section(self, kind: str) -> dict:
        return dict(self.raw["models"].get(kind, {}))

    def data_paths(self) -> list[Path]:
        found: list[Path] = []
        suffix = "*.txt" if self.data["source"] == "jigsaws" else "*.csv"
        for entry in self.data["paths"]:
            p = Path(entry)
            if p.is_dir():
                found.extend(sorted(p.glob(suffix)))
            elif any(ch in str(entry) for ch in "*?["):
                found.extend(Path(m) for m in sorted(glob.glob(str(entry))))
            else:
                found.append(p)
        return found

    def validate(self) -> None:
        r = self.raw
        if r["seed"] is None or isinstance(r["seed"], bool) or not isinstance(r["seed"], int):
            raise ConfigError("config needs an integer 'seed'")
        src = self.data["source"]
        if src not in DATA_SOURCES:
            raise ConfigError(f"data.source must be one of {DATA_SOURCES}")
        if self.data["block"] not in BLOCKS:
            raise ConfigError(f"data.block must be one of {BLOCKS}")
        if src != "synthetic":
            paths = self.data_paths()
            if not paths:
                raise ConfigError(f"data.source {src!r} needs data.paths")
            missing = [str(p) for p in paths if not p.exists()]
            if missing:
                raise ConfigError(f"data paths do not exist: {missing}")
        if self.model_kind not in MODEL_KINDS:
            raise ConfigError(f"model.kind must be one of {MODEL_KINDS}")
        for kind, section in r["models"].items():
            if kind not in MODEL_KINDS:
                raise ConfigError(f"unknown model section {kind!r}")
            bad = [k for k in section if k in _DERIVED_MODEL_KEYS]
            if bad:
                raise ConfigError(f"models.{kind} may not set {bad}; they follow window/training/seeds")
        try:
            self.synthetic
            self.channel
            self.window
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.eval_stride < 1:
            raise ConfigError("eval_stride must be >= 1")
        if not self.model_seeds:
            raise ConfigError("model_seeds must not be empty")
