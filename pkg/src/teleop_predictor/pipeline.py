"""Experiment assembly: trials -> channel -> windows -> models -> reports.

Every stochastic step draws from a generator derived from the experiment
seed, so a config (or the manifest that snapshots it) fixes every output.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .baselines import BaselineConfig, build_baseline, match_capacity
from .channel_sim import CorruptedWindow, apply_channel, simulate_trace, trace_stats
from .config import MODEL_KINDS, ExperimentConfig
from .data_io import (
    NormStats,
    Trial,
    WindowSpec,
    fit_normalizer,
    gen_synthetic,
    load_trials,
    make_windows,
    read_trial_csv,
    split_trials,
)
from .errors import CheckpointError, ConfigError
from .evaluation import ConstraintSpec, EvalReport, default_constraints, evaluate_predictions
from .informer import Informer, InformerConfig
from .nn_core import Module, load_checkpoint
from .training import TrainReport, WindowSet, build_features, predict, train_model


def _derived_seed(*words: int) -> int:
    return int(np.random.SeedSequence([int(w) for w in words]).generate_state(1)[0])


def load_experiment_trials(cfg: ExperimentConfig) -> list[Trial]:
    data = cfg.data
    if data["source"] == "synthetic":
        params = cfg.synthetic
        return [gen_synthetic(int(data["n_samples"]), _derived_seed(cfg.seed, 0, k), params,
                              trial_id=f"synthetic-{k:03d}")
                for k in range(int(data["n_trials"]))]
    paths = cfg.data_paths()
    if data["source"] == "jigsaws":
        return load_trials(paths, block=data["block"])
    return [read_trial_csv(p) for p in paths]


@dataclass
class PreparedData:
    splits: dict  # name -> list[Trial]
    norm: NormStats
    corrupted: dict  # trial id -> CorruptedWindow
    traces: dict  # trial id -> ChannelTrace
    train: WindowSet
    val: WindowSet
    test: WindowSet
    window: WindowSpec
    eval_stride: int
    use_mask: bool
    split_hash: str
    constraints: ConstraintSpec
    channel_stats: dict = field(default_factory=dict)

    @property
    def in_channels(self) -> int:
        return 4 if self.use_mask else 3


def corrupt_trials(trials, channel, seed: int) -> tuple[dict, dict]:
    """Independent channel realization per trial, seeded by its sorted position."""
    traces, corrupted = {}, {}
    for k, tr in enumerate(sorted(trials, key=lambda t: t.id)):
        trace = simulate_trace(channel, len(tr), seed=_derived_seed(seed, 1, k))
        traces[tr.id] = trace
        corrupted[tr.id] = apply_channel(tr.positions(), trace)
    return traces, corrupted


def build_windows(trials, corrupted: dict, norm: NormStats, spec: WindowSpec, use_mask: bool) -> WindowSet:
    xs, ys, ids, starts = [], [], [], []
    for tr in trials:
        cw = corrupted[tr.id]
        feats = build_features(cw.p_hat, cw.mask, norm, use_mask)
        target = norm.transform(cw.truth)
        for enc, tgt in make_windows(len(tr), spec):
            xs.append(feats[enc])
            ys.append(target[tgt])
            ids.append(tr.id)
            starts.append(int(tgt[0]))
    C = 4 if use_mask else 3
    x = np.stack(xs) if xs else np.zeros((0, spec.enc_len, C))
    y = np.stack(ys) if ys else np.zeros((0, spec.pred_len, 3))
    return WindowSet(x, y, ids, starts)


def _split_hash(splits: dict, corrupted: dict, spec: WindowSpec, eval_stride: int, use_mask: bool) -> str:
    h = hashlib.sha256()
    h.update(json.dumps({name: [t.id for t in trs] for name, trs in splits.items()}, sort_keys=True).encode())
    h.update(json.dumps([spec.enc_len, spec.label_len, spec.pred_len, spec.tau, eval_stride, use_mask]).encode())
    for tr in splits["test"]:
        cw = corrupted[tr.id]
        h.update(np.ascontiguousarray(cw.truth).tobytes())
        h.update(np.ascontiguousarray(cw.mask).tobytes())
    return h.hexdigest()[:16]


def _constraints(cfg: ExperimentConfig, train_trials) -> ConstraintSpec:
    c = cfg.raw["constraints"]
    base = default_constraints([t.positions() for t in train_trials], margin=c["margin"],
                               sync_factor=c["sync_factor"])
    eps = base.eps_sync if c["eps_sync"] is None else c["eps_sync"]
    if (c["p_min"] is None) != (c["p_max"] is None):
        raise ConfigError("constraints.p_min and p_max must be given together")
    p_min, p_max = (base.p_min, base.p_max) if c["p_min"] is None else (c["p_min"], c["p_max"])
    return ConstraintSpec(eps, p_min, p_max)


def prepare_data(cfg: ExperimentConfig, trials: list[Trial] | None = None) -> PreparedData:
    trials = load_experiment_trials(cfg) if trials is None else trials
    train_t, val_t, test_t = split_trials(trials, cfg.seed)
    splits = {"train": train_t, "val": val_t, "test": test_t}
    norm = fit_normalizer(train_t)
    traces, corrupted = corrupt_trials(trials, cfg.channel, cfg.seed)
    spec = cfg.window
    eval_spec = WindowSpec(spec.enc_len, spec.label_len, spec.pred_len, cfg.eval_stride, spec.tau)
    stats = {}
    for tr in sorted(trials, key=lambda t: t.id):
        s = trace_stats(traces[tr.id])
        stats[tr.id] = {"loss_rate": s["loss_rate"], "mean_burst_len": s["mean_burst_len"]}
    lost_all = np.concatenate([traces[t.id].lost for t in trials])
    stats["overall_loss_rate"] = float(lost_all.mean())
    return PreparedData(
        splits=splits,
        norm=norm,
        corrupted=corrupted,
        traces=traces,
        train=build_windows(train_t, corrupted, norm, spec, cfg.use_mask),
        val=build_windows(val_t, corrupted, norm, eval_spec, cfg.use_mask),
        test=build_windows(test_t, corrupted, norm, eval_spec, cfg.use_mask),
        window=spec,
        eval_stride=cfg.eval_stride,
        use_mask=cfg.use_mask,
        split_hash=_split_hash(splits, corrupted, spec, cfg.eval_stride, cfg.use_mask),
        constraints=_constraints(cfg, train_t),
        channel_stats=stats,
    )


# models


def informer_config(cfg: ExperimentConfig, seed: int) -> InformerConfig:
    w, t = cfg.window, cfg.raw["training"]
    return InformerConfig(**{
        **cfg.model_section("informer"),
        "enc_len": w.enc_len, "label_len": w.label_len, "pred_len": w.pred_len,
        "in_channels": 4 if cfg.use_mask else 3, "out_channels": 3,
        "lr": t["lr"], "batch": t["batch"], "max_epochs": t["max_epochs"], "patience": t["patience"],
        "seed": seed,
    })


def baseline_config(cfg: ExperimentConfig, kind: str, seed: int) -> BaselineConfig:
    w, t = cfg.window, cfg.raw["training"]
    section = cfg.model_section(kind)
    bc = BaselineConfig(**{
        **section, "kind": kind,
        "enc_len": w.enc_len, "pred_len": w.pred_len,
        "in_channels": 4 if cfg.use_mask else 3, "out_channels": 3,
        "lr": t["lr"], "batch": t["batch"], "max_epochs": t["max_epochs"], "patience": t["patience"],
        "seed": seed,
    })
    if cfg.raw["capacity_match"] and "hidden" not in section:
        target = Informer(informer_config(cfg, seed)).num_parameters()
        bc = match_capacity(bc, target)
    return bc


def model_config(cfg: ExperimentConfig, kind: str, seed: int):
    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {kind!r}")
    return informer_config(cfg, seed) if kind == "informer" else baseline_config(cfg, kind, seed)


def build_model(model_cfg) -> Module:
    if isinstance(model_cfg, InformerConfig):
        return Informer(model_cfg)
    return build_baseline(model_cfg)


def model_from_checkpoint(path) -> tuple[Module, dict]:
    state, meta = load_checkpoint(path)
    kind = meta.get("kind")
    if kind not in MODEL_KINDS or "config" not in meta:
        raise CheckpointError(f"{path}: checkpoint lacks a model kind/config")
    mc = dict(meta["config"])
    model_cfg = InformerConfig(**mc) if kind == "informer" else BaselineConfig(**mc)
    model = build_model(model_cfg)
    model.load_state_dict(state)
    return model, meta


# scoring


@dataclass
class TestPredictions:
    truth: np.ndarray  # [N, pred_len, 3] raw units
    pred: np.ndarray


def predict_test(model: Module, data: PreparedData) -> TestPredictions:
    pred = data.norm.inverse(predict(model, data.test.x))
    truth = data.norm.inverse(data.test.y)
    return TestPredictions(truth, pred)


def _trajectories(data: PreparedData, pred: np.ndarray) -> list[np.ndarray]:
    """Predicted trajectories to monitor: per trial when windows tile the horizon, else per window."""
    if data.eval_stride != data.window.pred_len:
        return list(pred)
    out, ids = [], data.test.trial_ids
    i = 0
    while i < len(ids):
        j = i
        while j < len(ids) and ids[j] == ids[i]:
            j += 1
        out.append(pred[i:j].reshape(-1, 3))
        i = j
    return out


def score(model_id: str, data: PreparedData, preds: list[TestPredictions], channel: dict,
          param_count: int | None = None, seeds: list | None = None) -> EvalReport:
    """One report over the pooled predictions of one or more seeds."""
    truth = np.concatenate([p.truth.reshape(-1, 3) for p in preds])
    pred = np.concatenate([p.pred.reshape(-1, 3) for p in preds])
    trajectories = [t for p in preds for t in _trajectories(data, p.pred)]
    return evaluate_predictions(model_id, truth, pred, trajectories, data.constraints,
                                n_windows=len(data.test) * len(preds), split_hash=data.split_hash,
                                channel=channel, param_count=param_count, seeds=list(seeds or []))


def overlay_arrays(data: PreparedData, pred: np.ndarray, trial_index: int = 0) -> dict:
    """Aligned truth/received/prediction arrays over the predicted frames of one test trial."""
    trial = data.splits["test"][trial_index]
    cw: CorruptedWindow = data.corrupted[trial.id]
    rows = [k for k, tid in enumerate(data.test.trial_ids) if tid == trial.id]
    frames, values = [], []
    for k in rows:
        start = data.test.starts[k]
        for h in range(data.window.pred_len):
            frames.append(start + h)
            values.append(pred[k, h])
    frames = np.asarray(frames, dtype=int)
    # overlapping windows: keep the first prediction made for each frame
    frames, first = np.unique(frames, return_index=True)
    values = np.asarray(values)[first]
    return {"t": trial.times[frames], "truth": cw.truth[frames], "received": cw.p_hat[frames],
            "pred": values, "lost": cw.mask[frames].astype(bool), "trial_id": trial.id}


def train_one(cfg: ExperimentConfig, kind: str, seed: int, data: PreparedData, checkpoint_path=None,
              log=None) -> tuple[Module, TrainReport]:
    mc = model_config(cfg, kind, seed)
    model = build_model(mc)
    meta = {"norm": data.norm.to_dict(), "use_mask": data.use_mask, "split_hash": data.split_hash}
    report = train_model(model, data.train, data.val, mc, checkpoint_path, meta=meta, log=log)
    return model, report


def pooled_mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)
