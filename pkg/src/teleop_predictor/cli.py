"""Command-line entry point.

    teleop-predictor <gen-synthetic|simulate|train|evaluate|compare> [--config FILE] [--seed N] [--out DIR]

Exit status is 0 on success, 1 on a runtime error and 2 on a usage or
configuration error. Every run writes ``manifest.json`` into the output
directory; passing that manifest back as ``--config`` repeats the run.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

from . import pipeline as pl
from .channel_sim import write_corrupted_csv
from .config import MODEL_KINDS, ExperimentConfig
from .data_io import write_trial_csv
from .errors import ConfigError, TeleopPredictorError
from .evaluation import compare_models, write_overlay

log = logging.getLogger("teleop_predictor")

MANIFEST = "manifest.json"
MANIFEST_VERSION = 1
TIMING_FILES = ("timings.json",)
COMPARE_ORDER = ("informer", "tcn", "rnn", "lstm")


class UsageError(Exception):
    pass


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _write_json(path: Path, obj) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, cfg: ExperimentConfig, options: dict) -> Path:
    files = sorted(p for p in out.rglob("*") if p.is_file() and p.name != MANIFEST)
    outputs = {str(p.relative_to(out)): _sha256(p) for p in files}
    return _write_json(out / MANIFEST, {
        "manifest_version": MANIFEST_VERSION,
        "command": command,
        "options": options,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "versions": {"python": platform.python_version(), "numpy": np.__version__, "teleop_predictor": _version()},
        "outputs": outputs,
        "timing_outputs": [f for f in outputs if Path(f).name in TIMING_FILES],
    })


# subcommands


def cmd_gen_synthetic(cfg: ExperimentConfig, out: Path, opts: dict):
    overrides = {"data.source": "synthetic", "data.n_samples": opts.get("n"), "data.n_trials": opts.get("trials")}
    cfg = cfg.override(**overrides)
    for tr in pl.load_experiment_trials(cfg):
        write_trial_csv(tr, out / "trials" / f"{tr.id}.csv")
    return cfg


def cmd_simulate(cfg: ExperimentConfig, out: Path, opts: dict):
    trials = pl.load_experiment_trials(cfg)
    traces, corrupted = pl.corrupt_trials(trials, cfg.channel, cfg.seed)
    stats = {}
    for tr in sorted(trials, key=lambda t: t.id):
        traces[tr.id].write_csv(out / "traces" / f"{tr.id}.csv")
        write_corrupted_csv(corrupted[tr.id], out / "corrupted" / f"{tr.id}.csv")
        stats[tr.id] = float(traces[tr.id].lost.mean())
    lost = np.concatenate([traces[t.id].lost for t in trials])
    _write_json(out / "channel_stats.json", {"loss_rate": stats, "overall_loss_rate": float(lost.mean()),
                                             "channel": cfg.channel.to_dict()})
    return cfg


def cmd_train(cfg: ExperimentConfig, out: Path, opts: dict):
    kind = opts.get("kind") or cfg.model_kind
    cfg = cfg.override(**{"model.kind": kind})
    data = pl.prepare_data(cfg)
    seed = cfg.model_seeds[0]
    ckpt = out / f"{kind}.ckpt"
    _, report = pl.train_one(cfg, kind, seed, data, checkpoint_path=ckpt, log=log.info)
    report.checkpoint = ckpt.name
    report.to_json(out / "train_report.json")
    opts["kind"] = kind
    return cfg


def cmd_evaluate(cfg: ExperimentConfig, out: Path, opts: dict):
    ckpt = opts.get("checkpoint")
    if not ckpt:
        raise UsageError("evaluate needs --checkpoint")
    model, meta = pl.model_from_checkpoint(ckpt)
    data = pl.prepare_data(cfg)
    if meta.get("use_mask", True) != data.use_mask:
        raise ConfigError("checkpoint and config disagree on use_mask")
    preds = pl.predict_test(model, data)
    report = pl.score(meta["kind"], data, [preds], cfg.channel.to_dict(), model.num_parameters(),
                      seeds=[model.config.seed])
    report.to_json(out / "eval_report.json")
    ov = pl.overlay_arrays(data, preds.pred)
    write_overlay(out / "overlay.csv", ov["truth"], ov["received"], ov["pred"], ov["lost"], t=ov["t"])
    opts["checkpoint"] = str(ckpt)
    return cfg


def run_compare(cfg: ExperimentConfig, out: Path) -> dict:
    data = pl.prepare_data(cfg)
    channel = cfg.channel.to_dict()
    seeds = cfg.model_seeds
    pooled, timings, per_seed = [], {}, {}
    for kind in COMPARE_ORDER:
        preds, params = [], None
        for seed in seeds:
            model, report = pl.train_one(cfg, kind, seed, data, log=log.info)
            timings[f"{kind}-seed{seed}"] = report.wall_time_s
            train_d = report.to_dict()
            train_d.pop("wall_time_s")
            _write_json(out / "train" / f"{kind}-seed{seed}.json", train_d)
            p = pl.predict_test(model, data)
            (out / "predictions").mkdir(parents=True, exist_ok=True)
            np.save(out / "predictions" / f"{kind}-seed{seed}.npy", p.pred)
            preds.append(p)
            params = model.num_parameters()
            r = pl.score(kind, data, [p], channel, params, seeds=[seed])
            r.to_json(out / "reports" / f"{kind}-seed{seed}.json")
            per_seed.setdefault(kind, []).append(r.mse)
        rep = pl.score(kind, data, preds, channel, params, seeds=seeds)
        rep.to_json(out / "reports" / f"{kind}.json")
        pooled.append(rep)
    table = compare_models(pooled)
    (out / "comparison.csv").write_text(table.to_csv())
    (out / "comparison.txt").write_text(table.to_text())
    summary = {
        "order": table.order,
        "split_hash": table.split_hash,
        "param_counts": {r.model_id: r.param_count for r in pooled},
        "per_seed_mse": per_seed,
        "seeds": seeds,
        "loss_rate": data.channel_stats["overall_loss_rate"],
        "informer_accuracy_pct": {a: v["accuracy_pct"] for a, v in pooled[0].per_axis.items()},
    }
    _write_json(out / "comparison.json", summary)
    _write_json(out / "timings.json", timings)
    print(table.to_text(), end="")
    return summary


def cmd_compare(cfg: ExperimentConfig, out: Path, opts: dict):
    run_compare(cfg, out)
    return cfg


COMMANDS = {
    "gen-synthetic": cmd_gen_synthetic,
    "simulate": cmd_simulate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="teleop-predictor", description="Position prediction under bursty packet loss.")
    sub = parser.add_subparsers(dest="command", metavar="<command>")
    sub.required = True
    for name in COMMANDS:
        p = sub.add_parser(name, help=name)
        p.add_argument("--config", help="JSON config or a previous run's manifest.json")
        p.add_argument("--seed", type=int, help="experiment seed (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "gen-synthetic":
            p.add_argument("--n", type=int, help="samples per trial")
            p.add_argument("--trials", type=int, help="number of trials")
        if name == "train":
            p.add_argument("--kind", choices=MODEL_KINDS)
        if name == "evaluate":
            p.add_argument("--checkpoint")
    return parser


def _load(args) -> tuple[ExperimentConfig, dict]:
    opts: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        raw = json.loads(path.read_text()) if path.suffix == ".json" else None
        if isinstance(raw, dict) and "manifest_version" in raw:
            opts.update(raw.get("options", {}))
        cfg = ExperimentConfig.load(path)
    else:
        cfg = ExperimentConfig.from_dict({"seed": 0})
    for key in ("n", "trials", "kind", "checkpoint"):
        if getattr(args, key, None) is not None:
            opts[key] = getattr(args, key)
    cfg = cfg.override(seed=args.seed, out=args.out)
    return cfg, opts


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"teleop-predictor: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg, opts = _load(args)
        out = cfg.out
        out.mkdir(parents=True, exist_ok=True)
        cfg = COMMANDS[args.command](cfg, out, opts)
        write_manifest(out, args.command, cfg, opts)
    except (UsageError, ConfigError) as exc:
        parser.print_usage(sys.stderr)
        print(f"teleop-predictor: error: {exc}", file=sys.stderr)
        return 2
    except (TeleopPredictorError, OSError, ValueError) as exc:
        print(f"teleop-predictor: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
