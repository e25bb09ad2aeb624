"""Kinematic trials: JIGSAWS-style parsing, synthetic generation, scaling, windowing.

A JIGSAWS kinematics row holds 76 floats: four 19-variable manipulator blocks
(master-left, master-right, slave-left, slave-right), each laid out as
position(3), rotation(9), linear velocity(3), angular velocity(3), grasper(1).
Frames are sampled at 30 Hz and the files carry no timestamps.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    EmptyInputError,
    EmptyTrialError,
    FieldCountError,
    ParseError,
    TrialFileError,
    TrialTooShortError,
)

SAMPLE_RATE_HZ = 30.0
ROW_FIELDS = 76
BLOCK_FIELDS = 19
BLOCKS = ("master-left", "master-right", "slave-left", "slave-right")
DEFAULT_BLOCK = "slave-left"

POSITION_CHANNELS = ("x", "y", "z")
CHANNELS = (
    POSITION_CHANNELS
    + tuple(f"r{i}{j}" for i in range(1, 4) for j in range(1, 4))
    + ("vx", "vy", "vz", "wx", "wy", "wz", "theta")
)


@dataclass(frozen=True)
class KinematicSample:
    t: float
    p: np.ndarray
    R: np.ndarray
    v: np.ndarray
    w: np.ndarray
    theta: float

    def __post_init__(self):
        for name, size in (("p", 3), ("v", 3), ("w", 3)):
            vec = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if vec.size != size:
                raise ValueError(f"{name} needs {size} components, got {vec.size}")
            object.__setattr__(self, name, vec)
        R = np.asarray(self.R, dtype=float)
        if R.size != 9:
            raise ValueError(f"R needs 9 components, got {R.size}")
        object.__setattr__(self, "R", R.reshape(3, 3))
        if self.t < 0:
            raise ValueError("t must be non-negative")

    def as_vector(self) -> np.ndarray:
        """The 19 channels in ``CHANNELS`` order."""
        return np.concatenate([self.p, self.R.reshape(-1), self.v, self.w, [self.theta]])


@dataclass(frozen=True)
class Trial:
    id: str
    samples: tuple[KinematicSample, ...]
    source: str = "synthetic"

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if not self.samples:
            raise EmptyTrialError(f"trial {self.id!r} has no samples")
        if self.source not in ("jigsaws-file", "synthetic"):
            raise ValueError(f"unknown trial source {self.source!r}")
        steps = np.diff([s.t for s in self.samples])
        if steps.size and np.max(np.abs(steps - 1.0 / SAMPLE_RATE_HZ)) > 1e-6:
            raise ValueError(f"trial {self.id!r} is not uniformly sampled at {SAMPLE_RATE_HZ:g} Hz")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    def positions(self) -> np.ndarray:
        return np.stack([s.p for s in self.samples])

    def array(self, channels: Sequence[str] = POSITION_CHANNELS) -> np.ndarray:
        cols = [CHANNELS.index(c) for c in channels]
        return np.stack([s.as_vector()[cols] for s in self.samples])


@dataclass(frozen=True)
class NormStats:
    channels: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.std + self.mean

    def to_dict(self) -> dict:
        return {"channels": list(self.channels), "mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(tuple(d["channels"]), np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float))


@dataclass(frozen=True)
class WindowSpec:
    """Window geometry in samples.

    The encoder sees ``enc_len`` frames; the targets are the ``pred_len`` true
    positions starting ``tau`` frames after the encoder window ends. The last
    ``label_len`` encoder frames seed the decoder.
    """

    enc_len: int = 96
    label_len: int = 48
    pred_len: int = 24
    stride: int = 1
    tau: int = 0

    def __post_init__(self):
        for name in ("enc_len", "label_len", "pred_len", "stride"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.label_len > self.enc_len:
            raise ValueError("label_len must not exceed enc_len")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")

    @property
    def span(self) -> int:
        return self.enc_len + self.tau + self.pred_len


# parsing


def parse_kinematics_row(line: str, block: str = DEFAULT_BLOCK, t: float = 0.0) -> KinematicSample:
    if block not in BLOCKS:
        raise ValueError(f"unknown block {block!r}; expected one of {BLOCKS}")
    tokens = line.split()
    if len(tokens) != ROW_FIELDS:
        raise FieldCountError(f"expected {ROW_FIELDS} fields, got {len(tokens)}")
    start = BLOCKS.index(block) * BLOCK_FIELDS
    try:
        vals = [float(tok) for tok in tokens[start : start + BLOCK_FIELDS]]
        # the other blocks must be numeric too even though they are discarded
        for tok in tokens[:start] + tokens[start + BLOCK_FIELDS :]:
            float(tok)
    except ValueError as exc:
        raise ParseError(str(exc)) from None
    if not all(math.isfinite(v) for v in vals):
        raise ParseError("non-finite value in selected block")
    return KinematicSample(t=t, p=vals[0:3], R=vals[3:12], v=vals[12:15], w=vals[15:18], theta=vals[18])


def load_trial(path, block: str = DEFAULT_BLOCK, trial_id: str | None = None) -> Trial:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise TrialFileError(path, None, exc) from exc
    samples = []
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            samples.append(parse_kinematics_row(line, block, t=len(samples) / SAMPLE_RATE_HZ))
        except (FieldCountError, ParseError) as exc:
            err = type(exc)(f"{path}: line {i + 1}: {exc}")
            err.line_no = i + 1
            raise err from exc
    if not samples:
        raise EmptyTrialError(f"{path}: no kinematic frames")
    return Trial(trial_id or path.stem, samples, source="jigsaws-file")


def load_trials(paths: Iterable, block: str = DEFAULT_BLOCK) -> list[Trial]:
    return [load_trial(p, block) for p in paths]


# synthetic trajectories


@dataclass(frozen=True)
class SyntheticParams:
    """Per-axis mixture of two sinusoids plus white Gaussian noise.

    ``amplitudes`` and ``frequencies`` are ``[3][2]`` (metres, Hz); ``phases``
    are radians. With ``random_phase`` the phases are drawn uniformly per
    trial from the seed instead.
    """

    amplitudes: tuple = ((0.1, 0.0), (0.0, 0.0), (0.0, 0.0))
    frequencies: tuple = ((0.2, 0.0), (0.0, 0.0), (0.0, 0.0))
    phases: tuple = ((0.0, 0.0), (0.0, 0.0), (0.0, 0.0))
    offsets: tuple = (0.0, 0.0, 0.0)
    noise_std: tuple = (0.0, 0.0, 0.0)
    random_phase: bool = False

    def __post_init__(self):
        for name in ("amplitudes", "frequencies", "phases"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (3, 2):
                raise ValueError(f"{name} must be 3x2, got {arr.shape}")
        if np.asarray(self.offsets, dtype=float).shape != (3,):
            raise ValueError("offsets must have 3 entries")
        noise = np.asarray(self.noise_std, dtype=float)
        if noise.shape != (3,) or np.any(noise < 0):
            raise ValueError("noise_std must be 3 non-negative values")

    def to_dict(self) -> dict:
        return {
            "amplitudes": [list(r) for r in self.amplitudes],
            "frequencies": [list(r) for r in self.frequencies],
            "phases": [list(r) for r in self.phases],
            "offsets": list(self.offsets),
            "noise_std": list(self.noise_std),
            "random_phase": self.random_phase,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticParams":
        conv = {k: tuple(tuple(r) if isinstance(r, list) else r for r in v) if isinstance(v, list) else v
                for k, v in d.items()}
        return cls(**conv)


def gen_synthetic(n: int, seed: int, params: SyntheticParams | None = None,
                  trial_id: str | None = None) -> Trial:
    """Deterministic synthetic trial; R is identity and w, theta are zero.

    ``v`` is the analytic derivative of the noiseless position; the constant
    orientation has zero angular velocity.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    params = params or SyntheticParams()
    rng = np.random.default_rng(seed)
    amp = np.asarray(params.amplitudes, dtype=float)
    freq = np.asarray(params.frequencies, dtype=float)
    phase = rng.uniform(0, 2 * np.pi, size=(3, 2)) if params.random_phase else np.asarray(params.phases, float)
    t = np.arange(n) / SAMPLE_RATE_HZ
    omega = 2 * np.pi * freq  # [3, 2]
    arg = omega[None] * t[:, None, None] + phase[None]  # [n, 3, 2]
    clean = np.asarray(params.offsets, dtype=float) + (amp[None] * np.sin(arg)).sum(axis=2)
    vel = (amp[None] * omega[None] * np.cos(arg)).sum(axis=2)
    noise = rng.normal(size=(n, 3)) * np.asarray(params.noise_std, dtype=float)
    pos = clean + noise
    eye = np.eye(3)
    zero = np.zeros(3)
    samples = [KinematicSample(t=float(t[i]), p=pos[i], R=eye, v=vel[i], w=zero, theta=0.0) for i in range(n)]
    return Trial(trial_id or f"synthetic-{seed}", samples, source="synthetic")


def synthetic_clean(t: np.ndarray, params: SyntheticParams, phases=None) -> np.ndarray:
    """Closed-form noiseless positions ``[len(t), 3]``."""
    amp = np.asarray(params.amplitudes, dtype=float)
    omega = 2 * np.pi * np.asarray(params.frequencies, dtype=float)
    ph = np.asarray(params.phases if phases is None else phases, dtype=float)
    t = np.asarray(t, dtype=float)
    return np.asarray(params.offsets, float) + (amp * np.sin(omega * t[:, None, None] + ph)).sum(axis=2)


# normalisation, splitting, windowing


def fit_normalizer(trials: Sequence[Trial], channels: Sequence[str] = POSITION_CHANNELS) -> NormStats:
    """Population mean / std per channel over every sample of ``trials``."""
    channels = tuple(channels)
    arrays = [tr.array(channels) for tr in trials]
    if not arrays or sum(len(a) for a in arrays) == 0:
        raise EmptyInputError("no samples to fit a normalizer on")
    data = np.concatenate(arrays, axis=0)
    return NormStats(channels, data.mean(axis=0), np.maximum(data.std(axis=0), 1e-8))


def split_trials(trials: Sequence[Trial], seed: int,
                 fractions: tuple[float, float, float] = (0.70, 0.15, 0.15)
                 ) -> tuple[list[Trial], list[Trial], list[Trial]]:
    """Trial-level train/val/test split: sort by id, permute with ``seed``, cut."""
    if len(trials) < 3:
        raise ValueError("need at least 3 trials to split")
    ordered = sorted(trials, key=lambda tr: tr.id)
    perm = np.random.default_rng(seed).permutation(len(ordered))
    ordered = [ordered[i] for i in perm]
    n = len(ordered)
    n_val = max(1, int(round(fractions[1] * n)))
    n_test = max(1, int(round(fractions[2] * n)))
    n_train = n - n_val - n_test
    if n_train < 1:
        raise ValueError("split leaves no training trials")
    return ordered[:n_train], ordered[n_train : n_train + n_val], ordered[n_train + n_val :]


def window_count(length: int, spec: WindowSpec) -> int:
    if length < spec.span:
        return 0
    return (length - spec.span) // spec.stride + 1


def make_windows(trial: Trial | int, spec: WindowSpec) -> list[tuple[np.ndarray, np.ndarray]]:
    """(encoder indices, target indices) pairs; accepts a trial or its length."""
    length = trial if isinstance(trial, int) else len(trial)
    if length < spec.span:
        raise TrialTooShortError(f"trial of {length} samples is shorter than a {spec.span}-sample window")
    out = []
    for k in range(window_count(length, spec)):
        s = k * spec.stride
        enc = np.arange(s, s + spec.enc_len)
        tgt_start = s + spec.enc_len + spec.tau
        out.append((enc, np.arange(tgt_start, tgt_start + spec.pred_len)))
    return out


# CSV interchange


def write_trial_csv(trial: Trial, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t",) + CHANNELS)
        for s in trial.samples:
            w.writerow([repr(float(s.t))] + [repr(float(v)) for v in s.as_vector()])
    return path


def read_trial_csv(path, trial_id: str | None = None, source: str = "synthetic") -> Trial:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != ("t",) + CHANNELS:
            raise ParseError(f"{path}: unexpected header")
        samples = []
        for row in reader:
            vals = [float(v) for v in row]
            samples.append(KinematicSample(t=vals[0], p=vals[1:4], R=vals[4:13], v=vals[13:16],
                                           w=vals[16:19], theta=vals[19]))
    if not samples:
        raise EmptyTrialError(f"{path}: no rows")
    return Trial(trial_id or path.stem, samples, source=source)


def write_windows_csv(trial: Trial, spec: WindowSpec, path) -> Path:
    """One sample per row: ``t,x,y,z,window,role`` with role ``encoder`` or ``target``."""
    path = Path(path)
    pos = trial.positions()
    times = trial.times
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "x", "y", "z", "window", "role"))
        for k, (enc, tgt) in enumerate(make_windows(trial, spec)):
            for role, idx in (("encoder", enc), ("target", tgt)):
                for i in idx:
                    w.writerow([f"{times[i]:.9g}", *(repr(float(v)) for v in pos[i]), k, role])
    return path


__all__ = [
    "SAMPLE_RATE_HZ", "BLOCKS", "CHANNELS", "POSITION_CHANNELS", "KinematicSample", "Trial",
    "NormStats", "WindowSpec", "SyntheticParams", "parse_kinematics_row", "load_trial",
    "load_trials", "gen_synthetic", "synthetic_clean", "fit_normalizer", "split_trials",
    "make_windows", "window_count", "write_trial_csv", "read_trial_csv", "write_windows_csv",
]
