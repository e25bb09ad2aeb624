"""Four-state hidden-Markov packet-loss channel with delay, jitter and deadline.

States (0-based indices in code, S1..S4 in reports):

    S1  reception during a gap period
    S2  reception during a burst period
    S3  loss during a burst period
    S4  loss during a gap period

A packet is lost when the chain sits in S3/S4, when an independent
Bernoulli(``p_random``) draw fires, or when its delay exceeds the playout
deadline. Lost samples are zero-filled and flagged in a mask.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data_io import SAMPLE_RATE_HZ
from .errors import (
    ChannelConfigError,
    EmptyTraceError,
    InvalidMatrixError,
    LengthMismatchError,
    NonStochasticError,
)

S1, S2, S3, S4 = 0, 1, 2, 3
STATE_NAMES = ("S1", "S2", "S3", "S4")
LOSS_STATES = (S3, S4)

DEFAULT_MATRIX = (
    (0.94, 0.02, 0.01, 0.03),
    (0.10, 0.50, 0.35, 0.05),
    (0.05, 0.30, 0.60, 0.05),
    (0.70, 0.05, 0.05, 0.20),
)

TRACE_COLUMNS = ("index", "state", "lost", "t_sent", "t_received", "delay", "jitter", "deadline_missed")


def validate_matrix(P, tol: float = 1e-12) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.shape != (4, 4):
        raise InvalidMatrixError(f"transition matrix must be 4x4, got {P.shape}")
    if not np.all(np.isfinite(P)) or np.any(P < 0) or np.any(P > 1):
        raise NonStochasticError("transition probabilities must lie in [0, 1]")
    if np.max(np.abs(P.sum(axis=1) - 1.0)) > tol:
        raise NonStochasticError(f"rows must sum to 1, got {P.sum(axis=1)}")
    return P


@dataclass(frozen=True)
class ChannelConfig:
    P: tuple = DEFAULT_MATRIX
    initial_state: int = S1
    base_delay: float = 0.010
    jitter_std: float = 0.004
    deadline: float = 1.0 / SAMPLE_RATE_HZ
    p_random: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "P", tuple(tuple(float(v) for v in row) for row in np.asarray(self.P)))
        validate_matrix(self.P)
        if self.initial_state not in (S1, S2, S3, S4):
            raise ChannelConfigError(f"initial_state must be 0..3, got {self.initial_state}")
        if not self.deadline > 0:
            raise ChannelConfigError("deadline must be > 0")
        if self.jitter_std < 0 or self.base_delay < 0:
            raise ChannelConfigError("jitter_std and base_delay must be >= 0")
        if not 0.0 <= self.p_random <= 1.0:
            raise ChannelConfigError("p_random must lie in [0, 1]")

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.P, dtype=float)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["P"] = [list(r) for r in self.P]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelConfig":
        d = dict(d)
        if isinstance(d.get("initial_state"), str):
            d["initial_state"] = STATE_NAMES.index(d["initial_state"])
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ChannelConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class PacketOutcome:
    index: int
    state: int
    lost: bool
    t_sent: float
    t_received: float
    delay: float
    jitter: float
    deadline_missed: bool


@dataclass
class ChannelTrace:
    """Columnar per-packet outcomes; ``outcome(i)`` gives a row view."""

    states: np.ndarray
    lost: np.ndarray
    t_sent: np.ndarray
    t_received: np.ndarray
    delay: np.ndarray
    jitter: np.ndarray
    deadline_missed: np.ndarray
    seed: int
    config: ChannelConfig = field(default_factory=ChannelConfig)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def indices(self) -> np.ndarray:
        return np.arange(len(self))

    def outcome(self, i: int) -> PacketOutcome:
        return PacketOutcome(
            index=int(i),
            state=int(self.states[i]),
            lost=bool(self.lost[i]),
            t_sent=float(self.t_sent[i]),
            t_received=float(self.t_received[i]),
            delay=float(self.delay[i]),
            jitter=float(self.jitter[i]),
            deadline_missed=bool(self.deadline_missed[i]),
        )

    @property
    def outcomes(self) -> list[PacketOutcome]:
        return [self.outcome(i) for i in range(len(self))]

    def write_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_COLUMNS)
            for i in range(len(self)):
                w.writerow([
                    i,
                    STATE_NAMES[self.states[i]],
                    int(self.lost[i]),
                    repr(float(self.t_sent[i])),
                    repr(float(self.t_received[i])),
                    repr(float(self.delay[i])),
                    repr(float(self.jitter[i])),
                    int(self.deadline_missed[i]),
                ])
        return path

    @classmethod
    def read_csv(cls, path, seed: int = -1, config: ChannelConfig | None = None) -> "ChannelTrace":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise EmptyTraceError(f"{path}: no packets")
        col = lambda k, f: np.array([f(r[k]) for r in rows])  # noqa: E731
        return cls(
            states=col("state", STATE_NAMES.index),
            lost=col("lost", lambda v: bool(int(v))),
            t_sent=col("t_sent", float),
            t_received=col("t_received", float),
            delay=col("delay", float),
            jitter=col("jitter", float),
            deadline_missed=col("deadline_missed", lambda v: bool(int(v))),
            seed=seed,
            config=config or ChannelConfig(),
        )


@dataclass
class CorruptedWindow:
    """Received-or-zeroed positions; ``mask`` is 1 where the packet was lost."""

    p_hat: np.ndarray
    mask: np.ndarray
    truth: np.ndarray

    def __post_init__(self):
        if not (len(self.p_hat) == len(self.mask) == len(self.truth)):
            raise LengthMismatchError("p_hat, mask and truth must align")

    def __len__(self) -> int:
        return len(self.mask)

    def slice(self, idx) -> "CorruptedWindow":
        return CorruptedWindow(self.p_hat[idx], self.mask[idx], self.truth[idx])


# chain dynamics


def step_hmm(state: int, P, rng: np.random.Generator) -> int:
    """Draw the next state from row ``state`` of ``P``."""
    P = validate_matrix(P)
    thresholds = np.cumsum(P[state])[:3]
    # the last state absorbs round-off in the cumulative sum
    return int(np.searchsorted(thresholds, rng.random(), side="right"))


@dataclass(frozen=True)
class StationaryResult:
    pi: np.ndarray
    reducible: bool


def is_irreducible(P: np.ndarray) -> bool:
    reach = ((P > 0) | np.eye(len(P), dtype=bool)).astype(int)
    for _ in range(len(P)):
        reach = ((reach @ reach) > 0).astype(int)
    return bool(reach.all())


def stationary_distribution(P) -> StationaryResult:
    """Solve ``pi P = pi, sum(pi) = 1`` by least squares.

    For reducible chains the solution need not be unique; the least-squares
    pick is still stationary and is returned with ``reducible=True``.
    """
    P = validate_matrix(P)
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()
    return StationaryResult(pi=pi, reducible=not is_irreducible(P))


def power_iteration(P, tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """Independent stationary-distribution oracle: iterate ``pi <- pi P``."""
    P = validate_matrix(P)
    pi = np.full(P.shape[0], 1.0 / P.shape[0])
    for _ in range(max_iter):
        nxt = pi @ P
        if np.max(np.abs(nxt - pi)) <= tol:
            return nxt
        pi = nxt
    raise RuntimeError("power iteration did not converge")


def simulate_states(P, initial_state: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """State sequence of length ``n`` starting from ``initial_state``.

    Same transition rule as :func:`step_hmm`, with the uniforms drawn in one
    block up front.
    """
    P = validate_matrix(P)
    cdf = np.cumsum(P, axis=1)
    # next state = number of cumulative thresholds <= u (searchsorted, side="right")
    thresholds = [tuple(cdf[i, :3].tolist()) for i in range(4)]
    u = rng.random(n - 1).tolist() if n > 1 else []
    out = [int(initial_state)]
    s = out[0]
    for ui in u:
        c0, c1, c2 = thresholds[s]
        s = (ui >= c0) + (ui >= c1) + (ui >= c2)
        out.append(s)
    states = np.asarray(out, dtype=np.int64)
    return states


def simulate_trace(config: ChannelConfig, n: int, dt: float = 1.0 / SAMPLE_RATE_HZ,
                   seed: int = 0) -> ChannelTrace:
    if n < 1:
        raise ValueError("n must be >= 1")
    if not dt > 0:
        raise ValueError("dt must be > 0")
    rng = np.random.default_rng(seed)
    states = simulate_states(config.matrix, config.initial_state, n, rng)
    random_loss = rng.random(n) < config.p_random
    # Gaussian jitter truncated so that delay stays non-negative
    delay = np.maximum(config.base_delay + config.jitter_std * rng.normal(size=n), 0.0)
    t_sent = np.arange(n) * dt
    t_received = t_sent + delay
    delay = t_received - t_sent
    # jitter is arrival minus (send + base delay); taken from delay so the identity is exact
    jitter = delay - config.base_delay
    missed = delay > config.deadline
    lost = np.isin(states, LOSS_STATES) | random_loss | missed
    return ChannelTrace(states, lost, t_sent, t_received, delay, jitter, missed, seed, config)


def apply_channel(positions: Sequence, trace: ChannelTrace) -> CorruptedWindow:
    positions = np.asarray(positions, dtype=float)
    if len(positions) != len(trace):
        raise LengthMismatchError(f"{len(positions)} positions vs {len(trace)} packets")
    mask = trace.lost.astype(np.int8)
    p_hat = np.where(trace.lost[:, None], 0.0, positions)
    return CorruptedWindow(p_hat=p_hat, mask=mask, truth=positions.copy())


def burst_lengths(lost: np.ndarray) -> np.ndarray:
    """Lengths of the maximal runs of ``True`` in ``lost``."""
    lost = np.asarray(lost, dtype=bool)
    padded = np.concatenate([[False], lost, [False]]).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return ends - starts


def trace_stats(trace: ChannelTrace) -> dict:
    if len(trace) == 0:
        raise EmptyTraceError("empty trace")
    runs = burst_lengths(trace.lost)
    hist: dict[int, int] = {}
    for length in runs.tolist():
        hist[length] = hist.get(length, 0) + 1
    return {
        "loss_rate": float(trace.lost.mean()),
        "mean_burst_len": float(runs.mean()) if runs.size else 0.0,
        "burst_len_histogram": dict(sorted(hist.items())),
        "mean_delay": float(trace.delay.mean()),
        "jitter_std_est": float(trace.jitter.std()),
        "state_frequencies": np.bincount(trace.states, minlength=4) / len(trace),
    }


def write_corrupted_csv(corrupted: CorruptedWindow, path, dt: float = 1.0 / SAMPLE_RATE_HZ) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "x", "y", "z", "x_hat", "y_hat", "z_hat", "lost"))
        for i in range(len(corrupted)):
            w.writerow([f"{i * dt:.9g}", *(repr(float(v)) for v in corrupted.truth[i]),
                        *(repr(float(v)) for v in corrupted.p_hat[i]), int(corrupted.mask[i])])
    return path
