"""Recurrent and convolutional baselines with a one-shot multi-horizon head.

All three read the same encoder window as the Informer and map their final
time-step features to the full ``pred_len x out`` horizon with one dense
layer, so comparisons differ only in the sequence encoder.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import nn_core as nn
from .errors import ShapeError
from .informer import Linear
from .nn_core import Module, Tensor, parameter

KINDS = ("rnn", "lstm", "tcn")


@dataclass
class BaselineConfig:
    kind: str = "lstm"
    hidden: int = 64
    layers: int = 2
    kernel: int = 3
    dilations: tuple = (1, 2, 4, 8)
    enc_len: int = 96
    pred_len: int = 24
    in_channels: int = 4
    out_channels: int = 3
    lr: float = 1e-4
    batch: int = 32
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        self.dilations = tuple(int(d) for d in self.dilations)
        if self.hidden < 1 or self.layers < 1 or self.kernel < 1 or not self.dilations:
            raise ValueError("hidden, layers, kernel and dilations must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dilations"] = list(self.dilations)
        return d


class _Head(Module):
    def __init__(self, features: int, cfg: BaselineConfig, rng):
        self.proj = Linear(features, cfg.pred_len * cfg.out_channels, rng)
        self.pred_len = cfg.pred_len
        self.out_channels = cfg.out_channels

    def __call__(self, last: Tensor) -> Tensor:
        out = self.proj(last)
        return nn.reshape(out, (last.shape[0], self.pred_len, self.out_channels))


def _check_input(x: Tensor, cfg: BaselineConfig) -> None:
    if x.ndim != 3 or x.shape[2] != cfg.in_channels:
        raise ShapeError(f"{cfg.kind}: expected [B, L, {cfg.in_channels}], got {x.shape}")


class _RecurrentCell(Module):
    def __init__(self, n_in: int, hidden: int, gates: int, rng):
        self.Wx = parameter((n_in, gates * hidden), rng, scale=1.0 / math.sqrt(hidden))
        self.Wh = parameter((hidden, gates * hidden), rng, scale=1.0 / math.sqrt(hidden))
        self.b = parameter((gates * hidden,), fill=0.0)


class RNNForecaster(Module):
    kind = "rnn"

    def __init__(self, config: BaselineConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        H = config.hidden
        self.cells = [_RecurrentCell(config.in_channels if i == 0 else H, H, 1, rng)
                      for i in range(config.layers)]
        self.head = _Head(H, config, rng)

    def hidden_states(self, x) -> Tensor:
        x = nn.as_tensor(x)
        _check_input(x, self.config)
        for cell in self.cells:
            x = nn.rnn_layer(x, cell.Wx, cell.Wh, cell.b)
        return x

    def __call__(self, x, rng=None, training=False, counter=None) -> Tensor:
        h = self.hidden_states(x)
        return self.head(h[:, -1, :])


class LSTMForecaster(Module):
    kind = "lstm"

    def __init__(self, config: BaselineConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        H = config.hidden
        self.cells = [_RecurrentCell(config.in_channels if i == 0 else H, H, 4, rng)
                      for i in range(config.layers)]
        for cell in self.cells:
            cell.b.data[H : 2 * H] = 1.0  # forget-gate bias starts open
        self.head = _Head(H, config, rng)

    def hidden_states(self, x) -> Tensor:
        x = nn.as_tensor(x)
        _check_input(x, self.config)
        for cell in self.cells:
            x = nn.lstm_layer(x, cell.Wx, cell.Wh, cell.b)
        return x

    def __call__(self, x, rng=None, training=False, counter=None) -> Tensor:
        h = self.hidden_states(x)
        return self.head(h[:, -1, :])


class TCNBlock(Module):
    """``x + conv2(ELU(conv1(x)))`` with causal dilated convolutions."""

    def __init__(self, channels: int, kernel: int, dilation: int, rng):
        self.k1 = parameter((kernel, channels, channels), rng)
        self.b1 = parameter((channels,), fill=0.0)
        self.k2 = parameter((kernel, channels, channels), rng, scale=0.5 / math.sqrt(kernel * channels))
        self.b2 = parameter((channels,), fill=0.0)
        self.dilation = dilation

    def __call__(self, x: Tensor) -> Tensor:
        h = nn.elu(nn.conv1d(x, self.k1, self.b1, padding="causal", dilation=self.dilation))
        h = nn.conv1d(h, self.k2, self.b2, padding="causal", dilation=self.dilation)
        return nn.add(x, h)


class TCNForecaster(Module):
    kind = "tcn"

    def __init__(self, config: BaselineConfig):
        self.config = config
        rng = np.random.default_rng(config.seed)
        H = config.hidden
        self.inp = Linear(config.in_channels, H, rng)
        self.blocks = [TCNBlock(H, config.kernel, d, rng) for d in config.dilations]
        self.head = _Head(H, config, rng)

    @property
    def receptive_field(self) -> int:
        return 1 + sum(2 * (self.config.kernel - 1) * d for d in self.config.dilations)

    def block_outputs(self, x) -> list[Tensor]:
        x = nn.as_tensor(x)
        _check_input(x, self.config)
        h = self.inp(x)
        outs = []
        for block in self.blocks:
            h = block(h)
            outs.append(h)
        return outs

    def __call__(self, x, rng=None, training=False, counter=None) -> Tensor:
        return self.head(self.block_outputs(x)[-1][:, -1, :])


def build_baseline(config: BaselineConfig) -> Module:
    return {"rnn": RNNForecaster, "lstm": LSTMForecaster, "tcn": TCNForecaster}[config.kind](config)


def rnn_forward(model: RNNForecaster, x) -> Tensor:
    return model(x)


def lstm_forward(model: LSTMForecaster, x) -> Tensor:
    return model(x)


def tcn_forward(model: TCNForecaster, x) -> Tensor:
    return model(x)


def baseline_param_count(config: BaselineConfig) -> int:
    H, I, P = config.hidden, config.in_channels, config.pred_len * config.out_channels
    head = H * P + P
    if config.kind == "tcn":
        return I * H + H + len(config.dilations) * 2 * (config.kernel * H * H + H) + head
    gates = 4 if config.kind == "lstm" else 1
    total = 0
    for i in range(config.layers):
        n_in = I if i == 0 else H
        total += gates * H * (n_in + H + 1)
    return total + head


def match_capacity(config: BaselineConfig, target_params: int, max_hidden: int = 1024) -> BaselineConfig:
    """Copy of ``config`` with the hidden width whose parameter count is closest to ``target_params``.

    Closeness is measured on a log scale, so the result is within 2x whenever
    any width can achieve that.
    """
    best_h, best_gap = config.hidden, float("inf")
    for h in range(1, max_hidden + 1):
        trial = BaselineConfig(**{**config.to_dict(), "hidden": h})
        gap = abs(math.log(baseline_param_count(trial) / target_params))
        if gap < best_gap:
            best_h, best_gap = h, gap
    return BaselineConfig(**{**config.to_dict(), "hidden": best_h})
