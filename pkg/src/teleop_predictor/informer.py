"""Informer forecaster: ProbSparse attention, distilling encoder, one-pass decoder.

Sparse attention scores every query by the gap between its largest and its
mean scaled dot product over a random subset of keys. Only the top
``u = ceil(c * ln L_Q)`` queries get a full softmax row; the rest output the
mean of the values (the running mean under a causal mask). Between encoder
layers a conv -> ELU -> max-pool stage halves the sequence. The decoder is fed
the last ``label_len`` encoder frames followed by a zero placeholder and emits
the whole ``pred_len`` horizon in a single pass.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import nn_core as nn
from .errors import ShapeError
from .nn_core import Module, Tensor, parameter


@dataclass
class InformerConfig:
    d_model: int = 64
    n_heads: int = 4
    d_ff: int = 128
    enc_layers: int = 2
    dec_layers: int = 1
    enc_len: int = 96
    label_len: int = 48
    pred_len: int = 24
    factor: int = 5  # c in u = ceil(c ln L)
    sample_factor: int = 5
    in_channels: int = 4
    out_channels: int = 3
    dropout: float = 0.05
    lr: float = 1e-4
    batch: int = 32
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.label_len > self.enc_len:
            raise ValueError("label_len must not exceed enc_len")
        for name in ("d_model", "n_heads", "d_ff", "enc_layers", "dec_layers", "enc_len",
                     "label_len", "pred_len", "factor", "sample_factor", "in_channels",
                     "out_channels", "batch", "max_epochs", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def kind(self) -> str:
        return "informer"

    def to_dict(self) -> dict:
        return asdict(self)


# attention


@dataclass
class AttentionCounter:
    """Tally of query-key dot products, the unit of attention cost."""

    score_dots: int = 0


@dataclass
class AttentionBlockIO:
    Q: Tensor
    K: Tensor
    V: Tensor
    u: int | None = None
    causal: bool = False
    sample_count: int | None = None

    def __post_init__(self):
        if self.Q.ndim != 4 or self.K.ndim != 4 or self.V.ndim != 4:
            raise ShapeError("attention expects [B, heads, L, d] tensors")
        if self.Q.shape[-1] != self.K.shape[-1] or self.K.shape[:3] != self.V.shape[:3]:
            raise ShapeError(f"Q {self.Q.shape}, K {self.K.shape}, V {self.V.shape} disagree")
        if self.causal and self.Q.shape[2] != self.K.shape[2]:
            raise ShapeError("causal attention needs L_Q == L_K")
        if self.u is not None and not 1 <= self.u <= self.Q.shape[2]:
            raise ShapeError(f"u={self.u} outside [1, {self.Q.shape[2]}]")


def top_query_count(L_Q: int, factor: float) -> int:
    return min(L_Q, int(math.ceil(factor * math.log(L_Q)))) if L_Q > 1 else 1


def key_sample_count(L_K: int, sample_factor: float) -> int:
    return min(L_K, int(math.ceil(sample_factor * math.log(L_K)))) if L_K > 1 else 1


def _sample_keys(L_Q: int, L_K: int, count: int, rng: np.random.Generator, causal: bool) -> np.ndarray:
    """Key indices ``[L_Q, count]`` drawn with replacement; causal rows stay in ``[0, i]``."""
    if causal:
        hi = np.arange(1, L_Q + 1)[:, None]
        return np.minimum((rng.random((L_Q, count)) * hi).astype(np.int64), hi - 1)
    return rng.integers(0, L_K, size=(L_Q, count))


def _max_minus_mean(s: np.ndarray) -> np.ndarray:
    # written as -mean(s - max) so equal scores give exactly zero
    return -np.mean(s - s.max(axis=-1, keepdims=True), axis=-1)


def sparsity_scores(Q, K, sample_count: int, rng: np.random.Generator | None = None,
                    causal: bool = False, counter: AttentionCounter | None = None) -> np.ndarray:
    """Max-minus-mean of scaled dot products per query, ``[B, h, L_Q]``.

    With ``sample_count >= L_K`` every (allowed) key is used, otherwise each
    query sees its own seeded sample, shared across batch and heads.
    """
    q = Q.data if isinstance(Q, Tensor) else np.asarray(Q, dtype=float)
    k = K.data if isinstance(K, Tensor) else np.asarray(K, dtype=float)
    if q.ndim != 4 or k.ndim != 4 or q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"sparsity_scores: Q {q.shape} and K {k.shape} disagree")
    B, h, L_Q, d = q.shape
    L_K = k.shape[2]
    if causal and L_Q != L_K:
        raise ShapeError("causal scoring needs L_Q == L_K")
    scale = 1.0 / math.sqrt(d)
    if sample_count >= L_K:
        s = (q @ np.swapaxes(k, -1, -2)) * scale
        if counter is not None:
            counter.score_dots += B * h * L_Q * L_K
        if causal:
            allowed = np.tril(np.ones((L_Q, L_K), dtype=bool))
            top = np.where(allowed, s, -np.inf).max(axis=-1, keepdims=True)
            gap = np.where(allowed, s - top, 0.0).sum(axis=-1) / allowed.sum(axis=-1)
            return -gap
        return _max_minus_mean(s)
    if rng is None:
        raise ValueError("sampled sparsity scores need an rng")
    idx = _sample_keys(L_Q, L_K, sample_count, rng, causal)
    k_s = np.take(k, idx.reshape(-1), axis=2).reshape(B, h, L_Q, sample_count, d)
    s = np.einsum("bhqd,bhqsd->bhqs", q, k_s, optimize=True) * scale
    if counter is not None:
        counter.score_dots += B * h * L_Q * sample_count
    return _max_minus_mean(s)


def dense_attention(Q: Tensor, K: Tensor, V: Tensor, causal: bool = False,
                    counter: AttentionCounter | None = None) -> Tensor:
    """Full ``softmax(Q K^T / sqrt(d)) V``."""
    d = Q.shape[-1]
    scores = nn.mul(nn.matmul(Q, nn.transpose(K, (0, 1, 3, 2))), 1.0 / math.sqrt(d))
    if counter is not None:
        counter.score_dots += int(np.prod(scores.shape))
    allowed = np.tril(np.ones((Q.shape[2], K.shape[2]), dtype=bool)) if causal else None
    return nn.matmul(nn.softmax_rows(scores, allowed), V)


def _broadcast_rows(x: Tensor, rows: int) -> Tensor:
    """[..., 1, d] -> [..., rows, d] with a summing backward."""
    shape = x.shape[:-2] + (rows, x.shape[-1])
    return nn.tensor.make_result(
        np.broadcast_to(x.data, shape).copy(), (x,), lambda g: (g.sum(axis=-2, keepdims=True),)
    )


def selected_weights(Q: Tensor, K: Tensor, top: np.ndarray, causal: bool = False) -> Tensor:
    """Softmax rows ``[B, h, u, L_K]`` for the queries at indices ``top``."""
    d = Q.shape[-1]
    scores = nn.mul(nn.matmul(nn.take_rows(Q, top), nn.transpose(K, (0, 1, 3, 2))), 1.0 / math.sqrt(d))
    allowed = (np.arange(K.shape[2])[None, None, None, :] <= top[..., None]) if causal else None
    return nn.softmax_rows(scores, allowed)


def probsparse_attention(io: AttentionBlockIO, rng: np.random.Generator | None = None,
                         factor: float = 5, sample_factor: float = 5,
                         counter: AttentionCounter | None = None,
                         return_selection: bool = False):
    Q, K, V = io.Q, io.K, io.V
    B, h, L_Q, d = Q.shape
    L_K = K.shape[2]
    u = io.u if io.u is not None else top_query_count(L_Q, factor)
    n_sample = io.sample_count if io.sample_count is not None else key_sample_count(L_K, sample_factor)

    if u >= L_Q:
        top = np.broadcast_to(np.arange(L_Q), (B, h, L_Q)).copy()
    else:
        M = sparsity_scores(Q, K, n_sample, rng, causal=io.causal, counter=counter)
        top = np.sort(np.argsort(-M, axis=-1, kind="stable")[..., :u], axis=-1)

    weights = selected_weights(Q, K, top, io.causal)
    if counter is not None:
        counter.score_dots += B * h * top.shape[-1] * L_K
    picked = nn.matmul(weights, V)

    if io.causal:
        base = nn.cumulative_mean(V, axis=2)
    else:
        base = _broadcast_rows(nn.mean(V, axis=2, keepdims=True), L_Q)
    out = nn.scatter_rows(base, top, picked)
    return (out, top) if return_selection else out


# layers


def positional_encoding(length: int, d_model: int) -> np.ndarray:
    pos = np.arange(length)[:, None]
    div = np.power(10000.0, np.arange(0, d_model, 2) / d_model)
    pe = np.zeros((length, d_model))
    pe[:, 0::2] = np.sin(pos / div)
    pe[:, 1::2] = np.cos(pos / div[: d_model // 2])
    return pe


class Embedding(Module):
    def __init__(self, in_channels: int, d_model: int, rng):
        self.W = parameter((in_channels, d_model), rng)
        self.b = parameter((d_model,), fill=0.0)
        self.d_model = d_model

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[-1] != self.W.shape[0]:
            raise ShapeError(f"embed: expected [B, L, {self.W.shape[0]}], got {x.shape}")
        return nn.add(nn.dense(x, self.W, self.b), positional_encoding(x.shape[1], self.d_model))


class LayerNorm(Module):
    def __init__(self, d: int):
        self.gain = parameter((d,), fill=1.0)
        self.bias = parameter((d,), fill=0.0)

    def __call__(self, x: Tensor) -> Tensor:
        return nn.layer_norm(x, self.gain, self.bias)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng, bias: bool = True):
        self.W = parameter((d_in, d_out), rng)
        self.b = parameter((d_out,), fill=0.0) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return nn.dense(x, self.W, self.b)


class MultiHeadAttention(Module):
    def __init__(self, d_model: int, n_heads: int, rng, sparse: bool, causal: bool = False,
                 factor: float = 5, sample_factor: float = 5):
        self.q = Linear(d_model, d_model, rng)
        # a key bias shifts every score in a row equally, so softmax and the
        # sparsity measure are blind to it; leave it out
        self.k = Linear(d_model, d_model, rng, bias=False)
        self.v = Linear(d_model, d_model, rng)
        self.o = Linear(d_model, d_model, rng)
        self.n_heads = n_heads
        self.sparse = sparse
        self.causal = causal
        self.factor = factor
        self.sample_factor = sample_factor
        self.last_selection = None  # query indices kept by the latest sparse call

    def _split(self, x: Tensor) -> Tensor:
        B, L, D = x.shape
        return nn.transpose(nn.reshape(x, (B, L, self.n_heads, D // self.n_heads)), (0, 2, 1, 3))

    def __call__(self, x_q: Tensor, x_kv: Tensor, rng=None, counter=None) -> Tensor:
        Q, K, V = self._split(self.q(x_q)), self._split(self.k(x_kv)), self._split(self.v(x_kv))
        if self.sparse:
            heads, self.last_selection = probsparse_attention(
                AttentionBlockIO(Q, K, V, causal=self.causal), rng, self.factor, self.sample_factor,
                counter, return_selection=True)
        else:
            heads = dense_attention(Q, K, V, causal=self.causal, counter=counter)
        B, _, L, _ = heads.shape
        merged = nn.reshape(nn.transpose(heads, (0, 2, 1, 3)), (B, L, -1))
        return self.o(merged)


class FeedForward(Module):
    def __init__(self, d_model: int, d_ff: int, rng):
        self.up = Linear(d_model, d_ff, rng)
        self.down = Linear(d_ff, d_model, rng)

    def __call__(self, x: Tensor, rng=None, p: float = 0.0, training: bool = False) -> Tensor:
        return self.down(nn.dropout(nn.elu(self.up(x)), p, rng, training))


class EncoderLayer(Module):
    def __init__(self, cfg: InformerConfig, rng):
        self.attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, rng, sparse=True,
                                       factor=cfg.factor, sample_factor=cfg.sample_factor)
        self.norm1 = LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, rng)
        self.norm2 = LayerNorm(cfg.d_model)
        self.p = cfg.dropout

    def __call__(self, x, rng=None, training=False, counter=None):
        a = self.attn(x, x, rng, counter)
        x = self.norm1(nn.add(x, nn.dropout(a, self.p, rng, training)))
        y = self.ff(x, rng, self.p, training)
        return self.norm2(nn.add(x, nn.dropout(y, self.p, rng, training)))


class DistillLayer(Module):
    """conv1d(k=3) -> ELU -> maxpool(3, stride 2): halves the sequence length."""

    def __init__(self, d_model: int, rng):
        self.kernel = parameter((3, d_model, d_model), rng)
        self.bias = parameter((d_model,), fill=0.0)

    def __call__(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[1] < 2 or x.shape[2] != self.kernel.shape[1]:
            raise ShapeError(f"distill: expected [B, L>=2, {self.kernel.shape[1]}], got {x.shape}")
        return nn.maxpool1d(nn.elu(nn.conv1d(x, self.kernel, self.bias)), window=3, stride=2)


class DecoderLayer(Module):
    def __init__(self, cfg: InformerConfig, rng):
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, rng, sparse=True, causal=True,
                                            factor=cfg.factor, sample_factor=cfg.sample_factor)
        self.norm1 = LayerNorm(cfg.d_model)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.n_heads, rng, sparse=False)
        self.norm2 = LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, rng)
        self.norm3 = LayerNorm(cfg.d_model)
        self.p = cfg.dropout

    def __call__(self, x, enc_out, rng=None, training=False, counter=None, capture=None):
        a = self.self_attn(x, x, rng, counter)
        x = self.norm1(nn.add(x, nn.dropout(a, self.p, rng, training)))
        if capture is not None:
            capture.append(x.data.copy())
        c = self.cross_attn(x, enc_out, rng, counter)
        x = self.norm2(nn.add(x, nn.dropout(c, self.p, rng, training)))
        y = self.ff(x, rng, self.p, training)
        return self.norm3(nn.add(x, nn.dropout(y, self.p, rng, training)))


class Informer(Module):
    def __init__(self, config: InformerConfig | None = None):
        cfg = config or InformerConfig()
        self.config = cfg
        rng = np.random.default_rng(cfg.seed)
        self.enc_embed = Embedding(cfg.in_channels, cfg.d_model, rng)
        self.dec_embed = Embedding(cfg.in_channels, cfg.d_model, rng)
        self.encoder_layers = [EncoderLayer(cfg, rng) for _ in range(cfg.enc_layers)]
        self.distill_layers = [DistillLayer(cfg.d_model, rng) for _ in range(cfg.enc_layers - 1)]
        self.enc_norm = LayerNorm(cfg.d_model)
        self.decoder_layers = [DecoderLayer(cfg, rng) for _ in range(cfg.dec_layers)]
        self.dec_norm = LayerNorm(cfg.d_model)
        self.head = Linear(cfg.d_model, cfg.out_channels, rng)

    kind = "informer"

    def _rng(self, rng):
        # a fresh generator per inference call keeps predictions pure
        return np.random.default_rng(self.config.seed) if rng is None else rng

    def encoder_output_length(self) -> int:
        length = self.config.enc_len
        for _ in self.distill_layers:
            length = math.ceil(length / 2)
        return length

    def encode(self, x_enc, rng=None, training=False, counter=None) -> Tensor:
        x_enc = nn.as_tensor(x_enc)
        cfg = self.config
        if x_enc.ndim != 3 or x_enc.shape[1:] != (cfg.enc_len, cfg.in_channels):
            raise ShapeError(f"encoder input must be [B, {cfg.enc_len}, {cfg.in_channels}], got {x_enc.shape}")
        rng = self._rng(rng)
        x = nn.dropout(self.enc_embed(x_enc), cfg.dropout, rng, training)
        for i, layer in enumerate(self.encoder_layers):
            x = layer(x, rng, training, counter)
            if i < len(self.distill_layers):
                x = self.distill_layers[i](x)
        return self.enc_norm(x)

    def decoder_input(self, x_token) -> Tensor:
        x_token = nn.as_tensor(x_token)
        cfg = self.config
        if x_token.ndim != 3 or x_token.shape[1:] != (cfg.label_len, cfg.in_channels):
            raise ShapeError(f"decoder token must be [B, {cfg.label_len}, {cfg.in_channels}], got {x_token.shape}")
        placeholder = np.zeros((x_token.shape[0], cfg.pred_len, cfg.in_channels))
        return nn.concat([x_token, nn.Tensor(placeholder)], axis=1)

    def decode(self, x_token, enc_out: Tensor, rng=None, training=False, counter=None,
               capture: list | None = None) -> Tensor:
        cfg = self.config
        rng = self._rng(rng)
        x = nn.dropout(self.dec_embed(self.decoder_input(x_token)), cfg.dropout, rng, training)
        for layer in self.decoder_layers:
            x = layer(x, enc_out, rng, training, counter, capture)
        out = self.head(self.dec_norm(x))
        return out[:, -cfg.pred_len :, :]

    def __call__(self, x_enc, rng=None, training=False, counter=None) -> Tensor:
        x_enc = nn.as_tensor(x_enc)
        rng = self._rng(rng)
        enc = self.encode(x_enc, rng, training, counter)
        token = x_enc[:, -self.config.label_len :, :]
        return self.decode(token, enc, rng, training, counter)


def embed(model: Informer, x) -> Tensor:
    return model.enc_embed(nn.as_tensor(x))


def distill(layer: DistillLayer, x) -> Tensor:
    return layer(nn.as_tensor(x))


def encoder_forward(model: Informer, x_enc, rng=None, training=False) -> Tensor:
    return model.encode(x_enc, rng, training)


def decoder_forward(model: Informer, x_token, enc_out, rng=None, training=False) -> Tensor:
    return model.decode(x_token, enc_out, rng, training)
