"""Layer primitives with hand-written backward passes.

Shapes follow a time-major-last convention: sequences are ``[B, L, C]``.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .tensor import DTYPE, Tensor, as_tensor, make_result, unbroadcast

LAYER_NORM_EPS = 1e-5


def dense(x: Tensor, W: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map over the last axis: ``y = x @ W + b``."""
    x, W = as_tensor(x), as_tensor(W)
    if W.ndim != 2 or x.shape[-1] != W.shape[0]:
        raise ShapeError(f"dense: input {x.shape} incompatible with weight {W.shape}")
    if b is not None and b.shape != (W.shape[1],):
        raise ShapeError(f"dense: bias {b.shape} != ({W.shape[1]},)")
    y = x.data @ W.data
    if b is not None:
        y = y + b.data

    def backward(g):
        flat_x = x.data.reshape(-1, W.shape[0])
        flat_g = g.reshape(-1, W.shape[1])
        gx = g @ W.data.T
        gW = flat_x.T @ flat_g
        grads = [gx, gW]
        if b is not None:
            grads.append(flat_g.sum(axis=0))
        return grads

    parents = (x, W) if b is None else (x, W, b)
    return make_result(y, parents, backward)


def _conv_pads(k: int, dilation: int, padding: str) -> tuple[int, int]:
    span = (k - 1) * dilation
    if padding == "same":
        if k % 2 == 0:
            raise ShapeError("same padding needs an odd kernel size")
        return span // 2, span // 2
    if padding == "causal":
        return span, 0
    raise ShapeError(f"unknown padding {padding!r}")


def conv1d(
    x: Tensor,
    kernel: Tensor,
    bias: Tensor | None = None,
    padding: str = "same",
    dilation: int = 1,
) -> Tensor:
    """Cross-correlation along time with zero padding.

    ``x`` is ``[B, L, c]`` and ``kernel`` is ``[k, c, cout]``. ``padding`` is
    ``"same"`` (symmetric) or ``"causal"`` (all padding on the left, so output
    ``t`` only sees inputs ``<= t``).
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    if x.ndim != 3 or kernel.ndim != 3 or kernel.shape[1] != x.shape[2]:
        raise ShapeError(f"conv1d: input {x.shape} incompatible with kernel {kernel.shape}")
    k, c, cout = kernel.shape
    B, L, _ = x.shape
    left, right = _conv_pads(k, dilation, padding)
    xp = np.pad(x.data, ((0, 0), (left, right), (0, 0)))
    y = np.zeros((B, L, cout), dtype=DTYPE)
    for tap in range(k):
        off = tap * dilation
        y += xp[:, off : off + L, :] @ kernel.data[tap]
    if bias is not None:
        y += bias.data

    def backward(g):
        gxp = np.zeros_like(xp)
        gk = np.zeros_like(kernel.data)
        flat_g = g.reshape(-1, cout)
        for tap in range(k):
            off = tap * dilation
            gxp[:, off : off + L, :] += g @ kernel.data[tap].T
            gk[tap] = xp[:, off : off + L, :].reshape(-1, c).T @ flat_g
        grads = [gxp[:, left : left + L, :], gk]
        if bias is not None:
            grads.append(flat_g.sum(axis=0))
        return grads

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return make_result(y, parents, backward)


def maxpool1d(x: Tensor, window: int = 3, stride: int = 2) -> Tensor:
    """Max pooling over time with ``-inf`` padding of ``window // 2`` per side.

    With the defaults the output length is ``ceil(L / 2)``. Ties go to the
    lowest index, which is also where the gradient is routed.
    """
    x = as_tensor(x)
    B, L, C = x.shape
    pad = window // 2
    xp = np.pad(x.data, ((0, 0), (pad, pad), (0, 0)), constant_values=-np.inf)
    n_out = (L + 2 * pad - window) // stride + 1
    starts = np.arange(n_out) * stride
    windows = xp[:, starts[:, None] + np.arange(window)[None, :], :]  # [B, n_out, window, C]
    arg = np.argmax(windows, axis=2)  # first max wins
    src = starts[None, :, None] + arg - pad  # original time index
    y = np.take_along_axis(windows, arg[:, :, None, :], axis=2)[:, :, 0, :]

    def backward(g):
        gx = np.zeros_like(x.data)
        b_idx = np.arange(B)[:, None, None]
        c_idx = np.arange(C)[None, None, :]
        np.add.at(gx, (b_idx, src, c_idx), g)
        return (gx,)

    return make_result(y, (x,), backward)


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    x = as_tensor(x)
    neg = x.data < 0
    expm = np.expm1(np.minimum(x.data, 0.0))
    y = np.where(neg, alpha * expm, x.data)
    return make_result(y, (x,), lambda g: (g * np.where(neg, alpha * (expm + 1.0), 1.0),))


def tanh(x: Tensor) -> Tensor:
    x = as_tensor(x)
    y = np.tanh(x.data)
    return make_result(y, (x,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    x = as_tensor(x)
    y = _sigmoid(x.data)
    return make_result(y, (x,), lambda g: (g * y * (1.0 - y),))


def softmax_rows(x: Tensor, allowed: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis.

    ``allowed`` is an optional boolean array broadcastable to ``x``; disallowed
    entries get probability exactly 0. Every row must allow at least one entry.
    """
    x = as_tensor(x)
    z = x.data
    if allowed is not None:
        z = np.where(allowed, z, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return make_result(p, (x,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize over the last (feature) axis, then scale and shift."""
    x = as_tensor(x)
    D = x.shape[-1]
    if gain.shape != (D,) or bias.shape != (D,):
        raise ShapeError(f"layer_norm: gain/bias must be ({D},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    y = xhat * gain.data + bias.data

    def backward(g):
        gxhat = g * gain.data
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        flat = g.reshape(-1, D)
        return gx, (flat * xhat.reshape(-1, D)).sum(axis=0), flat.sum(axis=0)

    return make_result(y, (x, gain, bias), backward)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity unless ``training`` and ``p > 0``."""
    if not training or p <= 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an explicit rng")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return make_result(x.data * keep, (x,), lambda g: (g * keep,))


def mse_loss(pred: Tensor, target) -> Tensor:
    """Mean over samples and time steps of the squared vector-norm error.

    The last axis holds the vector components, so for ``[B, T, 3]`` inputs this
    is ``sum ||p - p~||^2 / (B * T)``.
    """
    target = np.asarray(target.data if isinstance(target, Tensor) else target, dtype=DTYPE)
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: {pred.shape} vs {target.shape}")
    diff = pred.data - target
    count = diff.size // diff.shape[-1]
    return make_result(
        np.asarray((diff * diff).sum() / count),
        (pred,),
        lambda g: (g * 2.0 * diff / count,),
    )


# recurrent layers (fused, explicit BPTT)


def rnn_layer(x: Tensor, Wx: Tensor, Wh: Tensor, b: Tensor) -> Tensor:
    """Elman recurrence ``h_t = tanh(x_t Wx + h_{t-1} Wh + b)``, ``h_0 = 0``.

    Returns every hidden state, ``[B, L, H]``.
    """
    x = as_tensor(x)
    B, L, _ = x.shape
    H = Wh.shape[0]
    if Wx.shape != (x.shape[2], H) or Wh.shape != (H, H) or b.shape != (H,):
        raise ShapeError("rnn_layer: weight shapes disagree with input")
    xw = x.data @ Wx.data + b.data
    hs = np.zeros((B, L, H), dtype=DTYPE)
    h = np.zeros((B, H), dtype=DTYPE)
    for t in range(L):
        h = np.tanh(xw[:, t] + h @ Wh.data)
        hs[:, t] = h

    def backward(g):
        gpre = np.zeros_like(hs)
        carry = np.zeros((B, H), dtype=DTYPE)
        for t in range(L - 1, -1, -1):
            gh = g[:, t] + carry
            gpre[:, t] = gh * (1.0 - hs[:, t] ** 2)
            carry = gpre[:, t] @ Wh.data.T
        h_prev = np.concatenate([np.zeros((B, 1, H)), hs[:, :-1]], axis=1)
        flat = gpre.reshape(-1, H)
        return (
            gpre @ Wx.data.T,
            x.data.reshape(-1, x.shape[2]).T @ flat,
            h_prev.reshape(-1, H).T @ flat,
            flat.sum(axis=0),
        )

    return make_result(hs, (x, Wx, Wh, b), backward)


def lstm_layer(x: Tensor, Wx: Tensor, Wh: Tensor, b: Tensor) -> Tensor:
    """Standard LSTM with zero initial states; gate order (input, forget, cell, output).

    ``Wx`` is ``[I, 4H]``, ``Wh`` is ``[H, 4H]``, ``b`` is ``[4H]``. Returns
    every hidden state, ``[B, L, H]``.
    """
    x = as_tensor(x)
    B, L, I = x.shape
    H = Wh.shape[0]
    if Wx.shape != (I, 4 * H) or Wh.shape != (H, 4 * H) or b.shape != (4 * H,):
        raise ShapeError("lstm_layer: weight shapes disagree with input")
    xw = x.data @ Wx.data + b.data
    hs = np.zeros((B, L, H), dtype=DTYPE)
    cs = np.zeros((B, L, H), dtype=DTYPE)
    gates = np.zeros((B, L, 4 * H), dtype=DTYPE)  # post-activation
    h = np.zeros((B, H), dtype=DTYPE)
    c = np.zeros((B, H), dtype=DTYPE)
    for t in range(L):
        z = xw[:, t] + h @ Wh.data
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H : 2 * H])
        gg = np.tanh(z[:, 2 * H : 3 * H])
        o = _sigmoid(z[:, 3 * H :])
        c = f * c + i * gg
        h = o * np.tanh(c)
        gates[:, t] = np.concatenate([i, f, gg, o], axis=1)
        cs[:, t] = c
        hs[:, t] = h

    def backward(g):
        gz = np.zeros_like(gates)
        gh_next = np.zeros((B, H), dtype=DTYPE)
        gc_next = np.zeros((B, H), dtype=DTYPE)
        for t in range(L - 1, -1, -1):
            i, f, gg, o = np.split(gates[:, t], 4, axis=1)
            c_t = cs[:, t]
            c_prev = cs[:, t - 1] if t > 0 else np.zeros((B, H))
            tc = np.tanh(c_t)
            gh = g[:, t] + gh_next
            gc = gc_next + gh * o * (1.0 - tc * tc)
            gz[:, t] = np.concatenate(
                [
                    gc * gg * i * (1.0 - i),
                    gc * c_prev * f * (1.0 - f),
                    gc * i * (1.0 - gg * gg),
                    gh * tc * o * (1.0 - o),
                ],
                axis=1,
            )
            gc_next = gc * f
            gh_next = gz[:, t] @ Wh.data.T
        h_prev = np.concatenate([np.zeros((B, 1, H)), hs[:, :-1]], axis=1)
        flat = gz.reshape(-1, 4 * H)
        return (
            gz @ Wx.data.T,
            x.data.reshape(-1, I).T @ flat,
            h_prev.reshape(-1, H).T @ flat,
            flat.sum(axis=0),
        )

    return make_result(hs, (x, Wx, Wh, b), backward)


__all__ = [
    "dense",
    "conv1d",
    "maxpool1d",
    "elu",
    "tanh",
    "sigmoid",
    "softmax_rows",
    "layer_norm",
    "dropout",
    "mse_loss",
    "rnn_layer",
    "lstm_layer",
    "unbroadcast",
]
