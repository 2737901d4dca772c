"""Building blocks shared by the three networks.

Parameters live in a :class:`ParamSet` under dotted names (``lstm0.W``,
``enc1.attn.Wq``).  Every block comes as an ``init_*`` function that
registers parameters and a functional forward that reads them.

LSTM gate order in the packed kernels is input, forget, cell, output.
"""

import math
from typing import Optional

import numpy as np

from ..errors import ShapeMismatch
from ..tensor import core as T
from ..tensor.core import Tensor
from ..tensor.params import ParamSet


# initializers ---------------------------------------------------------------
def glorot_uniform(rng, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def orthogonal(rng, rows: int, cols: int) -> np.ndarray:
    flat = rng.normal(size=(max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    return q if rows >= cols else q.T


# dense ------------------------------------------------------------------------
def init_dense(ps: ParamSet, name: str, n_in: int, n_out: int, rng, regularized=False):
    ps.add(f"{name}.W", glorot_uniform(rng, n_in, n_out), regularized=regularized)
    ps.add(f"{name}.b", np.zeros(n_out))


def dense(ps: ParamSet, name: str, x) -> Tensor:
    return T.linear(x, ps[f"{name}.W"], ps[f"{name}.b"])


def embed(ps: ParamSet, name: str, indices: np.ndarray) -> Tensor:
    """Dense layer applied to one-hot rows, computed as a row lookup.

    Index ``-1`` (padding) is the all-zero one-hot row, so it maps to the bias.
    """
    W, b = ps[f"{name}.W"], ps[f"{name}.b"]
    idx = np.asarray(indices)
    if (idx < 0).any():
        pad_row = Tensor(np.zeros((1, W.shape[1]), dtype=W.dtype))
        W = T.concat([W, pad_row], axis=0)
        idx = np.where(idx < 0, W.shape[0] - 1, idx)
    return T.add(T.embedding_lookup(W, idx), b)


# LSTM -----------------------------------------------------------------------
def init_lstm(ps: ParamSet, name: str, n_in: int, units: int, rng, regularized=False):
    ps.add(f"{name}.W", glorot_uniform(rng, n_in, 4 * units), regularized=regularized)
    ps.add(f"{name}.U", orthogonal(rng, units, 4 * units))
    bias = np.zeros(4 * units)
    bias[units:2 * units] = 1.0  # forget gate
    ps.add(f"{name}.b", bias)


def lstm_cell(x_t, h_prev, c_prev, W, U, b):
    """One LSTM step from composed primitives; returns ``(h_t, c_t)``."""
    x_t, h_prev, c_prev = T.as_tensor(x_t), T.as_tensor(h_prev), T.as_tensor(c_prev)
    units = h_prev.shape[-1]
    if W.shape[-1] != 4 * units or U.shape != (units, 4 * units) or x_t.shape[-1] != W.shape[0]:
        raise ShapeMismatch(f"lstm_cell: x {x_t.shape}, h {h_prev.shape}, W {W.shape}, U {U.shape}")
    z = T.add(T.add(T.matmul(x_t, W), T.matmul(h_prev, U)), b)
    i = T.sigmoid(z[..., :units])
    f = T.sigmoid(z[..., units:2 * units])
    g = T.tanh(z[..., 2 * units:3 * units])
    o = T.sigmoid(z[..., 3 * units:])
    c = T.add(T.mul(f, c_prev), T.mul(i, g))
    h = T.mul(o, T.tanh(c))
    return h, c


def _gate_affine(units: int, dtype):
    """Constants turning one tanh call into the four gate activations.

    sigmoid(z) = 0.5 * tanh(0.5 * z) + 0.5, so with per-column ``scale`` and
    ``shift`` the packed activations are ``tanh(z * scale) * scale + shift``
    (scale 0.5 and shift 0.5 for i/f/o, scale 1 and shift 0 for the cell gate).
    """
    scale = np.full(4 * units, 0.5, dtype=dtype)
    scale[2 * units:3 * units] = 1.0
    shift = np.full(4 * units, 0.5, dtype=dtype)
    shift[2 * units:3 * units] = 0.0
    return scale, shift


def lstm_sequence(x, W, U, b, return_sequences: bool = True) -> Tensor:
    """Run an LSTM over ``x`` of shape ``(B, T, D)`` from zero state.

    A single graph node with a hand-written backward pass through time;
    numerically the same recurrence as repeated :func:`lstm_cell` calls.
    Returns ``(B, T, U)`` or the final state ``(B, U)``.
    """
    x = T.as_tensor(x)
    if x.ndim != 3:
        raise ShapeMismatch(f"lstm_sequence expects (B, T, D), got {x.shape}")
    B, steps, D = x.shape
    units = U.shape[0]
    if W.shape != (D, 4 * units) or U.shape != (units, 4 * units) or b.shape != (4 * units,):
        raise ShapeMismatch(f"lstm_sequence: x {x.shape}, W {W.shape}, U {U.shape}, b {b.shape}")
    dt = x.dtype
    scale, shift = _gate_affine(units, dt)
    xw = (x.data.reshape(-1, D) @ W.data).reshape(B, steps, 4 * units) + b.data
    hs = np.zeros((B, steps + 1, units), dtype=dt)
    cs = np.zeros((B, steps + 1, units), dtype=dt)
    tcs = np.empty((B, steps, units), dtype=dt)
    gates = np.empty((B, steps, 4 * units), dtype=dt)
    Ud = U.data
    for t in range(steps):
        z = xw[:, t] + hs[:, t] @ Ud
        a = np.tanh(z * scale) * scale + shift
        gates[:, t] = a
        c = a[:, units:2 * units] * cs[:, t] + a[:, :units] * a[:, 2 * units:3 * units]
        cs[:, t + 1] = c
        tc = np.tanh(c)
        tcs[:, t] = tc
        hs[:, t + 1] = a[:, 3 * units:] * tc
    out = hs[:, 1:].copy() if return_sequences else hs[:, -1].copy()

    def backward(g):
        # derivative of each activation w.r.t. its pre-activation
        deriv = gates * (1.0 - gates)
        cell = gates[:, :, 2 * units:3 * units]
        deriv[:, :, 2 * units:3 * units] = 1.0 - cell * cell
        dz_all = np.empty_like(gates)
        dh_next = np.zeros((B, units), dtype=dt)
        dc_next = np.zeros((B, units), dtype=dt)
        for t in range(steps - 1, -1, -1):
            if return_sequences:
                dh = g[:, t] + dh_next
            elif t == steps - 1:
                dh = g + dh_next
            else:
                dh = dh_next
            a = gates[:, t]
            tc = tcs[:, t]
            o = a[:, 3 * units:]
            dc = dh * o * (1.0 - tc * tc) + dc_next
            d_act = np.concatenate([dc * a[:, 2 * units:3 * units], dc * cs[:, t],
                                    dc * a[:, :units], dh * tc], axis=1)
            dz = d_act * deriv[:, t]
            dz_all[:, t] = dz
            dc_next = dc * a[:, units:2 * units]
            dh_next = dz @ Ud.T
        flat = dz_all.reshape(-1, 4 * units)
        if W.requires_grad:
            T._accum(W, x.data.reshape(-1, D).T @ flat)
        if b.requires_grad:
            T._accum(b, flat.sum(axis=0))
        if U.requires_grad:
            T._accum(U, hs[:, :-1].reshape(-1, units).T @ flat)
        if x.requires_grad:
            T._accum(x, (flat @ W.data.T).reshape(B, steps, D))

    return T._result(out, (x, W, U, b), backward)


def lstm_layer(ps: ParamSet, name: str, x, return_sequences=True) -> Tensor:
    return lstm_sequence(x, ps[f"{name}.W"], ps[f"{name}.U"], ps[f"{name}.b"], return_sequences)


# normalization ------------------------------------------------------------------
def init_layernorm(ps: ParamSet, name: str, width: int):
    ps.add(f"{name}.gamma", np.ones(width))
    ps.add(f"{name}.beta", np.zeros(width))


def layer_norm(x, gamma, beta, eps: float) -> Tensor:
    """Normalize over the last axis."""
    mu = T.mean(x, axis=-1, keepdims=True)
    xc = T.sub(x, mu)
    var = T.mean(T.mul(xc, xc), axis=-1, keepdims=True)
    return T.add(T.mul(T.div(xc, T.sqrt(T.add(var, eps))), gamma), beta)


def init_batchnorm(ps: ParamSet, name: str, width: int):
    ps.add(f"{name}.gamma", np.ones(width))
    ps.add(f"{name}.beta", np.zeros(width))
    ps.add_buffer(f"{name}.moving_mean", np.zeros(width))
    ps.add_buffer(f"{name}.moving_var", np.ones(width))


def batch_norm(ps: ParamSet, name: str, x, train: bool, momentum: float, eps: float) -> Tensor:
    """Per-feature normalization over every leading axis (batch and time).

    Training uses the batch statistics (biased variance) and updates the
    moving averages; inference uses the moving averages.
    """
    gamma, beta = ps[f"{name}.gamma"], ps[f"{name}.beta"]
    mm, mv = ps.buffers[f"{name}.moving_mean"], ps.buffers[f"{name}.moving_var"]
    x = T.as_tensor(x)
    axes = tuple(range(x.ndim - 1))
    if not train:
        centered = T.sub(x, Tensor(mm, dtype=x.dtype))
        inv_std = Tensor(1.0 / np.sqrt(mv + eps), dtype=x.dtype)
        return T.add(T.mul(centered, T.mul(gamma, inv_std)), beta)
    mu = T.mean(x, axis=axes, keepdims=True)
    xc = T.sub(x, mu)
    var = T.mean(T.mul(xc, xc), axis=axes, keepdims=True)
    mm *= momentum
    mm += (1.0 - momentum) * mu.data.reshape(-1)
    mv *= momentum
    mv += (1.0 - momentum) * var.data.reshape(-1)
    return T.add(T.mul(T.div(xc, T.sqrt(T.add(var, eps))), gamma), beta)


# attention ----------------------------------------------------------------------
def init_attention(ps: ParamSet, name: str, width: int, heads: int, head_dim: int, rng):
    inner = heads * head_dim
    for proj in ("q", "k", "v"):
        ps.add(f"{name}.W{proj}", glorot_uniform(rng, width, inner))
        ps.add(f"{name}.b{proj}", np.zeros(inner))
    ps.add(f"{name}.Wo", glorot_uniform(rng, inner, width))
    ps.add(f"{name}.bo", np.zeros(width))


def causal_mask(length: int) -> np.ndarray:
    """``mask[i, j]`` is True where position ``i`` may attend to ``j`` (``j <= i``)."""
    return np.tril(np.ones((length, length), dtype=bool))


def multi_head_attention(x, Wq, bq, Wk, bk, Wv, bv, Wo, bo, heads: int, causal: bool,
                         return_weights: bool = False):
    """Scaled dot-product self-attention over ``x`` of shape ``(B, L, D)``."""
    x = T.as_tensor(x)
    if x.ndim != 3 or x.shape[-1] != Wq.shape[0]:
        raise ShapeMismatch(f"attention input {x.shape} does not match projection {Wq.shape}")
    inner = Wq.shape[1]
    if inner % heads:
        raise ShapeMismatch(f"projection width {inner} is not divisible by {heads} heads")
    B, L, _ = x.shape
    hd = inner // heads

    def split(t):
        return T.transpose(T.reshape(t, (B, L, heads, hd)), (0, 2, 1, 3))

    q = split(T.linear(x, Wq, bq))
    k = split(T.linear(x, Wk, bk))
    v = split(T.linear(x, Wv, bv))
    scores = T.mul(T.matmul(q, T.swapaxes(k, -1, -2)), 1.0 / math.sqrt(hd))
    if causal:
        weights = T.masked_softmax(scores, causal_mask(L))
    else:
        weights = T.softmax(scores)
    ctx = T.reshape(T.transpose(T.matmul(weights, v), (0, 2, 1, 3)), (B, L, inner))
    out = T.linear(ctx, Wo, bo)
    return (out, weights) if return_weights else out


def attention(ps: ParamSet, name: str, x, heads: int, causal: bool) -> Tensor:
    p = [ps[f"{name}.{k}"] for k in ("Wq", "bq", "Wk", "bk", "Wv", "bv", "Wo", "bo")]
    return multi_head_attention(x, *p, heads=heads, causal=causal)


def positional_encoding(length: int, width: int, dtype=np.float64) -> np.ndarray:
    """Sinusoidal table: sin on even feature indices, cos on odd ones."""
    pos = np.arange(length, dtype=np.float64)[:, None]
    two_i = (np.arange(width) // 2 * 2).astype(np.float64)
    angle = pos / np.power(10000.0, two_i / width)
    pe = np.where(np.arange(width) % 2 == 0, np.sin(angle), np.cos(angle))
    return pe.astype(dtype)


# feed-forward -------------------------------------------------------------------------
def init_ffn(ps: ParamSet, name: str, width: int, d_ff: int, rng):
    init_dense(ps, f"{name}.1", width, d_ff, rng)
    init_dense(ps, f"{name}.2", d_ff, width, rng)


def ffn(ps: ParamSet, name: str, x) -> Tensor:
    return dense(ps, f"{name}.2", T.relu(dense(ps, f"{name}.1", x)))


def l2_penalty(ps: ParamSet, lam: float, names: Optional[list] = None) -> Tensor:
    """``lam * sum(w**2)`` over the regularized kernels."""
    names = sorted(ps.regularized) if names is None else names
    if lam == 0 or not names:
        return Tensor(0.0)
    total = None
    for n in names:
        w = ps[n]
        term = T.tsum(T.mul(w, w))
        total = term if total is None else T.add(total, term)
    return T.mul(total, lam)
