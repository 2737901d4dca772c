"""The three next-token networks and their parameter bookkeeping.

Inputs are windows of vocabulary indices ``(B, L)`` (``-1`` = padding) or
the equivalent one-hot arrays ``(B, L, |V|)``.  All forwards return logits
for the token following the window, shape ``(B, |V|)``.
"""

from collections import OrderedDict
from typing import Optional

import numpy as np

from ..errors import ShapeMismatch
from ..rng import INIT, make_rng
from ..tensor import core as T
from ..tensor.core import Tensor
from ..tensor.params import ParamSet
from . import layers as Lyr
from .config import ModelConfig


def as_indices(window, vocab: int) -> np.ndarray:
    """Index form of a window batch; accepts indices or one-hot, with or without batch axis."""
    w = np.asarray(window)
    if w.dtype.kind == "f":
        if w.shape[-1] != vocab:
            raise ShapeMismatch(f"one-hot width {w.shape[-1]} does not match vocabulary {vocab}")
        idx = np.where(w.any(axis=-1), w.argmax(axis=-1), -1)
    elif w.dtype.kind in "iu":
        idx = w.astype(np.int64)
    else:
        raise ShapeMismatch(f"unsupported window dtype {w.dtype}")
    if idx.ndim == 1:
        idx = idx[None, :]
    if idx.ndim != 2:
        raise ShapeMismatch(f"window must be (L,) or (B, L), got {idx.shape}")
    if idx.size and idx.max() >= vocab:
        raise ShapeMismatch(f"index {idx.max()} outside vocabulary of {vocab}")
    return idx


# construction -----------------------------------------------------------------
def build_model(cfg: ModelConfig, seed: int = 1) -> ParamSet:
    """Initialize parameters for ``cfg`` from the seeded INIT stream."""
    rng = make_rng(seed, INIT)
    ps = ParamSet()
    width = cfg.width
    if cfg.use_embedding:
        Lyr.init_dense(ps, "embed", cfg.vocab, cfg.d_model, rng)
    if cfg.variant == "transformer":
        for i in range(cfg.enc_layers):
            _init_block(ps, f"dec{i}", cfg, width, rng)
        Lyr.init_dense(ps, "out", width, cfg.vocab, rng)
        return ps
    if cfg.variant == "hybrid":
        for i in range(cfg.enc_layers):
            _init_block(ps, f"enc{i}", cfg, width, rng)
    n_in = width
    for i in range(cfg.lstm_layers):
        Lyr.init_lstm(ps, f"lstm{i}", n_in, cfg.lstm_units, rng, regularized=(i == 0))
        if i < cfg.lstm_layers - 1:
            Lyr.init_batchnorm(ps, f"bn{i}", cfg.lstm_units)
        n_in = cfg.lstm_units
    Lyr.init_dense(ps, "out", cfg.lstm_units, cfg.vocab, rng)
    return ps


def _init_block(ps, name, cfg, width, rng):
    Lyr.init_attention(ps, f"{name}.attn", width, cfg.heads, cfg.head_dim, rng)
    Lyr.init_layernorm(ps, f"{name}.ln1", width)
    Lyr.init_ffn(ps, f"{name}.ffn", width, cfg.d_ff, rng)
    Lyr.init_layernorm(ps, f"{name}.ln2", width)


# forward passes ------------------------------------------------------------------
def _embed(ps, cfg, idx, positional: bool) -> Tensor:
    if cfg.use_embedding:
        h = Lyr.embed(ps, "embed", idx)
    else:
        h = T.one_hot(idx, cfg.vocab, dtype=T.get_default_dtype())
    if positional:
        h = T.add(h, Tensor(Lyr.positional_encoding(idx.shape[1], cfg.width), dtype=h.dtype))
    return h


def _ln(ps, name, x, eps):
    return Lyr.layer_norm(x, ps[f"{name}.gamma"], ps[f"{name}.beta"], eps)


def _lstm_head(ps, cfg, h, train, rng, rate) -> Tensor:
    for i in range(cfg.lstm_layers):
        last = i == cfg.lstm_layers - 1
        h = Lyr.lstm_layer(ps, f"lstm{i}", h, return_sequences=not last)
        if not last:
            h = Lyr.batch_norm(ps, f"bn{i}", h, train, cfg.bn_momentum, cfg.bn_eps)
    h = T.dropout(h, rate, rng, train)
    return Lyr.dense(ps, "out", h)


def forward_lstm_model(ps: ParamSet, cfg: ModelConfig, window, train: bool = False,
                       rng: Optional[np.random.Generator] = None) -> Tensor:
    idx = as_indices(window, cfg.vocab)
    h = _embed(ps, cfg, idx, positional=cfg.use_positional_encoding)
    return _lstm_head(ps, cfg, h, train, rng, cfg.dropout)


def forward_transformer(ps: ParamSet, cfg: ModelConfig, window, train: bool = False,
                        rng: Optional[np.random.Generator] = None, return_states: bool = False):
    """Post-norm causal decoder stack; logits from the last position.

    With ``return_states`` also returns every sublayer output ``(B, L, D)``
    in order, for inspecting per-position behaviour.
    """
    idx = as_indices(window, cfg.vocab)
    h = _embed(ps, cfg, idx, positional=cfg.use_positional_encoding)
    states = [h]
    for i in range(cfg.enc_layers):
        name = f"dec{i}"
        a = Lyr.attention(ps, f"{name}.attn", h, cfg.heads, causal=True)
        h = _ln(ps, f"{name}.ln1", T.add(h, T.dropout(a, cfg.dropout, rng, train)), cfg.layernorm_eps)
        states.append(h)
        f = Lyr.ffn(ps, f"{name}.ffn", h)
        h = _ln(ps, f"{name}.ln2", T.add(h, T.dropout(f, cfg.dropout, rng, train)), cfg.layernorm_eps)
        states.append(h)
    logits = Lyr.dense(ps, "out", h[:, -1, :])
    return (logits, states) if return_states else logits


def encode_hybrid(ps: ParamSet, cfg: ModelConfig, idx, train=False, rng=None) -> Tensor:
    """Pre-norm, non-causal encoder stack of the hybrid model."""
    h = _embed(ps, cfg, idx, positional=cfg.use_positional_encoding)
    for i in range(cfg.enc_layers):
        name = f"enc{i}"
        a = Lyr.attention(ps, f"{name}.attn", _ln(ps, f"{name}.ln1", h, cfg.layernorm_eps),
                          cfg.heads, causal=False)
        h = T.add(h, T.dropout(a, cfg.dropout, rng, train))
        f = Lyr.ffn(ps, f"{name}.ffn", _ln(ps, f"{name}.ln2", h, cfg.layernorm_eps))
        h = T.add(h, T.dropout(f, cfg.dropout, rng, train))
    return h


def forward_hybrid(ps: ParamSet, cfg: ModelConfig, window, train: bool = False,
                   rng: Optional[np.random.Generator] = None) -> Tensor:
    idx = as_indices(window, cfg.vocab)
    h = encode_hybrid(ps, cfg, idx, train, rng)
    return _lstm_head(ps, cfg, h, train, rng, cfg.decoder_dropout)


_FORWARDS = {"lstm": forward_lstm_model, "transformer": forward_transformer, "hybrid": forward_hybrid}


def forward(ps: ParamSet, cfg: ModelConfig, window, train: bool = False, rng=None) -> Tensor:
    return _FORWARDS[cfg.variant](ps, cfg, window, train=train, rng=rng)


def l2_term(ps: ParamSet, cfg: ModelConfig) -> Tensor:
    return Lyr.l2_penalty(ps, cfg.l2_lambda)


# parameter counts --------------------------------------------------------------------
def layer_param_counts(ps: ParamSet) -> "OrderedDict[str, int]":
    """Instantiated parameter count per top-level layer (buffers included)."""
    out = OrderedDict()
    entries = [(k, t.size) for k, t in ps.params.items()] + [(k, b.size) for k, b in ps.buffers.items()]
    for name, n in entries:
        top = name.split(".")[0]
        out[top] = out.get(top, 0) + n
    return out


def expected_param_counts(cfg: ModelConfig) -> "OrderedDict[str, int]":
    """Closed-form parameter count per top-level layer.

    dense ``n_in*n_out + n_out``; LSTM ``4u(n_in + u + 1)``; batch norm
    ``4w`` (scale, offset, moving mean and variance); attention
    ``3(w*h*k + h*k) + h*k*w + w`` for width ``w``, ``h`` heads of size ``k``;
    each attention block adds two layer norms ``2*2w`` and a feed-forward
    ``2*w*d_ff + d_ff + w``.
    """
    out = OrderedDict()
    w = cfg.width
    if cfg.use_embedding:
        out["embed"] = cfg.vocab * cfg.d_model + cfg.d_model
    inner = cfg.heads * cfg.head_dim
    block = 3 * (w * inner + inner) + inner * w + w + 4 * w + 2 * w * cfg.d_ff + cfg.d_ff + w
    if cfg.variant == "transformer":
        for i in range(cfg.enc_layers):
            out[f"dec{i}"] = block
        out["out"] = w * cfg.vocab + cfg.vocab
        return out
    if cfg.variant == "hybrid":
        for i in range(cfg.enc_layers):
            out[f"enc{i}"] = block
    u, n_in = cfg.lstm_units, w
    for i in range(cfg.lstm_layers):
        out[f"lstm{i}"] = 4 * u * (n_in + u + 1)
        if i < cfg.lstm_layers - 1:
            out[f"bn{i}"] = 4 * u
        n_in = u
    out["out"] = u * cfg.vocab + cfg.vocab
    return out
