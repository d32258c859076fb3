"""Reusable model layers.

Multi-head attention, sinusoidal positional encoding, position-wise
feedforward, transformer encoder/decoder blocks, an LSTM cell, and additive
(Bahdanau) attention.  Layers are parameter containers; their forward methods
are pure given the active tape, so a layer can be shared read-only across
threads at inference time.

Residual placement follows the block equations ``m = LayerNorm(MultiAttn(x)) + x``
and ``h = LayerNorm(FFNN(m)) + m`` (``norm_style="paper"``); the conventional
post-norm ordering is available as ``norm_style="post"``.
"""

from __future__ import annotations

import math
from collections import OrderedDict

import numpy as np

from .errors import ContractError
from .rng import SplitMix64
from .tensor import (
    Tensor,
    add,
    add_const,
    concat,
    dropout,
    layer_norm,
    linear,
    masked_softmax,
    matmul,
    mul,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax,
    tanh,
    transpose,
)

INIT_SIGMA = 0.1  # Gaussian init scale for weights and embeddings


def init_weight(rng: SplitMix64, shape) -> Tensor:
    return Tensor(rng.normal(shape, INIT_SIGMA))


def prefixed(prefix: str, params: "OrderedDict[str, Tensor]") -> "OrderedDict[str, Tensor]":
    return OrderedDict((f"{prefix}.{k}", v) for k, v in params.items())


def causal_mask(size: int) -> np.ndarray:
    """(size, size) boolean mask; position i may attend to positions <= i."""
    return np.tril(np.ones((size, size), dtype=bool))


class Norm:
    """Learned gain/bias pair applied after last-axis normalization."""

    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = Tensor(np.ones(dim))
        self.bias = Tensor(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, self.eps)

    def parameters(self):
        return OrderedDict(gain=self.gain, bias=self.bias)


class MultiHeadAttention:
    """Scaled dot-product attention over ``num_heads`` projections.

    Accepts (seq, dim) or (batch, seq, dim) inputs; masks must broadcast to
    the (batch, heads, len_q, len_k) score tensor.  Returns the projected
    output together with the per-head weight array.
    """

    def __init__(self, model_dim: int, num_heads: int, rng: SplitMix64):
        if model_dim % num_heads != 0:
            raise ContractError(f"model_dim {model_dim} not divisible by num_heads {num_heads}")
        self.model_dim = model_dim
        self.num_heads = num_heads
        self.head_dim = model_dim // num_heads
        self.w_q = init_weight(rng, (model_dim, model_dim))
        self.w_k = init_weight(rng, (model_dim, model_dim))
        self.w_v = init_weight(rng, (model_dim, model_dim))
        self.w_o = init_weight(rng, (model_dim, model_dim))
        self.b_q = Tensor(np.zeros(model_dim))
        self.b_k = Tensor(np.zeros(model_dim))
        self.b_v = Tensor(np.zeros(model_dim))
        self.b_o = Tensor(np.zeros(model_dim))

    def parameters(self):
        return OrderedDict(
            w_q=self.w_q, b_q=self.b_q, w_k=self.w_k, b_k=self.b_k,
            w_v=self.w_v, b_v=self.b_v, w_o=self.w_o, b_o=self.b_o,
        )

    def _split(self, x: Tensor) -> Tensor:
        b, t, _ = x.shape
        return transpose(reshape(x, (b, t, self.num_heads, self.head_dim)), (0, 2, 1, 3))

    def project_q(self, q: Tensor) -> Tensor:
        return self._split(linear(q, self.w_q, self.b_q))

    def project_k(self, k: Tensor) -> Tensor:
        return self._split(linear(k, self.w_k, self.b_k))

    def project_v(self, v: Tensor) -> Tensor:
        return self._split(linear(v, self.w_v, self.b_v))

    def attend(self, qh: Tensor, kh: Tensor, vh: Tensor, mask: np.ndarray | None):
        """Attention over already-projected per-head tensors (B,H,T,hd)."""
        return self.attend_kt(qh, transpose(kh, (0, 1, 3, 2)), vh, mask)

    def attend_kt(self, qh: Tensor, kt: Tensor, vh: Tensor, mask: np.ndarray | None):
        """Same as attend but takes keys pre-transposed to (B,H,hd,T).

        Decoding caches keys in this layout so that growing the cache is a
        single concatenation and no per-step transpose of the whole prefix.
        """
        scores = scale(matmul(qh, kt), 1.0 / math.sqrt(self.head_dim))
        if mask is None:
            weights = softmax(scores, axis=-1)
        else:
            weights = masked_softmax(scores, mask, axis=-1)
        ctx = matmul(weights, vh)
        b, _, tq, _ = ctx.shape
        merged = reshape(transpose(ctx, (0, 2, 1, 3)), (b, tq, self.model_dim))
        return linear(merged, self.w_o, self.b_o), weights.data

    def __call__(self, q: Tensor, k: Tensor, v: Tensor, mask: np.ndarray | None = None):
        squeeze = q.ndim == 2
        if squeeze:
            q = reshape(q, (1, *q.shape))
            k = reshape(k, (1, *k.shape))
            v = reshape(v, (1, *v.shape))
        out, weights = self.attend(self.project_q(q), self.project_k(k), self.project_v(v), mask)
        if squeeze:
            out = reshape(out, out.shape[1:])
            weights = weights[0]
        return out, weights


class FeedForward:
    """Two linear maps with a ReLU between; inner width is 4x the model dim."""

    def __init__(self, model_dim: int, rng: SplitMix64, inner_dim: int | None = None):
        inner = inner_dim or 4 * model_dim
        self.w1 = init_weight(rng, (model_dim, inner))
        self.b1 = Tensor(np.zeros(inner))
        self.w2 = init_weight(rng, (inner, model_dim))
        self.b2 = Tensor(np.zeros(model_dim))

    def __call__(self, x: Tensor) -> Tensor:
        return linear(relu(linear(x, self.w1, self.b1)), self.w2, self.b2)

    def parameters(self):
        return OrderedDict(w1=self.w1, b1=self.b1, w2=self.w2, b2=self.b2)


class PositionalEncoder:
    """Parameter-free sinusoid table sin/cos(pos / 10000^(2i/d))."""

    def __init__(self, max_len: int, model_dim: int):
        pos = np.arange(max_len, dtype=np.float64)[:, None]
        i = np.arange(0, model_dim, 2, dtype=np.float64)
        angle = pos / np.power(10000.0, i / model_dim)
        table = np.zeros((max_len, model_dim))
        table[:, 0::2] = np.sin(angle)
        table[:, 1::2] = np.cos(angle[:, : model_dim // 2])
        self.table = table
        self.max_len = max_len
        self.model_dim = model_dim

    def encode(self, embeddings: Tensor, start_pos: int = 0) -> Tensor:
        seq_len = embeddings.shape[-2]
        if start_pos + seq_len > self.max_len:
            raise ContractError(
                f"sequence of length {seq_len} at position {start_pos} exceeds table length {self.max_len}"
            )
        return add_const(embeddings, self.table[start_pos:start_pos + seq_len])


def residual_sublayer(x: Tensor, sub_out: Tensor, norm: Norm, p: float, norm_style: str) -> Tensor:
    sub_out = dropout(sub_out, p)
    if norm_style == "paper":
        return add(norm(sub_out), x)
    if norm_style == "post":
        return norm(add(x, sub_out))
    raise ContractError(f"unknown norm_style {norm_style!r}")


class TransformerEncoderBlock:
    def __init__(self, model_dim: int, num_heads: int, rng: SplitMix64,
                 dropout_p: float = 0.0, norm_style: str = "paper"):
        self.attn = MultiHeadAttention(model_dim, num_heads, rng)
        self.ffnn = FeedForward(model_dim, rng)
        self.norm1 = Norm(model_dim)
        self.norm2 = Norm(model_dim)
        self.dropout_p = dropout_p
        self.norm_style = norm_style

    def __call__(self, x: Tensor, key_mask: np.ndarray | None = None) -> Tensor:
        a, _ = self.attn(x, x, x, key_mask)
        m = residual_sublayer(x, a, self.norm1, self.dropout_p, self.norm_style)
        f = self.ffnn(m)
        return residual_sublayer(m, f, self.norm2, self.dropout_p, self.norm_style)

    def parameters(self):
        out = OrderedDict()
        out.update(prefixed("attn", self.attn.parameters()))
        out.update(prefixed("ffnn", self.ffnn.parameters()))
        out.update(prefixed("norm1", self.norm1.parameters()))
        out.update(prefixed("norm2", self.norm2.parameters()))
        return out


class TransformerDecoderBlock:
    """Encoder block plus one target-to-source attention sublayer."""

    def __init__(self, model_dim: int, num_heads: int, rng: SplitMix64,
                 dropout_p: float = 0.0, norm_style: str = "paper"):
        self.self_attn = MultiHeadAttention(model_dim, num_heads, rng)
        self.cross_attn = MultiHeadAttention(model_dim, num_heads, rng)
        self.ffnn = FeedForward(model_dim, rng)
        self.norm1 = Norm(model_dim)
        self.norm2 = Norm(model_dim)
        self.norm3 = Norm(model_dim)
        self.dropout_p = dropout_p
        self.norm_style = norm_style

    def __call__(self, x: Tensor, memory: Tensor, self_mask: np.ndarray | None,
                 mem_mask: np.ndarray | None):
        a, _ = self.self_attn(x, x, x, self_mask)
        m = residual_sublayer(x, a, self.norm1, self.dropout_p, self.norm_style)
        c, cross_w = self.cross_attn(m, memory, memory, mem_mask)
        m2 = residual_sublayer(m, c, self.norm2, self.dropout_p, self.norm_style)
        f = self.ffnn(m2)
        return residual_sublayer(m2, f, self.norm3, self.dropout_p, self.norm_style), cross_w

    def parameters(self):
        out = OrderedDict()
        out.update(prefixed("self_attn", self.self_attn.parameters()))
        out.update(prefixed("cross_attn", self.cross_attn.parameters()))
        out.update(prefixed("ffnn", self.ffnn.parameters()))
        out.update(prefixed("norm1", self.norm1.parameters()))
        out.update(prefixed("norm2", self.norm2.parameters()))
        out.update(prefixed("norm3", self.norm3.parameters()))
        return out


class LstmCell:
    """Standard LSTM cell with per-gate weight/bias tensors."""

    def __init__(self, input_dim: int, hidden_dim: int, rng: SplitMix64):
        self.hidden_dim = hidden_dim
        self.input_dim = input_dim
        for gate in ("i", "f", "o", "g"):
            setattr(self, f"w_{gate}", init_weight(rng, (input_dim, hidden_dim)))
            setattr(self, f"u_{gate}", init_weight(rng, (hidden_dim, hidden_dim)))
            setattr(self, f"b_{gate}", Tensor(np.zeros(hidden_dim)))

    def step(self, x_t: Tensor, h_prev: Tensor, c_prev: Tensor):
        """One recurrence step; returns (h_t, c_t)."""
        def gate(w, u, b, activate):
            return activate(add(add(matmul(x_t, w), matmul(h_prev, u)), b))

        i = gate(self.w_i, self.u_i, self.b_i, sigmoid)
        f = gate(self.w_f, self.u_f, self.b_f, sigmoid)
        o = gate(self.w_o, self.u_o, self.b_o, sigmoid)
        g = gate(self.w_g, self.u_g, self.b_g, tanh)
        c_t = add(mul(f, c_prev), mul(i, g))
        h_t = mul(o, tanh(c_t))
        return h_t, c_t

    def parameters(self):
        out = OrderedDict()
        for gate in ("i", "f", "o", "g"):
            out[f"w_{gate}"] = getattr(self, f"w_{gate}")
            out[f"u_{gate}"] = getattr(self, f"u_{gate}")
            out[f"b_{gate}"] = getattr(self, f"b_{gate}")
        return out


class BahdanauAttention:
    """Additive attention: score = v . tanh(W_q q + W_k k + b)."""

    def __init__(self, query_dim: int, key_dim: int, attn_dim: int, rng: SplitMix64):
        self.w_query = init_weight(rng, (query_dim, attn_dim))
        self.w_key = init_weight(rng, (key_dim, attn_dim))
        self.bias = Tensor(np.zeros(attn_dim))
        self.v = init_weight(rng, (attn_dim, 1))

    def precompute(self, keys: Tensor) -> Tensor:
        """Key projections (B,S,a); computed once per source batch."""
        return add(matmul(keys, self.w_key), self.bias)

    def __call__(self, query: Tensor, keys: Tensor, keys_proj: Tensor | None = None,
                 key_mask: np.ndarray | None = None):
        """query (B,q), keys (B,S,k) -> (context (B,k), weights (B,S))."""
        if keys.shape[-2] == 0:
            raise ContractError("attention over zero encoder states")
        if keys_proj is None:
            keys_proj = self.precompute(keys)
        b = query.shape[0]
        qp = reshape(matmul(query, self.w_query), (b, 1, keys_proj.shape[-1]))
        scores = reshape(matmul(tanh(add(keys_proj, qp)), self.v), (b, keys.shape[-2]))
        if key_mask is None:
            weights = softmax(scores, axis=-1)
        else:
            weights = masked_softmax(scores, key_mask, axis=-1)
        context = reshape(matmul(reshape(weights, (b, 1, -1)), keys), (b, keys.shape[-1]))
        return context, weights.data

    def parameters(self):
        return OrderedDict(w_query=self.w_query, w_key=self.w_key, bias=self.bias, v=self.v)
