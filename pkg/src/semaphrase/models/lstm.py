"""Stacked-residual LSTM seq2seq, single-channel and multi-channel.

The encoder is a two-layer stacked LSTM run in both directions; each layer's
output is the cell output plus the word embedding of the current step
(h_t^l = Cell(h_t^{l-1}, h_{t-1}^l) + w_t), and the residual-carrying hidden
state is what recurs.  The sentence context vector is a linear projection of
the concatenated final forward/backward hidden states; the decoder is the
same two-layer stack (single direction), initialized from the context vector
and attending additively over the per-position encoder states.

The multi-channel variant runs one bidirectional encoder per channel and
fuses the three per-channel context vectors with a single linear layer;
attention keys remain the token-channel states.  Masked-off channels
contribute constant zero context, so their parameters receive no gradient.

Batches with unequal lengths carry hidden state through padded steps, so the
final states are those at each sentence's last real token.
"""

from __future__ import annotations

import numpy as np

from ..data import AnnotatedSentence, BOS_ID, EOS_ID, PAD_ID
from ..layers import BahdanauAttention, LstmCell, init_weight
from ..rng import SplitMix64
from ..tensor import (
    Tensor,
    add,
    concat,
    cross_entropy,
    dropout,
    embedding_lookup,
    linear,
    mul_const,
    reshape,
    tanh,
    zeros,
)
from .base import AttentionTrace, EncoderOutput, Seq2SeqModel, _collect_ids
from .batching import SourceBatch, encode_sources

NUM_LAYERS = 2  # stacking depth of both encoder and decoder


def run_residual_stack(cells: list[LstmCell], emb_cols: list[Tensor],
                       mask_cols: list[np.ndarray] | None, reverse: bool,
                       init_h: Tensor | None = None):
    """Run a stacked-residual LSTM over one direction.

    ``mask_cols`` (one (B,1) column per step, 1.0 = real token) makes padded
    steps carry the previous states through, so the returned finals belong to
    each sentence's last real position.  Returns (top outputs per step, final
    top-layer hidden state).
    """
    steps = len(emb_cols)
    b = emb_cols[0].shape[0]
    dim = cells[0].hidden_dim
    h = [init_h if init_h is not None else zeros((b, dim)) for _ in cells]
    c = [zeros((b, dim)) for _ in cells]
    tops: list[Tensor | None] = [None] * steps
    order = range(steps - 1, -1, -1) if reverse else range(steps)
    for t in order:
        w_t = emb_cols[t]
        x = w_t
        for layer, cell in enumerate(cells):
            h_new, c_new = cell.step(x, h[layer], c[layer])
            h_res = add(h_new, w_t)
            if mask_cols is None:
                h[layer], c[layer] = h_res, c_new
            else:
                m = mask_cols[t]
                h[layer] = add(mul_const(h_res, m), mul_const(h[layer], 1.0 - m))
                c[layer] = add(mul_const(c_new, m), mul_const(c[layer], 1.0 - m))
            x = h[layer]
        tops[t] = x
    return tops, h[-1]


class StackedResidualLstm(Seq2SeqModel):
    family = "sr_lstm"

    def _build(self, rng: SplitMix64) -> None:
        cfg = self.config
        h = cfg.hidden_dim
        vocab = len(self.vocabs.tokens)
        self.emb = self._register_tensor("embeddings.tokens", init_weight(rng, (vocab, h)))
        self.enc_fwd, self.enc_bwd = self._build_bilstm("encoder_tokens", rng)
        self._build_context(rng)
        self.dec_cells = []
        for layer in range(NUM_LAYERS):
            cell = LstmCell(h, h, rng)
            self._register(f"decoder.layer{layer}", cell.parameters())
            self.dec_cells.append(cell)
        self.attn = BahdanauAttention(h, 2 * h, h, rng)
        self._register("attention", self.attn.parameters())
        self.comb_w = self._register_tensor("output.comb_w", init_weight(rng, (3 * h, h)))
        self.comb_b = self._register_tensor("output.comb_b", Tensor(np.zeros(h)))
        self.out_w = self._register_tensor("output.w", init_weight(rng, (h, vocab)))
        self.out_b = self._register_tensor("output.b", Tensor(np.zeros(vocab)))

    def _build_bilstm(self, prefix: str, rng: SplitMix64):
        h = self.config.hidden_dim
        fwd, bwd = [], []
        for layer in range(NUM_LAYERS):
            cell = LstmCell(h, h, rng)
            self._register(f"{prefix}.fwd{layer}", cell.parameters())
            fwd.append(cell)
        for layer in range(NUM_LAYERS):
            cell = LstmCell(h, h, rng)
            self._register(f"{prefix}.bwd{layer}", cell.parameters())
            bwd.append(cell)
        return fwd, bwd

    def _build_context(self, rng: SplitMix64) -> None:
        h = self.config.hidden_dim
        self.ctx_w = self._register_tensor("context.w", init_weight(rng, (2 * h, h)))
        self.ctx_b = self._register_tensor("context.b", Tensor(np.zeros(h)))

    # -- encoding ------------------------------------------------------------

    def _embed_columns(self, ids: np.ndarray, table: Tensor, train: bool) -> list[Tensor]:
        p = self.config.dropout_p if train else 0.0
        return [dropout(embedding_lookup(table, ids[:, t]), p) for t in range(ids.shape[1])]

    def _bi_encode(self, cells_fwd, cells_bwd, ids: np.ndarray, table: Tensor,
                   mask: np.ndarray, train: bool):
        """Returns (per-position states (B,S,2h), channel context vector (B,2h))."""
        cols = self._embed_columns(ids, table, train)
        mask_cols = None if mask.all() else [mask[:, t:t + 1] for t in range(ids.shape[1])]
        fwd_tops, fwd_final = run_residual_stack(cells_fwd, cols, mask_cols, reverse=False)
        bwd_tops, bwd_final = run_residual_stack(cells_bwd, cols, mask_cols, reverse=True)
        b = ids.shape[0]
        two_h = 2 * self.config.hidden_dim
        states = concat(
            [reshape(concat([f, k], axis=-1), (b, 1, two_h)) for f, k in zip(fwd_tops, bwd_tops)],
            axis=1,
        )
        return states, concat([fwd_final, bwd_final], axis=-1)

    def _encode_arrays(self, src: SourceBatch, train: bool):
        states, raw_ctx = self._bi_encode(self.enc_fwd, self.enc_bwd, src.tokens, self.emb, src.mask, train)
        context = linear(raw_ctx, self.ctx_w, self.ctx_b)
        return states, context

    def encode(self, src: AnnotatedSentence) -> EncoderOutput:
        batch = encode_sources([src], self.vocabs, self.config.max_len)
        states, context = self._encode_arrays(batch, train=False)
        return EncoderOutput(
            states=reshape(states, states.shape[1:]),
            context=reshape(context, (self.config.hidden_dim,)),
            source=batch.sentences[0],
        )

    # -- decoding core shared by loss and greedy decode ----------------------

    def _decoder_step(self, w_t: Tensor, h, c, states, keys_proj, key_mask):
        x = w_t
        for layer, cell in enumerate(self.dec_cells):
            h_new, c_new = cell.step(x, h[layer], c[layer])
            h[layer] = add(h_new, w_t)
            c[layer] = c_new
            x = h[layer]
        ctx_t, weights = self.attn(x, states, keys_proj, key_mask)
        o = tanh(linear(concat([x, ctx_t], axis=-1), self.comb_w, self.comb_b))
        logits = linear(o, self.out_w, self.out_b)
        return logits, weights

    def _init_decoder_state(self, context: Tensor):
        h = [context for _ in range(NUM_LAYERS)]
        b = context.shape[0]
        c = [zeros((b, self.config.hidden_dim)) for _ in range(NUM_LAYERS)]
        return h, c

    @staticmethod
    def _key_mask(src: SourceBatch) -> np.ndarray | None:
        return None if src.mask.all() else src.mask.astype(bool)

    def _loss(self, src: SourceBatch, tgt, tape):
        states, context = self._encode_arrays(src, train=True)
        keys_proj = self.attn.precompute(states)
        key_mask = self._key_mask(src)
        h, c = self._init_decoder_state(context)
        b, t_max = tgt.dec_in.shape
        vocab = len(self.vocabs.tokens)
        logits_steps = []
        for t in range(t_max):
            w_t = dropout(embedding_lookup(self.emb, tgt.dec_in[:, t]), self.config.dropout_p)
            logits, _ = self._decoder_step(w_t, h, c, states, keys_proj, key_mask)
            logits_steps.append(reshape(logits, (b, 1, vocab)))
        logits = concat(logits_steps, axis=1)
        return cross_entropy(logits, tgt.dec_target, tgt.mask), None

    def _decode_batch(self, src: SourceBatch, max_out: int, stop_at_eos: bool = True,
                      collect_trace: bool = False, rng: SplitMix64 | None = None):
        states, context = self._encode_arrays(src, train=False)
        keys_proj = self.attn.precompute(states)
        key_mask = self._key_mask(src)
        h, c = self._init_decoder_state(context)
        b = src.tokens.shape[0]

        last = np.full(b, BOS_ID, dtype=np.int64)
        done = np.zeros(b, dtype=bool)
        steps_active = np.zeros(b, dtype=np.int64)
        ended_with_eos = np.zeros(b, dtype=bool)
        emitted: list[np.ndarray] = []
        step_weights: list[np.ndarray] = []

        for _ in range(max_out):
            w_t = embedding_lookup(self.emb, last)
            logits, weights = self._decoder_step(w_t, h, c, states, keys_proj, key_mask)
            if collect_trace:
                step_weights.append(weights)  # (B, S)
            nxt = logits.data.argmax(axis=-1)
            emitted.append(np.where(done, PAD_ID, nxt))
            active = ~done
            steps_active += active
            if stop_at_eos:
                done = done | (active & (nxt == EOS_ID))
                ended_with_eos |= active & (nxt == EOS_ID)
            last = np.where(done, PAD_ID, nxt)
            if stop_at_eos and done.all():
                break

        out_ids = _collect_ids(emitted, steps_active, ended_with_eos)
        truncated = ~done if stop_at_eos else np.zeros(b, dtype=bool)
        traces = None
        if collect_trace:
            stacked = np.stack(step_weights, axis=1)  # (B, T, S)
            traces = []
            for j in range(b):
                t_j = int(steps_active[j])
                s_j = int(src.lengths[j])
                labels = [self.vocabs.tokens.decode(i) for i in out_ids[j]]
                if ended_with_eos[j]:
                    labels.append(self.vocabs.tokens.decode(EOS_ID))
                traces.append(AttentionTrace(
                    layers=[stacked[j][None, :t_j, :s_j]],  # one layer, one head
                    source=src.sentences[j],
                    target_tokens=labels,
                ))
        return out_ids, traces, truncated


class MultiChannelResidualLstm(StackedResidualLstm):
    """One bidirectional encoder per channel; contexts fused by a linear layer."""

    family = "sr_lstm_pb"

    def _build(self, rng: SplitMix64) -> None:
        cfg = self.config
        self.use_frames = cfg.channel_mask in ("frame_only", "both")
        self.use_roles = cfg.channel_mask in ("role_only", "both")
        h = cfg.hidden_dim
        vocab = len(self.vocabs.tokens)
        self.emb = self._register_tensor("embeddings.tokens", init_weight(rng, (vocab, h)))
        self.frame_emb = self._register_tensor(
            "embeddings.frames", init_weight(rng, (len(self.vocabs.frames), h))
        )
        self.role_emb = self._register_tensor(
            "embeddings.roles", init_weight(rng, (len(self.vocabs.roles), h))
        )
        self.enc_fwd, self.enc_bwd = self._build_bilstm("encoder_tokens", rng)
        self.frame_fwd, self.frame_bwd = self._build_bilstm("encoder_frames", rng)
        self.role_fwd, self.role_bwd = self._build_bilstm("encoder_roles", rng)
        self.ctx_w = self._register_tensor("context.w", init_weight(rng, (6 * h, h)))
        self.ctx_b = self._register_tensor("context.b", Tensor(np.zeros(h)))
        self.dec_cells = []
        for layer in range(NUM_LAYERS):
            cell = LstmCell(h, h, rng)
            self._register(f"decoder.layer{layer}", cell.parameters())
            self.dec_cells.append(cell)
        self.attn = BahdanauAttention(h, 2 * h, h, rng)
        self._register("attention", self.attn.parameters())
        self.comb_w = self._register_tensor("output.comb_w", init_weight(rng, (3 * h, h)))
        self.comb_b = self._register_tensor("output.comb_b", Tensor(np.zeros(h)))
        self.out_w = self._register_tensor("output.w", init_weight(rng, (h, vocab)))
        self.out_b = self._register_tensor("output.b", Tensor(np.zeros(vocab)))

    def _fuse(self, ctx_tokens: Tensor, ctx_frames: Tensor, ctx_roles: Tensor) -> Tensor:
        return linear(concat([ctx_tokens, ctx_frames, ctx_roles], axis=-1), self.ctx_w, self.ctx_b)

    def _encode_arrays(self, src: SourceBatch, train: bool):
        states, ctx_tok = self._bi_encode(self.enc_fwd, self.enc_bwd, src.tokens, self.emb, src.mask, train)
        b = src.tokens.shape[0]
        zero = Tensor(np.zeros((b, 2 * self.config.hidden_dim)))
        ctx_frm = (
            self._bi_encode(self.frame_fwd, self.frame_bwd, src.frames, self.frame_emb, src.mask, train)[1]
            if self.use_frames else zero
        )
        ctx_rol = (
            self._bi_encode(self.role_fwd, self.role_bwd, src.roles, self.role_emb, src.mask, train)[1]
            if self.use_roles else zero
        )
        return states, self._fuse(ctx_tok, ctx_frm, ctx_rol)
