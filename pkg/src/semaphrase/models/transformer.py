"""Attention-only seq2seq: single-channel and multi-channel (frame/role) variants.

Encoding follows the block form m = LayerNorm(MultiAttn(x)) + x,
h = LayerNorm(FFNN(m)) + m over positionally-encoded embeddings; the decoder
adds a target-to-source attention sublayer per block.  The multi-channel
variant runs one encoder stack per channel (tokens, frames, roles) and merges
the per-position states with a single learned linear layer; the decoder
attends to the merged states only.  Masked-off channels contribute constant
zeros, so their embeddings and encoder stacks receive no gradient at all.

Greedy decoding caches per-block self-attention K/V and the cross-attention
projections of the encoder states, so each step only projects the new token.
"""

from __future__ import annotations

import numpy as np

from ..data import AnnotatedSentence, BOS_ID, EOS_ID, PAD_ID
from ..layers import (
    PositionalEncoder,
    TransformerDecoderBlock,
    TransformerEncoderBlock,
    causal_mask,
    init_weight,
    residual_sublayer,
)
from ..rng import SplitMix64
from ..tensor import (
    Tensor,
    concat,
    cross_entropy,
    dropout,
    embedding_lookup,
    linear,
    reshape,
    transpose,
)
from .base import AttentionTrace, EncoderOutput, Seq2SeqModel, _collect_ids
from .batching import SourceBatch, encode_sources


class TransformerSeq2Seq(Seq2SeqModel):
    family = "transformer"

    def _build(self, rng: SplitMix64) -> None:
        cfg = self.config
        d = cfg.model_dim
        vocab = len(self.vocabs.tokens)
        self.tok_emb = self._register_tensor("embeddings.tokens", init_weight(rng, (vocab, d)))
        self.pos = PositionalEncoder(cfg.max_len + 2, d)
        self.enc_blocks = self._make_stack("encoder", rng)
        self.dec_blocks = []
        for i in range(cfg.num_blocks):
            blk = TransformerDecoderBlock(d, cfg.num_heads, rng, cfg.dropout_p, cfg.norm_style)
            self._register(f"decoder.block{i}", blk.parameters())
            self.dec_blocks.append(blk)
        self.out_w = self._register_tensor("output.w", init_weight(rng, (d, vocab)))
        self.out_b = self._register_tensor("output.b", Tensor(np.zeros(vocab)))

    def _make_stack(self, prefix: str, rng: SplitMix64) -> list[TransformerEncoderBlock]:
        cfg = self.config
        blocks = []
        for i in range(cfg.num_blocks):
            blk = TransformerEncoderBlock(cfg.model_dim, cfg.num_heads, rng, cfg.dropout_p, cfg.norm_style)
            self._register(f"{prefix}.block{i}", blk.parameters())
            blocks.append(blk)
        return blocks

    # -- encoding ------------------------------------------------------------

    def _run_stack(self, blocks, ids: np.ndarray, emb: Tensor, key_mask: np.ndarray) -> Tensor:
        x = embedding_lookup(emb, ids)
        x = self.pos.encode(x)
        x = dropout(x, self.config.dropout_p)
        for blk in blocks:
            x = blk(x, key_mask)
        return x

    @staticmethod
    def _key_mask(src: SourceBatch) -> np.ndarray | None:
        # uniform-length batches need no key mask at all
        return None if src.mask.all() else src.mask.astype(bool)[:, None, None, :]

    def _encode_arrays(self, src: SourceBatch) -> tuple[Tensor, np.ndarray | None]:
        key_mask = self._key_mask(src)
        return self._run_stack(self.enc_blocks, src.tokens, self.tok_emb, key_mask), key_mask

    def encode(self, src: AnnotatedSentence) -> EncoderOutput:
        batch = encode_sources([src], self.vocabs, self.config.max_len)
        states, _ = self._encode_arrays(batch)
        return EncoderOutput(states=reshape(states, states.shape[1:]), source=batch.sentences[0])

    # -- training ------------------------------------------------------------

    def _loss(self, src: SourceBatch, tgt, tape):
        memory, mem_mask = self._encode_arrays(src)
        t = tgt.dec_in.shape[1]
        y = embedding_lookup(self.tok_emb, tgt.dec_in)
        y = dropout(self.pos.encode(y), self.config.dropout_p)
        self_mask = causal_mask(t)
        for blk in self.dec_blocks:
            y, _ = blk(y, memory, self_mask, mem_mask)
        logits = linear(y, self.out_w, self.out_b)
        return cross_entropy(logits, tgt.dec_target, tgt.mask), None

    # -- greedy decoding with K/V caching -------------------------------------

    def _decode_batch(self, src: SourceBatch, max_out: int, stop_at_eos: bool = True,
                      collect_trace: bool = False, rng: SplitMix64 | None = None):
        memory, mem_mask = self._encode_arrays(src)
        b = memory.shape[0]
        d = self.config.model_dim
        cross_kv = [
            (transpose(blk.cross_attn.project_k(memory), (0, 1, 3, 2)),
             blk.cross_attn.project_v(memory))
            for blk in self.dec_blocks
        ]
        n_blocks = len(self.dec_blocks)
        self_kt: list[Tensor | None] = [None] * n_blocks
        self_v: list[Tensor | None] = [None] * n_blocks

        last = np.full((b, 1), BOS_ID, dtype=np.int64)
        done = np.zeros(b, dtype=bool)
        steps_active = np.zeros(b, dtype=np.int64)
        ended_with_eos = np.zeros(b, dtype=bool)
        emitted: list[np.ndarray] = []
        layer_weights: list[list[np.ndarray]] = [[] for _ in range(n_blocks)]

        for t in range(max_out):
            x = embedding_lookup(self.tok_emb, last)
            x = self.pos.encode(x, start_pos=t)
            for i, blk in enumerate(self.dec_blocks):
                kt = transpose(blk.self_attn.project_k(x), (0, 1, 3, 2))
                vh = blk.self_attn.project_v(x)
                self_kt[i] = kt if self_kt[i] is None else concat([self_kt[i], kt], axis=3)
                self_v[i] = vh if self_v[i] is None else concat([self_v[i], vh], axis=2)
                a, _ = blk.self_attn.attend_kt(blk.self_attn.project_q(x), self_kt[i], self_v[i], None)
                x = residual_sublayer(x, a, blk.norm1, blk.dropout_p, blk.norm_style)
                c, w = blk.cross_attn.attend_kt(
                    blk.cross_attn.project_q(x), cross_kv[i][0], cross_kv[i][1], mem_mask
                )
                if collect_trace:
                    layer_weights[i].append(w)
                x = residual_sublayer(x, c, blk.norm2, blk.dropout_p, blk.norm_style)
                x = residual_sublayer(x, blk.ffnn(x), blk.norm3, blk.dropout_p, blk.norm_style)
            logits = linear(reshape(x, (b, d)), self.out_w, self.out_b).data
            nxt = logits.argmax(axis=-1)  # ties resolve to the lowest id
            emitted.append(np.where(done, PAD_ID, nxt))
            active = ~done
            steps_active += active
            if stop_at_eos:
                done = done | (active & (nxt == EOS_ID))
                ended_with_eos |= active & (nxt == EOS_ID)
            last = np.where(done, PAD_ID, nxt)[:, None]
            if stop_at_eos and done.all():
                break

        out_ids = _collect_ids(emitted, steps_active, ended_with_eos)
        truncated = ~done if stop_at_eos else np.zeros(b, dtype=bool)
        traces = None
        if collect_trace:
            traces = []
            for j in range(b):
                t_j = int(steps_active[j])
                s_j = int(src.lengths[j])
                layers = [
                    np.concatenate(per_layer, axis=2)[j][:, :t_j, :s_j]
                    for per_layer in layer_weights
                ]
                labels = [self.vocabs.tokens.decode(i) for i in out_ids[j]]
                if ended_with_eos[j]:
                    labels.append(self.vocabs.tokens.decode(EOS_ID))
                traces.append(AttentionTrace(layers=layers, source=src.sentences[j], target_tokens=labels))
        return out_ids, traces, truncated


class MultiChannelTransformer(TransformerSeq2Seq):
    """Three channel encoders (tokens, frames, roles) merged per position."""

    family = "transformer_pb"

    def _build(self, rng: SplitMix64) -> None:
        cfg = self.config
        d = cfg.model_dim
        self.use_frames = cfg.channel_mask in ("frame_only", "both")
        self.use_roles = cfg.channel_mask in ("role_only", "both")
        # build all three channels regardless of the mask so that an ablation
        # sweep compares equal-capacity models; dead channels stay at init
        vocab = len(self.vocabs.tokens)
        self.tok_emb = self._register_tensor("embeddings.tokens", init_weight(rng, (vocab, d)))
        self.frame_emb = self._register_tensor(
            "embeddings.frames", init_weight(rng, (len(self.vocabs.frames), d))
        )
        self.role_emb = self._register_tensor(
            "embeddings.roles", init_weight(rng, (len(self.vocabs.roles), d))
        )
        self.pos = PositionalEncoder(cfg.max_len + 2, d)
        self.enc_blocks = self._make_stack("encoder_tokens", rng)
        self.frame_blocks = self._make_stack("encoder_frames", rng)
        self.role_blocks = self._make_stack("encoder_roles", rng)
        self.merge_w = self._register_tensor("merge.w", init_weight(rng, (3 * d, d)))
        self.merge_b = self._register_tensor("merge.b", Tensor(np.zeros(d)))
        self.dec_blocks = []
        for i in range(cfg.num_blocks):
            blk = TransformerDecoderBlock(d, cfg.num_heads, rng, cfg.dropout_p, cfg.norm_style)
            self._register(f"decoder.block{i}", blk.parameters())
            self.dec_blocks.append(blk)
        self.out_w = self._register_tensor("output.w", init_weight(rng, (d, vocab)))
        self.out_b = self._register_tensor("output.b", Tensor(np.zeros(vocab)))

    def _channel_states(self, src: SourceBatch, key_mask: np.ndarray):
        b, s = src.tokens.shape
        d = self.config.model_dim
        zero = Tensor(np.zeros((b, s, d)))
        tok = self._run_stack(self.enc_blocks, src.tokens, self.tok_emb, key_mask)
        frm = (
            self._run_stack(self.frame_blocks, src.frames, self.frame_emb, key_mask)
            if self.use_frames else zero
        )
        rol = (
            self._run_stack(self.role_blocks, src.roles, self.role_emb, key_mask)
            if self.use_roles else zero
        )
        return tok, frm, rol

    def _merge(self, tok: Tensor, frm: Tensor, rol: Tensor) -> Tensor:
        return linear(concat([tok, frm, rol], axis=-1), self.merge_w, self.merge_b)

    def _encode_arrays(self, src: SourceBatch) -> tuple[Tensor, np.ndarray]:
        key_mask = src.mask.astype(bool)[:, None, None, :]
        tok, frm, rol = self._channel_states(src, key_mask)
        return self._merge(tok, frm, rol), key_mask
