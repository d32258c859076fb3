"""Nested variational LSTM seq2seq.

Encoding: a first LSTM reads the source; a second LSTM reads the target
starting from the first one's final state, and its final hidden state is the
sentence code.  A reparameterized Gaussian layer maps the code to a latent
sample z = mu + sigma * eps with sigma = softplus(Linear(code)), plus the
closed-form KL(N(mu, sigma) || N(0, I)).  Decoding re-encodes the source with
a third LSTM and generates with a fourth whose step input is the previous
token embedding concatenated with z.  At inference z is drawn from the prior
with a seeded stream, so decoding stays deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import AnnotatedSentence, BOS_ID, EOS_ID, PAD_ID
from ..errors import ContractError
from ..layers import LstmCell, init_weight
from ..rng import SplitMix64, mix64
from ..tensor import (
    GradientTape,
    Tensor,
    add,
    add_const,
    concat,
    cross_entropy,
    dropout,
    embedding_lookup,
    linear,
    log,
    mul,
    mul_const,
    reshape,
    scale,
    softplus,
    sub,
    tsum,
    zeros,
)
from .base import EncoderOutput, Seq2SeqModel, _collect_ids
from .batching import SourceBatch, TargetBatch, encode_sources, encode_targets


@dataclass
class LatentSample:
    z: Tensor
    kl: Tensor | None      # scalar; None when sampling from the prior
    mu: Tensor | None
    sigma: Tensor | None


def run_lstm(cell: LstmCell, cols: list[Tensor], mask_cols: list[np.ndarray] | None,
             h0: Tensor | None = None, c0: Tensor | None = None):
    """Single-layer run; padded steps carry state. Returns (tops, h_final, c_final)."""
    b = cols[0].shape[0]
    h = h0 if h0 is not None else zeros((b, cell.hidden_dim))
    c = c0 if c0 is not None else zeros((b, cell.hidden_dim))
    tops = []
    for t, x in enumerate(cols):
        h_new, c_new = cell.step(x, h, c)
        if mask_cols is None:
            h, c = h_new, c_new
        else:
            m = mask_cols[t]
            h = add(mul_const(h_new, m), mul_const(h, 1.0 - m))
            c = add(mul_const(c_new, m), mul_const(c, 1.0 - m))
        tops.append(h)
    return tops, h, c


def gaussian_kl(mu: Tensor, sigma: Tensor) -> Tensor:
    """Mean over the batch of 0.5 * sum(mu^2 + sigma^2 - 1 - 2 ln sigma)."""
    term = sub(add(mul(mu, mu), mul(sigma, sigma)), add_const(scale(log(sigma), 2.0), 1.0))
    batch = mu.shape[0]
    return scale(tsum(term), 0.5 / batch)


class NestedVariationalLstm(Seq2SeqModel):
    family = "nv_lstm"

    def _build(self, rng: SplitMix64) -> None:
        cfg = self.config
        h, latent = cfg.hidden_dim, cfg.latent_dim
        vocab = len(self.vocabs.tokens)
        self.emb = self._register_tensor("embeddings.tokens", init_weight(rng, (vocab, h)))
        self.enc_src = LstmCell(h, h, rng)
        self._register("encoder_source", self.enc_src.parameters())
        self.enc_tgt = LstmCell(h, h, rng)
        self._register("encoder_target", self.enc_tgt.parameters())
        self.w_mu = self._register_tensor("latent.w_mu", init_weight(rng, (h, latent)))
        self.b_mu = self._register_tensor("latent.b_mu", Tensor(np.zeros(latent)))
        self.w_sigma = self._register_tensor("latent.w_sigma", init_weight(rng, (h, latent)))
        self.b_sigma = self._register_tensor("latent.b_sigma", Tensor(np.zeros(latent)))
        self.dec_src = LstmCell(h, h, rng)
        self._register("decoder_source", self.dec_src.parameters())
        self.dec_out = LstmCell(h + latent, h, rng)
        self._register("decoder_output", self.dec_out.parameters())
        self.out_w = self._register_tensor("output.w", init_weight(rng, (h, vocab)))
        self.out_b = self._register_tensor("output.b", Tensor(np.zeros(vocab)))

    # -- shared pieces --------------------------------------------------------

    def _columns(self, ids: np.ndarray, train: bool) -> list[Tensor]:
        p = self.config.dropout_p if train else 0.0
        return [dropout(embedding_lookup(self.emb, ids[:, t]), p) for t in range(ids.shape[1])]

    @staticmethod
    def _mask_cols(mask: np.ndarray) -> list[np.ndarray] | None:
        return None if mask.all() else [mask[:, t:t + 1] for t in range(mask.shape[1])]

    def _posterior(self, src: SourceBatch, tgt: TargetBatch, train: bool):
        _, h1, c1 = run_lstm(self.enc_src, self._columns(src.tokens, train), self._mask_cols(src.mask))
        # the second nested LSTM reads the target (tokens + EOS) from the source state
        tgt_ids = tgt.dec_target
        _, h2, _ = run_lstm(self.enc_tgt, self._columns(tgt_ids, train), self._mask_cols(tgt.mask), h1, c1)
        mu = linear(h2, self.w_mu, self.b_mu)
        sigma = softplus(linear(h2, self.w_sigma, self.b_sigma))
        return mu, sigma

    def _latent(self, src: SourceBatch, tgt: TargetBatch, eps: np.ndarray, train: bool) -> LatentSample:
        mu, sigma = self._posterior(src, tgt, train)
        z = add(mu, mul_const(sigma, eps))
        return LatentSample(z=z, kl=gaussian_kl(mu, sigma), mu=mu, sigma=sigma)

    def nv_encode(self, src: AnnotatedSentence, tgt: AnnotatedSentence | None = None,
                  train: bool = False) -> LatentSample:
        """Latent sample for one sentence pair (posterior) or the prior.

        Deterministic for a fixed model seed: the noise stream is derived from
        it.  Training uses the tape-internal equivalent of this path.
        """
        rng = SplitMix64(mix64(self.config.seed, 0x1A7E47))
        latent = self.config.latent_dim
        if not train:
            return LatentSample(z=Tensor(rng.normal((1, latent))), kl=None, mu=None, sigma=None)
        if tgt is None:
            raise ContractError("nv_encode in train mode requires a target sentence")
        sb = encode_sources([src], self.vocabs, self.config.max_len)
        tb = encode_targets([tgt], self.vocabs, self.config.max_len)
        return self._latent(sb, tb, rng.normal((1, latent)), train=False)

    # -- training ---------------------------------------------------------------

    def _loss(self, src: SourceBatch, tgt: TargetBatch, tape: GradientTape):
        b = src.tokens.shape[0]
        eps = tape.rng.normal((b, self.config.latent_dim))
        sample = self._latent(src, tgt, eps, train=True)
        _, h_s, c_s = run_lstm(self.dec_src, self._columns(src.tokens, True), self._mask_cols(src.mask))
        h, c = h_s, c_s
        vocab = len(self.vocabs.tokens)
        logits_steps = []
        t_max = tgt.dec_in.shape[1]
        for t in range(t_max):
            w_t = dropout(embedding_lookup(self.emb, tgt.dec_in[:, t]), self.config.dropout_p)
            x = concat([w_t, sample.z], axis=-1)
            h, c = self.dec_out.step(x, h, c)
            logits_steps.append(reshape(linear(h, self.out_w, self.out_b), (b, 1, vocab)))
        logits = concat(logits_steps, axis=1)
        ce = cross_entropy(logits, tgt.dec_target, tgt.mask)
        return ce, sample.kl

    # -- decoding ------------------------------------------------------------

    def encode(self, src: AnnotatedSentence) -> EncoderOutput:
        batch = encode_sources([src], self.vocabs, self.config.max_len)
        tops, h_final, _ = run_lstm(self.enc_src, self._columns(batch.tokens, False),
                                    self._mask_cols(batch.mask))
        states = concat([reshape(t, (1, 1, self.config.hidden_dim)) for t in tops], axis=1)
        return EncoderOutput(
            states=reshape(states, states.shape[1:]),
            context=reshape(h_final, (self.config.hidden_dim,)),
            source=batch.sentences[0],
        )

    def _decode_batch(self, src: SourceBatch, max_out: int, stop_at_eos: bool = True,
                      collect_trace: bool = False, rng: SplitMix64 | None = None):
        b = src.tokens.shape[0]
        rng = rng or SplitMix64(mix64(self.config.seed, 0xDEC0DE))
        z = Tensor(rng.normal((b, self.config.latent_dim)))  # prior sample
        _, h, c = run_lstm(self.dec_src, self._columns(src.tokens, False), self._mask_cols(src.mask))

        last = np.full(b, BOS_ID, dtype=np.int64)
        done = np.zeros(b, dtype=bool)
        steps_active = np.zeros(b, dtype=np.int64)
        ended_with_eos = np.zeros(b, dtype=bool)
        emitted: list[np.ndarray] = []
        for _ in range(max_out):
            w_t = embedding_lookup(self.emb, last)
            x = concat([w_t, z], axis=-1)
            h, c = self.dec_out.step(x, h, c)
            nxt = linear(h, self.out_w, self.out_b).data.argmax(axis=-1)
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
        # no attention mechanism in this family, so there is nothing to trace
        traces = [None] * b if collect_trace else None
        return out_ids, traces, truncated
