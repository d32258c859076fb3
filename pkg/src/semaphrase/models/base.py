"""Common train/decode interface over the five architecture families."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from ..data import AnnotatedSentence, VocabBundle
from ..errors import ContractError, TrainingDivergence
from ..rng import SplitMix64, mix64
from ..tensor import GradientTape, Tensor, add, backward, scale
from .batching import SourceBatch, encode_pairs, encode_sources
from .config import ModelConfig
from .optimizer import Adam


@dataclass
class LossReport:
    ce: float
    kl: float = 0.0


@dataclass
class EncoderOutput:
    """Per-position encoder states and/or a pooled context vector."""

    states: Tensor | None = None   # (S, dim) for a single sentence
    context: Tensor | None = None  # (dim,) pooled representation
    source: AnnotatedSentence | None = None


@dataclass
class AttentionTrace:
    """Target-to-source attention collected during decoding.

    One (heads, target_len, source_len) array per decoder layer.  The source
    sentence supplies the token/frame/role labels for the key axis; dumping a
    channel relabels the same position weights with that channel's strings.
    """

    layers: list[np.ndarray] = field(default_factory=list)
    source: AnnotatedSentence | None = None
    target_tokens: list[str] = field(default_factory=list)


@dataclass
class DecodeResult:
    tokens: list[str]
    token_ids: list[int]
    truncated: bool  # hit max_out without emitting EOS
    trace: AttentionTrace | None = None


def _collect_ids(emitted: list[np.ndarray], steps_active: np.ndarray,
                 ended_with_eos: np.ndarray) -> list[list[int]]:
    """Per-sentence id lists from lockstep decode output (EOS step dropped)."""
    matrix = np.stack(emitted, axis=1)
    out = []
    for j in range(matrix.shape[0]):
        ids = matrix[j, : int(steps_active[j])]
        if ended_with_eos[j]:
            ids = ids[:-1]
        out.append([int(v) for v in ids])
    return out


class Seq2SeqModel:
    """Base class: owns config, vocabularies, optimizer, and the step loop.

    Subclasses implement ``_build`` (parameter creation, deterministic order),
    ``_loss`` (teacher-forced batch loss) and ``_decode_batch`` (lockstep
    greedy decoding).  Training is single-writer; decoding only reads
    parameters and is safe to run concurrently.
    """

    family = ""

    def __init__(self, config: ModelConfig, vocabs: VocabBundle):
        if config.family != self.family:
            raise ContractError(f"config family {config.family!r} does not match {self.family!r}")
        self.config = config
        self.vocabs = vocabs
        self.step_count = 0
        self.kl_anneal_steps = 2 * max(1, config.warmup_steps)
        self.steps_per_epoch = 0  # 0: no epoch-based lr decay until a horizon is set
        self.optimizer = Adam(
            config.learning_rate, config.warmup_steps, config.lr_decay, config.weight_decay_mode
        )
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        self._build(SplitMix64(mix64(config.seed, 0x5EED)))

    # -- subclass hooks -----------------------------------------------------

    def _build(self, rng: SplitMix64) -> None:
        raise NotImplementedError

    def _loss(self, src: SourceBatch, tgt, tape: GradientTape):
        """Return (ce Tensor, kl Tensor | None)."""
        raise NotImplementedError

    def _decode_batch(self, src: SourceBatch, max_out: int, stop_at_eos: bool = True,
                      collect_trace: bool = False, rng: SplitMix64 | None = None):
        """Return (list of id lists, list of AttentionTrace | None, truncated flags)."""
        raise NotImplementedError

    # -- shared surface -----------------------------------------------------

    def parameters(self) -> "OrderedDict[str, Tensor]":
        return self._params

    def describe(self) -> dict:
        """Per-component and total parameter counts."""
        components: dict[str, int] = {}
        for name, p in self._params.items():
            top = name.split(".", 1)[0]
            components[top] = components.get(top, 0) + p.data.size
        return {
            "family": self.family,
            "total_parameters": int(sum(components.values())),
            "components": components,
        }

    def set_training_horizon(self, total_steps: int, steps_per_epoch: int = 0) -> None:
        """Fix schedule anchors: KL anneal span (20% of steps) and epoch size."""
        self.kl_anneal_steps = max(1, int(0.2 * total_steps))
        self.steps_per_epoch = steps_per_epoch

    def kl_scale(self) -> float:
        anneal = min(1.0, self.step_count / self.kl_anneal_steps) if self.kl_anneal_steps else 1.0
        return self.config.kl_weight * anneal

    def loss_forward(self, batch, tape_seed: int = 0):
        """Forward pass only; returns (loss, ce, kl, tape) with no optimizer update."""
        if not batch:
            raise ContractError("loss_forward on an empty batch")
        src, tgt = encode_pairs(batch, self.vocabs, self.config.max_len)
        with GradientTape(tape_seed) as tape:
            ce, kl = self._loss(src, tgt, tape)
            loss = add(ce, scale(kl, self.kl_scale())) if kl is not None else ce
        return loss, ce, kl, tape

    def train_step(self, batch) -> LossReport:
        """One teacher-forced batch: forward, backward, optimizer update."""
        if not batch:
            raise ContractError("train_step on an empty batch")
        self.step_count += 1
        tape_seed = mix64(self.config.seed, self.step_count)
        loss, ce, kl, tape = self.loss_forward(batch, tape_seed)
        ce_val = ce.item()
        kl_val = kl.item() if kl is not None else 0.0
        if not np.isfinite(ce_val) or not np.isfinite(kl_val):
            raise TrainingDivergence(self.step_count)
        backward(tape, loss)
        epoch = self.step_count // self.steps_per_epoch if self.steps_per_epoch else 0
        self.optimizer.apply(self._params, self.step_count, epoch)
        return LossReport(ce=ce_val, kl=kl_val)

    def greedy_decode(self, src: AnnotatedSentence, max_out: int | None = None,
                      collect_trace: bool = True) -> DecodeResult:
        """Argmax decoding until EOS or ``max_out`` (ties pick the lowest id)."""
        max_out = max_out if max_out is not None else self.config.max_len + 1
        batch = encode_sources([src], self.vocabs, self.config.max_len)
        rng = SplitMix64(mix64(self.config.seed, 0xDEC0DE))
        ids, traces, truncated = self._decode_batch(
            batch, max_out, stop_at_eos=True, collect_trace=collect_trace, rng=rng
        )
        tokens = [self.vocabs.tokens.decode(i) for i in ids[0]]
        return DecodeResult(
            tokens=tokens,
            token_ids=list(ids[0]),
            truncated=bool(truncated[0]),
            trace=traces[0] if traces else None,
        )

    def decode_sentences(self, sentences: list[AnnotatedSentence], max_out: int | None = None,
                         stop_at_eos: bool = True) -> list[list[int]]:
        """Lockstep batched greedy decoding (used by evaluation and the bench)."""
        max_out = max_out if max_out is not None else self.config.max_len + 1
        batch = encode_sources(sentences, self.vocabs, self.config.max_len)
        rng = SplitMix64(mix64(self.config.seed, 0xDEC0DE))
        ids, _, _ = self._decode_batch(batch, max_out, stop_at_eos=stop_at_eos, rng=rng)
        return ids

    # -- helpers shared by subclasses ---------------------------------------

    def _register(self, prefix: str, params: "OrderedDict[str, Tensor]") -> None:
        for name, p in params.items():
            self._params[f"{prefix}.{name}"] = p

    def _register_tensor(self, name: str, p: Tensor) -> Tensor:
        self._params[name] = p
        return p
