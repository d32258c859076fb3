"""Turn annotated pairs into padded id arrays.

Pipeline per sentence: truncate every channel to max_len, lowercase tokens,
map through the vocabularies (unknowns to <unk>), then append EOS on the
source / wrap the target as (BOS + tokens, tokens + EOS).  Padding uses id 0
in every vocabulary and the masks mark real positions with 1.0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data import AnnotatedSentence, EOS_ID, BOS_ID, PAD_ID, NULL_LABEL, VocabBundle
from ..errors import ContractError


@dataclass
class SourceBatch:
    tokens: np.ndarray    # (B, S) int
    frames: np.ndarray    # (B, S) int
    roles: np.ndarray     # (B, S) int
    mask: np.ndarray      # (B, S) float, 1.0 at real positions (incl. EOS)
    lengths: np.ndarray   # (B,) int, real lengths incl. EOS
    sentences: list[AnnotatedSentence]  # truncated+lowercased, for trace labels


@dataclass
class TargetBatch:
    dec_in: np.ndarray    # (B, T) int, BOS + tokens
    dec_target: np.ndarray  # (B, T) int, tokens + EOS
    mask: np.ndarray      # (B, T) float


def prepare_source(sentence: AnnotatedSentence, max_len: int) -> AnnotatedSentence:
    return sentence.truncated(max_len).lowercased()


def encode_sources(sentences: list[AnnotatedSentence], vocabs: VocabBundle, max_len: int) -> SourceBatch:
    prepared = [prepare_source(s, max_len) for s in sentences]
    lengths = np.array([len(s) + 1 for s in prepared])  # +1 for EOS
    width = int(lengths.max())
    b = len(prepared)
    tokens = np.full((b, width), PAD_ID, dtype=np.int64)
    frames = np.full((b, width), PAD_ID, dtype=np.int64)
    roles = np.full((b, width), PAD_ID, dtype=np.int64)
    mask = np.zeros((b, width))
    null_frame = vocabs.frames.encode(NULL_LABEL)
    null_role = vocabs.roles.encode(NULL_LABEL)
    for i, sent in enumerate(prepared):
        n = len(sent)
        tokens[i, :n] = [vocabs.tokens.encode(t) for t in sent.tokens]
        tokens[i, n] = EOS_ID
        frames[i, :n] = [vocabs.frames.encode(f) for f in sent.frames]
        frames[i, n] = null_frame
        roles[i, :n] = [vocabs.roles.encode(r) for r in sent.roles]
        roles[i, n] = null_role
        mask[i, : n + 1] = 1.0
    return SourceBatch(tokens, frames, roles, mask, lengths, prepared)


def encode_targets(sentences: list[AnnotatedSentence], vocabs: VocabBundle, max_len: int) -> TargetBatch:
    prepared = [s.truncated(max_len).lowercased() for s in sentences]
    for i, sent in enumerate(prepared):
        if len(sent) == 0:
            raise ContractError(f"zero-length target at batch index {i}")
    lengths = np.array([len(s) + 1 for s in prepared])
    width = int(lengths.max())
    b = len(prepared)
    dec_in = np.full((b, width), PAD_ID, dtype=np.int64)
    dec_target = np.full((b, width), PAD_ID, dtype=np.int64)
    mask = np.zeros((b, width))
    for i, sent in enumerate(prepared):
        ids = [vocabs.tokens.encode(t) for t in sent.tokens]
        n = len(ids)
        dec_in[i, 0] = BOS_ID
        dec_in[i, 1 : n + 1] = ids
        dec_target[i, :n] = ids
        dec_target[i, n] = EOS_ID
        mask[i, : n + 1] = 1.0
    return TargetBatch(dec_in, dec_target, mask)


def encode_pairs(pairs, vocabs: VocabBundle, max_len: int) -> tuple[SourceBatch, TargetBatch]:
    if not pairs:
        raise ContractError("empty batch")
    src = encode_sources([p.src for p in pairs], vocabs, max_len)
    tgt = encode_targets([p.tgt for p in pairs], vocabs, max_len)
    return src, tgt
