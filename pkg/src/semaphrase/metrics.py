"""Corpus- and sentence-level BLEU, METEOR, and TER.

BLEU: geometric mean of clipped n-gram precisions (n = 1..4, uniform
weights) times the brevity penalty, scaled to [0, 100]; no smoothing by
default.  The optional smoothing (for per-sentence reporting) adds one to
numerator and denominator of every precision above n=1.

METEOR: staged unigram alignment (exact match, then stem match, then
synonym match), recall-weighted harmonic mean F = 10PR/(R+9P), fragmentation
penalty 0.5*(chunks/matches)^3, scaled to [0, 100].  Within a stage,
hypothesis tokens scan left to right and take the leftmost unmatched
reference token.  The stemmer is a small fixed suffix-stripper; the synonym
table is plain text, one group of mutually synonymous words per line, empty
by default.

TER: (edits / reference length) * 100 where edits = insertions + deletions +
substitutions + shifts.  A shift moves one contiguous block (length <= 10,
any distance) and costs one edit; shifts are chosen greedily, repeatedly
taking the single block move that most reduces the remaining edit distance,
and are only taken when they lower the total (reduction of at least 2).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, DataError


@dataclass
class MetricReport:
    bleu: float
    meteor: float
    ter: float
    sentence_count: int

    def to_text(self) -> str:
        return (
            f"bleu\t{self.bleu:.6f}\n"
            f"meteor\t{self.meteor:.6f}\n"
            f"ter\t{self.ter:.6f}\n"
            f"sentence_count\t{self.sentence_count}\n"
        )


# ---------------------------------------------------------------------------
# BLEU


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def modified_precision(hyp: list[str], refs: list[list[str]], n: int) -> tuple[int, int]:
    """(clipped match count, total hypothesis n-grams) for one sentence."""
    counts = _ngrams(hyp, n)
    if not counts:
        return 0, 0
    max_ref: Counter = Counter()
    for ref in refs:
        for gram, c in _ngrams(ref, n).items():
            if c > max_ref[gram]:
                max_ref[gram] = c
    clipped = sum(min(c, max_ref[gram]) for gram, c in counts.items())
    return clipped, sum(counts.values())


def _closest_ref_len(hyp_len: int, refs: list[list[str]]) -> int:
    return min((abs(len(r) - hyp_len), len(r)) for r in refs)[1]


def bleu(hyps: list[list[str]], refs: list[list[list[str]]], max_n: int = 4,
         smooth: bool = False) -> float:
    """Corpus BLEU in [0, 100]; ``refs[i]`` is the reference set for ``hyps[i]``."""
    if not hyps:
        raise ContractError("bleu over an empty hypothesis list")
    if len(hyps) != len(refs):
        raise ContractError(f"{len(hyps)} hypotheses vs {len(refs)} reference sets")
    if any(not rs for rs in refs):
        raise ContractError("every hypothesis needs at least one reference")
    clipped = [0] * max_n
    totals = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for hyp, ref_set in zip(hyps, refs):
        hyp_len += len(hyp)
        ref_len += _closest_ref_len(len(hyp), ref_set)
        for n in range(1, max_n + 1):
            c, t = modified_precision(hyp, ref_set, n)
            clipped[n - 1] += c
            totals[n - 1] += t
    log_sum = 0.0
    for n in range(max_n):
        c, t = clipped[n], totals[n]
        if smooth and n > 0:
            c, t = c + 1, t + 1
        if c == 0 or t == 0:
            return 0.0
        log_sum += math.log(c / t)
    if hyp_len == 0:
        return 0.0
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(log_sum / max_n)


def sentence_bleu(hyp: list[str], refs: list[list[str]], max_n: int = 4,
                  smooth: bool = True) -> float:
    return bleu([hyp], [refs], max_n=max_n, smooth=smooth)


# ---------------------------------------------------------------------------
# METEOR


def default_stem(word: str) -> str:
    """Fixed English suffix-stripper (first matching rule wins)."""
    if word.endswith("sses"):
        return word[:-2]
    if word.endswith("ies") and len(word) > 4:
        return word[:-3] + "y"
    if word.endswith("ing") and len(word) >= 6:
        return word[:-3]
    if word.endswith("ed") and len(word) >= 5:
        return word[:-2]
    if word.endswith("s") and len(word) >= 4 and not word.endswith(("ss", "us")):
        return word[:-1]
    return word


def load_synonyms(path) -> dict[str, set[str]]:
    """One whitespace-separated group of mutual synonyms per line."""
    table: dict[str, set[str]] = {}
    for raw in Path(path).read_text(encoding="utf-8").splitlines():
        group = raw.split()
        for word in group:
            table.setdefault(word, set()).update(w for w in group if w != word)
    return table


def _align(hyp: list[str], ref: list[str], stemmer, synonyms) -> list[tuple[int, int]]:
    synonyms = synonyms or {}
    matched_h: set[int] = set()
    matched_r: set[int] = set()
    pairs: list[tuple[int, int]] = []

    def stage(match):
        for i, h in enumerate(hyp):
            if i in matched_h:
                continue
            for j, r in enumerate(ref):
                if j in matched_r:
                    continue
                if match(h, r):
                    matched_h.add(i)
                    matched_r.add(j)
                    pairs.append((i, j))
                    break

    stage(lambda h, r: h == r)
    stage(lambda h, r: stemmer(h) == stemmer(r))
    stage(lambda h, r: r in synonyms.get(h, ()) or h in synonyms.get(r, ()))
    return sorted(pairs)


def _chunks(pairs: list[tuple[int, int]]) -> int:
    """Number of maximal runs aligned contiguously and in order on both sides."""
    chunks = 0
    prev = None
    for hi, ri in pairs:
        if prev is None or hi != prev[0] + 1 or ri != prev[1] + 1:
            chunks += 1
        prev = (hi, ri)
    return chunks


def _meteor_from_stats(matches: int, chunks: int, hyp_len: int, ref_len: int) -> float:
    if matches == 0 or hyp_len == 0 or ref_len == 0:
        return 0.0
    precision = matches / hyp_len
    recall = matches / ref_len
    f_mean = 10.0 * precision * recall / (recall + 9.0 * precision)
    penalty = 0.5 * (chunks / matches) ** 3
    return 100.0 * f_mean * (1.0 - penalty)


def meteor(hyp: list[str], ref: list[str], stemmer=default_stem,
           synonyms: dict[str, set[str]] | None = None) -> float:
    pairs = _align(hyp, ref, stemmer, synonyms)
    return _meteor_from_stats(len(pairs), _chunks(pairs), len(hyp), len(ref))


def meteor_corpus(hyps: list[list[str]], refs: list[list[str]], stemmer=default_stem,
                  synonyms: dict[str, set[str]] | None = None) -> float:
    """Aggregate statistics over the corpus, then apply the sentence formula."""
    matches = chunks = hyp_len = ref_len = 0
    for hyp, ref in zip(hyps, refs):
        pairs = _align(hyp, ref, stemmer, synonyms)
        matches += len(pairs)
        chunks += _chunks(pairs)
        hyp_len += len(hyp)
        ref_len += len(ref)
    return _meteor_from_stats(matches, chunks, hyp_len, ref_len)


# ---------------------------------------------------------------------------
# TER


def levenshtein(a: list[str], b: list[str]) -> int:
    """Token-level edit distance (insert/delete/substitute, unit costs)."""
    if not a:
        return len(b)
    if not b:
        return len(a)
    b_arr = np.array(b)
    prev = np.arange(len(b) + 1, dtype=np.int64)
    idx = np.arange(len(b) + 1, dtype=np.int64)
    for i, x in enumerate(a, start=1):
        sub = prev[:-1] + (b_arr != x)
        cur = np.empty(len(b) + 1, dtype=np.int64)
        cur[0] = i
        cur[1:] = np.minimum(prev[1:] + 1, sub)
        # row-internal insertions: cur[j] = min over k<=j of cur[k] + (j - k)
        cur = np.minimum.accumulate(cur - idx) + idx
        prev = cur
    return int(prev[-1])


def _apply_shift(tokens: list[str], start: int, length: int, dest: int) -> list[str]:
    block = tokens[start:start + length]
    rest = tokens[:start] + tokens[start + length:]
    return rest[:dest] + block + rest[dest:]


def _best_shift(tokens: list[str], ref: list[str], base: int, max_block: int):
    """The single block move that most reduces edit distance (first on ties)."""
    best = None
    n = len(tokens)
    for start in range(n):
        for length in range(1, min(max_block, n - start) + 1):
            for dest in range(n - length + 1):
                if dest == start:
                    continue
                d = levenshtein(_apply_shift(tokens, start, length, dest), ref)
                if best is None or base - d > best[0]:
                    best = (base - d, start, length, dest)
    return best


def ter_edits(hyp: list[str], ref: list[str], allow_shifts: bool = True,
              max_block: int = 10) -> int:
    """Total edit count (shifts included) for one sentence pair."""
    if not ref:
        raise ContractError("ter needs a non-empty reference")
    current = list(hyp)
    shifts = 0
    if allow_shifts:
        while True:
            base = levenshtein(current, ref)
            if base == 0:
                break
            found = _best_shift(current, ref, base, max_block)
            # a shift itself costs one edit, so it must save at least two
            if found is None or found[0] < 2:
                break
            _, start, length, dest = found
            current = _apply_shift(current, start, length, dest)
            shifts += 1
    return shifts + levenshtein(current, ref)


def ter(hyp: list[str], ref: list[str], allow_shifts: bool = True,
        max_block: int = 10) -> float:
    return 100.0 * ter_edits(hyp, ref, allow_shifts, max_block) / len(ref)


def ter_corpus(hyps: list[list[str]], refs: list[list[str]], allow_shifts: bool = True,
               max_block: int = 10) -> float:
    total_edits = 0
    total_ref = 0
    for hyp, ref in zip(hyps, refs):
        total_edits += ter_edits(hyp, ref, allow_shifts, max_block)
        total_ref += len(ref)
    return 100.0 * total_edits / total_ref


# ---------------------------------------------------------------------------
# corpus evaluation


def evaluate_corpus(hyps: list[list[str]], refs: list[list[str]], stemmer=default_stem,
                    synonyms: dict[str, set[str]] | None = None) -> MetricReport:
    """Single-reference corpus scoring used by the harness and the CLI."""
    if not hyps or len(hyps) != len(refs):
        raise DataError(f"hypothesis/reference counts disagree: {len(hyps)} vs {len(refs)}")
    return MetricReport(
        bleu=bleu(hyps, [[r] for r in refs]),
        meteor=meteor_corpus(hyps, refs, stemmer, synonyms),
        ter=ter_corpus(hyps, refs),
        sentence_count=len(hyps),
    )


def per_sentence_rows(hyps: list[list[str]], refs: list[list[str]], stemmer=default_stem,
                      synonyms: dict[str, set[str]] | None = None) -> list[str]:
    """TSV rows: index, smoothed sentence BLEU, METEOR, TER."""
    rows = ["index\tbleu\tmeteor\tter"]
    for i, (hyp, ref) in enumerate(zip(hyps, refs)):
        rows.append(
            f"{i}\t{sentence_bleu(hyp, [ref]):.6f}\t"
            f"{meteor(hyp, ref, stemmer, synonyms):.6f}\t{ter(hyp, ref):.6f}"
        )
    return rows
