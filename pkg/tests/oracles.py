"""Independent metric oracles.

These recompute BLEU/METEOR/TER from their definitions with plain loops and,
for TER, exhaustive search over shift sequences.  They share no code with
semaphrase.metrics (except the definitional suffix-stripper) and exist to
derive the frozen values in data/metrics_golden.json and to cross-check the
production implementations in tests.

Regenerate the golden file with:  python3 tests/oracles.py
"""

from __future__ import annotations

import itertools
import json
from pathlib import Path

from semaphrase.metrics import default_stem

GOLDEN_PATH = Path(__file__).parent / "data" / "metrics_golden.json"

SYNONYM_GROUPS = [
    ["car", "auto", "vehicle"],
    ["big", "large"],
    ["quick", "fast", "speedy"],
    ["photo", "picture"],
]


def synonym_table() -> dict[str, set[str]]:
    table: dict[str, set[str]] = {}
    for group in SYNONYM_GROUPS:
        for w in group:
            table.setdefault(w, set()).update(x for x in group if x != w)
    return table


GOLDEN_PAIRS = [
    # (hypothesis, reference)
    ("a man is riding a horse", "a man is riding a horse"),
    ("hello", "hello"),
    ("the the the cat", "the cat sat"),
    ("cars", "car"),
    ("the auto parked outside", "the car parked outside"),
    ("d a b c", "a b c d"),
    ("xyz qqq", "aaa bbb ccc"),
    ("a dog runs in the park", "the dog is running in a park"),
    ("two people walking on a beach", "two people walk along the beach"),
    ("a big red bus", "a large red bus"),
    ("she quickly closed the door", "she closed the door quickly"),
    ("a plate of food on a table", "a table with a plate of food"),
    ("the quick brown fox jumped", "the fast brown fox jumps"),
    ("a group of friends", "a large group of friends at a party"),
    ("a photo of a city skyline at night", "picture of a city skyline"),
    ("man rides bike", "a man rides a bike down the street"),
    ("the kitten sleeps on the couch", "a cat sleeping on a sofa"),
    ("three boats docked", "three boats are docked at the pier"),
    ("a woman holding umbrellas", "a woman holds an umbrella"),
    ("children played games outside", "the children play a game outside"),
]


# ---------------------------------------------------------------------------
# BLEU oracle


def _gram_counts(tokens, n):
    counts = {}
    for i in range(len(tokens) - n + 1):
        g = tuple(tokens[i:i + n])
        counts[g] = counts.get(g, 0) + 1
    return counts


def bleu_oracle(hyps, refs_sets, max_n=4, smooth=False):
    import math

    clipped = [0] * max_n
    totals = [0] * max_n
    hyp_len = 0
    ref_len = 0
    for hyp, refs in zip(hyps, refs_sets):
        hyp_len += len(hyp)
        ref_len += min(refs, key=lambda r: (abs(len(r) - len(hyp)), len(r))).__len__()
        for n in range(1, max_n + 1):
            hc = _gram_counts(hyp, n)
            for g, c in hc.items():
                best_ref = max((_gram_counts(r, n).get(g, 0) for r in refs), default=0)
                clipped[n - 1] += min(c, best_ref)
            totals[n - 1] += max(0, len(hyp) - n + 1)
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


# ---------------------------------------------------------------------------
# METEOR oracle


def meteor_align_oracle(hyp, ref, syn):
    used_r = [False] * len(ref)
    pairs = []

    def try_stage(ok):
        for i in range(len(hyp)):
            if any(p[0] == i for p in pairs):
                continue
            for j in range(len(ref)):
                if used_r[j]:
                    continue
                if ok(hyp[i], ref[j]):
                    used_r[j] = True
                    pairs.append((i, j))
                    break

    try_stage(lambda a, b: a == b)
    try_stage(lambda a, b: default_stem(a) == default_stem(b))
    try_stage(lambda a, b: b in syn.get(a, ()) or a in syn.get(b, ()))
    return sorted(pairs)


def meteor_oracle(hyp, ref, syn):
    pairs = meteor_align_oracle(hyp, ref, syn)
    m = len(pairs)
    if m == 0:
        return 0.0
    chunks = 1
    for (h0, r0), (h1, r1) in zip(pairs, pairs[1:]):
        if h1 != h0 + 1 or r1 != r0 + 1:
            chunks += 1
    p = m / len(hyp)
    r = m / len(ref)
    fmean = 10 * p * r / (r + 9 * p)
    return 100.0 * fmean * (1 - 0.5 * (chunks / m) ** 3)


def meteor_corpus_oracle(pairs_tok, syn):
    m = ch = hl = rl = 0
    for hyp, ref in pairs_tok:
        al = meteor_align_oracle(hyp, ref, syn)
        m += len(al)
        if al:
            chunks = 1
            for (h0, r0), (h1, r1) in zip(al, al[1:]):
                if h1 != h0 + 1 or r1 != r0 + 1:
                    chunks += 1
            ch += chunks
        hl += len(hyp)
        rl += len(ref)
    if m == 0:
        return 0.0
    p, r = m / hl, m / rl
    fmean = 10 * p * r / (r + 9 * p)
    return 100.0 * fmean * (1 - 0.5 * (ch / m) ** 3)


# ---------------------------------------------------------------------------
# TER oracles


def lev_oracle(a, b):
    dp = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        dp[i][0] = i
    for j in range(len(b) + 1):
        dp[0][j] = j
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            dp[i][j] = min(
                dp[i - 1][j] + 1,
                dp[i][j - 1] + 1,
                dp[i - 1][j - 1] + (a[i - 1] != b[j - 1]),
            )
    return dp[len(a)][len(b)]


def _all_moves(tokens, max_block):
    n = len(tokens)
    for start in range(n):
        for length in range(1, min(max_block, n - start) + 1):
            block = tokens[start:start + length]
            rest = tokens[:start] + tokens[start + length:]
            for dest in range(len(rest) + 1):
                if dest == start:
                    continue
                yield tuple(rest[:dest] + block + rest[dest:])


def ter_exhaustive(hyp, ref, max_block=10):
    """True minimum edits over all shift sequences (breadth-first with pruning)."""
    best = lev_oracle(list(hyp), list(ref))
    seen = {tuple(hyp): 0}
    frontier = [tuple(hyp)]
    shifts = 0
    while frontier and shifts + 1 < best:
        shifts += 1
        nxt = []
        for state in frontier:
            for moved in _all_moves(list(state), max_block):
                if seen.get(moved, 1 << 30) <= shifts:
                    continue
                seen[moved] = shifts
                cost = shifts + lev_oracle(list(moved), list(ref))
                if cost < best:
                    best = cost
                nxt.append(moved)
        frontier = nxt
    return best


def ter_greedy_hand(hyp, ref, max_block=10):
    """Hand transcription of the documented greedy-shift procedure."""
    cur = list(hyp)
    edits = 0
    while True:
        base = lev_oracle(cur, list(ref))
        if base == 0:
            break
        best = None
        for cand in _all_moves(cur, max_block):
            d = lev_oracle(list(cand), list(ref))
            if best is None or base - d > best[0]:
                best = (base - d, list(cand))
        if best is None or best[0] < 2:
            break
        cur = best[1]
        edits += 1
    return edits + lev_oracle(cur, list(ref))


# ---------------------------------------------------------------------------
# golden file generation


def regenerate():
    syn = synonym_table()
    pairs_tok = [(h.split(), r.split()) for h, r in GOLDEN_PAIRS]
    per_pair = []
    for hyp, ref in pairs_tok:
        greedy = ter_greedy_hand(hyp, ref)
        exhaustive = ter_exhaustive(hyp, ref)
        per_pair.append({
            "hyp": hyp,
            "ref": ref,
            "bleu_smooth": bleu_oracle([hyp], [[ref]], smooth=True),
            "meteor": meteor_oracle(hyp, ref, syn),
            "ter": 100.0 * greedy / len(ref),
            "ter_edits_exhaustive": exhaustive,
        })
    corpus = {
        "bleu": bleu_oracle([h for h, _ in pairs_tok], [[r] for _, r in pairs_tok]),
        "meteor": meteor_corpus_oracle(pairs_tok, syn),
        "ter": 100.0 * sum(ter_greedy_hand(h, r) for h, r in pairs_tok)
        / sum(len(r) for _, r in pairs_tok),
    }
    golden = {
        "synonym_groups": SYNONYM_GROUPS,
        "pairs": per_pair,
        "corpus": corpus,
    }
    GOLDEN_PATH.parent.mkdir(parents=True, exist_ok=True)
    GOLDEN_PATH.write_text(json.dumps(golden, indent=1), encoding="utf-8")
    print(f"wrote {GOLDEN_PATH} with {len(per_pair)} pairs")
    for row in itertools.islice(per_pair, 8):
        print(f"  {' '.join(row['hyp'])!r:45s} meteor={row['meteor']:.3f} ter={row['ter']:.3f}")
    print("corpus:", {k: round(v, 4) for k, v in corpus.items()})


if __name__ == "__main__":
    regenerate()
