"""Experiment harnesses: ablations, throughput, synthetic corpus, rating packs.

The synthetic role-swap corpus plants two independent binary ambiguities in
every sentence, each invisible in the surface tokens: the verb's sense lives
only in the frame channel and the agent/patient assignment only in the role
channel.  Variants are emitted in exactly balanced groups of four, so a
channel-blind predictor is capped at 50% exact match per hidden coin (25%
with both coins blind) while the annotations determine the target uniquely.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .attention_io import write_attention_dump
from .data import (
    AnnotatedSentence,
    ParaphrasePair,
    VocabBundle,
    build_vocabularies,
    load_pairs,
    pair_to_line,
    write_pairs,
)
from .errors import ContractError, DataError
from .metrics import MetricReport, evaluate_corpus
from .models import ModelConfig, PB_FAMILIES, Seq2SeqModel, build_model, save_model
from .rng import SplitMix64, mix64

# ---------------------------------------------------------------------------
# synthetic role-swap corpus

NOUNS = ["boxer", "priest", "farmer", "singer", "doctor", "pilot", "teacher", "lawyer"]

# surface verb -> two senses: (frame label, output verb)
AMBIGUOUS_VERBS = {
    "saw": (("/pb/see-01", "watched"), ("/pb/saw-02", "sliced")),
    "boxed": (("/pb/box-01", "punched"), ("/pb/box-02", "packed")),
    "ducked": (("/pb/duck-01", "dodged"), ("/pb/duck-02", "dunked")),
    "rocked": (("/pb/rock-01", "swayed"), ("/pb/rock-02", "hurled")),
}

SENSE_TO_OUTPUT = {frame: verb for senses in AMBIGUOUS_VERBS.values() for frame, verb in senses}

AMBIGUITY_RATE = 0.5  # each hidden coin is a planted 50/50 split


@dataclass
class SynthReport:
    path: Path
    size: int
    ambiguity_rate: float


def _synth_pair(n1: str, n2: str, verb: str, role_coin: int, frame_coin: int) -> ParaphrasePair:
    frame, out_verb = AMBIGUOUS_VERBS[verb][frame_coin]
    roles = ("arg0", "arg1") if role_coin == 0 else ("arg1", "arg0")
    src = AnnotatedSentence(
        ["the", n1, verb, "the", n2],
        ["O", "person", frame, "O", "person"],
        ["O", roles[0], "O", "O", roles[1]],
    )
    agent, patient = (n1, n2) if role_coin == 0 else (n2, n1)
    return ParaphrasePair(src, AnnotatedSentence([agent, out_verb, patient]))


def make_synthetic_corpus(out_path, size: int, seed: int) -> SynthReport:
    """Deterministic role-swap corpus; same (size, seed) gives identical bytes.

    Pairs are emitted in groups of four covering both coins of one template,
    then shuffled; a size not divisible by four truncates the last group.
    """
    if size < 100:
        raise ContractError(f"synthetic corpus needs size >= 100, got {size}")
    rng = SplitMix64(mix64(seed, 0x51F7))
    verbs = sorted(AMBIGUOUS_VERBS)
    pairs: list[ParaphrasePair] = []
    while len(pairs) < size:
        n1 = NOUNS[rng.randrange(len(NOUNS))]
        n2 = NOUNS[rng.randrange(len(NOUNS) - 1)]
        if n2 == n1:  # distinct nouns keep the role swap observable
            n2 = NOUNS[-1]
        verb = verbs[rng.randrange(len(verbs))]
        for role_coin in (0, 1):
            for frame_coin in (0, 1):
                pairs.append(_synth_pair(n1, n2, verb, role_coin, frame_coin))
    pairs = pairs[:size]
    rng.shuffle(pairs)
    write_pairs(out_path, pairs)
    return SynthReport(path=Path(out_path), size=size, ambiguity_rate=AMBIGUITY_RATE)


def role_aware_paraphrase(src: AnnotatedSentence) -> list[str]:
    """Rule oracle: reads the annotations, so it is exact by construction."""
    verb_out = None
    agent = patient = None
    for token, frame, role in zip(src.tokens, src.frames, src.roles):
        if frame in SENSE_TO_OUTPUT:
            verb_out = SENSE_TO_OUTPUT[frame]
        if role == "arg0":
            agent = token
        elif role == "arg1":
            patient = token
    if verb_out is None or agent is None or patient is None:
        raise DataError("sentence does not carry role-swap annotations")
    return [agent, verb_out, patient]


def blind_bayes_cap(pairs: list[ParaphrasePair], see_frames: bool) -> float:
    """Exact-match ceiling of a Bayes-optimal predictor shown tokens
    (and optionally frames) but never roles."""
    groups: dict[tuple, dict[tuple, int]] = {}
    for pair in pairs:
        key = tuple(pair.src.tokens) + (tuple(pair.src.frames) if see_frames else ())
        tgt = tuple(pair.tgt.tokens)
        groups.setdefault(key, {})
        groups[key][tgt] = groups[key].get(tgt, 0) + 1
    hits = sum(max(targets.values()) for targets in groups.values())
    return hits / len(pairs)


# ---------------------------------------------------------------------------
# training / evaluation loops


def train_model(model: Seq2SeqModel, pairs: list[ParaphrasePair], steps: int,
                batch_size: int = 32) -> list[float]:
    """Seeded-shuffle epochs over ``pairs``; returns the ce trajectory."""
    if not pairs:
        raise DataError("no training pairs")
    steps_per_epoch = max(1, math.ceil(len(pairs) / batch_size))
    model.set_training_horizon(steps, steps_per_epoch)
    rng = SplitMix64(mix64(model.config.seed, 0x0B47C4))
    order = list(range(len(pairs)))
    ces = []
    cursor = 0
    for _ in range(steps):
        if cursor == 0:
            rng.shuffle(order)
        batch = [pairs[i] for i in order[cursor:cursor + batch_size]]
        cursor += batch_size
        if cursor >= len(pairs):
            cursor = 0
        ces.append(model.train_step(batch).ce)
    return ces


@dataclass
class EvalResult:
    exact_match: float
    report: MetricReport
    predictions: list[list[str]]
    references: list[list[str]]


def evaluate_model(model: Seq2SeqModel, pairs: list[ParaphrasePair],
                   min_eval_len: int | None = None, truncate_eval: bool = True,
                   batch_size: int = 32) -> EvalResult:
    if min_eval_len is not None:
        pairs = [p for p in pairs if len(p.src.tokens) >= min_eval_len]
    if not pairs:
        raise DataError("no pairs left to evaluate (length filter too strict?)")
    max_len = model.config.max_len
    refs = []
    for p in pairs:
        tgt = p.tgt.truncated(max_len) if truncate_eval else p.tgt
        refs.append([t.lower() for t in tgt.tokens])
    preds: list[list[str]] = []
    for i in range(0, len(pairs), batch_size):
        chunk = [p.src for p in pairs[i:i + batch_size]]
        for ids in model.decode_sentences(chunk):
            preds.append([model.vocabs.tokens.decode(t) for t in ids])
    exact = float(np.mean([p == r for p, r in zip(preds, refs)]))
    return EvalResult(exact_match=exact, report=evaluate_corpus(preds, refs),
                      predictions=preds, references=refs)


def write_predictions(path, pairs: list[ParaphrasePair], preds: list[list[str]]) -> None:
    import json

    with open(path, "w", encoding="utf-8") as f:
        for pair, pred in zip(pairs, preds):
            obj = {"src": pair.src.to_dict(), "tgt": pair.tgt.to_dict(), "pred": pred}
            f.write(json.dumps(obj, ensure_ascii=False))
            f.write("\n")


# ---------------------------------------------------------------------------
# experiment spec + ablation sweep


@dataclass
class ExperimentSpec:
    dataset: Path
    configs: list[ModelConfig]
    out_dir: Path
    max_len: int = 15
    min_eval_len: int | None = None
    truncate_eval: bool = True
    subsample_size: int | None = None
    ablation: list[str] = field(default_factory=lambda: ["none", "frame_only", "role_only", "both"])
    seed: int = 0
    train_steps: int = 1000
    batch_size: int = 32
    test_size: int | None = None  # held-out tail after a seeded shuffle
    attention_samples: int = 0


@dataclass
class AblationRow:
    mask: str
    family: str
    exact_match: float
    report: MetricReport


BASE_OF_PB = {"transformer_pb": "transformer", "sr_lstm_pb": "sr_lstm"}


def _split_dataset(spec: ExperimentSpec) -> tuple[list[ParaphrasePair], list[ParaphrasePair]]:
    pairs = load_pairs(spec.dataset)
    rng = SplitMix64(mix64(spec.seed, 0x59117))
    rng.shuffle(pairs)
    if spec.test_size:
        if spec.test_size >= len(pairs):
            raise DataError(f"test_size {spec.test_size} >= corpus size {len(pairs)}")
        train, test = pairs[:-spec.test_size], pairs[-spec.test_size:]
    else:
        train, test = pairs, pairs
    if spec.subsample_size is not None:
        if spec.subsample_size > len(train):
            raise DataError(f"subsample_size {spec.subsample_size} > corpus size {len(train)}")
        idx = SplitMix64(mix64(spec.seed, 0x5AB5)).sample_indices(len(train), spec.subsample_size)
        train = [train[i] for i in sorted(idx)]
    return train, test


def run_ablation(spec: ExperimentSpec) -> list[AblationRow]:
    """Train one model per channel mask with a shared seed and vocabulary."""
    base = spec.configs[0]
    if base.family not in PB_FAMILIES:
        raise ContractError(f"ablation needs a *_pb base config, got {base.family}")
    train, test = _split_dataset(spec)
    annotated = any(f != "O" for p in train for f in p.src.frames)
    if any(m != "none" for m in spec.ablation) and not annotated:
        raise DataError("dataset carries no frame/role annotations; cannot run channel ablation")
    vocabs = build_vocabularies(train)

    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows: list[AblationRow] = []
    for mask in spec.ablation:
        if mask == "none":
            cfg = replace(base, family=BASE_OF_PB[base.family], channel_mask="none",
                          max_len=spec.max_len, seed=spec.seed)
        else:
            cfg = replace(base, channel_mask=mask, max_len=spec.max_len, seed=spec.seed)
        model = build_model(cfg, vocabs)
        train_model(model, train, spec.train_steps, spec.batch_size)
        result = evaluate_model(model, test, spec.min_eval_len, spec.truncate_eval)
        arm_dir = out_dir / mask
        arm_dir.mkdir(exist_ok=True)
        test_used = ([p for p in test if len(p.src.tokens) >= spec.min_eval_len]
                     if spec.min_eval_len else test)
        write_predictions(arm_dir / "predictions.jsonl", test_used, result.predictions)
        _dump_attention_samples(model, test_used, arm_dir, spec.attention_samples)
        rows.append(AblationRow(mask=mask, family=cfg.family,
                                exact_match=result.exact_match, report=result.report))

    lines = ["mask\tfamily\texact_match\tbleu\tmeteor\tter\tsentences"]
    for row in rows:
        r = row.report
        lines.append(f"{row.mask}\t{row.family}\t{row.exact_match:.6f}\t"
                     f"{r.bleu:.6f}\t{r.meteor:.6f}\t{r.ter:.6f}\t{r.sentence_count}")
    (out_dir / "metrics.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    snapshot = [base.to_text(), f"dataset = {spec.dataset}", f"seed = {spec.seed}",
                f"train_steps = {spec.train_steps}", f"ablation = {','.join(spec.ablation)}"]
    (out_dir / "config.snapshot").write_text("\n".join(snapshot) + "\n", encoding="utf-8")
    return rows


def _dump_attention_samples(model: Seq2SeqModel, pairs, arm_dir: Path, count: int) -> None:
    if count <= 0:
        return
    channels = ("token", "frame", "role") if model.config.family in PB_FAMILIES else ("token",)
    att_dir = arm_dir / "attention"
    att_dir.mkdir(exist_ok=True)
    for i, pair in enumerate(pairs[:count]):
        result = model.greedy_decode(pair.src)
        if result.trace is None or not result.trace.layers:
            continue
        write_attention_dump(result.trace, att_dir / f"sentence_{i:04d}.jsonl", channels)


# ---------------------------------------------------------------------------
# throughput benchmark


@dataclass
class ThroughputReport:
    family: str
    parameters: int
    tokens_per_step: int
    tokens_per_sec: float


def bench_vocab() -> VocabBundle:
    words = [f"w{i:02d}" for i in range(40)]
    pairs = [ParaphrasePair(AnnotatedSentence([w]), AnnotatedSentence([w])) for w in words]
    return build_vocabularies(pairs)


def bench_sentences(vocabs: VocabBundle, batch_size: int, length: int, seed: int) -> list[AnnotatedSentence]:
    rng = SplitMix64(mix64(seed, 0xBE7C4))
    words = [w for w in vocabs.tokens.items[4:]]
    return [
        AnnotatedSentence([words[rng.randrange(len(words))] for _ in range(length)])
        for _ in range(batch_size)
    ]


def benchmark_throughput(configs: list[ModelConfig], batch_size: int = 32,
                         steps: int = 30, warmup: int = 3) -> list[ThroughputReport]:
    """Median greedy-decode throughput over ``steps`` timed batches.

    Generation runs to max_len for every sentence (no early EOS stop), so the
    token streams are deterministic and the workload identical across
    architectures; timings are wall clock and excluded from any determinism
    guarantees.
    """
    if steps < 10:
        raise ContractError(f"benchmark needs steps >= 10, got {steps}")
    vocabs = bench_vocab()
    reports = []
    for cfg in configs:
        model = build_model(cfg, vocabs)
        sentences = bench_sentences(vocabs, batch_size, cfg.max_len, cfg.seed)
        max_out = cfg.max_len
        for _ in range(warmup):
            model.decode_sentences(sentences, max_out=max_out, stop_at_eos=False)
        rates = []
        tokens = batch_size * max_out
        for _ in range(steps):
            t0 = time.perf_counter()
            model.decode_sentences(sentences, max_out=max_out, stop_at_eos=False)
            rates.append(tokens / (time.perf_counter() - t0))
        reports.append(ThroughputReport(
            family=cfg.family,
            parameters=model.describe()["total_parameters"],
            tokens_per_step=tokens,
            tokens_per_sec=float(np.median(rates)),
        ))
    return reports


def matched_lstm_config(tf_config: ModelConfig, tolerance: float = 0.10) -> ModelConfig:
    """An sr_lstm config whose parameter count matches the transformer's.

    Walks hidden_dim until the totals agree within ``tolerance`` (counts are
    monotone in hidden_dim).
    """
    vocabs = bench_vocab()
    target = build_model(tf_config, vocabs).describe()["total_parameters"]

    def count(h: int) -> int:
        cfg = replace(tf_config, family="sr_lstm", channel_mask="none", hidden_dim=h)
        return build_model(cfg, vocabs).describe()["total_parameters"]

    lo, hi = 8, 2048
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if count(mid) < target:
            lo = mid
        else:
            hi = mid
    best = min((lo, hi), key=lambda h: abs(count(h) - target))
    if abs(count(best) - target) / target > tolerance:
        raise DataError(f"could not match parameter counts within {tolerance:.0%}")
    return replace(tf_config, family="sr_lstm", channel_mask="none", hidden_dim=best)


# ---------------------------------------------------------------------------
# human-evaluation rating packs


EVAL_PACK_MODES = ("task1_pair", "task2_triple", "task3_image")


def export_eval_pack(predictions_path, mode: str, sample: int, seed: int, out_dir) -> tuple[Path, Path]:
    """Blinded, shuffled rating sheet plus a separate answer key.

    task1_pair rows are (id, s1=target, s2=prediction); task2_triple adds the
    source as context; task3_image pairs an image reference with the
    prediction.  The key maps item ids back to prediction line numbers.
    """
    import json

    if mode not in EVAL_PACK_MODES:
        raise ContractError(f"unknown eval-pack mode {mode!r}")
    records = []
    with open(predictions_path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f):
            raw = raw.strip()
            if raw:
                records.append((lineno, json.loads(raw)))
    if sample > len(records):
        raise DataError(f"requested sample {sample} > available predictions {len(records)}")
    rng = SplitMix64(mix64(seed, 0xEA7))
    chosen = [records[i] for i in rng.sample_indices(len(records), sample)]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sheet_path = out / f"{mode}_sheet.tsv"
    key_path = out / f"{mode}_key.tsv"
    sheet_rows, key_rows = [], []
    if mode == "task1_pair":
        sheet_rows.append("id\ts1\ts2")
    elif mode == "task2_triple":
        sheet_rows.append("id\ts1\ts2\ts3")
    else:
        sheet_rows.append("id\timage\tcaption")
    key_rows.append("id\tprediction_line")
    for k, (lineno, rec) in enumerate(chosen):
        item = f"item-{k:04d}"
        tgt = " ".join(rec["tgt"]["tokens"])
        src = " ".join(rec["src"]["tokens"])
        pred = " ".join(rec["pred"])
        if mode == "task1_pair":
            sheet_rows.append(f"{item}\t{tgt}\t{pred}")
        elif mode == "task2_triple":
            sheet_rows.append(f"{item}\t{tgt}\t{src}\t{pred}")
        else:
            image = rec.get("image", f"image-{lineno:06d}")
            sheet_rows.append(f"{item}\t{image}\t{pred}")
        key_rows.append(f"{item}\t{lineno}")
    sheet_path.write_text("\n".join(sheet_rows) + "\n", encoding="utf-8")
    key_path.write_text("\n".join(key_rows) + "\n", encoding="utf-8")
    return sheet_path, key_path
