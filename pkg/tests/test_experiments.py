"""Harness contracts: synthetic corpus, loops, ablation plumbing, eval packs."""

import json
from pathlib import Path

import numpy as np
import pytest

from semaphrase.data import AnnotatedSentence, ParaphrasePair, build_vocabularies, load_pairs, write_pairs
from semaphrase.errors import ContractError, DataError
from semaphrase.experiments import (
    AMBIGUITY_RATE,
    ExperimentSpec,
    benchmark_throughput,
    blind_bayes_cap,
    evaluate_model,
    export_eval_pack,
    make_synthetic_corpus,
    matched_lstm_config,
    role_aware_paraphrase,
    run_ablation,
    train_model,
    write_predictions,
)
from semaphrase.models import ModelConfig, build_model


# ---------------------------------------------------------------------------
# synthetic role-swap corpus


def test_synth_corpus_is_byte_deterministic(tmp_path):
    a = make_synthetic_corpus(tmp_path / "a.jsonl", 200, seed=7)
    b = make_synthetic_corpus(tmp_path / "b.jsonl", 200, seed=7)
    assert a.path.read_bytes() == b.path.read_bytes()
    c = make_synthetic_corpus(tmp_path / "c.jsonl", 200, seed=8)
    assert a.path.read_bytes() != c.path.read_bytes()


def test_synth_corpus_size_and_rate(tmp_path):
    report = make_synthetic_corpus(tmp_path / "s.jsonl", 204, seed=1)
    assert report.size == 204
    assert report.ambiguity_rate == AMBIGUITY_RATE == 0.5
    assert len(load_pairs(report.path)) == 204
    with pytest.raises(ContractError):
        make_synthetic_corpus(tmp_path / "too_small.jsonl", 99, seed=1)


def test_role_aware_oracle_is_exact(tmp_path):
    report = make_synthetic_corpus(tmp_path / "s.jsonl", 400, seed=3)
    pairs = load_pairs(report.path)
    assert all(role_aware_paraphrase(p.src) == p.tgt.tokens for p in pairs)


def test_blind_bayes_caps_match_construction(tmp_path):
    # balanced coin groups: frames-visible predictor capped at 1 - ambiguity_rate,
    # fully channel-blind predictor at (1 - ambiguity_rate)^2
    report = make_synthetic_corpus(tmp_path / "s.jsonl", 400, seed=5)
    pairs = load_pairs(report.path)
    assert blind_bayes_cap(pairs, see_frames=True) == pytest.approx(0.5)
    assert blind_bayes_cap(pairs, see_frames=False) == pytest.approx(0.25)


def test_oracle_rejects_unannotated_sentence():
    with pytest.raises(DataError):
        role_aware_paraphrase(AnnotatedSentence(["no", "annotations", "here"]))


# ---------------------------------------------------------------------------
# training / evaluation loops


def _tiny_corpus(tmp_path, size=120, seed=2):
    report = make_synthetic_corpus(tmp_path / "corpus.jsonl", size, seed=seed)
    return load_pairs(report.path)


def _tiny_config(family="transformer", **over):
    base = dict(family=family, model_dim=16, hidden_dim=16, num_blocks=1, num_heads=2,
                dropout_p=0.0, max_len=15, seed=4, learning_rate=3e-3,
                warmup_steps=10, lr_decay=1.0)
    base.update(over)
    return ModelConfig(**base)


def test_train_model_is_deterministic(tmp_path):
    pairs = _tiny_corpus(tmp_path)
    vocabs = build_vocabularies(pairs)

    def run():
        model = build_model(_tiny_config(), vocabs)
        return train_model(model, pairs, steps=8, batch_size=16)

    assert run() == run()


def test_evaluate_model_length_filter(tmp_path):
    pairs = _tiny_corpus(tmp_path)
    long_pair = ParaphrasePair(
        AnnotatedSentence([f"w{i}" for i in range(25)]),
        AnnotatedSentence(["out"]),
    )
    mixed = pairs[:10] + [long_pair]
    vocabs = build_vocabularies(mixed)
    model = build_model(_tiny_config(max_len=30), vocabs)
    result = evaluate_model(model, mixed, min_eval_len=21)
    assert result.report.sentence_count == 1  # only the >20-token sentence survives
    with pytest.raises(DataError):
        evaluate_model(model, pairs[:5], min_eval_len=21)


def test_subsample_without_replacement(tmp_path):
    pairs = [
        ParaphrasePair(AnnotatedSentence([f"u{i}", "a"]), AnnotatedSentence([f"v{i}"]))
        for i in range(160)
    ]
    write_pairs(tmp_path / "all.jsonl", pairs)
    spec = ExperimentSpec(
        dataset=tmp_path / "all.jsonl",
        configs=[_tiny_config("transformer_pb")],
        out_dir=tmp_path / "out",
        subsample_size=40,
        seed=9,
    )
    from semaphrase.experiments import _split_dataset

    train, _ = _split_dataset(spec)
    assert len(train) == 40
    from semaphrase.data import pair_to_line

    assert len({pair_to_line(p) for p in train}) == 40  # corpus pairs are unique here

    spec_bad = ExperimentSpec(
        dataset=tmp_path / "all.jsonl",
        configs=[_tiny_config("transformer_pb")],
        out_dir=tmp_path / "out2",
        subsample_size=1000,
        seed=9,
    )
    with pytest.raises(DataError, match="subsample"):
        _split_dataset(spec_bad)


# ---------------------------------------------------------------------------
# ablation plumbing (full-strength sweep lives in the acceptance suite)


def test_ablation_single_mask_row_and_outputs(tmp_path):
    make_synthetic_corpus(tmp_path / "corpus.jsonl", 120, seed=6)
    spec = ExperimentSpec(
        dataset=tmp_path / "corpus.jsonl",
        configs=[_tiny_config("transformer_pb")],
        out_dir=tmp_path / "out",
        ablation=["both"],
        seed=6,
        train_steps=4,
        batch_size=32,
        test_size=20,
        attention_samples=1,
    )
    rows = run_ablation(spec)
    assert len(rows) == 1
    assert rows[0].mask == "both"
    assert rows[0].family == "transformer_pb"
    assert (tmp_path / "out" / "metrics.tsv").exists()
    assert (tmp_path / "out" / "config.snapshot").exists()
    assert (tmp_path / "out" / "both" / "predictions.jsonl").exists()
    assert (tmp_path / "out" / "both" / "attention" / "sentence_0000.jsonl").exists()


def test_ablation_requires_annotations(tmp_path):
    pairs = [
        ParaphrasePair(AnnotatedSentence(["a", "b"]), AnnotatedSentence(["b", "a"]))
        for _ in range(8)
    ]
    write_pairs(tmp_path / "plain.jsonl", pairs)
    spec = ExperimentSpec(
        dataset=tmp_path / "plain.jsonl",
        configs=[_tiny_config("transformer_pb")],
        out_dir=tmp_path / "out",
        ablation=["both"],
        train_steps=1,
    )
    with pytest.raises(DataError, match="annotations"):
        run_ablation(spec)


def test_ablation_rerun_reproduces_metrics_file(tmp_path):
    make_synthetic_corpus(tmp_path / "corpus.jsonl", 120, seed=3)
    def sweep(out):
        spec = ExperimentSpec(
            dataset=tmp_path / "corpus.jsonl",
            configs=[_tiny_config("transformer_pb")],
            out_dir=out,
            ablation=["none", "both"],
            seed=3,
            train_steps=3,
            test_size=20,
        )
        run_ablation(spec)
        return (out / "metrics.tsv").read_bytes()

    assert sweep(tmp_path / "run1") == sweep(tmp_path / "run2")


# ---------------------------------------------------------------------------
# throughput benchmark plumbing


def test_benchmark_requires_ten_steps():
    with pytest.raises(ContractError):
        benchmark_throughput([_tiny_config()], steps=5)


def test_benchmark_reports_per_config():
    reports = benchmark_throughput(
        [_tiny_config("transformer"), _tiny_config("sr_lstm")], batch_size=4, steps=10, warmup=1
    )
    assert [r.family for r in reports] == ["transformer", "sr_lstm"]
    assert all(r.tokens_per_sec > 0 for r in reports)
    assert all(r.tokens_per_step == 4 * 15 for r in reports)


def test_doubling_batch_size_amortizes_transformer_decode():
    # per-token throughput should not decrease when the batch doubles; the
    # 0.9 factor absorbs wall-clock jitter, the real effect is much larger
    cfg = _tiny_config("transformer", model_dim=32, num_blocks=2)
    small = benchmark_throughput([cfg], batch_size=16, steps=12, warmup=2)[0]
    large = benchmark_throughput([cfg], batch_size=32, steps=12, warmup=2)[0]
    assert large.tokens_per_sec >= 0.9 * small.tokens_per_sec


def test_matched_lstm_config_within_tolerance():
    tf = _tiny_config("transformer", model_dim=64, num_blocks=2)
    lstm_cfg = matched_lstm_config(tf)
    from semaphrase.experiments import bench_vocab

    vocabs = bench_vocab()
    a = build_model(tf, vocabs).describe()["total_parameters"]
    b = build_model(lstm_cfg, vocabs).describe()["total_parameters"]
    assert abs(a - b) / a <= 0.10


# ---------------------------------------------------------------------------
# eval packs


def _write_predictions_file(tmp_path, n=12):
    pairs = [
        ParaphrasePair(AnnotatedSentence([f"s{i}", "x"]), AnnotatedSentence([f"t{i}", "y"]))
        for i in range(n)
    ]
    preds = [[f"p{i}", "z"] for i in range(n)]
    path = tmp_path / "predictions.jsonl"
    write_predictions(path, pairs, preds)
    return path


def test_eval_pack_task1_shape_and_determinism(tmp_path):
    path = _write_predictions_file(tmp_path, 30)
    sheet1, key1 = export_eval_pack(path, "task1_pair", sample=10, seed=5, out_dir=tmp_path / "p1")
    sheet2, _ = export_eval_pack(path, "task1_pair", sample=10, seed=5, out_dir=tmp_path / "p2")
    rows = sheet1.read_text().strip().splitlines()
    assert rows[0] == "id\ts1\ts2"
    assert len(rows) == 11
    assert sheet1.read_bytes() == sheet2.read_bytes()


def test_eval_pack_key_joins_back_losslessly(tmp_path):
    path = _write_predictions_file(tmp_path, 20)
    sheet, key = export_eval_pack(path, "task2_triple", sample=8, seed=2, out_dir=tmp_path / "p")
    records = [json.loads(line) for line in path.read_text().splitlines()]
    key_rows = [line.split("\t") for line in key.read_text().strip().splitlines()[1:]]
    sheet_rows = [line.split("\t") for line in sheet.read_text().strip().splitlines()[1:]]
    for (item_k, lineno), (item_s, s1, s2, s3) in zip(key_rows, sheet_rows):
        assert item_k == item_s
        rec = records[int(lineno)]
        assert s1 == " ".join(rec["tgt"]["tokens"])
        assert s2 == " ".join(rec["src"]["tokens"])
        assert s3 == " ".join(rec["pred"])


def test_eval_pack_sample_too_large(tmp_path):
    path = _write_predictions_file(tmp_path, 5)
    with pytest.raises(DataError):
        export_eval_pack(path, "task1_pair", sample=6, seed=0, out_dir=tmp_path / "p")


def test_eval_pack_task3_image_columns(tmp_path):
    path = _write_predictions_file(tmp_path, 6)
    sheet, _ = export_eval_pack(path, "task3_image", sample=3, seed=1, out_dir=tmp_path / "p")
    rows = sheet.read_text().strip().splitlines()
    assert rows[0] == "id\timage\tcaption"
    assert all(len(r.split("\t")) == 3 for r in rows[1:])
