"""Command-line entry point.

Subcommands: train, generate, evaluate, ablate, bench, synth, eval-pack,
dump-attention, convert.  Every subcommand honors --seed, and all artifacts
written under --out are pure functions of (inputs, flags, seed); the bench
prints wall-clock rates to stdout and deliberately writes no artifacts.

Exit codes: 0 success, 1 usage error, 2 data error, 3 training divergence.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields, replace
from pathlib import Path

from .attention_io import write_attention_dump
from .data import (
    AnnotatedSentence,
    build_vocabularies,
    convert_jsonl_to_tsv,
    convert_tsv_to_jsonl,
    demo_lexicon,
    load_pairs,
    stub_annotate,
)
from .errors import ContractError, DataError, SemaError, TrainingDivergence
from .experiments import (
    ExperimentSpec,
    benchmark_throughput,
    evaluate_model,
    export_eval_pack,
    make_synthetic_corpus,
    matched_lstm_config,
    run_ablation,
    train_model,
    write_predictions,
)
from .layers import INIT_SIGMA
from .metrics import evaluate_corpus, load_synonyms, per_sentence_rows
from .models import (
    FAMILIES,
    PB_FAMILIES,
    ModelConfig,
    build_model,
    load_model,
    save_model,
)

USAGE_EXIT, DATA_EXIT, DIVERGENCE_EXIT = 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_EXIT)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value file with ModelConfig fields")
    p.add_argument("--family", choices=FAMILIES)
    for name, typ in (("num-blocks", int), ("num-heads", int), ("model-dim", int),
                      ("hidden-dim", int), ("dropout-p", float), ("max-len", int),
                      ("learning-rate", float), ("warmup-steps", int), ("lr-decay", float),
                      ("latent-dim", int), ("kl-weight", float)):
        p.add_argument(f"--{name}", type=typ)
    p.add_argument("--channel-mask", choices=("none", "frame_only", "role_only", "both"))
    p.add_argument("--norm-style", choices=("paper", "post"))
    p.add_argument("--weight-decay-mode", choices=("lr_decay", "l2"))
    p.add_argument("--seed", type=int)  # default comes from the config file (or 0)


def _config_from_args(args) -> ModelConfig:
    """File config first (when given), then explicit flags win."""
    overrides = {}
    for f in fields(ModelConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            overrides[f.name] = value
    if args.config:
        cfg = ModelConfig.from_text(Path(args.config).read_text(encoding="utf-8"))
        return replace(cfg, **overrides)
    overrides.setdefault("seed", 0)
    if not overrides.get("family"):
        raise ContractError("--family (or --config with a family line) is required")
    return ModelConfig(**overrides)


def _load_embeddings(model, path: Path) -> int:
    """GloVe-format text vectors: word then space-separated floats per line."""
    table = model.parameters()["embeddings.tokens"]
    dim = table.data.shape[1]
    loaded = 0
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            parts = raw.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            word, values = parts[0], parts[1:]
            if len(values) != dim:
                raise DataError(
                    f"{path}: line {lineno} has {len(values)} dims, embedding table has {dim}"
                )
            if word in model.vocabs.tokens:
                table.data[model.vocabs.tokens.encode(word)] = [float(v) for v in values]
                loaded += 1
    return loaded  # words absent from the file keep their random init


# ---------------------------------------------------------------------------
# subcommands


def _cmd_train(args) -> int:
    cfg = _config_from_args(args)
    pairs = load_pairs(args.data)
    if not pairs:
        raise DataError(f"{args.data}: no training pairs")
    vocabs = build_vocabularies(pairs, args.min_count)
    model = build_model(cfg, vocabs)
    if args.embeddings:
        n = _load_embeddings(model, args.embeddings)
        print(f"initialized {n} embedding rows from {args.embeddings} "
              f"(missing words keep N(0, {INIT_SIGMA}) init)")
    ces = train_model(model, pairs, args.steps, args.batch_size)
    save_model(model, args.out)
    print(f"trained {cfg.family} for {args.steps} steps; final ce {ces[-1]:.4f}; "
          f"checkpoint at {args.out}")
    return 0


def _cmd_generate(args) -> int:
    model = load_model(args.ckpt)
    pairs = load_pairs(args.data)
    result = evaluate_model(model, pairs, batch_size=args.batch_size)
    write_predictions(args.out, pairs, result.predictions)
    print(f"wrote {len(result.predictions)} predictions to {args.out} "
          f"(exact match {result.exact_match:.3f})")
    return 0


def _read_token_lines(path) -> list[list[str]]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [line.split() for line in lines if line.strip()]


def _cmd_evaluate(args) -> int:
    hyps = _read_token_lines(args.hyp)
    refs = _read_token_lines(args.ref)
    if len(hyps) != len(refs):
        raise DataError(f"hypothesis/reference line counts differ: {len(hyps)} vs {len(refs)}")
    synonyms = load_synonyms(args.synonyms) if args.synonyms else None
    report = evaluate_corpus(hyps, refs, synonyms=synonyms)
    text = report.to_text()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    if args.per_sentence:
        Path(args.per_sentence).write_text(
            "\n".join(per_sentence_rows(hyps, refs, synonyms=synonyms)) + "\n", encoding="utf-8"
        )
    return 0


def _cmd_ablate(args) -> int:
    cfg = _config_from_args(args)
    if cfg.family not in PB_FAMILIES:
        raise ContractError(f"--family must be a *_pb family for ablation, got {cfg.family}")
    spec = ExperimentSpec(
        dataset=args.data,
        configs=[cfg],
        out_dir=args.out,
        max_len=cfg.max_len,
        min_eval_len=args.min_eval_len,
        subsample_size=args.subsample,
        ablation=args.masks.split(","),
        seed=cfg.seed,
        train_steps=args.steps,
        batch_size=args.batch_size,
        test_size=args.test_size,
        attention_samples=args.attention_samples,
    )
    rows = run_ablation(spec)
    print("mask\tfamily\texact_match\tbleu\tmeteor\tter")
    for row in rows:
        r = row.report
        print(f"{row.mask}\t{row.family}\t{row.exact_match:.4f}\t{r.bleu:.2f}\t{r.meteor:.2f}\t{r.ter:.2f}")
    return 0


def _cmd_bench(args) -> int:
    families = args.families.split(",")
    configs = []
    tf_cfg = None
    for family in families:
        if family not in FAMILIES:
            raise ContractError(f"unknown family {family!r}")
        cfg = ModelConfig(
            family=family, model_dim=args.model_dim, hidden_dim=args.hidden_dim or args.model_dim,
            num_blocks=args.num_blocks, num_heads=args.num_heads, dropout_p=0.0,
            max_len=args.max_len, seed=args.seed,
        )
        if family == "transformer":
            tf_cfg = cfg
        if family == "sr_lstm" and args.match_params and tf_cfg is not None:
            cfg = matched_lstm_config(tf_cfg)
        configs.append(cfg)
    reports = benchmark_throughput(configs, batch_size=args.batch, steps=args.steps)
    print("family\tparameters\ttokens_per_step\ttokens_per_sec")
    for rep in reports:
        print(f"{rep.family}\t{rep.parameters}\t{rep.tokens_per_step}\t{rep.tokens_per_sec:.1f}")
    return 0


def _cmd_synth(args) -> int:
    report = make_synthetic_corpus(args.out, args.size, args.seed)
    print(f"wrote {report.size} pairs to {report.path}")
    print(f"ambiguity_rate\t{report.ambiguity_rate}")
    return 0


def _cmd_eval_pack(args) -> int:
    sheet, key = export_eval_pack(args.predictions, args.mode, args.sample, args.seed, args.out)
    print(f"sheet: {sheet}\nkey:   {key}")
    return 0


def _cmd_dump_attention(args) -> int:
    model = load_model(args.ckpt)
    if args.sentence:
        tokens = args.sentence.split()
        sent = stub_annotate(demo_lexicon(), tokens) if args.annotate else AnnotatedSentence(tokens)
    else:
        pairs = load_pairs(args.data)
        if args.index >= len(pairs):
            raise DataError(f"--index {args.index} out of range for {len(pairs)} pairs")
        sent = pairs[args.index].src
    if args.channels:
        channels = tuple(args.channels.split(","))
    else:
        channels = ("token", "frame", "role") if model.config.family in PB_FAMILIES else ("token",)
    if model.config.family not in PB_FAMILIES and set(channels) - {"token"}:
        raise DataError(f"{model.config.family} has no frame/role channels to dump")
    result = model.greedy_decode(sent)
    if result.trace is None or not result.trace.layers:
        raise DataError(f"{model.config.family} exposes no attention to dump")
    write_attention_dump(result.trace, args.out, channels)
    print(f"decoded: {' '.join(result.tokens)}")
    print(f"wrote {len(channels)} channel record(s) to {args.out}")
    return 0


def _cmd_convert(args) -> int:
    src, out = Path(args.infile), Path(args.out)
    if src.suffix == ".tsv" and out.suffix == ".jsonl":
        n = convert_tsv_to_jsonl(src, out)
    elif src.suffix == ".jsonl" and out.suffix == ".tsv":
        n = convert_jsonl_to_tsv(src, out)
    else:
        raise ContractError(f"convert needs .tsv->.jsonl or .jsonl->.tsv, got {src.suffix}->{out.suffix}")
    print(f"converted {n} pairs: {src} -> {out}")
    return 0


# ---------------------------------------------------------------------------
# wiring


def build_parser() -> _Parser:
    parser = _Parser(prog="semaphrase", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    _add_config_flags(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--min-count", type=int, default=1)
    p.add_argument("--embeddings", type=Path, help="GloVe-format text vectors")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("generate", help="greedy-decode a dataset with a checkpoint")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("evaluate", help="score hypothesis vs reference token files")
    p.add_argument("--hyp", type=Path, required=True)
    p.add_argument("--ref", type=Path, required=True)
    p.add_argument("--out", type=Path)
    p.add_argument("--per-sentence", type=Path)
    p.add_argument("--synonyms", type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("ablate", help="train one model per channel mask and compare")
    _add_config_flags(p)
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--steps", type=int, default=1000)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--masks", default="none,frame_only,role_only,both")
    p.add_argument("--test-size", type=int)
    p.add_argument("--subsample", type=int)
    p.add_argument("--min-eval-len", type=int)
    p.add_argument("--attention-samples", type=int, default=0)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("bench", help="greedy-decode throughput per family")
    p.add_argument("--families", default="transformer,sr_lstm")
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--steps", type=int, default=30)
    p.add_argument("--model-dim", type=int, default=64)
    p.add_argument("--hidden-dim", type=int)
    p.add_argument("--num-blocks", type=int, default=2)
    p.add_argument("--num-heads", type=int, default=2)
    p.add_argument("--max-len", type=int, default=15)
    p.add_argument("--match-params", action="store_true",
                   help="size sr_lstm to the transformer's parameter count")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("synth", help="write the synthetic role-swap corpus")
    p.add_argument("--size", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("eval-pack", help="export a blinded human-rating sheet")
    p.add_argument("--predictions", type=Path, required=True)
    p.add_argument("--mode", choices=("task1_pair", "task2_triple", "task3_image"), required=True)
    p.add_argument("--sample", type=int, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_eval_pack)

    p = sub.add_parser("dump-attention", help="write target-to-source attention records")
    p.add_argument("--ckpt", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--sentence", help="space-separated tokens")
    p.add_argument("--annotate", action="store_true",
                   help="annotate --sentence with the built-in demo lexicon")
    p.add_argument("--data", type=Path, help="take the source sentence from this corpus")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--channels", help="comma list among token,frame,role")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_dump_attention)

    p = sub.add_parser("convert", help="two-column TSV <-> annotated JSONL")
    p.add_argument("--in", dest="infile", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_convert)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except TrainingDivergence as e:
        print(f"error: {e}", file=sys.stderr)
        return DIVERGENCE_EXIT
    except (SemaError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return DATA_EXIT


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
