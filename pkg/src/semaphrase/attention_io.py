"""Attention dump files: JSON lines, one record per channel.

Record shape (bit-exact interface for the plotting companion):

    {"channel": "token"|"frame"|"role", "target": [...], "source": [...],
     "weights": [[...]]}

Weights are the first decoder layer's target-to-source attention, averaged
over heads, one row per generated target token; every row sums to 1 over the
real source positions (the trailing source label is the end-of-sentence
marker).  The three channels share the same position weights and differ in
the source labels, which is exactly how the per-position merge exposes the
token/frame/role streams.
"""

from __future__ import annotations

import json

import numpy as np

from .data import EOS, NULL_LABEL
from .errors import DataError, ParseError
from .models import AttentionTrace

CHANNELS = ("token", "frame", "role")


def _source_labels(trace: AttentionTrace, channel: str) -> list[str]:
    sent = trace.source
    if channel == "token":
        return list(sent.tokens) + [EOS]
    if channel == "frame":
        return list(sent.frames) + [NULL_LABEL]
    if channel == "role":
        return list(sent.roles) + [NULL_LABEL]
    raise DataError(f"unknown channel {channel!r}")


def dump_records(trace: AttentionTrace, channels=CHANNELS) -> list[dict]:
    if not trace.layers:
        raise DataError("decoder produced no attention to dump")
    weights = trace.layers[0].mean(axis=0)  # first layer, heads averaged
    records = []
    for channel in channels:
        records.append({
            "channel": channel,
            "target": list(trace.target_tokens),
            "source": _source_labels(trace, channel),
            "weights": [[float(v) for v in row] for row in weights],
        })
    return records


def write_attention_dump(trace: AttentionTrace, out_path, channels=CHANNELS) -> None:
    with open(out_path, "w", encoding="utf-8") as f:
        for record in dump_records(trace, channels):
            f.write(json.dumps(record, ensure_ascii=False))
            f.write("\n")


def read_attention_dump(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as e:
                raise ParseError(f"malformed attention record: {e.msg}", offset=e.pos, line=lineno) from e
            for key in ("channel", "target", "source", "weights"):
                if key not in obj:
                    raise ParseError(f"attention record missing {key!r}", line=lineno)
            w = np.asarray(obj["weights"], dtype=np.float64)
            if w.ndim != 2 or w.shape != (len(obj["target"]), len(obj["source"])):
                raise ParseError(
                    f"weights shape {w.shape} does not match target/source lengths "
                    f"({len(obj['target'])}, {len(obj['source'])})",
                    line=lineno,
                )
            records.append(obj)
    if not records:
        raise DataError(f"{path}: empty attention dump")
    return records
