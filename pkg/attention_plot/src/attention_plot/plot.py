"""Heatmap rendering for attention dump files.

A dump is UTF-8 JSON lines, one record per channel:

    {"channel": "token"|"frame"|"role", "target": [...], "source": [...],
     "weights": [[...]]}

where ``weights`` is a (len(target), len(source)) matrix of floats in [0, 1]
whose rows sum to 1.  Rendering draws one panel per channel with the source
labels on the x axis and the target tokens on the y axis, on a fixed [0, 1]
color scale.  The output format follows the file extension (.png, .svg, ...).
Plotting only reads the dump; heads are already averaged by the producer.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


class DumpFormatError(ValueError):
    """Raised for malformed dump files; names the offending line."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def load_dump(path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as e:
                raise DumpFormatError(f"invalid JSON ({e.msg})", lineno) from e
            for key in ("channel", "target", "source", "weights"):
                if key not in obj:
                    raise DumpFormatError(f"missing field {key!r}", lineno)
            weights = np.asarray(obj["weights"], dtype=np.float64)
            if weights.ndim != 2:
                raise DumpFormatError("weights must be a matrix", lineno)
            if weights.shape != (len(obj["target"]), len(obj["source"])):
                raise DumpFormatError(
                    f"weights shape {weights.shape} does not match "
                    f"({len(obj['target'])}, {len(obj['source'])})",
                    lineno,
                )
            obj["weights"] = weights
            records.append(obj)
    if not records:
        raise DumpFormatError("dump contains no records", 1)
    return records


def build_figure(records: list[dict]) -> plt.Figure:
    """One labeled heatmap panel per channel, color scale fixed to [0, 1]."""
    n = len(records)
    widths = [max(2.2, 0.45 * len(r["source"]) + 1.2) for r in records]
    height = max(2.4, 0.45 * max(len(r["target"]) for r in records) + 1.6)
    fig, axes = plt.subplots(
        1, n, figsize=(sum(widths) + 1.2, height),
        gridspec_kw={"width_ratios": widths}, squeeze=False,
    )
    image = None
    for ax, rec in zip(axes[0], records):
        image = ax.imshow(rec["weights"], vmin=0.0, vmax=1.0, cmap="viridis", aspect="auto")
        ax.set_title(rec["channel"])
        ax.set_xticks(range(len(rec["source"])))
        ax.set_xticklabels(rec["source"], rotation=45, ha="right", fontsize=8)
        ax.set_yticks(range(len(rec["target"])))
        ax.set_yticklabels(rec["target"], fontsize=8)
    fig.colorbar(image, ax=[ax for ax in axes[0]], fraction=0.02, pad=0.02)
    return fig


def heatmap_axes(fig: plt.Figure) -> list[plt.Axes]:
    """The panel axes (excludes the colorbar)."""
    return [ax for ax in fig.axes if ax.images]


def plot(dump_path, out_image_path) -> Path:
    """Render ``dump_path`` to ``out_image_path``; returns the output path."""
    records = load_dump(dump_path)
    fig = build_figure(records)
    out = Path(out_image_path)
    fig.savefig(out)
    plt.close(fig)
    return out
