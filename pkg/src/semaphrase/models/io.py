"""Model persistence: binary checkpoint plus a structured-text sidecar.

A saved model is a directory:

    params.sema        flat binary tensors (see semaphrase.checkpoint)
    params.sema.meta   key = value lines: every ModelConfig field plus
                       vocab_sha256_{tokens,frames,roles}
    tokens.vocab / frames.vocab / roles.vocab   one symbol per line

Loading rebuilds the model from the recorded config, verifies the vocabulary
hashes, and installs the stored arrays by parameter name, so a save/load
round trip decodes bit-identically.
"""

from __future__ import annotations

from collections import OrderedDict
from pathlib import Path

from ..checkpoint import load_arrays, save_arrays
from ..data import Vocabulary, VocabBundle
from ..errors import DataError
from .base import Seq2SeqModel
from .config import ModelConfig

CKPT_NAME = "params.sema"
META_SUFFIX = ".meta"
VOCAB_FILES = {"tokens": "tokens.vocab", "frames": "frames.vocab", "roles": "roles.vocab"}


def save_model(model: Seq2SeqModel, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / CKPT_NAME
    save_arrays(ckpt, OrderedDict((k, p.data) for k, p in model.parameters().items()))
    for channel, fname in VOCAB_FILES.items():
        getattr(model.vocabs, channel).save(out / fname)
    meta_lines = [model.config.to_text().rstrip("\n")]
    for channel in VOCAB_FILES:
        meta_lines.append(f"vocab_sha256_{channel} = {getattr(model.vocabs, channel).sha256()}")
    (out / (CKPT_NAME + META_SUFFIX)).write_text("\n".join(meta_lines) + "\n", encoding="utf-8")
    return ckpt


def load_model(out_dir) -> Seq2SeqModel:
    from . import build_model  # local import: factory depends on the families

    out = Path(out_dir)
    meta_path = out / (CKPT_NAME + META_SUFFIX)
    if not meta_path.exists():
        raise DataError(f"{out}: no checkpoint metadata at {meta_path}")
    config_lines, hashes = [], {}
    for raw in meta_path.read_text(encoding="utf-8").splitlines():
        if raw.strip().startswith("vocab_sha256_"):
            key, value = (s.strip() for s in raw.split("=", 1))
            hashes[key.removeprefix("vocab_sha256_")] = value
        else:
            config_lines.append(raw)
    config = ModelConfig.from_text("\n".join(config_lines))

    vocabs = {}
    for channel, fname in VOCAB_FILES.items():
        vocab = Vocabulary.load(out / fname)
        if vocab.sha256() != hashes.get(channel):
            raise DataError(f"{out}: {channel} vocabulary hash mismatch; checkpoint is inconsistent")
        vocabs[channel] = vocab
    model = build_model(config, VocabBundle(**vocabs))

    arrays = load_arrays(out / CKPT_NAME)
    params = model.parameters()
    missing = set(params) - set(arrays)
    extra = set(arrays) - set(params)
    if missing or extra:
        raise DataError(f"{out}: parameter names disagree (missing {sorted(missing)[:3]}, extra {sorted(extra)[:3]})")
    for name, p in params.items():
        if arrays[name].shape != p.data.shape:
            raise DataError(f"{out}: shape mismatch for {name}: {arrays[name].shape} vs {p.data.shape}")
        p.data = arrays[name]
    return model
