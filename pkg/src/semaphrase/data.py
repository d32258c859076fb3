"""Annotated sentences, vocabularies, and corpus I/O.

A sentence is three aligned label vectors: surface tokens, frame labels, and
role labels, with "O" marking unannotated positions.  Corpora are UTF-8 JSON
lines, one pair per line:

    {"src": {"tokens": [...], "frames": [...], "roles": [...]}, "tgt": {...}}

"frames"/"roles" are optional and default to all-"O".  A converter accepts
two-column TSV (source TAB target, whitespace-tokenized) for raw corpus
exports; converting annotated JSONL back to TSV drops the label channels.

A deterministic lexicon-based annotator stands in for a real frame-semantic
parser in tests and synthetic experiments.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter, OrderedDict
from dataclasses import dataclass, field
from pathlib import Path

from .errors import AlignmentError, DataError, ParseError

NULL_LABEL = "O"

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<s>", "</s>"
PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3
SPECIALS = [PAD, UNK, BOS, EOS]


@dataclass
class AnnotatedSentence:
    """Aligned token/frame/role vectors; always equal length."""

    tokens: list[str]
    frames: list[str] = field(default_factory=list)
    roles: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.frames:
            self.frames = [NULL_LABEL] * len(self.tokens)
        if not self.roles:
            self.roles = [NULL_LABEL] * len(self.tokens)
        if len(self.tokens) != len(self.frames) or len(self.tokens) != len(self.roles):
            raise AlignmentError(
                f"channel lengths diverge: tokens={len(self.tokens)}, "
                f"frames={len(self.frames)}, roles={len(self.roles)}"
            )

    def __len__(self) -> int:
        return len(self.tokens)

    def truncated(self, max_len: int) -> "AnnotatedSentence":
        """First ``max_len`` positions of every channel."""
        return AnnotatedSentence(
            self.tokens[:max_len], self.frames[:max_len], self.roles[:max_len]
        )

    def lowercased(self) -> "AnnotatedSentence":
        """Lowercase tokens only; frame/role labels keep their case."""
        return AnnotatedSentence([t.lower() for t in self.tokens], list(self.frames), list(self.roles))

    def to_dict(self) -> dict:
        out = {"tokens": list(self.tokens)}
        if any(f != NULL_LABEL for f in self.frames):
            out["frames"] = list(self.frames)
        if any(r != NULL_LABEL for r in self.roles):
            out["roles"] = list(self.roles)
        return out


@dataclass
class ParaphrasePair:
    src: AnnotatedSentence
    tgt: AnnotatedSentence


def _sentence_from_obj(obj, line: int | None = None) -> AnnotatedSentence:
    if not isinstance(obj, dict) or "tokens" not in obj:
        raise ParseError("sentence record must be an object with a 'tokens' array", line=line)
    tokens = obj["tokens"]
    if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
        raise ParseError("'tokens' must be an array of strings", line=line)
    frames = obj.get("frames") or []
    roles = obj.get("roles") or []
    if frames and len(frames) != len(tokens):
        raise AlignmentError(
            f"frames length {len(frames)} does not match {len(tokens)} tokens"
            + (f" (line {line})" if line else "")
        )
    if roles and len(roles) != len(tokens):
        raise AlignmentError(
            f"roles length {len(roles)} does not match {len(tokens)} tokens"
            + (f" (line {line})" if line else "")
        )
    return AnnotatedSentence(list(tokens), list(frames), list(roles))


def parse_annotated(text: str, line: int | None = None) -> AnnotatedSentence:
    """Parse one sentence record ({"tokens": [...], "frames": ..., "roles": ...})."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed record: {e.msg}", offset=e.pos, line=line) from e
    return _sentence_from_obj(obj, line)


def serialize_sentence(sent: AnnotatedSentence) -> str:
    """Canonical single-line form; parse_annotated round-trips through it."""
    return json.dumps(sent.to_dict(), ensure_ascii=False, separators=(", ", ": "))


def pair_to_line(pair: ParaphrasePair) -> str:
    obj = {"src": pair.src.to_dict(), "tgt": pair.tgt.to_dict()}
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def parse_pair(text: str, line: int | None = None) -> ParaphrasePair:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed record: {e.msg}", offset=e.pos, line=line) from e
    if not isinstance(obj, dict) or "src" not in obj or "tgt" not in obj:
        raise ParseError("pair record must be an object with 'src' and 'tgt'", line=line)
    return ParaphrasePair(_sentence_from_obj(obj["src"], line), _sentence_from_obj(obj["tgt"], line))


def load_pairs(path) -> list[ParaphrasePair]:
    pairs = []
    with open(path, encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            raw = raw.strip()
            if raw:
                pairs.append(parse_pair(raw, line=lineno))
    return pairs


def write_pairs(path, pairs) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for pair in pairs:
            f.write(pair_to_line(pair))
            f.write("\n")


# ---------------------------------------------------------------------------
# deterministic stub annotator


@dataclass(frozen=True)
class LexEntry:
    frame: str
    role: str  # "arg" = positional argument; otherwise a literal role label or "O"


class AnnotationLexicon:
    """Token -> (frame label, default role) map plus positional argument rules.

    Tokens whose frame label starts with "/pb/" are treated as predicates.
    Entries with the positional role marker "arg" receive arg0 before the
    first predicate of the sentence and arg1 after it; any other role label
    is used verbatim.  Annotation is a pure function of (lexicon, tokens).
    """

    PREDICATE_PREFIX = "/pb/"

    def __init__(self, entries: dict[str, LexEntry] | None = None):
        self.entries = dict(entries or {})

    def add(self, token: str, frame: str, role: str = "arg") -> None:
        self.entries[token] = LexEntry(frame, role)

    def is_predicate(self, token: str) -> bool:
        entry = self.entries.get(token)
        return entry is not None and entry.frame.startswith(self.PREDICATE_PREFIX)


def stub_annotate(lexicon: AnnotationLexicon, tokens: list[str]) -> AnnotatedSentence:
    """Assign frame/role labels from the lexicon; unknown tokens stay "O"."""
    frames = [lexicon.entries[t].frame if t in lexicon.entries else NULL_LABEL for t in tokens]
    first_pred = next((i for i, t in enumerate(tokens) if lexicon.is_predicate(t)), None)
    roles = []
    for i, tok in enumerate(tokens):
        entry = lexicon.entries.get(tok)
        if entry is None or lexicon.is_predicate(tok):
            roles.append(NULL_LABEL)
        elif entry.role == "arg":
            if first_pred is None:
                roles.append(NULL_LABEL)
            else:
                roles.append("arg0" if i < first_pred else "arg1")
        else:
            roles.append(entry.role)
    return AnnotatedSentence(list(tokens), frames, roles)


def demo_lexicon() -> AnnotationLexicon:
    lex = AnnotationLexicon()
    lex.add("man", "person")
    lex.add("woman", "person")
    lex.add("dog", "animal")
    lex.add("bed", "furniture")
    lex.add("woke", "/pb/wake-01")
    lex.add("slept", "/pb/sleep-01")
    lex.add("quietly", "manner", role="argm-mnr")
    return lex


# ---------------------------------------------------------------------------
# vocabularies


class Vocabulary:
    """String <-> id map with <pad>/<unk>/<s>/</s> pinned at ids 0..3."""

    def __init__(self, items: list[str]):
        if items[:4] != SPECIALS:
            raise DataError("vocabulary must start with the four reserved symbols")
        if len(set(items)) != len(items):
            raise DataError("vocabulary contains duplicates")
        self.items = list(items)
        self._index = {s: i for i, s in enumerate(items)}

    @classmethod
    def from_counts(cls, counts: Counter, min_count: int = 1, always: tuple[str, ...] = ()) -> "Vocabulary":
        kept = {w for w, c in counts.items() if c >= min_count and w not in SPECIALS}
        kept.update(always)
        # deterministic order: frequency desc, then lexicographic
        ordered = sorted(kept, key=lambda w: (-counts.get(w, 0), w))
        return cls(SPECIALS + ordered)

    def encode(self, token: str) -> int:
        return self._index.get(token, UNK_ID)

    def decode(self, idx: int) -> str:
        return self.items[idx]

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def sha256(self) -> str:
        return hashlib.sha256("\n".join(self.items).encode("utf-8")).hexdigest()

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.items) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        items = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(items)


@dataclass
class VocabBundle:
    tokens: Vocabulary
    frames: Vocabulary
    roles: Vocabulary


def build_vocabularies(pairs, min_count: int = 1) -> VocabBundle:
    """Count over both sides of the corpus; tokens are lowercased first.

    Tokens under ``min_count`` fall to <unk> at encode time.  The frame and
    role vocabularies always contain the null label "O".
    """
    if not pairs:
        raise DataError("cannot build vocabularies from an empty corpus")
    tok_counts: Counter = Counter()
    frame_counts: Counter = Counter()
    role_counts: Counter = Counter()
    for pair in pairs:
        for sent in (pair.src, pair.tgt):
            tok_counts.update(t.lower() for t in sent.tokens)
            frame_counts.update(sent.frames)
            role_counts.update(sent.roles)
    return VocabBundle(
        tokens=Vocabulary.from_counts(tok_counts, min_count),
        frames=Vocabulary.from_counts(frame_counts, 1, always=(NULL_LABEL,)),
        roles=Vocabulary.from_counts(role_counts, 1, always=(NULL_LABEL,)),
    )


# ---------------------------------------------------------------------------
# TSV conversion


def convert_tsv_to_jsonl(src_path, out_path) -> int:
    """source TAB target per line, whitespace tokenization; returns pair count."""
    n = 0
    with open(src_path, encoding="utf-8") as fin, open(out_path, "w", encoding="utf-8") as fout:
        for lineno, raw in enumerate(fin, start=1):
            raw = raw.rstrip("\n")
            if not raw.strip():
                continue
            cols = raw.split("\t")
            if len(cols) != 2:
                raise ParseError(f"expected 2 tab-separated columns, got {len(cols)}", line=lineno)
            pair = ParaphrasePair(
                AnnotatedSentence(cols[0].split()), AnnotatedSentence(cols[1].split())
            )
            fout.write(pair_to_line(pair))
            fout.write("\n")
            n += 1
    if n == 0:
        raise DataError(f"{src_path}: no pairs found")
    return n


def convert_jsonl_to_tsv(src_path, out_path) -> int:
    """Inverse of convert_tsv_to_jsonl; frame/role channels are dropped."""
    pairs = load_pairs(src_path)
    if not pairs:
        raise DataError(f"{src_path}: no pairs found")
    with open(out_path, "w", encoding="utf-8") as fout:
        for pair in pairs:
            fout.write(" ".join(pair.src.tokens) + "\t" + " ".join(pair.tgt.tokens) + "\n")
    return len(pairs)
