"""Data model contracts: alignment, parsing, stub annotation, vocabularies, TSV."""

from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semaphrase.data import (
    NULL_LABEL,
    AnnotatedSentence,
    AnnotationLexicon,
    ParaphrasePair,
    Vocabulary,
    build_vocabularies,
    convert_jsonl_to_tsv,
    convert_tsv_to_jsonl,
    demo_lexicon,
    load_pairs,
    pair_to_line,
    parse_annotated,
    parse_pair,
    serialize_sentence,
    stub_annotate,
    write_pairs,
    PAD_ID, UNK_ID, BOS_ID, EOS_ID,
)
from semaphrase.errors import AlignmentError, DataError, ParseError


# ---------------------------------------------------------------------------
# parsing


def test_tokens_only_record_fills_null_labels():
    sent = parse_annotated('{"tokens": ["a", "man"]}')
    assert sent.frames == ["O", "O"]
    assert sent.roles == ["O", "O"]


def test_annotated_record_parses_exact_vectors():
    line = '{"tokens":["a","man","woke"],"frames":["O","person","/pb/wake-01"],"roles":["O","arg0","O"]}'
    sent = parse_annotated(line)
    assert sent.tokens == ["a", "man", "woke"]
    assert sent.frames == ["O", "person", "/pb/wake-01"]
    assert sent.roles == ["O", "arg0", "O"]


def test_length_mismatch_is_alignment_error():
    with pytest.raises(AlignmentError, match="frames length 2"):
        parse_annotated('{"tokens":["a","b","c"],"frames":["O","x"]}')


def test_malformed_record_reports_byte_offset():
    with pytest.raises(ParseError) as exc:
        parse_annotated('{"tokens": [truncated')
    assert exc.value.offset is not None


def test_pair_parse_requires_src_and_tgt():
    with pytest.raises(ParseError, match="src"):
        parse_pair('{"source": {"tokens": []}}')


def test_serialize_round_trip_is_canonical():
    raw = '{"roles":["O","arg0","O"],   "tokens":["a","man","woke"],"frames":["O","person","/pb/wake-01"]}'
    sent = parse_annotated(raw)
    canon = serialize_sentence(sent)
    assert parse_annotated(canon) == sent
    assert serialize_sentence(parse_annotated(canon)) == canon


def test_load_and_write_pairs_round_trip(tmp_path):
    pairs = [
        ParaphrasePair(
            AnnotatedSentence(["a", "man", "woke"], ["O", "person", "/pb/wake-01"], ["O", "arg0", "O"]),
            AnnotatedSentence(["the", "man", "got", "up"]),
        ),
        ParaphrasePair(AnnotatedSentence(["hello"]), AnnotatedSentence(["hi"])),
    ]
    p = tmp_path / "pairs.jsonl"
    write_pairs(p, pairs)
    assert load_pairs(p) == pairs

    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"src": {"tokens": ["a"]}, "tgt": {"tokens"\n', encoding="utf-8")
    with pytest.raises(ParseError, match="line 1"):
        load_pairs(bad)


# ---------------------------------------------------------------------------
# alignment invariant across transforms


@settings(max_examples=50, deadline=None)
@given(st.lists(st.text(alphabet="abcXY", min_size=1, max_size=5), min_size=0, max_size=10),
       st.integers(min_value=0, max_value=12))
def test_alignment_survives_truncate_and_lowercase(tokens, max_len):
    sent = AnnotatedSentence(list(tokens))
    for transformed in (sent.truncated(max_len), sent.lowercased(), sent.truncated(max_len).lowercased()):
        assert len(transformed.tokens) == len(transformed.frames) == len(transformed.roles)


def test_constructor_rejects_misalignment():
    with pytest.raises(AlignmentError):
        AnnotatedSentence(["a", "b"], ["O"], ["O", "O"])


# ---------------------------------------------------------------------------
# stub annotator


def test_empty_lexicon_gives_all_null():
    sent = stub_annotate(AnnotationLexicon(), ["some", "words", "here"])
    assert sent.frames == [NULL_LABEL] * 3
    assert sent.roles == [NULL_LABEL] * 3


def test_stub_annotate_rule_trace():
    lex = AnnotationLexicon()
    lex.add("man", "person")
    lex.add("woke", "/pb/wake-01")
    sent = stub_annotate(lex, ["man", "woke"])
    assert sent.frames == ["person", "/pb/wake-01"]
    assert sent.roles == ["arg0", "O"]


def test_stub_annotate_positional_args_and_manner():
    lex = demo_lexicon()
    sent = stub_annotate(lex, ["the", "man", "quietly", "woke", "the", "dog"])
    assert sent.frames == ["O", "person", "manner", "/pb/wake-01", "O", "animal"]
    assert sent.roles == ["O", "arg0", "argm-mnr", "O", "O", "arg1"]


def test_stub_annotate_is_pure():
    lex = demo_lexicon()
    tokens = ["man", "woke", "dog"]
    assert stub_annotate(lex, tokens) == stub_annotate(lex, tokens)


# ---------------------------------------------------------------------------
# vocabularies


def _pair(src: str, tgt: str) -> ParaphrasePair:
    return ParaphrasePair(AnnotatedSentence(src.split()), AnnotatedSentence(tgt.split()))


def test_min_count_threshold():
    vocabs = build_vocabularies([_pair("a a b", "a")], min_count=2)
    assert "a" in vocabs.tokens
    assert "b" not in vocabs.tokens
    assert vocabs.tokens.encode("b") == UNK_ID


def test_frame_vocab_always_contains_null_label():
    vocabs = build_vocabularies([_pair("x", "y")], min_count=1)
    assert NULL_LABEL in vocabs.frames
    assert NULL_LABEL in vocabs.roles


def test_special_ids_are_pinned():
    vocabs = build_vocabularies([_pair("a b", "c")], min_count=1)
    for vocab in (vocabs.tokens, vocabs.frames, vocabs.roles):
        assert vocab.items[PAD_ID] == "<pad>"
        assert vocab.items[UNK_ID] == "<unk>"
        assert vocab.items[BOS_ID] == "<s>"
        assert vocab.items[EOS_ID] == "</s>"


def test_tokens_are_lowercased_labels_are_not():
    pair = ParaphrasePair(
        AnnotatedSentence(["Man"], ["Person"], ["Arg0"]),
        AnnotatedSentence(["man"]),
    )
    vocabs = build_vocabularies([pair])
    assert "man" in vocabs.tokens
    assert "Man" not in vocabs.tokens
    assert "Person" in vocabs.frames
    assert "Arg0" in vocabs.roles


def test_vocab_sizes_match_counting_oracle():
    # 1000 synthetic pairs; oracle is an independent Counter over the same text
    words = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"]
    pairs = []
    for i in range(1000):
        src = " ".join(words[(i + j) % len(words)] for j in range(3))
        tgt = " ".join(words[(i * 2 + j) % len(words)] for j in range(2))
        pairs.append(_pair(src, tgt))

    counts = Counter()
    for p in pairs:
        counts.update(t.lower() for t in p.src.tokens)
        counts.update(t.lower() for t in p.tgt.tokens)
    expected = {w for w, c in counts.items() if c >= 5}

    vocabs = build_vocabularies(pairs, min_count=5)
    assert len(vocabs.tokens) == 4 + len(expected)
    assert all(w in vocabs.tokens for w in expected)


def test_empty_corpus_rejected():
    with pytest.raises(DataError):
        build_vocabularies([])


def test_vocab_save_load_and_hash(tmp_path):
    vocabs = build_vocabularies([_pair("a b c", "d")])
    p = tmp_path / "tokens.vocab"
    vocabs.tokens.save(p)
    loaded = Vocabulary.load(p)
    assert loaded.items == vocabs.tokens.items
    assert loaded.sha256() == vocabs.tokens.sha256()


# ---------------------------------------------------------------------------
# TSV conversion


def test_tsv_jsonl_round_trip(tmp_path):
    tsv = tmp_path / "data.tsv"
    tsv.write_text("a man woke\tthe man got up\nhello there\thi\n", encoding="utf-8")
    jsonl = tmp_path / "data.jsonl"
    assert convert_tsv_to_jsonl(tsv, jsonl) == 2
    back = tmp_path / "back.tsv"
    assert convert_jsonl_to_tsv(jsonl, back) == 2
    assert back.read_text(encoding="utf-8") == tsv.read_text(encoding="utf-8")


def test_tsv_wrong_column_count(tmp_path):
    tsv = tmp_path / "bad.tsv"
    tsv.write_text("only one column\n", encoding="utf-8")
    with pytest.raises(ParseError, match="line 1"):
        convert_tsv_to_jsonl(tsv, tmp_path / "out.jsonl")
