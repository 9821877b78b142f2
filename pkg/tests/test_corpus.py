from __future__ import annotations

import json

import pytest
from hypothesis import given, strategies as st

from gecval.align import apply_edits, extract_edits
from gecval.corpus import (
    Annotation,
    Edit,
    M2ParseError,
    RecordError,
    ReferenceSet,
    Sentence,
    load_records,
    parse_m2,
    serialize_m2,
    validate_edit_sequence,
)


class TestSentence:
    def test_raw_defaults_to_joined_tokens(self):
        s = Sentence("d", 0, ("a", "b"))
        assert s.raw == "a b"
        assert s.text == "a b"

    def test_raw_whitespace_normalized(self):
        s = Sentence("d", 0, ("a", "b"), raw="a  b ")
        assert s.tokens == ("a", "b")

    def test_mismatched_raw_rejected(self):
        with pytest.raises(ValueError):
            Sentence("d", 0, ("a", "b"), raw="a c")


class TestEdit:
    def test_bad_span(self):
        with pytest.raises(ValueError):
            Edit(3, 2, ())

    def test_insertion_flag(self):
        assert Edit(2, 2, ("x",)).is_insertion
        assert not Edit(1, 2, ()).is_insertion

    def test_validate_rejects_overlap(self):
        with pytest.raises(ValueError):
            validate_edit_sequence([Edit(0, 2, ("x",)), Edit(1, 3, ("y",))])

    def test_validate_rejects_same_position_insertions(self):
        with pytest.raises(ValueError):
            validate_edit_sequence([Edit(1, 1, ("x",)), Edit(1, 1, ("y",))])

    def test_validate_rejects_unsorted(self):
        with pytest.raises(ValueError):
            validate_edit_sequence([Edit(2, 3, ("x",)), Edit(0, 1, ("y",))])

    def test_adjacent_spans_allowed(self):
        validate_edit_sequence([Edit(0, 1, ("x",)), Edit(1, 2, ("y",))])


class TestParseM2:
    def test_single_edit_applies(self):
        refsets = parse_m2("S I likes cats\nA 1 2|||SVA|||like|||REQUIRED|||-NONE-|||0\n")
        assert len(refsets) == 1
        (ann,) = refsets[0].annotations
        assert ann.edits == (Edit(1, 2, ("like",), label="SVA"),)
        corrected = apply_edits(refsets[0].source.tokens, ann.edits)
        assert corrected == ("I", "like", "cats")

    def test_noop_annotation_yields_empty_list(self):
        refsets = parse_m2("S Fine .\nA -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0\n")
        (ann,) = refsets[0].annotations
        assert ann.annotator == 0
        assert ann.edits == ()

    def test_empty_input(self):
        assert parse_m2("") == []

    def test_multiple_annotators_sorted(self, sample_m2):
        refsets = parse_m2(sample_m2)
        assert [a.annotator for a in refsets[0].annotations] == [0, 1]
        assert len(refsets) == 3

    def test_bad_prefix_reports_line(self):
        with pytest.raises(M2ParseError) as exc:
            parse_m2("S a b\nX 0 1|||T|||x|||REQUIRED|||-NONE-|||0\n")
        assert exc.value.line_no == 2

    def test_out_of_range_span(self):
        with pytest.raises(M2ParseError, match="out of range"):
            parse_m2("S a b\nA 0 9|||T|||x|||REQUIRED|||-NONE-|||0\n")

    def test_non_integer_annotator(self):
        with pytest.raises(M2ParseError, match="annotator"):
            parse_m2("S a b\nA 0 1|||T|||x|||REQUIRED|||-NONE-|||zero\n")

    def test_overlapping_edits_rejected_not_reordered(self):
        text = (
            "S a b c\n"
            "A 0 2|||T|||x|||REQUIRED|||-NONE-|||0\n"
            "A 1 3|||T|||y|||REQUIRED|||-NONE-|||0\n"
        )
        with pytest.raises(M2ParseError):
            parse_m2(text)

    def test_block_must_start_with_s(self):
        with pytest.raises(M2ParseError):
            parse_m2("A 0 1|||T|||x|||REQUIRED|||-NONE-|||0\n")


class TestSerializeM2:
    def test_round_trip_is_byte_identical(self, sample_m2):
        refsets = parse_m2(sample_m2)
        assert serialize_m2(refsets) == sample_m2

    def test_parse_serialize_parse_fixed_point(self, sample_m2):
        once = parse_m2(sample_m2)
        twice = parse_m2(serialize_m2(once))
        assert once == twice
        assert serialize_m2(once) == serialize_m2(twice)

    def test_empty_list(self):
        assert serialize_m2([]) == ""

    def test_noop_convention(self):
        source = Sentence("m2", 0, ("Fine", "."))
        refset = ReferenceSet(source, (Annotation(0, ()),))
        assert "A -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0" in serialize_m2([refset])

    def test_programmatic_edits_get_unk_label(self):
        source = Sentence("m2", 0, ("a", "b"))
        refset = ReferenceSet(source, (Annotation(0, (Edit(0, 1, ("x",)),)),))
        assert "|||UNK|||" in serialize_m2([refset])


def _record(doc_id, index, role, tokens, **extra):
    return json.dumps({"doc_id": doc_id, "index": index, "role": role,
                       "tokens": tokens, **extra})


class TestLoadRecords:
    def test_context_linkage(self):
        lines = [_record("d", i, "source", [f"tok{i}"]) for i in range(3)]
        records = load_records(lines)
        assert records[0].source.prev is None and records[0].source.next == "tok1"
        assert records[1].source.prev == "tok0" and records[1].source.next == "tok2"
        assert records[2].source.prev == "tok1" and records[2].source.next is None

    def test_single_record_no_context(self):
        (rec,) = load_records([_record("d", 0, "source", ["a"])])
        assert rec.source.prev is None and rec.source.next is None

    def test_two_systems_one_record(self):
        lines = [
            _record("d", 0, "source", ["a", "b"]),
            _record("d", 0, "hypothesis", ["a", "x"], system="sys1"),
            _record("d", 0, "hypothesis", ["a", "y"], system="sys2"),
        ]
        (rec,) = load_records(lines)
        assert set(rec.hypotheses) == {"sys1", "sys2"}

    def test_reference_edits_extracted(self):
        lines = [
            _record("d", 0, "source", ["I", "likes", "cats"]),
            _record("d", 0, "reference", ["I", "like", "cats"], annotator=0),
        ]
        (rec,) = load_records(lines)
        (ann,) = rec.references.annotations
        assert ann.edits == (Edit(1, 2, ("like",)),)

    def test_duplicate_system_rejected(self):
        lines = [
            _record("d", 0, "source", ["a"]),
            _record("d", 0, "hypothesis", ["b"], system="s"),
            _record("d", 0, "hypothesis", ["c"], system="s"),
        ]
        with pytest.raises(RecordError, match="duplicate"):
            load_records(lines)

    def test_missing_source_rejected(self):
        with pytest.raises(RecordError, match="missing source"):
            load_records([_record("d", 0, "hypothesis", ["a"], system="s")])

    def test_hypothesis_context_mirrors_source(self):
        lines = [
            _record("d", 0, "source", ["a"]),
            _record("d", 1, "source", ["b"]),
            _record("d", 1, "hypothesis", ["c"], system="s"),
        ]
        records = load_records(lines)
        hyp = records[1].hypotheses["s"]
        assert hyp.prev == "a" and hyp.next is None


@st.composite
def token_pairs(draw):
    vocab = st.sampled_from(["a", "b", "c", "d", "e"])
    src = tuple(draw(st.lists(vocab, max_size=8)))
    tgt = tuple(draw(st.lists(vocab, max_size=8)))
    return src, tgt


@given(token_pairs())
def test_m2_round_trip_of_extracted_edits(pair):
    src, tgt = pair
    source = Sentence("m2", 0, src) if src else None
    if source is None:
        return
    refset = ReferenceSet(source, (Annotation(0, tuple(extract_edits(src, tgt))),))
    reparsed = parse_m2(serialize_m2([refset]))
    assert reparsed == [refset]
