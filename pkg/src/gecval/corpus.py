"""Data model and I/O for parallel GEC corpora.

Sentences are pre-tokenized (space-separated); the toolkit never
re-tokenizes. Tokens are opaque byte-equal strings, no unicode
normalization. Two interchange formats are supported: the M2 block
format and a line-record (JSON-per-line) format, documented in the
README.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence


class M2ParseError(ValueError):
    """Raised for malformed M2 input; carries the 1-based line number."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class RecordError(ValueError):
    """Raised for inconsistent line-record corpora."""


def _normalize_ws(text: str) -> str:
    return " ".join(text.split())


@dataclass(frozen=True)
class Sentence:
    """A tokenized sentence with its document context.

    ``prev``/``next`` hold the raw strings of the adjacent sentences in
    the same document; they are None at document boundaries.
    """

    doc_id: str
    index: int
    tokens: tuple[str, ...]
    raw: str = ""
    prev: str | None = None
    next: str | None = None

    def __post_init__(self):
        if not self.raw:
            object.__setattr__(self, "raw", " ".join(self.tokens))
        if _normalize_ws(self.raw) != " ".join(self.tokens):
            raise ValueError(
                f"raw does not reproduce tokens after whitespace normalization: "
                f"{self.raw!r} vs {self.tokens!r}"
            )

    @property
    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True, order=True)
class Edit:
    """A source-anchored span replacement over token indices.

    Spans are half-open: ``span_start == span_end`` is an insertion at
    that position; an empty replacement over a non-empty span is a
    deletion.
    """

    span_start: int
    span_end: int
    replacement: tuple[str, ...]
    label: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if not (0 <= self.span_start <= self.span_end):
            raise ValueError(f"bad span ({self.span_start}, {self.span_end})")
        object.__setattr__(self, "replacement", tuple(self.replacement))

    @property
    def is_insertion(self) -> bool:
        return self.span_start == self.span_end

    def hull(self) -> tuple[int, int]:
        """Closed interval [start, end] used for overlap tests."""
        return (self.span_start, self.span_end)

    def describe(self, source_tokens: Sequence[str]) -> str:
        """Human-readable rendering used in judge payloads."""
        original = " ".join(source_tokens[self.span_start:self.span_end])
        replacement = " ".join(self.replacement)
        if self.is_insertion:
            return f'insert "{replacement}" at position {self.span_start}'
        if not self.replacement:
            return f'delete "{original}"'
        return f'replace "{original}" with "{replacement}"'


def validate_edit_sequence(edits: Sequence[Edit], n_tokens: int | None = None) -> None:
    """Check that edits are sorted, in range, and pairwise non-overlapping.

    Adjacent spans are fine; two insertions at the same position are not.
    Raises ValueError instead of silently reordering.
    """
    for i, e in enumerate(edits):
        if n_tokens is not None and e.span_end > n_tokens:
            raise ValueError(f"edit span ({e.span_start}, {e.span_end}) exceeds {n_tokens} tokens")
        if i == 0:
            continue
        p = edits[i - 1]
        if (e.span_start, e.span_end) < (p.span_start, p.span_end):
            raise ValueError(f"edits not sorted: {p} before {e}")
        if e.span_start < p.span_end:
            raise ValueError(f"edits overlap: {p} and {e}")
        if p.is_insertion and e.is_insertion and p.span_start == e.span_start:
            raise ValueError(f"two insertions at position {e.span_start}")


@dataclass(frozen=True)
class Annotation:
    """One annotator's edit list for a source sentence."""

    annotator: int
    edits: tuple[Edit, ...]

    def __post_init__(self):
        object.__setattr__(self, "edits", tuple(self.edits))
        validate_edit_sequence(self.edits)


@dataclass(frozen=True)
class ReferenceSet:
    """A source sentence with per-annotator reference edit lists."""

    source: Sentence
    annotations: tuple[Annotation, ...]

    def __post_init__(self):
        object.__setattr__(self, "annotations", tuple(self.annotations))
        for ann in self.annotations:
            validate_edit_sequence(ann.edits, len(self.source.tokens))

    def edit_lists(self) -> list[list[Edit]]:
        return [list(ann.edits) for ann in self.annotations]


@dataclass(frozen=True)
class CorpusRecord:
    """A source aligned with named system hypotheses and its references."""

    source: Sentence
    hypotheses: Mapping[str, Sentence]
    references: ReferenceSet

    def __post_init__(self):
        for system, hyp in self.hypotheses.items():
            if (hyp.doc_id, hyp.index) != (self.source.doc_id, self.source.index):
                raise ValueError(
                    f"hypothesis {system!r} does not share doc_id/index with its source"
                )


# --- M2 format -------------------------------------------------------------
#
# Blocks of one "S " line plus zero or more "A " lines, separated by blank
# lines. Annotation fields: "start end|||label|||replacement|||REQUIRED|||
# -NONE-|||annotator". Empty replacements serialize as "-NONE-"; a noop
# annotation is "A -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||a".

_NOOP_LABEL = "noop"
_NONE_FIELD = "-NONE-"


def parse_m2(text: str, doc_id: str = "m2") -> list[ReferenceSet]:
    """Parse M2 text into one ReferenceSet per block.

    Annotators with only a noop line get an explicit empty edit list.
    Malformed prefixes, out-of-range spans, and non-integer annotator
    ids are rejected with their line number.
    """
    refsets: list[ReferenceSet] = []
    block: list[tuple[int, str]] = []

    def flush(block: list[tuple[int, str]]) -> None:
        if not block:
            return
        first_no, first = block[0]
        if not first.startswith("S "):
            raise M2ParseError(f"block must start with 'S ', got {first!r}", first_no)
        tokens = tuple(first[2:].split())
        per_annotator: dict[int, list[Edit]] = {}
        for line_no, line in block[1:]:
            if not line.startswith("A "):
                raise M2ParseError(f"expected 'A ' prefix, got {line!r}", line_no)
            fields = line[2:].split("|||")
            if len(fields) != 6:
                raise M2ParseError(f"expected 6 '|||'-separated fields, got {len(fields)}", line_no)
            span = fields[0].split()
            if len(span) != 2:
                raise M2ParseError(f"bad span field {fields[0]!r}", line_no)
            try:
                start, end = int(span[0]), int(span[1])
            except ValueError:
                raise M2ParseError(f"non-integer span {fields[0]!r}", line_no) from None
            try:
                annotator = int(fields[5])
            except ValueError:
                raise M2ParseError(f"non-integer annotator id {fields[5]!r}", line_no) from None
            if fields[1] == _NOOP_LABEL:
                per_annotator.setdefault(annotator, [])
                continue
            if not (0 <= start <= end <= len(tokens)):
                raise M2ParseError(
                    f"span ({start}, {end}) out of range for {len(tokens)} tokens", line_no
                )
            replacement = () if fields[2] in ("", _NONE_FIELD) else tuple(fields[2].split())
            per_annotator.setdefault(annotator, []).append(
                Edit(start, end, replacement, label=fields[1])
            )
        source = Sentence(doc_id=doc_id, index=len(refsets), tokens=tokens)
        try:
            annotations = tuple(
                Annotation(a, tuple(edits)) for a, edits in sorted(per_annotator.items())
            )
            refsets.append(ReferenceSet(source, annotations))
        except ValueError as exc:
            raise M2ParseError(str(exc), first_no) from None

    for line_no, line in enumerate(text.split("\n"), start=1):
        if line.strip() == "":
            flush(block)
            block = []
        else:
            block.append((line_no, line))
    flush(block)
    return refsets


def serialize_m2(refsets: Iterable[ReferenceSet]) -> str:
    """Serialize ReferenceSets back to M2 text; inverse of parse_m2.

    Edits created programmatically (label None) are emitted with the
    label "UNK".
    """
    blocks: list[str] = []
    for refset in refsets:
        lines = ["S " + " ".join(refset.source.tokens)]
        for ann in refset.annotations:
            if not ann.edits:
                lines.append(
                    f"A -1 -1|||{_NOOP_LABEL}|||{_NONE_FIELD}|||REQUIRED|||{_NONE_FIELD}|||{ann.annotator}"
                )
                continue
            for e in ann.edits:
                replacement = " ".join(e.replacement) if e.replacement else _NONE_FIELD
                label = e.label if e.label is not None else "UNK"
                lines.append(
                    f"A {e.span_start} {e.span_end}|||{label}|||{replacement}"
                    f"|||REQUIRED|||{_NONE_FIELD}|||{ann.annotator}"
                )
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


# --- line-record format ------------------------------------------------------

_ROLES = ("source", "hypothesis", "reference")


def load_records(lines: Iterable[str]) -> list[CorpusRecord]:
    """Assemble CorpusRecords from line records.

    Each line is a JSON object with doc_id, index, role (source /
    hypothesis / reference), system (hypotheses), annotator
    (references), and tokens. Records are grouped by (doc_id, index);
    prev/next context is linked between neighbouring sentences of the
    same document in index order.
    """
    sources: dict[tuple[str, int], tuple[str, ...]] = {}
    hypotheses: dict[tuple[str, int], dict[str, tuple[str, ...]]] = {}
    references: dict[tuple[str, int], dict[int, tuple[str, ...]]] = {}

    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise RecordError(f"line {line_no}: invalid JSON: {exc}") from None
        try:
            key = (str(obj["doc_id"]), int(obj["index"]))
            role = obj["role"]
            tokens = tuple(str(t) for t in obj["tokens"])
        except (KeyError, TypeError, ValueError) as exc:
            raise RecordError(f"line {line_no}: bad record: {exc}") from None
        if role not in _ROLES:
            raise RecordError(f"line {line_no}: unknown role {role!r}")
        if role == "source":
            if key in sources:
                raise RecordError(f"line {line_no}: duplicate source for {key}")
            sources[key] = tokens
        elif role == "hypothesis":
            system = obj.get("system")
            if not system:
                raise RecordError(f"line {line_no}: hypothesis record without system")
            per_system = hypotheses.setdefault(key, {})
            if system in per_system:
                raise RecordError(f"line {line_no}: duplicate (doc_id, index, system) {key + (system,)}")
            per_system[system] = tokens
        else:
            annotator = obj.get("annotator")
            if annotator is None:
                raise RecordError(f"line {line_no}: reference record without annotator")
            per_annotator = references.setdefault(key, {})
            if int(annotator) in per_annotator:
                raise RecordError(f"line {line_no}: duplicate reference annotator {annotator} for {key}")
            per_annotator[int(annotator)] = tokens

    for key in list(hypotheses) + list(references):
        if key not in sources:
            raise RecordError(f"missing source for {key}")

    # Context linkage: neighbours in index order within each document.
    by_doc: dict[str, list[tuple[str, int]]] = {}
    for doc_id, index in sorted(sources):
        by_doc.setdefault(doc_id, []).append((doc_id, index))

    context: dict[tuple[str, int], tuple[str | None, str | None]] = {}
    for keys in by_doc.values():
        for i, key in enumerate(keys):
            prev = " ".join(sources[keys[i - 1]]) if i > 0 else None
            nxt = " ".join(sources[keys[i + 1]]) if i + 1 < len(keys) else None
            context[key] = (prev, nxt)

    # Reference edits are extracted against the source tokens; import here
    # to avoid a module cycle (align depends on corpus types).
    from .align import extract_edits

    records: list[CorpusRecord] = []
    for key in sorted(sources):
        doc_id, index = key
        prev, nxt = context[key]
        source = Sentence(doc_id=doc_id, index=index, tokens=sources[key], prev=prev, next=nxt)
        hyps = {
            system: Sentence(doc_id=doc_id, index=index, tokens=toks, prev=prev, next=nxt)
            for system, toks in sorted(hypotheses.get(key, {}).items())
        }
        annotations = tuple(
            Annotation(a, tuple(extract_edits(source.tokens, toks)))
            for a, toks in sorted(references.get(key, {}).items())
        )
        records.append(CorpusRecord(source, hyps, ReferenceSet(source, annotations)))
    return records


def dump_records(records: Iterable[CorpusRecord]) -> list[str]:
    """Serialize CorpusRecords to line-record JSON strings."""
    out: list[str] = []

    def emit(obj: dict) -> None:
        out.append(json.dumps(obj, sort_keys=True, separators=(",", ":")))

    from .align import apply_edits

    for rec in records:
        emit({
            "doc_id": rec.source.doc_id, "index": rec.source.index,
            "role": "source", "tokens": list(rec.source.tokens),
        })
        for system, hyp in sorted(rec.hypotheses.items()):
            emit({
                "doc_id": rec.source.doc_id, "index": rec.source.index,
                "role": "hypothesis", "system": system, "tokens": list(hyp.tokens),
            })
        for ann in rec.references.annotations:
            emit({
                "doc_id": rec.source.doc_id, "index": rec.source.index,
                "role": "reference", "annotator": ann.annotator,
                "tokens": list(apply_edits(rec.source.tokens, ann.edits)),
            })
    return out
