"""Token alignment, edit extraction, chunk partitioning, and the
single-edit contrast-pair construction protocol.

Alignment uses unit insert/delete/substitute costs with no
transpositions, so extracted scripts are checkable against a plain
edit-distance oracle. Chunking merges the closed hulls of all edit
spans into maximal changed intervals; the gaps become unchanged chunks.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .corpus import Edit, Sentence, validate_edit_sequence

logger = logging.getLogger(__name__)

Tokens = tuple[str, ...]


class OpKind(Enum):
    MATCH = "match"
    SUBSTITUTE = "substitute"
    INSERT = "insert"
    DELETE = "delete"


@dataclass(frozen=True)
class AlignOp:
    """One alignment step covering [src_start, src_end) x [tgt_start, tgt_end)."""

    kind: OpKind
    src_start: int
    src_end: int
    tgt_start: int
    tgt_end: int


@dataclass(frozen=True)
class AlignmentScript:
    """An ordered, gap-free covering of the source by alignment ops."""

    ops: tuple[AlignOp, ...]

    @property
    def cost(self) -> int:
        """Unit-cost script length: one per edited token, zero per match."""
        total = 0
        for op in self.ops:
            if op.kind is OpKind.MATCH:
                continue
            total += max(op.src_end - op.src_start, op.tgt_end - op.tgt_start)
        return total

    def replay(self, source: Sequence[str], target: Sequence[str]) -> list[str]:
        """Rebuild the target by walking the ops over the source."""
        out: list[str] = []
        for op in self.ops:
            if op.kind is OpKind.MATCH:
                out.extend(source[op.src_start:op.src_end])
            elif op.kind is not OpKind.DELETE:
                out.extend(target[op.tgt_start:op.tgt_end])
        return out


def align(source: Sequence[str], target: Sequence[str]) -> AlignmentScript:
    """Minimal-cost alignment of two token sequences.

    Backtrace ties resolve as match, then delete, then substitute,
    then insert; in mixed runs this anchors substitutions before
    deletions ("go to" -> "goes" substitutes "go" and drops "to").
    """
    n, m = len(source), len(target)
    # dist[i][j]: edit distance between source[:i] and target[:j]
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dist[i][0] = i
    for j in range(1, m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        row, prev_row = dist[i], dist[i - 1]
        s_tok = source[i - 1]
        for j in range(1, m + 1):
            sub = prev_row[j - 1] + (0 if s_tok == target[j - 1] else 1)
            dele = prev_row[j] + 1
            ins = row[j - 1] + 1
            row[j] = min(sub, dele, ins)

    ops: list[AlignOp] = []
    i, j = n, m
    while i > 0 or j > 0:
        here = dist[i][j]
        if i > 0 and j > 0 and source[i - 1] == target[j - 1] and dist[i - 1][j - 1] == here:
            ops.append(AlignOp(OpKind.MATCH, i - 1, i, j - 1, j))
            i, j = i - 1, j - 1
            continue
        if i > 0 and dist[i - 1][j] + 1 == here:
            ops.append(AlignOp(OpKind.DELETE, i - 1, i, j, j))
            i -= 1
            continue
        if i > 0 and j > 0 and dist[i - 1][j - 1] + 1 == here:
            ops.append(AlignOp(OpKind.SUBSTITUTE, i - 1, i, j - 1, j))
            i, j = i - 1, j - 1
            continue
        ops.append(AlignOp(OpKind.INSERT, i, i, j - 1, j))
        j -= 1
    ops.reverse()
    return AlignmentScript(tuple(ops))


def extract_edits(source: Sequence[str], target: Sequence[str]) -> list[Edit]:
    """Extract the minimal edit script between two token sequences.

    Consecutive ops of the same kind fuse into one edit (a run of
    substitutions is one replacement, a run of deletions one deletion,
    a run of insertions one insertion); a kind change or any match
    starts a new edit. Output is sorted and non-overlapping.
    """
    script = align(source, target)
    target = tuple(target)
    edits: list[Edit] = []
    run: list[AlignOp] = []

    def flush() -> None:
        if not run:
            return
        src_start, src_end = run[0].src_start, run[-1].src_end
        tgt_start, tgt_end = run[0].tgt_start, run[-1].tgt_end
        edits.append(Edit(src_start, src_end, target[tgt_start:tgt_end]))
        run.clear()

    for op in script.ops:
        if op.kind is OpKind.MATCH:
            flush()
        elif run and run[-1].kind is not op.kind:
            flush()
            run.append(op)
        else:
            run.append(op)
    flush()
    return edits


def apply_edits(source: Sequence[str], edits: Sequence[Edit]) -> Tokens:
    """Apply sorted, non-overlapping edits to a token sequence."""
    validate_edit_sequence(edits, len(source))
    out = list(source)
    for e in reversed(edits):
        out[e.span_start:e.span_end] = e.replacement
    return tuple(out)


# --- chunk partitioning ------------------------------------------------------


@dataclass(frozen=True)
class Chunk:
    """One tile of the source with its per-text realizations.

    ``texts`` holds the realization of this chunk in the hypothesis
    (index 0) and in each reference (index 1..). ``changed`` flags, per
    text, whether that text edits this chunk.
    """

    src_start: int
    src_end: int
    source_tokens: Tokens
    texts: tuple[Tokens, ...]
    changed: tuple[bool, ...]


@dataclass(frozen=True)
class ChunkPartition:
    chunks: tuple[Chunk, ...]

    def text(self, text_index: int) -> Tokens:
        out: list[str] = []
        for chunk in self.chunks:
            out.extend(chunk.texts[text_index])
        return tuple(out)

    def chunk_containing(self, edit: Edit) -> Chunk:
        """The chunk whose closed source hull contains the edit's hull."""
        lo, hi = edit.hull()
        for chunk in self.chunks:
            if chunk.src_start <= lo and hi <= chunk.src_end:
                if any(chunk.changed):
                    return chunk
        raise ValueError(f"no changed chunk contains edit {edit}")


def _merged_intervals(edit_lists: Sequence[Sequence[Edit]]) -> list[tuple[int, int]]:
    """Maximal intervals covering every edit span.

    Spans merge on genuine overlap; adjacent spans stay separate so
    neighbouring edits keep their own chunks. The exception is a
    zero-width insertion at i, which joins any interval whose closed
    hull contains i (and thereby bridges intervals on both sides).
    """
    hulls = sorted(e.hull() for edits in edit_lists for e in edits)
    if not hulls:
        return []

    def should_merge(a: tuple[int, int], b: tuple[int, int]) -> bool:
        (a1, a2), (b1, b2) = sorted((a, b))
        if b1 < a2:
            return True
        return b1 == a2 and (a1 == a2 or b1 == b2)

    parent = list(range(len(hulls)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(hulls)):
        for j in range(i + 1, len(hulls)):
            if should_merge(hulls[i], hulls[j]):
                parent[find(i)] = find(j)

    groups: dict[int, tuple[int, int]] = {}
    for i, (lo, hi) in enumerate(hulls):
        root = find(i)
        if root in groups:
            glo, ghi = groups[root]
            groups[root] = (min(glo, lo), max(ghi, hi))
        else:
            groups[root] = (lo, hi)
    return sorted(groups.values())


def partition_chunks(
    source: Sentence,
    hyp_edits: Sequence[Edit],
    ref_edit_lists: Sequence[Sequence[Edit]],
) -> ChunkPartition:
    """Tile the source into changed/unchanged chunks across all texts.

    The union of all edit spans, closed under overlap merging, gives
    the changed chunks; gaps are unchanged. An insertion interior to a
    gap splits it with a zero-width changed chunk.
    """
    tokens = source.tokens
    all_lists: list[Sequence[Edit]] = [hyp_edits, *ref_edit_lists]
    for edits in all_lists:
        validate_edit_sequence(edits, len(tokens))
    changed_spans = _merged_intervals(all_lists)

    boundaries: list[tuple[int, int, bool]] = []
    cursor = 0
    for lo, hi in changed_spans:
        if lo > cursor:
            boundaries.append((cursor, lo, False))
        boundaries.append((lo, hi, True))
        cursor = hi
    if cursor < len(tokens) or not boundaries:
        boundaries.append((cursor, len(tokens), False))

    def realize(lo: int, hi: int, edits: Sequence[Edit]) -> tuple[Tokens, bool]:
        inside = [e for e in edits if lo <= e.span_start and e.span_end <= hi]
        if not inside:
            return tokens[lo:hi], False
        shifted = [
            Edit(e.span_start - lo, e.span_end - lo, e.replacement, e.label) for e in inside
        ]
        return apply_edits(tokens[lo:hi], shifted), True

    chunks: list[Chunk] = []
    for lo, hi, is_changed in boundaries:
        if not is_changed:
            segment = tokens[lo:hi]
            chunks.append(Chunk(lo, hi, segment, tuple(segment for _ in all_lists),
                                tuple(False for _ in all_lists)))
            continue
        texts: list[Tokens] = []
        flags: list[bool] = []
        for edits in all_lists:
            realization, touched = realize(lo, hi, edits)
            texts.append(realization)
            flags.append(touched)
        chunks.append(Chunk(lo, hi, tokens[lo:hi], tuple(texts), tuple(flags)))
    return ChunkPartition(tuple(chunks))


# --- contrast pairs ----------------------------------------------------------


@dataclass(frozen=True)
class EditPair:
    """A single-edit contrast pair for validity judging.

    s1 and s2 are identical outside exactly one contiguous region: s1
    shows the untouched source text of the focal chunk, s2 the
    hypothesis correction of it, and both follow the reference
    everywhere else.
    """

    s1: Tokens
    s2: Tokens
    edit: Edit
    prev: str | None = None
    next: str | None = None

    def key(self) -> str:
        """Stable content identity for caching and dedup."""
        import hashlib
        import json

        payload = json.dumps(
            {
                "s1": list(self.s1), "s2": list(self.s2),
                "prev": self.prev, "next": self.next,
                "edit": [self.edit.span_start, self.edit.span_end, list(self.edit.replacement)],
            },
            sort_keys=True, separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class DegeneratePairError(ValueError):
    """The pair carries no judgeable contrast and is reported, not emitted.

    ``kind`` is "source" when the hypothesis realization equals the
    source text of the focal chunk (s1 == s2), or "reference" when it
    equals the reference realization (nothing novel to judge).
    """

    def __init__(self, kind: str, edit: Edit):
        super().__init__(f"degenerate pair ({kind}-identical) for edit {edit}")
        self.kind = kind
        self.edit = edit


def construct_pair(
    source: Sentence,
    reference: Sequence[Edit],
    edit: Edit,
    hyp_edits: Sequence[Edit],
) -> EditPair:
    """Build the (S1, S2) pair isolating one hypothesis edit.

    Both sentences follow the reference outside the focal chunk; inside
    it, S1 keeps the source text and S2 the hypothesis realization.
    Non-focal hypothesis edits are discarded.
    """
    if edit not in hyp_edits:
        raise ValueError(f"focal edit {edit} not among hypothesis edits")
    partition = partition_chunks(source, hyp_edits, [reference])
    focal = partition.chunk_containing(edit)

    s1: list[str] = []
    s2: list[str] = []
    for chunk in partition.chunks:
        if chunk is focal:
            s1.extend(chunk.source_tokens)
            s2.extend(chunk.texts[0])
        else:
            s1.extend(chunk.texts[1])
            s2.extend(chunk.texts[1])

    hyp_realization = focal.texts[0]
    if hyp_realization == focal.source_tokens:
        raise DegeneratePairError("source", edit)
    if focal.changed[1] and hyp_realization == focal.texts[1]:
        raise DegeneratePairError("reference", edit)
    return EditPair(tuple(s1), tuple(s2), edit, prev=source.prev, next=source.next)


def build_pairs(
    source: Sentence,
    reference: Sequence[Edit],
    edits: Sequence[Edit],
    hyp_edits: Sequence[Edit],
) -> tuple[list[tuple[Edit, EditPair]], list[DegeneratePairError]]:
    """construct_pair over several focal edits, collecting degenerates."""
    pairs: list[tuple[Edit, EditPair]] = []
    dropped: list[DegeneratePairError] = []
    for e in edits:
        try:
            pairs.append((e, construct_pair(source, reference, e, hyp_edits)))
        except DegeneratePairError as exc:
            logger.warning("dropping %s", exc)
            dropped.append(exc)
    return pairs, dropped


def pair_record(
    pair: EditPair,
    source: Sentence,
    system: str | None = None,
    annotator: int | None = None,
) -> dict:
    """Line-record form of a pair for the dump format."""
    return {
        "s1": list(pair.s1),
        "s2": list(pair.s2),
        "prev": pair.prev,
        "next": pair.next,
        "source": list(source.tokens),
        "edit": {
            "span_start": pair.edit.span_start,
            "span_end": pair.edit.span_end,
            "replacement": list(pair.edit.replacement),
        },
        "origin": {"system": system, "annotator": annotator},
    }
