"""Generation-then-filtering reference expansion.

Model generators propose candidate corrections for a (source, seed
reference) pair; each candidate's novel edits (those not already in the
seed) are isolated into contrast pairs and judged, and a candidate
joins the expanded reference set only when every one of its novel edits
is judged valid. The seed reference always survives.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
import threading
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol, Sequence

from .align import DegeneratePairError, construct_pair, extract_edits
from .corpus import Annotation, Edit, ReferenceSet, Sentence
from .judge import JudgeError, Verdict

logger = logging.getLogger(__name__)

Tokens = tuple[str, ...]

EXHAUSTED_SENTINEL = "ONLY one reference!"

_CANDIDATE_RE = re.compile(r"^\s*\[\s*correction(?:\s*\d+)?\s*\]\s*(\S.*?)\s*$", re.IGNORECASE)


class GenerationParseError(ValueError):
    """Generator output held neither candidates nor the sentinel."""


@dataclass(frozen=True)
class Candidate:
    tokens: Tokens
    generator: str


@dataclass(frozen=True)
class CandidateSet:
    """One generator's candidates for one source sentence."""

    source: Sentence
    seed_reference: Tokens
    generator: str
    candidates: tuple[Candidate, ...]
    exhausted: bool

    def __post_init__(self):
        if self.exhausted and self.candidates:
            raise ValueError("an exhausted generator cannot also carry candidates")
        seen = set()
        for c in self.candidates:
            if c.tokens in seen:
                raise ValueError(f"duplicate candidate {c.tokens}")
            seen.add(c.tokens)


@dataclass(frozen=True)
class RefProvenance:
    generator: str
    verdict_hash: str | None


@dataclass(frozen=True)
class ExpandedReferenceSet:
    """Seed-first reference list with per-reference provenance."""

    source: Sentence
    references: tuple[Tokens, ...]
    provenance: tuple[RefProvenance, ...]

    def __post_init__(self):
        if len(self.references) != len(self.provenance):
            raise ValueError("provenance must align with references")
        if len(set(self.references)) != len(self.references):
            raise ValueError("references must be pairwise distinct")
        for prov in self.provenance[1:]:
            if prov.verdict_hash is None:
                raise ValueError("non-seed references need a verdict on file")


@dataclass(frozen=True)
class ExpansionStats:
    mean: float
    sd: float
    max: int

    def __post_init__(self):
        if not (self.max >= self.mean >= 1):
            raise ValueError(f"expected max >= mean >= 1, got {self}")
        if self.sd < 0:
            raise ValueError("sd must be >= 0")


def render_generation_prompt(source: Sentence, seed_reference: Sequence[str]) -> str:
    """Fill the generation template's Original/Reference slots."""
    if not seed_reference:
        raise ValueError("seed reference must be non-empty")
    template = resources.files("gecval").joinpath("prompts/generation.txt").read_text(encoding="utf-8")
    return template.format(original=" ".join(source.tokens), reference=" ".join(seed_reference))


@dataclass(frozen=True)
class GenerationResult:
    candidates: tuple[Tokens, ...]
    exhausted: bool


def parse_generation(text: str) -> GenerationResult:
    """Pull "[correction N] ..." lines out of generator output.

    Indices may be missing and whitespace is forgiven; prose lines are
    ignored. The sentinel anywhere marks the generator as exhausted.
    Output with neither is an error.
    """
    if EXHAUSTED_SENTINEL.lower() in text.lower():
        return GenerationResult((), True)
    candidates: list[Tokens] = []
    for line in text.splitlines():
        match = _CANDIDATE_RE.match(line)
        if match:
            candidates.append(tuple(match.group(1).split()))
    if not candidates:
        raise GenerationParseError(f"no candidates and no sentinel in {text!r}")
    return GenerationResult(tuple(candidates), False)


class Generator(Protocol):
    name: str

    def __call__(self, prompt: str) -> str: ...


@dataclass
class ScriptedGenerator:
    """Replays canned responses; the offline stand-in for model callers."""

    name: str
    response: str

    def __call__(self, prompt: str) -> str:
        return self.response


class GenerationCache:
    """Generator outputs keyed by (prompt hash, model name)."""

    def __init__(self, path: str | Path | None = None):
        self._path = Path(path) if path else None
        self._lock = threading.Lock()
        self._store: dict[str, str] = {}
        if self._path and self._path.exists():
            for line in self._path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    obj = json.loads(line)
                    self._store[obj["key"]] = obj["text"]

    @staticmethod
    def key(prompt: str, model: str) -> str:
        return hashlib.sha256(f"{model}:{prompt}".encode()).hexdigest()

    def get(self, prompt: str, model: str) -> str | None:
        return self._store.get(self.key(prompt, model))

    def put(self, prompt: str, model: str, text: str) -> None:
        with self._lock:
            key = self.key(prompt, model)
            self._store[key] = text
            if self._path:
                with self._path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"key": key, "text": text}, sort_keys=True) + "\n")


JudgeFn = Callable[..., Verdict]


def gather_candidates(
    source: Sentence,
    seed_reference: Tokens,
    generators: Sequence[Generator],
    cache: GenerationCache | None = None,
) -> list[CandidateSet]:
    """Call every generator; a failing generator is logged and skipped."""
    prompt = render_generation_prompt(source, seed_reference)
    sets: list[CandidateSet] = []
    for gen in generators:
        text = cache.get(prompt, gen.name) if cache else None
        if text is None:
            try:
                text = gen(prompt)
            except Exception as exc:
                logger.warning("generator %s failed on %s/%s: %s",
                               gen.name, source.doc_id, source.index, exc)
                continue
            if cache:
                cache.put(prompt, gen.name, text)
        try:
            result = parse_generation(text)
        except GenerationParseError as exc:
            logger.warning("generator %s output unusable: %s", gen.name, exc)
            continue
        seen: set[Tokens] = set()
        deduped = []
        for tokens in result.candidates:
            if tokens not in seen:
                seen.add(tokens)
                deduped.append(Candidate(tokens, gen.name))
        sets.append(CandidateSet(source, seed_reference, gen.name,
                                 tuple(deduped), result.exhausted))
    return sets


def _verdict_digest(verdicts: Mapping[Edit, Verdict]) -> str:
    blob = json.dumps(
        sorted(
            (e.span_start, e.span_end, list(e.replacement), v.valid, v.provenance)
            for e, v in verdicts.items()
        ),
        sort_keys=True, separators=(",", ":"),
    )
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def expand_sentence(
    source: Sentence,
    seed_reference: Sequence[str],
    generators: Sequence[Generator],
    judge: JudgeFn,
    cache: GenerationCache | None = None,
) -> ExpandedReferenceSet:
    """Expand one sentence's reference set by generation then filtering.

    A candidate is kept only if every novel edit (one absent from the
    seed reference) draws a valid verdict; judging failures reject the
    candidate. Candidates equal to the seed or to an earlier candidate
    are dropped silently.
    """
    if not generators:
        raise ValueError("at least one generator is required")
    seed = tuple(seed_reference)
    seed_edits = extract_edits(source.tokens, seed)
    seed_keys = {(e.span_start, e.span_end, e.replacement) for e in seed_edits}

    references: list[Tokens] = [seed]
    provenance: list[RefProvenance] = [RefProvenance("seed", None)]
    seen: set[Tokens] = {seed}

    for cand_set in gather_candidates(source, seed, generators, cache):
        for candidate in cand_set.candidates:
            if candidate.tokens in seen:
                continue
            cand_edits = extract_edits(source.tokens, candidate.tokens)
            novel = [e for e in cand_edits
                     if (e.span_start, e.span_end, e.replacement) not in seed_keys]
            verdicts: dict[Edit, Verdict] = {}
            accepted = True
            for edit in novel:
                try:
                    pair = construct_pair(source, seed_edits, edit, cand_edits)
                except DegeneratePairError as exc:
                    # Reference-identical chunks carry nothing new and pass;
                    # source-identical chunks carry no improvement and fail.
                    if exc.kind != "reference":
                        accepted = False
                        break
                    continue
                try:
                    verdict = judge(pair)
                except JudgeError as exc:
                    logger.warning("judge failed on candidate %s: %s", candidate.tokens, exc)
                    accepted = False
                    break
                verdicts[edit] = verdict
                if not verdict.valid:
                    accepted = False
                    break
            if accepted:
                seen.add(candidate.tokens)
                references.append(candidate.tokens)
                provenance.append(RefProvenance(candidate.generator, _verdict_digest(verdicts)))
    return ExpandedReferenceSet(source, tuple(references), tuple(provenance))


def expansion_stats(sets: Sequence) -> ExpansionStats:
    """Mean / sample SD / max of references per sentence.

    Accepts ExpandedReferenceSets or bare per-sentence counts.
    """
    if not sets:
        raise ValueError("expansion_stats needs at least one sentence")
    counts = [s if isinstance(s, int) else len(s.references) for s in sets]
    n = len(counts)
    mean = sum(counts) / n
    sd = 0.0 if n == 1 else math.sqrt(sum((c - mean) ** 2 for c in counts) / (n - 1))
    return ExpansionStats(mean=mean, sd=sd, max=max(counts))


def stats_table(pre: ExpansionStats, post: ExpansionStats) -> str:
    """Plain-text stats table: Mean/S.D./Max rows, pre/post columns."""
    rows = [
        ("#Ref. / Sent.", "Pre-filter", "Post-filter"),
        ("Mean", f"{pre.mean:.2f}", f"{post.mean:.2f}"),
        ("S.D.", f"{pre.sd:.2f}", f"{post.sd:.2f}"),
        ("Max", str(pre.max), str(post.max)),
    ]
    widths = [max(len(r[i]) for r in rows) for i in range(3)]
    return "\n".join(
        "  ".join(cell.ljust(widths[i]) if i == 0 else cell.rjust(widths[i])
                  for i, cell in enumerate(row))
        for row in rows
    )


def expanded_to_refsets(sets: Iterable[ExpandedReferenceSet]) -> list[ReferenceSet]:
    """Expanded corpora as ReferenceSets, one annotator per reference."""
    out = []
    for s in sets:
        annotations = tuple(
            Annotation(i, tuple(extract_edits(s.source.tokens, ref)))
            for i, ref in enumerate(s.references)
        )
        out.append(ReferenceSet(s.source, annotations))
    return out


def expanded_to_records(sets: Iterable[ExpandedReferenceSet]) -> list[str]:
    """Expanded corpora in the line-record format."""
    lines = []
    for s in sets:
        lines.append(json.dumps({
            "doc_id": s.source.doc_id, "index": s.source.index,
            "role": "source", "tokens": list(s.source.tokens),
        }, sort_keys=True, separators=(",", ":")))
        for i, ref in enumerate(s.references):
            lines.append(json.dumps({
                "doc_id": s.source.doc_id, "index": s.source.index,
                "role": "reference", "annotator": i, "tokens": list(ref),
                "provenance": {
                    "generator": s.provenance[i].generator,
                    "verdict_hash": s.provenance[i].verdict_hash,
                },
            }, sort_keys=True, separators=(",", ":")))
    return lines
