"""Edit classification and the comprehensive correction metric.

The edit-level score is a generalized F-measure: unmatched hypothesis
edits (false positives) are split into overcorrections (edits to text
every reference left alone) and non-overcorrections (edits overlapping
text some reference also changes), with overcorrections weighted by a
penalty alpha in the precision denominator. Judge-validated false
positives can be reclassified as true positives beforehand. A
sentence-level fluency score f = 1/(1 + H), with H the mean per-token
negative log-probability in nats, is interpolated in with weight gamma:

    P = TP / (TP + FP_noc + alpha * FP_oc)
    F = (1 + beta^2) * P * R / (beta^2 * P + R)
    final = (1 - gamma) * F + gamma * f
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Literal, Mapping, Sequence

from .corpus import CorpusRecord, Edit, Sentence
from .align import DegeneratePairError, EditPair, construct_pair, extract_edits
from .judge import Turn, Verdict

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EditCounts:
    tp: int = 0
    fp_oc: int = 0
    fp_noc: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp_oc, self.fp_noc, self.fn) < 0:
            raise ValueError(f"negative count in {self}")

    def __add__(self, other: "EditCounts") -> "EditCounts":
        return EditCounts(
            self.tp + other.tp,
            self.fp_oc + other.fp_oc,
            self.fp_noc + other.fp_noc,
            self.fn + other.fn,
        )


@dataclass(frozen=True)
class MetricConfig:
    """Weights of the comprehensive metric.

    alpha: overcorrection penalty in [0, 2]; alpha=1 collapses the
    decoupling. beta: precision/recall weight (> 0), 0.5 by default so
    precision counts twice. gamma: fluency interpolation weight in
    [0, 1]; gamma=0 excludes fluency. reclassify: run judge-based
    reclassification of false positives.
    """

    alpha: float = 1.0
    beta: float = 0.5
    gamma: float = 0.0
    reclassify: bool = True

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 2.0:
            raise ValueError(f"alpha must be in [0, 2], got {self.alpha}")
        if self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")

    def fingerprint(self) -> str:
        import hashlib

        blob = f"alpha={self.alpha!r};beta={self.beta!r};gamma={self.gamma!r};reclassify={self.reclassify}"
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


class FpCategory(Enum):
    OVERCORRECTION = "overcorrection"
    NON_OVERCORRECTION = "non_overcorrection"


@dataclass(frozen=True)
class ClassifiedFp:
    edit: Edit
    category: FpCategory


@dataclass(frozen=True)
class FluencyResult:
    """Mean negative log-probability per token (nats) and its score."""

    h: float
    f: float

    def __post_init__(self):
        if not math.isclose(self.f, 1.0 / (1.0 + self.h), rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(f"inconsistent fluency result h={self.h} f={self.f}")


@dataclass(frozen=True)
class ScoreReport:
    counts: EditCounts
    p_g: float
    r: float
    f_beta_g: float
    fluency: FluencyResult | None
    f_x: float
    config: MetricConfig


def decouple_fp(fp: Edit, ref_edits: Sequence[Edit]) -> FpCategory:
    """Split a false positive by whether any reference touches its span.

    Closed hulls are compared, so boundary contact counts as overlap; a
    zero-width insertion at i has hull [i, i].
    """
    lo, hi = fp.hull()
    for ref in ref_edits:
        rlo, rhi = ref.hull()
        if lo <= rhi and rlo <= hi:
            return FpCategory.NON_OVERCORRECTION
    return FpCategory.OVERCORRECTION


def _counts_against(hyp_edits: Sequence[Edit], ref_edits: Sequence[Edit]) -> tuple[EditCounts, list[ClassifiedFp]]:
    ref_keys = {(e.span_start, e.span_end, e.replacement) for e in ref_edits}
    tp = 0
    fps: list[ClassifiedFp] = []
    for e in hyp_edits:
        if (e.span_start, e.span_end, e.replacement) in ref_keys:
            tp += 1
        else:
            fps.append(ClassifiedFp(e, decouple_fp(e, ref_edits)))
    fn = len(ref_edits) - tp
    counts = EditCounts(
        tp=tp,
        fp_oc=sum(1 for f in fps if f.category is FpCategory.OVERCORRECTION),
        fp_noc=sum(1 for f in fps if f.category is FpCategory.NON_OVERCORRECTION),
        fn=fn,
    )
    return counts, fps


def classify_edits(
    hyp_edits: Sequence[Edit],
    ref_edit_lists: Sequence[Sequence[Edit]],
    source: Sentence,
    beta: float = 0.5,
) -> tuple[EditCounts, list[ClassifiedFp], int]:
    """Score hypothesis edits against the best-matching reference.

    The reference maximizing the F-score at alpha=1 is selected (ties
    go to the lowest annotator index) and held fixed for everything
    downstream. True positives match a reference edit exactly on span
    and replacement; leftover hypothesis edits come back decoupled.
    """
    if not ref_edit_lists:
        raise ValueError("ref_edit_lists must not be empty")
    best: tuple[EditCounts, list[ClassifiedFp], int] | None = None
    best_f = -1.0
    for i, ref_edits in enumerate(ref_edit_lists):
        counts, fps = _counts_against(hyp_edits, ref_edits)
        f = generalized_f(counts, alpha=1.0, beta=beta)
        if f > best_f:
            best, best_f = (counts, fps, i), f
    assert best is not None
    return best


def reclassify(
    counts: EditCounts,
    fp_edits: Sequence[ClassifiedFp],
    verdicts: Mapping[Edit, Verdict],
) -> EditCounts:
    """Move judge-validated false positives into the TP count.

    FN stays put: unmatched reference edits remain uncorrected content
    no matter how many novel edits turn out valid.
    """
    out = counts
    for fp in fp_edits:
        if fp.edit not in verdicts:
            raise ValueError(f"missing verdict for false positive {fp.edit}")
        if not verdicts[fp.edit].valid:
            continue
        if fp.category is FpCategory.OVERCORRECTION:
            out = replace(out, tp=out.tp + 1, fp_oc=out.fp_oc - 1)
        else:
            out = replace(out, tp=out.tp + 1, fp_noc=out.fp_noc - 1)
    return out


def generalized_precision(counts: EditCounts, alpha: float) -> float:
    """TP / (TP + FP_noc + alpha * FP_oc), 1.0 when nothing was proposed."""
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    denom = counts.tp + counts.fp_noc + alpha * counts.fp_oc
    if denom == 0:
        return 1.0
    return counts.tp / denom


def recall(counts: EditCounts) -> float:
    """TP / (TP + FN), 1.0 when there was nothing to correct."""
    denom = counts.tp + counts.fn
    if denom == 0:
        return 1.0
    return counts.tp / denom


def generalized_f(counts: EditCounts, alpha: float, beta: float) -> float:
    """(1 + beta^2) * P * R / (beta^2 * P + R), 0 when both P and R are 0."""
    if beta <= 0:
        raise ValueError(f"beta must be > 0, got {beta}")
    p = generalized_precision(counts, alpha)
    r = recall(counts)
    denom = beta * beta * p + r
    if denom == 0:
        return 0.0
    return (1 + beta * beta) * p * r / denom


def fluency_score(logprobs: Sequence[float]) -> FluencyResult:
    """f = 1/(1 + H) with H the mean negative log-probability in nats."""
    if len(logprobs) == 0:
        raise ValueError("fluency_score needs at least one token log-probability")
    h = -sum(logprobs) / len(logprobs)
    return FluencyResult(h=h, f=1.0 / (1.0 + h))


def comprehensive(f_beta_g: float, fluency_f: float, gamma: float) -> float:
    """(1 - gamma) * F + gamma * f."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must be in [0, 1], got {gamma}")
    return (1.0 - gamma) * f_beta_g + gamma * fluency_f


JudgeFn = Callable[[EditPair], Verdict]
FluencyProvider = Callable[[Sentence], Sequence[float]]


def _degenerate_verdict(exc: DegeneratePairError) -> Verdict:
    # Reference-identical content needs no judge: the reference itself
    # attests it. Source-identical content carries no improvement.
    valid = exc.kind == "reference"
    analysis = f"degenerate pair: hypothesis chunk identical to {exc.kind}"
    return Verdict(
        valid=valid,
        analysis=analysis,
        turn_history=(Turn("degenerate", valid, analysis),),
        provenance="degenerate",
    )


def score(
    record: CorpusRecord,
    system: str,
    config: MetricConfig,
    judge: JudgeFn | None = None,
    fluency_provider: FluencyProvider | None = None,
) -> ScoreReport:
    """Score one system hypothesis for one source sentence.

    Composes edit classification, optional judge reclassification, the
    generalized F-score, and fluency interpolation. With
    reclassify=False, alpha=1, gamma=0 this reduces to the plain
    F_beta.
    """
    if system not in record.hypotheses:
        raise ValueError(f"no hypothesis for system {system!r}")
    hyp = record.hypotheses[system]
    source = record.source
    hyp_edits = extract_edits(source.tokens, hyp.tokens)
    ref_lists = record.references.edit_lists()
    counts, fps, ref_idx = classify_edits(hyp_edits, ref_lists, source, beta=config.beta)

    if config.reclassify and fps:
        if judge is None:
            raise ValueError("reclassification requested but no judge provided")
        reference = ref_lists[ref_idx]
        verdicts: dict[Edit, Verdict] = {}
        for fp in fps:
            try:
                pair = construct_pair(source, reference, fp.edit, hyp_edits)
            except DegeneratePairError as exc:
                logger.warning("scoring %s/%s: %s", source.doc_id, source.index, exc)
                verdicts[fp.edit] = _degenerate_verdict(exc)
                continue
            verdicts[fp.edit] = judge(pair)
        counts = reclassify(counts, fps, verdicts)

    p_g = generalized_precision(counts, config.alpha)
    r = recall(counts)
    f = generalized_f(counts, config.alpha, config.beta)

    fluency: FluencyResult | None = None
    if fluency_provider is not None:
        fluency = fluency_score(fluency_provider(hyp))
    elif config.gamma > 0:
        raise ValueError("gamma > 0 requires a fluency provider")

    f_x = comprehensive(f, fluency.f if fluency else 0.0, config.gamma)
    return ScoreReport(counts, p_g, r, f, fluency, f_x, config)


AggregateMode = Literal["corpus_counts", "sentence_mean"]


def aggregate(reports: Sequence[ScoreReport], mode: AggregateMode = "corpus_counts") -> ScoreReport:
    """Combine per-sentence reports into one system-level report.

    corpus_counts sums edit counts and applies the formulas once;
    sentence_mean averages the per-sentence scores. Fluency is averaged
    on f in both modes (with h backed out to keep the pair consistent).
    """
    if not reports:
        raise ValueError("aggregate needs at least one report")
    config = reports[0].config
    if any(r.config != config for r in reports):
        raise ValueError("reports mix metric configurations")

    fluencies = [r.fluency for r in reports]
    agg_fluency: FluencyResult | None = None
    if all(f is not None for f in fluencies):
        mean_f = sum(f.f for f in fluencies) / len(fluencies)
        agg_fluency = FluencyResult(h=1.0 / mean_f - 1.0, f=mean_f)
    elif any(f is not None for f in fluencies):
        raise ValueError("reports mix fluency-bearing and fluency-free entries")

    total = EditCounts()
    for r in reports:
        total = total + r.counts

    if mode == "corpus_counts":
        p_g = generalized_precision(total, config.alpha)
        rec = recall(total)
        f = generalized_f(total, config.alpha, config.beta)
        f_x = comprehensive(f, agg_fluency.f if agg_fluency else 0.0, config.gamma)
        return ScoreReport(total, p_g, rec, f, agg_fluency, f_x, config)
    if mode == "sentence_mean":
        n = len(reports)
        return ScoreReport(
            counts=total,
            p_g=sum(r.p_g for r in reports) / n,
            r=sum(r.r for r in reports) / n,
            f_beta_g=sum(r.f_beta_g for r in reports) / n,
            fluency=agg_fluency,
            f_x=sum(r.f_x for r in reports) / n,
            config=config,
        )
    raise ValueError(f"unknown aggregation mode {mode!r}")
