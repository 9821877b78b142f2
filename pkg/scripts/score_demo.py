"""End-to-end offline scoring demo.

Builds a tiny corpus on the fly, scores a hypothesis with and without
judge reclassification and fluency interpolation, and prints the
resulting reports. Everything runs locally: a lookup-table judge stands
in for the remote judge and the bigram model provides fluency.

Run: python scripts/score_demo.py
"""

from __future__ import annotations

from gecval.corpus import parse_m2, CorpusRecord, Sentence
from gecval.fluency import BigramFluencyModel
from gecval.judge import LookupTableJudge
from gecval.metric import MetricConfig, aggregate, score

M2 = """\
S I likes cats
A 1 2|||SVA|||like|||REQUIRED|||-NONE-|||0

S He go to home
A 1 2|||SVA|||goes|||REQUIRED|||-NONE-|||0
A 2 3|||PREP|||-NONE-|||REQUIRED|||-NONE-|||0
"""

HYPOTHESES = [
    "I love cats",
    "He goes to home",
]

FLUENCY_CORPUS = [
    "I like cats".split(),
    "I love cats".split(),
    "He goes home".split(),
    "cats like home".split(),
]


def main() -> None:
    refsets = parse_m2(M2)
    records = []
    for refset, hyp in zip(refsets, HYPOTHESES):
        source = refset.source
        hyp_sentence = Sentence(source.doc_id, source.index, tuple(hyp.split()))
        records.append(CorpusRecord(source, {"demo": hyp_sentence}, refset))

    judge = LookupTableJudge({("I likes cats", "I love cats"): True}, default=False)
    fluency = BigramFluencyModel.fit(FLUENCY_CORPUS)

    configs = {
        "plain F_0.5 (no reclassify, alpha=1, gamma=0)":
            MetricConfig(alpha=1.0, gamma=0.0, reclassify=False),
        "with judge reclassification":
            MetricConfig(alpha=1.0, gamma=0.0, reclassify=True),
        "full metric (alpha=0.6, gamma=0.3)":
            MetricConfig(alpha=0.6, gamma=0.3, reclassify=True),
    }
    for label, config in configs.items():
        reports = [
            score(r, "demo", config, judge=judge,
                  fluency_provider=fluency if config.gamma > 0 else None)
            for r in records
        ]
        overall = aggregate(reports, "corpus_counts")
        fluency_note = f"  fluency={overall.fluency.f:.4f}" if overall.fluency else ""
        print(f"{label}:")
        print(f"  P={overall.p_g:.4f}  R={overall.r:.4f}  "
              f"F={overall.f_beta_g:.4f}{fluency_note}  final={overall.f_x:.4f}")
        print(f"  counts: {overall.counts}")


if __name__ == "__main__":
    main()
