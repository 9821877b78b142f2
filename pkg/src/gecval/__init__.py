"""Edit-level GEC evaluation and reference expansion toolkit."""

__version__ = "0.1.0"

from .corpus import (  # noqa: F401
    Annotation,
    CorpusRecord,
    Edit,
    M2ParseError,
    ReferenceSet,
    Sentence,
    load_records,
    parse_m2,
    serialize_m2,
)
from .align import (  # noqa: F401
    AlignmentScript,
    ChunkPartition,
    DegeneratePairError,
    EditPair,
    apply_edits,
    construct_pair,
    extract_edits,
    partition_chunks,
)
from .metric import (  # noqa: F401
    EditCounts,
    FluencyResult,
    MetricConfig,
    ScoreReport,
    aggregate,
    classify_edits,
    comprehensive,
    decouple_fp,
    fluency_score,
    generalized_f,
    generalized_precision,
    reclassify,
    score,
)
from .judge import (  # noqa: F401
    IclMemory,
    JudgeConfig,
    ModelEndpoint,
    Verdict,
    VerdictCache,
    judge_batch,
    run_pipeline,
)
from .metaeval import (  # noqa: F401
    CorrelationReport,
    GridSpec,
    HumanJudgments,
    pairwise_eval,
    pearson,
    spearman,
    system_eval,
    tune,
)
from .expand import (  # noqa: F401
    ExpandedReferenceSet,
    ExpansionStats,
    expand_sentence,
    expansion_stats,
    parse_generation,
)
