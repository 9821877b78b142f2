"""Meta-evaluation against human judgments.

System-level agreement uses Pearson's r over scores and Spearman's rho
over the induced rankings; sentence-level agreement compares the
metric's preference on each human-judged pair of corrections, reporting
classification accuracy and Kendall's tau. A grid tuner scans the
(alpha, gamma) plane for the weights maximizing a chosen objective.

Tie conventions: metric ties on a judged pair are excluded from tau and
counted as failures in accuracy, so tau == 2 * accuracy - 1 whenever
there are no ties. Spearman uses mid-ranks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence


class DegenerateDataError(ValueError):
    """Raised when a statistic is undefined on the given data."""


@dataclass(frozen=True)
class PairwiseJudgment:
    sentence_id: str
    better: str
    worse: str
    granularity: str = "sentence_level"

    def __post_init__(self):
        if self.better == self.worse:
            raise ValueError(f"judgment relates system {self.better!r} to itself")
        if self.granularity not in ("edit_level", "sentence_level"):
            raise ValueError(f"unknown granularity {self.granularity!r}")


@dataclass(frozen=True)
class HumanJudgments:
    """External human preferences: a system score table plus judged pairs."""

    system_ranking: Mapping[str, float]
    pairwise: tuple[PairwiseJudgment, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "pairwise", tuple(self.pairwise))
        if self.system_ranking:
            known = set(self.system_ranking)
            for j in self.pairwise:
                if j.better not in known or j.worse not in known:
                    raise ValueError(f"judgment references unknown system: {j}")


@dataclass(frozen=True)
class CorrelationReport:
    pearson_r: float | None = None
    spearman_rho: float | None = None
    kendall_tau: float | None = None
    accuracy: float | None = None
    n_pairs: int = 0
    n_ties: int = 0

    def __post_init__(self):
        for name in ("pearson_r", "spearman_rho", "kendall_tau"):
            value = getattr(self, name)
            if value is not None and not -1.0 - 1e-12 <= value <= 1.0 + 1e-12:
                raise ValueError(f"{name} out of [-1, 1]: {value}")
        if self.accuracy is not None and not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy out of [0, 1]: {self.accuracy}")


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Product-moment correlation coefficient."""
    if len(xs) != len(ys):
        raise ValueError("input lengths differ")
    n = len(xs)
    if n < 2:
        raise ValueError("need at least two observations")
    mean_x = sum(xs) / n
    mean_y = sum(ys) / n
    dx = [x - mean_x for x in xs]
    dy = [y - mean_y for y in ys]
    var_x = sum(d * d for d in dx)
    var_y = sum(d * d for d in dy)
    if var_x == 0 or var_y == 0:
        raise DegenerateDataError("zero variance makes the correlation undefined")
    return sum(a * b for a, b in zip(dx, dy)) / math.sqrt(var_x * var_y)


def _midranks(values: Sequence[float]) -> list[float]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = mean_rank
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson over mid-ranks (ties share their mean rank)."""
    try:
        return pearson(_midranks(xs), _midranks(ys))
    except DegenerateDataError:
        raise DegenerateDataError("zero rank variance makes spearman undefined") from None


SentenceScores = Mapping[str, Mapping[str, float]]


def pairwise_eval(scores: SentenceScores, judgments: HumanJudgments) -> CorrelationReport:
    """Compare metric preferences with human pairwise judgments.

    A judged pair is concordant when the metric strictly prefers the
    human-preferred correction, discordant when it strictly opposes,
    and a tie otherwise. tau = (C - D)/(C + D); accuracy = C/(C + D + T).
    """
    concordant = discordant = ties = 0
    for j in judgments.pairwise:
        try:
            better = scores[j.sentence_id][j.better]
            worse = scores[j.sentence_id][j.worse]
        except KeyError as exc:
            raise ValueError(f"missing score for judgment {j}: {exc}") from None
        if better > worse:
            concordant += 1
        elif better < worse:
            discordant += 1
        else:
            ties += 1
    total = concordant + discordant + ties
    if total == 0:
        raise ValueError("no judged pairs to evaluate")
    if concordant + discordant == 0:
        raise DegenerateDataError("every metric comparison tied; tau undefined")
    return CorrelationReport(
        kendall_tau=(concordant - discordant) / (concordant + discordant),
        accuracy=concordant / total,
        n_pairs=total,
        n_ties=ties,
    )


def system_eval(
    system_scores: Mapping[str, float],
    human_ranking: Mapping[str, float],
) -> CorrelationReport:
    """Correlate metric system scores with the human score table."""
    if set(system_scores) != set(human_ranking):
        raise ValueError(
            f"system sets differ: {sorted(system_scores)} vs {sorted(human_ranking)}"
        )
    systems = sorted(system_scores)
    if len(systems) < 3:
        raise ValueError("need at least three systems")
    xs = [system_scores[s] for s in systems]
    ys = [human_ranking[s] for s in systems]
    return CorrelationReport(
        pearson_r=pearson(xs, ys),
        spearman_rho=spearman(xs, ys),
        n_pairs=len(systems),
    )


# --- grid tuner ---------------------------------------------------------------


@dataclass(frozen=True)
class Objective:
    level: str
    statistic: str

    _VALID = {"system": ("r", "rho"), "sentence": ("tau", "accuracy")}

    def __post_init__(self):
        if self.level not in self._VALID:
            raise ValueError(f"unknown objective level {self.level!r}")
        if self.statistic not in self._VALID[self.level]:
            raise ValueError(
                f"statistic {self.statistic!r} not available at {self.level} level"
            )

    @classmethod
    def parse(cls, text: str) -> "Objective":
        level, _, statistic = text.partition(":")
        return cls(level, statistic)


@dataclass(frozen=True)
class GridSpec:
    alpha_range: tuple[float, float] = (0.0, 2.0)
    alpha_step: float = 0.01
    gamma_range: tuple[float, float] = (0.0, 1.0)
    gamma_step: float = 0.01
    objective: Objective = Objective("sentence", "accuracy")

    def __post_init__(self):
        for (lo, hi), step in ((self.alpha_range, self.alpha_step),
                               (self.gamma_range, self.gamma_step)):
            if step <= 0:
                raise ValueError("grid step must be > 0")
            if hi < lo:
                raise ValueError(f"range ({lo}, {hi}) badly ordered")

    def alphas(self) -> list[float]:
        return _grid_values(self.alpha_range, self.alpha_step)

    def gammas(self) -> list[float]:
        return _grid_values(self.gamma_range, self.gamma_step)


def _grid_values(bounds: tuple[float, float], step: float) -> list[float]:
    lo, hi = bounds
    count = round((hi - lo) / step) + 1
    return [round(lo + i * step, 9) for i in range(count)]


@dataclass(frozen=True)
class GridPoint:
    alpha: float
    gamma: float
    value: float


@dataclass(frozen=True)
class TuneResult:
    alpha: float
    gamma: float
    value: float
    grid: tuple[GridPoint, ...]


Scorer = Callable[[object, float, float], Mapping]


def evaluate_objective(scores: Mapping, judgments: HumanJudgments, objective: Objective) -> float:
    if objective.level == "system":
        report = system_eval(scores, judgments.system_ranking)
        return report.pearson_r if objective.statistic == "r" else report.spearman_rho
    report = pairwise_eval(scores, judgments)
    return report.kendall_tau if objective.statistic == "tau" else report.accuracy


def tune(
    train_data: object,
    judgments: HumanJudgments,
    spec: GridSpec,
    scorer: Scorer,
) -> TuneResult:
    """Exhaustively scan the (alpha, gamma) grid for the best objective.

    The scorer must be deterministic given (alpha, gamma); ties break
    toward smaller alpha, then smaller gamma. The full grid is returned
    for plotting.
    """
    if train_data is None or (hasattr(train_data, "__len__") and len(train_data) == 0):
        raise ValueError("empty training data")
    grid: list[GridPoint] = []
    best: GridPoint | None = None
    for alpha in spec.alphas():
        for gamma in spec.gammas():
            value = evaluate_objective(scorer(train_data, alpha, gamma), judgments, spec.objective)
            point = GridPoint(alpha, gamma, value)
            grid.append(point)
            if best is None or point.value > best.value:
                best = point
    assert best is not None
    return TuneResult(best.alpha, best.gamma, best.value, tuple(grid))


def split_by_domain(
    domains: Mapping[str, str],
    train_domain: str,
) -> tuple[frozenset[str], frozenset[str]]:
    """Assign one domain entirely to training, the rest to testing."""
    if train_domain not in set(domains.values()):
        raise ValueError(f"unknown domain {train_domain!r}")
    train = frozenset(sid for sid, d in domains.items() if d == train_domain)
    test = frozenset(domains) - train
    return train, test


# --- file formats -------------------------------------------------------------


def judgments_from_jsonl(
    pairwise_path: str | Path | None = None,
    ranking_path: str | Path | None = None,
) -> HumanJudgments:
    """Load judged pairs ({sentence_id, better, worse, granularity}) and a
    ranking table ({system, human_score})."""
    ranking: dict[str, float] = {}
    if ranking_path is not None:
        for line in Path(ranking_path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            ranking[obj["system"]] = float(obj["human_score"])
    pairwise: list[PairwiseJudgment] = []
    if pairwise_path is not None:
        for line in Path(pairwise_path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            pairwise.append(PairwiseJudgment(
                sentence_id=str(obj["sentence_id"]),
                better=obj["better"],
                worse=obj["worse"],
                granularity=obj.get("granularity", "sentence_level"),
            ))
    return HumanJudgments(ranking, tuple(pairwise))


def grid_records(result: TuneResult) -> Iterable[str]:
    """The tuner's grid table plus its optimum, as line records."""
    yield json.dumps({
        "optimum": {"alpha": result.alpha, "gamma": result.gamma, "value": result.value}
    }, sort_keys=True)
    for point in result.grid:
        yield json.dumps(
            {"alpha": point.alpha, "gamma": point.gamma, "objective": point.value},
            sort_keys=True,
        )
