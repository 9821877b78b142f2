from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from gecval.metaeval import (
    CorrelationReport,
    DegenerateDataError,
    GridSpec,
    HumanJudgments,
    Objective,
    PairwiseJudgment,
    grid_records,
    judgments_from_jsonl,
    pairwise_eval,
    pearson,
    spearman,
    split_by_domain,
    system_eval,
    tune,
)


class TestPearson:
    def test_exact_linearity(self):
        assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0, abs=1e-12)

    def test_exact_anti_linearity(self):
        assert pearson([1, 2, 3], [6, 4, 2]) == pytest.approx(-1.0, abs=1e-12)

    def test_hand_computed(self):
        # closed form: cov = 1/3, sd_x = sd_y = sqrt(2/3) -> r = 0.5
        assert pearson([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5, abs=1e-12)

    def test_zero_variance_rejected(self):
        with pytest.raises(DegenerateDataError):
            pearson([1, 1, 1], [1, 2, 3])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            pearson([1, 2], [1, 2, 3])

    def test_too_short(self):
        with pytest.raises(ValueError):
            pearson([1], [2])


class TestSpearman:
    def test_co_monotone(self):
        assert spearman([1, 2, 3], [10, 100, 1000]) == pytest.approx(1.0, abs=1e-12)

    def test_rank_then_pearson(self):
        assert spearman([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5, abs=1e-12)

    def test_constant_side_rejected(self):
        with pytest.raises(DegenerateDataError):
            spearman([1, 2, 3], [5, 5, 5])

    def test_midranks_for_ties(self):
        # [1, 2, 2, 3] -> ranks [1, 2.5, 2.5, 4]
        assert spearman([1, 2, 2, 3], [1, 2.5, 2.5, 4]) == pytest.approx(1.0, abs=1e-12)


floats_list = st.lists(st.floats(-100, 100), min_size=3, max_size=20)


@given(floats_list, st.floats(0.1, 10), st.floats(-5, 5))
@settings(max_examples=200)
def test_pearson_scale_shift_invariance(xs, a, b):
    ys = [2.0 * x + 1.0 for x in xs]
    try:
        base = pearson(xs, ys)
    except DegenerateDataError:
        return
    assert pearson([a * x + b for x in xs], ys) == pytest.approx(base, abs=1e-9)
    assert pearson([-a * x + b for x in xs], ys) == pytest.approx(-base, abs=1e-9)


@given(floats_list)
@settings(max_examples=200)
def test_permutation_invariance(xs):
    ys = [x * 1.5 - 2 for x in xs]
    rng = random.Random(0)
    order = list(range(len(xs)))
    rng.shuffle(order)
    try:
        base = pearson(xs, ys)
    except DegenerateDataError:
        return
    assert pearson([xs[i] for i in order], [ys[i] for i in order]) == pytest.approx(base, abs=1e-9)


class TestPairwiseEval:
    def judgments(self, *pairs):
        return HumanJudgments({}, tuple(PairwiseJudgment(*p) for p in pairs))

    def test_all_concordant(self):
        scores = {"s1": {"A": 0.9, "B": 0.5, "C": 0.1}}
        report = pairwise_eval(scores, self.judgments(
            ("s1", "A", "B"), ("s1", "B", "C"), ("s1", "A", "C"),
        ))
        assert report.accuracy == 1.0 and report.kendall_tau == 1.0

    def test_mixed_hand_computed(self):
        # 3 concordant + 1 discordant: acc 0.75, tau 0.5
        scores = {"s1": {"A": 0.9, "B": 0.5, "C": 0.1, "D": 0.95}}
        report = pairwise_eval(scores, self.judgments(
            ("s1", "A", "B"), ("s1", "B", "C"), ("s1", "A", "C"), ("s1", "D", "A"),
        ))
        # D > A holds, re-check judgment set: make one discordant
        scores["s1"]["D"] = 0.0
        report = pairwise_eval(scores, self.judgments(
            ("s1", "A", "B"), ("s1", "B", "C"), ("s1", "A", "C"), ("s1", "D", "A"),
        ))
        assert report.accuracy == 0.75
        assert report.kendall_tau == 0.5
        assert report.kendall_tau == 2 * report.accuracy - 1

    def test_ties_fail_accuracy_but_skip_tau(self):
        scores = {"s1": {"A": 0.5, "B": 0.5, "C": 0.1}}
        report = pairwise_eval(scores, self.judgments(
            ("s1", "A", "B"), ("s1", "B", "C"),
        ))
        assert report.n_ties == 1
        assert report.accuracy == 0.5     # tie counted as failure
        assert report.kendall_tau == 1.0  # tie excluded

    def test_missing_score_rejected(self):
        with pytest.raises(ValueError, match="missing score"):
            pairwise_eval({"s1": {"A": 1.0}}, self.judgments(("s1", "A", "B")))

    def test_paper_style_relation(self):
        # reported pairing acc 0.780 / tau 0.559 obeys tau ~= 2*acc - 1
        assert abs(0.559 - (2 * 0.780 - 1)) <= 0.005


@given(st.integers(0, 2**31 - 1))
@settings(max_examples=200)
def test_tau_accuracy_identity_without_ties(seed):
    rng = random.Random(seed)
    systems = ["A", "B", "C", "D"]
    scores = {"s": {name: rng.random() for name in systems}}
    judgments = []
    for i, better in enumerate(systems):
        for worse in systems[i + 1:]:
            if rng.random() < 0.5:
                judgments.append(PairwiseJudgment("s", better, worse))
            else:
                judgments.append(PairwiseJudgment("s", worse, better))
    report = pairwise_eval(scores, HumanJudgments({}, tuple(judgments)))
    if report.n_ties == 0:
        assert report.kendall_tau == pytest.approx(2 * report.accuracy - 1, abs=1e-12)


class TestSystemEval:
    def test_perfect_agreement(self):
        scores = {"a": 0.1, "b": 0.2, "c": 0.3}
        report = system_eval(scores, dict(scores))
        assert report.pearson_r == pytest.approx(1.0)
        assert report.spearman_rho == pytest.approx(1.0)

    def test_reversed_order(self):
        scores = {"a": 0.1, "b": 0.2, "c": 0.3}
        human = {"a": 3.0, "b": 2.0, "c": 1.0}
        assert system_eval(scores, human).spearman_rho == pytest.approx(-1.0)

    def test_neighbor_swap_matches_rank_formula(self):
        # 12 systems, two adjacent ranks swapped: rho = 1 - 6*2/(n(n^2-1))
        n = 12
        systems = [f"s{i}" for i in range(n)]
        human = {s: float(i) for i, s in enumerate(systems)}
        metric = dict(human)
        metric["s5"], metric["s6"] = metric["s6"], metric["s5"]
        expected = 1 - 6 * 2 / (n * (n * n - 1))
        assert system_eval(metric, human).spearman_rho == pytest.approx(expected, abs=1e-12)

    def test_set_mismatch_rejected(self):
        with pytest.raises(ValueError):
            system_eval({"a": 1, "b": 2, "c": 3}, {"a": 1, "b": 2, "d": 3})

    def test_needs_three_systems(self):
        with pytest.raises(ValueError):
            system_eval({"a": 1, "b": 2}, {"a": 1, "b": 2})


class TestJudgmentTypes:
    def test_self_pair_rejected(self):
        with pytest.raises(ValueError):
            PairwiseJudgment("s", "A", "A")

    def test_unknown_system_rejected(self):
        with pytest.raises(ValueError):
            HumanJudgments({"A": 1.0}, (PairwiseJudgment("s", "A", "B"),))

    def test_granularity_validated(self):
        with pytest.raises(ValueError):
            PairwiseJudgment("s", "A", "B", granularity="weird")


class TestGridSpec:
    def test_default_grid_size(self):
        spec = GridSpec()
        assert len(spec.alphas()) == 201
        assert len(spec.gammas()) == 101

    def test_grid_values_exact(self):
        spec = GridSpec()
        assert 1.0 in spec.alphas()
        assert 0.5 in spec.gammas()
        assert spec.alphas()[0] == 0.0 and spec.alphas()[-1] == 2.0

    def test_bad_objective_combo(self):
        with pytest.raises(ValueError):
            Objective("system", "accuracy")
        with pytest.raises(ValueError):
            Objective("sentence", "r")

    def test_objective_parse(self):
        assert Objective.parse("sentence:accuracy") == Objective("sentence", "accuracy")


class TestTune:
    def planted_scorer(self, peak_alpha=1.0, peak_gamma=0.5):
        """System scores drifting away from the human ranking as (alpha,
        gamma) leaves the peak; pearson r is then maximal exactly there."""
        human = {"a": 1.0, "b": 2.0, "c": 3.0, "d": 4.0}
        orthogonal = {"a": 1.0, "b": -1.0, "c": -1.0, "d": 1.0}

        def scorer(train_data, alpha, gamma):
            eps = abs(alpha - peak_alpha) + abs(gamma - peak_gamma)
            return {s: human[s] + eps * orthogonal[s] for s in human}

        return human, scorer

    def test_planted_maximum_found_exactly(self):
        human, scorer = self.planted_scorer()
        judgments = HumanJudgments(human, ())
        spec = GridSpec(objective=Objective("system", "r"))
        result = tune(["x"], judgments, spec, scorer)
        assert (result.alpha, result.gamma) == (1.0, 0.5)
        assert result.value == pytest.approx(1.0)
        assert len(result.grid) == 201 * 101

    def test_full_grid_rescan_confirms_optimum(self):
        human, scorer = self.planted_scorer(peak_alpha=0.25, peak_gamma=0.75)
        judgments = HumanJudgments(human, ())
        spec = GridSpec(alpha_range=(0.0, 1.0), alpha_step=0.05,
                        gamma_range=(0.0, 1.0), gamma_step=0.05,
                        objective=Objective("system", "r"))
        result = tune(["x"], judgments, spec, scorer)
        assert result.value >= max(p.value for p in result.grid)
        best = max(result.grid, key=lambda p: (p.value, -p.alpha, -p.gamma))
        assert (result.alpha, result.gamma) == (best.alpha, best.gamma)

    def test_constant_objective_tie_breaks_low(self):
        judgments = HumanJudgments({"a": 1.0, "b": 2.0, "c": 3.0}, ())

        def scorer(train_data, alpha, gamma):
            return {"a": 1.0, "b": 2.0, "c": 3.0}

        spec = GridSpec(alpha_range=(0.0, 0.1), gamma_range=(0.0, 0.1),
                        objective=Objective("system", "r"))
        result = tune(["x"], judgments, spec, scorer)
        assert (result.alpha, result.gamma) == (0.0, 0.0)

    def test_empty_training_data_rejected(self):
        judgments = HumanJudgments({}, ())
        with pytest.raises(ValueError):
            tune([], judgments, GridSpec(), lambda d, a, g: {})

    def test_grid_records_roundtrip(self):
        human, scorer = self.planted_scorer()
        spec = GridSpec(alpha_range=(0.0, 0.02), gamma_range=(0.0, 0.02),
                        objective=Objective("system", "r"))
        result = tune(["x"], HumanJudgments(human, ()), spec, scorer)
        lines = list(grid_records(result))
        assert len(lines) == 1 + len(result.grid)
        import json

        assert json.loads(lines[0])["optimum"]["alpha"] == result.alpha


class TestSplitByDomain:
    def test_disjoint(self):
        domains = {f"s{i}": ("genetic" if i % 2 else "social") for i in range(10)}
        train, test = split_by_domain(domains, "genetic")
        assert train and test
        assert not (train & test)
        assert train | test == set(domains)

    def test_unknown_domain_rejected(self):
        with pytest.raises(ValueError):
            split_by_domain({"a": "x"}, "zzz")


class TestLoaders:
    def test_jsonl_loading(self, tmp_path):
        import json

        ranking = tmp_path / "ranking.jsonl"
        ranking.write_text("\n".join([
            json.dumps({"system": "A", "human_score": 1.5}),
            json.dumps({"system": "B", "human_score": 0.5}),
        ]), encoding="utf-8")
        judgments = tmp_path / "judgments.jsonl"
        judgments.write_text(json.dumps(
            {"sentence_id": "s1", "better": "A", "worse": "B"}
        ), encoding="utf-8")
        loaded = judgments_from_jsonl(judgments, ranking)
        assert loaded.system_ranking == {"A": 1.5, "B": 0.5}
        assert loaded.pairwise[0].better == "A"
