"""Command-line surface binding all pipelines.

Subcommands map 1:1 to module pipelines: extract, pairs, judge, score,
tune, metaeval, expand, stats. Every run is reproducible: randomness is
seeded via --seed, and identical invocations on identical inputs (and
cache state) produce identical artifacts when SOURCE_DATE_EPOCH pins
the manifest timestamp.

JSONL artifacts embed their run manifest as the first line; text and M2
artifacts get a sidecar ``<out>.manifest.json`` instead, since those
formats have no comment syntax.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__
from .align import EditPair, apply_edits, build_pairs, extract_edits, pair_record
from .corpus import CorpusRecord, Edit, Sentence, parse_m2, serialize_m2
from .expand import (
    GenerationCache,
    expand_sentence,
    expanded_to_records,
    expanded_to_refsets,
    expansion_stats,
    stats_table,
)
from .fluency import BigramFluencyModel, HttpLogprobProvider
from .judge import (
    ClassifierJudge,
    JudgeError,
    LookupTableJudge,
    PipelineJudge,
    HttpTransport,
    VerdictCache,
    always_invalid_judge,
    always_valid_judge,
    dump_verdict_records,
    judge_batch,
    load_judge_config,
)
from .metaeval import (
    GridSpec,
    HumanJudgments,
    Objective,
    grid_records,
    judgments_from_jsonl,
    pairwise_eval,
    system_eval,
    tune,
)
from .metric import (
    EditCounts,
    MetricConfig,
    aggregate,
    classify_edits,
    comprehensive,
    generalized_f,
    score,
)


# --- manifests and line-record IO --------------------------------------------


@dataclass(frozen=True)
class RunManifest:
    command: str
    config_fingerprint: str
    input_hashes: dict[str, str]
    tool_version: str
    timestamp: str

    def to_dict(self) -> dict:
        return {"manifest": {
            "command": self.command,
            "config_fingerprint": self.config_fingerprint,
            "input_hashes": self.input_hashes,
            "tool_version": self.tool_version,
            "timestamp": self.timestamp,
        }}


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    moment = float(epoch) if epoch else time.time()
    return datetime.fromtimestamp(moment, tz=timezone.utc).isoformat()


def _hash_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def build_manifest(args: argparse.Namespace, inputs: Sequence[str | Path]) -> RunManifest:
    settings = {k: str(v) for k, v in sorted(vars(args).items()) if k not in ("func", "output")}
    fingerprint = hashlib.sha256(json.dumps(settings, sort_keys=True).encode()).hexdigest()[:16]
    return RunManifest(
        command=args.command,
        config_fingerprint=fingerprint,
        input_hashes={str(p): _hash_file(p) for p in inputs},
        tool_version=__version__,
        timestamp=_timestamp(),
    )


def write_jsonl(path: str | Path, lines: Iterable[str], manifest: RunManifest) -> None:
    header = [json.dumps(manifest.to_dict(), sort_keys=True)]
    Path(path).write_text("\n".join(header + list(lines)) + "\n", encoding="utf-8")


def write_text(path: str | Path, text: str, manifest: RunManifest) -> None:
    Path(path).write_text(text, encoding="utf-8")
    Path(str(path) + ".manifest.json").write_text(
        json.dumps(manifest.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def read_jsonl(path: str | Path) -> list[dict]:
    """Read line records, skipping embedded manifest lines."""
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        if isinstance(obj, dict) and "manifest" in obj and len(obj) == 1:
            continue
        records.append(obj)
    return records


# --- shared input plumbing -----------------------------------------------------


def _read_token_lines(path: str | Path) -> list[tuple[str, ...]]:
    return [tuple(line.split())
            for line in Path(path).read_text(encoding="utf-8").splitlines()]


def _records_from_m2(m2_path: str | Path, hyp_path: str | Path, system: str) -> list[CorpusRecord]:
    refsets = parse_m2(Path(m2_path).read_text(encoding="utf-8"))
    hyps = _read_token_lines(hyp_path)
    if len(hyps) != len(refsets):
        raise ValueError(
            f"{hyp_path} has {len(hyps)} sentences but {m2_path} has {len(refsets)} blocks"
        )
    records = []
    for refset, hyp_tokens in zip(refsets, hyps):
        source = refset.source
        hyp = Sentence(source.doc_id, source.index, hyp_tokens, prev=source.prev, next=source.next)
        records.append(CorpusRecord(source, {system: hyp}, refset))
    return records


def _make_judge(spec: str | None, args: argparse.Namespace):
    if spec is None:
        return None
    if spec == "stub:always-valid":
        return always_valid_judge
    if spec == "stub:always-invalid":
        return always_invalid_judge
    if spec.startswith("table:"):
        table = {}
        for obj in read_jsonl(spec[len("table:"):]):
            table[(obj["s1"], obj["s2"])] = bool(obj["valid"])
        return LookupTableJudge(table, default=False)
    if spec.startswith("classifier:"):
        return ClassifierJudge(spec[len("classifier:"):])
    if spec == "pipeline":
        if not args.config:
            raise ValueError("--judge pipeline requires --config with a judge config file")
        config = load_judge_config(args.config)
        if args.seed is not None:
            config = replace(config, seed=args.seed)
        if args.jobs is not None:
            config = replace(config, concurrency=args.jobs)
        cache = VerdictCache(args.cache) if getattr(args, "cache", None) else None
        return PipelineJudge(config, HttpTransport(), cache)
    raise ValueError(f"unknown judge spec {spec!r}")


def _make_fluency(spec: str | None):
    if spec is None:
        return None
    if spec.startswith("bigram:"):
        return BigramFluencyModel.fit_file(spec[len("bigram:"):])
    if spec.startswith("http://") or spec.startswith("https://"):
        return HttpLogprobProvider(spec)
    raise ValueError(f"unknown fluency spec {spec!r}")


def _sentence_id(source: Sentence) -> str:
    return f"{source.doc_id}:{source.index}"


# --- subcommands ---------------------------------------------------------------


def cmd_extract(args: argparse.Namespace) -> int:
    sources = _read_token_lines(args.source)
    targets = _read_token_lines(args.target)
    if len(sources) != len(targets):
        raise ValueError("source and target files differ in length")
    lines = []
    for i, (src, tgt) in enumerate(zip(sources, targets)):
        edits = extract_edits(src, tgt)
        lines.append(json.dumps({
            "index": i,
            "source": list(src),
            "edits": [
                {"span_start": e.span_start, "span_end": e.span_end,
                 "replacement": list(e.replacement)}
                for e in edits
            ],
        }, sort_keys=True))
    write_jsonl(args.output, lines, build_manifest(args, [args.source, args.target]))
    return 0


def cmd_pairs(args: argparse.Namespace) -> int:
    records = _records_from_m2(args.m2, args.hyp, args.system)
    lines = []
    n_dropped = 0
    for record in records:
        source = record.source
        hyp = record.hypotheses[args.system]
        hyp_edits = extract_edits(source.tokens, hyp.tokens)
        ref_lists = record.references.edit_lists()
        if not ref_lists:
            continue
        counts, fps, ref_idx = classify_edits(hyp_edits, ref_lists, source, beta=args.beta)
        reference = ref_lists[ref_idx]
        pairs, dropped = build_pairs(source, reference, [f.edit for f in fps], hyp_edits)
        n_dropped += len(dropped)
        annotator = record.references.annotations[ref_idx].annotator
        for _, pair in pairs:
            lines.append(json.dumps(
                pair_record(pair, source, system=args.system, annotator=annotator),
                sort_keys=True,
            ))
    if n_dropped:
        print(f"dropped {n_dropped} degenerate pair(s)", file=sys.stderr)
    write_jsonl(args.output, lines, build_manifest(args, [args.m2, args.hyp]))
    return 0


def _pair_from_record(obj: dict) -> EditPair:
    edit = obj["edit"]
    return EditPair(
        s1=tuple(obj["s1"]),
        s2=tuple(obj["s2"]),
        edit=Edit(edit["span_start"], edit["span_end"], tuple(edit["replacement"])),
        prev=obj.get("prev"),
        next=obj.get("next"),
    )


def cmd_judge(args: argparse.Namespace) -> int:
    pairs = [_pair_from_record(obj) for obj in read_jsonl(args.pairs)]
    judge = _make_judge(args.judge, args)
    if judge is None:
        raise ValueError("a --judge spec is required")
    if isinstance(judge, PipelineJudge):
        verdicts = judge_batch(pairs, judge.config, judge.transport, judge.cache)
    else:
        verdicts = []
        for pair in pairs:
            try:
                verdicts.append(judge(pair))
            except JudgeError as exc:
                verdicts.append(exc)
    write_jsonl(args.output, dump_verdict_records(pairs, verdicts),
                build_manifest(args, [args.pairs]))
    failures = sum(1 for v in verdicts if isinstance(v, JudgeError))
    if failures:
        print(f"{failures} pair(s) failed to judge", file=sys.stderr)
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    records = _records_from_m2(args.m2, args.hyp, args.system)
    config = MetricConfig(alpha=args.alpha, beta=args.beta, gamma=args.gamma,
                          reclassify=not args.no_reclassify)
    judge = _make_judge(args.judge, args)
    fluency = _make_fluency(args.fluency)
    reports = []
    lines = []
    for record in records:
        report = score(record, args.system, config, judge=judge, fluency_provider=fluency)
        reports.append(report)
        lines.append(json.dumps({
            "sentence_id": _sentence_id(record.source),
            "system": args.system,
            "tp": report.counts.tp, "fp_oc": report.counts.fp_oc,
            "fp_noc": report.counts.fp_noc, "fn": report.counts.fn,
            "p_g": report.p_g, "r": report.r, "f_beta_g": report.f_beta_g,
            "fluency": None if report.fluency is None else
                {"h": report.fluency.h, "f": report.fluency.f},
            "f_x": report.f_x,
            "config": config.fingerprint(),
        }, sort_keys=True))
    overall = aggregate(reports, args.mode)
    lines.append(json.dumps({
        "aggregate": args.mode, "system": args.system,
        "tp": overall.counts.tp, "fp_oc": overall.counts.fp_oc,
        "fp_noc": overall.counts.fp_noc, "fn": overall.counts.fn,
        "p_g": overall.p_g, "r": overall.r, "f_beta_g": overall.f_beta_g,
        "fluency": None if overall.fluency is None else
            {"h": overall.fluency.h, "f": overall.fluency.f},
        "f_x": overall.f_x,
        "config": config.fingerprint(),
    }, sort_keys=True))
    write_jsonl(args.output, lines, build_manifest(args, [args.m2, args.hyp]))
    print(f"F = {overall.f_beta_g:.4f}  P = {overall.p_g:.4f}  R = {overall.r:.4f}  "
          f"final = {overall.f_x:.4f}")
    return 0


def _load_score_table(path: str | Path, beta: float):
    """Per-(sentence, system) count/fluency ingredients from a score dump."""
    table: dict[tuple[str, str], dict] = {}
    for obj in read_jsonl(path):
        if "aggregate" in obj or "sentence_id" not in obj:
            continue
        key = (obj["sentence_id"], obj["system"])
        table[key] = {
            "counts": EditCounts(obj["tp"], obj["fp_oc"], obj["fp_noc"], obj["fn"]),
            "fluency_f": (obj.get("fluency") or {}).get("f"),
        }
    if not table:
        raise ValueError(f"no usable score records in {path}")
    return table


def _grid_scorer(table, beta: float, level: str):
    systems = sorted({system for _, system in table})

    def sentence_scores(_, alpha: float, gamma: float):
        scores: dict[str, dict[str, float]] = {}
        for (sid, system), row in table.items():
            f = generalized_f(row["counts"], alpha, beta)
            fluency_f = row["fluency_f"] or 0.0
            scores.setdefault(sid, {})[system] = comprehensive(f, fluency_f, gamma)
        return scores

    def system_scores(_, alpha: float, gamma: float):
        out = {}
        for system in systems:
            rows = [row for (sid, s), row in table.items() if s == system]
            total = EditCounts()
            for row in rows:
                total = total + row["counts"]
            f = generalized_f(total, alpha, beta)
            fl = [row["fluency_f"] for row in rows if row["fluency_f"] is not None]
            mean_f = sum(fl) / len(fl) if fl else 0.0
            out[system] = comprehensive(f, mean_f, gamma)
        return out

    return sentence_scores if level == "sentence" else system_scores


def _parse_grid(text: str, objective: Objective) -> GridSpec:
    if text == "default":
        return GridSpec(objective=objective)
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 6:
        raise ValueError("--grid expects 'default' or a_lo,a_hi,a_step,g_lo,g_hi,g_step")
    return GridSpec(alpha_range=(parts[0], parts[1]), alpha_step=parts[2],
                    gamma_range=(parts[3], parts[4]), gamma_step=parts[5],
                    objective=objective)


def cmd_tune(args: argparse.Namespace) -> int:
    objective = Objective.parse(args.objective)
    spec = _parse_grid(args.grid, objective)
    judgments = judgments_from_jsonl(args.judgments, args.ranking)
    table = _load_score_table(args.scores, args.beta)
    scorer = _grid_scorer(table, args.beta, objective.level)
    result = tune(table, judgments, spec, scorer)
    inputs = [p for p in (args.scores, args.judgments, args.ranking) if p]
    write_jsonl(args.output, grid_records(result), build_manifest(args, inputs))
    print(f"optimum: alpha = {result.alpha:.2f}  gamma = {result.gamma:.2f}  "
          f"{args.objective} = {result.value:.4f}")
    return 0


def cmd_metaeval(args: argparse.Namespace) -> int:
    judgments = judgments_from_jsonl(args.judgments, args.ranking)
    table = _load_score_table(args.scores, args.beta)
    lines = []
    if judgments.system_ranking:
        scorer = _grid_scorer(table, args.beta, "system")
        report = system_eval(scorer(None, args.alpha, args.gamma), judgments.system_ranking)
        lines.append(json.dumps({
            "level": "system", "pearson_r": report.pearson_r,
            "spearman_rho": report.spearman_rho, "n_systems": report.n_pairs,
        }, sort_keys=True))
    if judgments.pairwise:
        scorer = _grid_scorer(table, args.beta, "sentence")
        report = pairwise_eval(scorer(None, args.alpha, args.gamma), judgments)
        lines.append(json.dumps({
            "level": "sentence", "accuracy": report.accuracy,
            "kendall_tau": report.kendall_tau,
            "n_pairs": report.n_pairs, "n_ties": report.n_ties,
        }, sort_keys=True))
    if not lines:
        raise ValueError("no judgments or ranking supplied")
    inputs = [p for p in (args.scores, args.judgments, args.ranking) if p]
    write_jsonl(args.output, lines, build_manifest(args, inputs))
    for line in lines:
        print(line)
    return 0


def _load_transcript_generators(specs: Sequence[str]) -> list:
    """Build generators from scripted transcript files.

    Transcript records: {"generator", "original", "response"}; the
    generator answers by matching the prompt's Original line.
    """
    generators = []
    for spec in specs:
        path = spec[len("scripted:"):] if spec.startswith("scripted:") else spec
        by_name: dict[str, dict[str, str]] = {}
        for obj in read_jsonl(path):
            by_name.setdefault(obj["generator"], {})[obj["original"]] = obj["response"]
        for name, responses in sorted(by_name.items()):
            generators.append(TranscriptGenerator(name, responses))
    return generators


@dataclass
class TranscriptGenerator:
    name: str
    responses: dict[str, str]

    def __call__(self, prompt: str) -> str:
        for line in prompt.splitlines():
            if line.startswith("Original: "):
                original = line[len("Original: "):]
                if original in self.responses:
                    return self.responses[original]
                raise KeyError(f"no transcript for {original!r} under generator {self.name}")
        raise KeyError("prompt carries no Original line")


def cmd_expand(args: argparse.Namespace) -> int:
    refsets = parse_m2(Path(args.m2).read_text(encoding="utf-8"))
    judge = _make_judge(args.judge, args)
    if judge is None:
        raise ValueError("a --judge spec is required")
    generators = _load_transcript_generators(args.generator)
    cache = GenerationCache(args.generation_cache) if args.generation_cache else None
    expanded = []
    for refset in refsets:
        if not refset.annotations:
            raise ValueError(f"sentence {refset.source.index} has no seed reference")
        seed = apply_edits(refset.source.tokens, refset.annotations[0].edits)
        expanded.append(expand_sentence(refset.source, seed, generators, judge, cache))

    manifest = build_manifest(args, [args.m2] + [
        s[len("scripted:"):] if s.startswith("scripted:") else s for s in args.generator
    ])
    if args.format == "m2":
        write_text(args.output, serialize_m2(expanded_to_refsets(expanded)), manifest)
    else:
        write_jsonl(args.output, expanded_to_records(expanded), manifest)
    stats = expansion_stats(expanded)
    print(f"expanded {len(expanded)} sentence(s); refs/sentence mean {stats.mean:.2f} "
          f"sd {stats.sd:.2f} max {stats.max}")
    return 0


def _reference_counts(path: str) -> list[int]:
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".m2"):
        return [len(r.annotations) for r in parse_m2(text)]
    counts: dict[tuple[str, int], int] = {}
    for obj in read_jsonl(path):
        if obj.get("role") == "reference":
            key = (obj["doc_id"], obj["index"])
            counts[key] = counts.get(key, 0) + 1
        elif obj.get("role") == "source":
            counts.setdefault((obj["doc_id"], obj["index"]), 0)
    return [counts[k] for k in sorted(counts)]


def cmd_stats(args: argparse.Namespace) -> int:
    if not args.pre and not args.post:
        raise ValueError("at least one of --pre/--post is required")
    payload: dict = {}
    if args.pre:
        pre = expansion_stats(_reference_counts(args.pre))
        payload["pre"] = {"mean": pre.mean, "sd": pre.sd, "max": pre.max}
    if args.post:
        post = expansion_stats(_reference_counts(args.post))
        payload["post"] = {"mean": post.mean, "sd": post.sd, "max": post.max}
    if args.pre and args.post:
        print(stats_table(pre, post))
    inputs = [p for p in (args.pre, args.post) if p]
    write_jsonl(args.output, [json.dumps(payload, sort_keys=True)],
                build_manifest(args, inputs))
    return 0


# --- argument parsing ----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gecval",
        description="Edit-level GEC evaluation, judging, meta-evaluation, and reference expansion.",
    )
    parser.add_argument("--seed", type=int, default=None, help="seed for all sampling")
    parser.add_argument("--jobs", type=int, default=None, help="global concurrency bound")
    parser.add_argument("--config", default=None, help="judge/endpoint config file")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract edits between parallel token files")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("pairs", help="build contrast pairs for unmatched hypothesis edits")
    p.add_argument("--m2", required=True, help="reference M2 file")
    p.add_argument("--hyp", required=True, help="hypothesis file, one tokenized sentence per line")
    p.add_argument("--system", default="system")
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_pairs)

    p = sub.add_parser("judge", help="judge a pair dump")
    p.add_argument("--pairs", required=True)
    p.add_argument("--judge", required=True,
                   help="stub:always-valid | stub:always-invalid | table:FILE | classifier:URL | pipeline")
    p.add_argument("--cache", default=None, help="verdict cache file")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_judge)

    p = sub.add_parser("score", help="score a hypothesis against references")
    p.add_argument("--m2", required=True, help="reference M2 file")
    p.add_argument("--hyp", required=True)
    p.add_argument("--system", default="system")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--no-reclassify", action="store_true")
    p.add_argument("--judge", default=None)
    p.add_argument("--cache", default=None)
    p.add_argument("--fluency", default=None, help="bigram:CORPUS or a logprobs endpoint URL")
    p.add_argument("--mode", choices=["corpus_counts", "sentence_mean"], default="corpus_counts")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("tune", help="grid-search alpha/gamma against human judgments")
    p.add_argument("--scores", required=True, help="score dump from the score subcommand")
    p.add_argument("--judgments", default=None, help="pairwise judgments file")
    p.add_argument("--ranking", default=None, help="human system ranking file")
    p.add_argument("--objective", required=True, help="level:statistic, e.g. sentence:accuracy")
    p.add_argument("--grid", default="default")
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("metaeval", help="correlate metric scores with human judgments")
    p.add_argument("--scores", required=True)
    p.add_argument("--judgments", default=None)
    p.add_argument("--ranking", default=None)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_metaeval)

    p = sub.add_parser("expand", help="expand references by generation then filtering")
    p.add_argument("--m2", required=True, help="seed references (first annotator is the seed)")
    p.add_argument("--generator", action="append", required=True,
                   help="scripted:TRANSCRIPTS.jsonl (repeatable)")
    p.add_argument("--judge", required=True)
    p.add_argument("--cache", default=None)
    p.add_argument("--generation-cache", default=None)
    p.add_argument("--format", choices=["m2", "records"], default="m2")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("stats", help="reference-count statistics before/after filtering")
    p.add_argument("--pre", default=None)
    p.add_argument("--post", default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_stats)

    return parser


def dispatch(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError, JudgeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
