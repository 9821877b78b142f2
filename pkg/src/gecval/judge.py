"""Edit-validity judging.

Three interchangeable judge flavours share one contract (EditPair ->
Verdict): a multi-turn review pipeline where each model refines the
previous model's analysis and judgment, a remote-classifier client, and
deterministic stubs for offline runs. Verdicts can be cached to disk so
repeated judgments cost nothing.

Prompt texts live as versioned template files under ``prompts/`` with
placeholder slots; they are an experimental variable and must stay
diffable.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import requests

from .align import EditPair
from .corpus import Edit

logger = logging.getLogger(__name__)


class JudgeError(Exception):
    """Base class for judge failures."""


class TransportError(JudgeError):
    """The model endpoint could not be reached or answered abnormally."""


class ResponseParseError(JudgeError):
    """The model answered but not in the expected grammar."""

    def __init__(self, message: str, raw: str):
        super().__init__(f"{message}; raw response: {raw!r}")
        self.raw = raw


class ResponseShapeError(JudgeError):
    """A structured response violated its schema."""


class PipelineError(JudgeError):
    """A pipeline turn failed after retries; carries the partial history."""

    def __init__(self, message: str, turn_history: tuple["Turn", ...]):
        super().__init__(message)
        self.turn_history = turn_history


@dataclass(frozen=True)
class Turn:
    judge_id: str
    prediction: bool
    analysis: str


@dataclass(frozen=True)
class Verdict:
    """The outcome of judging one pair; valid mirrors the final turn."""

    valid: bool
    analysis: str
    turn_history: tuple[Turn, ...]
    provenance: str

    def __post_init__(self):
        object.__setattr__(self, "turn_history", tuple(self.turn_history))
        if self.turn_history and self.turn_history[-1].prediction != self.valid:
            raise ValueError("valid must equal the final turn's prediction")


@dataclass(frozen=True)
class Exemplar:
    pair: EditPair
    label: bool
    explanation: str


@dataclass(frozen=True)
class IclMemory:
    """Demonstration pool; must cover both labels when non-empty."""

    exemplars: tuple[Exemplar, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "exemplars", tuple(self.exemplars))
        if self.exemplars:
            labels = {e.label for e in self.exemplars}
            if labels != {True, False}:
                raise ValueError("non-empty memory needs at least one valid and one invalid exemplar")

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "IclMemory":
        exemplars = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            s1, s2 = tuple(obj["s1"]), tuple(obj["s2"])
            exemplars.append(Exemplar(
                pair=EditPair(s1, s2, _contrast_edit(s1, s2),
                              prev=obj.get("prev"), next=obj.get("next")),
                label=bool(obj["label"]),
                explanation=obj["explanation"],
            ))
        return cls(tuple(exemplars))

    def digest(self) -> str:
        blob = json.dumps(
            [[list(e.pair.s1), list(e.pair.s2), e.label, e.explanation] for e in self.exemplars],
            sort_keys=True, separators=(",", ":"),
        )
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class ModelEndpoint:
    """One judging model: where to reach it and how to retry it."""

    name: str
    endpoint: str = ""
    timeout: float = 60.0
    retries: int = 2
    backoff: float = 0.5
    temperature: float = 0.0
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")


@dataclass(frozen=True)
class JudgeConfig:
    turns: tuple[ModelEndpoint, ...]
    memory: IclMemory = IclMemory()
    context_window: bool = True
    seed: int = 0
    concurrency: int = 4

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        if not self.turns:
            raise ValueError("at least one turn is required")
        if self.concurrency < 1:
            raise ValueError("concurrency must be >= 1")

    def fingerprint(self) -> str:
        blob = json.dumps(
            {
                "turns": [
                    [t.name, t.endpoint, t.temperature, sorted(t.params.items())]
                    for t in self.turns
                ],
                "context": self.context_window,
                "seed": self.seed,
                "memory": self.memory.digest(),
            },
            sort_keys=True, separators=(",", ":"), default=str,
        )
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


# --- prompt rendering --------------------------------------------------------


def _template(name: str) -> str:
    return resources.files("gecval").joinpath(f"prompts/{name}").read_text(encoding="utf-8")


def _common_affix(a: Sequence[str], b: Sequence[str]) -> tuple[int, int]:
    p = 0
    while p < len(a) and p < len(b) and a[p] == b[p]:
        p += 1
    s = 0
    while s < len(a) - p and s < len(b) - p and a[len(a) - 1 - s] == b[len(b) - 1 - s]:
        s += 1
    return p, s


def pair_contrast(pair: EditPair) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """The differing middles of (s1, s2) after stripping common affixes."""
    p, s = _common_affix(pair.s1, pair.s2)
    return pair.s1[p:len(pair.s1) - s], pair.s2[p:len(pair.s2) - s]


def _contrast_edit(s1: tuple[str, ...], s2: tuple[str, ...]) -> Edit:
    # Anchored on s1; used for exemplars loaded from flat files.
    p, s = _common_affix(s1, s2)
    return Edit(p, len(s1) - s, s2[p:len(s2) - s])


def describe_contrast(pair: EditPair) -> str:
    original, replacement = pair_contrast(pair)
    if not original:
        return f'insert "{" ".join(replacement)}"'
    if not replacement:
        return f'delete "{" ".join(original)}"'
    return f'replace "{" ".join(original)}" with "{" ".join(replacement)}"'


def sample_demonstrations(memory: IclMemory, seed: int) -> tuple[Exemplar, Exemplar]:
    """Pick one valid and one invalid exemplar, deterministically per seed."""
    valid = [e for e in memory.exemplars if e.label]
    invalid = [e for e in memory.exemplars if not e.label]
    if not valid or not invalid:
        raise ValueError("memory must contain both a valid and an invalid exemplar")

    def pick(pool: list[Exemplar], salt: str) -> Exemplar:
        digest = hashlib.sha256(f"{seed}:{salt}".encode()).digest()
        return pool[int.from_bytes(digest[:8], "big") % len(pool)]

    return pick(valid, "valid"), pick(invalid, "invalid")


def _render_exemplar(exemplar: Exemplar) -> str:
    tag = "VALID" if exemplar.label else "INVALID"
    return (
        f"Example ({tag}):\n"
        f"S1: {' '.join(exemplar.pair.s1)}\n"
        f"S2: {' '.join(exemplar.pair.s2)}\n"
        f"Analysis: {exemplar.explanation}\n"
        f"Final Judgment: {1 if exemplar.label else 0}\n"
    )


def render_first_turn_prompt(
    pair: EditPair,
    demos: tuple[Exemplar, Exemplar],
    config: JudgeConfig,
) -> str:
    """First-turn prompt: demonstrations, optional context, criteria, pair."""
    demo_block = "In-Context Examples:\n\n" + "\n".join(_render_exemplar(d) for d in demos) + "\n"
    context_block = ""
    if config.context_window:
        lines = []
        if pair.prev is not None:
            lines.append(f"Preceding sentence: {pair.prev}")
        if pair.next is not None:
            lines.append(f"Following sentence: {pair.next}")
        if lines:
            context_block = "Context:\n" + "\n".join(lines) + "\n\n"
    return _template("first_turn.txt").format(
        demonstrations=demo_block,
        context=context_block,
        s1=" ".join(pair.s1),
        s2=" ".join(pair.s2),
        edit=describe_contrast(pair),
    )


def refinement_payload(pair: EditPair, analysis: str, prediction: bool) -> dict:
    """The JSON object a refinement turn receives from the previous turn."""
    return {
        "src": " ".join(pair.s1),
        "edit": describe_contrast(pair),
        "hypo": " ".join(pair.s2),
        "llm_analysis": analysis,
        "llm_prediction": 1 if prediction else 0,
    }


def render_refinement_prompt(payload: Mapping[str, object]) -> str:
    return _template("refinement.txt").format(
        payload=json.dumps(payload, sort_keys=True, ensure_ascii=False)
    )


# --- response parsing --------------------------------------------------------

_ANALYSIS_RE = re.compile(r"^\s*Analysis\s*:\s*(.*)$", re.MULTILINE)
_JUDGMENT_RE = re.compile(r"Final\s+Judgment\s*:\s*\[?\s*([^\]\s]+)\s*\]?", re.IGNORECASE)


def parse_first_turn_response(text: str) -> tuple[str, bool]:
    """Extract the "Analysis:" line and trailing "Final Judgment:" value.

    Brackets around the judgment are optional; a missing or non-binary
    judgment is a parse failure carrying the raw text.
    """
    matches = _JUDGMENT_RE.findall(text)
    if not matches:
        raise ResponseParseError("missing Final Judgment line", text)
    value = matches[-1].strip()
    if value not in ("0", "1"):
        raise ResponseParseError(f"judgment value {value!r} outside {{0, 1}}", text)
    analysis_match = _ANALYSIS_RE.search(text)
    analysis = analysis_match.group(1).strip() if analysis_match else ""
    return analysis, value == "1"


_FENCE_RE = re.compile(r"```(?:[a-zA-Z0-9_-]+)?\s*(.*?)```", re.DOTALL)


def parse_refinement_response(text: str) -> tuple[str, bool]:
    """Extract llm_analysis / llm_prediction from a (possibly fenced) object."""
    stripped = text
    fence = _FENCE_RE.search(text)
    if fence:
        stripped = fence.group(1)
    stripped = stripped.strip()
    if not stripped.startswith("{"):
        start, end = stripped.find("{"), stripped.rfind("}")
        if start == -1 or end <= start:
            raise ResponseParseError("no JSON object found", text)
        stripped = stripped[start:end + 1]
    try:
        obj = json.loads(stripped)
    except json.JSONDecodeError as exc:
        raise ResponseParseError(f"unparseable JSON object: {exc}", text) from None
    if not isinstance(obj, dict) or "llm_analysis" not in obj or "llm_prediction" not in obj:
        raise ResponseParseError("object must carry llm_analysis and llm_prediction", text)
    raw_pred = obj["llm_prediction"]
    if isinstance(raw_pred, bool):
        prediction = raw_pred
    elif isinstance(raw_pred, (int, float)) and raw_pred in (0, 1):
        prediction = bool(raw_pred)
    elif isinstance(raw_pred, str) and raw_pred.strip() in ("0", "1"):
        prediction = raw_pred.strip() == "1"
    else:
        raise ResponseParseError(f"llm_prediction {raw_pred!r} outside {{0, 1}}", text)
    return str(obj["llm_analysis"]), prediction


# --- pipeline ---------------------------------------------------------------

Transport = Callable[[ModelEndpoint, str], str]


def run_pipeline(pair: EditPair, config: JudgeConfig, transport: Transport) -> Verdict:
    """Run the multi-turn review pipeline over one pair.

    Turn 1 judges from scratch with two demonstrations; every later
    turn receives the previous turn's analysis and prediction and may
    correct them. The last turn's prediction is the verdict. Each turn
    retries per its endpoint policy; exhausting retries aborts with the
    partial history attached.
    """
    history: list[Turn] = []
    analysis, prediction = "", False
    for turn_index, endpoint in enumerate(config.turns):
        if turn_index == 0:
            demos = sample_demonstrations(config.memory, config.seed)
            prompt = render_first_turn_prompt(pair, demos, config)
            parse = parse_first_turn_response
        else:
            prompt = render_refinement_prompt(refinement_payload(pair, analysis, prediction))
            parse = parse_refinement_response

        last_error: JudgeError | None = None
        for attempt in range(endpoint.retries + 1):
            if attempt and endpoint.backoff:
                time.sleep(endpoint.backoff * (2 ** (attempt - 1)))
            try:
                analysis, prediction = parse(transport(endpoint, prompt))
                last_error = None
                break
            except (TransportError, ResponseParseError) as exc:
                logger.warning("turn %s attempt %s failed: %s", endpoint.name, attempt + 1, exc)
                last_error = exc
        if last_error is not None:
            raise PipelineError(
                f"turn {endpoint.name!r} failed after {endpoint.retries + 1} attempts: {last_error}",
                tuple(history),
            ) from last_error
        history.append(Turn(endpoint.name, prediction, analysis))
    return Verdict(
        valid=history[-1].prediction,
        analysis=history[-1].analysis,
        turn_history=tuple(history),
        provenance=config.fingerprint(),
    )


# --- cache ------------------------------------------------------------------


def _verdict_record(key: str, verdict: Verdict) -> dict:
    return {
        "key": key,
        "valid": verdict.valid,
        "analysis": verdict.analysis,
        "turn_history": [
            {"judge": t.judge_id, "prediction": t.prediction, "analysis": t.analysis}
            for t in verdict.turn_history
        ],
        "provenance": verdict.provenance,
    }


def _verdict_from_record(obj: Mapping) -> Verdict:
    return Verdict(
        valid=bool(obj["valid"]),
        analysis=obj["analysis"],
        turn_history=tuple(
            Turn(t["judge"], bool(t["prediction"]), t["analysis"]) for t in obj["turn_history"]
        ),
        provenance=obj.get("provenance", ""),
    )


class VerdictCache:
    """Verdicts keyed by pair-content + judge-config hashes.

    In-memory by default; with a path, every put is appended to a JSONL
    file that is reloaded on construction. Reads are lock-free, writes
    serialized.
    """

    def __init__(self, path: str | Path | None = None):
        self._path = Path(path) if path else None
        self._lock = threading.Lock()
        self._store: dict[str, Verdict] = {}
        if self._path and self._path.exists():
            for line in self._path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    obj = json.loads(line)
                    self._store[obj["key"]] = _verdict_from_record(obj)

    def __len__(self) -> int:
        return len(self._store)

    def get(self, key: str) -> Verdict | None:
        return self._store.get(key)

    def put(self, key: str, verdict: Verdict) -> None:
        with self._lock:
            self._store[key] = verdict
            if self._path:
                with self._path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(_verdict_record(key, verdict), sort_keys=True) + "\n")

    def clear(self) -> None:
        with self._lock:
            self._store.clear()
            if self._path and self._path.exists():
                self._path.unlink()


def cache_key(pair: EditPair, config_fingerprint: str) -> str:
    return hashlib.sha256(f"{pair.key()}:{config_fingerprint}".encode()).hexdigest()


def judge_batch(
    pairs: Sequence[EditPair],
    config: JudgeConfig,
    transport: Transport,
    cache: VerdictCache | None = None,
) -> list[Verdict | JudgeError]:
    """Judge many pairs concurrently, deduplicating identical content.

    Results align positionally with the input regardless of completion
    order; a failing pair yields its error in that slot instead of
    aborting the batch. At most ``config.concurrency`` pipelines are in
    flight at once.
    """
    results: list[Verdict | JudgeError | None] = [None] * len(pairs)
    fingerprint = config.fingerprint()
    groups: dict[str, list[int]] = {}
    for i, pair in enumerate(pairs):
        groups.setdefault(cache_key(pair, fingerprint), []).append(i)

    todo: dict[str, list[int]] = {}
    for key, idxs in groups.items():
        hit = cache.get(key) if cache else None
        if hit is not None:
            for i in idxs:
                results[i] = hit
        else:
            todo[key] = idxs

    if todo:
        with ThreadPoolExecutor(max_workers=config.concurrency) as pool:
            futures = {
                pool.submit(run_pipeline, pairs[idxs[0]], config, transport): (key, idxs)
                for key, idxs in todo.items()
            }
            for future in as_completed(futures):
                key, idxs = futures[future]
                try:
                    outcome: Verdict | JudgeError = future.result()
                    if cache is not None:
                        cache.put(key, outcome)
                except JudgeError as exc:
                    outcome = exc
                for i in idxs:
                    results[i] = outcome
    return results  # type: ignore[return-value]


# --- judge implementations ---------------------------------------------------


@dataclass
class PipelineJudge:
    """The multi-turn pipeline behind the common judge contract."""

    config: JudgeConfig
    transport: Transport
    cache: VerdictCache | None = None

    def __call__(self, pair: EditPair) -> Verdict:
        key = cache_key(pair, self.config.fingerprint())
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return hit
        verdict = run_pipeline(pair, self.config, self.transport)
        if self.cache is not None:
            self.cache.put(key, verdict)
        return verdict


def classifier_judge(
    pair: EditPair,
    endpoint: str,
    timeout: float = 30.0,
    post: Callable = requests.post,
) -> Verdict:
    """Ask a remote classifier service for a single-turn verdict.

    Sends {s1, s2, prev, next} to the classify endpoint and maps its
    {valid, score} response. Transport problems and malformed
    responses raise distinct error types.
    """
    body = {
        "s1": " ".join(pair.s1),
        "s2": " ".join(pair.s2),
        "prev": pair.prev or "",
        "next": pair.next or "",
    }
    try:
        response = post(endpoint, json=body, timeout=timeout)
    except requests.RequestException as exc:
        raise TransportError(f"classify endpoint unreachable: {exc}") from exc
    if response.status_code != 200:
        raise TransportError(f"classify endpoint returned HTTP {response.status_code}")
    try:
        data = response.json()
    except ValueError as exc:
        raise ResponseShapeError(f"classify response is not JSON: {exc}") from None
    if not isinstance(data, dict) or "valid" not in data or "score" not in data:
        raise ResponseShapeError(f"classify response missing valid/score: {data!r}")
    valid, score = data["valid"], data["score"]
    if not isinstance(valid, bool):
        raise ResponseShapeError(f"valid must be boolean, got {valid!r}")
    if not isinstance(score, (int, float)) or not 0.0 <= float(score) <= 1.0:
        raise ResponseShapeError(f"score must be in [0, 1], got {score!r}")
    analysis = f"classifier score {score}"
    return Verdict(
        valid=valid,
        analysis=analysis,
        turn_history=(Turn("classifier", valid, analysis),),
        provenance=endpoint,
    )


@dataclass
class ClassifierJudge:
    endpoint: str
    timeout: float = 30.0
    post: Callable = requests.post

    def __call__(self, pair: EditPair) -> Verdict:
        return classifier_judge(pair, self.endpoint, self.timeout, self.post)


def _stub_verdict(valid: bool, judge_id: str) -> Verdict:
    analysis = f"stub verdict: {'valid' if valid else 'invalid'}"
    return Verdict(valid, analysis, (Turn(judge_id, valid, analysis),), provenance=judge_id)


def always_valid_judge(pair: EditPair) -> Verdict:
    return _stub_verdict(True, "stub:always-valid")


def always_invalid_judge(pair: EditPair) -> Verdict:
    return _stub_verdict(False, "stub:always-invalid")


@dataclass
class LookupTableJudge:
    """Deterministic judge answering from a (s1 text, s2 text) table."""

    table: Mapping[tuple[str, str], bool]
    default: bool | None = None

    def __call__(self, pair: EditPair) -> Verdict:
        key = (" ".join(pair.s1), " ".join(pair.s2))
        if key in self.table:
            return _stub_verdict(self.table[key], "stub:lookup")
        if self.default is None:
            raise JudgeError(f"no table entry for {key!r}")
        return _stub_verdict(self.default, "stub:lookup-default")


# --- HTTP transport and config files ----------------------------------------

AUTH_TOKEN_ENV = "GECVAL_API_TOKEN"


@dataclass
class HttpTransport:
    """POST {model, messages, temperature} to chat-completion endpoints.

    The bearer token is read from the environment; endpoint-specific
    decoding parameters are forwarded opaquely from the config.
    """

    auth_env: str = AUTH_TOKEN_ENV
    session: requests.Session | None = None

    def __call__(self, endpoint: ModelEndpoint, prompt: str) -> str:
        body = {
            "model": endpoint.name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": endpoint.temperature,
            **dict(endpoint.params),
        }
        headers = {}
        token = os.environ.get(self.auth_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        poster = self.session.post if self.session else requests.post
        try:
            response = poster(endpoint.endpoint, json=body, headers=headers, timeout=endpoint.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"{endpoint.name}: {exc}") from exc
        if response.status_code != 200:
            raise TransportError(f"{endpoint.name}: HTTP {response.status_code}")
        try:
            data = response.json()
            return data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"{endpoint.name}: malformed completion payload: {exc}") from None


def load_judge_config(path: str | Path) -> JudgeConfig:
    """Load a declarative judge config (turns, memory, context, seed)."""
    path = Path(path)
    obj = json.loads(path.read_text(encoding="utf-8"))
    turns = tuple(
        ModelEndpoint(
            name=t["name"],
            endpoint=t.get("endpoint", ""),
            timeout=t.get("timeout", 60.0),
            retries=t.get("retries", 2),
            backoff=t.get("backoff", 0.5),
            temperature=t.get("temperature", 0.0),
            params=t.get("params", {}),
        )
        for t in obj["turns"]
    )
    memory = IclMemory()
    if obj.get("memory"):
        memory_path = Path(obj["memory"])
        if not memory_path.is_absolute():
            memory_path = path.parent / memory_path
        memory = IclMemory.from_jsonl(memory_path)
    return JudgeConfig(
        turns=turns,
        memory=memory,
        context_window=obj.get("context_window", True),
        seed=obj.get("seed", 0),
        concurrency=obj.get("concurrency", 4),
    )


def dump_verdict_records(
    pairs: Iterable[EditPair],
    verdicts: Iterable[Verdict | JudgeError],
) -> list[str]:
    """Line records {pair hash, valid, analysis, turn_history} for dumps."""
    out = []
    for pair, verdict in zip(pairs, verdicts):
        if isinstance(verdict, JudgeError):
            out.append(json.dumps({"pair": pair.key(), "error": str(verdict)}, sort_keys=True))
        else:
            record = _verdict_record(pair.key(), verdict)
            record["pair"] = record.pop("key")
            out.append(json.dumps(record, sort_keys=True))
    return out
