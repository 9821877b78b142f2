"""HTTP service exposing the scoring wire protocol.

Endpoints:

- POST /logprobs   {text}                 -> {tokens, logprobs}
- POST /similarity {a, b}                 -> {score}
- POST /classify   {s1, s2, prev, next}   -> {valid, score}
- GET  /health                            -> {models, threshold}

Responses are canonical JSON (sorted keys, compact separators), so a
fixed model version answers identical requests with identical bytes.
Request handling is stateless; the models are shared read-only state.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .models import (
    BigramLogprobModel,
    CheckpointClassifier,
    HashedEmbedder,
    HeuristicClassifier,
)

MAX_BODY_BYTES = 1 << 20


class RequestError(ValueError):
    """A malformed request; maps to HTTP 400."""


class ServiceUnavailable(RuntimeError):
    """Model not loaded; maps to HTTP 503."""


def _require_string(payload: dict, key: str, allow_empty: bool = False) -> str:
    if key not in payload:
        raise RequestError(f"missing field {key!r}")
    value = payload[key]
    if not isinstance(value, str):
        raise RequestError(f"field {key!r} must be a string")
    if not allow_empty and not value.strip():
        raise RequestError(f"field {key!r} must be non-empty")
    return value


@dataclass
class ScoringApp:
    """The endpoint logic, independent of any HTTP plumbing."""

    lm: BigramLogprobModel
    embedder: HashedEmbedder
    classifier: HeuristicClassifier | CheckpointClassifier | None

    @classmethod
    def from_env(cls, env=os.environ) -> "ScoringApp":
        lm = BigramLogprobModel.load(env.get("SIDECAR_CORPUS"))
        embedder = HashedEmbedder()
        checkpoint = env.get("SIDECAR_CHECKPOINT")
        heuristic_enabled = env.get("SIDECAR_HEURISTIC", "1") != "0"
        classifier: HeuristicClassifier | CheckpointClassifier | None
        if checkpoint:
            classifier = CheckpointClassifier.load(checkpoint, lm, embedder)
        elif heuristic_enabled:
            classifier = HeuristicClassifier(lm, embedder)
        else:
            classifier = None
        return cls(lm=lm, embedder=embedder, classifier=classifier)

    # Each handler returns (status, response-dict).

    def logprobs(self, payload: dict) -> tuple[int, dict]:
        if not isinstance(payload, dict):
            raise RequestError("request body must be a JSON object")
        text = _require_string(payload, "text")
        tokens, logprobs = self.lm.score(text)
        return 200, {"tokens": tokens, "logprobs": logprobs}

    def similarity(self, payload: dict) -> tuple[int, dict]:
        if not isinstance(payload, dict):
            raise RequestError("request body must be a JSON object")
        a = _require_string(payload, "a")
        b = _require_string(payload, "b")
        return 200, {"score": self.embedder.similarity(a, b)}

    def classify(self, payload: dict) -> tuple[int, dict]:
        if not isinstance(payload, dict):
            raise RequestError("request body must be a JSON object")
        s1 = _require_string(payload, "s1")
        s2 = _require_string(payload, "s2")
        for context_key in ("prev", "next"):
            if context_key in payload and payload[context_key] is not None:
                _require_string(payload, context_key, allow_empty=True)
        if self.classifier is None:
            raise ServiceUnavailable("no classifier checkpoint loaded and heuristic mode disabled")
        valid, score = self.classifier.classify(s1, s2)
        return 200, {"valid": valid, "score": score}

    def health(self) -> tuple[int, dict]:
        return 200, {
            "models": {
                "logprob": self.lm.version,
                "embedding": self.embedder.version,
                "classifier": self.classifier.version if self.classifier else None,
            },
            "threshold": self.classifier.threshold if self.classifier else None,
        }

    def dispatch(self, method: str, path: str, body: bytes) -> tuple[int, dict]:
        """Route one request; all error mapping happens here."""
        routes = {"/logprobs": self.logprobs, "/similarity": self.similarity,
                  "/classify": self.classify}
        try:
            if method == "GET" and path == "/health":
                return self.health()
            if path not in routes:
                return 404, {"error": f"unknown path {path}"}
            if method != "POST":
                return 405, {"error": f"{path} expects POST"}
            try:
                payload = json.loads(body.decode("utf-8")) if body else {}
            except (json.JSONDecodeError, UnicodeDecodeError) as exc:
                return 400, {"error": f"invalid JSON body: {exc}"}
            return routes[path](payload)
        except RequestError as exc:
            return 400, {"error": str(exc)}
        except ServiceUnavailable as exc:
            return 503, {"error": str(exc)}


def encode_response(body: dict) -> bytes:
    """Canonical response bytes; the contract fixtures compare these."""
    return json.dumps(body, sort_keys=True, separators=(",", ":")).encode("utf-8")


def make_server(app: ScoringApp, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    class Handler(BaseHTTPRequestHandler):
        def _respond(self, method: str) -> None:
            length = int(self.headers.get("Content-Length") or 0)
            if length > MAX_BODY_BYTES:
                status, body = 400, {"error": "request body too large"}
            else:
                status, body = app.dispatch(method, self.path, self.rfile.read(length))
            payload = encode_response(body)
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def do_GET(self):  # noqa: N802
            self._respond("GET")

        def do_POST(self):  # noqa: N802
            self._respond("POST")

        def log_message(self, fmt, *args):
            pass

    return ThreadingHTTPServer((host, port), Handler)


def serve_forever() -> None:
    app = ScoringApp.from_env()
    host = os.environ.get("SIDECAR_HOST", "127.0.0.1")
    port = int(os.environ.get("SIDECAR_PORT", "8472"))
    server = make_server(app, host, port)
    print(f"scoring service listening on http://{host}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.shutdown()


class BackgroundServer:
    """Run the service on an ephemeral port inside a thread (for tests)."""

    def __init__(self, app: ScoringApp):
        self.server = make_server(app)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def __enter__(self) -> "BackgroundServer":
        self.thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self.server.shutdown()
        self.server.server_close()


if __name__ == "__main__":
    serve_forever()
