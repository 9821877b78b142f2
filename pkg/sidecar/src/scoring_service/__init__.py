"""Deterministic scoring service: log-probabilities, similarity, validity."""

__version__ = "0.1.0"

from .models import (  # noqa: F401
    BigramLogprobModel,
    CheckpointClassifier,
    HashedEmbedder,
    HeuristicClassifier,
)
from .service import BackgroundServer, ScoringApp, make_server, serve_forever  # noqa: F401
