"""Rule mining, grounding and relational reasoning over knowledge graphs."""

from ._core import (
    KnowledgeGraph,
    R2NError,
    exit_code,
    metrics_from_ranks,
    mine,
    run,
    stats,
)

__all__ = [
    "KnowledgeGraph",
    "R2NError",
    "exit_code",
    "metrics_from_ranks",
    "mine",
    "run",
    "stats",
]
