"""Contextual search at desk scale.

Activity logs become decayed per-user profiles; an ontology plus the profile
turn ambiguous keywords into a concrete sense; the sense expands into
weighted sub-queries that a BM25 index (or an external engine) answers; and
results are re-ranked against the profile. A deterministic discrete-event
simulator models the distributed crawler that gathers profile digests into
the shared knowledge base.
"""

from . import backend, crawlsim, knowledge, ontology, profile, queryflow
from .errors import CtxSearchError

__all__ = [
    "backend",
    "crawlsim",
    "knowledge",
    "ontology",
    "profile",
    "queryflow",
    "CtxSearchError",
]

__version__ = "0.1.0"
