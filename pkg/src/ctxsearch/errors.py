"""Exception hierarchy shared by all ctxsearch modules."""

from __future__ import annotations


class CtxSearchError(Exception):
    """Base class for every error raised by this package."""


# --- profile -----------------------------------------------------------


class MalformedEvent(CtxSearchError):
    def __init__(self, event_id: str, reason: str = ""):
        self.event_id = event_id
        self.reason = reason
        super().__init__(f"malformed event {event_id!r}: {reason}")


class ClockSkew(CtxSearchError):
    """`now` is earlier than a stored last-update timestamp."""


class DigestParse(CtxSearchError):
    """Profile digest input could not be parsed or fails validation."""


# --- ontology ----------------------------------------------------------


class DuplicateConcept(CtxSearchError):
    def __init__(self, concept_id: str):
        self.concept_id = concept_id
        super().__init__(f"duplicate concept id {concept_id!r}")


class DanglingRelation(CtxSearchError):
    def __init__(self, source: str, target: str):
        self.source = source
        self.target = target
        super().__init__(f"relation from {source!r} points at missing concept {target!r}")


class ParseError(CtxSearchError):
    def __init__(self, line_no: int, reason: str):
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"line {line_no}: {reason}")


class UnknownConcept(CtxSearchError):
    def __init__(self, concept_id: str):
        self.concept_id = concept_id
        super().__init__(f"unknown concept {concept_id!r}")


# --- knowledge ---------------------------------------------------------


class NoSense(CtxSearchError):
    """Term has no candidate sense in the ontology; caller falls back to the literal query."""

    def __init__(self, term: str):
        self.term = term
        super().__init__(f"no sense candidates for term {term!r}")


class UnknownKind(CtxSearchError):
    def __init__(self, kind: str):
        self.kind = kind
        super().__init__(f"unknown feedback kind {kind!r}")


# --- queryflow ---------------------------------------------------------


class EmptyQuery(CtxSearchError):
    """No terms survive tokenization of the query text."""


class AllBackendsFailed(CtxSearchError):
    """Every sub-query dispatch errored; no results are available."""


# --- backend -----------------------------------------------------------


class DuplicateDoc(CtxSearchError):
    def __init__(self, doc_id: str):
        self.doc_id = doc_id
        super().__init__(f"duplicate doc id {doc_id!r}")


class BackendUnavailable(CtxSearchError):
    """External search service returned 5xx or refused the connection."""


class BackendTimeout(CtxSearchError):
    """External search service did not answer within the configured deadline."""


class MalformedResponse(CtxSearchError):
    """External search service answered with a body outside the wire schema."""


# --- crawlsim / gateway ------------------------------------------------


class ConfigError(CtxSearchError):
    """Invalid simulation or server configuration."""
