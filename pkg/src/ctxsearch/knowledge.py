"""Context knowledge: sense disambiguation, the shared knowledge base, and
preference-weighted suggestions.

Disambiguation scores each candidate sense by the overlap between the user's
top profile terms and the token vocabulary of the sense's one-hop ontology
neighborhood, plus a small 0.001/priority prior so zero-context queries fall
back to the default sense deterministically.

The shared knowledge base counts, per concept, how many *distinct* users
co-reported each term; a contributor is counted at most once per concept no
matter how many digests they upload. `min_support` hides low-support pairs,
a crude k-anonymity knob.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Optional

from .errors import NoSense, UnknownConcept, UnknownKind
from .ontology import OntologyGraph, neighborhood, senses_of
from .profile import (
    DEFAULT_HALF_LIFE,
    ContextualProfile,
    ProfileDigest,
    atomic_write,
    parse_ts,
    tokenize,
    top_terms,
)

FEEDBACK_KINDS = frozenset({"result_click", "suggestion_accept", "suggestion_dismiss", "rating"})

PREFERENCE_ACCEPT_FACTOR = 1.2
PREFERENCE_DISMISS_FACTOR = 0.8
RESULT_CLICK_TERM_BOOST = 0.5
SENSE_PRIOR = 0.001
CONTEXT_TERM_COUNT = 50
KB_EVIDENCE_MIN_WEIGHT = 0.1


@dataclass
class SenseChoice:
    """Outcome of disambiguating one term against the profile and ontology."""

    term: str
    chosen: str
    scores: dict[str, float] = field(default_factory=dict)
    rejected: list[str] = field(default_factory=list)


@dataclass
class Suggestion:
    concept_id: str
    label: str
    score: float


@dataclass
class FeedbackEvent:
    """One user reaction: a clicked result, an accepted/dismissed suggestion, or a rating.

    `target` is a doc id for result_click/rating and a concept id for the
    suggestion kinds. `title` carries the clicked result's title so its terms
    can feed back into the profile; `ts` anchors that evidence in time.
    """

    user_id: str
    kind: str
    target: str
    value: Optional[float] = None
    title: str = ""
    ts: object = None


def _sense_vocabulary(graph: OntologyGraph, concept_id: str) -> set[str]:
    vocab: set[str] = set()
    for concept in neighborhood(graph, concept_id, {"broader", "narrower", "related"}, 1):
        for label in concept.labels:
            vocab.update(tokenize(label))
        vocab.update(tokenize(concept.gloss))
    return vocab


def disambiguate(term: str, profile: ContextualProfile, graph: OntologyGraph,
                 now: datetime, half_life: timedelta = DEFAULT_HALF_LIFE) -> SenseChoice:
    """Choose the sense of `term` whose neighborhood best overlaps the profile.

    score(s) = sum of decayed weights of top profile terms found in the
    label/gloss tokens of s's one-hop neighborhood, + 0.001/priority(s).
    Ties break toward smaller priority, then lexicographic id.
    """
    if not term:
        raise ValueError("term must be non-empty")
    candidates = senses_of(graph, term)
    if not candidates:
        raise NoSense(term)

    context = top_terms(profile, CONTEXT_TERM_COUNT, now, half_life)
    scores: dict[str, float] = {}
    for sense in candidates:
        vocab = _sense_vocabulary(graph, sense.id)
        overlap = sum(weight for tok, weight in context if tok in vocab)
        scores[sense.id] = overlap + SENSE_PRIOR / sense.priority

    best = min(candidates, key=lambda c: (-scores[c.id], c.priority, c.id))
    rejected = [c.id for c in candidates if c.id != best.id]
    return SenseChoice(term=term, chosen=best.id, scores=scores, rejected=rejected)


# --- shared knowledge base ----------------------------------------------


@dataclass
class SharedKnowledgeBase:
    """Concept -> term counts over distinct contributing users."""

    cooccurrence: dict[str, dict[str, int]] = field(default_factory=dict)
    contributors: dict[str, set[str]] = field(default_factory=dict)
    min_support: int = 1


def update_knowledge(kb: SharedKnowledgeBase, digest: ProfileDigest,
                     now: Optional[datetime] = None) -> SharedKnowledgeBase:
    """Fold one digest into the knowledge base.

    Only entries with stored weight >= 0.1 count as evidence. A user
    contributes to a concept at most once; repeat digests (any version)
    never double-count. `now` is accepted for interface symmetry with the
    rest of the pipeline; counting itself is time-independent.
    """
    terms = [t for t, e in digest.term_weights.items() if e.weight >= KB_EVIDENCE_MIN_WEIGHT]
    for concept_id, entry in digest.concept_weights.items():
        if entry.weight < KB_EVIDENCE_MIN_WEIGHT:
            continue
        seen = kb.contributors.setdefault(concept_id, set())
        if digest.user_id in seen:
            continue
        seen.add(digest.user_id)
        counts = kb.cooccurrence.setdefault(concept_id, {})
        for term in terms:
            counts[term] = counts.get(term, 0) + 1
    return kb


def associated_terms(kb: SharedKnowledgeBase, concept_id: str) -> list[tuple[str, int]]:
    """Terms co-reported with the concept by at least min_support users."""
    counts = kb.cooccurrence.get(concept_id, {})
    pairs = [(term, count) for term, count in counts.items() if count >= kb.min_support]
    pairs.sort(key=lambda pair: (-pair[1], pair[0]))
    return pairs


# --- suggestions and feedback --------------------------------------------


def suggest(concept_id: str, profile: ContextualProfile, graph: OntologyGraph,
            limit: int = 3) -> list[Suggestion]:
    """Up to `limit` suggestion concepts linked from `concept_id`, preference-scored."""
    if concept_id not in graph.concepts:
        raise UnknownConcept(concept_id)
    targets = graph.concepts[concept_id].targets("suggests")
    scored = [
        (target, 1.0 * profile.preference_weights.get(target, 1.0))
        for target in targets
    ]
    scored.sort(key=lambda pair: (-pair[1], pair[0]))
    return [
        Suggestion(concept_id=target, label=graph.concepts[target].labels[0], score=score)
        for target, score in scored[:limit]
    ]


def apply_feedback(profile: ContextualProfile, event: FeedbackEvent,
                   half_life: timedelta = DEFAULT_HALF_LIFE) -> ContextualProfile:
    """Fold one feedback event into the profile and bump its version.

    Accept/dismiss multiply the target's preference weight by 1.2 / 0.8
    (clamped to [0.1, 10.0]); clicks and ratings add the result title's terms
    to the profile (+0.5 per term on click, +value on rating, floored at 0).
    """
    if event.kind not in FEEDBACK_KINDS:
        raise UnknownKind(event.kind)

    if event.kind == "suggestion_accept":
        current = profile.preference_weights.get(event.target, 1.0)
        profile.set_preference(event.target, current * PREFERENCE_ACCEPT_FACTOR)
    elif event.kind == "suggestion_dismiss":
        current = profile.preference_weights.get(event.target, 1.0)
        profile.set_preference(event.target, current * PREFERENCE_DISMISS_FACTOR)
    else:
        ts = parse_ts(event.ts) if event.ts is not None else None
        if ts is None:
            raise ValueError(f"{event.kind} feedback needs a timestamp")
        if event.kind == "rating":
            if event.value is None or not -1.0 <= event.value <= 1.0:
                raise ValueError(f"rating value must be in [-1, 1], got {event.value!r}")
            boost = event.value
        else:
            boost = RESULT_CLICK_TERM_BOOST
        for term in tokenize(event.title):
            profile.add_term_evidence(term, boost, ts, half_life)
            entry = profile.term_weights[term]
            if entry.weight < 0.0:
                entry.weight = 0.0

    profile.version += 1
    return profile


# --- persistence ----------------------------------------------------------


def kb_to_json(kb: SharedKnowledgeBase) -> str:
    body = {
        "min_support": kb.min_support,
        "cooccurrence": kb.cooccurrence,
        "contributors": {cid: sorted(users) for cid, users in kb.contributors.items()},
    }
    return json.dumps(body, sort_keys=True, separators=(",", ":"))


def kb_from_json(text) -> SharedKnowledgeBase:
    data = json.loads(text) if isinstance(text, (str, bytes)) else text
    return SharedKnowledgeBase(
        cooccurrence={
            cid: {t: int(c) for t, c in counts.items()}
            for cid, counts in data.get("cooccurrence", {}).items()
        },
        contributors={cid: set(users) for cid, users in data.get("contributors", {}).items()},
        min_support=int(data.get("min_support", 1)),
    )


def save_kb(kb: SharedKnowledgeBase, path: str) -> None:
    atomic_write(path, kb_to_json(kb))


def load_kb(path: str, min_support: Optional[int] = None) -> SharedKnowledgeBase:
    """Load a persisted knowledge base; `min_support`, when given, overrides the stored knob."""
    if not os.path.exists(path):
        return SharedKnowledgeBase(min_support=min_support if min_support is not None else 1)
    with open(path, encoding="utf-8") as handle:
        kb = kb_from_json(handle.read())
    if min_support is not None:
        kb.min_support = min_support
    return kb
