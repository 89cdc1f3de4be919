"""Query pipeline: parse, expand into weighted sub-queries, dispatch, re-rank.

Expansion order is fixed: the literal query first (weight 1.0), then two
location templates per profile location fact ("<loc> <q>", "<q> in <loc>",
weight 0.8), then the first labels of the chosen sense's narrower and
related neighbors (weight 0.6), deduplicated case-insensitively and capped
at max_subqueries.

Ranking mixes normalized backend scores with a cosine context score against
the decayed profile vector: final = alpha * backend + (1 - alpha) * context,
halved for documents that match only a rejected sense's known vocabulary.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Optional

from .errors import AllBackendsFailed, CtxSearchError, EmptyQuery
from .knowledge import SenseChoice, SharedKnowledgeBase, associated_terms
from .ontology import OntologyGraph
from .profile import (
    DEFAULT_HALF_LIFE,
    ContextualProfile,
    atomic_write,
    format_ts,
    parse_ts,
    term_vector,
    tokenize,
)

DEFAULT_ALPHA = 0.6
DEFAULT_MAX_SUBQUERIES = 8
DEFAULT_K_PER_SUBQUERY = 20
LOCATION_WEIGHT = 0.8
CONCEPT_WEIGHT = 0.6
REJECTED_SENSE_DEMOTION = 0.5


@dataclass
class SubQuery:
    query: str
    weight: float
    origin: str  # original | location | concept


@dataclass
class QueryPlan:
    plan_id: str
    original: list[str]
    sense: Optional[SenseChoice]
    sub_queries: list[SubQuery]
    created_at: datetime


@dataclass
class RankedResult:
    doc_id: str
    title: str
    snippet: str
    backend_score_norm: float
    context_score: float
    final_score: float
    sub_query_ids: list[int]
    demoted: bool = False


@dataclass
class ExecuteResult:
    """Per-sub-query raw hits plus warnings for sub-queries that errored."""

    hits: list[tuple[int, list]] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def parse_query(text: str) -> list[str]:
    terms = tokenize(text)
    if not terms:
        raise EmptyQuery(f"no terms survive tokenization of {text!r}")
    return terms


def _plan_id(original: list[str], sense: Optional[SenseChoice],
             sub_queries: list[SubQuery], created_at: datetime) -> str:
    body = json.dumps(
        {
            "original": original,
            "sense": sense.chosen if sense else None,
            "sub_queries": [[s.query, s.weight, s.origin] for s in sub_queries],
            "created_at": format_ts(created_at),
        },
        sort_keys=True,
        separators=(",", ":"),
    )
    return hashlib.sha256(body.encode("utf-8")).hexdigest()[:16]


def expand(terms: list[str], sense: Optional[SenseChoice], profile: ContextualProfile,
           graph: OntologyGraph, max_subqueries: int = DEFAULT_MAX_SUBQUERIES,
           now: Optional[datetime] = None) -> QueryPlan:
    """Build the ordered, capped sub-query list for one query."""
    if not terms:
        raise EmptyQuery("cannot expand an empty term list")
    if max_subqueries < 1:
        raise ValueError("max_subqueries must be >= 1")
    created_at = now if now is not None else datetime.now().astimezone()

    query = " ".join(terms)
    sub_queries = [SubQuery(query, 1.0, "original")]
    seen = {query.lower()}

    def emit(text: str, weight: float, origin: str) -> bool:
        if len(sub_queries) >= max_subqueries:
            return False
        if text.lower() in seen:
            return True
        seen.add(text.lower())
        sub_queries.append(SubQuery(text, weight, origin))
        return True

    if sense is not None:
        for fact in profile.location_facts():
            location = fact.value.lower()
            if not emit(f"{location} {query}", LOCATION_WEIGHT, "location"):
                break
            if not emit(f"{query} in {location}", LOCATION_WEIGHT, "location"):
                break
        chosen = graph.concepts.get(sense.chosen)
        if chosen is not None:
            neighbor_ids = sorted(chosen.targets("narrower")) + sorted(chosen.targets("related"))
            for target in neighbor_ids:
                label = graph.concepts[target].labels[0]
                if not emit(label, CONCEPT_WEIGHT, "concept"):
                    break

    return QueryPlan(
        plan_id=_plan_id(terms, sense, sub_queries, created_at),
        original=list(terms),
        sense=sense,
        sub_queries=sub_queries,
        created_at=created_at,
    )


def execute(plan: QueryPlan, backend, k_per_subquery: int = DEFAULT_K_PER_SUBQUERY) -> ExecuteResult:
    """Dispatch every sub-query; degrade to partial results on backend errors."""
    result = ExecuteResult()
    failures = 0
    for idx, sub in enumerate(plan.sub_queries):
        try:
            hits = backend.search(sub.query, k_per_subquery)
        except CtxSearchError as exc:
            failures += 1
            result.warnings.append(f"sub-query {idx} {sub.query!r} failed: {exc}")
            continue
        result.hits.append((idx, hits))
    if failures and failures == len(plan.sub_queries):
        raise AllBackendsFailed(f"all {failures} sub-queries failed")
    return result


def _cosine(doc_counts: Counter, profile_vec: dict[str, float]) -> float:
    if not doc_counts or not profile_vec:
        return 0.0
    dot = sum(count * profile_vec[tok] for tok, count in doc_counts.items() if tok in profile_vec)
    if dot == 0.0:
        return 0.0
    doc_norm = math.sqrt(sum(c * c for c in doc_counts.values()))
    prof_norm = math.sqrt(sum(w * w for w in profile_vec.values()))
    if doc_norm == 0.0 or prof_norm == 0.0:
        return 0.0
    return dot / (doc_norm * prof_norm)


def rank(raw: ExecuteResult, plan: QueryPlan, profile: ContextualProfile,
         kb: SharedKnowledgeBase, alpha: float = DEFAULT_ALPHA,
         now: Optional[datetime] = None,
         half_life: timedelta = DEFAULT_HALF_LIFE) -> list[RankedResult]:
    """Merge, score and order raw hits against the profile.

    Backend scores are max-normalized per sub-query (scales are incomparable
    across queries), then combined as the max of weight x norm over the
    sub-queries that returned the document.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be in [0, 1]")
    now = now if now is not None else datetime.now().astimezone()

    per_doc: dict[str, dict] = {}
    for idx, hits in sorted(raw.hits, key=lambda pair: pair[0]):
        if not hits:
            continue
        max_score = max(hit.score for hit in hits)
        weight = plan.sub_queries[idx].weight
        for hit in hits:
            norm = hit.score / max_score if max_score > 0 else 0.0
            entry = per_doc.setdefault(
                hit.doc_id,
                {"title": hit.title, "snippet": hit.snippet, "backend": 0.0, "subs": set()},
            )
            entry["backend"] = max(entry["backend"], weight * norm)
            entry["subs"].add(idx)

    profile_vec = term_vector(profile, now, half_life)
    chosen_vocab: set[str] = set()
    rejected_vocab: set[str] = set()
    if plan.sense is not None:
        chosen_vocab = {t for t, _ in associated_terms(kb, plan.sense.chosen)}
        for rejected_id in plan.sense.rejected:
            rejected_vocab.update(t for t, _ in associated_terms(kb, rejected_id))

    results = []
    for doc_id, entry in per_doc.items():
        doc_tokens = tokenize(f"{entry['title']} {entry['snippet']}")
        context = _cosine(Counter(doc_tokens), profile_vec)
        final = alpha * entry["backend"] + (1.0 - alpha) * context
        token_set = set(doc_tokens)
        demoted = bool(
            plan.sense is not None
            and token_set & rejected_vocab
            and not token_set & chosen_vocab
        )
        if demoted:
            final *= REJECTED_SENSE_DEMOTION
        results.append(RankedResult(
            doc_id=doc_id,
            title=entry["title"],
            snippet=entry["snippet"],
            backend_score_norm=entry["backend"],
            context_score=context,
            final_score=final,
            sub_query_ids=sorted(entry["subs"]),
            demoted=demoted,
        ))

    results.sort(key=lambda r: (-r.final_score, r.doc_id))
    return results


# --- plan persistence (reactivation) ---------------------------------------


def plan_to_json(plan: QueryPlan) -> str:
    body = {
        "plan_id": plan.plan_id,
        "original": plan.original,
        "sense": None if plan.sense is None else {
            "term": plan.sense.term,
            "chosen": plan.sense.chosen,
            "scores": plan.sense.scores,
            "rejected": plan.sense.rejected,
        },
        "sub_queries": [[s.query, s.weight, s.origin] for s in plan.sub_queries],
        "created_at": format_ts(plan.created_at),
    }
    return json.dumps(body, sort_keys=True, separators=(",", ":"))


def plan_from_json(text) -> QueryPlan:
    data = json.loads(text) if isinstance(text, (str, bytes)) else text
    sense = None
    if data.get("sense") is not None:
        s = data["sense"]
        sense = SenseChoice(term=s["term"], chosen=s["chosen"],
                            scores={k: float(v) for k, v in s.get("scores", {}).items()},
                            rejected=list(s.get("rejected", [])))
    return QueryPlan(
        plan_id=data["plan_id"],
        original=list(data["original"]),
        sense=sense,
        sub_queries=[SubQuery(q, float(w), o) for q, w, o in data["sub_queries"]],
        created_at=parse_ts(data["created_at"]),
    )


def save_plan(plan: QueryPlan, plans_dir: str) -> str:
    path = os.path.join(plans_dir, f"{plan.plan_id}.json")
    atomic_write(path, plan_to_json(plan))
    return path


def load_plan(plans_dir: str, plan_id: str) -> QueryPlan:
    with open(os.path.join(plans_dir, f"{plan_id}.json"), encoding="utf-8") as handle:
        return plan_from_json(handle.read())
