"""File-backed concept graph: sense candidates, neighborhoods, suggestion edges.

Ontologies are loaded from JSONL snapshots (one concept per line) instead of
live web services, so every run sees the same graph. The graph is immutable
after load and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import DanglingRelation, DuplicateConcept, ParseError, UnknownConcept

RELATION_KINDS = ("broader", "narrower", "related", "suggests")


@dataclass(frozen=True)
class Concept:
    """One ontology node. `priority` 1 is the strongest no-context default sense."""

    id: str
    labels: tuple[str, ...]
    gloss: str = ""
    relations: tuple[tuple[str, str], ...] = ()
    domain: str = ""
    priority: int = 1

    def targets(self, kind: str) -> list[str]:
        return [target for rel_kind, target in self.relations if rel_kind == kind]


@dataclass
class OntologyGraph:
    concepts: dict[str, Concept] = field(default_factory=dict)
    label_index: dict[str, list[str]] = field(default_factory=dict)

    def serialized_form(self) -> str:
        """Canonical JSON of the whole graph (used to compare loads)."""
        body = {
            cid: {
                "labels": list(c.labels),
                "gloss": c.gloss,
                "relations": [list(r) for r in c.relations],
                "domain": c.domain,
                "priority": c.priority,
            }
            for cid, c in self.concepts.items()
        }
        return json.dumps(body, sort_keys=True, separators=(",", ":"))


def _parse_concept(record: dict, line_no: int) -> Concept:
    cid = record.get("id")
    if not isinstance(cid, str) or not cid:
        raise ParseError(line_no, "missing or empty id")
    labels = record.get("labels")
    if not isinstance(labels, list) or not labels or not all(isinstance(l, str) and l for l in labels):
        raise ParseError(line_no, f"concept {cid!r} needs a non-empty list of labels")
    priority = record.get("priority", 1)
    if not isinstance(priority, int) or priority < 1:
        raise ParseError(line_no, f"concept {cid!r} priority must be a positive integer")
    relations = []
    for kind in RELATION_KINDS:
        targets = record.get(kind) or []
        if not isinstance(targets, list):
            raise ParseError(line_no, f"concept {cid!r} field {kind!r} must be a list")
        for target in targets:
            if not isinstance(target, str):
                raise ParseError(line_no, f"concept {cid!r} relation target must be a string")
            relations.append((kind, target))
    return Concept(
        id=cid,
        labels=tuple(labels),
        gloss=str(record.get("gloss", "")),
        relations=tuple(relations),
        domain=str(record.get("domain", "")),
        priority=priority,
    )


def load_ontology(path: str) -> OntologyGraph:
    """Load and fully validate a JSONL ontology snapshot."""
    graph = OntologyGraph()
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(record, dict):
                raise ParseError(line_no, "record must be a JSON object")
            concept = _parse_concept(record, line_no)
            if concept.id in graph.concepts:
                raise DuplicateConcept(concept.id)
            graph.concepts[concept.id] = concept

    for concept in graph.concepts.values():
        for _, target in concept.relations:
            if target not in graph.concepts:
                raise DanglingRelation(concept.id, target)
        for label in concept.labels:
            graph.label_index.setdefault(label.lower(), []).append(concept.id)
    return graph


def senses_of(graph: OntologyGraph, term: str) -> list[Concept]:
    """All concepts labelled `term` (case-insensitive), priority then id order."""
    ids = graph.label_index.get(term.lower(), [])
    concepts = [graph.concepts[cid] for cid in ids]
    concepts.sort(key=lambda c: (c.priority, c.id))
    return concepts


def neighborhood(graph: OntologyGraph, concept_id: str, kinds, depth: int) -> list[Concept]:
    """BFS over the given relation kinds up to `depth` hops, start included.

    Returns concepts sorted by id; set semantics, deterministic order.
    """
    if concept_id not in graph.concepts:
        raise UnknownConcept(concept_id)
    if depth < 0:
        raise ValueError("depth must be >= 0")
    kinds = set(kinds)
    visited = {concept_id}
    frontier = [concept_id]
    for _ in range(depth):
        nxt = []
        for cid in frontier:
            for kind, target in graph.concepts[cid].relations:
                if kind in kinds and target not in visited:
                    visited.add(target)
                    nxt.append(target)
        if not nxt:
            break
        frontier = sorted(nxt)
    return [graph.concepts[cid] for cid in sorted(visited)]
