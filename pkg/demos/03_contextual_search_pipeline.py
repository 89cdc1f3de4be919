"""The full query pipeline: expand, dispatch to BM25, re-rank against the profile.

Shows the contextual sub-queries generated from the chosen sense and the
profile's location facts, then compares the plain BM25 ranking with the
context-blended ranking for the same query.

Run from the repo root: python demos/03_contextual_search_pipeline.py
"""

import os
from datetime import datetime, timezone

from ctxsearch import backend as B
from ctxsearch import knowledge as K
from ctxsearch import profile as P
from ctxsearch import queryflow as Q
from ctxsearch.ontology import load_ontology

ROOT = os.path.join(os.path.dirname(__file__), "..")
NOW = datetime(2026, 8, 8, 12, 0, tzinfo=timezone.utc)

graph = load_ontology(os.path.join(ROOT, "fixtures", "ontology", "surf.jsonl"))
index = B.build_index(B.read_corpus(os.path.join(ROOT, "fixtures", "corpus")))
backend = B.LocalBackend(index)
kb = K.SharedKnowledgeBase()

trip = P.ContextualProfile(user_id="trip")
P.ingest_events(trip, P.read_activity_log(
    os.path.join(ROOT, "fixtures", "activity", "trip_log.jsonl")))

terms = Q.parse_query("Surfing")
sense = K.disambiguate(terms[0], trip, graph, NOW)
plan = Q.expand(terms, sense, trip, graph, max_subqueries=8, now=NOW)

print("contextual sub-queries:")
for i, sub in enumerate(plan.sub_queries):
    print(f"  {i}: [{sub.weight:.1f}] {sub.query!r}  ({sub.origin})")

print("\nplain BM25 for 'surfing':")
for doc_id, score in B.search(index, "surfing", 5):
    print(f"  {score:6.3f}  {doc_id}")

raw = Q.execute(plan, backend, k_per_subquery=20)
ranked = Q.rank(raw, plan, trip, kb, alpha=0.6, now=NOW)
print("\ncontext-blended ranking (alpha = 0.6):")
for r in ranked[:5]:
    print(f"  final={r.final_score:.3f}  backend={r.backend_score_norm:.3f} "
          f"context={r.context_score:.3f}  {r.doc_id}")

print(f"\nplan {plan.plan_id} persists and reactivates:")
plans_dir = os.path.join(ROOT, "data", "demo-plans")
Q.save_plan(plan, plans_dir)
again = Q.load_plan(plans_dir, plan.plan_id)
replay = Q.rank(Q.execute(again, backend, 20), again, trip, kb, alpha=0.6, now=NOW)
print(f"  identical results after reload: {replay == ranked}")
