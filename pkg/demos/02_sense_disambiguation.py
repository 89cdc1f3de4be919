"""Turn the ambiguous keyword "surfing" into a concrete concept.

With no context, "surfing" defaults to the web-browsing sense (priority 1 in
the ontology). After the trip-planning log is ingested, the profile's top
terms overlap the wave-surfing sense's neighborhood vocabulary and flip the
decision.

Run from the repo root: python demos/02_sense_disambiguation.py
"""

import os
from datetime import datetime, timezone

from ctxsearch import knowledge as K
from ctxsearch import profile as P
from ctxsearch.ontology import load_ontology, neighborhood, senses_of

ROOT = os.path.join(os.path.dirname(__file__), "..")
NOW = datetime(2026, 8, 8, 12, 0, tzinfo=timezone.utc)

graph = load_ontology(os.path.join(ROOT, "fixtures", "ontology", "surf.jsonl"))

print('candidate senses for "surfing":')
for concept in senses_of(graph, "surfing"):
    print(f"  priority {concept.priority}: {concept.id}: {concept.gloss[:60]}...")

fresh = P.ContextualProfile(user_id="fresh")
no_context = K.disambiguate("surfing", fresh, graph, NOW)
print(f"\nwithout context -> {no_context.chosen}")
print(f"  scores: { {cid: round(s, 6) for cid, s in no_context.scores.items()} }")

trip = P.ContextualProfile(user_id="trip")
P.ingest_events(trip, P.read_activity_log(
    os.path.join(ROOT, "fixtures", "activity", "trip_log.jsonl")))
with_context = K.disambiguate("surfing", trip, graph, NOW)
print(f"\nwith the trip profile -> {with_context.chosen}")
print(f"  scores: { {cid: round(s, 3) for cid, s in with_context.scores.items()} }")

hood = neighborhood(graph, with_context.chosen, {"narrower"}, 1)
print(f"\nnarrower concepts of the chosen sense: {[c.id for c in hood if c.id != with_context.chosen]}")

print("\nsuggestions attached to the chosen sense:")
for s in K.suggest(with_context.chosen, trip, graph):
    print(f"  {s.score:4.2f}  {s.label}")
