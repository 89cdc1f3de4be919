"""Build a contextual profile from a desktop activity log.

Walks through the first half of the pipeline: replay the shipped trip-planning
log, watch term evidence accumulate with kind multipliers, and see half-life
decay reshape the profile as time passes.

Run from the repo root: python demos/01_profile_from_activity.py
"""

import os
from datetime import timedelta

from ctxsearch import profile as P

ROOT = os.path.join(os.path.dirname(__file__), "..")
LOG = os.path.join(ROOT, "fixtures", "activity", "trip_log.jsonl")

events = list(P.read_activity_log(LOG))
print(f"replaying {len(events)} activity events for user 'trip'\n")

profile = P.ContextualProfile(user_id="trip")
report = P.ingest_events(profile, events)
print(f"ingested={report.ingested}  skipped={report.skipped_seen}  "
      f"malformed={len(report.malformed)}  version={profile.version}\n")

last_event_ts = max(e.validated_ts() for e in events)
print("top terms right after the last event:")
for term, weight in P.top_terms(profile, 10, last_event_ts):
    print(f"  {weight:6.3f}  {term}")

print("\nlocation facts (merged, by weight):")
for fact in profile.location_facts():
    print(f"  {fact.weight:4.1f}  {fact.value}")

print("\nthe same terms three weeks later (half-life = 168 h):")
for term, weight in P.top_terms(profile, 10, last_event_ts + timedelta(weeks=3)):
    print(f"  {weight:6.3f}  {term}")

digest = P.to_digest(profile, min_digest_weight=0.01)
print(f"\ndigest carries {len(digest.term_weights)} terms, "
      f"{len(digest.facts)} facts, version {digest.version}, and no text or URIs:")
print(P.digest_to_json(digest)[:160] + "...")
