"""Drive the whole service over HTTP: ingest, search, feedback, shared knowledge.

Starts the gateway in-process on an ephemeral port, replays the scenario,
accepts and dismisses suggestions, and uploads a digest into the shared
knowledge base after registering for server-side storage.

Run from the repo root: python demos/05_service_and_feedback.py
"""

import json
import os
import tempfile
import urllib.request
from datetime import datetime, timezone

from ctxsearch.gateway import ContextService, load_config
from ctxsearch.httpd import serve_in_thread
from ctxsearch.profile import digest_to_json, load_profile, to_digest

ROOT = os.path.join(os.path.dirname(__file__), "..")
NOW = datetime(2026, 8, 8, 12, 0, tzinfo=timezone.utc)


def post(endpoint, path, body):
    request = urllib.request.Request(
        f"{endpoint}{path}", data=json.dumps(body).encode(),
        headers={"Content-Type": "application/json"}, method="POST")
    with urllib.request.urlopen(request) as response:
        return json.loads(response.read())


with tempfile.TemporaryDirectory() as tmp:
    config = load_config(os.path.join(ROOT, "fixtures", "config", "server.json"),
                         {"data_dir": os.path.join(tmp, "data"), "min_support": 1})
    service = ContextService(config, clock=lambda: NOW)
    server, _ = serve_in_thread(service)
    print(f"service on {server.endpoint}\n")

    records = [json.loads(line) for line in
               open(os.path.join(ROOT, "fixtures", "activity", "trip_log.jsonl"))]
    print("POST /v1/events ->", post(server.endpoint, "/v1/events",
                                     {"user_id": "trip", "events": records}))

    search = post(server.endpoint, "/v1/search", {"user_id": "trip", "query": "Surfing"})
    print(f"\nsense: {search['sense']['chosen']}")
    print("results:", [r["doc_id"] for r in search["results"][:3]])
    print("suggestions:", [s["label"] for s in search["suggestions"]])

    print("\ndismiss 'Check weather' three times:")
    for _ in range(3):
        post(server.endpoint, "/v1/feedback",
             {"user_id": "trip", "kind": "suggestion_dismiss",
              "target": "concept:check_weather"})
    search = post(server.endpoint, "/v1/search", {"user_id": "trip", "query": "Surfing"})
    print("suggestions now:", [(s["label"], round(s["score"], 3))
                               for s in search["suggestions"]])

    print("\nregister and upload a digest into the shared knowledge base:")
    print("POST /v1/register ->", post(server.endpoint, "/v1/register", {"user_id": "trip"}))
    profile = load_profile(config.data_dir, "trip")
    digest = json.loads(digest_to_json(to_digest(profile)))
    print("POST /v1/digest ->", post(server.endpoint, "/v1/digest",
                                     {"user_id": "trip", "digest": digest}))
    sport_terms = service.kb.cooccurrence.get("concept:surfing_sport", {})
    print(f"knowledge base now associates {len(sport_terms)} terms with the chosen sense")

    server.shutdown()
    server.server_close()
