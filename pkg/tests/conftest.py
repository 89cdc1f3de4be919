import json
import os
from datetime import datetime, timezone

import pytest

from ctxsearch import backend as backend_mod
from ctxsearch import ontology as ontology_mod
from ctxsearch import profile as profile_mod

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
FIXTURES = os.path.join(ROOT, "fixtures")

ONTOLOGY_PATH = os.path.join(FIXTURES, "ontology", "surf.jsonl")
TRIP_LOG_PATH = os.path.join(FIXTURES, "activity", "trip_log.jsonl")
CORPUS_PATH = os.path.join(FIXTURES, "corpus")
CONFIG_PATH = os.path.join(FIXTURES, "config", "server.json")

NOW = datetime(2026, 8, 8, 12, 0, tzinfo=timezone.utc)


@pytest.fixture(scope="session")
def graph():
    return ontology_mod.load_ontology(ONTOLOGY_PATH)


@pytest.fixture()
def trip_events():
    return list(profile_mod.read_activity_log(TRIP_LOG_PATH))


@pytest.fixture()
def trip_profile(trip_events):
    profile = profile_mod.ContextualProfile(user_id="trip")
    profile_mod.ingest_events(profile, trip_events)
    return profile


@pytest.fixture(scope="session")
def corpus():
    return backend_mod.read_corpus(CORPUS_PATH)


@pytest.fixture(scope="session")
def corpus_index(corpus):
    return backend_mod.build_index(corpus)


@pytest.fixture()
def trip_log_records():
    with open(TRIP_LOG_PATH, encoding="utf-8") as handle:
        return [json.loads(line) for line in handle if line.strip()]
