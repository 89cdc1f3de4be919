import json
import urllib.error
import urllib.request
from datetime import datetime, timezone

import pytest

from ctxsearch import profile as P
from ctxsearch.errors import ConfigError
from ctxsearch.gateway import BackendSpec, ContextService, load_config
from ctxsearch.httpd import serve_in_thread

from .conftest import CONFIG_PATH, NOW


@pytest.fixture()
def service(tmp_path):
    config = load_config(CONFIG_PATH, {"data_dir": str(tmp_path / "data"), "min_support": 1})
    return ContextService(config, clock=lambda: NOW)


@pytest.fixture()
def loaded_service(service, trip_log_records):
    service.ingest_events("trip", trip_log_records)
    return service


@pytest.fixture()
def server(loaded_service):
    httpd, thread = serve_in_thread(loaded_service)
    yield httpd
    httpd.shutdown()
    httpd.server_close()


def call(server, method, path, body=None):
    url = f"{server.endpoint}{path}"
    data = json.dumps(body).encode() if body is not None else None
    request = urllib.request.Request(url, data=data, method=method,
                                     headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(request, timeout=10) as response:
            return response.status, json.loads(response.read())
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read())


# --- config ---------------------------------------------------------------------


def test_config_requires_registries(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"data_dir": "d", "backends": {}, "ontologies": {}}))
    with pytest.raises(ConfigError):
        load_config(str(path))


def test_config_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("CTXSEARCH_ALPHA", "0.25")
    config = load_config(CONFIG_PATH, {"data_dir": str(tmp_path)})
    assert config.alpha == 0.25


def test_config_rejects_bad_alpha(tmp_path, monkeypatch):
    monkeypatch.setenv("CTXSEARCH_ALPHA", "7")
    with pytest.raises(ConfigError):
        load_config(CONFIG_PATH, {"data_dir": str(tmp_path)})


def test_config_relative_paths_resolve_against_file():
    config = load_config(CONFIG_PATH)
    assert config.ontologies["surf"].endswith("fixtures/ontology/surf.jsonl")


def test_config_kind_multipliers_override(tmp_path):
    config = load_config(CONFIG_PATH, {"data_dir": str(tmp_path / "data")})
    config.kind_multipliers = {"booking": 5.0}
    service = ContextService(config, clock=lambda: NOW)
    service.ingest_events("u", [{
        "id": "e1", "ts": "2026-08-05T00:00:00Z", "app": "browser",
        "kind": "booking", "text": "hotel auckland",
    }, {
        "id": "e2", "ts": "2026-08-05T00:00:00Z", "app": "browser",
        "kind": "visit", "text": "beaches",
    }])
    view = service.profile_view("u")
    assert view["term_weights"]["auckland"]["weight"] == 5.0   # overridden
    assert view["term_weights"]["beaches"]["weight"] == 1.0    # default kept


def test_config_rejects_unknown_multiplier_kind(tmp_path):
    config = load_config(CONFIG_PATH, {"data_dir": str(tmp_path / "data")})
    config.kind_multipliers = {"install": 2.0}
    with pytest.raises(ConfigError):
        config.validate()


def test_config_stemming_flag(tmp_path):
    config = load_config(CONFIG_PATH, {"data_dir": str(tmp_path / "data")})
    config.stemming = True
    service = ContextService(config, clock=lambda: NOW)
    service.ingest_events("u", [{
        "id": "e1", "ts": "2026-08-05T00:00:00Z", "app": "browser",
        "kind": "visit", "text": "waves lessons",
    }])
    view = service.profile_view("u")
    assert "wave" in view["term_weights"] and "waves" not in view["term_weights"]


# --- service-level -----------------------------------------------------------------


def test_scenario_search_end_to_end(loaded_service):
    response = loaded_service.search("trip", "Surfing")
    assert response["sense"]["chosen"] == "concept:surfing_sport"
    expected = {"surfing in new zealand", "northland surfing", "auckland surfing",
                "surf tours", "surf lessons"}
    got = {s["query"] for s in response["sub_queries"]}
    assert len(expected & got) >= 3
    assert [s["label"] for s in response["suggestions"]] == \
        ["Check weather", "Surfing guide", "See surfing pictures"]
    assert response["results"][0]["doc_id"] == "piha-surf-guide"


def test_fresh_user_gets_backend_order(service, corpus_index):
    from ctxsearch.backend import search as bm25_search

    response = service.search("stranger", "surfing")
    assert response["sense"]["chosen"] == "concept:web_browsing"
    assert [r["doc_id"] for r in response["results"]] == \
        [d for d, _ in bm25_search(corpus_index, "surfing", 20)]


def test_search_records_concept_evidence(loaded_service):
    loaded_service.search("trip", "Surfing")
    profile = P.load_profile(loaded_service.config.data_dir, "trip")
    assert "concept:surfing_sport" in profile.concept_weights


def test_search_sense_evidence_can_be_disabled(service, trip_log_records):
    service.config.record_sense_evidence = False
    service.ingest_events("trip", trip_log_records)
    before = P.profile_to_json(P.load_profile(service.config.data_dir, "trip"))
    service.search("trip", "Surfing")
    after = P.profile_to_json(P.load_profile(service.config.data_dir, "trip"))
    assert before == after


def test_reactivate_plan_identical_results(loaded_service):
    response = loaded_service.search("trip", "Surfing")
    again = loaded_service.reactivate_plan(response["plan_id"], "trip")
    assert [r.doc_id for r in again] == [r["doc_id"] for r in response["results"]]
    assert [r.final_score for r in again] == [r["final_score"] for r in response["results"]]


# --- endpoints ------------------------------------------------------------------------


def test_health(server):
    status, body = call(server, "GET", "/v1/health")
    assert status == 200 and body == {"status": "ok"}


def test_events_endpoint_roundtrip(server, trip_log_records):
    status, body = call(server, "POST", "/v1/events",
                        {"user_id": "fresh", "events": trip_log_records})
    assert status == 200
    assert body["version"] == 1 and body["ingested"] == 12

    status, body = call(server, "POST", "/v1/events",
                        {"user_id": "fresh", "events": trip_log_records})
    assert status == 200
    assert body["version"] == 1 and body["skipped_seen"] == 12

    status, body = call(server, "GET", "/v1/profile/fresh")
    assert status == 200
    assert "auckland" in body["term_weights"]


def test_events_endpoint_reports_malformed(server):
    events = [{"id": "x1", "ts": "bad", "app": "browser", "kind": "visit", "text": "t"}]
    status, body = call(server, "POST", "/v1/events", {"user_id": "u", "events": events})
    assert status == 200 and body["malformed"] == ["x1"]


def test_events_endpoint_rejects_non_list(server):
    status, body = call(server, "POST", "/v1/events", {"user_id": "u", "events": "nope"})
    assert status == 400


def test_search_endpoint_full_cycle(server):
    status, body = call(server, "POST", "/v1/search", {"user_id": "trip", "query": "Surfing"})
    assert status == 200
    assert body["sense"]["chosen"] == "concept:surfing_sport"
    assert body["results"][0]["doc_id"] == "piha-surf-guide"
    assert body["warnings"] == []
    for field in ("sense", "sub_queries", "results", "suggestions", "warnings"):
        assert field in body


def test_search_endpoint_missing_query_is_400(server):
    status, body = call(server, "POST", "/v1/search", {"user_id": "trip"})
    assert status == 400 and body["error"]["code"] == "EmptyQuery"


def test_search_endpoint_empty_query_is_400(server):
    status, body = call(server, "POST", "/v1/search", {"user_id": "trip", "query": "!!"})
    assert status == 400 and body["error"]["code"] == "EmptyQuery"


def test_feedback_endpoint_updates_preference(server):
    call(server, "POST", "/v1/search", {"user_id": "trip", "query": "Surfing"})
    status, body = call(server, "POST", "/v1/feedback", {
        "user_id": "trip", "kind": "suggestion_accept", "target": "concept:check_weather",
    })
    assert status == 200
    status, body = call(server, "GET", "/v1/profile/trip")
    assert body["preference_weights"]["concept:check_weather"] == pytest.approx(1.2)


def test_feedback_endpoint_unknown_user_404(server):
    status, body = call(server, "POST", "/v1/feedback", {
        "user_id": "ghost", "kind": "suggestion_accept", "target": "concept:c"})
    assert status == 404 and body["error"]["code"] == "UnknownUser"


def test_feedback_endpoint_unknown_kind_400(server):
    status, body = call(server, "POST", "/v1/feedback", {
        "user_id": "trip", "kind": "shrug", "target": "t"})
    assert status == 400 and body["error"]["code"] == "UnknownKind"


def test_profile_endpoint_unknown_user_404(server):
    status, body = call(server, "GET", "/v1/profile/ghost")
    assert status == 404


def test_register_then_digest_accepted(server):
    digest = {"user_id": "trip", "version": 1,
              "term_weights": {"auckland": [2.0, "2026-08-05T00:00:00Z"]},
              "concept_weights": {"concept:surfing_sport": [1.0, "2026-08-05T00:00:00Z"]},
              "facts": []}
    status, body = call(server, "POST", "/v1/digest", {"user_id": "trip", "digest": digest})
    assert status == 403  # not registered yet

    status, body = call(server, "POST", "/v1/register", {"user_id": "trip"})
    assert status == 200 and body["storage_mode"] == "server"

    status, body = call(server, "POST", "/v1/digest", {"user_id": "trip", "digest": digest})
    assert status == 200 and body["stored_version"] == 1

    # Idempotent re-upload: knowledge base unchanged.
    kb_before = server.service.kb.cooccurrence
    snapshot = json.dumps(kb_before, sort_keys=True)
    status, _ = call(server, "POST", "/v1/digest", {"user_id": "trip", "digest": digest})
    assert status == 200
    assert json.dumps(server.service.kb.cooccurrence, sort_keys=True) == snapshot
    assert server.service.kb.cooccurrence["concept:surfing_sport"]["auckland"] == 1


def test_digest_endpoint_rejects_malformed(server):
    call(server, "POST", "/v1/register", {"user_id": "trip"})
    status, body = call(server, "POST", "/v1/digest",
                        {"user_id": "trip", "digest": {"user_id": "trip"}})
    assert status == 400 and body["error"]["code"] == "DigestParse"


def test_unknown_route_404(server):
    status, body = call(server, "GET", "/v1/nope")
    assert status == 404


def test_restart_yields_identical_responses(tmp_path, trip_log_records):
    """Same request stream, with and without a restart in the middle."""
    def drive(service):
        service.ingest_events("trip", trip_log_records)
        service.search("trip", "Surfing")
        service.apply_feedback({"user_id": "trip", "kind": "suggestion_dismiss",
                                "target": "concept:check_weather"})

    def finish(service):
        service.apply_feedback({"user_id": "trip", "kind": "suggestion_accept",
                                "target": "concept:surfing_guide"})
        return service.search("trip", "Surfing")

    dir_a, dir_b = str(tmp_path / "a"), str(tmp_path / "b")
    continuous = ContextService(load_config(CONFIG_PATH, {"data_dir": dir_a}),
                                clock=lambda: NOW)
    drive(continuous)
    uninterrupted = finish(continuous)

    before_restart = ContextService(load_config(CONFIG_PATH, {"data_dir": dir_b}),
                                    clock=lambda: NOW)
    drive(before_restart)
    restarted = ContextService(load_config(CONFIG_PATH, {"data_dir": dir_b}),
                               clock=lambda: NOW)
    assert finish(restarted) == uninterrupted


def test_endpoints_deterministic_under_pinned_clock(loaded_service):
    first = loaded_service.search("trip", "Surfing")
    second = loaded_service.search("trip", "Surfing")
    assert first["results"] == second["results"]
    assert first["plan_id"] == second["plan_id"]


def _external_service(tmp_path, endpoint, trip_log_records):
    config = load_config(CONFIG_PATH, {"data_dir": str(tmp_path / "data")})
    config.backends["ext"] = BackendSpec(kind="external", endpoint=endpoint, deadline=2.0)
    config.default_backend = "ext"
    service = ContextService(config, clock=lambda: NOW)
    service.ingest_events("trip", trip_log_records)
    return service


def test_search_through_external_backend(tmp_path, trip_log_records):
    from ctxsearch.stubserver import StubSearchServer

    results = [
        {"id": "ext-1", "title": "Auckland surf report", "snippet": "waves at piha", "score": 9.0},
        {"id": "ext-2", "title": "Browser news", "snippet": "new tabs feature", "score": 5.0},
    ]
    with StubSearchServer(results=results) as stub:
        service = _external_service(tmp_path, stub.endpoint, trip_log_records)
        response = service.search("trip", "Surfing")
    assert [r["doc_id"] for r in response["results"]] == ["ext-1", "ext-2"]
    assert len(stub.requests) == len(response["sub_queries"])
    assert response["warnings"] == []


def test_search_external_backend_down_is_503(tmp_path, trip_log_records):
    service = _external_service(tmp_path, "http://127.0.0.1:1", trip_log_records)
    httpd, thread = serve_in_thread(service)
    try:
        status, body = call(httpd, "POST", "/v1/search",
                            {"user_id": "trip", "query": "Surfing"})
    finally:
        httpd.shutdown()
        httpd.server_close()
    assert status == 503
    assert body["error"]["code"] == "AllBackendsFailed"
