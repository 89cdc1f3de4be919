from collections import Counter
from datetime import datetime, timezone

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctxsearch import knowledge as K
from ctxsearch import profile as P
from ctxsearch import queryflow as Q
from ctxsearch.backend import Hit
from ctxsearch.errors import AllBackendsFailed, BackendUnavailable, EmptyQuery

from .oracles import brute_cosine

NOW = datetime(2026, 8, 8, 12, 0, tzinfo=timezone.utc)
EMPTY_KB = K.SharedKnowledgeBase()


class FakeBackend:
    """Scripted backend: query -> hits, or raises when told to."""

    def __init__(self, table=None, fail_on=()):
        self.table = table or {}
        self.fail_on = set(fail_on)
        self.calls = []

    def search(self, query, k):
        self.calls.append(query)
        if query in self.fail_on or "*" in self.fail_on:
            raise BackendUnavailable(f"scripted failure for {query!r}")
        return self.table.get(query, [])[:k]


def hit(doc_id, score, title="", snippet=""):
    return Hit(doc_id=doc_id, title=title or doc_id, snippet=snippet, score=score)


# --- parse ---------------------------------------------------------------------


def test_parse_single_term():
    assert Q.parse_query("Surfing") == ["surfing"]


def test_parse_collapses_whitespace():
    assert Q.parse_query("  surf   lessons ") == ["surf", "lessons"]


def test_parse_empty_query():
    with pytest.raises(EmptyQuery):
        Q.parse_query("!!")


# --- expand ---------------------------------------------------------------------


def test_expand_scenario_plan_entries(trip_profile, graph):
    sense = K.disambiguate("surfing", trip_profile, graph, NOW)
    plan = Q.expand(["surfing"], sense, trip_profile, graph, max_subqueries=8, now=NOW)
    # Frozen hand application of the emission order: original; both templates
    # per location fact by descending weight (auckland 2.0, then new zealand
    # and northland at 1.0 in value order); then narrower concepts by id.
    assert [(s.query, s.weight, s.origin) for s in plan.sub_queries] == [
        ("surfing", 1.0, "original"),
        ("auckland surfing", 0.8, "location"),
        ("surfing in auckland", 0.8, "location"),
        ("new zealand surfing", 0.8, "location"),
        ("surfing in new zealand", 0.8, "location"),
        ("northland surfing", 0.8, "location"),
        ("surfing in northland", 0.8, "location"),
        ("surf camps", 0.6, "concept"),
    ]
    expected = {"surfing in new zealand", "northland surfing", "auckland surfing",
                "surf tours", "surf lessons"}
    got = {s.query for s in plan.sub_queries}
    assert len(expected & got) >= 3


def test_expand_without_sense_is_literal(trip_profile, graph):
    plan = Q.expand(["surfing"], None, trip_profile, graph, now=NOW)
    assert [(s.query, s.weight) for s in plan.sub_queries] == [("surfing", 1.0)]


def test_expand_empty_profile_sense_without_neighbors(graph):
    empty = P.ContextualProfile(user_id="u")
    sense = K.disambiguate("browsing", empty, graph, NOW)
    plan = Q.expand(["browsing"], sense, empty, graph, now=NOW)
    assert [s.query for s in plan.sub_queries] == ["browsing"]


def test_expand_cap_one_keeps_original(trip_profile, graph):
    sense = K.disambiguate("surfing", trip_profile, graph, NOW)
    plan = Q.expand(["surfing"], sense, trip_profile, graph, max_subqueries=1, now=NOW)
    assert [s.query for s in plan.sub_queries] == ["surfing"]


def test_expand_uncapped_reaches_concept_neighbors(trip_profile, graph):
    sense = K.disambiguate("surfing", trip_profile, graph, NOW)
    plan = Q.expand(["surfing"], sense, trip_profile, graph, max_subqueries=16, now=NOW)
    queries = [s.query for s in plan.sub_queries]
    assert queries[-4:] == ["surf camps", "surf lessons", "surf shops", "surf tours"]


def test_expand_dedups_case_insensitively(graph):
    profile = P.ContextualProfile(user_id="u")
    profile.add_fact(P.AttributeFact("location", "Surf Camps", 1.0))
    sense = K.SenseChoice(term="surfing", chosen="concept:surfing_sport",
                          scores={}, rejected=[])
    plan = Q.expand(["surfing"], sense, profile, graph, max_subqueries=16, now=NOW)
    queries = [s.query.lower() for s in plan.sub_queries]
    assert len(queries) == len(set(queries))


@settings(max_examples=50)
@given(m=st.integers(min_value=1, max_value=12),
       terms=st.lists(st.sampled_from(["surfing", "waves", "auckland"]),
                      min_size=1, max_size=3, unique=True))
def test_expand_invariants(m, terms):
    from ctxsearch.ontology import load_ontology

    from .conftest import ONTOLOGY_PATH

    graph = load_ontology(ONTOLOGY_PATH)
    profile = P.ContextualProfile(user_id="u")
    profile.add_fact(P.AttributeFact("location", "piha", 2.0))
    profile.add_fact(P.AttributeFact("location", "raglan", 1.0))
    sense = K.SenseChoice(term=terms[0], chosen="concept:surfing_sport",
                          scores={}, rejected=["concept:web_browsing"])
    plan = Q.expand(terms, sense, profile, graph, max_subqueries=m, now=NOW)
    assert plan.sub_queries[0].query == " ".join(terms)
    assert plan.sub_queries[0].weight == 1.0
    assert len(plan.sub_queries) <= m
    assert all(0.0 < s.weight <= 1.0 for s in plan.sub_queries)


# --- execute --------------------------------------------------------------------


def _plan(queries, sense=None):
    subs = [Q.SubQuery(q, 1.0 if i == 0 else 0.8, "original" if i == 0 else "location")
            for i, q in enumerate(queries)]
    return Q.QueryPlan(plan_id="test", original=queries[0].split(), sense=sense,
                       sub_queries=subs, created_at=NOW)


def test_execute_cardinality():
    backend = FakeBackend({
        "a": [hit(f"d{i}", 10.0 - i) for i in range(30)],
        "b": [hit(f"e{i}", 5.0 - i) for i in range(30)],
    })
    result = Q.execute(_plan(["a", "b"]), backend, k_per_subquery=20)
    total = sum(len(hits) for _, hits in result.hits)
    assert total == 40
    assert [idx for idx, _ in result.hits] == [0, 1]


def test_execute_partial_failure_warns():
    backend = FakeBackend({"a": [hit("d1", 1.0)]}, fail_on={"b"})
    result = Q.execute(_plan(["a", "b"]), backend, 10)
    assert len(result.warnings) == 1
    assert "b" in result.warnings[0]
    assert [idx for idx, _ in result.hits] == [0]


def test_execute_empty_index_returns_empty_lists():
    backend = FakeBackend()
    result = Q.execute(_plan(["a", "b"]), backend, 10)
    assert result.warnings == []
    assert all(hits == [] for _, hits in result.hits)


def test_execute_all_failed_raises():
    backend = FakeBackend(fail_on={"*"})
    with pytest.raises(AllBackendsFailed):
        Q.execute(_plan(["a", "b"]), backend, 10)


# --- rank -----------------------------------------------------------------------


def test_rank_alpha_one_is_weighted_backend_order():
    plan = _plan(["a", "b"])
    raw = Q.ExecuteResult(hits=[
        (0, [hit("d1", 10.0), hit("d2", 5.0)]),
        (1, [hit("d3", 100.0)]),
    ])
    profile = P.ContextualProfile(user_id="u")
    got = Q.rank(raw, plan, profile, EMPTY_KB, alpha=1.0, now=NOW)
    assert [r.doc_id for r in got] == ["d1", "d3", "d2"]  # 1.0, 0.8, 0.5
    assert [round(r.final_score, 6) for r in got] == [1.0, 0.8, 0.5]
    assert all(r.context_score == 0.0 for r in got)


def test_rank_alpha_one_single_subquery_equals_backend_order(corpus_index):
    from ctxsearch.backend import LocalBackend, search

    plan = _plan(["surf beach auckland"])
    raw = Q.execute(plan, LocalBackend(corpus_index), 20)
    got = Q.rank(raw, plan, P.ContextualProfile(user_id="u"), EMPTY_KB, alpha=1.0, now=NOW)
    assert [r.doc_id for r in got] == \
        [d for d, _ in search(corpus_index, "surf beach auckland", 20)]


def test_rank_empty_profile_keeps_backend_order(corpus_index):
    from ctxsearch.backend import LocalBackend, search

    plan = _plan(["surfing"])
    raw = Q.execute(plan, LocalBackend(corpus_index), 20)
    got = Q.rank(raw, plan, P.ContextualProfile(user_id="u"), EMPTY_KB, alpha=0.6, now=NOW)
    assert [r.doc_id for r in got] == [d for d, _ in search(corpus_index, "surfing", 20)]


def test_rank_context_prefers_profile_matching_title(trip_profile):
    plan = _plan(["surfing"])
    raw = Q.ExecuteResult(hits=[(0, [
        hit("doc-surf", 2.0, title="auckland surf beaches guide"),
        hit("doc-web", 2.0, title="browser surfing tips"),
    ])])
    got = Q.rank(raw, plan, trip_profile, EMPTY_KB, alpha=0.6, now=NOW)
    assert [r.doc_id for r in got] == ["doc-surf", "doc-web"]

    # Oracle check: recompute both cosines from scratch.
    vec = P.term_vector(trip_profile, NOW)
    by_id = {r.doc_id: r for r in got}
    for title, doc_id in [("auckland surf beaches guide", "doc-surf"),
                          ("browser surfing tips", "doc-web")]:
        expected = brute_cosine(Counter(P.tokenize(title)), vec)
        assert by_id[doc_id].context_score == pytest.approx(expected, abs=1e-12)
    assert by_id["doc-surf"].context_score > by_id["doc-web"].context_score


def test_rank_demotes_rejected_sense_matches():
    sense = K.SenseChoice(term="surfing", chosen="concept:surfing_sport",
                          scores={}, rejected=["concept:web_browsing"])
    plan = _plan(["surfing"], sense=sense)
    kb = K.SharedKnowledgeBase()
    kb.cooccurrence["concept:web_browsing"] = {"browser": 3}
    kb.cooccurrence["concept:surfing_sport"] = {"waves": 3}
    raw = Q.ExecuteResult(hits=[(0, [
        hit("doc-web", 2.0, title="browser tricks"),
        hit("doc-surf", 2.0, title="waves today"),
        hit("doc-both", 2.0, title="browser waves"),
    ])])
    got = Q.rank(raw, plan, P.ContextualProfile(user_id="u"), kb, alpha=1.0, now=NOW)
    by_id = {r.doc_id: r for r in got}
    assert by_id["doc-web"].demoted and by_id["doc-web"].final_score == pytest.approx(0.5)
    assert not by_id["doc-surf"].demoted and by_id["doc-surf"].final_score == pytest.approx(1.0)
    assert not by_id["doc-both"].demoted  # chosen-sense term present: no demotion


def test_rank_respects_min_support_for_demotion():
    sense = K.SenseChoice(term="surfing", chosen="concept:surfing_sport",
                          scores={}, rejected=["concept:web_browsing"])
    plan = _plan(["surfing"], sense=sense)
    kb = K.SharedKnowledgeBase(min_support=2)
    kb.cooccurrence["concept:web_browsing"] = {"browser": 1}  # below support
    raw = Q.ExecuteResult(hits=[(0, [hit("doc-web", 2.0, title="browser tricks")])])
    got = Q.rank(raw, plan, P.ContextualProfile(user_id="u"), kb, alpha=1.0, now=NOW)
    assert not got[0].demoted


@given(st.permutations(list(range(4))))
def test_rank_invariant_under_raw_permutation(order):
    plan = _plan(["a", "b", "c", "d"])
    hits_by_idx = [
        (0, [hit("d1", 3.0), hit("d2", 1.0)]),
        (1, [hit("d2", 9.0)]),
        (2, [hit("d3", 4.0), hit("d1", 4.0)]),
        (3, []),
    ]
    profile = P.ContextualProfile(user_id="u")
    profile.add_term_evidence("d1", 1.0, NOW)
    base = Q.rank(Q.ExecuteResult(hits=list(hits_by_idx)), plan, profile, EMPTY_KB,
                  alpha=0.7, now=NOW)
    shuffled = Q.rank(Q.ExecuteResult(hits=[hits_by_idx[i] for i in order]), plan,
                      profile, EMPTY_KB, alpha=0.7, now=NOW)
    assert base == shuffled


def test_rank_backend_norm_is_max_over_subqueries():
    plan = _plan(["a", "b"])
    raw = Q.ExecuteResult(hits=[
        (0, [hit("d1", 5.0), hit("d2", 10.0)]),   # d1 norm 0.5 * w 1.0
        (1, [hit("d1", 8.0), hit("d3", 2.0)]),    # d1 norm 1.0 * w 0.8
    ])
    got = Q.rank(raw, plan, P.ContextualProfile(user_id="u"), EMPTY_KB, alpha=1.0, now=NOW)
    by_id = {r.doc_id: r for r in got}
    assert by_id["d1"].backend_score_norm == pytest.approx(0.8)
    assert by_id["d1"].sub_query_ids == [0, 1]


# --- persistence / reactivation ---------------------------------------------------


def test_plan_json_round_trip(trip_profile, graph):
    sense = K.disambiguate("surfing", trip_profile, graph, NOW)
    plan = Q.expand(["surfing"], sense, trip_profile, graph, now=NOW)
    again = Q.plan_from_json(Q.plan_to_json(plan))
    assert again == plan


def test_reactivated_plan_reproduces_identical_results(tmp_path, trip_profile, graph,
                                                       corpus_index):
    from ctxsearch.backend import LocalBackend

    backend = LocalBackend(corpus_index)
    sense = K.disambiguate("surfing", trip_profile, graph, NOW)
    plan = Q.expand(["surfing"], sense, trip_profile, graph, now=NOW)
    first = Q.rank(Q.execute(plan, backend, 20), plan, trip_profile, EMPTY_KB,
                   alpha=0.6, now=NOW)

    Q.save_plan(plan, str(tmp_path))
    reloaded = Q.load_plan(str(tmp_path), plan.plan_id)
    second = Q.rank(Q.execute(reloaded, backend, 20), reloaded, trip_profile, EMPTY_KB,
                    alpha=0.6, now=NOW)
    assert first == second


def test_plan_id_is_content_hash(trip_profile, graph):
    sense = K.disambiguate("surfing", trip_profile, graph, NOW)
    p1 = Q.expand(["surfing"], sense, trip_profile, graph, now=NOW)
    p2 = Q.expand(["surfing"], sense, trip_profile, graph, now=NOW)
    assert p1.plan_id == p2.plan_id
