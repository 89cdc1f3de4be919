from datetime import datetime, timedelta, timezone

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctxsearch import knowledge as K
from ctxsearch import profile as P
from ctxsearch.errors import NoSense, UnknownConcept, UnknownKind
from ctxsearch.ontology import load_ontology

from .conftest import ONTOLOGY_PATH

NOW = datetime(2026, 8, 8, 12, 0, tzinfo=timezone.utc)
T0 = datetime(2026, 8, 1, tzinfo=timezone.utc)


def make_digest(user_id, concepts, terms, version=1):
    entry = lambda w: P.WeightEntry(w, T0)  # noqa: E731
    return P.ProfileDigest(
        user_id=user_id,
        version=version,
        term_weights={t: entry(w) for t, w in terms.items()},
        concept_weights={c: entry(w) for c, w in concepts.items()},
    )


# --- disambiguation -----------------------------------------------------------


def test_trip_profile_disambiguates_to_sport(trip_profile, graph):
    choice = K.disambiguate("surfing", trip_profile, graph, NOW)
    assert choice.chosen == "concept:surfing_sport"
    assert choice.rejected == ["concept:web_browsing"]
    assert choice.scores["concept:surfing_sport"] > choice.scores["concept:web_browsing"]


def test_empty_profile_falls_back_to_priority(graph):
    empty = P.ContextualProfile(user_id="fresh")
    choice = K.disambiguate("surfing", empty, graph, NOW)
    assert choice.chosen == "concept:web_browsing"
    assert choice.scores["concept:web_browsing"] == pytest.approx(0.001)
    assert choice.scores["concept:surfing_sport"] == pytest.approx(0.0005)


def test_single_sense_term_wins_regardless_of_profile(trip_profile, graph):
    choice = K.disambiguate("browsing", trip_profile, graph, NOW)
    assert choice.chosen == "concept:web_browsing"
    assert choice.rejected == []


def test_no_sense_raises(graph):
    with pytest.raises(NoSense):
        K.disambiguate("qwxyz", P.ContextualProfile(user_id="u"), graph, NOW)


def test_disambiguate_is_deterministic(trip_profile, graph):
    first = K.disambiguate("surfing", trip_profile, graph, NOW)
    second = K.disambiguate("surfing", trip_profile, graph, NOW)
    assert first == second


@given(st.floats(min_value=0.125, max_value=8.0, allow_nan=False))
def test_disambiguate_scale_invariant(lam):
    graph = load_ontology(ONTOLOGY_PATH)
    base = P.ContextualProfile(user_id="u")
    for term, weight in [("waves", 2.0), ("auckland", 3.0), ("beach", 1.0)]:
        base.add_term_evidence(term, weight, T0)
    scaled = P.ContextualProfile(user_id="u")
    for term, entry in base.term_weights.items():
        scaled.add_term_evidence(term, entry.weight * lam, T0)
    assert K.disambiguate("surfing", base, graph, NOW).chosen == \
        K.disambiguate("surfing", scaled, graph, NOW).chosen


# --- knowledge base ------------------------------------------------------------


def test_update_knowledge_first_contribution():
    kb = K.SharedKnowledgeBase()
    digest = make_digest("u1", {"concept:surfing_sport": 1.0}, {"auckland": 0.5, "surf": 0.9})
    K.update_knowledge(kb, digest, NOW)
    assert kb.cooccurrence["concept:surfing_sport"] == {"auckland": 1, "surf": 1}


def test_update_knowledge_same_user_never_double_counts():
    kb = K.SharedKnowledgeBase()
    K.update_knowledge(kb, make_digest("u1", {"concept:surfing_sport": 1.0},
                                       {"surf": 0.9}, version=1), NOW)
    K.update_knowledge(kb, make_digest("u1", {"concept:surfing_sport": 1.0},
                                       {"surf": 0.9, "waves": 2.0}, version=5), NOW)
    assert kb.cooccurrence["concept:surfing_sport"] == {"surf": 1}


def test_update_knowledge_distinct_users_count():
    kb = K.SharedKnowledgeBase()
    for user in ("u1", "u2"):
        K.update_knowledge(kb, make_digest(user, {"concept:surfing_sport": 1.0},
                                           {"surf": 0.9}), NOW)
    assert kb.cooccurrence["concept:surfing_sport"]["surf"] == 2


def test_update_knowledge_threshold():
    kb = K.SharedKnowledgeBase()
    digest = make_digest("u1", {"concept:surfing_sport": 0.05},
                         {"surf": 0.9, "faint": 0.05})
    K.update_knowledge(kb, digest, NOW)
    assert kb.cooccurrence == {}  # concept weight below 0.1 contributes nothing
    digest2 = make_digest("u2", {"concept:surfing_sport": 0.5},
                          {"surf": 0.9, "faint": 0.05})
    K.update_knowledge(kb, digest2, NOW)
    assert kb.cooccurrence["concept:surfing_sport"] == {"surf": 1}


@given(st.lists(st.integers(min_value=1, max_value=9), min_size=1, max_size=6))
def test_update_knowledge_idempotent_per_user(versions):
    kb = K.SharedKnowledgeBase()
    for v in versions:
        K.update_knowledge(kb, make_digest("u1", {"concept:x_any": 1.0},
                                           {"surf": 1.0}, version=v), NOW)
    assert len(kb.contributors["concept:x_any"]) == 1
    assert kb.cooccurrence["concept:x_any"]["surf"] == 1


def test_associated_terms_threshold_and_order():
    kb = K.SharedKnowledgeBase(min_support=2)
    kb.cooccurrence["concept:c"] = {"rare": 1, "surf": 3, "wave": 2, "apex": 2}
    assert K.associated_terms(kb, "concept:c") == [("surf", 3), ("apex", 2), ("wave", 2)]


def test_associated_terms_empty_kb():
    assert K.associated_terms(K.SharedKnowledgeBase(), "concept:c") == []


def test_kb_json_round_trip():
    kb = K.SharedKnowledgeBase(min_support=2)
    kb.cooccurrence["concept:c"] = {"surf": 3}
    kb.contributors["concept:c"] = {"u2", "u1"}
    again = K.kb_from_json(K.kb_to_json(kb))
    assert again.cooccurrence == kb.cooccurrence
    assert again.contributors == kb.contributors
    assert again.min_support == 2


# --- suggestions ------------------------------------------------------------------


def test_suggestions_default_order_matches_scenario(graph):
    fresh = P.ContextualProfile(user_id="u")
    got = K.suggest("concept:surfing_sport", fresh, graph)
    assert [s.label for s in got] == ["Check weather", "Surfing guide", "See surfing pictures"]
    assert all(s.score == 1.0 for s in got)


def test_suggestions_after_three_dismissals(graph):
    profile = P.ContextualProfile(user_id="u")
    for _ in range(3):
        K.apply_feedback(profile, K.FeedbackEvent(
            user_id="u", kind="suggestion_dismiss", target="concept:check_weather"))
    got = K.suggest("concept:surfing_sport", profile, graph)
    assert got[-1].concept_id == "concept:check_weather"
    assert got[-1].score == pytest.approx(0.512, abs=1e-12)


def test_suggestions_empty_without_edges(graph):
    got = K.suggest("concept:web_browsing", P.ContextualProfile(user_id="u"), graph)
    assert got == []


def test_suggest_unknown_concept(graph):
    with pytest.raises(UnknownConcept):
        K.suggest("concept:ghost", P.ContextualProfile(user_id="u"), graph)


def test_suggest_caps_at_three(graph):
    got = K.suggest("concept:surfing_sport", P.ContextualProfile(user_id="u"), graph)
    assert len(got) <= 3
    assert all(s.score > 0 for s in got)


# --- feedback ------------------------------------------------------------------------


def test_accept_scales_preference():
    profile = P.ContextualProfile(user_id="u")
    K.apply_feedback(profile, K.FeedbackEvent("u", "suggestion_accept", "concept:c"))
    assert profile.preference_weights["concept:c"] == pytest.approx(1.2)


def test_dismiss_scales_preference():
    profile = P.ContextualProfile(user_id="u")
    K.apply_feedback(profile, K.FeedbackEvent("u", "suggestion_dismiss", "concept:c"))
    assert profile.preference_weights["concept:c"] == pytest.approx(0.8)


def test_preference_clamped_at_ten():
    profile = P.ContextualProfile(user_id="u")
    profile.preference_weights["concept:c"] = 9.5
    K.apply_feedback(profile, K.FeedbackEvent("u", "suggestion_accept", "concept:c"))
    assert profile.preference_weights["concept:c"] == 10.0


def test_preference_clamped_at_floor():
    profile = P.ContextualProfile(user_id="u")
    profile.preference_weights["concept:c"] = 0.11
    K.apply_feedback(profile, K.FeedbackEvent("u", "suggestion_dismiss", "concept:c"))
    assert profile.preference_weights["concept:c"] == pytest.approx(0.1)


def test_accept_then_dismiss_is_096():
    profile = P.ContextualProfile(user_id="u")
    profile.preference_weights["concept:c"] = 2.0
    K.apply_feedback(profile, K.FeedbackEvent("u", "suggestion_accept", "concept:c"))
    K.apply_feedback(profile, K.FeedbackEvent("u", "suggestion_dismiss", "concept:c"))
    assert abs(profile.preference_weights["concept:c"] - 0.96 * 2.0) <= 1e-12


def test_result_click_adds_title_terms():
    profile = P.ContextualProfile(user_id="u")
    K.apply_feedback(profile, K.FeedbackEvent(
        "u", "result_click", "doc-1", title="Auckland surf beaches guide", ts=T0))
    for term in ("auckland", "surf", "beaches", "guide"):
        assert profile.term_weights[term].weight == pytest.approx(0.5)


def test_rating_adds_value_and_floors_at_zero():
    profile = P.ContextualProfile(user_id="u")
    profile.add_term_evidence("surf", 0.3, T0)
    K.apply_feedback(profile, K.FeedbackEvent(
        "u", "rating", "doc-1", value=-1.0, title="surf", ts=T0))
    assert profile.term_weights["surf"].weight == 0.0
    K.apply_feedback(profile, K.FeedbackEvent(
        "u", "rating", "doc-1", value=0.75, title="surf", ts=T0))
    assert profile.term_weights["surf"].weight == pytest.approx(0.75)


def test_rating_out_of_range_rejected():
    profile = P.ContextualProfile(user_id="u")
    with pytest.raises(ValueError):
        K.apply_feedback(profile, K.FeedbackEvent(
            "u", "rating", "doc-1", value=2.0, title="surf", ts=T0))


def test_unknown_kind_rejected():
    with pytest.raises(UnknownKind):
        K.apply_feedback(P.ContextualProfile(user_id="u"),
                         K.FeedbackEvent("u", "shrug", "doc-1"))


def test_feedback_bumps_version():
    profile = P.ContextualProfile(user_id="u")
    K.apply_feedback(profile, K.FeedbackEvent("u", "suggestion_accept", "concept:c"))
    assert profile.version == 1
