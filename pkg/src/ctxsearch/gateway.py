"""Deployment glue: configuration, the service facade, and persistence layout.

The service bundles the profile store, ontology registry, backends, shared
knowledge base and query pipeline behind the operations the HTTP layer and
CLI expose. All timestamps flow through an injectable clock so tests (and
the acceptance suite) can pin time. Every mutation is persisted with an
atomic replace, making a restarted server indistinguishable from one that
never stopped.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Callable, Optional

from . import backend as backend_mod
from . import knowledge as knowledge_mod
from . import profile as profile_mod
from . import queryflow
from .crawlsim import server_upsert
from .errors import (
    AllBackendsFailed,
    ConfigError,
    CtxSearchError,
    DigestParse,
    EmptyQuery,
    NoSense,
    UnknownKind,
)
from .ontology import OntologyGraph, load_ontology

ENV_PREFIX = "CTXSEARCH_"


@dataclass
class BackendSpec:
    kind: str  # local | external
    corpus: Optional[str] = None
    index: Optional[str] = None
    endpoint: Optional[str] = None
    deadline: float = 5.0


@dataclass
class ServerConfig:
    data_dir: str = "data"
    host: str = "127.0.0.1"
    port: int = 8080
    ontologies: dict[str, str] = field(default_factory=dict)
    backends: dict[str, BackendSpec] = field(default_factory=dict)
    default_ontology: str = ""
    default_backend: str = ""
    alpha: float = queryflow.DEFAULT_ALPHA
    max_subqueries: int = queryflow.DEFAULT_MAX_SUBQUERIES
    k_per_subquery: int = queryflow.DEFAULT_K_PER_SUBQUERY
    half_life_hours: float = 168.0
    min_support: int = 1
    min_digest_weight: float = profile_mod.DEFAULT_MIN_DIGEST_WEIGHT
    default_storage_mode: str = "local"
    record_sense_evidence: bool = True
    stemming: bool = False
    kind_multipliers: Optional[dict[str, float]] = None
    static_dir: Optional[str] = None

    @property
    def half_life(self) -> timedelta:
        return timedelta(hours=self.half_life_hours)

    def validate(self) -> None:
        if not self.ontologies:
            raise ConfigError("at least one ontology must be registered")
        if not self.backends:
            raise ConfigError("at least one backend must be registered")
        if self.default_ontology not in self.ontologies:
            raise ConfigError(f"default ontology {self.default_ontology!r} is not registered")
        if self.default_backend not in self.backends:
            raise ConfigError(f"default backend {self.default_backend!r} is not registered")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must be in [0, 1]")
        if self.max_subqueries < 1:
            raise ConfigError("max_subqueries must be >= 1")
        if self.k_per_subquery < 1:
            raise ConfigError("k_per_subquery must be >= 1")
        if self.half_life_hours <= 0:
            raise ConfigError("half_life_hours must be positive")
        if self.min_support < 1:
            raise ConfigError("min_support must be >= 1")
        if self.default_storage_mode not in ("local", "server"):
            raise ConfigError("default_storage_mode must be 'local' or 'server'")
        if self.kind_multipliers is not None:
            unknown = set(self.kind_multipliers) - profile_mod.EVENT_KINDS
            if unknown:
                raise ConfigError(f"kind_multipliers for unknown event kinds: {sorted(unknown)}")
            if any(v < 0 for v in self.kind_multipliers.values()):
                raise ConfigError("kind_multipliers must be >= 0")


def _resolve(base_dir: str, path: str) -> str:
    return path if os.path.isabs(path) else os.path.normpath(os.path.join(base_dir, path))


def load_config(path: str, overrides: Optional[dict] = None) -> ServerConfig:
    """Read a JSON config file; relative paths resolve against the file's directory.

    Environment variables CTXSEARCH_<KEY> (e.g. CTXSEARCH_DATA_DIR,
    CTXSEARCH_ALPHA) override file values; explicit `overrides` win over both.
    """
    with open(path, encoding="utf-8") as handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path}: invalid JSON: {exc}") from exc

    base_dir = os.path.dirname(os.path.abspath(path))
    config = ServerConfig()
    simple_keys = {
        "host": str, "port": int, "alpha": float, "max_subqueries": int,
        "k_per_subquery": int, "half_life_hours": float, "min_support": int,
        "min_digest_weight": float, "default_storage_mode": str,
        "default_ontology": str, "default_backend": str,
        "record_sense_evidence": bool, "stemming": bool,
    }
    for key, cast in simple_keys.items():
        if key in raw:
            setattr(config, key, cast(raw[key]))
    if "kind_multipliers" in raw:
        config.kind_multipliers = {k: float(v) for k, v in raw["kind_multipliers"].items()}
    if "data_dir" in raw:
        config.data_dir = _resolve(base_dir, str(raw["data_dir"]))
    if "static_dir" in raw:
        config.static_dir = _resolve(base_dir, str(raw["static_dir"]))

    for name, onto_path in (raw.get("ontologies") or {}).items():
        config.ontologies[name] = _resolve(base_dir, onto_path)
    for name, spec in (raw.get("backends") or {}).items():
        kind = spec.get("kind", "local")
        config.backends[name] = BackendSpec(
            kind=kind,
            corpus=_resolve(base_dir, spec["corpus"]) if spec.get("corpus") else None,
            index=_resolve(base_dir, spec["index"]) if spec.get("index") else None,
            endpoint=spec.get("endpoint"),
            deadline=float(spec.get("deadline", 5.0)),
        )

    if not config.default_ontology and config.ontologies:
        config.default_ontology = sorted(config.ontologies)[0]
    if not config.default_backend and config.backends:
        config.default_backend = sorted(config.backends)[0]

    def parse_bool(text: str) -> bool:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")

    env_casts = {
        "DATA_DIR": ("data_dir", str), "HOST": ("host", str), "PORT": ("port", int),
        "ALPHA": ("alpha", float), "MAX_SUBQUERIES": ("max_subqueries", int),
        "K_PER_SUBQUERY": ("k_per_subquery", int),
        "HALF_LIFE_HOURS": ("half_life_hours", float),
        "MIN_SUPPORT": ("min_support", int),
        "MIN_DIGEST_WEIGHT": ("min_digest_weight", float),
        "DEFAULT_STORAGE_MODE": ("default_storage_mode", str),
        "STEMMING": ("stemming", parse_bool),
    }
    for env_key, (attr, cast) in env_casts.items():
        value = os.environ.get(ENV_PREFIX + env_key)
        if value is not None:
            try:
                setattr(config, attr, cast(value))
            except ValueError as exc:
                raise ConfigError(f"bad env override {ENV_PREFIX}{env_key}={value!r}") from exc

    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(config, key, value)

    config.validate()
    return config


def _utc_now() -> datetime:
    return datetime.now(timezone.utc)


class ContextService:
    """All server-side operations behind the HTTP endpoints and the CLI.

    Concurrency contract: profile mutations are serialized per user, the
    knowledge base and the crawler registry each behind one lock; reads work
    on whatever consistent snapshot the persisted JSON file held.
    """

    def __init__(self, config: ServerConfig, clock: Optional[Callable[[], datetime]] = None):
        config.validate()
        self.config = config
        self.clock = clock or _utc_now
        os.makedirs(config.data_dir, exist_ok=True)

        self.graphs: dict[str, OntologyGraph] = {
            name: load_ontology(path) for name, path in config.ontologies.items()
        }
        self.backends = {name: self._make_backend(spec)
                         for name, spec in config.backends.items()}
        self.kb = knowledge_mod.load_kb(self._kb_path(), config.min_support)
        self.registry = self._load_registry()
        self.digest_store = self._load_digest_store()

        self._locks_guard = threading.Lock()
        self._user_locks: dict[str, threading.Lock] = {}
        self._kb_lock = threading.Lock()
        self._registry_lock = threading.Lock()

    # -- wiring -----------------------------------------------------------

    @staticmethod
    def _make_backend(spec: BackendSpec):
        if spec.kind == "local":
            if spec.index and os.path.exists(spec.index):
                index = backend_mod.load_index(spec.index)
            elif spec.corpus:
                index = backend_mod.build_index(backend_mod.read_corpus(spec.corpus))
            else:
                raise ConfigError("local backend needs a corpus or a prebuilt index path")
            return backend_mod.LocalBackend(index)
        if spec.kind == "external":
            if not spec.endpoint:
                raise ConfigError("external backend needs an endpoint")
            return backend_mod.ExternalBackend(endpoint=spec.endpoint, deadline=spec.deadline)
        raise ConfigError(f"unknown backend kind {spec.kind!r}")

    @property
    def graph(self) -> OntologyGraph:
        return self.graphs[self.config.default_ontology]

    @property
    def backend(self):
        return self.backends[self.config.default_backend]

    def _kb_path(self) -> str:
        return os.path.join(self.config.data_dir, "knowledge.json")

    def _registry_path(self) -> str:
        return os.path.join(self.config.data_dir, "registry.json")

    def _digest_store_path(self) -> str:
        return os.path.join(self.config.data_dir, "digests.json")

    def _plans_dir(self) -> str:
        return os.path.join(self.config.data_dir, "plans")

    def _load_registry(self) -> dict[str, dict]:
        path = self._registry_path()
        if not os.path.exists(path):
            return {}
        with open(path, encoding="utf-8") as handle:
            return json.load(handle)

    def _load_digest_store(self) -> dict[str, dict]:
        path = self._digest_store_path()
        if not os.path.exists(path):
            return {}
        with open(path, encoding="utf-8") as handle:
            return json.load(handle)

    def _user_lock(self, user_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._user_locks.setdefault(user_id, threading.Lock())

    def _profile(self, user_id: str) -> profile_mod.ContextualProfile:
        found = profile_mod.load_profile(self.config.data_dir, user_id)
        return found if found is not None else profile_mod.ContextualProfile(user_id=user_id)

    # -- operations ---------------------------------------------------------

    def search(self, user_id: str, query_text: str, alpha: Optional[float] = None,
               max_subqueries: Optional[int] = None) -> dict:
        """Full pipeline: parse, disambiguate, expand, execute, rank, suggest."""
        now = self.clock()
        half_life = self.config.half_life
        alpha = self.config.alpha if alpha is None else alpha
        max_subqueries = self.config.max_subqueries if max_subqueries is None else max_subqueries

        terms = queryflow.parse_query(query_text)
        profile = self._profile(user_id)

        sense = None
        for term in terms:
            try:
                sense = knowledge_mod.disambiguate(term, profile, self.graph, now, half_life)
                break
            except NoSense:
                continue

        plan = queryflow.expand(terms, sense, profile, self.graph,
                                max_subqueries=max_subqueries, now=now)
        raw = queryflow.execute(plan, self.backend, self.config.k_per_subquery)
        results = queryflow.rank(raw, plan, profile, self.kb, alpha=alpha,
                                 now=now, half_life=half_life)
        suggestions = (knowledge_mod.suggest(sense.chosen, profile, self.graph)
                       if sense is not None else [])

        queryflow.save_plan(plan, self._plans_dir())
        if sense is not None and self.config.record_sense_evidence:
            with self._user_lock(user_id):
                current = self._profile(user_id)
                current.add_concept_evidence(sense.chosen, 1.0, now, half_life)
                current.version += 1
                profile_mod.save_profile(current, self.config.data_dir)

        return {
            "user_id": user_id,
            "query": query_text,
            "plan_id": plan.plan_id,
            "sense": None if sense is None else {
                "term": sense.term,
                "chosen": sense.chosen,
                "rejected": sense.rejected,
                "scores": sense.scores,
            },
            "sub_queries": [
                {"query": s.query, "weight": s.weight, "origin": s.origin}
                for s in plan.sub_queries
            ],
            "results": [
                {
                    "doc_id": r.doc_id,
                    "title": r.title,
                    "snippet": r.snippet,
                    "backend_score_norm": r.backend_score_norm,
                    "context_score": r.context_score,
                    "final_score": r.final_score,
                    "sub_query_ids": r.sub_query_ids,
                    "demoted": r.demoted,
                }
                for r in results
            ],
            "suggestions": [
                {"concept_id": s.concept_id, "label": s.label, "score": s.score}
                for s in suggestions
            ],
            "warnings": list(raw.warnings),
        }

    def ingest_events(self, user_id: str, records: list[dict]) -> dict:
        events = [profile_mod.ActivityEvent.from_record(r) for r in records]
        multipliers = None
        if self.config.kind_multipliers:
            multipliers = {**profile_mod.KIND_MULTIPLIERS, **self.config.kind_multipliers}
        with self._user_lock(user_id):
            profile = self._profile(user_id)
            report = profile_mod.ingest_events(profile, events,
                                               half_life=self.config.half_life,
                                               kind_multipliers=multipliers,
                                               stem=self.config.stemming)
            profile_mod.save_profile(profile, self.config.data_dir)
        return {
            "user_id": user_id,
            "version": profile.version,
            "ingested": report.ingested,
            "skipped_seen": report.skipped_seen,
            "malformed": [e.event_id for e in report.malformed],
        }

    def apply_feedback(self, record: dict) -> dict:
        user_id = record.get("user_id", "")
        event = knowledge_mod.FeedbackEvent(
            user_id=user_id,
            kind=record.get("kind", ""),
            target=record.get("target", ""),
            value=record.get("value"),
            title=record.get("title", ""),
            ts=record.get("ts") or profile_mod.format_ts(self.clock()),
        )
        with self._user_lock(user_id):
            profile = profile_mod.load_profile(self.config.data_dir, user_id)
            if profile is None:
                raise KeyError(user_id)
            knowledge_mod.apply_feedback(profile, event, half_life=self.config.half_life)
            profile_mod.save_profile(profile, self.config.data_dir)
        return {"user_id": user_id, "version": profile.version}

    def register(self, user_id: str, storage_mode: str = "server") -> dict:
        if storage_mode not in ("local", "server"):
            raise ValueError(f"bad storage mode {storage_mode!r}")
        with self._registry_lock:
            self.registry[user_id] = {"registered": True, "storage_mode": storage_mode}
            profile_mod.atomic_write(self._registry_path(),
                                     json.dumps(self.registry, sort_keys=True))
        return {"user_id": user_id, "registered": True, "storage_mode": storage_mode}

    def accept_digest(self, user_id: str, digest_body) -> dict:
        entry = self.registry.get(user_id)
        if not entry or not entry.get("registered") or entry.get("storage_mode") != "server":
            raise PermissionError(user_id)
        digest = profile_mod.digest_from_json(digest_body)
        if digest.user_id != user_id:
            raise DigestParse(f"digest user {digest.user_id!r} does not match {user_id!r}")
        with self._kb_lock:
            stored = self.digest_store.get(user_id)
            payload = {"user_id": user_id, "version": digest.version,
                       "digest": profile_mod.digest_to_json(digest)}
            server_upsert(self.digest_store, payload)
            knowledge_mod.update_knowledge(self.kb, digest, self.clock())
            knowledge_mod.save_kb(self.kb, self._kb_path())
            profile_mod.atomic_write(self._digest_store_path(),
                                     json.dumps(self.digest_store, sort_keys=True))
            accepted = stored is None or digest.version > int(stored["version"])
        return {"user_id": user_id, "stored_version": int(self.digest_store[user_id]["version"]),
                "accepted": accepted}

    def profile_view(self, user_id: str) -> dict:
        profile = profile_mod.load_profile(self.config.data_dir, user_id)
        if profile is None:
            raise KeyError(user_id)
        return {
            "user_id": profile.user_id,
            "version": profile.version,
            "term_weights": {
                t: {"weight": e.weight, "last_update": profile_mod.format_ts(e.last_update)}
                for t, e in sorted(profile.term_weights.items())
            },
            "concept_weights": {
                c: {"weight": e.weight, "last_update": profile_mod.format_ts(e.last_update)}
                for c, e in sorted(profile.concept_weights.items())
            },
            "facts": [
                {"kind": f.kind, "value": f.value, "weight": f.weight}
                for f in profile.fact_list()
            ],
            "preference_weights": dict(sorted(profile.preference_weights.items())),
        }

    def reactivate_plan(self, plan_id: str, user_id: str,
                        alpha: Optional[float] = None) -> list[queryflow.RankedResult]:
        """Re-execute a persisted query plan against the current index."""
        plan = queryflow.load_plan(self._plans_dir(), plan_id)
        profile = self._profile(user_id)
        raw = queryflow.execute(plan, self.backend, self.config.k_per_subquery)
        return queryflow.rank(raw, plan, profile, self.kb,
                              alpha=self.config.alpha if alpha is None else alpha,
                              now=self.clock(), half_life=self.config.half_life)
