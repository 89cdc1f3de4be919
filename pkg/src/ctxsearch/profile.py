"""Adaptive-agent core: activity ingestion and the decayed contextual profile.

A profile is a bag of evidence weights over terms and concepts plus typed
facts (locations, trip dates). Evidence decays with a configurable
half-life; decay is lazy: each entry stores (weight, last_update) and is
re-anchored on read or update, so no background sweep is needed. Ingesting
is idempotent per event id within a bounded FIFO window.
"""

from __future__ import annotations

import json
import math
import os
import re
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Iterable, Iterator, Optional

from .errors import ClockSkew, DigestParse, MalformedEvent
from .stopwords import STOPWORDS

EVENT_APPS = frozenset({"browser", "editor", "email", "other"})
EVENT_KINDS = frozenset({"visit", "edit", "send", "booking"})
FACT_KINDS = frozenset({"location", "date_start", "date_end"})

# Deliberate actions are stronger context signals than passive ones.
KIND_MULTIPLIERS = {"visit": 1.0, "send": 1.0, "edit": 1.5, "booking": 2.0}

DEFAULT_HALF_LIFE = timedelta(hours=168)  # one week
DEFAULT_MIN_DIGEST_WEIGHT = 0.01
SEEN_EVENT_CAP = 10_000

# Letters and digits only; underscore and everything else separates.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str, *, drop_stopwords: bool = True, stem: bool = False) -> list[str]:
    """Split text into lowercase terms.

    Splits on any non-letter/non-digit character, drops tokens shorter than
    two characters and (by default) stopwords. Order and duplicates are
    preserved. `stem=True` applies a light plural stripper (s-stemmer);
    it is off by default because ontology labels are matched exactly.
    """
    tokens = _TOKEN_RE.findall(text.lower())
    out = []
    for tok in tokens:
        if len(tok) < 2:
            continue
        if drop_stopwords and tok in STOPWORDS:
            continue
        out.append(s_stem(tok) if stem else tok)
    return out


def s_stem(token: str) -> str:
    """Harman s-stemmer: conservative plural stripping, nothing more."""
    if len(token) <= 3 or not token.endswith("s"):
        return token
    if token.endswith("ies") and not token.endswith(("eies", "aies")):
        return token[:-3] + "y"
    if token.endswith("es") and not token.endswith(("aes", "ees", "oes")):
        return token[:-1]
    if token.endswith(("us", "ss")):
        return token
    return token[:-1]


def parse_ts(value) -> datetime:
    """Parse an ISO-8601 timestamp to an aware UTC datetime.

    Raises ValueError on anything unparseable; naive inputs are taken as UTC.
    """
    if isinstance(value, datetime):
        ts = value
    elif isinstance(value, str):
        ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    else:
        raise ValueError(f"not a timestamp: {value!r}")
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_ts(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def decayed_weight(weight: float, last_update: datetime, now: datetime,
                   half_life: timedelta = DEFAULT_HALF_LIFE) -> float:
    """Evidence weight after half-life decay: weight x 2^(-(now-last)/H)."""
    if half_life <= timedelta(0):
        raise ValueError("half_life must be positive")
    if now < last_update:
        raise ClockSkew(f"now {format_ts(now)} precedes last_update {format_ts(last_update)}")
    return weight * 2.0 ** (-((now - last_update) / half_life))


def _decay_factor(early: datetime, late: datetime, half_life: timedelta) -> float:
    return 2.0 ** (-((late - early) / half_life))


@dataclass
class AttributeFact:
    """One structured fact: a location string or an ISO-8601 trip date."""

    kind: str
    value: str
    weight: float = 1.0

    def validate(self) -> None:
        if self.kind not in FACT_KINDS:
            raise ValueError(f"bad fact kind {self.kind!r}")
        if self.kind in ("date_start", "date_end"):
            parse_ts(self.value)  # ValueError if not a date
        if not isinstance(self.weight, (int, float)) or self.weight < 0:
            raise ValueError(f"fact weight must be >= 0, got {self.weight!r}")


@dataclass
class ActivityEvent:
    """One observed desktop action replayed from an activity log."""

    id: str
    ts: object  # ISO string or datetime; validated at ingest time
    app: str
    kind: str
    text: str = ""
    uri: Optional[str] = None
    facts: list[AttributeFact] = field(default_factory=list)

    @classmethod
    def from_record(cls, record: dict) -> "ActivityEvent":
        facts = [
            AttributeFact(kind=f.get("kind", ""), value=f.get("value", ""),
                          weight=float(f.get("weight", 1.0)))
            for f in record.get("facts") or []
        ]
        return cls(
            id=str(record.get("id", "")),
            ts=record.get("ts", ""),
            app=record.get("app", "other"),
            kind=record.get("kind", ""),
            text=record.get("text", "") or "",
            uri=record.get("uri"),
            facts=facts,
        )

    def validated_ts(self) -> datetime:
        """Return the event timestamp, raising MalformedEvent on any bad field."""
        if not self.id:
            raise MalformedEvent(self.id, "empty id")
        if self.kind not in EVENT_KINDS:
            raise MalformedEvent(self.id, f"bad kind {self.kind!r}")
        if self.app not in EVENT_APPS:
            raise MalformedEvent(self.id, f"bad app {self.app!r}")
        try:
            ts = parse_ts(self.ts)
        except ValueError as exc:
            raise MalformedEvent(self.id, f"bad timestamp: {exc}") from exc
        for fact in self.facts:
            try:
                fact.validate()
            except ValueError as exc:
                raise MalformedEvent(self.id, f"bad fact: {exc}") from exc
        return ts


@dataclass
class WeightEntry:
    weight: float
    last_update: datetime


@dataclass
class ContextualProfile:
    """Versioned, time-decayed evidence vectors for one user.

    `version` increases exactly once per mutating call; re-ingesting already
    seen events leaves both the weights and the version untouched.
    """

    user_id: str
    version: int = 0
    term_weights: dict[str, WeightEntry] = field(default_factory=dict)
    concept_weights: dict[str, WeightEntry] = field(default_factory=dict)
    facts: dict[tuple[str, str], float] = field(default_factory=dict)
    preference_weights: dict[str, float] = field(default_factory=dict)
    seen_event_ids: dict[str, None] = field(default_factory=dict)

    # -- evidence ------------------------------------------------------

    def add_term_evidence(self, term: str, amount: float, ts: datetime,
                          half_life: timedelta = DEFAULT_HALF_LIFE) -> None:
        self._add_evidence(self.term_weights, term, amount, ts, half_life)

    def add_concept_evidence(self, concept_id: str, amount: float, ts: datetime,
                             half_life: timedelta = DEFAULT_HALF_LIFE) -> None:
        self._add_evidence(self.concept_weights, concept_id, amount, ts, half_life)

    @staticmethod
    def _add_evidence(table: dict[str, WeightEntry], key: str, amount: float,
                      ts: datetime, half_life: timedelta) -> None:
        entry = table.get(key)
        if entry is None:
            table[key] = WeightEntry(amount, ts)
        elif ts >= entry.last_update:
            entry.weight = entry.weight * _decay_factor(entry.last_update, ts, half_life) + amount
            entry.last_update = ts
        else:
            # Late-arriving evidence: decay the contribution forward instead
            # of the stored weight backward, keeping ingest order-insensitive.
            entry.weight += amount * _decay_factor(ts, entry.last_update, half_life)

    def add_fact(self, fact: AttributeFact) -> None:
        key = (fact.kind, fact.value)
        self.facts[key] = self.facts.get(key, 0.0) + fact.weight

    def fact_list(self) -> list[AttributeFact]:
        return [AttributeFact(kind, value, weight)
                for (kind, value), weight in sorted(self.facts.items())]

    def location_facts(self) -> list[AttributeFact]:
        """Location facts by descending weight, value ascending on ties."""
        locs = [f for f in self.fact_list() if f.kind == "location"]
        return sorted(locs, key=lambda f: (-f.weight, f.value))

    def _remember_event(self, event_id: str) -> None:
        self.seen_event_ids[event_id] = None
        while len(self.seen_event_ids) > SEEN_EVENT_CAP:
            self.seen_event_ids.pop(next(iter(self.seen_event_ids)))

    def set_preference(self, concept_id: str, value: float) -> None:
        self.preference_weights[concept_id] = min(10.0, max(0.1, value))


@dataclass
class IngestReport:
    """Outcome of one ingest_events call."""

    profile: ContextualProfile
    ingested: int = 0
    skipped_seen: int = 0
    malformed: list[MalformedEvent] = field(default_factory=list)


def ingest_events(profile: ContextualProfile, events: Iterable[ActivityEvent],
                  half_life: timedelta = DEFAULT_HALF_LIFE,
                  kind_multipliers: Optional[dict[str, float]] = None,
                  stem: bool = False) -> IngestReport:
    """Fold activity events into the profile.

    Malformed events (bad timestamp, enum, or fact) are skipped and reported;
    the remainder is processed. Events are applied in (ts, id) order so any
    permutation of the input yields identical weights. The version advances
    once per call that changed state.
    """
    multipliers = kind_multipliers or KIND_MULTIPLIERS
    report = IngestReport(profile)
    valid: list[tuple[datetime, ActivityEvent]] = []
    for event in events:
        try:
            valid.append((event.validated_ts(), event))
        except MalformedEvent as exc:
            report.malformed.append(exc)

    changed = False
    for ts, event in sorted(valid, key=lambda pair: (pair[0], pair[1].id)):
        if event.id in profile.seen_event_ids:
            report.skipped_seen += 1
            continue
        profile._remember_event(event.id)
        amount = multipliers[event.kind]
        for term in tokenize(event.text, stem=stem):
            profile.add_term_evidence(term, amount, ts, half_life)
        for fact in event.facts:
            profile.add_fact(fact)
        report.ingested += 1
        changed = True

    if changed:
        profile.version += 1
    return report


def top_terms(profile: ContextualProfile, k: int, now: datetime,
              half_life: timedelta = DEFAULT_HALF_LIFE) -> list[tuple[str, float]]:
    """Top-K terms by decayed weight; ties break lexicographically."""
    if k < 1:
        raise ValueError("k must be >= 1")
    decayed = [
        (term, decayed_weight(entry.weight, entry.last_update, now, half_life))
        for term, entry in profile.term_weights.items()
    ]
    decayed.sort(key=lambda pair: (-pair[1], pair[0]))
    return decayed[:k]


def term_vector(profile: ContextualProfile, now: datetime,
                half_life: timedelta = DEFAULT_HALF_LIFE) -> dict[str, float]:
    """All terms with their decayed weights at `now`."""
    return {
        term: decayed_weight(entry.weight, entry.last_update, now, half_life)
        for term, entry in profile.term_weights.items()
    }


# --- digests ------------------------------------------------------------


@dataclass
class ProfileDigest:
    """Privacy-reduced snapshot moved by the crawler and fed to the knowledge base.

    Carries only weights, concepts and facts; never event text or URIs.
    A digest is a pure function of the profile state at its version.
    """

    user_id: str
    version: int
    term_weights: dict[str, WeightEntry] = field(default_factory=dict)
    concept_weights: dict[str, WeightEntry] = field(default_factory=dict)
    facts: list[AttributeFact] = field(default_factory=list)


def to_digest(profile: ContextualProfile,
              min_digest_weight: float = DEFAULT_MIN_DIGEST_WEIGHT) -> ProfileDigest:
    """Snapshot the profile, omitting entries below min_digest_weight."""
    return ProfileDigest(
        user_id=profile.user_id,
        version=profile.version,
        term_weights={
            t: WeightEntry(e.weight, e.last_update)
            for t, e in profile.term_weights.items() if e.weight >= min_digest_weight
        },
        concept_weights={
            c: WeightEntry(e.weight, e.last_update)
            for c, e in profile.concept_weights.items() if e.weight >= min_digest_weight
        },
        facts=profile.fact_list(),
    )


def from_digest(digest: ProfileDigest) -> ContextualProfile:
    """Profile view of a digest: retained weights exactly, no preferences or history."""
    profile = ContextualProfile(user_id=digest.user_id, version=digest.version)
    profile.term_weights = {
        t: WeightEntry(e.weight, e.last_update) for t, e in digest.term_weights.items()
    }
    profile.concept_weights = {
        c: WeightEntry(e.weight, e.last_update) for c, e in digest.concept_weights.items()
    }
    for fact in digest.facts:
        profile.add_fact(fact)
    return profile


def _weights_to_json(table: dict[str, WeightEntry]) -> dict[str, list]:
    return {k: [e.weight, format_ts(e.last_update)] for k, e in table.items()}


def _weights_from_json(data: dict) -> dict[str, WeightEntry]:
    out = {}
    for key, pair in data.items():
        weight, last = pair
        out[key] = WeightEntry(float(weight), parse_ts(last))
    return out


def digest_to_json(digest: ProfileDigest) -> str:
    """Canonical (byte-stable) JSON form of a digest."""
    body = {
        "user_id": digest.user_id,
        "version": digest.version,
        "term_weights": _weights_to_json(digest.term_weights),
        "concept_weights": _weights_to_json(digest.concept_weights),
        "facts": [[f.kind, f.value, f.weight] for f in digest.facts],
    }
    return json.dumps(body, sort_keys=True, separators=(",", ":"))


def digest_from_json(text) -> ProfileDigest:
    try:
        data = json.loads(text) if isinstance(text, (str, bytes)) else dict(text)
        digest = ProfileDigest(
            user_id=str(data["user_id"]),
            version=int(data["version"]),
            term_weights=_weights_from_json(data.get("term_weights", {})),
            concept_weights=_weights_from_json(data.get("concept_weights", {})),
            facts=[AttributeFact(k, v, float(w)) for k, v, w in data.get("facts", [])],
        )
    except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
        raise DigestParse(f"bad digest: {exc}") from exc
    if digest.version < 0:
        raise DigestParse("version must be >= 0")
    for entry in list(digest.term_weights.values()) + list(digest.concept_weights.values()):
        if entry.weight < 0 or not math.isfinite(entry.weight):
            raise DigestParse("weights must be finite and >= 0")
    return digest


# --- persistence ---------------------------------------------------------


def profile_to_json(profile: ContextualProfile) -> str:
    body = {
        "user_id": profile.user_id,
        "version": profile.version,
        "term_weights": _weights_to_json(profile.term_weights),
        "concept_weights": _weights_to_json(profile.concept_weights),
        "facts": [[f.kind, f.value, f.weight] for f in profile.fact_list()],
        "preference_weights": profile.preference_weights,
        "seen_event_ids": list(profile.seen_event_ids),
    }
    return json.dumps(body, sort_keys=True, separators=(",", ":"))


def profile_from_json(text) -> ContextualProfile:
    data = json.loads(text) if isinstance(text, (str, bytes)) else text
    profile = ContextualProfile(user_id=data["user_id"], version=int(data["version"]))
    profile.term_weights = _weights_from_json(data.get("term_weights", {}))
    profile.concept_weights = _weights_from_json(data.get("concept_weights", {}))
    for kind, value, weight in data.get("facts", []):
        profile.facts[(kind, value)] = float(weight)
    profile.preference_weights = {
        k: float(v) for k, v in data.get("preference_weights", {}).items()
    }
    profile.seen_event_ids = {eid: None for eid in data.get("seen_event_ids", [])}
    return profile


def atomic_write(path: str, data: str) -> None:
    """Write-then-rename so readers never observe a torn file."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def profile_path(data_dir: str, user_id: str) -> str:
    safe = re.sub(r"[^A-Za-z0-9._-]", "_", user_id)
    return os.path.join(data_dir, "profiles", f"{safe}.json")


def save_profile(profile: ContextualProfile, data_dir: str) -> str:
    path = profile_path(data_dir, profile.user_id)
    atomic_write(path, profile_to_json(profile))
    return path


def load_profile(data_dir: str, user_id: str) -> Optional[ContextualProfile]:
    path = profile_path(data_dir, user_id)
    if not os.path.exists(path):
        return None
    with open(path, encoding="utf-8") as handle:
        return profile_from_json(handle.read())


def read_activity_log(path: str) -> Iterator[ActivityEvent]:
    """Yield events from a UTF-8 JSONL activity log (one record per line)."""
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedEvent(f"line:{line_no}", f"invalid JSON: {exc}") from exc
            yield ActivityEvent.from_record(record)
