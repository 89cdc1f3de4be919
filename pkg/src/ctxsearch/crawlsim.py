"""Deterministic discrete-event simulation of the profile-gathering crawler.

Three agent layers: one supervisor (decision maker, owns the server store),
one intermediate relay per service agent (bounded queue, measurable
backpressure), and S service agents polling desktop nodes. The supervisor
assigns contiguous node-id ranges round-robin, service agents poll their
nodes with timeout/backoff retries, nodes answer with a profile digest or a
decline, and digests travel upward through the intermediates into an
idempotent, versioned server store.

Only the service-agent <-> node legs are lossy/duplicating (they model the
wide-area links to user desktops); supervisor <-> service legs are reliable
but queue-bounded at the intermediate. All randomness comes from one seeded
PRNG, all ordering from a (time, sequence) heap, so a SimConfig maps to
exactly one SimReport.

Time unit: milliseconds of simulated time throughout.
"""

from __future__ import annotations

import heapq
import json
import random
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .errors import ConfigError

MESSAGE_KINDS = ("ASSIGN", "POLL", "DIGEST", "ACK", "DECLINE", "REGISTER", "UNREGISTER", "ERROR")

SUPERVISOR_ID = "sup"


@dataclass(frozen=True)
class CrawlMessage:
    """Protocol envelope. Relays keep the msg_id; duplicates share it too."""

    msg_id: int
    kind: str
    src: str
    dst: str
    payload: dict = field(default_factory=dict)


@dataclass
class Send:
    msg: CrawlMessage
    extra_delay: float = 0.0  # dispatch offset before transport latency


@dataclass
class SetTimer:
    key: tuple
    delay: float


Action = object  # Send | SetTimer


# --- agent states ----------------------------------------------------------


@dataclass
class NodeState:
    node_id: str
    registered: bool
    storage_mode: str  # local | server
    version: int


@dataclass
class ServiceAgentState:
    agent_id: str
    assigned: list[str] = field(default_factory=list)
    status: dict[str, str] = field(default_factory=dict)  # node -> pending|acked|declined|exhausted
    attempts: dict[str, int] = field(default_factory=dict)
    timeout: float = 1000.0
    max_retries: int = 3
    backoff: float = 2.0
    poll_spacing: float = 0.2


@dataclass
class SupervisorState:
    store: dict[str, dict] = field(default_factory=dict)  # user_id -> digest payload
    registry: set[str] = field(default_factory=set)
    errors_seen: int = 0


@dataclass
class IntermediateState:
    mid_id: str
    capacity: int
    service_time: float = 1.0
    queue: list[CrawlMessage] = field(default_factory=list)
    busy: bool = False
    overflows: int = 0
    relayed: int = 0


def server_upsert(store: dict[str, dict], digest: dict) -> dict[str, dict]:
    """Keep the highest version per user; equal or lower versions are no-ops."""
    user = digest["user_id"]
    current = store.get(user)
    if current is None or int(digest["version"]) > int(current["version"]):
        store[user] = dict(digest)
    return store


# --- pure-ish transitions ---------------------------------------------------


def node_handle(node: NodeState, msg: CrawlMessage, now: float,
                next_id: Callable[[], int]) -> list[Action]:
    """A desktop node answers POLL with a digest or a decline.

    Unregistered or local-storage nodes never emit a digest; that is the
    opt-in rule, enforced at the node itself.
    """
    if msg.kind != "POLL":
        return []
    since = int(msg.payload.get("since_version", 0))
    if node.registered and node.storage_mode == "server" and node.version > since:
        digest = {"user_id": node.node_id, "version": node.version}
        return [Send(CrawlMessage(next_id(), "DIGEST", node.node_id, msg.src, digest))]
    return [Send(CrawlMessage(next_id(), "DECLINE", node.node_id, msg.src,
                              {"node_id": node.node_id}))]


def service_handle(svc: ServiceAgentState, msg: CrawlMessage, now: float,
                   next_id: Callable[[], int]) -> list[Action]:
    if msg.kind == "ASSIGN":
        nodes = list(msg.payload["nodes"])
        svc.assigned = nodes
        actions: list[Action] = []
        for j, node_id in enumerate(nodes):
            svc.status[node_id] = "pending"
            svc.attempts[node_id] = 1
            offset = j * svc.poll_spacing
            actions.append(Send(CrawlMessage(next_id(), "POLL", svc.agent_id, node_id,
                                             {"node_id": node_id, "since_version": 0}),
                                extra_delay=offset))
            actions.append(SetTimer(("poll", node_id, 1), offset + svc.timeout))
        return actions
    if msg.kind == "DIGEST":
        # Forward upward unchanged (same msg_id): the relay is an envelope hop.
        if svc.status.get(msg.payload.get("user_id")) == "pending":
            return [Send(replace(msg, src=svc.agent_id, dst=SUPERVISOR_ID))]
        # Late or duplicate digest after resolution: still forward, the
        # server upsert is idempotent and the node deserves its ACK.
        return [Send(replace(msg, src=svc.agent_id, dst=SUPERVISOR_ID))]
    if msg.kind == "ACK":
        node_id = msg.payload["node_id"]
        if svc.status.get(node_id) == "pending":
            svc.status[node_id] = "acked"
        return []
    if msg.kind == "DECLINE":
        node_id = msg.payload["node_id"]
        if svc.status.get(node_id) == "pending":
            svc.status[node_id] = "declined"
        return []
    return []


def service_timer(svc: ServiceAgentState, key: tuple, now: float,
                  next_id: Callable[[], int]) -> tuple[list[Action], str]:
    """Timeout for ("poll", node, attempt). Returns (actions, outcome) where
    outcome is "retry", "exhausted" or "ignored"."""
    _, node_id, attempt = key
    if svc.status.get(node_id) != "pending":
        return [], "ignored"
    if attempt > svc.max_retries:
        svc.status[node_id] = "exhausted"
        return [], "exhausted"
    next_attempt = attempt + 1
    svc.attempts[node_id] = next_attempt
    delay = svc.timeout * svc.backoff ** attempt
    return [
        Send(CrawlMessage(next_id(), "POLL", svc.agent_id, node_id,
                          {"node_id": node_id, "since_version": 0})),
        SetTimer(("poll", node_id, next_attempt), delay),
    ], "retry"


def supervisor_handle(sup: SupervisorState, msg: CrawlMessage, now: float,
                      next_id: Callable[[], int]) -> list[Action]:
    if msg.kind == "DIGEST":
        server_upsert(sup.store, msg.payload)
        ack = {"node_id": msg.payload["user_id"], "version": int(msg.payload["version"])}
        return [Send(CrawlMessage(next_id(), "ACK", SUPERVISOR_ID, msg.src, ack))]
    if msg.kind == "REGISTER":
        sup.registry.add(msg.payload["node_id"])
        return []
    if msg.kind == "UNREGISTER":
        sup.registry.discard(msg.payload["node_id"])
        return []
    if msg.kind == "ERROR":
        sup.errors_seen += 1
        return []
    return []


def handle_message(agent, msg: CrawlMessage, now: float = 0.0,
                   next_id: Optional[Callable[[], int]] = None) -> tuple[object, list[Action]]:
    """Dispatch a message to whichever agent state it addresses.

    Mutates and returns the agent state along with the outbound actions;
    transitions draw no randomness, so repeated calls agree exactly.
    """
    counter = iter(range(1_000_000_000, 2_000_000_000))
    make_id = next_id or (lambda: next(counter))
    if isinstance(agent, NodeState):
        return agent, node_handle(agent, msg, now, make_id)
    if isinstance(agent, ServiceAgentState):
        return agent, service_handle(agent, msg, now, make_id)
    if isinstance(agent, SupervisorState):
        return agent, supervisor_handle(agent, msg, now, make_id)
    raise TypeError(f"no handler for agent {type(agent).__name__}")


# --- configuration / report --------------------------------------------------


@dataclass
class SimConfig:
    nodes: int = 100
    registered_frac: float = 1.0
    loss: float = 0.0
    dup: float = 0.0
    latency_lo: float = 10.0
    latency_hi: float = 50.0
    timeout: float = 1000.0
    max_retries: int = 3
    backoff: float = 2.0
    service_agents: int = 1
    queue_capacity: int = 256
    seed: int = 0
    poll_spacing: float = 0.2
    service_time: float = 1.0
    max_sim_time: Optional[float] = None

    def validate(self) -> None:
        if self.nodes < 0:
            raise ConfigError("nodes must be >= 0")
        if not 0.0 <= self.registered_frac <= 1.0:
            raise ConfigError("registered_frac must be in [0, 1]")
        if not 0.0 <= self.loss <= 1.0:
            raise ConfigError("loss probability must be in [0, 1]")
        if not 0.0 <= self.dup <= 1.0:
            raise ConfigError("duplication probability must be in [0, 1]")
        if self.latency_lo < 0 or self.latency_hi < self.latency_lo:
            raise ConfigError("latency range must satisfy 0 <= lo <= hi")
        if self.timeout <= 0:
            raise ConfigError("timeout must be positive")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.backoff < 1.0:
            raise ConfigError("backoff multiplier must be >= 1")
        if self.service_agents < 1:
            raise ConfigError("service_agents must be >= 1")
        if self.queue_capacity < 1:
            raise ConfigError("queue_capacity must be >= 1")


@dataclass
class SimReport:
    nodes: int = 0
    registered: int = 0
    gathered: int = 0
    declined: int = 0
    coverage: float = 0.0
    messages_sent: dict[str, int] = field(default_factory=dict)
    drops: int = 0
    duplicates: int = 0
    relayed: int = 0
    queue_overflows: int = 0
    retries: int = 0
    retry_exhaustions: int = 0
    rounds_to_convergence: int = 0
    sim_end_ms: float = 0.0
    gathered_versions: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> str:
        body = dict(self.__dict__)
        return json.dumps(body, sort_keys=True, separators=(",", ":"))


# --- transport policies -------------------------------------------------------


@dataclass
class LinkDecision:
    lost: bool
    latency: float
    dup: bool
    dup_latency: float


class RandomPolicy:
    """Seeded draws for the lossy desktop legs; optionally records every
    decision keyed by (kind, src, dst, occurrence) for later replay."""

    def __init__(self, rng: random.Random, loss: float, dup: float,
                 latency_lo: float, latency_hi: float, record: bool = False):
        self.rng = rng
        self.loss = loss
        self.dup = dup
        self.latency_lo = latency_lo
        self.latency_hi = latency_hi
        self.record = record
        self.decisions: dict[tuple, LinkDecision] = {}
        self._occurrence: dict[tuple, int] = {}

    def decide(self, kind: str, src: str, dst: str) -> LinkDecision:
        # Fixed draw order keeps the stream stable across code paths.
        lost = self.rng.random() < self.loss
        latency = self.rng.uniform(self.latency_lo, self.latency_hi)
        dup = self.rng.random() < self.dup
        dup_latency = self.rng.uniform(self.latency_lo, self.latency_hi)
        decision = LinkDecision(lost, latency, dup, dup_latency)
        if self.record:
            base = (kind, src, dst)
            occurrence = self._occurrence.get(base, 0) + 1
            self._occurrence[base] = occurrence
            self.decisions[base + (occurrence,)] = decision
        return decision

    def internal_latency(self) -> float:
        return self.rng.uniform(self.latency_lo, self.latency_hi)


class ReplayPolicy:
    """Replays a recorded loss/latency realization with duplication forced off.

    Sends without a recorded decision (possible when duplication altered the
    retry pattern of the recorded run) fall back to fresh seeded draws.
    """

    def __init__(self, decisions: dict[tuple, LinkDecision], rng: random.Random,
                 loss: float, latency_lo: float, latency_hi: float):
        self.decisions = decisions
        self.fallback = RandomPolicy(rng, loss, 0.0, latency_lo, latency_hi)
        self._occurrence: dict[tuple, int] = {}

    def decide(self, kind: str, src: str, dst: str) -> LinkDecision:
        base = (kind, src, dst)
        occurrence = self._occurrence.get(base, 0) + 1
        self._occurrence[base] = occurrence
        recorded = self.decisions.get(base + (occurrence,))
        if recorded is None:
            fresh = self.fallback.decide(kind, src, dst)
            return LinkDecision(fresh.lost, fresh.latency, False, 0.0)
        return LinkDecision(recorded.lost, recorded.latency, False, 0.0)

    def internal_latency(self) -> float:
        return self.fallback.internal_latency()


# --- the event loop -----------------------------------------------------------


class _Sim:
    def __init__(self, config: SimConfig, policy, trace: Optional[Callable[[dict], None]]):
        self.config = config
        self.policy = policy
        self.trace = trace
        self.heap: list[tuple] = []
        self.seq = 0
        self.msg_seq = 0
        self.now = 0.0
        self.sent_by_kind: dict[str, int] = {}
        self.drops = 0
        self.duplicates = 0
        self.retries = 0
        self.exhaustions = 0

        rng = random.Random(config.seed)
        registered_ids = set(rng.sample(range(config.nodes),
                                        round(config.registered_frac * config.nodes)))
        self.nodes: dict[str, NodeState] = {}
        for i in range(config.nodes):
            version = rng.randint(1, 3)
            node_id = f"node:{i}"
            reg = i in registered_ids
            self.nodes[node_id] = NodeState(
                node_id=node_id,
                registered=reg,
                storage_mode="server" if reg else "local",
                version=version,
            )
        self.setup_rng = rng

        self.supervisor = SupervisorState()
        self.services: dict[str, ServiceAgentState] = {}
        self.mids: dict[str, IntermediateState] = {}
        self.lane_of: dict[str, str] = {}
        for s in range(config.service_agents):
            svc_id, mid_id = f"svc:{s}", f"mid:{s}"
            self.services[svc_id] = ServiceAgentState(
                agent_id=svc_id, timeout=config.timeout, max_retries=config.max_retries,
                backoff=config.backoff, poll_spacing=config.poll_spacing,
            )
            self.mids[mid_id] = IntermediateState(
                mid_id=mid_id, capacity=config.queue_capacity, service_time=config.service_time)
            self.lane_of[svc_id] = mid_id

    # -- identifiers / scheduling ------------------------------------------

    def next_msg_id(self) -> int:
        self.msg_seq += 1
        return self.msg_seq

    def schedule(self, at: float, kind: str, data) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (at, self.seq, kind, data))

    def emit_trace(self, ev: str, msg: CrawlMessage, **extra) -> None:
        if self.trace is not None:
            record = {"t_ms": round(self.now, 6), "ev": ev, "kind": msg.kind,
                      "from": msg.src, "to": msg.dst, "msg_id": msg.msg_id}
            record.update(extra)
            self.trace(record)

    # -- transport -----------------------------------------------------------

    def _is_desktop_leg(self, src: str, dst: str) -> bool:
        return src.startswith("node:") or dst.startswith("node:")

    def send(self, msg: CrawlMessage, extra_delay: float = 0.0, relay: bool = False) -> None:
        if not relay:
            self.sent_by_kind[msg.kind] = self.sent_by_kind.get(msg.kind, 0) + 1
        self.emit_trace("send", msg)

        if self._is_desktop_leg(msg.src, msg.dst):
            decision = self.policy.decide(msg.kind, msg.src, msg.dst)
            if decision.lost:
                self.drops += 1
                self.emit_trace("drop", msg)
                return
            self.schedule(self.now + extra_delay + decision.latency, "deliver", msg)
            if decision.dup:
                self.duplicates += 1
                self.emit_trace("dup", msg)
                self.schedule(self.now + extra_delay + decision.dup_latency, "deliver", msg)
            return

        # Internal legs are reliable; supervisor <-> service hops go through
        # the service agent's intermediate lane.
        latency = self.policy.internal_latency()
        lane = None
        if msg.src == SUPERVISOR_ID and msg.dst in self.services:
            lane = self.lane_of[msg.dst]
        elif msg.src in self.services and msg.dst == SUPERVISOR_ID:
            lane = self.lane_of[msg.src]
        if lane is not None:
            self.schedule(self.now + extra_delay + latency, "relay_in", (lane, msg))
        else:
            self.schedule(self.now + extra_delay + latency, "deliver", msg)

    def apply_actions(self, owner_id: str, actions: list[Action]) -> None:
        for action in actions:
            if isinstance(action, Send):
                self.send(action.msg, extra_delay=action.extra_delay)
            elif isinstance(action, SetTimer):
                self.schedule(self.now + action.delay, "timer", (owner_id, action.key))
            else:
                raise TypeError(f"unknown action {action!r}")

    # -- event handlers --------------------------------------------------------

    def on_deliver(self, msg: CrawlMessage) -> None:
        self.emit_trace("deliver", msg)
        dst = msg.dst
        if dst in self.nodes:
            actions = node_handle(self.nodes[dst], msg, self.now, self.next_msg_id)
            self.apply_actions(dst, actions)
        elif dst in self.services:
            actions = service_handle(self.services[dst], msg, self.now, self.next_msg_id)
            for action in actions:
                if isinstance(action, Send) and action.msg.kind == "DIGEST" \
                        and action.msg.dst == SUPERVISOR_ID:
                    self.send(action.msg, relay=True)  # same logical message moving up
                else:
                    self.apply_actions(dst, [action])
        elif dst == SUPERVISOR_ID:
            actions = supervisor_handle(self.supervisor, msg, self.now, self.next_msg_id)
            self.apply_actions(SUPERVISOR_ID, actions)

    def on_relay_in(self, lane: str, msg: CrawlMessage) -> None:
        mid = self.mids[lane]
        if len(mid.queue) >= mid.capacity:
            mid.overflows += 1
            self.emit_trace("overflow", msg, lane=lane)
            error = CrawlMessage(self.next_msg_id(), "ERROR", lane, SUPERVISOR_ID,
                                 {"reason": "queue_overflow", "dropped_kind": msg.kind})
            self.sent_by_kind["ERROR"] = self.sent_by_kind.get("ERROR", 0) + 1
            self.schedule(self.now + self.policy.internal_latency(), "deliver", error)
            return
        mid.queue.append(msg)
        if not mid.busy:
            mid.busy = True
            self.schedule(self.now + mid.service_time, "relay_out", lane)

    def on_relay_out(self, lane: str) -> None:
        mid = self.mids[lane]
        if not mid.queue:
            mid.busy = False
            return
        msg = mid.queue.pop(0)
        mid.relayed += 1
        self.schedule(self.now + self.policy.internal_latency(), "deliver", msg)
        if mid.queue:
            self.schedule(self.now + mid.service_time, "relay_out", lane)
        else:
            mid.busy = False

    def on_timer(self, owner_id: str, key: tuple) -> None:
        svc = self.services.get(owner_id)
        if svc is None:
            return
        actions, outcome = service_timer(svc, key, self.now, self.next_msg_id)
        if outcome == "retry":
            self.retries += 1
        elif outcome == "exhausted":
            self.exhaustions += 1
        self.apply_actions(owner_id, actions)

    # -- run ---------------------------------------------------------------------

    def run(self) -> SimReport:
        config = self.config
        node_ids = [f"node:{i}" for i in range(config.nodes)]
        per_agent = -(-config.nodes // config.service_agents) if config.nodes else 0
        for s, svc_id in enumerate(sorted(self.services)):
            lo, hi = s * per_agent, min(config.nodes, (s + 1) * per_agent)
            assign = CrawlMessage(self.next_msg_id(), "ASSIGN", SUPERVISOR_ID, svc_id,
                                  {"range": [lo, hi], "nodes": node_ids[lo:hi]})
            self.send(assign)

        while self.heap:
            at, _, kind, data = heapq.heappop(self.heap)
            if config.max_sim_time is not None and at > config.max_sim_time:
                break
            self.now = at
            if kind == "deliver":
                self.on_deliver(data)
            elif kind == "relay_in":
                self.on_relay_in(*data)
            elif kind == "relay_out":
                self.on_relay_out(data)
            elif kind == "timer":
                self.on_timer(*data)

        registered = sum(1 for n in self.nodes.values()
                         if n.registered and n.storage_mode == "server")
        declined = sum(1 for svc in self.services.values()
                       for status in svc.status.values() if status == "declined")
        rounds = max((a for svc in self.services.values() for a in svc.attempts.values()),
                     default=0)
        gathered_versions = {u: int(d["version"]) for u, d in sorted(self.supervisor.store.items())}
        return SimReport(
            nodes=config.nodes,
            registered=registered,
            gathered=len(self.supervisor.store),
            declined=declined,
            coverage=(len(self.supervisor.store) / registered) if registered else 0.0,
            messages_sent=dict(sorted(self.sent_by_kind.items())),
            drops=self.drops,
            duplicates=self.duplicates,
            relayed=sum(m.relayed for m in self.mids.values()),
            queue_overflows=sum(m.overflows for m in self.mids.values()),
            retries=self.retries,
            retry_exhaustions=self.exhaustions,
            rounds_to_convergence=rounds,
            sim_end_ms=self.now,
            gathered_versions=gathered_versions,
        )


def run_simulation(config: SimConfig, policy=None,
                   trace: Optional[Callable[[dict], None]] = None) -> SimReport:
    """Run one crawl to completion; a pure function of (config, policy)."""
    config.validate()
    if policy is None:
        policy = RandomPolicy(random.Random(config.seed + 1), config.loss, config.dup,
                              config.latency_lo, config.latency_hi)
    return _Sim(config, policy, trace).run()
