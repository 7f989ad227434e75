"""Leader election among active core-agents: the vote-only core of Raft run
over a simulated lossy transport with logical ticks. Fully deterministic for
a given (cluster, network config, seed)."""

from __future__ import annotations

import random
from dataclasses import dataclass, field

# Artifact constants: timeouts randomize in [10, 20] ticks so concurrent
# candidacies rarely collide; leaders re-assert every 3 ticks, and candidates
# retransmit unanswered vote requests on the same cadence (the transport is
# lossy, so one-shot requests would stall elections under load).
TIMEOUT_MIN = 10
TIMEOUT_MAX = 20
HEARTBEAT_INTERVAL = 3

ROLES = ("follower", "candidate", "leader")
MESSAGE_KINDS = ("request_vote", "vote_granted", "heartbeat")


@dataclass(frozen=True)
class ElectionMessage:
    kind: str
    term: int
    sender: str
    recipient: str

    def __post_init__(self) -> None:
        if self.kind not in MESSAGE_KINDS:
            raise ValueError(f"unknown message kind {self.kind!r}")
        if self.term < 0:
            raise ValueError("term must be nonnegative")


@dataclass
class NodeState:
    node_id: str
    rng_seed: int
    role: str = "follower"
    term: int = 0
    voted_for: str | None = None
    timeout_at: int = 0
    votes: set[str] = field(default_factory=set)
    last_broadcast_tick: int = -HEARTBEAT_INTERVAL

    def __post_init__(self) -> None:
        self.rng = random.Random(self.rng_seed)
        self.timeout_at = self.rng.randint(TIMEOUT_MIN, TIMEOUT_MAX)

    def reset_timeout(self, now: int) -> None:
        self.timeout_at = now + self.rng.randint(TIMEOUT_MIN, TIMEOUT_MAX)


class SimNet:
    """Seeded fault injection: each send is dropped with ``drop_prob`` or
    scheduled ``delay`` ticks out; deliveries happen at their tick exactly,
    in send order within a tick."""

    def __init__(self, drop_prob: float = 0.0, delay: tuple[int, int] = (1, 2),
                 seed: int = 1) -> None:
        if not 0.0 <= drop_prob < 1.0:
            raise ValueError("drop_prob must lie in [0, 1)")
        if delay[0] < 1 or delay[1] < delay[0]:
            raise ValueError("delay range must satisfy 1 <= min <= max")
        self.drop_prob = drop_prob
        self.delay = delay
        self.rng = random.Random(seed)
        self.in_flight: list[tuple[int, int, ElectionMessage]] = []
        self._seq = 0

    def send(self, msg: ElectionMessage, now: int) -> bool:
        """Returns False when the message was dropped."""
        if self.drop_prob > 0.0 and self.rng.random() < self.drop_prob:
            return False
        deliver_at = now + self.rng.randint(self.delay[0], self.delay[1])
        self._seq += 1
        self.in_flight.append((deliver_at, self._seq, msg))
        return True

    def due(self, now: int) -> list[ElectionMessage]:
        ready = sorted(
            (entry for entry in self.in_flight if entry[0] <= now),
            key=lambda entry: (entry[0], entry[1]),
        )
        ready_set = {entry[1] for entry in ready}
        self.in_flight = [e for e in self.in_flight if e[1] not in ready_set]
        return [entry[2] for entry in ready]


def _majority(cluster_size: int) -> int:
    return cluster_size // 2 + 1


def handle_message(node: NodeState, msg: ElectionMessage, peers: list[str],
                   now: int) -> list[ElectionMessage]:
    """Standard election rules; mutates the node and returns outbound
    messages. A higher term always demotes to follower; one vote per term;
    a candidate with a majority becomes leader and asserts immediately."""
    if msg.recipient != node.node_id:
        raise ValueError("message routed to the wrong node")
    out: list[ElectionMessage] = []
    if msg.term > node.term:
        node.term = msg.term
        node.voted_for = None
        node.role = "follower"
        node.votes = set()
    if msg.kind == "request_vote":
        if msg.term == node.term and node.voted_for in (None, msg.sender):
            node.voted_for = msg.sender
            node.reset_timeout(now)
            out.append(ElectionMessage("vote_granted", node.term,
                                       node.node_id, msg.sender))
    elif msg.kind == "vote_granted":
        if node.role == "candidate" and msg.term == node.term:
            node.votes.add(msg.sender)
            if len(node.votes) >= _majority(len(peers) + 1):
                out.extend(_become_leader(node, peers, now))
    elif msg.kind == "heartbeat":
        # A higher term was already adopted above, so a live assertion from
        # the current leader arrives with msg.term == node.term.
        if msg.term == node.term and node.role != "leader":
            node.role = "follower"
            node.reset_timeout(now)
    return out


def _become_leader(node: NodeState, peers: list[str], now: int,
                   ) -> list[ElectionMessage]:
    node.role = "leader"
    node.last_broadcast_tick = now
    return [ElectionMessage("heartbeat", node.term, node.node_id, peer)
            for peer in peers]


class ElectionSimulation:
    """Single-threaded deterministic stepping of a cluster plus network.
    Every observable transition lands in ``events`` in a fixed order."""

    def __init__(self, node_ids: list[str], drop_prob: float = 0.0,
                 delay: tuple[int, int] = (1, 2), seed: int = 1) -> None:
        if len(set(node_ids)) != len(node_ids):
            raise ValueError("node ids must be distinct")
        if not node_ids:
            raise ValueError("need at least one node")
        self.node_ids = list(node_ids)
        self.nodes = {
            node_id: NodeState(node_id=node_id,
                               rng_seed=seed * 1_000_003 + index + 1)
            for index, node_id in enumerate(node_ids)
        }
        self.net = SimNet(drop_prob, delay, seed=seed * 999_983 + 7)
        self.tick = 0
        self.events: list[dict] = []
        self.leader_id: str | None = None

    def _peers(self, node_id: str) -> list[str]:
        return [nid for nid in self.node_ids if nid != node_id]

    def _event(self, kind: str, **payload) -> None:
        self.events.append({"tick": self.tick, "kind": kind, **payload})

    def _send_all(self, messages: list[ElectionMessage]) -> None:
        for msg in messages:
            delivered = self.net.send(msg, self.tick)
            self._event("message_sent" if delivered else "message_dropped",
                        msg_kind=msg.kind, sender=msg.sender,
                        recipient=msg.recipient, term=msg.term)

    def step_tick(self) -> None:
        """Advance one tick: deliver due messages, expire timeouts, emit
        leader heartbeats."""
        self.tick += 1
        for msg in self.net.due(self.tick):
            node = self.nodes[msg.recipient]
            role_before = node.role
            self._event("message_delivered", msg_kind=msg.kind,
                        sender=msg.sender, recipient=msg.recipient,
                        term=msg.term)
            out = handle_message(node, msg, self._peers(node.node_id), self.tick)
            if msg.kind == "request_vote" and out:
                self._event("vote_granted", node=node.node_id,
                            candidate=msg.sender, term=node.term)
            if role_before != "leader" and node.role == "leader":
                self._note_leader(node)
            self._send_all(out)
        for node_id in self.node_ids:
            node = self.nodes[node_id]
            if node.role in ("follower", "candidate") and node.timeout_at <= self.tick:
                node.role = "candidate"
                node.term += 1
                node.voted_for = node.node_id
                node.votes = {node.node_id}
                node.reset_timeout(self.tick)
                self._event("became_candidate", node=node.node_id,
                            term=node.term)
                peers = self._peers(node_id)
                if len(node.votes) >= _majority(len(self.node_ids)):
                    heartbeats = _become_leader(node, peers, self.tick)
                    self._note_leader(node)
                    self._send_all(heartbeats)
                else:
                    node.last_broadcast_tick = self.tick
                    self._send_all([
                        ElectionMessage("request_vote", node.term,
                                        node.node_id, peer)
                        for peer in peers
                    ])
        for node_id in self.node_ids:
            node = self.nodes[node_id]
            if self.tick - node.last_broadcast_tick < HEARTBEAT_INTERVAL:
                continue
            if node.role == "leader":
                node.last_broadcast_tick = self.tick
                self._send_all([
                    ElectionMessage("heartbeat", node.term, node.node_id, peer)
                    for peer in self._peers(node_id)
                ])
            elif node.role == "candidate":
                node.last_broadcast_tick = self.tick
                self._send_all([
                    ElectionMessage("request_vote", node.term,
                                    node.node_id, peer)
                    for peer in self._peers(node_id)
                    if peer not in node.votes
                ])

    def _note_leader(self, node: NodeState) -> None:
        self._event("became_leader", node=node.node_id, term=node.term,
                    votes=sorted(node.votes))
        if self.leader_id is None:
            self.leader_id = node.node_id


@dataclass(frozen=True)
class ElectionResult:
    leader: str | None
    term: int | None
    ticks_elapsed: int
    events: tuple[dict, ...]

    @property
    def timed_out(self) -> bool:
        return self.leader is None


def run_election(n_nodes: int = 0, drop_prob: float = 0.0, seed: int = 1,
                 max_ticks: int = 100, delay: tuple[int, int] = (1, 2),
                 node_ids: list[str] | None = None) -> ElectionResult:
    """Step the simulation until some node wins a majority or the tick
    budget runs out. A timeout is a valid outcome under heavy loss, reported
    as ``leader=None`` rather than raised."""
    if node_ids is None:
        if n_nodes < 1:
            raise ValueError("n_nodes must be at least 1")
        node_ids = [f"n{i}" for i in range(n_nodes)]
    sim = ElectionSimulation(node_ids, drop_prob=drop_prob, delay=delay,
                             seed=seed)
    for _ in range(max_ticks):
        sim.step_tick()
        if sim.leader_id is not None:
            leader = sim.nodes[sim.leader_id]
            return ElectionResult(leader=sim.leader_id, term=leader.term,
                                  ticks_elapsed=sim.tick,
                                  events=tuple(sim.events))
    return ElectionResult(leader=None, term=None, ticks_elapsed=sim.tick,
                          events=tuple(sim.events))
