"""Acceptance suite: the eight exit criteria, each with its stated tolerance
and time budget, printing one pass/fail line per criterion (visible under
``pytest -s`` or in the captured output of a failing run)."""

import json
import random
import time

import pytest

from umf.classifier import audit, load_bundled_descriptors
from umf.consensus import run_election
from umf.core import CoreAgentKind, ModuleMatrix, Presence
from umf.harness import load_bundled_scenario, run_scenario
from umf.memory import MemoryRecord, MemoryScope, MemoryStore
from umf.orchestration import (
    CoreAgent,
    Gateway,
    GatewayRegistration,
    NoAvailableCoreAgent,
    PlannerConfig,
    TopologyInvalid,
)
from umf.planning import NoPlanFound, Operator, replay, rule_based_plan
from umf.profile import Profile
from umf.security import Policy, check_response, filter_egress
from umf.core import ToolSpec


def _report(number: int, name: str, started: float, budget: float) -> None:
    elapsed = time.monotonic() - started
    print(f"[ACCEPTANCE] criterion {number} ({name}): PASS "
          f"({elapsed:.2f}s of {budget:.0f}s budget)")
    assert elapsed < budget, f"criterion {number} exceeded its time budget"


EXPECTED_CATEGORIES = [
    "Passive", "Passive", "Passive", "Passive", "Active", "Active", "Active",
    "Active", "Active", "Active", "Active", "Active", "N/A", "Active",
    "Active",
]


def test_criterion_1_classification_reproduction(capsys):
    started = time.monotonic()
    # through the CLI surface itself
    from umf.cli import main
    assert main(["classify", "bundled", "--report", "--format", "json"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert len(data["rows"]) == 15
    assert [row["category"] for row in data["rows"]] == EXPECTED_CATEGORIES
    categories = [row["category"] for row in data["rows"]]
    assert categories.count("Passive") == 4
    assert categories.count("Active") == 10
    assert categories.count("N/A") == 1
    assert (data["passive_count"], data["total_agents"]) == (4, 13)
    assert data["passive_percent"] == 31
    assert (data["tool_users_without_security"], data["tool_users"]) == (7, 9)
    assert data["unguarded_tool_user_percent"] == 78
    # the library path agrees with the CLI path
    report = audit(load_bundled_descriptors())
    assert [r.category for r in report.rows] == EXPECTED_CATEGORIES
    _report(1, "taxonomy table reproduction", started, budget=1.0)


def test_criterion_2_election_safety_and_liveness():
    started = time.monotonic()
    elected_within_budget = 0
    for seed in range(1, 1001):
        result = run_election(n_nodes=5, drop_prob=0.3, seed=seed,
                              max_ticks=50)
        leaders_per_term: dict[int, set] = {}
        for event in result.events:
            if event["kind"] == "became_leader":
                leaders_per_term.setdefault(event["term"], set()) \
                    .add(event["node"])
        dual = {term: nodes for term, nodes in leaders_per_term.items()
                if len(nodes) > 1}
        assert not dual, f"two leaders in one term (seed {seed}): {dual}"
        if result.leader is not None:
            elected_within_budget += 1
    assert elected_within_budget >= 990, elected_within_budget
    for seed in (1, 250, 999):
        first = run_election(n_nodes=5, drop_prob=0.3, seed=seed,
                             max_ticks=50)
        second = run_election(n_nodes=5, drop_prob=0.3, seed=seed,
                              max_ticks=50)
        assert json.dumps(first.events) == json.dumps(second.events)
    _report(2, "election safety and liveness", started, budget=30.0)


def _brute_force_shortest(facts, operators, goal, max_depth):
    """Independent oracle: exhaustive enumeration in (length, index) order."""
    if goal <= facts:
        return ()
    for depth in range(1, max_depth + 1):
        def rec(state, seq):
            if len(seq) == depth:
                return seq if goal <= state else None
            for index, op in enumerate(operators):
                if op.preconditions <= state:
                    hit = rec((state - op.del_effects) | op.add_effects,
                              seq + (index,))
                    if hit is not None:
                        return hit
            return None
        found = rec(facts, ())
        if found is not None:
            return found
    return None


def _random_domain(rng):
    atoms = [f"a{i}" for i in range(rng.randint(2, 10))]
    operators = []
    for j in range(rng.randint(1, 6)):
        add = frozenset(rng.sample(atoms, rng.randint(1, 2)))
        deletable = [a for a in atoms if a not in add]
        operators.append(Operator(
            name=f"op{j}",
            preconditions=frozenset(rng.sample(atoms, rng.randint(0, 2))),
            add_effects=add,
            del_effects=frozenset(rng.sample(deletable, rng.randint(0, 1)))
            if deletable else frozenset(),
        ))
    facts = frozenset(rng.sample(atoms, rng.randint(0, len(atoms) // 2)))
    goal = frozenset(rng.sample(atoms, rng.randint(1, 2)))
    return facts, tuple(operators), goal


def test_criterion_3_planner_matches_brute_force():
    started = time.monotonic()
    rng = random.Random(42)
    solvable = 0
    for trial in range(200):
        facts, operators, goal = _random_domain(rng)
        oracle = _brute_force_shortest(facts, operators, goal, max_depth=6)
        try:
            plan = rule_based_plan(facts, operators, goal, max_depth=6)
            names = tuple(step.target for step in plan.steps)
        except NoPlanFound:
            names = None
        if oracle is None:
            assert names is None, f"planner found a plan the oracle refutes " \
                                  f"(trial {trial})"
            continue
        solvable += 1
        assert names is not None, f"planner missed a solvable domain " \
                                  f"(trial {trial})"
        assert len(names) == len(oracle), f"length mismatch (trial {trial})"
        end_state = replay(facts, operators, names)
        assert goal <= end_state, f"plan replay misses goal (trial {trial})"
    assert solvable >= 50  # the sample genuinely exercises the planner
    _report(3, f"planner oracle equivalence over {solvable} solvable domains",
            started, budget=60.0)


def _seq_of(run, kind, **payload_filter):
    out = []
    for event in run.trace.events:
        if event.kind != kind:
            continue
        if all(event.payload.get(k) == v for k, v in payload_filter.items()):
            out.append(event.seq)
    return out


def test_criterion_4_bundled_scenarios():
    budgets = {}
    for name in ("la1", "la2a", "la2b", "la3", "la4"):
        started = time.monotonic()
        run = run_scenario(load_bundled_scenario(name))
        failures = [(r.assertion.description, r.detail)
                    for r in run.results if not r.passed]
        assert run.passed, (name, failures)
        budgets[name] = time.monotonic() - started
        assert budgets[name] < 5.0, name

        if name == "la1":
            assert _seq_of(run, "decomposition") == []
            gap_warnings = _seq_of(
                run, "warning", message="no egress safeguard configured")
            assert len(gap_warnings) == 1
        elif name == "la2a":
            elected = _seq_of(run, "leader_elected")
            assert len(elected) == 1
            plans = _seq_of(run, "plan_created")
            assert plans and elected[0] < min(plans)
        elif name == "la2b":
            assert _seq_of(run, "leader_elected") == []
        elif name == "la3":
            blocked = _seq_of(run, "guardrail_verdict", axis="response",
                              decision="block")
            allowed = _seq_of(run, "guardrail_verdict", axis="response",
                              decision="allow")
            assert blocked and allowed
            assert min(blocked) < min(allowed)
        elif name == "la4":
            assert len(_seq_of(run, "decomposition")) >= 2
            assert len(_seq_of(run, "profile_set")) >= 2
            for event in run.trace.of_kind("tool_payload_delivered"):
                if event.payload["external"]:
                    assert "S3CR3T" not in event.payload["delivered"]
            assert _seq_of(run, "guardrail_verdict", axis="prompt",
                           decision="block")
    started = time.monotonic() - sum(budgets.values())
    print(f"[ACCEPTANCE] criterion 4 (bundled scenario suite): PASS "
          f"({sum(budgets.values()):.2f}s, slowest "
          f"{max(budgets.values()):.2f}s of 5s per-scenario budget)")


def test_criterion_5_security_properties():
    started = time.monotonic()
    rng = random.Random(2024)
    alphabet = "abcdefghijklmnopqrstuvwxyz0123456789 _-"
    external = ToolSpec(tool_id="api", external=True)
    internal = ToolSpec(tool_id="calc", external=False)
    for _ in range(1000):
        secrets = tuple(
            "".join(rng.choice(alphabet[:36]) for _ in range(rng.randint(3, 12)))
            for _ in range(rng.randint(1, 3)))
        payload = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 50)))
        for secret in secrets:
            cut = rng.randint(0, len(payload))
            payload = payload[:cut] + secret + payload[cut:]
        policy = Policy(secrets=secrets)
        filtered, verdict = filter_egress(payload, external, policy)
        for secret in secrets:
            assert secret not in filtered
        assert verdict.decision in ("redact", "block")
        response_verdict = check_response(payload, policy)
        if response_verdict.decision == "redact":
            for secret in secrets:
                assert secret not in response_verdict.redacted_text
        untouched, allow = filter_egress(payload, internal, policy)
        assert untouched == payload and allow.decision == "allow"
    # precedence on constructed conflicts: block > redact > allow
    conflict = Policy(deny_patterns=("topsecret",), secrets=("topsecret",))
    _, verdict = filter_egress("send topsecret now", external, conflict)
    assert verdict.decision == "block"
    assert check_response("say topsecret", conflict).decision == "block"
    redact_only = Policy(secrets=("topsecret",))
    assert check_response("say topsecret", redact_only).decision == "redact"
    assert check_response("benign", redact_only).decision == "allow"
    _report(5, "redaction soundness and precedence", started, budget=10.0)


def test_criterion_6_memory_properties():
    started = time.monotonic()
    rng = random.Random(31337)
    store = MemoryStore(capacity=8)
    live_tasks = [f"t{i}" for i in range(4)]
    for step in range(10_000):
        roll = rng.random()
        if roll < 0.55:
            key = f"k{rng.randint(0, 40)}"
            content = f"payload-{step}"
            scope = MemoryScope.long_term() if rng.random() < 0.5 \
                else MemoryScope.short_term(rng.choice(live_tasks))
            store.write(MemoryRecord(key=key, content=content,
                                     scope=scope,
                                     importance=rng.random()))
            got = store.read_by_key(key)
            assert got and got[0].content == content  # read-after-write
        elif roll < 0.8:
            store.read_by_key(f"k{rng.randint(0, 40)}")
        elif roll < 0.9:
            store.forget_enforce()
        else:
            task = rng.choice(live_tasks)
            expected = {k for k, r in store.records.items()
                        if not (r.scope.kind == "short_term"
                                and r.scope.task_id == task)}
            store.end_task_scope(task)
            assert set(store.records) == expected  # set-difference oracle
        assert len(store) <= 8  # capacity invariant after every op
    _report(6, "memory capacity and scoping over 10k ops", started,
            budget=10.0)


def test_criterion_7_structural_invariants():
    started = time.monotonic()
    with pytest.raises(TopologyInvalid):
        CoreAgent(core_agent_id="p", kind=CoreAgentKind.PASSIVE,
                  matrix=ModuleMatrix(action=Presence.PRESENT),
                  memory=MemoryStore(capacity=2))
    with pytest.raises(TopologyInvalid):
        CoreAgent(core_agent_id="p", kind=CoreAgentKind.PASSIVE,
                  matrix=ModuleMatrix(action=Presence.PRESENT),
                  profiles=(Profile("x", "pluggable", adapter_tag="t"),))
    with pytest.raises(TopologyInvalid):
        CoreAgent(core_agent_id="p", kind=CoreAgentKind.PASSIVE,
                  matrix=ModuleMatrix(action=Presence.PRESENT),
                  planner=PlannerConfig())
    for name in ("la1", "la2a", "la2b", "la3", "la4", "detach"):
        run = run_scenario(load_bundled_scenario(name))
        passive_ids = {
            agent.core_agent_id
            for agent in run.orchestrator.topology.passives()
        }
        privacy_verdicts = {}
        for event in run.trace.events:
            if event.kind == "human_msg":
                assert event.payload["recipient"] not in passive_ids, name
            if event.kind == "guardrail_verdict" \
                    and event.payload["axis"] == "privacy":
                privacy_verdicts[event.payload["correlation"]] = event.seq
            if event.kind == "tool_payload_delivered" \
                    and event.payload["external"]:
                call_id = event.payload["call_id"]
                assert call_id in privacy_verdicts, (name, call_id)
                assert privacy_verdicts[call_id] < event.seq, (name, call_id)
    _report(7, "structural invariants over all suite traces", started,
            budget=5.0)


def test_criterion_8_gateway_routing_determinism():
    started = time.monotonic()
    gateway = Gateway(ttl=10)
    gateway.advance(5)
    gateway.register(GatewayRegistration("A", frozenset({"math"}), capacity=4))
    gateway.advance(4)
    gateway.register(GatewayRegistration("B", frozenset({"math"}), capacity=4))
    gateway.advance(2)
    gateway.register(GatewayRegistration("C", frozenset({"text"}), capacity=4))
    # equal loads: the earliest registration among domain matches wins
    assert gateway.route({"math"}) == "A"
    # A now carries load 1, so the min-load match wins
    assert gateway.route({"math"}) == "B"
    # no domain match at all: fall back to every eligible registrant
    assert gateway.route({"finance"}) == "C"
    # only a non-matching registrant remains available: it is selected
    gateway.heartbeat("A", status="busy")
    gateway.heartbeat("B", status="busy")
    assert gateway.route({"math"}) == "C"
    # TTL expiry: silence beyond the TTL flips to offline and excludes
    gateway.heartbeat("B", load=0, status="available")
    gateway.advance(11)
    assert gateway.registrations["B"].status == "offline"
    assert gateway.registrations["C"].status == "offline"
    with pytest.raises(NoAvailableCoreAgent):
        gateway.route({"math"})
    _report(8, "gateway routing fixture", started, budget=1.0)
