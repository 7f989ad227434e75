"""Scenario engine: loads scenario files, wires topologies from their
inventories, runs every task through the orchestrator, and evaluates the
scenario's trace assertions."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .action import (
    Tool,
    ToolRegistry,
    calculator_behavior,
    echo_behavior,
    make_code_runner_behavior,
    make_env_setter_behavior,
    make_repository_behavior,
    make_static_behavior,
    make_translator_behavior,
    memory_store_behavior,
)
from .core import (
    CoreAgentKind,
    ModuleMatrix,
    Presence,
    ScriptRule,
    ScriptedModel,
    ToolSpec,
    UmfError,
)
from .memory import MemoryStore
from .orchestration import (
    CoreAgent,
    Orchestrator,
    PlannerConfig,
    Topology,
    TraceEvent,
    Tracer,
)
from .planning import Operator, TaskSpec
from .profile import Profile, align_profile
from .security import Policy

BUNDLED_SCENARIOS = ("la1", "la2a", "la2b", "la3", "la4", "detach")

ASSERTION_KINDS = (
    "event_count",
    "event_order",
    "forbid_substring_in_external_payload",
    "require_event",
    "forbid_event",
)


class ScenarioInvalid(UmfError):
    pass


@dataclass(frozen=True)
class AssertionSpec:
    kind: str
    description: str
    event: str | None = None
    min_count: int | None = None
    max_count: int | None = None
    first: str | None = None
    then: str | None = None
    text: str | None = None
    where: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AssertionResult:
    assertion: AssertionSpec
    passed: bool
    detail: str


@dataclass
class ScenarioSpec:
    scenario_id: str
    raw: dict

    @property
    def seed(self) -> int:
        return int(self.raw.get("seed", 1))


@dataclass
class ScenarioRun:
    scenario_id: str
    seed: int
    trace: Tracer
    results: list[AssertionResult]
    orchestrator: Orchestrator

    @property
    def passed(self) -> bool:
        return all(result.passed for result in self.results)

    def memory_dump(self) -> dict:
        return {
            agent.core_agent_id: agent.memory.dump()
            for agent in self.orchestrator.topology.core_agents
            if agent.memory is not None
        }


def load_scenario(path: str | Path) -> ScenarioSpec:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ScenarioInvalid(f"cannot read scenario file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ScenarioInvalid(f"scenario file is not valid JSON: {exc}") from exc
    return parse_scenario(data)


def load_bundled_scenario(name: str) -> ScenarioSpec:
    if name not in BUNDLED_SCENARIOS:
        raise ScenarioInvalid(f"no bundled scenario named {name!r}")
    raw = resources.files("umf").joinpath(f"data/scenarios/{name}.json") \
        .read_text(encoding="utf-8")
    return parse_scenario(json.loads(raw))


def bundled_scenario_path(name: str) -> Path:
    return Path(str(resources.files("umf").joinpath(f"data/scenarios/{name}.json")))


def parse_scenario(data: dict) -> ScenarioSpec:
    scenario_id = data.get("scenario_id")
    if not scenario_id:
        raise ScenarioInvalid("scenario_id is required")
    spec = ScenarioSpec(scenario_id=scenario_id, raw=data)
    _validate(spec)
    return spec


def _validate(spec: ScenarioSpec) -> None:
    """Resolve every cross-reference at load time so a bad scenario fails
    before anything runs."""
    data = spec.raw
    tool_ids = {t["tool_id"] for t in data.get("tools", [])}
    policy_ids = {p["policy_id"] for p in data.get("policies", [])}
    profile_ids = {p["profile_id"] for p in data.get("profiles", [])}
    domain_ids = set(data.get("domains", {}))
    repo_ids = set(data.get("repositories", {}))
    agents = data.get("core_agents", [])
    if not agents:
        raise ScenarioInvalid("a scenario needs at least one core-agent")
    passive_ids = {a["core_agent_id"] for a in agents
                   if a.get("kind") == "passive"}
    for tool in data.get("tools", []):
        repo = tool.get("config", {}).get("repository")
        if repo is not None and repo not in repo_ids:
            raise ScenarioInvalid(
                f"tool {tool['tool_id']!r} references unknown repository {repo!r}")
    for agent in agents:
        agent_id = agent.get("core_agent_id", "?")
        for tool_id in agent.get("tools", []):
            if tool_id not in tool_ids:
                raise ScenarioInvalid(
                    f"agent {agent_id!r} references unknown tool {tool_id!r}")
        policy = agent.get("policy")
        if policy is not None and policy not in policy_ids:
            raise ScenarioInvalid(
                f"agent {agent_id!r} references unknown policy {policy!r}")
        for profile_id in agent.get("profiles", []):
            if profile_id not in profile_ids:
                raise ScenarioInvalid(
                    f"agent {agent_id!r} references unknown profile {profile_id!r}")
        planner = agent.get("planner", {})
        domain = planner.get("rule_domain")
        if domain is not None and domain not in domain_ids:
            raise ScenarioInvalid(
                f"agent {agent_id!r} references unknown domain {domain!r}")
        for profile_id in planner.get("subtask_profiles", []):
            if profile_id not in agent.get("profiles", []):
                raise ScenarioInvalid(
                    f"agent {agent_id!r} rotates unheld profile {profile_id!r}")
    static_profile = data.get("static_profile")
    if static_profile is not None and static_profile not in profile_ids:
        raise ScenarioInvalid(
            f"static_profile references unknown profile {static_profile!r}")
    for entry in data.get("attached", []):
        if entry not in passive_ids:
            raise ScenarioInvalid(
                f"attached entry {entry!r} is not a passive core-agent")
    for item in data.get("tasks", []):
        control = item.get("control")
        if control is not None:
            if control.get("op") not in ("attach", "detach"):
                raise ScenarioInvalid(
                    f"unknown control op {control.get('op')!r}")
            if control.get("target") not in passive_ids:
                raise ScenarioInvalid(
                    f"control target {control.get('target')!r} is not a "
                    "passive core-agent")
        elif not item.get("task_id"):
            raise ScenarioInvalid("task entries need a task_id")
    for raw in data.get("assertions", []):
        _parse_assertion(raw)


def _parse_assertion(raw: dict) -> AssertionSpec:
    kind = raw.get("kind")
    if kind not in ASSERTION_KINDS:
        raise ScenarioInvalid(f"unknown assertion kind {kind!r}")
    spec = AssertionSpec(
        kind=kind,
        description=raw.get("description", kind),
        event=raw.get("event"),
        min_count=raw.get("min"),
        max_count=raw.get("max"),
        first=raw.get("first"),
        then=raw.get("then"),
        text=raw.get("text"),
        where=raw.get("where", {}),
    )
    if kind == "event_count" and spec.event is None:
        raise ScenarioInvalid("event_count assertions need an event kind")
    if kind == "event_order" and (spec.first is None or spec.then is None):
        raise ScenarioInvalid("event_order assertions need first and then")
    if kind == "forbid_substring_in_external_payload" and not spec.text:
        raise ScenarioInvalid("forbid_substring assertions need text")
    if kind in ("require_event", "forbid_event") and spec.event is None:
        raise ScenarioInvalid(f"{kind} assertions need an event kind")
    return spec


_TOOL_BEHAVIOR_KINDS = ("calculator", "translator", "repository_lookup",
                        "remote_api", "static", "code_runner", "memory_store",
                        "env_setter")


def _build_tool(raw: dict, repositories: dict[str, list[str]]) -> Tool:
    kind = raw.get("kind")
    config = raw.get("config", {})
    spec = ToolSpec(
        tool_id=raw["tool_id"],
        domains=frozenset(raw.get("domains", [])),
        external=bool(raw.get("external", False)),
        arg_names=tuple(raw.get("arg_names", [])),
        mutates_env=bool(raw.get("mutates_env", False)) or kind == "env_setter",
    )
    if kind == "calculator":
        behavior = calculator_behavior
    elif kind == "translator":
        behavior = make_translator_behavior(dict(config.get("phrases", {})))
    elif kind == "repository_lookup":
        behavior = make_repository_behavior(repositories, config["repository"],
                                            int(config.get("top_n", 1)))
    elif kind == "remote_api":
        behavior = echo_behavior
    elif kind == "static":
        behavior = make_static_behavior(config.get("output", ""))
    elif kind == "code_runner":
        behavior = make_code_runner_behavior(dict(config.get("results", {})))
    elif kind == "memory_store":
        behavior = memory_store_behavior
    elif kind == "env_setter":
        behavior = make_env_setter_behavior()
    else:
        raise ScenarioInvalid(f"unknown tool kind {kind!r}; expected one of "
                              f"{_TOOL_BEHAVIOR_KINDS}")
    return Tool(spec=spec, behavior=behavior)


def _build_policy(raw: dict) -> Policy:
    return Policy(
        policy_id=raw["policy_id"],
        deny_patterns=tuple(raw.get("deny_patterns", [])),
        canonical_forms=tuple(raw.get("canonical_forms", [])),
        jaccard_threshold=float(raw.get("jaccard_threshold", 0.8)),
        secrets=tuple(raw.get("secrets", [])),
        blocked_categories=frozenset(raw.get("blocked_categories", [])),
        mode=raw.get("mode", "rule_based"),
    )


def _build_profile(raw: dict) -> Profile:
    if raw.get("method") == "dataset_aligned" and "template" in raw:
        aligned = align_profile(raw.get("record", {}), raw["template"])
        return Profile(
            profile_id=raw["profile_id"],
            method="dataset_aligned",
            system_text=aligned.system_text,
            source_record=aligned.source_record,
        ).validate()
    return Profile(
        profile_id=raw["profile_id"],
        method=raw["method"],
        system_text=raw.get("system_text"),
        adapter_tag=raw.get("adapter_tag"),
    ).validate()


def _build_operators(raw_domain: dict) -> tuple[Operator, ...]:
    return tuple(
        Operator(
            name=op["name"],
            preconditions=frozenset(op.get("preconditions", [])),
            add_effects=frozenset(op.get("add_effects", [])),
            del_effects=frozenset(op.get("del_effects", [])),
        )
        for op in raw_domain.get("operators", [])
    )


def _derive_matrix(kind: CoreAgentKind, has_policy: bool, has_memory: bool,
                   has_profiles: bool) -> ModuleMatrix:
    if kind is CoreAgentKind.PASSIVE:
        return ModuleMatrix(
            action=Presence.PRESENT,
            security=Presence.PRESENT if has_policy else Presence.ABSENT,
        )
    return ModuleMatrix(
        planning=Presence.PRESENT,
        profile=Presence.PRESENT if has_profiles else Presence.ABSENT,
        memory=Presence.PRESENT if has_memory else Presence.ABSENT,
        action=Presence.PRESENT,
        security=Presence.PRESENT if has_policy else Presence.ABSENT,
    )


def _build_agent(raw: dict, tools: dict[str, Tool],
                 policies: dict[str, Policy],
                 profiles: dict[str, Profile]) -> CoreAgent:
    kind = CoreAgentKind.ACTIVE if raw.get("kind") == "active" \
        else CoreAgentKind.PASSIVE
    registry = ToolRegistry()
    for tool_id in raw.get("tools", []):
        registry.add(tools[tool_id])
    policy = policies[raw["policy"]] if raw.get("policy") else None
    memory = None
    held_profiles: tuple[Profile, ...] = ()
    planner = None
    if kind is CoreAgentKind.ACTIVE:
        memory = MemoryStore(capacity=int(raw.get("memory_capacity", 32)))
        held_profiles = tuple(profiles[pid] for pid in raw.get("profiles", []))
        planner_raw = raw.get("planner", {})
        planner = PlannerConfig(
            decompose_mode=planner_raw.get("decompose_mode", "non_iterative"),
            strategy=planner_raw.get("strategy", "single_path"),
            k=int(planner_raw.get("k", 1)),
            techniques=tuple(planner_raw.get("techniques", ["lm_powered"])),
            rule_operators=(),  # filled by caller once domains are built
            rule_max_depth=6,
            subtask_profiles=tuple(planner_raw.get("subtask_profiles", [])),
            answer_candidates=int(planner_raw.get("answer_candidates", 1)),
            record_results=bool(planner_raw.get("record_results", False)),
        )
    return CoreAgent(
        core_agent_id=raw["core_agent_id"],
        kind=kind,
        matrix=_derive_matrix(kind, policy is not None, memory is not None,
                              bool(held_profiles)),
        tools=registry,
        policy=policy,
        memory=memory,
        profiles=held_profiles,
        planner=planner,
        domains=frozenset(raw.get("domains", [])),
    )


def build_run(spec: ScenarioSpec, seed: int) -> Orchestrator:
    """Construct a fresh orchestrator for one scenario run; every run builds
    its own topology so repeated runs stay independent."""
    data = spec.raw
    repositories = {name: list(passages)
                    for name, passages in data.get("repositories", {}).items()}
    tools = {raw["tool_id"]: _build_tool(raw, repositories)
             for raw in data.get("tools", [])}
    policies = {raw["policy_id"]: _build_policy(raw)
                for raw in data.get("policies", [])}
    profiles = {raw["profile_id"]: _build_profile(raw)
                for raw in data.get("profiles", [])}
    domains = data.get("domains", {})
    agents = []
    for raw in data.get("core_agents", []):
        agent = _build_agent(raw, tools, policies, profiles)
        planner_raw = raw.get("planner", {})
        domain_name = planner_raw.get("rule_domain")
        if agent.planner is not None and domain_name:
            raw_domain = domains[domain_name]
            agent.planner = dataclasses.replace(
                agent.planner,
                rule_operators=_build_operators(raw_domain),
                rule_max_depth=int(raw_domain.get("max_depth", 6)))
        agents.append(agent)
    passive_ids = [a.core_agent_id for a in agents
                   if a.kind is CoreAgentKind.PASSIVE]
    attached = set(data.get("attached", passive_ids))
    model = ScriptedModel([
        ScriptRule(
            rule_id=raw.get("rule_id", f"rule{i}"),
            match=raw["match"],
            responses=tuple(raw.get("responses", [])),
            required_adapter_tag=raw.get("adapter_tag"),
        )
        for i, raw in enumerate(data.get("model_rules", []))
    ])
    static_profile = profiles[data["static_profile"]] \
        if data.get("static_profile") else None
    topology = Topology(
        architecture=data["architecture"],
        core_agents=agents,
        model=model,
        attached=attached,
        static_profile=static_profile,
    )
    election = dict(data.get("election", {}))
    election.setdefault("seed", seed)
    return Orchestrator(
        topology,
        repositories=repositories,
        step_cap=int(data.get("step_cap", 100)),
        seed=seed,
        election=election,
    )


def _build_task(raw: dict) -> TaskSpec:
    return TaskSpec(
        task_id=raw["task_id"],
        goal_text=raw.get("goal_text", ""),
        domain_tags=frozenset(raw.get("domain_tags", [])),
        facts=frozenset(raw.get("facts", [])),
        goal_atoms=frozenset(raw["goal_atoms"]) if "goal_atoms" in raw else None,
    )


def run_scenario(spec: ScenarioSpec, seed_override: int | None = None) -> ScenarioRun:
    """Build the topology, run every task (and control directive) in order,
    then evaluate the scenario assertions over the finished trace."""
    seed = spec.seed if seed_override is None else seed_override
    orchestrator = build_run(spec, seed)
    for item in spec.raw.get("tasks", []):
        control = item.get("control")
        if control is not None:
            if control["op"] == "attach":
                orchestrator.attach(control["target"])
            else:
                orchestrator.detach(control["target"])
            continue
        orchestrator.run_task(_build_task(item))
    assertions = [_parse_assertion(raw)
                  for raw in spec.raw.get("assertions", [])]
    results = check_assertions(orchestrator.trace.events, assertions)
    return ScenarioRun(scenario_id=spec.scenario_id, seed=seed,
                       trace=orchestrator.trace, results=results,
                       orchestrator=orchestrator)


# -- assertion evaluation ----------------------------------------------------

def _matches(event: TraceEvent, where: dict) -> bool:
    for key, expected in where.items():
        actual = event.actor if key == "actor" else event.payload.get(key)
        if actual != expected:
            return False
    return True


def check_assertions(events: list[TraceEvent],
                     assertions: list[AssertionSpec]) -> list[AssertionResult]:
    """Evaluate each assertion independently; never mutates the trace."""
    return [_check_one(events, assertion) for assertion in assertions]


def _check_one(events: list[TraceEvent],
               assertion: AssertionSpec) -> AssertionResult:
    if assertion.kind == "event_count":
        count = sum(1 for e in events if e.kind == assertion.event
                    and _matches(e, assertion.where))
        low = assertion.min_count if assertion.min_count is not None else 0
        ok = count >= low and (assertion.max_count is None
                               or count <= assertion.max_count)
        high = "inf" if assertion.max_count is None else assertion.max_count
        return AssertionResult(
            assertion, ok,
            f"{assertion.event} count {count}, wanted [{low}, {high}]")
    if assertion.kind == "event_order":
        first_seqs = [e.seq for e in events if e.kind == assertion.first]
        then_seqs = [e.seq for e in events if e.kind == assertion.then]
        if not first_seqs or not then_seqs:
            return AssertionResult(
                assertion, False,
                f"need both {assertion.first} and {assertion.then} events")
        ok = min(first_seqs) < min(then_seqs)
        return AssertionResult(
            assertion, ok,
            f"first {assertion.first} at seq {min(first_seqs)}, first "
            f"{assertion.then} at seq {min(then_seqs)}")
    if assertion.kind == "forbid_substring_in_external_payload":
        offenders = [
            e.seq for e in events
            if e.kind == "tool_payload_delivered" and e.payload.get("external")
            and assertion.text in e.payload.get("delivered", "")
        ]
        return AssertionResult(
            assertion, not offenders,
            "clean" if not offenders
            else f"substring found in delivered payloads at seqs {offenders}")
    if assertion.kind == "require_event":
        hits = [e.seq for e in events if e.kind == assertion.event
                and _matches(e, assertion.where)]
        return AssertionResult(
            assertion, bool(hits),
            f"{len(hits)} matching {assertion.event} events")
    if assertion.kind == "forbid_event":
        hits = [e.seq for e in events if e.kind == assertion.event
                and _matches(e, assertion.where)]
        return AssertionResult(
            assertion, not hits,
            "clean" if not hits
            else f"forbidden {assertion.event} events at seqs {hits}")
    raise ScenarioInvalid(f"unknown assertion kind {assertion.kind!r}")
