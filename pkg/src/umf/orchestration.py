"""Orchestration: assembles core-agents, the model port, tools, and policies
into the four multi-core topologies, runs tasks end-to-end onto an append-only
trace, and provides the gateway plus the passive attach/detach switch."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .action import (
    ActionRequest,
    BlockedByPolicy,
    ToolFailure,
    ToolRegistry,
    UnknownTool,
    execute_action,
    parse_inline_calls,
)
from .core import (
    CoreAgentKind,
    EnvelopeLog,
    ModelRequest,
    ModuleMatrix,
    Presence,
    ScriptedModel,
    UmfError,
    validate_module_matrix,
)
from .consensus import run_election
from .memory import MemoryRecord, MemoryScope, MemoryStore
from .planning import (
    Feedback,
    RuleBasedTechnique,
    Subtask,
    TaskSpec,
    decompose,
    generate_plans,
    incorporate_feedback,
    select_plan,
)
from .profile import Profile, apply_profile
from .security import Policy, Verdict, check_prompt, check_response

ARCHITECTURES = (
    "single_active",
    "single_passive",
    "uniform_passive",
    "uniform_active",
    "hybrid_one_active",
    "many_active_many_passive",
)

EVENT_KINDS = (
    "task_received",
    "decomposition",
    "plan_created",
    "plan_selected",
    "profile_set",
    "model_call",
    "inline_call_parsed",
    "tool_called",
    "tool_payload_delivered",
    "guardrail_verdict",
    "memory_write",
    "memory_read",
    "route_selected",
    "leader_elected",
    "attach",
    "detach",
    "human_msg",
    "warning",
    "task_done",
)

DEFAULT_STEP_CAP = 100
GATEWAY_TTL = 10

WARN_NO_EGRESS_GUARD = "no egress safeguard configured"
WARN_PASSIVE_PROMPT = "prompt safeguarding delegated to the model"


class TopologyInvalid(UmfError):
    pass


class StepLimitExceeded(UmfError):
    pass


class ElectionFailed(UmfError):
    pass


class DuplicateRegistration(UmfError):
    pass


class NoAvailableCoreAgent(UmfError):
    pass


class UnknownPassiveAgent(UmfError):
    pass


class AlreadyAttached(UmfError):
    pass


class NotAttached(UmfError):
    pass


@dataclass(frozen=True)
class TraceEvent:
    seq: int
    tick: int
    kind: str
    actor: str
    payload: dict

    def to_json(self) -> str:
        # Field order is part of the wire contract.
        return json.dumps({"seq": self.seq, "tick": self.tick,
                           "kind": self.kind, "actor": self.actor,
                           "payload": self.payload})


class Tracer:
    """Append-only event log; seq is gapless from 0, tick advances at the
    orchestrator's step boundaries."""

    def __init__(self) -> None:
        self.events: list[TraceEvent] = []
        self.tick = 0

    def advance(self) -> None:
        self.tick += 1

    def emit(self, kind: str, actor: str, **payload) -> TraceEvent:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown trace event kind {kind!r}")
        event = TraceEvent(seq=len(self.events), tick=self.tick, kind=kind,
                           actor=actor, payload=payload)
        self.events.append(event)
        return event

    def of_kind(self, kind: str) -> list[TraceEvent]:
        return [e for e in self.events if e.kind == kind]

    def to_jsonl(self) -> str:
        return "".join(event.to_json() + "\n" for event in self.events)


@dataclass(frozen=True)
class PlannerConfig:
    """How an active core-agent plans: decomposition mode, strategy and
    per-subtask techniques, profile rotation, and answer-phase width."""

    decompose_mode: str = "non_iterative"
    strategy: str = "single_path"
    k: int = 1
    techniques: tuple[str, ...] = ("lm_powered",)
    rule_operators: tuple = ()
    rule_max_depth: int = 6
    subtask_profiles: tuple[str, ...] = ()
    answer_candidates: int = 1
    record_results: bool = False


@dataclass
class CoreAgent:
    """One core-agent with exactly the module instances its kind permits.
    Passive construction with planning, memory, or profile state is rejected
    outright."""

    core_agent_id: str
    kind: CoreAgentKind
    matrix: ModuleMatrix
    tools: ToolRegistry = field(default_factory=ToolRegistry)
    policy: Policy | None = None
    memory: MemoryStore | None = None
    profiles: tuple[Profile, ...] = ()
    planner: PlannerConfig | None = None
    domains: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        validate_module_matrix(self.matrix)
        if self.kind is CoreAgentKind.PASSIVE:
            if self.memory is not None or self.profiles or self.planner is not None:
                raise TopologyInvalid(
                    f"passive core-agent {self.core_agent_id!r} cannot own "
                    "planning, memory, or profile instances")
            for name in ("planning", "memory", "profile"):
                if getattr(self.matrix, name) is not Presence.ABSENT:
                    raise TopologyInvalid(
                        f"passive core-agent {self.core_agent_id!r} declares "
                        f"a {name} module in its matrix")
        elif self.kind is CoreAgentKind.ACTIVE:
            if self.planner is None:
                raise TopologyInvalid(
                    f"active core-agent {self.core_agent_id!r} needs a "
                    "planning configuration")
        else:
            raise TopologyInvalid("only active or passive core-agents can be "
                                  "instantiated")

    def profile_by_id(self, profile_id: str) -> Profile:
        for profile in self.profiles:
            if profile.profile_id == profile_id:
                return profile
        raise TopologyInvalid(f"agent {self.core_agent_id!r} holds no "
                              f"profile {profile_id!r}")


@dataclass
class Topology:
    architecture: str
    core_agents: list[CoreAgent]
    model: ScriptedModel
    attached: set[str] = field(default_factory=set)
    static_profile: Profile | None = None
    model_bindings: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.architecture not in ARCHITECTURES:
            raise TopologyInvalid(f"unknown architecture {self.architecture!r}")
        ids = [a.core_agent_id for a in self.core_agents]
        if len(set(ids)) != len(ids):
            raise TopologyInvalid("core-agent ids must be unique")
        actives = len(self.actives())
        passives = len(self.passives())
        rules = {
            "single_active": (actives == 1 and passives == 0,
                              "exactly one active, no passives"),
            "single_passive": (actives == 0 and passives == 1,
                               "exactly one passive, no actives"),
            "uniform_passive": (actives == 0 and passives >= 1,
                                "passives only"),
            "uniform_active": (actives >= 2 and passives == 0,
                               "two or more actives, no passives"),
            "hybrid_one_active": (actives == 1 and passives >= 1,
                                  "one active plus passive workers"),
            "many_active_many_passive": (actives >= 2 and passives >= 1,
                                         "two or more actives plus passives"),
        }
        ok, description = rules[self.architecture]
        if not ok:
            raise TopologyInvalid(
                f"{self.architecture} requires {description}")
        passive_ids = {a.core_agent_id for a in self.passives()}
        unknown = self.attached - passive_ids
        if unknown:
            raise TopologyInvalid(
                f"attached set names unknown passives: {sorted(unknown)}")

    def actives(self) -> list[CoreAgent]:
        return [a for a in self.core_agents if a.kind is CoreAgentKind.ACTIVE]

    def passives(self) -> list[CoreAgent]:
        return [a for a in self.core_agents if a.kind is CoreAgentKind.PASSIVE]

    def agent(self, core_agent_id: str) -> CoreAgent:
        for agent in self.core_agents:
            if agent.core_agent_id == core_agent_id:
                return agent
        raise TopologyInvalid(f"unknown core-agent {core_agent_id!r}")

    def attached_passives(self) -> list[CoreAgent]:
        return [a for a in self.passives() if a.core_agent_id in self.attached]


def attach_passive(topology: Topology, passive_id: str) -> Topology:
    passive_ids = {a.core_agent_id for a in topology.passives()}
    if passive_id not in passive_ids:
        raise UnknownPassiveAgent(f"{passive_id!r} is not a passive "
                                  "core-agent in this topology")
    if passive_id in topology.attached:
        raise AlreadyAttached(f"{passive_id!r} is already attached")
    topology.attached.add(passive_id)
    return topology


def detach_passive(topology: Topology, passive_id: str) -> Topology:
    passive_ids = {a.core_agent_id for a in topology.passives()}
    if passive_id not in passive_ids:
        raise UnknownPassiveAgent(f"{passive_id!r} is not a passive "
                                  "core-agent in this topology")
    if passive_id not in topology.attached:
        raise NotAttached(f"{passive_id!r} is not attached")
    topology.attached.remove(passive_id)
    return topology


@dataclass
class GatewayRegistration:
    core_agent_id: str
    domains: frozenset[str]
    capacity: int
    load: int = 0
    status: str = "available"
    registered_at: int = 0
    last_heartbeat: int = 0

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ValueError("capacity must be positive")
        if self.load > self.capacity:
            raise ValueError("load must not exceed capacity")
        if self.status not in ("available", "busy", "offline"):
            raise ValueError(f"unknown status {self.status!r}")


class Gateway:
    """Registration and routing for active core-agents: selection prefers a
    domain match, then minimum load, then earliest registration. Registrants
    silent past the TTL flip to offline."""

    def __init__(self, ttl: int = GATEWAY_TTL) -> None:
        self.ttl = ttl
        self.now = 0
        self.registrations: dict[str, GatewayRegistration] = {}

    def advance(self, ticks: int = 1) -> None:
        self.now += ticks
        self._expire()

    def _expire(self) -> None:
        for reg in self.registrations.values():
            if self.now - reg.last_heartbeat > self.ttl:
                reg.status = "offline"

    def register(self, reg: GatewayRegistration) -> None:
        if reg.core_agent_id in self.registrations:
            raise DuplicateRegistration(
                f"{reg.core_agent_id!r} is already registered")
        reg.registered_at = self.now
        reg.last_heartbeat = self.now
        self.registrations[reg.core_agent_id] = reg

    def heartbeat(self, core_agent_id: str, load: int | None = None,
                  status: str | None = None) -> None:
        reg = self.registrations.get(core_agent_id)
        if reg is None:
            raise NoAvailableCoreAgent(f"{core_agent_id!r} never registered")
        if load is not None:
            reg.load = load
        if status is not None:
            reg.status = status
        elif reg.status == "offline":
            reg.status = "available"
        reg.last_heartbeat = self.now

    def route(self, task_domains: frozenset[str] | set[str]) -> str:
        """Pick the serving core-agent and charge one unit of load to it."""
        if not self.registrations:
            raise NoAvailableCoreAgent("no registrations exist")
        self._expire()
        eligible = [r for r in self.registrations.values()
                    if r.status == "available"]
        if not eligible:
            raise NoAvailableCoreAgent("no registrant is available")
        matching = [r for r in eligible if r.domains & set(task_domains)]
        pool = matching if matching else eligible
        winner = min(pool, key=lambda r: (r.load, r.registered_at))
        winner.load += 1
        if winner.load >= winner.capacity:
            winner.status = "busy"
        return winner.core_agent_id


_EMPTY_POLICY = Policy(policy_id="unconfigured")


class _ModelPort:
    """Model port handed to planning/profile/security code: applies the
    ambient profiles, charges the step budget, and traces the exchange."""

    def __init__(self, orchestrator: "Orchestrator", actor: str,
                 profiles: tuple[Profile, ...] = (), purpose: str = "") -> None:
        self._orch = orchestrator
        self._actor = actor
        self._profiles = profiles
        self._purpose = purpose

    def complete(self, request: ModelRequest):
        for profile in self._profiles:
            request = apply_profile(profile, request)
        self._orch._consume_step()
        response = self._orch.topology.model.complete(request)
        self._orch.trace.emit(
            "model_call", self._actor,
            prompt=request.prompt,
            system_prefix=request.system_prefix,
            adapter_tags=sorted(request.adapter_tags),
            candidates=list(response.candidates),
            source=response.source,
            purpose=self._purpose,
        )
        return response


class _TaskBlocked(Exception):
    """Internal control flow: a blocking verdict ended the task."""


class Orchestrator:
    """Runs tasks against one topology, appending every observable action to
    the trace. One instance drives one scenario run."""

    def __init__(self, topology: Topology, repositories: dict[str, list[str]] | None = None,
                 step_cap: int = DEFAULT_STEP_CAP, seed: int = 1,
                 election: dict | None = None, gateway: Gateway | None = None,
                 trace: Tracer | None = None) -> None:
        self.topology = topology
        self.repositories = repositories if repositories is not None else {}
        self.step_cap = step_cap
        self.seed = seed
        self.election = election or {}
        self.gateway = gateway
        self.trace = trace if trace is not None else Tracer()
        self.envelopes = EnvelopeLog()
        self.leader_id: str | None = None
        self._steps_used = 0
        self._call_counter = 0
        self._warned_no_guard = False
        self._advised_passive_prompt = False

    # -- bookkeeping -------------------------------------------------------

    def _consume_step(self) -> None:
        self._steps_used += 1
        if self._steps_used > self.step_cap:
            raise StepLimitExceeded(
                f"step cap of {self.step_cap} exceeded")

    def _next_call_id(self) -> str:
        self._call_counter += 1
        return f"c{self._call_counter:03d}"

    # -- topology switch ----------------------------------------------------

    def attach(self, passive_id: str) -> None:
        attach_passive(self.topology, passive_id)
        self.trace.advance()
        self.trace.emit("attach", "orchestrator", passive_id=passive_id)

    def detach(self, passive_id: str) -> None:
        detach_passive(self.topology, passive_id)
        self.trace.advance()
        self.trace.emit("detach", "orchestrator", passive_id=passive_id)

    # -- task entry ---------------------------------------------------------

    def run_task(self, task: TaskSpec) -> None:
        """Execute one task under the topology's architecture-specific flow.
        Terminal states: task_done, a blocking verdict, or StepLimitExceeded."""
        self._steps_used = 0
        self.trace.advance()
        try:
            if self.topology.architecture in ("single_passive", "uniform_passive"):
                self._run_passive_flow(task)
            else:
                self._run_active_flow(task, self._orchestrating_agent(task))
        except _TaskBlocked:
            pass

    def _orchestrating_agent(self, task: TaskSpec) -> CoreAgent:
        actives = self.topology.actives()
        if self.topology.architecture in ("single_active", "hybrid_one_active"):
            return actives[0]
        if self.gateway is not None:
            chosen = self.gateway.route(task.domain_tags)
            reg = self.gateway.registrations[chosen]
            self.trace.emit("route_selected", "gateway", core_agent_id=chosen,
                            domains=sorted(reg.domains), load=reg.load)
            return self.topology.agent(chosen)
        if self.leader_id is None:
            result = run_election(
                node_ids=[a.core_agent_id for a in actives],
                drop_prob=float(self.election.get("drop_prob", 0.0)),
                delay=tuple(self.election.get("delay", (1, 2))),
                seed=int(self.election.get("seed", self.seed)),
                max_ticks=int(self.election.get("max_ticks", 100)),
            )
            if result.timed_out:
                raise ElectionFailed(
                    f"no leader within {self.election.get('max_ticks', 100)} ticks")
            self.leader_id = result.leader
            self.trace.emit("leader_elected", result.leader,
                            term=result.term, ticks=result.ticks_elapsed)
        return self.topology.agent(self.leader_id)

    # -- passive flow ---------------------------------------------------

    def _run_passive_flow(self, task: TaskSpec) -> None:
        """The human message goes to the model front, never to a passive
        core-agent; the model's inline calls dispatch to passive workers
        until a candidate arrives without calls."""
        if not self._advised_passive_prompt:
            self._advised_passive_prompt = True
            self.trace.emit("warning", "orchestrator",
                            message=WARN_PASSIVE_PROMPT)
        envelope = self.envelopes.post("human", "model", "human_msg",
                                       task.goal_text)
        self.trace.emit("human_msg", "human", recipient="model",
                        content=task.goal_text, msg_id=envelope.msg_id)
        self.trace.emit("task_received", "model", task_id=task.task_id,
                        correlation=envelope.msg_id)
        profiles: tuple[Profile, ...] = ()
        if self.topology.static_profile is not None:
            profiles = (self.topology.static_profile,)
            self.trace.emit("profile_set", "orchestrator",
                            profile_id=self.topology.static_profile.profile_id,
                            method=self.topology.static_profile.method,
                            subtask_id=None)
        port = _ModelPort(self, "model", profiles, purpose="frontend")
        prompt = task.goal_text
        answer = None
        while answer is None:
            candidate = port.complete(ModelRequest(prompt=prompt)).first
            calls = parse_inline_calls(candidate)
            if not calls:
                answer = candidate
                break
            self.trace.advance()
            parsed = []
            for call in calls:
                call_id = self._next_call_id()
                self.trace.emit("inline_call_parsed", "model",
                                tool_id=call.tool_id, args=dict(call.args),
                                span=list(call.span), call_id=call_id)
                parsed.append((call, call_id))
            results = []
            for call, call_id in parsed:
                try:
                    owner = self._owner_of(call.tool_id)
                except UnknownTool as exc:
                    self.trace.emit("warning", "model",
                                    message=f"tool failure: {exc}",
                                    hint="proceed", call_id=call_id)
                    results.append(f"TOOL-ERROR: {exc}")
                    continue
                results.append(self._dispatch_tool(
                    owner, call.tool_id, dict(call.args), call_id,
                    guard_owner=None))
            # splice right to left so earlier spans stay valid
            rewritten = candidate
            for (call, _), result_text in zip(reversed(parsed),
                                              reversed(results)):
                start, end = call.span
                rewritten = rewritten[:start] + result_text + rewritten[end:]
            prompt = rewritten
        self.trace.emit("task_done", "model", task_id=task.task_id,
                        answer=answer, status="ok")

    # -- active flow ------------------------------------------------------

    def _run_active_flow(self, task: TaskSpec, active: CoreAgent) -> None:
        actor = active.core_agent_id
        envelope = self.envelopes.post("human", actor, "human_msg",
                                       task.goal_text)
        self.trace.emit("human_msg", "human", recipient=actor,
                        content=task.goal_text, msg_id=envelope.msg_id)
        self.trace.emit("task_received", actor, task_id=task.task_id,
                        correlation=envelope.msg_id)
        guard_port = _ModelPort(self, actor, purpose="guardrail")
        if active.policy is not None:
            verdict = check_prompt(task.goal_text, active.policy,
                                   model=guard_port)
            self._emit_verdict(actor, verdict, correlation=envelope.msg_id)
            if verdict.decision == "block":
                raise _TaskBlocked()
        planner = active.planner
        plain_port = _ModelPort(self, actor, purpose="planning")
        outcomes: list[tuple[str, str]] = []
        if planner.decompose_mode == "non_iterative":
            subtasks = decompose(task, "non_iterative", [], plain_port)
            for subtask in subtasks:
                self.trace.emit("decomposition", actor, task_id=task.task_id,
                                subtask_id=subtask.subtask_id,
                                ordinal=subtask.ordinal,
                                goal_text=subtask.goal_text)
            for subtask in subtasks:
                result = self._run_subtask(task, subtask, active)
                outcomes.append((subtask.subtask_id, result))
        else:
            while True:
                subtask = decompose(task, "iterative", outcomes, plain_port)
                if subtask is None:
                    break
                self.trace.emit("decomposition", actor, task_id=task.task_id,
                                subtask_id=subtask.subtask_id,
                                ordinal=subtask.ordinal,
                                goal_text=subtask.goal_text)
                result = self._run_subtask(task, subtask, active)
                outcomes.append((subtask.subtask_id, result))
        answer = self._answer_phase(task, active, outcomes, guard_port)
        if active.memory is not None:
            active.memory.end_task_scope(task.task_id)
        self.trace.emit("task_done", actor, task_id=task.task_id,
                        answer=answer, status="ok")

    def _answer_phase(self, task: TaskSpec, active: CoreAgent,
                      outcomes: list[tuple[str, str]], guard_port) -> str:
        actor = active.core_agent_id
        results = "; ".join(result for _, result in outcomes)
        prompt = f"ANSWER: {task.goal_text} | RESULTS: {results}"
        port = _ModelPort(self, actor, purpose="answer")
        response = port.complete(ModelRequest(
            prompt=prompt, max_candidates=active.planner.answer_candidates))
        for candidate in response.candidates:
            if active.policy is None:
                return candidate
            verdict = check_response(candidate, active.policy,
                                     model=guard_port)
            self._emit_verdict(actor, verdict, correlation=None)
            if verdict.decision == "block":
                continue
            if verdict.decision == "redact":
                return verdict.redacted_text
            return candidate
        raise _TaskBlocked()

    def _run_subtask(self, task: TaskSpec, subtask: Subtask,
                     active: CoreAgent) -> str:
        self.trace.advance()
        actor = active.core_agent_id
        planner = active.planner
        profiles: tuple[Profile, ...] = ()
        if planner.subtask_profiles:
            profile_id = planner.subtask_profiles[
                subtask.ordinal % len(planner.subtask_profiles)]
            profile = active.profile_by_id(profile_id)
            profiles = (profile,)
            self.trace.emit("profile_set", actor, profile_id=profile.profile_id,
                            method=profile.method,
                            subtask_id=subtask.subtask_id)
        technique_name = planner.techniques[
            subtask.ordinal % len(planner.techniques)]
        inventory = self._tool_inventory(active)
        if technique_name == "rule_based":
            if task.goal_atoms is None:
                raise TopologyInvalid(
                    f"task {task.task_id!r} carries no goal atoms for "
                    "rule-based planning")
            technique = RuleBasedTechnique(
                facts=task.facts, operators=planner.rule_operators,
                goal=task.goal_atoms, max_depth=planner.rule_max_depth)
        else:
            technique = "lm_powered"
        port = _ModelPort(self, actor, profiles, purpose="planning")
        plans = generate_plans(subtask, planner.strategy, technique,
                               model=port, k=planner.k,
                               tool_inventory=inventory)
        for plan in plans:
            self.trace.emit("plan_created", actor, subtask_id=subtask.subtask_id,
                            plan_id=plan.plan_id,
                            steps=[{"op": s.op, "target": s.target}
                                   for s in plan.steps],
                            cost=plan.cost, technique=technique_name)
        selected = select_plan(plans)
        self.trace.emit("plan_selected", actor, subtask_id=subtask.subtask_id,
                        plan_id=selected.plan_id, considered=len(plans))
        step_results: list[str] = []
        for step in selected.steps:
            step_results.append(
                self._execute_step(step, subtask, active, profiles))
        result = "; ".join(step_results) if step_results else "ok"
        if planner.record_results and active.memory is not None:
            record = MemoryRecord(
                key=subtask.subtask_id, content=result,
                format="natural_language",
                scope=MemoryScope.short_term(task.task_id), importance=0.5)
            active.memory.write(record)
            self.trace.emit("memory_write", actor, agent=actor,
                            key=record.key, scope="short_term",
                            format=record.format)
        return result

    def _execute_step(self, step, subtask: Subtask, active: CoreAgent,
                      profiles: tuple[Profile, ...]) -> str:
        if step.op == "tool_call":
            try:
                owner = self._owner_of(step.target, active)
            except UnknownTool as exc:
                # an unreachable tool is step-level feedback, not a crash;
                # the run still terminates through task_done
                self.trace.emit("warning", active.core_agent_id,
                                message=f"tool failure: {exc}", hint="proceed",
                                call_id=None)
                return f"TOOL-ERROR: {exc}"
            call_id = self._next_call_id()
            return self._dispatch_tool(owner, step.target, dict(step.args),
                                       call_id, guard_owner=active,
                                       subtask=subtask)
        if step.op == "model_call":
            port = _ModelPort(self, active.core_agent_id, profiles,
                              purpose="step")
            return port.complete(
                ModelRequest(prompt=step.args.get("prompt", ""))).first
        if step.op == "memory_op":
            return self._memory_step(step, active)
        if step.op == "emit":
            if step.target != "human":
                raise TopologyInvalid(
                    f"emit steps may only target the human channel, "
                    f"got {step.target!r}")
            envelope = self.envelopes.post(active.core_agent_id, "human",
                                           "human_msg",
                                           step.args.get("content", ""))
            self.trace.emit("human_msg", active.core_agent_id,
                            recipient="human",
                            content=step.args.get("content", ""),
                            msg_id=envelope.msg_id)
            return "emitted"
        raise TopologyInvalid(f"unsupported step op {step.op!r}")

    def _memory_step(self, step, active: CoreAgent) -> str:
        if active.memory is None:
            raise TopologyInvalid(
                f"{active.core_agent_id!r} has no memory module")
        actor = active.core_agent_id
        if step.target == "write":
            record = MemoryRecord(key=step.args["key"],
                                  content=step.args.get("content", ""),
                                  format=step.args.get("format",
                                                       "natural_language"))
            active.memory.write(record)
            self.trace.emit("memory_write", actor, agent=actor,
                            key=record.key, scope=record.scope.kind,
                            format=record.format)
            return "written"
        if step.target == "read":
            hits = active.memory.read_by_key(step.args["key"])
            self.trace.emit("memory_read", actor, agent=actor,
                            query_kind="by_key",
                            keys=[r.key for r in hits])
            return str(hits[0].content) if hits else ""
        raise TopologyInvalid(f"unsupported memory op {step.target!r}")

    # -- tool dispatch -----------------------------------------------------

    def _tool_inventory(self, active: CoreAgent) -> list[str]:
        inventory = set(active.tools.ids())
        for worker in self.topology.attached_passives():
            inventory.update(worker.tools.ids())
        return sorted(inventory)

    def _owner_of(self, tool_id: str, active: CoreAgent | None = None) -> CoreAgent:
        for worker in self.topology.attached_passives():
            if tool_id in worker.tools:
                return worker
        if active is not None and tool_id in active.tools:
            return active
        raise UnknownTool(f"no attached core-agent owns tool {tool_id!r}")

    def _resolve_guard(self, owner: CoreAgent,
                       guard_owner: CoreAgent | None) -> Policy:
        """Egress policy: the orchestrating active's security module filters
        all worker dispatches; a lone worker falls back to its own policy.
        Absent both, an unconfigured policy records the gap."""
        if guard_owner is not None and guard_owner.policy is not None:
            return guard_owner.policy
        if owner.policy is not None:
            return owner.policy
        return _EMPTY_POLICY

    def _dispatch_tool(self, owner: CoreAgent, tool_id: str,
                       args: dict[str, str], call_id: str,
                       guard_owner: CoreAgent | None = None,
                       subtask: Subtask | None = None) -> str:
        self._consume_step()
        actor = owner.core_agent_id
        guard = self._resolve_guard(owner, guard_owner)
        tool = owner.tools.get(tool_id)
        if tool.spec.external and guard is _EMPTY_POLICY \
                and not self._warned_no_guard:
            self._warned_no_guard = True
            self.trace.emit("warning", "orchestrator",
                            message=WARN_NO_EGRESS_GUARD, tool_id=tool_id)
        request = ActionRequest(trigger="api_call_request",
                                goal="task_completion", target=tool_id,
                                args=args)
        self.trace.emit("tool_called", actor, tool_id=tool_id,
                        call_id=call_id, args=args)
        attempts = 0
        while True:
            try:
                result = execute_action(request, owner.tools, guard=guard,
                                        memory=owner.memory)
                break
            except BlockedByPolicy as exc:
                self._emit_verdict(actor, exc.verdict, correlation=call_id)
                raise _TaskBlocked() from exc
            except ToolFailure as exc:
                feedback = Feedback(source="tool", content=f"error: {exc}")
                hint = incorporate_feedback((subtask, ""), feedback)
                self.trace.emit("warning", actor,
                                message=f"tool failure: {exc}", hint=hint,
                                call_id=call_id)
                if hint == "retry" and attempts == 0:
                    attempts += 1
                    continue
                return f"TOOL-ERROR: {exc}"
        delivery = result.delivery
        if delivery.verdict is not None:
            self._emit_verdict(actor, delivery.verdict, correlation=call_id)
        self.trace.emit("tool_payload_delivered", actor, tool_id=tool_id,
                        call_id=call_id, external=tool.spec.external,
                        pre_filter=delivery.pre_filter,
                        delivered=delivery.delivered)
        if "internal_state_change" in result.impact:
            self.trace.emit("memory_write", actor, agent=actor,
                            key=args.get("key", ""), scope="long_term",
                            format="tabular_row")
        for chained in result.chained_requests:
            self.trace.emit("inline_call_parsed", actor,
                            tool_id=chained.target, args=dict(chained.args),
                            span=None, call_id=self._next_call_id(),
                            parent_call_id=call_id)
        return result.output

    def _emit_verdict(self, actor: str, verdict: Verdict,
                      correlation: str | None) -> None:
        self.trace.emit("guardrail_verdict", actor, axis=verdict.axis,
                        decision=verdict.decision,
                        matched_rule=verdict.matched_rule,
                        correlation=correlation,
                        redacted=verdict.redacted_text is not None)


def run_task(topology: Topology, task: TaskSpec,
             repositories: dict[str, list[str]] | None = None,
             seed: int = 1, step_cap: int = DEFAULT_STEP_CAP,
             election: dict | None = None) -> Tracer:
    """One-shot convenience wrapper: run a single task on a fresh trace."""
    orchestrator = Orchestrator(topology, repositories=repositories,
                                seed=seed, step_cap=step_cap,
                                election=election)
    orchestrator.run_task(task)
    return orchestrator.trace
