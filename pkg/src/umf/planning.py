"""Planning module: task decomposition (iterative and non-iterative), plan
generation under single-path and multi-path strategies with rule-based and
model-powered techniques, plan selection, and feedback incorporation."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from .action import parse_inline_calls
from .core import ModelRequest, ScriptedModel, UmfError


class MalformedDecomposition(UmfError):
    pass


class NoPlanFound(UmfError):
    pass


class MalformedPlan(UmfError):
    pass


class EmptyPlanSet(UmfError):
    pass


STEP_OPS = ("tool_call", "model_call", "memory_op", "emit")
FEEDBACK_SOURCES = ("human", "tool", "sibling")

DONE_MARKER = "DONE"

DEFAULT_FAILURE_LEXICON = ("error", "exception", "fail")
DEFAULT_ABORT_LEXICON = ("ABORT",)


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    goal_text: str
    domain_tags: frozenset[str] = frozenset()
    facts: frozenset[str] = frozenset()
    goal_atoms: frozenset[str] | None = None


@dataclass(frozen=True)
class Subtask:
    subtask_id: str
    parent: str
    ordinal: int
    goal_text: str
    depends_on: tuple[str, ...] = ()


@dataclass(frozen=True)
class Step:
    op: str
    target: str
    args: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.op not in STEP_OPS:
            raise ValueError(f"unknown step op {self.op!r}")


@dataclass(frozen=True)
class Plan:
    plan_id: str
    subtask_id: str
    steps: tuple[Step, ...]
    cost: float

    @classmethod
    def of(cls, plan_id: str, subtask_id: str, steps: tuple[Step, ...]) -> "Plan":
        return cls(plan_id, subtask_id, steps, cost=float(len(steps)))


@dataclass(frozen=True)
class Operator:
    name: str
    preconditions: frozenset[str]
    add_effects: frozenset[str]
    del_effects: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.add_effects & self.del_effects:
            raise ValueError("add and delete effects must be disjoint")

    def applicable(self, state: frozenset[str]) -> bool:
        return self.preconditions <= state

    def apply(self, state: frozenset[str]) -> frozenset[str]:
        return (state - self.del_effects) | self.add_effects


@dataclass(frozen=True)
class Feedback:
    source: str
    content: str
    rating: float | None = None

    def __post_init__(self) -> None:
        if self.source not in FEEDBACK_SOURCES:
            raise ValueError(f"unknown feedback source {self.source!r}")
        if self.rating is not None and not 0.0 <= self.rating <= 1.0:
            raise ValueError("rating must lie in [0, 1]")


@dataclass(frozen=True)
class RuleBasedTechnique:
    """Materialized rule-based planning input: initial facts and goal atoms
    from the owning task plus the domain's operator set."""

    facts: frozenset[str]
    operators: tuple[Operator, ...]
    goal: frozenset[str]
    max_depth: int = 6


def decompose_prompt(task: TaskSpec,
                     prior_outcomes: list[tuple[str, str]] | None = None) -> str:
    if prior_outcomes is None:
        return f"DECOMPOSE: {task.goal_text}"
    outcomes = "; ".join(f"{sid}:{result}" for sid, result in prior_outcomes)
    return f"DECOMPOSE-NEXT: {task.goal_text} | OUTCOMES: {outcomes}"


def plan_prompt(subtask: Subtask, tool_inventory: list[str] | None = None) -> str:
    prompt = f"PLAN: {subtask.goal_text}"
    if tool_inventory is not None:
        prompt += " | TOOLS: " + ",".join(sorted(tool_inventory))
    return prompt


def decompose(task: TaskSpec, mode: str,
              prior_outcomes: list[tuple[str, str]],
              model: ScriptedModel):
    """Break a task into subtasks through the model port.

    ``non_iterative`` returns the full ordered subtask list parsed one per
    nonempty reply line. ``iterative`` returns exactly one new subtask whose
    ordinal continues from ``prior_outcomes``, or None once the model answers
    with the done marker (or nothing at all).
    """
    if mode == "non_iterative":
        reply = model.complete(ModelRequest(prompt=decompose_prompt(task))).first
        lines = [line.strip() for line in reply.split("\n") if line.strip()]
        if not lines:
            raise MalformedDecomposition(
                f"model produced no subtasks for task {task.task_id!r}")
        return [
            Subtask(subtask_id=f"{task.task_id}-s{i}", parent=task.task_id,
                    ordinal=i, goal_text=line)
            for i, line in enumerate(lines)
        ]
    if mode == "iterative":
        prompt = decompose_prompt(task, prior_outcomes)
        reply = model.complete(ModelRequest(prompt=prompt)).first.strip()
        if not reply or reply == DONE_MARKER:
            return None
        ordinal = len(prior_outcomes)
        return Subtask(subtask_id=f"{task.task_id}-s{ordinal}",
                       parent=task.task_id, ordinal=ordinal,
                       goal_text=reply.split("\n", 1)[0].strip())
    raise ValueError(f"unknown decomposition mode {mode!r}")


def rule_based_plan(facts: frozenset[str], operators: tuple[Operator, ...],
                    goal: frozenset[str], max_depth: int,
                    subtask_id: str = "rule", plan_id: str = "rule-p00") -> Plan:
    """Breadth-first search over atom states for a shortest operator
    sequence reaching the goal; ties resolve to the sequence that tries
    operators in declaration order first. Deterministic."""
    if goal <= facts:
        return Plan.of(plan_id, subtask_id, ())
    queue: deque[tuple[frozenset[str], tuple[int, ...]]] = deque([(facts, ())])
    visited = {facts}
    while queue:
        state, seq = queue.popleft()
        if len(seq) >= max_depth:
            continue
        for index, op in enumerate(operators):
            if not op.applicable(state):
                continue
            successor = op.apply(state)
            if successor in visited:
                continue
            next_seq = seq + (index,)
            if goal <= successor:
                steps = tuple(Step("tool_call", operators[i].name)
                              for i in next_seq)
                return Plan.of(plan_id, subtask_id, steps)
            visited.add(successor)
            queue.append((successor, next_seq))
    raise NoPlanFound(
        f"goal {sorted(goal)} unreachable within depth {max_depth}")


def enumerate_rule_based_plans(facts: frozenset[str],
                               operators: tuple[Operator, ...],
                               goal: frozenset[str], max_depth: int,
                               limit: int) -> list[tuple[str, ...]]:
    """Up to ``limit`` distinct goal-reaching operator-name sequences, in
    breadth-first (shortest-or-longer) order. Goal states are terminal:
    sequences are not extended past their first goal hit."""
    found: list[tuple[str, ...]] = []
    if goal <= facts:
        found.append(())
        if len(found) >= limit:
            return found
    queue: deque[tuple[frozenset[str], tuple[str, ...]]] = deque([(facts, ())])
    while queue and len(found) < limit:
        state, seq = queue.popleft()
        if len(seq) >= max_depth:
            continue
        for op in operators:
            if not op.applicable(state):
                continue
            successor = op.apply(state)
            next_seq = seq + (op.name,)
            if goal <= successor:
                found.append(next_seq)
                if len(found) >= limit:
                    break
            else:
                queue.append((successor, next_seq))
    return found


def replay(facts: frozenset[str], operators: tuple[Operator, ...],
           names: tuple[str, ...]) -> frozenset[str]:
    """Apply a named operator sequence from the initial facts; raises if a
    precondition fails along the way."""
    by_name = {op.name: op for op in operators}
    state = facts
    for name in names:
        op = by_name[name]
        if not op.applicable(state):
            raise NoPlanFound(f"operator {name!r} inapplicable during replay")
        state = op.apply(state)
    return state


def generate_plans(subtask: Subtask, strategy: str, technique,
                   model: ScriptedModel | None = None, k: int = 1,
                   tool_inventory: list[str] | None = None) -> list[Plan]:
    """Candidate plans for one subtask.

    ``single_path`` yields exactly one plan; ``multi_path`` yields up to
    ``k`` distinct plans (k >= 2). ``technique`` is either the string
    ``"lm_powered"`` or a RuleBasedTechnique; model candidates parse into
    tool-call steps through the inline-call grammar.
    """
    if strategy not in ("single_path", "multi_path"):
        raise ValueError(f"unknown strategy {strategy!r}")
    if strategy == "multi_path" and k < 2:
        raise ValueError("multi_path requires k >= 2")
    want = 1 if strategy == "single_path" else k

    if isinstance(technique, RuleBasedTechnique):
        if strategy == "single_path":
            return [rule_based_plan(technique.facts, technique.operators,
                                    technique.goal, technique.max_depth,
                                    subtask_id=subtask.subtask_id,
                                    plan_id=f"{subtask.subtask_id}-p00")]
        sequences = enumerate_rule_based_plans(
            technique.facts, technique.operators, technique.goal,
            technique.max_depth, limit=want)
        if not sequences:
            raise NoPlanFound(
                f"goal unreachable within depth {technique.max_depth}")
        return [
            Plan.of(f"{subtask.subtask_id}-p{i:02d}", subtask.subtask_id,
                    tuple(Step("tool_call", name) for name in seq))
            for i, seq in enumerate(sequences)
        ]

    if technique != "lm_powered":
        raise ValueError(f"unknown technique {technique!r}")
    if model is None:
        raise ValueError("lm_powered planning requires a model port")
    response = model.complete(ModelRequest(
        prompt=plan_prompt(subtask, tool_inventory), max_candidates=want))
    plans: list[Plan] = []
    seen: set[tuple[Step, ...]] = set()
    for candidate in response.candidates:
        steps = tuple(
            Step("tool_call", call.tool_id, dict(call.args))
            for call in parse_inline_calls(candidate)
        )
        if not steps:
            raise MalformedPlan(
                f"model candidate parsed to zero steps: {candidate!r}")
        key = tuple((s.op, s.target, tuple(s.args.items())) for s in steps)
        if key in seen:
            continue
        seen.add(key)
        plans.append(Plan.of(f"{subtask.subtask_id}-p{len(plans):02d}",
                             subtask.subtask_id, steps))
    return plans[:want]


def select_plan(plans: list[Plan],
                evaluator: Callable[[Plan], float] | None = None) -> Plan:
    """Argmax of the evaluator score (default: negated cost); ties go to the
    lexicographically smallest plan_id. Invariant under strictly increasing
    score transformations."""
    if not plans:
        raise EmptyPlanSet("no plans to select from")
    score = evaluator if evaluator is not None else (lambda p: -p.cost)
    return min(plans, key=lambda p: (-score(p), p.plan_id))


def incorporate_feedback(plan_state: tuple[Subtask, str] | None,
                         feedback: Feedback,
                         failure_lexicon: tuple[str, ...] = DEFAULT_FAILURE_LEXICON,
                         abort_lexicon: tuple[str, ...] = DEFAULT_ABORT_LEXICON,
                         ) -> str:
    """Map feedback to a revision hint: ``abort`` on a human abort token,
    ``retry`` on a low rating or a tool failure token, else ``proceed``.
    Abort tokens match case-sensitively, failure tokens case-insensitively."""
    if feedback.source == "human" and any(
            token in feedback.content for token in abort_lexicon):
        return "abort"
    if feedback.rating is not None and feedback.rating < 0.5:
        return "retry"
    lowered = feedback.content.lower()
    if feedback.source == "tool" and any(
            token.lower() in lowered for token in failure_lexicon):
        return "retry"
    return "proceed"
