"""Shared vocabulary: module presence, core-agent kinds, message envelopes,
the model/tool port types, and the deterministic scripted model used everywhere
in place of a live LLM."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from enum import Enum


class UmfError(Exception):
    """Base class for every error raised by this package."""


class InvalidMatrix(UmfError):
    """Module matrix violates the action-indispensability rule."""


class Presence(Enum):
    """Presence level of one module inside a core-agent."""

    ABSENT = 0
    MINIMAL = 1
    PRESENT = 2

    def __lt__(self, other: "Presence") -> bool:
        if not isinstance(other, Presence):
            return NotImplemented
        return self.value < other.value

    def __le__(self, other: "Presence") -> bool:
        if not isinstance(other, Presence):
            return NotImplemented
        return self.value <= other.value

    @property
    def symbol(self) -> str:
        return {0: "-", 1: "M", 2: "X"}[self.value]

    @classmethod
    def from_symbol(cls, symbol: str) -> "Presence":
        table = {"-": cls.ABSENT, "M": cls.MINIMAL, "X": cls.PRESENT}
        if symbol not in table:
            raise ValueError(f"unknown presence symbol {symbol!r}")
        return table[symbol]


MODULE_NAMES = ("planning", "profile", "memory", "action", "security")


@dataclass(frozen=True)
class ModuleMatrix:
    """Presence level of each of the five modules; the unit of classification."""

    planning: Presence = Presence.ABSENT
    profile: Presence = Presence.ABSENT
    memory: Presence = Presence.ABSENT
    action: Presence = Presence.ABSENT
    security: Presence = Presence.ABSENT

    def entries(self) -> dict[str, Presence]:
        return {name: getattr(self, name) for name in MODULE_NAMES}

    def all_absent(self) -> bool:
        return all(p is Presence.ABSENT for p in self.entries().values())


class CoreAgentKind(Enum):
    ACTIVE = "active"
    PASSIVE = "passive"
    NOT_AN_AGENT = "not_an_agent"


def validate_module_matrix(matrix: ModuleMatrix) -> ModuleMatrix:
    """Accept a matrix whose action module is non-absent, or the all-absent
    matrix (a not-an-agent candidate); reject everything else."""
    if matrix.action is not Presence.ABSENT or matrix.all_absent():
        return matrix
    raise InvalidMatrix(
        "action module is indispensable: it may be absent only when every "
        "other module is absent as well"
    )


ENVELOPE_KINDS = (
    "task",
    "plan",
    "api_call_request",
    "tool_result",
    "feedback",
    "human_msg",
    "control",
)


@dataclass(frozen=True)
class Envelope:
    """One routed message inside a run. ``correlation``, when set, must name
    an earlier msg_id of the same run (enforced by EnvelopeLog)."""

    msg_id: str
    sender: str
    recipient: str
    kind: str
    payload: object
    correlation: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ENVELOPE_KINDS:
            raise ValueError(f"unknown envelope kind {self.kind!r}")


class EnvelopeLog:
    """Issues run-unique msg ids and rejects correlations to unknown ids,
    which makes correlation chains acyclic by construction."""

    def __init__(self) -> None:
        self._counter = itertools.count(1)
        self._issued: set[str] = set()

    def post(self, sender: str, recipient: str, kind: str, payload: object,
             correlation: str | None = None) -> Envelope:
        if correlation is not None and correlation not in self._issued:
            raise ValueError(f"correlation {correlation!r} does not reference "
                             "an earlier message in this run")
        msg_id = f"m{next(self._counter):04d}"
        self._issued.add(msg_id)
        return Envelope(msg_id, sender, recipient, kind, payload, correlation)


@dataclass(frozen=True)
class ModelRequest:
    prompt: str
    system_prefix: str | None = None
    adapter_tags: tuple[str, ...] = ()
    max_candidates: int = 1

    def __post_init__(self) -> None:
        if self.max_candidates < 1:
            raise ValueError("max_candidates must be positive")

    def with_system_prefix(self, text: str) -> "ModelRequest":
        return replace(self, system_prefix=text)

    def with_adapter_tag(self, tag: str) -> "ModelRequest":
        if tag in self.adapter_tags:
            return self
        return replace(self, adapter_tags=self.adapter_tags + (tag,))


@dataclass(frozen=True)
class ModelResponse:
    candidates: tuple[str, ...]
    source: str

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ValueError("candidates must be nonempty")

    @property
    def first(self) -> str:
        return self.candidates[0]


@dataclass(frozen=True)
class ToolSpec:
    """Registry entry for one tool. ``external`` marks tools outside the
    privacy circle; ``mutates_env`` declares environment-changing behavior."""

    tool_id: str
    domains: frozenset[str] = frozenset()
    external: bool = False
    arg_names: tuple[str, ...] = ()
    mutates_env: bool = False


@dataclass(frozen=True)
class ScriptRule:
    """One scripted-model rule: fires when ``match`` hits the prompt and the
    required adapter tag (if any) is present on the request."""

    rule_id: str
    match: str
    responses: tuple[str, ...]
    required_adapter_tag: str | None = None


def pattern_matches(pattern: str, text: str) -> bool:
    """Literal-substring matching with an optional leading/trailing ``*``.

    The star absorbs arbitrary surrounding text, so after stripping at most
    one star from each end the remaining literal is searched anywhere in
    ``text``. A bare ``*`` (or empty literal) matches everything.
    """
    literal = pattern
    if literal.startswith("*"):
        literal = literal[1:]
    if literal.endswith("*"):
        literal = literal[:-1]
    return literal in text


ECHO_PREFIX = "ECHO:"


def scripted_complete(script: list[ScriptRule] | tuple[ScriptRule, ...],
                      request: ModelRequest) -> ModelResponse:
    """Deterministic model port: the first rule whose pattern matches the
    prompt and whose adapter gate passes yields up to ``max_candidates`` of
    its responses; otherwise an echo of the prompt."""
    for rule in script:
        if rule.required_adapter_tag is not None \
                and rule.required_adapter_tag not in request.adapter_tags:
            continue
        if pattern_matches(rule.match, request.prompt):
            return ModelResponse(
                candidates=tuple(rule.responses[: request.max_candidates]),
                source=rule.rule_id,
            )
    return ModelResponse(candidates=(ECHO_PREFIX + request.prompt,), source="echo")


class ScriptedModel:
    """A scripted model bound to a fixed rule list; stateless and safe to
    share between core-agents."""

    def __init__(self, rules: list[ScriptRule] | tuple[ScriptRule, ...] = ()) -> None:
        self.rules = tuple(rules)

    def complete(self, request: ModelRequest) -> ModelResponse:
        return scripted_complete(self.rules, request)
