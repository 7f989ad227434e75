"""Action module: inline API-call parsing, tool execution behind the egress
gate, chained-request surfacing, and read-only repository queries."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .core import ToolSpec, UmfError
from .memory import MemoryStore, cosine, embed
from .security import Policy, Verdict, filter_egress

TRIGGERS = ("plan_following", "api_call_request")
GOALS = ("task_completion", "communication", "environment_exploration")
IMPACTS = ("environment_change", "internal_state_change", "chained")


class UnknownTool(UmfError):
    pass


class ToolFailure(UmfError):
    """Tool-level failure; the orchestrator turns it into tool feedback
    rather than crashing the run."""


class BlockedByPolicy(UmfError):
    """Egress verdict was block; nothing was delivered to the tool."""

    def __init__(self, message: str, verdict: Verdict | None = None) -> None:
        super().__init__(message)
        self.verdict = verdict


class UnknownRepository(UmfError):
    pass


@dataclass(frozen=True)
class ActionRequest:
    trigger: str
    goal: str
    target: str
    args: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.trigger not in TRIGGERS:
            raise ValueError(f"unknown trigger {self.trigger!r}")
        if self.goal not in GOALS:
            raise ValueError(f"unknown goal {self.goal!r}")


@dataclass(frozen=True)
class Delivery:
    """What actually crossed the tool boundary, for the trace."""

    pre_filter: str
    delivered: str
    verdict: Verdict | None = None


@dataclass(frozen=True)
class ActionResult:
    output: str
    impact: frozenset[str] = frozenset()
    chained_requests: tuple[ActionRequest, ...] = ()
    delivery: Delivery | None = None

    def __post_init__(self) -> None:
        if ("chained" in self.impact) != bool(self.chained_requests):
            raise ValueError("chained impact iff chained_requests nonempty")


@dataclass(frozen=True)
class InlineCall:
    tool_id: str
    args: dict[str, str]
    span: tuple[int, int]


_IDENT = re.compile(r"[A-Za-z0-9_]+")
_MARKER = "[CALL "


def parse_inline_calls(text: str) -> list[InlineCall]:
    """Scan for ``[CALL tool(name="value", ...)]`` markers, in textual order.
    Values are double-quoted with backslash escapes for ``"`` and ``\\``.
    Malformed markers are skipped, never fatal."""
    calls: list[InlineCall] = []
    pos = 0
    while True:
        start = text.find(_MARKER, pos)
        if start == -1:
            return calls
        parsed = _parse_one(text, start)
        if parsed is None:
            pos = start + len(_MARKER)
        else:
            calls.append(parsed)
            pos = parsed.span[1]


def _parse_one(text: str, start: int) -> InlineCall | None:
    pos = start + len(_MARKER)
    ident = _IDENT.match(text, pos)
    if not ident:
        return None
    tool_id = ident.group(0)
    pos = ident.end()
    if not text.startswith("(", pos):
        return None
    pos += 1
    args: dict[str, str] = {}
    if text.startswith(")", pos):
        pos += 1
    else:
        while True:
            name_match = _IDENT.match(text, pos)
            if not name_match:
                return None
            name = name_match.group(0)
            pos = name_match.end()
            if not text.startswith('="', pos):
                return None
            pos += 2
            value, pos = _scan_quoted(text, pos)
            if pos == -1 or name in args:
                return None
            args[name] = value
            if text.startswith(",", pos):
                pos += 1
                while text.startswith(" ", pos):
                    pos += 1
                continue
            if text.startswith(")", pos):
                pos += 1
                break
            return None
    if not text.startswith("]", pos):
        return None
    return InlineCall(tool_id, args, (start, pos + 1))


def _scan_quoted(text: str, pos: int) -> tuple[str, int]:
    """Consume a double-quoted value body starting after the opening quote;
    returns (value, position after closing quote) or ("", -1) on failure."""
    chars: list[str] = []
    while pos < len(text):
        ch = text[pos]
        if ch == "\\":
            if pos + 1 >= len(text) or text[pos + 1] not in ('"', "\\"):
                return "", -1
            chars.append(text[pos + 1])
            pos += 2
        elif ch == '"':
            return "".join(chars), pos + 1
        else:
            chars.append(ch)
            pos += 1
    return "", -1


def render_inline_call(call: InlineCall) -> str:
    """Inverse of the parser for well-formed calls (span ignored)."""
    parts = []
    for name, value in call.args.items():
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        parts.append(f'{name}="{escaped}"')
    return f"[CALL {call.tool_id}({', '.join(parts)})]"


def serialize_args(args: dict[str, str]) -> str:
    """Newline-separated ``name=value`` lines; the payload form every tool
    boundary and egress filter sees. Values must not contain newlines."""
    return "\n".join(f"{k}={v}" for k, v in args.items())


def deserialize_args(payload: str) -> dict[str, str]:
    args: dict[str, str] = {}
    if not payload:
        return args
    for line in payload.split("\n"):
        name, _, value = line.partition("=")
        args[name] = value
    return args


class ToolContext:
    """Hand-off object for tool behaviors: delivered payload, the shared
    environment bag, and an optional memory store (writes are tracked so the
    action impact can report internal state changes)."""

    def __init__(self, payload: str, env: dict[str, str] | None = None,
                 memory: MemoryStore | None = None) -> None:
        self.payload = payload
        self.env = env if env is not None else {}
        self.memory = memory
        self.wrote_memory = False

    def write_memory(self, record) -> None:
        if self.memory is None:
            raise ToolFailure("no memory store attached")
        self.memory.write(record)
        self.wrote_memory = True


@dataclass(frozen=True)
class Tool:
    spec: ToolSpec
    behavior: object  # callable(args: dict[str, str], ctx: ToolContext) -> str


class ToolRegistry:
    """Tool inventory plus the named key-value environment bag that only
    tools flagged ``mutates_env`` may change."""

    def __init__(self) -> None:
        self.tools: dict[str, Tool] = {}
        self.env: dict[str, str] = {}

    def add(self, tool: Tool) -> None:
        if tool.spec.tool_id in self.tools:
            raise ValueError(f"duplicate tool_id {tool.spec.tool_id!r}")
        self.tools[tool.spec.tool_id] = tool

    def get(self, tool_id: str) -> Tool:
        if tool_id not in self.tools:
            raise UnknownTool(f"tool {tool_id!r} is not registered")
        return self.tools[tool_id]

    def __contains__(self, tool_id: str) -> bool:
        return tool_id in self.tools

    def ids(self) -> list[str]:
        return sorted(self.tools)


def execute_action(request: ActionRequest, tools: ToolRegistry,
                   guard: Policy | None = None,
                   memory: MemoryStore | None = None) -> ActionResult:
    """Run one tool-targeted action. External tools only ever see the
    egress-filtered payload; chained calls found in the tool output are
    surfaced, never executed here."""
    tool = tools.get(request.target)
    pre_filter = serialize_args(request.args)
    delivered = pre_filter
    verdict: Verdict | None = None
    if tool.spec.external and guard is not None:
        delivered, verdict = filter_egress(pre_filter, tool.spec, guard)
        if verdict.decision == "block":
            raise BlockedByPolicy(
                f"egress to {tool.spec.tool_id!r} blocked by "
                f"{verdict.matched_rule}", verdict=verdict)
    args = deserialize_args(delivered) if delivered != pre_filter else dict(request.args)
    ctx = ToolContext(payload=delivered, env=tools.env, memory=memory)
    output = tool.behavior(args, ctx)
    impact = set()
    if ctx.wrote_memory:
        impact.add("internal_state_change")
    if tool.spec.mutates_env:
        impact.add("environment_change")
    chained = tuple(
        ActionRequest(trigger="api_call_request", goal="task_completion",
                      target=call.tool_id, args=call.args)
        for call in parse_inline_calls(output)
    )
    if chained:
        impact.add("chained")
    return ActionResult(output=output, impact=frozenset(impact),
                        chained_requests=chained,
                        delivery=Delivery(pre_filter, delivered, verdict))


def query_repository(repositories: dict[str, list[str]], repo_id: str,
                     query: str, top_n: int) -> list[tuple[str, float]]:
    """Rank a read-only passage corpus by trigram-embedding cosine similarity
    to the query; ties keep corpus order. Never mutates the corpus."""
    if top_n < 1:
        raise ValueError("top_n must be at least 1")
    if repo_id not in repositories:
        raise UnknownRepository(f"repository {repo_id!r} is not loaded")
    query_vec = embed(query)
    scored = [(passage, cosine(query_vec, embed(passage)))
              for passage in repositories[repo_id]]
    ranked = sorted(range(len(scored)), key=lambda i: (-scored[i][1], i))
    return [scored[i] for i in ranked[:top_n]]


# Built-in mock tool behaviors (wired up from scenario files).

_NUMBER = re.compile(r"\d+(?:\.\d+)?")


class _ExprParser:
    """Tiny recursive-descent evaluator for + - * / with parentheses and
    unary minus; the calculator's whole action space."""

    def __init__(self, text: str) -> None:
        self.text = text
        self.pos = 0

    def parse(self) -> float:
        value = self._expr()
        self._skip_ws()
        if self.pos != len(self.text):
            raise ToolFailure(f"malformed expression at offset {self.pos}")
        return value

    def _skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] == " ":
            self.pos += 1

    def _expr(self) -> float:
        value = self._term()
        while True:
            self._skip_ws()
            if self.pos < len(self.text) and self.text[self.pos] in "+-":
                op = self.text[self.pos]
                self.pos += 1
                rhs = self._term()
                value = value + rhs if op == "+" else value - rhs
            else:
                return value

    def _term(self) -> float:
        value = self._factor()
        while True:
            self._skip_ws()
            if self.pos < len(self.text) and self.text[self.pos] in "*/":
                op = self.text[self.pos]
                self.pos += 1
                rhs = self._factor()
                if op == "*":
                    value = value * rhs
                else:
                    if rhs == 0:
                        raise ToolFailure("division by zero")
                    value = value / rhs
            else:
                return value

    def _factor(self) -> float:
        self._skip_ws()
        if self.pos < len(self.text) and self.text[self.pos] == "-":
            self.pos += 1
            return -self._factor()
        if self.pos < len(self.text) and self.text[self.pos] == "(":
            self.pos += 1
            value = self._expr()
            self._skip_ws()
            if self.pos >= len(self.text) or self.text[self.pos] != ")":
                raise ToolFailure("unbalanced parentheses")
            self.pos += 1
            return value
        match = _NUMBER.match(self.text, self.pos)
        if not match:
            raise ToolFailure(f"malformed expression at offset {self.pos}")
        self.pos = match.end()
        return float(match.group(0))


def _format_number(value: float) -> str:
    if value == int(value):
        return str(int(value))
    return repr(value)


def calculator_behavior(args: dict[str, str], ctx: ToolContext) -> str:
    return _format_number(_ExprParser(args.get("expr", "")).parse())


def make_translator_behavior(phrase_map: dict[str, str]):
    def translator(args: dict[str, str], ctx: ToolContext) -> str:
        text = args.get("text", "")
        return phrase_map.get(text, text)
    return translator


def make_repository_behavior(repositories: dict[str, list[str]], repo_id: str,
                             top_n: int = 1):
    def lookup(args: dict[str, str], ctx: ToolContext) -> str:
        hits = query_repository(repositories, repo_id, args.get("query", ""), top_n)
        return " | ".join(passage for passage, _ in hits) if hits else ""
    return lookup


def echo_behavior(args: dict[str, str], ctx: ToolContext) -> str:
    return ctx.payload


def make_static_behavior(output: str):
    def static(args: dict[str, str], ctx: ToolContext) -> str:
        return output
    return static


def make_code_runner_behavior(results: dict[str, str]):
    def runner(args: dict[str, str], ctx: ToolContext) -> str:
        code = args.get("code", "")
        if code not in results:
            raise ToolFailure(f"no scripted result for code {code!r}")
        return results[code]
    return runner


def memory_store_behavior(args: dict[str, str], ctx: ToolContext) -> str:
    """Stores one tabular row under ``key`` in the executing agent's memory."""
    from .memory import MemoryRecord  # local to avoid clutter at import time

    key = args.get("key")
    if not key:
        raise ToolFailure("memory store requires a key argument")
    row = {name: value for name, value in args.items() if name != "key"}
    ctx.write_memory(MemoryRecord(key=key, content=row, format="tabular_row",
                                  importance=0.8))
    return f"stored:{key}"


def make_env_setter_behavior():
    def setter(args: dict[str, str], ctx: ToolContext) -> str:
        for name, value in args.items():
            ctx.env[name] = value
        return "env-updated"
    return setter
