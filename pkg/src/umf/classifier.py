"""Descriptor classifier: loads declarative agent descriptors, labels each
variant Active/Passive/N-A from its module matrix, and produces the audit
report with passive-share and unguarded-tool-user statistics."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .core import (
    CoreAgentKind,
    MODULE_NAMES,
    ModuleMatrix,
    Presence,
    UmfError,
    validate_module_matrix,
)

CATEGORY_LABELS = {
    CoreAgentKind.PASSIVE: "Passive",
    CoreAgentKind.ACTIVE: "Active",
    CoreAgentKind.NOT_AN_AGENT: "N/A",
}


class ParseError(UmfError):
    pass


class DuplicateAgent(UmfError):
    pass


@dataclass(frozen=True)
class Variant:
    variant_id: str
    canonical: bool
    matrix: ModuleMatrix
    uses_external_tools: bool = False
    notes: str = ""


@dataclass(frozen=True)
class AgentDescriptor:
    agent_id: str
    variants: tuple[Variant, ...]

    def canonical(self) -> Variant:
        for variant in self.variants:
            if variant.canonical:
                return variant
        raise ParseError(f"descriptor {self.agent_id!r} has no canonical variant")


@dataclass(frozen=True)
class AuditRow:
    agent_id: str
    variant_id: str
    category: str
    canonical: bool


@dataclass(frozen=True)
class AuditReport:
    rows: tuple[AuditRow, ...]
    total_agents: int
    passive_count: int
    active_count: int
    not_agent_count: int
    tool_users: int
    tool_users_without_security: int
    findings: tuple[str, ...]

    @property
    def passive_percent(self) -> int:
        return round(100 * self.passive_count / self.total_agents)

    @property
    def unguarded_tool_user_percent(self) -> int:
        if self.tool_users == 0:
            return 0
        return round(100 * self.tool_users_without_security / self.tool_users)


def classify_matrix(matrix: ModuleMatrix) -> CoreAgentKind:
    """All five absent: not an agent. Only action (plus optionally security)
    present: passive. Anything else: active — a minimal module counts as
    present for classification."""
    if matrix.all_absent():
        return CoreAgentKind.NOT_AN_AGENT
    if (matrix.planning is Presence.ABSENT
            and matrix.memory is Presence.ABSENT
            and matrix.profile is Presence.ABSENT):
        return CoreAgentKind.PASSIVE
    return CoreAgentKind.ACTIVE


def matrix_from_symbols(raw: dict) -> ModuleMatrix:
    values = {}
    for name in MODULE_NAMES:
        if name not in raw:
            raise ParseError(f"matrix is missing the {name!r} entry")
        try:
            values[name] = Presence.from_symbol(raw[name])
        except ValueError as exc:
            raise ParseError(str(exc)) from exc
    extra = set(raw) - set(MODULE_NAMES)
    if extra:
        raise ParseError(f"matrix has unknown entries: {sorted(extra)}")
    return ModuleMatrix(**values)


def matrix_to_symbols(matrix: ModuleMatrix) -> dict[str, str]:
    return {name: presence.symbol for name, presence in matrix.entries().items()}


def parse_descriptors(data) -> list[AgentDescriptor]:
    if not isinstance(data, list):
        raise ParseError("descriptor file must hold a top-level list")
    descriptors: list[AgentDescriptor] = []
    seen_agents: set[str] = set()
    for entry in data:
        agent_id = entry.get("agent_id")
        if not agent_id:
            raise ParseError("descriptor entry is missing agent_id")
        if agent_id in seen_agents:
            raise DuplicateAgent(f"agent {agent_id!r} appears twice")
        seen_agents.add(agent_id)
        raw_variants = entry.get("variants")
        if not raw_variants:
            raise ParseError(f"descriptor {agent_id!r} has no variants")
        variants: list[Variant] = []
        seen_variants: set[str] = set()
        for raw in raw_variants:
            variant_id = raw.get("variant_id")
            if not variant_id:
                raise ParseError(
                    f"descriptor {agent_id!r} has a variant without an id")
            if variant_id in seen_variants:
                raise ParseError(
                    f"descriptor {agent_id!r} repeats variant {variant_id!r}")
            seen_variants.add(variant_id)
            matrix = matrix_from_symbols(raw.get("matrix", {}))
            try:
                validate_module_matrix(matrix)
            except UmfError as exc:
                raise ParseError(
                    f"invalid matrix for {agent_id}/{variant_id}: {exc}"
                ) from exc
            variants.append(Variant(
                variant_id=variant_id,
                canonical=bool(raw.get("canonical", False)),
                matrix=matrix,
                uses_external_tools=bool(raw.get("uses_external_tools", False)),
                notes=raw.get("notes", ""),
            ))
        canonical_count = sum(1 for v in variants if v.canonical)
        if canonical_count != 1:
            raise ParseError(
                f"descriptor {agent_id!r} must have exactly one canonical "
                f"variant, found {canonical_count}")
        descriptors.append(AgentDescriptor(agent_id=agent_id,
                                           variants=tuple(variants)))
    return descriptors


def load_descriptors(path: str | Path) -> list[AgentDescriptor]:
    try:
        raw = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read descriptor file: {exc}") from exc
    if not raw.strip():
        return []
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"descriptor file is not valid JSON: {exc}") from exc
    return parse_descriptors(data)


def load_bundled_descriptors() -> list[AgentDescriptor]:
    raw = resources.files("umf").joinpath("data/descriptors.json") \
        .read_text(encoding="utf-8")
    return parse_descriptors(json.loads(raw))


def audit(descriptors: list[AgentDescriptor]) -> AuditReport:
    """Classify every variant; agent-level category comes from the canonical
    variant. Tool users lacking any security module raise a finding each."""
    rows: list[AuditRow] = []
    counts = {kind: 0 for kind in CoreAgentKind}
    tool_users = 0
    unguarded = 0
    findings: list[str] = []
    for descriptor in descriptors:
        for variant in descriptor.variants:
            kind = classify_matrix(variant.matrix)
            rows.append(AuditRow(agent_id=descriptor.agent_id,
                                 variant_id=variant.variant_id,
                                 category=CATEGORY_LABELS[kind],
                                 canonical=variant.canonical))
        canonical = descriptor.canonical()
        counts[classify_matrix(canonical.matrix)] += 1
        if canonical.uses_external_tools:
            tool_users += 1
            if canonical.matrix.security is Presence.ABSENT:
                unguarded += 1
                findings.append(
                    f"{descriptor.agent_id}: uses external tools without a "
                    "security module")
    return AuditReport(
        rows=tuple(rows),
        total_agents=len(descriptors),
        passive_count=counts[CoreAgentKind.PASSIVE],
        active_count=counts[CoreAgentKind.ACTIVE],
        not_agent_count=counts[CoreAgentKind.NOT_AN_AGENT],
        tool_users=tool_users,
        tool_users_without_security=unguarded,
        findings=tuple(findings),
    )
