"""Audit report rendering: text and JSON summaries, delimited variant rows,
and the figures written next to them (category counts and the module-presence
matrix)."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .classifier import (
    AgentDescriptor,
    AuditReport,
    classify_matrix,
    matrix_to_symbols,
    CATEGORY_LABELS,
)
from .core import MODULE_NAMES

CATEGORY_ORDER = ("Passive", "Active", "N/A")
CATEGORY_COLORS = {"Passive": "#4c72b0", "Active": "#dd8452", "N/A": "#8c8c8c"}


def report_text(report: AuditReport) -> str:
    lines = ["agent_id | variant_id | category | canonical"]
    for row in report.rows:
        marker = "*" if row.canonical else " "
        lines.append(f"{row.agent_id} | {row.variant_id} | {row.category} | {marker}")
    lines.append("")
    lines.append(f"agents: {report.total_agents}  "
                 f"passive: {report.passive_count} ({report.passive_percent}%)  "
                 f"active: {report.active_count}  "
                 f"not-an-agent: {report.not_agent_count}")
    lines.append(f"tool users: {report.tool_users}  "
                 f"without security: {report.tool_users_without_security} "
                 f"({report.unguarded_tool_user_percent}%)")
    for finding in report.findings:
        lines.append(f"warning: {finding}")
    return "\n".join(lines) + "\n"


def report_json(report: AuditReport) -> str:
    return json.dumps({
        "rows": [
            {"agent_id": r.agent_id, "variant_id": r.variant_id,
             "category": r.category, "canonical": r.canonical}
            for r in report.rows
        ],
        "total_agents": report.total_agents,
        "passive_count": report.passive_count,
        "active_count": report.active_count,
        "not_agent_count": report.not_agent_count,
        "passive_percent": report.passive_percent,
        "tool_users": report.tool_users,
        "tool_users_without_security": report.tool_users_without_security,
        "unguarded_tool_user_percent": report.unguarded_tool_user_percent,
        "findings": list(report.findings),
    }, indent=2) + "\n"


def report_csv(descriptors: list[AgentDescriptor]) -> str:
    """One delimited row per variant: the five presence symbols plus the
    category and external-tool flag."""
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(["agent_id", "variant_id", "canonical", *MODULE_NAMES,
                     "uses_external_tools", "category"])
    for descriptor in descriptors:
        for variant in descriptor.variants:
            symbols = matrix_to_symbols(variant.matrix)
            writer.writerow([
                descriptor.agent_id,
                variant.variant_id,
                "yes" if variant.canonical else "no",
                *[symbols[name] for name in MODULE_NAMES],
                "yes" if variant.uses_external_tools else "no",
                CATEGORY_LABELS[classify_matrix(variant.matrix)],
            ])
    return buffer.getvalue()


def _category_counts_figure(report: AuditReport, path: Path) -> None:
    counts = {label: 0 for label in CATEGORY_ORDER}
    for row in report.rows:
        counts[row.category] += 1
    fig, ax = plt.subplots(figsize=(5, 3.2))
    labels = list(CATEGORY_ORDER)
    values = [counts[label] for label in labels]
    bars = ax.bar(labels, values,
                  color=[CATEGORY_COLORS[label] for label in labels])
    ax.bar_label(bars)
    ax.set_ylabel("variant rows")
    ax.set_title("Core-agent categories across audited variants")
    ax.set_ylim(0, max(values) + 1.5)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _module_matrix_figure(descriptors: list[AgentDescriptor], path: Path) -> None:
    labels = []
    grid = []
    for descriptor in descriptors:
        for variant in descriptor.variants:
            suffix = "" if len(descriptor.variants) == 1 \
                else f" ({variant.variant_id})"
            labels.append(descriptor.agent_id + suffix)
            grid.append([getattr(variant.matrix, name).value
                         for name in MODULE_NAMES])
    data = np.array(grid)
    fig, ax = plt.subplots(figsize=(6, 0.4 * len(labels) + 1.6))
    ax.imshow(data, cmap="Blues", vmin=0, vmax=2, aspect="auto")
    ax.set_xticks(range(len(MODULE_NAMES)), MODULE_NAMES)
    ax.set_yticks(range(len(labels)), labels, fontsize=8)
    symbol = {0: "-", 1: "M", 2: "X"}
    for i in range(data.shape[0]):
        for j in range(data.shape[1]):
            ax.text(j, i, symbol[int(data[i, j])], ha="center", va="center",
                    fontsize=8, color="black" if data[i, j] < 2 else "white")
    ax.set_title("Module presence per variant")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_report_bundle(descriptors: list[AgentDescriptor],
                        report: AuditReport, outdir: str | Path) -> list[Path]:
    """Write the delimited audit rows and the figures into ``outdir``;
    returns the created paths."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    created = []
    csv_path = out / "audit_rows.csv"
    csv_path.write_text(report_csv(descriptors), encoding="utf-8")
    created.append(csv_path)
    summary_path = out / "audit_summary.json"
    summary_path.write_text(report_json(report), encoding="utf-8")
    created.append(summary_path)
    counts_path = out / "category_counts.png"
    _category_counts_figure(report, counts_path)
    created.append(counts_path)
    matrix_path = out / "module_matrix.png"
    _module_matrix_figure(descriptors, matrix_path)
    created.append(matrix_path)
    return created
