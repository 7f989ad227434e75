"""Deterministic multi core-agent orchestration: five-module core-agents,
active/passive topologies with leader election and gateway routing, guardrail
pipelines, a descriptor classifier, and a trace-checked scenario harness."""

__version__ = "0.1.0"
