"""Harness tests: scenario validation, assertion evaluation, bundled-scenario
integrity, and trace reproducibility."""

import json

import pytest

from umf.harness import (
    AssertionSpec,
    BUNDLED_SCENARIOS,
    ScenarioInvalid,
    check_assertions,
    load_bundled_scenario,
    load_scenario,
    parse_scenario,
    run_scenario,
)
from umf.orchestration import Tracer


def minimal_scenario(**overrides) -> dict:
    data = {
        "scenario_id": "mini",
        "architecture": "single_passive",
        "seed": 1,
        "model_rules": [
            {"rule_id": "r1", "match": "add",
             "responses": ["sum: [CALL calc(expr=\"1+2\")]"]},
            {"rule_id": "r2", "match": "sum: 3", "responses": ["three"]},
        ],
        "tools": [
            {"tool_id": "calc", "kind": "calculator", "external": False,
             "arg_names": ["expr"]},
        ],
        "core_agents": [
            {"core_agent_id": "worker", "kind": "passive", "tools": ["calc"]},
        ],
        "tasks": [{"task_id": "t", "goal_text": "add one and two"}],
        "assertions": [
            {"kind": "require_event", "event": "task_done",
             "where": {"status": "ok"}, "description": "completes"},
        ],
    }
    data.update(overrides)
    return data


class TestScenarioValidation:
    def test_minimal_scenario_runs_green(self):
        run = run_scenario(parse_scenario(minimal_scenario()))
        assert run.passed
        done = run.trace.of_kind("task_done")[0]
        assert done.payload["answer"] == "three"

    def test_missing_scenario_id(self):
        with pytest.raises(ScenarioInvalid):
            parse_scenario({"architecture": "single_passive"})

    def test_dangling_tool_reference(self):
        data = minimal_scenario()
        data["core_agents"][0]["tools"] = ["ghost_tool"]
        with pytest.raises(ScenarioInvalid, match="ghost_tool"):
            parse_scenario(data)

    def test_dangling_policy_reference(self):
        data = minimal_scenario()
        data["core_agents"][0]["policy"] = "ghost_policy"
        with pytest.raises(ScenarioInvalid, match="ghost_policy"):
            parse_scenario(data)

    def test_dangling_profile_reference(self):
        data = minimal_scenario()
        data["core_agents"][0] = {
            "core_agent_id": "boss", "kind": "active", "tools": ["calc"],
            "profiles": ["ghost_profile"],
        }
        data["architecture"] = "single_active"
        with pytest.raises(ScenarioInvalid, match="ghost_profile"):
            parse_scenario(data)

    def test_dangling_domain_reference(self):
        data = minimal_scenario()
        data["architecture"] = "single_active"
        data["core_agents"][0] = {
            "core_agent_id": "boss", "kind": "active", "tools": ["calc"],
            "planner": {"rule_domain": "ghost_domain"},
        }
        with pytest.raises(ScenarioInvalid, match="ghost_domain"):
            parse_scenario(data)

    def test_dangling_repository_reference(self):
        data = minimal_scenario()
        data["tools"].append({
            "tool_id": "wiki", "kind": "repository_lookup",
            "config": {"repository": "ghost_repo"},
        })
        with pytest.raises(ScenarioInvalid, match="ghost_repo"):
            parse_scenario(data)

    def test_attached_must_be_passive(self):
        data = minimal_scenario(attached=["nobody"])
        with pytest.raises(ScenarioInvalid):
            parse_scenario(data)

    def test_control_target_must_be_passive(self):
        data = minimal_scenario()
        data["tasks"].append({"control": {"op": "detach", "target": "ghost"}})
        with pytest.raises(ScenarioInvalid):
            parse_scenario(data)

    def test_unknown_assertion_kind(self):
        data = minimal_scenario()
        data["assertions"] = [{"kind": "vibes", "description": "x"}]
        with pytest.raises(ScenarioInvalid):
            parse_scenario(data)

    def test_unknown_tool_kind(self):
        data = minimal_scenario()
        data["tools"][0]["kind"] = "quantum"
        with pytest.raises(ScenarioInvalid, match="quantum"):
            run_scenario(parse_scenario(data))

    def test_unreadable_file(self, tmp_path):
        with pytest.raises(ScenarioInvalid):
            load_scenario(tmp_path / "missing.json")

    def test_template_profile_is_aligned_at_load_time(self):
        data = minimal_scenario()
        data["profiles"] = [
            {"profile_id": "voter", "method": "dataset_aligned",
             "template": "You are a voter from {state}.",
             "record": {"state": "Ohio"}},
        ]
        data["static_profile"] = "voter"
        run = run_scenario(parse_scenario(data))
        assert run.passed
        profile_events = run.trace.of_kind("profile_set")
        assert profile_events[0].payload["profile_id"] == "voter"
        first_model_call = run.trace.of_kind("model_call")[0]
        assert first_model_call.payload["system_prefix"] == \
            "You are a voter from Ohio."

    def test_template_profile_with_missing_field_fails_at_load(self):
        from umf.profile import MissingField
        data = minimal_scenario()
        data["profiles"] = [
            {"profile_id": "voter", "method": "dataset_aligned",
             "template": "You live in {city}.", "record": {"state": "Ohio"}},
        ]
        data["static_profile"] = "voter"
        with pytest.raises(MissingField):
            run_scenario(parse_scenario(data))

    def test_failing_assertion_reports_red(self):
        data = minimal_scenario()
        data["assertions"].append({
            "kind": "event_count", "event": "decomposition", "min": 5,
            "description": "impossible",
        })
        run = run_scenario(parse_scenario(data))
        assert not run.passed
        failed = [r for r in run.results if not r.passed]
        assert len(failed) == 1
        assert failed[0].assertion.description == "impossible"


class TestBundledScenarios:
    @pytest.mark.parametrize("name", BUNDLED_SCENARIOS)
    def test_scenario_passes_its_own_assertions(self, name):
        run = run_scenario(load_bundled_scenario(name))
        details = [(r.assertion.description, r.detail)
                   for r in run.results if not r.passed]
        assert run.passed, details

    @pytest.mark.parametrize("name", BUNDLED_SCENARIOS)
    def test_byte_identical_reruns(self, name):
        spec = load_bundled_scenario(name)
        first = run_scenario(spec).trace.to_jsonl()
        second = run_scenario(spec).trace.to_jsonl()
        assert first == second

    def test_seed_override_is_honored(self):
        run = run_scenario(load_bundled_scenario("la1"), seed_override=99)
        assert run.seed == 99

    def test_unknown_bundled_name(self):
        with pytest.raises(ScenarioInvalid):
            load_bundled_scenario("la9")

    def test_detach_scenario_shrinks_the_planned_tool_set(self):
        run = run_scenario(load_bundled_scenario("detach"))
        plans = run.trace.of_kind("plan_created")
        by_task = {}
        for plan in plans:
            task = plan.payload["subtask_id"].rsplit("-s", 1)[0]
            by_task.setdefault(task, set()).update(
                step["target"] for step in plan.payload["steps"])
        assert by_task["t-before"] == {"alpha", "beta"}
        assert by_task["t-during"] == {"alpha"}
        assert by_task["t-after"] == {"alpha", "beta"}

    def test_la4_memory_dump_covers_the_active_only(self):
        run = run_scenario(load_bundled_scenario("la4"))
        dump = run.memory_dump()
        assert set(dump) == {"planner_agent"}


class TestAssertionEvaluators:
    def trace(self):
        tracer = Tracer()
        tracer.emit("human_msg", "human", recipient="model")
        tracer.emit("tool_called", "w", tool_id="calc")
        tracer.emit("guardrail_verdict", "w", axis="privacy",
                    decision="redact", correlation="c1")
        tracer.emit("tool_payload_delivered", "w", tool_id="api",
                    external=True, pre_filter="x=SECRET",
                    delivered="x=[REDACTED]", call_id="c1")
        tracer.emit("tool_payload_delivered", "w", tool_id="calc",
                    external=False, pre_filter="y=SECRET",
                    delivered="y=SECRET", call_id="c2")
        tracer.emit("task_done", "w", status="ok")
        return tracer.events

    def check(self, **kwargs):
        spec = AssertionSpec(description=kwargs.get("kind"), **kwargs)
        return check_assertions(self.trace(), [spec])[0]

    def test_event_count_with_bounds(self):
        assert self.check(kind="event_count", event="tool_called",
                          min_count=1, max_count=1).passed
        assert not self.check(kind="event_count", event="tool_called",
                              min_count=2).passed
        assert self.check(kind="event_count", event="decomposition",
                          min_count=0, max_count=0).passed

    def test_event_count_with_where_filter(self):
        assert self.check(kind="event_count", event="tool_payload_delivered",
                          where={"external": True}, min_count=1,
                          max_count=1).passed

    def test_event_order_uses_first_occurrences(self):
        assert self.check(kind="event_order", first="human_msg",
                          then="tool_called").passed
        assert not self.check(kind="event_order", first="task_done",
                              then="tool_called").passed

    def test_event_order_requires_both_kinds(self):
        assert not self.check(kind="event_order", first="attach",
                              then="tool_called").passed

    def test_forbid_substring_scans_external_delivered_only(self):
        # the internal delivery still carries SECRET; only external counts
        assert self.check(kind="forbid_substring_in_external_payload",
                          text="SECRET").passed
        assert not self.check(kind="forbid_substring_in_external_payload",
                              text="REDACTED").passed

    def test_require_event_with_payload_match(self):
        assert self.check(kind="require_event", event="guardrail_verdict",
                          where={"axis": "privacy",
                                 "decision": "redact"}).passed
        assert not self.check(kind="require_event", event="guardrail_verdict",
                              where={"decision": "block"}).passed

    def test_require_event_matches_actor(self):
        assert self.check(kind="require_event", event="task_done",
                          where={"actor": "w"}).passed

    def test_forbid_event(self):
        assert self.check(kind="forbid_event", event="human_msg",
                          where={"recipient": "w"}).passed
        assert not self.check(kind="forbid_event", event="human_msg",
                              where={"recipient": "model"}).passed

    def test_evaluation_leaves_the_trace_alone(self):
        events = self.trace()
        snapshot = [json.loads(e.to_json()) for e in events]
        check_assertions(events, [AssertionSpec(
            kind="event_count", description="d", event="tool_called",
            min_count=0)])
        assert [json.loads(e.to_json()) for e in events] == snapshot
