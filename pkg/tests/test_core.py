"""Shared-vocabulary tests: matrix validation, the scripted model port, and
envelope bookkeeping."""

import pytest

from umf.core import (
    EnvelopeLog,
    InvalidMatrix,
    ModelRequest,
    ModuleMatrix,
    Presence,
    ScriptRule,
    ScriptedModel,
    pattern_matches,
    scripted_complete,
    validate_module_matrix,
)

P = Presence.PRESENT
M = Presence.MINIMAL
A = Presence.ABSENT


def matrix(planning=A, profile=A, memory=A, action=A, security=A):
    return ModuleMatrix(planning=planning, profile=profile, memory=memory,
                        action=action, security=security)


class TestModuleMatrix:
    def test_presence_total_order(self):
        assert Presence.ABSENT < Presence.MINIMAL < Presence.PRESENT
        assert Presence.MINIMAL <= Presence.MINIMAL

    def test_symbols_round_trip(self):
        for presence in Presence:
            assert Presence.from_symbol(presence.symbol) is presence
        with pytest.raises(ValueError):
            Presence.from_symbol("?")

    def test_action_only_row_is_valid(self):
        m = matrix(action=P)
        assert validate_module_matrix(m) is m

    def test_all_absent_is_a_not_an_agent_candidate(self):
        m = matrix()
        assert validate_module_matrix(m) is m

    def test_planning_without_action_is_rejected(self):
        with pytest.raises(InvalidMatrix):
            validate_module_matrix(matrix(planning=P))

    def test_any_module_without_action_is_rejected(self):
        for name in ("planning", "profile", "memory", "security"):
            with pytest.raises(InvalidMatrix):
                validate_module_matrix(matrix(**{name: M}))


class TestPatternMatching:
    def test_plain_literal_is_substring(self):
        assert pattern_matches("hotwire", "how to hotwire a car")
        assert not pattern_matches("bicycle", "how to hotwire a car")

    def test_stars_absorb_surrounding_text(self):
        assert pattern_matches("hotwire*", "how to hotwire a car")
        assert pattern_matches("*hotwire", "how to hotwire a car")

    def test_bare_star_matches_everything(self):
        assert pattern_matches("*", "")
        assert pattern_matches("*", "anything")


class TestScriptedModel:
    def test_first_matching_rule_fires(self):
        script = [ScriptRule("refuse", "hotwire*", ("REFUSE",))]
        response = scripted_complete(
            script, ModelRequest(prompt="how to hotwire a car"))
        assert response.candidates == ("REFUSE",)
        assert response.source == "refuse"

    def test_empty_script_echoes(self):
        response = scripted_complete([], ModelRequest(prompt="hi"))
        assert response.candidates == ("ECHO:hi",)
        assert response.source == "echo"

    def test_adapter_tag_gates_rule(self):
        # Enumerate both tag states and confirm the gate flips the outcome.
        script = [ScriptRule("sql", "insert", ("INSERT INTO t ...",),
                             required_adapter_tag="sql-profile")]
        without = scripted_complete(script, ModelRequest(prompt="insert"))
        assert without.source == "echo"
        with_tag = scripted_complete(
            script, ModelRequest(prompt="insert",
                                 adapter_tags=("sql-profile",)))
        assert with_tag.candidates == ("INSERT INTO t ...",)

    def test_rule_order_breaks_overlap(self):
        script = [ScriptRule("r1", "abc", ("first",)),
                  ScriptRule("r2", "abc", ("second",))]
        assert scripted_complete(
            script, ModelRequest(prompt="xx abc yy")).first == "first"

    def test_max_candidates_truncates(self):
        script = [ScriptRule("r", "go", ("one", "two", "three"))]
        response = scripted_complete(
            script, ModelRequest(prompt="go", max_candidates=2))
        assert response.candidates == ("one", "two")

    def test_deterministic_across_calls(self):
        script = [ScriptRule("r", "go", ("one", "two"))]
        request = ModelRequest(prompt="go go go", max_candidates=2)
        first = scripted_complete(script, request)
        for _ in range(20):
            assert scripted_complete(script, request) == first

    def test_model_object_wraps_script(self):
        model = ScriptedModel([ScriptRule("r", "x", ("y",))])
        assert model.complete(ModelRequest(prompt="x")).first == "y"

    def test_max_candidates_must_be_positive(self):
        with pytest.raises(ValueError):
            ModelRequest(prompt="p", max_candidates=0)


class TestEnvelopes:
    def test_unknown_kind_rejected(self):
        log = EnvelopeLog()
        with pytest.raises(ValueError):
            log.post("a", "b", "gossip", "hello")

    def test_correlation_must_reference_earlier_message(self):
        log = EnvelopeLog()
        with pytest.raises(ValueError):
            log.post("a", "b", "task", "x", correlation="m9999")

    def test_correlation_chains_are_acyclic(self):
        log = EnvelopeLog()
        first = log.post("human", "agent", "task", "do it")
        second = log.post("agent", "model", "plan", "plan it",
                          correlation=first.msg_id)
        third = log.post("model", "agent", "tool_result", "done",
                         correlation=second.msg_id)
        chain = {first.msg_id: first, second.msg_id: second,
                 third.msg_id: third}
        seen = set()
        cursor = third
        while cursor is not None:
            assert cursor.msg_id not in seen
            seen.add(cursor.msg_id)
            cursor = chain.get(cursor.correlation)

    def test_msg_ids_unique(self):
        log = EnvelopeLog()
        ids = {log.post("a", "b", "task", i).msg_id for i in range(50)}
        assert len(ids) == 50
