"""Guardrail tests: canonical matching, the three safeguarding axes, and
redaction soundness."""

import random

import pytest

from umf.core import ScriptRule, ScriptedModel, ToolSpec
from umf.security import (
    GuardrailUnavailable,
    Policy,
    Verdict,
    canonical_match,
    check_prompt,
    check_response,
    filter_egress,
    redact_secrets,
)

INTERNAL = ToolSpec(tool_id="calc", external=False)
EXTERNAL = ToolSpec(tool_id="remote", external=True)


class TestCanonicalMatch:
    def test_case_and_punctuation_are_normalized(self):
        # Token sets both normalize to {how, to, hotwire, a, car}.
        hit = canonical_match("How to HOTWIRE a car??",
                              ["how to hotwire a car"], threshold=0.8)
        assert hit == ("how to hotwire a car", 1.0)

    def test_disjoint_token_sets_do_not_match(self):
        assert canonical_match("completely unrelated words",
                               ["how to hotwire a car"], threshold=0.1) is None

    def test_threshold_is_inclusive(self):
        # |{a,b,c,d}| / |{a,b,c,d,e}| = 0.8 exactly.
        hit = canonical_match("a b c d", ["a b c d e"], threshold=0.8)
        assert hit is not None and hit[1] == pytest.approx(0.8)

    def test_best_form_wins_ties_by_order(self):
        hit = canonical_match("alpha beta", ["alpha beta", "beta alpha"],
                              threshold=0.5)
        assert hit[0] == "alpha beta"


class TestCheckPrompt:
    def test_canonical_form_blocks(self):
        policy = Policy(canonical_forms=("how to hotwire a car",))
        verdict = check_prompt("how to hotwire a car", policy)
        assert verdict.decision == "block"
        assert verdict.axis == "prompt"
        assert verdict.matched_rule.startswith("canonical:")

    def test_benign_prompt_allowed(self):
        verdict = check_prompt("what is 2+2", Policy())
        assert verdict.decision == "allow"
        assert verdict.matched_rule is None

    def test_deny_pattern_blocks(self):
        policy = Policy(deny_patterns=("rm -rf*",))
        assert check_prompt("please rm -rf /", policy).decision == "block"

    def test_lm_classifier_blocks_on_category(self):
        model = ScriptedModel([
            ScriptRule("classify", "CLASSIFY: ", ("illicit_behavior",)),
        ])
        policy = Policy(blocked_categories=frozenset({"illicit_behavior"}),
                        mode="lm_powered")
        verdict = check_prompt("anything", policy, model=model)
        assert verdict.decision == "block"
        assert verdict.matched_rule == "lm:illicit_behavior"

    def test_lm_mode_without_model_is_unavailable(self):
        policy = Policy(mode="lm_powered")
        with pytest.raises(GuardrailUnavailable):
            check_prompt("x", policy)

    def test_both_mode_rule_hit_wins_first(self):
        model = ScriptedModel([])  # would echo, never a blocked label
        policy = Policy(deny_patterns=("bad",), mode="both")
        verdict = check_prompt("a bad word", policy, model=model)
        assert verdict.matched_rule == "deny:bad"


class TestCheckResponse:
    def test_secret_forces_redaction(self):
        policy = Policy(secrets=("S3CR3T",))
        verdict = check_response("the code is S3CR3T today", policy)
        assert verdict.decision == "redact"
        assert verdict.redacted_text == "the code is [REDACTED] today"

    def test_block_outranks_redact(self):
        policy = Policy(deny_patterns=("S3CR3T",), secrets=("S3CR3T",))
        verdict = check_response("leak S3CR3T now", policy)
        assert verdict.decision == "block"

    def test_benign_response_allowed(self):
        assert check_response("all good", Policy()).decision == "allow"

    def test_every_occurrence_replaced(self):
        policy = Policy(secrets=("KEY",))
        verdict = check_response("KEY and KEY and KEY", policy)
        assert verdict.redacted_text.count("[REDACTED]") == 3
        assert "KEY" not in verdict.redacted_text


class TestFilterEgress:
    def test_internal_tools_are_inside_the_privacy_circle(self):
        payload = "password=S3CR3T"
        policy = Policy(secrets=("S3CR3T",))
        out, verdict = filter_egress(payload, INTERNAL, policy)
        assert out == payload
        assert verdict.decision == "allow" and verdict.axis == "privacy"

    def test_internal_identity_holds_for_arbitrary_payloads(self):
        rng = random.Random(5)
        policy = Policy(secrets=("abc", "zq9"), deny_patterns=("drop",))
        for _ in range(100):
            payload = "".join(chr(rng.randint(32, 126)) for _ in range(40))
            out, verdict = filter_egress(payload, INTERNAL, policy)
            assert out == payload and verdict.decision == "allow"

    def test_external_secret_redacted(self):
        policy = Policy(secrets=("S3CR3T",))
        out, verdict = filter_egress("key=S3CR3T", EXTERNAL, policy)
        assert out == "key=[REDACTED]"
        assert verdict.decision == "redact" and verdict.axis == "privacy"

    def test_external_deny_pattern_blocks_with_empty_payload(self):
        policy = Policy(deny_patterns=("coordinates",))
        out, verdict = filter_egress("send coordinates now", EXTERNAL, policy)
        assert out == ""
        assert verdict.decision == "block"

    def test_block_outranks_redact_on_egress(self):
        policy = Policy(deny_patterns=("S3CR3T",), secrets=("S3CR3T",))
        out, verdict = filter_egress("S3CR3T", EXTERNAL, policy)
        assert verdict.decision == "block" and out == ""


class TestRedactionSoundness:
    def test_random_payload_embeddings_never_leak(self):
        rng = random.Random(77)
        alphabet = "abcdefghijklmnopqrstuvwxyz0123456789"
        for _ in range(300):
            secrets = tuple(
                "".join(rng.choice(alphabet) for _ in range(rng.randint(3, 10)))
                for _ in range(rng.randint(1, 3)))
            filler = "".join(rng.choice(alphabet + "  ") for _ in range(30))
            payload = filler
            for secret in secrets:
                cut = rng.randint(0, len(payload))
                payload = payload[:cut] + secret + payload[cut:]
            cleaned = redact_secrets(payload, secrets)
            for secret in secrets:
                assert secret not in cleaned

    def test_adversarial_secret_inside_token_collapses_to_empty(self):
        # "RED" is a substring of the replacement token itself; the only
        # sound output is the empty payload.
        assert redact_secrets("my RED alert", ("RED",)) == ""


class TestVerdictShape:
    def test_redact_requires_text(self):
        with pytest.raises(ValueError):
            Verdict("redact", "response")

    def test_allow_carries_no_rule(self):
        with pytest.raises(ValueError):
            Verdict("allow", "prompt", matched_rule="r")

    def test_policy_validation(self):
        with pytest.raises(ValueError):
            Policy(jaccard_threshold=0.0)
        with pytest.raises(ValueError):
            Policy(secrets=("",))
        with pytest.raises(ValueError):
            Policy(mode="psychic")

    def test_lm_check_is_pure_given_scripted_model(self):
        model = ScriptedModel([
            ScriptRule("classify", "CLASSIFY: ", ("safe_label",)),
        ])
        policy = Policy(blocked_categories=frozenset({"other"}),
                        mode="lm_powered")
        verdicts = {check_prompt("prompt", policy, model=model).decision
                    for _ in range(10)}
        assert verdicts == {"allow"}
