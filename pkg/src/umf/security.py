"""Security module: prompt safeguarding, response safeguarding, and
data-privacy egress filtering, with rule-based and model-powered guardrail
paths sharing one verdict shape."""

from __future__ import annotations

import string
from dataclasses import dataclass

from .core import (
    ModelRequest,
    ScriptedModel,
    UmfError,
    pattern_matches,
)

REDACTION_TOKEN = "[REDACTED]"
CLASSIFY_PREFIX = "CLASSIFY: "

AXES = ("prompt", "response", "privacy")
DECISIONS = ("allow", "block", "redact")
MODES = ("rule_based", "lm_powered", "both")


class GuardrailUnavailable(UmfError):
    """A model-powered check was requested without a model port."""


@dataclass(frozen=True)
class Policy:
    policy_id: str = "default"
    deny_patterns: tuple[str, ...] = ()
    canonical_forms: tuple[str, ...] = ()
    jaccard_threshold: float = 0.8
    secrets: tuple[str, ...] = ()
    blocked_categories: frozenset[str] = frozenset()
    mode: str = "rule_based"

    def __post_init__(self) -> None:
        if not 0.0 < self.jaccard_threshold <= 1.0:
            raise ValueError("jaccard_threshold must lie in (0, 1]")
        if any(not s for s in self.secrets):
            raise ValueError("secrets entries must be nonempty")
        if self.mode not in MODES:
            raise ValueError(f"unknown guardrail mode {self.mode!r}")


@dataclass(frozen=True)
class Verdict:
    decision: str
    axis: str
    matched_rule: str | None = None
    redacted_text: str | None = None

    def __post_init__(self) -> None:
        if self.decision not in DECISIONS:
            raise ValueError(f"unknown decision {self.decision!r}")
        if self.axis not in AXES:
            raise ValueError(f"unknown axis {self.axis!r}")
        if self.decision == "redact" and self.redacted_text is None:
            raise ValueError("redact verdicts must carry the redacted text")
        if self.decision == "allow" and self.matched_rule is not None:
            raise ValueError("allow verdicts carry no matched rule")


_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


def _normalize_tokens(text: str) -> frozenset[str]:
    return frozenset(text.lower().translate(_PUNCT_TABLE).split())


def canonical_match(text: str, forms: tuple[str, ...] | list[str],
                    threshold: float) -> tuple[str, float] | None:
    """Best canonical form by token-set Jaccard similarity, if it reaches the
    threshold (inclusive). Ties keep the earlier form."""
    tokens = _normalize_tokens(text)
    best: tuple[str, float] | None = None
    for form in forms:
        form_tokens = _normalize_tokens(form)
        union = tokens | form_tokens
        similarity = len(tokens & form_tokens) / len(union) if union else 1.0
        if similarity >= threshold and (best is None or similarity > best[1]):
            best = (form, similarity)
    return best


def _rule_based_block(text: str, policy: Policy) -> str | None:
    """Matched-rule id when a deny pattern or canonical form fires."""
    for pattern in policy.deny_patterns:
        if pattern_matches(pattern, text):
            return f"deny:{pattern}"
    hit = canonical_match(text, policy.canonical_forms, policy.jaccard_threshold)
    if hit is not None:
        return f"canonical:{hit[0]}"
    return None


def _lm_block(text: str, policy: Policy, model: ScriptedModel | None) -> str | None:
    if model is None:
        raise GuardrailUnavailable(
            f"mode {policy.mode!r} requires a model port")
    label = model.complete(ModelRequest(prompt=CLASSIFY_PREFIX + text)).first
    if label in policy.blocked_categories:
        return f"lm:{label}"
    return None


def _check(text: str, policy: Policy, model: ScriptedModel | None,
           axis: str) -> Verdict:
    if policy.mode in ("rule_based", "both"):
        rule = _rule_based_block(text, policy)
        if rule is not None:
            return Verdict("block", axis, matched_rule=rule)
    if policy.mode in ("lm_powered", "both"):
        rule = _lm_block(text, policy, model)
        if rule is not None:
            return Verdict("block", axis, matched_rule=rule)
    return Verdict("allow", axis)


def check_prompt(text: str, policy: Policy,
                 model: ScriptedModel | None = None) -> Verdict:
    """Prompt-axis guardrail: block on deny pattern, canonical-form hit, or a
    blocked model classification; allow otherwise."""
    return _check(text, policy, model, axis="prompt")


def redact_secrets(text: str, secrets: tuple[str, ...]) -> str:
    """Replace every secret occurrence with the redaction token. Runs to a
    fixpoint; if replacement itself keeps reintroducing a secret (the secret
    is a substring of the token), the whole text collapses to empty rather
    than ever leaking."""
    out = text
    for _ in range(10):
        if not any(s in out for s in secrets):
            return out
        for secret in secrets:
            out = out.replace(secret, REDACTION_TOKEN)
    if any(s in out for s in secrets):
        return ""
    return out


def check_response(text: str, policy: Policy,
                   model: ScriptedModel | None = None) -> Verdict:
    """Response-axis guardrail. Block outranks redact; secrets outrank a
    plain allow and force a redacted copy of the text."""
    verdict = _check(text, policy, model, axis="response")
    if verdict.decision == "block":
        return verdict
    if any(s in text for s in policy.secrets):
        return Verdict("redact", "response", matched_rule="secret",
                       redacted_text=redact_secrets(text, policy.secrets))
    return verdict


def filter_egress(payload: str, destination, policy: Policy) -> tuple[str, Verdict]:
    """Privacy-axis gate on payloads leaving toward a tool. Internal tools
    sit inside the privacy circle and pass through untouched; external tools
    get deny-pattern blocking (empty payload) or secret redaction."""
    if not destination.external:
        return payload, Verdict("allow", "privacy")
    for pattern in policy.deny_patterns:
        if pattern_matches(pattern, payload):
            return "", Verdict("block", "privacy", matched_rule=f"deny:{pattern}")
    if any(s in payload for s in policy.secrets):
        redacted = redact_secrets(payload, policy.secrets)
        return redacted, Verdict("redact", "privacy", matched_rule="secret",
                                 redacted_text=redacted)
    return payload, Verdict("allow", "privacy")
