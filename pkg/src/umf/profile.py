"""Profile module: the four profile-definition methods and their application
to model requests. Text-bearing profiles set the system prefix (last applied
wins); pluggable profiles add an adapter tag without touching the prompt."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

from .core import ModelRequest, ScriptedModel, UmfError

METHODS = ("handcrafted_icl", "llm_generated", "dataset_aligned", "pluggable")
TEXT_METHODS = ("handcrafted_icl", "llm_generated", "dataset_aligned")


class InvalidProfile(UmfError):
    pass


class EmptyGeneration(UmfError):
    pass


class MissingField(UmfError):
    pass


@dataclass(frozen=True)
class Profile:
    profile_id: str
    method: str
    system_text: str | None = None
    adapter_tag: str | None = None
    source_record: dict | None = None

    def validate(self) -> "Profile":
        if self.method not in METHODS:
            raise InvalidProfile(f"unknown profile method {self.method!r}")
        if self.method in TEXT_METHODS:
            if self.system_text is None or self.adapter_tag is not None:
                raise InvalidProfile(
                    f"{self.method} profiles carry system_text and no adapter_tag")
        else:
            if self.adapter_tag is None or self.system_text is not None:
                raise InvalidProfile(
                    "pluggable profiles carry adapter_tag and no system_text")
        return self


def apply_profile(profile: Profile, request: ModelRequest) -> ModelRequest:
    """Return a request with the profile applied. The prompt text is never
    altered; pluggable application adds zero characters to it."""
    profile.validate()
    if profile.method in TEXT_METHODS:
        return request.with_system_prefix(profile.system_text)
    return request.with_adapter_tag(profile.adapter_tag)


def _content_id(prefix: str, text: str) -> str:
    digest = hashlib.sha1(text.encode("utf-8")).hexdigest()[:8]
    return f"{prefix}-{digest}"


def generate_profile(seed_profiles: list[Profile], attributes: dict,
                     model: ScriptedModel) -> Profile:
    """Ask the model for a new profile description, few-shot seeded by any
    existing profile texts. Seeds are optional; attributes are not."""
    if not attributes:
        raise ValueError("attributes must be nonempty")
    attr_part = ", ".join(f"{k}={attributes[k]}" for k in sorted(attributes))
    seed_texts = [p.system_text for p in seed_profiles if p.system_text]
    prompt = f"GENERATE-PROFILE: {attr_part}"
    if seed_texts:
        prompt += " | SEEDS: " + " || ".join(seed_texts)
    text = model.complete(ModelRequest(prompt=prompt)).first
    if not text.strip():
        raise EmptyGeneration("model returned an empty profile description")
    return Profile(profile_id=_content_id("llmgen", text),
                   method="llm_generated", system_text=text,
                   source_record=dict(attributes))


_PLACEHOLDER = re.compile(r"\{([A-Za-z_]\w*)\}")


def align_profile(record: dict, template: str) -> Profile:
    """Fill a ``{field}`` template from a real-world record."""
    def substitute(match: re.Match) -> str:
        name = match.group(1)
        if name not in record:
            raise MissingField(f"template placeholder {{{name}}} has no "
                               "matching record field")
        return str(record[name])

    text = _PLACEHOLDER.sub(substitute, template)
    return Profile(profile_id=_content_id("aligned", text),
                   method="dataset_aligned", system_text=text,
                   source_record=dict(record))
