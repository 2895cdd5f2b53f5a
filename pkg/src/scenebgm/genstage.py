"""Two-stage generation: game data to narrative, narrative to music description."""

from __future__ import annotations

import json
import logging
import re
import string
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Optional

from scenebgm.backends import GenerationRequest, GenerationResult, word_count
from scenebgm.errors import (
    BackendUnavailable,
    ConfigInvalid,
    EmptyGeneration,
    MissingPlaceholder,
)
from scenebgm.scene import CharacterizedData

logger = logging.getLogger(__name__)

DEFAULT_WORD_LIMIT = 20
NO_ANCHOR = "none"
PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    role_preamble: str
    body: str
    max_output_words: Optional[int] = None
    placeholders: tuple = ()

    def __post_init__(self):
        used = set(PLACEHOLDER_RE.findall(self.body))
        if not self.placeholders:
            object.__setattr__(self, "placeholders", tuple(sorted(used)))
        undeclared = used - set(self.placeholders)
        if undeclared:
            raise ConfigInvalid(f"template {self.id!r} uses undeclared placeholders {sorted(undeclared)}")
        if self.max_output_words is not None and self.max_output_words < 1:
            raise ConfigInvalid("max_output_words must be positive")

    @classmethod
    def from_obj(cls, obj: Mapping) -> "PromptTemplate":
        try:
            return cls(
                id=obj["id"],
                role_preamble=obj.get("role_preamble", ""),
                body=obj["body"],
                max_output_words=obj.get("max_output_words"),
                placeholders=tuple(obj.get("placeholders", ())),
            )
        except KeyError as exc:
            raise ConfigInvalid(f"template is missing field {exc}") from exc

    def to_obj(self) -> dict:
        obj = {"id": self.id, "role_preamble": self.role_preamble, "body": self.body,
               "placeholders": list(self.placeholders)}
        if self.max_output_words is not None:
            obj["max_output_words"] = self.max_output_words
        return obj


def load_template(source: str | Path) -> PromptTemplate:
    """Load a template from a JSON file, or a bundled one by name."""
    path = Path(source)
    if path.suffix != ".json" and not path.exists():
        text = resources.files("scenebgm.templates").joinpath(f"{source}.json").read_text()
    else:
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigInvalid(f"cannot read template {path}: {exc}") from exc
    try:
        return PromptTemplate.from_obj(json.loads(text))
    except ValueError as exc:
        raise ConfigInvalid(f"template {source} is not valid JSON: {exc}") from exc


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.2f}"
    if isinstance(value, dict):
        return "(" + ", ".join(f"{k}={_fmt(v)}" for k, v in value.items()) + ")"
    return str(value)


def to_info_str(data: CharacterizedData | Mapping) -> str:
    entries = data.entries if isinstance(data, CharacterizedData) else data
    return "; ".join(f"{key}: {_fmt(value)}" for key, value in entries.items())


def render_prompt(template: PromptTemplate, bindings: Mapping[str, object]) -> str:
    def sub(match):
        name = match.group(1)
        if name not in bindings:
            raise MissingPlaceholder(name)
        return str(bindings[name])

    return PLACEHOLDER_RE.sub(sub, template.body)


def enforce_word_limit(text: str, limit: int = DEFAULT_WORD_LIMIT) -> str:
    """Cut ``text`` to ``limit`` whitespace tokens.

    Text already within the limit is returned untouched.  After a cut,
    trailing punctuation is stripped, keeping a final period if there was one.
    """
    if limit < 1:
        raise ValueError("limit must be >= 1")
    words = text.split()
    if len(words) <= limit:
        return text
    cut = " ".join(words[:limit])
    stripped = cut.rstrip(string.punctuation)
    tail = cut[len(stripped):]
    if stripped and "." in tail:
        stripped += "."
    return stripped


def one_paragraph(text: str) -> str:
    return " ".join(text.split())


@dataclass(frozen=True)
class NarrativeText:
    text: str
    source_window: Optional[int] = None
    prompt: str = field(default="", compare=False, repr=False)
    latency_ms: float = field(default=0.0, compare=False)


@dataclass(frozen=True)
class MusicDescription:
    text: str
    word_count: int
    anchor_of: Optional[int] = None
    source_window: Optional[int] = None
    prompt: str = field(default="", compare=False, repr=False)
    latency_ms: float = field(default=0.0, compare=False)


@dataclass
class GenerationSettings:
    model: str = "mock-1"
    temperature: float = 0.7
    max_tokens: int = 256
    seed: Optional[int] = None
    attempts: int = 3
    backoff_s: float = 0.25
    sleep: Callable[[float], None] = time.sleep


def complete_with_retry(backend, request: GenerationRequest,
                        settings: GenerationSettings) -> GenerationResult:
    """Call the backend, retrying transient failures and empty completions.

    Backoff doubles from ``settings.backoff_s``.  Non-transient failures are
    raised at once.
    """
    last_error: Optional[BackendUnavailable] = None
    for attempt in range(settings.attempts):
        if attempt:
            settings.sleep(settings.backoff_s * 2 ** (attempt - 1))
        try:
            result = backend.complete(request)
        except BackendUnavailable as exc:
            if not exc.transient:
                raise
            logger.warning("backend attempt %d/%d failed: %s", attempt + 1, settings.attempts, exc)
            last_error = exc
            continue
        if result.text.strip():
            return result
        logger.warning("backend attempt %d/%d returned empty text", attempt + 1, settings.attempts)
        last_error = None
    if last_error is not None:
        raise last_error
    raise EmptyGeneration(f"empty generation after {settings.attempts} attempts")


def build_request(prompt, template, settings, stage, window) -> GenerationRequest:
    return GenerationRequest(
        prompt=prompt,
        model=settings.model,
        temperature=settings.temperature,
        max_tokens=settings.max_tokens,
        seed=settings.seed,
        system=template.role_preamble,
        metadata={"stage": stage, "window": window},
    )


def generate_narrative(data: CharacterizedData, template: PromptTemplate, backend,
                       settings: Optional[GenerationSettings] = None,
                       window: Optional[int] = None) -> NarrativeText:
    settings = settings or GenerationSettings()
    prompt = render_prompt(template, {"info_str": to_info_str(data)})
    result = complete_with_retry(backend, build_request(prompt, template, settings, "narrative", window), settings)
    text = one_paragraph(result.text)
    return NarrativeText(text=text, source_window=window, prompt=prompt, latency_ms=result.latency_ms)


def generate_music_description(narrative: NarrativeText, anchor: Optional[MusicDescription],
                               template: PromptTemplate, backend,
                               settings: Optional[GenerationSettings] = None,
                               window: Optional[int] = None) -> MusicDescription:
    settings = settings or GenerationSettings()
    bindings = {"scene": narrative.text, "anchor": anchor.text if anchor is not None else NO_ANCHOR}
    prompt = render_prompt(template, bindings)
    result = complete_with_retry(backend, build_request(prompt, template, settings, "music", window), settings)
    limit = template.max_output_words or DEFAULT_WORD_LIMIT
    text = enforce_word_limit(one_paragraph(result.text), min(limit, DEFAULT_WORD_LIMIT))
    if not text:
        raise EmptyGeneration("music description empty after word limit")
    return MusicDescription(
        text=text,
        word_count=word_count(text),
        anchor_of=anchor.source_window if anchor is not None else None,
        source_window=window,
        prompt=prompt,
        latency_ms=result.latency_ms,
    )
