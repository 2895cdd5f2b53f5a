"""Text-generation backends.

Every backend maps a :class:`GenerationRequest` (prompt plus the model id and
sampling parameters) to a :class:`GenerationResult` (text plus its length).
"""

from __future__ import annotations

import hashlib
import logging
import os
import random
import re
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol

from scenebgm.errors import BackendUnavailable, ResponseMalformed

logger = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "SCENEBGM_API_KEY"


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    model: str = "mock-1"
    temperature: float = 0.7
    max_tokens: int = 256
    seed: Optional[int] = None
    system: str = ""
    # Routing hints such as {"stage": "narrative", "window": 3}; backends
    # that talk to real models ignore them.
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class GenerationResult:
    text: str
    length: int
    latency_ms: float = 0.0


class Backend(Protocol):
    def complete(self, request: GenerationRequest) -> GenerationResult: ...


def word_count(text: str) -> int:
    return len(text.split())


# ---------------------------------------------------------------------------
# Mock backend

_INFO_KEYS = (
    "Scene", "Time", "Weather", "Temperature", "Health", "Satiety", "Status",
    "Movement", "Position", "Hostile Entity", "Being Attacked",
)
_INFO_RE = re.compile(r"(?<![\w])(" + "|".join(re.escape(k) for k in _INFO_KEYS) + r"): (\([^)]*\)|[^;\n]*)")
_CAPTION_RE = re.compile(r"Music description:\s*\n(.+?)\n\s*\n", re.S)
_CANDIDATE_RE = re.compile(r"^\[(\d+)\] (.+)$", re.M)

_LIGHT = ("light", "hours", "air")
_PACE = ("moving cautiously", "wandering slowly", "striding with purpose", "pausing to look around")
_FEELING = ("at ease", "alert", "calm", "watchful")

_MOODS = {
    "night": ("mysterious", "hushed", "dark"),
    "rain": ("melancholic", "wistful", "soft"),
    "thunder": ("brooding", "ominous", "restless"),
    "snow": ("crystalline", "still", "cold"),
    "desert": ("sparse", "warm", "hypnotic"),
    "forest": ("gentle", "soothing", "pastoral"),
    "swamp": ("murky", "slow", "eerie"),
    "closes in": ("tense", "urgent", "driving"),
    "attack": ("tense", "urgent", "driving"),
    "morning": ("bright", "hopeful", "airy"),
    "midday": ("warm", "open", "steady"),
}
_DEFAULT_MOODS = ("calm", "serene", "flowing", "gentle", "warm")
_INSTRUMENTS = (
    "soft piano", "acoustic guitar", "warm strings", "airy flutes",
    "ambient synth pads", "light percussion", "a distant choir",
)
_TEMPOS = ("slow", "steady", "relaxed", "measured", "lilting")
_IMAGES = (
    "a sense of relaxation and tranquility",
    "the vastness of the open landscape",
    "quiet wonder and curiosity",
    "a lingering sense of adventure",
)


def _rng_for(request: GenerationRequest) -> random.Random:
    key = f"{request.model}\x00{request.seed}\x00{request.prompt}".encode()
    digest = hashlib.sha256(key).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _info_pairs(text: str) -> dict:
    return {m.group(1): m.group(2).strip() for m in _INFO_RE.finditer(text)}


def _narrate(info: dict, rng: random.Random) -> str:
    scene = info.get("Scene", "open country")
    hostile = info.get("Hostile Entity", "")
    if hostile and hostile != "()":
        foe = hostile.strip("()").split("=")[0] or "hostile creature"
        health = info.get("Health", "")
        state = "wounded but standing" if health and _as_float(health) < 10 else "still steady on their feet"
        return (f"Amid the {scene}, a {foe.lower()} closes in on a lone traveler, "
                f"{state}, {rng.choice(_PACE)} as the danger grows.")
    time_of_day = info.get("Time", "quiet")
    weather = info.get("Weather", "")
    sky = f" under {weather} skies" if weather else ""
    return (f"In the {time_of_day} {rng.choice(_LIGHT)}, amid the {scene}{sky}, "
            f"a traveler stands {rng.choice(_FEELING)}, {rng.choice(_PACE)} across the land.")


def _as_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return 20.0


def _describe_music(prompt: str, rng: random.Random) -> str:
    lowered = prompt.lower()
    moods: list[str] = []
    for cue, words in _MOODS.items():
        if cue in lowered:
            moods.extend(words)
    pool = moods or list(_DEFAULT_MOODS)
    first = rng.choice(pool)
    second = rng.choice([m for m in pool if m != first] or list(_DEFAULT_MOODS))
    inst_a, inst_b = rng.sample(_INSTRUMENTS, 2)
    return (f"The music is {first} and {second}, with {inst_a} over {inst_b} "
            f"and a {rng.choice(_TEMPOS)} rhythm, evoking {rng.choice(_IMAGES)}.")


def _match(prompt: str, rng: random.Random) -> str:
    candidates = _CANDIDATE_RE.findall(prompt)
    if not candidates:
        return "NO_MATCH"
    _, info_line = candidates[rng.randrange(len(candidates))]
    return _narrate(_info_pairs(info_line), rng)


class MockBackend:
    """Deterministic stand-in for a language model.

    The output is a pure function of (prompt, seed, model id): fixed sentence
    templates are filled with values pulled out of the prompt, with choices
    drawn from a RNG seeded by a SHA-256 of those three inputs.
    """

    def __init__(self, model: str = "mock-1", seed: Optional[int] = None):
        self.model = model
        self.seed = seed
        self.calls = 0

    def complete(self, request: GenerationRequest) -> GenerationResult:
        start = time.perf_counter()
        self.calls += 1
        if request.seed is None and self.seed is not None:
            request = GenerationRequest(
                prompt=request.prompt, model=request.model, temperature=request.temperature,
                max_tokens=request.max_tokens, seed=self.seed, system=request.system,
                metadata=request.metadata,
            )
        rng = _rng_for(request)
        stage = request.metadata.get("stage")
        if stage == "narrative":
            text = _narrate(_info_pairs(request.prompt), rng)
        elif stage == "music":
            text = _describe_music(request.prompt, rng)
        elif stage == "match":
            text = _match(request.prompt, rng)
        else:
            words = request.prompt.split()[:12]
            text = "Echo: " + " ".join(words)
        words = text.split()
        if len(words) > request.max_tokens:
            text = " ".join(words[: request.max_tokens])
        return GenerationResult(text=text, length=word_count(text),
                                latency_ms=(time.perf_counter() - start) * 1000.0)


# ---------------------------------------------------------------------------
# Fault injection

class FaultInjectingBackend:
    """Wraps a backend and fails selected calls.

    ``should_fail(request, call_index)`` returns ``None`` to pass through,
    ``"error"`` to raise :class:`BackendUnavailable`, or any other string to
    return that string as the generated text (``""`` simulates an empty
    completion).
    """

    def __init__(self, inner, should_fail: Callable[[GenerationRequest, int], Optional[str]]):
        self.inner = inner
        self.should_fail = should_fail
        self.calls = 0
        self.injected = 0

    def complete(self, request: GenerationRequest) -> GenerationResult:
        index = self.calls
        self.calls += 1
        action = self.should_fail(request, index)
        if action is None:
            return self.inner.complete(request)
        self.injected += 1
        if action == "error":
            raise BackendUnavailable(f"injected failure on call {index}", status=503)
        return GenerationResult(text=action, length=word_count(action))


def fail_windows(windows) -> Callable[[GenerationRequest, int], Optional[str]]:
    """Fault predicate that errors every call made for the given windows."""
    targets = set(windows)
    return lambda req, _i: "error" if req.metadata.get("window") in targets else None


# ---------------------------------------------------------------------------
# Remote backend

class RemoteBackend:
    """Client for an OpenAI-style ``/chat/completions`` endpoint."""

    def __init__(self, base_url: str, model: str, api_key: Optional[str] = None,
                 api_key_env: str = DEFAULT_API_KEY_ENV, timeout: float = 30.0,
                 client=None):
        import httpx

        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(api_key_env)
        self.timeout = timeout
        self._httpx = httpx
        self._client = client or httpx.Client(timeout=timeout)

    def _payload(self, request: GenerationRequest) -> dict:
        messages = []
        if request.system:
            messages.append({"role": "system", "content": request.system})
        messages.append({"role": "user", "content": request.prompt})
        payload = {
            "model": request.model or self.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        return payload

    def complete(self, request: GenerationRequest) -> GenerationResult:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        url = f"{self.base_url}/chat/completions"
        start = time.perf_counter()
        try:
            resp = self._client.post(url, json=self._payload(request), headers=headers)
        except self._httpx.TransportError as exc:
            raise BackendUnavailable(f"transport error talking to {url}: {exc}") from exc
        latency = (time.perf_counter() - start) * 1000.0
        if resp.status_code >= 400:
            transient = resp.status_code >= 500 or resp.status_code == 429
            raise BackendUnavailable(
                f"{url} answered HTTP {resp.status_code}: {resp.text[:200]}",
                status=resp.status_code, transient=transient,
            )
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ResponseMalformed(f"unexpected completion payload from {url}: {exc}",
                                    status=resp.status_code) from exc
        if not isinstance(text, str):
            raise ResponseMalformed("completion content is not a string", status=resp.status_code)
        usage = body.get("usage") or {}
        length = usage.get("completion_tokens")
        if not isinstance(length, int):
            length = word_count(text)
        return GenerationResult(text=text, length=length, latency_ms=latency)

    def close(self) -> None:
        self._client.close()
