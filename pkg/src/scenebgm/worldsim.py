"""Deterministic synthetic game-world stream.

A scenario file declares a seed, an emission period, a duration, a biome pool
and timed patches.  Between patches the world drifts by a seeded random walk
on temperature, health and position.  Map-valued fields in a patch replace
the whole map; send ``{}`` to clear one.

Random walk constants (fixed for reproducibility):

    temperature  += uniform(-0.05, 0.05)
    health       += uniform(-0.25, 0.25), clamped to [0, 20]
    position x/z += uniform(-1.5, 1.5); y += uniform(-0.25, 0.25)
"""

from __future__ import annotations

import json
import logging
import random
import socket
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

from scenebgm.errors import ScenarioInvalid, SchemaViolation
from scenebgm.scene import (
    ELEMENTS,
    HEALTH,
    SCENE,
    TIMESTAMP,
    VITAL_MAX,
    SceneSnapshot,
    snapshot_from_obj,
)

logger = logging.getLogger(__name__)

TEMPERATURE_STEP = 0.05
HEALTH_STEP = 0.25
HORIZONTAL_STEP = 1.5
VERTICAL_STEP = 0.25

DEFAULT_BIOMES = ("forest", "plains", "gravel hills", "desert", "snowy taiga", "swamp")

BASE_STATE = {
    "Scene": "forest",
    "Time": "morning",
    "Weather": "clear",
    "Temperature": 0.7,
    "Health": 20.0,
    "Satiety": 20.0,
    "Status": {"NotOnFire": True, "Wet": False},
    "Movement": {"NotRunning": True, "NotSneaking": True, "Walking": True, "Speed": 0.1},
    "Position": {"x": 0.0, "y": 64.0, "z": 0.0, "OnGround": True},
    "Hostile Entity": {},
    "Being Attacked": False,
}


@dataclass
class Scenario:
    seed: int = 0
    events: list = field(default_factory=list)
    emit_period_ms: int = 1000
    duration_ms: int = 10000
    biome_pool: list = field(default_factory=lambda: list(DEFAULT_BIOMES))
    initial: dict = field(default_factory=dict)

    def validate(self) -> None:
        if not isinstance(self.emit_period_ms, int) or self.emit_period_ms <= 0:
            raise ScenarioInvalid("emit_period_ms must be a positive integer")
        if not isinstance(self.duration_ms, int) or self.duration_ms <= 0:
            raise ScenarioInvalid("duration_ms must be a positive integer")
        if not isinstance(self.seed, int) or not -(2**63) <= self.seed < 2**64:
            raise ScenarioInvalid("seed must be a 64-bit integer")
        if not self.biome_pool or not all(isinstance(b, str) for b in self.biome_pool):
            raise ScenarioInvalid("biome_pool must be a non-empty list of strings")
        times = [at for at, _ in self.events]
        if times != sorted(times):
            raise ScenarioInvalid("events must be sorted by at_ms")
        for at, patch in self.events:
            if not isinstance(at, int) or at < 0:
                raise ScenarioInvalid(f"bad event time {at!r}")
            if not isinstance(patch, dict):
                raise ScenarioInvalid(f"event at {at} has a non-object patch")
            unknown = set(patch) - set(ELEMENTS)
            if unknown:
                raise ScenarioInvalid(f"event at {at} patches unknown fields {sorted(unknown)}")

    @property
    def n_snapshots(self) -> int:
        return self.duration_ms // self.emit_period_ms

    @classmethod
    def from_obj(cls, obj: dict) -> "Scenario":
        if not isinstance(obj, dict):
            raise ScenarioInvalid("scenario must be a JSON object")
        events = []
        for ev in obj.get("events", []):
            try:
                events.append((ev["at_ms"], ev["patch"]))
            except (KeyError, TypeError) as exc:
                raise ScenarioInvalid(f"event needs at_ms and patch: {ev!r}") from exc
        scenario = cls(
            seed=obj.get("seed", 0),
            events=events,
            emit_period_ms=obj.get("emit_period_ms", 1000),
            duration_ms=obj.get("duration_ms", 10000),
            biome_pool=list(obj.get("biome_pool", DEFAULT_BIOMES)),
            initial=dict(obj.get("initial", {})),
        )
        scenario.validate()
        return scenario

    @classmethod
    def load(cls, path) -> "Scenario":
        try:
            obj = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ScenarioInvalid(f"cannot read scenario {path}: {exc}") from exc
        except ValueError as exc:
            raise ScenarioInvalid(f"scenario {path} is not JSON: {exc}") from exc
        return cls.from_obj(obj)

    def to_obj(self) -> dict:
        return {
            "seed": self.seed,
            "emit_period_ms": self.emit_period_ms,
            "duration_ms": self.duration_ms,
            "biome_pool": list(self.biome_pool),
            "initial": self.initial,
            "events": [{"at_ms": at, "patch": patch} for at, patch in self.events],
        }


def _clamp(value, low, high):
    return min(high, max(low, value))


def _walk(state: dict, rng: random.Random) -> None:
    state["Temperature"] = state["Temperature"] + rng.uniform(-TEMPERATURE_STEP, TEMPERATURE_STEP)
    state[HEALTH] = _clamp(state[HEALTH] + rng.uniform(-HEALTH_STEP, HEALTH_STEP), 0.0, VITAL_MAX)
    pos = dict(state["Position"])
    for axis, step in (("x", HORIZONTAL_STEP), ("y", VERTICAL_STEP), ("z", HORIZONTAL_STEP)):
        if axis in pos and not isinstance(pos[axis], bool):
            pos[axis] = pos[axis] + rng.uniform(-step, step)
    state["Position"] = pos


def simulate_stream(scenario: Scenario) -> Iterator[SceneSnapshot]:
    """Yield ``duration_ms // emit_period_ms`` snapshots at ``t = i * period``."""
    scenario.validate()
    rng = random.Random(scenario.seed)
    state = json.loads(json.dumps(BASE_STATE))
    state[SCENE] = scenario.biome_pool[rng.randrange(len(scenario.biome_pool))]
    state.update(json.loads(json.dumps(scenario.initial)))
    pending = list(scenario.events)
    for i in range(scenario.n_snapshots):
        t = i * scenario.emit_period_ms
        if i:
            _walk(state, rng)
        while pending and pending[0][0] <= t:
            _, patch = pending.pop(0)
            state.update(json.loads(json.dumps(patch)))
        obj = dict(state)
        obj[TIMESTAMP] = t
        try:
            yield snapshot_from_obj(obj)
        except SchemaViolation as exc:
            raise ScenarioInvalid(f"scenario produced an invalid snapshot at {t} ms: {exc}") from exc


def write_stream(snapshots, out) -> int:
    n = 0
    for snap in snapshots:
        out.write(snap.to_json() + "\n")
        n += 1
    return n


@dataclass
class SendReport:
    sent: int
    failed: int
    elapsed_s: float
    max_skew_ms: float
    mean_skew_ms: float

    def to_obj(self) -> dict:
        return dict(self.__dict__)


def _parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, _, port = endpoint.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint must look like host:port, got {endpoint!r}")
    return host, int(port)


def replay_to_collector(scenario: Scenario, endpoint: str, time_scale: float = 1.0,
                        connect_timeout: float = 5.0,
                        snapshots: Optional[list] = None) -> SendReport:
    """Send the simulated stream to a collector over NDJSON/TCP.

    ``time_scale`` multiplies the simulated clock; 0 sends as fast as
    possible.  Skew is how late each send was against its scheduled time.
    Raises :class:`ConnectionRefusedError` if the endpoint is unreachable.
    """
    host, port = _parse_endpoint(endpoint)
    items = list(snapshots) if snapshots is not None else list(simulate_stream(scenario))
    try:
        sock = socket.create_connection((host, port), timeout=connect_timeout)
    except OSError as exc:
        raise ConnectionRefusedError(f"cannot reach collector at {endpoint}: {exc}") from exc
    skews = []
    sent = 0
    start = time.monotonic()
    with sock:
        for snap in items:
            if time_scale > 0:
                due = start + snap.timestamp / 1000.0 * time_scale
                delay = due - time.monotonic()
                if delay > 0:
                    time.sleep(delay)
                skews.append(max(0.0, (time.monotonic() - due) * 1000.0))
            try:
                sock.sendall((snap.to_json() + "\n").encode())
            except OSError:
                logger.warning("send failed at t=%s; stopping replay", snap.timestamp)
                break
            sent += 1
    elapsed = time.monotonic() - start
    return SendReport(
        sent=sent,
        failed=len(items) - sent,
        elapsed_s=elapsed,
        max_skew_ms=max(skews, default=0.0),
        mean_skew_ms=sum(skews) / len(skews) if skews else 0.0,
    )
