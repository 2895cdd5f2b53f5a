"""Snapshot schema, context detection and data characterization.

A snapshot is one timestamped observation of world and player state as sent
over the wire.  Characterization projects a snapshot onto the fields that
matter for the current context: keys carrying a ``Not`` flag are dropped,
reals are cut to two decimals and only the retain list of the active mode
survives.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from decimal import ROUND_HALF_UP, Decimal
from importlib import resources
from typing import Any, Mapping

from scenebgm.errors import MalformedJson, SchemaViolation

SCENE = "Scene"
TIME = "Time"
WEATHER = "Weather"
TEMPERATURE = "Temperature"
HEALTH = "Health"
SATIETY = "Satiety"
STATUS = "Status"
MOVEMENT = "Movement"
POSITION = "Position"
HOSTILE_ENTITY = "Hostile Entity"
BEING_ATTACKED = "Being Attacked"
TIMESTAMP = "Timestamp"

COMBAT_RETAIN = (SCENE, HEALTH, SATIETY, STATUS, MOVEMENT, POSITION, HOSTILE_ENTITY, BEING_ATTACKED)
EXPLORATION_RETAIN = (SCENE, TIME, WEATHER, TEMPERATURE, STATUS, MOVEMENT, POSITION)

# Wire order of the eleven elements.
ELEMENTS = (
    SCENE, TIME, WEATHER, TEMPERATURE, HEALTH, SATIETY,
    STATUS, MOVEMENT, POSITION, HOSTILE_ENTITY, BEING_ATTACKED,
)

VITAL_MAX = 20.0
_TWO_PLACES = Decimal("0.01")


class ContextMode(str, enum.Enum):
    COMBAT = "Combat"
    EXPLORATION = "Exploration"

    @property
    def retain(self) -> tuple[str, ...]:
        return COMBAT_RETAIN if self is ContextMode.COMBAT else EXPLORATION_RETAIN


@dataclass(frozen=True)
class SceneSnapshot:
    timestamp: int
    scene: str
    time: str
    weather: str
    temperature: float
    health: float
    satiety: float
    status: dict = field(default_factory=dict)
    movement: dict = field(default_factory=dict)
    position: dict = field(default_factory=dict)
    hostile_entity: dict = field(default_factory=dict)
    being_attacked: bool = False
    # Unknown top-level keys from the wire, kept so re-serialization is lossless.
    extra: dict = field(default_factory=dict)

    def to_wire(self) -> dict:
        """Return the wire form: ``Timestamp`` followed by the eleven elements."""
        wire = {
            TIMESTAMP: self.timestamp,
            SCENE: self.scene,
            TIME: self.time,
            WEATHER: self.weather,
            TEMPERATURE: self.temperature,
            HEALTH: self.health,
            SATIETY: self.satiety,
            STATUS: dict(self.status),
            MOVEMENT: dict(self.movement),
            POSITION: dict(self.position),
            HOSTILE_ENTITY: dict(self.hostile_entity),
            BEING_ATTACKED: self.being_attacked,
        }
        wire.update(self.extra)
        return wire

    def to_json(self) -> str:
        return json.dumps(self.to_wire(), ensure_ascii=False, separators=(",", ":"))

    def with_timestamp(self, timestamp: int) -> "SceneSnapshot":
        return replace(self, timestamp=timestamp)


@dataclass(frozen=True)
class CharacterizedData:
    entries: dict
    mode: ContextMode

    def to_json_obj(self) -> dict:
        return {"mode": self.mode.value, "entries": self.entries}


def _is_real(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _check_real(obj, key, low=None, high=None) -> float:
    value = obj[key]
    if not _is_real(value):
        raise SchemaViolation(f"{key!r} must be a number, got {type(value).__name__}", key)
    if not math.isfinite(value):
        raise SchemaViolation(f"{key!r} must be finite", key)
    if low is not None and not (low <= value <= high):
        raise SchemaViolation(f"{key!r}={value} outside [{low:g}, {high:g}]", key)
    return value


def _check_map(obj, key, allowed) -> dict:
    value = obj[key]
    if not isinstance(value, dict):
        raise SchemaViolation(f"{key!r} must be an object", key)
    for inner_key, inner in value.items():
        if isinstance(inner, float) and not math.isfinite(inner):
            raise SchemaViolation(f"{key}.{inner_key} must be finite", key)
        if not isinstance(inner, allowed):
            raise SchemaViolation(
                f"{key}.{inner_key} has unsupported type {type(inner).__name__}", key
            )
    return dict(value)


def snapshot_from_obj(obj: Any) -> SceneSnapshot:
    """Validate a decoded wire object and build a :class:`SceneSnapshot`."""
    if not isinstance(obj, dict):
        raise SchemaViolation("snapshot must be a JSON object")
    for key in ELEMENTS:
        if key not in obj:
            raise SchemaViolation(f"missing required element {key!r}", key)
    for key in (SCENE, TIME, WEATHER):
        if not isinstance(obj[key], str):
            raise SchemaViolation(f"{key!r} must be a string", key)
    timestamp = obj.get(TIMESTAMP, 0)
    if not isinstance(timestamp, int) or isinstance(timestamp, bool) or timestamp < 0:
        raise SchemaViolation("'Timestamp' must be a non-negative integer", TIMESTAMP)
    if not isinstance(obj[BEING_ATTACKED], bool):
        raise SchemaViolation("'Being Attacked' must be a boolean", BEING_ATTACKED)

    flag = (bool, int, float)
    extra = {k: v for k, v in obj.items() if k not in ELEMENTS and k != TIMESTAMP}
    return SceneSnapshot(
        timestamp=timestamp,
        scene=obj[SCENE],
        time=obj[TIME],
        weather=obj[WEATHER],
        temperature=_check_real(obj, TEMPERATURE),
        health=_check_real(obj, HEALTH, 0.0, VITAL_MAX),
        satiety=_check_real(obj, SATIETY, 0.0, VITAL_MAX),
        status=_check_map(obj, STATUS, flag),
        movement=_check_map(obj, MOVEMENT, flag),
        position=_check_map(obj, POSITION, flag),
        hostile_entity=_check_map(obj, HOSTILE_ENTITY, (str, int, float)),
        being_attacked=obj[BEING_ATTACKED],
        extra=extra,
    )


def parse_snapshot(raw: str | bytes) -> SceneSnapshot:
    """Parse one JSON snapshot message.

    Raises :class:`MalformedJson` when ``raw`` is not JSON and
    :class:`SchemaViolation` when it is JSON but not a valid snapshot.
    """
    try:
        obj = json.loads(raw)
    except (ValueError, UnicodeDecodeError) as exc:
        raise MalformedJson(str(exc)) from exc
    return snapshot_from_obj(obj)


def load_schema() -> dict:
    """The JSON Schema document for the wire format."""
    text = resources.files("scenebgm.schema").joinpath("scene_snapshot.schema.json").read_text()
    return json.loads(text)


def detect_mode(snapshot: SceneSnapshot) -> ContextMode:
    if snapshot.being_attacked or snapshot.hostile_entity:
        return ContextMode.COMBAT
    return ContextMode.EXPLORATION


def round2(value: float) -> float:
    """Round to two decimals, half away from zero, on the shortest decimal repr."""
    if not math.isfinite(value):
        return value
    quantized = Decimal(repr(float(value))).quantize(_TWO_PLACES, rounding=ROUND_HALF_UP)
    return float(quantized) + 0.0  # normalizes -0.0


def _clean(value):
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items() if "Not" not in k}
    if isinstance(value, float):
        return round2(value)
    return value


def characterize(snapshot: SceneSnapshot | Mapping, mode: ContextMode) -> CharacterizedData:
    """Project a snapshot onto the characterized view for ``mode``.

    ``snapshot`` may also be a plain mapping keyed by wire names, which is
    how an already characterized result is fed back in.
    """
    source = snapshot.to_wire() if isinstance(snapshot, SceneSnapshot) else snapshot
    entries = {}
    for key in mode.retain:
        if key in source:
            entries[key] = _clean(source[key])
    return CharacterizedData(entries=entries, mode=mode)
