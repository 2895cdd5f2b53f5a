"""Shared builders for tests: snapshots, random wire objects."""

import json
import random
import string
from pathlib import Path

from scenebgm.scene import snapshot_from_obj
from scenebgm.worldsim import BASE_STATE

FIXTURES = Path(__file__).parent / "fixtures"

_FLAG_WORDS = ("OnFire", "Running", "Sneaking", "Wet", "Swimming", "Flying", "Poisoned", "Hungry")


def make_snapshot(**fields):
    """A valid snapshot from the simulator's base state plus wire-name overrides."""
    obj = json.loads(json.dumps(BASE_STATE))
    obj["Timestamp"] = fields.pop("Timestamp", 0)
    obj.update(fields)
    return snapshot_from_obj(obj)


def _leaf(rng):
    kind = rng.randrange(3)
    if kind == 0:
        return rng.random() < 0.5
    if kind == 1:
        return rng.randint(-100, 100)
    return rng.uniform(-1000, 1000)


def _flag_map(rng):
    out = {}
    for _ in range(rng.randrange(6)):
        word = rng.choice(_FLAG_WORDS)
        # "Not" may sit at the front, the middle or the end of a key
        shape = rng.randrange(4)
        key = {0: word, 1: "Not" + word, 2: word + "Not", 3: "Is" + "Not" + word}[shape]
        out[key] = _leaf(rng)
    return out


def random_wire(rng: random.Random, combat: bool) -> dict:
    """A random valid wire object whose context mode is ``combat``."""
    hostiles = {}
    attacked = False
    if combat:
        attacked = rng.random() < 0.5
        if not attacked or rng.random() < 0.5:
            for _ in range(rng.randint(1, 3)):
                hostiles[rng.choice(("Zombie", "Skeleton", "Creeper", "NotAMob"))] = rng.uniform(0, 30)
    return {
        "Timestamp": rng.randrange(10**6),
        "Scene": rng.choice(("forest", "desert", "gravel hills", "swamp")),
        "Time": rng.choice(("morning", "midday", "dusk", "night")),
        "Weather": rng.choice(("clear", "rain", "thunder", "snow")),
        "Temperature": rng.uniform(-2, 3),
        "Health": rng.uniform(0, 20),
        "Satiety": float(rng.randint(0, 20)) if rng.random() < 0.3 else rng.uniform(0, 20),
        "Status": _flag_map(rng),
        "Movement": _flag_map(rng),
        "Position": {**_flag_map(rng), "x": rng.uniform(-1e4, 1e4), "y": rng.uniform(0, 256)},
        "Hostile Entity": hostiles,
        "Being Attacked": attacked,
    }


def random_text(rng: random.Random, vocab=tuple(string.ascii_lowercase[:8]), max_len=12) -> str:
    return " ".join(rng.choice(vocab) for _ in range(rng.randint(1, max_len)))
