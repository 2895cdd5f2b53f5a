"""Instruction-tuning pairs for the two generation stages.

Two sources feed the dataset: synthesized scenarios (a parameter grid run
through both stages) and reverse pairing, where existing music captions are
matched to a fitting scene by the backend.  Pairs export as JSONL with
``instruction``, ``input`` and ``output`` first.
"""

from __future__ import annotations

import enum
import itertools
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from scenebgm.errors import ConfigInvalid, EmptyGeneration, IoFailure, SchemaViolation
from scenebgm.genstage import (
    NO_ANCHOR,
    GenerationSettings,
    PromptTemplate,
    complete_with_retry,
    generate_music_description,
    generate_narrative,
    one_paragraph,
    render_prompt,
    to_info_str,
    build_request,
)
from scenebgm.scene import (
    ELEMENTS,
    TIMESTAMP,
    CharacterizedData,
    characterize,
    detect_mode,
    parse_snapshot,
    snapshot_from_obj,
)
from scenebgm.worldsim import BASE_STATE

logger = logging.getLogger(__name__)

NO_MATCH = "NO_MATCH"
FORMAT_WITH_META = "iio+meta"
FORMAT_PLAIN = "iio"


class PairKind(str, enum.Enum):
    SCENE_TO_NARRATIVE = "SceneToNarrative"
    NARRATIVE_TO_MUSIC = "NarrativeToMusic"


class Provenance(str, enum.Enum):
    SYNTHESIZED = "Synthesized"
    REVERSE_PAIRED = "ReversePaired"


@dataclass(frozen=True)
class TrainingPair:
    instruction: str
    input: str
    output: str
    kind: PairKind
    provenance: Provenance

    def __post_init__(self):
        for name in ("instruction", "input", "output"):
            if not getattr(self, name).strip():
                raise ValueError(f"training pair has an empty {name}")

    def to_obj(self, fmt: str = FORMAT_WITH_META) -> dict:
        obj = {"instruction": self.instruction, "input": self.input, "output": self.output}
        if fmt == FORMAT_WITH_META:
            obj["kind"] = self.kind.value
            obj["provenance"] = self.provenance.value
        return obj

    @classmethod
    def from_obj(cls, obj: dict) -> "TrainingPair":
        return cls(
            instruction=obj["instruction"],
            input=obj["input"],
            output=obj["output"],
            kind=PairKind(obj.get("kind", PairKind.NARRATIVE_TO_MUSIC.value)),
            provenance=Provenance(obj.get("provenance", Provenance.SYNTHESIZED.value)),
        )


# ---------------------------------------------------------------------------
# Scenario grid

@dataclass
class ScenarioGrid:
    """Cartesian product of field variations over a base snapshot.

    Axis names that are snapshot fields set that field; any other axis name
    takes a list of patches (partial snapshots) merged in order.
    """

    axes: dict = field(default_factory=dict)
    base: dict = field(default_factory=dict)
    points: list = field(default_factory=list)
    limit: Optional[int] = None

    @classmethod
    def from_obj(cls, obj: dict) -> "ScenarioGrid":
        if not isinstance(obj, dict):
            raise ConfigInvalid("grid must be a JSON object")
        axes = obj.get("axes", {})
        for name, values in axes.items():
            if not isinstance(values, list) or not values:
                raise ConfigInvalid(f"grid axis {name!r} needs a non-empty list")
        return cls(axes=dict(axes), base=dict(obj.get("base", {})),
                   points=list(obj.get("points", [])), limit=obj.get("limit"))

    @classmethod
    def load(cls, path) -> "ScenarioGrid":
        try:
            return cls.from_obj(json.loads(Path(path).read_text()))
        except OSError as exc:
            raise ConfigInvalid(f"cannot read grid {path}: {exc}") from exc
        except ValueError as exc:
            raise ConfigInvalid(f"grid {path} is not JSON: {exc}") from exc

    def patches(self) -> list[dict]:
        out = [dict(p) for p in self.points]
        if self.axes:
            names = list(self.axes)
            for combo in itertools.product(*(self.axes[n] for n in names)):
                patch: dict = {}
                for name, value in zip(names, combo):
                    if name in ELEMENTS:
                        patch[name] = value
                    elif isinstance(value, dict):
                        patch.update(value)
                    else:
                        raise ConfigInvalid(f"axis {name!r} is not a snapshot field; its values must be patches")
                out.append(patch)
        if self.limit is not None:
            out = out[: self.limit]
        return out

    def __len__(self) -> int:
        return len(self.patches())

    def snapshots(self):
        for i, patch in enumerate(self.patches()):
            obj = json.loads(json.dumps(BASE_STATE))
            obj.update(self.base)
            obj.update(patch)
            obj[TIMESTAMP] = 0
            try:
                yield snapshot_from_obj(obj)
            except SchemaViolation as exc:
                raise ConfigInvalid(f"grid point {i} is not a valid snapshot: {exc}") from exc


def synthesize_pairs(grid: ScenarioGrid, backend, templates: dict,
                     settings: Optional[GenerationSettings] = None) -> list[TrainingPair]:
    """Run every grid point through both stages; two pairs per point."""
    settings = settings or GenerationSettings()
    narrative_t: PromptTemplate = templates["narrative"]
    music_t: PromptTemplate = templates["music"]
    pairs = []
    for i, snapshot in enumerate(grid.snapshots()):
        data = characterize(snapshot, detect_mode(snapshot))
        narrative = generate_narrative(data, narrative_t, backend, settings, window=i)
        description = generate_music_description(narrative, None, music_t, backend, settings, window=i)
        pairs.append(TrainingPair(narrative_t.role_preamble, narrative.prompt, narrative.text,
                                  PairKind.SCENE_TO_NARRATIVE, Provenance.SYNTHESIZED))
        pairs.append(TrainingPair(music_t.role_preamble, description.prompt, description.text,
                                  PairKind.NARRATIVE_TO_MUSIC, Provenance.SYNTHESIZED))
    return pairs


# ---------------------------------------------------------------------------
# Reverse pairing

@dataclass(frozen=True)
class Caption:
    id: str
    text: str


@dataclass
class Rejection:
    index: int
    caption_id: str
    caption: str
    reason: str

    def to_obj(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ReverseResult:
    pairs: list
    rejections: list

    @property
    def accounted(self) -> int:
        return len(self.pairs) + len(self.rejections)


def _candidates(pool: Sequence[CharacterizedData], max_candidates: int, rng: random.Random):
    if len(pool) <= max_candidates:
        return list(pool)
    picks = sorted(rng.sample(range(len(pool)), max_candidates))
    return [pool[i] for i in picks]


def reverse_pair(captions: Sequence, scene_pool: Sequence[CharacterizedData], backend,
                 templates: dict, settings: Optional[GenerationSettings] = None,
                 max_candidates: int = 8, seed: int = 0) -> ReverseResult:
    """Match each caption to a scene and emit narrative-to-music pairs.

    The backend answers ``NO_MATCH`` to reject a caption; rejections (and
    captions whose matches came back empty) are reported, never dropped.
    """
    if not captions:
        raise ConfigInvalid("no captions given")
    if not scene_pool:
        raise ConfigInvalid("scene pool is empty")
    settings = settings or GenerationSettings()
    match_t: PromptTemplate = templates["match"]
    music_t: PromptTemplate = templates["music"]
    pairs, rejections = [], []
    for index, raw in enumerate(captions):
        caption = raw if isinstance(raw, Caption) else Caption(str(index), str(raw))
        rng = random.Random(f"{seed}:{index}")
        candidates = _candidates(scene_pool, max_candidates, rng)
        scenes = "\n".join(f"[{k}] {to_info_str(c)}" for k, c in enumerate(candidates))
        prompt = render_prompt(match_t, {"caption": caption.text, "scenes": scenes})
        request = build_request(prompt, match_t, settings, "match", index)
        try:
            result = complete_with_retry(backend, request, settings)
        except EmptyGeneration as exc:
            rejections.append(Rejection(index, caption.id, caption.text, f"empty: {exc}"))
            continue
        narrative = one_paragraph(result.text)
        if narrative.upper().startswith(NO_MATCH):
            rejections.append(Rejection(index, caption.id, caption.text, "no matching scene"))
            continue
        music_prompt = render_prompt(music_t, {"scene": narrative, "anchor": NO_ANCHOR})
        pairs.append(TrainingPair(music_t.role_preamble, music_prompt, caption.text,
                                  PairKind.NARRATIVE_TO_MUSIC, Provenance.REVERSE_PAIRED))
    logger.info("reverse pairing: %d pairs, %d rejections from %d captions",
                len(pairs), len(rejections), len(captions))
    return ReverseResult(pairs, rejections)


# ---------------------------------------------------------------------------
# File formats

def _read_lines(path, what: str) -> list[str]:
    # split on "\n" only: str.splitlines() also breaks on U+0085 and friends,
    # which ensure_ascii=False exports leave unescaped inside strings
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {what} {path}: {exc}") from exc
    return [line.rstrip("\r") for line in text.split("\n")]


def load_captions(path) -> list[Caption]:
    """One caption per line, or JSONL objects with ``id`` and ``caption``."""
    captions = []
    for n, line in enumerate(_read_lines(path, "captions")):
        line = line.strip()
        if not line:
            continue
        if line.startswith("{"):
            obj = json.loads(line)
            captions.append(Caption(str(obj.get("id", n)), obj["caption"]))
        else:
            captions.append(Caption(str(n), line))
    return captions


def load_scene_pool(path) -> list[CharacterizedData]:
    """Characterize every snapshot in a JSONL file."""
    pool = []
    for line in _read_lines(path, "scenes"):
        if line.strip():
            snap = parse_snapshot(line)
            pool.append(characterize(snap, detect_mode(snap)))
    return pool


def export_pairs(pairs: Iterable[TrainingPair], path, fmt: str = FORMAT_WITH_META) -> int:
    if fmt not in (FORMAT_WITH_META, FORMAT_PLAIN):
        raise ValueError(f"unknown export format {fmt!r}")
    pairs = list(pairs)
    if not pairs:
        logger.warning("exporting an empty pair list to %s", path)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for pair in pairs:
                fh.write(json.dumps(pair.to_obj(fmt), ensure_ascii=False) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc
    return len(pairs)


def import_pairs(path) -> list[TrainingPair]:
    return [TrainingPair.from_obj(json.loads(line)) for line in _read_lines(path, "pairs") if line.strip()]


def count_report(pairs: Sequence[TrainingPair], rejections: Sequence[Rejection] = ()) -> dict:
    counts = {"total": len(pairs), "rejections": len(rejections)}
    for kind in PairKind:
        for prov in Provenance:
            n = sum(1 for p in pairs if p.kind is kind and p.provenance is prov)
            if n:
                counts[f"{kind.value}/{prov.value}"] = n
    return counts
