"""The segment loop.

Each closed window is aggregated, its context mode detected, characterized,
narrated and turned into a music description anchored on the previous
segment's description.  Collection of window k+1 overlaps generation for
window k; records still leave through one ordering point, in window order.
"""

from __future__ import annotations

import json
import logging
import math
import queue
import sys
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from scenebgm.errors import (
    CollectorStopped,
    FatalConfig,
    SceneBGMError,
    SinkUnavailable,
    TimedOut,
)
from scenebgm.genstage import (
    GenerationSettings,
    MusicDescription,
    NarrativeText,
    PromptTemplate,
    generate_music_description,
    generate_narrative,
)
from scenebgm.ingestion import SegmentBatch, aggregate
from scenebgm.scene import (
    CharacterizedData,
    ContextMode,
    SceneSnapshot,
    characterize,
    detect_mode,
    snapshot_from_obj,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
REUSE_LAST = "reuse_last"
FALLBACK_DESCRIPTION = "The music is calm and ambient, with soft pads and a slow, steady pulse."


def canonical_json(obj) -> str:
    """Sorted keys, compact separators, shortest round-trip floats."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False,
                      allow_nan=False)


@dataclass
class SegmentRecord:
    window_index: int
    t_start: int
    t_end: int
    aggregated_snapshot: Optional[SceneSnapshot]
    characterized: Optional[CharacterizedData]
    mode: Optional[ContextMode]
    narrative: Optional[NarrativeText]
    description: MusicDescription
    anchor_window: Optional[int]
    stage_latencies_ms: dict = field(default_factory=dict)
    error: Optional[str] = None
    n_snapshots: int = 0

    @property
    def degraded(self) -> bool:
        return self.error is not None

    def to_obj(self, timings: bool = True) -> dict:
        obj = {
            "schema_version": SCHEMA_VERSION,
            "window_index": self.window_index,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "n_snapshots": self.n_snapshots,
            "aggregated_snapshot": self.aggregated_snapshot.to_wire() if self.aggregated_snapshot else None,
            "mode": self.mode.value if self.mode else None,
            "characterized": self.characterized.entries if self.characterized else None,
            "narrative": self.narrative.text if self.narrative else None,
            "description": {
                "text": self.description.text,
                "word_count": self.description.word_count,
                "anchor_of": self.description.anchor_of,
            },
            "anchor_window": self.anchor_window,
            "error": self.error,
        }
        if timings:
            obj["stage_latencies_ms"] = dict(self.stage_latencies_ms)
        return obj

    @classmethod
    def from_obj(cls, obj: dict) -> "SegmentRecord":
        mode = ContextMode(obj["mode"]) if obj.get("mode") else None
        snap = obj.get("aggregated_snapshot")
        desc = obj["description"]
        return cls(
            window_index=obj["window_index"],
            t_start=obj["t_start"],
            t_end=obj["t_end"],
            n_snapshots=obj.get("n_snapshots", 0),
            aggregated_snapshot=snapshot_from_obj(snap) if snap else None,
            characterized=CharacterizedData(obj["characterized"], mode) if obj.get("characterized") is not None else None,
            mode=mode,
            narrative=NarrativeText(obj["narrative"], obj["window_index"]) if obj.get("narrative") is not None else None,
            description=MusicDescription(desc["text"], desc["word_count"], desc.get("anchor_of"),
                                         obj["window_index"]),
            anchor_window=obj.get("anchor_window"),
            stage_latencies_ms=dict(obj.get("stage_latencies_ms", {})),
            error=obj.get("error"),
        )

    def to_json(self, timings: bool = True) -> str:
        return canonical_json(self.to_obj(timings))


# ---------------------------------------------------------------------------
# Sinks

JSONL_FILE = "jsonl"
HTTP_POST = "http"
STDOUT = "stdout"


@dataclass(frozen=True)
class SinkSpec:
    kind: str
    target: str = ""

    def validate(self) -> None:
        if self.kind not in (JSONL_FILE, HTTP_POST, STDOUT):
            raise FatalConfig(f"unknown sink kind {self.kind!r}")
        if self.kind == JSONL_FILE and not self.target:
            raise FatalConfig("jsonl sink needs a target path")
        if self.kind == HTTP_POST and not self.target.startswith(("http://", "https://")):
            raise FatalConfig(f"http sink needs an http(s) URL, got {self.target!r}")


class Sink:
    def __init__(self, spec: SinkSpec, timings: bool = True, stream=None, timeout: float = 5.0):
        spec.validate()
        self.spec = spec
        self.timings = timings
        self.stream = stream
        self.timeout = timeout
        self.failures = 0
        self._client = None
        if spec.kind == JSONL_FILE:
            path = Path(spec.target)
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                # truncate at run start; emits append
                path.write_text("")
            except OSError as exc:
                raise FatalConfig(f"cannot open sink {path}: {exc}") from exc

    def emit(self, record: SegmentRecord) -> bool:
        """Deliver one record; raises :class:`SinkUnavailable` on failure."""
        kind = self.spec.kind
        if kind == JSONL_FILE:
            try:
                with open(self.spec.target, "a", encoding="utf-8") as fh:
                    fh.write(record.to_json(self.timings) + "\n")
            except OSError as exc:
                raise SinkUnavailable(f"cannot append to {self.spec.target}: {exc}") from exc
            return True
        if kind == STDOUT:
            out = self.stream or sys.stdout
            out.write(record.description.text + "\n")
            out.flush()
            return True
        import httpx

        if self._client is None:
            self._client = httpx.Client(timeout=self.timeout)
        try:
            resp = self._client.post(self.spec.target, content=record.to_json(self.timings).encode(),
                                     headers={"Content-Type": "application/json"})
        except httpx.HTTPError as exc:
            raise SinkUnavailable(f"POST {self.spec.target} failed: {exc}") from exc
        if not 200 <= resp.status_code < 300:
            raise SinkUnavailable(f"POST {self.spec.target} answered {resp.status_code}")
        return True

    def close(self) -> None:
        if self._client is not None:
            self._client.close()
            self._client = None


def emit(sink: Sink, record: SegmentRecord) -> bool:
    return sink.emit(record)


def read_records(path) -> list[SegmentRecord]:
    with open(path, encoding="utf-8") as fh:
        return [SegmentRecord.from_obj(json.loads(line)) for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# Pipeline

@dataclass
class PipelineConfig:
    max_segments: Optional[int] = None
    failure_policy: str = REUSE_LAST
    timings: bool = True
    generation: GenerationSettings = field(default_factory=GenerationSettings)
    default_snapshot: Optional[SceneSnapshot] = None
    handoff_capacity: int = 2
    segment_timeout_s: Optional[float] = None


@dataclass
class RunSummary:
    segments: int = 0
    failures: int = 0
    sink_failures: int = 0
    stopped_reason: str = ""
    stage_p50_ms: dict = field(default_factory=dict)
    stage_p95_ms: dict = field(default_factory=dict)
    overhead_p50_ms: float = 0.0
    overhead_p95_ms: float = 0.0
    skew_max_ms: Optional[float] = None
    skew_p95_ms: Optional[float] = None
    records: list = field(default_factory=list, repr=False)

    def to_obj(self) -> dict:
        obj = {k: v for k, v in self.__dict__.items() if k != "records"}
        obj["event"] = "run_summary"
        return obj


def percentile(values, q: float) -> float:
    """Nearest-rank percentile; 0 for an empty sample."""
    if not values:
        return 0.0
    ordered = sorted(values)
    rank = min(len(ordered), max(1, math.ceil(q * len(ordered))))
    return ordered[rank - 1]


class _Stop:
    pass


class Pipeline:
    def __init__(self, source, backend, templates: dict, sinks: list, config: Optional[PipelineConfig] = None):
        if not sinks:
            raise FatalConfig("at least one sink is required")
        for key in ("narrative", "music"):
            if not isinstance(templates.get(key), PromptTemplate):
                raise FatalConfig(f"missing {key} template")
        self.source = source
        self.backend = backend
        self.templates = templates
        self.sinks = sinks
        self.config = config or PipelineConfig()
        self.stop_event = threading.Event()
        self._previous_snapshot: Optional[SceneSnapshot] = None
        self._previous_description: Optional[MusicDescription] = None

    def stop(self) -> None:
        """Request a clean drain: finish in-flight windows, then return."""
        self.stop_event.set()

    def _collect(self, handoff: queue.Queue, errors: list) -> None:
        limit = self.config.max_segments
        taken = 0
        try:
            while not self.stop_event.is_set() and (limit is None or taken < limit):
                deadline = None
                if self.config.segment_timeout_s is not None:
                    deadline = time.monotonic() + self.config.segment_timeout_s
                try:
                    batch = self.source.next_segment(deadline)
                except TimedOut:
                    continue
                handoff.put(batch)
                taken += 1
        except CollectorStopped as exc:
            errors.append(str(exc))
        except Exception as exc:  # surfaced in the summary
            logger.exception("collection failed")
            errors.append(f"collection failed: {exc}")
        finally:
            handoff.put(_Stop)

    def process(self, batch: SegmentBatch) -> SegmentRecord:
        """Run the stages for one window; never raises on stage failures."""
        latencies: dict = {}
        idx = batch.window_index
        anchor = self._previous_description
        anchor_window = anchor.source_window if anchor is not None else None
        snapshot = characterized = mode = narrative = None
        cfg = self.config
        try:
            t0 = time.perf_counter()
            snapshot = aggregate(batch, self._previous_snapshot, cfg.default_snapshot)
            mode = detect_mode(snapshot)
            characterized = characterize(snapshot, mode)
            latencies["characterize"] = (time.perf_counter() - t0) * 1000.0
            t1 = time.perf_counter()
            narrative = generate_narrative(characterized, self.templates["narrative"], self.backend,
                                           cfg.generation, window=idx)
            latencies["narrative"] = (time.perf_counter() - t1) * 1000.0
            latencies["narrative_backend"] = narrative.latency_ms
            t2 = time.perf_counter()
            description = generate_music_description(narrative, anchor, self.templates["music"],
                                                     self.backend, cfg.generation, window=idx)
            latencies["music"] = (time.perf_counter() - t2) * 1000.0
            latencies["music_backend"] = description.latency_ms
            error = None
        except SceneBGMError as exc:
            error = f"{type(exc).__name__}: {exc}"
            logger.warning("window %d degraded: %s", idx, error)
            text = anchor.text if anchor is not None else FALLBACK_DESCRIPTION
            description = MusicDescription(text=text, word_count=len(text.split()),
                                           anchor_of=anchor_window, source_window=idx)
        if snapshot is not None:
            self._previous_snapshot = snapshot
        self._previous_description = MusicDescription(
            text=description.text, word_count=description.word_count,
            anchor_of=description.anchor_of, source_window=idx,
        )
        return SegmentRecord(
            window_index=idx,
            t_start=batch.t_start,
            t_end=batch.t_end,
            n_snapshots=len(batch.snapshots),
            aggregated_snapshot=snapshot,
            characterized=characterized,
            mode=mode,
            narrative=narrative,
            description=description,
            anchor_window=anchor_window,
            stage_latencies_ms=latencies,
            error=error,
        )

    def _emit(self, record: SegmentRecord, summary: RunSummary) -> None:
        for sink in self.sinks:
            try:
                sink.emit(record)
            except SinkUnavailable as exc:
                summary.sink_failures += 1
                logger.error("sink %s: %s", sink.spec.kind, exc)

    def run(self) -> RunSummary:
        summary = RunSummary()
        handoff: queue.Queue = queue.Queue(maxsize=max(1, self.config.handoff_capacity))
        errors: list = []
        collector = threading.Thread(target=self._collect, args=(handoff, errors),
                                     name="pipeline-collect", daemon=True)
        collector.start()
        stage_samples: dict = {}
        overheads = []
        skews = []
        try:
            while True:
                item = handoff.get()
                if item is _Stop:
                    break
                batch = item
                started = time.perf_counter()
                record = self.process(batch)
                self._emit(record, summary)
                total_ms = (time.perf_counter() - started) * 1000.0
                backend_ms = record.stage_latencies_ms.get("narrative_backend", 0.0) + \
                    record.stage_latencies_ms.get("music_backend", 0.0)
                overheads.append(max(0.0, total_ms - backend_ms))
                if batch.boundary_skew_ms is not None:
                    skews.append(batch.boundary_skew_ms)
                for stage, value in record.stage_latencies_ms.items():
                    stage_samples.setdefault(stage, []).append(value)
                summary.segments += 1
                summary.failures += record.degraded
                summary.records.append(record)
        finally:
            self.stop_event.set()
            collector.join(timeout=5)
            for sink in self.sinks:
                sink.close()
        summary.stopped_reason = errors[0] if errors else (
            "max_segments reached" if self.config.max_segments is not None
            and summary.segments >= self.config.max_segments else "stopped")
        summary.stage_p50_ms = {k: round(percentile(v, 0.50), 3) for k, v in stage_samples.items()}
        summary.stage_p95_ms = {k: round(percentile(v, 0.95), 3) for k, v in stage_samples.items()}
        summary.overhead_p50_ms = round(percentile(overheads, 0.50), 3)
        summary.overhead_p95_ms = round(percentile(overheads, 0.95), 3)
        if skews:
            summary.skew_max_ms = round(max(skews), 3)
            summary.skew_p95_ms = round(percentile(skews, 0.95), 3)
        return summary


def run_pipeline(source, backend, templates: dict, sinks: list,
                 config: Optional[PipelineConfig] = None) -> RunSummary:
    return Pipeline(source, backend, templates, sinks, config).run()
