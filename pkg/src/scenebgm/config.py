"""Run configuration: a JSON file plus command-line overrides (flags win)."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from scenebgm.backends import DEFAULT_API_KEY_ENV, MockBackend, RemoteBackend
from scenebgm.errors import FatalConfig, SceneBGMError
from scenebgm.genstage import GenerationSettings, load_template
from scenebgm.ingestion import CollectorConfig, StreamWindows, start_collector
from scenebgm.scheduler import REUSE_LAST, PipelineConfig, Sink, SinkSpec
from scenebgm.worldsim import Scenario, simulate_stream

BACKEND_KINDS = ("mock", "remote")
SOURCE_KINDS = ("scenario", "collector")


@dataclass
class RunConfig:
    window_seconds: float = 10.0
    max_segments: Optional[int] = None
    seed: Optional[int] = None
    source: dict = field(default_factory=lambda: {"kind": "collector", "bind": "127.0.0.1:7878"})
    backend: dict = field(default_factory=lambda: {"kind": "mock"})
    generation: dict = field(default_factory=dict)
    templates: dict = field(default_factory=lambda: {"narrative": "narrative", "music": "music"})
    sinks: list = field(default_factory=list)
    failure_policy: str = REUSE_LAST
    timings: bool = True
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            obj = json.loads(path.read_text())
        except OSError as exc:
            raise FatalConfig(f"cannot read config {path}: {exc}") from exc
        except ValueError as exc:
            raise FatalConfig(f"config {path} is not JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise FatalConfig("config must be a JSON object")
        known = set(cls.__dataclass_fields__) - {"base_dir"}
        unknown = set(obj) - known
        if unknown:
            raise FatalConfig(f"unknown config keys: {sorted(unknown)}")
        return cls(base_dir=path.parent.resolve(), **obj)

    def resolve(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def validate(self) -> None:
        if not isinstance(self.window_seconds, (int, float)) or self.window_seconds <= 0:
            raise FatalConfig("window_seconds must be > 0")
        if self.max_segments is not None and (not isinstance(self.max_segments, int) or self.max_segments < 1):
            raise FatalConfig("max_segments must be a positive integer")
        kind = self.backend.get("kind")
        if kind not in BACKEND_KINDS:
            raise FatalConfig(f"backend.kind must be exactly one of {BACKEND_KINDS}, got {kind!r}")
        if kind == "remote" and not self.backend.get("base_url"):
            raise FatalConfig("remote backend needs base_url")
        if self.source.get("kind") not in SOURCE_KINDS:
            raise FatalConfig(f"source.kind must be one of {SOURCE_KINDS}")
        if self.source["kind"] == "scenario":
            path = self.source.get("path")
            if not path or not self.resolve(path).is_file():
                raise FatalConfig(f"scenario file not found: {path}")
        for name in ("narrative", "music"):
            if name not in self.templates:
                raise FatalConfig(f"templates.{name} is required")
            ref = self.templates[name]
            if str(ref).endswith(".json") and not self.resolve(ref).is_file():
                raise FatalConfig(f"template file not found: {ref}")
        if not self.sinks:
            raise FatalConfig("at least one sink is required")
        if self.failure_policy != REUSE_LAST:
            raise FatalConfig(f"unsupported failure_policy {self.failure_policy!r}")

    # builders --------------------------------------------------------------
    def generation_settings(self) -> GenerationSettings:
        g = self.generation
        model = self.backend.get("model", "mock-1" if self.backend.get("kind") == "mock" else "")
        return GenerationSettings(
            model=model,
            temperature=g.get("temperature", 0.7),
            max_tokens=g.get("max_tokens", 256),
            seed=g.get("seed", self.seed),
            attempts=g.get("attempts", 3),
            backoff_s=g.get("backoff_s", 0.25),
        )

    def build_backend(self):
        b = self.backend
        if b["kind"] == "mock":
            return MockBackend(model=b.get("model", "mock-1"), seed=self.seed)
        env = b.get("api_key_env", DEFAULT_API_KEY_ENV)
        return RemoteBackend(b["base_url"], b.get("model", ""), api_key=os.environ.get(env),
                             timeout=b.get("timeout", 30.0))

    def build_templates(self) -> dict:
        out = {}
        for name, ref in self.templates.items():
            ref = str(ref)
            out[name] = load_template(self.resolve(ref) if ref.endswith(".json") else ref)
        return out

    def build_sinks(self) -> list:
        sinks = []
        for spec in self.sinks:
            target = spec.get("target", "")
            if spec.get("kind") == "jsonl" and target and target != "-":
                target = str(self.resolve(target))
            sinks.append(Sink(SinkSpec(spec.get("kind", ""), target), timings=self.timings))
        return sinks

    def build_source(self):
        s = self.source
        if s["kind"] == "scenario":
            scenario = Scenario.load(self.resolve(s["path"]))
            if self.seed is not None:
                scenario.seed = self.seed
            return StreamWindows(simulate_stream(scenario), self.window_seconds,
                                 end_ms=scenario.duration_ms, time_scale=float(s.get("time_scale", 0)))
        cfg = CollectorConfig.from_bind(
            s.get("bind", "127.0.0.1:7878"),
            window_seconds=self.window_seconds,
            queue_capacity=s.get("queue_capacity", 4096),
            max_message_bytes=s.get("max_message_bytes", 65536),
            timestamp_mode=s.get("timestamp_mode", "arrival"),
        )
        try:
            return start_collector(cfg)
        except SceneBGMError as exc:
            raise FatalConfig(str(exc)) from exc

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            max_segments=self.max_segments,
            failure_policy=self.failure_policy,
            timings=self.timings,
            generation=self.generation_settings(),
        )


def apply_overrides(config: RunConfig, **flags) -> RunConfig:
    """Copy non-None flag values onto ``config``."""
    kind = flags.get("backend")
    if kind and kind != config.backend.get("kind"):
        config.backend = {"kind": kind}
    for key in ("model", "base_url"):
        if flags.get(key):
            config.backend[key] = flags[key]
    for key in ("window_seconds", "max_segments", "seed"):
        if flags.get(key) is not None:
            setattr(config, key, flags[key])
    if flags.get("scenario"):
        config.source = {"kind": "scenario", "path": str(Path(flags["scenario"]).resolve()),
                         "time_scale": config.source.get("time_scale", 0)}
    if flags.get("bind"):
        config.source = {"kind": "collector", "bind": flags["bind"]}
    if flags.get("time_scale") is not None:
        config.source["time_scale"] = flags["time_scale"]
    if flags.get("out"):
        config.sinks = [*config.sinks, {"kind": "jsonl", "target": str(Path(flags["out"]).resolve())}]
    if flags.get("no_timings"):
        config.timings = False
    return config

