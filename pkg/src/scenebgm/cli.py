"""Command-line entry point.

Data (JSONL, CSV, tables) goes to files or stdout; logs and the one-line
JSON run summary go to stderr.  Exit codes: 0 success, 1 fatal
configuration or runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import signal
import sys
import time
from pathlib import Path

from scenebgm import __version__
from scenebgm.config import RunConfig, apply_overrides
from scenebgm.errors import CollectorStopped, SceneBGMError, TimedOut
from scenebgm.ingestion import CollectorConfig, aggregate, start_collector
from scenebgm.scheduler import Pipeline, canonical_json
from scenebgm.worldsim import Scenario, replay_to_collector, simulate_stream, write_stream

logger = logging.getLogger("scenebgm")

EXIT_OK = 0
EXIT_FATAL = 1
EXIT_USAGE = 2


def _summary(command: str, **fields) -> None:
    print(json.dumps({"event": "summary", "command": command, **fields}, sort_keys=True,
                     default=str), file=sys.stderr, flush=True)


def _install_stop(callback) -> None:
    def handler(signum, _frame):
        logger.warning("signal %d: draining", signum)
        callback()

    for sig in (signal.SIGINT, signal.SIGTERM):
        try:
            signal.signal(sig, handler)
        except ValueError:  # not in the main thread
            pass


# ---------------------------------------------------------------------------
# subcommands

def cmd_serve(args) -> int:
    cfg = CollectorConfig.from_bind(args.bind, window_seconds=args.window_seconds,
                                    queue_capacity=args.queue_capacity,
                                    max_message_bytes=args.max_message_bytes,
                                    timestamp_mode=args.timestamp_mode)
    handle = start_collector(cfg)
    _install_stop(handle.stop)
    print(json.dumps({"event": "listening", "endpoint": handle.endpoint}), file=sys.stderr, flush=True)
    previous = None
    windows = 0
    try:
        while args.max_segments is None or windows < args.max_segments:
            try:
                batch = handle.next_segment()
            except CollectorStopped:
                break
            previous = aggregate(batch, previous) if (batch.snapshots or previous) else None
            line = {"window_index": batch.window_index, "t_start": batch.t_start, "t_end": batch.t_end,
                    "n_snapshots": len(batch.snapshots),
                    "aggregated": previous.to_wire() if previous else None}
            sys.stdout.write(canonical_json(line) + "\n")
            sys.stdout.flush()
            windows += 1
    finally:
        handle.stop()
    _summary("serve", windows=windows, **handle.stats())
    return EXIT_OK


def cmd_simulate(args) -> int:
    scenario = Scenario.load(args.scenario)
    if args.seed is not None:
        scenario.seed = args.seed
    if args.out and args.out != "-":
        with open(args.out, "w", encoding="utf-8") as fh:
            n = write_stream(simulate_stream(scenario), fh)
    else:
        n = write_stream(simulate_stream(scenario), sys.stdout)
    _summary("simulate", snapshots=n, seed=scenario.seed)
    return EXIT_OK


def cmd_replay(args) -> int:
    scenario = Scenario.load(args.scenario)
    if args.seed is not None:
        scenario.seed = args.seed
    try:
        report = replay_to_collector(scenario, args.endpoint, args.time_scale)
    except ConnectionRefusedError as exc:
        logger.error("%s", exc)
        _summary("replay", error=str(exc))
        return EXIT_FATAL
    sys.stdout.write(json.dumps(report.to_obj(), sort_keys=True) + "\n")
    _summary("replay", **report.to_obj())
    return EXIT_OK


def cmd_run(args) -> int:
    config = RunConfig.load(args.config) if args.config else RunConfig()
    apply_overrides(config, backend=args.backend, model=args.model, base_url=args.base_url,
                    window_seconds=args.window_seconds, max_segments=args.max_segments,
                    seed=args.seed, scenario=args.scenario, bind=args.bind,
                    time_scale=args.time_scale, out=args.out, no_timings=args.no_timings)
    config.validate()
    templates = config.build_templates()
    backend = config.build_backend()
    sinks = config.build_sinks()
    source = config.build_source()
    pipeline = Pipeline(source, backend, templates, sinks, config.pipeline_config())

    def stop():
        pipeline.stop()
        source.stop()

    _install_stop(stop)
    started = time.monotonic()
    try:
        summary = pipeline.run()
    finally:
        source.stop()
    fields = summary.to_obj()
    fields.pop("event", None)
    _summary("run", elapsed_s=round(time.monotonic() - started, 3), **fields)
    return EXIT_OK


def cmd_eval(args) -> int:
    from scenebgm.metrics.report import (
        evaluate_systems,
        load_aligned_pairs,
        load_jsonl_pairs,
    )

    names = args.name or []
    systems = {}
    for i, hyp in enumerate(args.hyp):
        name = names[i] if i < len(names) else Path(hyp).stem
        if args.ref:
            pairs = load_aligned_pairs(hyp, args.ref)
        else:
            pairs = load_jsonl_pairs(hyp)
        systems[name] = pairs
    report = evaluate_systems(systems, aggregation=args.aggregation, beta=args.beta)
    text = report.render(args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    _summary("eval", systems=list(systems), n_pairs=report.n_pairs, aggregation=args.aggregation,
             empty_hypotheses=report.empty_hypotheses)
    return EXIT_OK


def _dataset_context(args):
    config = RunConfig.load(args.config) if args.config else RunConfig()
    apply_overrides(config, backend=args.backend, model=args.model, base_url=args.base_url, seed=args.seed)
    config.templates.setdefault("match", "match")
    return config.build_backend(), config.build_templates(), config.generation_settings()


def cmd_dataset_synth(args) -> int:
    from scenebgm.dataset import ScenarioGrid, count_report, export_pairs, synthesize_pairs

    backend, templates, settings = _dataset_context(args)
    grid = ScenarioGrid.load(args.grid)
    pairs = synthesize_pairs(grid, backend, templates, settings)
    export_pairs(pairs, args.out, args.format)
    _summary("dataset synth", scenarios=len(pairs) // 2, **count_report(pairs))
    return EXIT_OK


def cmd_dataset_reverse(args) -> int:
    from scenebgm.dataset import count_report, export_pairs, load_captions, load_scene_pool, reverse_pair

    backend, templates, settings = _dataset_context(args)
    captions = load_captions(args.captions)
    pool = load_scene_pool(args.scenes)
    result = reverse_pair(captions, pool, backend, templates, settings,
                          max_candidates=args.max_candidates, seed=args.seed or 0)
    export_pairs(result.pairs, args.out, args.format)
    if args.rejections:
        with open(args.rejections, "w", encoding="utf-8") as fh:
            for rej in result.rejections:
                fh.write(json.dumps(rej.to_obj(), ensure_ascii=False) + "\n")
    _summary("dataset reverse", captions=len(captions), **count_report(result.pairs, result.rejections))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_float(text):
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return value


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _backend_flags(p):
    p.add_argument("--backend", choices=("mock", "remote"), help="text-generation backend (overrides config)")
    p.add_argument("--model", help="model id passed to the backend")
    p.add_argument("--base-url", help="chat-completion base URL for the remote backend; "
                                      "API key is read from $SCENEBGM_API_KEY")
    p.add_argument("--seed", type=int, help="seed for the simulator and mock backend")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scenebgm", description="Scene-driven background music descriptions.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("serve", help="run the snapshot collector only")
    p.add_argument("--bind", default="127.0.0.1:7878", help="host:port to listen on")
    p.add_argument("--window-seconds", type=_positive_float, default=10.0, help="segment length")
    p.add_argument("--queue-capacity", type=_positive_int, default=4096, help="raw message queue bound")
    p.add_argument("--max-message-bytes", type=_positive_int, default=65536, help="per-message size limit")
    p.add_argument("--timestamp-mode", choices=("arrival", "event"), default="arrival",
                   help="window by arrival time or by the sender's Timestamp")
    p.add_argument("--max-segments", type=_positive_int, help="stop after this many windows")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("simulate", help="write a simulated snapshot stream as JSONL")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--out", help="output JSONL (default stdout)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("replay", help="send a simulated stream to a collector")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--endpoint", required=True, help="collector host:port")
    p.add_argument("--time-scale", type=float, default=1.0, help="1 = real time, 0 = as fast as possible")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("run", help="run the full pipeline")
    p.add_argument("--config", help="run config JSON")
    _backend_flags(p)
    p.add_argument("--max-segments", type=_positive_int, help="stop after this many segments")
    p.add_argument("--window-seconds", type=_positive_float, help="segment length")
    p.add_argument("--scenario", help="use a simulated scenario as the source")
    p.add_argument("--bind", help="use a network collector on host:port as the source")
    p.add_argument("--time-scale", type=float, help="pacing for scenario sources (0 = no waiting)")
    p.add_argument("--out", help="append a JSONL file sink")
    p.add_argument("--no-timings", action="store_true", help="omit stage latencies from records")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="score hypotheses with BLEU-1..4, METEOR and ROUGE-L")
    p.add_argument("--hyp", action="append", required=True,
                   help="hypothesis file (one per line, or JSONL with references); repeat per system")
    p.add_argument("--ref", action="append", help="aligned reference file; repeat for multiple references")
    p.add_argument("--name", action="append", help="system name for the matching --hyp")
    p.add_argument("--aggregation", choices=("sentence", "corpus"), default="sentence",
                   help="sentence mean or corpus-pooled BLEU")
    p.add_argument("--format", choices=("table", "csv", "json", "latex"), default="table")
    p.add_argument("--beta", type=float, default=1.2, help="ROUGE-L recall weight")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("dataset", help="build instruction-tuning pairs")
    dsub = p.add_subparsers(dest="dataset_command", required=True, parser_class=_Parser)
    d = dsub.add_parser("synth", help="synthesize pairs from a scenario grid")
    d.add_argument("--grid", required=True, help="grid JSON file")
    d.add_argument("--out", required=True, help="output pairs JSONL")
    d.add_argument("--config", help="run config for backend and templates")
    d.add_argument("--format", choices=("iio+meta", "iio"), default="iio+meta")
    _backend_flags(d)
    d.set_defaults(func=cmd_dataset_synth)
    d = dsub.add_parser("reverse", help="pair music captions with matching scenes")
    d.add_argument("--captions", required=True, help="captions, one per line or JSONL {id, caption}")
    d.add_argument("--scenes", required=True, help="scene snapshots JSONL")
    d.add_argument("--out", required=True, help="output pairs JSONL")
    d.add_argument("--rejections", help="write rejected captions here (JSONL)")
    d.add_argument("--max-candidates", type=_positive_int, default=8, help="scenes offered per caption")
    d.add_argument("--config", help="run config for backend and templates")
    d.add_argument("--format", choices=("iio+meta", "iio"), default="iio+meta")
    _backend_flags(d)
    d.set_defaults(func=cmd_dataset_reverse)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (SceneBGMError, OSError, ValueError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        _summary(args.command, error=f"{type(exc).__name__}: {exc}")
        return EXIT_FATAL
    except (TimedOut, KeyboardInterrupt):
        return EXIT_FATAL
