"""Snapshot collection and fixed-window segmentation.

The collector listens on one TCP port and speaks two dialects on it:
newline-delimited JSON (one snapshot per line) and a small HTTP surface
(``POST /v1/snapshot``, ``GET /v1/health``).  Reader threads only timestamp
and enqueue raw messages; a parse worker validates them and files them into
windows.  The single consumer pulls closed windows with
:meth:`CollectorHandle.next_segment`.
"""

from __future__ import annotations

import json
import logging
import math
import socketserver
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler
from typing import Callable, Iterable, Optional

from scenebgm.errors import (
    BindFailure,
    CollectorStopped,
    ConfigInvalid,
    NoDataEver,
    SceneBGMError,
    TimedOut,
)
from scenebgm.scene import SceneSnapshot, parse_snapshot

logger = logging.getLogger(__name__)

ARRIVAL = "arrival"
EVENT = "event"


@dataclass
class CollectorConfig:
    host: str = "127.0.0.1"
    port: int = 0
    window_seconds: float = 10.0
    queue_capacity: int = 4096
    max_message_bytes: int = 65536
    # "arrival": the collector stamps each snapshot with its arrival time on
    # the stream clock.  "event": the sender's Timestamp is trusted and
    # snapshots for windows that already closed are dropped as late.
    timestamp_mode: str = ARRIVAL

    def validate(self) -> None:
        if not (isinstance(self.window_seconds, (int, float)) and self.window_seconds > 0
                and math.isfinite(self.window_seconds)):
            raise ConfigInvalid(f"window_seconds must be > 0, got {self.window_seconds!r}")
        if not isinstance(self.queue_capacity, int) or self.queue_capacity < 1:
            raise ConfigInvalid(f"queue_capacity must be >= 1, got {self.queue_capacity!r}")
        if not isinstance(self.max_message_bytes, int) or self.max_message_bytes < 1:
            raise ConfigInvalid("max_message_bytes must be >= 1")
        if self.timestamp_mode not in (ARRIVAL, EVENT):
            raise ConfigInvalid(f"unknown timestamp_mode {self.timestamp_mode!r}")
        if not 0 <= int(self.port) <= 65535:
            raise ConfigInvalid(f"port out of range: {self.port}")

    @property
    def window_ms(self) -> int:
        return max(1, int(round(self.window_seconds * 1000)))

    @classmethod
    def from_bind(cls, bind: str, **kwargs) -> "CollectorConfig":
        host, _, port = bind.rpartition(":")
        if not host or not port.isdigit():
            raise ConfigInvalid(f"bind address must look like host:port, got {bind!r}")
        return cls(host=host, port=int(port), **kwargs)


@dataclass(frozen=True)
class SegmentBatch:
    window_index: int
    t_start: int
    t_end: int
    snapshots: tuple = ()
    # Wall-clock lateness of the release relative to the scheduled boundary.
    boundary_skew_ms: Optional[float] = field(default=None, compare=False)

    def __len__(self) -> int:
        return len(self.snapshots)


class Windower:
    """Assigns snapshots to contiguous ``[k*W, (k+1)*W)`` windows by timestamp.

    Thread-safe.  Windows are released strictly in order by :meth:`take`;
    a snapshot whose window was already released counts as late.
    """

    def __init__(self, window_ms: int):
        if window_ms <= 0:
            raise ConfigInvalid("window length must be positive")
        self.window_ms = window_ms
        self.next_index = 0
        self.late = 0
        self._pending: dict[int, list] = {}
        self._lock = threading.Lock()

    def index_of(self, timestamp: int) -> int:
        return timestamp // self.window_ms

    def offer(self, snapshot: SceneSnapshot) -> bool:
        idx = self.index_of(snapshot.timestamp)
        with self._lock:
            if idx < self.next_index:
                self.late += 1
                return False
            self._pending.setdefault(idx, []).append(snapshot)
            return True

    def take(self, skew_ms=None) -> SegmentBatch:
        with self._lock:
            idx = self.next_index
            items = self._pending.pop(idx, [])
            self.next_index += 1
        items.sort(key=lambda s: s.timestamp)
        return SegmentBatch(
            window_index=idx,
            t_start=idx * self.window_ms,
            t_end=(idx + 1) * self.window_ms,
            snapshots=tuple(items),
            boundary_skew_ms=skew_ms,
        )

    def pending_count(self) -> int:
        with self._lock:
            return sum(len(v) for v in self._pending.values())

    def has_pending(self) -> bool:
        with self._lock:
            return any(self._pending.values())


class _RawQueue:
    """Bounded FIFO of (arrival_ms, payload); overflow drops the oldest item."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.items: deque = deque()
        self.dropped = 0
        self.cond = threading.Condition()

    def put(self, arrival_ms: int, payload: bytes) -> None:
        with self.cond:
            if len(self.items) >= self.capacity:
                self.items.popleft()
                self.dropped += 1
            self.items.append((arrival_ms, payload))
            self.cond.notify_all()


class _Handler(BaseHTTPRequestHandler):
    """Dispatches a connection to the NDJSON loop or to HTTP handling."""

    protocol_version = "HTTP/1.1"

    def handle(self):
        try:
            head = self.rfile.peek(1)[:1]
        except (ConnectionError, OSError):
            return
        if head.isalpha():
            super().handle()
        else:
            self._ndjson_loop()

    def _ndjson_loop(self):
        collector: CollectorHandle = self.server.collector
        limit = collector.config.max_message_bytes
        while not collector.stopped:
            try:
                line = self.rfile.readline(limit + 1)
            except (ConnectionError, OSError):
                return
            if not line:
                return
            if len(line) > limit and not line.endswith(b"\n"):
                collector._reject_oversize()
                # discard the remainder of the oversize line
                while line and not line.endswith(b"\n"):
                    line = self.rfile.readline(limit + 1)
                continue
            line = line.strip()
            if line:
                collector._receive(line)

    def _reply(self, status: int, body: dict | None = None):
        payload = json.dumps(body or {}).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def do_GET(self):
        if self.path.rstrip("/") == "/v1/health":
            self._reply(200, {"status": "ok", **self.server.collector.stats()})
        else:
            self._reply(404, {"error": "not found"})

    def do_POST(self):
        collector: CollectorHandle = self.server.collector
        if self.path.rstrip("/") != "/v1/snapshot":
            self._reply(404, {"error": "not found"})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
        except ValueError:
            self._reply(400, {"error": "bad Content-Length"})
            return
        if length > collector.config.max_message_bytes:
            self.rfile.read(length)
            collector._reject_oversize()
            self._reply(413, {"error": "message too large"})
            return
        body = self.rfile.read(length)
        collector._receive(body.strip())
        self._reply(202, {"accepted": True})

    def log_message(self, fmt, *args):
        logger.debug("http %s - %s", self.address_string(), fmt % args)


class _Server(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = False
    collector: "CollectorHandle"


class CollectorHandle:
    """A running collector.  Create with :func:`start_collector`."""

    def __init__(self, config: CollectorConfig, clock: Callable[[], float] = time.monotonic):
        self.config = config
        self.clock = clock
        self.windows = Windower(config.window_ms)
        self.stopped = False
        self.received = 0
        self.accepted = 0
        self.dropped_invalid = 0
        self._queue = _RawQueue(config.queue_capacity)
        self._in_flight: Optional[int] = None
        self._consumer = threading.Lock()
        self._server: Optional[_Server] = None
        self._threads: list[threading.Thread] = []
        self.origin = clock()

    # stream clock ---------------------------------------------------------
    def now_ms(self) -> int:
        return int((self.clock() - self.origin) * 1000)

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    @property
    def endpoint(self) -> str:
        host, port = self.address
        return f"{host}:{port}"

    # producer side --------------------------------------------------------
    def _receive(self, payload: bytes) -> None:
        # stamped under the queue lock so queue order equals arrival order
        with self._queue.cond:
            self.received += 1
            self._queue.put(self.now_ms(), payload)

    def _reject_oversize(self) -> None:
        with self._queue.cond:
            self.received += 1
            self.dropped_invalid += 1

    def _parse_worker(self) -> None:
        q = self._queue
        while True:
            with q.cond:
                while not q.items and not self.stopped:
                    q.cond.wait(0.1)
                if not q.items:
                    return
                arrival, payload = q.items.popleft()
                self._in_flight = arrival
            try:
                snapshot = parse_snapshot(payload)
                if self.config.timestamp_mode == ARRIVAL:
                    snapshot = snapshot.with_timestamp(arrival)
                ok = self.windows.offer(snapshot)
            except SceneBGMError as exc:
                logger.debug("dropping invalid snapshot: %s", exc)
                ok = None
            with q.cond:
                if ok:
                    self.accepted += 1
                elif ok is None:
                    self.dropped_invalid += 1
                self._in_flight = None
                q.cond.notify_all()

    def _drained_before(self, boundary_ms: int) -> bool:
        q = self._queue
        if self._in_flight is not None and self._in_flight < boundary_ms:
            return False
        return not q.items or q.items[0][0] >= boundary_ms

    # consumer side --------------------------------------------------------
    def next_segment(self, deadline: Optional[float] = None) -> SegmentBatch:
        """Block until the current window closes and return its batch.

        ``deadline`` is an absolute value of the collector clock
        (``time.monotonic`` by default).  Single consumer only.
        """
        if not self._consumer.acquire(blocking=False):
            raise RuntimeError("next_segment called concurrently; collectors have a single consumer")
        try:
            return self._next_segment(deadline)
        finally:
            self._consumer.release()

    def _next_segment(self, deadline):
        idx = self.windows.next_index
        boundary_ms = (idx + 1) * self.windows.window_ms
        boundary_at = self.origin + boundary_ms / 1000.0
        q = self._queue
        if self.stopped:
            if self.windows.has_pending():
                return self.windows.take()
            raise CollectorStopped("collector stopped")
        while True:
            now = self.clock()
            if self.stopped:
                return self.windows.take()
            if now >= boundary_at:
                break
            if deadline is not None and now >= deadline:
                raise TimedOut(f"window {idx} closes after the deadline")
            wake = boundary_at if deadline is None else min(boundary_at, deadline)
            time.sleep(min(max(wake - now, 0.0), 0.05))
        released = self.clock()
        with q.cond:
            while not self._drained_before(boundary_ms) and not self.stopped:
                q.cond.wait(0.05)
        skew = (released - boundary_at) * 1000.0
        return self.windows.take(skew_ms=skew)

    def stats(self) -> dict:
        with self._queue.cond:
            return {
                "received": self.received,
                "accepted": self.accepted,
                "dropped_invalid": self.dropped_invalid,
                "dropped_overflow": self._queue.dropped,
                "dropped_late": self.windows.late,
                "queued": len(self._queue.items),
                "pending": self.windows.pending_count(),
                "next_window": self.windows.next_index,
            }

    @property
    def dropped(self) -> int:
        return self.dropped_invalid + self._queue.dropped + self.windows.late

    def stop(self) -> None:
        """Stop accepting connections and let the parse worker drain the queue."""
        if self.stopped:
            return
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
        self.stopped = True
        with self._queue.cond:
            self._queue.cond.notify_all()
        for t in self._threads:
            t.join(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()


def start_collector(config: CollectorConfig, clock: Callable[[], float] = time.monotonic) -> CollectorHandle:
    """Bind the endpoint and start the accept loop and parse worker."""
    config.validate()
    handle = CollectorHandle(config, clock=clock)
    try:
        server = _Server((config.host, int(config.port)), _Handler)
    except OSError as exc:
        raise BindFailure(f"cannot bind {config.host}:{config.port}: {exc}") from exc
    server.collector = handle
    handle._server = server
    handle.origin = clock()
    accept = threading.Thread(target=server.serve_forever, kwargs={"poll_interval": 0.05},
                              name="collector-accept", daemon=True)
    worker = threading.Thread(target=handle._parse_worker, name="collector-parse", daemon=True)
    handle._threads = [accept, worker]
    accept.start()
    worker.start()
    logger.info("collector listening on %s (window %.3fs)", handle.endpoint, config.window_seconds)
    return handle


class StreamWindows:
    """Windows an in-memory snapshot sequence without a network hop.

    Snapshots are assigned by their own timestamps.  With ``time_scale`` 0
    windows are released as fast as the consumer asks; with a positive
    scale each release waits until its scaled boundary.
    """

    def __init__(self, snapshots: Iterable[SceneSnapshot], window_seconds: float,
                 end_ms: Optional[int] = None, time_scale: float = 0.0):
        if window_seconds <= 0:
            raise ConfigInvalid("window_seconds must be > 0")
        self.windows = Windower(max(1, int(round(window_seconds * 1000))))
        items = list(snapshots)
        for snap in items:
            self.windows.offer(snap)
        last = max((s.timestamp for s in items), default=-1)
        self.end_ms = end_ms if end_ms is not None else last + 1
        self.n_windows = max(0, -(-self.end_ms // self.windows.window_ms))
        self.time_scale = time_scale
        self.origin = time.monotonic()
        self.received = len(items)

    def next_segment(self, deadline: Optional[float] = None) -> SegmentBatch:
        idx = self.windows.next_index
        if idx >= self.n_windows:
            raise CollectorStopped("stream exhausted")
        skew = None
        if self.time_scale > 0:
            boundary_at = self.origin + (idx + 1) * self.windows.window_ms / 1000.0 * self.time_scale
            wait = boundary_at - time.monotonic()
            if deadline is not None and time.monotonic() + max(wait, 0) > deadline:
                raise TimedOut(f"window {idx} closes after the deadline")
            if wait > 0:
                time.sleep(wait)
            skew = (time.monotonic() - boundary_at) * 1000.0
        return self.windows.take(skew_ms=skew)

    def stop(self) -> None:
        pass

    def stats(self) -> dict:
        return {"received": self.received, "accepted": self.received, "dropped_late": 0}


def aggregate(batch: SegmentBatch, previous: Optional[SceneSnapshot] = None,
              default: Optional[SceneSnapshot] = None) -> SceneSnapshot:
    """Collapse one window into a single snapshot.

    Fields are last-write-wins in timestamp order, except that
    ``being_attacked`` is true if any snapshot in the window reported an
    attack and ``hostile_entity`` is the union of every entry seen (later
    values win per key).  An empty window carries ``previous`` forward, or
    ``default`` when nothing has been seen yet.
    """
    if not batch.snapshots:
        if previous is not None:
            return previous
        if default is not None:
            return default
        raise NoDataEver(f"window {batch.window_index} is empty and no snapshot has been seen")
    ordered = sorted(batch.snapshots, key=lambda s: s.timestamp)
    last = ordered[-1]
    hostiles: dict = {}
    extra: dict = {}
    for snap in ordered:
        hostiles.update(snap.hostile_entity)
        extra.update(snap.extra)
    return SceneSnapshot(
        timestamp=last.timestamp,
        scene=last.scene,
        time=last.time,
        weather=last.weather,
        temperature=last.temperature,
        health=last.health,
        satiety=last.satiety,
        status=dict(last.status),
        movement=dict(last.movement),
        position=dict(last.position),
        hostile_entity=hostiles,
        being_attacked=any(s.being_attacked for s in ordered),
        extra=extra,
    )

