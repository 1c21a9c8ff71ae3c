"""Streaming intercept-prediction service.

Newline-delimited JSON in, newline-delimited JSON out: clients push
timestamped shuttle positions, the service maintains one filter track
per flight and publishes intercept target messages. The filtering path
is byte-for-byte the batch path from the estimator module; the only
things this layer adds are a small reordering window for late frames,
track lifecycle, and transport.

Wire schema (one object per line):

- inbound  ``{"type": "meas", "track": 1, "t": 0.004, "p": [x, y, z]}``
  with t in sender-clock seconds and p in meters;
- inbound  ``{"type": "close", "track": 1}`` ends a track;
- inbound  ``{"type": "truth", "track": 1, "p_star": [...], "t_star": ...,
  "z_target": ...}`` (optional, used by replay files to carry ground
  truth and the intercept plane height);
- outbound ``{"type": "target", "track": 1, "seq": 7, "valid": true,
  "p_star": [...], "q_star": [x, y, z, w], "t_star": 0.93, "tti": 0.41}``.

Sender timestamps are authoritative and never rewritten. Wall-clock
pacing influences nothing but delivery latency: the final prediction for
a track is a pure function of the measurements consumed and their
t-order within the reordering window.
"""

from __future__ import annotations

import bisect
import json
import math
import socket
import threading
import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .corpus import CorpusRecord
from .dynamics import DEFAULT_DT, AeroParams, state_at_time_exact
from .estimator import (
    DEFAULT_MEAS_RATE,
    DEFAULT_MEAS_SIGMA,
    DEFAULT_SIGMA_A,
    EkfTrack,
    predict_intercept,
    track_feed,
    track_init_pair,
)

__all__ = [
    "StaleMeasurement",
    "MalformedLine",
    "Measurement",
    "TargetMessage",
    "SessionConfig",
    "PredictionSession",
    "parse_wire_line",
    "measurement_line",
    "export_flight",
    "replay",
    "StreamServer",
]


class StaleMeasurement(ValueError):
    """Measurement at or behind the already-consumed time horizon."""


class MalformedLine(ValueError):
    def __init__(self, lineno: int, reason: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {reason}")


@dataclass(frozen=True)
class Measurement:
    t: float
    p: np.ndarray
    track_id: int

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).reshape(3)
        if not (np.all(np.isfinite(p)) and math.isfinite(self.t)):
            raise ValueError("measurement must be finite")
        if self.t < 0.0:
            raise ValueError(f"t must be >= 0, got {self.t}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "t", float(self.t))


@dataclass(frozen=True)
class TargetMessage:
    track_id: int
    seq: int
    valid: bool
    p_star: np.ndarray | None = None
    q_star: np.ndarray | None = None
    t_star: float | None = None
    time_to_impact: float | None = None

    def to_obj(self) -> dict:
        def lst(a):
            return None if a is None else [float(x) for x in a]

        return {
            "type": "target", "track": self.track_id, "seq": self.seq,
            "valid": self.valid, "p_star": lst(self.p_star),
            "q_star": lst(self.q_star), "t_star": self.t_star,
            "tti": self.time_to_impact,
        }


@dataclass(frozen=True)
class SessionConfig:
    """Knobs for one client session; defaults mirror the batch evaluator."""

    reorder_depth: int = 3
    min_measurements: int = 5
    sigma: float = DEFAULT_MEAS_SIGMA
    sigma_a: float = DEFAULT_SIGMA_A
    intercept_z: float = 1.55
    horizon: float = 2.0
    predict_dt: float = DEFAULT_DT
    idle_timeout: float = 2.0
    params: AeroParams = field(default_factory=AeroParams)

    def __post_init__(self):
        if self.reorder_depth < 0:
            raise ValueError("reorder_depth must be >= 0")
        if self.min_measurements < 2:
            raise ValueError("min_measurements must be >= 2 (filter init needs a pair)")


class _Track:
    __slots__ = ("buffer", "first", "ekf", "last_t", "n_consumed", "seq",
                 "drops", "closed", "z_target", "last_wall")

    def __init__(self, z_target: float, wall: float):
        self.buffer: list[Measurement] = []
        self.first: Measurement | None = None
        self.ekf: EkfTrack | None = None
        self.last_t = -math.inf
        self.n_consumed = 0
        self.seq = 0
        self.drops = 0
        self.closed = False
        self.z_target = z_target
        self.last_wall = wall


class PredictionSession:
    """Per-client state machine: reorder, filter, predict, emit.

    Frames are held in a per-track window of ``reorder_depth`` and
    consumed in t-order as newer frames push them out, which absorbs
    transport jitter of a few frame periods. Frames arriving behind the
    consumed horizon (or for a closed track) are dropped and counted. A
    track closes when its estimated height reaches the floor, on an
    explicit close message, or when close_idle() notices silence.
    """

    def __init__(self, config: SessionConfig = SessionConfig(), *, clock=time.monotonic):
        self.config = config
        self.clock = clock
        self.tracks: dict[int, _Track] = {}

    def _track(self, track_id: int) -> _Track:
        tr = self.tracks.get(track_id)
        if tr is None:
            tr = _Track(self.config.intercept_z, self.clock())
            self.tracks[track_id] = tr
        return tr

    @property
    def drops(self) -> int:
        return sum(tr.drops for tr in self.tracks.values())

    def set_intercept_z(self, track_id: int, z: float) -> None:
        self._track(track_id).z_target = float(z)

    def ingest(self, m: Measurement) -> None:
        """Buffer one measurement; consumes the overflow of the window.

        Raises StaleMeasurement (after counting the drop) when the frame
        can no longer be sequenced.
        """
        tr = self._track(m.track_id)
        tr.last_wall = self.clock()
        if tr.closed:
            tr.drops += 1
            raise StaleMeasurement(f"track {m.track_id} is closed")
        if m.t <= tr.last_t:
            tr.drops += 1
            raise StaleMeasurement(
                f"t={m.t} behind consumed horizon {tr.last_t} on track {m.track_id}")
        bisect.insort(tr.buffer, m, key=lambda x: x.t)
        while len(tr.buffer) > self.config.reorder_depth:
            self._consume(tr, tr.buffer.pop(0))

    def _consume(self, tr: _Track, m: Measurement) -> None:
        if m.t <= tr.last_t:  # duplicate stamp surfaced by the sort
            tr.drops += 1
            return
        cfg = self.config
        if tr.n_consumed == 0:
            tr.first = m
        elif tr.n_consumed == 1:
            tr.ekf = track_init_pair(tr.first.p, m.p, tr.first.t, m.t,
                                     sigma=cfg.sigma, sigma_a=cfg.sigma_a,
                                     params=cfg.params)
        else:
            tr.ekf = track_feed(tr.ekf, m.t, m.p, cfg.params)
        tr.last_t = m.t
        tr.n_consumed += 1
        if tr.ekf is not None and tr.ekf.mean[2] <= 0.0 and tr.ekf.mean[5] <= 0.0:
            tr.closed = True  # estimated touchdown; later frames are noise

    def flush(self, track_id: int) -> None:
        """Consume everything still in the window, in t-order."""
        tr = self._track(track_id)
        while tr.buffer:
            self._consume(tr, tr.buffer.pop(0))

    def flush_all(self) -> None:
        for track_id in list(self.tracks):
            self.flush(track_id)

    def close_track(self, track_id: int) -> None:
        self.flush(track_id)
        self._track(track_id).closed = True

    def close_idle(self, now: float | None = None) -> list[int]:
        now = self.clock() if now is None else now
        closed = []
        for track_id, tr in self.tracks.items():
            if not tr.closed and now - tr.last_wall > self.config.idle_timeout:
                self.close_track(track_id)
                closed.append(track_id)
        return closed

    def publish(self, track_id: int) -> TargetMessage:
        """Predict on the current track state and emit the next message."""
        tr = self._track(track_id)
        tr.seq += 1
        cfg = self.config
        if tr.ekf is not None and tr.n_consumed >= cfg.min_measurements:
            pred = predict_intercept(tr.ekf, tr.z_target, cfg.horizon,
                                     cfg.params, dt=cfg.predict_dt)
            if pred.valid:
                return TargetMessage(
                    track_id=track_id, seq=tr.seq, valid=True,
                    p_star=pred.target.p_star, q_star=pred.target.q_star,
                    t_star=pred.target.t_star,
                    time_to_impact=pred.time_to_impact)
        return TargetMessage(track_id=track_id, seq=tr.seq, valid=False)

    def tick(self, include_closed: bool = False) -> list[TargetMessage]:
        """One publisher cycle: a message for every (open) track, id order."""
        return [self.publish(tid) for tid in sorted(self.tracks)
                if include_closed or not self.tracks[tid].closed]


# ---------------------------------------------------------------------------
# wire format

def parse_wire_line(line: str, lineno: int):
    """Decode one wire line.

    Returns ("meas", Measurement), ("close", track_id), ("truth", dict),
    or None for a blank line. Raises MalformedLine otherwise.
    """
    text = line.strip()
    if not text:
        return None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as e:
        raise MalformedLine(lineno, f"bad JSON ({e.msg})") from e
    if not isinstance(obj, dict):
        raise MalformedLine(lineno, "expected a JSON object")
    kind = obj.get("type")
    try:
        if kind == "meas":
            return "meas", Measurement(t=float(obj["t"]), p=obj["p"],
                                       track_id=int(obj["track"]))
        if kind == "close":
            return "close", int(obj["track"])
        if kind == "truth":
            return "truth", {
                "track": int(obj["track"]),
                "p_star": np.asarray(obj["p_star"], dtype=float).reshape(3),
                "t_star": float(obj["t_star"]),
                "z_target": float(obj.get("z_target", obj["p_star"][2])),
            }
    except MalformedLine:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise MalformedLine(lineno, f"bad {kind} message: {e}") from e
    raise MalformedLine(lineno, f"unknown message type {kind!r}")


def measurement_line(m: Measurement) -> str:
    return json.dumps({"type": "meas", "track": m.track_id, "t": m.t,
                       "p": [float(x) for x in m.p]})


def export_flight(record: CorpusRecord, path, *, sigma: float = DEFAULT_MEAS_SIGMA,
                  rate: float = DEFAULT_MEAS_RATE, seed: int = 0,
                  lead_time: float | None = None,
                  params: AeroParams = AeroParams(),
                  track_id: int | None = None) -> int:
    """Write one corpus flight as a replay file; returns measurements written.

    Sampling grid, exact-state truth, and the noise stream
    default_rng([seed, record.index]) are identical to the batch
    evaluator's, and ``lead_time`` truncates to the same measurement
    prefix the evaluator would use at that lead — so replaying the file
    reproduces the batch prediction bit for bit.
    """
    if record.traj is None:
        raise ValueError(f"record {record.index} carries no trajectory")
    traj, target = record.traj, record.target
    tid = record.index if track_id is None else track_id
    n_max = int(math.floor(min(target.t_star, traj.duration) * rate + 1e-9)) + 1
    times = np.arange(n_max) / rate
    truth = np.stack([state_at_time_exact(traj, t, params).p for t in times])
    rng = np.random.default_rng([seed, record.index])
    meas = truth + rng.normal(0.0, sigma, size=truth.shape)
    n_use = n_max
    if lead_time is not None:
        n_use = int(np.count_nonzero(times <= target.t_star - lead_time + 1e-12))

    with open(path, "w") as fh:
        fh.write(json.dumps({
            "type": "truth", "track": tid,
            "p_star": [float(x) for x in target.p_star],
            "t_star": float(target.t_star),
            "z_target": float(target.p_star[2]),
        }) + "\n")
        for k in range(n_use):
            fh.write(measurement_line(
                Measurement(t=float(times[k]), p=meas[k], track_id=tid)) + "\n")
    return n_use


def replay(path, session: PredictionSession | None = None,
           speed: float = math.inf) -> dict:
    """Feed a replay file through a session and summarize the end state.

    speed scales sender-clock gaps into wall sleeps (inf = as fast as
    possible); it cannot change any reported number. The summary carries
    drop counts and, for tracks with an embedded truth line, the final
    intercept position/time error.
    """
    if session is None:
        session = PredictionSession()
    truths: dict[int, dict] = {}
    n_meas = 0
    prev_t = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            parsed = parse_wire_line(line, lineno)
            if parsed is None:
                continue
            kind, payload = parsed
            if kind == "truth":
                truths[payload["track"]] = payload
                session.set_intercept_z(payload["track"], payload["z_target"])
            elif kind == "close":
                session.close_track(payload)
            else:
                m: Measurement = payload
                if speed != math.inf and prev_t is not None and m.t > prev_t:
                    time.sleep((m.t - prev_t) / speed)
                prev_t = m.t
                n_meas += 1
                try:
                    session.ingest(m)
                except StaleMeasurement:
                    pass  # already counted

    session.flush_all()
    finals = {msg.track_id: msg for msg in session.tick(include_closed=True)}
    tracks = {}
    for tid in sorted(session.tracks):
        tr = session.tracks[tid]
        msg = finals.get(tid)
        entry = {
            "n_consumed": tr.n_consumed,
            "drops": tr.drops,
            "final": None if msg is None else msg.to_obj(),
        }
        truth = truths.get(tid)
        if truth is not None and msg is not None and msg.valid:
            entry["pos_error"] = float(np.linalg.norm(msg.p_star - truth["p_star"]))
            entry["t_error"] = abs(float(msg.t_star) - truth["t_star"])
        tracks[tid] = entry
    return {"n_measurements": n_meas, "drops": session.drops, "tracks": tracks}


# ---------------------------------------------------------------------------
# TCP transport

class StreamServer:
    """NDJSON-over-TCP front end; one PredictionSession per connection.

    The reader thread ingests lines as they arrive; the connection's
    publisher loop emits a target message per open track at publish_rate
    and is the only socket writer (reader-side errors queue up and ride
    out with the next batch). On client EOF the window is flushed and one
    final tick is emitted before the connection closes.
    """

    def __init__(self, host: str = "127.0.0.1", port: int = 0,
                 config: SessionConfig = SessionConfig(),
                 publish_rate: float = 50.0):
        self.config = config
        self.publish_rate = publish_rate
        self._sock = socket.create_server((host, port))
        self._sock.settimeout(0.2)
        self.host, self.port = self._sock.getsockname()[:2]
        self._shutdown = threading.Event()
        self._threads: list[threading.Thread] = []
        self._thread: threading.Thread | None = None

    def serve_forever(self) -> None:
        try:
            while not self._shutdown.is_set():
                try:
                    conn, _ = self._sock.accept()
                except socket.timeout:
                    continue
                except OSError:
                    break
                t = threading.Thread(target=self._handle, args=(conn,), daemon=True)
                t.start()
                self._threads.append(t)
        finally:
            self._sock.close()

    def start(self) -> None:
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()

    def request_stop(self) -> None:
        """Signal-handler safe: unblocks serve_forever without joining."""
        self._shutdown.set()
        self._sock.close()

    def stop(self) -> None:
        self.request_stop()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
        for t in self._threads:
            t.join(timeout=5.0)

    def _handle(self, conn: socket.socket) -> None:
        session = PredictionSession(self.config)
        lock = threading.Lock()
        errors: deque[dict] = deque()
        eof = threading.Event()

        def read_loop():
            with conn.makefile("r") as rfile:
                for lineno, line in enumerate(rfile, 1):
                    try:
                        parsed = parse_wire_line(line, lineno)
                    except MalformedLine as e:
                        errors.append({"type": "error", "line": e.lineno,
                                       "reason": str(e)})
                        continue
                    if parsed is None:
                        continue
                    kind, payload = parsed
                    with lock:
                        try:
                            if kind == "meas":
                                session.ingest(payload)
                            elif kind == "close":
                                session.close_track(payload)
                            elif kind == "truth":
                                session.set_intercept_z(payload["track"],
                                                        payload["z_target"])
                        except StaleMeasurement as e:
                            errors.append({"type": "error", "reason": str(e)})
            eof.set()

        reader = threading.Thread(target=read_loop, daemon=True)
        reader.start()
        interval = 1.0 / self.publish_rate
        try:
            with conn.makefile("w") as wfile:
                while True:
                    finishing = eof.is_set() or self._shutdown.is_set()
                    with lock:
                        if finishing:
                            session.flush_all()
                        else:
                            session.close_idle()
                        msgs = session.tick(include_closed=finishing)
                    while errors:
                        wfile.write(json.dumps(errors.popleft()) + "\n")
                    for msg in msgs:
                        wfile.write(json.dumps(msg.to_obj()) + "\n")
                    wfile.flush()
                    if finishing:
                        break
                    eof.wait(interval)
        except (BrokenPipeError, ConnectionResetError, OSError):
            pass
        finally:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            conn.close()
