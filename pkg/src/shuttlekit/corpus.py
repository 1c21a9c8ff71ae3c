"""Training-corpus generation.

Monte-Carlo launches, hit-zone filtering, and target-tuple extraction. Each
record owns the RNG stream ``default_rng([seed, index])`` and consumes seven
uniforms from it (six launch components, then the intercept height), so any
shard of indices reproduces identically regardless of chunking or order.

Generation runs in two passes: a kernel scan classifies every launch without
storing paths, then only zone-entering candidates are re-integrated to pull
out the interpolated plane crossing.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dynamics import DEFAULT_DT, DEFAULT_MAX_TIME, AeroParams, ShuttleState, Trajectory
from .geometry import frame_from_z

HISTORY_RATE_HZ = 50.0
HISTORY_LEN = 6

# extra steps integrated past the detected zone entry in pass 2; covers the
# slowest plausible descent through the 0.1 m height band
_CROSSING_MARGIN_STEPS = 150


class DegenerateVelocity(ValueError):
    """Velocity too small to define an incoming-flight direction."""


class TrajectoryTooShort(ValueError):
    """Trajectory does not span a single full history window."""


class CorpusFormatError(ValueError):
    """Corpus file violates the expected line format or invariants."""


@dataclass(frozen=True)
class LaunchRanges:
    """Per-component uniform bounds for the launch state, SI units."""

    px: tuple = (5.0, 8.0)
    py: tuple = (-2.0, 2.0)
    pz: tuple = (-0.5, 2.5)
    vx: tuple = (-25.0, -13.0)
    vy: tuple = (-3.0, 3.0)
    vz: tuple = (9.0, 18.0)

    def __post_init__(self):
        for name in ("px", "py", "pz", "vx", "vy", "vz"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} range [{lo}, {hi}] is empty")

    @property
    def lows(self) -> np.ndarray:
        return np.array([self.px[0], self.py[0], self.pz[0],
                         self.vx[0], self.vy[0], self.vz[0]])

    @property
    def highs(self) -> np.ndarray:
        return np.array([self.px[1], self.py[1], self.pz[1],
                         self.vx[1], self.vy[1], self.vz[1]])


@dataclass(frozen=True)
class HitZone:
    """Axis-aligned interception box plus a minimum traversal time.

    The y-range is asymmetric on purpose: the racket is held on the right,
    so reachable contact points skew toward negative y.
    """

    x_range: tuple = (-0.8, 0.8)
    y_range: tuple = (-1.0, 0.2)
    z_range: tuple = (1.5, 1.6)
    t_min: float = 0.8

    def __post_init__(self):
        for name in ("x_range", "y_range", "z_range"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} [{lo}, {hi}] is empty")
        if self.t_min < 0.0:
            raise ValueError(f"t_min must be >= 0, got {self.t_min}")

    def as_box(self) -> np.ndarray:
        return np.array([self.x_range[0], self.x_range[1],
                         self.y_range[0], self.y_range[1],
                         self.z_range[0], self.z_range[1]])

    def contains(self, p, t: float | None = None) -> bool:
        p = np.asarray(p, dtype=float)
        if t is not None and t < self.t_min:
            return False
        return bool(
            self.x_range[0] <= p[0] <= self.x_range[1]
            and self.y_range[0] <= p[1] <= self.y_range[1]
            and self.z_range[0] <= p[2] <= self.z_range[1])


@dataclass(frozen=True)
class TargetTuple:
    """Commanded interception point: position, racket-frame quaternion
    (xyzw, +z along the incoming flight direction), and time from launch."""

    p_star: np.ndarray
    q_star: np.ndarray
    t_star: float

    def __post_init__(self):
        p = np.asarray(self.p_star, dtype=float).reshape(3)
        q = np.asarray(self.q_star, dtype=float).reshape(4)
        norm = float(np.linalg.norm(q))
        if not math.isfinite(norm) or abs(norm - 1.0) > 1e-6:
            raise ValueError(f"q_star must be a unit quaternion, |q| = {norm}")
        object.__setattr__(self, "p_star", p)
        object.__setattr__(self, "q_star", q / norm)
        object.__setattr__(self, "t_star", float(self.t_star))


@dataclass(frozen=True)
class CorpusRecord:
    index: int
    p0: np.ndarray
    v0: np.ndarray
    z_target: float
    target: TargetTuple
    traj: Trajectory | None = None
    windows: np.ndarray | None = None


def _draw_launch(rng: np.random.Generator, ranges: LaunchRanges) -> np.ndarray:
    # six uniforms in component order; the record's 7th draw is z_target
    return rng.uniform(ranges.lows, ranges.highs)


def _draw_z_target(rng: np.random.Generator, zone: HitZone) -> float:
    return float(rng.uniform(zone.z_range[0], zone.z_range[1]))


def record_rng(seed: int, index: int) -> np.random.Generator:
    """The RNG stream owned by record ``index`` of a corpus run."""
    return np.random.default_rng([seed, index])


def sample_launch(rng: np.random.Generator, ranges: LaunchRanges) -> ShuttleState:
    """Draw one launch state; advances the generator by six uniforms."""
    x = _draw_launch(rng, ranges)
    return ShuttleState(p=x[:3], v=x[3:])


def find_zone_entry(traj: Trajectory, zone: HitZone):
    """First sample inside the zone at or after t_min, or None.

    Sample-level test only; sub-step accuracy on the intercept height comes
    from the plane interpolation in target extraction.
    """
    p = traj.positions
    ok = ((traj.times >= zone.t_min)
          & (p[:, 0] >= zone.x_range[0]) & (p[:, 0] <= zone.x_range[1])
          & (p[:, 1] >= zone.y_range[0]) & (p[:, 1] <= zone.y_range[1])
          & (p[:, 2] >= zone.z_range[0]) & (p[:, 2] <= zone.z_range[1]))
    hits = np.flatnonzero(ok)
    if hits.size == 0:
        return None
    k = int(hits[0])
    return float(traj.times[k]), traj.state(k)


def target_from_entry(state: ShuttleState, t_entry: float, z_target: float) -> TargetTuple:
    """Build the hitting target from the state at the plane crossing.

    The racket-frame +z axis points along the incoming flight direction
    (velocity), with roll resolved toward world y; the commanded position
    pins z to the requested intercept height.
    """
    speed = float(np.linalg.norm(state.v))
    if speed < 1e-6:
        raise DegenerateVelocity(f"|v| = {speed} cannot orient the target frame")
    q = frame_from_z(state.v / speed)
    p_star = np.array([state.p[0], state.p[1], z_target])
    return TargetTuple(p_star=p_star, q_star=q, t_star=float(t_entry))


def plane_crossing(states: np.ndarray, dt: float, z_target: float):
    """First downward crossing of z_target, linearly interpolated.

    states is (n, 6) sampled every dt starting at t = 0. Returns
    (t_cross, state_cross) or None. Brackets satisfy z_j >= z_target > z_j+1,
    so a sample exactly on the plane is returned as-is.
    """
    z = states[:, 2]
    desc = np.flatnonzero((z[:-1] >= z_target) & (z[1:] < z_target))
    if desc.size == 0:
        return None
    j = int(desc[0])
    frac = (z[j] - z_target) / (z[j] - z[j + 1])
    x = states[j] + frac * (states[j + 1] - states[j])
    return (j + frac) * dt, ShuttleState.from_vector(x)


def crossing_target(states: np.ndarray, dt: float, zone: HitZone, z_target: float):
    """Crossing-validated target, or None if the crossing misses the zone."""
    hit = plane_crossing(states, dt, z_target)
    if hit is None:
        return None
    t_c, sc = hit
    if t_c < zone.t_min:
        return None
    if not (zone.x_range[0] <= sc.p[0] <= zone.x_range[1]
            and zone.y_range[0] <= sc.p[1] <= zone.y_range[1]):
        return None
    return target_from_entry(sc, t_c, z_target)


def history_windows(traj: Trajectory, rate: float = HISTORY_RATE_HZ,
                    length: int = HISTORY_LEN) -> np.ndarray:
    """Sliding position windows, newest first: [p(t), p(t - 1/rate), ...].

    One window per rate tick t = k/rate that has a full history inside the
    trajectory. Returns (n_windows, length, 3). The tick grid must land on
    trajectory samples (rate must divide 1/dt).
    """
    if length < 1:
        raise ValueError(f"window length must be >= 1, got {length}")
    if rate <= 0.0:
        raise ValueError(f"rate must be positive, got {rate}")
    stride_f = 1.0 / (rate * traj.dt)
    stride = int(round(stride_f))
    if stride < 1 or abs(stride_f - stride) > 1e-6:
        raise ValueError(f"rate {rate} Hz does not divide 1/dt = {1.0 / traj.dt:.6g} Hz")
    last_tick = (len(traj) - 1) // stride
    first_tick = length - 1
    if last_tick < first_tick:
        raise TrajectoryTooShort(
            f"{len(traj)} samples cannot fill a window of {length} at {rate} Hz")
    n_w = last_tick - first_tick + 1
    out = np.empty((n_w, length, 3))
    p = traj.positions
    for w, k in enumerate(range(first_tick, last_tick + 1)):
        idx = (k - np.arange(length)) * stride
        out[w] = p[idx]
    return out


def generate_corpus(n: int, ranges: LaunchRanges = LaunchRanges(),
                    zone: HitZone = HitZone(), params: AeroParams = AeroParams(),
                    dt: float = DEFAULT_DT, seed: int = 0, *,
                    max_time: float = DEFAULT_MAX_TIME,
                    include_trajectory: bool = False, decimate: int = 1,
                    include_windows: bool = False,
                    store_records: bool = True,
                    num_threads: int = 0, chunk_size: int = 65536):
    """Simulate n launches and keep those that cross the zone.

    A launch is accepted when (a) some sample sits inside the zone box at or
    after t_min and (b) the interpolated downward crossing of that record's
    sampled intercept height lands inside the box at or after t_min. Rejected
    launches are counted by cause; flights that neither land (descending
    ground contact) nor enter within max_time count as timeouts.

    Returns (records, stats). With store_records=False the records list stays
    empty but stats (including the t_star array and histogram) are complete.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if decimate < 1:
        raise ValueError(f"decimate must be >= 1, got {decimate}")
    n_steps = max(1, int(math.ceil(max_time / dt - 1e-9)))
    box = zone.as_box()
    want_paths = include_trajectory or include_windows

    records: list[CorpusRecord] = []
    t_stars: list[float] = []
    n_no_entry = 0
    n_timeout = 0
    n_bad_crossing = 0

    for lo in range(0, n, chunk_size):
        hi = min(n, lo + chunk_size)
        m = hi - lo
        x0 = np.empty((m, 6))
        for i in range(m):
            x0[i] = _draw_launch(record_rng(seed, lo + i), ranges)
        status, entry = _kernels.scan_flights(
            x0, dt, n_steps, params.L, params.g, box, zone.t_min, num_threads)
        n_no_entry += int(np.count_nonzero(status == _kernels.STATUS_LANDED))
        n_timeout += int(np.count_nonzero(status == _kernels.STATUS_TIMEOUT))

        cand = np.flatnonzero(status == _kernels.STATUS_ENTERED)
        if cand.size == 0:
            continue
        n2 = n_steps if want_paths else min(
            n_steps, int(entry[cand].max()) + _CROSSING_MARGIN_STEPS)
        for sub in range(0, cand.size, 4096):
            rows = cand[sub:sub + 4096]
            paths = _kernels.simulate_paths(
                x0[rows], dt, n2, params.L, params.g, num_threads)
            for r, row in enumerate(rows):
                index = lo + int(row)
                rng = record_rng(seed, index)
                _draw_launch(rng, ranges)
                z_t = _draw_z_target(rng, zone)
                target = crossing_target(paths[r], dt, zone, z_t)
                if target is None:
                    n_bad_crossing += 1
                    continue
                t_stars.append(target.t_star)
                if not store_records:
                    continue
                traj = windows = None
                if want_paths:
                    traj = _truncate_at_ground(paths[r], dt)
                    if include_windows:
                        windows = history_windows(traj)
                    if not include_trajectory:
                        traj = None
                    elif decimate > 1:
                        traj = Trajectory(dt=dt * decimate,
                                          times=traj.times[::decimate],
                                          states=traj.states[::decimate])
                records.append(CorpusRecord(
                    index=index, p0=x0[row, :3].copy(), v0=x0[row, 3:].copy(),
                    z_target=z_t, target=target, traj=traj, windows=windows))

    t_star_arr = np.array(t_stars)
    edges = np.arange(0.0, max_time + 0.1, 0.1)
    counts, _ = np.histogram(t_star_arr, bins=edges)
    stats = {
        "n_total": n,
        "n_accepted": int(t_star_arr.size),
        "n_rejected_no_entry": n_no_entry,
        "n_rejected_crossing": n_bad_crossing,
        "n_timeout": n_timeout,
        "rate": t_star_arr.size / n,
        "t_star": t_star_arr,
        "hist_edges": edges,
        "hist_counts": counts,
    }
    return records, stats


def _truncate_at_ground(states: np.ndarray, dt: float) -> Trajectory:
    hits = np.flatnonzero((states[:, 2] <= 0.0) & (states[:, 5] <= 0.0))
    end = int(hits[0]) if hits.size else states.shape[0] - 1
    return Trajectory(dt=dt, times=np.arange(end + 1) * dt,
                      states=states[: end + 1])


def write_corpus_jsonl(records, path, *, seed: int, dt: float,
                       ranges: LaunchRanges = LaunchRanges(),
                       zone: HitZone = HitZone(),
                       params: AeroParams = AeroParams(),
                       extra_header: dict | None = None) -> None:
    """One header line, then one JSON object per record.

    Quaternions are xyzw. Floats round-trip exactly (shortest repr).
    extra_header keys (e.g. a resolved run config) are merged into the
    header object.
    """
    header = {
        "format": "shuttlekit-corpus", "version": 1, "quat_order": "xyzw",
        "seed": seed, "dt": dt, "L": params.L, "g": params.g,
        "zone": {"x": list(zone.x_range), "y": list(zone.y_range),
                 "z": list(zone.z_range), "t_min": zone.t_min},
        "ranges": {k: list(getattr(ranges, k))
                   for k in ("px", "py", "pz", "vx", "vy", "vz")},
    }
    if extra_header:
        header.update(extra_header)
    with open(path, "w") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for rec in records:
            row = {
                "seed": rec.index,
                "p0": rec.p0.tolist(), "v0": rec.v0.tolist(),
                "z_target": rec.z_target,
                "t_star": rec.target.t_star,
                "p_star": rec.target.p_star.tolist(),
                "q_star": rec.target.q_star.tolist(),
            }
            if rec.traj is not None:
                row["traj_dt"] = rec.traj.dt
                row["traj"] = np.column_stack(
                    [rec.traj.times, rec.traj.states]).tolist()
            if rec.windows is not None:
                row["windows"] = rec.windows.tolist()
            f.write(json.dumps(row) + "\n")


def read_corpus_jsonl(path):
    """Load records and header; re-checks zone membership of every target."""
    with open(path) as f:
        first = f.readline()
        try:
            header = json.loads(first)
        except json.JSONDecodeError as e:
            raise CorpusFormatError(f"bad header line: {e}") from e
        if header.get("format") != "shuttlekit-corpus":
            raise CorpusFormatError("missing corpus header line")
        zone = HitZone(x_range=tuple(header["zone"]["x"]),
                       y_range=tuple(header["zone"]["y"]),
                       z_range=tuple(header["zone"]["z"]),
                       t_min=header["zone"]["t_min"])
        records = []
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusFormatError(f"line {lineno}: {e}") from e
            target = TargetTuple(p_star=np.array(row["p_star"]),
                                 q_star=np.array(row["q_star"]),
                                 t_star=row["t_star"])
            if not zone.contains(target.p_star, target.t_star):
                raise CorpusFormatError(
                    f"line {lineno}: target outside the declared zone")
            traj = None
            if "traj" in row:
                arr = np.asarray(row["traj"], dtype=float)
                traj = Trajectory(dt=row["traj_dt"], times=arr[:, 0],
                                  states=arr[:, 1:])
            windows = np.asarray(row["windows"]) if "windows" in row else None
            records.append(CorpusRecord(
                index=row["seed"], p0=np.array(row["p0"]),
                v0=np.array(row["v0"]), z_target=row.get("z_target", float("nan")),
                target=target, traj=traj, windows=windows))
    return records, header


def write_stats_csv(stats: dict, path, header_comment: str | None = None) -> None:
    """Histogram rows (bin_start_s, bin_end_s, count), then a summary block."""
    edges = stats["hist_edges"]
    counts = stats["hist_counts"]
    with open(path, "w") as f:
        if header_comment is not None:
            f.write(f"# {header_comment}\n")
        f.write("bin_start_s,bin_end_s,count\n")
        for i, c in enumerate(counts):
            f.write(f"{edges[i]:.2f},{edges[i + 1]:.2f},{int(c)}\n")
        f.write("\n")
        f.write("n_total,n_accepted,rate\n")
        f.write(f"{stats['n_total']},{stats['n_accepted']},{stats['rate']:.6f}\n")
