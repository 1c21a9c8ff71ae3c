"""Two-sided rally simulation with parametric oracle hitters.

The court is a scaled half-pair: net plane at x = 0, one robot near the
midpoint of each half, hitting zones translated (and for the +x side
mirrored) copies of the single-robot interception box. An OracleHitter
stands in for a trained striking policy: it receives the commanded
contact tuple for an incoming flight, aims the racket normal so the
return lands near a configurable court point, and then executes that
swing with Gaussian pose/timing errors. Rallies alternate sides until a
fault, a miss, or a hit cap.

Conventions chosen here and relied on by the checks:

- net clearance is strict (a shuttle grazing the tape at exactly
  net_height is a fault);
- line calls are inclusive (landing exactly on a boundary is in);
- "a side falls" has no meaning without a robot model, so the
  termination reasons cover only shuttle outcomes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .contact import HitQuality, RacketState, hit_quality, reflect
from .corpus import HitZone, TargetTuple, crossing_target, find_zone_entry
from .dynamics import (
    DEFAULT_DT,
    AeroParams,
    ShuttleState,
    Trajectory,
    simulate,
    state_at_time_exact,
)
from .geometry import frame_from_z, normalize, quat_z_axis

__all__ = [
    "NET_FAULT",
    "OUT_OF_BOUNDS",
    "MISS_GROUND_CONTACT",
    "MAX_HITS_REACHED",
    "TERMINATIONS",
    "SIDE_A",
    "SIDE_B",
    "CourtSpec",
    "OracleHitter",
    "HitEvent",
    "RallyOutcome",
    "other_side",
    "zone_for_side",
    "default_hitter",
    "check_net_clearance",
    "check_in_bounds",
    "ground_landing",
    "attempt_return",
    "build_serve",
    "simulate_rally",
    "rally_length_sweep",
    "write_rally_log",
    "write_sweep_csv",
]

NET_FAULT = "net_fault"
OUT_OF_BOUNDS = "out_of_bounds"
MISS_GROUND_CONTACT = "miss_ground_contact"
MAX_HITS_REACHED = "max_hits_reached"
TERMINATIONS = frozenset({NET_FAULT, OUT_OF_BOUNDS, MISS_GROUND_CONTACT, MAX_HITS_REACHED})

SIDE_A = "A"  # +x half
SIDE_B = "B"  # -x half

#: Hard ceiling on a single flight segment; drag lands everything well before.
MAX_FLIGHT_TIME = 6.0

# Aim-search grid: racket-normal pitch angles scanned for the range peak
# before bisecting down the steep (lofted) branch.
_PITCH_LO = 0.15
_PITCH_HI = 1.50
_PITCH_SCAN = np.arange(_PITCH_LO, _PITCH_HI + 1e-9, 0.075)
_AIM_TOLERANCE = 0.01


@dataclass(frozen=True)
class CourtSpec:
    """Half-pair court: x spans [-half_length, half_length], net at x = 0."""

    half_length: float = 4.0
    half_width: float = 1.75
    net_height: float = 1.524

    def __post_init__(self) -> None:
        if not (self.half_length > 0 and self.half_width > 0 and self.net_height > 0):
            raise ValueError("court dimensions must be positive")

    def center(self, side: str) -> np.ndarray:
        """Midpoint of one half, which is also where that side's robot stands."""
        sign = 1.0 if side == SIDE_A else -1.0
        return np.array([sign * 0.5 * self.half_length, 0.0])


def other_side(side: str) -> str:
    if side == SIDE_A:
        return SIDE_B
    if side == SIDE_B:
        return SIDE_A
    raise ValueError(f"unknown side {side!r}")


def zone_for_side(side: str, court: CourtSpec, base: HitZone = HitZone()) -> HitZone:
    """Place the single-robot hitting zone on one court half.

    The base zone is expressed for a robot at the origin facing +x. Side B
    keeps that orientation and translates to -half_length/2; side A faces
    the other way, so the zone is rotated 180 degrees about the robot
    before translating (x stays symmetric, the y skew flips).
    """
    cx = float(court.center(side)[0])
    if side == SIDE_B:
        x_lo, x_hi = base.x_range
        y_range = base.y_range
    else:
        x_hi, x_lo = -base.x_range[0], -base.x_range[1]
        y_range = (-base.y_range[1], -base.y_range[0])
    return HitZone(
        x_range=(cx + x_lo, cx + x_hi),
        y_range=y_range,
        z_range=base.z_range,
        t_min=base.t_min,
    )


@dataclass(frozen=True)
class OracleHitter:
    """Stand-in striker: perfect aim, configurable execution error.

    pos/ori/timing sigmas perturb the executed racket pose and contact
    instant around the commanded ones; swing_speed is the racket speed
    along its face normal at contact; aim is the court point (x, y) the
    return should land on.
    """

    side: str
    aim: np.ndarray
    pos_error_sigma: float = 0.0
    ori_error_sigma: float = 0.0
    timing_error_sigma: float = 0.0
    swing_speed: float = 4.0

    def __post_init__(self) -> None:
        if self.side not in (SIDE_A, SIDE_B):
            raise ValueError(f"side must be {SIDE_A!r} or {SIDE_B!r}")
        for name in ("pos_error_sigma", "ori_error_sigma", "timing_error_sigma"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        if self.swing_speed < 0.0:
            raise ValueError("swing_speed must be >= 0")
        object.__setattr__(self, "aim", np.asarray(self.aim, dtype=float).reshape(2))


def default_hitter(side: str, court: CourtSpec = CourtSpec(), **kwargs) -> OracleHitter:
    """Hitter aiming at the center of the opposite half."""
    return OracleHitter(side=side, aim=court.center(other_side(side)), **kwargs)


@dataclass(frozen=True)
class HitEvent:
    """One return attempt. v_out and landing are None for a whiffed swing
    and for flights the opponent returned before they touched down."""

    side: str
    t: float
    racket: RacketState
    target: TargetTuple
    quality: HitQuality
    v_in: np.ndarray
    p_contact: np.ndarray
    v_out: np.ndarray | None = None
    landing: np.ndarray | None = None

    @property
    def success(self) -> bool:
        return self.quality.success


@dataclass(frozen=True)
class RallyOutcome:
    hits: list
    length: int
    termination: str
    final_landing: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.termination not in TERMINATIONS:
            raise ValueError(f"unknown termination {self.termination!r}")


def check_net_clearance(traj: Trajectory, court: CourtSpec) -> bool:
    """True unless the flight crosses x = 0 at or below the net tape.

    Drag never flips the sign of vx, so a segment crosses the net plane at
    most once. A flight that stays on one side returns True here; the
    landing logic downstream scores it as a fault instead.
    """
    x = traj.positions[:, 0]
    cross = np.flatnonzero(((x[:-1] > 0) & (x[1:] <= 0)) | ((x[:-1] < 0) & (x[1:] >= 0)))
    if cross.size == 0:
        return True
    j = int(cross[0])
    frac = x[j] / (x[j] - x[j + 1])
    z = traj.positions[:, 2]
    z_cross = z[j] + frac * (z[j + 1] - z[j])
    return bool(z_cross > court.net_height)


def check_in_bounds(landing: np.ndarray, court: CourtSpec, receiving_side: str) -> bool:
    """Inclusive line call on the receiving half (on the line is in)."""
    x, y = float(landing[0]), float(landing[1])
    if abs(y) > court.half_width:
        return False
    if receiving_side == SIDE_A:
        return 0.0 <= x <= court.half_length
    return -court.half_length <= x <= 0.0


def ground_landing(traj: Trajectory) -> np.ndarray:
    """Touchdown (x, y) from the z = 0 crossing of a ground-stopped flight."""
    p = traj.positions
    if len(traj) < 2 or p[-2, 2] <= 0.0:
        return p[-1, :2].copy()
    z1, z2 = p[-2, 2], p[-1, 2]
    frac = z1 / (z1 - z2) if z1 != z2 else 1.0
    return p[-2, :2] + frac * (p[-1, :2] - p[-2, :2])


def _batch_landing(starts: np.ndarray, params: AeroParams, dt: float) -> np.ndarray:
    """Landing (x, y) for each start row [p, v]; NaN if never down in time."""
    n_steps = int(math.ceil(MAX_FLIGHT_TIME / dt))
    paths = _kernels.simulate_paths(starts, dt, n_steps, params.L, params.g)
    z = paths[:, :, 2]
    down = (z[:, 1:] <= 0.0) & (paths[:, 1:, 5] <= 0.0)
    out = np.full((starts.shape[0], 2), np.nan)
    for r in range(starts.shape[0]):
        idx = np.flatnonzero(down[r])
        if idx.size == 0:
            continue
        j = int(idx[0])  # crossing between samples j and j+1
        z1, z2 = z[r, j], z[r, j + 1]
        frac = z1 / (z1 - z2) if z1 > 0.0 and z1 != z2 else 1.0
        out[r] = paths[r, j, :2] + frac * (paths[r, j + 1, :2] - paths[r, j, :2])
    return out


def _solve_pitch(p_c: np.ndarray, aim: np.ndarray, v_of_normal, params: AeroParams,
                 dt: float = DEFAULT_DT) -> np.ndarray:
    """Racket/launch normal whose flight lands on the aim point.

    The normal is confined to the vertical plane through the aim direction,
    leaving pitch as the single unknown. Range over pitch is unimodal, so a
    coarse scan finds the peak and a bisection walks the steep side of it
    (the lofted branch, which buys net clearance and hang time) down to the
    requested distance. Falls back to the max-range pitch when the aim
    point is out of reach.
    """
    d = aim - p_c[:2]
    dist = float(np.linalg.norm(d))
    d_hat = d / dist if dist > 1e-9 else np.array([-math.copysign(1.0, p_c[0]), 0.0])

    def n_of(theta: float) -> np.ndarray:
        c = math.cos(theta)
        return np.array([c * d_hat[0], c * d_hat[1], math.sin(theta)])

    def reach(landings: np.ndarray) -> np.ndarray:
        return (landings - p_c[:2]) @ d_hat

    starts = np.empty((_PITCH_SCAN.size, 6))
    for i, th in enumerate(_PITCH_SCAN):
        starts[i, :3] = p_c
        starts[i, 3:] = v_of_normal(n_of(th))
    s = reach(_batch_landing(starts, params, dt))
    s = np.where(np.isnan(s), -np.inf, s)
    peak = int(np.argmax(s))
    if s[peak] <= dist:
        return n_of(float(_PITCH_SCAN[peak]))

    lo, hi = float(_PITCH_SCAN[peak]), float(_PITCH_SCAN[-1])
    if s[-1] >= dist:  # aim point closer than the steepest scanned drop
        return n_of(hi)
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        n = n_of(mid)
        row = np.concatenate([p_c, v_of_normal(n)])[None, :]
        s_mid = float(reach(_batch_landing(row, params, dt))[0])
        if not math.isfinite(s_mid) or s_mid > dist:
            lo = mid
        else:
            hi = mid
        if abs(s_mid - dist) < _AIM_TOLERANCE:
            return n
    return n_of(0.5 * (lo + hi))


def _perturbed_normal(n: np.ndarray, rng: np.random.Generator, sigma: float) -> np.ndarray:
    """Tilt n by an angle ~ N(0, sigma) about a random perpendicular axis."""
    g = rng.standard_normal(3)
    ang = rng.standard_normal() * sigma
    axis = g - np.dot(g, n) * n
    norm = float(np.linalg.norm(axis))
    if norm < 1e-12:
        return n.copy()
    axis /= norm
    return n * math.cos(ang) + np.cross(axis, n) * math.sin(ang)


def attempt_return(incoming: Trajectory, hitter: OracleHitter, zone: HitZone,
                   rng: np.random.Generator, params: AeroParams = AeroParams()) -> HitEvent | None:
    """One swing at an incoming flight.

    Returns None when the flight never presents a contact inside the zone.
    Otherwise the commanded tuple is the interpolated plane crossing with
    the aim-adjusted face normal; the executed racket pose and timing are
    that command plus the hitter's Gaussian errors, and the swing counts
    only if the executed pose passes the contact quality gate.

    The rng is always advanced by the same number of draws once a contact
    exists, so rallies with different error scales stay sample-aligned.
    """
    z_target = rng.uniform(*zone.z_range)
    pos_noise = rng.standard_normal(3) * hitter.pos_error_sigma
    # ori/timing draws happen inside/after the aim solve, order fixed below
    if find_zone_entry(incoming, zone) is None:
        return None
    ideal = crossing_target(incoming.states, incoming.dt, zone, z_target)
    if ideal is None:
        return None

    contact_cmd = state_at_time_exact(incoming, ideal.t_star, params)
    speed = hitter.swing_speed

    def v_of_normal(n: np.ndarray) -> np.ndarray:
        return reflect(contact_cmd.v, speed * n, n)

    n_aim = _solve_pitch(ideal.p_star, hitter.aim, v_of_normal, params, incoming.dt)
    command = TargetTuple(p_star=ideal.p_star, q_star=frame_from_z(-n_aim),
                          t_star=ideal.t_star)

    n_exec = normalize(_perturbed_normal(n_aim, rng, hitter.ori_error_sigma))
    t_hit = ideal.t_star + rng.standard_normal() * hitter.timing_error_sigma
    t_hit = float(np.clip(t_hit, 0.0, incoming.duration))

    q_exec = frame_from_z(-n_exec)
    racket = RacketState(p_ee=ideal.p_star + pos_noise, q_ee=q_exec,
                         v_ee=speed * (-quat_z_axis(q_exec)))
    quality = hit_quality(racket, command)

    at_hit = state_at_time_exact(incoming, t_hit, params)
    v_out = None
    if quality.success:
        # recompute from the stored racket fields so the event replays exactly
        v_out = reflect(at_hit.v, racket.v_ee, racket.normal)
    return HitEvent(side=hitter.side, t=t_hit, racket=racket, target=command,
                    quality=quality, v_in=at_hit.v, p_contact=at_hit.p, v_out=v_out)


def build_serve(court: CourtSpec = CourtSpec(), params: AeroParams = AeroParams(),
                speed: float = 12.0, height: float = 1.0, y: float = 0.0,
                dt: float = DEFAULT_DT) -> ShuttleState:
    """Deterministic lofted serve from side B onto side A's half center."""
    p0 = np.array([-0.5 * court.half_length, y, height])
    n = _solve_pitch(p0, court.center(SIDE_A), lambda u: speed * u, params, dt)
    return ShuttleState(p=p0, v=speed * n)


def simulate_rally(court: CourtSpec, hitter_a: OracleHitter, hitter_b: OracleHitter,
                   serve: ShuttleState, params: AeroParams,
                   rng: np.random.Generator, max_hits: int = 21,
                   dt: float = DEFAULT_DT) -> RallyOutcome:
    """Alternate returns starting with side A receiving the serve.

    Each flight segment is checked against the net on the way over; a
    failed or absent return lets the segment run to the ground, where the
    line call picks between miss_ground_contact (in) and out_of_bounds.
    Reaching max_hits successful returns stops play.
    """
    hitters = {SIDE_A: hitter_a, SIDE_B: hitter_b}
    zones = {s: zone_for_side(s, court) for s in (SIDE_A, SIDE_B)}
    receiver = SIDE_A
    t_offset = 0.0
    hits: list[HitEvent] = []
    n_good = 0

    segment = simulate(serve, params, dt, stop="ground", max_time=MAX_FLIGHT_TIME)
    while True:
        if not check_net_clearance(segment, court):
            return RallyOutcome(hits=hits, length=n_good, termination=NET_FAULT)
        event = attempt_return(segment, hitters[receiver], zones[receiver], rng, params)
        if event is None or not event.success:
            landing = ground_landing(segment)
            if event is not None:
                hits.append(replace(event, t=t_offset + event.t))
            reason = (MISS_GROUND_CONTACT
                      if check_in_bounds(landing, court, receiver) else OUT_OF_BOUNDS)
            return RallyOutcome(hits=hits, length=n_good, termination=reason,
                                final_landing=landing)
        hits.append(replace(event, t=t_offset + event.t))
        n_good += 1
        if n_good >= max_hits:
            return RallyOutcome(hits=hits, length=n_good, termination=MAX_HITS_REACHED)
        t_offset += event.t
        segment = simulate(ShuttleState(p=event.p_contact, v=event.v_out),
                           params, dt, stop="ground", max_time=MAX_FLIGHT_TIME)
        receiver = other_side(receiver)


def rally_length_sweep(sigmas, n_rallies: int, court: CourtSpec = CourtSpec(),
                       params: AeroParams = AeroParams(), seed: int = 0,
                       max_hits: int = 21, dt: float = DEFAULT_DT) -> list[tuple]:
    """Mean/std rally length against position-error scale.

    Rally k uses the stream default_rng([seed, k]) at every sigma, so the
    per-sigma samples are paired and the degradation comparison is tight.
    Returns [(sigma, mean_length, std_length), ...] in the given order.
    """
    serve = build_serve(court, params, dt=dt)
    rows = []
    for sig in sigmas:
        lengths = np.empty(n_rallies)
        for k in range(n_rallies):
            rng = np.random.default_rng([seed, k])
            out = simulate_rally(
                court,
                default_hitter(SIDE_A, court, pos_error_sigma=sig),
                default_hitter(SIDE_B, court, pos_error_sigma=sig),
                serve, params, rng, max_hits=max_hits, dt=dt)
            lengths[k] = out.length
        rows.append((float(sig), float(np.mean(lengths)),
                     float(np.std(lengths, ddof=1)) if n_rallies > 1 else 0.0))
    return rows


def _vec(a) -> list | None:
    if a is None:
        return None
    return [float(x) for x in np.asarray(a).ravel()]


def write_rally_log(outcomes, path, header: dict | None = None) -> None:
    """JSON-lines dump: one line per hit event, one summary line per rally."""
    outcomes = list(outcomes)
    with open(path, "w") as fh:
        if header is not None:
            fh.write(json.dumps({"type": "header", **header}) + "\n")
        for i, out in enumerate(outcomes):
            for ev in out.hits:
                fh.write(json.dumps({
                    "type": "hit", "rally": i, "side": ev.side, "t": ev.t,
                    "success": ev.success,
                    "e_pos": ev.quality.e_pos, "e_ori": ev.quality.e_ori,
                    "p_star": _vec(ev.target.p_star), "t_star": ev.target.t_star,
                    "p_contact": _vec(ev.p_contact), "v_in": _vec(ev.v_in),
                    "v_out": _vec(ev.v_out), "landing": _vec(ev.landing),
                }) + "\n")
            fh.write(json.dumps({
                "type": "outcome", "rally": i, "length": out.length,
                "termination": out.termination,
                "final_landing": _vec(out.final_landing),
            }) + "\n")


def write_sweep_csv(rows, path, header_comment: str | None = None) -> None:
    with open(path, "w") as fh:
        if header_comment is not None:
            fh.write(f"# {header_comment}\n")
        fh.write("sigma_pos_m,mean_length,std_length\n")
        for sig, mean, std in rows:
            fh.write(f"{sig!r},{mean!r},{std!r}\n")
