"""EKF tracking and intercept prediction.

State is [x, y, z, vx, vy, vz] under the drag flight model with
position-only measurements (H = [I 0]). The discrete transition Jacobian
differentiates the RK4 step itself (chain rule through all four stages), so
it matches finite differences of step() to first order in the probe size
rather than to O(dt^2); covariance updates use the Joseph form.

Tracks are immutable: every operation returns a new EkfTrack.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import _kernels
from .corpus import TargetTuple, plane_crossing, target_from_entry
from .dynamics import (DEFAULT_DT, AeroParams, ShuttleState, accel,
                       drag_jacobian, state_at_time_exact, step_vector)

DEFAULT_MEAS_RATE = 210.0
DEFAULT_MEAS_SIGMA = 0.005
DEFAULT_SIGMA_A = 0.5

_H = np.hstack([np.eye(3), np.zeros((3, 3))])


class SingularInnovation(RuntimeError):
    """Innovation covariance not invertible (degenerate R and P)."""


class NonMonotonicTime(ValueError):
    """Measurement timestamp at or before the track clock."""


@dataclass(frozen=True)
class EkfTrack:
    """Filter state: mean, covariance, per-step process noise, measurement
    noise, and the clock of the last processed instant."""

    mean: np.ndarray
    cov: np.ndarray
    q_proc: np.ndarray
    r_meas: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(6)
        cov = np.asarray(self.cov, dtype=float).reshape(6, 6)
        q = np.asarray(self.q_proc, dtype=float).reshape(6, 6)
        r = np.asarray(self.r_meas, dtype=float).reshape(3, 3)
        if not (np.isfinite(mean).all() and np.isfinite(cov).all()):
            raise ValueError("track mean/cov must be finite")
        if not np.allclose(cov, cov.T, atol=1e-9):
            raise ValueError("covariance must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", 0.5 * (cov + cov.T))
        object.__setattr__(self, "q_proc", q)
        object.__setattr__(self, "r_meas", r)

    @property
    def position(self) -> np.ndarray:
        return self.mean[:3]

    @property
    def velocity(self) -> np.ndarray:
        return self.mean[3:]


@dataclass(frozen=True)
class InterceptPrediction:
    """Predicted hitting target; valid only if the forward rollout crossed
    the intercept plane within the horizon, strictly after the track clock."""

    target: TargetTuple | None
    valid: bool
    time_to_impact: float


def process_noise(sigma_a: float = DEFAULT_SIGMA_A,
                  dt: float = 1.0 / DEFAULT_MEAS_RATE) -> np.ndarray:
    """Per-step Q: acceleration white noise entering the velocity block."""
    q = np.zeros((6, 6))
    q[3, 3] = q[4, 4] = q[5, 5] = sigma_a * sigma_a * dt
    return q


def measurement_noise(sigma: float = DEFAULT_MEAS_SIGMA) -> np.ndarray:
    """R for isotropic position noise. sigma = 0 is floored to 1 nm so the
    innovation covariance stays invertible in noise-free studies."""
    s = max(sigma, 1e-9)
    return (s * s) * np.eye(3)


def make_track(p, v, *, pos_var: float = 1.0, vel_var: float = 25.0,
               q_proc: np.ndarray | None = None,
               r_meas: np.ndarray | None = None, t: float = 0.0) -> EkfTrack:
    """Track from an explicit state guess with diagonal initial covariance."""
    cov = np.diag([pos_var] * 3 + [vel_var] * 3).astype(float)
    return EkfTrack(
        mean=np.concatenate([np.asarray(p, float), np.asarray(v, float)]),
        cov=cov,
        q_proc=process_noise() if q_proc is None else q_proc,
        r_meas=measurement_noise() if r_meas is None else r_meas,
        t=t)


def track_init_pair(z0, z1, t0: float, t1: float, *,
                    sigma: float = DEFAULT_MEAS_SIGMA,
                    sigma_a: float = DEFAULT_SIGMA_A,
                    r_meas: np.ndarray | None = None,
                    q_proc: np.ndarray | None = None,
                    params: AeroParams | None = None) -> EkfTrack:
    """Two-point initialization: position from the newest measurement,
    velocity from the finite difference, covariance propagated exactly from
    the two measurement noises.

    With ``params`` the finite-difference velocity gets a first-order
    midpoint correction v += a(v_fd) * dt / 2, removing the O(dt) bias the
    strong drag would otherwise leave in the seed (noise propagation is
    unchanged to first order)."""
    if not t1 > t0:
        raise NonMonotonicTime(f"need t1 > t0, got {t0} -> {t1}")
    z0 = np.asarray(z0, float).reshape(3)
    z1 = np.asarray(z1, float).reshape(3)
    dt = t1 - t0
    v_fd = (z1 - z0) / dt
    if params is not None:
        v_fd = v_fd + 0.5 * dt * accel(ShuttleState(p=z1, v=v_fd), params)
    mean = np.concatenate([z1, v_fd])
    s2 = sigma * sigma
    cov = np.zeros((6, 6))
    for a in range(3):
        cov[a, a] = s2
        cov[a, 3 + a] = cov[3 + a, a] = s2 / dt
        cov[3 + a, 3 + a] = 2.0 * s2 / (dt * dt)
    return EkfTrack(
        mean=mean, cov=cov,
        q_proc=process_noise(sigma_a, dt) if q_proc is None else q_proc,
        r_meas=measurement_noise(sigma) if r_meas is None else r_meas,
        t=t1)


def _stage_states(x: np.ndarray, dt: float, params: AeroParams):
    L, g = params.L, params.g

    def f(y):
        v = y[3:]
        coef = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) / L
        out = np.empty(6)
        out[:3] = v
        out[3:] = -coef * v
        out[5] -= g
        return out

    k1 = f(x)
    x2 = x + 0.5 * dt * k1
    k2 = f(x2)
    x3 = x + 0.5 * dt * k2
    k3 = f(x3)
    x4 = x + dt * k3
    return x, x2, x3, x4


def _rate_jacobian(x: np.ndarray, params: AeroParams) -> np.ndarray:
    A = np.zeros((6, 6))
    A[:3, 3:] = np.eye(3)
    A[3:, 3:] = drag_jacobian(x[3:], params)
    return A


def transition_jacobian(x, dt: float, params: AeroParams) -> np.ndarray:
    """d step(x) / dx: the RK4 update differentiated stage by stage."""
    x = np.asarray(x, dtype=float).reshape(6)
    x1, x2, x3, x4 = _stage_states(x, dt, params)
    I = np.eye(6)
    Dk1 = _rate_jacobian(x1, params)
    Dk2 = _rate_jacobian(x2, params) @ (I + 0.5 * dt * Dk1)
    Dk3 = _rate_jacobian(x3, params) @ (I + 0.5 * dt * Dk2)
    Dk4 = _rate_jacobian(x4, params) @ (I + dt * Dk3)
    return I + (dt / 6.0) * (Dk1 + 2.0 * Dk2 + 2.0 * Dk3 + Dk4)


def ekf_predict(track: EkfTrack, dt: float, params: AeroParams) -> EkfTrack:
    """Propagate mean through one RK4 step and covariance by F P F^T + Q."""
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    mean = step_vector(track.mean, dt, params)
    F = transition_jacobian(track.mean, dt, params)
    cov = F @ track.cov @ F.T + track.q_proc
    return replace(track, mean=mean, cov=0.5 * (cov + cov.T), t=track.t + dt)


def ekf_update(track: EkfTrack, z, r_meas: np.ndarray | None = None) -> EkfTrack:
    """Position measurement update (Joseph form)."""
    z = np.asarray(z, dtype=float).reshape(3)
    R = track.r_meas if r_meas is None else np.asarray(r_meas, float).reshape(3, 3)
    P = track.cov
    S = P[:3, :3] + R
    try:
        K = np.linalg.solve(S.T, (P @ _H.T).T).T
    except np.linalg.LinAlgError as e:
        raise SingularInnovation(f"innovation covariance singular: {e}") from e
    if not np.isfinite(K).all():
        raise SingularInnovation("innovation covariance produced non-finite gain")
    mean = track.mean + K @ (z - track.mean[:3])
    ImKH = np.eye(6) - K @ _H
    cov = ImKH @ P @ ImKH.T + K @ R @ K.T
    return replace(track, mean=mean, cov=0.5 * (cov + cov.T))


def track_feed(track: EkfTrack, t: float, z, params: AeroParams) -> EkfTrack:
    """Predict to t, then update with z. Rejects stale or duplicate stamps."""
    if t <= track.t:
        raise NonMonotonicTime(f"measurement at t={t} but track clock is {track.t}")
    return ekf_update(ekf_predict(track, t - track.t, params), z)


def predict_intercept(track: EkfTrack, z_target: float, horizon: float,
                      params: AeroParams, dt: float = DEFAULT_DT) -> InterceptPrediction:
    """Roll the mean forward and interpolate the first downward crossing of
    the intercept plane. time_to_impact is measured from the track clock."""
    if not horizon > 0.0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    n_steps = max(1, int(math.ceil(horizon / dt - 1e-9)))
    states = _kernels.simulate_paths(track.mean[None, :], dt, n_steps,
                                     params.L, params.g)[0]
    hit = plane_crossing(states, dt, z_target)
    if hit is None:
        return InterceptPrediction(target=None, valid=False,
                                   time_to_impact=float("nan"))
    t_rel, state_c = hit
    t_star = track.t + t_rel
    if t_star <= track.t:
        return InterceptPrediction(target=None, valid=False,
                                   time_to_impact=float("nan"))
    target = target_from_entry(state_c, t_star, z_target)
    return InterceptPrediction(target=target, valid=True, time_to_impact=t_rel)


def default_lead_times() -> np.ndarray:
    return np.round(np.arange(1.0, 0.0499, -0.05), 10)


def evaluate_predictor(records, sigma: float = DEFAULT_MEAS_SIGMA,
                       rate: float = DEFAULT_MEAS_RATE, seed: int = 0, *,
                       lead_times=None, params: AeroParams = AeroParams(),
                       sigma_a: float = DEFAULT_SIGMA_A, horizon: float = 2.0,
                       predict_dt: float = DEFAULT_DT):
    """Intercept-error curves over stored trajectories.

    For each trajectory and lead time tau, feed noisy position measurements
    sampled at ``rate`` up to t_star - tau, predict the intercept, and log
    position and timing error against the stored target. One noise sequence
    is drawn per record (stream [seed, record.index]) and shared across lead
    times, so shorter leads see strict prefixes of the same data.

    Returns a dict with per-record error matrices (NaN where too little data
    was available) and aggregate mean/std rows aligned with lead_times.
    """
    taus = default_lead_times() if lead_times is None else np.asarray(lead_times, float)
    n_rec, n_tau = len(records), taus.size
    pos_err = np.full((n_rec, n_tau), np.nan)
    t_err = np.full((n_rec, n_tau), np.nan)

    for r, rec in enumerate(records):
        if rec.traj is None:
            raise ValueError(f"record {rec.index} carries no trajectory")
        traj = rec.traj
        t_star = rec.target.t_star
        n_meas_max = int(math.floor(min(t_star, traj.duration) * rate + 1e-9)) + 1
        times = np.arange(n_meas_max) / rate
        truth = np.stack([state_at_time_exact(traj, t, params).p for t in times])
        rng = np.random.default_rng([seed, rec.index])
        meas = truth + rng.normal(0.0, sigma, size=truth.shape)

        for c, tau in enumerate(taus):
            cutoff = t_star - tau
            n_use = int(np.count_nonzero(times <= cutoff + 1e-12))
            if n_use < 2:
                continue
            track = track_init_pair(meas[0], meas[1], times[0], times[1],
                                    sigma=sigma, sigma_a=sigma_a, params=params)
            for k in range(2, n_use):
                track = track_feed(track, times[k], meas[k], params)
            pred = predict_intercept(track, rec.target.p_star[2], horizon,
                                     params, dt=predict_dt)
            if not pred.valid:
                continue
            pos_err[r, c] = float(np.linalg.norm(
                pred.target.p_star - rec.target.p_star))
            t_err[r, c] = abs(pred.target.t_star - t_star)

    with np.errstate(invalid="ignore"):
        agg = {
            "lead_times": taus,
            "pos_err": pos_err,
            "t_err": t_err,
            "pos_err_mean": np.nanmean(pos_err, axis=0),
            "pos_err_std": np.nanstd(pos_err, axis=0),
            "t_err_mean": np.nanmean(t_err, axis=0),
            "t_err_std": np.nanstd(t_err, axis=0),
        }
    return agg


def write_error_curves_csv(curves: dict, path, header_comment: str | None = None) -> None:
    """CSV rows (lead_time_s, pos_err_mean_m, pos_err_std_m, t_err_mean_s,
    t_err_std_s), one per lead time."""
    with open(path, "w") as f:
        if header_comment is not None:
            f.write(f"# {header_comment}\n")
        f.write("lead_time_s,pos_err_mean_m,pos_err_std_m,t_err_mean_s,t_err_std_s\n")
        for i, tau in enumerate(curves["lead_times"]):
            f.write("%.6f,%.9f,%.9f,%.9f,%.9f\n" % (
                tau, curves["pos_err_mean"][i], curves["pos_err_std"][i],
                curves["t_err_mean"][i], curves["t_err_std"][i]))
