"""Shuttlecock flight dynamics.

The aerodynamic model is gravity plus quadratic drag aligned against the
velocity, with the drag strength set by a single lumped constant: the
aerodynamic length L (metres). Acceleration:

    a = (0, 0, -g) - (|v| / L) * v

L absorbs mass, air density, cross section, and drag coefficient; 3.4 m
reproduces a standard feather shuttle. Terminal speed is sqrt(g * L).
Integration is classical fixed-step RK4; passing L = inf switches the
drag term off, which is handy for ballistic cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

DEFAULT_DT = 1.0 / 500.0
DEFAULT_MAX_TIME = 3.0


class NonTermination(RuntimeError):
    """Simulation ran past its time budget without hitting the stop condition."""


@dataclass(frozen=True)
class AeroParams:
    """Aerodynamic length L (m) and gravity g (m/s^2, acting along -z)."""

    L: float = 3.4
    g: float = 9.81

    def __post_init__(self):
        if not self.L > 0.0:
            raise ValueError(f"aerodynamic length must be positive, got {self.L}")
        if self.g < 0.0:
            raise ValueError(f"gravity must be non-negative, got {self.g}")

    @property
    def terminal_speed(self) -> float:
        return math.sqrt(self.g * self.L)


@dataclass(frozen=True)
class ShuttleState:
    """World-frame position (m) and velocity (m/s), z up."""

    p: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(3))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).reshape(3))
        if not (np.isfinite(self.p).all() and np.isfinite(self.v).all()):
            raise ValueError("shuttle state must be finite")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.v])

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "ShuttleState":
        x = np.asarray(x, dtype=float).reshape(6)
        return cls(p=x[:3], v=x[3:])


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled flight path: times (n,) and states (n, 6)."""

    dt: float
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise ValueError("trajectory must contain at least one sample")
        if states.shape != (times.size, 6):
            raise ValueError(f"states shape {states.shape} does not match {times.size} samples")
        if times.size > 1:
            gaps = np.diff(times)
            if not np.all(gaps > 0.0):
                raise ValueError("timestamps must be strictly increasing")
            if not np.allclose(gaps, self.dt, rtol=1e-9, atol=1e-12):
                raise ValueError("timestamps must be uniformly spaced by dt")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)

    def __len__(self) -> int:
        return self.times.size

    @property
    def positions(self) -> np.ndarray:
        return self.states[:, :3]

    @property
    def velocities(self) -> np.ndarray:
        return self.states[:, 3:]

    @property
    def duration(self) -> float:
        return float(self.times[-1])

    def state(self, i: int) -> ShuttleState:
        return ShuttleState.from_vector(self.states[i])

    def state_at_time(self, t: float) -> ShuttleState:
        """Linear interpolation between bracketing samples."""
        if not self.times[0] <= t <= self.times[-1]:
            raise ValueError(f"t={t} outside trajectory [{self.times[0]}, {self.times[-1]}]")
        j = int(np.searchsorted(self.times, t, side="right")) - 1
        j = min(j, len(self) - 2) if len(self) > 1 else 0
        if len(self) == 1:
            return self.state(0)
        frac = (t - self.times[j]) / (self.times[j + 1] - self.times[j])
        x = self.states[j] + frac * (self.states[j + 1] - self.states[j])
        return ShuttleState.from_vector(x)


def state_at_time_exact(traj: Trajectory, t: float, params: AeroParams) -> ShuttleState:
    """Model-consistent state at an off-grid time.

    Advances the last grid sample before t by one partial RK4 step instead of
    chord interpolation, so sampling between grid points carries no O(dt^2)
    curvature error.
    """
    if not traj.times[0] - 1e-12 <= t <= traj.times[-1] + 1e-12:
        raise ValueError(f"t={t} outside trajectory [{traj.times[0]}, {traj.times[-1]}]")
    j = min(int((t - traj.times[0]) / traj.dt + 1e-9), len(traj) - 1)
    rem = t - traj.times[j]
    if rem <= 1e-12:
        return traj.state(j)
    return ShuttleState.from_vector(step_vector(traj.states[j], rem, params))


def accel(state: ShuttleState, params: AeroParams) -> np.ndarray:
    """Acceleration (m/s^2) under gravity and quadratic drag."""
    v = state.v
    coef = np.linalg.norm(v) / params.L
    a = -coef * v
    a[2] -= params.g
    return a


def drag_jacobian(v: np.ndarray, params: AeroParams) -> np.ndarray:
    """d(accel)/d(v), the 3x3 drag linearization.

    Analytic form -(|v| I + v v^T / |v|) / L. The drag force is continuous
    at v = 0 but its Jacobian is not smooth there; we take the one-sided
    limit and return the zero matrix.
    """
    v = np.asarray(v, dtype=float).reshape(3)
    speed = np.linalg.norm(v)
    if speed == 0.0:
        return np.zeros((3, 3))
    return -(speed * np.eye(3) + np.outer(v, v) / speed) / params.L


def _deriv(x: np.ndarray, L: float, g: float) -> np.ndarray:
    v = x[3:]
    coef = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]) / L
    out = np.empty(6)
    out[:3] = v
    out[3:] = -coef * v
    out[5] -= g
    return out


def step(state: ShuttleState, dt: float, params: AeroParams) -> ShuttleState:
    """Single RK4 advance of (p, v). Deterministic; dt must be positive."""
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = state.as_vector()
    return ShuttleState.from_vector(step_vector(x, dt, params))


def step_vector(x: np.ndarray, dt: float, params: AeroParams) -> np.ndarray:
    """RK4 advance of a raw 6-vector state; same arithmetic as the kernels."""
    L, g = params.L, params.g
    k1 = _deriv(x, L, g)
    k2 = _deriv(x + 0.5 * dt * k1, L, g)
    k3 = _deriv(x + 0.5 * dt * k2, L, g)
    k4 = _deriv(x + dt * k3, L, g)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate(
    state0: ShuttleState,
    params: AeroParams,
    dt: float = DEFAULT_DT,
    *,
    stop: str = "ground",
    max_time: float = DEFAULT_MAX_TIME,
    plane_z: float | None = None,
) -> Trajectory:
    """Integrate from t = 0 until the stop condition is first satisfied.

    stop:
      - "ground": first sample with z <= 0 while descending (vz <= 0), so
        launches that start below the court plane but are climbing survive.
      - "plane": first sample below ``plane_z`` after a downward crossing.
      - "max_time": run to the first sample with t >= max_time.

    The returned trajectory ends at the stopping sample. Raises
    NonTermination if "ground"/"plane" is not reached within max_time.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    if stop not in ("ground", "plane", "max_time"):
        raise ValueError(f"unknown stop condition {stop!r}")
    if stop == "plane" and plane_z is None:
        raise ValueError("plane stop requires plane_z")

    n_steps = max(1, int(math.ceil(max_time / dt - 1e-9)))
    paths = _kernels.simulate_paths(state0.as_vector()[None, :], dt, n_steps, params.L, params.g)
    states = paths[0]
    times = np.arange(n_steps + 1) * dt

    z = states[:, 2]
    vz = states[:, 5]
    if stop == "ground":
        hits = np.flatnonzero((z <= 0.0) & (vz <= 0.0))
    elif stop == "plane":
        crossed = (z[:-1] > plane_z) & (z[1:] <= plane_z)
        hits = np.flatnonzero(crossed) + 1
    else:
        hits = np.array([n_steps])

    if hits.size == 0:
        raise NonTermination(f"no {stop} stop within {max_time} s")
    end = int(hits[0])
    return Trajectory(dt=dt, times=times[: end + 1], states=states[: end + 1])
