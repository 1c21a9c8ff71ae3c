"""Pure-numpy integration kernels.

Lockstep fallback used when the compiled extension is unavailable. All rows
advance together one RK4 step at a time; finished rows are compacted away in
batches so the live working set shrinks as flights terminate. Arithmetic is
ordered to match the compiled kernels operation for operation (sums built
left to right, no fused multiply-add), so both backends produce identical
bytes for identical inputs.
"""

from __future__ import annotations

import math

import numpy as np

STATUS_LANDED = 0
STATUS_TIMEOUT = 1
STATUS_ENTERED = 2

# compact the live set once at least this fraction of it has finished
_COMPACT_FRAC = 0.25
_COMPACT_MIN = 4096


def _deriv(x: np.ndarray, L: float, g: float, out: np.ndarray) -> np.ndarray:
    v = x[:, 3:]
    speed = np.sqrt(v[:, 0] * v[:, 0] + v[:, 1] * v[:, 1] + v[:, 2] * v[:, 2])
    coef = speed / L
    out[:, :3] = v
    out[:, 3:] = -coef[:, None] * v
    out[:, 5] -= g
    return out


def _rk4_batch(x: np.ndarray, dt: float, L: float, g: float) -> np.ndarray:
    k1 = np.empty_like(x)
    k2 = np.empty_like(x)
    k3 = np.empty_like(x)
    k4 = np.empty_like(x)
    _deriv(x, L, g, k1)
    _deriv(x + 0.5 * dt * k1, L, g, k2)
    _deriv(x + 0.5 * dt * k2, L, g, k3)
    _deriv(x + dt * k3, L, g, k4)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def simulate_paths(x0: np.ndarray, dt: float, n_steps: int, L: float, g: float,
                   num_threads: int = 0) -> np.ndarray:
    """Integrate every row for exactly n_steps; returns (m, n_steps + 1, 6)."""
    x = np.array(x0, dtype=np.float64)
    out = np.empty((x.shape[0], n_steps + 1, 6), dtype=np.float64)
    out[:, 0, :] = x
    for k in range(n_steps):
        x = _rk4_batch(x, dt, L, g)
        out[:, k + 1, :] = x
    return out


def _min_step_at_or_after(t_min: float, dt: float) -> int:
    # identical rounding rule in both backends; keeps the time gate integral
    return max(0, int(math.ceil(t_min / dt - 1e-9)))


def scan_flights(x0: np.ndarray, dt: float, n_steps: int, L: float, g: float,
                 box: np.ndarray, t_min: float, num_threads: int = 0):
    """Classify each launch without recording paths.

    Per row, walk samples k = 0..n_steps and report the first terminal event:
    ground contact while descending (z <= 0 and vz <= 0) -> STATUS_LANDED;
    sample inside the box (inclusive bounds) at or after t_min ->
    STATUS_ENTERED with the sample index in entry_step; neither within
    n_steps -> STATUS_TIMEOUT. Ground contact is checked first.

    Returns (status (m,) int8, entry_step (m,) int64, entry_step == -1
    unless entered).
    """
    m = x0.shape[0]
    x0b, x1b, y0b, y1b, z0b, z1b = (float(c) for c in box)
    k_min = _min_step_at_or_after(t_min, dt)

    status = np.full(m, -1, dtype=np.int8)
    entry_step = np.full(m, -1, dtype=np.int64)

    x = np.array(x0, dtype=np.float64)
    rows = np.arange(m)
    dead = 0

    def classify(k: int) -> None:
        nonlocal dead
        alive = status[rows] == -1
        z = x[:, 2]
        landed = alive & (z <= 0.0) & (x[:, 5] <= 0.0)
        if landed.any():
            status[rows[landed]] = STATUS_LANDED
            alive = alive & ~landed
        if k >= k_min:
            inbox = (alive
                     & (x[:, 0] >= x0b) & (x[:, 0] <= x1b)
                     & (x[:, 1] >= y0b) & (x[:, 1] <= y1b)
                     & (z >= z0b) & (z <= z1b))
            if inbox.any():
                hit = rows[inbox]
                status[hit] = STATUS_ENTERED
                entry_step[hit] = k
        dead = int(np.count_nonzero(status[rows] != -1))

    classify(0)
    for k in range(1, n_steps + 1):
        if dead >= max(_COMPACT_MIN, int(_COMPACT_FRAC * rows.size)) or dead == rows.size:
            keep = status[rows] == -1
            rows = rows[keep]
            x = x[keep]
            dead = 0
            if rows.size == 0:
                return status, entry_step
        x = _rk4_batch(x, dt, L, g)
        classify(k)

    still = rows[status[rows] == -1]
    status[still] = STATUS_TIMEOUT
    return status, entry_step
