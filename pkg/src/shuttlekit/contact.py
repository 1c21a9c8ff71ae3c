"""Racket impact model and hit-quality metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import TargetTuple
from .geometry import angle_between_z_axes, quat_z_axis

POS_THRESHOLD = 0.10
ORI_THRESHOLD = 0.2


class NonUnitNormal(ValueError):
    """Racket face normal is not unit length."""


@dataclass(frozen=True)
class RacketState:
    """Racket pose and velocity at the contact instant. The face normal is
    the -z axis of q_ee (the frame's +z points along the incoming flight)."""

    p_ee: np.ndarray
    q_ee: np.ndarray
    v_ee: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p_ee, dtype=float).reshape(3)
        q = np.asarray(self.q_ee, dtype=float).reshape(4)
        v = np.asarray(self.v_ee, dtype=float).reshape(3)
        n = float(np.linalg.norm(q))
        if abs(n - 1.0) > 1e-6:
            raise ValueError(f"q_ee must be a unit quaternion, |q| = {n}")
        object.__setattr__(self, "p_ee", p)
        object.__setattr__(self, "q_ee", q / n)
        object.__setattr__(self, "v_ee", v)

    @property
    def normal(self) -> np.ndarray:
        return -quat_z_axis(self.q_ee)


@dataclass(frozen=True)
class HitQuality:
    e_pos: float
    e_ori: float
    success: bool


def reflect(v_in, v_racket, n, restitution: float = 1.0) -> np.ndarray:
    """Impact velocity exchange along the face normal.

    v_out = v_in - (1 + e)(v_in . n) n + (1 + e)(v_racket . n) n

    with e = 1 (elastic, racket inertia dominating) this doubles the normal
    closing speed relative to the racket; tangential components pass through
    untouched. e < 1 damps the normal exchange only.
    """
    v_in = np.asarray(v_in, dtype=float).reshape(3)
    v_racket = np.asarray(v_racket, dtype=float).reshape(3)
    n = np.asarray(n, dtype=float).reshape(3)
    if abs(float(np.linalg.norm(n)) - 1.0) > 1e-9:
        raise NonUnitNormal(f"|n| = {np.linalg.norm(n)}")
    if not 0.0 <= restitution <= 1.0:
        raise ValueError(f"restitution must be in [0, 1], got {restitution}")
    k = 1.0 + restitution
    return v_in - k * np.dot(v_in, n) * n + k * np.dot(v_racket, n) * n


def hit_quality(racket: RacketState, target: TargetTuple,
                pos_threshold: float = POS_THRESHOLD,
                ori_threshold: float = ORI_THRESHOLD) -> HitQuality:
    """Position and z-axis angle errors against the commanded target.

    The angle metric ignores roll about the racket normal. Threshold
    comparisons are inclusive, so errors exactly on the limit count as hits.
    """
    e_pos = float(np.linalg.norm(racket.p_ee - target.p_star))
    e_ori = angle_between_z_axes(racket.q_ee, target.q_star)
    ok = e_pos <= pos_threshold and e_ori <= ori_threshold
    return HitQuality(e_pos=e_pos, e_ori=e_ori, success=ok)
