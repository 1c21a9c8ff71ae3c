"""Hit-phase reward reference math.

Pure scalar functions for the racket-strike reward terms, the sigma
tightening schedule used during training, and the per-stage weight
presets. Everything here is deterministic and side-effect free; an RL
stack is expected to call these with quantities it already tracks
(end-effector errors, racket velocity, joint vectors).

Locomotion shaping terms (base height, feet contact, and so on) need
full robot state and are deliberately not implemented; the stage
presets only carry the terms this package can compute plus the
target-approach weight, so a consumer can splice them into a larger
reward table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import quat_y_axis

__all__ = [
    "LengthMismatch",
    "SwingSigmas",
    "StageWeights",
    "SIGMAS_START",
    "SIGMAS_END",
    "STAGE_PRESETS",
    "r_track",
    "r_v",
    "r_swing",
    "r_y_align",
    "r_hold",
    "sigma_schedule",
    "stage_weights_toml",
]

#: Distance (m) below which the tracking reward saturates at 1.
TRACK_PLATEAU = 0.3
#: Weight of the racket-speed bonus inside the swing reward.
SPEED_BONUS_WEIGHT = 0.3

_STAGES = ("S1", "S2", "S3")


class LengthMismatch(ValueError):
    """Joint vectors of different lengths were compared."""


@dataclass(frozen=True)
class SwingSigmas:
    """Tolerance scales for the swing reward.

    sigma_p divides the squared position error, sigma_r the (linear)
    orientation error, sigma_v the closing speed. All must be positive.
    """

    sigma_p: float
    sigma_r: float
    sigma_v: float

    def __post_init__(self) -> None:
        for name in ("sigma_p", "sigma_r", "sigma_v"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be > 0")


#: Wide tolerances used at the start of training.
SIGMAS_START = SwingSigmas(sigma_p=2.0, sigma_r=8.0, sigma_v=3.0)
#: Tight tolerances reached at the end of the schedule.
SIGMAS_END = SwingSigmas(sigma_p=0.1, sigma_r=1.0, sigma_v=3.0)


@dataclass(frozen=True)
class StageWeights:
    """Weights for the implemented reward terms in one training stage.

    A None weight means the term is inactive in that stage (matching the
    published table, where S1 has no hit terms and S3 drops the
    target-approach shaping).
    """

    stage: str
    swing: float | None = None
    y_align: float | None = None
    hold: float | None = None
    target_approach: float | None = None

    def __post_init__(self) -> None:
        if self.stage not in _STAGES:
            raise ValueError(f"stage must be one of {_STAGES}, got {self.stage!r}")

    def active_terms(self) -> dict[str, float]:
        """Name -> weight for the terms that are switched on."""
        pairs = (
            ("swing", self.swing),
            ("y_align", self.y_align),
            ("hold", self.hold),
            ("target_approach", self.target_approach),
        )
        return {name: w for name, w in pairs if w is not None}


STAGE_PRESETS: dict[str, StageWeights] = {
    "S1": StageWeights("S1", target_approach=30.0),
    "S2": StageWeights("S2", swing=4000.0, y_align=5.0, hold=10.0, target_approach=15.0),
    "S3": StageWeights("S3", swing=4000.0, y_align=5.0, hold=10.0),
}


def r_track(d: float) -> float:
    """Target-approach reward: 1 inside a 0.3 m plateau, exponential decay beyond.

    d is the horizontal distance (m) from the robot to its commanded
    standing region and must be non-negative.
    """
    if d < 0.0:
        raise ValueError("distance must be >= 0")
    return math.exp(-4.0 * max(d - TRACK_PLATEAU, 0.0))


def r_v(closing_speed: float, sigma_v: float = 3.0) -> float:
    """Racket-speed term: saturating bonus on the closing speed along n*.

    Negative closing speeds (racket retreating) score 0.
    """
    return 1.0 - math.exp(-max(0.0, closing_speed) / sigma_v)


def r_swing(
    e_pos: float,
    e_ori: float,
    v_ee: np.ndarray,
    n_star: np.ndarray,
    sigmas: SwingSigmas,
) -> float:
    """Strike reward evaluated at the commanded contact instant.

    The pose factor is exp(-e_pos^2 / sigma_p) * exp(-e_ori / sigma_r);
    note the deliberate asymmetry where the position error enters
    squared but the orientation error enters linearly. On top of that
    sits 0.3 * r_v using the racket velocity component along the target
    face normal n_star (a unit vector).
    """
    pose = math.exp(-(e_pos * e_pos) / sigmas.sigma_p) * math.exp(-e_ori / sigmas.sigma_r)
    closing = float(np.dot(np.asarray(v_ee, dtype=float), np.asarray(n_star, dtype=float)))
    return pose + SPEED_BONUS_WEIGHT * r_v(closing, sigmas.sigma_v)


def r_y_align(q_ee: np.ndarray) -> float:
    """Squared alignment of the racket short-edge (y) axis with world y.

    Insensitive to the sign of the axis, so a racket flipped 180 deg
    about z scores the same.
    """
    y_axis = quat_y_axis(np.asarray(q_ee, dtype=float))
    return float(y_axis[1] ** 2)


def r_hold(q_arm: np.ndarray, q_hold: np.ndarray) -> float:
    """Negative squared deviation of the arm joints from a holding pose."""
    qa = np.asarray(q_arm, dtype=float)
    qh = np.asarray(q_hold, dtype=float)
    if qa.shape != qh.shape:
        raise LengthMismatch(f"joint vectors differ in shape: {qa.shape} vs {qh.shape}")
    diff = qa - qh
    return float(-np.dot(diff, diff))


def sigma_schedule(
    progress: float,
    start: SwingSigmas = SIGMAS_START,
    end: SwingSigmas = SIGMAS_END,
) -> SwingSigmas:
    """Geometric (log-linear) interpolation of the swing tolerances.

    progress=0 returns start exactly and progress=1 returns end exactly;
    in between each sigma follows sigma_start^(1-p) * sigma_end^p, which
    tightens by a uniform relative factor per unit of progress.
    """
    if not 0.0 <= progress <= 1.0:
        raise ValueError("progress must lie in [0, 1]")
    # Endpoints bypass the pow() round trip so they compare equal exactly.
    if progress == 0.0:
        return start
    if progress == 1.0:
        return end

    def geo(a: float, b: float) -> float:
        if a == b:  # held constant (sigma_v in the default schedule)
            return a
        return math.exp((1.0 - progress) * math.log(a) + progress * math.log(b))

    return SwingSigmas(
        sigma_p=geo(start.sigma_p, end.sigma_p),
        sigma_r=geo(start.sigma_r, end.sigma_r),
        sigma_v=geo(start.sigma_v, end.sigma_v),
    )


def stage_weights_toml(presets: dict[str, StageWeights] | None = None) -> str:
    """Render the stage presets as a TOML fragment.

    One [stage_weights.<stage>] table per stage, listing only the active
    terms. The output parses with any TOML reader and round-trips the
    preset values exactly.
    """
    if presets is None:
        presets = STAGE_PRESETS
    lines: list[str] = []
    for stage in sorted(presets, key=_STAGES.index):
        weights = presets[stage]
        if weights.stage != stage:
            raise ValueError(f"preset key {stage!r} does not match stage {weights.stage!r}")
        lines.append(f"[stage_weights.{stage}]")
        for name, value in weights.active_terms().items():
            lines.append(f"{name} = {value!r}")
        lines.append("")
    return "\n".join(lines)
