import math

import numpy as np
import pytest

try:
    import tomllib as tomli
except ModuleNotFoundError:
    import tomli

from shuttlekit.rewards import (
    SIGMAS_END,
    SIGMAS_START,
    STAGE_PRESETS,
    LengthMismatch,
    StageWeights,
    SwingSigmas,
    r_hold,
    r_swing,
    r_track,
    r_v,
    r_y_align,
    sigma_schedule,
    stage_weights_toml,
)
from shuttlekit.geometry import quat_from_axis_angle

EZ = np.array([0.0, 0.0, 1.0])


class TestTrack:
    def test_plateau(self):
        assert r_track(0.0) == 1.0
        assert r_track(0.3) == 1.0
        assert r_track(0.2999) == 1.0

    def test_decay_value(self):
        assert r_track(0.55) == pytest.approx(math.exp(-1.0), abs=1e-12)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            r_track(-0.01)

    def test_monotone_beyond_plateau(self):
        d = np.linspace(0.3, 2.0, 50)
        vals = [r_track(x) for x in d]
        assert all(a > b for a, b in zip(vals, vals[1:]))


class TestSpeedTerm:
    def test_reference_value(self):
        assert r_v(3.0, 3.0) == pytest.approx(1.0 - math.exp(-1.0), abs=1e-12)

    def test_retreating_racket_scores_zero(self):
        assert r_v(-2.0) == 0.0
        assert r_v(0.0) == 0.0

    def test_five_mps_clears_80_percent(self):
        assert r_v(5.0, 3.0) > 0.8
        assert r_v(5.0, 3.0) == pytest.approx(1.0 - math.exp(-5.0 / 3.0))


class TestSwing:
    def test_perfect_pose_no_speed(self):
        s = SwingSigmas(0.1, 1.0, 3.0)
        assert r_swing(0.0, 0.0, np.zeros(3), EZ, s) == 1.0

    def test_position_enters_squared(self):
        # e_pos^2 / sigma_p = 0.01 / 0.1
        s = SwingSigmas(0.1, 1.0, 3.0)
        val = r_swing(0.1, 0.0, np.zeros(3), EZ, s)
        assert val == pytest.approx(math.exp(-0.1), abs=1e-12)

    def test_orientation_enters_linearly(self):
        s = SwingSigmas(0.1, 1.0, 3.0)
        val = r_swing(0.0, 0.25, np.zeros(3), EZ, s)
        assert val == pytest.approx(math.exp(-0.25), abs=1e-12)

    def test_speed_bonus(self):
        s = SwingSigmas(0.1, 1.0, 3.0)
        val = r_swing(0.0, 0.0, 3.0 * EZ, EZ, s)
        assert val == pytest.approx(1.0 + 0.3 * (1.0 - math.exp(-1.0)),
                                    abs=1e-12)

    def test_monotonicities(self):
        s = SwingSigmas(0.5, 2.0, 3.0)
        base = r_swing(0.1, 0.1, 2.0 * EZ, EZ, s)
        assert r_swing(0.2, 0.1, 2.0 * EZ, EZ, s) < base
        assert r_swing(0.1, 0.2, 2.0 * EZ, EZ, s) < base
        assert r_swing(0.1, 0.1, 3.0 * EZ, EZ, s) > base

    def test_sigmas_validated(self):
        with pytest.raises(ValueError):
            SwingSigmas(0.0, 1.0, 3.0)


class TestYAlign:
    def test_identity(self):
        q = np.array([0.0, 0.0, 0.0, 1.0])
        assert r_y_align(q) == pytest.approx(1.0, abs=1e-12)

    def test_quarter_turn_about_z(self):
        q = quat_from_axis_angle(EZ, math.pi / 2)
        assert r_y_align(q) == pytest.approx(0.0, abs=1e-12)

    def test_eighth_turn(self):
        q = quat_from_axis_angle(EZ, math.pi / 4)
        assert r_y_align(q) == pytest.approx(0.5, abs=1e-12)

    def test_flip_invariant(self):
        q = quat_from_axis_angle(EZ, math.pi)
        assert r_y_align(q) == pytest.approx(1.0, abs=1e-12)


class TestHold:
    def test_zero_at_hold_pose(self):
        q = np.array([0.1, -0.4, 2.0])
        assert r_hold(q, q) == 0.0

    def test_single_joint_offset(self):
        q = np.zeros(5)
        q2 = q.copy()
        q2[3] = 0.5
        assert r_hold(q2, q) == pytest.approx(-0.25, abs=1e-12)

    def test_permutation_consistent(self):
        rng = np.random.default_rng(0)
        qa, qh = rng.normal(size=7), rng.normal(size=7)
        perm = rng.permutation(7)
        assert r_hold(qa, qh) == pytest.approx(r_hold(qa[perm], qh[perm]),
                                               abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(LengthMismatch):
            r_hold(np.zeros(5), np.zeros(6))


class TestSchedule:
    def test_endpoints_exact(self):
        assert sigma_schedule(0.0) == SIGMAS_START
        assert sigma_schedule(1.0) == SIGMAS_END
        assert sigma_schedule(0.0).sigma_p == 2.0
        assert sigma_schedule(1.0).sigma_p == 0.1

    def test_geometric_midpoint(self):
        mid = sigma_schedule(0.5)
        assert mid.sigma_p == pytest.approx(math.sqrt(2.0 * 0.1), abs=1e-12)
        assert mid.sigma_r == pytest.approx(math.sqrt(8.0 * 1.0), abs=1e-12)

    def test_held_sigma_stays_exact(self):
        for p in (0.1, 0.25, 0.5, 0.9):
            assert sigma_schedule(p).sigma_v == 3.0

    def test_monotone_in_progress(self):
        grid = np.linspace(0.0, 1.0, 21)
        ps = [sigma_schedule(p).sigma_p for p in grid]
        rs = [sigma_schedule(p).sigma_r for p in grid]
        assert all(a > b for a, b in zip(ps, ps[1:]))
        assert all(a > b for a, b in zip(rs, rs[1:]))

    def test_progress_validated(self):
        with pytest.raises(ValueError):
            sigma_schedule(-0.1)
        with pytest.raises(ValueError):
            sigma_schedule(1.1)


class TestStageWeights:
    def test_preset_table(self):
        assert STAGE_PRESETS["S1"].active_terms() == {"target_approach": 30.0}
        assert STAGE_PRESETS["S2"].active_terms() == {
            "swing": 4000.0, "y_align": 5.0, "hold": 10.0,
            "target_approach": 15.0}
        assert STAGE_PRESETS["S3"].active_terms() == {
            "swing": 4000.0, "y_align": 5.0, "hold": 10.0}

    def test_unknown_stage_rejected(self):
        with pytest.raises(ValueError):
            StageWeights("S4", swing=1.0)

    def test_toml_round_trip(self):
        text = stage_weights_toml()
        data = tomli.loads(text)["stage_weights"]
        assert set(data) == {"S1", "S2", "S3"}
        for stage, weights in STAGE_PRESETS.items():
            assert data[stage] == weights.active_terms()

    def test_toml_rejects_mislabeled_preset(self):
        with pytest.raises(ValueError):
            stage_weights_toml({"S1": StageWeights("S2", swing=1.0)})
