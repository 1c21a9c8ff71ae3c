import math

import numpy as np
import pytest

from shuttlekit.dynamics import (
    DEFAULT_DT,
    AeroParams,
    NonTermination,
    ShuttleState,
    Trajectory,
    accel,
    drag_jacobian,
    simulate,
    state_at_time_exact,
    step,
    step_vector,
)

BALLISTIC = AeroParams(L=math.inf)


def state(p, v):
    return ShuttleState(p=np.asarray(p, float), v=np.asarray(v, float))


class TestAccel:
    def test_at_rest_gravity_only(self, params):
        a = accel(state([0, 0, 0], [0, 0, 0]), params)
        assert np.allclose(a, [0.0, 0.0, -9.81])

    def test_terminal_speed_balances(self, params):
        vt = params.terminal_speed
        assert vt == pytest.approx(math.sqrt(9.81 * 3.4))
        a = accel(state([0, 0, 0], [0, 0, -vt]), params)
        assert np.allclose(a, 0.0, atol=1e-12)

    def test_horizontal_drag_value(self, params):
        a = accel(state([0, 0, 0], [10, 0, 0]), params)
        # |v| v / L = 100 / 3.4 opposing x
        assert a[0] == pytest.approx(-100.0 / 3.4)
        assert a[1] == 0.0
        assert a[2] == pytest.approx(-9.81)


class TestDragJacobian:
    def test_axis_aligned_value(self, params):
        J = drag_jacobian(np.array([3.4, 0.0, 0.0]), params)
        assert np.allclose(J, np.diag([-2.0, -1.0, -1.0]), atol=1e-12)

    def test_zero_velocity_convention(self, params):
        assert np.array_equal(drag_jacobian(np.zeros(3), params), np.zeros((3, 3)))

    def test_eigenstructure(self, params):
        rng = np.random.default_rng(7)
        for _ in range(50):
            v = rng.normal(0, 8, 3)
            s = np.linalg.norm(v)
            if s < 1e-6:
                continue
            J = drag_jacobian(v, params)
            assert np.allclose(J, J.T, atol=1e-12)
            w = np.sort(np.linalg.eigvalsh(J))
            expect = np.sort([-2 * s / params.L, -s / params.L, -s / params.L])
            assert np.allclose(w, expect, rtol=1e-9)

    def test_matches_finite_differences(self, params):
        rng = np.random.default_rng(11)
        h = 1e-6
        for _ in range(100):
            v = rng.normal(0, 10, 3)
            if np.linalg.norm(v) < 0.1:
                continue
            J = drag_jacobian(v, params)
            for j in range(3):
                dv = np.zeros(3)
                dv[j] = h
                col = (accel(state([0, 0, 0], v + dv), params)
                       - accel(state([0, 0, 0], v - dv), params)) / (2 * h)
                col[2] += 0.0  # gravity cancels in the difference
                assert np.allclose(col, J[:, j], rtol=1e-5, atol=1e-7)


class TestStep:
    def test_ballistic_closed_form(self):
        s = step(state([0, 0, 0], [1, 0, 0]), 0.1, BALLISTIC)
        assert np.allclose(s.p, [0.1, 0.0, -0.5 * 9.81 * 0.01], atol=1e-12)
        assert np.allclose(s.v, [1.0, 0.0, -0.981], atol=1e-12)

    def test_rejects_nonpositive_dt(self, params):
        with pytest.raises(ValueError):
            step(state([0, 0, 0], [1, 0, 0]), 0.0, params)
        with pytest.raises(ValueError):
            step(state([0, 0, 0], [1, 0, 0]), -0.01, params)

    def test_terminal_velocity_fixed_point(self, params):
        v0 = np.array([0.0, 0.0, -params.terminal_speed])
        s = step(state([0, 0, 5], v0), DEFAULT_DT, params)
        assert np.allclose(s.v, v0, atol=1e-12)

    def test_step_vector_matches_step(self, params):
        x = np.array([1.0, -0.5, 2.0, -15.0, 1.0, 9.0])
        s = step(ShuttleState.from_vector(x), DEFAULT_DT, params)
        assert np.array_equal(s.as_vector(), step_vector(x, DEFAULT_DT, params))

    def test_fourth_order_convergence(self, params):
        s0 = state([0, 0, 2], [-18, 1, 10])

        def integrate(dt, t_end=0.4):
            s = s0
            for _ in range(round(t_end / dt)):
                s = step(s, dt, params)
            return s.as_vector()

        ref = integrate(0.4 / 512)
        e1 = np.linalg.norm(integrate(0.4 / 16) - ref)
        e2 = np.linalg.norm(integrate(0.4 / 32) - ref)
        assert 10.0 < e1 / e2 < 24.0  # ~2^4 for RK4


class TestSimulate:
    def test_vertical_drop_lands(self, params):
        traj = simulate(state([0, 0, 1], [0, 0, 0]), params)
        assert traj.states[-1, 2] <= 0.0
        assert traj.states[-1, 5] <= 0.0

    def test_ballistic_drop_time(self):
        traj = simulate(state([0, 0, 1], [0, 0, 0]), BALLISTIC, dt=1e-4)
        assert traj.duration == pytest.approx(math.sqrt(2.0 / 9.81), abs=2e-4)

    def test_vertical_fall_speed_approaches_terminal(self, params):
        """Falling speed follows the 1-D law and rises monotonically to
        sqrt(g L); oracle integrates dw/dt = g - w^2/L at dt/100."""
        dt = DEFAULT_DT
        traj = simulate(state([0, 0, 30], [0, 0, 0]), params, dt,
                        max_time=6.0)
        speeds = np.linalg.norm(traj.velocities, axis=1)
        assert np.all(np.diff(speeds) >= -1e-12)
        assert speeds[-1] <= params.terminal_speed + 1e-9
        assert speeds[-1] == pytest.approx(params.terminal_speed, abs=1e-3)

        w = 0.0
        h = dt / 100.0
        f = lambda u: params.g - u * u / params.L
        for k in range(len(traj) - 1):
            for _ in range(100):
                k1 = f(w)
                k2 = f(w + 0.5 * h * k1)
                k3 = f(w + 0.5 * h * k2)
                k4 = f(w + h * k3)
                w += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            assert speeds[k + 1] == pytest.approx(w, abs=1e-9)

    def test_launch_below_floor_climbing_survives(self, params):
        # corpus launches may start under the court plane on the way up
        traj = simulate(state([6, 0, -0.4], [-18, 0, 14]), params)
        assert len(traj) > 10
        assert traj.positions[:, 2].max() > 1.0

    def test_plane_stop(self, params):
        traj = simulate(state([0, 0, 3], [0, 0, 0]), params, stop="plane",
                        plane_z=1.5)
        assert traj.states[-1, 2] <= 1.5
        assert traj.states[-2, 2] > 1.5

    def test_non_termination(self, params):
        with pytest.raises(NonTermination):
            simulate(state([0, 0, 5], [0, 0, 40]), params, max_time=0.5)

    def test_max_time_stop(self, params):
        traj = simulate(state([0, 0, 5], [0, 0, 40]), params,
                        stop="max_time", max_time=0.5)
        assert traj.duration == pytest.approx(0.5)


class TestTrajectory:
    def test_uniform_spacing_enforced(self):
        with pytest.raises(ValueError):
            Trajectory(dt=0.1, times=np.array([0.0, 0.1, 0.3]),
                       states=np.zeros((3, 6)))

    def test_state_at_time_interpolates(self, params):
        traj = simulate(state([0, 0, 2], [-15, 0, 8]), params)
        mid = 0.5 * (traj.times[3] + traj.times[4])
        s = traj.state_at_time(mid)
        assert np.allclose(s.as_vector(),
                           0.5 * (traj.states[3] + traj.states[4]))

    def test_state_at_time_exact_on_grid(self, params):
        traj = simulate(state([0, 0, 2], [-15, 0, 8]), params)
        s = state_at_time_exact(traj, float(traj.times[5]), params)
        assert np.array_equal(s.as_vector(), traj.states[5])

    def test_state_at_time_exact_off_grid(self, params):
        """Partial-step sampling beats chord interpolation by orders of
        magnitude; oracle is a fine integration to the same instant."""
        traj = simulate(state([0, 0, 2], [-15, 0, 8]), params)
        t = float(traj.times[10]) + 0.4 * traj.dt
        fine = ShuttleState.from_vector(traj.states[10])
        h = 0.4 * traj.dt / 64
        for _ in range(64):
            fine = step(fine, h, params)
        got = state_at_time_exact(traj, t, params).as_vector()
        assert np.allclose(got, fine.as_vector(), atol=1e-10)
        chord = traj.state_at_time(t).as_vector()
        assert (np.linalg.norm(got - fine.as_vector())
                < 0.01 * np.linalg.norm(chord - fine.as_vector()))
