"""Unicycle kinematics, feedback linearization, point-B tracking."""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cswarm import units
from cswarm.diffdrive import (
    DEFAULT_OMEGA_MAX,
    DEFAULT_V_MAX,
    RobotLimits,
    RobotState,
    feedback_linearize,
    kinematics_step,
    observe,
    point_b,
    quantize,
    track_reference,
    tracking_command,
)
from cswarm.domain import wrapped_disp

angle = st.floats(min_value=-np.pi, max_value=np.pi - 1e-9, allow_nan=False)
speed = st.floats(min_value=-50.0, max_value=50.0, allow_nan=False)


class TestKinematics:
    def test_heading_aligned_step(self):
        s = RobotState((0.0, 0.0), heading=np.pi / 2)
        out = kinematics_step(s, v=1.0, omega=0.0, dt=0.1)
        np.testing.assert_allclose(out.position, [0.0, 0.1], atol=1e-12)
        assert out.heading == pytest.approx(np.pi / 2)

    def test_pure_rotation_stays_put(self):
        s = RobotState((0.3, -0.4), heading=0.0)
        out = kinematics_step(s, v=0.0, omega=2.0, dt=0.05)
        np.testing.assert_allclose(out.position, (0.3, -0.4), atol=1e-15)
        assert out.heading == pytest.approx(0.1)

    def test_position_wraps(self):
        s = RobotState((np.pi - 0.005, 0.0), heading=0.0)
        out = kinematics_step(s, v=1.0, omega=0.0, dt=0.01)
        assert out.position[0] == pytest.approx(-np.pi + 0.005, abs=1e-12)

    def test_heading_wraps(self):
        s = RobotState((0.0, 0.0), heading=np.pi - 0.01)
        out = kinematics_step(s, v=0.0, omega=1.0, dt=0.02)
        assert out.heading == pytest.approx(-np.pi + 0.01, abs=1e-12)

    def test_command_recorded_on_the_state(self):
        out = kinematics_step(RobotState((0, 0), 0.0), v=0.7, omega=-0.2, dt=0.01)
        assert (out.cmd_v, out.cmd_omega) == (0.7, -0.2)

    @given(theta=angle, v=speed, omega=speed)
    def test_no_lateral_slip(self, theta, v, omega):
        # the wheel axis cannot move sideways: each Euler step displaces
        # the midpoint exactly along the old heading
        s = RobotState((0.0, 0.0), heading=theta)
        out = kinematics_step(s, v=v, omega=omega, dt=0.01)
        disp = wrapped_disp(out.position, s.position)
        lateral = -disp[0] * np.sin(theta) + disp[1] * np.cos(theta)
        assert abs(lateral) <= 1e-12

    def test_dt_must_be_positive(self):
        with pytest.raises(ValueError, match="dt"):
            kinematics_step(RobotState((0, 0), 0.0), 1.0, 0.0, 0.0)

    def test_state_validation(self):
        with pytest.raises(ValueError, match="position"):
            RobotState((0.0,), heading=0.0)
        with pytest.raises(ValueError, match="finite"):
            RobotState((0.0, np.inf), heading=0.0)


class TestPointB:
    def test_sits_ahead_of_the_axis(self):
        s = RobotState((0.0, 0.0), heading=np.pi / 2)
        np.testing.assert_allclose(point_b(s, 0.1), [0.0, 0.1], atol=1e-12)

    def test_wraps_like_any_point(self):
        s = RobotState((np.pi - 0.01, 0.0), heading=0.0)
        assert point_b(s, 0.05)[0] == pytest.approx(-np.pi + 0.04, abs=1e-12)


class TestFeedbackLinearization:
    limits = RobotLimits()

    def test_aligned_velocity_is_pure_drive(self):
        v, omega = feedback_linearize(0.0, [1.0, 0.0], self.limits)
        assert (v, omega) == pytest.approx((1.0, 0.0))

    def test_crosswise_velocity_becomes_rotation(self):
        lim = RobotLimits(lookahead=0.05)
        v, omega = feedback_linearize(np.pi / 2, [1.0, 0.0], lim)
        assert v == pytest.approx(0.0, abs=1e-12)
        assert omega == pytest.approx(-20.0)

    def test_zero_velocity_zero_command(self):
        assert feedback_linearize(1.2, [0.0, 0.0], self.limits) == (0.0, 0.0)

    @given(theta=angle, vx=speed, vy=speed)
    def test_saturation_respects_limits(self, theta, vx, vy):
        lim = RobotLimits(v_max=2.0, omega_max=10.0, lookahead=0.05)
        v, omega = feedback_linearize(theta, [vx, vy], lim)
        assert abs(v) <= lim.v_max + 1e-12
        assert abs(omega) <= lim.omega_max + 1e-9

    @given(theta=angle, vx=speed, vy=speed)
    def test_saturation_preserves_direction(self, theta, vx, vy):
        lim = RobotLimits(v_max=1.0, omega_max=5.0, lookahead=0.05)
        raw_v = vx * np.cos(theta) + vy * np.sin(theta)
        raw_omega = (vy * np.cos(theta) - vx * np.sin(theta)) / lim.lookahead
        v, omega = feedback_linearize(theta, [vx, vy], lim)
        assert np.sign(v) in (0.0, np.sign(raw_v))
        assert np.sign(omega) in (0.0, np.sign(raw_omega))
        # joint scaling keeps the ratio
        if abs(raw_omega) > 1e-9 and abs(omega) > 1e-12:
            assert v / omega == pytest.approx(raw_v / raw_omega, rel=1e-9)

    def test_unsaturated_commands_invert_the_point_b_map(self):
        # point-B velocity from (v, omega) must reproduce the request
        theta, b = 0.7, 0.05
        lim = RobotLimits(lookahead=b)
        target = np.array([0.8, -0.3])
        v, omega = feedback_linearize(theta, target, lim)
        c, s = np.cos(theta), np.sin(theta)
        back = np.array([v * c - b * omega * s, v * s + b * omega * c])
        np.testing.assert_allclose(back, target, atol=1e-12)

    def test_limits_validation(self):
        with pytest.raises(ValueError, match="v_max"):
            RobotLimits(v_max=0.0)
        with pytest.raises(ValueError, match="lookahead"):
            RobotLimits(lookahead=-0.1)

    def test_default_limits_match_the_testbed(self):
        lim = RobotLimits()
        assert lim.v_max == pytest.approx(4 * np.pi)
        assert lim.omega_max == pytest.approx(70.0)
        assert units.mps_to_sim(0.8) == pytest.approx(DEFAULT_V_MAX, abs=1e-12)
        assert units.radps_to_sim(14.0) == pytest.approx(DEFAULT_OMEGA_MAX, abs=1e-12)


class TestTracking:
    def test_at_rest_on_target_commands_nothing(self):
        lim = RobotLimits()
        s = RobotState((0.2, -0.1), heading=0.8)
        target = point_b(s, lim.lookahead)
        v, omega = tracking_command(s, target, [0.0, 0.0], gain=10.0, limits=lim)
        assert v == pytest.approx(0.0, abs=1e-12)
        assert omega == pytest.approx(0.0, abs=1e-12)

    def test_gain_must_be_positive(self):
        with pytest.raises(ValueError, match="gain"):
            tracking_command(RobotState((0, 0), 0.0), [0, 0], [0, 0], 0.0, RobotLimits())

    def test_error_wraps_across_the_seam(self):
        lim = RobotLimits(lookahead=0.05)
        s = RobotState((np.pi - 0.1, 0.0), heading=0.0)
        # target just across the boundary: the short way is forward
        v, _ = tracking_command(s, [-np.pi + 0.1, 0.0], [0.0, 0.0], 10.0, lim)
        assert v > 0

    def test_circular_reference_is_acquired(self):
        # follow a circle of radius pi/2 at angular rate pi/4
        radius, rate, gain, dt = np.pi / 2, np.pi / 4, 10.0, 0.01
        lim = RobotLimits()
        state = RobotState((radius, 0.0), heading=np.pi / 2)

        def reference(t):
            a = rate * t
            pos = radius * np.array([np.cos(a), np.sin(a)])
            vel = radius * rate * np.array([-np.sin(a), np.cos(a)])
            return pos, vel

        worst_late = 0.0
        for k in range(400):  # 4 time units
            pos, vel = reference(k * dt)
            state = track_reference(state, pos, vel, gain, lim, dt)
            if k * dt >= 2.0:
                gap = wrapped_disp(reference((k + 1) * dt)[0], point_b(state, lim.lookahead))
                worst_late = max(worst_late, float(np.hypot(*gap)))
        assert worst_late < 0.05

    def test_straight_line_converges_and_stays(self):
        lim = RobotLimits()
        state = RobotState((0.0, 0.5), heading=0.0)  # offset from the path
        dt, gain = 0.01, 10.0
        vel = np.array([1.0, 0.0])
        for k in range(300):
            pos = np.array([-1.0 + (k * dt) * 1.0, 0.0])
            state = track_reference(state, pos, vel, gain, lim, dt)
        final_gap = wrapped_disp([-1.0 + 3.0, 0.0], point_b(state, lim.lookahead))
        assert np.hypot(*final_gap) < 0.02


class TestWireQuantization:
    def test_nine_decimals(self):
        assert quantize(0.123456789123) == 0.123456789
        assert quantize(-2.0000000004) == -2.0
        assert quantize(1.9999999996) == 2.0

    def test_observe_is_quantized(self):
        s = RobotState((0.1234567891234, -0.9876543219876), heading=0.5555555555555)
        obs = observe(s)
        assert obs.position == (0.123456789, -0.987654322)
        assert obs.heading == 0.555555556

    def test_observe_applies_noise_then_wraps(self):
        s = RobotState((np.pi - 0.01, 0.0), heading=0.0)
        obs = observe(s, noise=(0.02, 0.0, 0.0))
        assert obs.position[0] == pytest.approx(-np.pi + 0.01, abs=1e-9)

    @given(x=st.floats(min_value=-10, max_value=10, allow_nan=False))
    def test_quantize_idempotent(self, x):
        assert quantize(quantize(x)) == quantize(x)
