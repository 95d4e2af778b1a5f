"""Environment equations against hand-derived values and invariants."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qmpc.core import RngStream
from qmpc.dynamics import (CatchGeometry, PendulumGeometry, catch_cost,
                           catch_observe, catch_reset, catch_spec, catch_step,
                           env_from_spec, make_env, pendulum_cost,
                           pendulum_energy, pendulum_observe, pendulum_reset,
                           pendulum_spec, pendulum_step, sample_model_params,
                           validate_distribution, validate_env_params,
                           wrap_angle)

TRUE = {"m": 1.0, "l": 1.0}


class TestWrapAngle:
    def test_identity_inside_range(self):
        assert wrap_angle(0.5) == pytest.approx(0.5, abs=1e-15)

    def test_boundary_maps_to_pi(self):
        assert wrap_angle(np.pi) == pytest.approx(np.pi, abs=1e-15)
        assert wrap_angle(-np.pi) == pytest.approx(np.pi, abs=1e-15)

    def test_just_past_pi_wraps_negative(self):
        assert wrap_angle(np.pi + 0.1) == pytest.approx(-np.pi + 0.1, abs=1e-12)

    def test_full_turn(self):
        assert wrap_angle(2.0 * np.pi) == pytest.approx(0.0, abs=1e-12)

    @given(st.floats(min_value=-50.0, max_value=50.0),
           st.integers(min_value=-3, max_value=3))
    @settings(max_examples=100)
    def test_range_and_periodicity(self, x, k):
        w = wrap_angle(x)
        assert -np.pi < w <= np.pi + 1e-12
        shifted = wrap_angle(x + 2.0 * np.pi * k)
        assert abs(shifted - w) < 1e-9 or abs(abs(shifted - w) - 2 * np.pi) < 1e-9


class TestPendulumStep:
    def test_gravity_only_oracle(self):
        # accel = (3*9.81/2)*sin(pi/2) = 14.715; rate gains dt*accel
        s = pendulum_step(np.array([np.pi / 2, 0.0]), np.array([0.0]), TRUE, 0.05)
        assert s[0] == pytest.approx(np.pi / 2, abs=1e-12)
        assert s[1] == pytest.approx(0.73575, abs=1e-12)

    def test_gravity_plus_torque_oracle(self):
        # accel = 14.715 + 3*1 = 17.715
        s = pendulum_step(np.array([np.pi / 2, 0.0]), np.array([1.0]), TRUE, 0.05)
        assert s[1] == pytest.approx(0.88575, abs=1e-12)

    def test_torque_clamped_to_bound(self):
        big = pendulum_step(np.array([np.pi / 2, 0.0]), np.array([50.0]), TRUE, 0.05)
        at_bound = pendulum_step(np.array([np.pi / 2, 0.0]), np.array([2.0]), TRUE, 0.05)
        np.testing.assert_array_equal(big, at_bound)
        assert big[1] == pytest.approx(0.05 * (14.715 + 6.0), abs=1e-12)

    def test_speed_clamped(self):
        s = pendulum_step(np.array([np.pi / 2, 7.9]), np.array([2.0]), TRUE, 0.05)
        assert s[1] == pytest.approx(8.0)

    def test_angle_advances_with_old_rate(self):
        s = pendulum_step(np.array([0.0, 1.0]), np.array([0.0]), TRUE, 0.05)
        assert s[0] == pytest.approx(0.05, abs=1e-15)

    def test_upright_equilibrium(self):
        s = pendulum_step(np.array([0.0, 0.0]), np.array([0.0]), TRUE, 0.05)
        np.testing.assert_allclose(s, [0.0, 0.0], atol=1e-15)

    def test_mass_scales_torque_response(self):
        heavy = pendulum_step(np.array([0.0, 0.0]), np.array([1.0]),
                              {"m": 2.0, "l": 1.0}, 0.05)
        light = pendulum_step(np.array([0.0, 0.0]), np.array([1.0]), TRUE, 0.05)
        assert heavy[1] == pytest.approx(light[1] / 2.0, abs=1e-12)

    def test_batched_matches_single(self):
        states = np.array([[0.5, 1.0], [2.0, -3.0], [-1.0, 0.2]])
        actions = np.array([[1.0], [-2.0], [0.3]])
        batched = pendulum_step(states, actions, TRUE, 0.05)
        for i in range(3):
            single = pendulum_step(states[i], actions[i], TRUE, 0.05)
            np.testing.assert_allclose(batched[i], single, atol=1e-15)

    def test_non_finite_state_rejected(self):
        with pytest.raises(ValueError):
            pendulum_step(np.array([np.nan, 0.0]), np.array([0.0]), TRUE, 0.05)

    def test_energy_drift_regression(self):
        # explicit first-order integration pumps energy into the unforced
        # swing; values frozen for m=l=1, start (2.0, 0), 40 steps of 0.05
        s = np.array([2.0, 0.0])
        e0 = pendulum_energy(s, TRUE)
        for _ in range(40):
            s = pendulum_step(s, np.array([0.0]), TRUE, 0.05)
        drift_coarse = pendulum_energy(s, TRUE) - e0
        assert drift_coarse == pytest.approx(4.519042732652283, abs=1e-9)
        np.testing.assert_allclose(
            s, [1.0483423060875938, 0.4257242601856802], atol=1e-9)

        s = np.array([2.0, 0.0])
        for _ in range(2000):
            s = pendulum_step(s, np.array([0.0]), TRUE, 0.001)
        drift_fine = pendulum_energy(s, TRUE) - e0
        assert 0.0 < drift_fine < drift_coarse / 20.0  # roughly O(dt)


class TestPendulumCostObserve:
    def test_cost_oracle(self):
        assert pendulum_cost(np.array([np.pi, 1.0])) == pytest.approx(
            np.pi ** 2 + 0.1, abs=1e-12)

    def test_cost_zero_at_goal(self):
        assert pendulum_cost(np.array([0.0, 0.0])) == 0.0

    def test_cost_wraps_angle(self):
        assert pendulum_cost(np.array([2.0 * np.pi, 0.0])) == pytest.approx(0.0, abs=1e-12)

    def test_observation_components(self):
        obs = pendulum_observe(np.array([0.3, -2.0]))
        np.testing.assert_allclose(obs, [np.cos(0.3), np.sin(0.3), -2.0], atol=1e-15)

    def test_reset_within_bounds(self):
        for i in range(20):
            s = pendulum_reset(RngStream(i))
            assert -np.pi < s[0] <= np.pi
            assert -1.0 <= s[1] <= 1.0

    def test_success_window(self):
        env = make_env("pendulum")
        steps = env.spec.episode_steps
        good = np.zeros((steps + 1, 2))
        good[:, 0] = 0.1
        assert env.episode_success(good)
        bad = good.copy()
        bad[-3, 0] = 0.5  # violation inside the final window
        assert not env.episode_success(bad)
        early_bad = good.copy()
        early_bad[10, 0] = 3.0  # violation long before the window
        assert env.episode_success(early_bad)


CATCH_TRUE = {"ball_mass": 0.058, "stiffness": 40.0}


class TestCatch:
    def test_free_fall_catch_from_directly_above(self):
        # ball starts on the taut circle straight above the cup; with no
        # force it falls through the cup mouth slowly enough to be caught
        env = make_env("catch")
        state = np.zeros(env.spec.state_dim)
        state[0:2] = [0.0, env.spec.geometry.rest_length]
        for _ in range(30):
            state = catch_step(state, np.zeros(2), CATCH_TRUE, env.spec.dt)
        assert state[8] == 1.0
        np.testing.assert_allclose(state[0:2], state[4:6], atol=1e-12)
        assert catch_cost(state) == 0.0

    def test_caught_ball_rides_with_cup(self):
        env = make_env("catch")
        state = np.zeros(env.spec.state_dim)
        state[0:2] = [0.0, env.spec.geometry.rest_length]
        for _ in range(30):
            state = catch_step(state, np.zeros(2), CATCH_TRUE, env.spec.dt)
        assert state[8] == 1.0
        for _ in range(20):
            state = catch_step(state, np.array([5.0, 0.0]), CATCH_TRUE, env.spec.dt)
        assert state[8] == 1.0
        np.testing.assert_allclose(state[0:2], state[4:6], atol=1e-12)

    def test_hanging_ball_stays_below_cup(self):
        # without force the loaded assembly sinks (the anchor is a free
        # body), but in relative coordinates the ball hangs at the static
        # tendon stretch mg/k directly below the cup
        env = make_env("catch")
        state = np.zeros(env.spec.state_dim)
        state[0:2] = [0.0, -env.spec.geometry.rest_length]
        for _ in range(200):
            state = catch_step(state, np.zeros(2), CATCH_TRUE, env.spec.dt)
        assert state[8] == 0.0
        rel = state[0:2] - state[4:6]
        assert rel[1] < -env.spec.geometry.rest_length  # stretched, below
        assert abs(rel[0]) < 1e-9
        static = CATCH_TRUE["ball_mass"] * 9.81 / CATCH_TRUE["stiffness"]
        stretch = -rel[1] - env.spec.geometry.rest_length
        assert 0.0 < stretch < 3.0 * static

    def test_zero_gravity_rest_is_equilibrium(self):
        geom = CatchGeometry(gravity=0.0)
        state = np.zeros(9)
        state[0:2] = [0.0, -0.3]
        out = catch_step(state, np.zeros(2), CATCH_TRUE, 0.02, geom)
        np.testing.assert_allclose(out[:8], state[:8], atol=1e-15)

    def test_fast_pass_is_not_caught(self):
        # relative speed above the capture threshold: flies through
        state = np.zeros(9)
        state[0:2] = [0.0, 0.02]
        state[2:4] = [6.0, 0.0]
        out = catch_step(state, np.zeros(2), CATCH_TRUE, 0.02)
        assert out[8] == 0.0

    def test_swept_path_catch_between_endpoints(self):
        # endpoints outside the mouth radius but the chord passes within
        # it gently: the continuous check must still catch
        geom = CatchGeometry()
        state = np.zeros(9)
        state[0:2] = [-0.03, 0.0815]
        state[2:4] = [2.8, 0.0]
        assert np.linalg.norm(state[0:2]) > geom.cup_radius
        # free flight within the slack radius: the semi-implicit endpoint
        # is outside the mouth too, so only the swept chord can trigger
        v_end = state[2:4] + 0.02 * np.array([0.0, -9.81])
        end = state[0:2] + 0.02 * v_end
        assert np.linalg.norm(end) > geom.cup_radius
        out = catch_step(state, np.zeros(2), CATCH_TRUE, 0.02, geom)
        assert out[8] == 1.0

    def test_tension_capped_under_extreme_stiffness(self):
        params = {"ball_mass": 0.058, "stiffness": 1e6}
        state = np.zeros(9)
        state[0:2] = [0.0, -0.5]  # heavily stretched
        out = catch_step(state, np.zeros(2), params, 0.02)
        assert np.all(np.isfinite(out))
        # capped tension bounds one-step velocity change
        max_dv = 0.02 * (30.0 / 0.058 + 9.81)
        assert abs(out[3]) <= max_dv + 1e-9

    def test_speed_clamps_hold_under_random_forcing(self):
        rng = RngStream(11)
        env = make_env("catch")
        state = env.reset(rng)
        for i in range(100):
            force = rng.uniform(-15.0, 15.0, size=2)
            params = sample_model_params(env.spec.model_distribution,
                                         rng.substream(f"p{i}"))
            state = catch_step(state, force, params, env.spec.dt)
            g = env.spec.geometry
            assert np.all(np.abs(state[2:4]) <= g.ball_speed_bound + 1e-12)
            assert np.all(np.abs(state[6:8]) <= g.cup_speed_bound + 1e-12)
            assert np.all(np.isfinite(state))

    def test_cost_indicator(self):
        inside = np.zeros(9)
        assert catch_cost(inside) == 0.0
        outside = np.zeros(9)
        outside[0] = 0.2
        assert catch_cost(outside) == 1.0

    def test_observe_layout(self):
        state = np.arange(9, dtype=float)
        obs = catch_observe(state)
        np.testing.assert_allclose(obs[0:2], state[4:6] - state[0:2])
        np.testing.assert_allclose(obs[2:4], state[6:8] - state[2:4])
        np.testing.assert_allclose(obs[4:6], state[2:4])
        assert obs[6] == pytest.approx(np.linalg.norm(state[4:6] - state[0:2]))
        assert obs[7] == state[8]

    def test_reset_hangs_on_the_tendon(self):
        geom = CatchGeometry()
        for i in range(10):
            s = catch_reset(RngStream(i))
            radius = np.linalg.norm(s[0:2])
            assert radius == pytest.approx(geom.rest_length)
            # velocity is purely tangential: no radial component
            assert abs(np.dot(s[2:4], s[0:2] / radius)) < 1e-12
            assert np.linalg.norm(s[2:4]) <= 2.0 + 1e-12
            np.testing.assert_array_equal(s[4:], np.zeros(5))

    def test_batched_step_matches_single(self):
        rng = RngStream(4)
        states = np.stack([catch_reset(rng.substream(f"s{i}")) for i in range(4)])
        states[:, 2:4] = rng.uniform(-1, 1, size=(4, 2))
        forces = rng.uniform(-10, 10, size=(4, 2))
        batched = catch_step(states, forces, CATCH_TRUE, 0.02)
        for i in range(4):
            single = catch_step(states[i], forces[i], CATCH_TRUE, 0.02)
            np.testing.assert_allclose(batched[i], single, atol=1e-14)


class TestParamsAndSpecs:
    def test_sample_within_bounds(self):
        dist = {"m": (0.9, 1.5), "l": (0.9, 1.5)}
        for i in range(50):
            draw = sample_model_params(dist, RngStream(i))
            assert 0.9 <= draw["m"] <= 1.5
            assert 0.9 <= draw["l"] <= 1.5

    def test_sample_deterministic(self):
        dist = {"m": (0.9, 1.5)}
        assert sample_model_params(dist, RngStream(3)) == \
            sample_model_params(dist, RngStream(3))

    @pytest.mark.parametrize("dist", [
        {"m": (1.5, 0.9)},          # inverted bounds
        {"m": (0.0, 1.0)},          # zero lower bound
        {"m": (-1.0, 1.0)},         # negative lower bound
        {"m": (np.nan, 1.0)},       # non-finite
    ])
    def test_bad_distribution_rejected(self, dist):
        with pytest.raises(ValueError):
            validate_distribution(dist)

    @pytest.mark.parametrize("params", [
        {"m": 0.0}, {"m": -1.0}, {"m": np.inf},
    ])
    def test_bad_params_rejected(self, params):
        with pytest.raises(ValueError):
            validate_env_params(params)

    def test_pendulum_spec_defaults(self):
        spec = pendulum_spec()
        assert spec.dt == 0.05
        assert spec.episode_steps == 200
        assert spec.true_params == {"m": 1.0, "l": 1.0}
        assert spec.model_distribution == {"m": (0.9, 1.5), "l": (0.9, 1.5)}
        assert spec.action_bound == 2.0

    def test_catch_spec_defaults(self):
        spec = catch_spec()
        assert spec.state_dim == 9
        assert spec.obs_dim == 8
        assert spec.action_dim == 2
        assert spec.true_params["ball_mass"] == pytest.approx(0.058)
        assert spec.model_distribution["stiffness"][1] / spec.true_params["stiffness"] == pytest.approx(30.0)

    def test_spec_rejects_bad_dt(self):
        with pytest.raises(ValueError):
            pendulum_spec(dt=0.0)

    def test_spec_rejects_bad_distribution(self):
        with pytest.raises(ValueError):
            pendulum_spec(model_distribution={"m": (2.0, 1.0)})

    def test_make_env_unknown_name(self):
        with pytest.raises(ValueError):
            make_env("cartpole")

    def test_make_env_overrides(self):
        env = make_env("pendulum", episode_steps=50)
        assert env.spec.episode_steps == 50

    def test_env_from_spec_round_trip(self):
        spec = pendulum_spec(episode_steps=17)
        assert env_from_spec(spec).spec == spec

    def test_clamp_action(self):
        env = make_env("pendulum")
        np.testing.assert_array_equal(env.clamp_action(np.array([5.0])), [2.0])
        np.testing.assert_array_equal(env.clamp_action(np.array([-5.0])), [-2.0])
