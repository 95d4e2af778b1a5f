"""Network forward/backward math against hand traces and a difference oracle."""

import math

import numpy as np
import pytest

from qmpc.core import RngStream
from qmpc.qfunction import (HIDDEN, LAYERS, AdamState, QFunction, adam_step,
                            finite_diff_grad, frozen_q_fn, init_params,
                            load_checkpoint, mse_loss_and_grad, q_forward,
                            save_checkpoint, zero_q_fn)


def zero_params(in_dim: int, hidden: int = HIDDEN) -> dict:
    return {
        "W1": np.zeros((in_dim, hidden)), "b1": np.zeros(hidden),
        "W2": np.zeros((hidden, hidden)), "b2": np.zeros(hidden),
        "W3": np.zeros((hidden, 1)), "b3": np.zeros(1),
    }


def random_params(in_dim: int, hidden: int, rng: RngStream, scale: float = 0.5) -> dict:
    return {
        "W1": scale * rng.normal((in_dim, hidden)), "b1": scale * rng.normal((hidden,)),
        "W2": scale * rng.normal((hidden, hidden)), "b2": scale * rng.normal((hidden,)),
        "W3": scale * rng.normal((hidden, 1)), "b3": scale * rng.normal((1,)),
    }


class TestForward:
    def test_zero_net_outputs_zero(self):
        params = zero_params(4)
        x = RngStream(0).normal((6, 4))
        np.testing.assert_array_equal(q_forward(params, x), np.zeros(6))

    def test_output_bias_passes_through(self):
        params = zero_params(4)
        params["b3"] = np.array([2.5])
        x = RngStream(0).normal((6, 4))
        np.testing.assert_array_equal(q_forward(params, x), np.full(6, 2.5))

    def test_single_hidden_unit_hand_trace(self):
        # 2 inputs, 1 unit per layer: the whole composition by hand
        params = {
            "W1": np.array([[0.3], [-0.2]]), "b1": np.array([0.1]),
            "W2": np.array([[2.0]]), "b2": np.array([-0.3]),
            "W3": np.array([[1.5]]), "b3": np.array([0.25]),
        }
        x = np.array([[0.5, -1.0]])
        h1 = math.tanh(0.3 * 0.5 + (-0.2) * (-1.0) + 0.1)
        h2 = math.tanh(2.0 * h1 - 0.3)
        expected = 1.5 * h2 + 0.25
        assert q_forward(params, x)[0] == pytest.approx(expected, abs=1e-15)

    def test_batch_rows_processed_identically(self):
        params = random_params(3, 8, RngStream(1))
        x = RngStream(2).normal((5, 3))
        batched = q_forward(params, x)
        for i in range(5):
            assert batched[i] == pytest.approx(q_forward(params, x[i:i + 1])[0],
                                               abs=1e-15)

    def test_initialization_bound_on_pendulum_box(self):
        # fresh nets stay small on the reachable observation/action box
        rng = RngStream(7)
        for k in range(20):
            params = init_params(3, 1, rng.substream(f"net{k}"))
            draw = rng.substream(f"x{k}")
            obs = np.stack([draw.uniform(-1, 1, size=1000),
                            draw.uniform(-1, 1, size=1000),
                            draw.uniform(-8, 8, size=1000)], axis=-1)
            act = draw.uniform(-2, 2, size=(1000, 1))
            q = q_forward(params, np.concatenate([obs, act], axis=-1))
            assert np.max(np.abs(q)) < 10.0

    def test_init_respects_fan_in_bounds(self):
        params = init_params(3, 1, RngStream(0))
        assert np.max(np.abs(params["W1"])) <= 1.0 / np.sqrt(4)
        assert np.max(np.abs(params["W2"])) <= 1.0 / np.sqrt(HIDDEN)
        assert np.max(np.abs(params["W3"])) <= 1.0 / np.sqrt(HIDDEN)
        assert params["W1"].shape == (4, HIDDEN)


class TestGradient:
    def test_zero_gradient_at_fit(self):
        params = random_params(3, 6, RngStream(3))
        x = RngStream(4).normal((4, 3))
        targets = q_forward(params, x)
        loss, grads = mse_loss_and_grad(params, x, targets)
        assert loss == 0.0
        for name in LAYERS:
            np.testing.assert_array_equal(grads[name], np.zeros_like(grads[name]))

    def test_output_layer_gradient_hand_formula(self):
        # dL/db3 = mean of 2*(q - y); dL/dW3 = h2^T (2/K)(q - y)
        params = random_params(3, 6, RngStream(5))
        x = RngStream(6).normal((4, 3))
        y = RngStream(7).normal((4,))
        _, grads = mse_loss_and_grad(params, x, y)
        h1 = np.tanh(x @ params["W1"] + params["b1"])
        h2 = np.tanh(h1 @ params["W2"] + params["b2"])
        q = (h2 @ params["W3"] + params["b3"])[:, 0]
        d = 2.0 * (q - y) / len(y)
        np.testing.assert_allclose(grads["b3"], [d.sum()], atol=1e-14)
        np.testing.assert_allclose(grads["W3"], h2.T @ d[:, None], atol=1e-14)

    def test_matches_finite_differences_on_random_nets(self):
        # the acceptance gradient check: 20 random nets and batches
        worst = 0.0
        for k in range(20):
            rng = RngStream(100 + k)
            params = random_params(5, 8, rng.substream("net"))
            x = rng.substream("x").normal((4, 5))
            y = rng.substream("y").normal((4,))
            _, grads = mse_loss_and_grad(params, x, y)
            fd = finite_diff_grad(params, x, y, eps=1e-5)
            for name in LAYERS:
                num = np.linalg.norm(grads[name] - fd[name])
                den = np.linalg.norm(grads[name]) + np.linalg.norm(fd[name]) + 1e-12
                worst = max(worst, num / den)
        assert worst < 1e-4

    def test_matches_finite_differences_full_size(self):
        rng = RngStream(321)
        params = init_params(3, 1, rng.substream("net"))
        x = rng.substream("x").normal((4, 4))
        y = rng.substream("y").normal((4,))
        _, grads = mse_loss_and_grad(params, x, y)
        fd = finite_diff_grad(params, x, y, eps=1e-5)
        for name in LAYERS:
            num = np.linalg.norm(grads[name] - fd[name])
            den = np.linalg.norm(grads[name]) + np.linalg.norm(fd[name]) + 1e-12
            assert num / den < 1e-4, name

    def test_finite_difference_error_shrinks_with_h(self):
        rng = RngStream(11)
        params = random_params(3, 4, rng.substream("net"))
        x = rng.substream("x").normal((3, 3))
        y = rng.substream("y").normal((3,))
        _, grads = mse_loss_and_grad(params, x, y)

        def err(h):
            fd = finite_diff_grad(params, x, y, eps=h)
            return max(np.max(np.abs(fd[n] - grads[n])) for n in LAYERS)

        assert err(1e-3) > err(1e-5)

    def test_requires_batched_input(self):
        params = zero_params(3)
        with pytest.raises(ValueError):
            mse_loss_and_grad(params, np.zeros(3), np.zeros(1))


class TestAdam:
    def test_zero_gradient_keeps_params(self):
        params = {"W3": np.array([[1.0], [2.0]])}
        state = AdamState.for_params(params)
        adam_step(params, {"W3": np.zeros((2, 1))}, state)
        np.testing.assert_array_equal(params["W3"], [[1.0], [2.0]])
        assert state.step == 1

    def test_first_step_magnitude(self):
        # bias correction makes the first update lr * g / (|g| + eps)
        g = 0.37
        params = {"b3": np.array([1.0])}
        state = AdamState.for_params(params)
        adam_step(params, {"b3": np.array([g])}, state, lr=0.001)
        expected = 1.0 - 0.001 * g / (abs(g) + 1e-8)
        assert params["b3"][0] == pytest.approx(expected, abs=1e-15)

    def test_two_identical_steps_hand_trace(self):
        g = -0.8
        params = {"b3": np.array([0.0])}
        state = AdamState.for_params(params)
        adam_step(params, {"b3": np.array([g])}, state, lr=0.001)
        adam_step(params, {"b3": np.array([g])}, state, lr=0.001)
        # second step: m_hat = g, v_hat = g^2 (both corrections exact for
        # constant gradients), so each step moves lr*g/(|g|+eps)
        per_step = 0.001 * g / (abs(g) + 1e-8)
        assert params["b3"][0] == pytest.approx(-2.0 * per_step, abs=1e-12)
        assert state.step == 2

    def test_nonfinite_gradient_rejected(self):
        params = {"b3": np.array([0.0])}
        state = AdamState.for_params(params)
        with pytest.raises(FloatingPointError):
            adam_step(params, {"b3": np.array([np.nan])}, state)

    def test_loss_descends_over_seeds(self):
        for seed in range(10):
            rng = RngStream(seed)
            q = QFunction(3, 1, rng.substream("init"))
            obs = rng.substream("obs").normal((16, 3))
            act = rng.substream("act").normal((16, 1))
            y = rng.substream("y").normal((16,))
            first = q.update(obs, act, y)
            loss = None
            for _ in range(99):
                loss = q.update(obs, act, y)
            assert loss < first


class TestQFunction:
    def test_call_concatenates_and_batches(self):
        q = QFunction(3, 1, RngStream(0))
        obs = RngStream(1).normal((5, 3))
        act = RngStream(2).normal((5, 1))
        out = q(obs, act)
        assert out.shape == (5,)
        direct = q_forward(q.params, np.concatenate([obs, act], axis=-1))
        np.testing.assert_array_equal(out, direct)

    def test_call_supports_extra_leading_dims(self):
        q = QFunction(3, 1, RngStream(0))
        obs = RngStream(1).normal((2, 4, 3))
        act = RngStream(2).normal((2, 4, 1))
        assert q(obs, act).shape == (2, 4)

    def test_update_rejects_nonfinite_targets(self):
        q = QFunction(3, 1, RngStream(0))
        with pytest.raises(ValueError):
            q.update(np.zeros((2, 3)), np.zeros((2, 1)), np.array([1.0, np.inf]))

    def test_snapshot_is_decoupled(self):
        q = QFunction(3, 1, RngStream(0))
        snap = q.snapshot()
        q.update(np.zeros((4, 3)), np.zeros((4, 1)), np.ones(4))
        assert not np.array_equal(snap["b3"], q.params["b3"])
        q.load_snapshot(snap)
        np.testing.assert_array_equal(q.params["b3"], snap["b3"])

    def test_frozen_q_fn_matches_snapshot(self):
        q = QFunction(3, 1, RngStream(0))
        fn = frozen_q_fn(q.snapshot())
        obs = RngStream(1).normal((4, 3))
        act = RngStream(2).normal((4, 1))
        np.testing.assert_array_equal(fn(obs, act), q(obs, act))
        q.update(obs, act, np.ones(4))
        assert not np.array_equal(fn(obs, act), q(obs, act))

    def test_zero_q_fn_shapes(self):
        np.testing.assert_array_equal(zero_q_fn(np.ones((7, 3)), np.ones((7, 1))),
                                      np.zeros(7))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        q = QFunction(3, 1, RngStream(42))
        path = tmp_path / "net.qnet"
        q.save(path)
        loaded = QFunction.load(path)
        assert (loaded.obs_dim, loaded.action_dim) == (3, 1)
        for name in LAYERS:
            np.testing.assert_array_equal(loaded.params[name], q.params[name])

    def test_identical_saves_identical_bytes(self, tmp_path):
        q = QFunction(3, 1, RngStream(42))
        a, b = tmp_path / "a.qnet", tmp_path / "b.qnet"
        q.save(a)
        q.save(b)
        assert a.read_bytes() == b.read_bytes()

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "bad.qnet"
        path.write_bytes(b"not a checkpoint")
        with pytest.raises(ValueError):
            load_checkpoint(path)

    def test_rejects_truncated_file(self, tmp_path):
        q = QFunction(3, 1, RngStream(42))
        path = tmp_path / "net.qnet"
        q.save(path)
        data = path.read_bytes()
        path.write_bytes(data[:len(data) // 2])
        with pytest.raises(ValueError):
            load_checkpoint(path)

    def test_save_checkpoint_arbitrary_params(self, tmp_path):
        params = init_params(8, 2, RngStream(1))
        path = tmp_path / "c.qnet"
        save_checkpoint(path, params, 8, 2)
        loaded, od, ad = load_checkpoint(path)
        assert (od, ad) == (8, 2)
        for name in LAYERS:
            np.testing.assert_array_equal(loaded[name], params[name])
