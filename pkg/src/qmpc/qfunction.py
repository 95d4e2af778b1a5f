"""Small dense Q-network with hand-rolled backprop and Adam.

The network maps a concatenated [observation, action] vector through two
tanh layers of 100 units to a scalar. Parameters live in a plain dict of
float64 arrays so snapshots, checkpoints, and finite-difference checks
stay trivial. Training only ever needs the MSE-to-targets gradient, so
that is the one backward pass implemented.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .core import RngStream, ensure_finite

HIDDEN = 100
LAYERS = ("W1", "b1", "W2", "b2", "W3", "b3")


def init_params(obs_dim: int, action_dim: int, rng: RngStream) -> dict:
    """Uniform +-1/sqrt(fan_in) init for every weight and bias."""
    in_dim = obs_dim + action_dim
    shapes = {
        "W1": (in_dim, HIDDEN), "b1": (HIDDEN,),
        "W2": (HIDDEN, HIDDEN), "b2": (HIDDEN,),
        "W3": (HIDDEN, 1), "b3": (1,),
    }
    fan_in = {"W1": in_dim, "b1": in_dim, "W2": HIDDEN, "b2": HIDDEN, "W3": HIDDEN, "b3": HIDDEN}
    params = {}
    for name in LAYERS:
        bound = 1.0 / np.sqrt(fan_in[name])
        params[name] = rng.uniform(-bound, bound, size=shapes[name])
    return params


def q_forward(params: dict, inputs: np.ndarray) -> np.ndarray:
    """Scalar head over a (..., obs+act) batch; returns (...,)."""
    x = np.asarray(inputs, dtype=np.float64)
    h1 = np.tanh(x @ params["W1"] + params["b1"])
    h2 = np.tanh(h1 @ params["W2"] + params["b2"])
    return (h2 @ params["W3"] + params["b3"])[..., 0]


def mse_loss_and_grad(params: dict, inputs: np.ndarray, targets: np.ndarray):
    """Mean squared error to ``targets`` and its gradient w.r.t. params.

    Backprop is written out by hand; layers are small enough that clarity
    beats generality here.
    """
    x = np.asarray(inputs, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected (batch, features) inputs, got shape {x.shape}")
    n = x.shape[0]

    a1 = x @ params["W1"] + params["b1"]
    h1 = np.tanh(a1)
    a2 = h1 @ params["W2"] + params["b2"]
    h2 = np.tanh(a2)
    q = (h2 @ params["W3"] + params["b3"])[:, 0]

    err = q - y
    loss = float(np.mean(err ** 2))

    dq = (2.0 / n) * err                      # (n,)
    d3 = dq[:, None]                          # (n, 1)
    grads = {
        "W3": h2.T @ d3,
        "b3": d3.sum(axis=0),
    }
    dh2 = d3 @ params["W3"].T                 # (n, H)
    da2 = dh2 * (1.0 - h2 ** 2)
    grads["W2"] = h1.T @ da2
    grads["b2"] = da2.sum(axis=0)
    dh1 = da2 @ params["W2"].T
    da1 = dh1 * (1.0 - h1 ** 2)
    grads["W1"] = x.T @ da1
    grads["b1"] = da1.sum(axis=0)
    return loss, grads


def finite_diff_grad(params: dict, inputs: np.ndarray, targets: np.ndarray,
                     eps: float = 1e-6) -> dict:
    """Central-difference gradient of the MSE loss, for checking backprop."""
    def loss_at(p):
        q = q_forward(p, inputs)
        return float(np.mean((q - np.asarray(targets)) ** 2))

    grads = {}
    for name in LAYERS:
        g = np.zeros_like(params[name])
        flat = params[name].reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = loss_at(params)
            flat[i] = orig - eps
            lo = loss_at(params)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
        grads[name] = g
    return grads


@dataclass
class AdamState:
    """First/second moment accumulators plus the shared step counter."""
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def for_params(cls, params: dict) -> "AdamState":
        return cls(m={k: np.zeros_like(p) for k, p in params.items()},
                   v={k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict, grads: dict, state: AdamState,
              lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """Classic bias-corrected Adam update, in place."""
    state.step += 1
    t = state.step
    for name in params:
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for {name}")
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = state.m[name] / (1.0 - beta1 ** t)
        v_hat = state.v[name] / (1.0 - beta2 ** t)
        params[name] -= lr * m_hat / (np.sqrt(v_hat) + eps)


class QFunction:
    """Trainable state-action value head over [observation, action]."""

    def __init__(self, obs_dim: int, action_dim: int, rng: RngStream,
                 lr: float = 0.001):
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.lr = lr
        self.params = init_params(obs_dim, action_dim, rng)
        self.opt = AdamState.for_params(self.params)

    def __call__(self, obs: np.ndarray, act: np.ndarray) -> np.ndarray:
        """Vectorized over matching leading dims of obs (..., od) and act (..., ad)."""
        obs = np.asarray(obs, dtype=np.float64)
        act = np.asarray(act, dtype=np.float64)
        x = np.concatenate([obs, act], axis=-1)
        return q_forward(self.params, x)

    def update(self, obs: np.ndarray, act: np.ndarray, targets: np.ndarray) -> float:
        """One Adam step on the MSE to ``targets``; returns the pre-step loss."""
        x = np.concatenate([np.asarray(obs, dtype=np.float64),
                            np.asarray(act, dtype=np.float64)], axis=-1)
        ensure_finite(x, "q-update inputs")
        ensure_finite(np.asarray(targets, dtype=np.float64), "q-update targets")
        loss, grads = mse_loss_and_grad(self.params, x, targets)
        adam_step(self.params, grads, self.opt, lr=self.lr)
        return loss

    def snapshot(self) -> dict:
        """Frozen copy of the parameters (optimizer state not included)."""
        return {k: p.copy() for k, p in self.params.items()}

    def load_snapshot(self, snap: dict) -> None:
        for k in LAYERS:
            self.params[k] = np.array(snap[k], dtype=np.float64)

    def save(self, path) -> None:
        save_checkpoint(path, self.params, self.obs_dim, self.action_dim)

    @classmethod
    def load(cls, path, lr: float = 0.001) -> "QFunction":
        params, obs_dim, action_dim = load_checkpoint(path)
        q = cls.__new__(cls)
        q.obs_dim = obs_dim
        q.action_dim = action_dim
        q.lr = lr
        q.params = params
        q.opt = AdamState.for_params(q.params)
        return q


# Checkpoint container: a version line, a JSON header with the layer
# shapes, then raw little-endian float64 parameter bytes in layer order.
# Writing the same parameters twice yields identical bytes, which the
# experiment artifacts rely on.
CHECKPOINT_MAGIC = b"QFN1\n"


def save_checkpoint(path, params: dict, obs_dim: int, action_dim: int) -> None:
    header = {
        "version": 1,
        "obs_dim": int(obs_dim),
        "action_dim": int(action_dim),
        "layers": {name: list(params[name].shape) for name in LAYERS},
    }
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for name in LAYERS:
            f.write(np.ascontiguousarray(params[name], dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as f:
        magic = f.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a recognized checkpoint file")
        header = json.loads(f.readline().decode("utf-8"))
        params = {}
        for name in LAYERS:
            shape = tuple(header["layers"][name])
            count = int(np.prod(shape)) if shape else 1
            raw = f.read(count * 8)
            if len(raw) != count * 8:
                raise ValueError(f"{path}: truncated checkpoint")
            params[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return params, header["obs_dim"], header["action_dim"]


def frozen_q_fn(snap: dict):
    """Evaluation-only closure over a parameter snapshot."""
    params = {k: np.array(v, dtype=np.float64) for k, v in snap.items()}

    def q_fn(obs, act):
        x = np.concatenate([np.asarray(obs, dtype=np.float64),
                            np.asarray(act, dtype=np.float64)], axis=-1)
        return q_forward(params, x)

    return q_fn


def zero_q_fn(obs, act):
    """Terminal value of 0 everywhere; turns the planner into plain MPC."""
    obs = np.asarray(obs)
    return np.zeros(obs.shape[:-1])
