"""Sampling-based receding-horizon optimizer with a terminal value head.

One planning round draws N noise sequences around the current open-loop
mean, rolls each through the planner's model for H-1 steps, scores them
with discounted state costs plus an analytic control penalty plus a
discounted terminal Q estimate, and moves the mean toward the
exponentially reweighted noise average. Repeating the round sharpens the
plan; the soft minimum (free energy) of the final batch doubles as the
value estimate used for temporal-difference targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (GaussianControlPolicy, MPPIParams, RngStream,
                   ensure_finite, sample_gaussian_noise, zero_policy)
from .dynamics import Environment, EnvParams


@dataclass
class PlannerModel:
    """An environment viewed through one fixed parameter vector."""
    env: Environment
    params: EnvParams

    def step(self, state, action):
        return self.env.step(state, action, self.params)

    def observe(self, state):
        return self.env.observe(state)

    def clamp(self, action):
        return self.env.clamp_action(action)

    def cost(self, state, action):
        return self.env.cost(state, action)


@dataclass(frozen=True)
class RolloutBatch:
    """Per-sample score decomposition for one planning batch.

    total = state_cost + control_penalty + terminal_q, elementwise; the
    constructor fills it in when omitted and checks every part is finite.
    """
    noise: np.ndarray            # (N, H, action_dim)
    state_cost: np.ndarray       # (N,) discounted sum over the first H-1 states
    control_penalty: np.ndarray  # (N,) undiscounted analytic prior-ratio term
    terminal_q: np.ndarray       # (N,) discounted terminal value
    total: np.ndarray = None

    def __post_init__(self):
        parts = self.state_cost + self.control_penalty + self.terminal_q
        if self.total is None:
            object.__setattr__(self, "total", parts)
        elif not np.allclose(self.total, parts, rtol=0.0, atol=1e-12):
            raise ValueError("total does not equal state_cost + control_penalty + terminal_q")
        ensure_finite(self.noise, "rollout noise")
        ensure_finite(self.total, "rollout totals")

    @property
    def size(self) -> int:
        return self.noise.shape[0]


@dataclass(frozen=True)
class FreeEnergyEstimate:
    """Soft minimum of the batch totals plus a weight-degeneracy diagnostic."""
    value: float
    effective_sample_size: float


def control_penalty(policy: GaussianControlPolicy, noise: np.ndarray,
                    temperature: float) -> np.ndarray:
    """lambda * sum_t 0.5 * u_t^T Sigma^-1 (u_t + 2 eps_t), per sample.

    This is the analytic log-ratio between the shifted sampling policy
    and the zero-mean prior, evaluated at the sampled noise; it is kept
    undiscounted even when state costs are discounted.
    """
    u = policy.means                       # (H, da)
    inv_cov = 1.0 / policy.cov_diag        # (da,)
    per_t = 0.5 * np.sum(u * inv_cov * (u + 2.0 * noise), axis=-1)  # (N, H)
    return temperature * per_t.sum(axis=-1)


def rollout_batch(model: PlannerModel, cost_fn, q_fn, start_state: np.ndarray,
                  policy: GaussianControlPolicy, noise: np.ndarray,
                  discount: float, temperature: float) -> RolloutBatch:
    """Simulate every noise sequence from ``start_state`` under the model.

    Actions are mean + noise, clamped to the actuation bounds before they
    touch the dynamics or the terminal Q. State costs are accumulated at
    the H-1 visited states (including the start state); the terminal
    state contributes through Q only.
    """
    n, horizon, action_dim = noise.shape
    if (horizon, action_dim) != (policy.horizon, policy.action_dim):
        raise ValueError(f"noise shape {noise.shape} does not match policy "
                         f"({policy.horizon}, {policy.action_dim})")
    actions = model.clamp(policy.means[None, :, :] + noise)  # (N, H, da)

    state = np.broadcast_to(start_state, (n,) + np.shape(start_state)).copy()
    state_cost = np.zeros(n)
    for t in range(horizon - 1):
        state_cost += (discount ** t) * cost_fn(state, actions[:, t])
        state = model.step(state, actions[:, t])
    ensure_finite(state, "rollout terminal states")

    q_values = np.asarray(q_fn(model.observe(state), actions[:, horizon - 1]),
                          dtype=np.float64)
    ensure_finite(q_values, "terminal q values")
    terminal_q = (discount ** (horizon - 1)) * q_values
    penalty = control_penalty(policy, noise, temperature)
    return RolloutBatch(noise=noise, state_cost=state_cost,
                        control_penalty=penalty, terminal_q=terminal_q)


def compute_weights(batch: RolloutBatch, temperature: float) -> np.ndarray:
    """Normalized exponential weights exp(-(total - min)/lambda).

    The subtracted minimum cancels in the normalization; it only guards
    the exponentials against underflow at small temperatures.
    """
    if temperature <= 0.0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    shifted = batch.total - batch.total.min()
    raw = np.exp(-shifted / temperature)
    return raw / raw.sum()


def effective_sample_size(weights: np.ndarray) -> float:
    return float(1.0 / np.sum(weights ** 2))


def update_mean(policy: GaussianControlPolicy, batch: RolloutBatch,
                weights: np.ndarray, step_size: float) -> GaussianControlPolicy:
    """u_t <- u_t + alpha * sum_n w_n eps_t^n; covariance is not adapted."""
    delta = np.einsum("n,nto->to", weights, batch.noise)
    return policy.with_means(policy.means + step_size * delta)


def _logsumexp(x: np.ndarray) -> float:
    m = float(np.max(x))
    return m + math.log(float(np.sum(np.exp(x - m))))


def free_energy(batch: RolloutBatch, temperature: float,
                n: int | None = None) -> FreeEnergyEstimate:
    """-lambda * (logsumexp(-total/lambda) - log n): the soft minimum.

    The batch must have been drawn from the policy whose analytic penalty
    is baked into ``total``; only then is the estimate the importance-
    corrected expectation the temporal-difference target calls for.
    """
    if n is None:
        n = batch.size
    elif n != batch.size:
        raise ValueError(f"n={n} does not match batch size {batch.size}")
    value = -temperature * (_logsumexp(-batch.total / temperature) - math.log(n))
    ess = effective_sample_size(compute_weights(batch, temperature))
    return FreeEnergyEstimate(value=float(value), effective_sample_size=ess)


def optimize(state: np.ndarray, policy_init: GaussianControlPolicy,
             params: MPPIParams, model: PlannerModel, cost_fn, q_fn,
             rng: RngStream) -> tuple[GaussianControlPolicy, FreeEnergyEstimate]:
    """Run ``params.iterations`` rounds of sample/score/reweight/update.

    The returned estimate comes from one extra batch drawn from the
    post-update policy, so its analytic penalty matches the distribution
    the samples came from.
    """
    policy = policy_init
    for _ in range(params.iterations):
        noise = sample_gaussian_noise(policy, params.samples, rng)
        batch = rollout_batch(model, cost_fn, q_fn, state, policy, noise,
                              params.discount, params.temperature)
        weights = compute_weights(batch, params.temperature)
        policy = update_mean(policy, batch, weights, params.step_size)

    noise = sample_gaussian_noise(policy, params.samples, rng)
    final_batch = rollout_batch(model, cost_fn, q_fn, state, policy, noise,
                                params.discount, params.temperature)
    return policy, free_energy(final_batch, params.temperature)


def shift_warm_start(policy: GaussianControlPolicy) -> GaussianControlPolicy:
    """Drop the executed step's mean; append the prior mean (zero)."""
    means = np.vstack([policy.means[1:], np.zeros((1, policy.action_dim))])
    return policy.with_means(means)


def mpc_step(state: np.ndarray, carried_policy: GaussianControlPolicy,
             params: MPPIParams, model: PlannerModel, cost_fn, q_fn,
             rng: RngStream):
    """One receding-horizon step: shift, re-optimize, execute the mean.

    Returns (action, policy to carry into the next call, free energy).
    The carried policy is the optimized one; the next call shifts it.
    """
    policy, estimate = optimize(state, shift_warm_start(carried_policy),
                                params, model, cost_fn, q_fn, rng)
    action = model.clamp(policy.means[0].copy())
    return action, policy, estimate


def initial_policy_for(env: Environment, params: MPPIParams) -> GaussianControlPolicy:
    return zero_policy(params.horizon, env.spec.action_dim,
                       params.cov_diag(env.spec.action_dim))
