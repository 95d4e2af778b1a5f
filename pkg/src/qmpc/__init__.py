"""Sampling-based MPC with learned terminal value functions.

The package splits into planner math (`mppi`), analytic test systems
(`dynamics`), a from-scratch value network (`qfunction`), training loops
(`learner`), and the experiment runner (`harness`). Random streams and
planner parameter records live in `core`.
"""

from .core import (GaussianControlPolicy, MPPIParams, RngStream,
                   sample_gaussian_noise, zero_policy)
from .dynamics import (CatchGeometry, Environment, EnvironmentSpec,
                       PendulumGeometry, catch_spec, env_from_spec, make_env,
                       pendulum_spec, sample_model_params, wrap_angle)
from .learner import (LearnerSchedule, ReplayBuffer, TrainConfig, TrainResult,
                      Transition, collect_episode, make_target, mpq_train,
                      train_domain_randomized, train_softq_baseline, update_q)
from .mppi import (FreeEnergyEstimate, PlannerModel, RolloutBatch,
                   compute_weights, free_energy, mpc_step, optimize,
                   rollout_batch, shift_warm_start, update_mean)
from .qfunction import (AdamState, QFunction, adam_step, finite_diff_grad,
                        frozen_q_fn, init_params, load_checkpoint,
                        mse_loss_and_grad, q_forward, save_checkpoint,
                        zero_q_fn)

__version__ = "0.1.0"

__all__ = [
    "AdamState", "CatchGeometry", "Environment", "EnvironmentSpec",
    "FreeEnergyEstimate", "GaussianControlPolicy", "LearnerSchedule",
    "MPPIParams", "PendulumGeometry", "PlannerModel", "QFunction",
    "ReplayBuffer", "RngStream", "RolloutBatch", "TrainConfig", "TrainResult",
    "Transition", "adam_step", "catch_spec", "collect_episode",
    "compute_weights", "env_from_spec", "finite_diff_grad", "free_energy",
    "frozen_q_fn", "init_params", "load_checkpoint", "make_env", "make_target",
    "mpc_step", "mpq_train", "mse_loss_and_grad", "optimize", "pendulum_spec",
    "q_forward", "rollout_batch", "sample_gaussian_noise", "sample_model_params",
    "save_checkpoint", "shift_warm_start", "train_domain_randomized",
    "train_softq_baseline", "update_mean", "update_q", "wrap_angle",
    "zero_policy", "zero_q_fn",
]
