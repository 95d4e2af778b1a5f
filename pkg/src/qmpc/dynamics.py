"""Analytic environments, cost functions, and biased-model distributions.

Two tasks are provided:

* ``pendulum`` -- torque-limited swingup of a rigid rod. The angle is
  measured from upright, so the quadratic cost is minimized at the goal.
  Gravity accelerates the rod away from upright; swingup from hanging
  requires pumping because the torque bound is below the gravity torque.
* ``catch`` -- a sparse planar task: a point-mass ball hangs from the
  actuated cup anchor on a one-sided spring-damper tendon and must be
  swung up into the cup. Every step costs 1 unless the ball is inside
  the cup radius, and the cup only holds a ball that arrives slowly
  relative to it. A swing almost never enters the mouth on its own;
  catching means pumping the swing and meeting the dropping ball at a
  matched velocity.

The "real system" and the planner's model share these equations; model
bias enters only through the parameter vector, which the planner draws
from a uniform distribution that need not contain the true values at its
center.

All step/cost/observe functions are pure and vectorized over leading
batch dimensions, so rollout workers can evaluate many samples at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .core import RngStream, ensure_finite

GRAVITY = 9.81

# Parameters are free-form name->value mappings; distributions map the
# same names to uniform [low, high] intervals.
EnvParams = dict
ParamDistribution = dict


def validate_env_params(params: EnvParams) -> None:
    for name, value in params.items():
        if not (np.isfinite(value) and value > 0.0):
            raise ValueError(f"environment parameter {name!r} must be finite and > 0, got {value}")


def validate_distribution(dist: ParamDistribution) -> None:
    for name, (low, high) in dist.items():
        if not (np.isfinite(low) and np.isfinite(high)):
            raise ValueError(f"distribution for {name!r} has non-finite bounds")
        if low > high:
            raise ValueError(f"distribution for {name!r} has low > high: [{low}, {high}]")
        if low <= 0.0:
            raise ValueError(f"distribution for {name!r} must have low > 0, got {low}")


def sample_model_params(dist: ParamDistribution, rng: RngStream) -> EnvParams:
    """One independent uniform draw per parameter interval."""
    return {name: float(rng.uniform(low, high)) for name, (low, high) in dist.items()}


def wrap_angle(theta):
    """Wrap to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(theta, dtype=np.float64), 2.0 * np.pi)


# ---------------------------------------------------------------------------
# Pendulum

@dataclass(frozen=True)
class PendulumGeometry:
    gravity: float = GRAVITY
    torque_bound: float = 2.0    # N*m
    speed_bound: float = 8.0     # rad/s
    success_angle: float = 0.2   # rad, |theta| threshold for "stabilized"
    success_window: float = 1.0  # s at the end of the episode


def pendulum_step(state, action, params: EnvParams, dt: float,
                  geometry: PendulumGeometry = PendulumGeometry()):
    """Explicit-Euler step of the rigid-rod pendulum.

    theta'' = (3 g / 2 l) sin(theta) + (3 / m l^2) u, with the angle
    wrapped to (-pi, pi] and the rate clamped to +-speed_bound. The
    torque is clamped to the actuation bound before integration.
    """
    state = ensure_finite(state, "pendulum state")
    action = ensure_finite(action, "pendulum action")
    theta = state[..., 0]
    theta_dot = state[..., 1]
    u = np.clip(action[..., 0] if action.ndim == state.ndim else action,
                -geometry.torque_bound, geometry.torque_bound)
    m, length = params["m"], params["l"]
    accel = (3.0 * geometry.gravity / (2.0 * length)) * np.sin(theta) \
        + (3.0 / (m * length * length)) * u
    new_theta = wrap_angle(theta + dt * theta_dot)
    new_theta_dot = np.clip(theta_dot + dt * accel, -geometry.speed_bound, geometry.speed_bound)
    return np.stack([new_theta, new_theta_dot], axis=-1)


def pendulum_cost(state, action=None):
    """theta^2 + 0.1 theta_dot^2, theta measured from upright."""
    state = np.asarray(state, dtype=np.float64)
    theta = wrap_angle(state[..., 0])
    return theta ** 2 + 0.1 * state[..., 1] ** 2


def pendulum_observe(state):
    """[cos(theta), sin(theta), theta_dot]."""
    state = np.asarray(state, dtype=np.float64)
    theta = state[..., 0]
    return np.stack([np.cos(theta), np.sin(theta), state[..., 1]], axis=-1)


def pendulum_reset(rng: RngStream):
    theta = rng.uniform(-np.pi, np.pi)
    theta_dot = rng.uniform(-1.0, 1.0)
    return np.array([wrap_angle(theta), theta_dot])


def pendulum_energy(state, params: EnvParams, geometry: PendulumGeometry = PendulumGeometry()):
    """Total mechanical energy of the rod (kinetic + potential, zero at
    the hinge height); conserved by the continuous unforced dynamics."""
    state = np.asarray(state, dtype=np.float64)
    m, length = params["m"], params["l"]
    kinetic = m * length * length * state[..., 1] ** 2 / 6.0
    potential = m * geometry.gravity * (length / 2.0) * np.cos(state[..., 0])
    return kinetic + potential


# ---------------------------------------------------------------------------
# Sparse catch

@dataclass(frozen=True)
class CatchGeometry:
    gravity: float = GRAVITY
    cup_radius: float = 0.08      # m
    rest_length: float = 0.3      # m, tendon goes slack below this
    tendon_damping: float = 0.3   # N*s/m along the tendon axis
    tension_bound: float = 30.0   # N, cap on tendon pull
    cup_mass: float = 1.0         # kg
    cup_drag: float = 2.0         # N*s/m viscous drag on the anchor
    force_bound: float = 15.0     # N per axis on the anchor
    ball_speed_bound: float = 12.0
    cup_speed_bound: float = 6.0
    capture_speed: float = 3.0    # m/s, max relative speed for a catch


# state layout: [bx, by, bvx, bvy, cx, cy, cvx, cvy, caught]
CATCH_STATE_DIM = 9


def _segment_point_distance(p0, p1):
    """Min distance from the origin to the segment p0->p1 (last axis = xy)."""
    d = p1 - p0
    denom = np.sum(d * d, axis=-1)
    t = np.where(denom > 0.0, -np.sum(p0 * d, axis=-1) / np.where(denom > 0.0, denom, 1.0), 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = p0 + t[..., None] * d
    return np.linalg.norm(closest, axis=-1)


def catch_step(state, action, params: EnvParams, dt: float,
               geometry: CatchGeometry = CatchGeometry()):
    """Semi-implicit Euler step of the ball/cup system.

    The tendon pulls only when stretched past its rest length; tension is
    capped and both bodies' speeds are clamped so that wildly stiff
    parameter draws stay finite. An uncaught ball whose relative path
    passes within the cup radius at a low enough relative speed becomes
    caught and from then on rides with the cup.
    """
    state = ensure_finite(state, "catch state")
    action = ensure_finite(action, "catch action")
    ball = state[..., 0:2]
    ball_v = state[..., 2:4]
    cup = state[..., 4:6]
    cup_v = state[..., 6:8]
    caught = state[..., 8] > 0.5

    force = np.clip(action, -geometry.force_bound, geometry.force_bound)
    rel = ball - cup
    dist = np.linalg.norm(rel, axis=-1)
    taut = dist > geometry.rest_length
    safe_dist = np.where(dist > 0.0, dist, 1.0)
    direction = rel / safe_dist[..., None]
    stretch_rate = np.sum((ball_v - cup_v) * direction, axis=-1)
    tension = params["stiffness"] * (dist - geometry.rest_length) \
        + geometry.tendon_damping * stretch_rate
    tension = np.where(taut, np.clip(tension, 0.0, geometry.tension_bound), 0.0)
    tendon_on_ball = -tension[..., None] * direction

    gravity_vec = np.array([0.0, -geometry.gravity])
    ball_acc = tendon_on_ball / params["ball_mass"] + gravity_vec
    cup_acc = (force - tendon_on_ball - geometry.cup_drag * cup_v) / geometry.cup_mass

    new_ball_v = np.clip(ball_v + dt * ball_acc, -geometry.ball_speed_bound, geometry.ball_speed_bound)
    new_cup_v = np.clip(cup_v + dt * cup_acc, -geometry.cup_speed_bound, geometry.cup_speed_bound)
    new_ball = ball + dt * new_ball_v
    new_cup = cup + dt * new_cup_v

    # capture: relative path swept this step passes through the cup mouth
    # at low enough relative speed
    rel_after = new_ball - new_cup
    swept = _segment_point_distance(rel, rel_after)
    rel_speed = np.linalg.norm(new_ball_v - new_cup_v, axis=-1)
    newly_caught = (~caught) & (swept <= geometry.cup_radius) & (rel_speed <= geometry.capture_speed)
    caught = caught | newly_caught

    hold = caught[..., None]
    new_ball = np.where(hold, new_cup, new_ball)
    new_ball_v = np.where(hold, new_cup_v, new_ball_v)
    return np.concatenate(
        [new_ball, new_ball_v, new_cup, new_cup_v,
         caught.astype(np.float64)[..., None]], axis=-1)


def catch_cost(state, geometry: CatchGeometry = CatchGeometry()):
    """1 per step, 0 while the ball is inside the cup radius."""
    state = np.asarray(state, dtype=np.float64)
    dist = np.linalg.norm(state[..., 0:2] - state[..., 4:6], axis=-1)
    return np.where(dist <= geometry.cup_radius, 0.0, 1.0)


def catch_observe(state):
    """[cup-ball offset (2), cup-ball velocity offset (2), ball velocity (2),
    separation, caught flag] -- 8 features."""
    state = np.asarray(state, dtype=np.float64)
    rel = state[..., 4:6] - state[..., 0:2]
    rel_v = state[..., 6:8] - state[..., 2:4]
    dist = np.linalg.norm(rel, axis=-1, keepdims=True)
    return np.concatenate([rel, rel_v, state[..., 2:4], dist, state[..., 8:9]], axis=-1)


def catch_reset(rng: RngStream, geometry: CatchGeometry = CatchGeometry()):
    """Cup at the origin at rest; ball on the tendon at a uniformly random
    bearing (0 = straight below the cup) with a random tangential velocity.

    A swing almost never enters the mouth on its own: tendon forces are
    radial, so while taut the ball circles at tendon length, and slack
    segments begin on that circle moving tangentially, so they fall
    outward and re-engage. The exception is the thin cone straight above
    the cup, where a free drop falls into the mouth; everywhere else a
    catch takes deliberate pumping, with the whole transport running
    through taut-tendon dynamics that depend on mass and stiffness at
    every step, and the drop into the mouth must still be slow enough
    relative to the cup to be held.
    """
    bearing = rng.uniform(-np.pi, np.pi)
    radial = np.array([math.sin(bearing), -math.cos(bearing)])
    tangent = np.array([-radial[1], radial[0]])
    speed = rng.uniform(-2.0, 2.0)
    state = np.zeros(CATCH_STATE_DIM)
    state[0:2] = geometry.rest_length * radial
    state[2:4] = speed * tangent
    return state


# ---------------------------------------------------------------------------
# Environment registry

@dataclass(frozen=True)
class EnvironmentSpec:
    name: str
    state_dim: int
    action_dim: int
    obs_dim: int
    dt: float
    episode_steps: int
    true_params: EnvParams
    model_distribution: ParamDistribution
    action_bound: float
    geometry: object

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.episode_steps < 1:
            raise ValueError(f"episode_steps must be >= 1, got {self.episode_steps}")
        validate_env_params(self.true_params)
        validate_distribution(self.model_distribution)


class Environment:
    """Bundles an EnvironmentSpec with its step/cost/observe functions."""

    def __init__(self, spec: EnvironmentSpec):
        self.spec = spec

    def step(self, state, action, params: EnvParams):
        raise NotImplementedError

    def cost(self, state, action):
        raise NotImplementedError

    def observe(self, state):
        raise NotImplementedError

    def reset(self, rng: RngStream):
        raise NotImplementedError

    def episode_success(self, states: np.ndarray) -> bool:
        """Success predicate over the (T+1, state_dim) episode trajectory."""
        raise NotImplementedError

    def clamp_action(self, action):
        return np.clip(action, -self.spec.action_bound, self.spec.action_bound)


class PendulumEnv(Environment):
    def step(self, state, action, params):
        return pendulum_step(state, action, params, self.spec.dt, self.spec.geometry)

    def cost(self, state, action):
        return pendulum_cost(state, action)

    def observe(self, state):
        return pendulum_observe(state)

    def reset(self, rng):
        return pendulum_reset(rng)

    def episode_success(self, states):
        window = int(round(self.spec.geometry.success_window / self.spec.dt))
        tail = np.asarray(states)[-window:, 0]
        return bool(np.all(np.abs(wrap_angle(tail)) < self.spec.geometry.success_angle))


class CatchEnv(Environment):
    def step(self, state, action, params):
        return catch_step(state, action, params, self.spec.dt, self.spec.geometry)

    def cost(self, state, action):
        return catch_cost(state, self.spec.geometry)

    def observe(self, state):
        return catch_observe(state)

    def reset(self, rng):
        return catch_reset(rng, self.spec.geometry)

    def episode_success(self, states):
        return bool(catch_cost(np.asarray(states)[-1], self.spec.geometry) == 0.0)


def pendulum_spec(**overrides) -> EnvironmentSpec:
    base = dict(
        name="pendulum",
        state_dim=2,
        action_dim=1,
        obs_dim=3,
        dt=0.05,
        episode_steps=200,  # 10 s episodes
        true_params={"m": 1.0, "l": 1.0},
        model_distribution={"m": (0.9, 1.5), "l": (0.9, 1.5)},
        action_bound=2.0,
        geometry=PendulumGeometry(),
    )
    base.update(overrides)
    return EnvironmentSpec(**base)


def catch_spec(**overrides) -> EnvironmentSpec:
    base = dict(
        name="catch",
        state_dim=CATCH_STATE_DIM,
        action_dim=2,
        obs_dim=8,
        dt=0.02,
        episode_steps=200,  # 4 s episodes
        true_params={"ball_mass": 0.058, "stiffness": 40.0},
        model_distribution={"ball_mass": (0.0087, 0.87), "stiffness": (3.0, 1200.0)},
        action_bound=15.0,
        geometry=CatchGeometry(),
    )
    base.update(overrides)
    return EnvironmentSpec(**base)


_REGISTRY = {"pendulum": (pendulum_spec, PendulumEnv), "catch": (catch_spec, CatchEnv)}


def make_env(name: str, **overrides) -> Environment:
    if name not in _REGISTRY:
        raise ValueError(f"unknown environment {name!r}; known: {sorted(_REGISTRY)}")
    spec_fn, cls = _REGISTRY[name]
    return cls(spec_fn(**overrides))


def env_from_spec(spec: EnvironmentSpec) -> Environment:
    _, cls = _REGISTRY[spec.name]
    return cls(spec)
