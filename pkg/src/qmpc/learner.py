"""Training loops that couple the planner to the value function.

The main loop alternates between collecting real-system episodes with
receding-horizon control (the planner holding a sampled, generally wrong,
model) and regressing the Q-network toward soft-minimum bootstrap
targets: y = cost + gamma * free_energy(next state), where the free
energy comes from a short planner optimization started at the next
state. Baseline variants reuse the same loop: domain randomization
resamples the PLANT's parameters every step so no true-parameter data is
ever collected, and the one-step soft Q baseline is the same algorithm
with horizon 1 plus an optional frozen target snapshot.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .core import MPPIParams, RngStream
from .dynamics import Environment, EnvParams, sample_model_params
from .mppi import PlannerModel, initial_policy_for, mpc_step, optimize, zero_policy
from .qfunction import QFunction, frozen_q_fn


@dataclass(frozen=True)
class Transition:
    obs: np.ndarray
    action: np.ndarray
    cost: float
    next_state: np.ndarray
    next_obs: np.ndarray
    done: bool
    plant_params: dict = None  # provenance: parameters that generated next_state


class ReplayBuffer:
    """Bounded ring of transitions; logical order is insertion order."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._cursor = 0  # next slot to overwrite once full

    def __len__(self) -> int:
        return len(self._items)

    def append(self, tr: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(tr)
        else:
            self._items[self._cursor] = tr
            self._cursor = (self._cursor + 1) % self.capacity

    def ordered(self) -> list[Transition]:
        """Oldest to newest."""
        if len(self._items) < self.capacity:
            return list(self._items)
        return self._items[self._cursor:] + self._items[:self._cursor]

    def sample(self, k: int, rng: RngStream) -> list[Transition]:
        """k transitions at distinct uniform indices."""
        if k > len(self._items):
            raise ValueError(f"cannot sample {k} from buffer of size {len(self._items)}")
        order = self.ordered()
        idx = rng.choice_without_replacement(len(order), k)
        return [order[i] for i in idx]


@dataclass(frozen=True)
class LearnerSchedule:
    episodes: int = 200
    episode_steps: int = 200
    update_period: int = 5          # episodes between update phases
    minibatch_size: int = 64
    minibatch_count: int = 50
    target_iterations: int = 3      # planner rounds per bootstrap target
    target_samples: int = 24
    buffer_capacity: int = 100_000
    validation_episodes: int = 5

    def __post_init__(self):
        for name in ("episodes", "episode_steps", "update_period", "minibatch_size",
                     "minibatch_count", "target_iterations", "target_samples",
                     "buffer_capacity", "validation_episodes"):
            v = getattr(self, name)
            if not (isinstance(v, int) and v >= 1):
                raise ValueError(f"schedule field {name} must be a positive integer, got {v!r}")


@dataclass
class EpisodeRecord:
    total_cost: float
    success: bool
    mean_free_energy: float
    steps: int
    wall_seconds: float
    planner_params: dict


def collect_episode(env: Environment, q_fn, mppi_params: MPPIParams,
                    rng: RngStream, buffer: ReplayBuffer | None = None, *,
                    planner_params: EnvParams | None = None,
                    plant_mode: str = "true",
                    episode_steps: int | None = None) -> EpisodeRecord:
    """Run one fixed-length episode of receding-horizon control.

    The plant always integrates the task's true parameters unless
    plant_mode is "randomized", in which case a fresh parameter vector is
    drawn every step (and tagged on the stored transitions). The planner
    gets a single parameter draw for the whole episode unless explicit
    planner_params are supplied.
    """
    if plant_mode not in ("true", "randomized"):
        raise ValueError(f"plant_mode must be 'true' or 'randomized', got {plant_mode!r}")
    spec = env.spec
    steps = spec.episode_steps if episode_steps is None else episode_steps
    t0 = time.perf_counter()

    init_rng = rng.substream("init")
    model_rng = rng.substream("model")
    noise_rng = rng.substream("noise")
    plant_rng = rng.substream("plant")

    if planner_params is None:
        planner_params = sample_model_params(spec.model_distribution, model_rng)
    model = PlannerModel(env, planner_params)

    state = env.reset(init_rng)
    policy = initial_policy_for(env, mppi_params)
    states = [state]
    total_cost = 0.0
    fe_sum = 0.0
    for _ in range(steps):
        action, policy, estimate = mpc_step(state, policy, mppi_params, model,
                                            env.cost, q_fn, noise_rng)
        if plant_mode == "randomized":
            plant_params = sample_model_params(spec.model_distribution, plant_rng)
        else:
            plant_params = spec.true_params
        cost = float(env.cost(state, action))
        next_state = env.step(state, action, plant_params)
        if buffer is not None:
            buffer.append(Transition(obs=env.observe(state), action=np.array(action),
                                     cost=cost, next_state=next_state,
                                     next_obs=env.observe(next_state), done=False,
                                     plant_params=dict(plant_params)))
        total_cost += cost
        fe_sum += estimate.value
        state = next_state
        states.append(state)

    return EpisodeRecord(total_cost=total_cost,
                         success=env.episode_success(np.array(states)),
                         mean_free_energy=fe_sum / steps,
                         steps=steps,
                         wall_seconds=time.perf_counter() - t0,
                         planner_params=dict(planner_params))


def make_target(transition: Transition, model: PlannerModel, q_fn,
                target_params: MPPIParams, rng: RngStream) -> float:
    """Soft-minimum bootstrap: y = cost + gamma * free_energy(next state).

    The free energy comes from a fresh planner optimization started at
    the stored next state with a zero-mean policy. Done transitions
    (absorbing states only; fixed-length episodes never set the flag)
    take y = cost.
    """
    if transition.done:
        return float(transition.cost)
    policy0 = zero_policy(target_params.horizon, model.env.spec.action_dim,
                          target_params.cov_diag(model.env.spec.action_dim))
    _, estimate = optimize(transition.next_state, policy0, target_params, model,
                           model.env.cost, q_fn, rng)
    y = transition.cost + target_params.discount * estimate.value
    if not np.isfinite(y):
        raise FloatingPointError(f"non-finite bootstrap target {y}")
    return float(y)


def update_q(buffer: ReplayBuffer, q: QFunction, schedule: LearnerSchedule,
             env: Environment, mppi_params: MPPIParams, rng: RngStream, *,
             target_q_fn=None, on_minibatch=None, rounds: int | None = None) -> float:
    """One update phase: M minibatches of fresh-target MSE regression.

    Targets always come from the live network (no frozen copy) unless
    ``target_q_fn`` overrides that for the one-step baseline. The
    planner's model parameters are redrawn once per minibatch. Returns
    the mean pre-step loss over the phase (0.0 when ``rounds`` is 0; the
    override exists for diagnostics, normal phases use the schedule).
    """
    if rounds is None:
        rounds = schedule.minibatch_count
    if rounds == 0:
        return 0.0
    if len(buffer) < schedule.minibatch_size:
        raise ValueError(f"buffer has {len(buffer)} transitions; "
                         f"need at least {schedule.minibatch_size}")
    target_params = replace(mppi_params, iterations=schedule.target_iterations,
                            samples=schedule.target_samples)
    losses = []
    for m in range(rounds):
        step_rng = rng.substream(f"minibatch-{m}")
        batch = buffer.sample(schedule.minibatch_size, step_rng.substream("indices"))
        model = PlannerModel(env, sample_model_params(env.spec.model_distribution,
                                                      step_rng.substream("model")))
        q_for_targets = target_q_fn if target_q_fn is not None else q
        tg_rng = step_rng.substream("targets")
        targets = np.array([make_target(tr, model, q_for_targets, target_params,
                                        tg_rng.substream(f"t{i}"))
                            for i, tr in enumerate(batch)])
        obs = np.stack([tr.obs for tr in batch])
        act = np.stack([tr.action for tr in batch])
        params_before = q.snapshot() if on_minibatch is not None else None
        loss = q.update(obs, act, targets)
        losses.append(loss)
        if on_minibatch is not None:
            on_minibatch(m, loss, targets, params_before)
    return float(np.mean(losses))


@dataclass
class TrainConfig:
    env: Environment
    mppi: MPPIParams
    schedule: LearnerSchedule
    seed: int
    plant_mode: str = "true"            # "randomized" for the DR variant
    use_target_snapshot: bool = False   # one-step baseline option


@dataclass
class EpisodeMetrics:
    episode: int
    total_cost: float
    success: bool
    mean_free_energy: float
    mean_td_error: float
    wall_seconds: float


@dataclass
class TrainResult:
    q: QFunction
    best_params: dict
    final_params: dict
    episodes: list
    validation_costs: list
    snapshot_refreshes: int


def _validate(env: Environment, q: QFunction, mppi_params: MPPIParams,
              rng_root: RngStream, schedule: LearnerSchedule) -> float:
    """Mean episode cost on a fixed held-out set (same streams each phase)."""
    costs = []
    for i in range(schedule.validation_episodes):
        rec = collect_episode(env, q, mppi_params, rng_root.substream(f"validation-{i}"),
                              buffer=None, episode_steps=schedule.episode_steps)
        costs.append(rec.total_cost)
    return float(np.mean(costs))


def mpq_train(config: TrainConfig, on_minibatch=None) -> TrainResult:
    """Alternate real-system collection and fresh-target Q regression.

    Every ``update_period`` episodes: one update phase, then a fixed
    validation set; the best-on-validation parameter snapshot is kept
    alongside the final one.
    """
    env, schedule = config.env, config.schedule
    root = RngStream(config.seed)
    q = QFunction(env.spec.obs_dim, env.spec.action_dim, root.substream("q-init"))
    buffer = ReplayBuffer(schedule.buffer_capacity)

    target_q_fn = None
    snapshot_refreshes = 0
    if config.use_target_snapshot:
        target_q_fn = frozen_q_fn(q.snapshot())
        snapshot_refreshes = 1

    rows = []
    validation_costs = []
    best_cost = np.inf
    best_params = q.snapshot()
    for ep in range(schedule.episodes):
        rec = collect_episode(env, q, config.mppi, root.substream(f"episode-{ep}"),
                              buffer, plant_mode=config.plant_mode,
                              episode_steps=schedule.episode_steps)
        td = 0.0
        wall = rec.wall_seconds
        if (ep + 1) % schedule.update_period == 0 and len(buffer) >= schedule.minibatch_size:
            t0 = time.perf_counter()
            td = update_q(buffer, q, schedule, env, config.mppi,
                          root.substream(f"update-{ep}"),
                          target_q_fn=target_q_fn, on_minibatch=on_minibatch)
            if config.use_target_snapshot:
                target_q_fn = frozen_q_fn(q.snapshot())
                snapshot_refreshes += 1
            val = _validate(env, q, config.mppi, root.substream("validation-root"),
                            schedule)
            validation_costs.append(val)
            # ties prefer the later snapshot: on sparse tasks the small
            # validation set can stay flat for many phases, and the most
            # recent of equally-scoring networks has seen the most data
            if val <= best_cost:
                best_cost = val
                best_params = q.snapshot()
            wall += time.perf_counter() - t0
        rows.append(EpisodeMetrics(episode=ep, total_cost=rec.total_cost,
                                   success=rec.success,
                                   mean_free_energy=rec.mean_free_energy,
                                   mean_td_error=td, wall_seconds=wall))

    if not validation_costs:
        best_params = q.snapshot()
    return TrainResult(q=q, best_params=best_params, final_params=q.snapshot(),
                       episodes=rows, validation_costs=validation_costs,
                       snapshot_refreshes=snapshot_refreshes)


def train_domain_randomized(config: TrainConfig, on_minibatch=None) -> TrainResult:
    """Identical loop, but the PLANT runs on per-step parameter draws."""
    return mpq_train(replace(config, plant_mode="randomized"), on_minibatch=on_minibatch)


def train_softq_baseline(config: TrainConfig, on_minibatch=None) -> TrainResult:
    """One-step special case: horizon forced to 1; optional frozen targets."""
    cfg = replace(config, mppi=replace(config.mppi, horizon=1))
    return mpq_train(cfg, on_minibatch=on_minibatch)
