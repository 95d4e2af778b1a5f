"""Experiment runner: config files, training/evaluation dispatch, artifacts.

A run is described by a small YAML file with five sections (env, agent,
mppi, schedule, run). Loading resolves every default and validates the
combination; the resolved mapping is echoed next to the results so any
run can be reproduced from its own artifacts. Outputs are a fixed-schema
metrics CSV, checkpoint files for trained agents, and a plain-text log.
Identical config + seed produces byte-identical CSVs and checkpoints;
wall-clock readings go to the log (and to the CSV only when explicitly
requested, since they break reproducibility).
"""

from __future__ import annotations

import argparse
import copy
import csv
import sys
import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from .core import MPPIParams, RngStream
from .dynamics import Environment, make_env
from .learner import (LearnerSchedule, TrainConfig, collect_episode, mpq_train,
                      train_domain_randomized, train_softq_baseline)
from .qfunction import QFunction, zero_q_fn

AGENT_KINDS = ("mppi", "mpq", "softq", "mpq_dr")
CSV_COLUMNS = ("episode", "seed", "agent", "horizon", "total_cost", "success",
               "mean_free_energy", "mean_td_error", "wall_seconds")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_PARTIAL = 3


class ConfigError(ValueError):
    """Invalid or missing configuration; carries the offending key."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"config error at {key!r}: {message}")


@dataclass
class ExperimentConfig:
    env_name: str
    env_overrides: dict
    agent: str
    planner_model: str          # "biased" or "true"; meaningful for kind "mppi"
    target_snapshot: bool       # frozen-target option for the one-step baseline
    mppi: MPPIParams
    schedule: LearnerSchedule
    seed: int
    out: str | None
    eval_episodes: int
    record_wall_time: bool

    def make_env(self) -> Environment:
        return make_env(self.env_name, **self.env_overrides)

    @property
    def agent_label(self) -> str:
        if self.agent == "mppi":
            return f"mppi-{self.planner_model}"
        return self.agent.replace("_", "-")

    def to_mapping(self) -> dict:
        """Fully resolved mapping; loading it back reproduces this config."""
        env_section = {"name": self.env_name}
        for key, value in self.env_overrides.items():
            if key in ("true_params",):
                env_section[key] = {k: float(v) for k, v in value.items()}
            elif key == "model_distribution":
                env_section[key] = {k: [float(lo), float(hi)]
                                    for k, (lo, hi) in value.items()}
            else:
                env_section[key] = value
        return {
            "env": env_section,
            "agent": {
                "kind": self.agent,
                "planner_model": self.planner_model,
                "target_snapshot": self.target_snapshot,
            },
            "mppi": {
                "horizon": self.mppi.horizon,
                "samples": self.mppi.samples,
                "sigma": self.mppi.sigma,
                "temperature": self.mppi.temperature,
                "step_size": self.mppi.step_size,
                "discount": self.mppi.discount,
                "iterations": self.mppi.iterations,
            },
            "schedule": {
                "episodes": self.schedule.episodes,
                "episode_steps": self.schedule.episode_steps,
                "update_period": self.schedule.update_period,
                "minibatch_size": self.schedule.minibatch_size,
                "minibatch_count": self.schedule.minibatch_count,
                "target_iterations": self.schedule.target_iterations,
                "target_samples": self.schedule.target_samples,
                "buffer_capacity": self.schedule.buffer_capacity,
                "validation_episodes": self.schedule.validation_episodes,
            },
            "run": {
                "seed": self.seed,
                "out": self.out,
                "eval_episodes": self.eval_episodes,
                "record_wall_time": self.record_wall_time,
            },
        }


def _require(section: dict, section_name: str, key: str):
    if key not in section:
        raise ConfigError(f"{section_name}.{key}", "required key missing")
    return section[key]


def _section(mapping: dict, name: str, required: bool = True) -> dict:
    value = mapping.get(name)
    if value is None:
        if required:
            raise ConfigError(name, "required section missing")
        return {}
    if not isinstance(value, dict):
        raise ConfigError(name, f"expected a mapping, got {type(value).__name__}")
    return value


def parse_config(mapping: dict) -> ExperimentConfig:
    if not isinstance(mapping, dict):
        raise ConfigError("<root>", "config must be a mapping of sections")

    env_sec = _section(mapping, "env")
    env_name = _require(env_sec, "env", "name")
    env_overrides = {}
    for key in ("dt", "episode_steps"):
        if key in env_sec:
            env_overrides[key] = env_sec[key]
    if "true_params" in env_sec:
        env_overrides["true_params"] = {k: float(v)
                                        for k, v in env_sec["true_params"].items()}
    if "model_distribution" in env_sec:
        dist = {}
        for k, bounds in env_sec["model_distribution"].items():
            if not (isinstance(bounds, (list, tuple)) and len(bounds) == 2):
                raise ConfigError(f"env.model_distribution.{k}",
                                  "expected a [low, high] pair")
            dist[k] = (float(bounds[0]), float(bounds[1]))
        env_overrides["model_distribution"] = dist

    agent_sec = _section(mapping, "agent")
    agent = _require(agent_sec, "agent", "kind")
    if agent not in AGENT_KINDS:
        raise ConfigError("agent.kind", f"must be one of {AGENT_KINDS}, got {agent!r}")
    planner_model = agent_sec.get("planner_model", "biased")
    if agent == "mppi" and "planner_model" not in agent_sec:
        raise ConfigError("agent.planner_model",
                          "required for kind 'mppi' ('biased' or 'true')")
    if planner_model not in ("biased", "true"):
        raise ConfigError("agent.planner_model",
                          f"must be 'biased' or 'true', got {planner_model!r}")
    target_snapshot = bool(agent_sec.get("target_snapshot", False))

    mppi_sec = _section(mapping, "mppi")
    mppi_kwargs = {}
    for key in ("horizon", "samples", "temperature", "step_size", "discount", "sigma"):
        mppi_kwargs[key] = _require(mppi_sec, "mppi", key)
    mppi_kwargs["iterations"] = mppi_sec.get("iterations", 1)
    try:
        mppi = MPPIParams(
            horizon=int(mppi_kwargs["horizon"]),
            samples=int(mppi_kwargs["samples"]),
            temperature=float(mppi_kwargs["temperature"]),
            step_size=float(mppi_kwargs["step_size"]),
            discount=float(mppi_kwargs["discount"]),
            sigma=float(mppi_kwargs["sigma"]),
            iterations=int(mppi_kwargs["iterations"]),
        )
    except ValueError as e:
        raise ConfigError("mppi", str(e)) from e
    if agent == "softq":
        # one-step baseline always plans a single action; the echoed
        # config must show the horizon actually used
        mppi = replace(mppi, horizon=1)

    sched_sec = _section(mapping, "schedule", required=False)
    try:
        schedule = LearnerSchedule(**{k: int(v) for k, v in sched_sec.items()})
    except TypeError as e:
        raise ConfigError("schedule", str(e)) from e
    except ValueError as e:
        raise ConfigError("schedule", str(e)) from e

    run_sec = _section(mapping, "run")
    seed = _require(run_sec, "run", "seed")
    if not isinstance(seed, int):
        raise ConfigError("run.seed", f"must be an integer, got {seed!r}")
    eval_episodes = int(run_sec.get("eval_episodes", 20))
    if eval_episodes < 1:
        raise ConfigError("run.eval_episodes", "must be >= 1")

    cfg = ExperimentConfig(
        env_name=env_name,
        env_overrides=env_overrides,
        agent=agent,
        planner_model=planner_model,
        target_snapshot=target_snapshot,
        mppi=mppi,
        schedule=schedule,
        seed=seed,
        out=run_sec.get("out"),
        eval_episodes=eval_episodes,
        record_wall_time=bool(run_sec.get("record_wall_time", False)),
    )
    try:
        cfg.make_env()
    except (ValueError, TypeError) as e:
        raise ConfigError("env", str(e)) from e
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            mapping = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigError(str(path), "config file not found")
    except yaml.YAMLError as e:
        raise ConfigError(str(path), f"could not parse: {e}")
    return parse_config(mapping)


def echo_config(cfg: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(cfg.to_mapping(), f, sort_keys=False)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def write_metrics_csv(path, rows) -> None:
    """Rows are mappings with exactly the documented column set."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[col]) for col in CSV_COLUMNS])


def read_metrics_csv(path) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


class RunLog:
    """Plain-text sidecar log; the one artifact allowed to hold timestamps."""

    def __init__(self, path):
        self.path = Path(path)
        self.path.write_text("", encoding="utf-8")

    def write(self, message: str) -> None:
        stamp = time.strftime("%Y-%m-%d %H:%M:%S")
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(f"[{stamp}] {message}\n")


@dataclass
class EvalReport:
    episodes: int
    mean_cost: float
    std_cost: float
    success_rate: float
    rows: list

    def __post_init__(self):
        if not (0.0 <= self.success_rate <= 1.0):
            raise ValueError(f"success rate {self.success_rate} outside [0, 1]")
        if len(self.rows) != self.episodes:
            raise ValueError(f"{len(self.rows)} rows for {self.episodes} episodes")


def evaluate(checkpoint, env: Environment, n_episodes: int, horizon: int | None,
             seed: int, *, mppi_params: MPPIParams, planner_model: str = "biased",
             agent_label: str = "eval", record_wall_time: bool = False) -> EvalReport:
    """Greedy receding-horizon rollouts against the true-parameter plant.

    ``checkpoint`` is a checkpoint path, a callable q(obs, act), or None
    for a zero terminal value. The planner's model parameters are drawn
    per episode from the task's distribution unless planner_model is
    "true". Episode e uses the substream ("eval-e") of ``seed``, so two
    agents evaluated with the same seed face identical initial states.
    """
    if n_episodes < 1:
        raise ValueError(f"n_episodes must be >= 1, got {n_episodes}")
    if checkpoint is None:
        q_fn = zero_q_fn
    elif callable(checkpoint):
        q_fn = checkpoint
    else:
        q = QFunction.load(checkpoint)
        if (q.obs_dim, q.action_dim) != (env.spec.obs_dim, env.spec.action_dim):
            raise ValueError(
                f"checkpoint dimensions ({q.obs_dim}, {q.action_dim}) do not match "
                f"environment ({env.spec.obs_dim}, {env.spec.action_dim})")
        q_fn = q
    params = mppi_params if horizon is None else replace(mppi_params, horizon=horizon)

    root = RngStream(seed)
    rows = []
    costs = []
    successes = []
    for i in range(n_episodes):
        rng = root.substream(f"eval-{i}")
        planner_params = env.spec.true_params if planner_model == "true" else None
        rec = collect_episode(env, q_fn, params, rng, buffer=None,
                              planner_params=planner_params)
        costs.append(rec.total_cost)
        successes.append(rec.success)
        rows.append({
            "episode": i, "seed": seed, "agent": agent_label,
            "horizon": params.horizon, "total_cost": rec.total_cost,
            "success": rec.success, "mean_free_energy": rec.mean_free_energy,
            "mean_td_error": 0.0,
            "wall_seconds": rec.wall_seconds if record_wall_time else 0.0,
        })
    return EvalReport(episodes=n_episodes, mean_cost=float(np.mean(costs)),
                      std_cost=float(np.std(costs)),
                      success_rate=float(np.mean(successes)), rows=rows)


def _train_rows(cfg: ExperimentConfig, result) -> list[dict]:
    rows = []
    for m in result.episodes:
        rows.append({
            "episode": m.episode, "seed": cfg.seed, "agent": cfg.agent_label,
            "horizon": cfg.mppi.horizon, "total_cost": m.total_cost,
            "success": m.success, "mean_free_energy": m.mean_free_energy,
            "mean_td_error": m.mean_td_error,
            "wall_seconds": m.wall_seconds if cfg.record_wall_time else 0.0,
        })
    return rows


def run(cfg: ExperimentConfig, out_dir=None) -> int:
    """Execute one configured experiment; artifacts land in the out dir."""
    out = Path(out_dir if out_dir is not None else cfg.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    cfg = replace(cfg, out=str(out))
    echo_config(cfg, out / "config_echo.yaml")
    log = RunLog(out / "run.log")
    log.write(f"run start: agent={cfg.agent_label} env={cfg.env_name} seed={cfg.seed}")
    t0 = time.perf_counter()
    env = cfg.make_env()

    if cfg.agent == "mppi":
        report = evaluate(None, env, cfg.eval_episodes, None, cfg.seed,
                          mppi_params=cfg.mppi, planner_model=cfg.planner_model,
                          agent_label=cfg.agent_label,
                          record_wall_time=cfg.record_wall_time)
        write_metrics_csv(out / "metrics.csv", report.rows)
        summary = {"episodes": report.episodes, "mean_cost": report.mean_cost,
                   "std_cost": report.std_cost, "success_rate": report.success_rate}
        with open(out / "eval_report.yaml", "w", encoding="utf-8") as f:
            yaml.safe_dump(summary, f, sort_keys=False)
        log.write(f"evaluation done: mean_cost={report.mean_cost:.3f} "
                  f"success_rate={report.success_rate:.3f}")
    else:
        train_cfg = TrainConfig(env=env, mppi=cfg.mppi, schedule=cfg.schedule,
                                seed=cfg.seed, use_target_snapshot=cfg.target_snapshot)
        trainer = {"mpq": mpq_train, "mpq_dr": train_domain_randomized,
                   "softq": train_softq_baseline}[cfg.agent]
        result = trainer(train_cfg)
        write_metrics_csv(out / "metrics.csv", _train_rows(cfg, result))
        from .qfunction import save_checkpoint
        save_checkpoint(out / "final.qnet", result.final_params,
                        env.spec.obs_dim, env.spec.action_dim)
        save_checkpoint(out / "best.qnet", result.best_params,
                        env.spec.obs_dim, env.spec.action_dim)
        log.write(f"training done: episodes={len(result.episodes)} "
                  f"validation_points={len(result.validation_costs)}")
    log.write(f"wall seconds: {time.perf_counter() - t0:.3f}")
    return EXIT_OK


def run_eval(cfg: ExperimentConfig, out_dir=None, checkpoint=None,
             n_episodes=None, horizon=None) -> int:
    """Evaluate a trained (or plain) agent; writes metrics.csv + report."""
    out = Path(out_dir if out_dir is not None else cfg.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    env = cfg.make_env()
    log = RunLog(out / "eval.log")
    if checkpoint is None and cfg.agent != "mppi":
        candidate = Path(cfg.out or ".") / "best.qnet"
        if not candidate.exists():
            raise ConfigError("run.out",
                              f"no checkpoint at {candidate}; pass --checkpoint")
        checkpoint = candidate
    planner = cfg.planner_model if cfg.agent == "mppi" else "biased"
    report = evaluate(checkpoint, env,
                      n_episodes if n_episodes is not None else cfg.eval_episodes,
                      horizon, cfg.seed, mppi_params=cfg.mppi,
                      planner_model=planner, agent_label=cfg.agent_label,
                      record_wall_time=cfg.record_wall_time)
    write_metrics_csv(out / "metrics.csv", report.rows)
    summary = {"episodes": report.episodes, "mean_cost": report.mean_cost,
               "std_cost": report.std_cost, "success_rate": report.success_rate}
    with open(out / "eval_report.yaml", "w", encoding="utf-8") as f:
        yaml.safe_dump(summary, f, sort_keys=False)
    log.write(f"eval done: mean_cost={report.mean_cost:.3f} "
              f"success_rate={report.success_rate:.3f}")
    return EXIT_OK


def _cell_label(cell: dict) -> str:
    agent = cell.get("agent", "mppi")
    label = agent.replace("_", "-")
    if agent == "mppi":
        label = f"mppi-{cell.get('planner_model', 'biased')}"
    horizon = cell.get("horizon")
    return f"{label}-h{horizon}" if horizon is not None else label


def baseline_matrix(suite_mapping: dict, out_dir) -> int:
    """Run every (cell, seed) combination; emit reports + one combined CSV.

    A failing cell is recorded in status.yaml and the suite continues;
    the exit status flags partial completion.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    suite_sec = _section(suite_mapping, "suite")
    seeds = suite_sec.get("seeds", [0])
    if not (isinstance(seeds, list) and seeds and all(isinstance(s, int) for s in seeds)):
        raise ConfigError("suite.seeds", "expected a non-empty list of integers")
    cells = suite_mapping.get("cells")
    if not (isinstance(cells, list) and cells):
        raise ConfigError("cells", "expected a non-empty list of cell mappings")

    base = {k: copy.deepcopy(v) for k, v in suite_mapping.items()
            if k in ("env", "mppi", "schedule")}
    base.setdefault("agent", {})
    base.setdefault("run", {})
    base["run"].setdefault("eval_episodes", suite_sec.get("eval_episodes", 20))

    combined = []
    status = {}
    for cell in cells:
        label = _cell_label(cell)
        for seed in seeds:
            cell_dir = out / f"{label}-seed{seed}"
            mapping = copy.deepcopy(base)
            mapping["agent"]["kind"] = cell.get("agent", "mppi")
            if "planner_model" in cell:
                mapping["agent"]["planner_model"] = cell["planner_model"]
            if "target_snapshot" in cell:
                mapping["agent"]["target_snapshot"] = cell["target_snapshot"]
            if "horizon" in cell:
                mapping.setdefault("mppi", {})["horizon"] = cell["horizon"]
            for key in ("episodes", "update_period", "episode_steps"):
                if key in cell:
                    mapping.setdefault("schedule", {})[key] = cell[key]
            mapping["run"]["seed"] = seed
            mapping["run"]["out"] = str(cell_dir)
            try:
                cfg = parse_config(mapping)
                run(cfg, cell_dir)
                combined.extend(read_metrics_csv(cell_dir / "metrics.csv"))
                status[f"{label}-seed{seed}"] = "ok"
            except Exception as e:  # noqa: BLE001 - cell isolation is the point
                status[f"{label}-seed{seed}"] = f"error: {e}"

    with open(out / "combined.csv", "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in combined:
            writer.writerow([row[col] for col in CSV_COLUMNS])
    failed = [k for k, v in status.items() if v != "ok"]
    status_doc = {"cells": status, "complete": not failed}
    with open(out / "status.yaml", "w", encoding="utf-8") as f:
        yaml.safe_dump(status_doc, f, sort_keys=True)
    return EXIT_PARTIAL if failed else EXIT_OK


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out=args.out)
    if args.horizon is not None:
        if cfg.agent == "softq" and args.horizon != 1:
            raise ConfigError("mppi.horizon",
                              "kind 'softq' always plans with horizon 1")
        cfg = replace(cfg, mppi=replace(cfg.mppi, horizon=args.horizon))
    if args.episodes is not None:
        if cfg.agent == "mppi":
            cfg = replace(cfg, eval_episodes=args.episodes)
        else:
            cfg = replace(cfg, schedule=replace(cfg.schedule, episodes=args.episodes))
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qmpc",
        description="Sampling-based MPC with learned terminal values: "
                    "train, evaluate, and compare agents.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (("run", "train or evaluate a single configured agent"),
                            ("eval", "evaluate a checkpoint with greedy MPC"),
                            ("suite", "run a matrix of agents/horizons/seeds")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the YAML config")
        p.add_argument("--seed", type=int, default=None, help="override run.seed")
        p.add_argument("--out", default=None, help="override the output directory")
        p.add_argument("--episodes", type=int, default=None,
                       help="override episode count (training or evaluation)")
        p.add_argument("--horizon", type=int, default=None, help="override mppi.horizon")
        if name == "eval":
            p.add_argument("--checkpoint", default=None,
                           help="checkpoint file (defaults to the run's best.qnet)")
    args = parser.parse_args(argv)

    try:
        if args.command == "suite":
            with open(args.config, "r", encoding="utf-8") as f:
                mapping = yaml.safe_load(f)
            if args.seed is not None:
                mapping.setdefault("suite", {})["seeds"] = [args.seed]
            out = args.out or mapping.get("suite", {}).get("out") or "suite_out"
            return baseline_matrix(mapping, out)
        cfg = _apply_overrides(load_config(args.config), args)
        if cfg.out is None:
            raise ConfigError("run.out", "set run.out in the config or pass --out")
        if args.command == "run":
            return run(cfg)
        return run_eval(cfg, out_dir=cfg.out, checkpoint=args.checkpoint,
                        n_episodes=args.episodes, horizon=args.horizon)
    except ConfigError as e:
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(str(e), file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, ValueError) as e:
        print(f"run aborted: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
