"""Learning curves with seed bands, and success tables, from metrics CSVs.

The input is the experiment runner's combined CSV (one row per episode
per agent per seed). Everything here is a pure function of that file:
rows are grouped, each seed's curve is smoothed with a trailing window,
and the group's band is the min/max or mean±std spread across seeds at
each x. Agents whose rows form a flat evaluation baseline can be drawn
as a dashed reference line instead of a curve.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

BAND_MODES = ("minmax", "std")


@dataclass(frozen=True)
class CurveSpec:
    """What to plot: columns, grouping, smoothing, and band flavor."""

    x: str = "episode"
    y: str = "total_cost"
    group_by: tuple[str, ...] = ("agent", "horizon")
    smoothing: int = 10  # trailing window in episodes; 1 = raw
    band: str = "minmax"

    def __post_init__(self):
        if self.smoothing < 1:
            raise ValueError(f"smoothing window must be >= 1, got {self.smoothing}")
        if self.band not in BAND_MODES:
            raise ValueError(f"band must be one of {BAND_MODES}, got {self.band!r}")

    @property
    def columns(self) -> tuple[str, ...]:
        return (self.x, self.y, *self.group_by, "seed")


@dataclass(frozen=True)
class AggregatedCurve:
    """Seed-aggregated line: mean with a lower/upper band, one point per x."""

    x: np.ndarray
    mean: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    seeds: int


@dataclass
class RenderResult:
    """The numbers behind a rendered figure, keyed by group label."""

    curves: dict = field(default_factory=dict)
    references: dict = field(default_factory=dict)  # label -> mean y


def load_rows(path) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return rows


def _check_columns(rows: list[dict], needed) -> None:
    have = rows[0].keys()
    for col in needed:
        if col not in have:
            raise ValueError(f"CSV has no column {col!r}")


def smooth_trailing(values: np.ndarray, window: int) -> np.ndarray:
    """Trailing moving average; the window is truncated at the start."""
    values = np.asarray(values, dtype=float)
    if window <= 1:
        return values.copy()
    out = np.empty_like(values)
    for i in range(len(values)):
        out[i] = values[max(0, i - window + 1):i + 1].mean()
    return out


def _seed_curve(rows: list[dict], x: str, y: str) -> tuple[np.ndarray, np.ndarray]:
    """One seed's (x, y) series, sorted by x, duplicate x averaged."""
    by_x = defaultdict(list)
    for r in rows:
        by_x[float(r[x])].append(float(r[y]))
    xs = np.array(sorted(by_x))
    ys = np.array([np.mean(by_x[v]) for v in xs])
    return xs, ys


def aggregate_group(rows: list[dict], spec: CurveSpec) -> AggregatedCurve:
    """Smooth each seed's curve, then spread statistics across seeds.

    At each x the statistics run over the seeds that recorded it, so
    ragged inputs degrade gracefully instead of erroring.
    """
    by_seed = defaultdict(list)
    for r in rows:
        by_seed[r["seed"]].append(r)
    per_seed = {}
    for seed, seed_rows in by_seed.items():
        xs, ys = _seed_curve(seed_rows, spec.x, spec.y)
        per_seed[seed] = (xs, smooth_trailing(ys, spec.smoothing))

    grid = np.array(sorted({float(v) for xs, _ in per_seed.values() for v in xs}))
    mean = np.empty_like(grid)
    lo = np.empty_like(grid)
    hi = np.empty_like(grid)
    for i, xv in enumerate(grid):
        at_x = [ys[np.searchsorted(xs, xv)]
                for xs, ys in per_seed.values()
                if xv in xs]
        at_x = np.array(at_x)
        mean[i] = at_x.mean()
        if spec.band == "minmax":
            lo[i], hi[i] = at_x.min(), at_x.max()
        else:
            sd = at_x.std()
            lo[i], hi[i] = mean[i] - sd, mean[i] + sd
    return AggregatedCurve(x=grid, mean=mean, lo=lo, hi=hi, seeds=len(per_seed))


def _group_label(key: tuple, group_by: tuple[str, ...]) -> str:
    parts = []
    for col, val in zip(group_by, key):
        parts.append(f"h{val}" if col == "horizon" else str(val))
    return " ".join(parts)


def render_curves(csv_path, spec: CurveSpec, out_path,
                  reference: str | None = "mppi-true") -> RenderResult:
    """Draw one seed-banded line per group; flat baselines become dashed.

    Rows whose agent equals ``reference`` are collapsed to their mean y
    and drawn as a horizontal dashed line (skipped silently when absent).
    Returns the aggregation behind every line so callers can audit it.
    """
    rows = load_rows(csv_path)
    _check_columns(rows, spec.columns)

    groups = defaultdict(list)
    for r in rows:
        groups[tuple(r[col] for col in spec.group_by)].append(r)

    result = RenderResult()
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for key in sorted(groups):
        label = _group_label(key, spec.group_by)
        group_rows = groups[key]
        if reference is not None and "agent" in spec.group_by and \
                key[spec.group_by.index("agent")] == reference:
            level = float(np.mean([float(r[spec.y]) for r in group_rows]))
            result.references[label] = level
            ax.axhline(level, linestyle="--", color="0.45", linewidth=1.4,
                       label=f"{label} (reference)")
            continue
        curve = aggregate_group(group_rows, spec)
        result.curves[label] = curve
        line, = ax.plot(curve.x, curve.mean, label=label, linewidth=1.6)
        ax.fill_between(curve.x, curve.lo, curve.hi,
                        color=line.get_color(), alpha=0.2, linewidth=0)
    ax.set_xlabel(spec.x)
    ax.set_ylabel(spec.y if spec.smoothing == 1
                  else f"{spec.y} (trailing {spec.smoothing}-episode mean)")
    ax.grid(True, alpha=0.3)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return result


def render_success_table(csv_path, out_path) -> dict:
    """Mean success per agent, written as markdown (.md) or an image."""
    rows = load_rows(csv_path)
    _check_columns(rows, ("agent", "success"))
    by_agent = defaultdict(list)
    for r in rows:
        by_agent[r["agent"]].append(float(r["success"]))
    table = {agent: float(np.mean(vals)) for agent, vals in sorted(by_agent.items())}

    out_path = Path(out_path)
    if out_path.suffix == ".md":
        lines = ["| agent | success rate |", "| --- | --- |"]
        lines += [f"| {agent} | {rate:.3f} |" for agent, rate in table.items()]
        out_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        fig, ax = plt.subplots(figsize=(4.0, 0.6 + 0.4 * len(table)))
        ax.axis("off")
        cells = [[agent, f"{rate:.3f}"] for agent, rate in table.items()]
        ax.table(cellText=cells, colLabels=["agent", "success rate"],
                 loc="center", cellLoc="left")
        fig.tight_layout()
        fig.savefig(out_path, dpi=150)
        plt.close(fig)
    return table
