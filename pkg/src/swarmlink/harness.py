"""Experiment matrices, multi-seed statistics and the perfect-world baseline."""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .engine import RunResult, run, spawn_initial
from .model import ConfigError, ExperimentConfig

THREADS_ENV = "SWARMLINK_THREADS"

SUMMARY_COLUMNS = (
    "name", "n_robots", "links_per_target", "failure_probability", "n_seeds", "successes",
    "success_rate", "median_steps", "min_steps", "max_steps", "bw_max", "bw_median", "bw_min",
    "baseline_steps",
)


FAULT_PROBABILITIES = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7)


def nominal_matrix(n_seeds: int | None = 35, base: ExperimentConfig | None = None) -> list[ExperimentConfig]:
    """The link-count sweep: 20/1, 40/2, 60/3 and 80/4 robots/links.

    Every other field comes from ``base``; ``n_seeds=None`` keeps its seed count.
    """
    base = base or ExperimentConfig()
    seeds = base.n_seeds if n_seeds is None else n_seeds
    return [
        base.replace(name=f"n{n}_l{links}", n_robots=n, links_per_target=links, n_seeds=seeds)
        for n, links in ((20, 1), (40, 2), (60, 3), (80, 4))
    ]


def fault_matrix(
    n_robots: int = 40,
    links: int = 2,
    probabilities: Sequence[float] = FAULT_PROBABILITIES,
    n_seeds: int | None = 35,
    base: ExperimentConfig | None = None,
) -> list[ExperimentConfig]:
    """The failure-probability sweep at a fixed robot and link count."""
    base = base or ExperimentConfig()
    seeds = base.n_seeds if n_seeds is None else n_seeds
    return [
        base.replace(
            name=f"n{n_robots}_l{links}_p{p:g}",
            n_robots=n_robots,
            links_per_target=links,
            failure_probability=p,
            n_seeds=seeds,
        )
        for p in probabilities
    ]


# --- baseline -------------------------------------------------------------------


def final_slots(config: ExperimentConfig) -> np.ndarray:
    """Positions of every non-root robot in the ideal final topology.

    Each chain has relays every ``d_s`` along the root-target ray (chains of
    one target share the ray) and the worker sits on the target.
    """
    d_s = config.control.safe_distance
    slots = []
    for t in config.targets():
        tx, ty = t.position.xy
        dist = math.hypot(tx, ty)
        relays = max(0, math.ceil(dist / d_s - 1e-9) - 1)
        ux, uy = (tx / dist, ty / dist) if dist > 0 else (1.0, 0.0)
        for _ in range(t.required_links):
            slots.extend((ux * d_s * k, uy * d_s * k) for k in range(1, relays + 1))
        slots.append((tx, ty))
    return np.array(slots, dtype=float).reshape(-1, 2)


def bottleneck_assignment(start: np.ndarray, goal: np.ndarray) -> tuple[float, np.ndarray]:
    """Match every goal to a distinct start, minimizing the longest trip.

    Returns the bottleneck distance and, per goal, the index of its start.
    """
    start = np.asarray(start, dtype=float).reshape(-1, 2)
    goal = np.asarray(goal, dtype=float).reshape(-1, 2)
    if len(goal) == 0:
        return 0.0, np.zeros(0, dtype=int)
    if len(goal) > len(start):
        raise ConfigError(f"{len(goal)} slots but only {len(start)} robots")
    dist = np.sqrt(((goal[:, None, :] - start[None, :, :]) ** 2).sum(-1))
    levels = np.unique(dist)
    lo, hi = 0, len(levels) - 1
    best = None
    while lo <= hi:
        mid = (lo + hi) // 2
        match = maximum_bipartite_matching(csr_matrix(dist <= levels[mid]), perm_type="column")
        if np.all(match >= 0):
            best = (float(levels[mid]), match)
            hi = mid - 1
        else:
            lo = mid + 1
    assert best is not None
    return best


def baseline_steps(start: np.ndarray, goal: np.ndarray, max_speed: float, dt: float) -> int:
    longest, _ = bottleneck_assignment(start, goal)
    # tolerance keeps exact multiples such as 4 m at 0.1 m/step from rounding up
    return int(math.ceil(longest / (max_speed * dt) - 1e-9))


def optimal_baseline(config: ExperimentConfig, seed: int = 0) -> int:
    """Steps for a perfect-world swarm to reach the final topology.

    Robots drive straight to their slots at ``max_speed`` with no collisions
    and no control lag; the slowest robot sets the time.
    """
    world = spawn_initial(config, seed)
    xy = world.xy()[1:]
    p = config.control
    return baseline_steps(xy, final_slots(config), p.max_speed, p.dt)


# --- sweeps -----------------------------------------------------------------------


@dataclass
class ConfigSummary:
    config: ExperimentConfig
    completion: list[int | None]
    bandwidth: list[dict[str, float]]
    baseline: int
    lambda2_trace: list[tuple[int, float]] = field(default_factory=list)

    @property
    def successes(self) -> list[int]:
        return [c for c in self.completion if c is not None]

    @property
    def success_rate(self) -> float:
        return len(self.successes) / len(self.completion)

    def median_steps(self) -> float | None:
        ok = self.successes
        return float(np.median(ok)) if ok else None

    def row(self) -> dict[str, object]:
        ok = self.successes
        bw = {k: float(np.median([b[k] for b in self.bandwidth])) for k in ("max", "median", "min")}
        c = self.config
        return {
            "name": c.name,
            "n_robots": c.n_robots,
            "links_per_target": c.links_per_target,
            "failure_probability": c.failure_probability,
            "n_seeds": len(self.completion),
            "successes": len(ok),
            "success_rate": self.success_rate,
            "median_steps": self.median_steps() if ok else "",
            "min_steps": min(ok) if ok else "",
            "max_steps": max(ok) if ok else "",
            "bw_max": bw["max"],
            "bw_median": bw["median"],
            "bw_min": bw["min"],
            "baseline_steps": self.baseline,
        }


@dataclass
class SweepSummary:
    rows: list[ConfigSummary]
    runs: dict[tuple[str, int], RunResult]

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS, lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow(r.row())
        return path

    def write_plot_data(self, path: str | Path) -> Path:
        """Tidy long table: one row per (config, seed, step, metric)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("config", "seed", "step", "metric", "value"))
            for (name, seed), res in sorted(self.runs.items()):
                rep = res.report
                w.writerow((name, seed, rep.steps_run, "completion", rep.completion_step if rep.success else ""))
                for k, v in rep.bandwidth_stats().items():
                    w.writerow((name, seed, rep.steps_run, f"bandwidth_{k}", v))
                for rec in res.records:
                    w.writerow((name, seed, rec.step, "lambda2", rec.lambda2))
        return path


def _worker_count(requested: int | None) -> int:
    env = os.environ.get(THREADS_ENV)
    cap = os.cpu_count() or 1
    if env:
        try:
            cap = max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from exc
    return max(1, min(cap, requested or cap))


def _run_one(args: tuple[ExperimentConfig, int]) -> RunResult:
    config, seed = args
    return run(config, seed)


def run_seeds(config: ExperimentConfig, seeds: Sequence[int], workers: int | None = None) -> list[RunResult]:
    jobs = [(config, s) for s in seeds]
    n = _worker_count(workers)
    if n == 1 or len(jobs) == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(_run_one, jobs))


def _median_trace(results: Sequence[RunResult]) -> list[tuple[int, float]]:
    by_step: dict[int, list[float]] = {}
    for res in results:
        for rec in res.records:
            by_step.setdefault(rec.step, []).append(rec.lambda2)
    return [(s, float(np.median(v))) for s, v in sorted(by_step.items())]


def run_sweep(
    matrix: Sequence[ExperimentConfig],
    out_dir: str | Path | None = None,
    workers: int | None = None,
) -> SweepSummary:
    """Run seeds ``0..n_seeds-1`` of every config and aggregate.

    With ``out_dir`` each run's metrics and report are written as
    ``{name}_seed{k}.csv`` / ``.json``, the summary as ``summary.csv`` and
    the long-format table as ``plot_data.csv``.
    """
    for c in matrix:
        c.validate()
    jobs = [(c, s) for c in matrix for s in range(c.n_seeds)]
    n = _worker_count(workers)
    if n == 1 or len(jobs) == 1:
        results = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            results = list(pool.map(_run_one, jobs))
    runs: dict[tuple[str, int], RunResult] = {}
    rows = []
    i = 0
    for c in matrix:
        mine = results[i : i + c.n_seeds]
        i += c.n_seeds
        for s, res in enumerate(mine):
            runs[(c.name, s)] = res
            if out_dir is not None:
                res.write(out_dir, f"{c.name}_seed{s}")
        rows.append(
            ConfigSummary(
                config=c,
                completion=[r.report.completion_step for r in mine],
                bandwidth=[r.report.bandwidth_stats() for r in mine],
                baseline=optimal_baseline(c, 0),
                lambda2_trace=_median_trace(mine),
            )
        )
    summary = SweepSummary(rows, runs)
    if out_dir is not None:
        summary.write_csv(Path(out_dir) / "summary.csv")
        summary.write_plot_data(Path(out_dir) / "plot_data.csv")
    return summary
