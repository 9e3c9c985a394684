"""Deterministic step loop, broadcast medium and fault injector."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .connectivity import CONNECTIVITY_TOL, evaluate_constraints, fiedler_value, graph_from_xy, is_connected_bfs
from .controllers import MissionContext, NeighborView, assign_worker, decide
from .kinematics import integrate, resolve_collisions, track_velocity
from .model import ROOT_ID, ConfigError, ControlParams, ExperimentConfig, Pose2D, RobotState, Role, Target
from .protocol import Envelope, outbox_size

MIN_SEPARATION = 0.2
MAX_SPAWN_ATTEMPTS = 10_000
ELIGIBLE_ROLES = frozenset({Role.NETWORKER, Role.WORKER})

METRIC_COLUMNS = (
    "step", "lambda2", "alive", "n_free", "n_networker", "n_worker",
    "max_bw", "median_bw", "min_bw", "targets_reached", "total_links",
)


class SpawnError(RuntimeError):
    """Raised when no connected, collision-free placement could be sampled."""


@dataclass(frozen=True)
class FaultPlan:
    """Fates drawn once per run: robot id -> step at which it goes silent.

    A fate only fires if the robot holds an eligible role at that step;
    otherwise it is void and the robot survives the run.
    """

    failure_probability: float
    fates: dict[int, int]
    eligible_roles: frozenset[Role] = ELIGIBLE_ROLES

    @classmethod
    def draw(cls, n_robots: int, probability: float, horizon: int, rng: np.random.Generator) -> FaultPlan:
        fails = rng.random(n_robots) < probability
        steps = rng.integers(0, horizon + 1, size=n_robots)
        fates = {i: int(steps[i]) for i in range(n_robots) if fails[i] and i != ROOT_ID}
        return cls(probability, fates)

    @classmethod
    def none(cls) -> FaultPlan:
        return cls(0.0, {})


@dataclass
class WorldState:
    step: int
    robots: list[RobotState]
    targets: list[Target]
    obstacles: tuple[tuple[float, float, float], ...]
    rng_seed: int
    pending_envelopes: list[Envelope]
    ctx: MissionContext
    faults: FaultPlan = field(default_factory=FaultPlan.none)
    bytes_sent: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    bytes_received: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    kills: list[tuple[int, int]] = field(default_factory=list)

    @property
    def params(self) -> ControlParams:
        return self.ctx.params

    def xy(self) -> np.ndarray:
        return np.array([r.pose.xy for r in self.robots], dtype=float)

    def alive_mask(self) -> np.ndarray:
        return np.array([r.alive for r in self.robots], dtype=bool)


@dataclass(frozen=True)
class MetricsRecord:
    step: int
    lambda2: float
    alive: int
    role_census: dict[str, int]
    bytes_sent: tuple[int, ...]
    bytes_received: tuple[int, ...]
    links_per_target: dict[int, int]
    targets_reached: dict[int, bool]

    @property
    def bandwidth(self) -> np.ndarray:
        # bytes a robot put on or took off the air this step, alive robots only
        used = np.array(self.bytes_sent) + np.array(self.bytes_received)
        return used

    def csv_row(self, alive_mask: Sequence[bool] | None = None) -> list[str]:
        bw = self.bandwidth
        if alive_mask is not None:
            bw = bw[np.asarray(alive_mask, dtype=bool)]
        if bw.size == 0:
            bw = np.zeros(1)
        return [
            str(self.step),
            repr(float(self.lambda2)),
            str(self.alive),
            str(self.role_census["free"]),
            str(self.role_census["networker"]),
            str(self.role_census["worker"]),
            str(int(bw.max())),
            repr(float(np.median(bw))),
            str(int(bw.min())),
            str(sum(self.targets_reached.values())),
            str(sum(self.links_per_target.values())),
        ]


@dataclass
class TerminationReport:
    success: bool
    completion_step: int | None
    steps_run: int
    seed: int
    config_name: str
    target_reach_step: dict[int, int | None]
    robots_per_chain: dict[int, int]
    final_links: dict[int, int]
    kills: list[tuple[int, int]]
    root_events: list[tuple[str, int, int | None]]
    # per-robot mean bytes/step (sent + received) over the steps it was alive
    mean_bandwidth: list[float]
    min_lambda2: float

    def bandwidth_stats(self) -> dict[str, float]:
        bw = np.array(self.mean_bandwidth)
        return {"max": float(bw.max()), "median": float(np.median(bw)), "min": float(bw.min())}

    def to_dict(self) -> dict:
        data = asdict(self)
        data["target_reach_step"] = {str(k): v for k, v in self.target_reach_step.items()}
        data["robots_per_chain"] = {str(k): v for k, v in self.robots_per_chain.items()}
        data["final_links"] = {str(k): v for k, v in self.final_links.items()}
        data["kills"] = [list(k) for k in self.kills]
        data["root_events"] = [list(e) for e in self.root_events]
        data["bandwidth"] = self.bandwidth_stats()
        return data

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class RunResult:
    records: list[MetricsRecord]
    report: TerminationReport
    # alive mask per record, used to restrict bandwidth stats to live robots
    alive_masks: list[tuple[bool, ...]]

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(METRIC_COLUMNS)
        for rec, mask in zip(self.records, self.alive_masks):
            w.writerow(rec.csv_row(mask))
        return buf.getvalue()

    def write(self, out_dir: str | Path, stem: str) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        metrics = out / f"{stem}.csv"
        report = out / f"{stem}.json"
        metrics.write_text(self.metrics_csv())
        report.write_text(self.report.dumps() + "\n")
        return metrics, report


# --- setup ---------------------------------------------------------------------


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    # separate streams keep placement identical across failure probabilities
    placement, faults = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(placement), np.random.default_rng(faults)


def sample_positions(n: int, radius: float, comm_range: float, rng: np.random.Generator) -> np.ndarray:
    """Root at the origin plus ``n - 1`` points in a disc, connected and spread."""
    for _ in range(MAX_SPAWN_ATTEMPTS):
        pts = [(0.0, 0.0)]
        tries = 0
        while len(pts) < n and tries < MAX_SPAWN_ATTEMPTS:
            tries += 1
            r = radius * math.sqrt(rng.random())
            a = 2.0 * math.pi * rng.random()
            p = (r * math.cos(a), r * math.sin(a))
            if all(math.hypot(p[0] - q[0], p[1] - q[1]) >= MIN_SEPARATION for q in pts):
                pts.append(p)
        if len(pts) < n:
            break
        xy = np.array(pts)
        if is_connected_bfs(graph_from_xy(xy, comm_range)):
            return xy
    raise SpawnError(f"could not place {n} robots in a disc of radius {radius}")


def spawn_initial(config: ExperimentConfig, seed: int) -> WorldState:
    config.validate()
    params = config.control
    placement_rng, fault_rng = _streams(seed)
    targets = config.targets()
    xy = sample_positions(config.n_robots, config.deploy_radius, params.comm_range, placement_rng)
    headings = placement_rng.uniform(-math.pi, math.pi, size=config.n_robots)
    robots = [RobotState(i, Pose2D(float(xy[i, 0]), float(xy[i, 1]), float(headings[i]))) for i in range(config.n_robots)]
    robots[ROOT_ID].role = robots[ROOT_ID].previous_role = Role.ROOT
    ctx = MissionContext.build(params, targets, (0.0, 0.0), config.obstacles)
    taken = {ROOT_ID}
    for t in sorted(targets, key=lambda t: t.id):
        tx, ty = t.position.xy
        candidates = [r for r in robots if r.id not in taken]
        best = min(candidates, key=lambda r: (math.hypot(r.pose.x - tx, r.pose.y - ty), r.id))
        assign_worker(best, t.id, ctx, 0)
        taken.add(best.id)
    faults = FaultPlan.draw(config.n_robots, config.failure_probability, config.max_steps, fault_rng)
    return WorldState(
        step=0,
        robots=robots,
        targets=targets,
        obstacles=tuple(config.obstacles),
        rng_seed=seed,
        pending_envelopes=[],
        ctx=ctx,
        faults=faults,
        bytes_sent=np.zeros(config.n_robots, dtype=np.int64),
        bytes_received=np.zeros(config.n_robots, dtype=np.int64),
    )


def world_from_robots(
    robots: list[RobotState], targets: list[Target], params: ControlParams, faults: FaultPlan | None = None
) -> WorldState:
    """Wrap hand-built robot states (for scenarios and tests) in a world."""
    n = len(robots)
    if [r.id for r in robots] != list(range(n)):
        raise ConfigError("robot ids must be 0..n-1 in order")
    return WorldState(
        step=0,
        robots=robots,
        targets=targets,
        obstacles=(),
        rng_seed=0,
        pending_envelopes=[],
        ctx=MissionContext.build(params, targets),
        faults=faults or FaultPlan.none(),
        bytes_sent=np.zeros(n, dtype=np.int64),
        bytes_received=np.zeros(n, dtype=np.int64),
    )


# --- one step ------------------------------------------------------------------


def _deliver(world: WorldState) -> list[NeighborView]:
    robots = world.robots
    n = len(robots)
    views = [NeighborView() for _ in range(n)]
    received = np.zeros(n, dtype=np.int64)
    envs = world.pending_envelopes
    if envs:
        senders = np.array([[e.sender_position.x, e.sender_position.y] for e in envs])
        here = world.xy()
        dist = np.sqrt(((here[:, None, :] - senders[None, :, :]) ** 2).sum(-1))
        alive = world.alive_mask()
        in_range = (dist <= world.params.comm_range) & alive[:, None]
        sizes = np.array([e.payload.wire_size for e in envs])
        sender_ids = np.array([e.sender_id for e in envs])
        in_range &= sender_ids[None, :] != np.arange(n)[:, None]
        received = (in_range * sizes[None, :]).sum(axis=1).astype(np.int64)
        for i, j in zip(*np.nonzero(in_range)):
            e = envs[j]
            views[i].add(e.sender_id, e.sender_position.xy, e.payload, int(i))
    world.bytes_received = received
    return views


def step(world: WorldState) -> WorldState:
    """Advance the world by one control step, in place, and return it."""
    params = world.params
    now = world.step
    views = _deliver(world)
    outboxes: list[list] = [[] for _ in world.robots]
    for i, robot in enumerate(world.robots):
        if not robot.alive:
            continue
        cmd, out, new_state = decide(robot, views[i], world.ctx, now)
        u = track_velocity(robot.pose, cmd, params)
        new_state.pose = integrate(robot.pose, u, params.dt)
        world.robots[i] = new_state
        outboxes[i] = out

    xy = world.xy()
    pinned = ~world.alive_mask()
    pinned[ROOT_ID] = True
    fixed = resolve_collisions(xy, params.robot_radius, pinned)
    for i in np.flatnonzero(np.any(fixed != xy, axis=1)):
        r = world.robots[i]
        r.pose = Pose2D(float(fixed[i, 0]), float(fixed[i, 1]), r.pose.theta)

    for rid, fail_step in world.faults.fates.items():
        if fail_step == now:
            r = world.robots[rid]
            if r.alive and r.role in world.faults.eligible_roles:
                r.alive = False
                outboxes[rid] = []
                world.kills.append((now, rid))

    envelopes = []
    sent = np.zeros(len(world.robots), dtype=np.int64)
    for i, out in enumerate(outboxes):
        if not out:
            continue
        pose = world.robots[i].pose
        sent[i] = outbox_size(out)
        envelopes.extend(Envelope(i, pose, m, now) for m in out)
    world.pending_envelopes = envelopes
    world.bytes_sent = sent
    world.step = now + 1
    return world


def kill(world: WorldState, robot_id: int) -> None:
    """Silence a robot immediately (scenario helper)."""
    if robot_id == ROOT_ID:
        raise ValueError("the root cannot fail")
    world.robots[robot_id].alive = False
    world.pending_envelopes = [e for e in world.pending_envelopes if e.sender_id != robot_id]
    world.kills.append((world.step, robot_id))


# --- metrics ------------------------------------------------------------------------


def lambda2_of(world: WorldState) -> float:
    alive = world.alive_mask()
    xy = world.xy()[alive]
    return fiedler_value(graph_from_xy(xy, world.params.comm_range))


def record_metrics(world: WorldState, lambda2: float | None = None) -> MetricsRecord:
    params = world.params
    if lambda2 is None:
        lambda2 = lambda2_of(world)
    report = evaluate_constraints(world.robots, world.targets, params.comm_range, params.move_threshold, lambda2)
    census = {"root": 0, "free": 0, "networker": 0, "worker": 0}
    for r in world.robots:
        if r.alive:
            census[r.role.name.lower()] += 1
    return MetricsRecord(
        step=world.step,
        lambda2=float(lambda2),
        alive=int(world.alive_mask().sum()),
        role_census=census,
        bytes_sent=tuple(int(b) for b in world.bytes_sent),
        bytes_received=tuple(int(b) for b in world.bytes_received),
        links_per_target=report.links_per_target,
        targets_reached=report.targets_reached,
    )


def mission_complete(world: WorldState) -> tuple[bool, dict[int, bool], dict[int, int]]:
    params = world.params
    rep = evaluate_constraints(world.robots, world.targets, params.comm_range, params.move_threshold, lambda2=0.0)
    ok = all(
        rep.targets_reached[t.id] and rep.links_per_target[t.id] >= t.required_links for t in world.targets
    )
    return ok, rep.targets_reached, rep.links_per_target


def robots_per_chain(world: WorldState) -> dict[int, int]:
    counts: dict[int, int] = {c: 0 for c in world.ctx.target_of_chain}
    for r in world.robots:
        if r.alive and r.role is Role.NETWORKER and r.target_chain in counts:
            counts[r.target_chain] += 1
    return counts


def simulate(world: WorldState, max_steps: int, sample_every: int = 10, config_name: str = "custom") -> RunResult:
    """Step until every target is reached with its links, or ``max_steps``."""
    n = len(world.robots)
    records: list[MetricsRecord] = []
    masks: list[tuple[bool, ...]] = []
    reach_step: dict[int, int | None] = {t.id: None for t in world.targets}
    bw_total = np.zeros(n, dtype=np.float64)
    alive_steps = np.zeros(n, dtype=np.int64)
    min_l2 = math.inf
    completion = None

    def sample() -> None:
        nonlocal min_l2
        rec = record_metrics(world)
        min_l2 = min(min_l2, rec.lambda2)
        records.append(rec)
        masks.append(tuple(bool(a) for a in world.alive_mask()))

    sample()
    while world.step < max_steps:
        step(world)
        alive = world.alive_mask()
        bw_total += np.where(alive, world.bytes_sent + world.bytes_received, 0)
        alive_steps += alive
        done, reached, _ = mission_complete(world)
        for tid, hit in reached.items():
            if hit and reach_step[tid] is None:
                reach_step[tid] = world.step
        if done:
            completion = world.step
            sample()
            break
        if world.step % sample_every == 0:
            sample()

    _, _, links = mission_complete(world)
    root = world.robots[ROOT_ID]
    report = TerminationReport(
        success=completion is not None,
        completion_step=completion,
        steps_run=world.step,
        seed=world.rng_seed,
        config_name=config_name,
        target_reach_step=reach_step,
        robots_per_chain=robots_per_chain(world),
        final_links=links,
        kills=list(world.kills),
        root_events=[tuple(e) for e in root.memo.get("events", [])],
        mean_bandwidth=[float(b) for b in bw_total / np.maximum(alive_steps, 1)],
        min_lambda2=float(min_l2),
    )
    return RunResult(records, report, masks)


def run(config: ExperimentConfig, seed: int = 0) -> RunResult:
    world = spawn_initial(config, seed)
    return simulate(world, config.max_steps, config.sample_every, config.name)


def connected(lambda2: float) -> bool:
    return lambda2 > CONNECTIVITY_TOL


def run_records(config: ExperimentConfig, seeds: Iterable[int]) -> list[RunResult]:
    return [run(config, s) for s in seeds]
