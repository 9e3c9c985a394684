"""Hand-built worlds: a formed chain, a pinned three-robot chain and a free cluster."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .connectivity import chain_links
from .engine import WorldState, kill, sample_positions, step, world_from_robots
from .model import ROOT_ID, ControlParams, Pose2D, RobotState, Role, Target

CHAIN = 0
WARMUP_STEPS = 30


def chain_world(n_relays: int = 3, seed: int = 0, params: ControlParams | None = None) -> WorldState:
    """Root, ``n_relays`` networkers and a worker on one straight chain.

    Robots sit ``d_s`` apart along a seeded random bearing with a little
    seeded jitter; the worker sits on its target. The chain is warmed up
    so every robot has heard its neighbours and the strands are in place.
    """
    params = params or ControlParams()
    rng = np.random.default_rng(seed)
    bearing = rng.uniform(-math.pi, math.pi)
    ux, uy = math.cos(bearing), math.sin(bearing)
    n = n_relays + 2
    robots = []
    for i in range(n):
        jx, jy = rng.normal(0.0, 0.02, size=2) if i else (0.0, 0.0)
        r = params.safe_distance * i
        robots.append(RobotState(i, Pose2D(r * ux + jx, r * uy + jy, bearing)))
    worker = n - 1
    target = Target(0, Pose2D(*robots[worker].pose.xy), 1)

    root = robots[ROOT_ID]
    root.role = root.previous_role = Role.ROOT
    for i in range(1, n):
        r = robots[i]
        r.role = r.previous_role = Role.WORKER if i == worker else Role.NETWORKER
        r.target_chain = CHAIN
        r.target_id = target.id
        r.parents[CHAIN] = i - 1
        r.parent_strands[CHAIN] = list(range(i + 1))
        r.last_heard[i - 1] = 0
        if i != worker:
            r.child_ids.append(i + 1)
            r.child_strands[CHAIN] = list(range(worker, i - 1, -1))
            r.last_heard[i + 1] = 0

    world = world_from_robots(robots, [target], params)
    for _ in range(WARMUP_STEPS):
        step(world)
    return world


@dataclass(frozen=True)
class RepairOutcome:
    restored_step: int | None
    # gap between the two robots either side of the dead one, at kill time and at repair
    gap_before: float
    gap_after: float
    moved: tuple[float, float]


def repair_scenario(seed: int, n_relays: int = 3, horizon: int = 400, params: ControlParams | None = None) -> RepairOutcome:
    """Kill the middle networker of a formed chain and time the repair.

    ``moved`` is how far each broken-end robot travelled toward the
    other's position at kill time.
    """
    world = chain_world(n_relays, seed, params)
    middle = 1 + n_relays // 2
    before, after = middle - 1, middle + 1
    a0 = np.array(world.robots[before].pose.xy)
    b0 = np.array(world.robots[after].pose.xy)
    kill(world, middle)
    p = world.params
    restored = None
    for k in range(1, horizon + 1):
        step(world)
        worker = world.robots[-1]
        if chain_links(world.robots, worker, p.comm_range) == 1:
            restored = k
            break
    a1 = np.array(world.robots[before].pose.xy)
    b1 = np.array(world.robots[after].pose.xy)
    axis = (b0 - a0) / np.linalg.norm(b0 - a0)
    return RepairOutcome(
        restored_step=restored,
        gap_before=float(np.linalg.norm(b0 - a0)),
        gap_after=float(np.linalg.norm(b1 - a1)),
        moved=(float((a1 - a0) @ axis), float((b0 - b1) @ axis)),
    )


def spring_world(seed: int, params: ControlParams | None = None) -> WorldState:
    """Root, one networker and a worker ``2 d_s`` out; the networker starts
    at a seeded random point within range of both ends."""
    params = params or ControlParams()
    rng = np.random.default_rng(seed)
    span = 2.0 * params.safe_distance
    while True:
        x = rng.uniform(span - params.comm_range, params.comm_range)
        y = rng.uniform(-params.comm_range, params.comm_range)
        if math.hypot(x, y) <= params.comm_range and math.hypot(x - span, y) <= params.comm_range:
            break
    robots = [
        RobotState(0, Pose2D(0.0, 0.0, 0.0), Role.ROOT, Role.ROOT),
        RobotState(1, Pose2D(x, y, rng.uniform(-math.pi, math.pi)), Role.NETWORKER, Role.NETWORKER),
        RobotState(2, Pose2D(span, 0.0, 0.0), Role.WORKER, Role.WORKER),
    ]
    target = Target(0, Pose2D(span, 0.0), 1)
    for r in robots[1:]:
        r.target_chain = CHAIN
        r.target_id = target.id
        r.parents[CHAIN] = r.id - 1
        r.last_heard[r.id - 1] = 0
    robots[1].child_ids.append(2)
    robots[1].last_heard[2] = 0
    return world_from_robots(robots, [target], params)


def spring_settle(seed: int, steps: int = 200, params: ControlParams | None = None) -> tuple[float, float]:
    """Run :func:`spring_world` with the worker held in place; return the
    root-networker and networker-worker distances after ``steps``."""
    world = spring_world(seed, params)
    pin = world.robots[2].pose
    for _ in range(steps):
        step(world)
        world.robots[2].pose = pin
    r, m, w = (world.robots[i].pose for i in range(3))
    return r.distance_to(m), m.distance_to(w)


def free_cluster(seed: int, n_free: int = 10, params: ControlParams | None = None) -> WorldState:
    """A static root and ``n_free`` free robots dropped in a 1.5 m disc."""
    params = params or ControlParams()
    rng = np.random.default_rng(seed)
    xy = sample_positions(n_free + 1, 1.5, params.comm_range, rng)
    robots = [RobotState(i, Pose2D(float(x), float(y), rng.uniform(-math.pi, math.pi))) for i, (x, y) in enumerate(xy)]
    robots[ROOT_ID].role = robots[ROOT_ID].previous_role = Role.ROOT
    return world_from_robots(robots, [], params)
