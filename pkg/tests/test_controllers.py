import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from swarmlink.controllers import (
    MissionContext,
    NeighborView,
    free_control,
    lennard_jones_velocity,
    networker_control,
    obstacle_avoidance,
    root_control,
    spring_velocity,
    worker_control,
)
from swarmlink.engine import spawn_initial, step
from swarmlink.model import ControlParams, ExperimentConfig, Pose2D, RobotState, Role, Target
from swarmlink.protocol import Direction, RequestKind, RequestResponseMessage, StatusMessage, StrandInfoMessage
from swarmlink.scenarios import free_cluster, repair_scenario, spring_settle

P = ControlParams()


def _view(neighbours):
    """neighbours: id -> (xy, role, chain, need)."""
    v = NeighborView()
    for rid, (xy, role, chain, need) in neighbours.items():
        v.positions[rid] = xy
        v.status[rid] = StatusMessage(role, Role.FREE, need, chain)
    return v


def _kinds(outbox):
    return [m.kind for m in outbox if isinstance(m, RequestResponseMessage)]


def _vec(cmd):
    return np.array([cmd.vx, cmd.vy])


# --- laws ---


def test_spring_at_rest_length():
    assert spring_velocity(1.4, (1.0, 0.0), 0.8, 1.4) == (0.0, 0.0)


def test_spring_stretched_pulls_toward():
    v = spring_velocity(2.0, (1.0, 0.0), 0.8, 1.4)
    assert v == pytest.approx((0.48, 0.0))


def test_spring_compressed_pushes_away():
    v = spring_velocity(1.0, (1.0, 0.0), 0.8, 1.4)
    assert v == pytest.approx((-0.32, 0.0))


def test_lj_zero_at_delta():
    assert lennard_jones_velocity(0.5, (1.0, 0.0), 60.0, 0.5) == pytest.approx((0.0, 0.0))


def test_lj_attracts_at_twice_delta():
    v = lennard_jones_velocity(1.0, (1.0, 0.0), 60.0, 0.5)
    # (eps / d) * ((1/2)^4 - (1/2)^2) = 60 * (1/16 - 1/4) < 0, i.e. toward the neighbour
    assert v == pytest.approx((60.0 * (1 / 4 - 1 / 16), 0.0))


def test_lj_repels_inside_delta():
    assert lennard_jones_velocity(0.3, (1.0, 0.0), 60.0, 0.5)[0] < 0.0


def test_no_obstacles_no_push():
    assert obstacle_avoidance((0.0, 0.0), [], 0.8) == (0.0, 0.0)


def test_obstacle_ahead_pushes_back():
    v = obstacle_avoidance((0.0, 0.0), [(0.6, 0.0, 0.1)], 0.8)
    assert v[0] < 0.0 and v[1] == pytest.approx(0.0)


def test_symmetric_obstacles_cancel_laterally():
    v = obstacle_avoidance((0.0, 0.0), [(0.5, 0.3, 0.1), (0.5, -0.3, 0.1)], 0.8)
    assert v[0] < 0.0 and v[1] == pytest.approx(0.0, abs=1e-12)


# --- worker ---


def _worker(parents, target_xy, here=(0.0, 0.0), required=None):
    """A worker at ``here`` whose chain parents are networkers at the given points."""
    required = required or len(parents)
    target = Target(0, Pose2D(*target_xy), required)
    ctx = MissionContext.build(P, [target])
    s = RobotState(50, Pose2D(*here), Role.WORKER, Role.FREE, target_chain=0, target_id=0)
    nb = {}
    for chain, (rid, xy) in enumerate(parents):
        s.parents[chain] = rid
        s.last_heard[rid] = 0
        nb[rid] = (xy, Role.NETWORKER, chain, False)
    return s, _view(nb), ctx


def test_worker_parked_at_safe_distance():
    s, view, ctx = _worker([(1, (-1.4, 0.0))], (5.0, 0.0))
    d = worker_control(s, view, ctx, 0)
    assert _vec(d.command) == pytest.approx([0.0, 0.0])


def test_worker_inside_safe_distance_moves_to_target():
    s, view, ctx = _worker([(1, (-1.0, 0.0))], (5.0, 0.0))
    d = worker_control(s, view, ctx, 0)
    push = 0.8 * (1.4 - 1.0)
    assert _vec(d.command) == pytest.approx([push + P.target_gain * 5.0, 0.0])


def test_worker_emergency_toward_far_parent():
    s, view, ctx = _worker([(1, (-1.8, 0.0)), (2, (0.0, 1.0))], (5.0, 0.0))
    d = worker_control(s, view, ctx, 0)
    assert _vec(d.command) == pytest.approx([-0.8 * (1.8 - 1.4), 0.0])


def test_dismantling_worker_reports_at_root():
    s, view, ctx = _worker([(0, (-1.3, 0.0))], (5.0, 0.0))
    view.status[0] = StatusMessage(Role.ROOT, Role.ROOT, False, None)
    s.dismantling = True
    d = worker_control(s, view, ctx, 0)
    assert RequestKind.DISMANTLE_COMPLETE in _kinds(d.outbox)
    assert d.state.parked


def test_dismantling_worker_rejects_joins():
    s, view, ctx = _worker([(1, (-1.0, 0.0))], (5.0, 0.0), required=2)
    s.dismantling = True
    view.positions[9] = (0.5, 0.0)
    view.status[9] = StatusMessage(Role.NETWORKER, Role.FREE, False, 1)
    view.requests.append(RequestResponseMessage(RequestKind.JOIN_REQUEST, 9, 50, 1, 0))
    d = worker_control(s, view, ctx, 0)
    kinds = _kinds(d.outbox)
    assert RequestKind.JOIN_REJECT in kinds and RequestKind.JOIN_REQUEST not in kinds
    assert d.state.parents == {0: 1}


distances = st.floats(0.2, 1.99)
bearings = st.floats(-math.pi, math.pi)


@settings(max_examples=200)
@given(st.lists(st.tuples(distances, bearings), min_size=1, max_size=3), bearings)
@example(parents=[(1.75, 0.0), (1.75, 1.0)], target_bearing=0.0)
def test_worker_branches(parents, target_bearing):
    pts = [(1 + i, (d * math.cos(a), d * math.sin(a))) for i, (d, a) in enumerate(parents)]
    target = (5 * math.cos(target_bearing), 5 * math.sin(target_bearing))
    s, view, ctx = _worker(pts, target)
    cmd = _vec(worker_control(s, view, ctx, 0).command)
    dists = [d for d, _ in parents]
    springs = sum(np.array(spring_velocity(d, (math.cos(a), math.sin(a)), 0.8, 1.4)) for d, a in parents)
    if max(dists) >= P.critical_distance:
        # farthest parent; ties go to the first chain
        d, a = max(parents, key=lambda t: t[0])
        assert cmd == pytest.approx(np.array(spring_velocity(d, (math.cos(a), math.sin(a)), 0.8, 1.4)), abs=1e-12)
    elif max(dists) >= P.safe_distance:
        # gate closed: target and obstacle terms are off
        assert cmd == pytest.approx(springs, abs=1e-12)
    else:
        assert cmd == pytest.approx(springs + P.target_gain * np.array(target), abs=1e-12)


# --- networker ---


def _networker(parent_xy, child_xy, obstacles=()):
    target = Target(0, Pose2D(6.0, 0.0), 1)
    ctx = MissionContext.build(P, [target], obstacles=obstacles)
    s = RobotState(10, Pose2D(0.0, 0.0), Role.NETWORKER, Role.FREE, target_chain=0, target_id=0)
    s.parents[0] = 11
    s.child_ids.append(12)
    s.last_heard.update({11: 0, 12: 0})
    view = _view({11: (parent_xy, Role.NETWORKER, 0, False), 12: (child_xy, Role.WORKER, 0, False)})
    return s, view, ctx


def test_networker_at_rest():
    s, view, ctx = _networker((-1.4, 0.0), (1.4, 0.0))
    assert _vec(networker_control(s, view, ctx, 0).command) == pytest.approx([0.0, 0.0])


def test_networker_emergency_ignores_child():
    s, view, ctx = _networker((-1.75, 0.0), (0.0, 1.9))
    cmd = _vec(networker_control(s, view, ctx, 0).command)
    assert cmd == pytest.approx([-0.8 * (1.75 - 1.4), 0.0])


def test_networker_stretched_ignores_obstacles():
    s, view, ctx = _networker((-1.6, 0.0), (1.6, 0.0), obstacles=((0.0, 0.5, 0.1),))
    cmd = _vec(networker_control(s, view, ctx, 0).command)
    # two equal attractive springs cancel; the obstacle 0.4 m away is gated off
    assert cmd == pytest.approx([0.0, 0.0], abs=1e-12)


def test_networker_bent_chain_is_straightened():
    s, view, ctx = _networker((-1.0, 1.0), (1.0, 1.0))
    cmd = _vec(networker_control(s, view, ctx, 0).command)
    d = math.hypot(1.0, 1.0)
    springs = 0.8 * (d - 1.4) * np.array([-1, 1]) / d + 0.8 * (d - 1.4) * np.array([1, 1]) / d
    smoothing = 0.8 * np.array([0.0, 1.0])
    assert cmd == pytest.approx(springs + smoothing)


# --- free and root ---


def test_free_robot_accepts_join():
    s = RobotState(3, Pose2D(0.0, 0.0))
    ctx = MissionContext.build(P, [Target(0, Pose2D(4.0, 0.0), 1)])
    view = _view({7: ((1.0, 0.0), Role.WORKER, 0, True)})
    view.requests.append(RequestResponseMessage(RequestKind.JOIN_REQUEST, 7, 3, 0, 0))
    d = free_control(s, view, ctx, 0)
    assert d.state.role is Role.NETWORKER
    assert d.state.child_ids == [7]
    assert RequestKind.JOIN_ACCEPT in _kinds(d.outbox)


def test_free_robot_takes_lowest_sender():
    s = RobotState(3, Pose2D(0.0, 0.0))
    ctx = MissionContext.build(P, [Target(0, Pose2D(4.0, 0.0), 2)])
    view = _view({8: ((1.0, 0.0), Role.WORKER, 0, True), 5: ((0.0, 1.0), Role.NETWORKER, 1, True)})
    view.requests += [
        RequestResponseMessage(RequestKind.JOIN_REQUEST, 8, 3, 0, 0),
        RequestResponseMessage(RequestKind.JOIN_REQUEST, 5, 3, 1, 0),
    ]
    d = free_control(s, view, ctx, 0)
    assert d.state.child_ids == [5]
    assert _kinds(d.outbox).count(RequestKind.JOIN_REJECT) == 1


def test_root_seeds_parent_strand_every_step():
    root = RobotState(0, Pose2D(0.0, 0.0), Role.ROOT, Role.ROOT)
    ctx = MissionContext.build(P, [Target(0, Pose2D(4.0, 0.0), 1)])
    for now in range(5):
        d = root_control(root, NeighborView(), ctx, now)
        root = d.state
        seeds = [m for m in d.outbox if isinstance(m, StrandInfoMessage)]
        assert [(m.direction, m.ids) for m in seeds] == [(Direction.PARENT, (0,))]


def test_root_dismantles_smallest_unfinished_chain():
    targets = [Target(0, Pose2D(4.0, 0.0), 1), Target(1, Pose2D(0.0, 4.0), 1)]
    ctx = MissionContext.build(P, targets)
    root = RobotState(0, Pose2D(0.0, 0.0), Role.ROOT, Role.ROOT)
    view = _view({1: ((1.0, 0.0), Role.NETWORKER, 0, True), 2: ((0.0, 1.0), Role.NETWORKER, 1, True)})
    view.child_strands[1] = {0: StrandInfoMessage(Direction.CHILD, 0, (9, 5, 1))}
    view.child_strands[2] = {1: StrandInfoMessage(Direction.CHILD, 1, (8, 7, 6, 4, 2))}
    dismantled = []
    for now in range(P.dismantle_persistence_steps + 1):
        d = root_control(root, view, ctx, now)
        root = d.state
        dismantled += [m.target_id for m in d.outbox if isinstance(m, RequestResponseMessage) and m.kind is RequestKind.DISMANTLE]
    assert dismantled and set(dismantled) == {0}


# --- closed-loop invariants ---


def test_spring_equilibrium():
    for seed in range(5):
        a, b = spring_settle(seed, 200)
        assert abs(a - P.safe_distance) <= 0.01 and abs(b - P.safe_distance) <= 0.01


def test_chain_repair_both_ends_close_in():
    for seed in range(3):
        out = repair_scenario(seed)
        assert out.restored_step is not None and out.restored_step <= 400
        assert out.moved[0] > 0.0 and out.moved[1] > 0.0
        assert out.gap_after < out.gap_before


def test_free_cluster_stays_bounded():
    world = free_cluster(0)
    for _ in range(2000):
        step(world)
        xy = world.xy()
        assert np.linalg.norm(xy[1:], axis=1).max() <= 2.0
        d = np.linalg.norm(xy[:, None] - xy[None], axis=-1)
        np.fill_diagonal(d, np.inf)
        assert d.min() >= 0.2


ALLOWED = {
    (Role.FREE, Role.NETWORKER),
    (Role.FREE, Role.WORKER),
    (Role.NETWORKER, Role.FREE),
    # a chain end takes over the job of a dead worker
    (Role.NETWORKER, Role.WORKER),
}


@pytest.mark.parametrize("p", [0.0, 0.5])
def test_role_transitions_are_safe(p):
    cfg = ExperimentConfig(n_robots=40, links_per_target=2, failure_probability=p)
    world = spawn_initial(cfg, 1)
    roles = [r.role for r in world.robots]
    for _ in range(1500):
        step(world)
        alive = [r for r in world.robots if r.alive]
        assert sum(r.role is Role.ROOT for r in world.robots) == 1
        workers = [r for r in alive if r.role is Role.WORKER]
        assert len(workers) <= len(world.targets)
        for r in world.robots:
            if r.role is not roles[r.id]:
                assert (roles[r.id], r.role) in ALLOWED
                roles[r.id] = r.role
        for r in alive:
            if r.role is Role.NETWORKER:
                assert r.child_ids or r.searches or r.dismantling
            if r.role is Role.WORKER:
                assert len(r.parents) <= cfg.links_per_target
            if r.role in (Role.ROOT, Role.FREE):
                assert not r.parents and not r.child_ids
