import numpy as np
import pytest

from swarmlink.engine import (
    FaultPlan,
    SpawnError,
    kill,
    lambda2_of,
    record_metrics,
    run,
    sample_positions,
    spawn_initial,
    step,
    world_from_robots,
)
from swarmlink.model import ControlParams, ExperimentConfig, Pose2D, RobotState, Role
from swarmlink.scenarios import chain_world, free_cluster


def test_idle_world_stays_put():
    robots = [RobotState(0, Pose2D(0, 0), Role.ROOT, Role.ROOT)]
    robots += [RobotState(i, Pose2D(5.0 * i, 1.0, 0.3)) for i in range(1, 4)]
    world = world_from_robots(robots, [], ControlParams())
    before = world.xy()
    step(world)
    assert world.step == 1
    assert np.array_equal(world.xy(), before)


def test_same_seed_same_run():
    cfg = ExperimentConfig(n_robots=20, max_steps=300)
    a, b = run(cfg, 5), run(cfg, 5)
    assert a.metrics_csv() == b.metrics_csv()
    assert a.report.dumps() == b.report.dumps()


def test_short_budget_reports_failure():
    res = run(ExperimentConfig(n_robots=20, max_steps=10), 0)
    assert not res.report.success
    assert res.report.completion_step is None
    assert res.report.steps_run == 10


def test_last_envelope_before_fate_step():
    world = chain_world(1, seed=0)
    t = world.step + 20
    world.faults = FaultPlan(1.0, {1: t})
    while world.step < t:
        step(world)
    # stepping index t - 1 just ran: robot 1 still sent
    assert any(e.sender_id == 1 for e in world.pending_envelopes)
    step(world)
    assert not world.robots[1].alive
    assert not any(e.sender_id == 1 for e in world.pending_envelopes)


def test_free_robot_fate_is_void():
    world = free_cluster(0)
    world.faults = FaultPlan(1.0, {1: 2})
    for _ in range(5):
        step(world)
    assert world.robots[1].alive
    assert world.kills == []


def test_fault_plan_draw():
    rng = np.random.default_rng(0)
    plan = FaultPlan.draw(50, 1.0, 5000, rng)
    assert set(plan.fates) == set(range(1, 50))
    assert all(0 <= s <= 5000 for s in plan.fates.values())
    assert FaultPlan.draw(50, 0.0, 5000, rng).fates == {}


def test_fault_fates_independent_of_placement():
    a = spawn_initial(ExperimentConfig(n_robots=30, failure_probability=0.0), 3)
    b = spawn_initial(ExperimentConfig(n_robots=30, failure_probability=0.7), 3)
    assert np.array_equal(a.xy(), b.xy())


def test_root_cannot_be_killed():
    world = chain_world(1)
    with pytest.raises(ValueError):
        kill(world, 0)


def test_initial_swarm_connected():
    for seed in range(3):
        assert lambda2_of(spawn_initial(ExperimentConfig(n_robots=20), seed)) > 0.0


def test_denser_swarm_is_better_connected():
    for seed in range(3):
        small = lambda2_of(spawn_initial(ExperimentConfig(n_robots=20), seed))
        large = lambda2_of(spawn_initial(ExperimentConfig(n_robots=80), seed))
        assert large > small


def test_seeds_differ():
    a = spawn_initial(ExperimentConfig(n_robots=20), 0)
    b = spawn_initial(ExperimentConfig(n_robots=20), 1)
    assert not np.array_equal(a.xy(), b.xy())


def test_workers_assigned_nearest_target():
    world = spawn_initial(ExperimentConfig(n_robots=20), 0)
    workers = {r.target_id: r.id for r in world.robots if r.role is Role.WORKER}
    # sequential by target id, nearest robot not yet taken
    taken = {0}
    for t in world.targets:
        free = [r for r in world.robots if r.id not in taken]
        best = min(free, key=lambda r: (r.pose.distance_to(t.position), r.id))
        assert workers[t.id] == best.id
        taken.add(best.id)


def test_impossible_placement_raises():
    with pytest.raises(SpawnError):
        sample_positions(200, 0.3, 2.0, np.random.default_rng(0))


def test_records_account_for_every_robot():
    cfg = ExperimentConfig(n_robots=40, links_per_target=2, failure_probability=0.7, max_steps=1500)
    res = run(cfg, 0)
    for rec, mask in zip(res.records, res.alive_masks):
        census = rec.role_census
        assert sum(census.values()) == rec.alive == sum(mask)
        assert rec.alive + sum(1 for k in res.report.kills if k[0] < rec.step) == 40


def test_record_of_cluster():
    world = spawn_initial(ExperimentConfig(n_robots=20), 0)
    rec = record_metrics(world)
    assert rec.lambda2 > 0.0
    assert sum(rec.role_census.values()) == 20


def test_connectivity_drops_as_chains_form():
    res = run(ExperimentConfig(n_robots=20), 0)
    assert res.report.success
    assert res.records[-1].lambda2 < res.records[0].lambda2
    assert all(r.lambda2 > 1e-8 for r in res.records)


def test_output_files(tmp_path):
    res = run(ExperimentConfig(n_robots=20, max_steps=50), 2)
    csv_path, json_path = res.write(tmp_path, "x_seed2")
    lines = csv_path.read_text().splitlines()
    assert lines[0].startswith("step,lambda2")
    assert len(lines) == 1 + len(res.records)
    assert '"seed": 2' in json_path.read_text()
