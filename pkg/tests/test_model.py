import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from swarmlink.model import ConfigError, ControlParams, ExperimentConfig, Pose2D, Target, validate_config, wrap_angle


def test_table_values_are_valid():
    p = ControlParams()
    assert (p.comm_range, p.dt, p.move_threshold, p.spring_gain) == (2.0, 0.1, 0.3, 0.8)
    assert (p.safe_distance, p.critical_distance, p.lj_epsilon, p.lj_delta) == (1.4, 1.7, 60.0, 0.5)
    cfg = ExperimentConfig(n_robots=20, n_targets=4, links_per_target=1)
    assert cfg.validate() is cfg


def test_distance_ordering_rejected():
    with pytest.raises(ConfigError):
        ControlParams(safe_distance=1.7, critical_distance=1.4).validate()


def test_too_few_robots_for_targets():
    targets = [Target(i, Pose2D(4.0, 0.0)) for i in range(4)]
    with pytest.raises(ConfigError):
        validate_config(ControlParams(), 3, targets)


def test_duplicate_target_ids_rejected():
    targets = [Target(1, Pose2D(4.0, 0.0)), Target(1, Pose2D(0.0, 4.0))]
    with pytest.raises(ConfigError):
        validate_config(ControlParams(), 20, targets)


def test_required_links_at_least_one():
    with pytest.raises(ConfigError):
        Target(0, Pose2D(1.0, 0.0), required_links=0)


def test_non_positive_gain_rejected():
    with pytest.raises(ConfigError):
        ControlParams(spring_gain=0.0).validate()


def test_targets_on_circle():
    cfg = ExperimentConfig(n_targets=4, target_radius=4.0, links_per_target=2)
    ts = cfg.targets()
    assert [t.id for t in ts] == [0, 1, 2, 3]
    assert all(t.required_links == 2 for t in ts)
    assert all(math.isclose(math.hypot(*t.position.xy), 4.0) for t in ts)
    assert ts[1].position.x == pytest.approx(0.0, abs=1e-12)
    assert ts[1].position.y == pytest.approx(4.0)


def test_replace_routes_control_fields():
    cfg = ExperimentConfig().replace(n_robots=40, safe_distance=1.3)
    assert cfg.n_robots == 40
    assert cfg.control.safe_distance == 1.3


def test_unknown_config_keys_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"n_robotz": 3})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"control": {"spring": 1.0}})


@given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
def test_wrap_angle_range(theta):
    w = wrap_angle(theta)
    assert -math.pi <= w < math.pi
    assert math.isclose(math.cos(w), math.cos(theta), abs_tol=1e-6)


@given(st.lists(st.floats(min_value=-50, max_value=50, allow_nan=False), min_size=1, max_size=20))
def test_pose_heading_stays_normalized(turns):
    pose = Pose2D(0.0, 0.0, 0.0)
    for dtheta in turns:
        pose = Pose2D(pose.x, pose.y, pose.theta + dtheta)
        assert -math.pi <= pose.theta < math.pi


configs = st.builds(
    ExperimentConfig,
    name=st.text(alphabet="abcxyz_0123", min_size=1, max_size=8),
    n_robots=st.integers(5, 200),
    links_per_target=st.integers(1, 4),
    n_targets=st.integers(1, 4),
    target_radius=st.floats(0.5, 5.0),
    failure_probability=st.floats(0.0, 1.0),
    n_seeds=st.integers(1, 50),
    max_steps=st.integers(1, 10_000),
    obstacles=st.lists(st.tuples(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.1, 1.0)), max_size=3).map(tuple),
    control=st.builds(ControlParams, spring_gain=st.floats(0.1, 2.0), target_gain=st.floats(0.001, 1.0)),
)


@given(configs)
def test_config_round_trip(cfg):
    assert ExperimentConfig.loads(cfg.dumps()) == cfg


def test_config_file_round_trip(tmp_path):
    cfg = ExperimentConfig(name="x", n_robots=33, obstacles=((1.0, 2.0, 0.5),))
    path = tmp_path / "c.json"
    cfg.save(path)
    assert ExperimentConfig.load(path) == cfg
