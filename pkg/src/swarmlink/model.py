"""Shared domain types and run configuration.

Everything here is plain data plus validation. Behaviour lives in the
controller, protocol and engine modules.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Any

ROOT_ID = 0


class ConfigError(ValueError):
    """Raised when a configuration violates a type invariant."""


def wrap_angle(theta: float) -> float:
    """Normalize an angle into [-pi, pi)."""
    wrapped = (theta + math.pi) % (2.0 * math.pi) - math.pi
    # float modulo can land exactly on +pi for inputs like -pi - tiny
    if wrapped >= math.pi:
        wrapped -= 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class Pose2D:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)

    def distance_to(self, other: Pose2D) -> float:
        return math.hypot(other.x - self.x, other.y - self.y)


class Role(IntEnum):
    # values double as the status wire codes
    ROOT = 0
    FREE = 1
    NETWORKER = 2
    WORKER = 3


@dataclass(frozen=True)
class Target:
    id: int
    position: Pose2D
    required_links: int = 1

    def __post_init__(self) -> None:
        if self.required_links < 1:
            raise ConfigError(f"target {self.id}: required_links must be >= 1")


@dataclass
class RobotState:
    """Per-robot bookkeeping.

    ``parents`` maps chain id to the parent robot for that chain; a worker
    holds one entry per link, a networker exactly one. ``parent_strands``
    and ``child_strands`` are keyed the same way.
    """

    id: int
    pose: Pose2D
    role: Role = Role.FREE
    previous_role: Role = Role.FREE
    parents: dict[int, int] = field(default_factory=dict)
    child_ids: list[int] = field(default_factory=list)
    target_chain: int | None = None
    target_id: int | None = None
    parent_need: bool = False
    parent_strands: dict[int, list[int]] = field(default_factory=dict)
    child_strands: dict[int, list[int]] = field(default_factory=dict)
    alive: bool = True
    last_heard: dict[int, int] = field(default_factory=dict)
    # controller memory, see controllers.py
    last_pos: dict[int, tuple[float, float]] = field(default_factory=dict)
    last_role: dict[int, Role] = field(default_factory=dict)
    pending: dict[int, tuple[int, int, str]] = field(default_factory=dict)
    searches: dict[int, dict[str, Any]] = field(default_factory=dict)
    dismantling: bool = False
    parked: bool = False
    sent_strands: dict[tuple[int, int], tuple[int, tuple[int, ...]]] = field(default_factory=dict)
    starved_since: int | None = None
    rejected: dict[int, int] = field(default_factory=dict)
    memo: dict[str, Any] = field(default_factory=dict)

    @property
    def parent_ids(self) -> list[int]:
        return list(self.parents.values())

    @property
    def parent_strand(self) -> list[int]:
        if self.target_chain is None:
            return []
        return self.parent_strands.get(self.target_chain, [])

    @property
    def child_strand(self) -> list[int]:
        if self.target_chain is None:
            return []
        return self.child_strands.get(self.target_chain, [])

    def copy(self) -> RobotState:
        return RobotState(
            id=self.id,
            pose=self.pose,
            role=self.role,
            previous_role=self.previous_role,
            parents=dict(self.parents),
            child_ids=list(self.child_ids),
            target_chain=self.target_chain,
            target_id=self.target_id,
            parent_need=self.parent_need,
            parent_strands={k: list(v) for k, v in self.parent_strands.items()},
            child_strands={k: list(v) for k, v in self.child_strands.items()},
            alive=self.alive,
            last_heard=dict(self.last_heard),
            last_pos=dict(self.last_pos),
            last_role=dict(self.last_role),
            pending=dict(self.pending),
            searches={k: dict(v) for k, v in self.searches.items()},
            dismantling=self.dismantling,
            parked=self.parked,
            sent_strands=dict(self.sent_strands),
            starved_since=self.starved_since,
            rejected=dict(self.rejected),
            memo={k: (v.copy() if hasattr(v, "copy") else v) for k, v in self.memo.items()},
        )


@dataclass(frozen=True)
class ControlParams:
    """Control and communication constants.

    The first block reproduces the published design table; the remainder are
    values the published design leaves open.
    """

    comm_range: float = 2.0
    dt: float = 0.1
    move_threshold: float = 0.3
    spring_gain: float = 0.8
    damping_coeff: float = 0.0
    safe_distance: float = 1.4
    critical_distance: float = 1.7
    lj_epsilon: float = 60.0
    lj_delta: float = 0.5

    target_gain: float = 0.02
    obstacle_gain: float = 0.8
    obstacle_influence: float = 1.0
    max_speed: float = 1.0
    heading_gain: float = 4.0
    max_angular_rate: float = math.pi
    robot_radius: float = 0.1
    failure_timeout_steps: int = 20
    growth_tolerance: float = 0.05
    join_timeout_steps: int = 10
    strand_refresh_steps: int = 100
    bridge_patience_steps: int = 600
    dismantle_persistence_steps: int = 50

    def validate(self) -> ControlParams:
        if not 0.0 < self.safe_distance < self.critical_distance < self.comm_range:
            raise ConfigError(
                "distances must satisfy 0 < safe_distance < critical_distance < comm_range, got "
                f"{self.safe_distance}, {self.critical_distance}, {self.comm_range}"
            )
        positive = (
            "dt", "move_threshold", "spring_gain", "lj_epsilon", "lj_delta", "target_gain",
            "obstacle_gain", "obstacle_influence", "max_speed", "heading_gain",
            "max_angular_rate", "robot_radius",
        )
        for name in positive:
            value = getattr(self, name)
            if not (value > 0.0 and math.isfinite(value)):
                raise ConfigError(f"{name} must be strictly positive, got {value}")
        if self.damping_coeff < 0.0:
            raise ConfigError("damping_coeff must be non-negative")
        steps = (
            "failure_timeout_steps", "join_timeout_steps", "strand_refresh_steps",
            "bridge_patience_steps", "dismantle_persistence_steps",
        )
        for name in steps:
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        return self


def validate_config(params: ControlParams, n_robots: int, targets: list[Target]) -> tuple[ControlParams, int, list[Target]]:
    """Check a run setup and return it unchanged, or raise :class:`ConfigError`."""
    params.validate()
    ids = [t.id for t in targets]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate target ids: {ids}")
    for t in targets:
        if not 0 <= t.id < 255:
            raise ConfigError(f"target id {t.id} does not fit in one byte")
    n_chains = sum(t.required_links for t in targets)
    if n_chains > 255:
        raise ConfigError("more than 255 chains cannot be addressed on the wire")
    # root plus one worker per target
    if n_robots < 1 + len(targets):
        raise ConfigError(f"{n_robots} robots cannot cover a root and {len(targets)} workers")
    if n_robots > 255:
        raise ConfigError("robot ids must fit in one byte")
    return params, n_robots, targets


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "nominal"
    n_robots: int = 20
    links_per_target: int = 1
    n_targets: int = 4
    target_radius: float = 4.0
    failure_probability: float = 0.0
    n_seeds: int = 1
    max_steps: int = 5000
    sample_every: int = 10
    deploy_radius: float = 1.5
    arena_size: float = 10.0
    obstacles: tuple[tuple[float, float, float], ...] = ()
    output_dir: str = "out"
    control: ControlParams = field(default_factory=ControlParams)

    def targets(self) -> list[Target]:
        """Targets equally spaced in angle on a circle around the root."""
        out = []
        for i in range(self.n_targets):
            angle = 2.0 * math.pi * i / self.n_targets
            pos = Pose2D(self.target_radius * math.cos(angle), self.target_radius * math.sin(angle), angle)
            out.append(Target(i, pos, self.links_per_target))
        return out

    def validate(self) -> ExperimentConfig:
        validate_config(self.control, self.n_robots, self.targets())
        if self.n_seeds < 1:
            raise ConfigError("n_seeds must be >= 1")
        if self.max_steps < 1 or self.sample_every < 1:
            raise ConfigError("max_steps and sample_every must be positive")
        if not 0.0 <= self.failure_probability <= 1.0:
            raise ConfigError("failure_probability must lie in [0, 1]")
        if self.target_radius <= 0.0 or self.deploy_radius <= 0.0:
            raise ConfigError("radii must be positive")
        if self.target_radius > self.arena_size / 2.0:
            raise ConfigError("targets fall outside the arena")
        return self

    def replace(self, **changes: Any) -> ExperimentConfig:
        control_changes = {k: changes.pop(k) for k in list(changes) if k in _CONTROL_FIELDS}
        cfg = dataclasses.replace(self, **changes)
        if control_changes:
            cfg = dataclasses.replace(cfg, control=dataclasses.replace(cfg.control, **control_changes))
        return cfg

    def to_dict(self) -> dict[str, Any]:
        data = dataclasses.asdict(self)
        data["obstacles"] = [list(o) for o in self.obstacles]
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ExperimentConfig:
        data = dict(data)
        unknown = set(data) - _EXPERIMENT_FIELDS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        control = data.pop("control", {}) or {}
        unknown = set(control) - _CONTROL_FIELDS
        if unknown:
            raise ConfigError(f"unknown control keys: {sorted(unknown)}")
        if "obstacles" in data:
            data["obstacles"] = tuple(tuple(float(v) for v in o) for o in data["obstacles"])
        return cls(control=ControlParams(**control), **data)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> ExperimentConfig:
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> ExperimentConfig:
        return cls.loads(Path(path).read_text())


_CONTROL_FIELDS = {f.name for f in dataclasses.fields(ControlParams)}
_EXPERIMENT_FIELDS = {f.name for f in dataclasses.fields(ExperimentConfig)}
