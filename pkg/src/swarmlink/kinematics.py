"""Differential-drive (unicycle) model and a velocity-tracking layer.

Controllers produce a desired planar velocity; the robot can only drive
along its heading, so a proportional heading loop turns the vector into a
forward speed and a turn rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ControlParams, Pose2D, wrap_angle


@dataclass(frozen=True)
class VelocityCommand:
    vx: float
    vy: float

    @property
    def speed(self) -> float:
        return math.hypot(self.vx, self.vy)

    def clamped(self, max_speed: float) -> VelocityCommand:
        s = self.speed
        if s <= max_speed or s == 0.0:
            return self
        scale = max_speed / s
        return VelocityCommand(self.vx * scale, self.vy * scale)


@dataclass(frozen=True)
class UnicycleInput:
    linear_speed: float
    angular_rate: float


ZERO_INPUT = UnicycleInput(0.0, 0.0)


def track_velocity(pose: Pose2D, cmd: VelocityCommand, params: ControlParams) -> UnicycleInput:
    if not (math.isfinite(cmd.vx) and math.isfinite(cmd.vy)):
        raise ValueError(f"non-finite velocity command {cmd}")
    cmd = cmd.clamped(params.max_speed)
    speed = cmd.speed
    if speed < 1e-9:
        return ZERO_INPUT
    error = wrap_angle(math.atan2(cmd.vy, cmd.vx) - pose.theta)
    omega = max(-params.max_angular_rate, min(params.max_angular_rate, params.heading_gain * error))
    # never drive sideways or backwards
    v = speed * max(0.0, math.cos(error))
    return UnicycleInput(v, omega)


def integrate(pose: Pose2D, u: UnicycleInput, dt: float) -> Pose2D:
    """One explicit-Euler step of the unicycle model."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if u.linear_speed == 0.0 and u.angular_rate == 0.0:
        return pose
    return Pose2D(
        pose.x + u.linear_speed * math.cos(pose.theta) * dt,
        pose.y + u.linear_speed * math.sin(pose.theta) * dt,
        pose.theta + u.angular_rate * dt,
    )


def resolve_collisions(
    xy: np.ndarray,
    radius: float,
    pinned: np.ndarray | None = None,
    iterations: int = 10,
) -> np.ndarray:
    """Push overlapping discs apart by symmetric positional projection.

    ``pinned`` robots (the root, dead bodies) do not move; their partner
    takes the whole correction.
    """
    xy = np.array(xy, dtype=float, copy=True)
    n = len(xy)
    if n < 2:
        return xy
    if pinned is None:
        pinned = np.zeros(n, dtype=bool)
    min_sep = 2.0 * radius
    for _ in range(iterations):
        diff = xy[:, None, :] - xy[None, :, :]
        dist = np.sqrt((diff**2).sum(-1))
        ii, jj = np.nonzero(np.triu(dist < min_sep, k=1))
        if len(ii) == 0:
            break
        for i, j in zip(ii.tolist(), jj.tolist()):
            if pinned[i] and pinned[j]:
                continue
            delta = xy[i] - xy[j]
            d = math.hypot(delta[0], delta[1])
            if d < 1e-12:
                # coincident: separate along a deterministic axis
                angle = 0.618 * (i + 1) + 1.3 * (j + 1)
                direction = np.array([math.cos(angle), math.sin(angle)])
                d = 0.0
            else:
                direction = delta / d
            # small margin keeps the pair strictly separated after rounding
            push = (min_sep - d) + 1e-9
            if pinned[j]:
                xy[i] += direction * push
            elif pinned[i]:
                xy[j] -= direction * push
            else:
                xy[i] += direction * (push / 2.0)
                xy[j] -= direction * (push / 2.0)
    return xy
