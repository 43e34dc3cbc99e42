"""Planar poses and angle helpers shared across the package."""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle to the half-open interval [-pi, pi)."""
    wrapped = math.fmod(theta + math.pi, TWO_PI)
    if wrapped < 0.0:
        wrapped += TWO_PI
    return wrapped - math.pi


@dataclass(frozen=True)
class Pose:
    """Planar pose (x, y, heading), heading normalized to [-pi, pi)."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "theta"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ValueError(f"Pose.{name} must be a finite number, got {value!r}")
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))


def compose(parent: Pose, child: Pose) -> Pose:
    """Express ``child`` (given in the frame of ``parent``) in the world frame."""
    c, s = math.cos(parent.theta), math.sin(parent.theta)
    return Pose(
        parent.x + c * child.x - s * child.y,
        parent.y + s * child.x + c * child.y,
        parent.theta + child.theta,
    )


def planar_distance(a: Pose, b: Pose) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)
