"""
    se2
    ===

    Planar rigid transforms, the goal-update rule and dead reckoning.

    Coordinates are (x, z) in meters with x pointing right and z pointing
    backward, so an agent's forward direction is -z.  A transform ``h`` acts
    on points as ``R(theta) @ p + xi`` with

        R(theta) = [[cos, -sin],
                    [sin,  cos]]

    A per-step transform ``h_t`` maps coordinates expressed in the agent frame
    at step ``t`` to coordinates in the frame at step ``t + 1``; the relative
    goal is therefore carried forward with :func:`update_goal`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "Vec2",
    "Se2",
    "IDENTITY",
    "wrap_angle",
    "rot2",
    "compose",
    "inverse",
    "apply",
    "update_goal",
    "integrate",
    "polar_goal_encoding",
]


def wrap_angle(theta: float) -> float:
    """Map an angle onto (-pi, pi]."""
    if -math.pi < theta <= math.pi:
        return theta
    wrapped = math.pi - math.fmod(math.pi - theta, 2.0 * math.pi)
    if wrapped > math.pi:
        wrapped -= 2.0 * math.pi
    elif wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


def rot2(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


class Vec2(NamedTuple):
    """A planar vector in meters."""

    x: float
    z: float

    def norm(self) -> float:
        return math.hypot(self.x, self.z)


@dataclass(frozen=True)
class Se2:
    """Rigid planar transform ``p -> R(theta) p + (x, z)``.

    ``theta`` is normalized to (-pi, pi] on construction.
    """

    theta: float = 0.0
    x: float = 0.0
    z: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "z", float(self.z))

    @property
    def xi(self) -> np.ndarray:
        return np.array([self.x, self.z])

    @property
    def rotation(self) -> np.ndarray:
        return rot2(self.theta)

    def to_matrix(self) -> np.ndarray:
        m = np.eye(3)
        m[:2, :2] = self.rotation
        m[:2, 2] = (self.x, self.z)
        return m

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Se2":
        m = np.asarray(m, dtype=float)
        return cls(math.atan2(m[1, 0], m[0, 0]), m[0, 2], m[1, 2])

    def to_tuple(self) -> tuple[float, float, float]:
        """Serialized order: (theta_rad, xi_x_m, xi_z_m)."""
        return (self.theta, self.x, self.z)

    @classmethod
    def from_tuple(cls, values: Sequence[float]) -> "Se2":
        theta, x, z = values
        return cls(theta, x, z)

    def __matmul__(self, other):
        if isinstance(other, Se2):
            return compose(self, other)
        return apply(self, other)


IDENTITY = Se2()


def compose(a: Se2, b: Se2) -> Se2:
    """Return ``a o b`` (apply ``b`` first), i.e. the matrix product ``A @ B``."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Se2(
        a.theta + b.theta,
        c * b.x - s * b.z + a.x,
        s * b.x + c * b.z + a.z,
    )


def inverse(a: Se2) -> Se2:
    c, s = math.cos(a.theta), math.sin(a.theta)
    # -R^T xi
    return Se2(-a.theta, -(c * a.x + s * a.z), -(-s * a.x + c * a.z))


def apply(h: Se2, p) -> Vec2:
    """Transform point ``p`` by ``h``: ``R(theta) p + xi``."""
    px, pz = p
    c, s = math.cos(h.theta), math.sin(h.theta)
    return Vec2(c * px - s * pz + h.x, s * px + c * pz + h.z)


def update_goal(goal, h: Se2) -> Vec2:
    """Carry the relative goal from frame ``t`` into frame ``t + 1``."""
    return apply(h, goal)


def integrate(steps: Iterable[Se2]) -> list[Se2]:
    """Accumulate per-step transforms.

    Element ``k`` is ``steps[k-1] o ... o steps[0]``: the transform taking
    start-frame coordinates to frame-``k`` coordinates.  Element 0 is the
    identity, so ``n`` steps yield ``n + 1`` entries.  The agent's pose in the
    start frame at step ``k`` is ``inverse(result[k])``.
    """
    out = [IDENTITY]
    for h in steps:
        out.append(compose(h, out[-1]))
    return out


def polar_goal_encoding(goal) -> tuple[float, Vec2]:
    """Split a goal vector into its magnitude and unit direction."""
    gx, gz = goal
    mag = math.hypot(gx, gz)
    if mag == 0.0:
        return 0.0, Vec2(0.0, 0.0)
    return mag, Vec2(gx / mag, gz / mag)
