"""Agent state, the discrete action space and noisy actuation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum

import numpy as np

from ..errors import InvalidState
from ..se2 import IDENTITY, Se2, Vec2, apply, compose, inverse
from .grid import OccupancyGrid
from .planning import AGENT_RADIUS

__all__ = [
    "Action",
    "MOVEMENT_ACTIONS",
    "AgentState",
    "ActionNoise",
    "ActuationNoiseModel",
    "step",
    "realized_motion",
]


class Action(str, Enum):
    MOVE_FORWARD = "move_forward"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"
    STOP = "stop"

    @classmethod
    def parse(cls, value) -> "Action":
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"unknown action {value!r}") from None

    def __str__(self):
        return self.value


MOVEMENT_ACTIONS = (Action.MOVE_FORWARD, Action.TURN_LEFT, Action.TURN_RIGHT)


@dataclass(frozen=True)
class AgentState:
    """World position of the agent's center and its heading.

    ``pose`` maps agent-frame points (x right, z backward) to world points.
    """

    position: Vec2
    heading: float = 0.0
    radius: float = AGENT_RADIUS

    def __post_init__(self):
        x, z = self.position
        object.__setattr__(self, "position", Vec2(float(x), float(z)))

    @property
    def pose(self) -> Se2:
        return Se2(self.heading, self.position.x, self.position.z)

    @classmethod
    def from_pose(cls, pose: Se2, radius: float = AGENT_RADIUS) -> "AgentState":
        return cls(Vec2(pose.x, pose.z), pose.theta, radius)

    def to_world(self, p) -> Vec2:
        return apply(self.pose, p)

    def to_agent(self, p) -> Vec2:
        return apply(inverse(self.pose), p)

    def check(self, grid: OccupancyGrid):
        if not grid.disc_free(self.position, self.radius):
            raise InvalidState(f"agent at {tuple(self.position)} overlaps an occupied cell")


@dataclass(frozen=True)
class ActionNoise:
    """Gaussian actuation for one action.

    ``trans_*`` is the displacement in the agent frame before the step
    (forward is -z); ``yaw_*`` is the heading change, positive to the left.
    """

    trans_mean: tuple[float, float] = (0.0, 0.0)
    trans_sigma: tuple[float, float] = (0.0, 0.0)
    yaw_mean: float = 0.0
    yaw_sigma: float = 0.0

    def __post_init__(self):
        if min(self.trans_sigma) < 0 or self.yaw_sigma < 0:
            raise ValueError("noise sigmas must be non-negative")

    def sample(self, rng: np.random.Generator) -> tuple[np.ndarray, float]:
        d = np.asarray(self.trans_mean) + np.asarray(self.trans_sigma) * rng.standard_normal(2)
        yaw = self.yaw_mean + self.yaw_sigma * rng.standard_normal()
        return d, float(yaw)

    def noiseless(self) -> "ActionNoise":
        return replace(self, trans_sigma=(0.0, 0.0), yaw_sigma=0.0)


def _forward(step_m=0.25, sx=0.005, sz=0.02, yaw_deg=1.0):
    return ActionNoise((0.0, -step_m), (sx, sz), 0.0, math.radians(yaw_deg))


def _turn(sign, turn_deg=30.0, yaw_deg=1.5, s=0.005):
    return ActionNoise((0.0, 0.0), (s, s), sign * math.radians(turn_deg), math.radians(yaw_deg))


@dataclass(frozen=True)
class ActuationNoiseModel:
    """Per-action actuation distributions and collision behavior."""

    forward: ActionNoise = field(default_factory=_forward)
    turn_left: ActionNoise = field(default_factory=lambda: _turn(1.0))
    turn_right: ActionNoise = field(default_factory=lambda: _turn(-1.0))
    # on contact the translation is always dropped; this keeps the rotation
    rotate_on_collision: bool = True

    def for_action(self, action: Action) -> ActionNoise:
        return {
            Action.MOVE_FORWARD: self.forward,
            Action.TURN_LEFT: self.turn_left,
            Action.TURN_RIGHT: self.turn_right,
        }[action]

    def noiseless(self) -> "ActuationNoiseModel":
        quiet = {f.name: getattr(self, f.name) for f in fields(self)}
        quiet = {k: v.noiseless() for k, v in quiet.items() if isinstance(v, ActionNoise)}
        return replace(self, **quiet)

    def nominal(self, action: Action) -> Se2:
        """Point transform of the noise-free motion for ``action``."""
        if action == Action.STOP:
            return IDENTITY
        a = self.for_action(action)
        return inverse(Se2(-a.yaw_mean, *a.trans_mean))


def realized_motion(d, yaw: float) -> Se2:
    """Pose of the new agent frame in the old one, for displacement ``d`` and left yaw."""
    return Se2(-yaw, d[0], d[1])


def step(
    state: AgentState,
    action,
    grid: OccupancyGrid,
    noise: ActuationNoiseModel,
    rng: np.random.Generator | int | None = None,
) -> tuple[AgentState, Se2, bool]:
    """Execute one action.

    Returns the new state, the ground-truth point transform from the old
    agent frame to the new one, and whether the swept disc hit a wall.
    """
    action = Action.parse(action)
    state.check(grid)
    if action == Action.STOP:
        return state, IDENTITY, False
    rng = np.random.default_rng(rng)
    d, yaw = noise.for_action(action).sample(rng)
    target = state.to_world(d)
    collided = not grid.segment_free(state.position, target, state.radius)
    if collided:
        d = np.zeros(2)
        if not noise.rotate_on_collision:
            yaw = 0.0
    motion = realized_motion(d, yaw)
    new = AgentState.from_pose(compose(state.pose, motion), state.radius)
    return new, inverse(motion), collided
