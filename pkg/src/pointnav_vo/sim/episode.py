"""Navigation episodes driven by a policy that only sees a dead-reckoned goal."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..depth import _atomic_write
from ..errors import DegenerateGeometry, DomainError
from ..se2 import IDENTITY, Se2, Vec2, compose, inverse, update_goal
from ..vo_classical import depth_alignment_vo, planar_vo
from .agent import Action, ActuationNoiseModel, AgentState, step
from .grid import OccupancyGrid
from .planning import geodesic_distance
from .render import CameraRig, render_correspondences

__all__ = [
    "StepObservation",
    "StepRecord",
    "Episode",
    "GreedyPolicy",
    "ground_truth_estimator",
    "zero_estimator",
    "ClassicalEstimator",
    "run_episode",
    "write_episode_log",
    "read_episode_log",
    "episode_seed",
]

SUCCESS_DISTANCE = 0.36


def episode_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    """Independent stream for episode ``index`` of a run seeded with ``master_seed``."""
    return np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))


@dataclass(frozen=True)
class StepObservation:
    """Everything an estimator may look at for one step."""

    grid: OccupancyGrid
    before: AgentState
    after: AgentState
    action: Action
    gt: Se2
    rig: CameraRig | None
    rng: np.random.Generator


Estimator = Callable[[StepObservation], Se2]
Policy = Callable[[Vec2], "Action | str"]


def ground_truth_estimator(obs: StepObservation) -> Se2:
    return obs.gt


def zero_estimator(obs: StepObservation) -> Se2:
    return IDENTITY


@dataclass
class ClassicalEstimator:
    """Feature-correspondence VO on rendered landmarks.

    When the epipolar geometry degenerates (every landmark on one wall) the
    depth-only rigid alignment is used instead; other failures fall back to
    the action's nominal motion.
    """

    noise: ActuationNoiseModel = field(default_factory=ActuationNoiseModel)
    n_points: int = 60
    scale_mode: str = "projection"
    fallbacks: int = 0

    def __call__(self, obs: StepObservation) -> Se2:
        if obs.rig is None:
            raise ValueError("the classical estimator needs a camera rig")
        c = render_correspondences(obs.grid, obs.before, obs.after, obs.rig, self.n_points, obs.rng)
        try:
            try:
                p = planar_vo(c, obs.rig.K, self.scale_mode)
            except DegenerateGeometry:
                p = depth_alignment_vo(c, obs.rig.K)
        except DomainError:
            self.fallbacks += 1
            return self.noise.nominal(obs.action)
        return Se2(p.theta, p.xi_x, p.xi_z)


@dataclass(frozen=True)
class GreedyPolicy:
    """Turn toward the goal until within ``turn_tolerance_deg``, then step forward.

    Stops once the goal is closer than ``stop_radius``.
    """

    turn_tolerance_deg: float = 15.0
    stop_radius: float = 0.2

    def bearing(self, goal) -> float:
        gx, gz = goal
        # forward is -z; positive bearings are to the left
        return math.atan2(-gx, -gz)

    def steer(self, goal) -> Action:
        b = self.bearing(goal)
        if abs(b) <= math.radians(self.turn_tolerance_deg):
            return Action.MOVE_FORWARD
        return Action.TURN_LEFT if b > 0 else Action.TURN_RIGHT

    def __call__(self, goal) -> Action:
        if math.hypot(*goal) < self.stop_radius:
            return Action.STOP
        return self.steer(goal)


@dataclass
class StepRecord:
    """One step; both poses are the agent's pose in the start frame."""

    action: Action
    gt: Se2
    collided: bool
    estimate: Se2 | None
    goal_estimate: Vec2
    dead_reckoned: Se2
    true_pose: Se2

    def to_json(self) -> dict:
        return {
            "action": self.action.value,
            "gt": list(self.gt.to_tuple()),
            "estimate": None if self.estimate is None else list(self.estimate.to_tuple()),
            "dead_reckoned": list(self.dead_reckoned.to_tuple()),
            "true_pose": list(self.true_pose.to_tuple()),
            "goal_estimate": list(self.goal_estimate),
            "collided": self.collided,
        }

    @classmethod
    def from_json(cls, d: dict) -> "StepRecord":
        est = d.get("estimate")
        return cls(
            Action.parse(d["action"]),
            Se2.from_tuple(d["gt"]),
            bool(d["collided"]),
            None if est is None else Se2.from_tuple(est),
            Vec2(*d["goal_estimate"]),
            Se2.from_tuple(d["dead_reckoned"]),
            Se2.from_tuple(d["true_pose"]),
        )


@dataclass
class Episode:
    """A finished episode with what the metrics need.

    ``shortest_length`` is the start-to-goal geodesic, ``path_length`` the
    distance actually travelled, ``d_g`` the geodesic left at the end.
    """

    scene: str
    start: AgentState
    goal: Vec2
    steps: list[StepRecord] = field(default_factory=list)
    stopped: bool = False
    final: AgentState | None = None
    shortest_length: float = 0.0
    path_length: float = 0.0
    d_g: float = 0.0
    episode_id: str = ""

    @property
    def d_init(self) -> float:
        return self.shortest_length

    def gt_chain(self) -> Se2:
        """Composition of all per-step ground-truth transforms (start frame to final frame)."""
        h = IDENTITY
        for s in self.steps:
            h = compose(s.gt, h)
        return h


def run_episode(
    grid: OccupancyGrid,
    start: AgentState,
    goal,
    policy: Policy,
    estimator: Estimator,
    noise: ActuationNoiseModel,
    rng: np.random.Generator | np.random.SeedSequence | int | None = 0,
    max_steps: int = 500,
    rig: CameraRig | None = None,
    episode_id: str = "",
) -> Episode:
    """Navigate with dead reckoning: the policy sees only the estimated relative goal."""
    rng = np.random.default_rng(rng)
    start.check(grid)
    goal = Vec2(*goal)
    ep = Episode(grid.name, start, goal, episode_id=episode_id)
    ep.shortest_length = geodesic_distance(grid, start.position, goal, start.radius)
    state = start
    goal_hat = start.to_agent(goal)
    dead_reckoned = IDENTITY  # start frame -> current frame, from estimates
    for _ in range(max_steps):
        action = Action.parse(policy(goal_hat))
        if action == Action.STOP:
            ep.stopped = True
            break
        new_state, gt, collided = step(state, action, grid, noise, rng)
        obs = StepObservation(grid, state, new_state, action, gt, rig, rng)
        estimate = estimator(obs)
        goal_hat = update_goal(goal_hat, estimate)
        dead_reckoned = compose(estimate, dead_reckoned)
        ep.path_length += math.hypot(gt.x, gt.z)
        ep.steps.append(
            StepRecord(
                action,
                gt,
                collided,
                estimate,
                goal_hat,
                inverse(dead_reckoned),
                compose(inverse(start.pose), new_state.pose),
            )
        )
        state = new_state
    ep.final = state
    ep.d_g = geodesic_distance(grid, state.position, goal, state.radius)
    return ep


def write_episode_log(path, ep: Episode):
    """JSON lines: a header object, then one object per step."""
    head = {
        "episode_id": ep.episode_id,
        "scene": ep.scene,
        "start": [*ep.start.position, ep.start.heading],
        "goal": list(ep.goal),
        "stopped": ep.stopped,
        "shortest_length": ep.shortest_length,
        "path_length": ep.path_length,
        "d_g": ep.d_g,
        "n_steps": len(ep.steps),
    }
    lines = [json.dumps(head, sort_keys=True)] + [json.dumps(s.to_json(), sort_keys=True) for s in ep.steps]
    _atomic_write(Path(path), ("\n".join(lines) + "\n").encode())


def read_episode_log(path) -> Episode:
    lines = [line for line in Path(path).read_text().splitlines() if line.strip()]
    if not lines:
        raise ValueError(f"{path}: empty episode log")
    head = json.loads(lines[0])
    for key in ("stopped", "shortest_length", "path_length", "d_g"):
        if key not in head:
            raise ValueError(f"{path}: header lacks {key!r}")
    sx, sz, sh = head.get("start", (0.0, 0.0, 0.0))
    ep = Episode(
        head.get("scene", ""),
        AgentState(Vec2(sx, sz), sh),
        Vec2(*head.get("goal", (0.0, 0.0))),
        [StepRecord.from_json(json.loads(line)) for line in lines[1:]],
        bool(head["stopped"]),
        None,
        float(head["shortest_length"]),
        float(head["path_length"]),
        float(head["d_g"]),
        str(head.get("episode_id", "")),
    )
    return ep
