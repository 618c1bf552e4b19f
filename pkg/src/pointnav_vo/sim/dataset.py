"""VO training data: trajectories along shortest paths, sampled step pairs.

Observations are rendered lazily from the recorded states so that dataset
statistics can be gathered without rendering every frame.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from ..depth import DepthImage, _atomic_write, read_depth, write_depth
from ..errors import DomainError, InvalidState, NoPath
from ..losses import Se2Params
from ..se2 import Se2, Vec2, inverse
from ..vo_classical import Correspondences, read_correspondences, write_correspondences
from .agent import MOVEMENT_ACTIONS, Action, ActuationNoiseModel, AgentState, step
from .episode import GreedyPolicy, episode_seed
from .grid import OccupancyGrid
from .planning import AGENT_RADIUS, shortest_path, traversable
from .render import CameraRig, render_correspondences, render_depth

__all__ = [
    "VoSample",
    "VoDataset",
    "Transition",
    "sample_start_goal",
    "follow_shortest_path",
    "generate_vo_dataset",
    "augment_turn_pairs",
    "write_dataset",
    "read_dataset",
]

WAYPOINT_RADIUS = 0.25
REPLAN_AFTER_COLLISIONS = 2
START_CLEARANCE = AGENT_RADIUS + 0.05
PATH_MARGIN = 0.05


@dataclass(frozen=True)
class Transition:
    before: AgentState
    after: AgentState
    action: Action
    gt: Se2
    collided: bool


@dataclass(frozen=True, eq=False)
class VoSample:
    """One training pair with its action label and ground-truth motion.

    Either ``grid``/``before``/``after``/``rig`` are set and observations are
    rendered on first access (seeded by ``render_seed``), or ``preloaded``
    carries them.  ``flipped`` marks a pair whose frames were swapped.
    """

    sample_id: str
    action: Action
    gt: Se2
    collided: bool
    grid: OccupancyGrid | None = None
    before: AgentState | None = None
    after: AgentState | None = None
    rig: CameraRig | None = None
    render_seed: int = 0
    flipped: bool = False
    preloaded: tuple | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def gt_params(self) -> Se2Params:
        return Se2Params.from_se2(self.gt)

    @property
    def scene(self) -> str:
        return self.grid.name if self.grid is not None else ""

    def _rng(self, stream: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.render_seed, spawn_key=(stream,)))

    def _require_states(self):
        if self.grid is None or self.rig is None:
            raise ValueError(f"sample {self.sample_id} has neither states nor observations")

    def depths(self) -> tuple[DepthImage, DepthImage]:
        """``(depth_t, depth_t+1)``, rendered once and cached."""
        if self.preloaded is not None:
            return self.preloaded[0], self.preloaded[1]
        if "depth" not in self._cache:
            self._require_states()
            d0 = render_depth(self.grid, self.before, self.rig, self._rng(0))
            d1 = render_depth(self.grid, self.after, self.rig, self._rng(1))
            self._cache["depth"] = (d1, d0) if self.flipped else (d0, d1)
        return self._cache["depth"]

    @property
    def correspondences(self) -> Correspondences:
        if self.preloaded is not None:
            return self.preloaded[2]
        if "corr" not in self._cache:
            self._require_states()
            c = render_correspondences(self.grid, self.before, self.after, self.rig, rng=self._rng(2))
            self._cache["corr"] = c.swapped() if self.flipped else c
        return self._cache["corr"]

    def observations(self) -> tuple[DepthImage, DepthImage, Correspondences]:
        """``(depth_t, depth_t+1, correspondences)``."""
        return (*self.depths(), self.correspondences)

    @property
    def depth_t(self) -> DepthImage:
        return self.depths()[0]

    @property
    def depth_t1(self) -> DepthImage:
        return self.depths()[1]

    def swapped(self, action: Action, sample_id: str | None = None) -> "VoSample":
        """The reversed pair: frames exchanged and the inverse motion as ground truth."""
        pre = None
        if self.preloaded is not None:
            d0, d1, c = self.preloaded
            pre = (d1, d0, c.swapped())
        return VoSample(
            sample_id or f"{self.sample_id}r",
            action,
            inverse(self.gt),
            self.collided,
            self.grid,
            self.before,
            self.after,
            self.rig,
            self.render_seed,
            not self.flipped,
            pre,
        )


@dataclass
class VoDataset:
    samples: list[VoSample]
    manifest: dict

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)


def sample_start_goal(
    grid: OccupancyGrid,
    rng: np.random.Generator,
    min_geodesic: float = 1.0,
    max_geodesic: float = math.inf,
    tries: int = 100,
) -> tuple[AgentState, Vec2, float]:
    """Random start pose and a goal reachable from it, with their geodesic distance."""
    free = grid.clearance >= START_CLEARANCE
    labels, n = ndimage.label(traversable(grid) & free, structure=np.ones((3, 3)))
    if n == 0:
        raise InvalidState("scene has no free space")
    rows, cols = np.nonzero(labels)
    for _ in range(tries):
        i, j = rng.integers(len(rows), size=2)
        if labels[rows[i], cols[i]] != labels[rows[j], cols[j]]:
            continue
        start = Vec2(*grid.cell_center(rows[i], cols[i]))
        goal = Vec2(*grid.cell_center(rows[j], cols[j]))
        try:
            length = shortest_path(grid, start, goal).length
        except NoPath:
            continue
        if min_geodesic <= length <= max_geodesic:
            heading = float(rng.uniform(-math.pi, math.pi))
            return AgentState(start, heading), goal, length
    raise NoPath("no start/goal pair found in the requested range")


def _escape_turn(grid: OccupancyGrid, state: AgentState) -> Action:
    """Turn toward whichever side has more open space."""
    left = state.to_world((-1.0, 0.0))
    right = state.to_world((1.0, 0.0))
    p = np.array(state.position)
    dirs = np.array([np.array(left) - p, np.array(right) - p])
    free_left, free_right = grid.raycast(state.position, dirs, 5.0)
    return Action.TURN_LEFT if free_left >= free_right else Action.TURN_RIGHT


def follow_shortest_path(
    grid: OccupancyGrid,
    start: AgentState,
    goal,
    noise: ActuationNoiseModel,
    rng: np.random.Generator,
    max_steps: int = 500,
    policy: GreedyPolicy = GreedyPolicy(),
) -> tuple[list[Transition], bool]:
    """Drive toward successive path waypoints using true positions.

    After ``REPLAN_AFTER_COLLISIONS`` consecutive collisions the agent turns
    twice toward the more open side, steps forward and replans.
    """
    goal = Vec2(*goal)
    path = shortest_path(grid, start.position, goal, margin=PATH_MARGIN).waypoints
    wp = 1
    state = start
    out: list[Transition] = []
    stuck = 0
    escape: list[Action] = []
    for _ in range(max_steps):
        if escape:
            action = escape.pop(0)
        else:
            while wp < len(path) - 1 and math.dist(state.position, path[wp]) < WAYPOINT_RADIUS:
                wp += 1
            rel = state.to_agent(path[wp])
            action = policy(rel) if wp == len(path) - 1 else policy.steer(rel)
        if action == Action.STOP:
            return out, True
        new, gt, collided = step(state, action, grid, noise, rng)
        out.append(Transition(state, new, action, gt, collided))
        state = new
        stuck = stuck + 1 if collided else 0
        if stuck >= REPLAN_AFTER_COLLISIONS and not escape:
            turn = _escape_turn(grid, state)
            escape = [turn, turn, Action.MOVE_FORWARD]
            stuck = 0
        elif not escape and out[-1].action == Action.MOVE_FORWARD and len(out) > 1 and out[-2].collided:
            try:
                path = shortest_path(grid, state.position, goal, margin=PATH_MARGIN).waypoints
                wp = 1
            except DomainError:
                pass
    return out, False


def _episode_transitions(args) -> tuple[int, list[Transition]]:
    scenes, index, seed, noise, per_episode, max_steps, geo_range = args
    rng = np.random.default_rng(episode_seed(seed, index))
    scene = index % len(scenes)
    grid = scenes[scene]
    start, goal, _ = sample_start_goal(grid, rng, *geo_range)
    steps, _ = follow_shortest_path(grid, start, goal, noise, rng, max_steps)
    if per_episode and len(steps) > per_episode:
        keep = np.sort(rng.choice(len(steps), size=per_episode, replace=False))
        steps = [steps[k] for k in keep]
    return scene, steps


def generate_vo_dataset(
    scenes: list[OccupancyGrid],
    n_samples: int,
    noise: ActuationNoiseModel | None = None,
    rng_seed: int = 0,
    rig: CameraRig | None = None,
    samples_per_episode: int = 0,
    max_steps: int = 500,
    geodesic_range: tuple[float, float] = (1.0, math.inf),
    jobs: int = 1,
) -> VoDataset:
    """Trajectories from random start/goal pairs, cut into labelled step pairs.

    Episode ``k`` uses scene ``k mod len(scenes)`` and its own random stream,
    so the result does not depend on ``jobs``.  ``samples_per_episode = 0``
    keeps every step.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if not scenes:
        raise ValueError("at least one scene is required")
    noise = noise if noise is not None else ActuationNoiseModel()
    rig = rig if rig is not None else CameraRig.default()
    transitions: list[tuple[int, Transition]] = []
    episodes = 0
    batch = max(jobs, 1) * 4
    pool = ProcessPoolExecutor(jobs) if jobs > 1 else None
    try:
        while len(transitions) < n_samples:
            args = [
                (scenes, k, rng_seed, noise, samples_per_episode, max_steps, geodesic_range)
                for k in range(episodes, episodes + batch)
            ]
            results = pool.map(_episode_transitions, args) if pool else map(_episode_transitions, args)
            for scene, steps in results:
                transitions.extend((scene, tr) for tr in steps)
                episodes += 1
                if len(transitions) >= n_samples:
                    break
    finally:
        if pool:
            pool.shutdown()
    transitions = transitions[:n_samples]
    root = np.random.SeedSequence(entropy=int(rng_seed), spawn_key=(2**31,))
    render_seeds = root.generate_state(n_samples, dtype=np.uint64)
    samples = []
    for i, (scene, tr) in enumerate(transitions):
        samples.append(
            VoSample(
                f"{i:06d}",
                tr.action,
                tr.gt,
                tr.collided,
                scenes[scene],
                tr.before,
                tr.after,
                rig,
                int(render_seeds[i]),
            )
        )
    return VoDataset(samples, dataset_manifest(samples, rng_seed, episodes))


def dataset_manifest(samples, seed=None, episodes=None) -> dict:
    counts = Counter(s.action.value for s in samples)
    n = len(samples)
    man = {
        "n_samples": n,
        "actions": {a.value: counts.get(a.value, 0) for a in MOVEMENT_ACTIONS},
        "action_fraction": {a.value: counts.get(a.value, 0) / n for a in MOVEMENT_ACTIONS},
        "collisions": sum(s.collided for s in samples),
        "collision_rate": sum(s.collided for s in samples) / n,
    }
    if seed is not None:
        man["seed"] = int(seed)
    if episodes is not None:
        man["episodes"] = int(episodes)
    return man


def augment_turn_pairs(samples: list[VoSample]) -> list[VoSample]:
    """Add the reversed pair of every turn, relabelled as the opposite turn.

    Forward steps are passed through unchanged.
    """
    out = []
    opposite = {Action.TURN_LEFT: Action.TURN_RIGHT, Action.TURN_RIGHT: Action.TURN_LEFT}
    for s in samples:
        out.append(s)
        if s.action in opposite:
            out.append(s.swapped(opposite[s.action]))
    return out


# -- on-disk format ------------------------------------------------------------


def write_dataset(out_dir, samples: list[VoSample], manifest: dict | None = None):
    """Depth files, correspondence CSVs, ``index.jsonl`` and ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for s in samples:
        d0, d1, c = s.observations()
        names = {
            "depth_t": f"{s.sample_id}_t.dpth",
            "depth_t1": f"{s.sample_id}_t1.dpth",
            "correspondences": f"{s.sample_id}.csv",
        }
        write_depth(out / names["depth_t"], d0)
        write_depth(out / names["depth_t1"], d1)
        write_correspondences(out / names["correspondences"], c)
        rec = {
            "id": s.sample_id,
            "scene": s.scene,
            "action": s.action.value,
            "gt": list(s.gt.to_tuple()),
            "collided": bool(s.collided),
            **names,
        }
        lines.append(json.dumps(rec, sort_keys=True))
    _atomic_write(out / "index.jsonl", ("\n".join(lines) + "\n").encode())
    man = manifest if manifest is not None else dataset_manifest(samples)
    _atomic_write(out / "manifest.json", (json.dumps(man, indent=2, sort_keys=True) + "\n").encode())


def read_dataset(in_dir) -> list[VoSample]:
    root = Path(in_dir)
    index = root / "index.jsonl"
    if not index.exists():
        raise FileNotFoundError(f"{index} not found")
    samples = []
    for lineno, line in enumerate(index.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            obs = (
                read_depth(root / rec["depth_t"]),
                read_depth(root / rec["depth_t1"]),
                read_correspondences(root / rec["correspondences"]),
            )
            samples.append(
                VoSample(
                    rec["id"],
                    Action.parse(rec["action"]),
                    Se2.from_tuple(rec["gt"]),
                    bool(rec["collided"]),
                    preloaded=obs,
                )
            )
        except (KeyError, json.JSONDecodeError) as exc:
            raise ValueError(f"{index}:{lineno}: malformed record ({exc})") from None
    return samples
