"""Planar navigation simulator: grids, actuation, rendering, episodes, datasets."""

from .agent import MOVEMENT_ACTIONS, Action, ActionNoise, ActuationNoiseModel, AgentState, step
from .dataset import (
    VoDataset,
    VoSample,
    augment_turn_pairs,
    follow_shortest_path,
    generate_vo_dataset,
    read_dataset,
    sample_start_goal,
    write_dataset,
)
from .episode import (
    ClassicalEstimator,
    Episode,
    GreedyPolicy,
    StepObservation,
    StepRecord,
    episode_seed,
    ground_truth_estimator,
    read_episode_log,
    run_episode,
    write_episode_log,
    zero_estimator,
)
from .grid import OccupancyGrid, empty_scene, procedural_scene, read_grid, write_grid
from .planning import AGENT_RADIUS, PathResult, geodesic_distance, shortest_path
from .render import CameraRig, render_correspondences, render_depth

__all__ = [
    "AGENT_RADIUS",
    "MOVEMENT_ACTIONS",
    "Action",
    "ActionNoise",
    "ActuationNoiseModel",
    "AgentState",
    "CameraRig",
    "ClassicalEstimator",
    "Episode",
    "GreedyPolicy",
    "OccupancyGrid",
    "PathResult",
    "StepObservation",
    "StepRecord",
    "VoDataset",
    "VoSample",
    "augment_turn_pairs",
    "empty_scene",
    "episode_seed",
    "follow_shortest_path",
    "generate_vo_dataset",
    "geodesic_distance",
    "ground_truth_estimator",
    "procedural_scene",
    "read_dataset",
    "read_episode_log",
    "read_grid",
    "render_correspondences",
    "render_depth",
    "run_episode",
    "sample_start_goal",
    "shortest_path",
    "step",
    "write_dataset",
    "write_episode_log",
    "write_grid",
    "zero_estimator",
]
