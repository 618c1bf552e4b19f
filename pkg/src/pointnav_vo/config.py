"""Plain-text ``key = value`` configuration with documented defaults.

Lines starting with ``#`` and blank lines are ignored.  Every key must be one
of :data:`DEFAULTS`; values are parsed with the type of the default.  Pair
values such as pooling grids are written ``ROWSxCOLS``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

from .losses import LossWeights
from .sim.agent import ActionNoise, ActuationNoiseModel
from .sim.render import CameraRig
from .trainer import RANK_TOL, FeatureConfig

__all__ = ["ConfigError", "Config", "DEFAULTS", "load_config", "parse_assignment"]


class ConfigError(ValueError):
    pass


Pair = tuple[int, int]

# key: (default, description)
DEFAULTS: dict[str, tuple[object, str]] = {
    "seed": (0, "master seed; the --seed flag overrides it"),
    "noise.forward_step": (0.25, "mean forward displacement, m"),
    "noise.forward_sigma_x": (0.005, "lateral sigma of a forward step, m"),
    "noise.forward_sigma_z": (0.02, "longitudinal sigma of a forward step, m"),
    "noise.forward_yaw_sigma_deg": (1.0, "heading sigma of a forward step, deg"),
    "noise.turn_deg": (30.0, "mean turn angle, deg"),
    "noise.turn_yaw_sigma_deg": (1.5, "turn angle sigma, deg"),
    "noise.turn_sigma": (0.005, "translation sigma while turning, m"),
    "noise.rotate_on_collision": (True, "keep the sampled rotation when a forward step collides"),
    "camera.hfov": (70.0, "horizontal field of view, deg"),
    "camera.width": (341, "image width, px"),
    "camera.height": (192, "image height, px"),
    "camera.z_min": (0.0, "sensor minimum range, m"),
    "camera.z_max": (10.0, "sensor maximum range, m"),
    "camera.mount_height": (0.88, "camera height above the floor, m"),
    "camera.wall_height": (2.5, "height of every wall, m"),
    "camera.depth_noise": (0.0, "additive depth noise sigma, m"),
    "features.depth_pool": ((4, 8), "block grid for raw depth means"),
    "features.n_bins": (20, "depth discretization intervals N"),
    "features.ddepth_pool": ((1, 2), "block grid for discretized-depth means"),
    "features.proj_size": ((20, 4), "soft projection grid used for features"),
    "features.proj_pool": ((20, 2), "block grid for soft projection means"),
    "project.height": (96, "rows of the projection written by project-depth"),
    "project.width": (96, "columns of the projection written by project-depth"),
    "loss.lambda_reg": (1.0, "regression loss weight"),
    "loss.lambda_inv_trans": (1.0, "translation invariance loss weight"),
    "loss.lambda_inv_rot": (1.0, "rotation invariance loss weight"),
    "train.epochs": (500, "full-batch descent iterations"),
    "train.lr": (1.0, "initial step size before backtracking"),
    "train.sep_act": (True, "fit one model per action"),
    "train.val_fraction": (0.2, "share of samples held out for validation"),
    "train.rank_tol": (RANK_TOL, "relative variance below which feature directions are dropped"),
    "train.augment_turns": (False, "add reversed turn pairs before training"),
    "dataset.samples_per_episode": (0, "steps kept per trajectory, 0 keeps all"),
    "dataset.max_steps": (500, "step limit of a data-collection trajectory"),
    "dataset.min_geodesic": (1.0, "minimum start-goal geodesic distance, m"),
    "scenes.width": (10.0, "procedural scene width, m"),
    "scenes.height": (10.0, "procedural scene height, m"),
    "scenes.resolution": (0.05, "grid resolution, m per cell"),
    "scenes.walls": (2, "partition walls per procedural scene"),
    "scenes.boxes": (8, "obstacles per procedural scene"),
    "sim.max_steps": (500, "episode step limit"),
    "sim.n_points": (60, "landmark correspondences per step for the classical estimator"),
    "sim.scale_mode": ("projection", "classical VO scale mode: projection or norm"),
    "metrics.success_distance": (0.36, "success radius, m"),
    "metrics.clamp_soft_spl": (False, "clamp SoftSPL at zero"),
}


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_pair(text: str) -> Pair:
    parts = text.lower().replace(",", "x").split("x")
    if len(parts) != 2:
        raise ValueError(f"expected ROWSxCOLS, got {text!r}")
    return int(parts[0]), int(parts[1])


def _convert(key: str, text: str):
    default = DEFAULTS[key][0]
    try:
        if isinstance(default, bool):
            return _parse_bool(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            value = float(text)
            if not math.isfinite(value):
                raise ValueError("must be finite")
            return value
        if isinstance(default, tuple):
            return _parse_pair(text)
        return text.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from None


def parse_assignment(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError(f"expected KEY=VALUE, got {text!r}")
    key, value = (part.strip() for part in text.split("=", 1))
    if key not in DEFAULTS:
        raise ConfigError(f"unknown config key {key!r}")
    return key, _convert(key, value)


@dataclass
class Config:
    values: dict[str, object] = field(default_factory=lambda: {k: v[0] for k, v in DEFAULTS.items()})

    def __getitem__(self, key: str):
        return self.values[key]

    def set(self, assignment: str):
        key, value = parse_assignment(assignment)
        self.values[key] = value

    def dump(self) -> str:
        lines = []
        for k, v in self.values.items():
            text = f"{v[0]}x{v[1]}" if isinstance(v, tuple) else str(v).lower() if isinstance(v, bool) else str(v)
            lines.append(f"{k} = {text}")
        return "\n".join(lines) + "\n"

    def noise_model(self) -> ActuationNoiseModel:
        v = self.values
        turn = math.radians(v["noise.turn_deg"])
        turn_sigma = math.radians(v["noise.turn_yaw_sigma_deg"])
        ts = (v["noise.turn_sigma"],) * 2
        try:
            return ActuationNoiseModel(
                ActionNoise(
                    (0.0, -v["noise.forward_step"]),
                    (v["noise.forward_sigma_x"], v["noise.forward_sigma_z"]),
                    0.0,
                    math.radians(v["noise.forward_yaw_sigma_deg"]),
                ),
                ActionNoise((0.0, 0.0), ts, turn, turn_sigma),
                ActionNoise((0.0, 0.0), ts, -turn, turn_sigma),
                v["noise.rotate_on_collision"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def camera_rig(self) -> CameraRig:
        v = self.values
        try:
            return CameraRig.default(
                v["camera.hfov"],
                v["camera.width"],
                v["camera.height"],
                camera_height=v["camera.mount_height"],
                wall_height=v["camera.wall_height"],
                z_min=v["camera.z_min"],
                z_max=v["camera.z_max"],
                depth_noise=v["camera.depth_noise"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def feature_config(self) -> FeatureConfig:
        v = self.values
        try:
            return FeatureConfig(
                v["features.depth_pool"],
                v["features.n_bins"],
                v["features.ddepth_pool"],
                v["features.proj_size"],
                v["features.proj_pool"],
                v["camera.hfov"],
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def loss_weights(self) -> LossWeights:
        v = self.values
        try:
            return LossWeights(v["loss.lambda_reg"], v["loss.lambda_inv_trans"], v["loss.lambda_inv_rot"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None


def load_config(path=None, overrides=()) -> Config:
    """Defaults, then the file at ``path`` (if any), then ``overrides``."""
    cfg = Config()
    if path is not None:
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                cfg.set(line)
            except ConfigError as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from None
    for item in overrides:
        cfg.set(item)
    return cfg
