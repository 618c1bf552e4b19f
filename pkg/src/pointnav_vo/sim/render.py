"""2.5-D depth rendering and landmark correspondences.

Walls are vertical prisms of height ``wall_height`` standing on a flat floor;
the camera sits ``camera_height`` above the floor looking along the agent's
forward direction.  Camera axes are x right, y down, z forward, so a point at
agent coordinates ``(x, z)`` and height ``h`` is at ``(x, camera_height - h, -z)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..depth import CameraIntrinsics, DepthImage, intrinsics_from_fov
from ..se2 import compose, inverse
from ..vo_classical import Correspondences
from .agent import AgentState
from .grid import OccupancyGrid

__all__ = ["CameraRig", "render_depth", "render_correspondences", "surface_depth"]


@dataclass(frozen=True)
class CameraRig:
    K: CameraIntrinsics
    camera_height: float = 0.88
    wall_height: float = 2.5
    z_min: float = 0.0
    z_max: float = 10.0
    depth_noise: float = 0.0

    def __post_init__(self):
        if not 0 < self.camera_height < self.wall_height:
            raise ValueError("camera must sit between the floor and the wall tops")
        if self.depth_noise < 0:
            raise ValueError("depth_noise must be non-negative")

    @classmethod
    def default(cls, hfov: float = 70.0, width: int = 341, height: int = 192, **kw) -> "CameraRig":
        return cls(intrinsics_from_fov(hfov, width, height), **kw)


def _wall_depth(grid: OccupancyGrid, state: AgentState, rig: CameraRig, xc: np.ndarray) -> np.ndarray:
    """Forward (z-buffer) distance to the wall seen along each horizontal ray slope."""
    norm = np.sqrt(1.0 + xc**2)
    dirs_agent = np.column_stack([xc, -np.ones_like(xc)]) / norm[:, None]
    c, s = np.cos(state.heading), np.sin(state.heading)
    dirs = dirs_agent @ np.array([[c, s], [-s, c]])
    reach = rig.z_max * norm.max() + grid.resolution
    return grid.raycast(state.position, dirs, reach) / norm


def _shade(z_wall: np.ndarray, yc: np.ndarray, rig: CameraRig) -> np.ndarray:
    """Depth along rays of vertical slope ``yc`` given the wall depth of their column."""
    with np.errstate(invalid="ignore", divide="ignore"):
        y_at_wall = yc * z_wall
        floor = np.where(yc > 0, rig.camera_height / yc, np.inf)
    hit = np.isfinite(z_wall)
    below = np.where(hit, y_at_wall > rig.camera_height, yc > 0)
    above = np.where(hit, y_at_wall < rig.camera_height - rig.wall_height, yc <= 0)
    return np.where(below, floor, np.where(above, np.inf, z_wall))


def surface_depth(
    grid: OccupancyGrid, state: AgentState, rig: CameraRig, xc: np.ndarray, yc: np.ndarray
) -> np.ndarray:
    """Exact depth along normalized image rays ``(xc, yc, 1)``; ``inf`` for open sky."""
    return _shade(_wall_depth(grid, state, rig, np.asarray(xc, float)), np.asarray(yc, float), rig)


def render_depth(
    grid: OccupancyGrid,
    state: AgentState,
    rig: CameraRig,
    rng: np.random.Generator | int | None = None,
) -> DepthImage:
    """Ray-cast one horizontal ray per column and fill rows with wall, floor or sky.

    Depth beyond ``z_max`` (including open sky) is clamped to ``z_max``.  With
    ``rig.depth_noise > 0`` additive Gaussian noise is drawn from ``rng``.
    """
    K = rig.K
    xc = (np.arange(K.width) + 0.5 - K.cx) / K.fx
    yc = (np.arange(K.height) + 0.5 - K.cy) / K.fy
    depth = _shade(_wall_depth(grid, state, rig, xc)[None, :], yc[:, None], rig)
    depth = np.minimum(depth, rig.z_max)
    if rig.depth_noise > 0:
        depth = depth + rig.depth_noise * np.random.default_rng(rng).standard_normal(depth.shape)
    return DepthImage.clipped(depth, rig.z_min, rig.z_max)


def render_correspondences(
    grid: OccupancyGrid,
    s1: AgentState,
    s2: AgentState,
    rig: CameraRig,
    n_points: int = 60,
    rng: np.random.Generator | int | None = 0,
    max_rounds: int = 20,
) -> Correspondences:
    """Pixels of surface points seen in both views, with their depths.

    Points are drawn at random pixels of the first view, lifted with the exact
    scene depth, moved into the second view and kept when they land inside
    the image, within range and unoccluded.  Depths get the rig's noise.
    """
    rng = np.random.default_rng(rng)
    K = rig.K
    H = compose(inverse(s2.pose), s1.pose)
    c, s = np.cos(H.theta), np.sin(H.theta)
    out = []
    total = 0
    for _ in range(max_rounds):
        m = 3 * n_points
        u = rng.uniform(0.0, K.width, m)
        v = rng.uniform(0.0, K.height, m)
        xc, yc = (u - K.cx) / K.fx, (v - K.cy) / K.fy
        z1 = surface_depth(grid, s1, rig, xc, yc)
        ok = np.isfinite(z1) & (z1 < rig.z_max) & (z1 > rig.z_min)
        p1 = np.column_stack([xc * z1, yc * z1, z1])[ok]
        # agent-plane coordinates and height, then into the second frame
        ax, az = p1[:, 0], -p1[:, 2]
        bx = c * ax - s * az + H.x
        bz = s * ax + c * az + H.z
        p2 = np.column_stack([bx, p1[:, 1], -bz])
        front = p2[:, 2] > 0.1
        uv2 = np.full((len(p2), 2), -1.0)
        uv2[front] = (p2[front] @ K.K.T)[:, :2] / p2[front, 2:3]
        inside = front & (uv2[:, 0] >= 0) & (uv2[:, 0] < K.width) & (uv2[:, 1] >= 0) & (uv2[:, 1] < K.height)
        inside &= (p2[:, 2] < rig.z_max) & (p2[:, 2] > rig.z_min)
        if inside.any():
            idx = np.nonzero(inside)[0]
            seen = surface_depth(grid, s2, rig, p2[idx, 0] / p2[idx, 2], p2[idx, 1] / p2[idx, 2])
            visible = seen >= p2[idx, 2] * (1.0 - 1e-9) - 1e-9
            idx = idx[visible]
            uv1 = np.column_stack([u, v])[ok][idx]
            out.append((uv1, uv2[idx], p1[idx, 2], p2[idx, 2]))
            total += len(idx)
        if total >= n_points:
            break
    if not out:
        return Correspondences(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0), np.zeros(0))
    uv1, uv2, d1, d2 = (np.concatenate(parts)[:n_points] for parts in zip(*out))
    if rig.depth_noise > 0:
        d1 = np.clip(d1 + rig.depth_noise * rng.standard_normal(len(d1)), 1e-3, None)
        d2 = np.clip(d2 + rig.depth_noise * rng.standard_normal(len(d2)), 1e-3, None)
    return Correspondences(uv1, uv2, d1, d2)
