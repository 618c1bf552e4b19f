"""Depth images and their derived representations.

Camera frame convention used throughout the package: +x right, +y down,
+z along the optical axis (forward), so a pixel's unprojected ``z`` equals its
z-buffer depth.  Image coordinates are continuous with pixel ``(u, v)``
covering ``[u, u + 1) x [v, v + 1)``; its center is ``(u + 0.5, v + 0.5)``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "CameraIntrinsics",
    "DepthImage",
    "DiscretizedDepth",
    "SoftProjection",
    "PointCloud",
    "intrinsics_from_fov",
    "pixel_rays",
    "unproject",
    "project",
    "discretize_depth",
    "bin_edges",
    "soft_projection",
    "read_depth",
    "write_depth",
    "write_pgm",
    "DEPTH_MAGIC",
]

DEPTH_MAGIC = "DPTH1"


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics plus image size."""

    K: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float)
        if K.shape != (3, 3):
            raise ValueError("K must be 3x3")
        if not (K[0, 0] > 0 and K[1, 1] > 0):
            raise ValueError("focal lengths must be positive")
        if abs(np.linalg.det(K)) < 1e-12:
            raise ValueError("K must be invertible")
        K.setflags(write=False)
        object.__setattr__(self, "K", K)

    @property
    def fx(self) -> float:
        return float(self.K[0, 0])

    @property
    def fy(self) -> float:
        return float(self.K[1, 1])

    @property
    def cx(self) -> float:
        return float(self.K[0, 2])

    @property
    def cy(self) -> float:
        return float(self.K[1, 2])

    @property
    def K_inv(self) -> np.ndarray:
        return np.linalg.inv(self.K)

    def x_extent(self, z: float) -> tuple[float, float]:
        """Camera-frame x of the left and right frustum edges at depth ``z``."""
        return (-self.cx / self.fx * z, (self.width - self.cx) / self.fx * z)


def intrinsics_from_fov(hfov: float, width: int, height: int) -> CameraIntrinsics:
    """Square-pixel intrinsics from a horizontal field of view in degrees."""
    if not 0.0 < hfov < 180.0:
        raise ValueError(f"hfov must be in (0, 180) degrees, got {hfov}")
    if width < 1 or height < 1:
        raise ValueError("image size must be positive")
    fx = (width / 2.0) / math.tan(math.radians(hfov) / 2.0)
    K = np.array([[fx, 0.0, width / 2.0], [0.0, fx, height / 2.0], [0.0, 0.0, 1.0]])
    return CameraIntrinsics(K, int(width), int(height))


@dataclass(frozen=True, eq=False)
class DepthImage:
    """Per-pixel z-buffer depth in meters, shape ``(height, width)``."""

    values: np.ndarray
    z_min: float = 0.0
    z_max: float = 10.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("depth values must be a 2-D array")
        if not self.z_min < self.z_max:
            raise ValueError("z_min must be smaller than z_max")
        if v.size and (v.min() < self.z_min or v.max() > self.z_max or not np.isfinite(v).all()):
            raise ValueError(f"depth values must lie in [{self.z_min}, {self.z_max}]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @classmethod
    def clipped(cls, values, z_min: float = 0.0, z_max: float = 10.0) -> "DepthImage":
        return cls(np.clip(values, z_min, z_max), z_min, z_max)

    def __eq__(self, other):
        if not isinstance(other, DepthImage):
            return NotImplemented
        return (
            self.z_min == other.z_min
            and self.z_max == other.z_max
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True, eq=False)
class DiscretizedDepth:
    """One-hot depth planes, shape ``(n_bins, height, width)``."""

    channels: np.ndarray

    @property
    def n_bins(self) -> int:
        return self.channels.shape[0]

    def bin_index(self) -> np.ndarray:
        return np.argmax(self.channels, axis=0)


@dataclass(frozen=True, eq=False)
class SoftProjection:
    """Top-down point histogram normalized by its largest cell count."""

    grid: np.ndarray
    counts: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Camera-frame points, shape ``(n, 3)``."""

    points: np.ndarray

    def __len__(self):
        return len(self.points)


def pixel_rays(K: CameraIntrinsics, u, v) -> np.ndarray:
    """Rays ``K^-1 (u, v, 1)`` at continuous image coordinates, normalized to z = 1."""
    u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
    return np.stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones_like(u)], axis=-1)


def _check_dims(depth: DepthImage, K: CameraIntrinsics):
    if (depth.width, depth.height) != (K.width, K.height):
        raise ValueError(
            f"depth image is {depth.width}x{depth.height} but intrinsics expect {K.width}x{K.height}"
        )


def unproject(depth: DepthImage, K: CameraIntrinsics, valid_only: bool = False) -> PointCloud:
    """Back-project every pixel center through ``K^-1`` and scale by its depth.

    Points are returned in row-major pixel order.  With ``valid_only`` pixels
    at ``z_min`` (no return) are dropped.
    """
    _check_dims(depth, K)
    vv, uu = np.mgrid[0 : depth.height, 0 : depth.width]
    rays = (np.stack([uu + 0.5, vv + 0.5, np.ones(uu.shape)], axis=-1) @ K.K_inv.T).reshape(-1, 3)
    d = depth.values.reshape(-1)
    pts = rays * d[:, None]
    if valid_only:
        pts = pts[d > depth.z_min]
    return PointCloud(pts)


def project(points, K: CameraIntrinsics) -> np.ndarray:
    """Project camera-frame points to continuous image coordinates ``(n, 2)``."""
    p = np.asarray(points, dtype=float).reshape(-1, 3)
    uvw = p @ K.K.T
    return uvw[:, :2] / uvw[:, 2:3]


def bin_edges(n_bins: int, z_min: float, z_max: float) -> np.ndarray:
    """Equidistant interval end-points ``z_0 < ... < z_N``."""
    edges = z_min + np.arange(n_bins + 1) * (z_max - z_min) / n_bins
    edges[-1] = z_max
    return edges


def discretize_depth(depth: DepthImage, n_bins: int) -> DiscretizedDepth:
    """One-hot encode depth into ``n_bins`` equal-width intervals.

    Channel ``i`` (0-based) is set where depth lies in ``[z_i, z_i+1)``;
    depth equal to ``z_max`` goes to the last channel.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    edges = bin_edges(n_bins, depth.z_min, depth.z_max)
    idx = np.searchsorted(edges[1:-1], depth.values, side="right")
    channels = (idx[None, :, :] == np.arange(n_bins)[:, None, None]).astype(np.uint8)
    return DiscretizedDepth(channels)


def soft_projection(
    depth: DepthImage, K: CameraIntrinsics, out_h: int = 96, out_w: int = 96
) -> SoftProjection:
    """Normalized top-down histogram of the depth point cloud.

    Points are binned by ``(z, x)``: rows span ``[z_min, z_max]`` and columns
    span the camera frustum's horizontal extent at ``z_max``.  Counts are
    divided by the largest cell count.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError("projection size must be positive")
    _check_dims(depth, K)
    x_min, x_max = K.x_extent(depth.z_max)
    if not x_max > x_min:
        raise ValueError("degenerate bounding box")
    d = depth.values
    valid = d > depth.z_min
    counts = np.zeros((out_h, out_w), dtype=np.int64)
    if valid.any():
        vv, uu = np.nonzero(valid)
        z = d[valid]
        x = (uu + 0.5 - K.cx) / K.fx * z
        row = np.floor(out_h * (z - depth.z_min) / (depth.z_max - depth.z_min)).astype(np.int64)
        col = np.floor(out_w * (x - x_min) / (x_max - x_min)).astype(np.int64)
        np.clip(row, 0, out_h - 1, out=row)
        np.clip(col, 0, out_w - 1, out=col)
        np.add.at(counts, (row, col), 1)
    peak = counts.max()
    grid = counts / peak if peak > 0 else np.zeros(counts.shape)
    return SoftProjection(grid, counts)


def _atomic_write(path: Path, data: bytes):
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def write_depth(path, depth: DepthImage):
    """Write a ``DPTH1`` file: text header then little-endian float32 rows."""
    header = f"{DEPTH_MAGIC} {depth.width} {depth.height} {depth.z_min!r} {depth.z_max!r}\n"
    body = np.ascontiguousarray(depth.values, dtype="<f4").tobytes()
    _atomic_write(path, header.encode("ascii") + body)


def read_depth(path) -> DepthImage:
    raw = Path(path).read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise ValueError(f"{path}: missing {DEPTH_MAGIC} header")
    fields = raw[:newline].decode("ascii", errors="replace").split()
    if len(fields) != 5 or fields[0] != DEPTH_MAGIC:
        raise ValueError(f"{path}: bad magic, expected {DEPTH_MAGIC}")
    width, height = int(fields[1]), int(fields[2])
    z_min, z_max = float(fields[3]), float(fields[4])
    body = raw[newline + 1 :]
    if len(body) != 4 * width * height:
        raise ValueError(f"{path}: expected {width * height} floats, got {len(body) // 4}")
    values = np.frombuffer(body, dtype="<f4").reshape(height, width).astype(np.float64)
    # float32 rounding may step just outside the declared range
    return DepthImage.clipped(values, z_min, z_max)


def write_pgm(path, image: np.ndarray):
    """Write values in [0, 1] as an 8-bit binary graymap (P5)."""
    img = np.asarray(image, dtype=float)
    pixels = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    header = f"P5\n{pixels.shape[1]} {pixels.shape[0]}\n255\n".encode("ascii")
    _atomic_write(path, header + pixels.tobytes())
