"""Occupancy grids: storage, scene files, collision queries and ray casting.

World coordinates ``(x, z)`` are in meters.  Cell ``(row, col)`` covers
``x in [col * res, (col + 1) * res)`` and ``z in [row * res, (row + 1) * res)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import ndimage

from ..depth import _atomic_write

__all__ = [
    "OccupancyGrid",
    "GRID_MAGIC",
    "DEFAULT_RESOLUTION",
    "read_grid",
    "write_grid",
    "empty_scene",
    "procedural_scene",
]

GRID_MAGIC = "GRID1"
DEFAULT_RESOLUTION = 0.05


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """Boolean occupancy (True = wall) with square cells of ``resolution`` meters."""

    cells: np.ndarray
    resolution: float = DEFAULT_RESOLUTION
    name: str = ""

    def __post_init__(self):
        cells = np.array(self.cells, dtype=bool)
        if cells.ndim != 2 or min(cells.shape) < 3:
            raise ValueError("grid must be 2-D with at least 3x3 cells")
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        if not (cells[0].all() and cells[-1].all() and cells[:, 0].all() and cells[:, -1].all()):
            raise ValueError("boundary cells must be occupied")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def extent(self) -> tuple[float, float]:
        return self.width * self.resolution, self.height * self.resolution

    def __eq__(self, other):
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return self.resolution == other.resolution and np.array_equal(self.cells, other.cells)

    def cell_of(self, p) -> tuple[int, int]:
        x, z = p
        return int(math.floor(z / self.resolution)), int(math.floor(x / self.resolution))

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (col + 0.5) * self.resolution, (row + 0.5) * self.resolution

    def occupied_at(self, p) -> bool:
        r, c = self.cell_of(p)
        if not (0 <= r < self.height and 0 <= c < self.width):
            return True
        return bool(self.cells[r, c])

    @cached_property
    def clearance(self) -> np.ndarray:
        """Lower bound, per cell center, on the distance to any occupied square."""
        edt = ndimage.distance_transform_edt(~self.cells) * self.resolution
        return np.maximum(edt - self.resolution * math.sqrt(0.5), 0.0)

    def _nearby_boxes(self, lo, hi) -> np.ndarray:
        """Occupied squares intersecting the axis-aligned box ``[lo, hi]``, as (k, 4) x0,z0,x1,z1."""
        res = self.resolution
        c0 = max(int(math.floor(lo[0] / res)), 0)
        r0 = max(int(math.floor(lo[1] / res)), 0)
        c1 = min(int(math.floor(hi[0] / res)), self.width - 1)
        r1 = min(int(math.floor(hi[1] / res)), self.height - 1)
        rows, cols = np.nonzero(self.cells[r0 : r1 + 1, c0 : c1 + 1])
        x0 = (cols + c0) * res
        z0 = (rows + r0) * res
        return np.column_stack([x0, z0, x0 + res, z0 + res])

    def disc_free(self, p, radius: float) -> bool:
        """True when a disc of ``radius`` at ``p`` touches no occupied square."""
        x, z = p
        if not (0.0 <= x < self.extent[0] and 0.0 <= z < self.extent[1]):
            return False
        boxes = self._nearby_boxes((x - radius, z - radius), (x + radius, z + radius))
        if len(boxes) == 0:
            return True
        return bool(_point_box_dist2(np.array([[x, z]]), boxes).min() >= radius * radius)

    def segment_free(self, p0, p1, radius: float) -> bool:
        """True when a disc swept from ``p0`` to ``p1`` stays clear of occupied squares.

        The test is exact as long as half a cell diagonal is below ``radius``:
        a segment crossing a square then passes within that distance of one of
        its corners.
        """
        if self.resolution * math.sqrt(0.5) >= radius:
            raise ValueError("cells too coarse for the swept-disc test")
        if not (self.disc_free(p0, radius) and self.disc_free(p1, radius)):
            return False
        a, b = np.asarray(p0, float), np.asarray(p1, float)
        lo, hi = np.minimum(a, b) - radius, np.maximum(a, b) + radius
        boxes = self._nearby_boxes(lo, hi)
        if len(boxes) == 0:
            return True
        corners = np.concatenate(
            [boxes[:, [0, 1]], boxes[:, [2, 1]], boxes[:, [0, 3]], boxes[:, [2, 3]]]
        )
        return bool(_point_segment_dist2(corners, a, b).min() >= radius * radius)

    def raycast(self, origin, directions, max_dist: float) -> np.ndarray:
        """Distance along each unit direction to the first occupied cell.

        Every crossing of a cell boundary up to ``max_dist`` is enumerated, so
        the hit is exact.  Rays that travel ``max_dist`` without a hit return
        ``inf``.
        """
        d = np.atleast_2d(np.asarray(directions, dtype=float))
        n = len(d)
        if self.occupied_at(origin):
            return np.zeros(n)
        res = self.resolution
        o = np.array([origin[0], origin[1]], float) / res
        limit = max_dist / res
        k = np.arange(int(math.ceil(limit)) + 2)
        crossings = []
        with np.errstate(divide="ignore", invalid="ignore"):
            for axis in (0, 1):
                di = d[:, axis : axis + 1]
                base = np.floor(o[axis])
                pos = (base + 1 + k - o[axis]) / di
                neg = (o[axis] - base + k) / -di
                t = np.where(di > 0, pos, np.where(di < 0, neg, np.inf))
                crossings.append(t)
        t = np.sort(np.concatenate(crossings, axis=1), axis=1)
        t = np.concatenate([np.zeros((n, 1)), np.where(t <= limit, t, np.inf)], axis=1)
        with np.errstate(invalid="ignore"):
            mid = 0.5 * (t[:, :-1] + t[:, 1:])
        valid = np.isfinite(mid)
        mid = np.where(valid, mid, 0.0)
        cols = np.floor(o[0] + mid * d[:, 0:1]).astype(np.int64)
        rows = np.floor(o[1] + mid * d[:, 1:2]).astype(np.int64)
        inside = (rows >= 0) & (rows < self.height) & (cols >= 0) & (cols < self.width)
        occ = ~inside
        occ[inside] = self.cells[rows[inside], cols[inside]]
        occ &= valid
        first = np.argmax(occ, axis=1)
        hit = occ[np.arange(n), first]
        return np.where(hit, t[np.arange(n), first] * res, np.inf)


def _point_box_dist2(points: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """Squared distances, shape (n_points, n_boxes)."""
    px, pz = points[:, 0:1], points[:, 1:2]
    dx = np.maximum(np.maximum(boxes[None, :, 0] - px, 0.0), px - boxes[None, :, 2])
    dz = np.maximum(np.maximum(boxes[None, :, 1] - pz, 0.0), pz - boxes[None, :, 3])
    return dx**2 + dz**2


def _point_segment_dist2(points: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.sum((points - a) ** 2, axis=1)
    s = np.clip((points - a) @ ab / denom, 0.0, 1.0)
    closest = a + s[:, None] * ab
    return np.sum((points - closest) ** 2, axis=1)


# -- scene files ----------------------------------------------------------------


def write_grid(path, grid: OccupancyGrid):
    """``GRID1 width height resolution`` header, then one text row per grid row."""
    rows = ["".join("#" if v else "." for v in row) for row in grid.cells]
    text = f"{GRID_MAGIC} {grid.width} {grid.height} {grid.resolution!r}\n" + "\n".join(rows) + "\n"
    _atomic_write(Path(path), text.encode("ascii"))


def read_grid(path) -> OccupancyGrid:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty scene file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != GRID_MAGIC:
        raise ValueError(f"{path}: bad magic, expected {GRID_MAGIC}")
    width, height, res = int(head[1]), int(head[2]), float(head[3])
    body = [line.rstrip("\r") for line in lines[1 : 1 + height]]
    if len(body) != height or any(len(line) != width for line in body):
        raise ValueError(f"{path}: expected {height} rows of {width} cells")
    if any(ch not in "#." for line in body for ch in line):
        raise ValueError(f"{path}: cells must be '#' or '.'")
    cells = np.array([[ch == "#" for ch in line] for line in body], dtype=bool)
    return OccupancyGrid(cells, res, Path(path).stem)


# -- scene builders -------------------------------------------------------------


def empty_scene(width_m: float = 10.0, height_m: float = 10.0, resolution: float = DEFAULT_RESOLUTION) -> OccupancyGrid:
    """A walled rectangular room with nothing inside."""
    w = int(round(width_m / resolution))
    h = int(round(height_m / resolution))
    cells = np.zeros((h, w), bool)
    cells[0, :] = cells[-1, :] = cells[:, 0] = cells[:, -1] = True
    return OccupancyGrid(cells, resolution, "empty")


def procedural_scene(
    rng: np.random.Generator | int,
    width_m: float = 10.0,
    height_m: float = 10.0,
    resolution: float = DEFAULT_RESOLUTION,
    n_walls: int = 2,
    n_boxes: int = 8,
    door_m: float = 1.2,
) -> OccupancyGrid:
    """Room split by partition walls with doorways and cluttered by boxes."""
    rng = np.random.default_rng(rng)
    base = empty_scene(width_m, height_m, resolution)
    cells = base.cells.copy()
    h, w = cells.shape
    cell = lambda m: max(int(round(m / resolution)), 1)  # noqa: E731
    thick = cell(0.1)
    door = cell(door_m)
    if n_walls and min(h, w) <= door + 2 * cell(0.5) + 1:
        raise ValueError("room too small for a doorway")
    for k in range(n_walls):
        vertical = k % 2 == 0
        span = w if vertical else h
        length = h if vertical else w
        pos = int(rng.integers(span // 4, 3 * span // 4))
        gap = int(rng.integers(cell(0.5), length - door - cell(0.5)))
        if vertical:
            cells[:, pos : pos + thick] = True
            cells[gap : gap + door, pos : pos + thick] = False
        else:
            cells[pos : pos + thick, :] = True
            cells[pos : pos + thick, gap : gap + door] = False
    for _ in range(n_boxes):
        bw, bh = cell(rng.uniform(0.3, 1.2)), cell(rng.uniform(0.3, 1.2))
        r = int(rng.integers(1, h - bh - 1))
        c = int(rng.integers(1, w - bw - 1))
        cells[r : r + bh, c : c + bw] = True
    cells[0, :] = cells[-1, :] = cells[:, 0] = cells[:, -1] = True
    return OccupancyGrid(cells, resolution, "procedural")
