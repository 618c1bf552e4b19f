"""Geodesic shortest paths on an occupancy grid.

An 8-connected minimum-cost search over cells that can hold the agent's disc,
followed by string pulling so the reported length is that of a taut polyline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from skimage.graph import MCP_Geometric

from ..errors import InvalidState, NoPath
from ..se2 import Vec2
from .grid import OccupancyGrid

__all__ = ["AGENT_RADIUS", "PathResult", "shortest_path", "geodesic_distance", "traversable"]

AGENT_RADIUS = 0.18
# cells nearer than this to a wall cost more, keeping paths off the walls
WALL_MARGIN = 0.12
WALL_PENALTY = 4.0


@dataclass(frozen=True)
class PathResult:
    waypoints: tuple[Vec2, ...]
    length: float


def traversable(grid: OccupancyGrid, radius: float = AGENT_RADIUS) -> np.ndarray:
    # clearance is a lower bound at the cell center; allow one cell of slack
    return grid.clearance >= radius - grid.resolution


def _line_of_sight(grid: OccupancyGrid, ok: np.ndarray, a: np.ndarray, b: np.ndarray) -> bool:
    n = max(int(math.ceil(np.linalg.norm(b - a) / (0.5 * grid.resolution))), 1)
    s = np.linspace(0.0, 1.0, n + 1)[:, None]
    pts = a + s * (b - a)
    rows = np.floor(pts[:, 1] / grid.resolution).astype(int)
    cols = np.floor(pts[:, 0] / grid.resolution).astype(int)
    return bool(ok[rows, cols].all())


def _string_pull(grid: OccupancyGrid, ok: np.ndarray, pts: list[np.ndarray]) -> list[np.ndarray]:
    out = [pts[0]]
    anchor, j = pts[0], 1
    while j < len(pts):
        if j + 1 < len(pts) and _line_of_sight(grid, ok, anchor, pts[j + 1]):
            j += 1
            continue
        out.append(pts[j])
        anchor = pts[j]
        j += 1
    return out


def shortest_path(
    grid: OccupancyGrid, start, goal, radius: float = AGENT_RADIUS, margin: float = 0.0
) -> PathResult:
    """Shortest collision-free route for a disc of ``radius`` from ``start`` to ``goal``.

    With ``margin > 0`` string pulling only shortcuts through cells at least
    ``radius + margin`` from walls, trading a little length for a route that
    keeps off corners.
    """
    a, b = np.asarray(start, float), np.asarray(goal, float)
    for name, p in (("start", a), ("goal", b)):
        if grid.occupied_at(p):
            raise InvalidState(f"{name} {tuple(p)} lies in an occupied cell")
    if np.array_equal(a, b):
        return PathResult((Vec2(float(a[0]), float(a[1])),) * 2, 0.0)
    ok = traversable(grid, radius)
    s_cell, g_cell = grid.cell_of(a), grid.cell_of(b)
    costs = np.where(ok, np.where(grid.clearance < radius + WALL_MARGIN, WALL_PENALTY, 1.0), np.inf)
    costs[s_cell] = costs[g_cell] = 1.0
    mcp = MCP_Geometric(costs, fully_connected=True)
    cum, _ = mcp.find_costs([s_cell], [g_cell])
    if not np.isfinite(cum[g_cell]):
        raise NoPath("no path")
    cells = mcp.traceback(g_cell)
    pts = [a] + [np.array(grid.cell_center(r, c)) for r, c in cells[1:-1]] + [b]
    if margin > 0:
        ok = ok & (grid.clearance >= radius + margin)
    ok = ok.copy()
    ok[s_cell] = ok[g_cell] = True
    pulled = _string_pull(grid, ok, pts)
    length = float(sum(np.linalg.norm(q - p) for p, q in zip(pulled, pulled[1:])))
    return PathResult(tuple(Vec2(float(p[0]), float(p[1])) for p in pulled), length)


def geodesic_distance(grid: OccupancyGrid, start, goal, radius: float = AGENT_RADIUS) -> float:
    return shortest_path(grid, start, goal, radius).length
