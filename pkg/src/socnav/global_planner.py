"""Dijkstra shortest paths on the occupancy grid and downsampling of the
full plan into the 10-waypoint summary fed to the local planner.

Distances are tracked as integer (straight, diagonal) step counts so path
costs are exact: cost = (straight + diagonal * sqrt(2)) * resolution.
"""
from __future__ import annotations

import heapq
import math

import numpy as np

from .worldsim import GridMap, Pose2D

SQRT2 = math.sqrt(2.0)


class PlanError(Exception):
    pass


class BlockedEndpoint(PlanError):
    """Start or goal is occupied (after inflation) or outside the map."""


class Unreachable(PlanError):
    """No free path between start and goal."""


class FullPlan:
    """Ordered cell-center waypoints of an 8-connected grid path."""

    def __init__(self, waypoints: np.ndarray, straight: int, diagonal: int,
                 resolution: float):
        self.waypoints = waypoints            # (N, 2) world meters
        self.straight = straight
        self.diagonal = diagonal
        self.resolution = resolution

    @property
    def cost(self) -> float:
        return (self.straight + self.diagonal * SQRT2) * self.resolution

    def __len__(self):
        return len(self.waypoints)


def inflate(grid: GridMap, inflation: float) -> np.ndarray:
    """Occupancy with every cell within `inflation` meters (center distance)
    of an occupied cell marked occupied."""
    if inflation <= 0 or not grid.occ.any():
        return grid.occ.copy()
    r_cells = inflation / grid.resolution
    n = int(math.floor(r_cells))
    out = grid.occ.copy()
    h, w = grid.occ.shape
    for dr in range(-n, n + 1):
        for dc in range(-n, n + 1):
            if dr == 0 and dc == 0 or dr * dr + dc * dc > r_cells * r_cells:
                continue
            src = grid.occ[max(0, -dr):h - max(0, dr), max(0, -dc):w - max(0, dc)]
            out[max(0, dr):h - max(0, -dr), max(0, dc):w - max(0, -dc)] |= src
    return out


_NEIGHBORS = [(-1, -1, 0, 1), (-1, 0, 1, 0), (-1, 1, 0, 1),
              (0, -1, 1, 0), (0, 1, 1, 0),
              (1, -1, 0, 1), (1, 0, 1, 0), (1, 1, 0, 1)]  # (dr, dc, straight, diag)


def dijkstra_grid(occ: np.ndarray, start_rc: tuple[int, int],
                  goal_rc: tuple[int, int]):
    """8-connected Dijkstra over a boolean occupancy array.

    Returns (path cells [(row, col), ...], straight steps, diagonal steps).
    Ties break on (cost, row-major index) so the result is deterministic.
    """
    h, w = occ.shape
    sr, sc = start_rc
    gr, gc = goal_rc
    start = sr * w + sc
    goal = gr * w + gc
    INF = math.inf
    dist = np.full(h * w, INF)
    steps = np.zeros((h * w, 2), dtype=np.int64)  # (straight, diag) of best path
    prev = np.full(h * w, -1, dtype=np.int64)
    done = np.zeros(h * w, dtype=bool)
    dist[start] = 0.0
    heap = [(0.0, start)]
    occ_flat = occ.ravel()
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u == goal:
            break
        ur, uc = divmod(u, w)
        a, b = steps[u]
        for dr, dc, st, dg in _NEIGHBORS:
            vr, vc = ur + dr, uc + dc
            if not (0 <= vr < h and 0 <= vc < w):
                continue
            v = vr * w + vc
            if done[v] or occ_flat[v]:
                continue
            # key recomputed from integer counts: equal counts => equal float
            nd = (a + st) + (b + dg) * SQRT2
            if nd < dist[v]:
                dist[v] = nd
                steps[v] = (a + st, b + dg)
                prev[v] = u
                heapq.heappush(heap, (nd, v))
    if not done[goal]:
        return None
    path = []
    u = goal
    while u != -1:
        path.append(divmod(u, w))
        u = prev[u]
    path.reverse()
    return path, int(steps[goal][0]), int(steps[goal][1])


def plan(grid: GridMap, start: tuple[float, float], goal: tuple[float, float],
         inflation: float, extra_occ: np.ndarray | None = None) -> FullPlan:
    """Shortest 8-connected path between the cells containing start and goal.

    `extra_occ` merges additional occupancy (e.g. rasterized scenario
    obstacles for the privileged expert) before inflation.
    """
    base = grid.occ if extra_occ is None else (grid.occ | extra_occ)
    work = GridMap(resolution=grid.resolution, width=grid.width, height=grid.height,
                   occ=base, origin=grid.origin)
    occ = inflate(work, inflation)
    sc, sr = grid.cell_of(*start)
    gc, gr = grid.cell_of(*goal)
    for (c, r), name in (((sc, sr), "start"), ((gc, gr), "goal")):
        if not grid.in_bounds(c, r):
            raise BlockedEndpoint(f"{name} cell ({c}, {r}) is outside the map")
        if occ[r, c]:
            raise BlockedEndpoint(f"{name} cell ({c}, {r}) is occupied after inflation")
    result = dijkstra_grid(occ, (sr, sc), (gr, gc))
    if result is None:
        raise Unreachable(f"no path from {start} to {goal}")
    cells, straight, diag = result
    waypoints = np.array([grid.cell_center(c, r) for r, c in cells])
    return FullPlan(waypoints=waypoints, straight=straight, diagonal=diag,
                    resolution=grid.resolution)


def downsample(full: FullPlan, robot_pose: Pose2D, goal: tuple[float, float],
               n_waypoints: int = 10, spacing: float = 0.5) -> np.ndarray:
    """Summarize the plan ahead of the robot as exactly `n_waypoints` points.

    The first point is the full-plan waypoint nearest the robot (ties break
    toward the smaller path index); each later point is the next full-plan
    waypoint at least `spacing` from its predecessor; the goal pads the tail.
    """
    assert len(full) > 0
    wp = full.waypoints
    d2 = (wp[:, 0] - robot_pose.x) ** 2 + (wp[:, 1] - robot_pose.y) ** 2
    i = int(np.argmin(d2))   # argmin returns the first minimum: lower index wins
    out = [wp[i]]
    last = wp[i]
    for j in range(i + 1, len(wp)):
        if len(out) == n_waypoints:
            break
        if math.hypot(wp[j, 0] - last[0], wp[j, 1] - last[1]) >= spacing:
            out.append(wp[j])
            last = wp[j]
    goal_pt = np.array([goal[0], goal[1]], dtype=float)
    while len(out) < n_waypoints:
        out.append(goal_pt)
    return np.array(out)
