"""Deterministic 2D world: occupancy-grid map, box/cylinder obstacles,
differential-drive kinematics and a simulated forward-facing lidar.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


def wrap_angle(theta: float) -> float:
    """Normalize an angle into (-pi, pi]."""
    theta = math.fmod(theta, 2.0 * math.pi)
    if theta <= -math.pi:
        theta += 2.0 * math.pi
    elif theta > math.pi:
        theta -= 2.0 * math.pi
    return theta


@dataclass
class Pose2D:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        self.theta = wrap_angle(float(self.theta))
        self.x = float(self.x)
        self.y = float(self.y)

    def copy(self) -> "Pose2D":
        return Pose2D(self.x, self.y, self.theta)


@dataclass
class Twist:
    v: float = 0.0
    w: float = 0.0

    def clamped(self, max_v: float, max_w: float) -> "Twist":
        return Twist(min(max(self.v, -max_v), max_v), min(max(self.w, -max_w), max_w))


@dataclass
class RobotState:
    pose: Pose2D
    twist: Twist
    radius: float = 0.35


@dataclass
class Obstacle:
    """Box (half_x, half_y) or cylinder (radius) at a world pose."""
    kind: str                    # "box" | "cylinder"
    pose: Pose2D
    half_x: float = 0.0
    half_y: float = 0.0
    radius: float = 0.0

    def nearest_point(self, px: float, py: float) -> tuple[float, float]:
        """Closest point of the obstacle boundary-or-interior to (px, py)."""
        if self.kind == "cylinder":
            dx, dy = px - self.pose.x, py - self.pose.y
            d = math.hypot(dx, dy)
            if d < 1e-12:
                return self.pose.x + self.radius, self.pose.y
            s = min(d, self.radius) / d
            return self.pose.x + dx * s, self.pose.y + dy * s
        # box: clamp the point in the box frame
        c, s = math.cos(self.pose.theta), math.sin(self.pose.theta)
        lx = c * (px - self.pose.x) + s * (py - self.pose.y)
        ly = -s * (px - self.pose.x) + c * (py - self.pose.y)
        qx = min(max(lx, -self.half_x), self.half_x)
        qy = min(max(ly, -self.half_y), self.half_y)
        return (self.pose.x + c * qx - s * qy, self.pose.y + s * qx + c * qy)

    def distance(self, px: float, py: float) -> float:
        """Signed-ish distance: 0 when (px, py) is inside."""
        nx, ny = self.nearest_point(px, py)
        return math.hypot(px - nx, py - ny)


@dataclass
class LidarScan:
    ranges: np.ndarray
    angle_min: float
    angle_max: float

    @property
    def n_beams(self) -> int:
        return len(self.ranges)

    def angles(self) -> np.ndarray:
        return np.linspace(self.angle_min, self.angle_max, self.n_beams)


class MapFormatError(ValueError):
    """Map file violates the grid format; message names the offending line."""


@dataclass
class GridMap:
    resolution: float
    width: int                    # cells along x
    height: int                   # cells along y
    occ: np.ndarray               # bool, shape (height, width), row 0 = first file row
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        assert self.occ.shape == (self.height, self.width)
        self._wall_lut = None

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        """(col, row) of the cell containing the world point."""
        return (int(math.floor((x - self.origin[0]) / self.resolution)),
                int(math.floor((y - self.origin[1]) / self.resolution)))

    def cell_center(self, col: int, row: int) -> tuple[float, float]:
        return (self.origin[0] + (col + 0.5) * self.resolution,
                self.origin[1] + (row + 0.5) * self.resolution)

    def in_bounds(self, col: int, row: int) -> bool:
        return 0 <= col < self.width and 0 <= row < self.height

    def occupied_at(self, x: float, y: float) -> bool:
        col, row = self.cell_of(x, y)
        if not self.in_bounds(col, row):
            return False              # open world outside the grid
        return bool(self.occ[row, col])

    def wall_distance(self, x: float, y: float, search_radius: float = 0.6) -> float:
        """Exact distance from a point to the nearest occupied cell rectangle
        within `search_radius` (inf if none)."""
        res = self.resolution
        c0, r0 = self.cell_of(x, y)
        rad = int(math.ceil(search_radius / res)) + 1
        best = math.inf
        for row in range(max(0, r0 - rad), min(self.height, r0 + rad + 1)):
            for col in range(max(0, c0 - rad), min(self.width, c0 + rad + 1)):
                if not self.occ[row, col]:
                    continue
                x0 = self.origin[0] + col * res
                y0 = self.origin[1] + row * res
                dx = max(x0 - x, 0.0, x - (x0 + res))
                dy = max(y0 - y, 0.0, y - (y0 + res))
                d = math.hypot(dx, dy)
                if d < best:
                    best = d
        return best

    def nearest_wall_lut(self):
        """(distance_m, col, row) arrays of the nearest occupied cell center
        for every cell; computed lazily once per map."""
        if self._wall_lut is None:
            from scipy import ndimage
            if not self.occ.any():
                d = np.full(self.occ.shape, np.inf)
                idx = np.zeros((2,) + self.occ.shape, dtype=np.int64)
            else:
                d, idx = ndimage.distance_transform_edt(~self.occ, return_indices=True)
                d = d * self.resolution
            self._wall_lut = (d, idx)
        return self._wall_lut


def load_map(text: str, origin: tuple[float, float] = (0.0, 0.0)) -> GridMap:
    """Parse the ASCII grid format: line 1 `resolution <float>`, then rows of
    `#` (occupied) / `.` (free), all the same length."""
    lines = text.splitlines()
    if not lines:
        raise MapFormatError("line 1: empty map file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "resolution":
        raise MapFormatError("line 1: expected 'resolution <float>'")
    try:
        resolution = float(head[1])
    except ValueError:
        raise MapFormatError(f"line 1: bad resolution value {head[1]!r}")
    if resolution <= 0:
        raise MapFormatError(f"line 1: resolution must be > 0, got {resolution}")
    rows = [ln for ln in lines[1:] if ln != ""]
    if not rows:
        raise MapFormatError("line 2: map body is empty")
    width = len(rows[0])
    occ = np.zeros((len(rows), width), dtype=bool)
    for r, ln in enumerate(rows):
        line_no = r + 2
        if len(ln) != width:
            raise MapFormatError(f"line {line_no}: row length {len(ln)} != {width}")
        for c, ch in enumerate(ln):
            if ch == "#":
                occ[r, c] = True
            elif ch != ".":
                raise MapFormatError(f"line {line_no}: unknown character {ch!r}")
    return GridMap(resolution=resolution, width=width, height=len(rows), occ=occ,
                   origin=origin)


def step_robot(state: RobotState, cmd: Twist, dt: float) -> RobotState:
    """Exact unicycle integration of a constant (v, w) over dt."""
    assert dt > 0
    x, y, th = state.pose.x, state.pose.y, state.pose.theta
    v, w = cmd.v, cmd.w
    if abs(w) < 1e-9:
        x += v * math.cos(th) * dt
        y += v * math.sin(th) * dt
    else:
        x += v / w * (math.sin(th + w * dt) - math.sin(th))
        y += v / w * (math.cos(th) - math.cos(th + w * dt))
        th = th + w * dt
    return RobotState(pose=Pose2D(x, y, th), twist=Twist(v, w), radius=state.radius)


def to_robot_frame(robot_pose: Pose2D, points) -> np.ndarray:
    """Rigid transform of world (x, y) points into the robot frame."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    c, s = math.cos(robot_pose.theta), math.sin(robot_pose.theta)
    dx = pts[:, 0] - robot_pose.x
    dy = pts[:, 1] - robot_pose.y
    return np.stack([c * dx + s * dy, -s * dx + c * dy], axis=1)


def to_world_frame(robot_pose: Pose2D, points) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    c, s = math.cos(robot_pose.theta), math.sin(robot_pose.theta)
    return np.stack([robot_pose.x + c * pts[:, 0] - s * pts[:, 1],
                     robot_pose.y + s * pts[:, 0] + c * pts[:, 1]], axis=1)


# --- lidar ---------------------------------------------------------------

def _grid_ranges(grid: GridMap, sx: float, sy: float,
                 dirx: np.ndarray, diry: np.ndarray, r_max: float) -> np.ndarray:
    """DDA march of all beams at once; range to first occupied cell."""
    n = len(dirx)
    out = np.full(n, r_max)
    res = grid.resolution
    gx = (sx - grid.origin[0]) / res
    gy = (sy - grid.origin[1]) / res
    col = np.full(n, int(math.floor(gx)))
    row = np.full(n, int(math.floor(gy)))

    inside = (0 <= col[0] < grid.width) and (0 <= row[0] < grid.height)
    if inside and grid.occ[row[0], col[0]]:
        return np.zeros(n)

    with np.errstate(divide="ignore", invalid="ignore"):
        t_dx = np.where(dirx != 0, res / np.abs(dirx), np.inf)
        t_dy = np.where(diry != 0, res / np.abs(diry), np.inf)
        step_x = np.where(dirx > 0, 1, -1)
        step_y = np.where(diry > 0, 1, -1)
        # distance along the ray to the first vertical / horizontal grid line
        fx = gx - np.floor(gx)
        fy = gy - np.floor(gy)
        t_mx = np.where(dirx > 0, (1.0 - fx) * res / np.abs(dirx),
                        np.where(dirx < 0, fx * res / np.abs(dirx), np.inf))
        t_my = np.where(diry > 0, (1.0 - fy) * res / np.abs(diry),
                        np.where(diry < 0, fy * res / np.abs(diry), np.inf))

    active = np.ones(n, dtype=bool)
    # each iteration advances every active ray one cell; bounded by the
    # number of cells a ray can cross inside r_max
    max_iter = int(2 * r_max / res) + 4
    for _ in range(max_iter):
        if not active.any():
            break
        take_x = active & (t_mx <= t_my)
        take_y = active & ~ (t_mx <= t_my)
        t_hit = np.where(take_x, t_mx, t_my)
        col = col + np.where(take_x, step_x, 0)
        row = row + np.where(take_y, step_y, 0)
        t_mx = t_mx + np.where(take_x, t_dx, 0.0)
        t_my = t_my + np.where(take_y, t_dy, 0.0)

        beyond = t_hit > r_max
        oob = (col < 0) | (col >= grid.width) | (row < 0) | (row >= grid.height)
        # leaving the grid means no further wall can be hit (open world);
        # rays that left on this step stay at r_max
        dead = active & (beyond | oob)
        live = active & ~dead
        if live.any():
            hit = np.zeros(n, dtype=bool)
            hit[live] = grid.occ[row[live], col[live]]
            out[hit] = t_hit[hit]
            active = live & ~hit
        else:
            active = np.zeros(n, dtype=bool)
    return np.minimum(out, r_max)


def _circle_ranges(cx: float, cy: float, r: float, sx: float, sy: float,
                   dirx: np.ndarray, diry: np.ndarray, r_max: float) -> np.ndarray:
    ox, oy = cx - sx, cy - sy
    b = dirx * ox + diry * oy
    disc = b * b - (ox * ox + oy * oy - r * r)
    out = np.full(len(dirx), np.inf)
    ok = disc >= 0
    sq = np.sqrt(np.where(ok, disc, 0.0))
    t_near = b - sq
    t_far = b + sq
    t = np.where(t_near >= 0, t_near, np.where(t_far >= 0, 0.0, np.inf))
    out[ok] = t[ok]
    return np.minimum(out, np.inf)


def _box_ranges(ob: Obstacle, sx: float, sy: float,
                dirx: np.ndarray, diry: np.ndarray) -> np.ndarray:
    c, s = math.cos(ob.pose.theta), math.sin(ob.pose.theta)
    px = c * (sx - ob.pose.x) + s * (sy - ob.pose.y)
    py = -s * (sx - ob.pose.x) + c * (sy - ob.pose.y)
    dx = c * dirx + s * diry
    dy = -s * dirx + c * diry
    with np.errstate(divide="ignore", invalid="ignore"):
        tx1 = (-ob.half_x - px) / dx
        tx2 = (ob.half_x - px) / dx
        ty1 = (-ob.half_y - py) / dy
        ty2 = (ob.half_y - py) / dy
    # axis-parallel rays: inside the slab -> (-inf, inf), outside -> miss
    tx_lo = np.where(dx != 0, np.minimum(tx1, tx2),
                     np.where(np.abs(px) <= ob.half_x, -np.inf, np.inf))
    tx_hi = np.where(dx != 0, np.maximum(tx1, tx2),
                     np.where(np.abs(px) <= ob.half_x, np.inf, -np.inf))
    ty_lo = np.where(dy != 0, np.minimum(ty1, ty2),
                     np.where(np.abs(py) <= ob.half_y, -np.inf, np.inf))
    ty_hi = np.where(dy != 0, np.maximum(ty1, ty2),
                     np.where(np.abs(py) <= ob.half_y, np.inf, -np.inf))
    t_near = np.maximum(tx_lo, ty_lo)
    t_far = np.minimum(tx_hi, ty_hi)
    hit = (t_near <= t_far) & (t_far >= 0)
    t = np.where(t_near >= 0, t_near, 0.0)
    return np.where(hit, t, np.inf)


def raycast(world: "WorldState", sensor_pose: Pose2D,
            lidar=None) -> LidarScan:
    """Simulate the forward-facing lidar from `sensor_pose`.

    Beams cover [angle_min, angle_max] in the robot frame, evenly spaced
    with both ends included; each range is the nearest intersection among
    occupied cells (DDA), obstacles and pedestrian discs, clipped to r_max.
    """
    from .config import LidarParams
    if lidar is None:
        lidar = LidarParams()
    fov = math.radians(lidar.fov_deg)
    angle_min, angle_max = -fov / 2.0, fov / 2.0
    angles = sensor_pose.theta + np.linspace(angle_min, angle_max, lidar.n_beams)
    dirx, diry = np.cos(angles), np.sin(angles)
    sx, sy = sensor_pose.x, sensor_pose.y

    ranges = _grid_ranges(world.grid, sx, sy, dirx, diry, lidar.r_max)
    for ob in world.obstacles:
        if ob.kind == "cylinder":
            t = _circle_ranges(ob.pose.x, ob.pose.y, ob.radius, sx, sy, dirx, diry,
                               lidar.r_max)
        else:
            t = _box_ranges(ob, sx, sy, dirx, diry)
        ranges = np.minimum(ranges, t)
    for ped in world.pedestrians:
        t = _circle_ranges(ped.pos[0], ped.pos[1], ped.radius, sx, sy, dirx, diry,
                           lidar.r_max)
        ranges = np.minimum(ranges, t)
    return LidarScan(ranges=np.clip(ranges, 0.0, lidar.r_max),
                     angle_min=angle_min, angle_max=angle_max)


# --- world state ----------------------------------------------------------

@dataclass
class Pedestrian:
    pos: np.ndarray                  # world (2,)
    vel: np.ndarray                  # world (2,)
    radius: float
    desired_speed: float
    subgoals: list                   # ordered [(x, y), ...]; may be empty (static person)
    subgoal_idx: int = 0
    history: list = field(default_factory=list)   # world positions at the sample rate

    @property
    def active(self) -> bool:
        return self.subgoal_idx < len(self.subgoals)

    def current_subgoal(self):
        return self.subgoals[self.subgoal_idx] if self.active else None


@dataclass
class WorldState:
    grid: GridMap
    robot: RobotState
    obstacles: list
    pedestrians: list
    sim_time: float = 0.0
    rng: np.random.Generator = None  # only used for degenerate force directions

    def min_pedestrian_distance(self) -> float:
        if not self.pedestrians:
            return math.inf
        rx, ry = self.robot.pose.x, self.robot.pose.y
        return min(math.hypot(p.pos[0] - rx, p.pos[1] - ry) for p in self.pedestrians)

    def static_overlap(self) -> float:
        """Penetration depth of the robot disc into walls or obstacles (m)."""
        rx, ry = self.robot.pose.x, self.robot.pose.y
        r = self.robot.radius
        depth = 0.0
        d_wall = self.grid.wall_distance(rx, ry, search_radius=r + 0.2)
        if d_wall < r:
            depth = r - d_wall
        for ob in self.obstacles:
            d = ob.distance(rx, ry)
            if d < r:
                depth = max(depth, r - d)
        return depth
