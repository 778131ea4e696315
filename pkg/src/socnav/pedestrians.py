"""Social Forces crowd model: goal attraction plus exponential repulsion from
other pedestrians, the robot and nearby obstacle points.
"""
from __future__ import annotations

import math

import numpy as np

from .config import SocialForceParams
from .worldsim import Pedestrian, WorldState


def social_force(ped: Pedestrian, neighbors, subgoal, params: SocialForceParams,
                 rng: np.random.Generator | None = None) -> tuple[float, float]:
    """Force on one pedestrian.

    neighbors: iterable of ((x, y), radius) for everything that repels —
    other pedestrians, the robot disc and nearest obstacle points (radius 0).
    subgoal: (x, y) target or None (static person: goal term is zero).
    """
    fx = fy = 0.0
    if subgoal is not None:
        dx, dy = subgoal[0] - ped.pos[0], subgoal[1] - ped.pos[1]
        d = math.hypot(dx, dy)
        if d > 1e-12:
            ex, ey = dx / d, dy / d
        else:
            ex = ey = 0.0
        fx += (params.desired_speed_default * ex - ped.vel[0]) / params.tau
        fy += (params.desired_speed_default * ey - ped.vel[1]) / params.tau
    elif np.any(ped.vel != 0.0):
        # done walking: brake to a stop
        fx += -ped.vel[0] / params.tau
        fy += -ped.vel[1] / params.tau

    for (nx, ny), radius in neighbors:
        dx, dy = ped.pos[0] - nx, ped.pos[1] - ny
        d = math.hypot(dx, dy)
        r_sum = ped.radius + radius
        if d < 1e-6:
            # coincident centers: push along a seed-deterministic direction
            ang = rng.uniform(0.0, 2.0 * math.pi) if rng is not None else 0.0
            dx, dy, d = math.cos(ang), math.sin(ang), 1.0
        mag = params.A * math.exp((r_sum - d) / params.B)
        fx += mag * dx / d
        fy += mag * dy / d
    return fx, fy


def _obstacle_neighbor_points(world: WorldState, ped: Pedestrian,
                              cutoff: float) -> list:
    """Nearest point of each obstacle (and of the wall grid) within cutoff."""
    pts = []
    px, py = ped.pos
    for ob in world.obstacles:
        nx, ny = ob.nearest_point(px, py)
        if math.hypot(px - nx, py - ny) <= cutoff:
            pts.append(((nx, ny), 0.0))
    dist, idx = world.grid.nearest_wall_lut()
    col, row = world.grid.cell_of(px, py)
    if world.grid.in_bounds(col, row) and np.isfinite(dist[row, col]) \
            and dist[row, col] <= cutoff:
        wr, wc = idx[0][row, col], idx[1][row, col]
        pts.append((world.grid.cell_center(int(wc), int(wr)), 0.0))
    return pts


def step_pedestrians(world: WorldState, params: SocialForceParams, dt: float) -> None:
    """Advance every pedestrian by one semi-implicit Euler step (in place).

    Subgoals advance when reached; after the last subgoal the pedestrian
    brakes and stands still (a static person). Pedestrians with no subgoals
    never move.
    """
    assert dt > 0
    peds = world.pedestrians
    # subgoal switching happens before the force computation
    for ped in peds:
        while ped.active and math.hypot(ped.current_subgoal()[0] - ped.pos[0],
                                        ped.current_subgoal()[1] - ped.pos[1]) \
                <= params.subgoal_radius:
            ped.subgoal_idx += 1

    forces = []
    for i, ped in enumerate(peds):
        if not ped.active and not np.any(ped.vel != 0.0):
            forces.append((0.0, 0.0))    # static person at rest: skip neighbor sums
            continue
        neighbors = [((q.pos[0], q.pos[1]), q.radius) for j, q in enumerate(peds)
                     if j != i]
        neighbors.append(((world.robot.pose.x, world.robot.pose.y),
                          world.robot.radius))
        neighbors.extend(_obstacle_neighbor_points(world, ped, params.obstacle_cutoff))
        forces.append(social_force(ped, neighbors, ped.current_subgoal(), params,
                                   rng=world.rng))

    # synchronous update from buffered forces
    for ped, (fx, fy) in zip(peds, forces):
        if not ped.active and not np.any(ped.vel != 0.0):
            continue
        ped.vel = ped.vel + np.array([fx, fy]) * dt
        speed = math.hypot(ped.vel[0], ped.vel[1])
        if speed > params.max_speed:
            ped.vel = ped.vel * (params.max_speed / speed)
        if not ped.active and speed * dt < 1e-3:
            ped.vel = np.zeros(2)        # settle exactly once braked
        ped.pos = ped.pos + ped.vel * dt


def append_histories(world: WorldState, max_len: int) -> None:
    """Record current positions into each pedestrian's history buffer
    (called at the sample rate; buffers keep the last `max_len` entries)."""
    for ped in world.pedestrians:
        ped.history.append((float(ped.pos[0]), float(ped.pos[1])))
        if len(ped.history) > max_len:
            del ped.history[0]
