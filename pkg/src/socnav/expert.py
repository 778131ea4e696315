"""Privileged scripted expert: pure-pursuit on its (obstacle-aware) plan with
speed governors for obstacles, pedestrians and goal approach, and a lateral
steer-away offset from predicted pedestrian positions.
"""
from __future__ import annotations

import math

import numpy as np

from .config import ExpertParams
from .global_planner import FullPlan
from .worldsim import LidarScan, Pose2D, Twist, WorldState, to_robot_frame


def _pursuit_target(plan: FullPlan, pose: Pose2D, lookahead: float):
    wp = plan.waypoints
    d2 = (wp[:, 0] - pose.x) ** 2 + (wp[:, 1] - pose.y) ** 2
    i0 = int(np.argmin(d2))
    acc = 0.0
    for j in range(i0 + 1, len(wp)):
        acc += math.hypot(wp[j, 0] - wp[j - 1, 0], wp[j, 1] - wp[j - 1, 1])
        if acc >= lookahead:
            return wp[j]
    return wp[-1]


def expert_command(world: WorldState, full_plan: FullPlan, params: ExpertParams,
                   scan: LidarScan | None = None) -> Twist:
    """Command toward the plan, slowed by clutter and people.

    The linear speed is the cruise speed scaled by four multiplicative
    governors: front-sector clearance from the lidar, pedestrian proximity
    (zero inside the proxemic band when someone is ahead), a linear brake
    ramp near the goal, and heading alignment. The steering target shifts
    away from where nearby pedestrians will be one second from now.
    """
    assert len(full_plan) > 0
    pose = world.robot.pose
    goal = full_plan.waypoints[-1]

    target = _pursuit_target(full_plan, pose, params.lookahead)
    t_r = to_robot_frame(pose, [target])[0]

    # steer away from predicted pedestrian positions 1 s ahead
    shift = 0.0
    for ped in world.pedestrians:
        q = ped.pos + ped.vel * 1.0
        q_r = to_robot_frame(pose, [q])[0]
        if -0.2 < q_r[0] < params.lookahead + 1.5 and abs(q_r[1]) < params.proxemic_band:
            side = 1.0 if q_r[1] <= 0.0 else -1.0   # pass on the far side
            shift += side * params.pedestrian_gain * \
                (params.proxemic_band - abs(q_r[1]))
    shift = min(max(shift, -1.5), 1.5)
    t_r = np.array([t_r[0], t_r[1] + shift])

    phi = math.atan2(t_r[1], t_r[0])
    w = min(max(params.heading_gain * phi, -1.2), 1.2)

    # (a) front-sector clearance
    f_obst = 1.0
    if scan is not None:
        angles = scan.angles()
        front = np.abs(angles) <= math.radians(60.0)
        d_front = float(scan.ranges[front].min()) if front.any() else math.inf
        f_obst = min(max((d_front - params.stop_clearance) / params.obstacle_gain,
                         0.0), 1.0)

    # (b) pedestrians ahead: slow inside slow_radius, stop inside the band
    f_ped = 1.0
    for ped in world.pedestrians:
        p_r = to_robot_frame(pose, [ped.pos])[0]
        d = math.hypot(p_r[0], p_r[1])
        ahead = p_r[0] > 0 and abs(math.atan2(p_r[1], p_r[0])) < math.radians(75.0)
        if ahead and d < params.slow_radius:
            f_ped = min(f_ped, max((d - params.proxemic_band)
                                   / (params.slow_radius - params.proxemic_band), 0.0))

    # (c) brake ramp at the goal
    d_goal = math.hypot(goal[0] - pose.x, goal[1] - pose.y)
    f_goal = min(d_goal / params.goal_brake_radius, 1.0)

    f_align = max(math.cos(phi), 0.0)
    v = params.cruise_speed * f_obst * f_ped * f_goal * f_align
    return Twist(min(v, 0.6), w)
