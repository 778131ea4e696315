import math

import numpy as np
import pytest

from socnav.config import LidarParams
from socnav.worldsim import (
    GridMap, MapFormatError, Obstacle, Pedestrian, Pose2D, RobotState, Twist,
    WorldState, load_map, raycast, step_robot, to_robot_frame, to_world_frame,
    wrap_angle,
)


def empty_world(size=200, res=0.1, robot=None):
    grid = GridMap(resolution=res, width=size, height=size,
                   occ=np.zeros((size, size), dtype=bool), origin=(-size * res / 2,
                                                                   -size * res / 2))
    robot = robot or RobotState(pose=Pose2D(0, 0, 0), twist=Twist())
    return WorldState(grid=grid, robot=robot, obstacles=[], pedestrians=[])


# --- map loading ----------------------------------------------------------

def test_load_map_empty():
    g = load_map("resolution 0.1\n..\n..\n")
    assert g.width == 2 and g.height == 2
    assert g.occ.sum() == 0
    assert g.resolution == 0.1


def test_load_map_cell_encoding():
    g = load_map("resolution 0.5\n#.\n")
    assert bool(g.occ[0, 0]) is True
    assert bool(g.occ[0, 1]) is False


def test_load_map_ragged_rows():
    with pytest.raises(MapFormatError, match="line 3"):
        load_map("resolution 0.1\n...\n....\n")


def test_load_map_unknown_char():
    with pytest.raises(MapFormatError, match="line 2"):
        load_map("resolution 0.1\n.x.\n")


def test_load_map_bad_resolution():
    with pytest.raises(MapFormatError, match="line 1"):
        load_map("resolution -2\n..\n")
    with pytest.raises(MapFormatError, match="line 1"):
        load_map("res 0.1\n..\n")


# --- raycast ---------------------------------------------------------------

def test_raycast_empty_world_all_rmax():
    scan = raycast(empty_world(), Pose2D(0, 0, 0))
    assert scan.n_beams == 360
    assert np.all(scan.ranges == 10.0)


def test_raycast_wall_plane():
    # wall occupying every cell with x >= 2.0: forward beam range is the
    # analytic ray-plane distance, 2.0
    w = empty_world()
    col0 = int((2.0 - w.grid.origin[0]) / w.grid.resolution)
    w.grid.occ[:, col0:] = True
    scan = raycast(w, Pose2D(0, 0, 0))
    mid = scan.n_beams // 2  # odd spacing: beam at exactly 0 rad is index 179.5...
    angles = scan.angles()
    forward = int(np.argmin(np.abs(angles)))
    # analytic oracle: t = 2.0 / cos(angle)
    expected = 2.0 / math.cos(angles[forward])
    assert scan.ranges[forward] == pytest.approx(expected, abs=1e-9)


def test_raycast_cylinder():
    # cylinder radius 0.3 centered 1 m ahead: forward range = 1.0 - 0.3
    w = empty_world()
    w.obstacles.append(Obstacle(kind="cylinder", pose=Pose2D(1.0, 0.0, 0.0), radius=0.3))
    lidar = LidarParams(n_beams=361)  # odd count puts a beam at exactly 0 rad
    scan = raycast(w, Pose2D(0, 0, 0), lidar=lidar)
    assert scan.ranges[180] == pytest.approx(0.7, abs=1e-12)


def test_raycast_box_face():
    w = empty_world()
    w.obstacles.append(Obstacle(kind="box", pose=Pose2D(1.5, 0.0, 0.0),
                                half_x=0.3, half_y=0.3))
    scan = raycast(w, Pose2D(0, 0, 0), lidar=LidarParams(n_beams=361))
    assert scan.ranges[180] == pytest.approx(1.2, abs=1e-12)


def test_raycast_pedestrian_disc():
    w = empty_world()
    w.pedestrians.append(Pedestrian(pos=np.array([2.0, 0.0]), vel=np.zeros(2),
                                    radius=0.25, desired_speed=1.2, subgoals=[]))
    scan = raycast(w, Pose2D(0, 0, 0), lidar=LidarParams(n_beams=361))
    assert scan.ranges[180] == pytest.approx(1.75, abs=1e-12)


def test_raycast_monotone_under_obstacle_insertion():
    rng = np.random.default_rng(7)
    w = empty_world()
    for r in range(40, 160, 17):
        w.grid.occ[r, rng.integers(20, 180)] = True
    base = raycast(w, Pose2D(0.3, -0.2, 0.4)).ranges.copy()
    w.obstacles.append(Obstacle(kind="cylinder", pose=Pose2D(1.0, 0.5, 0), radius=0.35))
    w.obstacles.append(Obstacle(kind="box", pose=Pose2D(-1.2, 0.8, 0.7),
                                half_x=0.3, half_y=0.25))
    after = raycast(w, Pose2D(0.3, -0.2, 0.4)).ranges
    assert np.all(after <= base + 1e-12)
    assert np.all(after >= 0) and np.all(after <= 10.0)


def test_raycast_inside_occupied_cell_is_zero():
    w = empty_world()
    c, r = w.grid.cell_of(0.0, 0.0)
    w.grid.occ[r, c] = True
    scan = raycast(w, Pose2D(0, 0, 0))
    assert np.all(scan.ranges == 0.0)


# --- robot kinematics -------------------------------------------------------

def test_step_robot_straight():
    s = RobotState(pose=Pose2D(0, 0, 0), twist=Twist())
    out = step_robot(s, Twist(0.5, 0.0), 0.1)
    assert out.pose.x == pytest.approx(0.05, abs=1e-15)
    assert out.pose.y == 0.0
    assert out.twist.v == 0.5


def test_step_robot_pure_rotation():
    s = RobotState(pose=Pose2D(1.0, 2.0, 0.3), twist=Twist())
    out = step_robot(s, Twist(0.0, 1.0), 0.5)
    assert (out.pose.x, out.pose.y) == (1.0, 2.0)
    assert out.pose.theta == pytest.approx(0.8, abs=1e-15)


def test_step_robot_arc_closed_form():
    s = RobotState(pose=Pose2D(0, 0, 0), twist=Twist())
    out = step_robot(s, Twist(0.6, 1.2), 1.0)
    assert out.pose.x == pytest.approx(0.5 * math.sin(1.2), abs=1e-12)
    assert out.pose.y == pytest.approx(0.5 * (1 - math.cos(1.2)), abs=1e-12)


def test_step_robot_arc_matches_fine_euler():
    # oracle: 1e4-substep explicit Euler at maximum speeds over 1 s
    v, w, dt = 0.6, 1.2, 1.0
    n = 10_000
    x = y = th = 0.0
    h = dt / n
    for _ in range(n):
        x += v * math.cos(th) * h
        y += v * math.sin(th) * h
        th += w * h
    out = step_robot(RobotState(pose=Pose2D(0, 0, 0), twist=Twist()), Twist(v, w), dt)
    assert math.hypot(out.pose.x - x, out.pose.y - y) < 1e-4


def test_step_robot_se2_equivariance():
    # integrating in a rotated/translated frame == transforming the result
    rng = np.random.default_rng(3)
    for _ in range(50):
        x, y, th = rng.uniform(-2, 2, 3)
        v, w = rng.uniform(-0.6, 0.6), rng.uniform(-1.2, 1.2)
        dt = rng.uniform(0.01, 1.0)
        gx, gy, gth = rng.uniform(-3, 3, 3)

        a = step_robot(RobotState(Pose2D(x, y, th), Twist()), Twist(v, w), dt)
        # apply the frame motion g to the start, integrate, compare with g(a)
        c, s = math.cos(gth), math.sin(gth)
        start2 = Pose2D(gx + c * x - s * y, gy + s * x + c * y, th + gth)
        b = step_robot(RobotState(start2, Twist()), Twist(v, w), dt)
        ax, ay = gx + c * a.pose.x - s * a.pose.y, gy + s * a.pose.x + c * a.pose.y
        assert math.hypot(b.pose.x - ax, b.pose.y - ay) < 1e-9
        assert abs(wrap_angle(b.pose.theta - (a.pose.theta + gth))) < 1e-9


def test_step_robot_deterministic():
    s = RobotState(pose=Pose2D(0.1, -0.7, 1.1), twist=Twist())
    a = step_robot(s, Twist(0.4, -0.9), 0.05)
    b = step_robot(s, Twist(0.4, -0.9), 0.05)
    assert (a.pose.x, a.pose.y, a.pose.theta) == (b.pose.x, b.pose.y, b.pose.theta)


# --- frames ------------------------------------------------------------------

def test_to_robot_frame_identity():
    pts = [(1.0, 2.0), (-0.5, 0.25)]
    out = to_robot_frame(Pose2D(0, 0, 0), pts)
    assert np.allclose(out, pts)


def test_to_robot_frame_hand_check():
    out = to_robot_frame(Pose2D(1.0, 0.0, math.pi / 2), [(1.0, 1.0)])
    assert out[0] == pytest.approx((1.0, 0.0), abs=1e-12)


def test_to_robot_frame_roundtrip():
    rng = np.random.default_rng(11)
    for _ in range(20):
        pose = Pose2D(*rng.uniform(-5, 5, 2), rng.uniform(-math.pi, math.pi))
        pts = rng.uniform(-10, 10, (7, 2))
        back = to_world_frame(pose, to_robot_frame(pose, pts))
        assert np.allclose(back, pts, atol=1e-12)


def test_robot_position_maps_to_origin():
    pose = Pose2D(3.2, -1.1, 0.7)
    out = to_robot_frame(pose, [(3.2, -1.1)])
    assert np.allclose(out, [(0.0, 0.0)], atol=1e-12)
