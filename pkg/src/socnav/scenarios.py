"""Scenario definition, YAML serialization (schema v1) and the seeded
random scenario generator."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import global_planner
from .config import GenParams, PlannerParams, ScenarioCounts
from .worldsim import (
    GridMap, Obstacle, Pedestrian, Pose2D, RobotState, Twist, WorldState,
)


class ScenarioError(ValueError):
    pass


class InfeasibleScenario(RuntimeError):
    """Placement sampling exhausted its rejection budget."""


@dataclass
class PedSpec:
    start: Pose2D
    subgoals: list            # [(x, y), ...]; empty = static person
    desired_speed: float = 1.2


@dataclass
class Scenario:
    map_ref: str
    robot_start: Pose2D
    goal: tuple
    obstacles: list = field(default_factory=list)
    pedestrians: list = field(default_factory=list)
    seed: int = 0
    sf_params: dict | None = None     # optional overrides for the force model

    def to_yaml(self) -> str:
        doc = {
            "v": 1,
            "map_ref": self.map_ref,
            "robot_start": {"x": float(self.robot_start.x),
                            "y": float(self.robot_start.y),
                            "theta": float(self.robot_start.theta)},
            "goal": [float(self.goal[0]), float(self.goal[1])],
            "obstacles": [
                {"kind": ob.kind, "x": float(ob.pose.x), "y": float(ob.pose.y),
                 "theta": float(ob.pose.theta),
                 **({"radius": float(ob.radius)} if ob.kind == "cylinder" else
                    {"half_x": float(ob.half_x), "half_y": float(ob.half_y)})}
                for ob in self.obstacles],
            "pedestrians": [
                {"start": {"x": float(p.start.x), "y": float(p.start.y),
                           "theta": float(p.start.theta)},
                 "subgoals": [[float(x), float(y)] for x, y in p.subgoals],
                 "desired_speed": float(p.desired_speed)}
                for p in self.pedestrians],
            "seed": int(self.seed),
        }
        if self.sf_params:
            doc["sf_params"] = self.sf_params
        return yaml.safe_dump(doc, sort_keys=False)

    @staticmethod
    def from_yaml(text: str) -> "Scenario":
        try:
            doc = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ScenarioError(f"cannot parse scenario: {e}")
        if not isinstance(doc, dict):
            raise ScenarioError("scenario root must be a mapping")
        if doc.get("v") != 1:
            raise ScenarioError(f"unsupported scenario schema version {doc.get('v')}")
        try:
            rs = doc["robot_start"]
            obstacles = []
            for ob in doc.get("obstacles", []):
                pose = Pose2D(ob["x"], ob["y"], ob.get("theta", 0.0))
                if ob["kind"] == "cylinder":
                    obstacles.append(Obstacle(kind="cylinder", pose=pose,
                                              radius=ob["radius"]))
                elif ob["kind"] == "box":
                    obstacles.append(Obstacle(kind="box", pose=pose,
                                              half_x=ob["half_x"],
                                              half_y=ob["half_y"]))
                else:
                    raise ScenarioError(f"unknown obstacle kind {ob['kind']!r}")
            peds = [PedSpec(start=Pose2D(p["start"]["x"], p["start"]["y"],
                                         p["start"].get("theta", 0.0)),
                            subgoals=[tuple(sg) for sg in p.get("subgoals", [])],
                            desired_speed=p.get("desired_speed", 1.2))
                    for p in doc.get("pedestrians", [])]
            return Scenario(map_ref=doc["map_ref"],
                            robot_start=Pose2D(rs["x"], rs["y"], rs.get("theta", 0.0)),
                            goal=tuple(doc["goal"]),
                            obstacles=obstacles, pedestrians=peds,
                            seed=int(doc.get("seed", 0)),
                            sf_params=doc.get("sf_params"))
        except (KeyError, TypeError) as e:
            raise ScenarioError(f"scenario is missing or has a malformed field: {e}")

    def save(self, path):
        Path(path).write_text(self.to_yaml())

    @staticmethod
    def load(path) -> "Scenario":
        return Scenario.from_yaml(Path(path).read_text())


def build_world(scenario: Scenario, grid: GridMap, robot_radius: float = 0.35,
                ped_radius: float = 0.25) -> WorldState:
    peds = [Pedestrian(pos=np.array([p.start.x, p.start.y], dtype=float),
                       vel=np.zeros(2), radius=ped_radius,
                       desired_speed=p.desired_speed,
                       subgoals=[tuple(sg) for sg in p.subgoals])
            for p in scenario.pedestrians]
    robot = RobotState(pose=scenario.robot_start.copy(), twist=Twist(),
                       radius=robot_radius)
    return WorldState(grid=grid, robot=robot, obstacles=list(scenario.obstacles),
                      pedestrians=peds, sim_time=0.0,
                      rng=np.random.default_rng(scenario.seed))


def rasterize_obstacles(grid: GridMap, obstacles) -> np.ndarray:
    """Occupancy mask of scenario obstacles on the map grid (used only by the
    privileged expert plan; the policy's global map stays obstacle-free)."""
    occ = np.zeros_like(grid.occ)
    res = grid.resolution
    for ob in obstacles:
        reach = (ob.radius if ob.kind == "cylinder"
                 else math.hypot(ob.half_x, ob.half_y))
        c0, r0 = grid.cell_of(ob.pose.x - reach, ob.pose.y - reach)
        c1, r1 = grid.cell_of(ob.pose.x + reach, ob.pose.y + reach)
        for row in range(max(0, r0), min(grid.height, r1 + 1)):
            for col in range(max(0, c0), min(grid.width, c1 + 1)):
                x, y = grid.cell_center(col, row)
                if ob.distance(x, y) < res * 0.5:
                    occ[row, col] = True
    return occ


class _Sampler:
    """Rejection sampler over inflated-free map positions with a shared
    rejection budget."""

    def __init__(self, grid: GridMap, inflation: float, rng, budget: int):
        self.grid = grid
        self.free = ~global_planner.inflate(grid, inflation)
        rows, cols = np.nonzero(self.free)
        if len(rows) == 0:
            raise InfeasibleScenario("map has no free space after inflation")
        self.cells = np.stack([cols, rows], axis=1)
        self.rng = rng
        self.rejections = 0
        self.budget = budget

    def reject(self, n=1):
        self.rejections += n
        if self.rejections > self.budget:
            raise InfeasibleScenario(
                f"placement failed after {self.rejections} rejections")

    def point(self, predicate=None):
        while True:
            col, row = self.cells[self.rng.integers(0, len(self.cells))]
            x, y = self.grid.cell_center(int(col), int(row))
            x += self.rng.uniform(-0.04, 0.04)
            y += self.rng.uniform(-0.04, 0.04)
            if predicate is None or predicate(x, y):
                return x, y
            self.reject()


def _dist(a, b):
    return math.hypot(a[0] - b[0], a[1] - b[1])


def generate_scenario(grid: GridMap, map_ref: str, counts: ScenarioCounts,
                      seed: int, gen: GenParams | None = None,
                      planner_params: PlannerParams | None = None) -> Scenario:
    """One scenario: random start/goal, obstacles and pedestrian routes, all
    rejection-sampled into free space with the clearances the expert needs."""
    gen = gen or GenParams()
    pp = planner_params or PlannerParams()
    rng = np.random.default_rng(seed)
    sampler = _Sampler(grid, pp.inflation, rng, gen.max_rejections)

    while True:
        start = sampler.point()
        goal = sampler.point()
        if _dist(start, goal) < gen.min_start_goal_dist:
            sampler.reject()
            continue
        try:
            global_planner.plan(grid, start, goal, pp.inflation)
        except global_planner.PlanError:
            sampler.reject()
            continue
        break

    obstacles = []
    for _ in range(counts.geometric):
        while True:
            x, y = sampler.point()
            if (_dist((x, y), start) < gen.obstacle_clearance
                    or _dist((x, y), goal) < gen.obstacle_clearance
                    or any(_dist((x, y), (ob.pose.x, ob.pose.y)) < 1.0
                           for ob in obstacles)
                    or grid.wall_distance(x, y, 0.8) < 0.55):
                sampler.reject()
                continue
            if rng.random() < 0.5:
                obstacles.append(Obstacle(
                    kind="box", pose=Pose2D(x, y, rng.uniform(-math.pi, math.pi)),
                    half_x=rng.uniform(gen.half_extent_min, gen.half_extent_max),
                    half_y=rng.uniform(gen.half_extent_min, gen.half_extent_max)))
            else:
                obstacles.append(Obstacle(
                    kind="cylinder", pose=Pose2D(x, y, 0.0),
                    radius=rng.uniform(gen.half_extent_min, gen.half_extent_max)))
            break

    # the privileged expert must still have a route once obstacles are placed
    try:
        global_planner.plan(grid, start, goal, pp.inflation,
                            extra_occ=rasterize_obstacles(grid, obstacles))
    except global_planner.PlanError:
        sampler.reject(100)
        return generate_scenario(grid, map_ref, counts, seed + 7_919, gen, pp)

    def ped_ok(x, y, others):
        if _dist((x, y), goal) < gen.goal_clearance:
            return False
        if _dist((x, y), start) < gen.start_clearance:
            return False
        if any(ob.distance(x, y) < 0.5 for ob in obstacles):
            return False
        if any(_dist((x, y), o) < 0.6 for o in others):
            return False
        return True

    ped_positions = []
    pedestrians = []
    for _ in range(counts.static_people):
        x, y = sampler.point(lambda x, y: ped_ok(x, y, ped_positions))
        ped_positions.append((x, y))
        pedestrians.append(PedSpec(start=Pose2D(x, y, rng.uniform(-math.pi, math.pi)),
                                   subgoals=[]))
    for _ in range(counts.moving_pedestrians):
        x, y = sampler.point(lambda x, y: ped_ok(x, y, ped_positions))
        ped_positions.append((x, y))
        subgoals = []
        prev = (x, y)
        for _ in range(int(rng.integers(gen.subgoals_min, gen.subgoals_max + 1))):
            sg = sampler.point(
                lambda sx, sy: _dist((sx, sy), goal) >= gen.goal_clearance
                and _dist((sx, sy), prev) >= 2.0)
            subgoals.append(sg)
            prev = sg
        pedestrians.append(PedSpec(
            start=Pose2D(x, y, 0.0), subgoals=subgoals,
            desired_speed=rng.uniform(0.8, 1.4)))

    heading = math.atan2(goal[1] - start[1], goal[0] - start[0])
    return Scenario(map_ref=map_ref,
                    robot_start=Pose2D(start[0], start[1], heading),
                    goal=goal, obstacles=obstacles, pedestrians=pedestrians,
                    seed=int(rng.integers(0, 2 ** 31)))


def gen_scenarios(grid: GridMap, map_ref: str, counts: ScenarioCounts, n: int,
                  seed: int, out_dir=None, gen: GenParams | None = None,
                  planner_params: PlannerParams | None = None) -> list:
    """Generate n scenarios; deterministic in (map, counts, n, seed). Writes
    scenario_<k>.yaml files when out_dir is given."""
    master = np.random.default_rng(seed)
    scenarios = []
    for k in range(n):
        child_seed = int(master.integers(0, 2 ** 31))
        scenarios.append(generate_scenario(grid, map_ref, counts, child_seed,
                                           gen, planner_params))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for k, sc in enumerate(scenarios):
            sc.save(out / f"scenario_{k:04d}.yaml")
    return scenarios
