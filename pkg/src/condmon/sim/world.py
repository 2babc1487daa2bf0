"""2D fleet world: random-walk robots, moving obstacles, RSSI and battery.

All stochastic steps draw from a caller-supplied random.Random, so a run
is a pure function of (config, seed).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field


@dataclass
class RssiModel:
    """Log-distance path loss: p0 − 10·n·log10(d/d0) + gaussian noise."""

    p0_dbm: float = -30.0
    n_exponent: float = 2.2
    d0: float = 1.0
    noise_sd_db: float = 1.5

    def __post_init__(self):
        if self.d0 <= 0:
            raise ValueError("d0 must be positive")
        if self.n_exponent <= 0:
            raise ValueError("path-loss exponent must be positive")
        if self.noise_sd_db < 0:
            raise ValueError("noise sd must be >= 0")


@dataclass
class BatteryModel:
    """Linear drain: (alpha + beta·cpu_load) percent per second."""

    alpha: float = 0.005
    beta: float = 0.02

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("drain coefficients must be >= 0")


@dataclass
class Obstacle:
    x: float
    y: float
    vx: float
    vy: float
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("obstacle radius must be positive")


@dataclass
class RobotState:
    id: str
    x: float
    y: float
    heading: float
    speed: float = 0.25
    battery_pct: float = 100.0
    cpu_load: float = 0.2
    avoid_radius: float = 0.5

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError("speed must be >= 0")
        if not 0 <= self.battery_pct <= 100:
            raise ValueError("battery_pct must be in [0, 100]")


@dataclass
class World:
    width: float = 10.0
    height: float = 10.0
    router_x: float = 0.5
    router_y: float = 0.5
    heading_sd: float = 0.35  # rad / sqrt(s), heading random walk
    obstacles: list[Obstacle] = field(default_factory=list)
    robots: list[RobotState] = field(default_factory=list)

    def in_bounds(self, x: float, y: float, margin: float = 0.0) -> bool:
        return (margin <= x <= self.width - margin
                and margin <= y <= self.height - margin)


WALL_MARGIN = 0.05
OBSTACLE_CLEARANCE = 0.05
OBSTACLE_WALL_PAD = 0.15


def rssi(model: RssiModel, router_pos: tuple[float, float],
         robot_pos: tuple[float, float],
         rng: random.Random | None = None) -> float:
    d = math.dist(router_pos, robot_pos)
    d = max(d, model.d0)
    value = model.p0_dbm - 10.0 * model.n_exponent * math.log10(d / model.d0)
    if rng is not None and model.noise_sd_db > 0:
        value += rng.gauss(0.0, model.noise_sd_db)
    return value


def step_battery(model: BatteryModel, battery_pct: float, cpu_load: float,
                 dt: float) -> float:
    if dt <= 0:
        raise ValueError("dt must be positive")
    return max(0.0, battery_pct - (model.alpha + model.beta * cpu_load) * dt)


def step_obstacle(world: World, obs: Obstacle, dt: float) -> None:
    """Constant velocity with elastic reflection off the workspace walls.

    Obstacle centers keep OBSTACLE_WALL_PAD beyond their radius from the
    walls, so a wall-clamped robot can never be forced inside one.
    """
    obs.x += obs.vx * dt
    obs.y += obs.vy * dt
    lo_x, hi_x = obs.radius + OBSTACLE_WALL_PAD, world.width - obs.radius - OBSTACLE_WALL_PAD
    lo_y, hi_y = obs.radius + OBSTACLE_WALL_PAD, world.height - obs.radius - OBSTACLE_WALL_PAD
    if obs.x < lo_x:
        obs.x, obs.vx = 2 * lo_x - obs.x, -obs.vx
    elif obs.x > hi_x:
        obs.x, obs.vx = 2 * hi_x - obs.x, -obs.vx
    if obs.y < lo_y:
        obs.y, obs.vy = 2 * lo_y - obs.y, -obs.vy
    elif obs.y > hi_y:
        obs.y, obs.vy = 2 * hi_y - obs.y, -obs.vy


def _clear(world: World, robot: RobotState, heading: float, dt: float) -> bool:
    """True if moving along `heading` keeps walls and obstacles clear."""
    for reach in (robot.avoid_radius, robot.speed * dt):
        px = robot.x + reach * math.cos(heading)
        py = robot.y + reach * math.sin(heading)
        if not world.in_bounds(px, py, WALL_MARGIN):
            return False
        for obs in world.obstacles:
            if math.dist((px, py), (obs.x, obs.y)) < obs.radius + OBSTACLE_CLEARANCE:
                return False
    return True


def step_robot(world: World, robot: RobotState, dt: float,
               rng: random.Random) -> None:
    """Heading random walk plus avoidance, then a position update.

    The heading first diffuses by gaussian(0, heading_sd)·sqrt(dt). If the
    look-ahead cone hits a wall or obstacle, the heading rotates away by
    the smallest angle that clears it (alternating left/right). Should no
    direction clear — the robot is boxed in — it holds position, and a
    radial push-out keeps it outside every obstacle regardless.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    robot.heading += rng.gauss(0.0, world.heading_sd) * math.sqrt(dt)
    robot.heading = math.atan2(math.sin(robot.heading), math.cos(robot.heading))

    heading, moved = robot.heading, False
    if _clear(world, robot, heading, dt):
        moved = True
    else:
        step_rad = 0.1
        for k in range(1, int(math.pi / step_rad) + 1):
            for sign in (1.0, -1.0):
                cand = robot.heading + sign * k * step_rad
                if _clear(world, robot, cand, dt):
                    heading, moved = cand, True
                    break
            if moved:
                break
    if moved:
        robot.heading = math.atan2(math.sin(heading), math.cos(heading))
        robot.x += robot.speed * dt * math.cos(robot.heading)
        robot.y += robot.speed * dt * math.sin(robot.heading)

    robot.x = min(max(robot.x, WALL_MARGIN), world.width - WALL_MARGIN)
    robot.y = min(max(robot.y, WALL_MARGIN), world.height - WALL_MARGIN)
    _push_out_of_obstacles(world, robot)


def _keep_out(obs: Obstacle) -> float:
    return obs.radius + OBSTACLE_CLEARANCE / 2


def _violation(world: World, x: float, y: float) -> Obstacle | None:
    for obs in world.obstacles:
        if math.dist((x, y), (obs.x, obs.y)) < _keep_out(obs):
            return obs
    return None


def _push_out_of_obstacles(world: World, robot: RobotState) -> None:
    """Guarantee the robot ends strictly outside every obstacle."""
    for _ in range(4):
        obs = _violation(world, robot.x, robot.y)
        if obs is None:
            return
        d = math.dist((robot.x, robot.y), (obs.x, obs.y))
        away = (robot.heading + math.pi if d == 0.0
                else math.atan2(robot.y - obs.y, robot.x - obs.x))
        robot.x = min(max(obs.x + _keep_out(obs) * math.cos(away), WALL_MARGIN),
                      world.width - WALL_MARGIN)
        robot.y = min(max(obs.y + _keep_out(obs) * math.sin(away), WALL_MARGIN),
                      world.height - WALL_MARGIN)
    if _violation(world, robot.x, robot.y) is None:
        return
    # Boxed in by overlapping obstacles: deterministic spiral scan for the
    # nearest free spot.
    for reach in [0.1 * k for k in range(1, 40)]:
        for j in range(16):
            ang = j * math.tau / 16
            x = robot.x + reach * math.cos(ang)
            y = robot.y + reach * math.sin(ang)
            if (world.in_bounds(x, y, WALL_MARGIN)
                    and _violation(world, x, y) is None):
                robot.x, robot.y = x, y
                return
