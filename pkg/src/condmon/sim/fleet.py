"""Fleet scenario: five robots random-walking away from their deployment
corner while a lower-left router watches their RSSI fade in, with a
scripted CPU step driving one robot's battery drain up mid-run.
"""

from __future__ import annotations

import copy
import math
import random
import struct
from dataclasses import dataclass, field

from condmon.model import StampedMessage, Timestamp
from condmon.bus.client import BusClient
from condmon.sim.config import ScenarioConfig
from condmon.sim.world import rssi, step_battery, step_obstacle, step_robot

SIM_EPOCH = Timestamp(1000, 0)

BATTERY_TOPIC = "{rid}/battery"
WIFI_TOPIC = "{rid}/wifi"


@dataclass
class RobotTrace:
    id: str
    battery: list[float] = field(default_factory=list)
    rssi_dbm: list[float] = field(default_factory=list)
    x: list[float] = field(default_factory=list)
    y: list[float] = field(default_factory=list)


@dataclass
class FleetRun:
    stamps: list[Timestamp]
    robots: dict[str, RobotTrace]
    obstacle_traces: list[list[tuple[float, float]]]
    obstacle_radii: list[float]

    def messages(self) -> list[StampedMessage]:
        """Telemetry as stamped messages in publish order (raw payloads)."""
        out = []
        for i, stamp in enumerate(self.stamps):
            for rid, trace in self.robots.items():
                out.append(StampedMessage(
                    stream=BATTERY_TOPIC.format(rid=rid), stamp=stamp,
                    seq=i + 1, payload=struct.pack("<d", trace.battery[i])))
                out.append(StampedMessage(
                    stream=WIFI_TOPIC.format(rid=rid), stamp=stamp,
                    seq=i + 1, payload=struct.pack("<d", trace.rssi_dbm[i])))
        return out

    def min_obstacle_separation(self) -> float:
        """Smallest (robot-to-obstacle-center distance − radius) seen."""
        best = math.inf
        for trace in self.robots.values():
            for t in range(len(self.stamps)):
                for o, positions in enumerate(self.obstacle_traces):
                    ox, oy = positions[t]
                    d = math.dist((trace.x[t], trace.y[t]), (ox, oy))
                    best = min(best, d - self.obstacle_radii[o])
        return best


def _active_cpu(cfg: ScenarioConfig, rid: str, t_s: float, base: float) -> float:
    for e in cfg.cpu_events:
        if e.robot == rid and e.start_s <= t_s < e.end_s:
            return e.cpu
    return base


def simulate_fleet(cfg: ScenarioConfig,
                   start: Timestamp = SIM_EPOCH) -> FleetRun:
    """Pure fleet run: telemetry arrays, no I/O. Deterministic per seed."""
    world = copy.deepcopy(cfg.world)
    rng = random.Random(cfg.seed)
    base_cpu = {r.id: r.cpu_load for r in world.robots}
    rate = cfg.telemetry_rate_hz
    steps = int(round(cfg.duration_s * rate))
    dt = 1.0 / rate

    run = FleetRun(
        stamps=[],
        robots={r.id: RobotTrace(r.id) for r in world.robots},
        obstacle_traces=[[] for _ in world.obstacles],
        obstacle_radii=[o.radius for o in world.obstacles],
    )
    for i in range(steps):
        t_s = i * dt
        if i > 0:
            for obs in world.obstacles:
                step_obstacle(world, obs, dt)
            for robot in world.robots:
                robot.cpu_load = _active_cpu(cfg, robot.id, t_s - dt,
                                             base_cpu[robot.id])
                step_robot(world, robot, dt, rng)
                robot.battery_pct = step_battery(
                    cfg.battery, robot.battery_pct, robot.cpu_load, dt)
        run.stamps.append(start.add_nanos(int(i * 1_000_000_000 / rate)))
        for o, obs in enumerate(world.obstacles):
            run.obstacle_traces[o].append((obs.x, obs.y))
        for robot in world.robots:
            trace = run.robots[robot.id]
            trace.battery.append(robot.battery_pct)
            trace.rssi_dbm.append(rssi(cfg.rssi,
                                       (world.router_x, world.router_y),
                                       (robot.x, robot.y), rng))
            trace.x.append(robot.x)
            trace.y.append(robot.y)
    return run


def run_fleet_scenario(cfg: ScenarioConfig, client: BusClient,
                       start: Timestamp = SIM_EPOCH) -> FleetRun:
    """Simulate and publish "<robot>/battery" and "<robot>/wifi".

    Messages carry simulated stamps (deterministic), published as fast
    as the bus accepts them.
    """
    run = simulate_fleet(cfg, start)
    for rid in run.robots:
        client.advertise_topic(BATTERY_TOPIC.format(rid=rid))
        client.advertise_topic(WIFI_TOPIC.format(rid=rid))
    for m in run.messages():
        client.publish_raw(m.stream, m.stamp, m.seq, bytes(m.payload))
    return run
