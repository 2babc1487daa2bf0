"""Scenario configuration: JSON schema, defaults, validation.

Syntax errors surface with the decoder's line/column; semantic errors
name the offending key path (e.g. "robots[2].speed").
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from condmon.model import CondmonError
from condmon.sim.world import BatteryModel, Obstacle, RobotState, RssiModel, World


class BadConfig(CondmonError):
    pass


@dataclass
class CpuEvent:
    robot: str
    start_s: float
    end_s: float
    cpu: float


@dataclass
class StimulusEvent:
    t_s: float
    kind: str  # ImageOnset | AudioOnset | WorkloadLevel
    duration_s: float
    level: int = 0


STIMULUS_KINDS = ("ImageOnset", "AudioOnset", "WorkloadLevel")


@dataclass
class PhysioProfile:
    ibi_mean_s: float = 0.85
    ibi_sd_s: float = 0.03
    ibi_workload_shift_s: float = 0.05  # added per workload level k
    ibi_event_dip_s: float = 0.08
    ppg_rate_hz: float = 64.0
    ppg_baseline: float = 512.0
    ppg_pulse_amp: float = 60.0
    ppg_noise_sd: float = 2.0
    ecg_rate_hz: float = 130.0
    ecg_noise_sd: float = 0.01
    gsr_rate_hz: float = 4.0
    gsr_tonic: float = 2.0
    gsr_drift_amp: float = 0.001
    gsr_drift_period_s: float = 120.0
    gsr_noise_sd: float = 0.03
    gsr_workload_shift: float = 0.05  # subtracted per workload level k
    gsr_phasic_amp: float = 0.6
    gsr_phasic_latency_s: float = 1.5
    gsr_phasic_rise_s: float = 0.2
    gsr_phasic_decay_s: float = 4.0


@dataclass
class ScenarioConfig:
    seed: int = 42
    duration_s: float = 600.0
    world: World = field(default_factory=World)
    rssi: RssiModel = field(default_factory=RssiModel)
    battery: BatteryModel = field(default_factory=BatteryModel)
    cpu_events: list[CpuEvent] = field(default_factory=list)
    physio: PhysioProfile = field(default_factory=PhysioProfile)
    schedule: list[StimulusEvent] = field(default_factory=list)
    telemetry_rate_hz: float = 1.0


def default_config() -> ScenarioConfig:
    """The reference scenario: five robots starting near the top-right
    corner, the router at the lower-left, three moving obstacles, and a
    CPU step on robot 4 between seconds 250 and 420 of a 600 s run.
    """
    world = World(
        width=10.0, height=10.0, router_x=0.5, router_y=0.5,
        obstacles=[
            Obstacle(x=3.0, y=6.5, vx=0.12, vy=-0.07, radius=0.45),
            Obstacle(x=6.0, y=3.0, vx=-0.09, vy=0.11, radius=0.40),
            Obstacle(x=5.0, y=8.0, vx=0.08, vy=0.10, radius=0.50),
        ],
        robots=[
            RobotState(id=f"robot{k}",
                       x=8.6 + 0.22 * k, y=9.4 - 0.28 * k,
                       heading=math.atan2(0.5 - (9.4 - 0.28 * k),
                                          0.5 - (8.6 + 0.22 * k)),
                       speed=0.25, avoid_radius=0.5, cpu_load=0.2)
            for k in range(1, 6)
        ],
    )
    return ScenarioConfig(
        seed=42,
        duration_s=600.0,
        world=world,
        rssi=RssiModel(),
        battery=BatteryModel(),
        cpu_events=[CpuEvent(robot="robot4", start_s=250.0, end_s=420.0,
                             cpu=0.9)],
        physio=PhysioProfile(),
        schedule=[
            StimulusEvent(t_s=60.0, kind="WorkloadLevel", duration_s=60.0,
                          level=1),
            StimulusEvent(t_s=120.0, kind="WorkloadLevel", duration_s=60.0,
                          level=2),
            StimulusEvent(t_s=180.0, kind="WorkloadLevel", duration_s=60.0,
                          level=3),
            StimulusEvent(t_s=30.0, kind="ImageOnset", duration_s=5.0),
        ],
    )


# --- validation helpers -------------------------------------------------------


def _expect(obj, path: str, typ, minimum=None, maximum=None):
    if typ is float and isinstance(obj, int) and not isinstance(obj, bool):
        obj = float(obj)
    if not isinstance(obj, typ) or isinstance(obj, bool) and typ is not bool:
        raise BadConfig(f"{path}: expected {typ.__name__}, "
                        f"got {type(obj).__name__}")
    if minimum is not None and obj < minimum:
        raise BadConfig(f"{path}: must be >= {minimum}, got {obj}")
    if maximum is not None and obj > maximum:
        raise BadConfig(f"{path}: must be <= {maximum}, got {obj}")
    return obj


def _get(d: dict, path: str, key: str, default=None, required=False):
    if key not in d:
        if required:
            raise BadConfig(f"{path}: missing required key {key!r}")
        return default
    return d[key]


def _fields(d: dict, path: str, allowed: set[str]) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise BadConfig(f"{path}: unknown key(s) {sorted(unknown)}")


def parse_config(data: dict) -> ScenarioConfig:
    cfg = default_config()
    _expect(data, "$", dict)
    _fields(data, "$", {"seed", "duration_s", "workspace", "router", "robots",
                        "obstacles", "rssi", "battery", "cpu_events",
                        "physio", "telemetry_rate_hz"})
    if "seed" in data:
        cfg.seed = _expect(data["seed"], "seed", int, minimum=0)
    if "duration_s" in data:
        cfg.duration_s = _expect(data["duration_s"], "duration_s", float,
                                 minimum=0.0)
    if "telemetry_rate_hz" in data:
        cfg.telemetry_rate_hz = _expect(data["telemetry_rate_hz"],
                                        "telemetry_rate_hz", float,
                                        minimum=1e-9)
    if "workspace" in data:
        w = _expect(data["workspace"], "workspace", dict)
        _fields(w, "workspace", {"width", "height", "heading_sd"})
        cfg.world.width = _expect(_get(w, "workspace", "width",
                                       cfg.world.width),
                                  "workspace.width", float, minimum=1e-9)
        cfg.world.height = _expect(_get(w, "workspace", "height",
                                        cfg.world.height),
                                   "workspace.height", float, minimum=1e-9)
        cfg.world.heading_sd = _expect(_get(w, "workspace", "heading_sd",
                                            cfg.world.heading_sd),
                                       "workspace.heading_sd", float,
                                       minimum=0.0)
    if "router" in data:
        r = _expect(data["router"], "router", dict)
        _fields(r, "router", {"x", "y"})
        cfg.world.router_x = _expect(_get(r, "router", "x", required=True),
                                     "router.x", float)
        cfg.world.router_y = _expect(_get(r, "router", "y", required=True),
                                     "router.y", float)
    if "robots" in data:
        robots = _expect(data["robots"], "robots", list)
        cfg.world.robots = [
            _parse_robot(r, f"robots[{i}]") for i, r in enumerate(robots)]
    if "obstacles" in data:
        obstacles = _expect(data["obstacles"], "obstacles", list)
        cfg.world.obstacles = [
            _parse_obstacle(o, f"obstacles[{i}]")
            for i, o in enumerate(obstacles)]
    if "rssi" in data:
        r = _expect(data["rssi"], "rssi", dict)
        _fields(r, "rssi", {"p0_dbm", "n_exponent", "d0", "noise_sd_db"})
        try:
            cfg.rssi = RssiModel(
                p0_dbm=_expect(_get(r, "rssi", "p0_dbm", -30.0),
                               "rssi.p0_dbm", float),
                n_exponent=_expect(_get(r, "rssi", "n_exponent", 2.2),
                                   "rssi.n_exponent", float),
                d0=_expect(_get(r, "rssi", "d0", 1.0), "rssi.d0", float),
                noise_sd_db=_expect(_get(r, "rssi", "noise_sd_db", 1.5),
                                    "rssi.noise_sd_db", float))
        except ValueError as exc:
            raise BadConfig(f"rssi: {exc}")
    if "battery" in data:
        b = _expect(data["battery"], "battery", dict)
        _fields(b, "battery", {"alpha", "beta"})
        try:
            cfg.battery = BatteryModel(
                alpha=_expect(_get(b, "battery", "alpha", 0.005),
                              "battery.alpha", float),
                beta=_expect(_get(b, "battery", "beta", 0.02),
                             "battery.beta", float))
        except ValueError as exc:
            raise BadConfig(f"battery: {exc}")
    if "cpu_events" in data:
        events = _expect(data["cpu_events"], "cpu_events", list)
        cfg.cpu_events = [
            _parse_cpu_event(e, f"cpu_events[{i}]")
            for i, e in enumerate(events)]
    if "physio" in data:
        p = _expect(data["physio"], "physio", dict)
        _fields(p, "physio", {"profile", "schedule"})
        if "profile" in p:
            cfg.physio = _parse_profile(_expect(p["profile"],
                                                "physio.profile", dict))
        if "schedule" in p:
            sched = _expect(p["schedule"], "physio.schedule", list)
            cfg.schedule = [
                _parse_stimulus(e, f"physio.schedule[{i}]")
                for i, e in enumerate(sched)]
    _validate_semantics(cfg)
    return cfg


def _parse_robot(r, path: str) -> RobotState:
    _expect(r, path, dict)
    _fields(r, path, {"id", "x", "y", "heading", "speed", "avoid_radius",
                      "cpu", "battery_pct"})
    try:
        return RobotState(
            id=_expect(_get(r, path, "id", required=True), f"{path}.id", str),
            x=_expect(_get(r, path, "x", required=True), f"{path}.x", float),
            y=_expect(_get(r, path, "y", required=True), f"{path}.y", float),
            heading=_expect(_get(r, path, "heading", 0.0),
                            f"{path}.heading", float),
            speed=_expect(_get(r, path, "speed", 0.25), f"{path}.speed",
                          float, minimum=0.0),
            avoid_radius=_expect(_get(r, path, "avoid_radius", 0.5),
                                 f"{path}.avoid_radius", float, minimum=0.0),
            cpu_load=_expect(_get(r, path, "cpu", 0.2), f"{path}.cpu",
                             float, minimum=0.0, maximum=1.0),
            battery_pct=_expect(_get(r, path, "battery_pct", 100.0),
                                f"{path}.battery_pct", float,
                                minimum=0.0, maximum=100.0))
    except ValueError as exc:
        raise BadConfig(f"{path}: {exc}")


def _parse_obstacle(o, path: str) -> Obstacle:
    _expect(o, path, dict)
    _fields(o, path, {"x", "y", "vx", "vy", "radius"})
    try:
        return Obstacle(
            x=_expect(_get(o, path, "x", required=True), f"{path}.x", float),
            y=_expect(_get(o, path, "y", required=True), f"{path}.y", float),
            vx=_expect(_get(o, path, "vx", 0.0), f"{path}.vx", float),
            vy=_expect(_get(o, path, "vy", 0.0), f"{path}.vy", float),
            radius=_expect(_get(o, path, "radius", required=True),
                           f"{path}.radius", float, minimum=1e-9))
    except ValueError as exc:
        raise BadConfig(f"{path}: {exc}")


def _parse_cpu_event(e, path: str) -> CpuEvent:
    _expect(e, path, dict)
    _fields(e, path, {"robot", "start_s", "end_s", "cpu"})
    ev = CpuEvent(
        robot=_expect(_get(e, path, "robot", required=True),
                      f"{path}.robot", str),
        start_s=_expect(_get(e, path, "start_s", required=True),
                        f"{path}.start_s", float, minimum=0.0),
        end_s=_expect(_get(e, path, "end_s", required=True),
                      f"{path}.end_s", float, minimum=0.0),
        cpu=_expect(_get(e, path, "cpu", required=True), f"{path}.cpu",
                    float, minimum=0.0, maximum=1.0))
    if ev.end_s <= ev.start_s:
        raise BadConfig(f"{path}: end_s must exceed start_s")
    return ev


def _parse_stimulus(e, path: str) -> StimulusEvent:
    _expect(e, path, dict)
    _fields(e, path, {"t_s", "kind", "duration_s", "level"})
    kind = _expect(_get(e, path, "kind", required=True), f"{path}.kind", str)
    if kind not in STIMULUS_KINDS:
        raise BadConfig(f"{path}.kind: {kind!r} not one of {STIMULUS_KINDS}")
    level = _expect(_get(e, path, "level", 0), f"{path}.level", int,
                    minimum=0)
    if kind == "WorkloadLevel" and level < 1:
        raise BadConfig(f"{path}.level: WorkloadLevel needs level >= 1")
    return StimulusEvent(
        t_s=_expect(_get(e, path, "t_s", required=True), f"{path}.t_s",
                    float, minimum=0.0),
        kind=kind,
        duration_s=_expect(_get(e, path, "duration_s", required=True),
                           f"{path}.duration_s", float, minimum=1e-9),
        level=level)


_PROFILE_FIELDS = set(PhysioProfile.__dataclass_fields__)


def _parse_profile(p: dict) -> PhysioProfile:
    _fields(p, "physio.profile", _PROFILE_FIELDS)
    profile = PhysioProfile()
    for key, value in p.items():
        setattr(profile, key,
                _expect(value, f"physio.profile.{key}", float))
    if profile.ibi_mean_s <= 0 or profile.ibi_sd_s < 0:
        raise BadConfig("physio.profile: ibi_mean_s must be positive, "
                        "ibi_sd_s >= 0")
    for rate_key in ("ppg_rate_hz", "ecg_rate_hz", "gsr_rate_hz"):
        if getattr(profile, rate_key) <= 0:
            raise BadConfig(f"physio.profile.{rate_key}: must be positive")
    return profile


def _validate_semantics(cfg: ScenarioConfig) -> None:
    w = cfg.world
    ids = [r.id for r in w.robots]
    if len(set(ids)) != len(ids):
        raise BadConfig("robots: duplicate robot ids")
    for i, r in enumerate(w.robots):
        if not w.in_bounds(r.x, r.y):
            raise BadConfig(f"robots[{i}]: position ({r.x}, {r.y}) outside "
                            f"the {w.width}x{w.height} workspace")
        for j, o in enumerate(w.obstacles):
            if math.dist((r.x, r.y), (o.x, o.y)) < o.radius:
                raise BadConfig(f"robots[{i}]: starts inside obstacles[{j}]")
    for j, o in enumerate(w.obstacles):
        if not w.in_bounds(o.x, o.y, o.radius):
            raise BadConfig(f"obstacles[{j}]: does not fit in the workspace")
    if not w.in_bounds(w.router_x, w.router_y):
        raise BadConfig("router: outside the workspace")
    known = set(ids)
    for i, e in enumerate(cfg.cpu_events):
        if e.robot not in known:
            raise BadConfig(f"cpu_events[{i}].robot: unknown robot "
                            f"{e.robot!r}")


def load_config(path: str) -> ScenarioConfig:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BadConfig(
            f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}")
    try:
        return parse_config(data)
    except BadConfig as exc:
        raise BadConfig(f"{path}: {exc}")


def dump_default_config() -> str:
    """The default scenario as editable JSON."""
    cfg = default_config()
    w = cfg.world
    data = {
        "seed": cfg.seed,
        "duration_s": cfg.duration_s,
        "workspace": {"width": w.width, "height": w.height,
                      "heading_sd": w.heading_sd},
        "router": {"x": w.router_x, "y": w.router_y},
        "robots": [{"id": r.id, "x": r.x, "y": r.y,
                    "heading": r.heading, "speed": r.speed,
                    "avoid_radius": r.avoid_radius, "cpu": r.cpu_load}
                   for r in w.robots],
        "obstacles": [{"x": o.x, "y": o.y, "vx": o.vx, "vy": o.vy,
                       "radius": o.radius} for o in w.obstacles],
        "rssi": {"p0_dbm": cfg.rssi.p0_dbm, "n_exponent": cfg.rssi.n_exponent,
                 "d0": cfg.rssi.d0, "noise_sd_db": cfg.rssi.noise_sd_db},
        "battery": {"alpha": cfg.battery.alpha, "beta": cfg.battery.beta},
        "cpu_events": [{"robot": e.robot, "start_s": e.start_s,
                        "end_s": e.end_s, "cpu": e.cpu}
                       for e in cfg.cpu_events],
        "physio": {
            "profile": {k: getattr(cfg.physio, k) for k in _PROFILE_FIELDS},
            "schedule": [{"t_s": e.t_s, "kind": e.kind,
                          "duration_s": e.duration_s,
                          **({"level": e.level}
                             if e.kind == "WorkloadLevel" else {})}
                         for e in cfg.schedule],
        },
    }
    return json.dumps(data, indent=2) + "\n"
