"""Deterministic scenario generators: robot fleet and physiological."""

from condmon.sim.world import (
    BatteryModel,
    Obstacle,
    RobotState,
    RssiModel,
    World,
    rssi,
    step_battery,
    step_obstacle,
    step_robot,
)
from condmon.sim.config import (
    BadConfig,
    CpuEvent,
    PhysioProfile,
    ScenarioConfig,
    StimulusEvent,
    default_config,
    dump_default_config,
    load_config,
    parse_config,
)
from condmon.sim.fleet import FleetRun, SIM_EPOCH, run_fleet_scenario, simulate_fleet
from condmon.sim.physio import PhysioRun, generate_physio, run_physio_scenario

__all__ = [
    "BatteryModel", "Obstacle", "RobotState", "RssiModel", "World",
    "rssi", "step_battery", "step_obstacle", "step_robot",
    "BadConfig", "CpuEvent", "PhysioProfile", "ScenarioConfig",
    "StimulusEvent", "default_config", "dump_default_config", "load_config",
    "parse_config",
    "FleetRun", "SIM_EPOCH", "run_fleet_scenario", "simulate_fleet",
    "PhysioRun", "generate_physio", "run_physio_scenario",
]
