"""Discrete-event vehicle-network and floor-location scenarios."""

from tcpair.netsim.floors import FloorConfig, building, floor_accuracy, parse_floor_config, run_floor_scenario
from tcpair.netsim.scenario import (
    Municipality,
    RogueDevice,
    Scenario,
    VehicleSpec,
    parse_scenario,
    scenario_from_dict,
    scenario_to_dict,
    serialize_scenario,
    validate_scenario,
)
from tcpair.netsim.world import MetricsReport, TraceRecord, World, build_world, run, simulate
