"""Cycle-based simulator of the torus spike network."""

from .kernel import SimConfig, Simulation, run
from .scenario import Scenario, load_scenario, scenario_from_dict
from .stats import SCHEMA_VERSION, SimStats
from .topology import Network, TopologySpec, TorusCoord, build_topology, torus_route
from .traffic import TraceEvent, TrafficSpec, parse_trace, random_tables

__all__ = [
    "Network",
    "SCHEMA_VERSION",
    "Scenario",
    "SimConfig",
    "SimStats",
    "Simulation",
    "TopologySpec",
    "TorusCoord",
    "TraceEvent",
    "TrafficSpec",
    "build_topology",
    "load_scenario",
    "parse_trace",
    "random_tables",
    "run",
    "scenario_from_dict",
    "torus_route",
]
