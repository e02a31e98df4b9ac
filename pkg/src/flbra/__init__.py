"""Fuzzy-logic link costing and routing simulation for indoor sensor networks."""
from .fuzzy import FuzzyConfig, link_cost, link_costs
from .links import LinkQuality, PropagationParams, RandomSource
from .topology import TABLE2_SCENARIOS, NetworkGraph, RoutingTable, Scenario, build_grid, dijkstra_routes
from .protocols import FlbraController, flbra_setup, rbf_route, evaluate_delivery
from .metrics import confidence_interval, f_parameter, pep
from .config import RunConfig, load_config

__version__ = "0.1.0"

__all__ = [
    "FuzzyConfig", "link_cost", "link_costs",
    "LinkQuality", "PropagationParams", "RandomSource",
    "TABLE2_SCENARIOS", "NetworkGraph", "RoutingTable", "Scenario", "build_grid", "dijkstra_routes",
    "FlbraController", "flbra_setup", "rbf_route", "evaluate_delivery",
    "confidence_interval", "f_parameter", "pep",
    "RunConfig", "load_config",
]
