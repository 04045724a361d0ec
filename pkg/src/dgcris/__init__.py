"""Dynamically group-connected BD-RIS design for multi-user MISO downlinks."""

from .bdris import BdRisPair, activated_links, hardware_cost, validate_structure
from .channel import ChannelSet, SystemConfig, generate_channels
from .grouping import Grouping, fixed_strategy, uniform_adjacent
from .solver import Architecture, SolveResult, SolverOptions, solve_scenario, sum_rate

__version__ = "0.1.0"

__all__ = [
    "Architecture", "BdRisPair", "ChannelSet", "Grouping", "SolveResult", "SolverOptions",
    "SystemConfig", "activated_links", "fixed_strategy", "generate_channels", "hardware_cost",
    "solve_scenario", "sum_rate", "uniform_adjacent", "validate_structure",
]
