"""Generalization and concentration bounds for graph-indexed dependent data."""

from .bounds import (
    best_concentration_bound,
    concentration_bound,
    pacbayes_bound_graph,
    pacbayes_bound_iid,
    tail_probability,
    tune_d_geometric,
)
from .errors import (
    ConfigError,
    GraphmixError,
    NoCertifiedProfile,
    ParameterError,
    ParseError,
    ShelterViolation,
    SizeGuardError,
)
from .graph import Graph, ball, distance, generate_graph, load_graph, power_graph
from .mixing import INFINITE, FieldModel, MixingProfile, phi_value, theoretical_profile
from .partitions import (
    WeightedStableFamily,
    exact_fractional_chromatic,
    greedy_power_coloring,
    residue_partition,
    validate_partition,
    weight_sum,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "FieldModel",
    "Graph",
    "GraphmixError",
    "INFINITE",
    "MixingProfile",
    "NoCertifiedProfile",
    "ParameterError",
    "ParseError",
    "ShelterViolation",
    "SizeGuardError",
    "WeightedStableFamily",
    "ball",
    "best_concentration_bound",
    "concentration_bound",
    "distance",
    "exact_fractional_chromatic",
    "generate_graph",
    "greedy_power_coloring",
    "load_graph",
    "pacbayes_bound_graph",
    "pacbayes_bound_iid",
    "phi_value",
    "power_graph",
    "residue_partition",
    "tail_probability",
    "theoretical_profile",
    "tune_d_geometric",
    "validate_partition",
    "weight_sum",
]
