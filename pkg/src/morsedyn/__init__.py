"""Morse-graph decomposition of sampled dynamics, aimed at neural-network training maps.

Pipeline: sample (initial, final) weight pairs, fit a Gaussian-process
surrogate, build an outer approximation on an adaptive cubical grid, then
compute the Morse graph, an order retraction and basin labels.
"""

from morsedyn.dynamics import MultivaluedMap, build_outer_map, validate_outer, validate_pairs
from morsedyn.errors import (
    CapacityError,
    MorsedynError,
    NumericalError,
    OutOfDomainError,
    UnknownCellError,
    ValidationError,
)
from morsedyn.grid import Box, CellId, Grid, make_grid
from morsedyn.harness import (
    EnsembleConfig,
    EnsembleRecord,
    NetConfig,
    balanced_accuracy,
    prediction_entropy,
    project,
    select_coordinates,
    train_ensemble,
    train_once,
)
from morsedyn.lattice import birkhoff_isomorphic, join_irreducibles, region_lattice
from morsedyn.morse import (
    basins,
    condensation,
    morse_graph,
    order_retraction,
    reachable_region,
    strongly_connected_components,
)
from morsedyn.pipeline import adaptive_morse_pipeline
from morsedyn.surrogate import KernelConfig, SamplePair, SurrogateModel, VarianceConfig, fit, image_box
from morsedyn.systems import SYSTEMS, get_system

__version__ = "0.1.0"

__all__ = [
    "Box",
    "CapacityError",
    "CellId",
    "EnsembleConfig",
    "EnsembleRecord",
    "Grid",
    "KernelConfig",
    "MorsedynError",
    "MultivaluedMap",
    "NetConfig",
    "NumericalError",
    "OutOfDomainError",
    "SYSTEMS",
    "SamplePair",
    "SurrogateModel",
    "UnknownCellError",
    "ValidationError",
    "VarianceConfig",
    "adaptive_morse_pipeline",
    "balanced_accuracy",
    "basins",
    "birkhoff_isomorphic",
    "build_outer_map",
    "condensation",
    "fit",
    "get_system",
    "image_box",
    "join_irreducibles",
    "make_grid",
    "morse_graph",
    "order_retraction",
    "prediction_entropy",
    "project",
    "reachable_region",
    "region_lattice",
    "select_coordinates",
    "strongly_connected_components",
    "train_ensemble",
    "train_once",
    "validate_outer",
    "validate_pairs",
]
