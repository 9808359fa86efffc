"""Exact density evolution for spatially coupled turbo-like codes on the BEC."""

__version__ = "0.1.0"

from .de_engine import bp_threshold, map_threshold, run_de, threshold_sweep
from .ensembles import EnsembleSpec
from .metric_chain import TransferFunction, transfer, transfer_function
from .potential import (
    bp_threshold_scalar,
    potential,
    potential_threshold,
    scalar_system,
    vector_potential_pcc,
)
from .trellis import Trellis, build_trellis, parse_generator, trellis_from_string

__all__ = [
    "EnsembleSpec", "Trellis", "TransferFunction", "build_trellis", "parse_generator",
    "trellis_from_string", "transfer", "transfer_function", "run_de", "bp_threshold",
    "map_threshold", "threshold_sweep", "scalar_system", "potential",
    "bp_threshold_scalar", "potential_threshold", "vector_potential_pcc",
]
