"""Adaptive BDDC solver for lowest-order mixed Darcy flow."""

from .decomposition import (Decomposition, import_partition,
                            regular_partition)
from .grid import (Grid, Permeability, SaddleSystem, Wells, assemble_system,
                   build_grid)
from .solver import SolveConfig, SolveReport, solve

__all__ = [
    "Grid", "Permeability", "Wells", "SaddleSystem", "assemble_system",
    "build_grid", "Decomposition", "regular_partition", "import_partition",
    "SolveConfig", "SolveReport", "solve",
]

__version__ = "0.1.0"
