"""Harmonic analysis, energy measures and symbolic dynamics on level-k Sierpinski gaskets."""

from .harmonic import HarmonicStructure, harmonic_structure, renormalization_constant
from .measures import energy_cell_vector, energy_orthobasis
from .mixing import correlation_exact, mixing_rate_fit, transfer_operator_matrix
from .selfsim import m_matrices
from .topology import build_level_graph, gasket_params

__all__ = [
    "HarmonicStructure",
    "build_level_graph",
    "correlation_exact",
    "energy_cell_vector",
    "energy_orthobasis",
    "gasket_params",
    "harmonic_structure",
    "m_matrices",
    "mixing_rate_fit",
    "renormalization_constant",
    "transfer_operator_matrix",
]
