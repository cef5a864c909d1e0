"""Quantum graphs with symplectic symmetry: spectra, scattering and RMT ensembles."""

from .graph import (
    Bond,
    GraphConfigError,
    GraphTopology,
    GseDoublingSpec,
    PhaseShifterSetting,
    VertexId,
    apply_phase_shifter,
    build_gse_graph,
    default_gse_graph,
    four_coupling_variant,
    frequency_to_wavenumber,
    load_graph_config,
    parse_graph_config,
    wavenumber_to_frequency,
)

__version__ = "0.1.0"

__all__ = [
    "Bond",
    "GraphConfigError",
    "GraphTopology",
    "GseDoublingSpec",
    "PhaseShifterSetting",
    "VertexId",
    "apply_phase_shifter",
    "build_gse_graph",
    "default_gse_graph",
    "four_coupling_variant",
    "frequency_to_wavenumber",
    "load_graph_config",
    "parse_graph_config",
    "wavenumber_to_frequency",
]
