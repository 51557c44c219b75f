"""Nematic liquid crystal flow in a channel bounded by a viscoelastic shell.

Galerkin fluid-shell solver coupled to a Ginzburg-Landau relaxed director,
with energy bookkeeping and verification experiments.
"""

from .errors import (
    AdmissibilityError, AssemblyError, BoundViolation, CheckpointError, ConfigError, DivergenceError,
    DomainError, EnergyViolation, GeometryError, InvariantViolation, InversionError, NematicFSIError,
    NonConvergenceError, OutputError, SolverError,
)

__all__ = [
    "AdmissibilityError", "AssemblyError", "BoundViolation", "CheckpointError", "ConfigError",
    "DivergenceError", "DomainError", "EnergyViolation", "GeometryError", "InvariantViolation",
    "InversionError", "NematicFSIError", "NonConvergenceError", "OutputError", "SolverError",
]
__version__ = "0.1.0"
