"""Shared domain types: parameters, grids, potentials, fields and their I/O."""

from .errors import (
    AccuracyWarning,
    BasisIndexError,
    ConfigError,
    ConvergenceError,
    DegenerateInputError,
    DivergenceError,
    DomainError,
    FieldFormatError,
    FieldIOError,
    FieldLengthError,
    GridValidationError,
    HermiticityError,
    NormalizationError,
    PhaseflowError,
    StabilityWarning,
)
from .fieldio import export_csv, load_field, save_field
from .fields import (
    Amplitude,
    PhaseDistribution,
    TransformField,
    coherent_state,
    gaussian_amplitude,
)
from .grids import PERIODIC, VANISHING, PhaseSpaceGrid, SpatialGrid, SystemParams
from .potentials import (
    DoubleWell,
    Harmonic,
    Polynomial,
    Potential,
    Quartic,
    Tabulated,
    free,
)

__all__ = [
    "AccuracyWarning", "Amplitude", "BasisIndexError", "ConfigError", "ConvergenceError",
    "DegenerateInputError", "DivergenceError", "DomainError", "DoubleWell", "FieldFormatError",
    "FieldIOError", "FieldLengthError", "GridValidationError", "Harmonic", "HermiticityError", "NormalizationError",
    "PERIODIC", "PhaseDistribution", "PhaseSpaceGrid", "PhaseflowError", "Polynomial",
    "Potential", "Quartic", "SpatialGrid", "StabilityWarning", "SystemParams", "Tabulated",
    "TransformField", "VANISHING", "coherent_state", "export_csv", "free", "gaussian_amplitude",
    "load_field", "save_field",
]
