"""Quantum-assisted unsupervised EIT reconstruction on a desk-scale forward model."""

from .errors import (
    LoadError,
    MetricError,
    NormalizationError,
    NumericError,
    OptimizerError,
    ParameterError,
    QuantEITError,
    SolverError,
    ValidationError,
)
from .qanet import GeometrySpec, QANetParams, parameter_count
from .recon import ReconstructionConfig, ReconstructionResult, noser, reconstruct
from .regularizers import RegWeights

__version__ = "0.1.0"
