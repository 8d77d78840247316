"""Mesoscopic eigenvalue statistics of Wigner matrices: sampling, spectra,
limiting Gaussian-process predictions and their Monte Carlo verification."""

from .ensemble import EnsembleSpec, EntryLaw, MatrixSample, SymmetryClass, sample_matrix
from .errors import (ConfigurationError, ContractViolation, DomainError, ExperimentError, MesoWignerError,
                     NumericalError)
from .spectral import Spectrum, eigenvalues, linear_statistic, resolvent_matrix, trace_resolvent
from .theory import MesoscopicScale, TestFunction, get_test_function

__version__ = "0.1.0"
