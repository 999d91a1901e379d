"""Convexification for 3D first-arrival travel-time tomography.

Modules: ``basis`` (orthonormal functions of the source position),
``forward`` (phantoms, eikonal solver, boundary traces), ``transform``
(data splitting and spectral projection), ``operator`` (the coefficient
system and its feasible set), ``solver`` (weighted Tikhonov functional,
gradient projection, recovery of c), ``probes`` (numerical checks) and
``cli``.
"""
from .basis import build_basis, derivative_gram
from .config import RunConfig, load_config
from .errors import (AdmissibilityError, ConfigError, DivergenceError, InfeasibleError,
                     NumericalError, TravelCvxError)
from .forward import DomainSpec, add_noise, extract_boundary_data, make_phantom, solve_all
from .operator import CoeffField, InversionProblem, project_truth
from .solver import SolverParams, recover_c, solve

__version__ = "0.1.0"
