"""Discrete generators of Frobenius-Perron semigroups for outflow systems.

Uniform box coverings, an upwind face-flux generator, the semigroup it
generates, Ulam matrices, and an exact trajectory-based reference for the
transfer operator of the outflow (killed) flow.
"""

from .covering import (BoxCovering, DensityVector, StateSpace, build_covering, l1_distance,
                       l1_norm, l1_norm_on_X, project, restrict_to_X, volume_fractions)
from .errors import (AccuracyError, ConfigurationError, FPOutflowError, NumericalError,
                     SolverError, StiffIntegrationError, UsageError)
from .experiments import (ConvergenceReport, StudySpec, run_convergence, run_invariant_suite)
from .fields import VectorField, make_field
from .flow import (TrajectoryResult, apply_generator_analytic, integrate, integrate_many,
                   transfer_exact, transfer_exact_grid, transfer_exact_many)
from .functions import TestFunction, make_function
from .generator import (FaceQuadratureSpec, GeneratorMatrix, apply, assemble, finite_time_quotient,
                        generator_consistency_error)
from .semigroup import EvolutionSpec, evolve, resolvent, semigroup_defect
from .ulam import SamplingSpec, UlamMatrix, estimate, quotient_matrix

__all__ = [
    "BoxCovering",
    "DensityVector",
    "StateSpace",
    "build_covering",
    "l1_distance",
    "l1_norm",
    "l1_norm_on_X",
    "project",
    "restrict_to_X",
    "volume_fractions",
    "AccuracyError",
    "ConfigurationError",
    "FPOutflowError",
    "NumericalError",
    "SolverError",
    "StiffIntegrationError",
    "UsageError",
    "ConvergenceReport",
    "StudySpec",
    "run_convergence",
    "run_invariant_suite",
    "VectorField",
    "make_field",
    "TrajectoryResult",
    "apply_generator_analytic",
    "integrate",
    "integrate_many",
    "transfer_exact",
    "transfer_exact_grid",
    "transfer_exact_many",
    "TestFunction",
    "make_function",
    "FaceQuadratureSpec",
    "GeneratorMatrix",
    "apply",
    "assemble",
    "finite_time_quotient",
    "generator_consistency_error",
    "EvolutionSpec",
    "evolve",
    "resolvent",
    "semigroup_defect",
    "SamplingSpec",
    "UlamMatrix",
    "estimate",
    "quotient_matrix",
]

__version__ = "0.1.0"
