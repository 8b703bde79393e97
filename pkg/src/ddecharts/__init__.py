"""Characteristic roots and stability charts for retarded DDEs.

Roots of the characteristic function D(lambda) = sum_k P_k(lambda)
exp(-lambda tau_k) are seeded once by a spectral-collocation eigenproblem
and then tracked across parameter space by integrating the continuation
ODE dlambda/dp = -(dD/dp)/(dD/dlambda), which turns 2-D stability-chart
generation into a family of cheap scalar ODE solves instead of one
eigenproblem per grid node.  A dense eigensweep oracle is included for
verification and benchmarking.
"""

from .errors import (
    ConfigError,
    ConvergenceFailure,
    DDEChartsError,
    DegenerateProblem,
    NonFiniteState,
    SingularJacobian,
    UnknownParameter,
)
from .quasipoly import (
    DEFAULT_EPS_JACOBIAN,
    ParameterPoint,
    QuasiPolynomial,
    ScalarExpr,
    Term,
    as_scalar,
)
from .seeding import RootSet, SeedConfig, newton_refine, seed_roots
from .continuation import (
    ContinuationConfig,
    SingularEvent,
    Trajectory,
    continue_1d,
    verify_residuals,
)
from .chart import (
    AgreementReport,
    BenchmarkResult,
    StabilityChart,
    SweepConfig,
    benchmark,
    classification_agreement,
    dense_sweep,
    reseed_policy,
    sweep2d,
)
from .config import ProblemConfig, emit_config, parse_config

__version__ = "0.1.0"

__all__ = [
    "AgreementReport",
    "BenchmarkResult",
    "ConfigError",
    "ContinuationConfig",
    "ConvergenceFailure",
    "DDEChartsError",
    "DEFAULT_EPS_JACOBIAN",
    "DegenerateProblem",
    "NonFiniteState",
    "ParameterPoint",
    "ProblemConfig",
    "QuasiPolynomial",
    "RootSet",
    "ScalarExpr",
    "SeedConfig",
    "SingularEvent",
    "SingularJacobian",
    "StabilityChart",
    "SweepConfig",
    "Term",
    "Trajectory",
    "UnknownParameter",
    "as_scalar",
    "benchmark",
    "classification_agreement",
    "continue_1d",
    "dense_sweep",
    "emit_config",
    "newton_refine",
    "parse_config",
    "reseed_policy",
    "seed_roots",
    "sweep2d",
    "verify_residuals",
]
