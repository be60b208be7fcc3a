"""
Running inexact Krasnosel'skii-Mann iterations for time-varying averaged operators.

The package tracks fixed points of a sequence of averaged maps
``F_t = (1 - alpha_t) I + alpha_t T_t`` with one (possibly inexact)
application per step, and evaluates the residual and tracking bounds that
such runs satisfy.
"""

from .errors import (ConvergenceError, DimensionMismatch, DomainViolation, EmptySetError,
                     NonFiniteOutput, UncertifiedOracle)
from .operators import (Averaged, AveragedMap, Contraction, InexactAveragedMap, InexactOracle,
                        NonExpansive, apply_averaged, apply_inexact_averaged, compose_averaged,
                        composed_alpha, convex_combination_identity)
from .sets import (Affine, Ball, Box, FullSpace, Halfspace, Intersection, Polyhedron, Simplex,
                   dykstra, project)
from .tracker import (BoundLedger, OperatorSequence, TrackingRun, bound_ledger, corollary_checks,
                      fixed_point_oracle, run_inexact_km, theorem1_ledger, theorem2_ledger)
from .problems import (BanditGradient, ExactGradient, L1Norm, NoisyGradient, Quadratic,
                       SmoothConvexFunction, TimeVaryingProblem, forward_backward_operator,
                       gradient_step_averaged, make_drifting_quadratic, projected_gradient_operator,
                       prox)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DimensionMismatch",
    "DomainViolation",
    "EmptySetError",
    "NonFiniteOutput",
    "UncertifiedOracle",
    "Averaged",
    "AveragedMap",
    "Contraction",
    "InexactAveragedMap",
    "InexactOracle",
    "NonExpansive",
    "apply_averaged",
    "apply_inexact_averaged",
    "compose_averaged",
    "composed_alpha",
    "convex_combination_identity",
    "Affine",
    "Ball",
    "Box",
    "FullSpace",
    "Halfspace",
    "Intersection",
    "Polyhedron",
    "Simplex",
    "dykstra",
    "project",
    "BoundLedger",
    "OperatorSequence",
    "TrackingRun",
    "bound_ledger",
    "corollary_checks",
    "fixed_point_oracle",
    "run_inexact_km",
    "theorem1_ledger",
    "theorem2_ledger",
    "BanditGradient",
    "ExactGradient",
    "L1Norm",
    "NoisyGradient",
    "Quadratic",
    "SmoothConvexFunction",
    "TimeVaryingProblem",
    "forward_backward_operator",
    "gradient_step_averaged",
    "make_drifting_quadratic",
    "projected_gradient_operator",
    "prox",
]
