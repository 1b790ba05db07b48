"""Constrained variational problems: extremals, costates, abnormality and gauge checks."""
__version__ = "0.1.0"

from .expr import Expression, ExprDomainError, ExprError, ExprSyntaxError, UnknownIdentifierError, parse, serialize
from .geometry import AdmissibilityReport, ProblemSpec, SampledCurve, check_admissible, check_rank, integrate_admissible
from .gauge import (
    GaugeFunction,
    GaugeVerdict,
    LiftedCurve,
    action,
    gauge_equivalent,
    gauge_transform,
    gauge_verdict,
    pontryagin_hamiltonian,
    ppc_action,
)
from .variation import (
    InfinitesimalDeformation,
    check_infinitesimal_admissibility,
    endpoint_functional,
    fundamental_matrix,
    variational_flow,
)
from .pontryagin import ExtremalSolution, ShootingConfig, reconstruct_costates, shoot
from .abnormality import AbnormalityReport, abnormality_index, verify_normal_uniqueness
from .problem import Problem, load_problem, parse_problem

__all__ = [
    "AbnormalityReport",
    "AdmissibilityReport",
    "ExprDomainError",
    "ExprError",
    "ExprSyntaxError",
    "Expression",
    "ExtremalSolution",
    "GaugeFunction",
    "GaugeVerdict",
    "InfinitesimalDeformation",
    "LiftedCurve",
    "Problem",
    "ProblemSpec",
    "SampledCurve",
    "ShootingConfig",
    "UnknownIdentifierError",
    "abnormality_index",
    "action",
    "check_admissible",
    "check_infinitesimal_admissibility",
    "check_rank",
    "endpoint_functional",
    "fundamental_matrix",
    "gauge_equivalent",
    "gauge_transform",
    "gauge_verdict",
    "integrate_admissible",
    "load_problem",
    "parse",
    "parse_problem",
    "pontryagin_hamiltonian",
    "ppc_action",
    "reconstruct_costates",
    "serialize",
    "shoot",
    "variational_flow",
    "verify_normal_uniqueness",
]
