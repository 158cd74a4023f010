"""Facet formation, stagnation and breaking for ``u_t - (L(u_x))_x = f``
with a monotone graph ``L`` that jumps at zero slope."""

from .model import (
    ForceField,
    ForceSlice,
    Grid,
    ModelError,
    OperatorKind,
    OperatorSpec,
    PiecewisePolynomial,
    Profile,
    TimeLaw,
    alpha_force,
    eval_force,
    eval_operator,
)
from .prox import StepCertificate, StepFailure, StepProblem, brute_force_step_oracle, implicit_step, inclusion_residual

__all__ = [
    "ForceField",
    "ForceSlice",
    "Grid",
    "ModelError",
    "OperatorKind",
    "OperatorSpec",
    "PiecewisePolynomial",
    "Profile",
    "StepCertificate",
    "StepFailure",
    "StepProblem",
    "TimeLaw",
    "alpha_force",
    "brute_force_step_oracle",
    "eval_force",
    "eval_operator",
    "implicit_step",
    "inclusion_residual",
]

__version__ = "0.1.0"
