"""Representation cost of ReLU networks with linear layers.

Numerical and closed-form evaluation of ``Phi_L``, the per-parameterization
cost of a shallow ReLU network realized with ``L - 1`` linear layers, plus
the constructions and training experiments built on it.
"""

from .estimators import LinearReLURegressor, SubspaceProjector
from .exceptions import (
    AgreementViolatedError,
    ConstructionInfeasibleError,
    DivergenceError,
    InvalidInputError,
    InvalidParameterError,
    ReprCostError,
    StructureAbsentError,
)
from .netmodel import DeepNet, ShallowNet, balanced_factorization, collapse, cost, evaluate
from .repcost import (
    PhiBounds,
    PhiEstimate,
    SolverOptions,
    oracle_grid_lambda,
    phi2,
    phi3_bounds,
    phi3_upper_svd,
    phi_grouped,
    phi_numeric,
)
from .subspace import ProjectionSpec, build_g, phi3_tilde
from .trainer import TrainConfig, TrainResult, train

__version__ = "0.1.0"

__all__ = [
    "AgreementViolatedError",
    "ConstructionInfeasibleError",
    "DeepNet",
    "DivergenceError",
    "InvalidInputError",
    "InvalidParameterError",
    "LinearReLURegressor",
    "PhiBounds",
    "PhiEstimate",
    "ProjectionSpec",
    "ReprCostError",
    "ShallowNet",
    "SolverOptions",
    "StructureAbsentError",
    "SubspaceProjector",
    "TrainConfig",
    "TrainResult",
    "balanced_factorization",
    "build_g",
    "collapse",
    "cost",
    "evaluate",
    "oracle_grid_lambda",
    "phi2",
    "phi3_bounds",
    "phi3_tilde",
    "phi3_upper_svd",
    "phi_grouped",
    "phi_numeric",
    "train",
]
