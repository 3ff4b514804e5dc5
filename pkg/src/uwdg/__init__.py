"""Ultra-weak discontinuous Galerkin tools for the 1D nonlinear Schrodinger
equation: a three-parameter numerical-flux family, the flux-adapted
projections it induces, semi-discrete operators, IMEX time stepping, and a
study runner that reproduces the reference convergence tables."""

from .errors import (
    ConditioningError,
    ConfigError,
    DegenerateFluxError,
    MeshError,
    NonexistentProjectionError,
    SingularSystemError,
    UWDGError,
)
from .fluxes import (
    FluxParams,
    OrderPrediction,
    ProjectionDiagnostics,
    StabilityClass,
    assemble_interface_blocks,
    check_stability,
    diagnose,
    evaluate_bound,
    predict_order,
)
from .meshbasis import Basis, DGFunction, Mesh1D, gauss_nodes, legendre_deriv, legendre_eval
from .projection import (
    ErrorReport,
    SmoothFunction,
    dense_oracle,
    l2_project,
    measure_difference,
    measure_error,
    measure_order,
    project_p1,
    project_p2,
    project_star,
    project_star_local,
    projection_residuals,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
