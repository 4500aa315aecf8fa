"""Finite-horizon H2 model reduction of linear time-invariant systems."""

from .baselines import BalancingData, PODData, SnapshotSet, collect_snapshots, pod_reduce, tlbt_reduce
from .conditions import (
    GradientBundle,
    OptimalityResidual,
    eval_G_pr,
    eval_G_prime_pr,
    eval_G_ss,
    gradients,
    h2_residuals,
    optimality_residuals,
)
from .estimators import FHIRKA, POD, TLBT
from .exceptions import *  # noqa: F401,F403
from .fhirka import (
    OptimizerConfig,
    PoleParametrization,
    ReductionResult,
    ResidueSystem,
    build_residue_system,
    fhirka_run,
    objective_vp,
    optimal_residues,
    pole_gradient_vp,
)
from .metrics import (
    QuadratureRule,
    TimeLimitedGramian,
    error_sq,
    inner_product_pr,
    norm_sq_gramian,
    norm_sq_pr,
    phi1,
    phi2,
    quadrature_error_sq,
    quadrature_inner_product,
    quadrature_truncated_laplace,
    time_limited_gramian,
)
from .system import (
    ClosureReport,
    Horizon,
    PoleResidueModel,
    StateSpaceModel,
    eval_transfer_pr,
    eval_transfer_ss,
    impulse_response,
    modal_decompose,
    realize,
    validate_conjugate_closure,
)

__version__ = "0.1.0"
