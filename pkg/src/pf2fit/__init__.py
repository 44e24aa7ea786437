"""PARAFAC2 decomposition of ragged matrix stacks.

Fits the model X_k ~ A diag(d_k) B_k^T under the constant-cross-product
constraint on the evolving factors, either classically (unregularized ALS)
or with proximable regularization on every mode via alternating optimization
with ADMM.  Includes a simulation-data generator, recovery metrics and a
command-line interface.
"""

__version__ = "0.1.0"

from .als import AlsConfig, cp_cycle, fit_als
from .constraint import Pf2ProjectionState, orthonormal_polar_factor, project_pf2
from .core import (
    ImplicitEvolving,
    Pf2Factors,
    SliceStack,
    materialize,
    reconstruct_slice,
    reconstruct_stack,
    sq_frobenius,
)
from .metrics import FmsResult, fms, relative_sse
from .penalties import Regularizer, penalty_value, prox, tv_denoise_1d
from .simulate import (
    SimSpec,
    add_noise,
    cyclic_shift_blueprint,
    gen_factors,
    simulate_dataset,
)
from .solver import (
    DegenerateStateError,
    DivergenceError,
    FitReport,
    SolverConfig,
    a_loss_prox,
    admm_a,
    admm_b,
    admm_d,
    b_loss_prox,
    compute_rhos,
    d_loss_prox,
    fit_ao_admm,
    regularized_objective,
)

__all__ = [
    "__version__",
    "AlsConfig",
    "DegenerateStateError",
    "DivergenceError",
    "FitReport",
    "FmsResult",
    "ImplicitEvolving",
    "Pf2Factors",
    "Pf2ProjectionState",
    "Regularizer",
    "SimSpec",
    "SliceStack",
    "SolverConfig",
    "a_loss_prox",
    "add_noise",
    "admm_a",
    "admm_b",
    "admm_d",
    "b_loss_prox",
    "compute_rhos",
    "cp_cycle",
    "cyclic_shift_blueprint",
    "d_loss_prox",
    "fit_als",
    "fit_ao_admm",
    "fms",
    "gen_factors",
    "materialize",
    "orthonormal_polar_factor",
    "penalty_value",
    "project_pf2",
    "prox",
    "reconstruct_slice",
    "reconstruct_stack",
    "regularized_objective",
    "relative_sse",
    "simulate_dataset",
    "sq_frobenius",
    "tv_denoise_1d",
]
