"""Numerical core: kernels, special functions, profiles, linearization, evolution and simulation"""

from .errors import (
    AcceptanceError, CoarseningLabError, ConfigError, NumericDomainError, PreconditionError,
)
from .evolve import (
    EvolutionTrace, b_delta, convergence_rate, decomposition_rate, edge_decomposition, integrate,
    linearized_apply, spectral_residuals, recover_number_density, trace_beta, unscale,
)
from .grid import GridDensity, GridSpec, SpectralFunction, SpectralGrid, uniform_density
from .kernel import (
    Kernel, Phi_eval, disk_bound, lambda_decay, new_kernel, parse_weights, phi_eval, phi_regular,
    psi_eval, psi_of, theta_star,
)
from .linearize import (
    CounterTermDecomposition, WeightedNormSpec, evolve_exact, forward_transform,
    inverse_transform, semigroup_apply, weighted_norm,
)
from .mc import (
    EmpiricalCdf, McEnsemble, SamplerSpec, empirical_rescaled, init_ensemble, ks_distance,
    run_replicas, run_until,
)
from .profiles import (
    apply_Q, check_lower_bound, generalized_profile_spectral, shift_T1, steady_state_ode,
    steady_state_spectral, tail_constant,
)
from .special import disk_margin, exp_integral_e1, k_function, w_star_hat, x_y_pair

__all__ = [
    "AcceptanceError", "CoarseningLabError", "ConfigError", "NumericDomainError", "PreconditionError",
    "EvolutionTrace", "b_delta", "convergence_rate", "decomposition_rate", "edge_decomposition",
    "integrate", "linearized_apply", "spectral_residuals", "recover_number_density", "trace_beta", "unscale",
    "GridDensity", "GridSpec", "SpectralFunction", "SpectralGrid", "uniform_density",
    "Kernel", "Phi_eval", "disk_bound", "lambda_decay", "new_kernel", "parse_weights", "phi_eval",
    "phi_regular", "psi_eval", "psi_of", "theta_star",
    "CounterTermDecomposition", "WeightedNormSpec", "evolve_exact", "forward_transform",
    "inverse_transform", "semigroup_apply", "weighted_norm",
    "EmpiricalCdf", "McEnsemble", "SamplerSpec", "empirical_rescaled", "init_ensemble", "ks_distance",
    "run_replicas", "run_until",
    "apply_Q", "check_lower_bound", "generalized_profile_spectral", "shift_T1", "steady_state_ode",
    "steady_state_spectral", "tail_constant",
    "disk_margin", "exp_integral_e1", "k_function", "w_star_hat", "x_y_pair",
]
