"""Tempered fractional diffusion on intervals and boxes."""

from .special_fn import (
    ConvergenceError,
    QuadratureError,
    RelaxationQuery,
    TemperedParams,
    kernel_bound,
    laplace_symbol,
    levy_tail,
    mittag_leffler,
    phi_integrand,
    relaxation,
    relaxation_dt,
    relaxation_grid,
    stable_density,
    tempered_density,
)
from .frac_ops import DerivativeResult, SampledFunction, caputo_derivative, caputo_tempered, rl_derivative, rl_tempered
from .subordinate_mc import (
    InverseSample,
    SubordinatorPath,
    TemperingStats,
    build_path,
    integrate_against_density,
    inverse_at,
    inverse_density_quadrature,
    sample_inverse,
    sample_stable_increment,
    sample_tempered_increment,
)
from .pde_series import (
    EigenExpansion,
    IntervalDomain,
    SolutionEstimate,
    eigenpairs,
    heat_kernel,
    heat_solution,
    project,
    tempered_solution_series,
    tempered_solution_subordination,
)
from .mc_solver import KilledPathOutcome, McConfig, estimate_u, estimate_u_many, simulate_killed_path

__version__ = "0.1.0"
