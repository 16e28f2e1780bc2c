"""Stochastic optimal control for goal-dynamics SDEs.

Simulation of dx = (a*sqrt(x) - sigma2*x - u) ds + (sigma1 - sigma2*x) dW,
Monte Carlo payoff evaluation, closed-form feedback stubbornness with
independent root-finding oracles, transition-density propagation, and a
conditional-expectation (Feynman-Kac style) estimator.
"""

__version__ = "0.1.0"

from .model import (
    Control,
    LagrangeParams,
    ModeFlags,
    ModelParams,
    ParameterError,
    PayoffParams,
    State,
    clamp_control,
    validate_params,
)
from .dynamics import (
    Path,
    diffusion,
    drift,
    em_step,
    em_transition_logdensity,
    path_logdensity,
    simulate_batch,
    simulate_path,
)
from .payoff import (
    PayoffEstimate,
    constant_policy,
    expected_payoff,
    instantaneous_payoff,
    payoff_stationarity,
    terminal_bonus,
)
from .lagrangian import (
    DerivativeBundle,
    assemble_f_from_generator,
    derivative_gap,
    derivatives,
    finite_difference_check,
    hand_coded_f,
    integrating_factor,
)
from .control import (
    ClosedFormCoeffs,
    OptimalControlResult,
    closed_form_coeffs,
    nash_residual,
    optimal_stubbornness,
    root_scan,
    solve_quartic,
)
from .density import (
    DensityGrid,
    gaussian_integral_closed,
    kernel_step,
    laplace_coefficients,
    schrodinger_step,
)
from .feynman_kac import FKProblem, fk_estimate, fk_pde_residual_check

__all__ = [
    "__version__",
    "Control",
    "LagrangeParams",
    "ModeFlags",
    "ModelParams",
    "ParameterError",
    "PayoffParams",
    "State",
    "clamp_control",
    "validate_params",
    "Path",
    "diffusion",
    "drift",
    "em_step",
    "em_transition_logdensity",
    "path_logdensity",
    "simulate_batch",
    "simulate_path",
    "PayoffEstimate",
    "constant_policy",
    "expected_payoff",
    "instantaneous_payoff",
    "payoff_stationarity",
    "terminal_bonus",
    "DerivativeBundle",
    "assemble_f_from_generator",
    "derivative_gap",
    "derivatives",
    "finite_difference_check",
    "hand_coded_f",
    "integrating_factor",
    "ClosedFormCoeffs",
    "OptimalControlResult",
    "closed_form_coeffs",
    "nash_residual",
    "optimal_stubbornness",
    "root_scan",
    "solve_quartic",
    "DensityGrid",
    "gaussian_integral_closed",
    "kernel_step",
    "laplace_coefficients",
    "schrodinger_step",
    "FKProblem",
    "fk_estimate",
    "fk_pde_residual_check",
]
