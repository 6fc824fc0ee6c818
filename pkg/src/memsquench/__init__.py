"""Radial simulator and verification harness for the capacitance-coupled
MEMS touchdown equation u_t = lap u + lam/((1-u)^2 (1 + chi*int 1/(1-u))^2)."""

from .domain import (
    BoundSet,
    InitialData,
    ProblemParams,
    ball_volume,
    c0_of,
    delta1_bound,
    epsilon_budget,
    lambda0_threshold,
    lambda1_threshold,
    quench_time_upper_bound,
    select_epsilon,
    supersolution_psi,
    unit_sphere_area,
    validate_initial_data,
)
from .grid import (
    RadialField,
    RadialGrid,
    ball_integral,
    boundary_derivative,
    build_grid,
    radial_laplacian_apply,
)
from .solver import (
    QuenchReport,
    SolutionState,
    StepControl,
    TraceRecord,
    choose_dt,
    detect_quench,
    nonlocal_factor,
    rhs_eval,
    run_to_quench,
    step_imex,
)
from .analysis import (
    check_comparison,
    check_integral_bounded,
    check_profile_lower_bound,
    check_qtilde_nonneg,
    check_supersolution,
    convergence_study,
    estimate_c2,
    fit_profile_exponent,
    verify_quench_time_bound,
)

__version__ = "0.1.0"
