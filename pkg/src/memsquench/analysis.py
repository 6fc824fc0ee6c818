"""Verification of the analytic touchdown statements on discrete solutions.

Each check compares a continuum inequality against O(h^2) data, so the
profile checks use the resolution-aware tolerance

    tol_profile = 5 h^2 * max |centered second difference of v|,

which tightens automatically under grid refinement.  Profile windows exclude
r < 2h (origin stencil pollution) and r > R/2 (boundary layer): the bounds
being tested are statements about the touchdown core near r = 0.

Everything here is pure post-processing over immutable traces and snapshots,
except the lockstep comparison runner, which advances two solver states with
a synchronized dt sequence (the pointwise min of both controllers' choices)
so the discrete ordering claim is tested under identical time discretization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from .domain import ProblemParams, c0_of, quench_time_upper_bound, supersolution_psi
from .grid import RadialField, build_grid
from .solver import (
    OvershootError,
    QuenchReport,
    StepControl,
    TraceRecord,
    _boundary_flux,
    _dt_caps,
    _make_state,
    detect_quench,
    run_to_quench,
    step_imex,
)

__all__ = [
    "ProfileFit",
    "TransformDiagnostic",
    "ComparisonResult",
    "BoundCheck",
    "IntegralCheck",
    "ConvergenceResult",
    "profile_tolerance",
    "check_profile_lower_bound",
    "fit_profile_exponent",
    "check_qtilde_nonneg",
    "estimate_c2",
    "run_lockstep",
    "check_comparison",
    "check_supersolution",
    "verify_quench_time_bound",
    "check_integral_bounded",
    "convergence_study",
]

COMPARISON_TOL = 1e-12

#: relative tolerance on the flux diagnostic, scaled by max |q| over the run
QTILDE_REL_TOL = 1e-6


@dataclass(frozen=True)
class ProfileFit:
    """Log-log least-squares fit v ~= C * r^p over a radius window."""

    window: Tuple[float, float]
    exponent: float
    coefficient: float
    r: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)

    def min_ratio(self, p0: float) -> float:
        """min over the window of v(r) / r^p0."""
        return float((self.v / self.r**p0).min())


@dataclass(frozen=True)
class TransformDiagnostic:
    """Outcome of the w = v^beta flux diagnostic over a set of snapshots.

    qtilde_min is the smallest value of q - epsilon*r^n with q = r^(n-1) w_r;
    profile_margin the smallest value of v - (epsilon/2)^(1/beta) r^(2/beta).
    Nonnegativity of both (up to tolerance) certifies the power-law floor of
    the gap.
    """

    beta: float
    epsilon: float
    qtilde_min: float
    profile_margin: float
    q_abs_max: float
    qtilde_tol: float
    profile_tol: float
    profile_ok: bool

    @property
    def qtilde_ok(self) -> bool:
        return self.qtilde_min >= -self.qtilde_tol


@dataclass(frozen=True)
class ComparisonResult:
    """Largest pointwise ordering violation over a lockstep pair of runs."""

    max_violation: float
    tolerance: float
    applicable: bool = True
    t_end: float = 0.0
    steps: int = 0

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tolerance


@dataclass(frozen=True)
class BoundCheck:
    """Touchdown time versus the closed-form upper bound."""

    applicable: bool
    passed: bool
    bound: Optional[float]
    delta1: float
    t_hi: Optional[float]
    slack: float

    @property
    def margin(self) -> Optional[float]:
        if self.bound is None or self.t_hi is None:
            return None
        return self.bound * (1.0 + self.slack) - self.t_hi


@dataclass(frozen=True)
class IntegralCheck:
    """Boundedness proxy for I(t) = integral of 1/(1-u)."""

    max_I: float
    applicable: bool
    passed: bool
    growth: Optional[float]


@dataclass(frozen=True)
class ConvergenceResult:
    """Touchdown brackets across grid refinements and the observed order."""

    rows: Tuple[Tuple[int, float, float, float, float], ...]  # (M, h, T_lo, T_hi, radius)
    orders: Tuple[float, ...]

    @property
    def order(self) -> float:
        return self.orders[-1]


def profile_tolerance(v: RadialField) -> float:
    """5 h^2 * max |centered second difference| of the field."""
    u = v.values
    h = v.grid.h
    d2 = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / h**2
    return 5.0 * h**2 * float(np.abs(d2).max())


def _window_mask(g, window: Optional[Tuple[float, float]]):
    lo, hi = window if window is not None else (2.0 * g.h, g.R / 2.0)
    return (g.r >= lo - 1e-12 * g.R) & (g.r <= hi + 1e-12 * g.R)


def check_profile_lower_bound(
    v: RadialField,
    exponent: float,
    C: float,
    window: Optional[Tuple[float, float]] = None,
) -> Tuple[bool, float]:
    """Does the gap profile satisfy v(r) >= C * r^exponent on the window?

    ``v`` is a snapshot of the gap 1 - u.  Returns (pass, margin) where
    margin = min over the window of v - C*r^exponent and the pass allows the
    resolution tolerance profile_tolerance(v).
    """
    mask = _window_mask(v.grid, window)
    r = v.grid.r[mask]
    margin = float((v.values[mask] - C * r**exponent).min())
    return margin >= -profile_tolerance(v), margin


def fit_profile_exponent(
    v: RadialField, window: Tuple[float, float]
) -> ProfileFit:
    """Least-squares slope of log v against log r over the window nodes."""
    mask = _window_mask(v.grid, window)
    r = v.grid.r[mask]
    vals = v.values[mask]
    if r.size < 8:
        raise ValueError(f"window too narrow: {r.size} nodes, need at least 8")
    if np.any(vals <= 0.0):
        raise ValueError("profile must be positive on the fit window")
    slope, intercept = np.polyfit(np.log(r), np.log(vals), 1)
    return ProfileFit(
        window=window,
        exponent=float(slope),
        coefficient=float(math.exp(intercept)),
        r=r,
        v=vals,
    )


def _radial_derivative(vals: np.ndarray, h: float) -> np.ndarray:
    # centered interior, one-sided second order at both ends
    d = np.empty_like(vals)
    d[1:-1] = (vals[2:] - vals[:-2]) / (2.0 * h)
    d[0] = (-3.0 * vals[0] + 4.0 * vals[1] - vals[2]) / (2.0 * h)
    d[-1] = (3.0 * vals[-1] - 4.0 * vals[-2] + vals[-3]) / (2.0 * h)
    return d


def check_qtilde_nonneg(
    snapshots: Sequence[Tuple[float, RadialField]],
    beta: float,
    epsilon: float,
) -> TransformDiagnostic:
    """Evaluate the flux diagnostic q - epsilon*r^n >= 0 on recorded snapshots.

    For each snapshot of u the transform w = (1-u)^beta is differentiated by
    centered differences (one-sided closures at r = 0 and r = R), q is
    r^(n-1) w_r with q(0) pinned to 0 (w is radially even, so w_r(0) = 0
    exactly), and the minimum of q - epsilon*r^n is tracked together with the
    profile floor v - (epsilon/2)^(1/beta) r^(2/beta).
    """
    if not 2.0 < beta < 3.0:
        raise ValueError(f"beta must lie strictly between 2 and 3, got {beta}")
    if not snapshots:
        raise ValueError("no snapshots to diagnose")

    qtilde_min = math.inf
    profile_margin = math.inf
    q_abs_max = 0.0
    profile_tol = 0.0
    profile_ok = True
    env_coef = (epsilon / 2.0) ** (1.0 / beta)

    for _, u_field in snapshots:
        g = u_field.grid
        v = 1.0 - u_field.values
        w = v**beta
        w_r = _radial_derivative(w, g.h)
        q = g.r ** (g.n - 1) * w_r
        q[0] = 0.0
        qtilde = q - epsilon * g.r**g.n
        qtilde_min = min(qtilde_min, float(qtilde.min()))
        q_abs_max = max(q_abs_max, float(np.abs(q).max()))

        margin = float((v - env_coef * g.r ** (2.0 / beta)).min())
        tol = profile_tolerance(RadialField(g, v))
        profile_margin = min(profile_margin, margin)
        profile_tol = max(profile_tol, tol)
        if margin < -tol:
            profile_ok = False

    return TransformDiagnostic(
        beta=beta,
        epsilon=epsilon,
        qtilde_min=qtilde_min,
        profile_margin=profile_margin,
        q_abs_max=q_abs_max,
        qtilde_tol=QTILDE_REL_TOL * q_abs_max,
        profile_tol=profile_tol,
        profile_ok=profile_ok,
    )


def estimate_c2(trace: Sequence[TraceRecord], R: float) -> float:
    """Running floor of the boundary gap slope: min over the trace of v_r(R,t)/R.

    A positive value certifies the discrete boundary-flux lower bound the
    power-profile certificate needs; a nonpositive value means the bound was
    not observed and the certification pipeline must abort.
    """
    if not trace:
        raise ValueError("empty trace")
    return min(rec.boundary_flux for rec in trace) / R


def run_lockstep(
    p1: ProblemParams,
    p2: ProblemParams,
    M: int,
    ctl: Optional[StepControl] = None,
):
    """Advance two runs with a synchronized dt sequence and track ordering.

    Both states take the pointwise min of their controllers' step choices; if
    either step overshoots the touchdown band, the common dt is halved and
    both retry, so the pair stays on identical time levels.  Stops when
    either run enters the touchdown band or t_max is reached.  Returns
    (max_violation of u1 <= u2, traces of both runs, final time, steps).
    """
    if (p1.n, p1.R) != (p2.n, p2.R):
        raise ValueError("lockstep runs need identical geometry")
    ctl = ctl or StepControl()
    grid = build_grid(p1.n, p1.R, M)
    overshoot_gap = ctl.quench_tol / 10.0

    def start(p):
        u0 = np.asarray(p.initial.profile(grid.r, p.R), dtype=float)
        u0[-1] = 0.0
        return _make_state(grid, 0.0, u0, p.chi)

    s1, s2 = start(p1), start(p2)
    a_min1, a_min2 = s1.A, s2.A
    trace1 = [_lock_record(0, s1, 0.0, grid.h, a_min1)]
    trace2 = [_lock_record(0, s2, 0.0, grid.h, a_min2)]
    max_violation = float((s1.u.values - s2.u.values).max())
    step = 0

    while True:
        remaining = ctl.t_max - s1.t
        if remaining <= 1e-15 * ctl.t_max or step >= ctl.max_steps:
            break
        dt = min(
            ctl.dt_max,
            *_dt_caps(s1, ctl, p1.lam),
            *_dt_caps(s2, ctl, p2.lam),
            remaining,
        )
        for _ in range(60):
            try:
                n1 = step_imex(s1, dt, p1, overshoot_gap=overshoot_gap)
                n2 = step_imex(s2, dt, p2, overshoot_gap=overshoot_gap)
                break
            except OvershootError:
                dt *= 0.5
        else:
            raise RuntimeError("lockstep bisection failed")
        step += 1
        s1, s2 = n1, n2
        a_min1 = min(a_min1, s1.A)
        a_min2 = min(a_min2, s2.A)
        trace1.append(_lock_record(step, s1, dt, grid.h, a_min1))
        trace2.append(_lock_record(step, s2, dt, grid.h, a_min2))
        max_violation = max(max_violation, float((s1.u.values - s2.u.values).max()))
        if (
            detect_quench(s1, ctl.quench_tol) is not None
            or detect_quench(s2, ctl.quench_tol) is not None
        ):
            break

    return max(max_violation, 0.0), trace1, trace2, s1.t, step


def _lock_record(step, s, dt, h, a_min) -> TraceRecord:
    return TraceRecord(
        step, s.t, dt, s.sup_u, s.gap, s.A, s.I,
        _boundary_flux(s.u.values, h), a_min, math.nan, math.nan,
    )


def check_comparison(
    p1: ProblemParams,
    p2: ProblemParams,
    M: int,
    ctl: Optional[StepControl] = None,
    tolerance: float = COMPARISON_TOL,
) -> ComparisonResult:
    """Ordering check: initial data u0_1 <= u0_2 should give u1 <= u2 throughout.

    Both runs share (n, R, lam, chi) and the synchronized dt sequence.  The
    result reports max over all steps and nodes of (u1 - u2)+; for swapped
    (unordered) initial data this simply measures how badly ordering fails.
    """
    if (p1.n, p1.R, p1.lam, p1.chi) != (p2.n, p2.R, p2.lam, p2.chi):
        raise ValueError("comparison runs need identical (n, R, lam, chi)")
    grid = build_grid(p1.n, p1.R, M)
    ordered = bool(
        np.all(
            p1.initial.profile(grid.r, p1.R) <= p2.initial.profile(grid.r, p2.R) + 1e-15
        )
    )
    violation, _, _, t_end, steps = run_lockstep(p1, p2, M, ctl)
    return ComparisonResult(
        max_violation=violation,
        tolerance=tolerance,
        applicable=ordered,
        t_end=t_end,
        steps=steps,
    )


def check_supersolution(
    report: QuenchReport,
    p: ProblemParams,
    delta1: Optional[float] = None,
) -> ComparisonResult:
    """Barrier dominance: the gap v = 1 - u must stay below psi everywhere.

    psi is built from the observed floor delta1 (default: the run's
    delta1_hat, the tightest admissible choice) and the check covers all
    snapshots taken before the barrier's own touchdown time 1/(lam*delta1*c0).
    Not applicable when lam <= 2n/(delta1*R^2).
    """
    d1 = report.delta1_hat if delta1 is None else delta1
    if p.lam * d1 * p.R**2 <= 2.0 * p.n:
        return ComparisonResult(math.nan, 0.0, applicable=False)
    c0 = c0_of(p.lam, d1, p.n, p.R)
    t_upper = 1.0 / (p.lam * d1 * c0)

    max_violation = 0.0
    tol = 0.0
    for t, u_field in report.snapshots:
        if t >= t_upper:
            continue
        v = 1.0 - u_field.values
        psi = supersolution_psi(u_field.grid.r, t, p.lam, d1, c0, p.R)
        max_violation = max(max_violation, float((v - psi).max()))
        tol = max(tol, profile_tolerance(RadialField(u_field.grid, v)))
    return ComparisonResult(max_violation=max_violation, tolerance=tol)


def verify_quench_time_bound(
    report: QuenchReport,
    p: ProblemParams,
    delta1: Optional[float] = None,
    slack: float = 1e-2,
) -> BoundCheck:
    """Is the observed touchdown bracket inside the closed-form upper bound?

    Uses delta1 = the run's observed floor of A(t) by default (the tightest
    admissible bound).  Applicable only to runs that touched down with
    lam > 2n/(delta1*R^2); passes when T_hi <= bound * (1 + slack), the slack
    absorbing the bracket width and the discretization of delta1.
    """
    d1 = report.delta1_hat if delta1 is None else delta1
    if not report.quenched:
        return BoundCheck(False, False, None, d1, report.T_hi, slack)
    bound = quench_time_upper_bound(p.lam, d1, p.n, p.R)
    if bound is None:
        return BoundCheck(False, False, None, d1, report.T_hi, slack)
    passed = report.T_hi <= bound * (1.0 + slack)
    return BoundCheck(True, passed, bound, d1, report.T_hi, slack)


def check_integral_bounded(
    report: QuenchReport,
    trace: Sequence[TraceRecord],
    n: int,
) -> IntegralCheck:
    """Boundedness proxy for I(t) within one run.

    Compares the running max of I up to the last two snapshot times; growth
    below 10% is taken as "bounded".  The underlying statement only holds in
    dimension n >= 3, so for n < 3 the check is informational (applicable
    False, max_I still reported).
    """
    max_I = max(rec.I for rec in trace)
    times = [t for t, _ in report.snapshots]
    if len(times) < 2:
        return IntegralCheck(max_I, applicable=False, passed=True, growth=None)
    t_prev, t_last = times[-2], times[-1]
    prev = max(rec.I for rec in trace if rec.t <= t_prev)
    last = max(rec.I for rec in trace if rec.t <= t_last)
    growth = last / prev - 1.0
    if n < 3:
        return IntegralCheck(max_I, applicable=False, passed=True, growth=growth)
    return IntegralCheck(
        max_I,
        applicable=True,
        passed=bool(math.isfinite(max_I) and growth < 0.10),
        growth=growth,
    )


def convergence_study(
    p: ProblemParams,
    M_list: Sequence[int],
    ctl: Optional[StepControl] = None,
) -> ConvergenceResult:
    """Repeat a touchdown run over grid refinements and report the order.

    The observed order between consecutive refinements is
    log(|T(M_k) - T(M_{k+1})| / |T(M_{k+1}) - T(M_{k+2})|) / log(h_k/h_{k+1}),
    evaluated on the touchdown bracket tops T_hi.  Aborts if any run fails
    to touch down or if consecutive brackets coincide (order undefined).
    """
    M_list = [int(M) for M in M_list]
    if len(M_list) < 3:
        raise ValueError(f"need at least 3 grid sizes, got {len(M_list)}")
    if any(b <= a for a, b in zip(M_list, M_list[1:])):
        raise ValueError("grid sizes must be strictly increasing")

    rows = []
    for M in M_list:
        report, _ = run_to_quench(p, M, ctl)
        if not report.quenched:
            raise RuntimeError(f"run at M={M} did not touch down; study aborted")
        h = p.R / (M - 1)
        rows.append((M, h, report.T_lo, report.T_hi, report.quench_radius))

    orders = []
    for k in range(len(rows) - 2):
        d0 = rows[k][3] - rows[k + 1][3]
        d1 = rows[k + 1][3] - rows[k + 2][3]
        if d0 == 0.0 or d1 == 0.0:
            raise ValueError("zero touchdown-time difference; order undefined")
        rho = rows[k][1] / rows[k + 1][1]
        orders.append(math.log(abs(d0 / d1)) / math.log(rho))

    return ConvergenceResult(rows=tuple(rows), orders=tuple(orders))
