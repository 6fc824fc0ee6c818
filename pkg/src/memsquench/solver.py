"""Time integration of the touchdown model in radial symmetry.

The scheme is IMEX: diffusion is treated implicitly (backward Euler on the
radial Laplacian, a strictly diagonally dominant tridiagonal solve with the
boundary value u(R) = 0 eliminated) while the source lam*A/(1-u)^2 and the
capacitance factor A are frozen at the step start.  The step size is capped
by

    sigma * h^2 / (2n)            the grid's diffusive time scale (an
                                  accuracy cap; the implicit solve needs none),
    sigma * g^3 / (2*lam*A)       the inverse Lipschitz scale of the source,

where g = 1 - sup u, so steps shrink cubically as touchdown approaches and
each step covers a fixed fraction of the remaining lifetime.  Touchdown is
declared when sup u >= 1 - quench_tol; the continuum touchdown time is then
bracketed by the last two step times rather than extrapolated.  A step that
would jump past gap quench_tol/10 raises OvershootError so the driver can
bisect dt and resolve the crossing.

Runs are strictly sequential (each step depends on the last); independent
runs may execute concurrently as long as each owns its state and trace.
There is no randomness anywhere, so identical inputs reproduce identical
traces bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import lapack

from .domain import ProblemParams, ball_volume
from .grid import RadialField, RadialGrid, build_grid

__all__ = [
    "StepControl",
    "SolutionState",
    "TraceRecord",
    "QuenchReport",
    "TouchdownError",
    "OvershootError",
    "NumericsError",
    "nonlocal_factor",
    "rhs_eval",
    "residual_norm",
    "choose_dt",
    "step_imex",
    "detect_quench",
    "run_to_quench",
    "trace_csv_text",
    "DEFAULT_SNAPSHOT_GAPS",
]

TRACE_HEADER = "step,t,dt,sup_u,gap,A,I,boundary_flux,A_running_min"

DEFAULT_SNAPSHOT_GAPS = (0.5, 0.25, 0.1, 0.05, 0.02, 0.01)

#: tolerance for the discrete "profile stays non-increasing" invariant
MONOTONE_TOL = 1e-12

#: nodes this close to the peak count as tied for the touchdown location;
#: far above source-amplified rounding noise, far below any resolvable
#: profile variation, so flat-core collapses report the smallest tied radius
QUENCH_TIE_TOL = 1e-9

_MAX_BISECT = 60


class TouchdownError(RuntimeError):
    """The deflection reached 1 somewhere; the model has ceased to exist."""


class OvershootError(RuntimeError):
    """A step jumped past the touchdown detection band; bisect dt and retry."""


class NumericsError(RuntimeError):
    """An invariant of the scheme failed; aborting with diagnostics."""


@dataclass(frozen=True)
class StepControl:
    """Step-size and stopping policy.

    safety      factor sigma in (0, 1] applied to both step caps
    dt_max      hard cap on a single step
    quench_tol  tau_q: touchdown declared at sup u >= 1 - tau_q
    t_max       wall on simulated time (run reports "not quenched" there)
    steady_tol  residual threshold for an early stop at a steady state
                (None disables the check)
    max_steps   guard against runaway loops
    """

    safety: float = 0.25
    dt_max: float = 1.0
    quench_tol: float = 1e-3
    t_max: float = 10.0
    steady_tol: Optional[float] = 1e-8
    max_steps: int = 10_000_000

    def __post_init__(self):
        if not 0.0 < self.safety <= 1.0:
            raise ValueError(f"safety factor must lie in (0, 1], got {self.safety}")
        if self.dt_max <= 0.0 or self.t_max <= 0.0:
            raise ValueError("dt_max and t_max must be positive")
        if not 0.0 < self.quench_tol < 1.0:
            raise ValueError(f"quench_tol must lie in (0, 1), got {self.quench_tol}")


@dataclass(frozen=True)
class SolutionState:
    """The evolving object: time, deflection field, cached A(t) and I(t)."""

    t: float
    u: RadialField
    A: float
    I: float

    @property
    def sup_u(self) -> float:
        return float(self.u.values.max())

    @property
    def gap(self) -> float:
        return 1.0 - self.sup_u


@dataclass(frozen=True)
class TraceRecord:
    """Monitored quantities of one accepted step.

    ``boundary_flux`` is the outward slope v_r(R, t) of the gap v = 1 - u;
    ``dt_cap_diffusion``/``dt_cap_source`` record which scale limited the
    step.  Only the columns in TRACE_HEADER are written to CSV.
    """

    step: int
    t: float
    dt: float
    sup_u: float
    gap: float
    A: float
    I: float
    boundary_flux: float
    A_running_min: float
    dt_cap_diffusion: float
    dt_cap_source: float


@dataclass
class QuenchReport:
    """Outcome of a run: touchdown bracket, location, and profile snapshots.

    quench_radius is the radius of the (first, i.e. smallest-radius) argmax
    of the final deflection; delta1_hat the smallest capacitance factor seen
    along the run; steady_residual the final max-norm of the right-hand side
    for runs that did not touch down (None otherwise).
    """

    quenched: bool
    T_lo: Optional[float]
    T_hi: Optional[float]
    quench_radius: float
    delta1_hat: float
    snapshots: List[Tuple[float, RadialField]]
    steady_residual: Optional[float]
    M: int
    last_dt: float
    sup_u_final: float


def nonlocal_factor(u: RadialField, chi: float) -> Tuple[float, float]:
    """Capacitance factor A = (1 + chi*I)^-2 with I = integral of 1/(1-u).

    Raises TouchdownError if any node has u >= 1.
    """
    vals = u.values
    if np.any(vals >= 1.0):
        raise TouchdownError("touched down: u >= 1 at a node")
    I = float(u.grid.quad_w @ (1.0 / (1.0 - vals)))
    return (1.0 + chi * I) ** -2.0, I


def _make_state(grid: RadialGrid, t: float, u: np.ndarray, chi: float) -> SolutionState:
    field = RadialField(grid, u)
    A, I = nonlocal_factor(field, chi)
    return SolutionState(t=t, u=field, A=A, I=I)


def rhs_eval(s: SolutionState, p: ProblemParams) -> RadialField:
    """Right-hand side lap u + lam*A/(1-u)^2 with the Dirichlet row zeroed.

    The boundary value is pinned to 0, so its rate is 0 by definition; at a
    steady state the max-norm of this field is the residual.
    """
    g = s.u.grid
    u = s.u.values
    out = np.empty_like(u)
    out[0] = g.lap_diag[0] * u[0] + g.lap_upper[0] * u[1]
    out[1:-1] = (
        g.lap_lower[1:] * u[:-2]
        + g.lap_diag[1:] * u[1:-1]
        + g.lap_upper[1:] * u[2:]
    )
    out[:-1] += p.lam * s.A / (1.0 - u[:-1]) ** 2
    out[-1] = 0.0
    return RadialField(g, out)


def residual_norm(s: SolutionState, p: ProblemParams) -> float:
    return float(np.abs(rhs_eval(s, p).values).max())


def _dt_caps(s: SolutionState, ctl: StepControl, lam: float) -> Tuple[float, float]:
    g = s.gap
    if g <= 0.0:
        raise NumericsError(f"gap must be positive to choose a step, got {g}")
    h, n = s.u.grid.h, s.u.grid.n
    cap_diff = ctl.safety * h**2 / (2.0 * n)
    drive = 2.0 * lam * s.A
    cap_src = math.inf if drive == 0.0 else ctl.safety * g**3 / drive
    return cap_diff, cap_src


def choose_dt(s: SolutionState, ctl: StepControl, lam: float) -> float:
    """dt = min(dt_max, sigma*h^2/(2n), sigma*g^3/(2*lam*A))."""
    cap_diff, cap_src = _dt_caps(s, ctl, lam)
    return min(ctl.dt_max, cap_diff, cap_src)


def _tridiag_solve(dl, d, du, b) -> np.ndarray:
    _, _, _, x, info = lapack.dgtsv(dl, d, du, b)
    if info != 0:
        raise NumericsError(f"tridiagonal solve failed (dgtsv info={info})")
    return x


def step_imex(
    s: SolutionState,
    dt: float,
    p: ProblemParams,
    overshoot_gap: float = 1e-4,
) -> SolutionState:
    """Advance one step: (Id - dt*lap_h) u_new = u_old + dt*lam*A/(1-u_old)^2.

    A is lagged at the step start, u_new(R) = 0 is eliminated from the
    system, and the matrix is an M-matrix (strictly diagonally dominant with
    nonpositive off-diagonal entries for n <= 3), so nonnegative data stay
    nonnegative.  Raises OvershootError when the step lands past
    1 - overshoot_gap so the driver can bisect dt.
    """
    if dt < 0.0:
        raise ValueError(f"dt must be nonnegative, got {dt}")
    g = s.u.grid
    u = s.u.values
    if dt == 0.0:
        return s

    # solve for the increment rather than the new state: algebraically the
    # same backward-Euler step, but where the profile is flat the increment
    # is flat too, so no differential rounding noise is seeded there (the
    # stiff source amplifies any such noise by (g_then/g_now)^2 over a run)
    lap_u = np.empty(g.M - 1)
    lap_u[0] = g.lap_diag[0] * u[0] + g.lap_upper[0] * u[1]
    lap_u[1:] = (
        g.lap_lower[1:] * u[:-2]
        + g.lap_diag[1:] * u[1:-1]
        + g.lap_upper[1:] * u[2:]
    )
    rhs = dt * (lap_u + p.lam * s.A / (1.0 - u[:-1]) ** 2)
    dl = -dt * g.lap_lower[1:]
    d = 1.0 - dt * g.lap_diag
    du = -dt * g.lap_upper[:-1]
    delta = _tridiag_solve(dl, d, du, rhs)

    u_new = np.empty_like(u)
    u_new[:-1] = u[:-1] + delta
    u_new[-1] = 0.0
    if float(u_new.max()) >= 1.0 - overshoot_gap:
        raise OvershootError(
            f"step to t={s.t + dt} lands at sup u = {u_new.max():.6f}"
        )
    return _make_state(g, s.t + dt, u_new, p.chi)


def _tied_argmax(vals: np.ndarray) -> int:
    # smallest index among all nodes within QUENCH_TIE_TOL of the peak
    sup = float(vals.max())
    return int(np.nonzero(vals >= sup - QUENCH_TIE_TOL)[0][0])


def detect_quench(s: SolutionState, tau_q: float) -> Optional[Tuple[float, float]]:
    """Return (radius, value) of the peak node once sup u >= 1 - tau_q.

    Nodes within QUENCH_TIE_TOL of the peak count as tied and the smallest
    tied radius is reported, so a core that collapses uniformly (flat to
    rounding noise) reports the origin rather than an arbitrary flat node.
    """
    vals = s.u.values
    if float(vals.max()) >= 1.0 - tau_q:
        k = _tied_argmax(vals)
        return float(s.u.grid.r[k]), float(vals[k])
    return None


def _boundary_flux(u: np.ndarray, h: float) -> float:
    # v_r(R) for v = 1 - u, one-sided second order
    return float(-(3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * h))


def _enforce_invariants(
    s: SolutionState, monotone: bool, a_cap: float, quench_tol: float
) -> None:
    u = s.u.values
    if u[-1] != 0.0:
        raise NumericsError(f"boundary value drifted off zero: u(R) = {u[-1]!r}")
    if float(u.min()) < 0.0:
        raise NumericsError(f"positivity lost: min u = {u.min()!r} at t = {s.t}")
    # the stiff source amplifies node-to-node rounding noise by (g1/g2)^2 as
    # the gap shrinks from g1 to g2, so inside the detection band (where the
    # discrete solution's fidelity is unquantified anyway) the monotonicity
    # of the profile is not enforced at machine tolerance
    if (
        monotone
        and s.gap >= 10.0 * quench_tol
        and float(np.diff(u).max()) > MONOTONE_TOL
    ):
        raise NumericsError(
            f"monotone profile lost at t = {s.t}: max increase {np.diff(u).max():.3e}"
        )
    if s.A > a_cap * (1.0 + 1e-12):
        raise NumericsError(
            f"capacitance factor exceeded its ceiling: A = {s.A!r} > {a_cap!r}"
        )


def run_to_quench(
    p: ProblemParams,
    M: int,
    ctl: Optional[StepControl] = None,
    snapshot_gaps=DEFAULT_SNAPSHOT_GAPS,
) -> Tuple[QuenchReport, List[TraceRecord]]:
    """Integrate from u0 until touchdown, a steady state, or t_max.

    Returns the report and the full per-step trace.  Snapshots of the
    deflection are kept at t = 0, at the first crossing of each gap threshold
    in ``snapshot_gaps``, and at the final state.  Invariants (positivity,
    exact boundary zero, monotone-profile preservation for monotone u0, and
    the ceiling A <= (1 + chi*|B_R|)^-2) are enforced on every accepted step.
    """
    ctl = ctl or StepControl()
    grid = build_grid(p.n, p.R, M)
    u0 = np.asarray(p.initial.profile(grid.r, p.R), dtype=float)
    if float(u0.min()) < 0.0:
        raise ValueError("initial deflection must be nonnegative for a run")
    if float(u0.max()) >= 1.0 - ctl.quench_tol:
        raise ValueError("initial deflection already inside the touchdown band")
    if abs(float(u0[-1])) > 1e-12:
        raise ValueError("initial deflection must vanish at r = R")
    u0[-1] = 0.0

    monotone = bool(float(np.diff(u0).max(initial=-np.inf)) <= MONOTONE_TOL)
    a_cap = (1.0 + p.chi * ball_volume(p.n, p.R)) ** -2.0
    overshoot_gap = ctl.quench_tol / 10.0

    state = _make_state(grid, 0.0, u0, p.chi)
    a_min = state.A
    cap_d0, cap_s0 = _dt_caps(state, ctl, p.lam)
    trace: List[TraceRecord] = [
        TraceRecord(
            0, 0.0, 0.0, state.sup_u, state.gap, state.A, state.I,
            _boundary_flux(u0, grid.h), a_min, cap_d0, cap_s0,
        )
    ]
    snapshots: List[Tuple[float, RadialField]] = [(0.0, state.u)]
    pending = sorted(set(snapshot_gaps), reverse=True)
    while pending and state.gap <= pending[0]:
        pending.pop(0)

    quenched = False
    T_lo = T_hi = None
    steady_residual: Optional[float] = None
    step = 0

    while True:
        remaining = ctl.t_max - state.t
        if remaining <= 1e-15 * ctl.t_max:
            break
        if step >= ctl.max_steps:
            raise NumericsError(f"step budget exhausted at t = {state.t}")

        cap_d, cap_s = _dt_caps(state, ctl, p.lam)
        dt = min(ctl.dt_max, cap_d, cap_s, remaining)
        new = None
        for _ in range(_MAX_BISECT):
            try:
                new = step_imex(state, dt, p, overshoot_gap=overshoot_gap)
                break
            except OvershootError:
                dt *= 0.5
        if new is None:
            raise NumericsError(
                f"could not resolve the touchdown crossing near t = {state.t}"
            )

        step += 1
        _enforce_invariants(new, monotone, a_cap, ctl.quench_tol)
        a_min = min(a_min, new.A)
        trace.append(
            TraceRecord(
                step, new.t, dt, new.sup_u, new.gap, new.A, new.I,
                _boundary_flux(new.u.values, grid.h), a_min, cap_d, cap_s,
            )
        )

        crossed = False
        while pending and new.gap <= pending[0]:
            pending.pop(0)
            crossed = True
        if crossed:
            snapshots.append((new.t, new.u))

        if detect_quench(new, ctl.quench_tol) is not None:
            quenched = True
            T_lo, T_hi = state.t, new.t
            state = new
            break
        state = new

        if ctl.steady_tol is not None:
            res = residual_norm(state, p)
            if res < ctl.steady_tol:
                steady_residual = res
                break

    if snapshots[-1][0] != state.t:
        snapshots.append((state.t, state.u))
    if not quenched and steady_residual is None:
        steady_residual = residual_norm(state, p)

    k = _tied_argmax(state.u.values)
    report = QuenchReport(
        quenched=quenched,
        T_lo=T_lo,
        T_hi=T_hi,
        quench_radius=float(grid.r[k]),
        delta1_hat=a_min,
        snapshots=snapshots,
        steady_residual=steady_residual,
        M=M,
        last_dt=trace[-1].dt,
        sup_u_final=state.sup_u,
    )
    return report, trace


def trace_csv_text(trace: List[TraceRecord]) -> str:
    """Render a trace as CSV (17 significant digits per float)."""
    lines = [TRACE_HEADER]
    for rec in trace:
        lines.append(
            f"{rec.step},{rec.t:.17g},{rec.dt:.17g},{rec.sup_u:.17g},"
            f"{rec.gap:.17g},{rec.A:.17g},{rec.I:.17g},"
            f"{rec.boundary_flux:.17g},{rec.A_running_min:.17g}"
        )
    return "\n".join(lines) + "\n"
