"""Time integrator: stepping, touchdown detection, runs and their invariants."""

import math

import numpy as np
import pytest

from memsquench.domain import InitialData, ProblemParams, ball_volume
from memsquench.grid import RadialField, build_grid
from memsquench.solver import (
    OvershootError,
    SolutionState,
    StepControl,
    TouchdownError,
    choose_dt,
    detect_quench,
    nonlocal_factor,
    rhs_eval,
    run_to_quench,
    step_imex,
    trace_csv_text,
)


def make_state(p, M, profile=None):
    g = build_grid(p.n, p.R, M)
    u = np.zeros(M) if profile is None else profile(g.r)
    field = RadialField(g, u)
    A, I = nonlocal_factor(field, p.chi)
    return SolutionState(t=0.0, u=field, A=A, I=I)


def flat_problem(lam=200.0, chi=0.1, n=1):
    return ProblemParams(n=n, R=1.0, lam=lam, chi=chi, initial=InitialData.zero())


def euler_oracle(p, M, tau_q=1e-3, safety=0.2):
    """Independent coarse explicit-Euler integrator for cross-checks."""
    n, R, lam, chi = p.n, p.R, p.lam, p.chi
    h = R / (M - 1)
    r = np.linspace(0.0, R, M)
    w = np.full(M, h)
    w[0] = w[-1] = h / 2
    w *= 2.0 * math.pi ** (n / 2) / math.gamma(n / 2) * r ** (n - 1)
    u = p.initial.profile(r, R).astype(float)
    t = 0.0
    while True:
        I = float(w @ (1.0 / (1.0 - u)))
        A = (1.0 + chi * I) ** -2
        lap = np.zeros(M)
        lap[0] = n * 2.0 * (u[1] - u[0]) / h**2
        lap[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / h**2 + (n - 1) / r[1:-1] * (
            u[2:] - u[:-2]
        ) / (2 * h)
        gap = 1.0 - u.max()
        dt = min(safety * h**2 / (2 * n), safety * gap**3 / (2 * lam * A))
        u[:-1] += dt * (lap[:-1] + lam * A / (1.0 - u[:-1]) ** 2)
        u[-1] = 0.0
        t += dt
        if u.max() >= 1.0 - tau_q:
            return t, u


class TestNonlocalFactor:
    def test_flat_zero_no_coupling(self):
        A, I = nonlocal_factor(make_state(flat_problem(chi=0.0), 64).u, 0.0)
        assert A == 1.0

    def test_flat_zero_unit_coupling_n1(self):
        s = make_state(flat_problem(chi=1.0), 101)
        assert s.I == pytest.approx(2.0, rel=1e-13)
        assert s.A == pytest.approx(1.0 / 9.0, rel=1e-13)

    def test_flat_zero_unit_coupling_n2(self):
        p = ProblemParams(n=2, R=1.0, lam=1.0, chi=1.0, initial=InitialData.zero())
        s = make_state(p, 101)
        assert s.A == pytest.approx((1.0 + math.pi) ** -2, rel=1e-12)
        assert s.A == pytest.approx(0.05830, rel=1e-3)

    def test_touched_down_signal(self):
        g = build_grid(1, 1.0, 16)
        u = np.zeros(16)
        u[3] = 1.0
        with pytest.raises(TouchdownError):
            nonlocal_factor(RadialField(g, u), 0.5)


class TestRhsEval:
    def test_flat_zero_chi0_gives_lam(self):
        p = flat_problem(lam=5.0, chi=0.0)
        out = rhs_eval(make_state(p, 64), p).values
        assert np.allclose(out[:-1], 5.0, rtol=1e-13)
        assert out[-1] == 0.0

    def test_flat_zero_chi1_n1(self):
        p = flat_problem(lam=9.0, chi=1.0)
        out = rhs_eval(make_state(p, 101), p).values
        assert np.allclose(out[:-1], 1.0, rtol=1e-12)


class TestChooseDt:
    def test_diffusion_only_when_lam_zero(self):
        p = flat_problem(lam=0.0)
        s = make_state(p, 101)
        ctl = StepControl(safety=0.25, dt_max=1.0)
        assert choose_dt(s, ctl, 0.0) == pytest.approx(0.25 * 0.01**2 / 2.0, rel=1e-13)

    def test_halving_h_quarters_diffusive_cap(self):
        p = flat_problem(lam=0.0)
        ctl = StepControl()
        a = choose_dt(make_state(p, 101), ctl, 0.0)
        b = choose_dt(make_state(p, 201), ctl, 0.0)
        assert a / b == pytest.approx(4.0, rel=1e-10)

    def test_source_cap_scales_cubically_in_gap(self):
        p = flat_problem(lam=1e6, chi=0.0)  # source cap dominates
        ctl = StepControl()
        dts = []
        for sup in (0.9, 0.95, 0.975):
            s = make_state(p, 101, profile=lambda r, sup=sup: sup * np.ones_like(r))
            # flat profile with boundary pinned would violate u(R)=0; build by hand
            u = np.full(101, sup)
            u[-1] = 0.0
            f = RadialField(s.u.grid, u)
            A, I = nonlocal_factor(f, p.chi)
            dts.append(choose_dt(SolutionState(0.0, f, A, I), ctl, p.lam))
        assert dts[0] / dts[1] == pytest.approx(8.0, rel=1e-10)
        assert dts[1] / dts[2] == pytest.approx(8.0, rel=1e-10)

    def test_dt_max_respected(self):
        p = flat_problem(lam=0.0)
        ctl = StepControl(dt_max=1e-9)
        assert choose_dt(make_state(p, 101), ctl, 0.0) == 1e-9


class TestStepImex:
    def test_zero_dt_is_identity(self):
        p = flat_problem()
        s = make_state(p, 64)
        assert step_imex(s, 0.0, p) is s

    def test_one_step_from_flat_zero(self):
        # away from the boundary layer the first step is exactly dt*lam*A0
        p = flat_problem(lam=200.0, chi=0.1)
        s = make_state(p, 201)
        dt = 3.125e-6
        new = step_imex(s, dt, p)
        mid = new.u.values[: 201 // 2]
        assert np.allclose(mid, dt * p.lam * s.A, rtol=1e-12)
        assert new.t == dt
        assert new.u.values[-1] == 0.0

    def test_pure_heat_decay_is_monotone(self):
        p = ProblemParams(
            n=1, R=1.0, lam=0.0, chi=0.0, initial=InitialData.parabolic(0.4)
        )
        s = make_state(p, 101, profile=lambda r: 0.4 * (1 - r**2))
        sups = [s.sup_u]
        for _ in range(200):
            s = step_imex(s, 1e-5, p)
            sups.append(s.sup_u)
        assert all(b < a for a, b in zip(sups, sups[1:]))

    def test_overshoot_signal(self):
        # a huge step from a nearly touched-down state jumps past the band
        p = flat_problem(lam=500.0, chi=0.0)
        g = build_grid(1, 1.0, 64)
        u = np.full(64, 0.99)
        u[-1] = 0.0
        f = RadialField(g, u)
        A, I = nonlocal_factor(f, p.chi)
        with pytest.raises(OvershootError):
            step_imex(SolutionState(0.0, f, A, I), 1e-4, p, overshoot_gap=1e-4)


class TestDetectQuench:
    def test_threshold(self):
        p = flat_problem()
        g = build_grid(1, 1.0, 64)
        u = np.zeros(64)
        u[5] = 0.9995
        f = RadialField(g, u)
        A, I = nonlocal_factor(f, p.chi)
        s = SolutionState(0.0, f, A, I)
        r, val = detect_quench(s, 1e-3)
        assert r == pytest.approx(g.r[5])
        assert val == pytest.approx(0.9995)

    def test_below_threshold_empty(self):
        s = make_state(flat_problem(), 64, profile=lambda r: 0.5 * (1 - r**2))
        assert detect_quench(s, 1e-3) is None

    def test_tie_break_smallest_radius(self):
        p = flat_problem()
        g = build_grid(1, 1.0, 64)
        u = np.zeros(64)
        u[4] = u[9] = 0.9996
        f = RadialField(g, u)
        A, I = nonlocal_factor(f, p.chi)
        r, _ = detect_quench(SolutionState(0.0, f, A, I), 1e-3)
        assert r == pytest.approx(g.r[4])


class TestRunToQuench:
    def test_flat_scenario_quenches_and_matches_euler_oracle(self):
        p = flat_problem(lam=200.0, chi=0.1)
        rep, trace = run_to_quench(p, 201)
        assert rep.quenched
        assert rep.T_lo < rep.T_hi
        assert rep.quench_radius <= 2.0 / 200.0
        t_oracle, u_oracle = euler_oracle(p, 51)
        assert rep.T_hi == pytest.approx(t_oracle, rel=0.15)
        # both integrators see the same collapsed core
        assert abs(u_oracle.max() - rep.sup_u_final) < 5e-3

    def test_lam_zero_never_quenches(self):
        p = ProblemParams(
            n=1, R=1.0, lam=0.0, chi=0.5, initial=InitialData.parabolic(0.3)
        )
        rep, trace = run_to_quench(p, 51, StepControl(t_max=0.5))
        assert not rep.quenched
        sups = [rec.sup_u for rec in trace]
        assert all(b <= a for a, b in zip(sups, sups[1:]))

    def test_steady_state_reached(self):
        p = ProblemParams(n=1, R=1.0, lam=0.1, chi=1.0, initial=InitialData.zero())
        rep, trace = run_to_quench(p, 51, StepControl(t_max=50.0))
        assert not rep.quenched
        assert rep.steady_residual is not None
        assert rep.steady_residual < 1e-8
        assert trace[-1].t < 50.0

    def test_trace_invariants(self):
        p = flat_problem(lam=200.0, chi=0.1)
        rep, trace = run_to_quench(p, 101)
        a_cap = (1.0 + p.chi * ball_volume(p.n, p.R)) ** -2
        assert all(rec.gap > 0 for rec in trace)
        assert all(rec.A <= a_cap * (1 + 1e-12) for rec in trace)
        # (t + dt) - t can exceed dt by an ulp of t
        assert rep.T_hi - rep.T_lo <= rep.last_dt + 2 * np.spacing(rep.T_hi)
        mins = [rec.A_running_min for rec in trace]
        assert all(b <= a for a, b in zip(mins, mins[1:]))
        assert mins[-1] == rep.delta1_hat
        # snapshots: initial state, gap crossings, final state
        assert rep.snapshots[0][0] == 0.0
        assert rep.snapshots[-1][0] == trace[-1].t
        for t, fld in rep.snapshots:
            assert fld.values[-1] == 0.0
            assert fld.values.min() >= 0.0

    def test_determinism_bitwise(self):
        p = flat_problem(lam=200.0, chi=0.1)
        _, tr1 = run_to_quench(p, 101)
        _, tr2 = run_to_quench(p, 101)
        assert trace_csv_text(tr1) == trace_csv_text(tr2)

    def test_monotone_data_keeps_origin_argmax(self):
        p = ProblemParams(
            n=1, R=1.0, lam=40.0, chi=0.1, initial=InitialData.parabolic(0.5)
        )
        rep, _ = run_to_quench(p, 101)
        assert rep.quenched
        assert rep.quench_radius == 0.0
        for _, fld in rep.snapshots:
            assert int(np.argmax(fld.values)) == 0

    def test_rejects_bad_initial_profiles(self):
        p = ProblemParams(
            n=1, R=1.0, lam=1.0, chi=0.0,
            initial=InitialData.sampled([(0.0, 0.2), (0.4, 0.1), (0.7, 0.2), (1.0, 0.1)]),
        )
        with pytest.raises(ValueError, match="vanish"):
            run_to_quench(p, 16)

    def test_trace_csv_layout(self):
        p = flat_problem(lam=200.0, chi=0.1)
        _, trace = run_to_quench(p, 101)
        lines = trace_csv_text(trace).splitlines()
        assert lines[0] == "step,t,dt,sup_u,gap,A,I,boundary_flux,A_running_min"
        assert len(lines) == len(trace) + 1
        first = lines[1].split(",")
        assert first[0] == "0"
        assert float(first[2]) == 0.0  # dt of the initial record
