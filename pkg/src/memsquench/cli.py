"""Command line entry point: config parsing, named scenarios, output emission.

Configs are plain ``key = value`` files (one pair per line, ``#`` comments);
every parameter of this tool is scalar, so line-numbered errors beat nested
formats.  Scenarios:

    lemma7       touchdown run + time-bound and barrier-dominance checks
    theorem8     touchdown run + single-point localization, quadratic gap
                 floor, and gap-integral boundedness checks
    theorem9     pilot run -> constant pipeline (c2 -> epsilon -> delta1 ->
                 lambda0 -> lambda1) -> certified run + flux-diagnostic,
                 power-floor and time-bound checks
    comparison   two runs under a synchronized dt sequence; ordering check
    convergence  repeated touchdown runs over grid refinements
    sweep        (lam, chi) grid of runs with per-cell touchdown flag

Each scenario writes its delimited outputs (trace CSV, snapshot CSVs, a
summary CSV for sweeps), a JSON report echoing the fully resolved config,
and PNG figures next to them.  All files are written atomically (temp file
plus rename).  Exit status: 0 when every applicable check passed, 1 when a
check failed or a certification pipeline aborted, 2 for usage/config errors.
The environment variable MEMSQUENCH_OUTDIR overrides ``output_dir``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import analysis, solver
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
    unit_sphere_area,
    validate_initial_data,
)
from .grid import build_grid, write_snapshot_csv, read_snapshot_csv
from .solver import StepControl, nonlocal_factor, run_to_quench, trace_csv_text

__all__ = [
    "ConfigError",
    "ScenarioAbort",
    "RunConfig",
    "OutputBundle",
    "parse_config",
    "load_config",
    "run_scenario",
    "emit_summary",
    "bounds_table",
    "main",
]

SCENARIOS = ("lemma7", "theorem8", "theorem9", "comparison", "convergence", "sweep")
SINGLE_RUN_MODES = ("lemma7", "theorem8", "theorem9")

ENV_OUTPUT_DIR = "MEMSQUENCH_OUTDIR"

DEFAULT_SNAPSHOT_GAPS = solver.DEFAULT_SNAPSHOT_GAPS

#: profile checks start at the first snapshot at least this far into the run
PROFILE_CHECK_FROM_GAP = 0.5

SWEEP_HEADER = "lambda,chi,quenched,T_lo,T_hi,quench_radius,delta1_hat,sup_u_final"
CONVERGENCE_HEADER = "M,h,T_lo,T_hi,quench_radius"


class ConfigError(ValueError):
    """Bad config file or bad usage; maps to exit status 2."""


class ScenarioAbort(RuntimeError):
    """A certification pipeline could not proceed; maps to exit status 1."""


# key -> (converter tag, default); None default means "absent unless given"
_SCHEMA = {
    "mode": ("str", None),
    "n": ("int", None),
    "R": ("float", None),
    "lambda": ("float", None),
    "chi": ("float", None),
    "initial": ("initial", "zero"),
    "initial2": ("initial", None),
    "b": ("float", 0.0),
    "M": ("int", 201),
    "sigma": ("float", 0.25),
    "dt_max": ("float", 1.0),
    "quench_tol": ("float", 1e-3),
    "t_max": ("float", 10.0),
    "steady_tol": ("float", 1e-8),
    "snapshot_gaps": ("float_list", list(DEFAULT_SNAPSHOT_GAPS)),
    "beta": ("float", None),
    "lambda_certified": ("float", None),
    "output_dir": ("str", "out"),
    "figures": ("bool", True),
    "workers": ("int", 1),
    "lambda_min": ("float", None),
    "lambda_max": ("float", None),
    "lambda_steps": ("int", None),
    "chi_min": ("float", None),
    "chi_max": ("float", None),
    "chi_steps": ("int", None),
    "M_list": ("int_list", None),
    "c2": ("float", None),
    "epsilon": ("float", None),
    "delta1": ("float", None),
}

_REQUIRED = {
    "lemma7": ("mode", "n", "R", "lambda", "chi"),
    "theorem8": ("mode", "n", "R", "lambda", "chi"),
    "theorem9": ("mode", "n", "R", "lambda", "chi", "beta"),
    "comparison": ("mode", "n", "R", "lambda", "chi", "initial2"),
    "convergence": ("mode", "n", "R", "lambda", "chi", "M_list"),
    "sweep": (
        "mode", "n", "R",
        "lambda_min", "lambda_max", "lambda_steps",
        "chi_min", "chi_max", "chi_steps",
    ),
}


@dataclass
class RunConfig:
    """Fully resolved configuration for one invocation."""

    mode: str
    n: int = 1
    R: float = 1.0
    lam: Optional[float] = None
    chi: Optional[float] = None
    initial: InitialData = field(default_factory=InitialData.zero)
    initial2: Optional[InitialData] = None
    b: float = 0.0
    M: int = 201
    sigma: float = 0.25
    dt_max: float = 1.0
    quench_tol: float = 1e-3
    t_max: float = 10.0
    steady_tol: Optional[float] = 1e-8
    snapshot_gaps: tuple = DEFAULT_SNAPSHOT_GAPS
    beta: Optional[float] = None
    lambda_certified: Optional[float] = None
    output_dir: str = "out"
    figures: bool = True
    workers: int = 1
    lambda_min: Optional[float] = None
    lambda_max: Optional[float] = None
    lambda_steps: Optional[int] = None
    chi_min: Optional[float] = None
    chi_max: Optional[float] = None
    chi_steps: Optional[int] = None
    M_list: Optional[tuple] = None
    c2: Optional[float] = None
    epsilon: Optional[float] = None
    delta1: Optional[float] = None
    initial_spec: str = "zero"
    initial2_spec: Optional[str] = None

    def problem(self, initial: Optional[InitialData] = None) -> ProblemParams:
        if self.lam is None or self.chi is None:
            raise ConfigError("this scenario needs both 'lambda' and 'chi'")
        return ProblemParams(
            n=self.n, R=self.R, lam=self.lam, chi=self.chi,
            initial=self.initial if initial is None else initial,
        )

    def control(self) -> StepControl:
        steady = self.steady_tol if (self.steady_tol or 0.0) > 0.0 else None
        return StepControl(
            safety=self.sigma,
            dt_max=self.dt_max,
            quench_tol=self.quench_tol,
            t_max=self.t_max,
            steady_tol=steady,
        )

    def echo(self) -> dict:
        d = {
            "mode": self.mode, "n": self.n, "R": self.R,
            "lambda": self.lam, "chi": self.chi,
            "initial": self.initial_spec, "b": self.b, "M": self.M,
            "sigma": self.sigma, "dt_max": self.dt_max,
            "quench_tol": self.quench_tol, "t_max": self.t_max,
            "steady_tol": self.steady_tol,
            "snapshot_gaps": list(self.snapshot_gaps),
            "output_dir": self.output_dir, "figures": self.figures,
            "workers": self.workers,
        }
        for key in (
            "beta", "lambda_certified", "initial2_spec", "M_list",
            "lambda_min", "lambda_max", "lambda_steps",
            "chi_min", "chi_max", "chi_steps", "c2", "epsilon", "delta1",
        ):
            val = getattr(self, key)
            if val is not None:
                d[key.replace("_spec", "")] = list(val) if isinstance(val, tuple) else val
        return d


def _parse_initial(spec: str, b: float, lineno: int) -> InitialData:
    spec = spec.strip()
    if spec == "zero":
        return InitialData.zero()
    if spec.startswith("parabolic:"):
        try:
            a = float(spec.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad parabolic amplitude in {spec!r} at line {lineno}")
        if not 0.0 < a < 1.0:
            raise ConfigError(
                f"parabolic amplitude must lie in (0, 1), got {a} at line {lineno}"
            )
        return InitialData.parabolic(a)
    if spec.startswith("sampled:"):
        path = spec.split(":", 1)[1].strip()
        try:
            r, u = read_snapshot_csv(path)
        except OSError as exc:
            raise ConfigError(f"cannot read sampled profile {path!r}: {exc}")
        return InitialData.sampled(zip(r, u), b=b)
    raise ConfigError(
        f"unknown initial data {spec!r} at line {lineno} "
        "(expected zero, parabolic:<a> or sampled:<csv path>)"
    )


def _convert(key: str, raw: str, lineno: int):
    tag = _SCHEMA[key][0]
    try:
        if tag == "int":
            return int(raw)
        if tag == "float":
            return float(raw)
        if tag == "bool":
            low = raw.strip().lower()
            if low in ("1", "true", "on", "yes"):
                return True
            if low in ("0", "false", "off", "no"):
                return False
            raise ValueError(raw)
        if tag == "float_list":
            return [float(x) for x in raw.replace(",", " ").split()]
        if tag == "int_list":
            return [int(x) for x in raw.replace(",", " ").split()]
        return raw.strip()
    except ValueError:
        raise ConfigError(f"cannot parse value for '{key}' at line {lineno}: {raw!r}")


def parse_config(text: str) -> RunConfig:
    """Parse the documented key = value format into a validated RunConfig."""
    values: dict = {}
    lines: dict = {}
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value' at line {lineno}: {rawline!r}")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in _SCHEMA:
            raise ConfigError(f"unknown key '{key}' at line {lineno}")
        if key in values:
            raise ConfigError(f"duplicate key '{key}' at line {lineno}")
        values[key] = _convert(key, raw.strip(), lineno)
        lines[key] = lineno

    if "mode" not in values:
        raise ConfigError("missing required key 'mode'")
    mode = values["mode"]
    if mode not in SCENARIOS:
        raise ConfigError(
            f"unknown mode '{mode}' at line {lines['mode']} "
            f"(expected one of {', '.join(SCENARIOS)})"
        )
    for key in _REQUIRED[mode]:
        if key not in values:
            raise ConfigError(f"missing required key '{key}' for mode '{mode}'")

    def where(key):
        return f"line {lines[key]}" if key in lines else "default"

    cfg = RunConfig(mode=mode)
    b = float(values.get("b", 0.0))
    for key, (tag, default) in _SCHEMA.items():
        val = values.get(key, default)
        if val is None:
            continue
        if key == "mode":
            continue
        elif key == "lambda":
            cfg.lam = val
        elif key == "initial":
            cfg.initial_spec = val if isinstance(val, str) else "zero"
            cfg.initial = _parse_initial(cfg.initial_spec, b, lines.get(key, 0))
        elif key == "initial2":
            cfg.initial2_spec = val
            cfg.initial2 = _parse_initial(val, b, lines.get(key, 0))
        elif key == "snapshot_gaps":
            cfg.snapshot_gaps = tuple(val)
        elif key == "M_list":
            cfg.M_list = tuple(val)
        else:
            setattr(cfg, key, val)

    # range checks, each pointing at the offending line
    if cfg.n < 1:
        raise ConfigError(f"n must be a positive integer ({where('n')})")
    if cfg.R <= 0.0:
        raise ConfigError(f"R must be positive ({where('R')})")
    if cfg.lam is not None and cfg.lam < 0.0:
        raise ConfigError(f"lambda must be nonnegative ({where('lambda')})")
    if cfg.chi is not None and cfg.chi < 0.0:
        raise ConfigError(f"chi must be nonnegative ({where('chi')})")
    if cfg.M < 16:
        raise ConfigError(f"M must be at least 16 ({where('M')})")
    if not 0.0 < cfg.sigma <= 1.0:
        raise ConfigError(f"sigma must lie in (0, 1] ({where('sigma')})")
    if not 0.0 < cfg.quench_tol < 1.0:
        raise ConfigError(f"quench_tol must lie in (0, 1) ({where('quench_tol')})")
    if cfg.dt_max <= 0.0 or cfg.t_max <= 0.0:
        raise ConfigError("dt_max and t_max must be positive")
    if any(g <= 0.0 or g >= 1.0 for g in cfg.snapshot_gaps):
        raise ConfigError(f"snapshot_gaps must lie in (0, 1) ({where('snapshot_gaps')})")
    if cfg.workers < 1:
        raise ConfigError(f"workers must be at least 1 ({where('workers')})")
    if cfg.beta is not None and not 2.0 < cfg.beta < 3.0:
        raise ConfigError(
            f"beta must lie strictly between 2 and 3, got {cfg.beta} ({where('beta')})"
        )
    if mode == "convergence":
        if len(cfg.M_list) < 3:
            raise ConfigError(
                f"M_list needs at least 3 entries, got {len(cfg.M_list)} ({where('M_list')})"
            )
        if any(b2 <= a2 for a2, b2 in zip(cfg.M_list, cfg.M_list[1:])):
            raise ConfigError(f"M_list must be strictly increasing ({where('M_list')})")
        if min(cfg.M_list) < 16:
            raise ConfigError(f"every M in M_list must be at least 16 ({where('M_list')})")
    if mode == "sweep":
        if cfg.lambda_steps < 1 or cfg.chi_steps < 1:
            raise ConfigError("lambda_steps and chi_steps must be at least 1")
        if cfg.lambda_min > cfg.lambda_max or cfg.chi_min > cfg.chi_max:
            raise ConfigError("sweep ranges need min <= max")
        if cfg.lambda_min < 0.0 or cfg.chi_min < 0.0:
            raise ConfigError("sweep ranges must be nonnegative")
    return cfg


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}")
    cfg = parse_config(text)
    env_out = os.environ.get(ENV_OUTPUT_DIR)
    if env_out:
        cfg.output_dir = env_out
    return cfg


# ---------------------------------------------------------------------------
# output emission


@dataclass
class OutputBundle:
    """Paths of everything one scenario wrote, plus the in-memory report."""

    mode: str
    out_dir: Path
    report: dict
    trace_csvs: List[str] = field(default_factory=list)
    snapshot_csvs: List[str] = field(default_factory=list)
    report_json: str = ""
    summary_csv: Optional[str] = None
    figure_paths: List[str] = field(default_factory=list)

    @property
    def all_checks_passed(self) -> bool:
        return all(
            c["passed"] for c in self.report.get("checks", ()) if c["applicable"]
        )


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        obj = float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _check(name, statement, applicable, passed, margin=None, tolerance=None) -> dict:
    return {
        "name": name,
        "statement": statement,
        "applicable": bool(applicable),
        "passed": bool(passed),
        "margin": margin,
        "tolerance": tolerance,
    }


def _fmt(x) -> str:
    if x is None:
        return ""
    return f"{x:.17g}"


def _quench_dict(rep: solver.QuenchReport) -> dict:
    return {
        "quenched": rep.quenched,
        "T_lo": rep.T_lo,
        "T_hi": rep.T_hi,
        "quench_radius": rep.quench_radius,
        "delta1_hat": rep.delta1_hat,
        "sup_u_final": rep.sup_u_final,
        "steady_residual": rep.steady_residual,
        "last_dt": rep.last_dt,
        "M": rep.M,
    }


def _write_run_files(out_dir: Path, rep: solver.QuenchReport, trace, bundle: OutputBundle):
    trace_path = out_dir / "trace.csv"
    _atomic_write(trace_path, trace_csv_text(trace))
    bundle.trace_csvs.append(str(trace_path))
    snaps = []
    for k, (t, fld) in enumerate(rep.snapshots):
        path = out_dir / f"snapshot_{k:03d}.csv"
        tmp = out_dir / f"snapshot_{k:03d}.csv.tmp"
        write_snapshot_csv(fld, tmp)
        os.replace(tmp, path)
        bundle.snapshot_csvs.append(str(path))
        snaps.append(
            {
                "index": k,
                "t": t,
                "gap": 1.0 - float(fld.values.max()),
                "path": path.name,
            }
        )
    bundle.report["snapshots"] = snaps


def _finish_bundle(cfg: RunConfig, bundle: OutputBundle) -> OutputBundle:
    bundle.report["files"] = {
        "traces": [Path(p).name for p in bundle.trace_csvs],
        "snapshots": [Path(p).name for p in bundle.snapshot_csvs],
        "summary": Path(bundle.summary_csv).name if bundle.summary_csv else None,
        "figures": [Path(p).name for p in bundle.figure_paths],
    }
    report_path = bundle.out_dir / "report.json"
    _atomic_write(
        report_path,
        json.dumps(_jsonable(bundle.report), indent=2, sort_keys=True) + "\n",
    )
    bundle.report_json = str(report_path)
    return bundle


# ---------------------------------------------------------------------------
# scenario pipelines


def _require_valid_initial(p: ProblemParams, mode: str) -> object:
    chk = validate_initial_data(p, mode)
    if not chk.ok:
        raise ConfigError(
            f"initial data invalid for scenario '{mode}': " + "; ".join(chk.violations)
        )
    return chk


def _scenario_lemma7(cfg: RunConfig, out_dir: Path, with_checks: bool) -> OutputBundle:
    p = cfg.problem()
    _require_valid_initial(p, "lemma7")
    rep, trace = run_to_quench(p, cfg.M, cfg.control(), cfg.snapshot_gaps)

    checks = []
    constants = {"delta1_hat": rep.delta1_hat}
    if with_checks:
        bc = analysis.verify_quench_time_bound(rep, p)
        sres = analysis.check_supersolution(rep, p)
        constants["t_upper_bound"] = bc.bound
        checks = [
            _check(
                "quench_observed",
                "sup u reaches 1 - quench_tol before t_max",
                True, rep.quenched,
            ),
            _check(
                "touchdown_time_bound",
                "T_hi <= 1/(lam*delta1_hat*c0) * (1 + slack)",
                bc.applicable, bc.passed, bc.margin, bc.slack,
            ),
            _check(
                "barrier_dominance",
                "max over snapshots of (v - psi)+ <= tol_profile",
                sres.applicable, sres.passed,
                None if not sres.applicable else sres.tolerance - sres.max_violation,
                sres.tolerance,
            ),
        ]

    bundle = OutputBundle(cfg.mode, out_dir, _base_report(cfg, checks, constants))
    bundle.report["quench"] = _quench_dict(rep)
    _write_run_files(out_dir, rep, trace, bundle)
    if cfg.figures:
        from . import figures

        bundle.figure_paths += figures.render_run_figures(
            out_dir, trace, rep.snapshots,
            delta1_lines={"delta1_hat": rep.delta1_hat},
        )
    return _finish_bundle(cfg, bundle)


def _scenario_theorem8(cfg: RunConfig, out_dir: Path, with_checks: bool) -> OutputBundle:
    p = cfg.problem()
    _require_valid_initial(p, "theorem8")
    rep, trace = run_to_quench(p, cfg.M, cfg.control(), cfg.snapshot_gaps)
    h = p.R / (cfg.M - 1)
    window = (2.0 * h, p.R / 4.0)

    checks = []
    constants = {"delta1_hat": rep.delta1_hat}
    if with_checks:
        origin_everywhere = all(
            int(np.argmax(fld.values)) == 0 for _, fld in rep.snapshots
        )
        # gap floors are asymptotic statements some way into the run, so
        # they are evaluated from the first snapshot past a fixed gap
        late = [
            (t, fld)
            for t, fld in rep.snapshots
            if 1.0 - float(fld.values.max()) <= PROFILE_CHECK_FROM_GAP
        ]
        ratios = []
        for _, fld in late[-3:]:
            v = analysis.RadialField(fld.grid, 1.0 - fld.values)
            fit = analysis.fit_profile_exponent(v, window)
            ratios.append(fit.min_ratio(2.0))
        spread = (max(ratios) - min(ratios)) / max(ratios) if ratios else math.inf
        stable = bool(ratios) and min(ratios) > 0.0 and spread < 0.5

        v_final = analysis.RadialField(
            rep.snapshots[-1][1].grid, 1.0 - rep.snapshots[-1][1].values
        )
        fit_final = analysis.fit_profile_exponent(v_final, window)
        ic = analysis.check_integral_bounded(rep, trace, p.n)
        constants.update(
            {
                "empirical_C": min(ratios) if ratios else None,
                "final_exponent": fit_final.exponent,
                "max_I": ic.max_I,
            }
        )
        checks = [
            _check(
                "quench_observed",
                "sup u reaches 1 - quench_tol before t_max",
                True, rep.quenched,
            ),
            _check(
                "touchdown_point",
                "argmax u sits at r = 0 in every snapshot and quench_radius <= 2h",
                True,
                rep.quenched and origin_everywhere and rep.quench_radius <= 2.0 * h,
                2.0 * h - rep.quench_radius,
                2.0 * h,
            ),
            _check(
                "quadratic_floor_stability",
                "min over window of v/r^2 positive, spread < 50% over last snapshots",
                True, stable,
                min(ratios) if ratios else None,
                0.5,
            ),
            _check(
                "profile_exponent",
                "log-log slope of final v over the window <= 2.2",
                True, fit_final.exponent <= 2.2,
                2.2 - fit_final.exponent,
                0.2,
            ),
            _check(
                "gap_integral_bounded",
                "running max of I grows < 10% between the last two snapshots (n >= 3)",
                ic.applicable, ic.passed,
                None if ic.growth is None else 0.10 - ic.growth,
                0.10,
            ),
        ]

    bundle = OutputBundle(cfg.mode, out_dir, _base_report(cfg, checks, constants))
    bundle.report["quench"] = _quench_dict(rep)
    bundle.report["profile_check_from_gap"] = PROFILE_CHECK_FROM_GAP
    _write_run_files(out_dir, rep, trace, bundle)
    if cfg.figures:
        from . import figures

        env = None
        if with_checks and constants.get("empirical_C"):
            env = (constants["empirical_C"], 2.0, "C r^2")
        bundle.figure_paths += figures.render_run_figures(
            out_dir, trace, rep.snapshots, envelope=env,
            delta1_lines={"delta1_hat": rep.delta1_hat},
        )
    return _finish_bundle(cfg, bundle)


def _scenario_theorem9(cfg: RunConfig, out_dir: Path, with_checks: bool) -> OutputBundle:
    p = cfg.problem()
    chk = _require_valid_initial(p, "theorem9")
    ctl = cfg.control()
    beta = cfg.beta

    if not with_checks:
        # plain simulate: single run at the configured drive, no pipeline
        rep, trace = run_to_quench(p, cfg.M, ctl, cfg.snapshot_gaps)
        bundle = OutputBundle(cfg.mode, out_dir, _base_report(cfg, [], {}))
        bundle.report["quench"] = _quench_dict(rep)
        _write_run_files(out_dir, rep, trace, bundle)
        if cfg.figures:
            from . import figures

            bundle.figure_paths += figures.render_run_figures(
                out_dir, trace, rep.snapshots,
                delta1_lines={"delta1_hat": rep.delta1_hat},
            )
        return _finish_bundle(cfg, bundle)

    # pilot run at the configured drive feeds the constant pipeline
    pilot_rep, pilot_trace = run_to_quench(p, cfg.M, ctl, cfg.snapshot_gaps)
    c2 = analysis.estimate_c2(pilot_trace, p.R)
    if c2 <= 0.0:
        raise ScenarioAbort(
            f"boundary gap slope floor not observed (c2 = {c2:.3e} <= 0); "
            "power-profile certification aborted"
        )

    g = build_grid(p.n, p.R, cfg.M)
    u0_field = analysis.RadialField(g, p.initial.profile(g.r, p.R))
    A0, _ = nonlocal_factor(u0_field, p.chi)
    eps, d1 = select_epsilon(chk.c1, p.initial.a, c2, beta, p.chi, p.n, p.R, A0)
    lam0 = lambda0_threshold(eps, beta, d1, p.n)
    lam1 = lambda1_threshold(lam0, d1, p.n, p.R)
    lam_cert = (
        cfg.lambda_certified
        if cfg.lambda_certified is not None
        else 1.1 * max(lam0, lam1)
    )
    if lam_cert < 1.1 * lam0:
        raise ScenarioAbort(
            f"certified drive lambda = {lam_cert:.6g} is below 1.1*lambda0 = "
            f"{1.1 * lam0:.6g}; the flux diagnostic is not guaranteed"
        )

    cert_p = replace(p, lam=lam_cert)
    rep, trace = run_to_quench(cert_p, cfg.M, ctl, cfg.snapshot_gaps)
    diag = analysis.check_qtilde_nonneg(rep.snapshots, beta, eps)
    bc = analysis.verify_quench_time_bound(rep, cert_p, delta1=d1)
    a_floor_margin = rep.delta1_hat - d1

    bounds = BoundSet(
        delta1=d1,
        c0=c0_of(lam_cert, d1, p.n, p.R),
        epsilon=eps,
        lambda0=lam0,
        lambda1=lam1,
        t_upper=quench_time_upper_bound(lam_cert, d1, p.n, p.R),
    )
    constants = dict(asdict(bounds))
    constants["t_upper_bound"] = constants.pop("t_upper")
    constants.update(
        {
            "c1": chk.c1,
            "c2": c2,
            "A0": A0,
            "lambda_certified": lam_cert,
            "pilot": {
                "lambda": p.lam,
                "quenched": pilot_rep.quenched,
                "T_hi": pilot_rep.T_hi,
            },
        }
    )
    checks = [
        _check(
            "quench_observed",
            "sup u reaches 1 - quench_tol before t_max",
            True, rep.quenched,
        ),
        _check(
            "flux_diagnostic",
            "min over run of r^(n-1)(v^beta)_r - eps*r^n >= -1e-6*max|q|",
            True, diag.qtilde_ok, diag.qtilde_min, diag.qtilde_tol,
        ),
        _check(
            "power_profile_floor",
            "v >= (eps/2)^(1/beta) r^(2/beta) - tol_profile at all recorded (r, t)",
            True, diag.profile_ok, diag.profile_margin, diag.profile_tol,
        ),
        _check(
            "capacitance_floor",
            "A(t) >= delta1 along the whole run",
            True, a_floor_margin >= 0.0, a_floor_margin, 0.0,
        ),
        _check(
            "touchdown_time_bound",
            "T_hi <= 1/(lam*delta1*c0) * (1 + slack) with delta1 from the pipeline",
            bc.applicable, bc.passed, bc.margin, bc.slack,
        ),
    ]

    bundle = OutputBundle(cfg.mode, out_dir, _base_report(cfg, checks, constants))
    bundle.report["quench"] = _quench_dict(rep)
    _write_run_files(out_dir, rep, trace, bundle)
    pilot_path = out_dir / "trace_pilot.csv"
    _atomic_write(pilot_path, trace_csv_text(pilot_trace))
    bundle.trace_csvs.append(str(pilot_path))
    if cfg.figures:
        from . import figures

        env = ((eps / 2.0) ** (1.0 / beta), 2.0 / beta, "(eps/2)^(1/beta) r^(2/beta)")
        bundle.figure_paths += figures.render_run_figures(
            out_dir, trace, rep.snapshots, envelope=env,
            delta1_lines={"delta1": d1, "delta1_hat": rep.delta1_hat},
        )
    return _finish_bundle(cfg, bundle)


def _scenario_comparison(cfg: RunConfig, out_dir: Path, with_checks: bool) -> OutputBundle:
    p1 = cfg.problem()
    p2 = cfg.problem(initial=cfg.initial2)
    grid = build_grid(p1.n, p1.R, cfg.M)
    ordered = bool(
        np.all(
            p1.initial.profile(grid.r, p1.R)
            <= p2.initial.profile(grid.r, p2.R) + 1e-15
        )
    )
    violation, tr1, tr2, t_end, steps = analysis.run_lockstep(
        p1, p2, cfg.M, cfg.control()
    )

    checks = []
    if with_checks:
        checks = [
            _check(
                "ordering_preserved",
                "u0_a <= u0_b nodewise implies max (u_a - u_b)+ <= 1e-12 throughout",
                ordered, violation <= analysis.COMPARISON_TOL,
                analysis.COMPARISON_TOL - violation,
                analysis.COMPARISON_TOL,
            )
        ]
    constants = {
        "max_violation": violation,
        "ordered_initial_data": ordered,
        "t_end": t_end,
        "steps": steps,
    }
    bundle = OutputBundle(cfg.mode, out_dir, _base_report(cfg, checks, constants))
    for name, tr in (("trace_a.csv", tr1), ("trace_b.csv", tr2)):
        path = out_dir / name
        _atomic_write(path, trace_csv_text(tr))
        bundle.trace_csvs.append(str(path))
    if cfg.figures:
        from . import figures

        bundle.figure_paths += figures.render_comparison_figure(out_dir, tr1, tr2)
    return _finish_bundle(cfg, bundle)


def _scenario_convergence(cfg: RunConfig, out_dir: Path, with_checks: bool) -> OutputBundle:
    p = cfg.problem()
    res = analysis.convergence_study(p, cfg.M_list, cfg.control())

    checks = []
    if with_checks:
        radii_ok = all(row[4] <= 2.0 * row[1] for row in res.rows)
        checks = [
            _check(
                "refinement_order",
                "observed touchdown-time order across refinements >= 1.5",
                True, res.order >= 1.5, res.order - 1.5, 1.5,
            ),
            _check(
                "touchdown_point_each_M",
                "quench_radius <= 2h at every refinement",
                True, radii_ok,
            ),
        ]
    constants = {
        "orders": list(res.orders),
        "rows": [list(row) for row in res.rows],
    }
    bundle = OutputBundle(cfg.mode, out_dir, _base_report(cfg, checks, constants))
    lines = [CONVERGENCE_HEADER]
    for M, h, t_lo, t_hi, radius in res.rows:
        lines.append(f"{M},{_fmt(h)},{_fmt(t_lo)},{_fmt(t_hi)},{_fmt(radius)}")
    path = out_dir / "convergence.csv"
    _atomic_write(path, "\n".join(lines) + "\n")
    bundle.summary_csv = str(path)
    if cfg.figures:
        from . import figures

        bundle.figure_paths += figures.render_convergence_figure(
            out_dir, res.rows, res.orders
        )
    return _finish_bundle(cfg, bundle)


def _axis(lo: float, hi: float, steps: int) -> List[float]:
    if steps == 1:
        return [lo]
    return list(np.linspace(lo, hi, steps))


def _sweep_cell(args) -> dict:
    lam, chi, n, R, initial, M, ctl, gaps = args
    p = ProblemParams(n=n, R=R, lam=lam, chi=chi, initial=initial)
    rep, _ = run_to_quench(p, M, ctl, gaps)
    return {
        "lambda": lam,
        "chi": chi,
        "quenched": rep.quenched,
        "T_lo": rep.T_lo,
        "T_hi": rep.T_hi,
        "quench_radius": rep.quench_radius,
        "delta1_hat": rep.delta1_hat,
        "sup_u_final": rep.sup_u_final,
    }


def _scenario_sweep(cfg: RunConfig, out_dir: Path, with_checks: bool) -> OutputBundle:
    lams = _axis(cfg.lambda_min, cfg.lambda_max, cfg.lambda_steps)
    chis = _axis(cfg.chi_min, cfg.chi_max, cfg.chi_steps)
    ctl = cfg.control()
    jobs = [
        (lam, chi, cfg.n, cfg.R, cfg.initial, cfg.M, ctl, cfg.snapshot_gaps)
        for chi in chis
        for lam in lams
    ]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_sweep_cell, jobs))
    else:
        rows = [_sweep_cell(job) for job in jobs]

    n_lam = len(lams)
    quenched = np.array([r["quenched"] for r in rows]).reshape(len(chis), n_lam)
    t_hi = np.array(
        [r["T_hi"] if r["T_hi"] is not None else np.nan for r in rows]
    ).reshape(len(chis), n_lam)

    checks = []
    if with_checks:
        # for each chi, the set of touchdown cells must be an up-set in lambda
        upset = all(
            not (row[k] and not row[k + 1])
            for row in quenched
            for k in range(n_lam - 1)
        )
        checks = [
            _check(
                "touchdown_upset_in_lambda",
                "per chi row, touchdown cells form an up-set in lambda",
                n_lam > 1, upset,
            )
        ]
    constants = {
        "cells": len(rows),
        "quenched_cells": int(quenched.sum()),
        "lambda_axis": lams,
        "chi_axis": chis,
    }

    bundle = OutputBundle(cfg.mode, out_dir, _base_report(cfg, checks, constants))
    lines = [SWEEP_HEADER]
    for r in rows:
        lines.append(
            f"{_fmt(r['lambda'])},{_fmt(r['chi'])},{int(r['quenched'])},"
            f"{_fmt(r['T_lo'])},{_fmt(r['T_hi'])},{_fmt(r['quench_radius'])},"
            f"{_fmt(r['delta1_hat'])},{_fmt(r['sup_u_final'])}"
        )
    path = out_dir / "summary.csv"
    _atomic_write(path, "\n".join(lines) + "\n")
    bundle.summary_csv = str(path)
    bundle.report["cells"] = rows
    if cfg.figures:
        from . import figures

        bundle.figure_paths += figures.render_sweep_figure(
            out_dir, lams, chis, quenched.astype(float), t_hi
        )
    return _finish_bundle(cfg, bundle)


def _base_report(cfg: RunConfig, checks, constants) -> dict:
    return {
        "mode": cfg.mode,
        "params": cfg.echo(),
        "checks": checks,
        "constants": constants,
    }


_PIPELINES = {
    "lemma7": _scenario_lemma7,
    "theorem8": _scenario_theorem8,
    "theorem9": _scenario_theorem9,
    "comparison": _scenario_comparison,
    "convergence": _scenario_convergence,
    "sweep": _scenario_sweep,
}


def run_scenario(cfg: RunConfig, with_checks: bool = True) -> OutputBundle:
    """Execute the configured scenario and write its output bundle."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return _PIPELINES[cfg.mode](cfg, out_dir, with_checks)


def emit_summary(bundle: OutputBundle) -> str:
    """One-screen human summary of a finished scenario."""
    rep = bundle.report
    lines = [f"scenario {rep['mode']}  ->  {bundle.out_dir}"]
    params = rep["params"]
    core = ", ".join(
        f"{k}={params[k]}" for k in ("n", "R", "lambda", "chi", "M") if k in params and params[k] is not None
    )
    lines.append(f"  params: {core}")

    q = rep.get("quench")
    if q:
        if q["quenched"]:
            lines.append(
                f"  touchdown: T in [{q['T_lo']:.8g}, {q['T_hi']:.8g}], "
                f"radius {q['quench_radius']:.4g}, delta1_hat {q['delta1_hat']:.6g}"
            )
            t_up = rep.get("constants", {}).get("t_upper_bound")
            if t_up:
                lines.append(f"  analytic bound: T <= {t_up:.8g}")
        else:
            lines.append(
                f"  no touchdown up to t_max; steady residual "
                f"{q['steady_residual']:.3e}, sup u {q['sup_u_final']:.6g}"
            )
    if rep["mode"] == "sweep":
        c = rep["constants"]
        lines.append(
            f"  cells: {c['quenched_cells']} touched down of {c['cells']}"
        )
    if rep["mode"] == "convergence":
        orders = rep["constants"]["orders"]
        lines.append(f"  observed orders: {', '.join(f'{o:.3f}' for o in orders)}")
    if rep["mode"] == "comparison":
        c = rep["constants"]
        lines.append(
            f"  max ordering violation {c['max_violation']:.3e} over {c['steps']} steps"
        )

    for chk in rep.get("checks", ()):
        if not chk["applicable"]:
            status = "n/a "
        elif chk["passed"]:
            status = "pass"
        else:
            status = "FAIL"
        margin = ""
        if chk["margin"] is not None:
            margin = f"  margin={chk['margin']:.3e}"
        lines.append(f"  [{status}] {chk['name']}{margin}")
    return "\n".join(lines)


def bounds_table(cfg: RunConfig) -> str:
    """Formula-only table of the closed-form constants for a parameter set."""
    rows = []

    def put(name, value, note=""):
        if value is None:
            rows.append(f"{name:<22} n/a{('  (' + note + ')') if note else ''}")
        else:
            rows.append(f"{name:<22} {value:.17g}")

    n, R = cfg.n, cfg.R
    omega = unit_sphere_area(n)
    vol = ball_volume(n, R)
    put("omega_{n-1}", omega)
    put("|B_R|", vol)
    if cfg.chi is not None:
        put("A ceiling", (1.0 + cfg.chi * vol) ** -2.0)

    c1 = None
    if cfg.initial.kind == "parabolic":
        c1 = 2.0 * cfg.initial.a / R**2
    put("c1", c1, "closed form only for parabolic initial data")
    c2 = cfg.c2
    put("c2", c2, "supply key 'c2' (a run estimates it)")

    eps = cfg.epsilon
    if eps is None and None not in (c1, c2, cfg.beta):
        eps = 0.9 * epsilon_budget(c1, cfg.initial.a, c2, cfg.beta)
    put("epsilon", eps, "needs c1, c2 and beta")

    d1 = cfg.delta1
    if d1 is None and eps is not None and cfg.beta is not None and cfg.chi is not None:
        d1 = delta1_bound(eps, cfg.chi, cfg.beta, n, R)
    put("delta1", d1, "supply 'delta1' or epsilon+beta+chi")

    if d1 is not None and cfg.lam is not None:
        t_up = quench_time_upper_bound(cfg.lam, d1, n, R)
        put("c0", c0_of(cfg.lam, d1, n, R))
        put("T upper bound", t_up, "needs lam > 2n/(delta1 R^2)")
    else:
        put("c0", None, "needs lambda and delta1")
        put("T upper bound", None, "needs lambda and delta1")

    lam0 = None
    if None not in (eps, d1) and cfg.beta is not None:
        lam0 = lambda0_threshold(eps, cfg.beta, d1, n)
    put("lambda0", lam0, "needs epsilon, beta, delta1")
    lam1 = None
    if lam0 is not None:
        lam1 = lambda1_threshold(lam0, d1, n, R)
    put("lambda1", lam1, "needs lambda0")
    return "\n".join(rows)


# ---------------------------------------------------------------------------
# entry point


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="memsquench",
        description="radial simulator and verification harness for the "
        "capacitance-coupled membrane touchdown equation",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_txt in (
        ("simulate", "run the configured scenario without verification checks"),
        ("bounds", "print the closed-form constant table for a config"),
        ("verify", "run the configured scenario with its verification checks"),
        ("sweep", "run a (lambda, chi) grid of touchdown runs"),
        ("convergence", "run the grid-refinement study"),
    ):
        sp = sub.add_parser(name, help=help_txt)
        sp.add_argument("config", help="path to a key=value config file")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if args.command == "bounds":
            print(bounds_table(cfg))
            return 0
        if args.command == "simulate":
            if cfg.mode not in SINGLE_RUN_MODES and cfg.mode not in ("comparison",):
                raise ConfigError(
                    f"simulate needs a single-run mode, got '{cfg.mode}'"
                )
            bundle = run_scenario(cfg, with_checks=False)
            print(emit_summary(bundle))
            return 0
        if args.command == "sweep" and cfg.mode != "sweep":
            raise ConfigError(f"sweep needs mode=sweep, config says '{cfg.mode}'")
        if args.command == "convergence" and cfg.mode != "convergence":
            raise ConfigError(
                f"convergence needs mode=convergence, config says '{cfg.mode}'"
            )
        bundle = run_scenario(cfg, with_checks=True)
        print(emit_summary(bundle))
        return 0 if bundle.all_checks_passed else 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ScenarioAbort as exc:
        print(f"scenario aborted: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
