"""Problem data and the closed-form constant chain for membrane touchdown runs.

The simulated model is the capacitance-coupled MEMS deflection equation

    u_t = lap u + lam * A(t) / (1 - u)^2,
    A(t) = (1 + chi * I(t))^(-2),   I(t) = integral over B_R of dz / (1 - u),

posed on the ball B_R in R^n with u = 0 on the boundary and u(., 0) = u0.
Here u is the deflection of an elastic membrane toward a ground plate at unit
distance; touchdown (quenching) means sup u reaching 1 in finite time, where
the source term blows up.  lam scales with the squared applied voltage and
chi with the series capacitance of the driving circuit.

This module holds the immutable run description (ProblemParams, InitialData)
plus every closed-form quantity the verification harnesses need:

* the touchdown-time upper bound 1/(lam*delta1*c0), valid once a floor
  delta1 on A(t) is available and lam > 2n/(delta1*R^2),
* the barrier psi(r, t) = 1 - lam*delta1*c0*t*(1 - r^2/R^2) dominating the
  gap v = 1 - u,
* the constant chain (c1, c2, epsilon, delta1, lambda0, lambda1) that
  certifies the power-law gap profile v >= (epsilon/2)^(1/beta) * r^(2/beta)
  and finite-time touchdown for uniformly concave initial data.

Formula operations are total: they return ``None`` where a hypothesis fails
(so sweeps can tabulate validity regions) and raise ``ValueError`` only for
arguments that are malformed outright.  Everything here is pure and safe to
call from concurrent workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "InitialData",
    "ProblemParams",
    "BoundSet",
    "InitialDataCheck",
    "unit_sphere_area",
    "ball_volume",
    "validate_initial_data",
    "c0_of",
    "quench_time_upper_bound",
    "supersolution_psi",
    "delta1_bound",
    "epsilon_budget",
    "lambda0_threshold",
    "lambda1_threshold",
    "select_epsilon",
]

VALIDATION_MODES = ("lemma7", "theorem8", "theorem9")

#: tolerance for "is this sequence non-increasing" checks on sampled data
MONOTONE_TOL = 1e-12


def unit_sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n: 2*pi^(n/2) / Gamma(n/2).

    n = 1 gives 2 (the two endpoints of an interval), n = 2 gives 2*pi,
    n = 3 gives 4*pi.
    """
    if n < 1:
        raise ValueError(f"dimension must be a positive integer, got {n}")
    return 2.0 * math.pi ** (0.5 * n) / math.gamma(0.5 * n)


def ball_volume(n: int, R: float) -> float:
    """Volume of the ball of radius R in R^n: omega_{n-1} * R^n / n."""
    if R <= 0.0:
        raise ValueError(f"radius must be positive, got {R}")
    return unit_sphere_area(n) * R**n / n


@dataclass(frozen=True)
class InitialData:
    """Initial membrane deflection u0 as a function of the radius.

    kind is one of

    * ``"zero"``       u0 = 0,
    * ``"parabolic"``  u0 = a * (1 - r^2/R^2) with peak amplitude a in (0,1),
    * ``"sampled"``    piecewise-linear through explicit (r, value) pairs.

    ``a`` is the amplitude bound (sup u0 <= a < 1) and ``b`` the depth bound
    (u0 >= -b, b >= 0).  The sampled kind must cover the full interval [0, R]
    of whatever grid it is evaluated on.
    """

    kind: str
    a: float = 0.0
    b: float = 0.0
    samples: Optional[tuple] = None

    @staticmethod
    def zero() -> "InitialData":
        return InitialData("zero")

    @staticmethod
    def parabolic(a: float) -> "InitialData":
        if not 0.0 < a < 1.0:
            raise ValueError(f"parabolic amplitude must lie in (0, 1), got {a}")
        return InitialData("parabolic", a=float(a))

    @staticmethod
    def sampled(pairs, b: float = 0.0) -> "InitialData":
        pts = tuple(sorted((float(r), float(v)) for r, v in pairs))
        if len(pts) < 4:
            raise ValueError("sampled profile needs at least four points")
        if b < 0.0:
            raise ValueError(f"depth bound b must be nonnegative, got {b}")
        return InitialData(
            "sampled", a=max(v for _, v in pts), b=float(b), samples=pts
        )

    def profile(self, r, R: float) -> np.ndarray:
        """Evaluate u0 at the radii ``r`` (r in [0, R])."""
        r = np.asarray(r, dtype=float)
        if self.kind == "zero":
            return np.zeros_like(r)
        if self.kind == "parabolic":
            return self.a * (1.0 - (r / R) ** 2)
        if self.kind == "sampled":
            rs = np.array([p[0] for p in self.samples])
            vs = np.array([p[1] for p in self.samples])
            if rs[0] > 1e-12 * R or rs[-1] < R * (1.0 - 1e-12):
                raise ValueError("incomplete profile")
            return np.interp(r, rs, vs)
        raise ValueError(f"unknown initial data kind {self.kind!r}")


@dataclass(frozen=True)
class ProblemParams:
    """One run of the touchdown model.

    n is the spatial dimension (>= 1), R the ball radius, lam >= 0 the drive
    strength, chi >= 0 the capacitance coupling, ``initial`` the starting
    deflection.  A single ProblemParams value is the sole source of truth for
    a run; everything downstream (grids, traces, reports) derives from it.
    """

    n: int
    R: float
    lam: float
    chi: float
    initial: InitialData

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"dimension n must be a positive integer, got {self.n}")
        if self.R <= 0.0:
            raise ValueError(f"ball radius must be positive, got {self.R}")
        if self.lam < 0.0:
            raise ValueError(f"drive strength lam must be nonnegative, got {self.lam}")
        if self.chi < 0.0:
            raise ValueError(f"capacitance chi must be nonnegative, got {self.chi}")

    def ball_volume(self) -> float:
        return ball_volume(self.n, self.R)


@dataclass(frozen=True)
class BoundSet:
    """The closed-form constant chain for one parameter set.

    delta1   floor on the capacitance factor A(t), in (0, 1]
    c0       geometry factor 1 - 2n/(lam*delta1*R^2)
    epsilon  slope of the certified flux lower bound w_r >= epsilon*r
    lambda0  drive threshold that keeps the flux bound self-sustaining
    lambda1  drive threshold that forces finite-time touchdown
    t_upper  touchdown-time upper bound 1/(lam*delta1*c0)
    """

    delta1: float
    c0: Optional[float] = None
    epsilon: Optional[float] = None
    lambda0: Optional[float] = None
    lambda1: Optional[float] = None
    t_upper: Optional[float] = None


@dataclass(frozen=True)
class InitialDataCheck:
    """Outcome of validate_initial_data.

    ``violations`` is empty iff u0 satisfies the hypotheses of the selected
    scenario.  For the "theorem9" scenario ``c1`` carries the largest
    admissible uniform concavity constant (u0'' <= -c1 everywhere); it is
    None otherwise.  ``boundary_slope_negative`` records whether u0'(R) < 0,
    which the flat profile u0 = 0 fails while still being admissible for the
    touchdown-bound scenario.
    """

    violations: tuple
    c1: Optional[float] = None
    boundary_slope_negative: Optional[bool] = None

    @property
    def ok(self) -> bool:
        return not self.violations


def _second_differences(r: np.ndarray, v: np.ndarray) -> np.ndarray:
    # non-uniform 3-point second derivative on interior sample points
    h0 = r[1:-1] - r[:-2]
    h1 = r[2:] - r[1:-1]
    return 2.0 * (
        v[:-2] / (h0 * (h0 + h1)) - v[1:-1] / (h0 * h1) + v[2:] / (h1 * (h0 + h1))
    )


def validate_initial_data(p: ProblemParams, mode: str) -> InitialDataCheck:
    """Check u0 against the hypotheses of the selected verification scenario.

    mode "lemma7" needs 0 <= u0 <= a < 1; "theorem8" additionally needs u0
    monotone non-increasing in r; "theorem9" additionally needs u0(R) = 0 and
    a uniform concavity constant c1 > 0 with u0'' <= -c1, which is returned.
    Raises ValueError("incomplete profile") for sampled data that does not
    cover [0, R].
    """
    if mode not in VALIDATION_MODES:
        raise ValueError(f"unknown validation mode {mode!r}")
    init = p.initial
    violations = []
    c1: Optional[float] = None

    if init.kind == "sampled":
        r = np.array([q[0] for q in init.samples], dtype=float)
        v = np.array([q[1] for q in init.samples], dtype=float)
        if r[0] > 1e-12 * p.R or r[-1] < p.R * (1.0 - 1e-12):
            raise ValueError("incomplete profile")
    else:
        # closed-form kinds: probe densely so the numeric checks below apply
        r = np.linspace(0.0, p.R, 1025)
        v = init.profile(r, p.R)

    sup0 = float(v.max())
    if sup0 >= 1.0:
        violations.append("initial deflection reaches the plate (sup u0 >= 1)")
    if float(v.min()) < -init.b - MONOTONE_TOL:
        violations.append("initial deflection drops below -b")
    if float(v.min()) < -MONOTONE_TOL:
        violations.append("initial deflection is negative somewhere")

    if mode in ("theorem8", "theorem9"):
        if np.any(np.diff(v) > MONOTONE_TOL):
            violations.append("not monotone decreasing")

    if mode == "theorem9":
        if abs(float(v[-1])) > MONOTONE_TOL:
            violations.append("initial deflection does not vanish at r = R")
        if init.kind == "parabolic":
            c1_candidate = 2.0 * init.a / p.R**2  # u0'' = -2a/R^2 exactly
        elif init.kind == "zero":
            c1_candidate = 0.0
        else:
            c1_candidate = float(-_second_differences(r, v).max())
        if c1_candidate <= 0.0:
            violations.append("not uniformly concave (u0'' <= -c1 fails for every c1 > 0)")
        else:
            c1 = c1_candidate

    # one-sided slope at the outer rim; informational only
    hb = r[-1] - r[-2]
    slope_R = float((v[-1] - v[-2]) / hb)
    return InitialDataCheck(
        violations=tuple(violations),
        c1=c1 if not violations else None,
        boundary_slope_negative=slope_R < 0.0,
    )


def c0_of(lam: float, delta1: float, n: int, R: float) -> float:
    """Geometry factor 1 - 2n/(lam*delta1*R^2).  May be <= 0; callers check."""
    if lam * delta1 * R**2 <= 0.0:
        raise ValueError("c0 needs lam*delta1*R^2 > 0")
    return 1.0 - 2.0 * n / (lam * delta1 * R**2)


def quench_time_upper_bound(
    lam: float, delta1: float, n: int, R: float
) -> Optional[float]:
    """Touchdown-time upper bound (1/(lam*delta1)) * (1 - 2n/(lam*delta1*R^2))^-1.

    Valid only under the strict hypothesis lam > 2n/(delta1*R^2); returns
    None when that fails (bound not applicable) rather than a number.
    """
    if lam <= 0.0 or delta1 <= 0.0 or R <= 0.0:
        raise ValueError("lam, delta1 and R must be positive")
    if lam * delta1 * R**2 <= 2.0 * n:
        return None
    return 1.0 / (lam * delta1 * c0_of(lam, delta1, n, R))


def supersolution_psi(r, t, lam: float, delta1: float, c0: float, R: float):
    """Barrier psi(r, t) = 1 - lam*delta1*c0*t*(1 - r^2/R^2).

    Dominates the gap v = 1 - u while t < 1/(lam*delta1*c0); equals 1 on the
    boundary and at t = 0, and touches 0 at the center exactly at
    t = 1/(lam*delta1*c0).
    """
    r = np.asarray(r, dtype=float)
    return 1.0 - lam * delta1 * c0 * t * (1.0 - (r / R) ** 2)


def delta1_bound(epsilon: float, chi: float, beta: float, n: int, R: float) -> float:
    """Floor on A(t) implied by the profile bound v >= (epsilon/2)^(1/beta) r^(2/beta):

        delta1 = [1 + chi * omega_{n-1} * (2/epsilon)^(1/beta)
                      * (n - 2/beta)^-1 * R^(n - 2/beta)]^-2.

    Lies in (0, 1], and equals 1 iff chi = 0.
    """
    if not 2.0 < beta < 3.0:
        raise ValueError(f"beta must lie strictly between 2 and 3, got {beta}")
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if chi < 0.0 or R <= 0.0 or n < 1:
        raise ValueError("need chi >= 0, R > 0, n >= 1")
    exponent = n - 2.0 / beta  # > 0 for every n >= 1 since beta > 2
    term = (
        chi
        * unit_sphere_area(n)
        * (2.0 / epsilon) ** (1.0 / beta)
        * R**exponent
        / exponent
    )
    return (1.0 + term) ** -2.0


def epsilon_budget(c1: float, a: float, c2: float, beta: float) -> float:
    """Strict upper limit beta * min(c1*(1-a)^(beta-1), c2) for the slope epsilon.

    c1 is the uniform concavity constant of u0, c2 the observed floor of the
    boundary gap slope v_r(R, t)/R.  Callers must pick epsilon strictly below
    the returned limit (select_epsilon uses 0.9x).
    """
    if c1 <= 0.0 or c2 <= 0.0:
        raise ValueError("c1 and c2 must be positive")
    if not 0.0 < a < 1.0:
        raise ValueError(f"amplitude a must lie in (0, 1), got {a}")
    if not 2.0 < beta < 3.0:
        raise ValueError(f"beta must lie strictly between 2 and 3, got {beta}")
    return beta * min(c1 * (1.0 - a) ** (beta - 1.0), c2)


def lambda0_threshold(epsilon: float, beta: float, delta1: float, n: int) -> float:
    """Drive threshold 2*epsilon*n*(beta-1) / (beta*(3-beta)*delta1).

    Runs must use lam strictly above this for the flux bound w_r >= epsilon*r
    to be self-sustaining; the harness multiplies by 1.1.
    """
    if not 2.0 < beta < 3.0:
        raise ValueError(f"beta must lie strictly between 2 and 3, got {beta}")
    if delta1 <= 0.0:
        raise ValueError(f"delta1 must be positive, got {delta1}")
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return 2.0 * epsilon * n * (beta - 1.0) / (beta * (3.0 - beta) * delta1)


def lambda1_threshold(lambda0: float, delta1: float, n: int, R: float) -> float:
    """Drive threshold max(lambda0, 4n/(delta1*R^2), 3/delta1) forcing touchdown.

    Always >= lambda0.
    """
    if delta1 <= 0.0:
        raise ValueError(f"delta1 must be positive, got {delta1}")
    if R <= 0.0:
        raise ValueError(f"radius must be positive, got {R}")
    return max(lambda0, 4.0 * n / (delta1 * R**2), 3.0 / delta1)


def select_epsilon(
    c1: float,
    a: float,
    c2: float,
    beta: float,
    chi: float,
    n: int,
    R: float,
    A0: float,
    shrink: float = 0.9,
    max_halvings: int = 40,
):
    """Pick the slope epsilon and its induced floor delta1 deterministically.

    Starts at shrink * epsilon_budget, then checks the consistency condition
    A(0) > delta1(epsilon); if it fails, halves epsilon and retries (delta1
    decreases with epsilon, so the loop terminates).  Returns (epsilon,
    delta1).
    """
    eps = shrink * epsilon_budget(c1, a, c2, beta)
    for _ in range(max_halvings + 1):
        d1 = delta1_bound(eps, chi, beta, n, R)
        if A0 > d1:
            return eps, d1
        eps *= 0.5
    raise RuntimeError(
        f"could not satisfy A(0) > delta1 after {max_halvings} halvings "
        f"(A0={A0}, last delta1={d1})"
    )
