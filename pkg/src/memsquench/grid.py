"""Uniform radial discretization of the ball B_R.

Nodes sit at r_i = i*h with h = R/(M-1), so r_0 = 0 and r_{M-1} = R.  The
radial Laplacian (1/r^(n-1)) (r^(n-1) f_r)_r is discretized with centered
second-order stencils,

    lap f(r_i) ~= (f_{i+1} - 2 f_i + f_{i-1})/h^2
                  + (n-1)/r_i * (f_{i+1} - f_{i-1})/(2h),

and the origin uses the even extension implied by f_r(0) = 0 for radial
profiles: lap f(0) ~= n * f''(0) with f''(0) ~= 2 (f_1 - f_0)/h^2.  These
stencils reproduce radial quadratics alpha + gamma r^2 exactly (output
2*n*gamma at every node).  Ball integrals use the trapezoid rule against the
surface-measure weight omega_{n-1} r^(n-1), matching the O(h^2) order of the
stencils; the grid is kept uniform so profiles stay equally resolved near
the center and near the rim.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .domain import unit_sphere_area

__all__ = [
    "RadialGrid",
    "RadialField",
    "build_grid",
    "radial_laplacian_apply",
    "ball_integral",
    "boundary_derivative",
    "write_snapshot_csv",
    "read_snapshot_csv",
]

MIN_NODES = 16


@dataclass(eq=False, frozen=True)
class RadialGrid:
    """Uniform node layout on [0, R] plus cached stencil/quadrature data.

    ``lap_lower``/``lap_diag``/``lap_upper`` hold the tridiagonal Laplacian
    coefficients for rows 0..M-2 (origin row included, boundary row excluded:
    its value is set by a boundary condition, not a stencil).  ``quad_w``
    holds trapezoid weights including the omega_{n-1} r^(n-1) factor, so a
    ball integral is a single dot product.
    """

    n: int
    R: float
    M: int
    h: float
    r: np.ndarray
    quad_w: np.ndarray = field(repr=False)
    lap_lower: np.ndarray = field(repr=False)
    lap_diag: np.ndarray = field(repr=False)
    lap_upper: np.ndarray = field(repr=False)


@dataclass(eq=False, frozen=True)
class RadialField:
    """Scalar samples on the nodes of a RadialGrid."""

    grid: RadialGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.M,):
            raise ValueError(
                f"field needs {self.grid.M} values, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)


def build_grid(n: int, R: float, M: int) -> RadialGrid:
    """Build the uniform grid with M nodes on [0, R] in dimension n."""
    if M < MIN_NODES:
        raise ValueError(f"grid too coarse: need at least {MIN_NODES} nodes, got {M}")
    if R <= 0.0:
        raise ValueError(f"radius must be positive, got {R}")
    if int(n) != n or n < 1:
        raise ValueError(f"dimension must be a positive integer, got {n}")
    h = R / (M - 1)
    r = h * np.arange(M, dtype=float)

    w = np.full(M, h)
    w[0] = w[-1] = 0.5 * h
    quad_w = unit_sphere_area(n) * w * r ** (n - 1)

    lower = np.zeros(M - 1)
    diag = np.zeros(M - 1)
    upper = np.zeros(M - 1)
    diag[0] = -2.0 * n / h**2
    upper[0] = 2.0 * n / h**2
    ri = r[1 : M - 1]
    lower[1:] = 1.0 / h**2 - (n - 1) / (2.0 * h * ri)
    diag[1:] = -2.0 / h**2
    upper[1:] = 1.0 / h**2 + (n - 1) / (2.0 * h * ri)

    return RadialGrid(
        n=n, R=R, M=M, h=h, r=r,
        quad_w=quad_w, lap_lower=lower, lap_diag=diag, lap_upper=upper,
    )


def radial_laplacian_apply(f: RadialField) -> RadialField:
    """Apply the discrete radial Laplacian to a field.

    The last entry is a one-sided O(h^2) estimate of lap f at r = R computed
    as if no boundary condition were imposed; any Dirichlet (or other)
    condition must be applied by the caller, which is what the solver does.
    """
    g = f.grid
    u = f.values
    h, n = g.h, g.n
    out = np.empty_like(u)

    out[0] = n * 2.0 * (u[1] - u[0]) / h**2
    d2 = (u[2:] - 2.0 * u[1:-1] + u[:-2]) / h**2
    d1 = (u[2:] - u[:-2]) / (2.0 * h)
    out[1:-1] = d2 + (n - 1) / g.r[1:-1] * d1

    fpp = (2.0 * u[-1] - 5.0 * u[-2] + 4.0 * u[-3] - u[-4]) / h**2
    fp = (3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * h)
    out[-1] = fpp + (n - 1) / g.R * fp
    return RadialField(g, out)


def ball_integral(f: RadialField) -> float:
    """Trapezoid approximation of the integral of f over the ball B_R."""
    return float(f.grid.quad_w @ f.values)


def boundary_derivative(f: RadialField) -> float:
    """One-sided second-order estimate of f_r at r = R.

    Exact on polynomials up to degree 2.
    """
    u = f.values
    return float((3.0 * u[-1] - 4.0 * u[-2] + u[-3]) / (2.0 * f.grid.h))


def write_snapshot_csv(f: RadialField, path) -> None:
    """Write a field as a two-column CSV with header ``r,u``.

    Values carry 17 significant digits so a reparse reproduces the doubles
    exactly.
    """
    lines = ["r,u"]
    for r, u in zip(f.grid.r, f.values):
        lines.append(f"{r:.17g},{u:.17g}")
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_snapshot_csv(path):
    """Read a snapshot CSV back into (r, u) arrays."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["r", "u"]:
            raise ValueError(f"unexpected snapshot header {header!r} in {path}")
        rows = [(float(a), float(b)) for a, b in reader]
    r = np.array([a for a, _ in rows])
    u = np.array([b for _, b in rows])
    return r, u
