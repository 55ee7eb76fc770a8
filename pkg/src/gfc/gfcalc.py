"""Convolution-type derivatives of sampled functions.

For u sampled on t_j = j h the Caputo-Djrbashian-type derivative

    D u(t) = b u'(t) + int_0^t u'(t - s) nu(s) ds

is approximated by product integration: u is taken piecewise linear, so u' is
the constant (u_j - u_{j-1}) / h on each cell, and the kernel enters only
through its exact cell integrals A_m = int_{m h}^{(m+1) h} nu(s) ds.  That
keeps the integrable singularity of the stable tail at s = 0 out of any
quadrature.  The local derivative b u'(t) uses second-order differences,
one-sided at the grid ends.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .bernstein import BernsteinSpec
from .errors import ParameterError, ResolutionError
from .laplace import GRID_ORDER, tilde_ell_grid

#: Fewest cells in [0, t] accepted by the product-integration rule.
MIN_CELLS = 8
DEFAULT_T_MIN = 0.05
EIGEN_TOL = 5e-3


@dataclass(frozen=True)
class SampledFunction:
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape:
            raise ParameterError("grid and values must be 1-d arrays of equal length")
        if len(grid) < 3:
            raise ParameterError("a sampled function needs at least 3 points")
        if grid[0] != 0.0:
            raise ParameterError("grid must start at 0")
        steps = np.diff(grid)
        h = (grid[-1] - grid[0]) / (len(grid) - 1)
        if not h > 0 or np.max(np.abs(steps - h)) > 1e-12 * max(grid[-1], 1.0) + 1e-12 * h * len(grid):
            raise ParameterError("grid must be uniform and increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def h(self) -> float:
        return float((self.grid[-1] - self.grid[0]) / (len(self.grid) - 1))

    @classmethod
    def from_callable(cls, fn, t_max: float, h: float) -> "SampledFunction":
        n = int(round(t_max / h))
        grid = np.arange(n + 1) * h
        return cls(grid, np.asarray(fn(grid), dtype=float))


def _index(u: SampledFunction, t: float) -> int:
    j = int(round(t / u.h))
    if not 0 <= j < len(u.grid) or abs(u.grid[j] - t) > 1e-9 * u.h:
        raise ParameterError(f"t = {t} is not a grid point")
    if j < max(2, MIN_CELLS):
        raise ResolutionError(f"only {j} cells in [0, {t}]; need at least {MIN_CELLS}")
    return j


def _kernel_moments(spec: BernsteinSpec, h: float, n: int) -> np.ndarray:
    edges = np.arange(n + 1) * h
    return np.asarray(spec.tail_integral(edges[:-1], edges[1:]), dtype=float)


def cd_derivative_all(spec: BernsteinSpec, u: SampledFunction) -> np.ndarray:
    """D u at every grid point; entries with fewer than MIN_CELLS cells are NaN."""
    h = u.h
    n = len(u.grid) - 1
    slopes = np.diff(u.values) / h
    # I_j = sum_{m < j} slope_{j - m} A_m, a causal convolution.
    conv = np.convolve(slopes, _kernel_moments(spec, h, n))[:n]
    out = np.concatenate([[0.0], conv])
    b = spec.drift
    if b:
        out = out + b * np.gradient(u.values, h, edge_order=2)
    out[:MIN_CELLS] = np.nan
    return out


def cd_derivative(spec: BernsteinSpec, u: SampledFunction, t: float) -> float:
    """Caputo-Djrbashian-type derivative of u at the grid point t."""
    j = _index(u, t)
    h = u.h
    slopes = np.diff(u.values[: j + 1]) / h
    moments = _kernel_moments(spec, h, j)
    value = float(np.dot(slopes[::-1], moments))
    b = spec.drift
    if b:
        value += b * float(np.gradient(u.values, h, edge_order=2)[j])
    return value


def rl_derivative(spec: BernsteinSpec, u: SampledFunction, t: float) -> float:
    """Riemann-Liouville-type derivative: D u(t) + nu(t) u(0)."""
    cd = cd_derivative(spec, u, t)
    return cd + float(spec.tail(t)) * float(u.values[0])


@dataclass
class ResidualReport:
    grid: np.ndarray
    residuals: np.ndarray
    max_abs: float
    tolerance: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "grid": [float(x) for x in self.grid],
            "residuals": [float(x) for x in self.residuals],
            "max_abs": float(self.max_abs),
            "tolerance": float(self.tolerance),
            "pass": bool(self.passed),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def make_report(grid, residuals, tolerance: float) -> ResidualReport:
    residuals = np.asarray(residuals, dtype=float)
    max_abs = float(np.max(np.abs(residuals))) if residuals.size else 0.0
    return ResidualReport(np.asarray(grid), residuals, max_abs, tolerance, bool(max_abs <= tolerance))


def admissible(grid: np.ndarray, t_min: float, h: float) -> np.ndarray:
    return (grid >= t_min - 1e-12) & (np.arange(len(grid)) >= MIN_CELLS)


def eigen_residual(
    spec: BernsteinSpec,
    lam: float,
    h: float = 1e-3,
    t_min: float = DEFAULT_T_MIN,
    t_max: float = 1.0,
    tol: float = EIGEN_TOL,
    order: int = GRID_ORDER,
) -> ResidualReport:
    """Residual of D tilde_l(., lam) + lam tilde_l(., lam) on [t_min, t_max]."""
    if lam < 0:
        raise ParameterError("lam must be nonnegative")
    if not 0 < h < t_max:
        raise ParameterError("need 0 < h < t_max")
    n = int(round(t_max / h))
    grid = np.arange(n + 1) * h
    u = SampledFunction(grid, tilde_ell_grid(spec, grid, lam, order))
    res = cd_derivative_all(spec, u) + lam * u.values
    keep = admissible(grid, t_min, h)
    return make_report(grid[keep], res[keep], tol)
