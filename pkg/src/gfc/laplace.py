"""Laplace transform of the inverse-subordinator density and its inversion.

Only real evaluation nodes are used (Gaver-Stehfest), since Bernstein
functions are evaluated on the positive half-line only.  Two precisions:

* ``"mp"``: nodes, transform values and the weighted sum in mpmath at
  ``mp_dps(order)`` digits.  The Stehfest weights grow like 1e12 at order 20, so
  double-precision transform values would lose about 12 digits.
* ``"double"``: numpy, vectorised over many times at once; used on dense grids
  where tolerances are loose (order 14, error around 1e-6).

t-domain transforms used here (the x-domain Laplace transform of
``L_t[l_f(t, x)](r) = f(r)/r exp(-x f(r))`` integrated against exp(-lam x)):

    L_t[tilde_l(t, lam)](r) = f(r) / (r (lam + f(r)))
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import mpmath
import numpy as np

from . import specfun
from .bernstein import BernsteinSpec, Stable, eval_f
from .errors import AccuracyLossError, MethodMismatchError, ParameterError, UnsupportedError

MP_DPS = 40
DEFAULT_ORDER = 18
GRID_ORDER = 14
#: Inversion noise below this magnitude is clamped to zero in densities.
DENSITY_CLAMP = 1e-9
#: Largest acceptable |order - (order-2)| discrepancy for point inversions.
INVERSION_TOL = 1e-4


class InversionWarning(UserWarning):
    """Laplace inversion error exceeded the round-off noise floor."""


#: Highest order accepted anywhere (the pmf resolvent); tilde_ell stops at 20.
MAX_ORDER = 40


def _check_order(order: int, hi: int = 20) -> int:
    if order % 2 or not 8 <= order <= hi:
        raise ParameterError(f"inversion order must be even and within [8, {hi}], got {order}")
    return order


def mp_dps(order: int) -> int:
    """Working digits for an order-N inversion; the weights grow like 10**(0.45 N)."""
    return max(MP_DPS, int(2.2 * order) + 10)


@lru_cache(maxsize=None)
def stehfest_weights_mp(order: int) -> tuple:
    """Salzer-summed Gaver weights V_1..V_N, exact to the working precision."""
    _check_order(order, MAX_ORDER)
    with mpmath.workdps(mp_dps(order) + 20):
        M = order // 2
        out = []
        for i in range(1, order + 1):
            s = mpmath.mpf(0)
            for k in range((i + 1) // 2, min(i, M) + 1):
                s += mpmath.mpf(k) ** M * mpmath.factorial(2 * k) / (
                    mpmath.factorial(M - k) * mpmath.factorial(k) * mpmath.factorial(k - 1)
                    * mpmath.factorial(i - k) * mpmath.factorial(2 * k - i)
                )
            out.append((-1) ** (M + i) * s)
    return tuple(out)


@lru_cache(maxsize=None)
def stehfest_weights(order: int) -> np.ndarray:
    w = np.array([float(v) for v in stehfest_weights_mp(order)])
    w.setflags(write=False)
    return w


def invert_mp(F: Callable, t: float, order: int = DEFAULT_ORDER):
    """Invert F at time t in mpmath.

    ``F`` receives an mpf node and returns an mpf or a sequence of mpf (one
    inversion per component).  Returns a float or an ndarray.
    """
    _check_order(order, MAX_ORDER)
    with mpmath.workdps(mp_dps(order)):
        ln2t = mpmath.log(2) / mpmath.mpf(t)
        acc = None
        for i, v in enumerate(stehfest_weights_mp(order), start=1):
            val = F(i * ln2t)
            if isinstance(val, (list, tuple)):
                term = [v * x for x in val]
                acc = term if acc is None else [a + b for a, b in zip(acc, term)]
            else:
                acc = v * val if acc is None else acc + v * val
        if isinstance(acc, list):
            return np.array([float(ln2t * a) for a in acc])
        return float(ln2t * acc)


def invert_double(F: Callable, ts, order: int = GRID_ORDER) -> np.ndarray:
    """Invert F at every time in ``ts`` (all > 0) in double precision.

    ``F`` receives an array of nodes with shape (T, N) and returns shape
    (T, N) or (T, N, K).
    """
    _check_order(order)
    ts = np.asarray(ts, dtype=float)
    ln2t = math.log(2.0) / ts
    r = ln2t[:, None] * np.arange(1, order + 1)[None, :]
    vals = np.asarray(F(r))
    w = stehfest_weights(order)
    if vals.ndim == 3:
        return ln2t[:, None] * np.einsum("n,tnk->tk", w, vals)
    return ln2t * (vals @ w)


def invert_with_error(F: Callable, t: float, order: int = DEFAULT_ORDER):
    """mp inversion plus a discrepancy estimate against order - 2."""
    value = invert_mp(F, t, order)
    coarse = invert_mp(F, t, order - 2) if order > 8 else value
    return value, np.max(np.abs(np.asarray(value) - np.asarray(coarse)))


# ---------------------------------------------------------------------------
# methods


@dataclass(frozen=True)
class ClosedFormStable:
    """tilde_l = E_alpha(-lam t**alpha); only for Stable specs."""


@dataclass(frozen=True)
class NumericalInversion:
    order: int = DEFAULT_ORDER
    precision: str = "mp"

    def __post_init__(self):
        _check_order(self.order)
        if self.precision not in ("mp", "double"):
            raise ParameterError(f"precision must be 'mp' or 'double', got {self.precision!r}")


@dataclass(frozen=True)
class MonteCarlo:
    n: int = 100_000
    seed: int = 0
    refine_eps: float = 1e-3


TildeEllMethod = ClosedFormStable | NumericalInversion | MonteCarlo


def lt_density_t(spec: BernsteinSpec, r: float, x: float) -> float:
    """t-Laplace transform of the inverse-subordinator density: f(r)/r exp(-x f(r))."""
    if r <= 0:
        raise ParameterError("r must be positive")
    if x < 0:
        raise ParameterError("x must be nonnegative")
    fr = float(eval_f(spec, float(r)))
    return fr / r * math.exp(-x * fr)


def _tilde_transform(spec, lam):
    def F(r):
        fr = spec.value(r)
        return fr / (r * (lam + fr))

    return F


def tilde_ell(spec: BernsteinSpec, t: float, lam: float, method: TildeEllMethod = NumericalInversion()) -> float:
    """E exp(-lam Y(t)) for the inverse subordinator of ``spec``."""
    if lam < 0:
        raise ParameterError("lam must be nonnegative")
    if t < 0:
        raise ParameterError("t must be nonnegative")
    if lam == 0 or t == 0:
        return 1.0
    if isinstance(method, ClosedFormStable):
        if not isinstance(spec, Stable):
            raise MethodMismatchError("the Mittag-Leffler closed form needs a Stable spec")
        return specfun.mittag_leffler(spec.alpha, -lam * t**spec.alpha)
    if isinstance(method, MonteCarlo):
        return tilde_ell_monte_carlo(spec, t, lam, method)[0]
    if method.precision == "double":
        return float(tilde_ell_grid(spec, [t], lam, method.order)[0])
    value, err = invert_with_error(_tilde_transform(spec, lam), t, method.order)
    if err > INVERSION_TOL:
        raise AccuracyLossError(f"inversion unstable (discrepancy {err:.3g})", estimate=value, error=err)
    return value


def tilde_ell_grid(spec: BernsteinSpec, ts, lam: float, order: int = GRID_ORDER) -> np.ndarray:
    """Double-precision tilde_l on a time grid; t = 0 maps to 1."""
    ts = np.asarray(ts, dtype=float)
    out = np.ones_like(ts)
    pos = ts > 0
    if lam > 0 and pos.any():
        out[pos] = invert_double(_tilde_transform(spec, lam), ts[pos], order)
    return out


def tilde_ell_monte_carlo(spec: BernsteinSpec, t: float, lam: float, method: MonteCarlo = MonteCarlo()):
    """(mean, standard error) of exp(-lam Y(t)) over simulated first passages."""
    from .pathsim import RngStream, sample_inverse_passages

    ys = sample_inverse_passages(spec, t, method.n, RngStream(method.seed, 0), method.refine_eps)
    v = np.exp(-lam * ys)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v)))


def density_grid(
    spec: BernsteinSpec,
    t: float,
    xs,
    order: int = DEFAULT_ORDER,
    raw: bool = False,
    clamp: float = DENSITY_CLAMP,
) -> np.ndarray:
    """Density of Y(t) at the points ``xs`` by inverting f(r)/r exp(-x f(r)) in t.

    Requires an infinite Levy measure (and absolute continuity); compound Poisson and
    pure drift specs have no density and are rejected.  Negative values are
    set to zero unless ``raw``; those below ``-clamp`` exceed round-off and are
    Stehfest truncation error in the far tail, reported by an
    :class:`InversionWarning`.
    """
    if not spec.infinite_levy_measure:
        raise UnsupportedError(f"{spec.family} exponent has a finite Levy measure: Y(t) has no density")
    if t <= 0:
        raise ParameterError("t must be positive")
    xs = np.asarray(xs, dtype=float)
    if np.any(xs < 0):
        raise ParameterError("density grid points must be nonnegative")
    _check_order(order)
    with mpmath.workdps(mp_dps(order)):
        ln2t = mpmath.log(2) / mpmath.mpf(t)
        weights = stehfest_weights_mp(order)
        nodes = [i * ln2t for i in range(1, order + 1)]
        fr = [spec.value(r) for r in nodes]
        pre = [w * f / r for w, f, r in zip(weights, fr, nodes)]
        out = np.empty(len(xs))
        for j, x in enumerate(xs):
            xm = mpmath.mpf(x)
            out[j] = float(ln2t * mpmath.fsum(p * mpmath.exp(-xm * f) for p, f in zip(pre, fr)))
    if raw:
        return out
    if out.min() < -clamp:
        warnings.warn(
            f"density inversion error reached {out.min():.3g} (beyond the {clamp:g} noise floor); clamped to 0",
            InversionWarning,
            stacklevel=2,
        )
    return np.where(out < 0, 0.0, out)
