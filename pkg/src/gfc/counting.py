"""Probability mass functions of Poisson and generalized counting processes
under subordination and inverse-subordinator time changes.

Every pmf vector solves a lower-triangular Toeplitz system.  The outer law
(Poisson or GCP), optionally composed with a Bernstein function psi, has the
generator

    G = -psi(Lambda (I - D)),   D = sum_j (lambda_j / Lambda) B^j,

with B the backshift.  D is nilpotent on the truncated index space, so the
Taylor expansion of psi at Lambda terminates and G is exact.  Without a time
change p(t) = exp(t G) e_0.  With the inverse subordinator of f,

    p(t) = int exp(u G) e_0 l_f(t, u) du,
    L_t[p](r) = f(r)/r (f(r) I - G)^{-1} e_0,

solved per inversion node by forward substitution and inverted in t.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import mpmath
import numpy as np
from scipy import linalg, special

from . import io, specfun
from .bernstein import DERIVATIVE_CAP, IDENTITY, BernsteinSpec, Stable, taylor_coefficients
from .errors import MethodMismatchError, ParameterError, UnsupportedOrderError
from .gfcalc import EIGEN_TOL, DEFAULT_T_MIN, SampledFunction, admissible, cd_derivative_all, make_report
from .laplace import (
    GRID_ORDER,
    MAX_ORDER,
    InversionWarning,
    MonteCarlo,
    _check_order,
    invert_double,
    mp_dps,
    stehfest_weights_mp,
    tilde_ell,
)
from .process import GCP, Poisson, ProcessSpec

INITIAL_NMAX = 32
NMAX_CAP = DERIVATIVE_CAP
MASS_TOL = 1e-8
NEG_CLAMP = 1e-12


# ---------------------------------------------------------------------------
# combinatorics and base pmfs


@dataclass(frozen=True)
class OmegaTuple:
    x: tuple

    @property
    def z(self) -> int:
        return sum(self.x)


@lru_cache(maxsize=256)
def _omega(k: int, n: int) -> tuple:
    if k == 1:
        return ((n,),)
    tails = []
    for xk in range(n // k + 1):
        for rest in _omega(k - 1, n - k * xk):
            tails.append(rest + (xk,))
    return tuple(sorted(tails))


def omega_set(k: int, n: int) -> list[OmegaTuple]:
    """All (x_1..x_k) >= 0 with sum_j j x_j = n, in lexicographic order."""
    if k < 1 or n < 0:
        raise ParameterError("need k >= 1 and n >= 0")
    return [OmegaTuple(x) for x in _omega(int(k), int(n))]


def poisson_pmf(lam: float, t: float, k: int) -> float:
    if t == 0 or lam == 0:
        return 1.0 if k == 0 else 0.0
    mu = lam * t
    return math.exp(k * math.log(mu) - mu - math.lgamma(k + 1))


def gcp_pmf(rates, t: float, n: int) -> float:
    rates = tuple(float(r) for r in rates)
    if any(not r > 0 for r in rates):
        raise ParameterError("rates must be positive")
    if t == 0:
        return 1.0 if n == 0 else 0.0
    logs = np.log(np.asarray(rates) * t)
    total = sum(rates) * t
    terms = [
        math.exp(float(np.dot(o.x, logs)) - sum(math.lgamma(x + 1) for x in o.x) - total)
        for o in omega_set(len(rates), n)
    ]
    return math.fsum(terms)


# ---------------------------------------------------------------------------
# generator


@dataclass(frozen=True)
class GeneratorMatrix:
    """Lower-triangular Toeplitz matrix with entry (n, n - m) = coeffs[m]."""

    coeffs: np.ndarray

    @property
    def nmax(self) -> int:
        return len(self.coeffs) - 1

    @property
    def diagonal(self) -> float:
        return float(self.coeffs[0])

    def dense(self) -> np.ndarray:
        return linalg.toeplitz(self.coeffs, np.zeros(len(self.coeffs)))


def _outer_poly(outer) -> tuple[float, np.ndarray]:
    """(Lambda, d) with D = sum_j d_j B^j."""
    rates = np.asarray(outer.rates, dtype=float)
    lam = float(rates.sum())
    return lam, np.concatenate([[0.0], rates / lam])


def build_generator(outer, psi: BernsteinSpec | None, nmax: int) -> GeneratorMatrix:
    if nmax < 1:
        raise ParameterError("nmax must be positive")
    if nmax > DERIVATIVE_CAP:
        raise UnsupportedOrderError(f"nmax {nmax} exceeds the derivative cap {DERIVATIVE_CAP}")
    psi = IDENTITY if psi is None else psi
    lam, d = _outer_poly(outer)
    sigma = taylor_coefficients(psi, lam, nmax, lam)
    # psi(Lambda (I - D)) = sum_m sigma_m (-D)^m, truncated at degree nmax.
    neg_d = -d[: nmax + 1]
    power = np.zeros(nmax + 1)
    power[0] = 1.0
    acc = sigma[0] * power
    for m in range(1, nmax + 1):
        power = np.convolve(power, neg_d)[: nmax + 1]
        acc = acc + sigma[m] * power
    return GeneratorMatrix(-acc)


# ---------------------------------------------------------------------------
# tables


#: Default resolvent order.  Counting pmfs such as e^{-t} t^k / k! converge
#: slowly under Gaver-Stehfest; order 24 reaches about 1e-7 where 18 stalls
#: near 1e-5.
RESOLVENT_ORDER = 24


@dataclass(frozen=True)
class Resolvent:
    order: int = RESOLVENT_ORDER

    def __post_init__(self):
        _check_order(self.order, MAX_ORDER)


@dataclass(frozen=True)
class StableClosedForm:
    pass


PmfMethod = Resolvent | MonteCarlo | StableClosedForm


@dataclass
class PmfTable:
    t: float
    probs: np.ndarray
    mass_deficit: float
    method: str
    nmax: int
    cap_hit: bool = False
    stderr: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def rows(self):
        return [(n, p) for n, p in enumerate(self.probs)]

    def metadata(self) -> dict:
        return dict(
            self.meta,
            t=self.t,
            method=self.method,
            mass_deficit=self.mass_deficit,
            nmax=self.nmax,
            cap_hit=self.cap_hit,
        )

    def csv_text(self, with_meta: bool = True) -> str:
        return io.csv_text(["n", "p_n"], self.rows(), self.metadata() if with_meta else None)

    def write(self, path) -> None:
        io.write_outputs(path, ["n", "p_n"], self.rows(), self.metadata())


def _finish(t, probs, method, nmax, cap_hit=False, stderr=None, meta=None) -> PmfTable:
    probs = np.asarray(probs, dtype=float)
    if probs.min() < -NEG_CLAMP:
        warnings.warn(
            f"pmf inversion error reached {probs.min():.3g}; negative entries clamped to 0",
            InversionWarning,
            stacklevel=3,
        )
    # The deficit is taken before clamping: inversion noise is not mass.
    deficit = 1.0 - math.fsum(probs)
    probs = np.where(probs < 0, 0.0, probs)
    return PmfTable(float(t), probs, deficit, method, nmax, cap_hit, stderr, meta or {})


def _adaptive(compute, nmax: int | None, cap: int):
    """Run ``compute(n)`` at the requested n, or double n from 32 until the
    mass deficit is at most 1e-8 or the cap is reached."""
    if nmax is not None:
        if nmax < 0:
            raise ParameterError("nmax must be nonnegative")
        return compute(nmax), False
    n = min(INITIAL_NMAX, cap)
    while True:
        probs = compute(n)
        if 1.0 - math.fsum(probs) <= MASS_TOL:
            return probs, False
        if n >= cap:
            return probs, True
        n = min(2 * n, cap)


def series_exp(coeffs: np.ndarray, t) -> np.ndarray:
    """exp(t G) e_0 for the Toeplitz generator with first column ``coeffs``.

    The generating function P(z) = exp(t g(z)) satisfies P' = t g' P, giving
    n h_n = t sum_k k c_k h_{n-k}.  All c_k (k >= 1) are nonnegative, so the
    recursion adds positive terms only.  ``t`` may be an array.
    """
    t = np.asarray(t, dtype=float)
    n = len(coeffs) - 1
    h = np.zeros(t.shape + (n + 1,))
    h[..., 0] = np.exp(t * coeffs[0])
    kc = np.arange(n + 1) * coeffs
    for m in range(1, n + 1):
        h[..., m] = t / m * (h[..., m - 1::-1] @ kc[1 : m + 1])
    return h


def pmf_no_inverse(process: ProcessSpec, t: float, nmax: int | None = None, cap: int = NMAX_CAP) -> PmfTable:
    """pmf of outer(H^psi(t)) (or of the outer process itself without psi)."""
    if process.inverse is not None:
        raise ParameterError("process has an inverse subordinator; use pmf_time_changed")
    if t < 0:
        raise ParameterError("t must be nonnegative")

    def compute(n):
        if n == 0:
            return np.array([math.exp(t * build_generator(process.outer, process.inner, 1).diagonal)])
        return series_exp(build_generator(process.outer, process.inner, n).coeffs, t)

    probs, cap_hit = _adaptive(compute, nmax, cap)
    return _finish(t, probs, "series-exp", len(probs) - 1, cap_hit, meta={"process": process.to_dict()})


def _resolvent_mp(process: ProcessSpec, t: float, n: int, order: int) -> np.ndarray:
    coeffs = build_generator(process.outer, process.inner, max(n, 1)).coeffs[: n + 1]
    f = process.inverse
    with mpmath.workdps(mp_dps(order)):
        c = [mpmath.mpf(float(x)) for x in coeffs]
        tail = c[1:]
        ln2t = mpmath.log(2) / mpmath.mpf(t)
        acc = [mpmath.mpf(0)] * (n + 1)
        for i, w in enumerate(stehfest_weights_mp(order), start=1):
            r = i * ln2t
            fr = f.value(r)
            piv = fr - c[0]
            x = [1 / piv]
            for m in range(1, n + 1):
                x.append(mpmath.fdot(tail[:m], x[::-1]) / piv)
            scale = w * fr / r
            acc = [a + scale * xm for a, xm in zip(acc, x)]
        return np.array([float(ln2t * a) for a in acc])


def _stable_closed_form(alpha: float, lam: float, t: float, n: int) -> np.ndarray:
    """p_k = sum_{j >= k} (-1)^(j-k) C(j, k) z^j / Gamma(alpha j + 1), z = lam t^alpha."""
    z = lam * t**alpha
    # Bound every term by C(j, min(n, j/2)) z^j / Gamma(alpha j + 1) to size the
    # series length and the working precision.
    j = np.arange(0, 200_000, dtype=float)
    kk = np.minimum(n, np.floor(j / 2))
    logb = (
        special.gammaln(j + 1) - special.gammaln(kk + 1) - special.gammaln(j - kk + 1)
        + j * math.log(z) - special.gammaln(alpha * j + 1)
    )
    peak = int(np.argmax(logb))
    past = np.nonzero((j > max(peak, n)) & (logb < -120.0))[0]
    if not past.size:
        raise ParameterError("stable closed form: series too long for these parameters")
    jmax = int(past[0])
    dps = 30 + int(max(logb[peak], 0.0) / math.log(10))
    with mpmath.workdps(dps):
        zm, am = mpmath.mpf(z), mpmath.mpf(alpha)
        a = [zm**jj * mpmath.rgamma(am * jj + 1) for jj in range(jmax + 1)]
        out = []
        for k in range(n + 1):
            s = mpmath.mpf(0)
            binom = mpmath.mpf(1)
            for jj in range(k, jmax + 1):
                term = binom * a[jj]
                s += term if (jj - k) % 2 == 0 else -term
                binom = binom * (jj + 1) / (jj + 1 - k)
            out.append(float(s))
    return np.array(out)


def pmf_time_changed(
    process: ProcessSpec,
    t: float,
    nmax: int | None = None,
    method: PmfMethod = Resolvent(),
    cap: int = NMAX_CAP,
) -> PmfTable:
    """pmf of outer(H^psi(Y^f(t)))."""
    f = process.inverse
    if f is None:
        raise ParameterError("process has no inverse subordinator; use pmf_no_inverse")
    if t < 0:
        raise ParameterError("t must be nonnegative")
    meta = {"process": process.to_dict()}
    if t == 0:
        n = INITIAL_NMAX if nmax is None else nmax
        return _finish(0.0, np.eye(1, n + 1)[0], "initial", n, meta=meta)

    if isinstance(method, MonteCarlo):
        from .pathsim import RngStream, sample_counts

        draws = sample_counts(process, t, method.n, RngStream(method.seed, 0), method.refine_eps)
        n = int(draws.max()) if nmax is None else nmax
        probs = np.bincount(np.minimum(draws, n + 1), minlength=n + 2)[: n + 1] / len(draws)
        stderr = np.sqrt(probs * (1 - probs) / len(draws))
        meta.update(seed=method.seed, draws=method.n, refine_eps=method.refine_eps)
        return _finish(t, probs, "monte-carlo", n, stderr=stderr, meta=meta)

    if isinstance(method, StableClosedForm):
        if not (isinstance(f, Stable) and isinstance(process.outer, Poisson) and process.inner is None):
            raise MethodMismatchError("the stable closed form needs a Poisson outer law, no psi, and a Stable f")
        probs, cap_hit = _adaptive(lambda n: _stable_closed_form(f.alpha, process.outer.rate, t, n), nmax, cap)
        return _finish(t, probs, "stable-closed-form", len(probs) - 1, cap_hit, meta=meta)

    probs, cap_hit = _adaptive(lambda n: _resolvent_mp(process, t, n, method.order), nmax, cap)
    meta["order"] = method.order
    return _finish(t, probs, "resolvent", len(probs) - 1, cap_hit, meta=meta)


def pmf(process: ProcessSpec, t: float, nmax: int | None = None, method: PmfMethod = Resolvent()) -> PmfTable:
    """Dispatch to :func:`pmf_no_inverse` or :func:`pmf_time_changed`."""
    if process.inverse is None:
        return pmf_no_inverse(process, t, nmax)
    return pmf_time_changed(process, t, nmax, method)


# ---------------------------------------------------------------------------
# pgf and closed forms


def pgf(process: ProcessSpec, u: float, t: float) -> float:
    """E u^N(t) for |u| <= 1."""
    if not -1.0 <= u <= 1.0:
        raise ParameterError("u must lie in [-1, 1]")
    if t < 0:
        raise ParameterError("t must be nonnegative")
    arg = math.fsum(lam * (1.0 - u**j) for j, lam in enumerate(process.outer.rates, start=1))
    if process.inner is not None:
        arg = float(process.inner.value(arg))
    if process.inverse is None:
        return math.exp(-t * arg)
    return tilde_ell(process.inverse, t, arg)


def gn_pmf_closed(rates, lam: float, alpha: float, beta: float, t: float, n: int) -> float:
    """pmf of a GCP with the given rates run on a compound Poisson-Gamma clock
    (rate lam, Gamma(alpha, beta) jumps), at time t."""
    rates = tuple(float(r) for r in rates)
    for name, v in (("lam", lam), ("alpha", alpha), ("beta", beta), ("t", t)):
        if not v > 0:
            raise ParameterError(f"{name} must be positive")
    if any(not r > 0 for r in rates):
        raise ParameterError("rates must be positive")
    big = sum(rates)
    scale = big + beta
    x = lam * t * math.exp(alpha * (math.log(beta) - math.log(scale)))
    total = 1.0 if n == 0 else 0.0
    for o in omega_set(len(rates), n):
        z = o.z
        weight = math.exp(
            sum(xj * math.log(r) - math.lgamma(xj + 1) for xj, r in zip(o.x, rates)) - z * math.log(scale)
        )
        if alpha == 1.0:
            # 1Psi1((z,1),(0,1); x) = Gamma(z+1) x E^{z+1}_{1,2}(x); the k = 0 term is zero.
            psi = math.gamma(z + 1) * x * specfun.ml_three_param(1.0, 2.0, z + 1.0, x)
        else:
            psi = specfun.wright_psi(specfun.WrightParams(((z, alpha),), ((0.0, alpha),)), x)
        total += weight * psi
    return math.exp(-lam * t) * total


# ---------------------------------------------------------------------------
# governing equations


def pmf_grid(process: ProcessSpec, ts, n: int, order: int = GRID_ORDER) -> np.ndarray:
    """p_0..p_n at every time in ``ts`` (double precision), shape (T, n + 1)."""
    ts = np.asarray(ts, dtype=float)
    coeffs = build_generator(process.outer, process.inner, max(n, 1)).coeffs[: n + 1]
    if process.inverse is None:
        return series_exp(coeffs, ts)
    f = process.inverse
    out = np.zeros((len(ts), n + 1))
    out[ts == 0, 0] = 1.0
    pos = ts > 0

    def F(r):
        fr = np.asarray(f.value(r), dtype=float)
        piv = fr - coeffs[0]
        x = np.zeros(r.shape + (n + 1,))
        x[..., 0] = 1.0 / piv
        for m in range(1, n + 1):
            x[..., m] = (x[..., m - 1::-1] @ coeffs[1 : m + 1]) / piv
        return (fr / r)[..., None] * x

    if pos.any():
        out[pos] = invert_double(F, ts[pos], order)
    return out


def governing_residual(
    process: ProcessSpec,
    n: int,
    h: float = 1e-3,
    t_min: float = DEFAULT_T_MIN,
    t_max: float = 1.0,
    tol: float = EIGEN_TOL,
    order: int = GRID_ORDER,
):
    """Residual of D^f p_n - (G p)_n on [t_min, t_max]; f absent means d/dt."""
    if n < 0:
        raise ParameterError("n must be nonnegative")
    steps = int(round(t_max / h))
    grid = np.arange(steps + 1) * h
    probs = pmf_grid(process, grid, n, order)
    coeffs = build_generator(process.outer, process.inner, max(n, 1)).coeffs[: n + 1]
    f = process.inverse if process.inverse is not None else IDENTITY
    lhs = cd_derivative_all(f, SampledFunction(grid, probs[:, n]))
    rhs = probs[:, n::-1] @ coeffs
    keep = admissible(grid, t_min, h)
    return make_report(grid[keep], (lhs - rhs)[keep], tol)


def omega_coefficient(outer, psi: BernsteinSpec | None, m: int) -> float:
    """Generator entry (n, n - m) as the explicit sum over Omega(k, m)."""
    psi = IDENTITY if psi is None else psi
    rates = outer.rates
    lam = sum(rates)
    total = []
    for o in omega_set(len(rates), m):
        z = o.z
        if z == 0:
            deriv = float(psi.value(lam))
        else:
            sign, logabs = psi.derivative_log(np.array([z]), lam)
            if sign[0] == 0:
                continue
            deriv = float(sign[0] * math.exp(logabs[0]))
        prod = 1.0
        for xj, r in zip(o.x, rates):
            prod *= (-r) ** xj / math.factorial(xj)
        total.append(deriv * prod)
    return -math.fsum(total)


__all__ = [
    "GCP",
    "Poisson",
    "ProcessSpec",
    "OmegaTuple",
    "omega_set",
    "poisson_pmf",
    "gcp_pmf",
    "GeneratorMatrix",
    "build_generator",
    "Resolvent",
    "StableClosedForm",
    "MonteCarlo",
    "PmfTable",
    "pmf_no_inverse",
    "pmf_time_changed",
    "pmf",
    "pgf",
    "gn_pmf_closed",
    "pmf_grid",
    "governing_residual",
    "omega_coefficient",
    "series_exp",
]
