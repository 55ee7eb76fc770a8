"""Mittag-Leffler and generalized Wright functions for real arguments.

All three functions are power series summed with exact (``math.fsum``)
accumulation.  The driver stops once a geometric bound on the remainder falls
below ``1e-15 * |partial sum|`` and estimates the rounding error from the sum of
absolute terms.  When cancellation makes double precision insufficient, the
same series is re-summed in mpmath at a working precision chosen from the
measured cancellation.  ``mittag_leffler`` for strongly negative arguments uses
an integral representation instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import mpmath
import numpy as np
from scipy import integrate, special

from .errors import AccuracyLossError, ParameterError

MAX_TERMS = 10_000
_BLOCK = 64
_EPS = np.finfo(float).eps
#: Negative arguments below this take the integral route when alpha < ML_INTEGRAL_MAX_ALPHA.
ML_INTEGRAL_SWITCH = -10.0
ML_INTEGRAL_MAX_ALPHA = 0.9
#: Log of the largest series term the extended-precision fallback is asked to cancel.
ML_SERIES_MAX_LOGPEAK = math.log(1e40)


@dataclass(frozen=True)
class WrightParams:
    """Parameter lists of pPsi_q: ``upper = [(a_i, alpha_i)]``, ``lower = [(b_j, beta_j)]``."""

    upper: tuple
    lower: tuple

    def __post_init__(self):
        upper = tuple((float(a), float(al)) for a, al in self.upper)
        lower = tuple((float(b), float(be)) for b, be in self.lower)
        if any(al == 0 for _, al in upper) or any(be == 0 for _, be in lower):
            raise ParameterError("Wright scale parameters must be nonzero")
        if sum(al for _, al in upper) - sum(be for _, be in lower) <= -1:
            raise ParameterError("Wright series diverges: need sum(alpha) - sum(beta) > -1")
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "lower", lower)


def _is_pole(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return (x <= 0) & (x == np.round(x))


def _sum_series(
    log_terms: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    mp_term: Callable[[int], "mpmath.mpf"],
    rtol: float,
    what: str,
) -> tuple[float, float]:
    """Sum ``sum_k sign_k * exp(logabs_k)``; returns (value, abs error estimate)."""
    terms: list[float] = []
    k0 = 0
    converged = False
    while k0 < MAX_TERMS:
        k = np.arange(k0, k0 + _BLOCK, dtype=float)
        sign, logabs = log_terms(k)
        with np.errstate(under="ignore", over="ignore"):
            block = np.where(sign == 0, 0.0, sign * np.exp(logabs))
        terms.extend(block.tolist())
        k0 += _BLOCK
        total = math.fsum(terms)
        mags = np.abs(block)
        last, prev = mags[-1], mags[-2]
        if not np.isfinite(mags).all():
            raise AccuracyLossError(f"{what}: series terms overflow", estimate=float("nan"))
        if last == 0.0 and prev == 0.0:
            trunc = 0.0
            converged = True
            break
        ratio = last / prev if prev > 0 else 1.0
        if ratio < 1.0:
            trunc = last * ratio / (1.0 - ratio)
            if trunc <= 1e-15 * abs(total) or (total == 0.0 and trunc == 0.0):
                converged = True
                break
    if not converged:
        raise AccuracyLossError(
            f"{what}: series did not converge within {MAX_TERMS} terms", estimate=math.fsum(terms)
        )
    abs_sum = math.fsum(abs(t) for t in terms)
    err = 4 * _EPS * abs_sum + trunc
    if err <= rtol * abs(total) or abs_sum == 0.0:
        return total, err
    # Cancellation: redo in extended precision sized to the loss, re-sizing
    # once the extended sum reveals the true magnitude.
    value = total
    digits = 0
    for _ in range(4):
        need = 20 + int(math.ceil(math.log10(max(abs_sum / max(abs(value), 1e-300), 1.0))))
        if need <= digits:
            break
        digits = need
        if digits > 2000:
            raise AccuracyLossError(f"{what}: cancellation too severe", estimate=total, error=err)
        with mpmath.workdps(digits):
            s = mpmath.mpf(0)
            prev = None
            for k in range(MAX_TERMS):
                t = mp_term(k)
                s += t
                if k >= len(terms) and prev is not None and abs(t) < abs(prev) and abs(t) <= 1e-18 * abs(s):
                    break
                prev = t
            value = float(s)
    return value, 4 * _EPS * abs(value)


def _check(value_err, rtol, what):
    value, err = value_err
    if err > max(rtol * abs(value), 1e-300):
        raise AccuracyLossError(f"{what}: estimated error {err:.3g} exceeds tolerance", estimate=value, error=err)
    return value


def _ml_integral(alpha: float, x: float) -> tuple[float, float]:
    # E_alpha(-x) = sin(a pi)/(a pi) int_0^inf exp(-t u**(1/a)) / (u^2 + 2u cos(a pi) + 1) du,
    # with t = x**(1/a); the substitution r = u**(1/a) removes the r**(a-1) singularity.
    t = x ** (1.0 / alpha)
    c = math.cos(alpha * math.pi)

    def g(u):
        return math.exp(-t * u ** (1.0 / alpha)) / (u * u + 2.0 * u * c + 1.0)

    v1, e1 = integrate.quad(g, 0.0, 1.0, epsabs=1e-16, epsrel=1e-13, limit=200)
    v2, e2 = integrate.quad(g, 1.0, np.inf, epsabs=1e-16, epsrel=1e-13, limit=200)
    pref = math.sin(alpha * math.pi) / (alpha * math.pi)
    return pref * (v1 + v2), pref * (e1 + e2)


def ml_with_error(alpha: float, z: float, rtol: float = 1e-12) -> tuple[float, float]:
    """Mittag-Leffler E_alpha(z) together with an absolute error estimate."""
    if not (0.0 < alpha <= 1.0):
        raise ParameterError(f"Mittag-Leffler alpha must lie in (0, 1], got {alpha}")
    z = float(z)
    if alpha == 1.0:
        return math.exp(z), _EPS * math.exp(z)
    if z == 0.0:
        return 1.0, 0.0
    if z < 0.0:
        # Peak term of the alternating series, to decide whether double precision survives.
        k = np.arange(0, MAX_TERMS, dtype=float)
        peak = np.max(k * math.log(-z) - special.gammaln(alpha * k + 1.0))
        # The integral is ill-conditioned as alpha -> 1, so moderate cancellation
        # goes to the series and its extended-precision fallback instead.
        if peak > ML_SERIES_MAX_LOGPEAK or (z < ML_INTEGRAL_SWITCH and alpha < ML_INTEGRAL_MAX_ALPHA):
            return _ml_integral(alpha, -z)
    logz = math.log(abs(z))
    neg = z < 0

    def log_terms(k):
        sign = np.where(neg & (k % 2 == 1), -1.0, 1.0)
        return sign, k * logz - special.gammaln(alpha * k + 1.0)

    def mp_term(k):
        return mpmath.mpf(z) ** k * mpmath.rgamma(mpmath.mpf(alpha) * k + 1)

    return _sum_series(log_terms, mp_term, rtol, "mittag_leffler")


def mittag_leffler(alpha: float, z: float, rtol: float = 1e-12) -> float:
    """One-parameter Mittag-Leffler function sum_k z^k / Gamma(alpha k + 1)."""
    return _check(ml_with_error(alpha, z, rtol), max(rtol, 1e-10), "mittag_leffler")


def ml_three_param(rho: float, delta: float, gamma: float, z: float, rtol: float = 1e-12) -> float:
    """Prabhakar function sum_k (gamma)_k z^k / (k! Gamma(rho k + delta))."""
    for name, v in (("rho", rho), ("delta", delta), ("gamma", gamma)):
        if not v > 0:
            raise ParameterError(f"{name} must be positive, got {v}")
    z = float(z)
    if z == 0.0:
        return 1.0 / special.gamma(delta)
    logz = math.log(abs(z))
    neg = z < 0
    lg0 = special.gammaln(gamma)

    def log_terms(k):
        sign = np.where(neg & (k % 2 == 1), -1.0, 1.0)
        return sign, (
            special.gammaln(gamma + k) - lg0 - special.gammaln(k + 1.0) - special.gammaln(rho * k + delta) + k * logz
        )

    def mp_term(k):
        return (
            mpmath.rf(mpmath.mpf(gamma), k) * mpmath.mpf(z) ** k / mpmath.factorial(k)
            * mpmath.rgamma(mpmath.mpf(rho) * k + mpmath.mpf(delta))
        )

    return _check(_sum_series(log_terms, mp_term, rtol, "ml_three_param"), max(rtol, 1e-10), "ml_three_param")


def wright_psi(params: WrightParams, z: float, rtol: float = 1e-12) -> float:
    """Generalized Wright function pPsi_q.

    A term whose lower Gamma argument is a nonpositive integer is exactly zero
    (1/Gamma vanishes there), even if an upper argument also sits on a pole.
    """
    if not isinstance(params, WrightParams):
        params = WrightParams(*params)
    up = np.array(params.upper).reshape(-1, 2)
    lo = np.array(params.lower).reshape(-1, 2)
    z = float(z)

    def args(k):
        ua = up[:, :1] + up[:, 1:] * k[None, :]
        la = lo[:, :1] + lo[:, 1:] * k[None, :]
        return ua, la

    def log_terms(k):
        ua, la = args(k)
        zero = _is_pole(la).any(axis=0)
        if (_is_pole(ua).any(axis=0) & ~zero).any():
            raise ParameterError("Wright series hits a pole of an upper Gamma factor")
        with np.errstate(invalid="ignore", divide="ignore"):
            la_safe = np.where(_is_pole(la), 0.5, la)
            ua_safe = np.where(_is_pole(ua), 0.5, ua)
            logabs = special.gammaln(ua_safe).sum(axis=0) - special.gammaln(la_safe).sum(axis=0)
            sign = special.gammasgn(ua_safe).prod(axis=0) * special.gammasgn(la_safe).prod(axis=0)
            if z == 0.0:
                zpart = np.where(k == 0, 0.0, -np.inf)
            else:
                zpart = k * math.log(abs(z))
                sign = sign * np.where((z < 0) & (k % 2 == 1), -1.0, 1.0)
            logabs = logabs + zpart - special.gammaln(k + 1.0)
        sign = np.where(zero | np.isneginf(logabs), 0.0, sign)
        return sign, np.where(sign == 0, -np.inf, logabs)

    def mp_term(k):
        t = mpmath.mpf(z) ** k / mpmath.factorial(k)
        for a, al in params.upper:
            t *= mpmath.gamma(mpmath.mpf(a) + mpmath.mpf(al) * k) if not _is_pole(a + al * k) else 0
        for b, be in params.lower:
            t *= mpmath.rgamma(mpmath.mpf(b) + mpmath.mpf(be) * k)
        return t

    if z == 0.0:
        sign, logabs = log_terms(np.array([0.0]))
        return float(sign[0] * np.exp(logabs[0])) if sign[0] != 0 else 0.0
    return _check(_sum_series(log_terms, mp_term, rtol, "wright_psi"), max(rtol, 1e-10), "wright_psi")
