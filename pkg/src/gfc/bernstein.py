"""Bernstein functions: Laplace exponents of subordinators.

A Bernstein function has the Levy-Khintchine form

    f(x) = a + b x + int_0^inf (1 - exp(-x s)) nu_bar(ds),

and the kernel of the convolution-type derivatives is its Levy tail
``nu(s) = a + nu_bar(s, inf)``.  Every catalog family carries closed forms for
the value, all derivatives, the tail and cell integrals of the tail.

Values accept floats, numpy arrays and ``mpmath.mpf`` scalars; the last is used
by the high-precision Laplace inversion.
"""
from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Callable, ClassVar, Sequence

import mpmath
import numpy as np
from scipy import integrate, special

from .errors import ParameterError, UnsupportedError, UnsupportedOrderError

#: Highest derivative order served by :func:`eval_derivative` and the Taylor
#: coefficient routines.  Matches the hard nmax cap of the pmf solvers.
DERIVATIVE_CAP = 512


def _is_mp(x) -> bool:
    return isinstance(x, (mpmath.mpf, mpmath.mpc))


def _positive(name, value):
    if not (isinstance(value, (int, float, np.floating, np.integer)) and math.isfinite(value) and value > 0):
        raise ParameterError(f"{name} must be a positive finite real, got {value!r}")
    return float(value)


@dataclass(frozen=True)
class BernsteinSpec:
    """Base class of all Bernstein-function families."""

    family: ClassVar[str] = "abstract"

    @property
    def killing(self) -> float:
        return 0.0

    @property
    def drift(self) -> float:
        return 0.0

    @property
    def infinite_levy_measure(self) -> bool:
        """Whether nu_bar(0, inf) is infinite, so that Y(t) has a density."""
        return False

    @property
    def simulatable(self) -> bool:
        return True

    def value(self, x):
        raise NotImplementedError

    def derivative_log(self, m: np.ndarray, x: float) -> tuple[np.ndarray, np.ndarray]:
        """Sign and log-magnitude of the m-th derivative at x, for m >= 1."""
        raise NotImplementedError

    def tail(self, s):
        raise NotImplementedError

    def tail_integral(self, lo, hi):
        """Integral of nu over [lo, hi], elementwise."""
        raise NotImplementedError

    def params(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"family": self.family, "params": self.params()}

    def __add__(self, other):
        return sum_exponents([self, other])


@dataclass(frozen=True)
class Stable(BernsteinSpec):
    """f(x) = x**alpha, 0 < alpha <= 1 (alpha = 1 is the identity)."""

    alpha: float
    family: ClassVar[str] = "stable"

    def __post_init__(self):
        a = _positive("alpha", self.alpha)
        if a > 1.0:
            raise ParameterError(f"stable alpha must lie in (0, 1], got {a}")
        object.__setattr__(self, "alpha", a)

    @property
    def drift(self):
        return 1.0 if self.alpha == 1.0 else 0.0

    @property
    def infinite_levy_measure(self):
        return self.alpha < 1.0

    def value(self, x):
        if _is_mp(x):
            return x ** mpmath.mpf(self.alpha)
        return np.power(x, self.alpha) if isinstance(x, np.ndarray) else float(x) ** self.alpha

    def derivative_log(self, m, x):
        m = np.asarray(m, dtype=float)
        if x <= 0 and self.alpha < 1.0:
            raise ParameterError("derivatives of x**alpha are unbounded at x = 0")
        if self.alpha == 1.0:
            sign = np.where(m == 1, 1.0, 0.0)
            return sign, np.where(m == 1, 0.0, -np.inf)
        a = self.alpha
        sign = np.where(m % 2 == 1, 1.0, -1.0)
        logabs = math.log(a) + special.gammaln(m - a) - special.gammaln(1.0 - a) + (a - m) * math.log(x)
        return sign, logabs

    def tail(self, s):
        s = np.asarray(s, dtype=float)
        if self.alpha == 1.0:
            return np.zeros_like(s)[()]
        return (s ** -self.alpha / special.gamma(1.0 - self.alpha))[()]

    def tail_integral(self, lo, hi):
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        if self.alpha == 1.0:
            return np.zeros(np.broadcast(lo, hi).shape)[()]
        e = 1.0 - self.alpha
        return ((hi**e - lo**e) / special.gamma(1.0 + e))[()]

    def params(self):
        return {"alpha": self.alpha}


@dataclass(frozen=True)
class CompoundPoissonGamma(BernsteinSpec):
    """Compound Poisson subordinator with rate ``lam`` and Gamma(shape ``alpha``,
    rate ``beta``) jumps: f(u) = lam (1 - (beta / (beta + u))**alpha)."""

    lam: float
    alpha: float
    beta: float
    family: ClassVar[str] = "cpg"

    def __post_init__(self):
        for name in ("lam", "alpha", "beta"):
            object.__setattr__(self, name, _positive(name, getattr(self, name)))

    def value(self, x):
        if _is_mp(x):
            return self.lam * -mpmath.expm1(-self.alpha * mpmath.log1p(x / self.beta))
        return self.lam * -np.expm1(-self.alpha * np.log1p(np.asarray(x, dtype=float) / self.beta))[()]

    def derivative_log(self, m, x):
        m = np.asarray(m, dtype=float)
        a, b = self.alpha, self.beta
        sign = np.where(m % 2 == 1, 1.0, -1.0)
        logabs = (
            math.log(self.lam) + a * math.log(b) + special.gammaln(a + m) - special.gammaln(a)
            - (a + m) * math.log(b + x)
        )
        return sign, logabs

    def tail(self, s):
        return (self.lam * special.gammaincc(self.alpha, self.beta * np.asarray(s, dtype=float)))[()]

    def _tail_antiderivative(self, s):
        a, b = self.alpha, self.beta
        return s * special.gammaincc(a, b * s) - (a / b) * special.gammaincc(a + 1.0, b * s)

    def tail_integral(self, lo, hi):
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        return (self.lam * (self._tail_antiderivative(hi) - self._tail_antiderivative(lo)))[()]

    def params(self):
        return {"lam": self.lam, "alpha": self.alpha, "beta": self.beta}


@dataclass(frozen=True)
class CompoundPoissonExp(BernsteinSpec):
    """Compound Poisson subordinator with Exp(``beta``) jumps: f(u) = lam u / (beta + u)."""

    lam: float
    beta: float
    family: ClassVar[str] = "cpe"

    def __post_init__(self):
        for name in ("lam", "beta"):
            object.__setattr__(self, name, _positive(name, getattr(self, name)))

    def value(self, x):
        if not _is_mp(x):
            x = np.asarray(x, dtype=float)
            return (self.lam * x / (self.beta + x))[()]
        return self.lam * x / (self.beta + x)

    def derivative_log(self, m, x):
        m = np.asarray(m, dtype=float)
        sign = np.where(m % 2 == 1, 1.0, -1.0)
        logabs = (
            math.log(self.lam) + math.log(self.beta) + special.gammaln(m + 1.0)
            - (m + 1.0) * math.log(self.beta + x)
        )
        return sign, logabs

    def tail(self, s):
        return (self.lam * np.exp(-self.beta * np.asarray(s, dtype=float)))[()]

    def tail_integral(self, lo, hi):
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        b = self.beta
        return (self.lam * np.exp(-b * lo) * -np.expm1(-b * (hi - lo)) / b)[()]

    def params(self):
        return {"lam": self.lam, "beta": self.beta}


@dataclass(frozen=True)
class PureDrift(BernsteinSpec):
    """f(x) = b x: the deterministic subordinator H(t) = b t."""

    b: float
    family: ClassVar[str] = "drift"

    def __post_init__(self):
        object.__setattr__(self, "b", _positive("b", self.b))

    @property
    def drift(self):
        return self.b

    def value(self, x):
        if not _is_mp(x):
            return (self.b * np.asarray(x, dtype=float))[()]
        return self.b * x

    def derivative_log(self, m, x):
        m = np.asarray(m, dtype=float)
        return np.where(m == 1, 1.0, 0.0), np.where(m == 1, math.log(self.b), -np.inf)

    def tail(self, s):
        return np.zeros_like(np.asarray(s, dtype=float))[()]

    def tail_integral(self, lo, hi):
        return np.zeros(np.broadcast(np.asarray(lo), np.asarray(hi)).shape)[()]

    def params(self):
        return {"b": self.b}


@dataclass(frozen=True)
class Sum(BernsteinSpec):
    """Exponent of a sum of independent subordinators."""

    components: tuple
    family: ClassVar[str] = "sum"

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ParameterError("a sum needs at least one component")
        for c in comps:
            if not isinstance(c, BernsteinSpec):
                raise ParameterError(f"sum component is not a BernsteinSpec: {c!r}")
        object.__setattr__(self, "components", comps)

    @property
    def killing(self):
        return sum(c.killing for c in self.components)

    @property
    def drift(self):
        return sum(c.drift for c in self.components)

    @property
    def infinite_levy_measure(self):
        return any(c.infinite_levy_measure for c in self.components)

    @property
    def simulatable(self):
        return all(c.simulatable for c in self.components)

    def value(self, x):
        vals = [c.value(x) for c in self.components]
        return mpmath.fsum(vals) if _is_mp(x) else sum(vals[1:], vals[0])

    def derivative_log(self, m, x):
        # Completely monotone: all components share the sign (-1)**(m+1).
        m = np.asarray(m, dtype=float)
        logs = np.array([c.derivative_log(m, x)[1] for c in self.components])
        sign = np.where(m % 2 == 1, 1.0, -1.0)
        logabs = special.logsumexp(logs, axis=0)
        return np.where(np.isneginf(logabs), 0.0, sign), logabs

    def tail(self, s):
        vals = [c.tail(s) for c in self.components]
        return sum(vals[1:], vals[0])

    def tail_integral(self, lo, hi):
        vals = [c.tail_integral(lo, hi) for c in self.components]
        return sum(vals[1:], vals[0])

    def params(self):
        return {"components": [c.to_dict() for c in self.components]}


_SAFE_FUNCS = {
    "exp": np.exp, "log": np.log, "sqrt": np.sqrt, "expm1": np.expm1, "log1p": np.log1p,
    "sin": np.sin, "cos": np.cos, "abs": np.abs, "minimum": np.minimum, "maximum": np.maximum,
    "gamma": special.gamma, "gammaincc": special.gammaincc, "erfc": special.erfc,
}
_SAFE_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
)


def compile_tail_expr(expr: str) -> Callable:
    """Compile an arithmetic expression in ``s`` into a vectorised tail function.

    Only arithmetic, numeric literals and a small set of numpy/scipy functions
    are accepted.
    """
    tree = ast.parse(expr, mode="eval")
    for node in ast.walk(tree):
        if not isinstance(node, _SAFE_NODES):
            raise ParameterError(f"disallowed syntax in tail expression: {type(node).__name__}")
        if isinstance(node, ast.Name) and node.id != "s" and node.id not in _SAFE_FUNCS:
            raise ParameterError(f"unknown name in tail expression: {node.id}")
        if isinstance(node, ast.Call) and not (isinstance(node.func, ast.Name) and node.func.id in _SAFE_FUNCS):
            raise ParameterError("only whitelisted functions may be called in a tail expression")
    code = compile(tree, "<tail>", "eval")

    def tail(s):
        return eval(code, {"__builtins__": {}}, dict(_SAFE_FUNCS, s=np.asarray(s, dtype=float)))

    return tail


@dataclass(frozen=True)
class Custom(BernsteinSpec):
    """User-supplied exponent given by killing ``a``, drift ``b`` and the tail
    ``nu_bar(s, inf)``.

    Evaluation uses ``f(x) = a + b x + x int_0^inf exp(-x s) nu_bar(s, inf) ds``
    with adaptive quadrature, so it is slower and less accurate than the
    catalog families.  Absolute continuity is not checked; ``has_density`` is the
    caller's claim that it holds.
    """

    a: float = 0.0
    b: float = 0.0
    tail_fn: Callable | None = None
    tail_expr: str | None = None
    has_density: bool = False
    family: ClassVar[str] = "custom"
    _fn: Callable = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.a < 0 or self.b < 0:
            raise ParameterError("custom killing and drift must be nonnegative")
        fn = self.tail_fn
        if fn is None:
            if self.tail_expr is None:
                raise UnsupportedError("custom spec needs a tail function or tail expression")
            fn = compile_tail_expr(self.tail_expr)
        object.__setattr__(self, "_fn", fn)

    @property
    def killing(self):
        return float(self.a)

    @property
    def drift(self):
        return float(self.b)

    @property
    def infinite_levy_measure(self):
        return bool(self.has_density)

    @property
    def simulatable(self):
        return False

    def _laplace_moment(self, j: int, x: float) -> float:
        # int_0^inf (-s)**j exp(-x s) nu_bar(s, inf) ds
        fn = self._fn
        val, _ = integrate.quad(lambda s: (-s) ** j * math.exp(-x * s) * float(fn(s)), 0.0, np.inf, limit=400)
        return val

    def _value_scalar(self, x: float) -> float:
        if x == 0.0:
            return float(self.a)
        return self.a + self.b * x + x * self._laplace_moment(0, x)

    def value(self, x):
        if _is_mp(x):
            return mpmath.mpf(self._value_scalar(float(x)))
        arr = np.asarray(x, dtype=float)
        out = np.vectorize(self._value_scalar, otypes=[float])(arr)
        return out[()]

    def derivative_log(self, m, x):
        m = np.atleast_1d(np.asarray(m, dtype=int))
        vals = []
        for k in m:
            if k == 1:
                v = self.b + self._laplace_moment(0, x) + x * self._laplace_moment(1, x)
            else:
                v = k * self._laplace_moment(k - 1, x) + x * self._laplace_moment(k, x)
            vals.append(v)
        vals = np.array(vals)
        with np.errstate(divide="ignore"):
            return np.sign(vals), np.log(np.abs(vals))

    def tail(self, s):
        return (self.a + np.asarray(self._fn(s), dtype=float))[()]

    def tail_integral(self, lo, hi):
        lo, hi = np.broadcast_arrays(np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
        out = np.empty(lo.shape)
        for idx in np.ndindex(lo.shape):
            out[idx] = integrate.quad(lambda s: float(self.tail(s)), lo[idx], hi[idx], limit=200)[0]
        return out[()]

    def params(self):
        if self.tail_expr is None:
            raise UnsupportedError("a custom spec built from a Python callable cannot be serialised")
        return {"a": self.a, "b": self.b, "tail": self.tail_expr, "has_density": self.has_density}


_FAMILIES = {
    "stable": lambda p: Stable(p["alpha"]),
    "cpg": lambda p: CompoundPoissonGamma(p["lam"], p["alpha"], p["beta"]),
    "cpe": lambda p: CompoundPoissonExp(p["lam"], p["beta"]),
    "drift": lambda p: PureDrift(p["b"]),
    "sum": lambda p: Sum(tuple(from_dict(c) for c in p["components"])),
    "custom": lambda p: Custom(
        a=p.get("a", 0.0), b=p.get("b", 0.0), tail_expr=p["tail"], has_density=p.get("has_density", False)
    ),
}


def from_dict(obj: dict) -> BernsteinSpec:
    """Inverse of :meth:`BernsteinSpec.to_dict`."""
    try:
        family = obj["family"]
        builder = _FAMILIES[family]
    except KeyError as exc:
        raise ParameterError(f"unknown Bernstein family in {obj!r}") from exc
    try:
        return builder(obj.get("params", {}))
    except KeyError as exc:
        raise ParameterError(f"missing parameter {exc} for family {family!r}") from exc


# ---------------------------------------------------------------------------
# public operations


def eval_f(spec: BernsteinSpec, x):
    """Value f(x) for x >= 0 (scalar, array or mpf)."""
    if _is_mp(x):
        if x < 0:
            raise ParameterError("Bernstein functions are evaluated on x >= 0")
        return spec.value(x)
    if np.any(np.asarray(x) < 0):
        raise ParameterError("Bernstein functions are evaluated on x >= 0")
    return spec.value(x)


def _check_order(m):
    if int(m) != m or m < 0:
        raise ParameterError(f"derivative order must be a nonnegative integer, got {m!r}")
    if m > DERIVATIVE_CAP:
        raise UnsupportedOrderError(f"derivative order {m} exceeds the cap {DERIVATIVE_CAP}")
    return int(m)


def eval_derivative(spec: BernsteinSpec, m: int, x: float) -> float:
    """m-th derivative of f at x from the exact per-family formula."""
    m = _check_order(m)
    if x < 0:
        raise ParameterError("derivatives are evaluated on x >= 0")
    if m == 0:
        return float(spec.value(float(x)))
    sign, logabs = spec.derivative_log(np.array([m]), float(x))
    with np.errstate(over="ignore"):
        return float(sign[0] * np.exp(logabs[0]))


def taylor_coefficients(spec: BernsteinSpec, x: float, m_max: int, scale: float = 1.0) -> np.ndarray:
    """Array ``c[m] = f^(m)(x) * scale**m / m!`` for m = 0..m_max.

    Computed in log space so high orders neither overflow nor underflow
    prematurely.  ``scale`` must be positive.
    """
    _check_order(m_max)
    if scale <= 0:
        raise ParameterError("scale must be positive")
    out = np.zeros(m_max + 1)
    out[0] = float(spec.value(float(x)))
    if m_max >= 1:
        m = np.arange(1, m_max + 1)
        sign, logabs = spec.derivative_log(m, float(x))
        with np.errstate(under="ignore", over="ignore"):
            out[1:] = sign * np.exp(logabs + m * math.log(scale) - special.gammaln(m + 1.0))
    return out


def levy_tail(spec: BernsteinSpec, s):
    """nu(s) = a + nu_bar(s, inf) for s > 0."""
    if np.any(np.asarray(s) <= 0):
        raise ParameterError("the Levy tail is evaluated on s > 0")
    return spec.tail(s)


def sum_exponents(specs: Sequence[BernsteinSpec]) -> BernsteinSpec:
    """Exponent of the sum of independent subordinators; nested sums are flattened."""
    specs = list(specs)
    if not specs:
        raise ParameterError("sum_exponents needs a nonempty list")
    flat = []
    for s in specs:
        flat.extend(s.components if isinstance(s, Sum) else [s])
    return Sum(tuple(flat))


IDENTITY = PureDrift(1.0)
