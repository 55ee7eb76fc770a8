"""Process descriptions shared by the simulators and the pmf solvers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .bernstein import BernsteinSpec, from_dict, sum_exponents
from .errors import ParameterError


@dataclass(frozen=True)
class Poisson:
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ParameterError(f"Poisson rate must be positive, got {self.rate}")
        object.__setattr__(self, "rate", float(self.rate))

    @property
    def total_rate(self) -> float:
        return self.rate

    @property
    def rates(self) -> tuple:
        return (self.rate,)

    def to_dict(self):
        return {"law": "poisson", "rate": self.rate}


@dataclass(frozen=True)
class GCP:
    """Generalized counting process: jumps of size j = 1..k at rate rates[j-1]."""

    rates: tuple

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        if not rates:
            raise ParameterError("a GCP needs at least one rate")
        if any(not r > 0 for r in rates):
            raise ParameterError(f"GCP rates must be positive, got {rates}")
        object.__setattr__(self, "rates", rates)

    @property
    def k(self) -> int:
        return len(self.rates)

    @property
    def total_rate(self) -> float:
        return sum(self.rates)

    def to_dict(self):
        return {"law": "gcp", "rates": list(self.rates)}


Outer = Poisson | GCP


@dataclass(frozen=True)
class ProcessSpec:
    """outer(H^inner(Y^inverse(t))); ``inner`` and ``inverse`` are optional.

    A list of inner exponents is replaced by their sum (independent
    subordinators add).
    """

    outer: Outer
    inner: BernsteinSpec | None = None
    inverse: BernsteinSpec | None = None

    def __post_init__(self):
        if not isinstance(self.outer, (Poisson, GCP)):
            raise ParameterError(f"outer law must be Poisson or GCP, got {self.outer!r}")
        if isinstance(self.inner, Sequence):
            object.__setattr__(self, "inner", sum_exponents(list(self.inner)))

    def to_dict(self):
        return {
            "outer": self.outer.to_dict(),
            "inner": None if self.inner is None else self.inner.to_dict(),
            "inverse": None if self.inverse is None else self.inverse.to_dict(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ProcessSpec":
        o = obj["outer"]
        outer = Poisson(o["rate"]) if o["law"] == "poisson" else GCP(tuple(o["rates"]))
        inner = obj.get("inner")
        inverse = obj.get("inverse")
        return cls(outer, None if inner is None else from_dict(inner), None if inverse is None else from_dict(inverse))
