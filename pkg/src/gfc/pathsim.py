"""Monte Carlo sampling of subordinators, their first-passage inverses and
time-changed counts.

Randomness comes from :class:`RngStream`, a (seed, stream id) pair mapped to a
counter-based Philox generator, so batches split across streams reproduce
regardless of scheduling.

First passages Y(t) = inf{s : H(s) > t}:

* drift plus compound Poisson components are simulated event by event and
  give Y exactly;
* anything with a stable component is simulated on a uniform grid with step
  ``refine_eps``.  Stable bridges cannot be sampled conditionally, so a finer
  bracket means a fresh path at finer resolution; simulating directly at the
  final resolution has the same law and skips the discarded coarse passes.
  The returned value is the bracket midpoint.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bernstein import BernsteinSpec, CompoundPoissonExp, CompoundPoissonGamma, PureDrift, Stable, Sum
from .errors import ParameterError, SimulationBudgetError, UnsupportedError
from .process import GCP, Poisson, ProcessSpec

_BLOCK_STEPS = 256
_BLOCK_DRAWS = 4096
#: Horizon doublings allowed before a first passage is declared out of budget.
MAX_DOUBLINGS = 20
MAX_EVENTS = 1_000_000


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed) & (2**64 - 1), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.Philox(ss))


def _generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    raise ParameterError(f"expected an RngStream, got {rng!r}")


@dataclass(frozen=True)
class PathSample:
    times: np.ndarray
    values: np.ndarray
    seed: int
    stream_id: int
    exponent: BernsteinSpec
    step: float


def _components(spec: BernsteinSpec) -> list:
    comps = list(spec.components) if isinstance(spec, Sum) else [spec]
    for c in comps:
        if not isinstance(c, (Stable, CompoundPoissonGamma, CompoundPoissonExp, PureDrift)):
            raise UnsupportedError(f"{c.family} exponents cannot be simulated")
    return comps


def stable_standard(alpha: float, size, gen: np.random.Generator) -> np.ndarray:
    """Kanter's representation of S >= 0 with E exp(-s S) = exp(-s**alpha)."""
    u = gen.uniform(0.0, np.pi, size)
    e = gen.exponential(1.0, size)
    return (
        np.sin(alpha * u) / np.sin(u) ** (1.0 / alpha)
        * (np.sin((1.0 - alpha) * u) / e) ** ((1.0 - alpha) / alpha)
    )


def increments(spec: BernsteinSpec, dt, size, gen: np.random.Generator) -> np.ndarray:
    """Independent increments H(s + dt) - H(s); ``dt`` may be an array of shape ``size``."""
    out = np.zeros(size)
    dt = np.broadcast_to(np.asarray(dt, dtype=float), out.shape)
    for c in _components(spec):
        if isinstance(c, PureDrift):
            out += c.b * dt
        elif isinstance(c, Stable):
            if c.alpha == 1.0:
                out += dt
            else:
                out += dt ** (1.0 / c.alpha) * stable_standard(c.alpha, out.shape, gen)
        else:
            shape = c.alpha if isinstance(c, CompoundPoissonGamma) else 1.0
            jumps = gen.poisson(c.lam * dt)
            out += gen.gamma(shape * jumps, 1.0 / c.beta)
    return out


def sample_subordinator_path(spec: BernsteinSpec, horizon: float, step: float, rng) -> PathSample:
    """Path of H on the grid 0, step, 2 step, ... covering [0, horizon]."""
    if not (horizon > 0 and step > 0):
        raise ParameterError("horizon and step must be positive")
    comps = _components(spec)
    gen = _generator(rng)
    n = max(1, math.ceil(horizon / step - 1e-9))
    times = np.arange(n + 1) * step
    drift = sum(c.b for c in comps if isinstance(c, PureDrift)) + sum(
        1.0 for c in comps if isinstance(c, Stable) and c.alpha == 1.0
    )
    jump_spec = [c for c in comps if not isinstance(c, PureDrift) and not (isinstance(c, Stable) and c.alpha == 1.0)]
    values = drift * times
    if jump_spec:
        inc = increments(Sum(tuple(jump_spec)), step, n, gen)
        values = values + np.concatenate([[0.0], np.cumsum(inc)])
    seed, sid = (rng.seed, rng.stream_id) if isinstance(rng, RngStream) else (-1, -1)
    return PathSample(times, values, seed, sid, spec, step)


def _has_stable(comps) -> bool:
    return any(isinstance(c, Stable) and c.alpha < 1.0 for c in comps)


def _passage_events(comps, t: float, n: int, gen) -> np.ndarray:
    """Exact first passage above t for drift plus compound Poisson."""
    b = sum(c.b for c in comps if isinstance(c, PureDrift)) + sum(1.0 for c in comps if isinstance(c, Stable))
    cps = [c for c in comps if isinstance(c, (CompoundPoissonGamma, CompoundPoissonExp))]
    rate = sum(c.lam for c in cps)
    if rate == 0.0:
        return np.full(n, t / b)
    probs = np.array([c.lam for c in cps]) / rate
    s = np.zeros(n)
    h = np.zeros(n)
    y = np.full(n, np.nan)
    active = np.arange(n)
    for _ in range(MAX_EVENTS):
        if active.size == 0:
            return y
        m = active.size
        wait = gen.exponential(1.0 / rate, m)
        if b > 0:
            by_drift = h[active] + b * wait > t
            idx = active[by_drift]
            y[idx] = s[idx] + (t - h[idx]) / b
        else:
            by_drift = np.zeros(m, dtype=bool)
        which = gen.choice(len(cps), size=m, p=probs)
        sizes = np.empty(m)
        for j, c in enumerate(cps):
            sel = which == j
            shape = c.alpha if isinstance(c, CompoundPoissonGamma) else 1.0
            sizes[sel] = gen.gamma(shape, 1.0 / c.beta, sel.sum())
        keep = ~by_drift
        act = active[keep]
        s[act] += wait[keep]
        h[act] += b * wait[keep] + sizes[keep]
        crossed = h[act] > t
        y[act[crossed]] = s[act[crossed]]
        active = act[~crossed]
    raise SimulationBudgetError(f"first passage above {t} not reached within {MAX_EVENTS} jumps")


def _passage_grid(spec, t: float, n: int, gen, h: float, keep_path: bool = False):
    """First grid index with H > t, on a grid of step h; returns bracket lows."""
    max_steps = _BLOCK_STEPS * 4 * 2**MAX_DOUBLINGS
    lo = np.empty(n)
    path_blocks = [np.zeros(1)] if keep_path else None
    for start in range(0, n, _BLOCK_DRAWS):
        m = min(_BLOCK_DRAWS, n - start)
        level = np.zeros(m)
        idx_out = np.full(m, -1, dtype=np.int64)
        active = np.arange(m)
        steps = 0
        while active.size:
            if steps >= max_steps:
                raise SimulationBudgetError(
                    f"first passage above {t} not reached within {max_steps * h:g} operational time"
                )
            inc = increments(spec, h, (active.size, _BLOCK_STEPS), gen)
            cum = level[active, None] + np.cumsum(inc, axis=1)
            if keep_path:
                path_blocks.append(cum[0])
            over = cum > t
            hit = over.any(axis=1)
            first = np.argmax(over, axis=1)
            idx_out[active[hit]] = steps + first[hit]
            level[active] = cum[:, -1]
            active = active[~hit]
            steps += _BLOCK_STEPS
        # Crossing happens in (idx * h, (idx + 1) * h].
        lo[start:start + m] = idx_out * h
    if keep_path:
        values = np.concatenate(path_blocks)
        return lo, values
    return lo, None


def sample_inverse_passages(spec: BernsteinSpec, t: float, n: int, rng, refine_eps: float = 1e-3) -> np.ndarray:
    """n independent draws of Y(t)."""
    if not t > 0:
        raise ParameterError("t must be positive")
    if not refine_eps > 0:
        raise ParameterError("refine_eps must be positive")
    comps = _components(spec)
    gen = _generator(rng)
    if not _has_stable(comps):
        return _passage_events(comps, t, n, gen)
    lo, _ = _passage_grid(spec, t, n, gen, refine_eps)
    return lo + 0.5 * refine_eps


def sample_inverse_passage(spec: BernsteinSpec, t: float, rng, refine_eps: float = 1e-3) -> float:
    """One draw of Y(t) = inf{s >= 0 : H(s) > t}, accurate to refine_eps / 2."""
    return float(sample_inverse_passages(spec, t, 1, rng, refine_eps)[0])


def inverse_passage_with_path(spec: BernsteinSpec, t: float, rng, refine_eps: float = 1e-3):
    """One grid-route draw of Y(t) together with the path it was located on."""
    if not _has_stable(_components(spec)):
        raise UnsupportedError("only grid-simulated (stable) exponents carry a path")
    gen = _generator(rng)
    lo, values = _passage_grid(spec, t, 1, gen, refine_eps, keep_path=True)
    times = np.arange(len(values)) * refine_eps
    seed, sid = (rng.seed, rng.stream_id) if isinstance(rng, RngStream) else (-1, -1)
    return float(lo[0] + 0.5 * refine_eps), PathSample(times, values, seed, sid, spec, refine_eps)


def passage_on_path(path: PathSample, t: float) -> tuple[float, float]:
    """Bracket (lo, hi] of the first passage above t on a stored grid path."""
    over = np.nonzero(path.values > t)[0]
    if not over.size:
        raise SimulationBudgetError(f"path never exceeds {t}")
    i = int(over[0])
    return float(path.times[max(i - 1, 0)]), float(path.times[i])


def sample_counts(process: ProcessSpec, t: float, n: int, rng, refine_eps: float = 1e-3) -> np.ndarray:
    """n draws of outer(H^inner(Y^inverse(t)))."""
    if t < 0:
        raise ParameterError("t must be nonnegative")
    if t == 0:
        return np.zeros(n, dtype=np.int64)
    gen = _generator(rng)
    if process.inverse is not None:
        clock = sample_inverse_passages(process.inverse, t, n, gen, refine_eps)
    else:
        clock = np.full(n, float(t))
    if process.inner is not None:
        clock = increments(process.inner, clock, n, gen)
    outer = process.outer
    if isinstance(outer, Poisson):
        return gen.poisson(outer.rate * clock)
    counts = np.zeros(n, dtype=np.int64)
    for j, lam in enumerate(outer.rates, start=1):
        counts += j * gen.poisson(lam * clock)
    return counts


def sample_time_changed_count(process: ProcessSpec, t: float, rng, refine_eps: float = 1e-3) -> int:
    """One draw of the composed count."""
    return int(sample_counts(process, t, 1, rng, refine_eps)[0])


# ---------------------------------------------------------------------------
# batch driver


@dataclass
class BatchResult:
    values: np.ndarray
    stream_ids: np.ndarray
    draw_index: np.ndarray
    seed: int
    meta: dict = field(default_factory=dict)

    def summary(self) -> dict:
        v = np.asarray(self.values, dtype=float)
        n = len(v)
        std = float(v.std(ddof=1)) if n > 1 else 0.0
        return {"n": n, "mean": float(v.mean()), "std": std, "stderr": std / math.sqrt(n) if n else float("nan")}

    def to_csv(self, fh) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stream_id", "draw_index", "value"])
        for s, i, v in zip(self.stream_ids, self.draw_index, self.values):
            w.writerow([int(s), int(i), format(float(v), ".17g") if not float(v).is_integer() else int(v)])

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    def summary_json(self) -> str:
        return json.dumps(dict(self.summary(), seed=self.seed, **self.meta), indent=2, sort_keys=True)


def run_batch(draw, n: int, seed: int, per_stream: int = 10_000, threads: int | None = None) -> BatchResult:
    """Split n draws over streams 0, 1, ... of ``per_stream`` draws each.

    ``draw(count, rng_stream)`` returns an array; results are merged in
    stream-id order, so the output does not depend on ``threads``.
    """
    if n <= 0:
        raise ParameterError("n must be positive")
    sizes = [per_stream] * (n // per_stream) + ([n % per_stream] if n % per_stream else [])
    streams = [RngStream(seed, i) for i in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda a: np.asarray(draw(a[0], a[1])), zip(sizes, streams)))
    values = np.concatenate(parts)
    sid = np.concatenate([np.full(len(p), i) for i, p in enumerate(parts)])
    idx = np.concatenate([np.arange(len(p)) for p in parts])
    return BatchResult(values, sid, idx, seed)
