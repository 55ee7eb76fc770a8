"""Command-line interface.

Exponents and processes use a compact grammar:

    stable:0.5   cpg:lam,alpha,beta   cpe:lam,beta   drift:b
    sum:[stable:0.5;cpe:1,1]          @spec.json
    poisson:1    gcp:1,0.5            @process.json

Exit codes: 0 success, 1 verification failure, 2 usage error, 3 numerical
accuracy error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import acceptance, bernstein, counting, gfcalc, io, laplace, pathsim, specfun
from .bernstein import BernsteinSpec, CompoundPoissonExp, CompoundPoissonGamma, PureDrift, Stable, from_dict
from .errors import AccuracyLossError, GfcError, SimulationBudgetError
from .process import GCP, Poisson, ProcessSpec

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
#: Tolerance overrides may tighten checks but never loosen them past this.
TOL_FLOOR = 1e-2


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def _split_top(text: str, sep: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def _load_json(text: str) -> dict:
    try:
        return json.loads(Path(text[1:]).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read {text[1:]}: {exc}") from exc


def parse_exponent(text: str) -> BernsteinSpec:
    text = text.strip()
    if text.startswith("@"):
        return from_dict(_load_json(text))
    name, _, body = text.partition(":")
    name = name.strip().lower()
    if name == "sum":
        body = body.strip()
        if not (body.startswith("[") and body.endswith("]")):
            raise UsageError("sum exponents are written sum:[a;b;...]")
        return bernstein.sum_exponents([parse_exponent(p) for p in _split_top(body[1:-1], ";")])
    vals = _floats(body)
    builders = {"stable": (Stable, 1), "cpg": (CompoundPoissonGamma, 3), "cpe": (CompoundPoissonExp, 2), "drift": (PureDrift, 1)}
    if name not in builders:
        raise UsageError(f"unknown exponent family {name!r}")
    cls, arity = builders[name]
    if len(vals) != arity:
        raise UsageError(f"{name} takes {arity} parameter(s), got {len(vals)}")
    return cls(*vals)


def parse_outer(text: str):
    name, _, body = text.strip().partition(":")
    vals = _floats(body)
    if name == "poisson" and len(vals) == 1:
        return Poisson(vals[0])
    if name == "gcp" and vals:
        return GCP(tuple(vals))
    raise UsageError(f"cannot parse outer law {text!r} (use poisson:rate or gcp:r1,r2,...)")


def build_process(args) -> ProcessSpec:
    if args.process.startswith("@"):
        return ProcessSpec.from_dict(_load_json(args.process))
    inner = [parse_exponent(s) for s in (args.inner or [])]
    inner_spec = None if not inner else (inner[0] if len(inner) == 1 else bernstein.sum_exponents(inner))
    inverse = parse_exponent(args.inverse) if args.inverse else None
    return ProcessSpec(parse_outer(args.process), inner_spec, inverse)


def _tol(value: float | None, default: float) -> float:
    if value is None:
        return default
    if not 0 < value <= TOL_FLOOR:
        raise UsageError(f"tolerance override must lie in (0, {TOL_FLOOR:g}]")
    return value


def _emit(args, columns, rows, meta) -> None:
    if getattr(args, "out", None):
        io.write_outputs(args.out, columns, rows, meta)
    else:
        sys.stdout.write(io.csv_text(columns, rows, meta))


def _meta(args, **extra) -> dict:
    skip = {"func", "out"}
    config = {k: v for k, v in vars(args).items() if k not in skip}
    return dict(config=config, **extra)


# ---------------------------------------------------------------------------
# commands


def cmd_bernstein(args) -> int:
    spec = parse_exponent(args.f)
    xs = _floats(args.x)
    if args.action == "eval":
        rows = [(x, float(bernstein.eval_f(spec, x))) for x in xs]
        _emit(args, ["x", "f"], rows, _meta(args))
    elif args.action == "deriv":
        rows = [(x, bernstein.eval_derivative(spec, args.m, x)) for x in xs]
        _emit(args, ["x", f"f^({args.m})"], rows, _meta(args))
    else:
        rows = [(x, float(bernstein.levy_tail(spec, x))) for x in xs]
        _emit(args, ["s", "nu"], rows, _meta(args))
    return EXIT_OK


def _wright_pairs(text: str) -> tuple:
    pairs = []
    for part in _split_top(text, ";"):
        vals = _floats(part)
        if len(vals) != 2:
            raise UsageError(f"Wright parameters are pairs a,alpha separated by ';', got {part!r}")
        pairs.append(tuple(vals))
    return tuple(pairs)


def cmd_specfun(args) -> int:
    zs = _floats(args.z)
    if args.action == "ml":
        rows = [(z, specfun.mittag_leffler(args.alpha, z)) for z in zs]
    elif args.action == "ml3":
        rows = [(z, specfun.ml_three_param(args.rho, args.delta, args.gamma, z)) for z in zs]
    else:
        params = specfun.WrightParams(_wright_pairs(args.upper), _wright_pairs(args.lower))
        rows = [(z, specfun.wright_psi(params, z)) for z in zs]
    _emit(args, ["z", args.action], rows, _meta(args))
    return EXIT_OK


def cmd_simulate(args) -> int:
    seed = args.seed
    if args.action == "paths":
        spec = parse_exponent(args.f)
        rows = []
        for i in range(args.n):
            p = pathsim.sample_subordinator_path(spec, args.horizon, args.step, pathsim.RngStream(seed, i))
            rows.extend((i, t, v) for t, v in zip(p.times, p.values))
        _emit(args, ["stream_id", "time", "value"], rows, _meta(args, seed=seed))
        return EXIT_OK
    if args.action == "inverse":
        spec = parse_exponent(args.f)

        def draw(count, rng):
            return pathsim.sample_inverse_passages(spec, args.t, count, rng, args.refine_eps)
    else:
        process = build_process(args)

        def draw(count, rng):
            return pathsim.sample_counts(process, args.t, count, rng, args.refine_eps)

    batch = pathsim.run_batch(draw, args.n, seed, per_stream=args.per_stream, threads=args.threads)
    meta = _meta(args, seed=seed, summary=batch.summary())
    rows = zip(batch.stream_ids, batch.draw_index, batch.values)
    _emit(args, ["stream_id", "draw_index", "value"], rows, meta)
    if args.out:
        Path(str(args.out) + ".summary.json").write_text(io.json_text(batch.summary()))
    else:
        sys.stderr.write(json.dumps(batch.summary()) + "\n")
    return EXIT_OK


def _pmf_method(args):
    if args.method == "resolvent":
        return counting.Resolvent(args.order)
    if args.method == "montecarlo":
        return laplace.MonteCarlo(n=args.draws, seed=args.seed, refine_eps=args.refine_eps)
    return counting.StableClosedForm()


def cmd_pmf(args) -> int:
    process = build_process(args)
    table = counting.pmf(process, args.t, args.nmax, _pmf_method(args))
    meta = _meta(args, seed=args.seed, **table.metadata())
    _emit(args, ["n", "p_n"], table.rows(), meta)
    return EXIT_OK


def cmd_pgf(args) -> int:
    process = build_process(args)
    rows = [(u, counting.pgf(process, u, args.t)) for u in _floats(args.u)]
    _emit(args, ["u", "pgf"], rows, _meta(args, process=process.to_dict()))
    return EXIT_OK


def cmd_density(args) -> int:
    spec = parse_exponent(args.f)
    xs = np.arange(int(round(args.x_max / args.dx)) + 1) * args.dx
    dens = laplace.density_grid(spec, args.t, xs, order=args.order, raw=args.raw)
    _emit(args, ["x", "density"], zip(xs, dens), _meta(args, method="gaver-stehfest"))
    return EXIT_OK


def _report(args, report, extra=None) -> int:
    meta = _meta(args, max_abs=report.max_abs, tolerance=report.tolerance, passed=report.passed, **(extra or {}))
    _emit(args, ["t", "residual"], zip(report.grid, report.residuals), meta)
    status = "PASS" if report.passed else "FAIL"
    sys.stderr.write(f"{status}: max residual {report.max_abs:.6g} (tolerance {report.tolerance:g})\n")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_verify(args) -> int:
    if args.action == "eigen":
        tol = _tol(args.tol, gfcalc.EIGEN_TOL)
        report = gfcalc.eigen_residual(parse_exponent(args.f), args.lam, args.h, args.t_min, args.t_max, tol)
        return _report(args, report)
    if args.action == "governing":
        tol = _tol(args.tol, gfcalc.EIGEN_TOL)
        report = counting.governing_residual(build_process(args), args.n, args.h, args.t_min, args.t_max, tol)
        return _report(args, report)
    table = counting.pmf(build_process(args), args.t)
    tol = _tol(args.tol, counting.MASS_TOL)
    ok = table.mass_deficit <= tol and not table.cap_hit
    sys.stdout.write(
        io.json_text({"mass_deficit": table.mass_deficit, "nmax": table.nmax, "cap_hit": table.cap_hit, "tolerance": tol, "passed": ok})
    )
    return EXIT_OK if ok else EXIT_FAIL


def cmd_repro(args) -> int:
    ids = list(acceptance.CRITERIA) if args.criterion == "all" else [int(args.criterion)]
    if any(i not in acceptance.CRITERIA for i in ids):
        raise UsageError(f"unknown criterion {args.criterion!r}; choose 1-{len(acceptance.CRITERIA)} or all")
    results = []
    for cid in ids:
        res = acceptance.run(cid, args.seed)
        print(res.line(), flush=True)
        results.append(res)
    if args.out:
        Path(args.out).write_text(io.json_text({"seed": args.seed, "results": [r.to_dict() for r in results]}))
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


# ---------------------------------------------------------------------------
# parser


def _default_seed() -> int:
    env = os.environ.get("GFC_SEED")
    if env is None:
        return acceptance.DEFAULT_SEED
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"GFC_SEED must be an integer, got {env!r}")


def _add_process(p):
    p.add_argument("--process", required=True, help="outer law: poisson:rate, gcp:r1,r2,... or @file.json")
    p.add_argument("--inner", action="append", help="subordinating exponent psi (repeat to add several)")
    p.add_argument("--inverse", help="exponent f of the inverse-subordinator clock")


def build_parser(seed: int) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gfc", description="Time-changed counting processes and their derivatives.")
    parser.add_argument("--seed", type=int, default=seed, help="base seed (default: $GFC_SEED or a fixed value)")
    parser.add_argument("--threads", type=int, default=os.cpu_count(), help="worker threads for batch simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bernstein", help="evaluate an exponent, its derivatives or its Levy tail")
    p.add_argument("action", choices=["eval", "deriv", "tail"])
    p.add_argument("--f", required=True)
    p.add_argument("--x", "--s", dest="x", required=True, help="comma-separated points")
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bernstein)

    p = sub.add_parser("specfun", help="Mittag-Leffler and Wright functions")
    p.add_argument("action", choices=["ml", "ml3", "wright"])
    p.add_argument("--z", required=True)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--rho", type=float, default=1.0)
    p.add_argument("--delta", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--upper", default="1,1", help="pairs a,alpha separated by ';'")
    p.add_argument("--lower", default="1,1", help="pairs b,beta separated by ';'")
    p.add_argument("--out")
    p.set_defaults(func=cmd_specfun)

    p = sub.add_parser("simulate", help="Monte Carlo paths, first passages or counts")
    p.add_argument("action", choices=["paths", "inverse", "counts"])
    p.add_argument("--f")
    p.add_argument("--process")
    p.add_argument("--inner", action="append")
    p.add_argument("--inverse")
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--step", type=float, default=1e-2)
    p.add_argument("--refine-eps", type=float, default=1e-3)
    p.add_argument("--per-stream", type=int, default=10_000)
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("pmf", help="pmf table of a (time-changed) counting process")
    _add_process(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--nmax", type=int, help="fixed table length (default: adaptive)")
    p.add_argument("--method", choices=["resolvent", "montecarlo", "stable"], default="resolvent")
    p.add_argument("--order", type=int, default=counting.RESOLVENT_ORDER)
    p.add_argument("--draws", type=int, default=100_000)
    p.add_argument("--refine-eps", type=float, default=1e-3)
    p.add_argument("--out")
    p.set_defaults(func=cmd_pmf)

    p = sub.add_parser("pgf", help="probability generating function")
    _add_process(p)
    p.add_argument("--u", required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_pgf)

    p = sub.add_parser("density", help="density of the inverse subordinator on a grid")
    p.add_argument("--f", required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--x-max", type=float, default=10.0)
    p.add_argument("--dx", type=float, default=0.05)
    p.add_argument("--order", type=int, default=laplace.DEFAULT_ORDER)
    p.add_argument("--raw", action="store_true", help="skip clamping of negative inversion noise")
    p.add_argument("--out")
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("verify", help="residual and normalization checks")
    p.add_argument("action", choices=["eigen", "governing", "normalization"])
    p.add_argument("--f")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--process")
    p.add_argument("--inner", action="append")
    p.add_argument("--inverse")
    p.add_argument("--n", type=int, default=0)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--h", type=float, default=1e-3)
    p.add_argument("--t-min", type=float, default=gfcalc.DEFAULT_T_MIN)
    p.add_argument("--t-max", type=float, default=1.0)
    p.add_argument("--tol", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("repro", help="run acceptance criteria")
    p.add_argument("criterion", help="criterion number or 'all'")
    p.add_argument("--out", help="write a JSON report")
    p.set_defaults(func=cmd_repro)
    return parser


def _require(args) -> None:
    needs = {
        ("simulate", "paths"): ["f"],
        ("simulate", "inverse"): ["f"],
        ("simulate", "counts"): ["process"],
        ("verify", "eigen"): ["f"],
        ("verify", "governing"): ["process"],
        ("verify", "normalization"): ["process"],
    }
    for name in needs.get((args.command, getattr(args, "action", None)), []):
        if getattr(args, name) is None:
            raise UsageError(f"--{name} is required for {args.command} {args.action}")


def main(argv: list[str] | None = None) -> int:
    try:
        parser = build_parser(_default_seed())
    except UsageError as exc:
        sys.stderr.write(f"gfc: {exc}\n")
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        _require(args)
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"gfc: {exc}\n")
        return EXIT_USAGE
    except (AccuracyLossError, SimulationBudgetError) as exc:
        sys.stderr.write(f"gfc: numerical error: {exc}\n")
        return EXIT_NUMERIC
    except (GfcError, ValueError) as exc:
        sys.stderr.write(f"gfc: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
