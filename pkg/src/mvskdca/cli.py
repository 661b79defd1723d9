"""Command-line front end: gen, moments, solve, bench, frontier."""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .dca import ALGORITHMS, SolverConfig, StopMode, Status, random_x0
from .dca import bdca_solve, dca_solve, ubdca_solve, udca_solve
from .dcsos import assemble_G_H, universal_pair
from .frontier import FrontierSpec, InvestorKind, generate_frontier, write_frontier_csv
from .moments import MomentError, ReturnMatrix, estimate_moments, read_returns_csv, write_returns_csv
from .poly import PROFILES, Preference, build_objective
from .subsolvers import FeasibleSet, SubproblemError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SOLVER = 3
EXIT_IO = 4

BENCH_PROFILES = ("seeking", "averse", "neutral")
_SOLVERS = {"DCA": dca_solve, "BDCA": bdca_solve, "UDCA": udca_solve, "UBDCA": ubdca_solve}


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class InstanceSpec:
    n: int
    T: int = 30
    seed: int = 0
    return_low: float = -0.1
    return_high: float = 0.4

    def __post_init__(self):
        if self.n < 1:
            raise UsageError("n must be at least 1")
        if self.T < 2:
            raise UsageError("T must be at least 2")
        if not self.return_low < self.return_high:
            raise UsageError("return_low must be below return_high")


def generate_returns(spec: InstanceSpec) -> ReturnMatrix:
    """Uniform i.i.d. returns from numpy's PCG64 generator seeded with ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    return ReturnMatrix(rng.uniform(spec.return_low, spec.return_high, size=(spec.n, spec.T)))


def parse_preference(text: str) -> Preference:
    key = text.strip().lower()
    if key in PROFILES:
        return PROFILES[key]
    try:
        vals = tuple(float(v) for v in key.split(","))
    except ValueError:
        raise UsageError(f"bad preference {text!r}: use a profile name or c1,c2,c3,c4") from None
    try:
        return Preference(vals)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise UsageError(f"bad vector {text!r}") from None


def build_model(tensors, c: Preference, algo: str):
    """(model, f) for an algorithm: the DC-SOS pair or the universal pair."""
    f = build_objective(tensors, c)
    if algo in ("DCA", "BDCA"):
        return assemble_G_H(tensors, c), f
    return universal_pair(tensors, c, f), f


def config_from_args(args) -> SolverConfig:
    kkt = None if args.kkt_tol.lower() == "none" else float(args.kkt_tol)
    try:
        return SolverConfig(eps1=args.eps1, eps2=args.eps2, beta=args.beta, sigma=args.sigma,
                            eps_ls=args.eps_ls, max_outer_iter=args.max_iter,
                            stop_mode=StopMode(args.stop_mode), kkt_tol=kkt)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _load(path: str, jit: bool):
    try:
        R = read_returns_csv(path)
    except OSError as exc:
        raise IOError(f"cannot read {path}: {exc}") from exc
    return R, estimate_moments(R, jit=jit)


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# -- commands -----------------------------------------------------------------

def cmd_gen(args) -> int:
    spec = InstanceSpec(args.n, args.T, args.seed, args.low, args.high)
    R = generate_returns(spec)
    write_returns_csv(R, args.out or sys.stdout)
    return EXIT_OK


def cmd_moments(args) -> int:
    R, tensors = _load(args.data, args.jit_moments)
    c = parse_preference(args.preference)
    if args.dump_objective:
        _emit(build_objective(tensors, c).dump(), args.out)
        return EXIT_OK
    if args.dump_dc:
        pair = assemble_G_H(tensors, c)
        up = universal_pair(tensors, c, pair.target)
        head = (f"# eta {up.eta!r}\n# terms G={len(pair.g.value)} H={len(pair.h.value)} "
                f"H_bar={len(up.H_bar_polynomial())}\n")
        _emit(head + "# G\n" + pair.g.value.dump() + "# H\n" + pair.h.value.dump(), args.out)
        return EXIT_OK
    payload = {
        "n": R.n,
        "T": R.T,
        "labels": list(R.labels),
        "mu": tensors.mu.tolist(),
        "sigma": tensors.sigma_matrix().tolist(),
        "coskewness_entries": len(tensors.skew),
        "cokurtosis_entries": len(tensors.kurt),
    }
    _emit(json.dumps(payload, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_solve(args) -> int:
    R, tensors = _load(args.data, args.jit_moments)
    c = parse_preference(args.preference)
    cfg = config_from_args(args)
    algo = args.algo.upper()
    feasible = FeasibleSet.simplex(R.n)
    if args.x0:
        x0 = parse_vector(args.x0)
        if x0.shape != (R.n,):
            raise UsageError(f"x0 needs {R.n} entries")
        if not feasible.contains(x0, tol=1e-9):
            warnings.warn("x0 is infeasible; projecting it onto the simplex", stacklevel=2)
            x0 = feasible.project(x0)
    else:
        x0 = random_x0(feasible, np.random.default_rng(args.seed))
    model, f = build_model(tensors, c, algo)
    res = _SOLVERS[algo](model, f, feasible, x0, cfg)
    if args.trace:
        res.write_trace(args.trace)
    _emit(json.dumps(res.to_dict(), indent=2) + "\n", args.out)
    return EXIT_SOLVER if res.status is Status.SUBPROBLEM_FAILURE else EXIT_OK


BENCH_FIELDS = ["instance", "n", "T", "preference", "monomials"] + [
    f"{a}_{k}" for a in ALGORITHMS for k in ("iter", "time_ms", "obj", "status")]


def bench_instances(ns: Sequence[int], T: int, seed: int, data: Sequence[str], jit: bool):
    """(label, ReturnMatrix, tensors, x0 rng seed) in input order."""
    out = []
    for path in data:
        R, tensors = _load(path, jit)
        out.append((path, R, tensors))
    for n in ns:
        spec = InstanceSpec(n, T, seed + n)
        R = generate_returns(spec)
        out.append((f"gen:n={n}", R, estimate_moments(R, jit=jit)))
    return out


def run_bench(instances, cfg: SolverConfig, seed: int) -> List[dict]:
    rows = []
    for label, R, tensors in instances:
        for pname in BENCH_PROFILES:
            c = PROFILES[pname]
            feasible = FeasibleSet.simplex(R.n)
            x0 = random_x0(feasible, np.random.default_rng([seed, R.n]))
            row = {"instance": label, "n": R.n, "T": R.T, "preference": pname}
            try:
                dc, f = build_model(tensors, c, "DCA")
                up = universal_pair(tensors, c, f)
            except (ValueError, SubproblemError) as exc:
                warnings.warn(f"{label}/{pname}: model build failed: {exc}", stacklevel=2)
                row["monomials"] = ""
                rows.append(row)
                continue
            row["monomials"] = len(f)
            for algo in ALGORITHMS:
                model = dc if algo in ("DCA", "BDCA") else up
                try:
                    res = _SOLVERS[algo](model, f, feasible, x0, cfg)
                    row.update({f"{algo}_iter": res.iterations, f"{algo}_time_ms": res.time_ms,
                                f"{algo}_obj": res.f_star, f"{algo}_status": res.status.value})
                except (ValueError, SubproblemError) as exc:
                    warnings.warn(f"{label}/{pname}/{algo} failed: {exc}", stacklevel=2)
                    row[f"{algo}_status"] = Status.SUBPROBLEM_FAILURE.value
            rows.append(row)
    return rows


def _average_row(rows: List[dict]) -> dict:
    avg = {"instance": "average"}
    for key in ("n", "T", "monomials") + tuple(
            f"{a}_{k}" for a in ALGORITHMS for k in ("iter", "time_ms", "obj")):
        vals = [r[key] for r in rows if isinstance(r.get(key), (int, float))]
        avg[key] = float(np.mean(vals)) if vals else ""
    return avg


def write_bench_csv(rows: List[dict], fh) -> None:
    w = csv.DictWriter(fh, fieldnames=BENCH_FIELDS, lineterminator="\n", restval="")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    if rows:
        avg = _average_row(rows)
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in avg.items()})


def cmd_bench(args) -> int:
    ns = [int(v) for v in args.ns.split(",")] if args.ns else []
    cfg = config_from_args(args)
    rows = run_bench(bench_instances(ns, args.T, args.seed, args.data or [], args.jit_moments),
                     cfg, args.seed)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_bench_csv(rows, fh)
    else:
        write_bench_csv(rows, sys.stdout)
    return EXIT_OK


def cmd_frontier(args) -> int:
    R, tensors = _load(args.data, args.jit_moments)
    cfg = config_from_args(args)
    if args.r_step <= 0:
        raise UsageError("r-step must be positive")
    count = int(math.floor((args.r_max - args.r_min) / args.r_step + 1e-9)) + 1
    grid = np.round(args.r_min + args.r_step * np.arange(max(count, 0)), 12)
    c = parse_preference(args.preference) if args.preference else None
    spec = FrontierSpec(grid, InvestorKind(args.kind), c, args.seed)
    points = generate_frontier(tensors, spec, cfg, args.algo.upper())
    if args.out:
        write_frontier_csv(points, R.n, args.out)
    else:
        write_frontier_csv(points, R.n, sys.stdout)
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--eps1", type=float, default=1e-6, help="relative objective tolerance")
    p.add_argument("--eps2", type=float, default=1e-4, help="relative step tolerance")
    p.add_argument("--beta", type=float, default=0.5, help="line-search reduction factor")
    p.add_argument("--sigma", type=float, default=1e-3, help="Armijo parameter")
    p.add_argument("--eps-ls", type=float, default=1e-8, help="line-search floor")
    p.add_argument("--max-iter", type=int, default=1000, help="outer iteration limit")
    p.add_argument("--stop-mode", choices=[m.value for m in StopMode], default="df")
    p.add_argument("--kkt-tol", default="1e-5",
                   help="KKT residual required for convergence, or 'none'")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="RNG seed (numpy PCG64)")
    common.add_argument("--jit-moments", action="store_true",
                        help="compute co-moment entries from the data on demand")
    parser = argparse.ArgumentParser(prog="mvskdca", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="generate a synthetic return CSV")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--T", type=int, default=30)
    p.add_argument("--low", type=float, default=-0.1)
    p.add_argument("--high", type=float, default=0.4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("moments", parents=[common], help="estimate moments and dump the model")
    p.add_argument("--data", required=True)
    p.add_argument("--preference", default="neutral")
    p.add_argument("--dump-objective", action="store_true")
    p.add_argument("--dump-dc", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("solve", parents=[common], help="solve one MVSK model")
    p.add_argument("--data", required=True)
    p.add_argument("--preference", default="neutral")
    p.add_argument("--algo", choices=[a.lower() for a in ALGORITHMS], default="bdca")
    p.add_argument("--x0", help="comma-separated start point; projected if infeasible")
    p.add_argument("--trace", help="write a per-iteration CSV here")
    p.add_argument("--out")
    _solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", parents=[common], help="run all four algorithms on each instance")
    p.add_argument("--ns", default="", help="comma-separated sizes to generate")
    p.add_argument("--T", type=int, default=30)
    p.add_argument("--data", nargs="*", help="return CSVs to include")
    p.add_argument("--out")
    _solver_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("frontier", parents=[common], help="sweep target returns")
    p.add_argument("--data", required=True)
    p.add_argument("--kind", choices=[k.value for k in InvestorKind], default="neutral")
    p.add_argument("--preference", help="explicit c1,c2,c3,c4 instead of a sampled one")
    p.add_argument("--r-min", type=float, default=0.0)
    p.add_argument("--r-max", type=float, default=0.4)
    p.add_argument("--r-step", type=float, default=0.001)
    p.add_argument("--algo", choices=[a.lower() for a in ALGORITHMS], default="bdca")
    p.add_argument("--out")
    _solver_flags(p)
    p.set_defaults(func=cmd_frontier)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = _show_warning
            return args.func(args)
    except (UsageError, MomentError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        # the reader closed stdout early (e.g. piped into head)
        sys.stdout = open(os.devnull, "w")
        return EXIT_OK
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SubproblemError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"warning: {message}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
