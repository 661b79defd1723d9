"""DCA, boosted DCA and their universal-decomposition counterparts.

All four solvers share one outer loop.  A DC step produces x^{k+1}; the
boosted variants then search along d = x^{k+1} - x^k when the active set
did not grow and d is a descent direction of f at x^{k+1}.
"""

from __future__ import annotations

import csv
import enum
import math
import time
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .dcsos import DcPair, UniversalPair
from .poly import SparsePolynomial
from .subsolvers import FeasibleSet, SubproblemError, fw_gap, projected_gradient


class StopMode(enum.Enum):
    DF_ONLY = "df"
    DF_AND_DX = "df_dx"


class Status(enum.Enum):
    CONVERGED = "CONVERGED"
    MAX_ITER = "MAX_ITER"
    SUBPROBLEM_FAILURE = "SUBPROBLEM_FAILURE"


@dataclass(frozen=True)
class SolverConfig:
    eps1: float = 1e-6
    eps2: float = 1e-4
    beta: float = 0.5
    sigma: float = 1e-3
    eps_ls: float = 1e-8
    max_outer_iter: int = 1000
    sub_tol: float = 1e-8
    sub_max_iter: int = 5000
    active_tol: float = 1e-8
    stop_mode: StopMode = StopMode.DF_ONLY
    # None keeps the pure objective-change rule
    kkt_tol: Optional[float] = 1e-5
    keep_iterates: bool = False

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")
        if not 0 < self.sigma < 1:
            raise ValueError("sigma must lie in (0, 1)")
        for name in ("eps1", "eps2", "eps_ls", "sub_tol", "active_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.kkt_tol is not None and not self.kkt_tol > 0:
            raise ValueError("kkt_tol must be positive or None")
        if self.max_outer_iter < 1 or self.sub_max_iter < 1:
            raise ValueError("iteration limits must be positive")


@dataclass
class IterationRecord:
    k: int
    f: float
    df: float
    dx: float
    alpha: float
    ls_trials: int
    descent_ip: float
    d_norm: float
    f_dc: float
    ls_fired: bool
    sub_iterations: int = 0
    sub_converged: bool = True
    x: Optional[np.ndarray] = None


@dataclass
class SolveResult:
    x_star: np.ndarray
    f_star: float
    iterations: int
    status: Status
    kkt_residual: float
    trace: List[IterationRecord]
    algorithm: str = ""
    time_ms: float = 0.0
    x0: Optional[np.ndarray] = None

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "status": self.status.value,
            "f_star": self.f_star,
            "x_star": [float(v) for v in self.x_star],
            "iterations": self.iterations,
            "time_ms": self.time_ms,
            "kkt_residual": self.kkt_residual,
        }

    def write_trace(self, path) -> None:
        """One row per outer iteration; the KKT residual only on the last row."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["k", "f", "df", "dx", "alpha", "ls_trials", "descent_ip", "kkt_residual_final_only"])
            for i, rec in enumerate(self.trace):
                last = i == len(self.trace) - 1
                w.writerow([rec.k, repr(rec.f), repr(rec.df), repr(rec.dx), repr(rec.alpha),
                            rec.ls_trials, repr(rec.descent_ip),
                            repr(self.kkt_residual) if last else ""])


def active_set(x, tol: float = 1e-8) -> frozenset:
    """Indices of nonnegativity constraints that are (numerically) tight."""
    return frozenset(np.flatnonzero(np.asarray(x) <= tol).tolist())


def kkt_residual(f, feasible: FeasibleSet, x) -> float:
    """max(0, max_z <grad f(x), x - z>) over the vertices z of the feasible polytope."""
    x = np.asarray(x, dtype=float)
    return max(0.0, fw_gap(f.gradient(x), x, feasible))


def _inside(feasible: FeasibleSet, x: np.ndarray) -> bool:
    if x.min() < 0.0:
        return False
    return feasible.contains(x, tol=1e-12)


def _armijo(f, x, fx, d, alpha0, cfg: SolverConfig, feasible: FeasibleSet):
    """Backtracking along d; returns (point, alpha, trials, value)."""
    dn = float(np.linalg.norm(d))
    alpha = alpha0
    trials = 0
    if dn == 0.0:
        return x, 0.0, 0, fx
    while alpha > cfg.eps_ls / dn:
        trials += 1
        xh = x + alpha * d
        if _inside(feasible, xh):
            fh = f(xh)
            if fx - fh - cfg.sigma * alpha ** 2 * dn ** 2 >= 0.0:
                return xh, alpha, trials, fh
        alpha *= cfg.beta
    return x, 0.0, trials, fx


def armijo_search(f, x, d, alpha0: float, cfg: SolverConfig, feasible: FeasibleSet) -> np.ndarray:
    """Armijo-type search from ``x`` along ``d``; falls back to ``x``."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    return _armijo(f, x, f(x), d, alpha0, cfg, feasible)[0]


def _start(feasible: FeasibleSet, x0) -> np.ndarray:
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (feasible.n,):
        raise ValueError(f"x0 has shape {x0.shape}, expected ({feasible.n},)")
    if not feasible.contains(x0, tol=1e-9):
        raise ValueError("x0 is not feasible; project it first")
    return x0.copy() if feasible.contains(x0) else feasible.project(x0)


def _outer(name: str, step: Callable, f: SparsePolynomial, feasible: FeasibleSet, x0,
           cfg: SolverConfig, boosted: bool) -> SolveResult:
    t0 = time.perf_counter()
    x = _start(feasible, x0)
    fx = f(x)
    trace: List[IterationRecord] = []
    status = Status.MAX_ITER
    k = 0
    while k < cfg.max_outer_iter:
        try:
            x_new, sub = step(x)
        except SubproblemError:
            status = Status.SUBPROBLEM_FAILURE
            break
        if not np.all(np.isfinite(x_new)):
            status = Status.SUBPROBLEM_FAILURE
            break
        k += 1
        f_dc = f(x_new)
        # x^{k+1} - x^k, with round-off across the equality constraints removed
        d = feasible.tangent(x_new - x)
        d_norm = float(np.linalg.norm(d))
        grad_new = f.gradient(x_new)
        descent_ip = float(grad_new @ d) if d_norm > 0 else 0.0
        alpha, trials, fired = 0.0, 0, False
        f_new = f_dc
        if (boosted and d_norm > 0
                and active_set(x_new, cfg.active_tol) <= active_set(x, cfg.active_tol)
                and descent_ip < -1e-12):
            assert _inside(feasible, x_new) or feasible.contains(x_new, 1e-12)
            fired = True
            x_new, alpha, trials, f_new = _armijo(
                f, x_new, f_dc, d, math.sqrt(2.0) / d_norm, cfg, feasible)
        df = abs(f_new - fx) / (1.0 + abs(f_new))
        dx = float(np.linalg.norm(x_new - x)) / (1.0 + float(np.linalg.norm(x_new)))
        trace.append(IterationRecord(
            k, f_new, df, dx, alpha, trials, descent_ip, d_norm, f_dc, fired,
            sub.iterations if sub else 0, sub.converged if sub else True,
            x_new.copy() if cfg.keep_iterates else None))
        x, fx = x_new, f_new
        if df <= cfg.eps1 and (cfg.stop_mode is StopMode.DF_ONLY or dx <= cfg.eps2):
            if cfg.kkt_tol is None or kkt_residual(f, feasible, x) <= cfg.kkt_tol:
                status = Status.CONVERGED
                break
    elapsed = (time.perf_counter() - t0) * 1e3
    return SolveResult(x, fx, k, status, kkt_residual(f, feasible, x), trace, name, elapsed,
                       np.asarray(x0, dtype=float).copy())


def _dc_step(pair: DcPair, feasible: FeasibleSet, cfg: SolverConfig):
    def step(x):
        lin = pair.h.gradient(x)
        res = projected_gradient(pair.g, lin, feasible, x, cfg.sub_tol, cfg.sub_max_iter,
                                 anchor_tol=cfg.sub_tol)
        return res.x, res
    return step


def _universal_step(up: UniversalPair, feasible: FeasibleSet):
    def step(x):
        return feasible.project(up.grad_H_bar(x) / up.eta), None
    return step


def _check_domain(pair: DcPair, feasible: FeasibleSet) -> None:
    # both feasible-set kinds lie inside the nonnegative orthant
    if pair.nvars != feasible.n:
        raise ValueError("dimension mismatch between pair and feasible set")


def dca_solve(pair: DcPair, f: Optional[SparsePolynomial], feasible: FeasibleSet, x0,
              cfg: SolverConfig | None = None) -> SolveResult:
    """Plain DCA on the DC-SOS pair."""
    cfg = cfg or SolverConfig()
    _check_domain(pair, feasible)
    return _outer("DCA", _dc_step(pair, feasible, cfg), f or pair.target, feasible, x0, cfg, False)


def bdca_solve(pair: DcPair, f: Optional[SparsePolynomial], feasible: FeasibleSet, x0,
               cfg: SolverConfig | None = None) -> SolveResult:
    """DCA with the Armijo boost along d = x^{k+1} - x^k."""
    cfg = cfg or SolverConfig()
    _check_domain(pair, feasible)
    return _outer("BDCA", _dc_step(pair, feasible, cfg), f or pair.target, feasible, x0, cfg, True)


def udca_solve(up: UniversalPair, f: Optional[SparsePolynomial], feasible: FeasibleSet, x0,
               cfg: SolverConfig | None = None) -> SolveResult:
    """DCA on the universal pair: each step is one projection."""
    cfg = cfg or SolverConfig()
    return _outer("UDCA", _universal_step(up, feasible), f or up.f, feasible, x0, cfg, False)


def ubdca_solve(up: UniversalPair, f: Optional[SparsePolynomial], feasible: FeasibleSet, x0,
                cfg: SolverConfig | None = None) -> SolveResult:
    """Universal DCA with the Armijo boost."""
    cfg = cfg or SolverConfig()
    return _outer("UBDCA", _universal_step(up, feasible), f or up.f, feasible, x0, cfg, True)


ALGORITHMS = ("DCA", "BDCA", "UDCA", "UBDCA")


def random_x0(feasible: FeasibleSet, rng: np.random.Generator) -> np.ndarray:
    """Binary draw from {0,1}^n projected onto the feasible set."""
    return feasible.project(rng.integers(0, 2, size=feasible.n).astype(float))
