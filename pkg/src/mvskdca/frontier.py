"""Efficient-frontier sweeps over a grid of target returns."""

from __future__ import annotations

import csv
import enum
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .dca import SolverConfig, bdca_solve, dca_solve, ubdca_solve, udca_solve
from .dcsos import assemble_G_H, universal_pair
from .moments import portfolio_moments
from .poly import Preference, build_objective
from .subsolvers import FeasibleSet

INFEASIBLE = "INFEASIBLE"
_BOXES = {"high": (20.0, 22.0), "low": (1.0, 3.0)}


class InvestorKind(enum.Enum):
    NEUTRAL = "neutral"
    AVERSE = "averse"
    SEEKING = "seeking"


def default_r_grid() -> np.ndarray:
    return np.round(np.arange(401) * 0.001, 12)


@dataclass(frozen=True)
class FrontierSpec:
    r_grid: Sequence[float] = field(default_factory=default_r_grid)
    investor_kind: InvestorKind = InvestorKind.NEUTRAL
    c: Optional[Sequence[float]] = None
    seed: int = 0
    warm_start: bool = True

    def __post_init__(self):
        grid = np.asarray(self.r_grid, dtype=float)
        if grid.ndim != 1 or not np.all(np.isfinite(grid)):
            raise ValueError("r_grid must be a finite 1-D sequence")
        if np.any(np.diff(grid) < 0):
            raise ValueError("r_grid must be sorted ascending")
        grid.setflags(write=False)
        object.__setattr__(self, "r_grid", grid)
        if self.c is not None:
            object.__setattr__(self, "c", Preference.of(self.c))

    def preference(self) -> Preference:
        return self.c if self.c is not None else sample_preference(self.investor_kind, self.seed)


@dataclass
class FrontierPoint:
    r: float
    x: np.ndarray
    m1: float
    m2: float
    m3: float
    m4: float
    status: str


def sample_preference(kind: InvestorKind, seed: int) -> Preference:
    """Draw (c1, c2, c3, c4) uniformly from the boxes of the investor kind."""
    kind = InvestorKind(kind)
    rng = np.random.default_rng(seed)
    if kind is InvestorKind.NEUTRAL:
        levels = ("high",) * 4
    elif kind is InvestorKind.AVERSE:
        levels = ("low", "high", "low", "high")
    else:
        levels = ("high", "low", "high", "low")
    return Preference(tuple(float(rng.uniform(*_BOXES[lv])) for lv in levels))


_SOLVERS = {"DCA": dca_solve, "BDCA": bdca_solve, "UDCA": udca_solve, "UBDCA": ubdca_solve}


def generate_frontier(tensors, spec: FrontierSpec, cfg: SolverConfig | None = None,
                      algo: str = "BDCA") -> List[FrontierPoint]:
    """Solve min c2*m2 - c3*m3 + c4*m4 over the simplex with mu.x = r for each r."""
    algo = algo.upper()
    if algo not in _SOLVERS:
        raise ValueError(f"unknown algorithm {algo!r}")
    cfg = cfg or SolverConfig()
    c = spec.preference()
    if c[0] != 0.0:
        warnings.warn("c1 is ignored on the frontier: the return is fixed by the constraint",
                      stacklevel=2)
    c = Preference((0.0, c[1], c[2], c[3]))
    f = build_objective(tensors, c)
    model = assemble_G_H(tensors, c) if algo in ("DCA", "BDCA") else universal_pair(tensors, c, f)
    solve = _SOLVERS[algo]
    mu = np.asarray(tensors.mu, dtype=float)
    n = len(mu)
    prev = None
    out = []
    for r in spec.r_grid:
        r = float(r)
        feasible = FeasibleSet.with_return(mu, r)
        if not feasible.is_nonempty:
            out.append(FrontierPoint(r, np.full(n, np.nan), *(np.nan,) * 4, INFEASIBLE))
            continue
        start = prev if (spec.warm_start and prev is not None) else np.full(n, 1.0 / n)
        x0 = feasible.project(start)
        res = solve(model, f, feasible, x0, cfg)
        x = res.x_star
        out.append(FrontierPoint(r, x, *portfolio_moments(tensors, x), res.status.value))
        prev = x
    return out


def _g(v: float) -> str:
    return "nan" if not np.isfinite(v) else f"{v:.12g}"


def write_frontier_csv(points: Sequence[FrontierPoint], n: int, path_or_file) -> None:
    header = ["r", "m1", "m2", "m3", "m4", "status"] + [f"x_{i + 1}" for i in range(n)]
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for p in points:
            w.writerow([_g(p.r), _g(p.m1), _g(p.m2), _g(p.m3), _g(p.m4), p.status]
                       + [_g(v) for v in p.x])
    finally:
        if own:
            fh.close()
