"""Convex subproblems over the simplex and the simplex cut by a return target."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

CLAMP_TOL = 1e-15
# rounding floor for the Frank-Wolfe gap, relative to the gradient scale
GAP_FLOOR = 1e-14
# relative size of objective changes treated as rounding noise
F_NOISE = 1e-14


class SubproblemError(RuntimeError):
    """Raised when a convex subproblem cannot be solved."""


class SetKind(enum.Enum):
    SIMPLEX = "simplex"
    SIMPLEX_WITH_RETURN = "simplex_with_return"


@dataclass(frozen=True)
class FeasibleSet:
    kind: SetKind
    n: int
    mu: Optional[np.ndarray] = None
    r: Optional[float] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("feasible set needs n >= 1")
        if self.kind is SetKind.SIMPLEX_WITH_RETURN:
            if self.mu is None or self.r is None:
                raise ValueError("return-constrained set needs mu and r")
            mu = np.array(self.mu, dtype=float)
            if mu.shape != (self.n,):
                raise ValueError("mu has the wrong length")
            mu.setflags(write=False)
            object.__setattr__(self, "mu", mu)
            object.__setattr__(self, "r", float(self.r))

    @classmethod
    def simplex(cls, n: int) -> "FeasibleSet":
        return cls(SetKind.SIMPLEX, n)

    @classmethod
    def with_return(cls, mu, r: float) -> "FeasibleSet":
        mu = np.asarray(mu, dtype=float)
        return cls(SetKind.SIMPLEX_WITH_RETURN, len(mu), mu, r)

    @property
    def is_nonempty(self) -> bool:
        if self.kind is SetKind.SIMPLEX:
            return True
        return bool(self.mu.min() <= self.r <= self.mu.max())

    def project(self, y) -> np.ndarray:
        if self.kind is SetKind.SIMPLEX:
            return project_simplex(y)
        return project_simplex_with_return(y, self.mu, self.r)

    def contains(self, x, tol: float = 1e-12) -> bool:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,) or not np.all(np.isfinite(x)):
            return False
        ok = x.min() >= -tol and abs(x.sum() - 1.0) <= tol
        if self.kind is SetKind.SIMPLEX_WITH_RETURN:
            ok = ok and abs(self.mu @ x - self.r) <= max(tol, 1e-12 * (1 + abs(self.r)))
        return bool(ok)

    def equality_rows(self) -> np.ndarray:
        if self.kind is SetKind.SIMPLEX:
            return np.ones((1, self.n))
        return np.vstack([np.ones(self.n), self.mu])

    def tangent(self, d) -> np.ndarray:
        """Remove the rounding component of ``d`` that leaves the affine hull.

        Only nonzero entries are adjusted, so coordinates the direction does
        not move stay exactly fixed.
        """
        d = np.array(d, dtype=float)
        mask = d != 0
        if not mask.any():
            return d
        A = self.equality_rows()[:, mask]
        coef = np.linalg.lstsq(A @ A.T, A @ d[mask], rcond=None)[0]
        d[mask] -= A.T @ coef
        return d

    def vertices(self) -> np.ndarray:
        """Extreme points, one per row."""
        if self.kind is SetKind.SIMPLEX:
            return np.eye(self.n)
        mu, r = self.mu, self.r
        out = []
        for i in range(self.n):
            if mu[i] == r:
                v = np.zeros(self.n)
                v[i] = 1.0
                out.append(v)
        lo = np.flatnonzero(mu < r)
        hi = np.flatnonzero(mu > r)
        for i in lo:
            for j in hi:
                v = np.zeros(self.n)
                t = (mu[j] - r) / (mu[j] - mu[i])
                v[i], v[j] = t, 1.0 - t
                out.append(v)
        return np.array(out).reshape(-1, self.n)


def _finish(x: np.ndarray) -> np.ndarray:
    x = np.where(x < CLAMP_TOL, np.where(x > -CLAMP_TOL, 0.0, x), x)
    x = np.maximum(x, 0.0)
    s = x.sum()
    return x / s if s > 0 else x


def _threshold(y: np.ndarray) -> float:
    """tau with sum(max(y - tau, 0)) = 1."""
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, len(y) + 1)
    rho = np.flatnonzero(u - css / ks > 0)[-1]
    return css[rho] / (rho + 1)


def project_simplex(y) -> np.ndarray:
    """Euclidean projection onto {x >= 0, sum x = 1} by sort and threshold."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or len(y) == 0:
        raise ValueError("projection needs a nonempty vector")
    if not np.all(np.isfinite(y)):
        raise SubproblemError("non-finite vector passed to projection")
    return _finish(np.maximum(y - _threshold(y), 0.0))


def _project_face(y: np.ndarray, mask: np.ndarray) -> np.ndarray:
    x = np.zeros_like(y)
    x[mask] = project_simplex(y[mask])
    return x


def project_simplex_with_return(y, mu, r: float, max_iter: int = 200) -> np.ndarray:
    """Projection onto {x >= 0, sum x = 1, mu.x = r}.

    The solution is x(lam) = P_simplex(y - lam*mu) for the multiplier lam
    with mu.x(lam) = r; mu.x(lam) is nonincreasing, so lam is bracketed by
    doubling and bisected, then polished by solving the 2x2 KKT system on
    the identified support.
    """
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    r = float(r)
    if y.shape != mu.shape or y.ndim != 1 or len(y) == 0:
        raise ValueError("y and mu must be nonempty vectors of equal length")
    if not np.all(np.isfinite(y)):
        raise SubproblemError("non-finite vector passed to projection")
    lo_mu, hi_mu = mu.min(), mu.max()
    scale = 1.0 + abs(r)
    if r < lo_mu - 1e-12 * scale or r > hi_mu + 1e-12 * scale:
        raise ValueError(f"infeasible target return {r} outside [{lo_mu}, {hi_mu}]")
    if hi_mu - lo_mu <= 1e-14 * scale:
        return project_simplex(y)
    if r <= lo_mu:
        return _project_face(y, mu == lo_mu)
    if r >= hi_mu:
        return _project_face(y, mu == hi_mu)

    def gap(lam):
        x = project_simplex(y - lam * mu)
        return mu @ x - r, x

    span = (np.ptp(y) + 1.0) / (hi_mu - lo_mu)
    a, b = -span, span
    ga, _ = gap(a)
    gb, _ = gap(b)
    for _ in range(200):
        if ga >= 0 >= gb:
            break
        width = b - a
        if ga < 0:
            a, b, gb = a - 2 * width, a, ga
            ga, _ = gap(a)
        else:
            a, b, ga = b, b + 2 * width, gb
            gb, _ = gap(b)
    else:
        raise SubproblemError("could not bracket the return multiplier")

    x = None
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        gm, x = gap(m)
        polished = _polish(y, mu, r, x)
        if polished is not None:
            return polished
        if gm > 0:
            a = m
        else:
            b = m
        if b - a <= 1e-15 * (1.0 + abs(m)):
            break
    polished = _polish(y, mu, r, x, loose=True)
    if polished is not None:
        return polished
    raise SubproblemError("return-constrained projection did not converge")


def _polish(y, mu, r, x, loose: bool = False) -> Optional[np.ndarray]:
    """Exact KKT solve on the support of ``x``; None when it is not optimal."""
    S = x > 0
    k = int(S.sum())
    if k == 0:
        return None
    ys, ms = y[S], mu[S]
    A = np.array([[k, ms.sum()], [ms.sum(), ms @ ms]])
    rhs = np.array([ys.sum() - 1.0, ms @ ys - r])
    if abs(np.linalg.det(A)) <= 1e-14 * max(1.0, np.abs(A).max() ** 2):
        if not loose:
            return None
        # one effective constraint on this support: plain threshold there
        cand = _finish(np.where(S, np.maximum(y - _threshold(ys), 0.0), 0.0))
        return cand if abs(mu @ cand - r) <= 1e-9 * (1 + abs(r)) else None
    tau, lam = np.linalg.solve(A, rhs)
    z = y - tau - lam * mu
    if np.any(z[S] < -1e-12) or np.any(z[~S] > 1e-12):
        return None
    out = np.where(S, np.maximum(z, 0.0), 0.0)
    s = out.sum()
    if s <= 0:
        return None
    out = out / s
    if abs(mu @ out - r) > 1e-10 * (1 + abs(r)):
        return None
    return out


def solve_quadratic_subproblem(grad_val, eta: float, feasible: FeasibleSet) -> np.ndarray:
    """argmin (eta/2)|x|^2 - <grad_val, x> over the set, i.e. P(grad_val / eta)."""
    if not eta > 0:
        raise ValueError("eta must be positive")
    return feasible.project(np.asarray(grad_val, dtype=float) / eta)


class InnerResult(NamedTuple):
    x: np.ndarray
    iterations: int
    converged: bool
    residual: float
    gap: float


def fw_gap(grad: np.ndarray, x: np.ndarray, feasible: FeasibleSet) -> float:
    """max over vertices z of <grad, x - z> (nonnegative at feasible x, up to rounding)."""
    if feasible.kind is SetKind.SIMPLEX:
        return float(grad @ x - grad.min())
    V = feasible.vertices()
    return float(grad @ x - (V @ grad).min())


def _value_and_grad(G):
    if hasattr(G, "value_and_gradient"):
        return G.value_and_gradient
    return lambda x: (G(x), G.gradient(x))


def projected_gradient(G, linear, feasible: FeasibleSet, x0, tol: float = 1e-8,
                       max_iter: int = 5000, anchor_tol: Optional[float] = None) -> InnerResult:
    """Minimize G(x) - <linear, x> by projected gradient with Armijo backtracking.

    Stops when the unit-step projected-gradient residual |x - P(x - grad)|
    is at most ``tol``.  With ``anchor_tol`` the slope <grad, x - x0> must
    also be at most ``anchor_tol * |x - x0|``; since the objective is convex
    and linearized at x0 by the caller, this bounds the slope of the
    nonconvex target along x - x0 by the same amount.
    """
    vg = _value_and_grad(G)
    lin = np.asarray(linear, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if not feasible.contains(x0, tol=1e-9):
        raise SubproblemError("initial point is infeasible")
    x = x0.copy()

    def phi(z):
        v, g = vg(z)
        return v - lin @ z, g - lin

    fx, gx = phi(x)
    if not np.isfinite(fx) or not np.all(np.isfinite(gx)):
        raise SubproblemError("non-finite objective at the initial point")
    step = 1.0 / max(np.abs(gx).max(), 1e-12)
    residual = gap = np.inf
    for it in range(max_iter + 1):
        residual = float(np.linalg.norm(x - feasible.project(x - gx)))
        gap = max(fw_gap(gx, x, feasible), 0.0)
        done = residual <= tol
        if done and anchor_tol is not None:
            floor = GAP_FLOOR * max(1.0, float(np.abs(gx).max()))
            slope = float(gx @ (x - x0))
            done = slope <= max(anchor_tol * float(np.linalg.norm(x - x0)), floor)
        if done or gap == 0.0:
            return InnerResult(x, it, True, residual, gap)
        if it == max_iter:
            break
        s = min(max(step, 1e-8), 1e8)
        while True:
            z = feasible.project(x - s * gx)
            fz, gz = phi(z)
            if not np.isfinite(fz):
                raise SubproblemError("non-finite objective encountered")
            dz = z - x
            if fz <= fx + 1e-4 * (gx @ dz) or s <= 1e-16:
                break
            # once f changes only at rounding level, judge decrease by the slope at z
            if fz <= fx + F_NOISE * (1.0 + abs(fx)) and gz @ dz <= -(1.0 - 2e-4) * (gx @ dz):
                break
            s *= 0.5
        if not np.any(dz) or fz > fx + F_NOISE * (1.0 + abs(fx)):
            # no representable progress
            return InnerResult(x, it, residual <= tol, residual, gap)
        dg = gz - gx
        curv = dz @ dg
        step = (dz @ dz) / curv if curv > 0 else 1e8
        x, fx, gx = z, fz, gz
    return InnerResult(x, max_iter, False, residual, gap)


def minimize_convex_over_set(G, linear, feasible: FeasibleSet, x0, tol: float = 1e-8,
                             max_iter: int = 5000) -> np.ndarray:
    """Approximate minimizer of G(x) - <linear, x> over the feasible set."""
    res = projected_gradient(G, linear, feasible, x0, tol, max_iter)
    if not np.all(np.isfinite(res.x)):
        raise SubproblemError("non-finite iterate")
    return res.x
