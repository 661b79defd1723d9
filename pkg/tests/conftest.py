import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mvskdca.moments import ReturnMatrix, estimate_moments

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("default")


def make_returns(n, T=30, seed=0, low=-0.1, high=0.4):
    rng = np.random.default_rng(seed)
    return ReturnMatrix(rng.uniform(low, high, size=(n, T)))


def make_instance(n, T=30, seed=0, jit=False):
    R = make_returns(n, T, seed)
    return R, estimate_moments(R, jit=jit)


def random_simplex_points(n, count, rng):
    return rng.dirichlet(np.ones(n), size=count)


# acceptance outcomes keyed by criterion number, reported after the run
_CRITERIA = {}
# measured values reported by each acceptance test, keyed by test name
ACCEPTANCE_NOTES = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if not name.startswith("test_criterion_"):
        return
    num = int(name.split("_")[2])
    label = " ".join(name.split("_")[3:])
    if report.failed:
        _CRITERIA[num] = (name, label, "FAIL")
    elif report.when == "call" and num not in _CRITERIA:
        _CRITERIA[num] = (name, label, "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(_CRITERIA):
        name, label, outcome = _CRITERIA[num]
        notes = "; ".join(ACCEPTANCE_NOTES.get(name, []))
        terminalreporter.write_line(f"criterion {num:2d} {outcome}  {label}: {notes}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def poly_on_points(p, pts):
    """Evaluate a sparse polynomial at each row of ``pts`` straight from its terms."""
    pts = np.asarray(pts, dtype=float)
    out = np.zeros(len(pts))
    for key, c in p.items():
        term = np.full(len(pts), c)
        for v, e in key:
            term *= pts[:, v] ** e
        out += term
    return out


def segment_grid(m=10 ** 6):
    """Points (t, 1 - t) on an m-interval grid of the two-asset simplex."""
    t = np.linspace(0.0, 1.0, m + 1)
    return np.stack([t, 1.0 - t], axis=1)


def build_models(n, c, seed, T=30):
    """Objective, DC-SOS pair, universal pair, simplex and a shared start point."""
    from mvskdca.dca import random_x0
    from mvskdca.dcsos import assemble_G_H, universal_pair
    from mvskdca.poly import build_objective
    from mvskdca.subsolvers import FeasibleSet

    rng = np.random.default_rng(seed)
    R = ReturnMatrix(rng.uniform(-0.1, 0.4, size=(n, T)))
    t = estimate_moments(R)
    f = build_objective(t, c)
    S = FeasibleSet.simplex(n)
    return f, assemble_G_H(t, c), universal_pair(t, c, f), S, random_x0(S, rng)


def run_all(models, cfg=None):
    """All four solvers from the same start; results keyed by algorithm name."""
    from mvskdca.dca import bdca_solve, dca_solve, ubdca_solve, udca_solve

    f, pair, up, S, x0 = models
    return {
        "DCA": dca_solve(pair, f, S, x0, cfg),
        "BDCA": bdca_solve(pair, f, S, x0, cfg),
        "UDCA": udca_solve(up, f, S, x0, cfg),
        "UBDCA": ubdca_solve(up, f, S, x0, cfg),
    }


def descent_violations(res, f, S, cfg, up=None):
    """Messages for every broken descent property along one solve (empty when sound).

    Needs ``cfg.keep_iterates``.  With ``up`` the strong-descent inequality of
    the universal scheme is checked with rho = eta - max sampled eig of the Hessian.
    """
    out = []
    fs = [f(res.x0)] + [rec.f for rec in res.trace]
    xs = [res.x0] + [rec.x for rec in res.trace]
    for k in range(1, len(fs)):
        if fs[k] > fs[k - 1] + 1e-10:
            out.append(f"f increased at k={k}: {fs[k - 1]!r} -> {fs[k]!r}")
    rho = None
    if up is not None:
        lam = max(np.linalg.eigvalsh(f.hessian(x)).max() for x in xs)
        rho = up.eta - lam
    for rec, x in zip(res.trace, xs[1:]):
        if not S.contains(x, tol=1e-12) or x.min() < 0:
            out.append(f"infeasible iterate at k={rec.k}")
        slack = 10 * cfg.sub_tol * rec.d_norm
        if rec.sub_converged and rec.descent_ip > slack:
            out.append(f"weak descent broken at k={rec.k}: {rec.descent_ip!r}")
        if rho is not None and rho > 0:
            if rec.descent_ip > -rho * rec.d_norm ** 2 + slack + 1e-14:
                out.append(f"strong descent broken at k={rec.k}")
        if rec.alpha > 0:
            if not rec.f_dc - rec.f - cfg.sigma * rec.alpha ** 2 * rec.d_norm ** 2 >= 0.0:
                out.append(f"Armijo inequality broken at k={rec.k}")
    return out


def enumerate_projection(y, mu=None, r=None):
    """Nearest point found by solving the equality-constrained problem on every support."""
    y = np.asarray(y, dtype=float)
    n = len(y)
    best, best_d = None, np.inf
    for k in range(1, n + 1):
        for S in itertools.combinations(range(n), k):
            S = list(S)
            rows = [np.ones(k)] if mu is None else [np.ones(k), np.asarray(mu)[S]]
            A = np.array(rows)
            b = np.array([1.0] if mu is None else [1.0, r])
            ys = y[S]
            xs = ys + A.T @ np.linalg.pinv(A @ A.T) @ (b - A @ ys)
            if np.abs(A @ xs - b).max() > 1e-10 or xs.min() < -1e-12:
                continue
            x = np.zeros(n)
            x[S] = xs
            d = np.sum((x - y) ** 2)
            if d < best_d:
                best, best_d = x, d
    return best
