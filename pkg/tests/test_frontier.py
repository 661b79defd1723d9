import io
import warnings

import numpy as np
import pytest

from mvskdca.dca import SolverConfig
from mvskdca.frontier import (
    INFEASIBLE,
    FrontierSpec,
    InvestorKind,
    default_r_grid,
    generate_frontier,
    sample_preference,
    write_frontier_csv,
)
from mvskdca.subsolvers import FeasibleSet

from conftest import make_instance

MV_ONLY = (0.0, 1.0, 0.0, 0.0)


def two_asset_min_variance(t, r):
    """The return constraint pins the two-asset portfolio; its variance in closed form."""
    mu = t.mu
    a = (r - mu[1]) / (mu[0] - mu[1])
    x = np.array([a, 1.0 - a])
    return x, float(x @ t.sigma_matrix() @ x)


def segment_min_variance(t, r, m=200001):
    """Three assets: grid over the segment cut from the simplex by mu.x = r."""
    mu = t.mu
    # x = p + s*v with v spanning the null space of [1; mu]
    A = np.vstack([np.ones(3), mu])
    v = np.linalg.svd(A)[2][-1]
    p = np.linalg.lstsq(A, [1.0, r], rcond=None)[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        bounds = -p / v
    lo = max(b for b, vi in zip(bounds, v) if vi > 0)
    hi = min(b for b, vi in zip(bounds, v) if vi < 0)
    s = np.linspace(lo, hi, m)
    pts = p[None, :] + s[:, None] * v[None, :]
    return float(np.einsum("ij,jk,ik->i", pts, t.sigma_matrix(), pts).min())


# -- preferences --------------------------------------------------------------

@pytest.mark.parametrize("seed", [0, 1, 7, 12345])
def test_sample_preference_boxes(seed):
    c = sample_preference(InvestorKind.NEUTRAL, seed)
    assert all(20 <= v <= 22 for v in c)
    c = sample_preference(InvestorKind.AVERSE, seed)
    assert 20 <= c[1] <= 22 and 20 <= c[3] <= 22
    assert 1 <= c[0] <= 3 and 1 <= c[2] <= 3
    c = sample_preference(InvestorKind.SEEKING, seed)
    assert 20 <= c[0] <= 22 and 20 <= c[2] <= 22
    assert 1 <= c[1] <= 3 and 1 <= c[3] <= 3


def test_sample_preference_deterministic():
    for kind in InvestorKind:
        assert sample_preference(kind, 5) == sample_preference(kind, 5)
    assert sample_preference("averse", 5) == sample_preference(InvestorKind.AVERSE, 5)


def test_spec_validation():
    grid = default_r_grid()
    assert len(grid) == 401 and grid[0] == 0.0 and grid[-1] == 0.4
    with pytest.raises(ValueError):
        FrontierSpec(r_grid=[0.2, 0.1])
    with pytest.raises(ValueError):
        FrontierSpec(r_grid=[0.1, np.nan])
    assert FrontierSpec(c=MV_ONLY).preference().c == MV_ONLY


# -- sweeps -------------------------------------------------------------------

def test_single_asset_has_one_feasible_point():
    _, t = make_instance(1, seed=2)
    mu1 = float(t.mu[0])
    pts = generate_frontier(t, FrontierSpec(r_grid=sorted([-0.2, mu1, 0.5]), c=MV_ONLY))
    assert [p.status for p in pts].count(INFEASIBLE) == 2
    (good,) = [p for p in pts if p.status != INFEASIBLE]
    assert good.r == mu1 and np.array_equal(good.x, [1.0])


def test_two_asset_frontier_matches_closed_form():
    _, t = make_instance(2, seed=11)
    pts = generate_frontier(t, FrontierSpec(c=MV_ONLY))
    lo, hi = t.mu.min(), t.mu.max()
    feasible = [p for p in pts if p.status != INFEASIBLE]
    assert len(feasible) == int(((default_r_grid() >= lo) & (default_r_grid() <= hi)).sum())
    for p in feasible:
        assert p.status == "CONVERGED"
        x, m2 = two_asset_min_variance(t, p.r)
        assert abs(p.m2 - m2) <= 1e-6
        assert abs(p.m1 - p.r) <= 1e-8
        assert np.allclose(p.x, x, atol=1e-9)
    # variance is a convex quadratic in the target return
    m2 = np.array([p.m2 for p in feasible])
    assert np.diff(m2, 2).min() >= -1e-12


def test_three_asset_frontier_matches_segment_search():
    _, t = make_instance(3, seed=4)
    grid = np.linspace(t.mu.min(), t.mu.max(), 9)[1:-1]
    pts = generate_frontier(t, FrontierSpec(r_grid=grid, c=MV_ONLY))
    for p in pts:
        assert p.status == "CONVERGED"
        assert FeasibleSet.with_return(t.mu, p.r).contains(p.x)
        assert p.m2 <= segment_min_variance(t, p.r) + 1e-9


def test_grid_above_all_returns_is_infeasible():
    _, t = make_instance(3, seed=1)
    grid = [t.mu.max() + 0.01, t.mu.max() + 0.02]
    pts = generate_frontier(t, FrontierSpec(r_grid=grid, c=MV_ONLY))
    assert all(p.status == INFEASIBLE and np.all(np.isnan(p.x)) for p in pts)


def test_mvsk_frontier_fidelity_and_warning():
    _, t = make_instance(4, seed=3)
    grid = np.linspace(t.mu.min(), t.mu.max(), 12)
    spec = FrontierSpec(r_grid=grid, investor_kind=InvestorKind.AVERSE, seed=1)
    with pytest.warns(UserWarning, match="c1"):
        pts = generate_frontier(t, spec)
    for p in pts:
        assert FeasibleSet.with_return(t.mu, p.r).contains(p.x)
        if p.status == "CONVERGED":
            assert abs(p.m1 - p.r) <= 1e-8


def test_cold_universal_sweep_meets_targets():
    _, t = make_instance(4, seed=6)
    grid = np.linspace(t.mu.min(), t.mu.max(), 6)[1:-1]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        warm = generate_frontier(t, FrontierSpec(r_grid=grid, c=(0, 10, 1, 10)))
        cold = generate_frontier(t, FrontierSpec(r_grid=grid, c=(0, 10, 1, 10), warm_start=False),
                                 algo="UBDCA")
    for a, b in zip(warm, cold):
        assert abs(a.m1 - b.m1) <= 1e-8


def test_unknown_algorithm():
    _, t = make_instance(2, seed=0)
    with pytest.raises(ValueError):
        generate_frontier(t, FrontierSpec(c=MV_ONLY), algo="newton")


def test_frontier_csv_is_deterministic():
    _, t = make_instance(3, seed=8)
    spec = FrontierSpec(r_grid=np.linspace(0.0, 0.4, 21), c=(0, 10, 10, 10))
    texts = []
    for _ in range(2):
        buf = io.StringIO()
        write_frontier_csv(generate_frontier(t, spec, SolverConfig()), 3, buf)
        texts.append(buf.getvalue())
    assert texts[0] == texts[1]
    lines = texts[0].splitlines()
    assert lines[0] == "r,m1,m2,m3,m4,status,x_1,x_2,x_3"
    assert len(lines) == 22
    assert any(",INFEASIBLE," in ln and ln.count("nan") == 7 for ln in lines)
