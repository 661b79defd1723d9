import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from mvskdca.cli import (EXIT_IO, EXIT_OK, EXIT_USAGE, BENCH_FIELDS, InstanceSpec, UsageError,
                         main, parse_preference, write_bench_csv)
from mvskdca.moments import read_returns_csv


@pytest.fixture
def data4(tmp_path):
    path = tmp_path / "r4.csv"
    assert main(["gen", "--n", "4", "--seed", "3", "--out", str(path)]) == EXIT_OK
    return path


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


# -- gen ----------------------------------------------------------------------

def test_gen_is_deterministic_and_bounded(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (a, b):
        assert main(["gen", "--n", "4", "--T", "30", "--seed", "9", "--out", str(p)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    R = read_returns_csv(a)
    assert R.values.shape == (4, 30)
    assert R.values.min() >= -0.1 and R.values.max() <= 0.4
    code, out, _ = run(capsys, "gen", "--n", "4", "--seed", "9")
    assert code == EXIT_OK and out.encode() == a.read_bytes()


def test_gen_rejects_bad_specs(capsys):
    assert run(capsys, "gen", "--n", "4", "--T", "1")[0] == EXIT_USAGE
    assert run(capsys, "gen", "--n", "0")[0] == EXIT_USAGE
    assert run(capsys, "gen", "--n", "3", "--low", "0.5", "--high", "0.1")[0] == EXIT_USAGE
    with pytest.raises(UsageError):
        InstanceSpec(3, T=1)


# -- moments ------------------------------------------------------------------

def test_moments_json_and_dumps(data4, capsys):
    code, out, _ = run(capsys, "moments", "--data", str(data4))
    payload = json.loads(out)
    assert code == EXIT_OK and payload["n"] == 4 and payload["T"] == 30
    assert payload["coskewness_entries"] == 20 and payload["cokurtosis_entries"] == 35
    code, out, _ = run(capsys, "moments", "--data", str(data4), "--dump-objective")
    assert code == EXIT_OK and len(out.splitlines()) <= 70
    code, out, _ = run(capsys, "moments", "--data", str(data4), "--dump-dc", "--jit-moments")
    assert out.startswith("# eta ") and "# G\n" in out and "# H\n" in out


def test_missing_file_is_io_error(tmp_path, capsys):
    code, _, err = run(capsys, "solve", "--data", str(tmp_path / "none.csv"))
    assert code == EXIT_IO and "error" in err


# -- solve --------------------------------------------------------------------

def test_solve_bdca_converges(data4, tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    code, out, _ = run(capsys, "solve", "--data", str(data4), "--algo", "bdca",
                       "--trace", str(trace))
    res = json.loads(out)
    assert code == EXIT_OK
    assert set(res) >= {"f_star", "x_star", "iterations", "time_ms", "kkt_residual", "status"}
    assert res["status"] == "CONVERGED" and res["kkt_residual"] <= 1e-5
    assert abs(sum(res["x_star"]) - 1) <= 1e-12
    assert len(trace.read_text().splitlines()) == res["iterations"] + 1


@pytest.mark.parametrize("algo", ["dca", "udca", "ubdca"])
def test_solve_each_algorithm(data4, capsys, algo):
    code, out, _ = run(capsys, "solve", "--data", str(data4), "--algo", algo,
                       "--preference", "1,10,1,10")
    assert code == EXIT_OK and json.loads(out)["status"] in ("CONVERGED", "MAX_ITER")


def test_solve_is_deterministic(data4, capsys):
    outs = []
    for _ in range(2):
        code, out, _ = run(capsys, "solve", "--data", str(data4), "--seed", "4")
        res = json.loads(out)
        outs.append((res["x_star"], res["f_star"], res["iterations"]))
    assert outs[0] == outs[1]


def test_solve_rejects_negative_preference(data4, capsys):
    code, _, err = run(capsys, "solve", "--data", str(data4), "--preference", "1,-1,1,1")
    assert code == EXIT_USAGE and "error" in err
    assert run(capsys, "solve", "--data", str(data4), "--preference", "bold")[0] == EXIT_USAGE
    assert run(capsys, "solve", "--data", str(data4), "--beta", "1.5")[0] == EXIT_USAGE
    assert run(capsys, "solve", "--data", str(data4), "--algo", "newton")[0] == EXIT_USAGE


def test_infeasible_x0_is_projected_with_warning(data4, capsys):
    code, out, err = run(capsys, "solve", "--data", str(data4), "--x0", "1,1,0,0")
    assert code == EXIT_OK and "warning" in err and "infeasible" in err
    assert json.loads(out)["status"] == "CONVERGED"
    assert run(capsys, "solve", "--data", str(data4), "--x0", "1,0")[0] == EXIT_USAGE


def test_solver_flags_are_forwarded(data4, capsys):
    code, out, _ = run(capsys, "solve", "--data", str(data4), "--max-iter", "1", "--eps1", "1e-15")
    assert code == EXIT_OK and json.loads(out)["status"] == "MAX_ITER"
    code, out, _ = run(capsys, "solve", "--data", str(data4), "--kkt-tol", "none",
                       "--stop-mode", "df_dx", "--sigma", "0.01")
    assert code == EXIT_OK and json.loads(out)["status"] == "CONVERGED"


def test_parse_preference():
    assert parse_preference("Averse").c == (1.0, 10.0, 1.0, 10.0)
    assert parse_preference("1, 2, 3, 4").c == (1.0, 2.0, 3.0, 4.0)


# -- bench --------------------------------------------------------------------

def test_bench_rows_and_agreement(tmp_path, capsys):
    out_path = tmp_path / "bench.csv"
    assert main(["bench", "--ns", "4,6", "--seed", "1", "--out", str(out_path)]) == EXIT_OK
    rows = list(csv.DictReader(out_path.open()))
    assert list(rows[0]) == BENCH_FIELDS
    assert len(rows) == 7 and rows[-1]["instance"] == "average"
    for row in rows[:-1]:
        objs = [float(row[f"{a}_obj"]) for a in ("DCA", "BDCA", "UDCA", "UBDCA")]
        assert max(objs) - min(objs) <= 1e-3
    assert [r["n"] for r in rows[:-1]] == ["4"] * 3 + ["6"] * 3
    assert float(rows[-1]["DCA_iter"]) == np.mean([float(r["DCA_iter"]) for r in rows[:-1]])


def test_bench_monomials_match_objective(data4, capsys):
    from mvskdca.moments import estimate_moments
    from mvskdca.poly import PROFILES, build_objective

    code, out, _ = run(capsys, "bench", "--data", str(data4))
    rows = list(csv.DictReader(io.StringIO(out)))
    t = estimate_moments(read_returns_csv(data4))
    for row in rows[:-1]:
        assert int(row["monomials"]) == len(build_objective(t, PROFILES[row["preference"]]))


def test_bench_empty_is_header_only(capsys):
    code, out, _ = run(capsys, "bench")
    assert code == EXIT_OK and out == ",".join(BENCH_FIELDS) + "\n"
    buf = io.StringIO()
    write_bench_csv([], buf)
    assert buf.getvalue() == out


# -- frontier -----------------------------------------------------------------

def test_frontier_two_assets_matches_closed_form(tmp_path, capsys):
    data = tmp_path / "r2.csv"
    main(["gen", "--n", "2", "--seed", "5", "--out", str(data)])
    code, out, _ = run(capsys, "frontier", "--data", str(data), "--preference", "0,1,0,0",
                       "--r-step", "0.01")
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 41
    from mvskdca.moments import estimate_moments
    t = estimate_moments(read_returns_csv(data))
    S = t.sigma_matrix()
    done = [r for r in rows if r["status"] == "CONVERGED"]
    assert done
    for r in done:
        rr = float(r["r"])
        a = (rr - t.mu[1]) / (t.mu[0] - t.mu[1])
        x = np.array([a, 1 - a])
        assert abs(float(r["m2"]) - x @ S @ x) <= 1e-6
        assert abs(float(r["m1"]) - rr) <= 1e-8
    assert all(r["status"] in ("CONVERGED", "INFEASIBLE") for r in rows)


def test_frontier_above_returns_and_determinism(data4, capsys):
    args = ["frontier", "--data", str(data4), "--r-min", "0.5", "--r-max", "0.6",
            "--r-step", "0.05", "--kind", "seeking", "--seed", "2"]
    code, out, err = run(capsys, *args)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == EXIT_OK and len(rows) == 3
    assert all(r["status"] == "INFEASIBLE" for r in rows)
    args[4], args[6] = "0.1", "0.2"
    first = run(capsys, *args)[1]
    second = run(capsys, *args)[1]
    assert first == second and "CONVERGED" in first
    assert "warning" in run(capsys, *args)[2]
    assert run(capsys, "frontier", "--data", str(data4), "--r-step", "0")[0] == EXIT_USAGE


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "mvskdca", "gen", "--n", "2", "--T", "3"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and len(out.stdout.splitlines()) == 4
    bad = subprocess.run([sys.executable, "-m", "mvskdca", "solve"], capture_output=True)
    assert bad.returncode == EXIT_USAGE
