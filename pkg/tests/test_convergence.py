import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wsodirk.convergence import (PROBLEMS, ConvergenceRow, ConvergenceTable, StudyError, StudySpec,
                                 WindowError, build_problem, default_dt_list, dt_sequence, emit_csv,
                                 fit_slope, measure_errors, parse_csv, run_study)
from wsodirk.tableau import make_tableau


def _rows(power, dts, scale=3.0):
    return [ConvergenceRow(dt, {"u": scale * dt**power}) for dt in dts]


@pytest.mark.parametrize("power", [2.0, 3.5])
def test_fit_slope_exact_on_power_law(power):
    dts = [2.0**-k for k in range(2, 9)]
    fit = fit_slope(_rows(power, dts), (dts[-1], dts[0]))
    assert abs(fit.slope - power) < 1e-10
    assert fit.points == len(dts) and fit.residual < 1e-10


def test_fit_slope_skips_failed_and_outside_rows():
    dts = [2.0**-k for k in range(2, 9)]
    rows = _rows(2.0, dts)
    rows[1] = ConvergenceRow(rows[1].dt, {"u": 1e3}, failure="diverged")
    rows.append(ConvergenceRow(1.0, {"u": 1e9}))
    rows.append(ConvergenceRow(1e-3, {"u": 0.0}))
    fit = fit_slope(rows, (dts[-1], dts[0]))
    assert abs(fit.slope - 2.0) < 1e-10 and fit.points == len(dts) - 1


def test_fit_slope_needs_three_points():
    with pytest.raises(WindowError):
        fit_slope(_rows(2.0, [0.1, 0.05]), (0.01, 1))
    table = ConvergenceTable("x", "decay", {}, 1.0, ("u",), (0.01, 1), rows=_rows(2, [0.1]))
    table.refit()
    assert table.slope() is None
    assert "# slope u: none" in emit_csv(table)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.5, 6), st.floats(1e-3, 1e3), st.integers(3, 10))
def test_fit_slope_property(power, scale, n):
    dts = list(np.geomspace(0.5, 1e-3, n))
    assert fit_slope(_rows(power, dts, scale), (1e-3, 0.5)).slope == pytest.approx(power, abs=1e-8)


def test_dt_sequence():
    assert dt_sequence(1.0, [4, 2, 2, 8, 0]) == [0.5, 0.25, 0.125]
    dts = default_dt_list("pr")
    assert dts == sorted(dts, reverse=True)
    assert all(abs(10.0 / dt - round(10.0 / dt)) < 1e-9 for dt in dts)


def test_csv_round_trip():
    dts = [0.5, 0.25, 0.125, 0.0625]
    rows = [ConvergenceRow(dt, {"u": dt**2 / 3, "u_x": dt**1.5, "u_xx": math.pi * dt}) for dt in dts]
    rows[2] = ConvergenceRow(0.125, {"u": math.nan, "u_x": math.nan, "u_xx": math.nan}, failure="boom")
    table = ConvergenceTable("wso3-p3", "burgers", {"N": 64, "nu": 0.1}, 1.0,
                             ("u", "u_x", "u_xx"), (0.0625, 0.5), rows=rows)
    table.refit()
    buf = io.StringIO()
    text = emit_csv(table, buf, extra_header={"jobs": 2})
    assert buf.getvalue() == text and "# jobs: 2" in text
    back = parse_csv(text)
    assert back.scheme == "wso3-p3" and back.problem == "burgers" and back.T == 1.0
    assert back.params == {"N": 64.0, "nu": 0.1}
    assert back.window == table.window and back.observables == table.observables
    for a, b in zip(back.rows, table.rows):
        assert a.dt == b.dt and a.failure == b.failure
        for o in table.observables:
            assert (a.errors[o] == b.errors[o]) or (math.isnan(a.errors[o]) and math.isnan(b.errors[o]))
    assert back.slope("u") == pytest.approx(table.slope("u"), abs=1e-12)


def test_csv_empty_table():
    table = ConvergenceTable("be", "decay", {}, 1.0, ("u",), (0.1, 1.0))
    lines = [ln for ln in emit_csv(table).splitlines() if not ln.startswith("#")]
    assert lines == ["dt,err_u"]
    assert parse_csv(emit_csv(table)).rows == []


def test_build_problem_and_params():
    sys = build_problem("pr", lam=-5.0)
    assert sys.params["lambda"] == -5.0
    with pytest.raises(ValueError, match="no parameter"):
        build_problem("decay", lam=-1.0)
    with pytest.raises(KeyError, match="available"):
        build_problem("heat")
    with pytest.raises(ValueError):
        StudySpec("wso3-p3", "pr", observables=["u_x"]).resolved()
    with pytest.raises(ValueError):
        StudySpec("wso3-p3", "pr", dt_list=[0.1, 0.0]).resolved()
    with pytest.raises(KeyError):
        StudySpec("nope", "pr").resolved()
    assert set(PROBLEMS) == {"decay", "pr", "schrodinger", "burgers", "vdp"}


def test_measure_errors_on_grid():
    sys = build_problem("burgers", N=32)
    e = measure_errors(sys, 0.0, sys.u0, ("u", "u_x", "u_xx"))
    assert all(v == 0.0 for v in e.values())
    e = measure_errors(sys, 0.0, sys.u0 + 1e-3, ("u", "u_x"))
    assert e["u"] == pytest.approx(1e-3, rel=1e-9)


def test_study_error_when_every_row_fails():
    # u' = 2u: the backward Euler iteration matrix 1 - 2 dt vanishes at dt = 1/2
    spec = StudySpec("backward-euler", "decay", {"rate": -2.0}, dt_list=[0.5])
    with pytest.raises(StudyError, match="singular"):
        run_study(spec)
    be = make_tableau([[1.0]], [1.0], "be")
    table = run_study(StudySpec("be", "decay", {"rate": -2.0}, dt_list=[0.5, 0.25], tableau=be))
    assert [r.ok for r in table.rows] == [False, True]


# (scheme, order, dt counts on T = 1): wso2-p3 has a small leading error constant
# and only reaches its asymptotic regime below dt = 1/128
NONSTIFF = [
    ("backward-euler", 1, [16, 32, 64, 128]),
    ("wso1-p3", 3, [16, 32, 64, 128]),
    ("wso2-p3", 3, [128, 256, 512, 1024]),
    ("wso3-p3", 3, [16, 32, 64, 128]),
    ("wso3-p4", 4, [16, 32, 64, 128]),
    ("edirk2-p3", 3, [16, 32, 64, 128]),
]


@pytest.mark.parametrize("scheme,p,ns", NONSTIFF)
def test_nonstiff_slopes(scheme, p, ns):
    dts = dt_sequence(1.0, ns)
    table = run_study(StudySpec(scheme, "pr", {"lam": -1.0}, dt_list=dts, T=1.0,
                                slope_window=(dts[-1], dts[0])))
    assert abs(table.slope() - p) < 0.25


def test_decay_study_parallel_matches_serial():
    spec = StudySpec("wso3-p3", "decay")
    a, b = run_study(spec), run_study(spec, jobs=2)
    assert [r.dt for r in a.rows] == [r.dt for r in b.rows]
    np.testing.assert_array_equal(a.column(), b.column())
    assert abs(a.slope() - 3) < 0.25
