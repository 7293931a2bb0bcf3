import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wsodirk import analysis
from wsodirk.search import (SearchFailure, SearchSpec, constraint_residuals, params_from_tableau, search,
                            tableau_from_params, verify)
from wsodirk.tableau import make_tableau, registry_get


def test_qe_above_three_is_rejected():
    with pytest.raises(ValueError, match="at most to order 3"):
        search(SearchSpec(6, 3, 4))


@pytest.mark.parametrize("kw", [dict(s=0, p=1, qe=1), dict(s=2, p=5, qe=1),
                                dict(s=2, p=2, qe=1, multistarts=0), dict(s=2, p=2, qe=1, diag_min=0)])
def test_invalid_specs(kw):
    with pytest.raises(ValueError):
        SearchSpec(**kw).validate()


def test_one_stage_third_order_is_infeasible():
    with pytest.raises(SearchFailure) as info:
        search(SearchSpec(1, 3, 1, multistarts=2, max_draws=3))
    res = info.value.best_residuals
    assert res and max(abs(v) for v in res.values()) > 1e-3


def test_residuals_vanish_at_published_scheme():
    t = registry_get("wso3-p3")
    res = constraint_residuals(params_from_tableau(t), SearchSpec(4, 3, 3))
    assert max(abs(v) for v in res.values()) < 1e-9
    assert {"order[b.e]", "btau[3]", "eig[3][4]", "astab", "diag[1]"} <= set(res)


def test_residuals_vanish_at_backward_euler():
    res = constraint_residuals(np.array([1.0]), SearchSpec(1, 1, 1))
    assert max(abs(v) for v in res.values()) < 1e-15


def test_residual_shape_check():
    with pytest.raises(ValueError):
        constraint_residuals(np.zeros(3), SearchSpec(3, 2, 1))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.data())
def test_residuals_finite_on_random_points(s, data):
    n = s * (s + 1) // 2
    x = np.array(data.draw(st.lists(st.floats(-4, 4), min_size=n, max_size=n)))
    res = constraint_residuals(x, SearchSpec(s, min(s, 4), 2))
    assert all(np.isfinite(v) for v in res.values())
    assert all(v >= 0 for k, v in res.items() if k.startswith("diag") or k == "astab")


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.data())
def test_parameter_round_trip(s, data):
    n = s * (s + 1) // 2
    x = np.array(data.draw(st.lists(st.floats(-4, 4), min_size=n, max_size=n)))
    t = tableau_from_params(x, s)
    np.testing.assert_array_equal(params_from_tableau(t), x)
    assert t.is_stiffly_accurate and t.is_dirk


def test_params_from_tableau_needs_dirk():
    with pytest.raises(ValueError):
        params_from_tableau(make_tableau([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5]))


def test_small_search_verifies_and_is_deterministic():
    spec = SearchSpec(2, 2, 1, multistarts=2, seed=0)
    a, b = search(spec), search(spec)
    np.testing.assert_array_equal(a.tableau.A, b.tableau.A)
    assert a.objective == b.objective
    ok, rep, why = verify(a.tableau, spec)
    assert ok, why
    assert analysis.classical_order(a.tableau) >= 2 and rep.a_stable
    assert a.tableau.claimed_order == 2 and "seed=0" in a.tableau.source


def test_verify_reports_reasons():
    ok, _, why = verify(registry_get("wso2-p3"), SearchSpec(4, 3, 3))
    assert not ok and any("eigenvector" in w for w in why)
    ok, _, why = verify(registry_get("wso3-p3"), SearchSpec(4, 3, 3))
    assert ok and not why
