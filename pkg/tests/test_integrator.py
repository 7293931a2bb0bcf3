import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wsodirk.integrator import (IntegrationError, NewtonError, NewtonSettings, ODESystem,
                                SingularMatrixError, banded_to_dense, dense_to_banded, dirk_step,
                                fd_jacobian, integrate, linear_solve)
from wsodirk.problems import GridSpec, burgers_mol, linear_decay, prothero_robinson, schrodinger_mol
from wsodirk.problems.prothero_robinson import phi, phi_derivative
from wsodirk.tableau import make_tableau, registry_get, registry_names

BE = registry_get("backward-euler")


def linear_system(J, forcing=None):
    J = np.asarray(J, float)
    n = J.shape[0]
    g = forcing or (lambda t: np.zeros(n))
    return ODESystem(dim=n, rhs=lambda t, u: J @ u + g(t), jacobian=lambda t, u: J.copy(), linear=True)


def dense_step_oracle(t, J, g, tn, un, dt):
    """Solve the full s*n stage system of u' = J u + g(t) at once."""
    s, n = t.s, len(un)
    M = np.eye(s * n) - dt * np.kron(t.A, J)
    rhs = np.concatenate([un + dt * sum(t.A[i, j] * g(tn + t.c[j] * dt) for j in range(s)) for i in range(s)])
    U = np.linalg.solve(M, rhs).reshape(s, n)
    K = np.array([J @ U[i] + g(tn + t.c[i] * dt) for i in range(s)])
    return un + dt * t.b @ K, U


def test_backward_euler_decay():
    assert dirk_step(BE, linear_decay(), 0.0, np.array([1.0]), 1.0)[0] == pytest.approx(0.5, abs=1e-15)


def test_backward_euler_integrate():
    n = 8
    res = integrate(BE, linear_decay(), 0.0, [1.0], 2.0, 2.0 / n)
    assert res.u[0] == pytest.approx((1 + 2.0 / n) ** -n, rel=1e-13)
    assert res.steps == n and not res.partial_step


@pytest.mark.parametrize("name", registry_names())
def test_zero_rhs_is_fixed(name):
    sys = linear_system(np.zeros((3, 3)))
    u = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(dirk_step(registry_get(name), sys, 0.0, u, 0.1), u)
    np.testing.assert_array_equal(integrate(registry_get(name), sys, 0.0, u, 1.0, 0.1).u, u)


@pytest.mark.parametrize("name", registry_names())
def test_scalar_step_matches_dense_oracle(name):
    t = registry_get(name)
    lam = -1e4
    sys = prothero_robinson(lam)
    g = lambda s: np.array([-lam * phi(s) + phi_derivative(s, 1)])
    for dt in (1e-3, 0.1):
        ref, _ = dense_step_oracle(t, [[lam]], g, 0.3, np.array([phi(0.3)]), dt)
        got = dirk_step(t, sys, 0.3, np.array([phi(0.3)]), dt)
        assert got[0] == pytest.approx(ref[0], rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("name", registry_names())
def test_vector_step_matches_dense_oracle(name):
    t = registry_get(name)
    rng = np.random.default_rng(1)
    Q = rng.normal(size=(4, 4))
    J = -Q @ Q.T - np.eye(4)
    g = lambda s: np.array([math.sin(s), math.cos(2 * s), 1.0, s])
    sys = linear_system(J, g)
    u0 = rng.normal(size=4)
    ref, U = dense_step_oracle(t, J, g, 0.2, u0, 0.05)
    got = dirk_step(t, sys, 0.2, u0, 0.05)
    np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-14)
    if t.is_stiffly_accurate:
        # the returned step is the last stage
        np.testing.assert_allclose(got, U[-1], rtol=0, atol=1e-13 * max(1, np.abs(U[-1]).max()))


def test_stiffly_accurate_output_equals_quadrature():
    """Returning U_s for stiffly accurate schemes agrees with u + dt b.K to 1e-13."""
    t = registry_get("wso3-p3")
    rng = np.random.default_rng(7)
    J = -np.diag(rng.uniform(1, 1e3, 5))
    sys = linear_system(J)
    un = rng.normal(size=5)
    dt = 0.1
    _, U = dense_step_oracle(t, J, lambda s: np.zeros(5), 0.0, un, dt)
    K = U @ J.T
    out = dirk_step(t, sys, 0.0, un, dt)
    np.testing.assert_allclose(out, un + dt * t.b @ K, rtol=0, atol=1e-13)


def test_partial_final_step():
    res = integrate(BE, linear_decay(), 0.0, [1.0], 1.0, 0.3)
    assert res.partial_step and res.steps == 4
    assert res.last_dt == pytest.approx(0.1)
    assert res.t == 1.0
    expected = (1 / 1.3) ** 3 / 1.1
    assert res.u[0] == pytest.approx(expected, rel=1e-14)


def test_trajectory():
    res = integrate(BE, linear_decay(), 0.0, [1.0], 1.0, 0.25, trajectory=True)
    assert res.trajectory.shape == (5, 1)
    np.testing.assert_allclose(res.times, [0, 0.25, 0.5, 0.75, 1.0])


def test_bad_arguments():
    with pytest.raises(ValueError):
        integrate(BE, linear_decay(), 0.0, [1.0], 1.0, 0.0)
    with pytest.raises(ValueError):
        integrate(BE, linear_decay(), 1.0, [1.0], 0.0, 0.1)
    with pytest.raises(ValueError):
        dirk_step(BE, linear_decay(), 0.0, np.array([1.0]), -1.0)
    full = make_tableau([[0.5, 0.5], [0.5, 0.5]], [0.5, 0.5])
    with pytest.raises(ValueError, match="diagonally implicit"):
        dirk_step(full, linear_decay(), 0.0, np.array([1.0]), 0.1)
    with pytest.raises(ValueError):
        NewtonSettings(rel_tol=0.0)
    with pytest.raises(ValueError):
        NewtonSettings(max_iters=0)


# -- linear algebra -----------------------------------------------------------

def test_identity_solve():
    rhs = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(linear_solve(np.eye(3), rhs), rhs)


def test_poisson_banded_vs_dense():
    M = np.array([[2.0, -1, 0], [-1, 2, -1], [0, -1, 2]])
    rhs = np.array([1.0, 0.0, 1.0])
    ref = np.linalg.solve(M, rhs)
    np.testing.assert_allclose(linear_solve(M, rhs), ref, rtol=1e-15)
    np.testing.assert_allclose(linear_solve(dense_to_banded(M, 1, 1), rhs, (1, 1)), ref, rtol=1e-15)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 40), st.integers(0, 4), st.integers(0, 4), st.integers(0, 2**31))
def test_banded_matches_dense(n, l, u, seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n))
    M = np.triu(np.tril(M, u), -l) + (l + u + 2) * np.eye(n)
    rhs = rng.normal(size=n)
    ab = dense_to_banded(M, l, u)
    np.testing.assert_array_equal(banded_to_dense(ab, l, u), M)
    np.testing.assert_allclose(linear_solve(ab, rhs, (l, u)), np.linalg.solve(M, rhs), rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(linear_solve(M, rhs), np.linalg.solve(M, rhs), rtol=1e-10, atol=1e-12)


def test_singular_matrices():
    with pytest.raises(SingularMatrixError) as exc:
        linear_solve(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))
    assert exc.value.pivot_index is not None and "pivot" in str(exc.value)
    with pytest.raises(SingularMatrixError):
        linear_solve(np.zeros((1, 1)), np.ones(1))
    with pytest.raises(SingularMatrixError):
        linear_solve(dense_to_banded(np.array([[1.0, 1.0], [1.0, 1.0]]), 1, 1), np.ones(2), (1, 1))


def test_singular_iteration_matrix_reported():
    # I - dt*a*J singular: dt=1, a=1, J=1
    sys = linear_system([[1.0, 0.0], [0.0, 2.0]])
    with pytest.raises(NewtonError, match="singular"):
        dirk_step(BE, sys, 0.0, np.ones(2), 1.0)
    with pytest.raises(IntegrationError) as exc:
        integrate(BE, linear_system([[1.0]]), 0.0, [1.0], 3.0, 1.0)
    assert exc.value.step == 0


# -- Newton ---------------------------------------------------------------------

@pytest.mark.parametrize("lam", [-1.0, -1e4, -1e4 + 5j])
def test_newton_single_iteration_linear_pr(lam):
    hist = []
    dirk_step(registry_get("wso3-p4"), prothero_robinson(lam), 0.1, np.array([phi(0.1), 0.0][: 1 if np.isreal(lam) else 2]),
              0.01, history=hist)
    assert hist and all(len(h) == 2 and h[1] < NewtonSettings().abs_tol for h in hist)


def test_newton_single_iteration_schrodinger():
    sys = schrodinger_mol(grid=GridSpec(64, "dirichlet"))
    hist = []
    u = dirk_step(registry_get("wso3-p3"), sys, 0.0, sys.u0, 0.01, history=hist)
    assert np.all(np.isfinite(u))
    scale = np.abs(sys.u0).max()
    for h in hist:
        assert len(h) == 2 and h[1] < 1e-12 * scale


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.floats(1e-3, 10), st.integers(0, 2**31))
def test_newton_single_iteration_random_linear(n, dt, seed):
    rng = np.random.default_rng(seed)
    Q = rng.normal(size=(n, n))
    sys = linear_system(-Q @ Q.T - 0.1 * np.eye(n))
    hist = []
    dirk_step(registry_get("wso2-p3"), sys, 0.0, rng.normal(size=n), dt, history=hist)
    for h in hist:
        assert len(h) == 2 and h[1] < 1e-12 * max(1.0, h[0])


def test_newton_quadratic_on_burgers():
    sys = burgers_mol(grid=GridSpec(64, "neumann"))
    assert not sys.linear
    hist = []
    dirk_step(registry_get("wso3-p3"), sys, 0.0, sys.u0, 0.05, history=hist)
    assert all(len(h) >= 4 for h in hist)
    for h in hist:
        # r_{k+1} / r_k^2 while r_{k+1} is above the rounding floor
        ratios = [h[k + 1] / h[k] ** 2 for k in range(1, len(h) - 1) if h[k + 1] > 1e-13]
        assert ratios and max(ratios) < 1.0
        assert h[-1] < NewtonSettings().abs_tol


def test_newton_failure_carries_history():
    cubic = ODESystem(dim=2, rhs=lambda t, u: -u**3, jacobian=lambda t, u: np.diag(-3 * u**2))
    with pytest.raises(NewtonError) as exc:
        dirk_step(BE, cubic, 0.0, np.array([10.0, 5.0]), 1.0, NewtonSettings(max_iters=2))
    assert len(exc.value.history) == 3 and exc.value.stage == 1
    scalar = ODESystem(dim=1, rhs=lambda t, u: -u**3, jacobian=lambda t, u: np.diag(-3 * u**2))
    with pytest.raises(NewtonError):
        dirk_step(BE, scalar, 0.0, np.array([10.0]), 1.0, NewtonSettings(max_iters=2))
    with pytest.raises(IntegrationError):
        integrate(BE, scalar, 0.0, [10.0], 2.0, 1.0, NewtonSettings(max_iters=2))


def test_nonlinear_scalar_matches_vector_path():
    rhs = lambda t, u: -u**3 + np.sin(t)
    jac = lambda t, u: np.diag(-3 * u**2)
    one = ODESystem(dim=1, rhs=rhs, jacobian=jac)
    two = ODESystem(dim=2, rhs=rhs, jacobian=jac)
    t = registry_get("wso3-p4")
    a = integrate(t, one, 0.0, [2.0], 1.0, 0.05).u[0]
    b = integrate(t, two, 0.0, [2.0, 2.0], 1.0, 0.05).u
    assert b[0] == b[1]
    assert a == pytest.approx(b[0], rel=1e-14)
    c = integrate(registry_get("implicit-midpoint"), one, 0.0, [2.0], 1.0, 0.05).u[0]
    d = integrate(registry_get("implicit-midpoint"), two, 0.0, [2.0, 2.0], 1.0, 0.05).u[0]
    assert c == pytest.approx(d, rel=1e-14)


def test_fd_jacobian_linear():
    J = np.array([[1.0, 2.0], [3.0, -4.0]])
    np.testing.assert_allclose(fd_jacobian(linear_system(J), 0.0, np.array([0.3, 0.7])), J, atol=1e-8)


def test_pr_integration_error():
    sys = prothero_robinson(-1e4)
    res = integrate(registry_get("wso3-p3"), sys, 0.0, sys.u0, 10.0, 1e-2)
    assert abs(res.u[0] - phi(10.0)) < 1e-4
