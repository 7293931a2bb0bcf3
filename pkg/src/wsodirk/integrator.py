"""Fixed-step DIRK time stepping with Newton stage solves.

Jacobians are either dense ``(n, n)`` arrays or LAPACK band storage
``ab[u + i - j, j] = J[i, j]`` of shape ``(l + u + 1, n)`` when the system
declares ``bandwidth = (l, u)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
from scipy.linalg import lapack

from .tableau import ButcherTableau

__all__ = [
    "ODESystem",
    "NewtonSettings",
    "NewtonError",
    "SingularMatrixError",
    "IntegrationError",
    "IntegrationResult",
    "linear_solve",
    "banded_to_dense",
    "dense_to_banded",
    "dirk_step",
    "integrate",
    "fd_jacobian",
]


class SingularMatrixError(ArithmeticError):
    """A linear system was numerically singular."""

    def __init__(self, msg: str, pivot_index: int | None = None, pivot: float | None = None):
        super().__init__(msg)
        self.pivot_index = pivot_index
        self.pivot = pivot


class NewtonError(RuntimeError):
    """Stage Newton iteration failed; ``history`` holds residual norms."""

    def __init__(self, msg: str, history: list[float], stage: int | None = None):
        super().__init__(msg)
        self.history = history
        self.stage = stage


class IntegrationError(RuntimeError):
    def __init__(self, msg: str, step: int, time: float):
        super().__init__(msg)
        self.step = step
        self.time = time


@dataclass(frozen=True)
class NewtonSettings:
    rel_tol: float = 1e-12
    abs_tol: float = 1e-14
    max_iters: int = 25

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("Newton tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class ODESystem:
    """Initial value problem ``u' = rhs(t, u)``.

    ``to_grid`` maps a state to the nodal grid function (identity for plain
    ODEs) and ``derivatives`` holds difference operators acting on nodal
    grid functions, keyed by observable name (``"u_x"``, ``"u_xx"``).
    Setting ``linear`` lets the stage solver stop after one Newton update.
    """

    dim: int
    rhs: Callable[[float, np.ndarray], np.ndarray]
    jacobian: Callable[[float, np.ndarray], np.ndarray]
    u0: np.ndarray | None = None
    t0: float = 0.0
    exact: Callable[[float], np.ndarray] | None = None
    bandwidth: tuple[int, int] | None = None
    linear: bool = False
    name: str = ""
    params: Mapping[str, object] = field(default_factory=dict)
    to_grid: Callable[[float, np.ndarray], np.ndarray] | None = None
    derivatives: Mapping[str, Callable[[np.ndarray], np.ndarray]] = field(default_factory=dict)

    def grid(self, t: float, u: np.ndarray) -> np.ndarray:
        return u if self.to_grid is None else self.to_grid(t, u)

    def dense_jacobian(self, t: float, u: np.ndarray) -> np.ndarray:
        J = self.jacobian(t, u)
        if self.bandwidth is not None:
            return banded_to_dense(J, *self.bandwidth)
        return np.atleast_2d(J)


def dense_to_banded(M: np.ndarray, l: int, u: int) -> np.ndarray:
    """LAPACK band storage: ``ab[u + i - j, j] = M[i, j]``."""
    n = M.shape[0]
    ab = np.zeros((l + u + 1, n), dtype=M.dtype)
    for k in range(-min(u, n - 1), min(l, n - 1) + 1):
        d = np.diagonal(M, offset=-k)
        if k >= 0:
            ab[u + k, : n - k] = d
        else:
            ab[u + k, -k:] = d
    return ab


def banded_to_dense(ab: np.ndarray, l: int, u: int) -> np.ndarray:
    n = ab.shape[1]
    M = np.zeros((n, n), dtype=ab.dtype)
    for k in range(-min(u, n - 1), min(l, n - 1) + 1):
        if k >= 0:
            M += np.diag(ab[u + k, : n - k], -k)
        else:
            M += np.diag(ab[u + k, -k:], -k)
    return M


def _pivot_check(diag: np.ndarray, scale: float) -> None:
    mags = np.abs(diag)
    k = int(np.argmin(mags))
    if not np.isfinite(mags).all() or mags[k] <= diag.size * np.finfo(float).eps * scale:
        raise SingularMatrixError(
            f"numerically singular matrix: pivot {k} = {diag[k]!r} (scale {scale:.3e})",
            pivot_index=k, pivot=float(diag[k]),
        )


def linear_solve(M: np.ndarray, rhs: np.ndarray, bandwidth: tuple[int, int] | None = None) -> np.ndarray:
    """LU-based solve of ``M x = rhs``; ``M`` in band storage if ``bandwidth`` is given."""
    rhs = np.asarray(rhs, dtype=float)
    if bandwidth is None:
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if M.shape[0] != M.shape[1] or M.shape[0] != rhs.shape[0]:
            raise ValueError(f"shape mismatch: M {M.shape}, rhs {rhs.shape}")
        if M.shape[0] == 1:
            m = float(M[0, 0])
            if m == 0.0 or not math.isfinite(m):
                raise SingularMatrixError(f"singular 1x1 matrix: {m!r}", pivot_index=0, pivot=m)
            return rhs / m
        lu, piv, info = lapack.dgetrf(M)
        if info > 0:
            raise SingularMatrixError(f"exactly singular matrix: zero pivot at {info - 1}",
                                      pivot_index=info - 1, pivot=0.0)
        _pivot_check(np.diag(lu), np.max(np.abs(M)))
        x, info = lapack.dgetrs(lu, piv, rhs)
        return x
    l, u = bandwidth
    n = M.shape[1]
    if M.shape[0] != l + u + 1 or rhs.shape[0] != n:
        raise ValueError(f"band storage shape {M.shape} inconsistent with bandwidth {bandwidth}")
    ab = np.zeros((2 * l + u + 1, n), order="F")
    ab[l:, :] = M
    lub, piv, info = lapack.dgbtrf(ab, l, u, overwrite_ab=1)
    if info > 0:
        raise SingularMatrixError(f"exactly singular banded matrix: zero pivot at {info - 1}",
                                  pivot_index=info - 1, pivot=0.0)
    _pivot_check(lub[l + u], np.max(np.abs(M)))
    x, info = lapack.dgbtrs(lub, l, u, rhs, piv)
    return x


def _iteration_matrix(J: np.ndarray, scale: float, bandwidth) -> np.ndarray:
    """``I - scale * J`` in the same storage as ``J``."""
    M = -scale * J
    if bandwidth is None:
        M = np.atleast_2d(M)
        M.flat[:: M.shape[0] + 1] += 1.0
    else:
        M[bandwidth[1], :] += 1.0
    return M


def _inf(x: np.ndarray) -> float:
    if x.size == 1:
        return abs(float(x[0]))
    return float(np.abs(x).max()) if x.size else 0.0


def _solve_stage(sys: ODESystem, ti: float, known: np.ndarray, guess: np.ndarray,
                 h: float, ns: NewtonSettings, stage: int, history: list | None):
    """Newton for ``U - h f(ti, U) = known``; returns ``(U, f(ti, U))``.

    At least one update is always taken; after that the iteration stops
    when the residual drops below ``abs_tol`` or the last update is below
    ``abs_tol + rel_tol * |U|``. The relative test is applied to updates
    only; accepting a residual of ``rel_tol * |U|``, or the predictor
    unchanged, leaves a stage error that accumulates over many steps.
    """
    U = guess.copy()
    F = np.asarray(sys.rhs(ti, U), dtype=float)
    hist: list[float] = []
    for it in range(ns.max_iters + 1):
        G = U - h * F - known
        rnorm = _inf(G)
        hist.append(rnorm)
        if not math.isfinite(rnorm):
            raise NewtonError(f"stage {stage}: non-finite residual", hist, stage)
        if it > 0 and rnorm <= ns.abs_tol:
            break
        if it == ns.max_iters:
            raise NewtonError(
                f"stage {stage}: Newton did not converge in {ns.max_iters} iterations "
                f"(residual {rnorm:.3e})", hist, stage)
        M = _iteration_matrix(sys.jacobian(ti, U), h, sys.bandwidth)
        try:
            delta = linear_solve(M, -G, sys.bandwidth)
        except SingularMatrixError as exc:
            raise NewtonError(f"stage {stage}: singular iteration matrix ({exc})", hist, stage) from exc
        U = U + delta
        F = np.asarray(sys.rhs(ti, U), dtype=float)
        if sys.linear:
            hist.append(_inf(U - h * F - known))
            break
        if _inf(delta) <= ns.abs_tol + ns.rel_tol * _inf(U):
            hist.append(_inf(U - h * F - known))
            break
    if history is not None:
        history.append(hist)
    return U, F


def _solve_stage_scalar(sys: ODESystem, ti: float, known: float, guess: float,
                        h: float, ns: NewtonSettings, stage: int, history: list | None):
    """Float-only twin of :func:`_solve_stage` for one-dimensional systems."""
    U = guess
    F = float(sys.rhs(ti, np.array([U]))[0])
    hist: list[float] = []
    for it in range(ns.max_iters + 1):
        G = U - h * F - known
        rnorm = abs(G)
        hist.append(rnorm)
        if not math.isfinite(rnorm):
            raise NewtonError(f"stage {stage}: non-finite residual", hist, stage)
        if it > 0 and rnorm <= ns.abs_tol:
            break
        if it == ns.max_iters:
            raise NewtonError(
                f"stage {stage}: Newton did not converge in {ns.max_iters} iterations "
                f"(residual {rnorm:.3e})", hist, stage)
        m = 1.0 - h * float(np.asarray(sys.jacobian(ti, np.array([U]))).reshape(-1)[0])
        if m == 0.0 or not math.isfinite(m):
            raise NewtonError(f"stage {stage}: singular iteration matrix (pivot {m:.3e})", hist, stage)
        delta = -G / m
        U += delta
        F = float(sys.rhs(ti, np.array([U]))[0])
        if sys.linear or abs(delta) <= ns.abs_tol + ns.rel_tol * abs(U):
            hist.append(abs(U - h * F - known))
            break
    if history is not None:
        history.append(hist)
    return U, F


def _dirk_step_scalar(t: ButcherTableau, sys: ODESystem, tn: float, un: float, dt: float,
                      ns: NewtonSettings, history: list | None) -> np.ndarray:
    A, c = t.rows, t.c.tolist()
    K = [0.0] * t.s
    U = un
    for i in range(t.s):
        row = A[i]
        acc = 0.0
        for j in range(i):
            acc += row[j] * K[j]
        known = un + dt * acc
        ti = tn + c[i] * dt
        aii = row[i]
        if aii == 0.0:
            U = known
            K[i] = float(sys.rhs(ti, np.array([U]))[0])
            continue
        guess = known + dt * aii * K[i - 1] if i else un
        U, K[i] = _solve_stage_scalar(sys, ti, known, guess, dt * aii, ns, i + 1, history)
    if not t.is_stiffly_accurate:
        U = un + dt * sum(bj * kj for bj, kj in zip(t.b.tolist(), K))
    return np.array([U])


def dirk_step(t: ButcherTableau, sys: ODESystem, tn: float, un: np.ndarray, dt: float,
              ns: NewtonSettings = NewtonSettings(), history: list | None = None) -> np.ndarray:
    """Advance one step of size ``dt`` from ``(tn, un)``.

    Stiffly accurate schemes return the last stage value directly. When
    ``history`` is a list, per-stage Newton residual histories are appended.
    """
    if not t.is_dirk:
        raise ValueError(f"tableau {t.name!r} is not diagonally implicit")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    un = np.asarray(un, dtype=float)
    if un.size == 1 and sys.bandwidth is None:
        return _dirk_step_scalar(t, sys, tn, float(un.reshape(-1)[0]), dt, ns, history)
    A, c = t.A, t.c
    K = np.empty((t.s, un.size))
    U = un
    for i in range(t.s):
        known = un + dt * (A[i, :i] @ K[:i]) if i else un.copy()
        ti = tn + c[i] * dt
        aii = A[i, i]
        if aii == 0.0:
            U = known
            K[i] = sys.rhs(ti, U)
            continue
        guess = known + dt * aii * K[i - 1] if i else un
        U, K[i] = _solve_stage(sys, ti, known, guess, dt * aii, ns, i + 1, history)
    if t.is_stiffly_accurate:
        return U
    return un + dt * (t.b @ K)


@dataclass
class IntegrationResult:
    u: np.ndarray
    t: float
    steps: int
    dt: float
    last_dt: float
    partial_step: bool
    times: np.ndarray | None = None
    trajectory: np.ndarray | None = None


def integrate(t: ButcherTableau, sys: ODESystem, t0: float, u0, T: float, dt: float,
              ns: NewtonSettings = NewtonSettings(), trajectory: bool = False) -> IntegrationResult:
    """Take fixed steps from ``t0`` to ``T``.

    If ``(T - t0) / dt`` is an integer up to rounding the grid is uniform;
    otherwise the last step is shortened to land on ``T``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    span = T - t0
    if span < 0:
        raise ValueError("T must not precede t0")
    ratio = span / dt
    n = round(ratio)
    if n >= 1 and abs(ratio - n) <= 1e-9 * max(1.0, ratio):
        times = t0 + span * np.arange(n + 1) / n
        partial = False
    else:
        n_full = int(math.floor(ratio))
        times = np.append(t0 + dt * np.arange(n_full + 1), T)
        partial = True
    u = np.array(u0, dtype=float)
    traj = [u.copy()] if trajectory else None
    for k in range(len(times) - 1):
        tk, h = times[k], times[k + 1] - times[k]
        try:
            u = dirk_step(t, sys, tk, u, h, ns)
        except (NewtonError, SingularMatrixError) as exc:
            raise IntegrationError(f"step {k} at t={tk:.17g}: {exc}", k, tk) from exc
        if traj is not None:
            traj.append(u.copy())
    return IntegrationResult(
        u=u, t=float(times[-1]), steps=len(times) - 1, dt=dt,
        last_dt=float(times[-1] - times[-2]) if len(times) > 1 else 0.0,
        partial_step=partial,
        times=times if trajectory else None,
        trajectory=np.array(traj) if traj is not None else None,
    )


def fd_jacobian(sys: ODESystem, t: float, u: np.ndarray, eps: float | None = None) -> np.ndarray:
    """Central-difference Jacobian, for consistency checks."""
    u = np.asarray(u, dtype=float)
    J = np.empty((sys.dim, sys.dim))
    for k in range(sys.dim):
        h = (eps or np.sqrt(np.finfo(float).eps)) * max(1.0, abs(u[k]))
        up, um = u.copy(), u.copy()
        up[k] += h
        um[k] -= h
        J[:, k] = (sys.rhs(t, up) - sys.rhs(t, um)) / (2 * h)
    return J
