"""Viscous Burgers ``u_t + u u_x = nu u_xx + f`` on (0, 1) with Neumann data.

Manufactured solution ``u = cos(2 + 10 t) sin(0.2 + 20 x)``. The unknowns are
the interior nodal values; each wall value is eliminated through a
one-sided fifth-order approximation of ``u_x = h(t)`` on six nodes, which
keeps the truncation error of the adjacent second-difference rows at
fourth order.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..integrator import ODESystem
from .stencils import GridSpec, band_row_scale, first_derivative, second_derivative, sparse_to_banded

__all__ = ["burgers_mol", "burgers_exact", "burgers_forcing", "NU"]

NU = 0.1
T_FINAL = 1.0

# u_x(0) ~ (-137 u0 + 300 u1 - 300 u2 + 200 u3 - 75 u4 + 12 u5) / (60 h)
_WALL = np.array([300.0, -300.0, 200.0, -75.0, 12.0]) / 137.0
_WALL_FLUX = 60.0 / 137.0


def burgers_exact(x, t):
    return np.cos(2 + 10 * t) * np.sin(0.2 + 20 * np.asarray(x))


def burgers_exact_x(x, t):
    return 20 * np.cos(2 + 10 * t) * np.cos(0.2 + 20 * np.asarray(x))


def burgers_forcing(x, t, nu: float = NU):
    x = np.asarray(x)
    u = burgers_exact(x, t)
    u_t = -10 * np.sin(2 + 10 * t) * np.sin(0.2 + 20 * x)
    u_x = burgers_exact_x(x, t)
    u_xx = -400 * u
    return u_t + u * u_x - nu * u_xx


def burgers_mol(nu: float = NU, grid: GridSpec | None = None) -> ODESystem:
    grid = grid or GridSpec(2048, "neumann")
    if grid.bc != "neumann":
        raise ValueError("the Burgers problem uses Neumann data")
    N, h = grid.N, grid.h
    x = grid.x
    xi = x[1:N]
    m = N - 1
    D1 = first_derivative(N)
    D2 = second_derivative(N)

    # full nodal vector w = P v + q(t)
    P = sp.lil_matrix((N + 1, m))
    P[1:N, :] = sp.eye(m)
    P[0, :5] = _WALL
    P[N, m - 5:] = _WALL[::-1]
    P = P.tocsr()

    def wall_terms(t):
        q = np.zeros(N + 1)
        q[0] = -_WALL_FLUX * h * burgers_exact_x(0.0, t)
        q[N] = _WALL_FLUX * h * burgers_exact_x(1.0, t)
        return q

    D1i = (D1 @ P)[1:N].tocsr()
    D2i = (D2 @ P)[1:N].tocsr()
    D1b = D1[1:N].tocsr()
    D2b = D2[1:N].tocsr()
    bw = (4, 4)
    D1_band = sparse_to_banded(D1i, *bw)
    D2_band = nu * sparse_to_banded(D2i, *bw)

    def rhs(t, v):
        q = wall_terms(t)
        ux = D1i @ v + D1b @ q
        return -v * ux + nu * (D2i @ v + D2b @ q) + burgers_forcing(xi, t, nu)

    def jacobian(t, v):
        q = wall_terms(t)
        ux = D1i @ v + D1b @ q
        J = D2_band - band_row_scale(D1_band, v, *bw)
        J[bw[1], :] -= ux
        return J

    def to_grid(t, v):
        return P @ v + wall_terms(t)

    return ODESystem(
        dim=m, rhs=rhs, jacobian=jacobian,
        u0=burgers_exact(xi, 0.0), exact=lambda t: burgers_exact(xi, t),
        bandwidth=bw, linear=False, name="burgers", params={"nu": nu, "N": N},
        to_grid=to_grid,
        derivatives={"u_x": lambda w: D1 @ w, "u_xx": lambda w: D2 @ w},
    )
