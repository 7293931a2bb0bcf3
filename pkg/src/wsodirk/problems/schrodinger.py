"""Linear Schroedinger equation ``u_t = (i omega / k^2) u_xx`` on (0, 1), Dirichlet data.

The complex interior unknowns are stored interleaved as
``(Re u_1, Im u_1, Re u_2, Im u_2, ...)`` so the Jacobian stays banded.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..integrator import ODESystem
from .stencils import GridSpec, first_derivative, second_derivative, sparse_to_banded

__all__ = ["schrodinger_mol", "schrodinger_exact", "OMEGA", "K"]

OMEGA = 2 * np.pi
K = 5.0
T_FINAL = 1.2


def schrodinger_exact(x, t, omega: float = OMEGA, k: float = K):
    return np.exp(1j * (k * np.asarray(x) - omega * t))


def _to_real(v: np.ndarray) -> np.ndarray:
    z = np.empty(2 * v.size)
    z[0::2] = v.real
    z[1::2] = v.imag
    return z


def _to_complex(z: np.ndarray) -> np.ndarray:
    return z[0::2] + 1j * z[1::2]


def schrodinger_mol(omega: float = OMEGA, k: float = K, grid: GridSpec | None = None) -> ODESystem:
    grid = grid or GridSpec(2000, "dirichlet")
    if grid.bc != "dirichlet":
        raise ValueError("the Schroedinger problem uses Dirichlet data")
    N = grid.N
    x = grid.x
    alpha = omega / k**2
    D1 = first_derivative(N)
    D2 = second_derivative(N)
    L = D2[1:N, 1:N]
    left = D2[1:N, 0].toarray().ravel()
    right = D2[1:N, N].toarray().ravel()

    # d/dt (a + ib) = i alpha (L (a + ib) + q)
    Lc = sp.coo_matrix(L)
    rows = np.concatenate([2 * Lc.row, 2 * Lc.row + 1])
    cols = np.concatenate([2 * Lc.col + 1, 2 * Lc.col])
    vals = np.concatenate([-alpha * Lc.data, alpha * Lc.data])
    J = sp.csr_matrix((vals, (rows, cols)), shape=(2 * (N - 1), 2 * (N - 1)))
    bw = (9, 9)
    J_band = sparse_to_banded(J, *bw)

    def boundary(t):
        return schrodinger_exact(0.0, t, omega, k), schrodinger_exact(1.0, t, omega, k)

    def rhs(t, z):
        g0, g1 = boundary(t)
        q = left * g0 + right * g1
        out = J @ z
        out[0::2] -= alpha * q.imag
        out[1::2] += alpha * q.real
        return out

    def exact(t):
        return _to_real(schrodinger_exact(x[1:N], t, omega, k))

    def to_grid(t, z):
        g0, g1 = boundary(t)
        return np.concatenate([[g0], _to_complex(z), [g1]])

    return ODESystem(
        dim=2 * (N - 1), rhs=rhs, jacobian=lambda t, z: J_band.copy(),
        u0=exact(0.0), exact=exact, bandwidth=bw, linear=True,
        name="schrodinger", params={"omega": omega, "k": k, "N": N},
        to_grid=to_grid,
        derivatives={"u_x": lambda w: D1 @ w, "u_xx": lambda w: D2 @ w},
    )
