"""Fourth-order finite-difference operators on uniform nodal grids of (0, 1)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = ["GridSpec", "first_derivative", "second_derivative", "sparse_to_banded", "band_row_scale"]

_D1_CENTER = np.array([1, -8, 0, 8, -1]) / 12
_D1_EDGE = np.array([-25, 48, -36, 16, -3]) / 12          # at x_0, on u_0..u_4
_D1_NEAR = np.array([-3, -10, 18, -6, 1]) / 12            # at x_1, on u_0..u_4
_D2_CENTER = np.array([-1, 16, -30, 16, -1]) / 12
_D2_EDGE = np.array([45, -154, 214, -156, 61, -10]) / 12  # at x_0, on u_0..u_5
_D2_NEAR = np.array([10, -15, -4, 14, -6, 1]) / 12        # at x_1, on u_0..u_5


@dataclass(frozen=True)
class GridSpec:
    """``N`` cells on ``[0, 1]``, nodes ``x_i = i h``, ``i = 0..N``."""

    N: int
    bc: str = "dirichlet"

    def __post_init__(self):
        if self.N < 16:
            raise ValueError(f"grid needs N >= 16 cells, got {self.N}")
        if self.bc not in ("dirichlet", "neumann"):
            raise ValueError(f"bc must be 'dirichlet' or 'neumann', got {self.bc!r}")

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.h


def _assemble(N: int, center, edge, near, odd: bool) -> sp.csr_matrix:
    n = N + 1
    rows, cols, vals = [], [], []

    def put(i, start, w):
        rows.extend([i] * len(w))
        cols.extend(range(start, start + len(w)))
        vals.extend(w)

    for i in range(2, N - 1):
        put(i, i - 2, center)
    sign = -1.0 if odd else 1.0
    put(0, 0, edge)
    put(1, 0, near)
    put(N, N - len(edge) + 1, sign * edge[::-1])
    put(N - 1, N - len(near) + 1, sign * near[::-1])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def first_derivative(N: int) -> sp.csr_matrix:
    """Fourth-order ``d/dx`` on the ``N + 1`` nodes (biased near the ends)."""
    return _assemble(N, _D1_CENTER, _D1_EDGE, _D1_NEAR, odd=True) * N


def second_derivative(N: int) -> sp.csr_matrix:
    """Fourth-order ``d^2/dx^2`` on the ``N + 1`` nodes (biased near the ends)."""
    return _assemble(N, _D2_CENTER, _D2_EDGE, _D2_NEAR, odd=False) * (N * N)


def sparse_to_banded(S, l: int, u: int) -> np.ndarray:
    S = sp.coo_matrix(S)
    n = S.shape[1]
    off = S.row - S.col
    if off.size and (off.max() > l or -off.min() > u):
        raise ValueError("matrix entries fall outside the declared bandwidth")
    ab = np.zeros((l + u + 1, n), dtype=S.dtype)
    np.add.at(ab, (u + off, S.col), S.data)
    return ab


def band_row_scale(ab: np.ndarray, v: np.ndarray, l: int, u: int) -> np.ndarray:
    """Band storage of ``diag(v) @ M`` given band storage of ``M``."""
    n = ab.shape[1]
    out = np.zeros_like(ab)
    for k in range(l + u + 1):
        off = k - u  # row i = j + off
        lo, hi = max(0, -off), min(n, n - off)
        out[k, lo:hi] = ab[k, lo:hi] * v[lo + off:hi + off]
    return out
