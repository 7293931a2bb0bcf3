"""Order, stage order, weak stage order and linear stability of RK tableaux.

Vector powers are elementwise with ``0**0 == 1``, so explicit first stages
(``c_1 = 0``) need no special casing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .tableau import ButcherTableau

__all__ = [
    "DEFAULT_TOL",
    "PoleError",
    "SchemeReport",
    "Wso2x2Point",
    "P1",
    "P2",
    "ORDER_TREES",
    "stage_order_vector",
    "quadrature_order",
    "stage_order",
    "wso",
    "wso_eigenvector_order",
    "order_condition_residuals",
    "classical_order",
    "stability_function",
    "r_at_infinity",
    "r_limit",
    "default_imaginary_samples",
    "is_a_stable",
    "g_residual",
    "wso2x2_residual",
    "wso2x2_residual_unscaled",
    "truncation_error_norm",
    "analyze",
]

DEFAULT_TOL = 1e-8
DEFAULT_JMAX = 6


class PoleError(ZeroDivisionError):
    """``I - zeta A`` is singular at the requested point."""


class Wso2x2Point(NamedTuple):
    """Upper 2x2 block of a DIRK matrix rescaled so that ``a21 = 1``."""

    x: float  # a11 / a21
    y: float  # a22 / a21

    @classmethod
    def from_block(cls, a11: float, a21: float, a22: float) -> "Wso2x2Point":
        if a21 == 0:
            raise ValueError("a21 must be nonzero to rescale the 2x2 block")
        return cls(a11 / a21, a22 / a21)


_SQ2 = math.sqrt(2.0)
P1 = Wso2x2Point(-4 + 3 * _SQ2, _SQ2 - 1)
P2 = Wso2x2Point(-(_SQ2 + 1) * (_SQ2 + 2), -(_SQ2 + 1))


def stage_order_vector(t: ButcherTableau, j: int) -> np.ndarray:
    """``tau^(j) = A c^(j-1) - c^j / j``."""
    if j < 1:
        raise ValueError(f"j must be >= 1, got {j}")
    c = t.c
    return t.A @ c ** (j - 1) - c**j / j


def quadrature_order(t: ButcherTableau, tol: float = DEFAULT_TOL, jmax: int = 16) -> int:
    p_hat = 0
    for j in range(1, jmax + 1):
        if abs(t.b @ t.c ** (j - 1) - 1.0 / j) >= tol:
            break
        p_hat = j
    return p_hat


def _stage_order_hat(t: ButcherTableau, tol: float, jmax: int) -> int:
    q_hat = 0
    for j in range(1, jmax + 1):
        if np.max(np.abs(stage_order_vector(t, j))) >= tol:
            break
        q_hat = j
    return q_hat


def stage_order(t: ButcherTableau, tol: float = DEFAULT_TOL, jmax: int = 16) -> int:
    """Stage order ``min(p_hat, q_hat)``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    return min(quadrature_order(t, tol, jmax), _stage_order_hat(t, tol, jmax))


def _krylov_residual(t: ButcherTableau, j: int) -> float:
    """``max_l |b^T A^l tau^(j)|`` over ``0 <= l <= s-1``."""
    v = stage_order_vector(t, j)
    worst = 0.0
    for _ in range(t.s):
        worst = max(worst, abs(t.b @ v))
        v = t.A @ v
    return worst


def wso(t: ButcherTableau, jmax: int = DEFAULT_JMAX, tol: float = DEFAULT_TOL) -> int:
    """Weak stage order via the Krylov form ``b^T A^l tau^(j) = 0``.

    Never reports less than the stage order.
    """
    if jmax < 1:
        raise ValueError("jmax must be >= 1")
    q_tilde = 0
    for j in range(1, jmax + 1):
        if _krylov_residual(t, j) >= tol:
            break
        q_tilde = j
    return max(q_tilde, min(stage_order(t, tol), jmax))


def _eigen_residual(t: ButcherTableau, tau: np.ndarray, tol: float) -> tuple[bool, float]:
    norm = np.max(np.abs(tau))
    if norm < tol:
        return True, 0.0
    Atau = t.A @ tau
    mu = (tau @ Atau) / (tau @ tau)
    rel = np.max(np.abs(Atau - mu * tau)) / norm
    return rel < tol, rel


def wso_eigenvector_order(t: ButcherTableau, jmax: int = DEFAULT_JMAX,
                          tol: float = DEFAULT_TOL) -> int:
    """Largest ``q`` such that every ``tau^(j)``, ``j <= q``, is an
    eigenvector of ``A`` (eigenvalue by least squares) orthogonal to ``b``."""
    if jmax < 1:
        raise ValueError("jmax must be >= 1")
    q = 0
    for j in range(1, jmax + 1):
        tau = stage_order_vector(t, j)
        ok, _ = _eigen_residual(t, tau, tol)
        if not ok or abs(t.b @ tau) >= tol:
            break
        q = j
    return q


# (label, order, residual)
def _trees():
    def t1(A, b, c):
        return b.sum() - 1.0

    def t2(A, b, c):
        return b @ c - 1 / 2

    def t3a(A, b, c):
        return b @ c**2 - 1 / 3

    def t3b(A, b, c):
        return b @ A @ c - 1 / 6

    def t4a(A, b, c):
        return b @ c**3 - 1 / 4

    def t4b(A, b, c):
        return b @ (c * (A @ c)) - 1 / 8

    def t4c(A, b, c):
        return b @ A @ c**2 - 1 / 12

    def t4d(A, b, c):
        return b @ A @ A @ c - 1 / 24

    return [
        ("b.e", 1, t1),
        ("b.c", 2, t2),
        ("b.c^2", 3, t3a),
        ("b.Ac", 3, t3b),
        ("b.c^3", 4, t4a),
        ("b.(c*Ac)", 4, t4b),
        ("b.Ac^2", 4, t4c),
        ("b.A^2c", 4, t4d),
    ]


ORDER_TREES = _trees()


def order_condition_residuals(t: ButcherTableau, p: int = 4) -> list[tuple[str, float]]:
    """Signed residuals of the rooted-tree order conditions up to order ``p``."""
    if p > 4:
        raise ValueError("order conditions are implemented through order 4")
    return [(label, float(f(t.A, t.b, t.c))) for label, order, f in ORDER_TREES if order <= p]


def classical_order(t: ButcherTableau, tol: float = DEFAULT_TOL) -> int:
    order = 0
    for p in range(1, 5):
        res = [abs(f(t.A, t.b, t.c)) for _, k, f in ORDER_TREES if k == p]
        if max(res) >= tol:
            break
        order = p
    return order


def truncation_error_norm(t: ButcherTableau, p: int) -> float:
    """Euclidean norm of the order ``p+1`` tree residuals."""
    if not 0 <= p <= 3:
        raise ValueError("p must lie in 0..3")
    res = [f(t.A, t.b, t.c) for _, k, f in ORDER_TREES if k == p + 1]
    return float(np.linalg.norm(res))


def _resolvent_solve(t: ButcherTableau, zeta: complex, rhs: np.ndarray) -> np.ndarray:
    M = np.eye(t.s) - zeta * t.A
    if t.is_dirk:
        d = M.diagonal()
        if np.any(np.abs(d) < 1e-300):
            raise PoleError(f"zeta={zeta!r} is a pole (zeta = 1/a_ii)")
    try:
        x = np.linalg.solve(M, rhs.astype(complex))
    except np.linalg.LinAlgError:
        raise PoleError(f"I - zeta*A is singular at zeta={zeta!r}") from None
    if not np.all(np.isfinite(x)):
        raise PoleError(f"I - zeta*A is singular at zeta={zeta!r}")
    return x


def stability_function(t: ButcherTableau, zeta: complex) -> complex:
    """``R(zeta) = 1 + zeta b^T (I - zeta A)^{-1} e``."""
    x = _resolvent_solve(t, zeta, np.ones(t.s))
    return complex(1.0 + zeta * (t.b @ x))


def r_at_infinity(t: ButcherTableau) -> float:
    """``R(-inf) = 1 - b^T A^{-1} e``; requires invertible ``A``."""
    if not t.is_invertible():
        raise np.linalg.LinAlgError("A is singular; R(infinity) needs an invertible A")
    return float(1.0 - t.b @ np.linalg.solve(t.A, np.ones(t.s)))


def r_limit(t: ButcherTableau, tol: float = 1e-12) -> float:
    """``lim R(zeta)`` as ``|zeta| -> inf``, also for singular ``A``.

    Uses ``R = det(I - zeta (A - e b^T)) / det(I - zeta A)`` and the ratio of
    leading coefficients; returns ``inf`` when the numerator has higher degree.
    """
    den = np.poly(t.A)  # coefficient k multiplies zeta^k in det(I - zeta A)
    num = np.poly(t.A - np.outer(np.ones(t.s), t.b))
    scale = max(1.0, float(np.max(np.abs(t.A))), float(np.max(np.abs(t.b))))
    d = max(k for k in range(t.s + 1) if k == 0 or abs(den[k]) > tol * scale**k)
    if any(abs(num[k]) > 1e3 * tol * scale**k for k in range(d + 1, t.s + 1)):
        return math.inf
    return float(np.real(num[d] / den[d]))


def default_imaginary_samples() -> np.ndarray:
    y = np.logspace(-4, 8, 4001)
    return np.concatenate([[0.0], y, -y])


def _stability_batch(t: ButcherTableau, zetas: np.ndarray) -> np.ndarray:
    s = t.s
    M = np.eye(s)[None, :, :] - zetas[:, None, None] * t.A[None, :, :]
    x = np.linalg.solve(M, np.ones((len(zetas), s, 1), dtype=complex))[..., 0]
    return 1.0 + zetas * (x @ t.b)


def is_a_stable(t: ButcherTableau, y_samples=None, slack: float = 1e-12) -> tuple[bool, float]:
    """Imaginary-axis check: ``max |R(iy)| <= 1 + slack`` over the samples.

    Returns the verdict and the largest sampled modulus.
    """
    y = default_imaginary_samples() if y_samples is None else np.asarray(y_samples, float)
    if y.size == 0:
        raise ValueError("need at least one sample")
    R = _stability_batch(t, 1j * y)
    rmax = float(np.max(np.abs(R)))
    return rmax <= 1.0 + slack, rmax


def g_residual(t: ButcherTableau, j: int, zeta: complex) -> complex:
    """Stage-error amplification ``zeta b^T (I - zeta A)^{-1} tau^(j)``."""
    tau = stage_order_vector(t, j)
    x = _resolvent_solve(t, zeta, tau)
    return complex(zeta * (t.b @ x))


def wso2x2_residual_unscaled(a11: float, a21: float, a22: float, j: int) -> float:
    """Second row of ``A tau^(j) = a11 tau^(j)`` for a 2x2 lower-triangular block."""
    c2 = a21 + a22
    return ((1 - 1 / j) * a11**j * a21
            + (a22 - a11) * (a11 ** (j - 1) * a21 + c2 ** (j - 1) * a22 - c2**j / j))


def wso2x2_residual(p: Wso2x2Point, j: int) -> float:
    """Residual of the 2x2 eigenvector condition at ``a21 = 1``.

    Homogeneous of degree ``j+1`` in ``(a11, a21, a22)``, so this is the
    unscaled residual divided by ``a21**(j+1)``.
    """
    if j < 2:
        raise ValueError("j must be >= 2")
    return float(wso2x2_residual_unscaled(p.x, 1.0, p.y, j))


@dataclass
class SchemeReport:
    name: str
    stages: int
    classical_order: int
    quadrature_order: int
    stage_order: int
    wso: int
    wso_eigenvector: int
    a_stable: bool
    max_abs_R_imag: float
    r_at_infinity: float
    stiffly_accurate: bool
    dirk: bool
    tol: float
    order_condition_residuals: list[tuple[str, float]] = field(default_factory=list)
    stage_order_residual_norms: list[tuple[int, float]] = field(default_factory=list)

    @property
    def l_stable(self) -> bool:
        return self.a_stable and abs(self.r_at_infinity) < 1e-10

    def as_dict(self) -> dict:
        d = {
            "name": self.name,
            "stages": self.stages,
            "classical_order": self.classical_order,
            "quadrature_order": self.quadrature_order,
            "stage_order": self.stage_order,
            "wso": self.wso,
            "wso_eigenvector": self.wso_eigenvector,
            "a_stable": self.a_stable,
            "l_stable": self.l_stable,
            "max_abs_R_imag": self.max_abs_R_imag,
            "r_at_infinity": self.r_at_infinity,
            "stiffly_accurate": self.stiffly_accurate,
            "dirk": self.dirk,
            "tol": self.tol,
        }
        for label, r in self.order_condition_residuals:
            d[f"residual[{label}]"] = r
        for j, r in self.stage_order_residual_norms:
            d[f"tau_norm[{j}]"] = r
        return d

    def to_text(self) -> str:
        rows = [
            ("scheme", self.name),
            ("stages", self.stages),
            ("classical order p", self.classical_order),
            ("quadrature order", self.quadrature_order),
            ("stage order q", self.stage_order),
            ("weak stage order", self.wso),
            ("WSO eigenvector order", self.wso_eigenvector),
            ("DIRK", self.dirk),
            ("stiffly accurate", self.stiffly_accurate),
            ("A-stable (sampled)", self.a_stable),
            ("max |R(iy)|", f"{self.max_abs_R_imag:.17g}"),
            ("R(infinity)", f"{self.r_at_infinity:.3e}"),
            ("L-stable", self.l_stable),
        ]
        width = max(len(k) for k, _ in rows)
        out = [f"{k:<{width}}  {v}" for k, v in rows]
        out.append("order condition residuals:")
        out += [f"  {label:<10} {r: .3e}" for label, r in self.order_condition_residuals]
        out.append("stage order vector norms:")
        out += [f"  tau^({j})     {r:.3e}" for j, r in self.stage_order_residual_norms]
        return "\n".join(out) + "\n"

    def to_keyvalue(self) -> str:
        lines = []
        for k, v in self.as_dict().items():
            if isinstance(v, float):
                v = format(v, ".17g")
            lines.append(f"{k}={v}")
        return "\n".join(lines) + "\n"


def analyze(t: ButcherTableau, tol: float = DEFAULT_TOL, jmax: int = DEFAULT_JMAX,
            y_samples=None) -> SchemeReport:
    a_stable, rmax = is_a_stable(t, y_samples)
    if t.is_invertible():
        r_inf = r_at_infinity(t)
    else:
        r_inf = r_limit(t)
    return SchemeReport(
        name=t.name,
        stages=t.s,
        classical_order=classical_order(t, tol),
        quadrature_order=quadrature_order(t, tol),
        stage_order=stage_order(t, tol),
        wso=wso(t, jmax, tol),
        wso_eigenvector=wso_eigenvector_order(t, jmax, tol),
        a_stable=a_stable,
        max_abs_R_imag=rmax,
        r_at_infinity=r_inf,
        stiffly_accurate=t.is_stiffly_accurate,
        dirk=t.is_dirk,
        tol=tol,
        order_condition_residuals=order_condition_residuals(t, 4),
        stage_order_residual_norms=[
            (j, float(np.max(np.abs(stage_order_vector(t, j))))) for j in range(1, jmax + 1)
        ],
    )
