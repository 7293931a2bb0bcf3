"""Scalar stiff test equation ``u' = lam (u - phi) + phi'`` and its exact error recursion."""
from __future__ import annotations

import math

import numpy as np

from ..analysis import PoleError, stage_order_vector
from ..integrator import ODESystem
from ..tableau import ButcherTableau

__all__ = ["phi", "phi_derivative", "prothero_robinson", "RecursionOracle"]

_SHIFT = math.pi / 4


def phi(t: float) -> float:
    return math.sin(t + _SHIFT)


def phi_derivative(t: float, k: int) -> float:
    """``k``-th derivative of ``sin(t + pi/4)``."""
    return math.sin(t + _SHIFT + k * math.pi / 2)


def prothero_robinson(lam: complex = -1e4) -> ODESystem:
    """The test problem as an ``ODESystem`` with exact solution ``phi``.

    Complex ``lam`` is run as a 2D real system ``(Re u, Im u)``.
    """
    if complex(lam).real > 0:
        raise ValueError("Re(lambda) must be <= 0")
    if complex(lam).imag == 0:
        lam = float(complex(lam).real)

        def rhs(t, u):
            return np.array([lam * (u[0] - phi(t)) + phi_derivative(t, 1)])

        J = np.array([[lam]])
        return ODESystem(
            dim=1, rhs=rhs, jacobian=lambda t, u: J.copy(),
            u0=np.array([phi(0.0)]), exact=lambda t: np.array([phi(t)]),
            linear=True, name="pr", params={"lambda": lam},
        )

    lam = complex(lam)
    lr, li = lam.real, lam.imag

    def rhs_c(t, u):
        dr, di = u[0] - phi(t), u[1]
        return np.array([lr * dr - li * di + phi_derivative(t, 1), li * dr + lr * di])

    Jc = np.array([[lr, -li], [li, lr]])
    return ODESystem(
        dim=2, rhs=rhs_c, jacobian=lambda t, u: Jc.copy(),
        u0=np.array([phi(0.0), 0.0]), exact=lambda t: np.array([phi(t), 0.0]),
        linear=True, name="pr", params={"lambda": lam},
    )


class RecursionOracle:
    """Propagates the global error of a RK scheme on the test problem
    without solving any stage equations.

    One step maps ``err -> R(zeta) err + zeta b^T (I - zeta A)^{-1} d_stage + d_step``
    with the stage and step defects expanded in Taylor series of ``phi``
    truncated after ``jmax`` terms.
    """

    def __init__(self, tableau: ButcherTableau, lam: complex, jmax: int = 12):
        if jmax < 2:
            raise ValueError("jmax must be >= 2")
        self.tableau = tableau
        self.lam = lam
        self.jmax = jmax
        self.err: complex = 0.0
        self.steps = 0
        self.tail = 0.0
        t = tableau
        self._tau = [stage_order_vector(t, j) for j in range(1, jmax + 2)]
        self._quad = [t.b @ t.c ** (j - 1) - 1.0 / j for j in range(1, jmax + 2)]

    def _amplifiers(self, dt: float):
        t = self.tableau
        zeta = self.lam * dt
        M = np.eye(t.s) - zeta * t.A
        try:
            w = np.linalg.solve(M.T, t.b.astype(complex))  # w^T = b^T (I - zeta A)^{-1}
        except np.linalg.LinAlgError:
            raise PoleError(f"zeta={zeta!r} is a pole") from None
        R = 1.0 + zeta * (w @ np.ones(t.s))
        return zeta, w, R

    def step(self, tn: float, dt: float) -> complex:
        zeta, w, R = self._amplifiers(dt)
        stage = np.zeros(self.tableau.s, dtype=complex)
        step_err = 0.0
        for j in range(1, self.jmax + 1):
            coef = dt**j / math.factorial(j - 1) * phi_derivative(tn, j)
            if j >= 2:
                stage += coef * self._tau[j - 1]
            step_err += coef * self._quad[j - 1]
        self.err = R * self.err + zeta * (w @ stage) + step_err
        # first omitted term, phi derivatives bounded by 1; doubled for the rest of the series
        j = self.jmax + 1
        lead = dt**j / math.factorial(j - 1)
        self.tail = abs(R) * self.tail + 2 * lead * (
            abs(zeta) * np.sum(np.abs(w)) * np.max(np.abs(self._tau[j - 1])) + abs(self._quad[j - 1])
        )
        self.steps += 1
        return self.err

    def run(self, t0: float, dt: float, n: int) -> complex:
        for k in range(n):
            self.step(t0 + k * dt, dt)
        return self.err
