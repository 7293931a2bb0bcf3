"""Scalar linear decay ``u' = -k u``, ``u(0) = 1``."""
from __future__ import annotations

import math

import numpy as np

from ..integrator import ODESystem


def linear_decay(rate: float = 1.0) -> ODESystem:
    k = float(rate)
    J = np.array([[-k]])
    return ODESystem(
        dim=1, rhs=lambda t, u: -k * u, jacobian=lambda t, u: J.copy(),
        u0=np.array([1.0]), exact=lambda t: np.array([math.exp(-k * t)]),
        linear=True, name="decay", params={"rate": k},
    )
