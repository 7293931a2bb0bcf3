"""Van der Pol oscillator and its fine-step RK4 reference trajectory.

Reference cache format (plain text)::

    # vdp-reference v1
    # mu=500 x0=2 y0=0 T=10 dt=1e-06 every=0.01
    t x y
    0 2 0
    ...

The second comment line holds the generation parameters; a cache whose
parameters differ from the request is regenerated. Values are written with
17 significant digits.
"""
from __future__ import annotations

import math
import os
from pathlib import Path

import numpy as np

from ..integrator import ODESystem

__all__ = ["van_der_pol", "vdp_reference", "rk4_vdp", "default_cache_dir"]

MU = 500.0
T_FINAL = 10.0
REF_DT = 1e-6
REF_EVERY = 0.01

try:  # pragma: no cover - exercised implicitly when numba is present
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


@njit(cache=False)
def _rk4_loop(mu, x, y, dt, nsteps, stride):
    nout = nsteps // stride + 1
    out = np.empty((nout, 2))
    out[0, 0] = x
    out[0, 1] = y
    k = 1
    for n in range(1, nsteps + 1):
        k1x = y
        k1y = mu * (1.0 - x * x) * y - x
        xa = x + 0.5 * dt * k1x
        ya = y + 0.5 * dt * k1y
        k2x = ya
        k2y = mu * (1.0 - xa * xa) * ya - xa
        xb = x + 0.5 * dt * k2x
        yb = y + 0.5 * dt * k2y
        k3x = yb
        k3y = mu * (1.0 - xb * xb) * yb - xb
        xc = x + dt * k3x
        yc = y + dt * k3y
        k4x = yc
        k4y = mu * (1.0 - xc * xc) * yc - xc
        x = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        y = y + dt / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        if n % stride == 0:
            out[k, 0] = x
            out[k, 1] = y
            k += 1
    return out


def rk4_vdp(mu: float, x0: float, y0: float, T: float, dt: float, every: float) -> tuple[np.ndarray, np.ndarray]:
    """Classical RK4 with constant ``dt``; returns checkpoint times and states."""
    nsteps = round(T / dt)
    stride = round(every / dt)
    if abs(nsteps * dt - T) > 1e-9 * T or abs(stride * dt - every) > 1e-9 * every or nsteps % stride:
        raise ValueError("dt must divide both T and the checkpoint spacing")
    states = _rk4_loop(float(mu), float(x0), float(y0), float(dt), int(nsteps), int(stride))
    times = np.arange(states.shape[0]) * (stride * dt)
    return times, np.asarray(states)


def default_cache_dir() -> Path:
    env = os.environ.get("WSODIRK_CACHE")
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "wsodirk"


def _param_line(mu, x0, y0, T, dt, every) -> str:
    return f"# mu={mu!r} x0={x0!r} y0={y0!r} T={T!r} dt={dt!r} every={every!r}"


def vdp_reference(mu: float = MU, x0: float = 2.0, y0: float = 0.0, T: float = T_FINAL,
                  dt: float = REF_DT, every: float = REF_EVERY,
                  cache_dir: str | os.PathLike | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Reference checkpoints ``(times, states)``, cached as a text table."""
    cache = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    params = _param_line(float(mu), float(x0), float(y0), float(T), float(dt), float(every))
    fname = cache / f"vdp_mu{mu:g}_T{T:g}_dt{dt:g}.txt"
    if fname.exists():
        with open(fname) as fh:
            head = [fh.readline().rstrip("\n") for _ in range(2)]
        if head[1] == params:
            data = np.loadtxt(fname, comments="#", skiprows=3, ndmin=2)
            return data[:, 0], data[:, 1:]
    times, states = rk4_vdp(mu, x0, y0, T, dt, every)
    cache.mkdir(parents=True, exist_ok=True)
    tmp = fname.with_suffix(".tmp")
    with open(tmp, "w") as fh:
        fh.write("# vdp-reference v1\n")
        fh.write(params + "\n")
        fh.write("t x y\n")
        for tk, (xk, yk) in zip(times, states):
            fh.write(f"{tk:.17g} {xk:.17g} {yk:.17g}\n")
    os.replace(tmp, fname)
    return times, states


def van_der_pol(mu: float = MU, x0: float = 2.0, y0: float = 0.0, reference: bool = True,
                cache_dir=None) -> ODESystem:
    """Van der Pol as a first-order system; ``exact`` looks up the RK4 reference."""
    if not mu > 0:
        raise ValueError("mu must be positive")

    def rhs(t, u):
        x, y = u
        return np.array([y, mu * (1 - x * x) * y - x])

    def jacobian(t, u):
        x, y = u
        return np.array([[0.0, 1.0], [-2 * mu * x * y - 1.0, mu * (1 - x * x)]])

    exact = None
    if reference:
        cache: dict = {}

        def exact(t):
            if "ref" not in cache:
                cache["ref"] = vdp_reference(mu, x0, y0, cache_dir=cache_dir)
            times, states = cache["ref"]
            k = int(round(t / REF_EVERY))
            if not 0 <= k < len(times) or not math.isclose(times[k], t, rel_tol=1e-12, abs_tol=1e-12):
                raise ValueError(f"no reference checkpoint at t={t!r}")
            return states[k].copy()

    return ODESystem(dim=2, rhs=rhs, jacobian=jacobian, u0=np.array([x0, y0], float),
                     exact=exact, name="vdp", params={"mu": mu})
