"""Weak stage order analysis and time stepping for diagonally implicit Runge-Kutta schemes."""
from .analysis import SchemeReport, analyze
from .integrator import NewtonSettings, ODESystem, dirk_step, integrate
from .tableau import ButcherTableau, make_tableau, parse, registry_get, registry_names, serialize

__version__ = "0.1.0"

__all__ = [
    "ButcherTableau",
    "NewtonSettings",
    "ODESystem",
    "SchemeReport",
    "analyze",
    "dirk_step",
    "integrate",
    "make_tableau",
    "parse",
    "registry_get",
    "registry_names",
    "serialize",
]
