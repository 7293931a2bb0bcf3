"""Test problems: linear decay, stiff scalar ODE, Schroedinger and Burgers MOL systems, Van der Pol."""
from .decay import linear_decay
from .burgers import burgers_exact, burgers_forcing, burgers_mol
from .prothero_robinson import RecursionOracle, phi, phi_derivative, prothero_robinson
from .schrodinger import schrodinger_exact, schrodinger_mol
from .stencils import GridSpec, first_derivative, second_derivative
from .vanderpol import van_der_pol, vdp_reference

__all__ = [
    "GridSpec",
    "RecursionOracle",
    "burgers_exact",
    "burgers_forcing",
    "burgers_mol",
    "first_derivative",
    "linear_decay",
    "phi",
    "phi_derivative",
    "prothero_robinson",
    "schrodinger_exact",
    "schrodinger_mol",
    "second_derivative",
    "van_der_pol",
    "vdp_reference",
]
