"""fenelab: numerical laboratory for the compressible co-rotation FENE model.

Modules
-------
config_space
    Spectral discretisation of the configuration disk and the operator ``L``.
linear_spectral
    Symbol of the linearised compressible flow, projections, semigroup and decay.
flow_solver
    Pseudo-spectral IMEX solver for the compressible flow on a periodic box.
coupled
    Strang-split coupled solver and the Picard iteration.
diagnostics
    Energy/dissipation functionals, balance checks and decay fits.
inequality_lab
    Randomised verification of the configuration-space inequalities.
harness
    Configuration files, experiment runner and command-line interface.
"""

from .config_space import DiskBasis, build_basis, poincare_constant, stress
from .coupled import CoupledSolver, CoupledState
from .diagnostics import EnergyRecord, energy, fit_decay
from .errors import FenelabError
from .flow_solver import FlowSolver, FlowState, make_grid
from .params import ModelParams

__version__ = "0.1.0"

__all__ = [
    "CoupledSolver",
    "CoupledState",
    "DiskBasis",
    "EnergyRecord",
    "FenelabError",
    "FlowSolver",
    "FlowState",
    "ModelParams",
    "build_basis",
    "energy",
    "fit_decay",
    "make_grid",
    "poincare_constant",
    "stress",
]
