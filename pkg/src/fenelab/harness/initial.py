"""Initial-condition families for coupled runs.

Every family produces a state whose energy ``E(0)`` equals the requested
amplitude ``epsilon`` (the fields are scaled by the energy functional
itself), whose ``g`` has zero weighted mean at every spatial point (the
constant mode is projected out), and for which ``1 + g > 0`` everywhere.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.fft as sfft

from ..config_space import COS, SIN, DiskBasis
from ..coupled import CoupledSolver, CoupledState
from ..diagnostics import energy
from ..errors import ConstructionError, PreconditionError
from ..flow_solver import FlowState

__all__ = ["FAMILIES", "initial_condition"]

FAMILIES = ("single-mode", "random-band", "boundary-probe")


def _project_mean(basis: DiskBasis, g_field: np.ndarray) -> np.ndarray:
    return g_field - (g_field @ basis.weights)[..., None]


def _single_mode(solver: CoupledSolver, rng: np.random.Generator):
    grid, basis = solver.grid, solver.basis
    x = grid.coordinates()
    kappa = 2.0 * np.pi / grid.box_length
    c, s = np.cos(kappa * x[0]), np.sin(kappa * x[0])
    rho = c
    u = np.stack([np.zeros_like(s), s])
    profile = basis.eigenvector(1, COS, 0) + basis.eigenvector(2, COS, 0)
    g = c[..., None] * profile
    return rho, u, g


def _random_band(solver: CoupledSolver, rng: np.random.Generator, band: int = 2,
                 m_max: int = 2, j_max: int = 1):
    grid, basis = solver.grid, solver.basis
    n = grid.n_x
    spec = grid.spectral_shape
    full = np.fft.fftfreq(n, 1.0 / n)
    half = np.fft.rfftfreq(n, 1.0 / n)
    nx, ny = np.meshgrid(full, half, indexing="ij")
    mask = (np.abs(nx) <= band) & (np.abs(ny) <= band) & ((nx != 0) | (ny != 0))

    def field(shape_extra=()):
        coef = (rng.standard_normal(shape_extra + spec) + 1j * rng.standard_normal(shape_extra + spec))
        return sfft.irfftn(coef * mask, s=grid.shape, axes=(-2, -1)) * n * n

    rho = field()
    u = field((2,))
    modes = [(m, kind, j) for m in range(0, m_max + 1) for kind in (COS, SIN)
             for j in range(0, j_max + 1) if not (m == 0 and kind == SIN) and not (m == 0 and j == 0)]
    profiles = np.stack([basis.eigenvector(m, kind, j) for m, kind, j in modes])
    amps = field((len(modes),))
    g = np.moveaxis(amps, 0, -1) @ profiles
    # Include a spatially uniform component so the slowest mode is excited everywhere.
    g = g + rng.standard_normal(len(modes)) @ profiles
    return rho, u, g


def _boundary_probe(solver: CoupledSolver, rng: np.random.Generator, power: int = 8):
    grid, basis = solver.grid, solver.basis
    x = grid.coordinates()
    kappa = 2.0 * np.pi / grid.box_length
    r, theta = basis.nodes[:, 0], basis.nodes[:, 1]
    profile = r ** (2 * power) * (1.0 + np.cos(2.0 * theta))
    g = np.cos(kappa * x[0])[..., None] * profile
    return np.zeros(grid.shape), np.zeros((2,) + grid.shape), g


def initial_condition(family: str, epsilon: float, seed: int, solver: CoupledSolver,
                      s_disc: float = 2.0) -> CoupledState:
    """Build an initial state of the requested family with ``E(0) = epsilon``.

    Parameters
    ----------
    family : {"single-mode", "random-band", "boundary-probe"}
    epsilon : float
        Target energy ``E(0) >= 0``; ``0`` gives the equilibrium.
    seed : int
        Seed of the random families.
    solver : CoupledSolver
        Supplies the grids, disk basis and parameters.
    s_disc : float
        Sobolev index of the energy used for the normalisation.

    Raises
    ------
    PreconditionError
        Unknown family or negative amplitude.
    ConstructionError
        If the scaled data violate ``1 + g > 0`` or ``1 + rho > 0``.
    """
    if family not in FAMILIES:
        raise PreconditionError(f"unknown initial-condition family {family!r}; "
                                f"choose from {', '.join(FAMILIES)}")
    if epsilon < 0:
        raise PreconditionError("epsilon must be nonnegative")
    if epsilon == 0:
        return solver.equilibrium()
    rng = np.random.default_rng(seed)
    builder = {"single-mode": _single_mode, "random-band": _random_band,
               "boundary-probe": _boundary_probe}[family]
    rho, u, g = builder(solver, rng)
    flow = FlowState.from_physical(rho, u, solver.grid)
    g = _project_mean(solver.basis, g)
    unit = solver.make_state(flow, g)
    g_unit = _project_mean(solver.basis, unit.g_field)
    unit = solver.make_state(unit.flow, g_unit, dealias=False)
    e_unit = energy(unit, solver.basis, solver.params, s_disc).E
    if not e_unit > 0:
        raise ConstructionError(f"family {family!r} produced a zero-energy profile")
    scale = math.sqrt(epsilon / e_unit)
    flow = FlowState(unit.flow.rho_hat * scale, unit.flow.u_hat * scale, solver.grid)
    state = solver.make_state(flow, unit.g_field * scale, dealias=False)
    if not state.min_one_plus_g > 0:
        raise ConstructionError(f"epsilon={epsilon} too large: min(1 + g0) = {state.min_one_plus_g:.3e}")
    rho_phys, _ = flow.to_physical()
    if not np.min(1.0 + rho_phys) > 0:
        raise ConstructionError(f"epsilon={epsilon} too large: 1 + rho0 <= 0")
    return state
