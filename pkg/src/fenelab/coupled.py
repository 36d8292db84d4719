"""Coupled flow / configuration solver for the perturbation system.

The configuration perturbation ``g(t, x, R)`` obeys

.. math:: g_t + \\mathcal{L} g = -u\\cdot\\nabla_x g
          - \\psi_\\infty^{-1}\\nabla_R\\cdot(\\sigma(u) R g \\psi_\\infty)

at every spatial point, and feeds back into the momentum equation through
the Kramers stress ``tau(g)``.  Time stepping uses Strang splitting
(half step of ``g`` with the current velocity, full IMEX step of the flow
with the stress frozen at the half step, half step of ``g`` with the new
velocity).  Each ``g`` half step is a second-order Lawson (integrating
factor) Runge--Kutta step: ``L`` is applied exactly through the
eigen-decomposition of the disk basis, transport and drag explicitly.

:meth:`CoupledSolver.picard_iterate` runs the lagged linear iteration used
for local existence: coefficients (transport velocity, drag, density in the
pressure/inertia terms) are frozen from the previous iterate while the new
iterate is solved for.  The lagged coefficients are stored at every
Runge--Kutta stage, so the fixed point of the discrete iteration is exactly
the direct discrete solution.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.fft as sfft
from numpy.typing import NDArray

from .config_space import DiskBasis
from .diagnostics import energy, low_norm_terms
from .errors import ContractionFailure, PositivityWarning, PreconditionError, ShapeError
from .flow_solver import FlowSolver, FlowState, SpectralGrid, StageFields
from .parallel import WorkerPool
from .params import ModelParams

__all__ = ["CoupledSolver", "CoupledState", "PicardResult"]

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CoupledState:
    """Full perturbation state at time ``time``.

    Attributes
    ----------
    flow : FlowState
    g_field : ndarray, shape ``(*grid.shape, n_nodes)``
        Nodal values of ``g`` at every spatial grid point.
    tau_field : ndarray, shape ``(*grid.shape, 2, 2)``
        Stress ``tau(g)`` at every spatial grid point.
    time : float
    """

    flow: FlowState
    g_field: NDArray[np.float64]
    tau_field: NDArray[np.float64]
    time: float = 0.0

    @property
    def min_one_plus_g(self) -> float:
        return float(np.min(1.0 + self.g_field))


@dataclass
class PicardResult:
    """Outcome of the lagged (Picard) iteration.

    Attributes
    ----------
    distances : list of float
        ``delta_n`` for ``n = 1, 2, ...``: low-norm distance between
        iterates ``n`` and ``n - 1`` (iterate 0 is the zero state).
    ratios : list of float
        ``delta_{n+1} / delta_n`` (``nan`` when ``delta_n`` is zero).
    direct_distance : float or None
        Low-norm distance between the last iterate and the direct solution.
    trajectory : list of CoupledState
        The last iterate at every step time.
    """

    distances: list[float] = field(default_factory=list)
    ratios: list[float] = field(default_factory=list)
    direct_distance: float | None = None
    trajectory: list[CoupledState] = field(default_factory=list)


class CoupledSolver:
    """Time stepper for the coupled flow/configuration system.

    Parameters
    ----------
    basis : DiskBasis
        Disk discretisation (its ``k`` must equal ``params.k``).
    grid : SpectralGrid
        Periodic box discretisation (``d = 2``).
    params : ModelParams
    nonlinear : bool
        Passed to :class:`FlowSolver`.
    cfl : float
        Advective Courant number.
    workers : int
        Worker threads for FFTs and per-node operations.
    transport : bool
        Include ``u . grad_x g`` (disable to study the drag alone).
    """

    def __init__(self, basis: DiskBasis, grid: SpectralGrid, params: ModelParams,
                 nonlinear: bool = True, cfl: float = 0.5, workers: int = 1,
                 transport: bool = True) -> None:
        if grid.d != 2 or params.d != 2:
            raise PreconditionError("the coupled solver supports d = 2 only")
        if abs(basis.k - params.k) > 1e-14:
            raise PreconditionError(f"basis k={basis.k} differs from model k={params.k}")
        self.basis = basis
        self.grid = grid
        self.params = params
        self.workers = workers
        self.transport = transport
        self.pool = WorkerPool(workers)
        self.flow_solver = FlowSolver(grid, params, nonlinear=nonlinear, cfl=cfl, workers=workers)
        self._exp_cache: dict[float, NDArray[np.float64]] = {}
        self._mask = grid.dealias[..., None]

    # -- construction helpers ---------------------------------------------
    def stress_field(self, g_field: NDArray[np.float64]) -> NDArray[np.float64]:
        """``tau(g)`` at every spatial point."""
        S = self.basis.stress_functional
        t11, t22, t12 = g_field @ S[0, 0], g_field @ S[1, 1], g_field @ S[0, 1]
        return np.stack([np.stack([t11, t12], -1), np.stack([t12, t22], -1)], -2)

    def make_state(self, flow: FlowState, g_field: NDArray[np.float64], time: float = 0.0,
                   dealias: bool = True) -> CoupledState:
        """Assemble a :class:`CoupledState` (``g`` is dealiased in ``x``)."""
        g_field = np.asarray(g_field, dtype=float)
        expected = self.grid.shape + (self.basis.n_nodes,)
        if g_field.shape != expected:
            raise ShapeError(f"g_field must have shape {expected}, got {g_field.shape}")
        if dealias:
            g_field = self._dealias(g_field)
        return CoupledState(flow, g_field, self.stress_field(g_field), float(time))

    def equilibrium(self) -> CoupledState:
        """The zero perturbation."""
        g = np.zeros(self.grid.shape + (self.basis.n_nodes,))
        return CoupledState(FlowState.zeros(self.grid), g, self.stress_field(g), 0.0)

    # -- spatial operators -------------------------------------------------
    def _fft(self, f):
        return sfft.rfftn(f, axes=(0, 1), workers=self.workers)

    def _ifft(self, f):
        return sfft.irfftn(f, s=self.grid.shape, axes=(0, 1), workers=self.workers)

    def _dealias(self, g_field):
        return self._ifft(self._fft(g_field) * self._mask)

    def velocity_gradient(self, flow: FlowState) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Return ``u`` (shape ``(2, *shape)``) and ``grad u`` (``(*shape, 2, 2)``, ``[i, j] = d_j u_i``)."""
        g = self.grid
        u = sfft.irfftn(flow.u_hat, s=g.shape, axes=g.axes, workers=self.workers)
        grad = sfft.irfftn(1j * g.k[None, :] * flow.u_hat[:, None], s=g.shape, axes=g.axes,
                           workers=self.workers)
        return u, np.moveaxis(grad, (0, 1), (-2, -1))

    def g_explicit(self, g_field: NDArray[np.float64], u: NDArray[np.float64] | None,
                   grad_u: NDArray[np.float64] | None) -> NDArray[np.float64]:
        """Explicit part ``-u . grad_x g - drag(g, grad u)`` (dealiased in ``x``)."""
        out = np.zeros_like(g_field)
        if grad_u is not None:
            grad_u = np.asarray(grad_u, dtype=float)
            sigma12 = 0.5 * (grad_u[..., 0, 1] - grad_u[..., 1, 0])
            sigma12 = np.broadcast_to(sigma12, self.grid.shape)
            # drag = sigma_12 d g / d theta (see config_space.apply_drag)
            out += sigma12[..., None] * self.basis.rotate(g_field)
        if u is not None and self.transport:
            g_hat = self._fft(g_field)
            k = self.grid.k
            for b in range(self.grid.d):
                out -= u[b][..., None] * self._ifft(1j * k[b][..., None] * g_hat)
        return self._ifft(self._fft(out) * self._mask)

    def g_rhs(self, state: CoupledState) -> NDArray[np.float64]:
        """Time derivative of ``g``: ``-L g - u . grad_x g - drag``."""
        u, grad_u = self.velocity_gradient(state.flow)
        Lg = self._apply_nodes(state.g_field, self.basis.L_matrix)
        return -Lg + self.g_explicit(state.g_field, u, grad_u)

    def _apply_nodes(self, g_field, matrix):
        flat = g_field.reshape(-1, g_field.shape[-1])
        out = self.pool.map_rows(lambda rows: rows @ matrix.T, flat)
        return out.reshape(g_field.shape)

    def _exponential(self, h: float) -> NDArray[np.float64]:
        key = float(h)
        E = self._exp_cache.get(key)
        if E is None:
            E = self.basis.exponential(h)
            if len(self._exp_cache) > 8:
                self._exp_cache.clear()
            self._exp_cache[key] = E
        return E

    def g_substep(self, g_field: NDArray[np.float64], u: NDArray[np.float64] | None,
                  grad_u: NDArray[np.float64] | None, h: float) -> NDArray[np.float64]:
        """Advance ``g`` by ``h`` with frozen velocity data (Lawson RK2).

        ``u=None`` disables transport, ``grad_u=None`` disables the drag; with
        both disabled the step is the exact Fokker--Planck evolution.
        """
        E = self._exponential(h)
        if u is None and grad_u is None:
            return self._apply_nodes(g_field, E)
        k1 = self.g_explicit(g_field, u, grad_u)
        g_star = self._apply_nodes(g_field + h * k1, E)
        k2 = self.g_explicit(g_star, u, grad_u)
        return self._apply_nodes(g_field + 0.5 * h * k1, E) + 0.5 * h * k2

    # -- time stepping -----------------------------------------------------
    def step(self, state: CoupledState, dt: float, check_cfl: bool = True) -> CoupledState:
        """Advance the coupled state by ``dt`` (Strang splitting).

        Raises
        ------
        StepRejected, NonvacuumError
            Propagated from the flow solver.

        Warns
        -----
        PositivityWarning
            If ``1 + g`` becomes nonpositive somewhere.
        """
        new, _ = self._step(state, dt, check_cfl=check_cfl)
        return new

    def _step(self, state, dt, lagged_vel=None, lagged_stages=None, check_cfl=True):
        vel_n = self.velocity_gradient(state.flow) if lagged_vel is None else lagged_vel[0]
        g_half = self.g_substep(state.g_field, *vel_n, 0.5 * dt)
        tau_half = self.stress_field(g_half)
        flow_new, stages = self.flow_solver.step(state.flow, tau_half, dt, lagged=lagged_stages,
                                                 check_cfl=check_cfl)
        vel_new = self.velocity_gradient(flow_new) if lagged_vel is None else lagged_vel[1]
        g_new = self.g_substep(g_half, *vel_new, 0.5 * dt)
        low = float(np.min(1.0 + g_new)) if g_new.size else 1.0
        if not low > 0.0:
            warnings.warn(f"positivity of 1 + g violated at t={state.time + dt:.6g}: "
                          f"min = {low:.3e}", PositivityWarning, stacklevel=3)
        new = CoupledState(flow_new, g_new, self.stress_field(g_new), state.time + dt)
        return new, stages

    def run(self, state: CoupledState, dt: float, n_steps: int,
            callback: Callable[[int, CoupledState], None] | None = None) -> CoupledState:
        """Take ``n_steps`` steps, calling ``callback(step_index, state)`` after each."""
        if callback is not None:
            callback(0, state)
        for n in range(1, n_steps + 1):
            state = self.step(state, dt)
            if callback is not None:
                callback(n, state)
        return state

    # -- Picard iteration --------------------------------------------------
    def _difference(self, a: CoupledState, b: CoupledState) -> tuple[float, float]:
        flow = FlowState(a.flow.rho_hat - b.flow.rho_hat, a.flow.u_hat - b.flow.u_hat, self.grid)
        return low_norm_terms(flow, a.g_field - b.g_field, self.basis, self.params)

    def trajectory_distance(self, first: list[CoupledState], second: list[CoupledState]) -> float:
        """``sqrt(sup_t [E_1(diff)(t) + int_0^t H_1(diff)])`` over two trajectories."""
        if len(first) != len(second):
            raise ShapeError("trajectories must have equal length")
        best, integral, prev_h, prev_t = 0.0, 0.0, None, None
        for a, b in zip(first, second):
            e1, h1 = self._difference(a, b)
            if prev_h is not None:
                integral += 0.5 * (a.time - prev_t) * (prev_h + h1)
            best = max(best, e1 + integral)
            prev_h, prev_t = h1, a.time
        return math.sqrt(best)

    def picard_iterate(self, initial: CoupledState, T: float, n_iters: int, dt: float,
                       compare_direct: bool = True, max_energy: float | None = None,
                       horizon: float | None = None, floor: float = 1e-12) -> PicardResult:
        """Run the lagged linear iteration on ``[0, T]``.

        Parameters
        ----------
        initial : CoupledState
        T : float
            Horizon (a multiple of ``dt``).
        n_iters : int
            Number of iterates computed after the zero iterate.
        dt : float
            Time step of every linear solve.
        compare_direct : bool
            Also run :meth:`step` and report the distance of the last iterate
            to the direct solution.
        max_energy, horizon : float, optional
            Smallness thresholds: ``E(0) <= max_energy`` and ``T <= horizon``.
        floor : float
            Distances below ``floor * delta_1`` are at round-off level; they do
            not count towards divergence detection.

        Raises
        ------
        PreconditionError
            If the smallness thresholds are violated or ``T / dt`` is not an integer.
        ContractionFailure
            If ``delta_{n+1} > delta_n`` for three consecutive ``n`` (above the floor).
        """
        n_steps = int(round(T / dt))
        if n_steps < 1 or abs(n_steps * dt - T) > 1e-9 * T:
            raise PreconditionError(f"T={T} must be a positive multiple of dt={dt}")
        if horizon is not None and T > horizon:
            raise PreconditionError(f"T={T} exceeds the local-existence horizon {horizon}")
        if max_energy is not None:
            e0 = energy(initial, self.basis, self.params).E
            if e0 > max_energy:
                raise PreconditionError(f"E(0)={e0:.3e} exceeds the smallness threshold {max_energy}")

        zero_vel = (np.zeros((2,) + self.grid.shape), np.zeros(self.grid.shape + (2, 2)))
        zero_stage = StageFields(np.zeros(self.grid.shape), np.zeros((2,) + self.grid.shape))
        prev_vel = [zero_vel] * (n_steps + 1)
        prev_stages = [(zero_stage, zero_stage)] * n_steps
        zero = self.equilibrium()
        prev_traj = [CoupledState(zero.flow, zero.g_field, zero.tau_field, initial.time + k * dt)
                     for k in range(n_steps + 1)]
        result = PicardResult()
        increases = 0
        for it in range(n_iters):
            state = initial
            traj, vel, stages = [state], [self.velocity_gradient(state.flow)], []
            for k in range(n_steps):
                state, st = self._step(state, dt, lagged_vel=(prev_vel[k], prev_vel[k + 1]),
                                       lagged_stages=prev_stages[k], check_cfl=False)
                traj.append(state)
                vel.append(self.velocity_gradient(state.flow))
                stages.append(st)
            delta = self.trajectory_distance(traj, prev_traj)
            if result.distances:
                last = result.distances[-1]
                result.ratios.append(delta / last if last > 0 else float("nan"))
                above = delta > floor * result.distances[0]
                increases = increases + 1 if (delta > last and above) else 0
            result.distances.append(delta)
            logger.info("Picard iterate %d: delta = %.3e", it + 1, delta)
            prev_traj, prev_vel, prev_stages = traj, vel, stages
            if increases >= 3:
                raise ContractionFailure("Picard iterate distances increased three times in a row",
                                         result.distances)
            if delta == 0.0:
                break
        result.trajectory = prev_traj
        if compare_direct:
            direct = [initial]
            state = initial
            for _ in range(n_steps):
                state = self.step(state, dt, check_cfl=False)
                direct.append(state)
            result.direct_distance = self.trajectory_distance(prev_traj, direct)
        return result
