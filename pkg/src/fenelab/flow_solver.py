"""Pseudo-spectral IMEX solver for the macroscopic density/velocity perturbation.

The perturbation ``(rho, u)`` of the compressible fluid on the periodic box
``[0, L)^d`` obeys

.. math::

    \\rho_t + \\operatorname{div} u = -u\\cdot\\nabla\\rho - \\rho\\operatorname{div} u,

    u_t - \\operatorname{div}\\Sigma(u) + c^2\\nabla\\rho
        = -u\\cdot\\nabla u + (i(\\rho) - 1)\\operatorname{div}\\Sigma(u)
          + (c^2 - h(\\rho))\\nabla\\rho + i(\\rho)\\operatorname{div}\\tau,

with ``div Sigma(u) = mu Lap u + (mu + mu') grad div u``, ``c^2 = P'(1)``,
``h(rho) = P'(1 + rho) / (1 + rho)`` and ``i(rho) = 1 / (1 + rho)``.  The
left-hand side is exactly the Fourier symbol ``A(xi)`` used by
:mod:`fenelab.linear_spectral`; it is integrated implicitly mode by mode
with the two-stage, second-order ARS(2,2,2) IMEX Runge--Kutta scheme while
everything on the right is explicit.  Fields are stored as real-to-complex
(half-spectrum) Fourier coefficients, so real-valuedness is structural.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.fft as sfft
from numpy.typing import ArrayLike, NDArray

from .errors import NonvacuumError, PreconditionError, ShapeError, StepRejected
from .linear_spectral import assemble_A
from .params import ModelParams

__all__ = [
    "FlowSolver",
    "FlowState",
    "PressureCoeffs",
    "SpectralGrid",
    "StageFields",
    "imex_step",
    "make_grid",
    "nonlinear_rhs",
    "pressure_coeffs",
]

logger = logging.getLogger(__name__)

_ARS_GAMMA = 1.0 - 1.0 / np.sqrt(2.0)
_ARS_DELTA = 1.0 - 1.0 / (2.0 * _ARS_GAMMA)


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    """Collocation grid and wavenumbers of the periodic box ``[0, L)^d``.

    Attributes
    ----------
    n_x : int
        Points (and modes) per dimension.
    box_length : float
        Side length ``L``.
    d : int
        Dimension.
    k : ndarray, shape (d, *spectral_shape)
        Physical wavevectors ``2 pi n / L`` of the half spectrum.
    k_sq : ndarray
        ``|k|^2``.
    dealias : ndarray of bool
        2/3-rule mask (keeps ``|n_j| <= n_x // 3`` in every direction).
    multiplicity : ndarray
        Weight of each stored half-spectrum mode in Parseval sums
        (2 for modes whose conjugate partner is not stored).
    """

    n_x: int
    box_length: float
    d: int
    k: NDArray[np.float64]
    k_sq: NDArray[np.float64]
    dealias: NDArray[np.bool_]
    multiplicity: NDArray[np.float64]

    @property
    def shape(self) -> tuple[int, ...]:
        """Physical grid shape."""
        return (self.n_x,) * self.d

    @property
    def spectral_shape(self) -> tuple[int, ...]:
        """Half-spectrum shape."""
        return (self.n_x,) * (self.d - 1) + (self.n_x // 2 + 1,)

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.d, 0))

    @property
    def dx(self) -> float:
        return self.box_length / self.n_x

    @property
    def volume(self) -> float:
        return self.box_length ** self.d

    def coordinates(self) -> NDArray[np.float64]:
        """Grid coordinates, shape ``(d, *shape)``."""
        x = np.arange(self.n_x) * self.dx
        return np.stack(np.meshgrid(*([x] * self.d), indexing="ij"))


def make_grid(n_x: int, box_length: float = 2.0 * np.pi, d: int = 2) -> SpectralGrid:
    """Build a :class:`SpectralGrid` (``n_x`` even, ``n_x >= 4``)."""
    if n_x < 4 or n_x % 2:
        raise PreconditionError(f"n_x must be even and >= 4, got {n_x}")
    if not box_length > 0:
        raise PreconditionError("box_length must be positive")
    full = np.fft.fftfreq(n_x, 1.0 / n_x)
    half = np.fft.rfftfreq(n_x, 1.0 / n_x)
    ints = np.meshgrid(*([full] * (d - 1) + [half]), indexing="ij")
    ints = np.stack(ints)
    k = 2.0 * np.pi / box_length * ints
    cutoff = n_x // 3
    dealias = np.all(np.abs(ints) <= cutoff, axis=0)
    last = ints[-1]
    mult = np.where((last == 0) | (last == n_x // 2), 1.0, 2.0)
    arrays = [k, np.sum(k * k, axis=0), dealias, mult]
    for a in arrays:
        a.setflags(write=False)
    return SpectralGrid(n_x, float(box_length), d, *arrays)


@dataclass(frozen=True, eq=False)
class FlowState:
    """Half-spectrum Fourier coefficients of ``(rho, u)``.

    Attributes
    ----------
    rho_hat : ndarray, complex, shape ``grid.spectral_shape``
    u_hat : ndarray, complex, shape ``(d, *grid.spectral_shape)``
    grid : SpectralGrid
    """

    rho_hat: NDArray[np.complex128]
    u_hat: NDArray[np.complex128]
    grid: SpectralGrid

    @property
    def box_length(self) -> float:
        return self.grid.box_length

    @property
    def n_x(self) -> int:
        return self.grid.n_x

    @classmethod
    def zeros(cls, grid: SpectralGrid) -> "FlowState":
        """Equilibrium (``rho = 0``, ``u = 0``)."""
        return cls(np.zeros(grid.spectral_shape, complex),
                   np.zeros((grid.d,) + grid.spectral_shape, complex), grid)

    @classmethod
    def from_physical(cls, rho: ArrayLike, u: ArrayLike, grid: SpectralGrid,
                      dealias: bool = True) -> "FlowState":
        """Transform grid values to a (dealiased) spectral state."""
        rho = np.asarray(rho, dtype=float)
        u = np.asarray(u, dtype=float)
        if rho.shape != grid.shape or u.shape != (grid.d,) + grid.shape:
            raise ShapeError(f"fields must have shapes {grid.shape} and {(grid.d,) + grid.shape}")
        rho_hat = sfft.rfftn(rho, axes=grid.axes)
        u_hat = sfft.rfftn(u, axes=grid.axes)
        if dealias:
            rho_hat = rho_hat * grid.dealias
            u_hat = u_hat * grid.dealias
        return cls(rho_hat, u_hat, grid)

    def to_physical(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Return grid values ``(rho, u)``."""
        g = self.grid
        return (sfft.irfftn(self.rho_hat, s=g.shape, axes=g.axes),
                sfft.irfftn(self.u_hat, s=g.shape, axes=g.axes))

    def mean_rho(self) -> float:
        """Spatial mean of ``rho``."""
        return float(self.rho_hat[(0,) * self.grid.d].real / self.grid.n_x ** self.grid.d)


@dataclass(frozen=True, eq=False)
class PressureCoeffs:
    """Pointwise nonlinear pressure/inertia coefficients ``h(rho)`` and ``i(rho)``."""

    h_of_rho: NDArray[np.float64]
    i_of_rho: NDArray[np.float64]


def pressure_coeffs(rho: ArrayLike, params: ModelParams) -> PressureCoeffs:
    """Evaluate ``h(rho) = a gamma (1 + rho)^(gamma - 2)`` and ``i(rho) = 1 / (1 + rho)``."""
    one = 1.0 + np.asarray(rho, dtype=float)
    return PressureCoeffs(params.a * params.gamma * one ** (params.gamma - 2.0), 1.0 / one)


class StageFields(NamedTuple):
    """Physical ``(rho, u)`` at one IMEX stage (used as lagged Picard coefficients)."""

    rho: NDArray[np.float64]
    u: NDArray[np.float64]


class FlowSolver:
    """IMEX time stepper for the flow perturbation on a fixed grid.

    Parameters
    ----------
    grid : SpectralGrid
    params : ModelParams
    nonlinear : bool
        If ``False`` the explicit part reduces to the stress forcing
        ``div tau`` (linearised system).
    cfl : float
        Advective Courant number used by :meth:`admissible_dt`.
    workers : int
        Threads handed to the FFT backend (results are independent of it).
    """

    def __init__(self, grid: SpectralGrid, params: ModelParams, nonlinear: bool = True,
                 cfl: float = 0.5, workers: int = 1) -> None:
        if grid.d != params.d:
            raise PreconditionError(f"grid dimension {grid.d} != model dimension {params.d}")
        self.grid = grid
        self.params = params
        self.nonlinear = nonlinear
        self.cfl = cfl
        self.workers = workers
        # A(xi) per stored mode, shape (*spectral_shape, d+1, d+1)
        self.A = assemble_A(np.moveaxis(grid.k, 0, -1), params)
        self._implicit_cache: dict[float, NDArray[np.complex128]] = {}

    # -- transforms --------------------------------------------------------
    def _fft(self, f: NDArray[np.float64]) -> NDArray[np.complex128]:
        return sfft.rfftn(f, axes=self.grid.axes, workers=self.workers)

    def _ifft(self, f: NDArray[np.complex128]) -> NDArray[np.float64]:
        return sfft.irfftn(f, s=self.grid.shape, axes=self.grid.axes, workers=self.workers)

    def to_vector(self, state: FlowState) -> NDArray[np.complex128]:
        """Stack ``(rho_hat, u_hat)`` into shape ``(*spectral_shape, d + 1)``."""
        return np.moveaxis(np.concatenate([state.rho_hat[None], state.u_hat]), 0, -1)

    def from_vector(self, U: NDArray[np.complex128]) -> FlowState:
        U = np.moveaxis(U, -1, 0)
        return FlowState(np.ascontiguousarray(U[0]), np.ascontiguousarray(U[1:]), self.grid)

    def _implicit(self, dt: float) -> NDArray[np.complex128]:
        key = float(dt)
        M = self._implicit_cache.get(key)
        if M is None:
            n = self.A.shape[-1]
            M = np.linalg.inv(np.eye(n) - _ARS_GAMMA * dt * self.A)
            self._implicit_cache = {key: M}
        return M

    # -- right-hand sides --------------------------------------------------
    def linear_rate(self, U: NDArray[np.complex128]) -> NDArray[np.complex128]:
        """``A(xi) U`` per mode."""
        return np.einsum("...ij,...j->...i", self.A, U)

    def div_tau_hat(self, tau_field: ArrayLike) -> NDArray[np.complex128]:
        """Spectral ``(div tau)_a = sum_b d_b tau_ab`` from physical ``tau`` of shape ``(*shape, d, d)``."""
        g = self.grid
        tau = np.asarray(tau_field, dtype=float)
        if tau.shape != g.shape + (g.d, g.d):
            raise ShapeError(f"tau_field must have shape {g.shape + (g.d, g.d)}, got {tau.shape}")
        tau_hat = self._fft(np.moveaxis(tau, (-2, -1), (0, 1)))
        return 1j * np.einsum("b...,ab...->a...", g.k, tau_hat)

    def explicit_rate(self, coef: StageFields, U: NDArray[np.complex128],
                      div_tau_hat: NDArray[np.complex128]) -> NDArray[np.complex128]:
        """Explicit part ``F`` with coefficients ``coef`` and unknown ``U`` (spectral).

        ``coef`` supplies the transporting velocity and the density entering
        ``h`` and ``i``; using ``coef`` equal to the fields of ``U`` gives the
        nonlinear system, a frozen ``coef`` gives the lagged linear system of
        the Picard iteration.
        """
        g, p = self.grid, self.params
        ik = 1j * g.k
        rho_hat = U[..., 0]
        u_hat = np.moveaxis(U[..., 1:], -1, 0)
        if not self.nonlinear:
            out = np.zeros_like(U)
            out[..., 1:] = np.moveaxis(div_tau_hat, 0, -1)
            return out * g.dealias[..., None]
        rho_c, u_c = coef
        div_u_hat = np.sum(ik * u_hat, axis=0)
        grad_rho = self._ifft(ik * rho_hat)
        grad_u = self._ifft(ik[None, :] * u_hat[:, None])  # [a, b] = d_b u_a
        div_u = self._ifft(div_u_hat)
        visc = self._ifft(-p.mu * g.k_sq * u_hat - (p.mu + p.mu_prime) * g.k * div_u_hat)
        div_tau = self._ifft(div_tau_hat)
        coeffs = pressure_coeffs(rho_c, p)
        rho_rate = -np.sum(u_c * grad_rho, axis=0) - rho_c * div_u
        u_rate = (-np.einsum("b...,ab...->a...", u_c, grad_u)
                  + (coeffs.i_of_rho - 1.0) * visc
                  + (p.sound_speed_sq - coeffs.h_of_rho) * grad_rho
                  + coeffs.i_of_rho * div_tau)
        out = np.empty_like(U)
        out[..., 0] = self._fft(rho_rate)
        out[..., 1:] = np.moveaxis(self._fft(u_rate), 0, -1)
        return out * g.dealias[..., None]

    def fields(self, U: NDArray[np.complex128]) -> StageFields:
        """Physical fields of a spectral vector."""
        return StageFields(self._ifft(U[..., 0]), self._ifft(np.moveaxis(U[..., 1:], -1, 0)))

    def rhs(self, state: FlowState, tau_field: ArrayLike) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Physical time derivatives ``(rho_rate, u_rate)`` of the full system."""
        U = self.to_vector(state)
        fields = self.fields(U)
        self._check_vacuum(fields.rho, state)
        rate = self.linear_rate(U) + self.explicit_rate(fields, U, self.div_tau_hat(tau_field))
        rates = self.fields(rate)
        return rates.rho, rates.u

    # -- stepping ----------------------------------------------------------
    def admissible_dt(self, state: FlowState) -> float:
        """Largest step satisfying the advective CFL condition."""
        if not self.nonlinear:
            return float("inf")
        _, u = state.to_physical()
        umax = float(np.max(np.abs(u))) if u.size else 0.0
        return float("inf") if umax == 0.0 else self.cfl * self.grid.dx / umax

    @staticmethod
    def _check_vacuum(rho: NDArray[np.float64], state) -> None:
        low = float(np.min(1.0 + rho))
        if not low > 0.0:
            raise NonvacuumError(f"nonvacuum condition violated: min(1 + rho) = {low:.3e}", state)

    def step(self, state: FlowState, tau_field: ArrayLike, dt: float,
             lagged: tuple[StageFields, StageFields] | None = None,
             check_cfl: bool = True) -> tuple[FlowState, tuple[StageFields, StageFields]]:
        """Advance one ARS(2,2,2) step with frozen stress ``tau_field``.

        Parameters
        ----------
        state : FlowState
        tau_field : array_like, shape ``(*grid.shape, d, d)``
        dt : float
        lagged : pair of StageFields, optional
            Coefficient fields for the two explicit stages (Picard mode).
            When omitted the stage values themselves are used (direct solve).
        check_cfl : bool
            Enforce the advective CFL restriction.

        Returns
        -------
        new_state : FlowState
        stages : pair of StageFields
            Physical fields of the two stage values (for later lagging).

        Raises
        ------
        StepRejected
            If ``dt`` exceeds :meth:`admissible_dt`.
        NonvacuumError
            If ``1 + rho <= 0`` at a stage or in the result.
        """
        if not dt > 0:
            raise PreconditionError("dt must be positive")
        if check_cfl:
            limit = self.admissible_dt(state)
            if dt > limit:
                raise StepRejected(f"dt={dt:.3e} exceeds CFL limit {limit:.3e}", limit)
        M = self._implicit(dt)
        div_tau = self.div_tau_hat(tau_field)
        U = self.to_vector(state)
        Y1 = self.fields(U)
        self._check_vacuum(Y1.rho, state)
        N1 = self.explicit_rate(Y1 if lagged is None else lagged[0], U, div_tau)
        mv = lambda X: np.einsum("...ij,...j->...i", M, X)  # noqa: E731
        U2 = mv(U + dt * _ARS_GAMMA * N1)
        Y2 = self.fields(U2)
        self._check_vacuum(Y2.rho, state)
        N2 = self.explicit_rate(Y2 if lagged is None else lagged[1], U2, div_tau)
        U_new = mv(U + dt * (_ARS_DELTA * N1 + (1.0 - _ARS_DELTA) * N2)
                   + dt * (1.0 - _ARS_GAMMA) * self.linear_rate(U2))
        new = self.from_vector(U_new)
        self._check_vacuum(self.fields(U_new).rho, new)
        return new, (Y1, Y2)


def nonlinear_rhs(state: FlowState, tau_field: ArrayLike, params: ModelParams
                  ) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Physical time derivatives ``(rho_rate, u_rate)`` of the flow system."""
    return FlowSolver(state.grid, params).rhs(state, tau_field)


def imex_step(state: FlowState, config_coupling: ArrayLike, dt: float,
              params: ModelParams) -> FlowState:
    """Advance ``state`` by one IMEX step with the stress field ``config_coupling`` frozen."""
    return FlowSolver(state.grid, params).step(state, config_coupling, dt)[0]
