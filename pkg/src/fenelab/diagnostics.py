"""Energy/dissipation functionals, run invariants and decay-rate fits.

Sobolev norms on the periodic box are Fourier multipliers
``||f||_{H^s}^2 = sum_k (1 + |k|^{2s}) |f_k|^2`` (with the ``L^2`` scaling of
the box), and the configuration variable is integrated with the
``psi_inf``-weighted disk quadrature.  All reductions run in a fixed order
on a single thread so results are bitwise reproducible.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np
import scipy.fft as sfft
from numpy.typing import ArrayLike, NDArray

from .config_space import DiskBasis
from .errors import DomainError, PreconditionError
from .flow_solver import FlowState, SpectralGrid
from .params import ModelParams

if TYPE_CHECKING:  # pragma: no cover
    from .coupled import CoupledState
    from .linear_spectral import DecayProfile

__all__ = [
    "CSV_COLUMNS",
    "BalanceResult",
    "EnergyRecord",
    "TauGrowth",
    "check_g_balance",
    "check_tau_growth",
    "energy",
    "fit_decay",
    "low_norm_terms",
]

#: Fixed column order of the per-step series CSV.
CSV_COLUMNS = ("t", "E", "D", "rho_L2", "u_L2", "g_L2L2", "gradR_g", "tau_L2", "tau_L1",
               "gradu_Linf", "cum_gradu_Linf", "min_one_plus_rho", "min_one_plus_g")


@dataclass(frozen=True)
class EnergyRecord:
    """Diagnostics of one coupled state.

    Norm fields are norms (not squared).  ``div_u_g2`` is the pairing
    ``int div u (int_B g^2 psi_inf dR) dx`` entering the ``g`` energy
    balance, and ``g_mean_max`` the largest per-point weighted mean of ``g``.
    """

    t: float
    E: float
    D: float
    rho_Hs: float
    u_Hs: float
    g_Hs: float
    rho_L2: float
    u_L2: float
    g_L2L2: float
    gradR_g: float
    tau_L2: float
    tau_L1: float
    gradu_Linf: float
    cum_gradu_Linf: float
    min_one_plus_rho: float
    min_one_plus_g: float
    div_u_g2: float
    g_mean_max: float
    rho_mean: float

    def as_row(self) -> list[float]:
        """Values in :data:`CSV_COLUMNS` order."""
        return [getattr(self, c) for c in CSV_COLUMNS]

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


# ---------------------------------------------------------------------------
# Spectral sums
# ---------------------------------------------------------------------------
def _spectral_sq(grid: SpectralGrid, f_hat: NDArray, weight: NDArray | float = 1.0) -> float:
    """``int |f|^2`` (times a Fourier multiplier) from half-spectrum coefficients.

    ``f_hat`` may carry leading component axes which are summed.
    """
    scale = grid.volume / float(grid.n_x) ** (2 * grid.d)
    dens = np.abs(f_hat) ** 2
    while dens.ndim > grid.d:
        dens = dens.sum(axis=0)
    return float(np.sum(grid.multiplicity * weight * dens) * scale)


def _g_hat(grid: SpectralGrid, g_field: NDArray) -> NDArray[np.complex128]:
    axes = tuple(range(grid.d))
    return sfft.rfftn(g_field, axes=axes)


def _g_spectral_sq(grid: SpectralGrid, basis: DiskBasis, g_hat: NDArray, weight) -> tuple[float, float]:
    """Return ``(sum mult*w |g_hat|^2_psi, sum mult*w <g_hat, K g_hat>)`` with box scaling."""
    scale = grid.volume / float(grid.n_x) ** (2 * grid.d)
    w = grid.multiplicity * weight
    dens = np.abs(g_hat) ** 2 @ basis.weights
    Kg = g_hat @ basis.stiffness
    dirichlet = np.sum((Kg * g_hat.conj()).real, axis=-1)
    return float(np.sum(w * dens) * scale), float(np.sum(w * dirichlet) * scale)


def low_norm_terms(flow: FlowState, g_field: NDArray, basis: DiskBasis,
                   params: ModelParams) -> tuple[float, float]:
    """Low-order energy ``E_1`` and dissipation ``H_1`` of a (difference) state.

    ``E_1 = ||rho||^2 + ||u||^2 + ||g||^2_{L^2(L^2)}`` and
    ``H_1 = mu ||grad u||^2 + (mu + mu') ||div u||^2 + ||grad_R g||^2``.
    """
    grid = flow.grid
    div_hat = np.sum(1j * grid.k * flow.u_hat, axis=0)
    g_sq, g_dir = _g_spectral_sq(grid, basis, _g_hat(grid, g_field), 1.0)
    E1 = _spectral_sq(grid, flow.rho_hat) + _spectral_sq(grid, flow.u_hat) + g_sq
    H1 = (params.mu * _spectral_sq(grid, flow.u_hat, grid.k_sq)
          + (params.mu + params.mu_prime) * _spectral_sq(grid, div_hat) + g_dir)
    return E1, H1


def energy(state: "CoupledState", basis: DiskBasis, params: ModelParams, s_disc: float = 2.0,
           previous: EnergyRecord | None = None) -> EnergyRecord:
    """Evaluate the energy ``E``, dissipation ``D`` and monitoring norms.

    Parameters
    ----------
    state : CoupledState
    basis : DiskBasis
    params : ModelParams
    s_disc : float
        Sobolev index of the multiplier ``1 + |k|^{2 s}``, ``s_disc >= 0``.
    previous : EnergyRecord, optional
        Record of the preceding step; the cumulative ``int ||grad u||_inf``
        is advanced from it with the trapezoidal rule.
    """
    if s_disc < 0:
        raise PreconditionError("s_disc must be nonnegative")
    flow = state.flow
    grid = flow.grid
    k_sq = grid.k_sq
    ms = 1.0 + k_sq ** s_disc
    with np.errstate(divide="ignore"):
        ms1 = 1.0 + np.where(k_sq > 0, k_sq ** (s_disc - 1.0), 0.0)
    div_hat = np.sum(1j * grid.k * flow.u_hat, axis=0)
    g_hat = _g_hat(grid, state.g_field)

    rho_Hs2 = _spectral_sq(grid, flow.rho_hat, ms)
    u_Hs2 = _spectral_sq(grid, flow.u_hat, ms)
    g_Hs2, grad_g_Hs2 = _g_spectral_sq(grid, basis, g_hat, ms)
    g_L2sq, grad_g_L2sq = _g_spectral_sq(grid, basis, g_hat, 1.0)
    E = rho_Hs2 + u_Hs2 + g_Hs2
    D = (_spectral_sq(grid, flow.rho_hat, ms1 * k_sq)
         + params.mu * _spectral_sq(grid, flow.u_hat, ms * k_sq)
         + (params.mu + params.mu_prime) * _spectral_sq(grid, div_hat, ms)
         + grad_g_Hs2)

    rho, u = flow.to_physical()
    axes = grid.axes
    grad_u = sfft.irfftn(1j * grid.k[None, :] * flow.u_hat[:, None], s=grid.shape, axes=axes)
    div_u = sfft.irfftn(div_hat, s=grid.shape, axes=axes)
    cell = grid.volume / float(grid.n_x) ** grid.d
    tau = state.tau_field
    tau_abs = np.sqrt(np.sum(tau * tau, axis=(-2, -1)))
    grad_abs = np.sqrt(np.sum(grad_u * grad_u, axis=(0, 1)))
    gradu_inf = float(grad_abs.max())
    g2_local = (state.g_field * state.g_field) @ basis.weights
    cum = 0.0
    if previous is not None:
        cum = previous.cum_gradu_Linf + 0.5 * (state.time - previous.t) * (
            previous.gradu_Linf + gradu_inf)
    return EnergyRecord(
        t=float(state.time), E=E, D=D,
        rho_Hs=math.sqrt(rho_Hs2), u_Hs=math.sqrt(u_Hs2), g_Hs=math.sqrt(g_Hs2),
        rho_L2=math.sqrt(_spectral_sq(grid, flow.rho_hat)),
        u_L2=math.sqrt(_spectral_sq(grid, flow.u_hat)),
        g_L2L2=math.sqrt(g_L2sq), gradR_g=math.sqrt(max(grad_g_L2sq, 0.0)),
        tau_L2=float(math.sqrt(np.sum(tau_abs ** 2) * cell)),
        tau_L1=float(np.sum(tau_abs) * cell),
        gradu_Linf=gradu_inf, cum_gradu_Linf=float(cum),
        min_one_plus_rho=float(np.min(1.0 + rho)),
        min_one_plus_g=float(np.min(1.0 + state.g_field)) if state.g_field.size else 1.0,
        div_u_g2=float(np.sum(div_u * g2_local) * cell),
        g_mean_max=float(np.max(np.abs(state.g_field @ basis.weights))),
        rho_mean=flow.mean_rho(),
    )


# ---------------------------------------------------------------------------
# Run-level checks
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class BalanceResult:
    """Residual of the discrete ``g``-energy balance at each step.

    ``residual[k] = (|g|^2(t_{k+1}) - |g|^2(t_k)) / dt + 2 |grad_R g|^2(t_k)
    - <div u, g^2>(t_k)``; ``flags`` marks steps where the residual exceeds
    ``tolerance * (1 + |g|^2)``.
    """

    t: NDArray[np.float64]
    residual: NDArray[np.float64]
    flags: NDArray[np.bool_]
    tolerance: float

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.residual))) if self.residual.size else 0.0

    @property
    def passed(self) -> bool:
        return not bool(np.any(self.flags))


def _uniform_dt(t: NDArray[np.float64], dt: float) -> None:
    if t.size < 2:
        raise PreconditionError("at least two consecutive records are required")
    steps = np.diff(t)
    if np.any(np.abs(steps - dt) > 1e-9 * max(dt, 1.0)):
        raise PreconditionError("records are not spaced uniformly by dt")


def check_g_balance(records: Sequence[EnergyRecord], dt: float,
                    tolerance: float = 1e-2) -> BalanceResult:
    """Residual of ``d/dt |g|^2 + 2 |grad_R g|^2 = <div u, g^2>`` along a run.

    Raises
    ------
    PreconditionError
        If the records are not consecutive steps of uniform size ``dt``.
    """
    t = np.array([r.t for r in records])
    _uniform_dt(t, dt)
    g2 = np.array([r.g_L2L2 ** 2 for r in records])
    grad2 = np.array([r.gradR_g ** 2 for r in records])
    drive = np.array([r.div_u_g2 for r in records])
    residual = np.diff(g2) / dt + 2.0 * grad2[:-1] - drive[:-1]
    flags = residual > tolerance * (1.0 + g2[:-1])
    return BalanceResult(t[:-1], residual, flags, tolerance)


@dataclass(frozen=True)
class TauGrowth:
    """Fit of the growth driver ``int_0^t ||grad u||_inf ds`` against ``sqrt(t)``.

    Attributes
    ----------
    C : float
        Least-squares constant of ``cum(t) ~ C sqrt(t)`` over the window.
    C_sup : float
        ``max cum(t) / sqrt(t)`` over the window (the bound actually realised).
    correlation : float
        Pearson correlation of ``cum`` with ``sqrt(t)`` (``nan`` if ``cum`` is constant).
    tau_decreasing : bool
        Whether ``||tau||_{L^1}`` is nonincreasing over the second half of the records.
    C_prime : float
        ``max ||tau||_{L^1} / (|box|^{1/2} ||g||^{1/2} ||grad_R g||^{1/2})``.
    window : tuple of float
    """

    C: float
    C_sup: float
    correlation: float
    tau_decreasing: bool
    C_prime: float
    window: tuple[float, float]


def check_tau_growth(records: Sequence[EnergyRecord], window: tuple[float, float] | None = None,
                     box_volume: float = 1.0, min_records: int = 50) -> TauGrowth:
    """Fit the cumulative velocity-gradient integral against ``sqrt(t)``.

    Parameters
    ----------
    records : sequence of EnergyRecord
    window : (t0, t1), optional
        Fit window (defaults to the whole run).
    box_volume : float
        Volume of the periodic box (enters the ``tau`` interpolation constant).
    min_records : int
        Minimum number of records inside the window.
    """
    t = np.array([r.t for r in records])
    cum = np.array([r.cum_gradu_Linf for r in records])
    lo, hi = (t[0], t[-1]) if window is None else window
    sel = (t >= lo) & (t <= hi) & (t > 0)
    if np.count_nonzero(sel) < min_records:
        raise PreconditionError(
            f"fit window holds {np.count_nonzero(sel)} records, need >= {min_records}")
    ts, cs = t[sel], cum[sel]
    root = np.sqrt(ts)
    C = float(np.dot(cs, root) / np.dot(root, root))
    C_sup = float(np.max(cs / root))
    if np.ptp(cs) == 0.0:
        corr = float("nan")
    else:
        corr = float(np.corrcoef(cs, root)[0, 1])
    tau = np.array([r.tau_L1 for r in records])
    tail = tau[len(tau) // 2:]
    decreasing = bool(np.all(np.diff(tail) <= 1e-12 * max(tail.max(initial=0.0), 1e-300)))
    denom = np.array([math.sqrt(box_volume * r.g_L2L2 * r.gradR_g) for r in records])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.where(denom > 0, tau / np.where(denom > 0, denom, 1.0), 0.0)
    return TauGrowth(C, C_sup, corr, decreasing, float(ratios.max(initial=0.0)), (float(lo), float(hi)))


def _series_arrays(series, field: str) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    if hasattr(series, "t") and hasattr(series, "values"):
        return np.asarray(series.t, float), np.asarray(series.values, float)
    if isinstance(series, tuple) and len(series) == 2:
        return np.asarray(series[0], float), np.asarray(series[1], float)
    records = list(series)
    return (np.array([r.t for r in records]), np.array([getattr(r, field) for r in records]))


def fit_decay(series: "DecayProfile | Iterable[EnergyRecord] | tuple[ArrayLike, ArrayLike]",
              window: tuple[float, float] | None = None, law: str = "algebraic",
              field: str = "g_L2L2") -> tuple[float, float]:
    """Least-squares decay exponent or rate.

    Parameters
    ----------
    series : DecayProfile, sequence of EnergyRecord or (t, y)
    window : (t0, t1), optional
        Inclusive fit window; defaults to the whole series.
    law : {"algebraic", "exponential"}
        ``algebraic`` fits ``log y`` against ``log(1 + t)``; ``exponential``
        fits ``log y`` against ``t``.
    field : str
        Record attribute used when ``series`` is a sequence of records.

    Returns
    -------
    slope : float
        Fitted slope (negative for decay).
    residual : float
        Root-mean-square residual of the log-linear fit.

    Raises
    ------
    PreconditionError
        If the window is empty/inverted or holds fewer than two points.
    DomainError
        If the series is not positive on the window.
    """
    t, y = _series_arrays(series, field)
    t0, t1 = (t[0], t[-1]) if window is None else window
    if not t0 < t1:
        raise PreconditionError(f"fit window must satisfy t0 < t1, got ({t0}, {t1})")
    sel = (t >= t0) & (t <= t1)
    if np.count_nonzero(sel) < 2:
        raise PreconditionError("fit window holds fewer than two samples")
    ys = y[sel]
    if np.any(~(ys > 0)):
        raise DomainError("series must be positive on the fit window")
    if law == "algebraic":
        x = np.log1p(t[sel])
    elif law == "exponential":
        x = t[sel]
    else:
        raise PreconditionError(f"unknown decay law {law!r}")
    logy = np.log(ys)
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, logy, rcond=None)
    resid = logy - A @ coef
    return float(coef[0]), float(np.sqrt(np.mean(resid ** 2)))


def record_field_names() -> list[str]:
    """Names of all :class:`EnergyRecord` fields."""
    return [f.name for f in fields(EnergyRecord)]
