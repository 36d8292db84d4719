"""Fourier-side analysis of the linearised compressible Navier--Stokes system.

For a frequency ``xi`` the linearised system ``U_t = A(xi) U`` with
``U = (rho_hat, u_hat)`` has the block matrix

.. math::

    A(\\xi) = \\begin{pmatrix} 0 & -i\\xi^T \\\\
                  -i c^2 \\xi & -\\mu|\\xi|^2 I - (\\mu+\\mu')\\xi\\xi^T \\end{pmatrix}

with ``c^2 = P'(1) = a * gamma``.  Its eigenvalues are ``lambda_0 = -mu q``
(multiplicity ``d - 1``) and the acoustic pair
``lambda_pm = -(nu / 2) q +- (1/2) sqrt(nu^2 q^2 - 4 c^2 q)`` with
``q = |xi|^2`` and ``nu = 2 mu + mu'``.  The module evaluates the spectral
projections, the semigroup ``exp(t A)``, the Duhamel formula and the
continuous-frequency ``L^2`` norm of the linear evolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate, linalg
from scipy.interpolate import CubicSpline
from scipy.special import gamma as gamma_fn

from .errors import AccuracyError, DegenerateSpectrumError, PreconditionError, ShapeError
from .params import ModelParams

__all__ = [
    "DEGENERACY_THRESHOLD",
    "DataProfile",
    "DecayProfile",
    "SpectralTriple",
    "assemble_A",
    "characteristic_coefficients",
    "decay_norm",
    "decay_profile",
    "discriminant_radius",
    "duhamel_solve",
    "eigen_A",
    "matrix_exponential",
    "projections",
    "semigroup_apply",
    "semigroup_matrix",
]

#: Relative eigenvalue gap below which the projection formula is not used.
DEGENERACY_THRESHOLD = 1e-6


def _as_xi(xi: ArrayLike) -> NDArray[np.float64]:
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0:
        raise ShapeError("xi must be a vector (or a batch of vectors)")
    return xi


def assemble_A(xi: ArrayLike, params: ModelParams) -> NDArray[np.complex128]:
    """Return the linear symbol ``A(xi)``.

    Parameters
    ----------
    xi : array_like, shape (..., d)
        Frequency vector(s).
    params : ModelParams

    Returns
    -------
    ndarray, shape (..., d + 1, d + 1), complex
    """
    xi = _as_xi(xi)
    d = xi.shape[-1]
    q = np.sum(xi * xi, axis=-1)
    A = np.zeros(xi.shape[:-1] + (d + 1, d + 1), dtype=complex)
    A[..., 0, 1:] = -1j * xi
    A[..., 1:, 0] = -1j * params.sound_speed_sq * xi
    A[..., 1:, 1:] = (-params.mu * q[..., None, None] * np.eye(d)
                      - (params.mu + params.mu_prime) * xi[..., :, None] * xi[..., None, :])
    return A


def _eigen_from_q(q: NDArray[np.float64], params: ModelParams):
    nu = params.nu
    disc = (nu * q) ** 2 - 4.0 * params.sound_speed_sq * q
    root = np.sqrt(disc.astype(complex))
    lam0 = -params.mu * q + 0j
    # Numerically stable pair: the larger-magnitude root first, the other
    # from the product lambda_+ lambda_- = c^2 q.
    lam_minus = -0.5 * nu * q - 0.5 * root
    prod = params.sound_speed_sq * q
    with np.errstate(divide="ignore", invalid="ignore"):
        lam_plus = np.where(np.abs(lam_minus) > 0, prod / np.where(lam_minus == 0, 1.0, lam_minus),
                            0.0)
    lam_plus = np.where(q > 0, lam_plus, 0.0)
    return lam0, lam_plus, lam_minus


def eigen_A(xi: ArrayLike, params: ModelParams):
    """Closed-form eigenvalues ``(lambda_0, lambda_plus, lambda_minus)`` of ``A(xi)``.

    ``lambda_plus`` carries the ``+`` sign in front of the square root; in
    the oscillatory regime it has positive imaginary part and in the
    overdamped regime it is the eigenvalue closer to zero.
    """
    xi = _as_xi(xi)
    q = np.sum(xi * xi, axis=-1)
    return _eigen_from_q(q, params)


def discriminant_radius(params: ModelParams) -> float:
    """Radius ``r_1 = 2 c / nu`` where the acoustic discriminant vanishes."""
    return float(2.0 * np.sqrt(params.sound_speed_sq) / params.nu)


def characteristic_coefficients(xi: ArrayLike, params: ModelParams) -> NDArray[np.complex128]:
    """Coefficients (highest degree first) of ``det(lambda I - A(xi))`` in closed form.

    Equal to ``(lambda + mu q)^{d-1} (lambda^2 + nu q lambda + c^2 q)``.
    """
    xi = _as_xi(xi)
    d = xi.shape[-1]
    q = float(np.sum(xi * xi))
    poly = np.array([1.0, params.nu * q, params.sound_speed_sq * q])
    for _ in range(d - 1):
        poly = np.convolve(poly, [1.0, params.mu * q])
    return poly.astype(complex)


def _gap(lams, q):
    l0, lp, lm = lams
    scale = q + np.sqrt(q)
    gaps = np.minimum(np.minimum(np.abs(l0 - lp), np.abs(l0 - lm)), np.abs(lp - lm))
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(scale > 0, gaps / np.where(scale > 0, scale, 1.0), 0.0)


@dataclass(frozen=True, eq=False)
class SpectralTriple:
    """Spectral data of ``A(xi)`` at one frequency.

    ``P0``, ``P_plus`` and ``P_minus`` are ``None`` when ``degenerate_flag``
    is set; callers must then fall back to :func:`matrix_exponential`.
    """

    xi: NDArray[np.float64]
    A: NDArray[np.complex128]
    lambda0: complex
    lambda_plus: complex
    lambda_minus: complex
    relative_gap: float
    degenerate_flag: bool
    P0: NDArray[np.complex128] | None = field(default=None)
    P_plus: NDArray[np.complex128] | None = field(default=None)
    P_minus: NDArray[np.complex128] | None = field(default=None)

    @property
    def eigenvalues(self) -> tuple[complex, complex, complex]:
        return self.lambda0, self.lambda_plus, self.lambda_minus


def _projection_batch(A, lams):
    """Product formula for the three projections (batched, nondegenerate)."""
    n = A.shape[-1]
    eye = np.eye(n)
    out = []
    for j in range(3):
        P = np.broadcast_to(eye, A.shape).astype(complex)
        for i in range(3):
            if i == j:
                continue
            factor = (A - lams[i][..., None, None] * eye) / (lams[j] - lams[i])[..., None, None]
            P = P @ factor
        out.append(P)
    return out


def projection_formula(xi: ArrayLike, params: ModelParams, threshold: float = DEGENERACY_THRESHOLD):
    """Return ``(P0, P_plus, P_minus)`` by the product formula.

    Raises
    ------
    DegenerateSpectrumError
        If the relative eigenvalue gap is below ``threshold`` (includes ``xi = 0``).
    """
    xi = _as_xi(xi)
    q = np.sum(xi * xi, axis=-1)
    lams = eigen_A(xi, params)
    gap = _gap(lams, q)
    if np.any(gap < threshold):
        raise DegenerateSpectrumError(
            f"relative eigenvalue gap {float(np.min(gap)):.3e} below threshold {threshold:.1e}")
    return tuple(_projection_batch(assemble_A(xi, params), lams))


def projections(xi: ArrayLike, params: ModelParams,
                threshold: float = DEGENERACY_THRESHOLD) -> SpectralTriple:
    """Spectral triple of ``A(xi)`` with projections when well separated.

    Parameters
    ----------
    xi : array_like, shape (d,)
    params : ModelParams
    threshold : float
        Relative gap (scaled by ``|xi|^2 + |xi|``) below which the spectrum
        is declared degenerate.

    Returns
    -------
    SpectralTriple
        ``degenerate_flag`` is set (and the projections are ``None``) when
        the gap is below the threshold; no division by a small gap is ever
        performed.
    """
    xi = _as_xi(xi)
    if xi.ndim != 1:
        raise ShapeError("projections expects a single frequency vector")
    q = float(xi @ xi)
    lams = eigen_A(xi, params)
    gap = float(_gap(lams, np.asarray(q)))
    A = assemble_A(xi, params)
    l0, lp, lm = (complex(v) for v in lams)
    if gap < threshold:
        return SpectralTriple(xi, A, l0, lp, lm, gap, True)
    P0, Pp, Pm = _projection_batch(A, lams)
    return SpectralTriple(xi, A, l0, lp, lm, gap, False, P0, Pp, Pm)


def matrix_exponential(M: ArrayLike, t: float = 1.0) -> NDArray[np.complex128]:
    """Scaling-and-squaring matrix exponential ``exp(t M)`` (batched)."""
    M = np.asarray(M)
    return linalg.expm(t * M)


def semigroup_matrix(t: float | ArrayLike, xi: ArrayLike, params: ModelParams,
                     threshold: float = DEGENERACY_THRESHOLD) -> NDArray[np.complex128]:
    """Return ``exp(t A(xi))`` for a batch of frequencies and/or times.

    Nondegenerate frequencies use the projection formula; degenerate ones
    (including ``xi = 0``) fall back to the scaling-and-squaring exponential.
    ``t`` and the leading dimensions of ``xi`` are broadcast together.
    """
    xi = _as_xi(xi)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise PreconditionError("semigroup requires t >= 0")
    q = np.sum(xi * xi, axis=-1)
    batch = np.broadcast_shapes(t.shape, q.shape)
    d = xi.shape[-1]
    xi_b = np.broadcast_to(xi, batch + (d,)).reshape(-1, d)
    t_b = np.broadcast_to(t, batch).reshape(-1)
    q_b = np.sum(xi_b * xi_b, axis=-1)
    lams = _eigen_from_q(q_b, params)
    gap = _gap(lams, q_b)
    A = assemble_A(xi_b, params)
    out = np.empty(A.shape, dtype=complex)
    good = gap >= threshold
    if np.any(good):
        lg = tuple(l[good] for l in lams)
        Ps = _projection_batch(A[good], lg)
        tg = t_b[good]
        out[good] = sum(np.exp(tg * l)[:, None, None] * P for l, P in zip(lg, Ps))
    for idx in np.flatnonzero(~good):
        out[idx] = linalg.expm(t_b[idx] * A[idx])
    return out.reshape(batch + (d + 1, d + 1))


def semigroup_apply(t: float, xi: ArrayLike, v: ArrayLike, params: ModelParams) -> NDArray[np.complex128]:
    """Apply ``exp(t A(xi))`` to a state vector ``v``."""
    v = np.asarray(v, dtype=complex)
    E = semigroup_matrix(t, xi, params)
    return E @ v


# ---------------------------------------------------------------------------
# Continuous-frequency decay
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class DataProfile:
    """Radially symmetric density-only initial data ``U_hat(0, xi) = (f(|xi|), 0, ..., 0)``.

    The default ``f(r) = exp(-r^2)`` is bounded at ``xi = 0`` (the
    frequency-side signature of ``L^1`` data) and square integrable.
    """

    amplitude: Callable[[NDArray[np.float64]], NDArray[np.float64]] = field(
        default=lambda r: np.exp(-r * r))
    cutoff: float = 12.0


@dataclass(frozen=True, eq=False)
class DecayProfile:
    """Sampled ``||U(t)||_{L^2}`` of the linear evolution."""

    t: NDArray[np.float64]
    values: NDArray[np.float64]
    d: int
    slope: float | None = None

    def __post_init__(self) -> None:
        if np.any(np.diff(self.t) <= 0):
            raise PreconditionError("time grid must be strictly increasing")
        if np.any(self.values <= 0):
            raise PreconditionError("decay values must be positive")


def _sphere_area(d: int) -> float:
    return float(2.0 * np.pi ** (d / 2.0) / gamma_fn(d / 2.0))


def _longitudinal_amplitude_sq(t: float, r: NDArray[np.float64], params: ModelParams,
                               d: int) -> NDArray[np.float64]:
    xi = np.zeros(r.shape + (d,))
    xi[..., 0] = r
    E = semigroup_matrix(t, xi, params)
    return np.sum(np.abs(E[..., :, 0]) ** 2, axis=-1)


def decay_norm(t: float, params: ModelParams, data_profile: DataProfile | None = None,
               d: int | None = None, rtol: float = 1e-10) -> float:
    """``L^2`` norm of the linear solution with radially symmetric data.

    Computes ``(|S^{d-1}| int_0^inf r^{d-1} |exp(t A(r e_1)) U_hat(0, r)|^2 dr)^{1/2}``
    by adaptive quadrature with breakpoints at ``r_1`` and at multiples of
    the diffusive length ``(1 + t)^{-1/2}``.

    Parameters
    ----------
    t : float
        Time, ``t >= 0``.
    params : ModelParams
    data_profile : DataProfile, optional
        Defaults to the Gaussian profile.
    d : int, optional
        Dimension; defaults to ``params.d``.
    rtol : float
        Requested relative accuracy.

    Raises
    ------
    AccuracyError
        If the quadrature error estimate exceeds ``rtol`` times the value.
    """
    profile = data_profile or DataProfile()
    d = params.d if d is None else d
    r1 = discriminant_radius(params)
    cut = profile.cutoff

    def integrand(r):
        rr = np.atleast_1d(np.asarray(r, dtype=float))
        amp = np.asarray(profile.amplitude(rr), dtype=float)
        val = rr ** (d - 1) * _longitudinal_amplitude_sq(t, rr, params, d) * amp * amp
        return val if np.ndim(r) else float(val[0])

    scale = 1.0 / np.sqrt(1.0 + t)
    pts = sorted({p for p in [c * scale for c in (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)] + [r1]
                  if 0.0 < p < cut})
    edges = [0.0] + pts + [cut]
    total, err = 0.0, 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, e = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=rtol * 1e-2, limit=200)
        total += val
        err += e
    if total > 0 and err > rtol * total:
        raise AccuracyError(f"decay quadrature reached relative accuracy {err / total:.2e}",
                            achieved=err / total)
    return float(np.sqrt(_sphere_area(d) * total))


def decay_profile(times: Sequence[float], params: ModelParams,
                  data_profile: DataProfile | None = None, d: int | None = None,
                  rtol: float = 1e-10) -> DecayProfile:
    """Evaluate :func:`decay_norm` on a time grid."""
    t = np.asarray(times, dtype=float)
    d = params.d if d is None else d
    values = np.array([decay_norm(float(ti), params, data_profile, d, rtol) for ti in t])
    return DecayProfile(t=t, values=values, d=d)


# ---------------------------------------------------------------------------
# Duhamel formula
# ---------------------------------------------------------------------------
def duhamel_solve(t: float, xi: ArrayLike, initial: ArrayLike,
                  forcing: Callable[[float], ArrayLike] | tuple[ArrayLike, ArrayLike] | None,
                  params: ModelParams, panels: int | None = None, order: int = 8
                  ) -> NDArray[np.complex128]:
    """Mild solution ``exp(tA) U0 + int_0^t exp((t - s) A) F(s) ds`` at one frequency.

    Parameters
    ----------
    t : float
        Final time.
    xi : array_like, shape (d,)
    initial : array_like, shape (d + 1,)
    forcing : callable or (times, values) or None
        Either ``F(s) -> (d + 1,)`` vector or samples ``(times, values)``
        (``values`` of shape ``(n_samples, d + 1)``) interpolated by cubic
        splines.
    params : ModelParams
    panels : int, optional
        Number of Gauss--Legendre panels on ``[0, t]``; defaults to
        ``max(4, ceil(t * (1 + |lambda|_max)))``.
    order : int
        Gauss--Legendre points per panel.
    """
    xi = _as_xi(xi)
    U0 = np.asarray(initial, dtype=complex)
    result = semigroup_apply(t, xi, U0, params)
    if forcing is None or t == 0:
        return result
    if callable(forcing):
        F = forcing
    else:
        times, values = (np.asarray(a) for a in forcing)
        values = np.asarray(values, dtype=complex)
        spl_re = CubicSpline(times, values.real, axis=0)
        spl_im = CubicSpline(times, values.imag, axis=0)

        def F(s):
            return spl_re(s) + 1j * spl_im(s)
    if panels is None:
        lam_max = max(abs(complex(v)) for v in eigen_A(xi, params))
        panels = max(4, int(np.ceil(t * (1.0 + lam_max))))
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(0.0, t, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    s_nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    s_weights = (half[:, None] * w[None, :]).ravel()
    Fs = np.array([np.asarray(F(s), dtype=complex) for s in s_nodes])
    E = semigroup_matrix(t - s_nodes, xi, params)
    result = result + np.einsum("q,qij,qj->i", s_weights, E, Fs)
    return result
