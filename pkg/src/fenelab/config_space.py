"""Weighted discretisation of the configuration disk ``B(0, 1)``.

The configuration variable ``R`` of a dumbbell lives in the unit disk and
all configuration integrals are weighted by the equilibrium density

.. math:: \\psi_\\infty(R) = (1 - |R|^2)^k / Z,  \\qquad Z = \\pi / (k + 1).

Functions of ``R`` are represented nodally on a tensor grid made of
Gauss--Jacobi points in ``s = 2 r^2 - 1`` (Jacobi weight ``(1 - s)^k``, which
is exactly ``psi_inf`` after the change of variables) and equispaced angles.
Angular Fourier mode ``m`` is represented radially as ``r^p q(s)`` with ``q``
a polynomial and ``p = 0`` (``m = 0``), ``1`` (odd ``m``) or ``2`` (even
``m >= 2``), which keeps every mode smooth at the origin without the
ill-conditioned ``r^m`` factor.

The Fokker--Planck operator ``L g = -psi^{-1} div(psi grad g)`` is assembled
weakly from its Dirichlet form ``<grad g, grad h>_psi`` so that it is
symmetric in the weighted inner product by construction; no boundary row is
needed because ``psi_inf`` vanishes on the circle.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import roots_jacobi

from .errors import DomainError, NumericalError, PreconditionError, ShapeError

__all__ = [
    "DiskBasis",
    "apply_L",
    "apply_drag",
    "build_basis",
    "dirichlet_form",
    "equilibrium_weight",
    "gradient",
    "inner",
    "lp_norm",
    "mean",
    "normalization_constant",
    "poincare_constant",
    "stress",
]

# Mode kinds of the real angular Fourier basis.
COS, SIN = 0, 1


# ---------------------------------------------------------------------------
# Equilibrium density
# ---------------------------------------------------------------------------
@functools.lru_cache(maxsize=None)
def normalization_constant(k: float) -> float:
    """Return ``Z = int_B (1 - |R|^2)^k dR`` for the unit disk.

    Computed by Gauss--Jacobi quadrature in ``s = 2 r^2 - 1`` (exact, since
    the integrand becomes the bare Jacobi weight); equals ``pi / (k + 1)``.
    """
    if not k > 0:
        raise DomainError(f"k must be positive, got {k}")
    _, ws = roots_jacobi(1, k, 0.0)
    # dR = r dr dtheta = ds dtheta / 4 and (1 - r^2)^k = 2^{-k} (1 - s)^k.
    return float(2.0 * np.pi * ws.sum() * 2.0 ** (-k) / 4.0)


def equilibrium_weight(R: ArrayLike, k: float) -> NDArray[np.float64] | float:
    """Evaluate the normalised equilibrium density ``psi_inf``.

    Parameters
    ----------
    R : array_like, shape (..., 2)
        Points of the open unit disk.
    k : float
        FENE exponent, ``k > 0``.

    Returns
    -------
    float or ndarray
        ``(1 - |R|^2)^k / Z`` evaluated pointwise.

    Raises
    ------
    DomainError
        If some ``|R| >= 1`` or ``k <= 0``.
    """
    R = np.asarray(R, dtype=float)
    if R.shape[-1:] != (2,):
        raise ShapeError(f"R must have trailing dimension 2, got shape {R.shape}")
    r2 = np.sum(R * R, axis=-1)
    if np.any(r2 >= 1.0):
        raise DomainError("equilibrium_weight requires |R| < 1")
    value = (1.0 - r2) ** k / normalization_constant(k)
    return float(value) if np.ndim(value) == 0 else value


# ---------------------------------------------------------------------------
# Polynomial helpers (barycentric form)
# ---------------------------------------------------------------------------
def _barycentric_weights(x: NDArray[np.float64]) -> NDArray[np.float64]:
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    log_w = -np.sum(np.log(np.abs(diff)), axis=1)
    sign = np.prod(np.sign(diff), axis=1)
    return sign * np.exp(log_w - log_w.max())


def _differentiation_matrix(x: NDArray[np.float64]) -> NDArray[np.float64]:
    """Differentiation matrix of the polynomial interpolant through nodes ``x``."""
    w = _barycentric_weights(x)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    D = (w[None, :] / w[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    # Negative-sum trick: rows annihilate constants to rounding.
    D[np.diag_indices_from(D)] = -D.sum(axis=1)
    return D


def _interpolation_matrix(x: NDArray[np.float64], t: NDArray[np.float64]) -> NDArray[np.float64]:
    """Matrix mapping values at nodes ``x`` to interpolant values at ``t``."""
    w = _barycentric_weights(x)
    diff = t[:, None] - x[None, :]
    exact = diff == 0.0
    diff[exact] = 1.0
    P = w[None, :] / diff
    P /= P.sum(axis=1, keepdims=True)
    hit = exact.any(axis=1)
    P[hit] = exact[hit].astype(float)
    return P


def _radial_power(m: int) -> int:
    if m == 0:
        return 0
    return 1 if m % 2 else 2


# ---------------------------------------------------------------------------
# Basis
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class DiskBasis:
    """Nodal discretisation of weighted function spaces on the unit disk.

    Nodes are ordered radius-major: node ``i * n_theta + j`` sits at
    ``(r[i], theta[j])``.  All arrays are read-only; a basis can be shared
    freely between threads.

    Attributes
    ----------
    k : float
        Weight exponent.
    n_r, n_theta : int
        Radial and angular resolutions.
    r, theta : ndarray
        One-dimensional radial and angular node sets.
    nodes : ndarray, shape (n, 2)
        ``(r, theta)`` of each node.
    points : ndarray, shape (n, 2)
        Cartesian coordinates of each node.
    weights : ndarray, shape (n,)
        Quadrature weights for ``int_B f psi_inf dR`` (they sum to one).
    radial_weights : ndarray, shape (n_r,)
        Radial factor of ``weights`` (sums to one).
    angular_basis : ndarray, shape (n_theta, n_theta)
        Orthogonal matrix whose columns are the sampled real Fourier modes.
    angular_m, angular_kind : ndarray, shape (n_theta,)
        Wavenumber and kind (``COS``/``SIN``) of each column of ``angular_basis``.
    angular_derivative : ndarray, shape (n_theta, n_theta)
        Exact (antisymmetric) spectral ``d/dtheta`` on one ring.
    stiffness : ndarray, shape (n, n)
        Dirichlet-form matrix ``K`` with ``g^T K h = <grad g, grad h>_psi``.
    L_matrix : ndarray, shape (n, n)
        ``W^{-1} K``: nodal action of the Fokker--Planck operator.
    grad_matrices : ndarray, shape (2, n, n)
        Cartesian components of ``grad_R`` acting on nodal values.
    stress_functional : ndarray, shape (2, 2, n)
        Linear functionals evaluating the Kramers stress ``tau(g)``.
    eigenvalues : ndarray, shape (n,)
        Eigenvalues of ``L_matrix`` in ascending order.
    eigenvectors : ndarray, shape (n, n)
        Corresponding eigenvectors (columns), orthonormal in the weighted
        inner product.
    mode_m, mode_kind, mode_j : ndarray, shape (n,)
        Angular wavenumber, kind and radial index of each eigenpair.
    """

    k: float
    n_r: int
    n_theta: int
    r: NDArray[np.float64]
    theta: NDArray[np.float64]
    nodes: NDArray[np.float64]
    points: NDArray[np.float64]
    weights: NDArray[np.float64]
    radial_weights: NDArray[np.float64]
    angular_basis: NDArray[np.float64]
    angular_m: NDArray[np.int64]
    angular_kind: NDArray[np.int64]
    angular_derivative: NDArray[np.float64]
    stiffness: NDArray[np.float64]
    L_matrix: NDArray[np.float64]
    grad_matrices: NDArray[np.float64]
    stress_functional: NDArray[np.float64]
    eigenvalues: NDArray[np.float64]
    eigenvectors: NDArray[np.float64]
    mode_m: NDArray[np.int64]
    mode_kind: NDArray[np.int64]
    mode_j: NDArray[np.int64]

    @property
    def n_nodes(self) -> int:
        """Total number of nodes ``n_r * n_theta``."""
        return self.n_r * self.n_theta

    @property
    def eigpairs(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """``(eigenvalues, eigenvectors)`` of ``L_matrix``, ascending."""
        return self.eigenvalues, self.eigenvectors

    @property
    def lambda1(self) -> float:
        """Smallest nonzero eigenvalue of the Fokker--Planck operator."""
        return float(self.eigenvalues[1])

    def eigenvector(self, m: int, kind: int = COS, j: int = 0) -> NDArray[np.float64]:
        """Return the eigenvector with angular data ``(m, kind)`` and radial index ``j``."""
        idx = np.flatnonzero((self.mode_m == m) & (self.mode_kind == kind) & (self.mode_j == j))
        if idx.size != 1:
            raise PreconditionError(f"no eigenvector with m={m}, kind={kind}, j={j}")
        return self.eigenvectors[:, idx[0]]

    def exponential(self, h: float) -> NDArray[np.float64]:
        """Return the nodal matrix of ``exp(-h L)``."""
        V = self.eigenvectors
        return (V * np.exp(-h * self.eigenvalues)) @ (V.T * self.weights)

    def rotate(self, g: NDArray[np.float64]) -> NDArray[np.float64]:
        """Apply ``d/dtheta`` to nodal values ``g`` of shape ``(..., n)``."""
        shape = g.shape
        rings = g.reshape(shape[:-1] + (self.n_r, self.n_theta))
        return (rings @ self.angular_derivative.T).reshape(shape)

    def from_function(self, f) -> NDArray[np.float64]:
        """Sample a callable ``f(x, y)`` at the nodes."""
        return np.asarray(f(self.points[:, 0], self.points[:, 1]), dtype=float)


def _angular_basis(n_theta: int):
    theta = 2.0 * np.pi * np.arange(n_theta) / n_theta
    M = n_theta // 2
    cols, ms, kinds = [np.full(n_theta, 1.0 / np.sqrt(n_theta))], [0], [COS]
    scale = np.sqrt(2.0 / n_theta)
    for m in range(1, M):
        cols.append(scale * np.cos(m * theta))
        ms.append(m)
        kinds.append(COS)
        cols.append(scale * np.sin(m * theta))
        ms.append(m)
        kinds.append(SIN)
    cols.append(np.cos(M * theta) / np.sqrt(n_theta))
    ms.append(M)
    kinds.append(COS)
    return theta, np.column_stack(cols), np.array(ms), np.array(kinds)


def _angular_symbol(ms: NDArray, kinds: NDArray, nyquist_energy: bool) -> NDArray[np.float64]:
    """Matrix of ``d/dtheta`` on the real Fourier coefficients.

    With ``nyquist_energy`` the Nyquist coefficient is mapped to ``M`` times
    itself, so that ``H^T H`` carries the correct ``m^2`` angular energy for
    every mode (the sampled Nyquist mode has no derivative partner).
    """
    n = ms.size
    H = np.zeros((n, n))
    M = ms.max()
    for c in range(n):
        m = ms[c]
        if m == 0:
            continue
        if m == M and kinds[c] == COS and (n % 2 == 0) and c == n - 1:
            if nyquist_energy:
                H[c, c] = M
            continue
        if kinds[c] == COS:
            s = c + 1
            # d/dtheta (a cos + b sin) = m b cos - m a sin
            H[c, s] = m
            H[s, c] = -m
    return H


def _build_stress_functional(k, s, r, n_r, Q, ms, kinds):
    """Functionals ``S_ab`` with ``tau_ab(g) = sum_n S_ab[n] g[n]``."""
    n_theta = Q.shape[0]
    Z = np.pi / (k + 1.0)
    # Radial integral (1/Z) int_0^1 2k r^2 F(r) (1-r^2)^{k-1} r dr with the
    # Jacobi weight (1-s)^{k-1}: exact for the polynomial interpolant.
    t, wt = roots_jacobi(n_r + 2, k - 1.0, 0.0)
    P = _interpolation_matrix(s, t)
    base = (2.0 * k / Z) * 2.0 ** (1.0 - k) / 4.0 * wt * (1.0 + t) / 2.0
    S = np.zeros((2, 2, n_r, n_theta))
    for c in range(n_theta):
        m, kind = ms[c], kinds[c]
        if m not in (0, 2):
            continue
        p = _radial_power(m)
        # values q_j = G_j / r_j^p; F(t) = ((1+t)/2)^{p/2} q(t)
        radial = ((base * ((1.0 + t) / 2.0) ** (p / 2.0)) @ P) / r ** p
        # Angular integrals of e_a e_b phi_c, phi_c the continuous column mode.
        A = np.zeros((2, 2))
        amp = Q[0, c] if kind == COS else None
        if m == 0:
            A[0, 0] = A[1, 1] = np.pi * amp
        elif kind == COS:
            # Column value at theta=0 equals its amplitude.
            A[0, 0], A[1, 1] = np.pi / 2 * amp, -np.pi / 2 * amp
        else:
            amp_s = np.sqrt(2.0 / n_theta)
            A[0, 1] = A[1, 0] = np.pi / 2 * amp_s
        S += A[:, :, None, None] * np.outer(radial, Q[:, c])[None, None]
    return S.reshape(2, 2, n_r * n_theta)


def build_basis(k: float, n_r: int, n_theta: int) -> DiskBasis:
    """Construct the weighted nodal basis on the unit disk.

    Parameters
    ----------
    k : float
        Weight exponent (``k > 0``).
    n_r : int
        Number of radial Gauss--Jacobi nodes, ``n_r >= 4``.
    n_theta : int
        Number of equispaced angular nodes, even and ``>= 4``.

    Returns
    -------
    DiskBasis

    Raises
    ------
    PreconditionError
        On invalid resolutions or exponent.
    NumericalError
        If an eigen-decomposition fails or the spectral invariants
        (single zero eigenvalue, positivity) are not met.
    """
    if not k > 0:
        raise PreconditionError(f"k must be positive, got {k}")
    if n_r < 4:
        raise PreconditionError(f"n_r must be >= 4, got {n_r}")
    if n_theta < 4 or n_theta % 2:
        raise PreconditionError(f"n_theta must be even and >= 4, got {n_theta}")
    k = float(k)
    n = n_r * n_theta

    s, ws = roots_jacobi(n_r, k, 0.0)
    r = np.sqrt((1.0 + s) / 2.0)
    Z = normalization_constant(k)
    wr = ws * 2.0 ** (-k) / 4.0 * 2.0 * np.pi / Z
    Ds = _differentiation_matrix(s)

    theta, Q, ms, kinds = _angular_basis(n_theta)
    M = n_theta // 2
    weights = np.repeat(wr, n_theta) / n_theta

    # Radial derivative per angular wavenumber acting on nodal values.
    radial_ops = {}
    for m in range(M + 1):
        p = _radial_power(m)
        radial_ops[m] = p * np.diag(1.0 / r) + 4.0 * (r ** (p + 1))[:, None] * Ds * (r ** (-p))[None, :]

    Gr = np.zeros((n, n))
    for m in range(M + 1):
        cols = ms == m
        proj = Q[:, cols] @ Q[:, cols].T
        Gr += np.kron(radial_ops[m], proj)
    H_exact = _angular_symbol(ms, kinds, nyquist_energy=False)
    H_energy = _angular_symbol(ms, kinds, nyquist_energy=True)
    d_theta = Q @ H_exact @ Q.T
    Ga = np.kron(np.diag(1.0 / r), Q @ H_energy @ Q.T)

    K = Gr.T @ (weights[:, None] * Gr) + Ga.T @ (weights[:, None] * Ga)
    K = 0.5 * (K + K.T)
    L = K / weights[:, None]

    cos_t = np.tile(np.cos(theta), n_r)
    sin_t = np.tile(np.sin(theta), n_r)
    grad = np.stack([cos_t[:, None] * Gr - sin_t[:, None] * Ga,
                     sin_t[:, None] * Gr + cos_t[:, None] * Ga])

    # Eigen-decomposition mode by mode (block diagonal in the angular basis).
    vals, vecs, mode_m, mode_kind, mode_j = [], [], [], [], []
    sqrt_wr = np.sqrt(wr)
    for m in range(M + 1):
        Dm = radial_ops[m]
        Km = Dm.T @ (wr[:, None] * Dm) + m * m * np.diag(wr / r ** 2)
        B = Km / np.outer(sqrt_wr, sqrt_wr)
        B = 0.5 * (B + B.T)
        try:
            lam, U = np.linalg.eigh(B)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
            raise NumericalError(f"eigen-decomposition failed for mode m={m}: {exc}",
                                 condition=float(np.linalg.cond(B))) from exc
        Y = U / sqrt_wr[:, None]
        for j in range(n_r):
            y = Y[:, j]
            pivot = y[-1] if abs(y[-1]) > 1e-8 * np.abs(y).max() else y[np.argmax(np.abs(y))]
            Y[:, j] = y * np.sign(pivot)
        for c in np.flatnonzero(ms == m):
            for j in range(n_r):
                vecs.append(np.kron(Y[:, j], Q[:, c]) * np.sqrt(n_theta))
                vals.append(lam[j])
                mode_m.append(m)
                mode_kind.append(kinds[c])
                mode_j.append(j)
    vals = np.array(vals)
    order = np.argsort(vals, kind="stable")
    eigenvalues = vals[order]
    eigenvectors = np.column_stack(vecs)[:, order]
    mode_m = np.array(mode_m)[order]
    mode_kind = np.array(mode_kind)[order]
    mode_j = np.array(mode_j)[order]

    cond = float(eigenvalues[-1] / max(eigenvalues[1], np.finfo(float).tiny))
    if abs(eigenvalues[0]) > 1e-10 or not eigenvalues[1] > 1e-8:
        raise NumericalError(
            f"spectral invariant violated: lambda_0={eigenvalues[0]:.3e}, "
            f"lambda_1={eigenvalues[1]:.3e}", condition=cond)
    if np.any(weights < 0):
        raise NumericalError("negative quadrature weight", condition=cond)

    S = _build_stress_functional(k, s, r, n_r, Q, ms, kinds)
    nodes = np.column_stack([np.repeat(r, n_theta), np.tile(theta, n_r)])
    points = np.column_stack([nodes[:, 0] * np.cos(nodes[:, 1]), nodes[:, 0] * np.sin(nodes[:, 1])])

    arrays = dict(r=r, theta=theta, nodes=nodes, points=points, weights=weights,
                  radial_weights=wr, angular_basis=Q, angular_m=ms, angular_kind=kinds,
                  angular_derivative=d_theta, stiffness=K, L_matrix=L, grad_matrices=grad,
                  stress_functional=S, eigenvalues=eigenvalues, eigenvectors=eigenvectors,
                  mode_m=mode_m, mode_kind=mode_kind, mode_j=mode_j)
    for value in arrays.values():
        value.setflags(write=False)
    return DiskBasis(k=k, n_r=n_r, n_theta=n_theta, **arrays)


# ---------------------------------------------------------------------------
# Operations on nodal functions (all accept leading batch dimensions)
# ---------------------------------------------------------------------------
def _check(basis: DiskBasis, g: ArrayLike) -> NDArray[np.float64]:
    g = np.asarray(g, dtype=float)
    if g.shape[-1:] != (basis.n_nodes,):
        raise ShapeError(f"expected trailing dimension {basis.n_nodes}, got shape {g.shape}")
    return g


def inner(basis: DiskBasis, f: ArrayLike, g: ArrayLike) -> NDArray[np.float64] | float:
    """Weighted inner product ``int_B f g psi_inf dR``."""
    return _check(basis, f) * _check(basis, g) @ basis.weights


def mean(basis: DiskBasis, g: ArrayLike) -> NDArray[np.float64] | float:
    """Weighted mean ``int_B g psi_inf dR``."""
    return _check(basis, g) @ basis.weights


def dirichlet_form(basis: DiskBasis, f: ArrayLike, g: ArrayLike) -> NDArray[np.float64] | float:
    """Weighted Dirichlet form ``<grad_R f, grad_R g>_psi``."""
    f, g = _check(basis, f), _check(basis, g)
    return np.sum((f @ basis.stiffness) * g, axis=-1)


def gradient(basis: DiskBasis, g: ArrayLike) -> NDArray[np.float64]:
    """Cartesian gradient ``grad_R g`` at the nodes, shape ``(..., 2, n)``."""
    g = _check(basis, g)
    return np.stack([g @ basis.grad_matrices[0].T, g @ basis.grad_matrices[1].T], axis=-2)


def lp_norm(basis: DiskBasis, g: ArrayLike, p: float) -> NDArray[np.float64] | float:
    """Weighted ``L^p(psi_inf)`` norm by nodal quadrature."""
    g = _check(basis, g)
    return (np.abs(g) ** p @ basis.weights) ** (1.0 / p)


def apply_L(basis: DiskBasis, g: ArrayLike) -> NDArray[np.float64]:
    """Apply the Fokker--Planck operator ``L`` to nodal values ``g``.

    The weighted mean is removed first: ``L`` annihilates constants exactly,
    and doing so avoids amplifying the rounding of ``K 1`` by the small
    boundary weights.
    """
    g = _check(basis, g)
    return (g - (g @ basis.weights)[..., None]) @ basis.L_matrix.T


def apply_drag(basis: DiskBasis, g: ArrayLike, grad_u: ArrayLike) -> NDArray[np.float64]:
    """Co-rotational drag term ``-psi^{-1} div_R(sigma(u) R g psi_inf)``.

    Parameters
    ----------
    basis : DiskBasis
    g : array_like, shape (..., n)
        Nodal values.
    grad_u : array_like, shape (..., 2, 2)
        Velocity gradient(s) ``grad_u[i, j] = d u_i / d x_j`` (broadcast
        against the leading dimensions of ``g``).

    Returns
    -------
    ndarray, shape (..., n)

    Notes
    -----
    Because ``sigma = (grad_u - grad_u^T) / 2`` is antisymmetric, the
    divergence of ``sigma R psi_inf`` vanishes and the term reduces to
    ``-sigma R . grad_R g = sigma_12 * d g / d theta``; the spectral angular
    derivative is skew-adjoint in the weighted inner product, so the energy
    pairing vanishes to rounding.
    """
    g = _check(basis, g)
    grad_u = np.asarray(grad_u, dtype=float)
    if grad_u.shape[-2:] != (2, 2):
        raise ShapeError(f"grad_u must end in a (2, 2) block, got shape {grad_u.shape}")
    sigma12 = 0.5 * (grad_u[..., 0, 1] - grad_u[..., 1, 0])
    return np.asarray(sigma12)[..., None] * basis.rotate(g)


def stress(basis: DiskBasis, g: ArrayLike) -> NDArray[np.float64]:
    """Kramers stress ``tau_ij(g) = int_B 2k R_i R_j / (1 - |R|^2) g psi_inf dR``.

    Exact for the nodal interpolant of ``g``; returns shape ``(..., 2, 2)``
    and is symmetric by construction.
    """
    g = _check(basis, g)
    S = basis.stress_functional
    t11, t22, t12 = g @ S[0, 0], g @ S[1, 1], g @ S[0, 1]
    return np.stack([np.stack([t11, t12], -1), np.stack([t12, t22], -1)], -2)


def poincare_constant(basis: DiskBasis) -> float:
    """Best discrete Poincare constant ``1 / sqrt(lambda_1)`` on mean-zero functions."""
    lam1 = basis.eigenvalues[1]
    if not lam1 > 0:
        raise NumericalError(f"first nonzero eigenvalue is not positive: {lam1}")
    return float(1.0 / np.sqrt(lam1))
