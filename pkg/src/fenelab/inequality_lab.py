"""Randomised and adversarial verification of the configuration-space inequalities.

Checked inequalities (``g`` mean-zero, norms weighted by ``psi_inf``):

* Poincare: ``||g|| <= C ||grad_R g||``;
* stress interpolation: ``|tau(g)|^2 <= delta ||grad_R g||^2 + C_delta ||g||^2``;
* stress ``L^p`` bound: ``|tau(g)| <= C ||g||_{L^p}`` when ``(p - 1) k > 1``;
* Hardy-type stress bounds ``|tau(g)| <= C ||g||^alpha ||grad_R g||^beta`` with
  ``(alpha, beta) = ((k+1)/2, (1-k)/2)`` for ``0 < k < 1``, ``(2/3, 1/3)`` for
  ``k = 1`` and ``(1/2, 1/2)`` for every ``k``;
* the one-dimensional weighted inequalities behind the Hardy bounds.

Random samples come from three families: smooth random combinations of
low ``L``-eigenfunctions, resolvent samples ``(L + eta)^{-1}`` applied to the
Riesz representer of a stress component (the extremal direction for the
stress at a given Dirichlet energy, concentrated at the boundary for large
``eta``), and boundary-concentrated polynomials ``r^{2p}``.  Every trial has
its own seed derived from the master seed, so reports do not depend on how
trials are distributed over workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import beta as beta_fn

from .config_space import COS, SIN, DiskBasis, dirichlet_form, lp_norm, poincare_constant, stress
from .errors import AccuracyError, DivergentIntegralError, PreconditionError
from .parallel import WorkerPool

__all__ = [
    "FAMILY_NAMES",
    "InequalityReport",
    "check_poincare",
    "check_tau_hardy",
    "check_tau_interpolation",
    "check_tau_lp",
    "evaluate_ratios",
    "hardy_1d",
    "hardy_1d_k1",
    "hardy_1d_sweep",
    "hardy_exponents",
    "hardy_ratio",
    "holder_constant",
    "sample_functions",
]

FAMILY_NAMES = ("spectral", "resolvent", "polynomial")
# Trial i uses family _FAMILY_CYCLE[i % 5]: 60% smooth, 20% resolvent, 20% polynomial.
_FAMILY_CYCLE = (0, 0, 0, 1, 2)
_CHUNK = 50


@dataclass
class InequalityReport:
    """Outcome of a randomised inequality check.

    Attributes
    ----------
    inequality : str
        Identifier, e.g. ``"tau_hardy[graded]"``.
    k : float
        Weight exponent of the basis.
    trials : int
    worst_ratio : float
        Largest ratio LHS/RHS (constant stripped) over the trials, ``>= 0``.
    constant : float or None
        Constant the ratios are compared with (``None``: finiteness only).
    violated : bool
        ``worst_ratio`` exceeds ``constant`` (or is not finite).
    ratios : ndarray
        Per-trial ratios (``nan`` for excluded degenerate samples).
    families : list of str
        Sample family of each trial.
    archive : dict
        Extremal trial: index, family, ratio and nodal values.
    exponents : tuple of float, optional
    """

    inequality: str
    k: float
    trials: int
    worst_ratio: float
    constant: float | None
    violated: bool
    ratios: NDArray[np.float64]
    families: list[str]
    archive: dict = field(default_factory=dict)
    exponents: tuple[float, ...] | None = None

    @property
    def excluded(self) -> int:
        return int(np.count_nonzero(np.isnan(self.ratios)))

    def family_worst(self) -> dict[str, float]:
        """Worst ratio per sample family."""
        out = {}
        for name in FAMILY_NAMES:
            vals = np.array([r for r, f in zip(self.ratios, self.families) if f == name])
            vals = vals[~np.isnan(vals)]
            out[name] = float(vals.max()) if vals.size else float("nan")
        return out


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------
def _spectral_modes(basis: DiskBasis, m_max: int = 4, j_max: int = 6):
    M = min(m_max, basis.n_theta // 2 - 1)
    J = min(j_max, basis.n_r)
    modes = [(m, kind, j) for m in range(M + 1) for kind in (COS, SIN) for j in range(J)
             if not (m == 0 and kind == SIN) and not (m == 0 and j == 0)]
    idx = np.array([np.flatnonzero((basis.mode_m == m) & (basis.mode_kind == kind)
                                   & (basis.mode_j == j))[0] for m, kind, j in modes])
    return idx


def _sample_one(basis: DiskBasis, family: int, rng: np.random.Generator, spectral_idx,
                envelope: float) -> NDArray[np.float64]:
    V, lam, w = basis.eigenvectors, basis.eigenvalues, basis.weights
    if family == 0:
        coef = rng.standard_normal(spectral_idx.size) * (1.0 + lam[spectral_idx]) ** (-envelope)
        g = V[:, spectral_idx] @ coef
    elif family == 1:
        eta = 10.0 ** rng.uniform(-1.0, 3.0)
        phi, beta = rng.uniform(0.0, 2.0 * np.pi, size=2)
        e = (np.cos(phi) * np.eye(2)
             + np.sin(phi) * np.array([[np.cos(beta), np.sin(beta)], [np.sin(beta), -np.cos(beta)]]))
        functional = np.einsum("ab,abn->n", e, basis.stress_functional)
        coef = V.T @ functional  # = V^T W (representer)
        inv = np.where(lam > 1e-8, 1.0 / (lam + eta), 0.0)
        g = V @ (inv * coef)
    else:
        p_max = min(12, basis.n_r - 1)
        p = int(rng.integers(1, p_max + 1))
        r, theta = basis.nodes[:, 0], basis.nodes[:, 1]
        c = rng.standard_normal(3)
        g = r ** (2 * p) * (c[0] + c[1] * np.cos(2 * theta) + c[2] * np.sin(2 * theta))
    return g - g @ w


def sample_functions(basis: DiskBasis, trials: int, seed: int, envelope: float = 1.0,
                     workers: int = 1) -> tuple[NDArray[np.float64], list[str]]:
    """Draw mean-zero test functions.

    Parameters
    ----------
    basis : DiskBasis
    trials : int
    seed : int
        Master seed; trial ``i`` uses the ``i``-th spawned child seed.
    envelope : float
        Spectral decay: coefficient of the eigenfunction with eigenvalue
        ``lambda`` is ``N(0, 1) * (1 + lambda)^(-envelope)``.
    workers : int

    Returns
    -------
    samples : ndarray, shape (trials, n_nodes)
    families : list of str
    """
    children = np.random.SeedSequence(seed).spawn(trials)
    spectral_idx = _spectral_modes(basis)
    fam = [_FAMILY_CYCLE[i % len(_FAMILY_CYCLE)] for i in range(trials)]

    def chunk(bounds):
        lo, hi = bounds
        return np.stack([_sample_one(basis, fam[i], np.random.default_rng(children[i]),
                                     spectral_idx, envelope) for i in range(lo, hi)])

    bounds = [(i, min(i + _CHUNK, trials)) for i in range(0, trials, _CHUNK)]
    with WorkerPool(workers) as pool:
        parts = pool.map(chunk, bounds)
    samples = np.concatenate(parts) if parts else np.zeros((0, basis.n_nodes))
    return samples, [FAMILY_NAMES[f] for f in fam]


def _norms(basis: DiskBasis, samples: NDArray[np.float64]):
    g_norm = np.sqrt(np.maximum((samples * samples) @ basis.weights, 0.0))
    grad_norm = np.sqrt(np.maximum(dirichlet_form(basis, samples, samples), 0.0))
    tau = stress(basis, samples)
    tau_abs = np.sqrt(np.sum(tau * tau, axis=(-2, -1)))
    return g_norm, grad_norm, tau_abs


def _report(name, basis, ratios, families, samples, constant, exponents=None, slack=1e-9):
    finite = ratios[~np.isnan(ratios)]
    worst = float(finite.max()) if finite.size else 0.0
    worst = max(worst, 0.0)
    if constant is None:
        violated = not np.isfinite(worst)
    else:
        violated = bool(worst > constant * (1.0 + slack) or not np.isfinite(worst))
    archive = {}
    if finite.size:
        i = int(np.nanargmax(ratios))
        archive = {"index": i, "family": families[i], "ratio": float(ratios[i]),
                   "sample": samples[i].copy()}
    return InequalityReport(name, basis.k, len(ratios), worst, constant, violated, ratios,
                            families, archive, exponents)


def _safe_div(num, den):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.where(num > 0, np.inf, 0.0))
    return out


# ---------------------------------------------------------------------------
# Disk inequalities
# ---------------------------------------------------------------------------
def evaluate_ratios(basis: DiskBasis, samples: ArrayLike, inequality: str, delta: float | None = None,
                    p: float | None = None, exponents: tuple[float, float] | None = None
                    ) -> NDArray[np.float64]:
    """Constant-stripped ratios of one inequality for given samples.

    Parameters
    ----------
    basis : DiskBasis
    samples : array_like, shape (..., n_nodes)
        Mean-zero nodal functions.
    inequality : {"poincare", "tau_interpolation", "tau_lp", "tau_hardy"}
    delta, p, exponents :
        Parameter of the interpolation, ``L^p`` and Hardy forms respectively.

    Returns
    -------
    ndarray
        Ratios; a zero sample gives 0.
    """
    samples = np.asarray(samples, dtype=float)
    g_norm, grad_norm, tau_abs = _norms(basis, samples)
    if inequality == "poincare":
        return _safe_div(g_norm, grad_norm)
    if inequality == "tau_interpolation":
        if delta is None or not delta > 0:
            raise PreconditionError("delta must be positive")
        ratios = _safe_div(tau_abs ** 2 - delta * grad_norm ** 2, g_norm ** 2)
        return np.where(g_norm > 0, ratios, 0.0)
    if inequality == "tau_lp":
        if p is None:
            raise PreconditionError("p is required")
        return _safe_div(tau_abs, lp_norm(basis, samples, p))
    if inequality == "tau_hardy":
        if exponents is None:
            raise PreconditionError("exponents are required")
        a, b = exponents
        return _safe_div(tau_abs, g_norm ** a * grad_norm ** b)
    raise PreconditionError(f"unknown inequality {inequality!r}")


def check_poincare(basis: DiskBasis, trials: int, seed: int, workers: int = 1) -> InequalityReport:
    """Ratios ``||g|| / ||grad_R g||`` against the discrete Poincare constant."""
    samples, families = sample_functions(basis, trials, seed, workers=workers)
    ratios = evaluate_ratios(basis, samples, "poincare")
    return _report("poincare", basis, ratios, families, samples, poincare_constant(basis))


def check_tau_interpolation(basis: DiskBasis, delta: float, trials: int, seed: int,
                            workers: int = 1) -> InequalityReport:
    """Empirical ``C_delta = max (|tau(g)|^2 - delta ||grad_R g||^2) / ||g||^2``.

    A zero sample contributes ratio 0; the reported worst ratio is clipped
    below at 0.  ``violated`` means the empirical constant is not finite.
    """
    if not delta > 0:
        raise PreconditionError("delta must be positive")
    samples, families = sample_functions(basis, trials, seed, workers=workers)
    ratios = evaluate_ratios(basis, samples, "tau_interpolation", delta=delta)
    return _report(f"tau_interpolation[delta={delta:g}]", basis, ratios, families, samples, None)


def holder_constant(k: float, p: float) -> float:
    """Sharp Holder constant of ``|tau(g)| <= C ||g||_{L^p(psi_inf)}``.

    ``C = (int_B (2k |R|^2 / (1 - |R|^2))^{p'} psi_inf dR)^{1/p'}``, finite iff
    ``(p - 1) k > 1``.
    """
    if not (p - 1.0) * k > 1.0:
        raise PreconditionError(f"(p - 1) k = {(p - 1.0) * k:g} must exceed 1")
    q = p / (p - 1.0)
    value = (k + 1.0) * (2.0 * k) ** q * beta_fn(k - q + 1.0, q + 1.0)
    return float(value ** (1.0 / q))


def check_tau_lp(basis: DiskBasis, p: float, trials: int, seed: int,
                 constant: float | None = None, workers: int = 1) -> InequalityReport:
    """Ratios ``|tau(g)| / ||g||_{L^p}`` (requires ``(p - 1) k > 1`` and ``p >= 2``).

    The default constant is :func:`holder_constant`.
    """
    if p < 2:
        raise PreconditionError(f"p must be >= 2, got {p}")
    if not (p - 1.0) * basis.k > 1.0:
        raise PreconditionError(f"(p - 1) k = {(p - 1.0) * basis.k:g} must exceed 1")
    samples, families = sample_functions(basis, trials, seed, workers=workers)
    ratios = evaluate_ratios(basis, samples, "tau_lp", p=p)
    const = holder_constant(basis.k, p) if constant is None else constant
    return _report(f"tau_lp[p={p:g}]", basis, ratios, families, samples, const)


def hardy_exponents(k: float, form: str = "auto") -> tuple[float, float]:
    """Exponents ``(alpha, beta)`` of ``||g||^alpha ||grad_R g||^beta``.

    ``form="graded"`` needs ``0 < k <= 1``; ``"uniform"`` is ``(1/2, 1/2)``;
    ``"auto"`` picks the graded form when available.
    """
    if form == "auto":
        form = "graded" if k <= 1.0 else "uniform"
    if form == "uniform":
        return 0.5, 0.5
    if form != "graded":
        raise PreconditionError(f"unknown form {form!r}")
    if 0.0 < k < 1.0:
        return (k + 1.0) / 2.0, (1.0 - k) / 2.0
    if k == 1.0:
        return 2.0 / 3.0, 1.0 / 3.0
    raise PreconditionError(f"the graded form requires 0 < k <= 1, got k={k}")


def check_tau_hardy(basis: DiskBasis, k: float | None = None, trials: int = 1000, seed: int = 0,
                    form: str = "auto", constant: float | None = None,
                    workers: int = 1) -> InequalityReport:
    """Ratios ``|tau(g)| / (||g||^alpha ||grad_R g||^beta)`` (see :func:`hardy_exponents`)."""
    if k is not None and abs(k - basis.k) > 1e-14:
        raise PreconditionError(f"k={k} does not match the basis exponent {basis.k}")
    form_used = ("graded" if basis.k <= 1.0 else "uniform") if form == "auto" else form
    a, b = hardy_exponents(basis.k, form_used)
    samples, families = sample_functions(basis, trials, seed, workers=workers)
    ratios = evaluate_ratios(basis, samples, "tau_hardy", exponents=(a, b))
    return _report(f"tau_hardy[{form_used}]", basis, ratios, families, samples, constant, (a, b))


# ---------------------------------------------------------------------------
# One-dimensional inequalities
# ---------------------------------------------------------------------------
_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _derivative(psi: Callable, x: NDArray[np.float64]) -> NDArray[np.float64]:
    h = x * 1e-20
    try:
        val = np.asarray(psi(x + 1j * h))
        if np.iscomplexobj(val) and np.all(np.isfinite(val)):
            return val.imag / h
    except (TypeError, ValueError):
        pass
    step = x * 1e-5
    return (-psi(x + 2 * step) + 8 * psi(x + step) - 8 * psi(x - step) + psi(x - 2 * step)) / (12 * step)


def _graded_integral(f: Callable[[NDArray], NDArray], levels: int = 400) -> float:
    """``int_0^1 f`` on dyadic panels ``[2^{-j-1}, 2^{-j}]`` with tail extrapolation."""
    hi = 2.0 ** -np.arange(levels, dtype=float)
    lo = hi / 2.0
    mid, half = (hi + lo) / 2.0, (hi - lo) / 2.0
    x = mid[:, None] + half[:, None] * _GL_X[None, :]
    vals = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
    contrib = (vals * _GL_W[None, :]).sum(axis=1) * half
    total = float(contrib.sum())
    c1, c2 = abs(contrib[-1]), abs(contrib[-2])
    if c1 == 0.0:
        return total
    ratio = c1 / c2 if c2 > 0 else np.inf
    if not ratio < 1.0 - 1e-6:
        raise DivergentIntegralError("integral does not converge at x = 0", achieved=np.inf)
    tail = contrib[-1] * ratio / (1.0 - ratio)
    total += tail
    achieved = abs(tail) / max(abs(total), np.finfo(float).tiny)
    if achieved > 1e-2 or not np.isfinite(total):
        raise AccuracyError(f"graded quadrature tail too large ({achieved:.2e})", achieved=achieved)
    return float(total)


def hardy_1d(psi: Callable[[NDArray], NDArray], k: float,
             dpsi: Callable[[NDArray], NDArray] | None = None) -> tuple[float, tuple[float, float]]:
    """Terms of ``|int psi/x| <= C (int psi^2/x^k)^{(k+1)/4} (int x^k |(psi/x^k)'|^2)^{(1-k)/4}``.

    Parameters
    ----------
    psi : callable
        Function on ``(0, 1)`` (vectorised; complex arguments are used for
        complex-step differentiation when supported).
    k : float
        Exponent, ``0 < k < 1``.
    dpsi : callable, optional
        Derivative of ``psi``.

    Returns
    -------
    lhs : float
    factors : (float, float)
        ``(int psi^2 / x^k, int x^k |(psi / x^k)'|^2)``.

    Raises
    ------
    DivergentIntegralError, AccuracyError
        If an integral diverges or cannot be resolved.
    """
    if not 0.0 < k < 1.0:
        raise PreconditionError(f"k must lie in (0, 1), got {k}")
    return _hardy_terms(psi, k, dpsi)


def hardy_1d_k1(psi: Callable[[NDArray], NDArray], n: int,
                dpsi: Callable[[NDArray], NDArray] | None = None) -> tuple[float, tuple[float, float]]:
    """Terms of ``|int psi/x| <= C (int psi^2/x)^{n/(2n+1)} (int x |(psi/x)'|^2)^{1/(4n+2)}``.

    The integrals do not depend on ``n`` (only the exponents do, see
    :func:`hardy_ratio`); ``n >= 1`` is validated.
    """
    if n < 1:
        raise PreconditionError(f"n must be >= 1, got {n}")
    return _hardy_terms(psi, 1.0, dpsi)


def _quotient_derivative(psi, k, dpsi):
    """Derivative of ``psi / x^k`` (complex step on the quotient when possible)."""
    if dpsi is None:
        def q(x):
            return psi(x) / x ** k
        return lambda x: _derivative(q, x)
    return lambda x: np.asarray(dpsi(x), float) / x ** k - k * np.asarray(psi(x), float) / x ** (k + 1.0)


def _hardy_terms(psi, k, dpsi):
    dq = _quotient_derivative(psi, k, dpsi)

    def p(x):
        return np.asarray(psi(x), dtype=float)

    lhs = abs(_graded_integral(lambda x: p(x) / x))
    F = _graded_integral(lambda x: p(x) ** 2 / x ** k)
    G = _graded_integral(lambda x: x ** k * dq(x) ** 2)
    return lhs, (F, G)


def hardy_ratio(lhs: float, factors: tuple[float, float], exponents: tuple[float, float]) -> float:
    """``lhs / (F^a G^b)``; ``nan`` for degenerate samples (a zero factor with ``lhs > 0``)."""
    F, G = factors
    a, b = exponents
    if lhs == 0.0:
        return 0.0
    if F <= 0.0 or G <= 0.0:
        return float("nan")
    return float(lhs / (F ** a * G ** b))


def hardy_1d_sweep(k: float, powers: Sequence[float]) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """Ratios for ``psi = x^a`` over ``powers``; divergent samples are excluded (``nan``).

    Returns
    -------
    ratios : ndarray
    excluded : ndarray of bool
    """
    exps = ((k + 1.0) / 4.0, (1.0 - k) / 4.0)
    ratios, excluded = [], []
    for a in powers:
        try:
            lhs, factors = hardy_1d(lambda x, a=a: x ** a, k, dpsi=lambda x, a=a: a * x ** (a - 1.0))
            ratios.append(hardy_ratio(lhs, factors, exps))
            excluded.append(False)
        except AccuracyError:
            ratios.append(float("nan"))
            excluded.append(True)
    return np.array(ratios), np.array(excluded)
