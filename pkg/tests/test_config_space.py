from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fenelab.config_space import (COS, SIN, apply_drag, apply_L, build_basis, dirichlet_form,
                                  equilibrium_weight, gradient, inner, lp_norm, mean,
                                  normalization_constant, poincare_constant, stress)
from fenelab.errors import DomainError, PreconditionError, ShapeError

# First nonzero eigenvalue of L, frozen from a converged (n_r = 16, n_theta = 16) basis.
LAMBDA1 = {0.25: 3.94021048, 0.5: 4.48204636, 1.0: 5.54807442, 2.0: 7.63763782, 4.0: 11.7380387}


def test_normalization_constant_closed_form():
    for k in (0.5, 1.0, 2.0, 3.7):
        assert normalization_constant(k) == pytest.approx(math.pi / (k + 1.0), rel=1e-14)


def test_equilibrium_weight_center_value():
    assert equilibrium_weight(np.zeros(2), 1.0) == pytest.approx(2.0 / math.pi, rel=1e-14)
    assert equilibrium_weight(np.zeros(2), 1.0) == pytest.approx(0.63662, abs=1e-5)


def test_equilibrium_weight_vanishes_at_boundary():
    vals = [equilibrium_weight(np.array([1.0 - eps, 0.0]), 1.0) for eps in (1e-2, 1e-4, 1e-8)]
    assert vals[0] > vals[1] > vals[2] > 0
    assert vals[2] < 1e-7


def test_equilibrium_weight_outside_raises():
    with pytest.raises(DomainError):
        equilibrium_weight(np.array([0.6, 0.8]), 1.0)
    with pytest.raises(DomainError):
        equilibrium_weight(np.array([1.5, 0.0]), 2.0)


@pytest.mark.parametrize("k", [0.25, 0.5, 1.0, 2.0])
def test_quadrature_normalized_and_positive(basis_factory, k):
    b = basis_factory(k)
    assert np.all(b.weights >= 0)
    assert abs(b.weights.sum() - 1.0) <= 1e-12


def test_quadrature_moments(basis_k1):
    x, y = basis_k1.points[:, 0], basis_k1.points[:, 1]
    # int |R|^2 psi = 1/3 and int x^4 psi = 1/16 for k = 1
    assert (x * x + y * y) @ basis_k1.weights == pytest.approx(1.0 / 3.0, rel=1e-13)
    assert x ** 4 @ basis_k1.weights == pytest.approx(1.0 / 16.0, rel=1e-13)


@pytest.mark.parametrize("k", sorted(LAMBDA1))
def test_first_eigenvalue_frozen(basis_factory, k):
    assert basis_factory(k).lambda1 == pytest.approx(LAMBDA1[k], rel=1e-7)


def test_kernel_is_constants(basis_k1):
    lam = basis_k1.eigenvalues
    assert abs(lam[0]) <= 1e-10
    assert np.all(lam[1:] > 0)
    v0 = basis_k1.eigenvectors[:, 0]
    assert np.ptp(v0) <= 1e-10 * np.abs(v0).max()


def test_eigenvectors_weighted_orthonormal(basis_k1):
    V, w = basis_k1.eigenvectors, basis_k1.weights
    G = V.T @ (w[:, None] * V)
    assert np.abs(G - np.eye(V.shape[1])).max() <= 1e-10


def test_first_eigenvalue_self_convergence():
    a = build_basis(1.0, 16, 16).lambda1
    b = build_basis(1.0, 24, 16).lambda1
    assert abs(a - b) / b <= 1e-6


def test_L_annihilates_constants(basis_k1):
    assert np.abs(apply_L(basis_k1, np.full(basis_k1.n_nodes, 3.0))).max() <= 1e-12


def test_L_eigenvector(basis_k1):
    v = basis_k1.eigenvector(1, COS, 0)
    lam = basis_k1.lambda1
    # relative to the size of lambda * v (absolute nodal rounding is amplified by the stiffness)
    assert np.abs(apply_L(basis_k1, v) - lam * v).max() <= 1e-10 * lam * np.abs(v).max()


def test_L_positive_semidefinite(basis_k1, rng):
    g = rng.standard_normal((100, basis_k1.n_nodes))
    assert np.all(inner(basis_k1, apply_L(basis_k1, g), g) >= -1e-12)


def test_L_symmetric_and_dirichlet_identity(basis_k1, rng):
    f, g = rng.standard_normal((2, basis_k1.n_nodes))
    a = inner(basis_k1, apply_L(basis_k1, f), g)
    b = inner(basis_k1, f, apply_L(basis_k1, g))
    c = dirichlet_form(basis_k1, f, g)
    assert a == pytest.approx(b, rel=1e-10)
    assert a == pytest.approx(c, rel=1e-10)


def test_L_output_mean_zero(basis_k1):
    x, y = basis_k1.points.T
    g = np.exp(x) * np.cos(2 * y) + x ** 3 * y
    Lg = apply_L(basis_k1, g)
    assert abs(mean(basis_k1, Lg)) <= 1e-12 * max(1.0, np.abs(Lg).max())


def test_gradient_of_linear_functions(basis_k1):
    x, y = basis_k1.points.T
    gx = gradient(basis_k1, 2.0 * x - 3.0 * y)
    assert np.allclose(gx[0], 2.0, atol=1e-11)
    assert np.allclose(gx[1], -3.0, atol=1e-11)
    gq = gradient(basis_k1, x * y)
    assert np.allclose(gq[0], y, atol=1e-11) and np.allclose(gq[1], x, atol=1e-11)


def test_rotation_is_angular_derivative(basis_k1):
    x, y = basis_k1.points.T
    assert np.allclose(basis_k1.rotate(x), -y, atol=1e-12)
    assert np.allclose(basis_k1.rotate(y), x, atol=1e-12)


def test_exponential_semigroup(basis_k1, rng):
    E1, E2 = basis_k1.exponential(0.05), basis_k1.exponential(0.1)
    assert np.abs(E1 @ E1 - E2).max() <= 1e-12
    one = np.ones(basis_k1.n_nodes)
    assert np.abs(E1 @ one - one).max() <= 1e-12
    v = basis_k1.eigenvector(2, SIN, 0)
    lam = basis_k1.eigenvalues[np.flatnonzero((basis_k1.mode_m == 2) & (basis_k1.mode_kind == SIN)
                                              & (basis_k1.mode_j == 0))[0]]
    assert np.abs(E1 @ v - math.exp(-0.05 * lam) * v).max() <= 1e-12


def test_drag_of_constant_vanishes(basis_k1, rng):
    for _ in range(10):
        out = apply_drag(basis_k1, np.ones(basis_k1.n_nodes), rng.standard_normal((2, 2)))
        assert np.abs(out).max() <= 1e-11


def test_drag_zero_gradient(basis_k1, rng):
    out = apply_drag(basis_k1, rng.standard_normal(basis_k1.n_nodes), np.zeros((2, 2)))
    assert np.all(out == 0.0)


def test_drag_rejects_bad_shape(basis_k1):
    with pytest.raises(ShapeError):
        apply_drag(basis_k1, np.ones(basis_k1.n_nodes), np.zeros((3, 2)))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), k=st.sampled_from([0.5, 1.0, 2.0]))
def test_drag_energy_pairing_vanishes(basis_factory, seed, k):
    b = basis_factory(k)
    r = np.random.default_rng(seed)
    g = r.standard_normal(b.n_nodes)
    pairing = inner(b, apply_drag(b, g, r.standard_normal((2, 2)) * 10.0), g)
    assert abs(pairing) <= 1e-11 * inner(b, g, g) * 10.0


@pytest.mark.parametrize("k", [0.5, 1.0, 2.0])
def test_stress_of_constant_is_identity(basis_factory, k):
    b = basis_factory(k)
    for c in (1.0, -2.5):
        assert np.abs(stress(b, np.full(b.n_nodes, c)) - c * np.eye(2)).max() <= 1e-10


def test_stress_zero_and_odd(basis_k1, rng):
    assert np.all(stress(basis_k1, np.zeros(basis_k1.n_nodes)) == 0.0)
    x, y = basis_k1.points.T
    odd = x + x * y * y - 2 * y ** 3 + np.sin(x) * np.cos(y)
    assert np.abs(stress(basis_k1, odd)).max() <= 1e-11


def test_stress_quadratic_oracle(basis_k1):
    x, y = basis_k1.points.T
    t = stress(basis_k1, x * x - y * y)
    assert np.allclose(t, np.diag([1.0 / 3.0, -1.0 / 3.0]), atol=1e-12)
    t = stress(basis_k1, x * y)
    assert np.allclose(t, [[0.0, 1.0 / 6.0], [1.0 / 6.0, 0.0]], atol=1e-12)


def test_stress_batched_shape(basis_k1, rng):
    g = rng.standard_normal((3, 4, basis_k1.n_nodes))
    t = stress(basis_k1, g)
    assert t.shape == (3, 4, 2, 2)
    assert np.allclose(t[1, 2], stress(basis_k1, g[1, 2]))


def test_poincare_constant_convergence():
    vals = [poincare_constant(build_basis(1.0, n, 16)) for n in (16, 24, 32)]
    assert max(vals) - min(vals) <= 1e-5 * vals[0]
    assert vals[0] == pytest.approx(1.0 / math.sqrt(LAMBDA1[1.0]), rel=1e-7)


def test_poincare_inequality_random(basis_k1, rng):
    C = poincare_constant(basis_k1)
    g = rng.standard_normal((1000, basis_k1.n_nodes))
    g -= mean(basis_k1, g)[:, None]
    lhs = np.sqrt(inner(basis_k1, g, g))
    rhs = C * np.sqrt(dirichlet_form(basis_k1, g, g))
    assert np.all(lhs <= rhs + 1e-10)


def test_lp_norm_constant(basis_k1):
    assert lp_norm(basis_k1, np.full(basis_k1.n_nodes, -2.0), 3.0) == pytest.approx(2.0, rel=1e-13)


def test_from_function_and_basis_readonly(basis_k1):
    f = basis_k1.from_function(lambda x, y: x * y)
    assert np.allclose(f, basis_k1.points[:, 0] * basis_k1.points[:, 1])
    with pytest.raises(ValueError):
        basis_k1.weights[0] = 1.0


@pytest.mark.parametrize("args", [(0.0, 16, 16), (1.0, 2, 16), (1.0, 16, 7), (1.0, 16, 2)])
def test_build_basis_rejects_invalid(args):
    with pytest.raises(PreconditionError):
        build_basis(*args)
