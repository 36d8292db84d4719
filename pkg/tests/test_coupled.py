from __future__ import annotations

import math

import numpy as np
import pytest

from fenelab.config_space import COS, SIN, build_basis
from fenelab.coupled import CoupledSolver
from fenelab.errors import PositivityWarning, PreconditionError, ShapeError
from fenelab.flow_solver import FlowState, make_grid
from fenelab.harness.initial import initial_condition
from fenelab.params import ModelParams

P = ModelParams(k=1.0)


@pytest.fixture(scope="module")
def solver():
    return CoupledSolver(build_basis(1.0, 12, 12), make_grid(16), P)


def uniform_g(solver, profile):
    return np.broadcast_to(profile, solver.grid.shape + (solver.basis.n_nodes,)).copy()


def test_rejects_mismatched_k():
    with pytest.raises(PreconditionError):
        CoupledSolver(build_basis(2.0, 8, 8), make_grid(8), P)


def test_make_state_shape_check(solver):
    with pytest.raises(ShapeError):
        solver.make_state(FlowState.zeros(solver.grid), np.zeros((4, 4, 3)))


def test_g_rhs_eigenmode(solver):
    v = solver.basis.eigenvector(1, COS, 0)
    st = solver.make_state(FlowState.zeros(solver.grid), uniform_g(solver, v))
    rate = solver.g_rhs(st)
    assert np.abs(rate + solver.basis.lambda1 * st.g_field).max() <= 1e-9 * solver.basis.lambda1


def test_g_rhs_zero_and_x_independent(solver):
    assert np.all(solver.g_rhs(solver.equilibrium()) == 0)
    r = np.random.default_rng(1)
    prof = r.standard_normal(solver.basis.n_nodes)
    st = solver.make_state(FlowState.zeros(solver.grid), uniform_g(solver, prof - prof @ solver.basis.weights))
    rate = solver.g_rhs(st)
    assert np.abs(rate - rate[0, 0]).max() <= 1e-12 * np.abs(rate).max()


def test_equilibrium_unchanged(solver):
    st = solver.step(solver.equilibrium(), 0.01)
    assert np.all(st.g_field == 0) and np.all(st.flow.u_hat == 0) and np.all(st.flow.rho_hat == 0)
    assert st.time == pytest.approx(0.01)


def test_pure_fokker_planck_is_exact(solver):
    b = solver.basis
    prof = 0.1 * b.eigenvector(1, COS, 0) + 0.05 * b.eigenvector(2, SIN, 1) + 0.02 * b.eigenvector(0, COS, 2)
    st = solver.make_state(FlowState.zeros(solver.grid), uniform_g(solver, prof))
    T, dt = 0.2, 0.01
    st = solver.run(st, dt, int(round(T / dt)))
    exact = b.exponential(T) @ prof
    assert np.abs(st.g_field - exact).max() <= 1e-10 * np.abs(prof).max()
    assert np.abs(st.flow.u_hat).max() <= 1e-12


def test_small_data_invariants_and_monotone_decay(solver):
    st = initial_condition("random-band", 1e-3, 11, solver)
    w = solver.basis.weights
    norms = []
    for _ in range(40):
        st = solver.step(st, 0.01)
        assert np.abs(st.g_field @ w).max() <= 1e-10
        assert st.min_one_plus_g > 0
        norms.append(math.sqrt(np.mean((st.g_field ** 2) @ w)))
    assert np.all(np.diff(norms[5:]) < 0)


def test_positivity_warning(solver):
    v = solver.basis.eigenvector(1, COS, 0)
    g = uniform_g(solver, 5.0 * v / np.abs(v).max())
    st = solver.make_state(FlowState.zeros(solver.grid), g)
    with pytest.warns(PositivityWarning):
        solver.step(st, 1e-4)


def test_worker_count_does_not_change_step():
    b, grid = build_basis(1.0, 12, 12), make_grid(16)
    s1, s3 = CoupledSolver(b, grid, P, workers=1), CoupledSolver(b, grid, P, workers=3)
    st = initial_condition("random-band", 1e-3, 4, s1)
    a, c = st, st
    for _ in range(3):
        a, c = s1.step(a, 0.01), s3.step(c, 0.01)
    assert np.array_equal(a.g_field, c.g_field) and np.array_equal(a.flow.u_hat, c.flow.u_hat)


def test_picard_zero_data(solver):
    res = solver.picard_iterate(solver.equilibrium(), 0.05, 4, 0.01)
    assert all(d == 0.0 for d in res.distances)
    assert res.direct_distance == 0.0


def test_picard_contracts_and_matches_direct(solver):
    st = initial_condition("random-band", 1e-3, 2, solver)
    res = solver.picard_iterate(st, 0.05, 5, 0.01)
    d = res.distances
    counted = [d[i + 1] / d[i] for i in range(len(d) - 1) if d[i] > 1e-12 * d[0]]
    assert counted and max(counted) <= 0.5
    assert res.direct_distance <= 1e-6


def test_picard_preconditions(solver):
    st = initial_condition("single-mode", 1e-3, 0, solver)
    with pytest.raises(PreconditionError):
        solver.picard_iterate(st, 0.055, 2, 0.01)
    with pytest.raises(PreconditionError):
        solver.picard_iterate(st, 0.05, 2, 0.01, max_energy=1e-4)
    with pytest.raises(PreconditionError):
        solver.picard_iterate(st, 0.05, 2, 0.01, horizon=0.01)


def test_picard_divergence_reported(solver, monkeypatch):
    from fenelab.errors import ContractionFailure

    seq = iter([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    monkeypatch.setattr(solver, "trajectory_distance", lambda a, b: next(seq))
    st = initial_condition("single-mode", 1e-3, 0, solver)
    with pytest.raises(ContractionFailure) as info:
        solver.picard_iterate(st, 0.02, 6, 0.01, compare_direct=False)
    assert info.value.distances == [1.0, 2.0, 3.0, 4.0]
