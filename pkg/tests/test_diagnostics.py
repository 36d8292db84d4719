from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from fenelab.config_space import COS, build_basis
from fenelab.coupled import CoupledSolver
from fenelab.diagnostics import (CSV_COLUMNS, EnergyRecord, check_g_balance, check_tau_growth, energy,
                                 fit_decay, low_norm_terms, record_field_names)
from fenelab.errors import DomainError, PreconditionError
from fenelab.flow_solver import FlowState, make_grid
from fenelab.params import ModelParams

P = ModelParams(k=1.0)


@pytest.fixture(scope="module")
def solver():
    return CoupledSolver(build_basis(1.0, 12, 12), make_grid(16, 3.0), P)


def run_records(solver, state, dt, n):
    recs = []
    solver.run(state, dt, n, callback=lambda _i, s: recs.append(
        energy(s, solver.basis, P, previous=recs[-1] if recs else None)))
    return recs


def test_equilibrium_zero(solver):
    rec = energy(solver.equilibrium(), solver.basis, P)
    assert rec.E == 0.0 and rec.D == 0.0 and rec.tau_L1 == 0.0 and rec.min_one_plus_g == 1.0


@pytest.mark.parametrize("s", [0.0, 1.0, 2.0, 2.5])
def test_single_mode_velocity_energy(solver, s):
    grid = solver.grid
    x = grid.coordinates()
    kappa = 2 * math.pi / grid.box_length
    amp = 0.01
    u = np.stack([np.zeros(grid.shape), amp * np.sin(kappa * x[0])])
    st = solver.make_state(FlowState.from_physical(np.zeros(grid.shape), u, grid),
                           np.zeros(grid.shape + (solver.basis.n_nodes,)))
    rec = energy(st, solver.basis, P, s_disc=s)
    u_sq = amp ** 2 * grid.volume / 2.0
    assert rec.E == pytest.approx((1.0 + kappa ** (2 * s)) * u_sq, rel=1e-12)
    assert rec.u_L2 == pytest.approx(math.sqrt(u_sq), rel=1e-12)
    # transverse shear: D = mu |k|^2 (1 + |k|^{2s}) ||u||^2, div u = 0
    assert rec.D == pytest.approx(P.mu * kappa ** 2 * (1.0 + kappa ** (2 * s)) * u_sq, rel=1e-12)
    assert rec.gradu_Linf == pytest.approx(amp * kappa, rel=1e-12)


def test_dissipation_kernel(solver):
    grid = solver.grid
    zeros_g = np.zeros(grid.shape + (solver.basis.n_nodes,))
    const = FlowState.from_physical(np.full(grid.shape, 0.1), np.full((2,) + grid.shape, 0.2), grid)
    assert energy(solver.make_state(const, zeros_g), solver.basis, P).D == pytest.approx(0.0, abs=1e-25)
    v = solver.basis.eigenvector(1, COS, 0) * 0.01
    st = solver.make_state(const, np.broadcast_to(v, zeros_g.shape).copy())
    assert energy(st, solver.basis, P).D > 0


def test_low_norm_terms_consistent(solver):
    from fenelab.harness.initial import initial_condition

    st = initial_condition("random-band", 1e-3, 5, solver)
    e1, h1 = low_norm_terms(st.flow, st.g_field, solver.basis, P)
    rec = energy(st, solver.basis, P, s_disc=0.0)
    assert e1 * 2.0 == pytest.approx(rec.E, rel=1e-12)  # s = 0 multiplier is 2
    assert h1 > 0


def test_g_balance_equilibrium_and_nonuniform(solver):
    recs = run_records(solver, solver.equilibrium(), 0.01, 5)
    res = check_g_balance(recs, 0.01)
    assert res.max_abs == 0.0 and res.passed
    bad = recs[:2] + [replace(recs[2], t=recs[2].t + 0.003)]
    with pytest.raises(PreconditionError):
        check_g_balance(bad, 0.01)


def test_g_balance_pure_fokker_planck_first_order(solver):
    b = solver.basis
    prof = 0.05 * (b.eigenvector(1, COS, 0) + b.eigenvector(2, COS, 0))
    st = solver.make_state(FlowState.zeros(solver.grid),
                           np.broadcast_to(prof, solver.grid.shape + (b.n_nodes,)).copy())
    errs = []
    for dt in (0.005, 0.0025, 0.00125):
        errs.append(check_g_balance(run_records(solver, st, dt, int(round(0.05 / dt))), dt).max_abs)
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 0.9), orders


def test_tau_growth_zero_velocity(solver):
    b = solver.basis
    prof = 0.05 * b.eigenvector(2, COS, 0)
    st = solver.make_state(FlowState.zeros(solver.grid),
                           np.broadcast_to(prof, solver.grid.shape + (b.n_nodes,)).copy())
    recs = run_records(solver, st, 0.01, 60)
    tg = check_tau_growth(recs)
    assert tg.C == 0.0 and all(r.cum_gradu_Linf == 0.0 for r in recs)
    assert tg.tau_decreasing
    with pytest.raises(PreconditionError):
        check_tau_growth(recs[:10])


def test_cumulative_integral_nondecreasing(solver):
    from fenelab.harness.initial import initial_condition

    recs = run_records(solver, initial_condition("single-mode", 1e-3, 0, solver), 0.01, 20)
    cum = np.array([r.cum_gradu_Linf for r in recs])
    assert np.all(np.diff(cum) >= 0)
    assert all(r.E >= 0 and r.D >= 0 for r in recs)


def test_fit_decay_exact_models():
    t = np.linspace(0.0, 50.0, 200)
    slope, resid = fit_decay((t, 3.0 * (1.0 + t) ** -0.75))
    assert slope == pytest.approx(-0.75, abs=1e-6) and resid < 1e-10
    rate, _ = fit_decay((t, 2.0 * np.exp(-0.3 * t)), law="exponential", window=(10.0, 40.0))
    assert rate == pytest.approx(-0.3, abs=1e-10)


def test_fit_decay_errors():
    t = np.linspace(0, 1, 10)
    with pytest.raises(DomainError):
        fit_decay((t, np.where(t > 0.5, 0.0, 1.0)))
    with pytest.raises(PreconditionError):
        fit_decay((t, np.ones(10)), window=(0.5, 0.2))
    with pytest.raises(PreconditionError):
        fit_decay((t, np.ones(10)), law="power")


def test_record_schema():
    assert CSV_COLUMNS[0] == "t" and len(CSV_COLUMNS) == 13
    names = record_field_names()
    assert set(CSV_COLUMNS) <= set(names)
    rec = EnergyRecord(**{n: float(i) for i, n in enumerate(names)})
    assert rec.as_row() == [float(names.index(c)) for c in CSV_COLUMNS]
