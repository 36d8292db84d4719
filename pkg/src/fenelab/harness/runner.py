"""Experiment orchestration: executes a :class:`RunConfig` and writes its artifacts.

Artifacts (in ``config.output.directory``):

* ``effective-config.ini`` -- the resolved configuration including defaults;
* ``report.txt`` -- fitted quantities and one verdict line per enabled check;
* mode-specific CSV files (``series.csv`` for ``simulate``);
* optional ``.svg`` plots derived from the CSV files.

Every CSV is written with full-precision (``%.17g``) numbers and contains no
timing information, so identical configurations produce identical bytes
regardless of the worker count.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..config_space import build_basis, poincare_constant
from ..coupled import CoupledSolver
from ..diagnostics import CSV_COLUMNS, EnergyRecord, check_g_balance, check_tau_growth, energy, fit_decay
from ..errors import PositivityWarning, PreconditionError
from ..flow_solver import make_grid
from ..inequality_lab import (InequalityReport, check_poincare, check_tau_hardy, check_tau_interpolation,
                              check_tau_lp, hardy_1d, hardy_1d_k1, hardy_1d_sweep, hardy_ratio)
from ..linear_spectral import assemble_A, decay_norm, eigen_A
from ..parallel import WorkerPool
from .config import RunConfig
from .initial import initial_condition

__all__ = ["Check", "RunOutcome", "run", "write_csv"]

logger = logging.getLogger(__name__)

#: Reference ratio of the one-dimensional example ``psi = x``, ``k = 1/2``.
HARDY_1D_REFERENCE = 1.538


@dataclass(frozen=True)
class Check:
    """Verdict of one enabled check (``passed=None``: not applicable)."""

    name: str
    passed: bool | None
    detail: str

    @property
    def label(self) -> str:
        return {True: "PASS", False: "FAIL", None: "N/A "}[self.passed]


@dataclass
class RunOutcome:
    """Result of :func:`run`."""

    mode: str
    directory: Path
    checks: list[Check] = field(default_factory=list)
    fits: dict[str, float] = field(default_factory=dict)
    files: list[Path] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed is not False for c in self.checks)

    @property
    def exit_status(self) -> int:
        return 0 if self.passed else 1


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    """Write an RFC-4180-style CSV with a header row and ``%.17g`` floats."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _write_report(outcome: RunOutcome, config: RunConfig) -> Path:
    lines = ["fenelab run report", f"mode: {config.mode}", ""]
    if outcome.fits:
        lines.append("[fits]")
        lines += [f"{k} = {_fmt(v)}" for k, v in outcome.fits.items()]
        lines.append("")
    lines.append("[checks]")
    lines += [f"{c.label}  {c.name}: {c.detail}" for c in outcome.checks]
    lines += ["", f"overall: {'PASS' if outcome.passed else 'FAIL'}", ""]
    path = outcome.directory / "report.txt"
    path.write_text("\n".join(lines), encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------
def _coupled_setup(config: RunConfig):
    params = config.model
    basis = build_basis(params.k, config.grid.n_r, config.grid.n_theta)
    grid = make_grid(config.grid.n_x, config.grid.box_length, d=2)
    solver = CoupledSolver(basis, grid, params, cfl=config.time.cfl, workers=config.workers)
    state = initial_condition(config.initial.family, config.initial.epsilon, config.initial.seed,
                              solver, s_disc=config.output.s_disc)
    return basis, solver, state


def _simulate(config: RunConfig, outcome: RunOutcome) -> None:
    basis, solver, state = _coupled_setup(config)
    params, tc, ck = config.model, config.time, config.checks
    records: list[EnergyRecord] = []

    def record(_n, st):
        records.append(energy(st, basis, params, config.output.s_disc,
                              previous=records[-1] if records else None))

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", PositivityWarning)
        solver.run(state, tc.dt, tc.n_steps, callback=record)
    positivity_warnings = [w for w in caught if issubclass(w.category, PositivityWarning)]
    solver.pool.close()

    rows = [r.as_row() for i, r in enumerate(records)
            if i % tc.output_stride == 0 or i == len(records) - 1]
    outcome.files.append(write_csv(outcome.directory / "series.csv", CSV_COLUMNS, rows))
    outcome.fits["lambda1"] = basis.lambda1
    outcome.fits["E0"] = records[0].E

    if config.initial.epsilon == 0.0:
        worst = max(max(abs(r.E), abs(r.D), r.g_L2L2, r.rho_L2, r.u_L2, r.tau_L2) for r in records)
        outcome.checks.append(Check("equilibrium", worst == 0.0,
                                    f"max norm over the run = {worst:.3e}"))
        for name in ("decay", "tau_growth", "balance"):
            outcome.checks.append(Check(name, None, "zero data: nothing to fit"))
        return

    if ck.invariants:
        mean_err = max(r.g_mean_max for r in records)
        min_g = min(r.min_one_plus_g for r in records)
        min_rho = min(r.min_one_plus_rho for r in records)
        outcome.checks.append(Check("mean_zero", mean_err <= 1e-12,
                                    f"max |int g psi dR| = {mean_err:.3e} (tolerance 1e-12)"))
        outcome.checks.append(Check("positivity_g", min_g > 0 and not positivity_warnings,
                                    f"min(1 + g) = {min_g:.6g}"))
        outcome.checks.append(Check("positivity_rho", min_rho > 0, f"min(1 + rho) = {min_rho:.6g}"))
    if ck.balance:
        bal = check_g_balance(records, tc.dt, ck.balance_tolerance)
        outcome.fits["g_balance_max_residual"] = bal.max_abs
        outcome.checks.append(Check("g_balance", bal.passed,
                                    f"max residual {bal.max_abs:.3e}, flagged steps "
                                    f"{int(np.count_nonzero(bal.flags))} (tolerance {ck.balance_tolerance:g})"))
    if ck.decay:
        start = ck.decay_window_start if ck.decay_window_start >= 0 else 0.5 * tc.t_end
        slope, resid = fit_decay(records, window=(start, tc.t_end), law="exponential")
        rate = -slope
        outcome.fits["g_decay_rate"] = rate
        outcome.fits["g_decay_fit_rms"] = resid
        outcome.checks.append(Check("g_exponential_decay", rate >= ck.decay_fraction * basis.lambda1,
                                    f"rate {rate:.6g} vs {ck.decay_fraction:g} * lambda1 = "
                                    f"{ck.decay_fraction * basis.lambda1:.6g} on [{start:g}, {tc.t_end:g}]"))
    if ck.tau_growth:
        try:
            tg = check_tau_growth(records, box_volume=solver.grid.volume)
        except PreconditionError as exc:
            outcome.checks.append(Check("tau_growth", False, str(exc)))
        else:
            outcome.fits.update({"sqrt_t_constant": tg.C, "sqrt_t_constant_sup": tg.C_sup,
                                 "sqrt_t_correlation": tg.correlation, "tau_interpolation_constant": tg.C_prime})
            ok = tg.correlation >= ck.tau_correlation and tg.tau_decreasing
            outcome.checks.append(Check("tau_growth", ok,
                                        f"correlation {tg.correlation:.6f} (>= {ck.tau_correlation:g}), "
                                        f"||tau||_L1 decreasing after transients: {tg.tau_decreasing}"))
    if config.output.plots:
        from .plotting import plot_series
        outcome.files += plot_series(outcome.directory / "series.csv", outcome.directory)


# ---------------------------------------------------------------------------
# picard
# ---------------------------------------------------------------------------
def _picard(config: RunConfig, outcome: RunOutcome) -> None:
    _, solver, state = _coupled_setup(config)
    pc = config.picard
    result = solver.picard_iterate(state, pc.horizon, pc.iterations, config.time.dt, floor=pc.floor)
    solver.pool.close()
    d = result.distances
    rows = [[i + 1, d[i], (d[i] / d[i - 1]) if i > 0 and d[i - 1] > 0 else float("nan")]
            for i in range(len(d))]
    outcome.files.append(write_csv(outcome.directory / "picard.csv", ("iterate", "distance", "ratio"), rows))
    outcome.fits["direct_distance"] = result.direct_distance
    # ratio delta_{n+1}/delta_n counts while delta_n is above the round-off floor
    counted = [d[i + 1] / d[i] for i in range(len(d) - 1) if d[0] > 0 and d[i] > pc.floor * d[0]]
    if counted:
        worst = max(counted)
        outcome.fits["worst_contraction_ratio"] = worst
        outcome.checks.append(Check("picard_contraction", worst <= pc.contraction,
                                    f"worst ratio {worst:.3e} over {len(counted)} ratios (<= {pc.contraction:g})"))
    else:
        outcome.checks.append(Check("picard_contraction", None, "no distance above the round-off floor"))
    outcome.checks.append(Check("picard_limit", result.direct_distance <= pc.direct_tolerance,
                                f"distance to direct solver {result.direct_distance:.3e} "
                                f"(<= {pc.direct_tolerance:g})"))
    if config.output.plots:
        from .plotting import plot_picard
        outcome.files += plot_picard(outcome.directory / "picard.csv", outcome.directory)


# ---------------------------------------------------------------------------
# linear-decay
# ---------------------------------------------------------------------------
def _linear_decay(config: RunConfig, outcome: RunOutcome) -> None:
    lc, params = config.linear, config.model
    times = (np.geomspace(lc.t_min, lc.t_max, lc.n_times) if lc.t_min > 0
             else np.linspace(lc.t_min, lc.t_max, lc.n_times))
    with WorkerPool(config.workers, chunk=1) as pool:
        values = pool.map(lambda t: decay_norm(float(t), params, rtol=lc.rtol), list(times))
    values = np.array(values)
    outcome.files.append(write_csv(outcome.directory / "linear_decay.csv", ("t", "norm"),
                                   list(zip(times, values))))
    slope, resid = fit_decay((times, values), law="algebraic")
    target = -params.d / 4.0
    outcome.fits.update({"slope": slope, "target_slope": target, "fit_rms": resid})
    outcome.checks.append(Check("linear_decay_slope", abs(slope - target) <= lc.slope_tolerance,
                                f"d={params.d}: slope {slope:.5f} vs {target:g} +- {lc.slope_tolerance:g}"))
    if config.output.plots:
        from .plotting import plot_linear
        outcome.files += plot_linear(outcome.directory / "linear_decay.csv", outcome.directory)


# ---------------------------------------------------------------------------
# spectrum
# ---------------------------------------------------------------------------
def _spectrum(config: RunConfig, outcome: RunOutcome) -> None:
    params, gc = config.model, config.grid
    basis = build_basis(params.k, gc.n_r, gc.n_theta)
    rows = [[i, int(basis.mode_m[i]), "cos" if basis.mode_kind[i] == 0 else "sin", int(basis.mode_j[i]),
             basis.eigenvalues[i]] for i in range(basis.n_nodes)]
    outcome.files.append(write_csv(outcome.directory / "spectrum.csv",
                                   ("index", "m", "kind", "j", "eigenvalue"), rows))
    fine = build_basis(params.k, 2 * gc.n_r, gc.n_theta)
    rel = abs(fine.lambda1 - basis.lambda1) / fine.lambda1
    outcome.fits.update({"lambda1": basis.lambda1, "poincare_constant": poincare_constant(basis),
                         "lambda1_refined": fine.lambda1})
    outcome.checks.append(Check("kernel_constants", abs(basis.eigenvalues[0]) <= 1e-10,
                                f"lambda0 = {basis.eigenvalues[0]:.3e}"))
    outcome.checks.append(Check("lambda1_converged", rel <= 1e-8,
                                f"relative change under radial doubling {rel:.3e}"))

    radii = np.geomspace(1e-2, 1e2, 201)
    xi = np.zeros((radii.size, params.d))
    xi[:, 0] = radii
    lam0, lam_p, lam_m = eigen_A(xi, params)
    ref = np.linalg.eigvals(assemble_A(xi, params))
    worst = 0.0
    for i in range(radii.size):
        closed = np.array([lam0[i]] * (params.d - 1) + [lam_p[i], lam_m[i]])
        gap = np.abs(closed[:, None] - ref[i][None, :])
        dist = max(gap.min(axis=0).max(), gap.min(axis=1).max())
        worst = max(worst, float(dist / max(1.0, np.abs(ref[i]).max())))
    sym_rows = [[radii[i], lam0[i].real, lam_p[i].real, lam_p[i].imag, lam_m[i].real, lam_m[i].imag]
                for i in range(radii.size)]
    outcome.files.append(write_csv(outcome.directory / "symbol.csv",
                                   ("xi", "lambda0", "lambda_plus_re", "lambda_plus_im",
                                    "lambda_minus_re", "lambda_minus_im"), sym_rows))
    outcome.checks.append(Check("symbol_eigenvalues", worst <= 1e-10,
                                f"closed form vs eigen-solver, max relative deviation {worst:.3e}"))


# ---------------------------------------------------------------------------
# inequalities
# ---------------------------------------------------------------------------
def _suites(basis, iq, seed, workers) -> list[InequalityReport]:
    k = basis.k
    reps = [check_poincare(basis, iq.trials, seed, workers=workers),
            check_tau_interpolation(basis, iq.delta, iq.trials, seed, workers=workers),
            check_tau_interpolation(basis, iq.delta / 10.0, iq.trials, seed, workers=workers)]
    if (iq.p - 1.0) * k > 1.0 and iq.p >= 2:
        reps.append(check_tau_lp(basis, iq.p, iq.trials, seed, workers=workers))
    if k <= 1.0:
        reps.append(check_tau_hardy(basis, trials=iq.trials, seed=seed, form="graded", workers=workers))
    reps.append(check_tau_hardy(basis, trials=iq.trials, seed=seed, form="uniform", workers=workers))
    return reps


def _inequalities(config: RunConfig, outcome: RunOutcome) -> None:
    iq, gc, seed = config.inequalities, config.grid, config.initial.seed
    rows = []
    for k in iq.k_values:
        basis = build_basis(k, gc.n_r, gc.n_theta)
        reports = _suites(basis, iq, seed, config.workers)
        fine_reports = (_suites(build_basis(k, 2 * gc.n_r, 2 * gc.n_theta), iq, seed, config.workers)
                        if iq.resolution_check else [None] * len(reports))
        for rep, fine in zip(reports, fine_reports):
            tag = f"{rep.inequality} k={k:g}"
            outcome.fits[f"worst {tag}"] = rep.worst_ratio
            limit = "finite" if rep.constant is None else f"<= {rep.constant:.6g}"
            outcome.checks.append(Check(f"no_violation {tag}", not rep.violated,
                                        f"worst ratio {rep.worst_ratio:.6g} ({limit}); extremal family "
                                        f"{rep.archive.get('family', '-')}"))
            if fine is not None:
                change = abs(fine.worst_ratio - rep.worst_ratio) / max(abs(rep.worst_ratio), 1e-300)
                outcome.checks.append(Check(f"resolution_stable {tag}", change <= iq.stability,
                                            f"relative change under doubling {change:.3e} (<= {iq.stability:g})"))
            for i, (ratio, fam) in enumerate(zip(rep.ratios, rep.families)):
                rows.append([rep.inequality, k, i, fam, ratio])
        interp = [r for r in reports if r.inequality.startswith("tau_interpolation")]
        outcome.checks.append(Check(f"interpolation_monotone k={k:g}",
                                    interp[1].worst_ratio >= interp[0].worst_ratio,
                                    f"C(delta/10) = {interp[1].worst_ratio:.6g} >= "
                                    f"C(delta) = {interp[0].worst_ratio:.6g}"))
    outcome.files.append(write_csv(outcome.directory / "inequalities.csv",
                                   ("inequality", "k", "trial", "family", "ratio"), rows))
    _inequalities_1d(outcome)


def _inequalities_1d(outcome: RunOutcome) -> None:
    lhs, factors = hardy_1d(lambda x: x, 0.5)
    ratio = hardy_ratio(lhs, factors, (0.375, 0.125))
    outcome.fits["hardy_1d ratio psi=x k=0.5"] = ratio
    outcome.checks.append(Check("hardy_1d_oracle", abs(ratio - HARDY_1D_REFERENCE) <= 1e-3,
                                f"ratio {ratio:.6f} vs {HARDY_1D_REFERENCE}"))
    powers = np.linspace(0.6, 3.0, 49)
    ratios, excluded = hardy_1d_sweep(0.5, powers)
    worst = float(np.nanmax(ratios))
    outcome.fits["hardy_1d sweep worst"] = worst
    outcome.checks.append(Check("hardy_1d_sweep", bool(np.isfinite(worst)),
                                f"worst ratio {worst:.6f} over {int(np.count_nonzero(~excluded))} powers "
                                f"({int(np.count_nonzero(excluded))} divergent samples excluded)"))
    worst_k1 = 0.0
    for n in (1, 2, 3):
        lhs, factors = hardy_1d_k1(lambda x: x ** 1.5, n)
        r = hardy_ratio(lhs, factors, (n / (2 * n + 1.0), 1.0 / (4 * n + 2.0)))
        outcome.fits[f"hardy_1d_k1 ratio psi=x^1.5 n={n}"] = r
        worst_k1 = max(worst_k1, r)
    outcome.checks.append(Check("hardy_1d_k1", bool(np.isfinite(worst_k1)),
                                f"worst ratio {worst_k1:.6f} for n = 1, 2, 3"))


_MODES: dict[str, Callable[[RunConfig, RunOutcome], None]] = {
    "simulate": _simulate,
    "picard": _picard,
    "linear-decay": _linear_decay,
    "spectrum": _spectrum,
    "inequalities": _inequalities,
}


def run(config: RunConfig) -> RunOutcome:
    """Execute ``config`` and write its artifacts.

    Module errors propagate (the CLI turns them into a nonzero exit status).

    Returns
    -------
    RunOutcome
        ``exit_status`` is 0 iff every enabled check passed.
    """
    directory = Path(config.output.directory)
    directory.mkdir(parents=True, exist_ok=True)
    outcome = RunOutcome(config.mode, directory)
    cfg_path = directory / "effective-config.ini"
    cfg_path.write_text(config.to_text(), encoding="utf-8")
    outcome.files.append(cfg_path)
    logger.info("running mode %s into %s", config.mode, directory)
    _MODES[config.mode](config, outcome)
    outcome.files.append(_write_report(outcome, config))
    for c in outcome.checks:
        logger.info("%s %s: %s", c.label, c.name, c.detail)
    return outcome
