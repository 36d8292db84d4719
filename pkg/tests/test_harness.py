from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest

from fenelab.config_space import build_basis
from fenelab.coupled import CoupledSolver
from fenelab.diagnostics import CSV_COLUMNS, energy
from fenelab.errors import ConfigError, ConstructionError, PreconditionError
from fenelab.flow_solver import make_grid
from fenelab.harness import initial_condition, parse_config, run
from fenelab.harness.cli import main
from fenelab.params import ModelParams

SMALL = """
[grid]
n_x = 8
n_r = 8
n_theta = 8
[time]
dt = 0.01
t_end = 0.05
"""


def test_minimal_config_defaults():
    cfg = parse_config("[run]\nmode = simulate\n")
    assert cfg.mode == "simulate" and cfg.workers == 1
    assert cfg.model == ModelParams()
    assert cfg.grid.n_x == 32 and cfg.grid.n_r == 16 and cfg.time.dt == 0.01
    assert cfg.initial.family == "random-band" and cfg.initial.epsilon == 1e-3
    again = parse_config(cfg.to_text())
    assert again == cfg


def test_mode_from_command_line():
    assert parse_config("", mode="spectrum").mode == "spectrum"
    with pytest.raises(ConfigError, match="missing required key"):
        parse_config("")
    with pytest.raises(ConfigError, match="conflicts"):
        parse_config("[run]\nmode = picard\n", mode="simulate")
    with pytest.raises(ConfigError, match="unknown mode"):
        parse_config("[run]\nmode = dance\n")


def test_gamma_below_one_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config("[run]\nmode = simulate\n\n[model]\ngamma = 0.5\n")
    assert info.value.line == 5 and info.value.key == "gamma"


def test_duplicate_key_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_config("[run]\nmode = simulate\n[grid]\nn_x = 16\nn_x = 32\n")
    assert info.value.line == 5 and info.value.key == "n_x"
    assert "line 5" in str(info.value)


@pytest.mark.parametrize("text,key,line", [
    ("[run]\nmode = simulate\n[grid]\nn_y = 3\n", "n_y", 4),
    ("[run]\nmode = simulate\n[physics]\nx = 1\n", "physics", 3),
    ("[run]\nmode = simulate\n[time]\ndt = fast\n", "dt", 4),
    ("[run]\nmode = simulate\n[time]\ndt = 0.03\nt_end = 0.1\n", "t_end", 5),
    ("[run]\nmode = simulate\n[initial]\nfamily = plane-wave\n", "family", 4),
    ("[run]\nmode = simulate\n[grid]\nn_theta = 7\n", "n_theta", 4),
    ("[run]\nmode = simulate\n[output]\nplots = maybe\n", "plots", 4),
    ("[run]\nmode = simulate\nthreads = 2\n", "threads", 3),
])
def test_invalid_entries_name_line_and_key(text, key, line):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == key and info.value.line == line


def test_overrides():
    cfg = parse_config("[run]\nmode = simulate\n").with_overrides(out="x", workers=3, seed=9)
    assert cfg.output.directory == "x" and cfg.workers == 3 and cfg.initial.seed == 9
    with pytest.raises(ConfigError):
        cfg.with_overrides(workers=0)


@pytest.fixture(scope="module")
def small_solver():
    return CoupledSolver(build_basis(1.0, 10, 10), make_grid(16), ModelParams())


def test_initial_zero_is_equilibrium(small_solver):
    st = initial_condition("single-mode", 0.0, 0, small_solver)
    assert np.all(st.g_field == 0) and np.all(st.flow.u_hat == 0)


@pytest.mark.parametrize("family", ["single-mode", "random-band", "boundary-probe"])
def test_initial_families_normalised(small_solver, family):
    for seed in (0, 1):
        st = initial_condition(family, 1e-3, seed, small_solver)
        E = energy(st, small_solver.basis, small_solver.params).E
        assert E == pytest.approx(1e-3, rel=1e-10)
        assert np.abs(st.g_field @ small_solver.basis.weights).max() <= 1e-14
        assert st.min_one_plus_g > 0


def test_initial_errors(small_solver):
    with pytest.raises(ConstructionError):
        initial_condition("boundary-probe", 1e3, 0, small_solver)
    with pytest.raises(PreconditionError):
        initial_condition("vortex", 1e-3, 0, small_solver)
    with pytest.raises(PreconditionError):
        initial_condition("single-mode", -1.0, 0, small_solver)


def test_simulate_zero_amplitude(tmp_path):
    cfg = parse_config(SMALL + "[initial]\nepsilon = 0\n[output]\nplots = false\n", mode="simulate")
    cfg = cfg.with_overrides(out=str(tmp_path))
    outcome = run(cfg)
    assert outcome.exit_status == 0
    lines = (tmp_path / "series.csv").read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS) and len(lines) == 7
    for line in lines[1:]:
        vals = [float(v) for v in line.split(",")]
        assert all(vals[i] == 0.0 for i in range(1, 11))
    assert (tmp_path / "effective-config.ini").exists()
    assert "overall: PASS" in (tmp_path / "report.txt").read_text()


def test_simulate_small_run_with_plots(tmp_path):
    cfg = parse_config(SMALL + "[checks]\ndecay = false\ntau_growth = false\n", mode="simulate")
    outcome = run(cfg.with_overrides(out=str(tmp_path)))
    names = {c.name: c.passed for c in outcome.checks}
    assert names["mean_zero"] and names["positivity_g"] and names["g_balance"]
    assert (tmp_path / "decay_loglinear.svg").read_text().lstrip().startswith("<?xml")
    assert outcome.exit_status == 0


def test_inequalities_deterministic_bytes(tmp_path):
    text = "[grid]\nn_r = 8\nn_theta = 8\n[inequalities]\ntrials = 40\nk_values = 1.0\nresolution_check = false\n"
    for sub, workers in (("a", 1), ("b", 1), ("c", 3)):
        assert main(["inequalities", "--config", _write(tmp_path, text), "--out", str(tmp_path / sub),
                     "--workers", str(workers), "--seed", "5"]) == 0
    a = (tmp_path / "a" / "inequalities.csv").read_bytes()
    assert a == (tmp_path / "b" / "inequalities.csv").read_bytes()
    assert a == (tmp_path / "c" / "inequalities.csv").read_bytes()


def test_linear_decay_mode(tmp_path):
    text = "[model]\nd = 3\ngamma = 1.0\n[linear]\nn_times = 6\n[output]\nplots = false\n"
    assert main(["linear-decay", "--config", _write(tmp_path, text), "--out", str(tmp_path / "o")]) == 0
    report = (tmp_path / "o" / "report.txt").read_text()
    slope = float(next(l for l in report.splitlines() if l.startswith("slope =")).split("=")[1])
    assert -0.80 <= slope <= -0.70


def test_spectrum_mode(tmp_path):
    assert main(["spectrum", "--config", _write(tmp_path, "[grid]\nn_r = 10\nn_theta = 8\n"),
                 "--out", str(tmp_path / "o")]) == 0
    rows = (tmp_path / "o" / "spectrum.csv").read_text().splitlines()
    assert rows[0] == "index,m,kind,j,eigenvalue" and len(rows) == 81


def test_cli_error_exit(tmp_path, capsys):
    assert main(["simulate", "--config", _write(tmp_path, "[model]\ngamma = 0.5\n")]) == 2
    assert "ConfigError" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.ini")]) == 2


def test_cli_failed_check_exit(tmp_path):
    text = SMALL + "[checks]\ndecay_fraction = 100\ntau_growth = false\n[output]\nplots = false\n"
    assert main(["simulate", "--config", _write(tmp_path, text), "--out", str(tmp_path / "o")]) == 1
    assert "overall: FAIL" in (tmp_path / "o" / "report.txt").read_text()


def _write(tmp_path: Path, text: str) -> str:
    path = tmp_path / "cfg.ini"
    path.write_text(text, encoding="utf-8")
    return str(path)
