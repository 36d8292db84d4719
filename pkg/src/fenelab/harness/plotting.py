"""Standalone SVG plots derived purely from the CSV outputs."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

__all__ = ["plot_linear", "plot_picard", "plot_series", "read_csv"]


def read_csv(path: Path) -> dict[str, np.ndarray]:
    """Read a numeric CSV written by the runner into column arrays."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "fenelab"
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    return plt, fig, ax


def _save(plt, fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def plot_series(csv_path: Path, out_dir: Path) -> list[Path]:
    """Log-linear decay of ``E`` and ``||g||`` and log-log growth of the velocity-gradient integral."""
    data = read_csv(csv_path)
    t = data["t"]
    files = []
    plt, fig, ax = _figure()
    for name, label in (("E", "E(t)"), ("g_L2L2", "||g||"), ("tau_L1", "||tau||_L1")):
        y = data[name]
        mask = y > 0
        if np.any(mask):
            ax.semilogy(t[mask], y[mask], label=label)
    ax.set_xlabel("t")
    ax.legend()
    ax.set_title("coupled run: decay")
    files.append(_save(plt, fig, out_dir / "decay_loglinear.svg"))

    plt, fig, ax = _figure()
    mask = (t > 0) & (data["cum_gradu_Linf"] > 0)
    if np.any(mask):
        ax.loglog(t[mask], data["cum_gradu_Linf"][mask], label="int_0^t ||grad u||_inf")
        c = np.dot(data["cum_gradu_Linf"][mask], np.sqrt(t[mask])) / np.sum(t[mask])
        ax.loglog(t[mask], c * np.sqrt(t[mask]), "--", label="C sqrt(t)")
        ax.legend()
    ax.set_xlabel("t")
    ax.set_title("velocity-gradient integral")
    files.append(_save(plt, fig, out_dir / "growth_loglog.svg"))
    return files


def plot_linear(csv_path: Path, out_dir: Path) -> list[Path]:
    """Log-log decay curve of the linear evolution."""
    data = read_csv(csv_path)
    plt, fig, ax = _figure()
    ax.loglog(1.0 + data["t"], data["norm"], "o-", label="||U(t)||")
    ax.set_xlabel("1 + t")
    ax.legend()
    ax.set_title("linearised flow: decay")
    return [_save(plt, fig, out_dir / "linear_decay_loglog.svg")]


def plot_picard(csv_path: Path, out_dir: Path) -> list[Path]:
    """Successive Picard iterate distances on a log scale."""
    data = read_csv(csv_path)
    plt, fig, ax = _figure()
    mask = data["distance"] > 0
    ax.semilogy(data["iterate"][mask], data["distance"][mask], "o-")
    ax.set_xlabel("iterate")
    ax.set_ylabel("distance to previous iterate")
    return [_save(plt, fig, out_dir / "picard_distances.svg")]
