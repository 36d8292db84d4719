"""Run configuration: sectioned ``key = value`` files.

Example
-------
::

    [run]
    mode = simulate

    [model]
    k = 1.0
    gamma = 2.0

    [grid]
    n_x = 32
    n_r = 16
    n_theta = 16

    [time]
    dt = 0.01
    t_end = 2.0

    [initial]
    family = random-band
    epsilon = 1e-3
    seed = 7

Every key is optional except ``[run] mode`` (which the command line may
supply instead); :meth:`RunConfig.to_text` renders the fully resolved
configuration including all defaults.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields, replace

from ..errors import ConfigError, ParameterError
from ..params import ModelParams
from .initial import FAMILIES

__all__ = [
    "MODES",
    "ChecksConfig",
    "GridConfig",
    "InequalityConfig",
    "InitialConfig",
    "LinearConfig",
    "OutputConfig",
    "PicardConfig",
    "RunConfig",
    "TimeConfig",
    "parse_config",
]

MODES = ("simulate", "picard", "linear-decay", "spectrum", "inequalities")


@dataclass(frozen=True)
class GridConfig:
    """Box and disk resolution."""

    n_x: int = 32
    box_length: float = 2.0 * math.pi
    n_r: int = 16
    n_theta: int = 16


@dataclass(frozen=True)
class TimeConfig:
    """Time stepping; ``t_end`` must be an integer multiple of ``dt``."""

    dt: float = 0.01
    t_end: float = 2.0
    output_stride: int = 1
    cfl: float = 0.5

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass(frozen=True)
class InitialConfig:
    """Initial-condition family, energy amplitude and seed."""

    family: str = "random-band"
    epsilon: float = 1e-3
    seed: int = 0


@dataclass(frozen=True)
class OutputConfig:
    """Output directory, plot switch and the Sobolev index of the energy."""

    directory: str = "fenelab-out"
    plots: bool = True
    s_disc: float = 2.0


@dataclass(frozen=True)
class LinearConfig:
    """Continuous-frequency decay of the linearised flow (``d`` from ``[model]``)."""

    t_min: float = 10.0
    t_max: float = 1000.0
    n_times: int = 15
    rtol: float = 1e-10
    slope_tolerance: float = 0.05


@dataclass(frozen=True)
class PicardConfig:
    """Picard iteration horizon, iterate count and acceptance thresholds."""

    horizon: float = 0.1
    iterations: int = 6
    contraction: float = 0.5
    direct_tolerance: float = 1e-6
    floor: float = 1e-12


@dataclass(frozen=True)
class InequalityConfig:
    """Randomised inequality suites."""

    trials: int = 1000
    k_values: tuple[float, ...] = (0.5, 1.0, 2.0)
    delta: float = 0.1
    p: float = 3.0
    stability: float = 0.05
    resolution_check: bool = True


@dataclass(frozen=True)
class ChecksConfig:
    """Which run-time checks are enabled, with their thresholds."""

    invariants: bool = True
    balance: bool = True
    balance_tolerance: float = 1e-2
    decay: bool = True
    decay_fraction: float = 0.9
    decay_window_start: float = -1.0
    tau_growth: bool = True
    tau_correlation: float = 0.99


@dataclass(frozen=True)
class RunConfig:
    """Fully validated run configuration."""

    mode: str
    model: ModelParams = field(default_factory=ModelParams)
    grid: GridConfig = field(default_factory=GridConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    initial: InitialConfig = field(default_factory=InitialConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    linear: LinearConfig = field(default_factory=LinearConfig)
    picard: PicardConfig = field(default_factory=PicardConfig)
    inequalities: InequalityConfig = field(default_factory=InequalityConfig)
    checks: ChecksConfig = field(default_factory=ChecksConfig)
    workers: int = 1

    def to_text(self) -> str:
        """Render the resolved configuration in the input format."""
        lines = ["[run]", f"mode = {self.mode}", f"workers = {self.workers}", ""]
        for name in _SECTIONS:
            lines.append(f"[{name}]")
            obj = getattr(self, name)
            for f in fields(obj):
                lines.append(f"{f.name} = {_render(getattr(obj, f.name))}")
            lines.append("")
        return "\n".join(lines)

    def with_overrides(self, out: str | None = None, workers: int | None = None,
                       seed: int | None = None) -> "RunConfig":
        """Apply command-line overrides."""
        cfg = self
        if out is not None:
            cfg = replace(cfg, output=replace(cfg.output, directory=out))
        if workers is not None:
            if workers < 1:
                raise ConfigError("workers must be positive", key="workers")
            cfg = replace(cfg, workers=workers)
        if seed is not None:
            cfg = replace(cfg, initial=replace(cfg.initial, seed=seed))
        return cfg


_SECTIONS = {
    "model": ModelParams,
    "grid": GridConfig,
    "time": TimeConfig,
    "initial": InitialConfig,
    "output": OutputConfig,
    "linear": LinearConfig,
    "picard": PicardConfig,
    "inequalities": InequalityConfig,
    "checks": ChecksConfig,
}
_RUN_KEYS = ("mode", "workers")


def _render(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_render(v) for v in value)
    return str(value)


def _line_index(text: str) -> tuple[dict[str, int], dict[tuple[str, str], int]]:
    """Line numbers of section headers and keys (first occurrence)."""
    sections: dict[str, int] = {}
    keys: dict[tuple[str, str], int] = {}
    current = None
    header = re.compile(r"^\s*\[([^\]]+)\]")
    entry = re.compile(r"^\s*([^=:#;\s\[][^=:]*?)\s*[=:]")
    for no, line in enumerate(text.splitlines(), start=1):
        m = header.match(line)
        if m:
            current = m.group(1).strip()
            sections.setdefault(current, no)
            continue
        m = entry.match(line)
        if m and current is not None:
            keys.setdefault((current, m.group(1).strip().lower()), no)
    return sections, keys


def _convert(raw: str, default, line: int | None, key: str):
    text = raw.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            value = float(text)
            if not math.isfinite(value):
                raise ValueError(text)
            return value
        if isinstance(default, tuple):
            return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        kind = type(default).__name__ if not isinstance(default, tuple) else "list of numbers"
        raise ConfigError(f"malformed value {text!r} (expected {kind})", line=line, key=key) from None
    return text


def _param_key(message: str) -> str:
    token = message.split()[0]
    return "mu_prime" if token.startswith("2*mu") else token


def parse_config(text: str, mode: str | None = None) -> RunConfig:
    """Parse and validate a configuration.

    Parameters
    ----------
    text : str
        File contents.
    mode : str, optional
        Mode from the command line; must agree with ``[run] mode`` if both are given.

    Raises
    ------
    ConfigError
        Naming the line and key of the first problem.
    """
    parser = configparser.ConfigParser(interpolation=None, strict=True,
                                       inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key in section [{exc.section}]", line=exc.lineno,
                          key=exc.option) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError("duplicate section", line=exc.lineno, key=exc.section) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("entry outside of any [section]", line=exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if getattr(exc, "errors", None) else None
        raise ConfigError("cannot parse line (expected 'key = value')", line=line) from None

    section_lines, key_lines = _line_index(text)
    for name in parser.sections():
        if name != "run" and name not in _SECTIONS:
            raise ConfigError(f"unknown section [{name}]", line=section_lines.get(name), key=name)

    run = parser["run"] if parser.has_section("run") else {}
    for key in run:
        if key not in _RUN_KEYS:
            raise ConfigError("unknown key in section [run]", line=key_lines.get(("run", key)), key=key)
    file_mode = run.get("mode")
    if mode is not None and file_mode is not None and file_mode.strip() != mode:
        raise ConfigError(f"config mode {file_mode.strip()!r} conflicts with command {mode!r}",
                          line=key_lines.get(("run", "mode")), key="mode")
    resolved_mode = mode or (file_mode.strip() if file_mode else None)
    if resolved_mode is None:
        raise ConfigError("missing required key [run] mode", key="mode")
    if resolved_mode not in MODES:
        raise ConfigError(f"unknown mode {resolved_mode!r}; choose from {', '.join(MODES)}",
                          line=key_lines.get(("run", "mode")), key="mode")
    workers = 1
    if "workers" in run:
        workers = _convert(run["workers"], 1, key_lines.get(("run", "workers")), "workers")
        if workers < 1:
            raise ConfigError("workers must be positive", line=key_lines.get(("run", "workers")),
                              key="workers")

    built = {}
    for name, cls in _SECTIONS.items():
        defaults = cls()
        allowed = {f.name: getattr(defaults, f.name) for f in fields(cls)}
        values = {}
        if parser.has_section(name):
            for key, raw in parser[name].items():
                line = key_lines.get((name, key))
                if key not in allowed:
                    raise ConfigError(f"unknown key in section [{name}]", line=line, key=key)
                values[key] = _convert(raw, allowed[key], line, key)
        try:
            built[name] = cls(**values)
        except ParameterError as exc:
            key = _param_key(str(exc))
            raise ConfigError(str(exc), line=key_lines.get((name, key)), key=key) from None
    cfg = RunConfig(mode=resolved_mode, workers=workers, **built)
    _validate(cfg, key_lines)
    return cfg


def _validate(cfg: RunConfig, key_lines: dict[tuple[str, str], int]) -> None:
    def fail(section, key, message):
        raise ConfigError(message, line=key_lines.get((section, key)), key=key)

    for key in ("n_x", "n_r", "n_theta"):
        if getattr(cfg.grid, key) <= 0:
            fail("grid", key, "must be positive")
    if cfg.grid.n_theta % 2 or cfg.grid.n_theta < 4:
        fail("grid", "n_theta", "must be an even number >= 4")
    if cfg.grid.n_r < 2:
        fail("grid", "n_r", "must be >= 2")
    if not cfg.grid.box_length > 0:
        fail("grid", "box_length", "must be positive")
    t = cfg.time
    if not t.dt > 0:
        fail("time", "dt", "must be positive")
    if not t.t_end > 0:
        fail("time", "t_end", "must be positive")
    if abs(t.n_steps * t.dt - t.t_end) > 1e-9 * t.t_end or t.n_steps < 1:
        fail("time", "t_end", f"must be a positive integer multiple of dt={t.dt}")
    if t.output_stride < 1:
        fail("time", "output_stride", "must be positive")
    if not t.cfl > 0:
        fail("time", "cfl", "must be positive")
    if cfg.initial.family not in FAMILIES:
        fail("initial", "family", f"unknown family {cfg.initial.family!r}; choose from {', '.join(FAMILIES)}")
    if cfg.initial.epsilon < 0:
        fail("initial", "epsilon", "must be nonnegative")
    if not cfg.output.s_disc >= 0:
        fail("output", "s_disc", "must be nonnegative")
    lin = cfg.linear
    if not 0 <= lin.t_min < lin.t_max:
        fail("linear", "t_max", "require 0 <= t_min < t_max")
    if lin.n_times < 2:
        fail("linear", "n_times", "must be >= 2")
    if not lin.rtol > 0:
        fail("linear", "rtol", "must be positive")
    pc = cfg.picard
    if not pc.horizon > 0 or abs(round(pc.horizon / t.dt) * t.dt - pc.horizon) > 1e-9 * pc.horizon:
        fail("picard", "horizon", f"must be a positive multiple of dt={t.dt}")
    if pc.iterations < 2:
        fail("picard", "iterations", "must be >= 2")
    iq = cfg.inequalities
    if iq.trials < 1:
        fail("inequalities", "trials", "must be positive")
    if not iq.k_values or any(k <= 0 for k in iq.k_values):
        fail("inequalities", "k_values", "must be a nonempty list of positive numbers")
    if not iq.delta > 0:
        fail("inequalities", "delta", "must be positive")
    if cfg.mode in ("simulate", "picard") and cfg.model.d != 2:
        fail("model", "d", "coupled runs require d = 2")
