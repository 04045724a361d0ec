"""Monte Carlo experiments: specs, config files, aggregation and CSV output.

A sweep varies one axis (transmit power in dBm, number of groups or number
of cells) and runs every architecture on ``trials`` channel realizations per
point. Trial ``t`` always uses ``generate_channels(config, t)`` and the
matching phase stream, so results do not depend on execution order or on
the number of worker processes.

Config files are INI-style::

    [system]
    num_cells = 36
    transmit_power_dbm = 38

    [experiment]
    sweep = num_groups
    values = 4, 6, 9, 12, 18
    architectures = cw-sc, cw-gc, cw-dgc, cw-fc
    trials = 100

    [solver]
    max_outer = 100

See :data:`SYSTEM_KEYS`, :data:`EXPERIMENT_KEYS` and :data:`SOLVER_KEYS` for
the accepted keys.
"""

import configparser
import csv
import io
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .channel import SystemConfig, dbm_to_mw, generate_channels, mw_to_dbm, square_grid
from .solver import COUPLINGS, Architecture, SolverOptions, parse_architectures, solve_scenario

SWEEP_AXES = ("transmit_power_dbm", "num_groups", "num_cells")
DEFAULT_TRIALS = 100

CSV_COLUMNS = ("architecture", "sweep_axis", "sweep_value", "mean_sum_rate", "std_sum_rate",
               "trials", "failures", "mean_outer_iterations", "mean_activated_links",
               "mean_approximation_gap", "seed")


class ConfigError(ValueError):
    """Malformed config file; the message names the file, line and field."""


@dataclass(frozen=True)
class ExperimentSpec:
    base: SystemConfig
    axis: str
    values: tuple
    architectures: tuple
    trials: int = DEFAULT_TRIALS
    output: str | None = None
    solver: SolverOptions = SolverOptions()
    workers: int = 1

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"sweep axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        if not self.values:
            raise ValueError("sweep values must not be empty")
        if not self.architectures:
            raise ValueError("at least one architecture is required")
        if int(self.trials) < 1:
            raise ValueError("trials must be at least 1")
        if int(self.workers) < 1:
            raise ValueError("workers must be at least 1")
        archs = tuple(a if isinstance(a, Architecture) else Architecture.parse(a)
                      for a in self.architectures)
        object.__setattr__(self, "architectures", archs)
        object.__setattr__(self, "values", tuple(self.values))
        for v in self.values:
            self.config_for(v)  # fail early on impossible points

    def config_for(self, value) -> SystemConfig:
        if self.axis == "transmit_power_dbm":
            return replace(self.base, transmit_power_mw=float(dbm_to_mw(value)))
        if self.axis == "num_groups":
            return replace(self.base, num_groups=int(value))
        return self.base.with_cells(int(value))


@dataclass(frozen=True)
class ExperimentRow:
    architecture: str
    sweep_axis: str
    sweep_value: float
    mean_sum_rate: float
    std_sum_rate: float
    trials: int
    failures: int
    mean_outer_iterations: float
    mean_activated_links: float
    mean_approximation_gap: float
    seed: int


@dataclass(frozen=True)
class TrialOutcome:
    sum_rate: float = math.nan
    outer_iterations: int = 0
    activated_links: int = 0
    approximation_gap: float = math.nan
    error: str | None = None


def run_trial(config: SystemConfig, architecture: Architecture, trial_index: int,
              opts: SolverOptions = SolverOptions()) -> TrialOutcome:
    """One solve; solver exceptions are captured, never raised."""
    try:
        channels = generate_channels(config, trial_index)
        res = solve_scenario(config, channels, architecture, trial_index, opts)
    except (ArithmeticError, ValueError, np.linalg.LinAlgError, RuntimeError) as exc:
        return TrialOutcome(error=f"{type(exc).__name__}: {exc}")
    return TrialOutcome(res.sum_rate, res.outer_iterations, res.activated_links,
                        res.approximation_gap)


def _run_task(task):
    return run_trial(*task)


def aggregate(architecture: Architecture, spec: ExperimentSpec, value,
              outcomes: list[TrialOutcome]) -> ExperimentRow:
    ok = [o for o in outcomes if o.error is None]
    rates = np.array([o.sum_rate for o in ok])

    def mean(xs):
        return float(np.mean(xs)) if len(xs) else math.nan

    std = float(np.std(rates, ddof=1)) if len(rates) > 1 else 0.0
    return ExperimentRow(
        architecture=architecture.label, sweep_axis=spec.axis, sweep_value=value,
        mean_sum_rate=mean(rates), std_sum_rate=std, trials=len(outcomes),
        failures=len(outcomes) - len(ok),
        mean_outer_iterations=mean([o.outer_iterations for o in ok]),
        mean_activated_links=mean([o.activated_links for o in ok]),
        mean_approximation_gap=mean([o.approximation_gap for o in ok]),
        seed=spec.base.seed)


def run_experiment(spec: ExperimentSpec, progress=None) -> list[ExperimentRow]:
    """Rows ordered by sweep value, then by architecture as listed in the spec.

    ``progress``, if given, is called with each finished row.
    """
    points = [(v, a) for v in spec.values for a in spec.architectures]
    tasks = [(spec.config_for(v), a, t, spec.solver)
             for v, a in points for t in range(spec.trials)]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            # map keeps submission order, so aggregation is order independent
            outcomes = list(pool.map(_run_task, tasks, chunksize=1))
    else:
        outcomes = None
    rows = []
    for i, (v, a) in enumerate(points):
        if outcomes is None:
            chunk = [_run_task(task) for task in tasks[i * spec.trials:(i + 1) * spec.trials]]
        else:
            chunk = outcomes[i * spec.trials:(i + 1) * spec.trials]
        row = aggregate(a, spec, v, chunk)
        rows.append(row)
        if progress is not None:
            progress(row)
    return rows


# --------------------------------------------------------------------------
# CSV


def format_value(x) -> str:
    """Integers verbatim, reals in 16-significant-digit scientific notation."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        if math.isnan(x):
            return "nan"
        return f"{float(x):.15e}"
    return str(x)


def rows_to_csv(rows: list[ExperimentRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([format_value(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_csv(rows: list[ExperimentRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rows_to_csv(rows))


def read_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


# --------------------------------------------------------------------------
# config files


def _parse_int(text):
    return int(text)


def _parse_float(text):
    val = float(text)
    if not math.isfinite(val):
        raise ValueError("must be finite")
    return val


def _parse_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true/false")


def _parse_float_list(text):
    items = [t for t in re.split(r"[,\s]+", text.strip()) if t]
    if not items:
        raise ValueError("empty list")
    return tuple(_parse_float(t) for t in items)


def _parse_choice(options):
    def parse(text):
        val = text.strip().lower()
        if val not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return val
    return parse


# key -> (parser, SystemConfig field or None when handled separately)
SYSTEM_KEYS = {
    "num_bs_antennas": _parse_int,
    "num_users": _parse_int,
    "num_reflective": _parse_int,
    "num_cells": _parse_int,
    "num_groups": _parse_int,
    "grid_rows": _parse_int,
    "grid_cols": _parse_int,
    "transmit_power_dbm": _parse_float,
    "noise_power_dbm": _parse_float_list,
    "ref_gain_db": _parse_float,
    "ref_distance": _parse_float,
    "dist_bs_ris": _parse_float,
    "dist_ris_user": _parse_float,
    "pathloss_exp_bi": _parse_float,
    "pathloss_exp_iu": _parse_float,
    "rician_factor": _parse_float,
    "seed": _parse_int,
}

EXPERIMENT_KEYS = {
    "sweep": _parse_choice(SWEEP_AXES),
    "values": _parse_float_list,
    "architectures": parse_architectures,
    "trials": _parse_int,
    "output": str.strip,
    "workers": _parse_int,
}

SOLVER_KEYS = {
    "outer_tol": _parse_float,
    "max_outer": _parse_int,
    "inner_tol": _parse_float,
    "max_inner": _parse_int,
    "coupling": _parse_choice(COUPLINGS),
    "reset_blocks": _parse_bool,
    "grad_tol": _parse_float,
    "rcg_max_iters": _parse_int,
}

SECTIONS = {"system": SYSTEM_KEYS, "experiment": EXPERIMENT_KEYS, "solver": SOLVER_KEYS}


def _key_lines(text: str) -> dict:
    """(section, key) -> 1-based line number, for diagnostics."""
    out, section = {}, None
    for n, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip().lower()
            out.setdefault((section, None), n)
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", s)
        if m and section is not None:
            out.setdefault((section, m.group(1).strip().lower()), n)
    return out


@dataclass
class ParsedConfig:
    system: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)


def parse_config_text(text: str, source: str = "<config>") -> ParsedConfig:
    """Parse and type-check every key; unknown sections or keys are errors."""
    lines = _key_lines(text)
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        # subclass of ParsingError, so it has to come first
        raise ConfigError(f"{source}:{exc.lineno}: key outside of any section") from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else 0
        src_lines = text.splitlines()
        bad = src_lines[lineno - 1].strip() if 0 < lineno <= len(src_lines) else ""
        raise ConfigError(f"{source}:{lineno}: cannot parse {bad!r}; "
                          "expected 'key = value'") from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: [{exc.section}] {exc.option}: "
                          "duplicate key") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: duplicate section [{exc.section}]") from None
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None

    parsed = ParsedConfig()
    for section in cp.sections():
        name = section.strip().lower()
        if name not in SECTIONS:
            n = lines.get((name, None), 0)
            raise ConfigError(f"{source}:{n}: unknown section [{section}]; "
                              f"expected one of {', '.join(SECTIONS)}")
        schema = SECTIONS[name]
        target = getattr(parsed, name)
        for key, raw in cp.items(section):
            n = lines.get((name, key), 0)
            if key not in schema:
                raise ConfigError(f"{source}:{n}: [{name}] {key}: unknown key")
            try:
                target[key] = schema[key](raw)
            except ValueError as exc:
                raise ConfigError(f"{source}:{n}: [{name}] {key} = {raw!r}: {exc}") from None
    return parsed


def system_from_dict(values: dict, base: SystemConfig = SystemConfig()) -> SystemConfig:
    kw = {}
    names = {f.name for f in fields(SystemConfig)}
    for key, val in values.items():
        if key == "transmit_power_dbm":
            kw["transmit_power_mw"] = float(dbm_to_mw(val))
        elif key == "noise_power_dbm":
            mw = dbm_to_mw(val)
            kw["noise_power_mw"] = float(mw[0]) if len(val) == 1 else tuple(map(float, mw))
        elif key == "ref_gain_db":
            kw["ref_gain"] = float(10.0 ** (val / 10.0))
        elif key in names:
            kw[key] = val
    if "num_cells" in kw and not ("grid_rows" in kw or "grid_cols" in kw):
        kw["grid_rows"], kw["grid_cols"] = square_grid(kw["num_cells"])
    return replace(base, **kw)


def solver_from_dict(values: dict, base: SolverOptions = SolverOptions()) -> SolverOptions:
    kw = {k: v for k, v in values.items() if k not in ("grad_tol", "rcg_max_iters")}
    rcg = base.rcg
    if "grad_tol" in values:
        rcg = replace(rcg, grad_tol=values["grad_tol"])
    if "rcg_max_iters" in values:
        rcg = replace(rcg, max_iters=values["rcg_max_iters"])
    return replace(base, rcg=rcg, **kw)


def spec_from_config(parsed: ParsedConfig, source: str = "<config>", **overrides) -> ExperimentSpec:
    """Build an ExperimentSpec; keyword overrides (CLI flags) win over the file.

    Accepted overrides: seed, trials, output, architectures, workers.
    """
    exp = dict(parsed.experiment)
    for key in ("trials", "output", "architectures", "workers"):
        if overrides.get(key) is not None:
            exp[key] = overrides[key]
    system = dict(parsed.system)
    if overrides.get("seed") is not None:
        system["seed"] = overrides["seed"]
    if "sweep" not in exp or "values" not in exp:
        raise ConfigError(f"{source}: [experiment] needs both 'sweep' and 'values'")
    try:
        axis = exp["sweep"]
        values = exp["values"]
        if axis != "transmit_power_dbm":
            if any(v != int(v) for v in values):
                raise ValueError(f"{axis} values must be integers")
            values = tuple(int(v) for v in values)
        if axis == "num_groups" and "num_groups" not in system:
            system["num_groups"] = values[0]  # base G is overridden per point anyway
        base = system_from_dict(system)
        return ExperimentSpec(
            base=base, axis=axis, values=values,
            architectures=tuple(exp.get("architectures") or parse_architectures(
                "cw-sc,cw-gc,cw-dgc,cw-fc")),
            trials=int(exp.get("trials", DEFAULT_TRIALS)), output=exp.get("output"),
            solver=solver_from_dict(parsed.solver), workers=int(exp.get("workers", 1)))
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None


def load_spec(path, **overrides) -> ExperimentSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return spec_from_config(parse_config_text(text, str(path)), str(path), **overrides)


def describe(config: SystemConfig) -> str:
    p = float(mw_to_dbm(config.transmit_power_mw))
    return (f"N={config.num_bs_antennas} K={config.num_users} K_r={config.num_reflective} "
            f"M={config.num_cells} ({config.grid_rows}x{config.grid_cols}) "
            f"G={config.num_groups} P={p:.6g} dBm seed={config.seed}")
