"""Experiment configuration: strict INI-style key-value files.

Sections and keys are fixed; unknown ones are fatal so sweep results stay
trustworthy. Every key has a documented default (see DEFAULTS), and
validation reports every violated invariant at once, not just the first.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field
from typing import Optional

from .diagnostics import KNOWN_CONSTANTS
from .dynamics import ForcingSpec, SystemParams
from .errors import ConfigError
from .estimator import EstimatorConfig

MODES = ("twin", "sync_only", "verify")

# section -> key -> (default, parser) with parser one of float/int/str.
DEFAULTS: dict[str, dict[str, tuple]] = {
    "grid": {"n": (64, int)},
    "system": {
        "nu": (0.1, float),
        "nu_tilde": (0.2, float),
        "mu": (10.0, float),
        "n_obs": (8, int),
        "dt": (0.02, float),
    },
    "forcing": {
        "kind": ("single_mode", str),
        "amplitude": (0.0225079079039276, float),  # G = 10 at nu = 0.1
        "k1": (0, int),
        "k2": (2, int),
        "kmin": (2, int),
        "kmax": (3, int),
        "phase": (0.0, float),
    },
    "estimator": {
        "nu0": (None, float),  # defaults to system.nu_tilde
        "epsilon": (1e-8, float),
        "min_wait": (None, float),  # defaults to 1/mu
        "plateau_tol": (1e-3, float),
        "plateau_window": (None, float),  # defaults to 5/mu
        "max_updates": (12, int),
    },
    "run": {
        "mode": ("twin", str),
        "t_spin": (20.0, float),
        "t_final": (10.0, float),
        "record_stride": (5, int),
        "seed": (0, int),
        "output_dir": ("out", str),
        "ic_amplitude": (None, float),  # defaults to 0.02 nu G (0.05 if G = 0)
    },
}

_RAD_KEY = re.compile(r"^rad_c[2-9]$")


@dataclass(frozen=True)
class RunConfig:
    mode: str
    t_spin: float
    t_final: float
    record_stride: int
    seed: int
    output_dir: str
    ic_amplitude: Optional[float] = None


@dataclass(frozen=True)
class ExperimentConfig:
    grid_n: int
    params: SystemParams
    estimator: EstimatorConfig
    run: RunConfig
    source: dict = field(default_factory=dict, compare=False)


def _parse_file(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(
        interpolation=None,
        inline_comment_prefixes=("#", ";"),
        strict=True,
    )
    parser.optionxform = str  # keys are case-sensitive
    try:
        with open(path) as fh:
            parser.read_file(fh, source=str(path))
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from exc
    except configparser.Error as exc:
        raise ConfigError([f"parse error: {exc}"]) from exc
    return parser


def load_config(path) -> ExperimentConfig:
    """Parse and fully validate a config file, or raise with every problem."""
    parser = _parse_file(path)
    problems: list[str] = []
    values: dict[str, dict[str, object]] = {}

    for section in parser.sections():
        if section != "constants" and section not in DEFAULTS:
            problems.append(f"unknown section [{section}]")

    for section, keys in DEFAULTS.items():
        values[section] = {}
        present = parser.has_section(section)
        for key, (default, cast) in keys.items():
            raw = parser.get(section, key, fallback=None) if present else None
            if raw is None:
                values[section][key] = default
                continue
            try:
                values[section][key] = cast(raw)
            except ValueError:
                problems.append(
                    f"[{section}] {key}: cannot parse {raw!r} as {cast.__name__}"
                )
                values[section][key] = default
        if present:
            for key in parser.options(section):
                if key not in keys:
                    problems.append(f"[{section}] unknown key {key!r}")

    constants: dict[str, float] = {}
    if parser.has_section("constants"):
        for key in parser.options("constants"):
            if key not in KNOWN_CONSTANTS and not _RAD_KEY.match(key):
                problems.append(f"[constants] unknown key {key!r}")
                continue
            raw = parser.get("constants", key)
            try:
                constants[key] = float(raw)
            except ValueError:
                problems.append(f"[constants] {key}: cannot parse {raw!r} as float")

    if problems:
        raise ConfigError(problems)
    return _build(values, constants)


def _build(values: dict, constants: dict) -> ExperimentConfig:
    problems: list[str] = []
    g = values["grid"]
    s = values["system"]
    f = values["forcing"]
    e = values["estimator"]
    r = values["run"]

    n = g["n"]
    if n % 2 != 0 or n < 8:
        problems.append(f"[grid] n must be even and >= 8, got {n}")
    cutoff = n // 3

    for key in ("nu", "nu_tilde", "dt"):
        if not s[key] > 0:
            problems.append(f"[system] {key} must be > 0, got {s[key]}")
    if s["mu"] < 0:
        problems.append(f"[system] mu must be >= 0, got {s['mu']}")
    if not (1 <= s["n_obs"] <= max(cutoff, 1)):
        problems.append(f"[system] n_obs must be in [1, {cutoff}], got {s['n_obs']}")

    if f["kind"] not in ("single_mode", "band"):
        problems.append(f"[forcing] kind must be single_mode or band, got {f['kind']!r}")
    if f["kind"] == "single_mode":
        if (f["k1"], f["k2"]) == (0, 0):
            problems.append("[forcing] wavevector (k1, k2) must be nonzero")
        if max(abs(f["k1"]), abs(f["k2"])) > cutoff:
            problems.append(
                f"[forcing] wavevector ({f['k1']}, {f['k2']}) outside cutoff {cutoff}"
            )
    else:
        if not (1 <= f["kmin"] <= f["kmax"] <= cutoff):
            problems.append(
                f"[forcing] band must satisfy 1 <= kmin <= kmax <= {cutoff}, "
                f"got [{f['kmin']}, {f['kmax']}]"
            )

    nu0 = e["nu0"] if e["nu0"] is not None else s["nu_tilde"]
    if not nu0 > 0:
        problems.append(f"[estimator] nu0 must be > 0, got {nu0}")
    if not e["epsilon"] > 0:
        problems.append(f"[estimator] epsilon must be > 0, got {e['epsilon']}")
    if e["min_wait"] is not None and e["min_wait"] < s["dt"]:
        problems.append(
            f"[estimator] min_wait must be >= dt = {s['dt']}, got {e['min_wait']}"
        )
    if not e["plateau_tol"] > 0:
        problems.append(f"[estimator] plateau_tol must be > 0, got {e['plateau_tol']}")
    if e["max_updates"] < 1:
        problems.append(f"[estimator] max_updates must be >= 1, got {e['max_updates']}")

    if r["mode"] not in MODES:
        problems.append(f"[run] mode must be one of {MODES}, got {r['mode']!r}")
    if r["t_spin"] < 0:
        problems.append(f"[run] t_spin must be >= 0, got {r['t_spin']}")
    if not r["t_final"] > 0:
        problems.append(f"[run] t_final must be > 0, got {r['t_final']}")
    if r["record_stride"] < 1:
        problems.append(f"[run] record_stride must be >= 1, got {r['record_stride']}")
    if r["ic_amplitude"] is not None and not r["ic_amplitude"] > 0:
        problems.append(f"[run] ic_amplitude must be > 0, got {r['ic_amplitude']}")

    if problems:
        raise ConfigError(problems)

    forcing = ForcingSpec(
        kind=f["kind"],
        amplitude=f["amplitude"],
        wavevector=(f["k1"], f["k2"]) if f["kind"] == "single_mode" else None,
        band=(f["kmin"], f["kmax"]) if f["kind"] == "band" else None,
        phase=f["phase"],
    )
    params = SystemParams(
        nu=s["nu"],
        nu_tilde=s["nu_tilde"],
        mu=s["mu"],
        n_obs=s["n_obs"],
        dt=s["dt"],
        forcing=forcing,
        constants=constants,
    )
    estimator = EstimatorConfig(
        nu0=nu0,
        epsilon=e["epsilon"],
        min_wait=e["min_wait"],
        plateau_tol=e["plateau_tol"],
        plateau_window=e["plateau_window"],
        max_updates=e["max_updates"],
    )
    run = RunConfig(
        mode=r["mode"],
        t_spin=r["t_spin"],
        t_final=r["t_final"],
        record_stride=r["record_stride"],
        seed=r["seed"],
        output_dir=r["output_dir"],
        ic_amplitude=r["ic_amplitude"],
    )
    source = {"grid": g, "system": s, "forcing": f, "estimator": e, "run": r,
              "constants": constants}
    return ExperimentConfig(
        grid_n=n, params=params, estimator=estimator, run=run, source=source
    )


def default_config() -> ExperimentConfig:
    """The all-defaults configuration (what an empty file resolves to)."""
    values = {
        section: {key: spec[0] for key, spec in keys.items()}
        for section, keys in DEFAULTS.items()
    }
    return _build(values, {})
