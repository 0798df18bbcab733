"""Run configuration documents.

INI-style, line oriented ``key = value`` with section headers::

    [run]
    subcommand = locallaw       ; optional, the command line wins
    seed = 7                    ; default 0xC0FFEE
    workers = 4                 ; default: logical cores
    format = both               ; json | csv | both
    output_dir = results

    [ensemble]
    family = gaussian           ; rademacher | gaussian | student_t | symmetric_pareto
    df = 5                      ; student_t only
    tail_index = 6              ; symmetric_pareto only
    claimed_delta = 4
    truncation_D = 1.0

    [plan]
    n_values = 256, 512         ; comma separated lists
    u_values = 0
    p_values = 1, 2
    replicas = 100
    u0 = 2.5
    V = 1.0
    A0 = 8
    A1 = 1.0
    v_max = 1.0
    v_per_decade = 12
    v_values =                  ; explicit grid, overrides the default one
    stage = raw                 ; raw | truncated | recentered | rescaled
    x = 0.0                     ; short-scale law position (applications)
    xi = 50                     ; short-scale window, in units of 1/n
    max_p = 6
    skip_invalid_cells = false  ; true: drop cells with p above the range

    [acceptance]
    slope_target = -1.0         ; locallaw / edgelaw
    slope_tolerance = 0.15
    kolmogorov_ratio_min = 0.3  ; applications
    kolmogorov_ratio_max = 0.8
    rigidity_spread_max = 2.0
    delocalization_spread_max = 2.0
    short_scale_rel_error_max = 0.15

Every violated field is reported, not just the first one.
"""

from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path

from .ensemble import EnsembleSpec, Stage
from .errors import ConfigError
from .locallaw import DEFAULT_SEED, ExperimentPlan, format_cell

SUBCOMMANDS = ("sample", "validate", "locallaw", "edgelaw", "applications", "semicircle-table")
FORMATS = ("json", "csv", "both")
ACCEPTANCE_KEYS = (
    "slope_target",
    "slope_tolerance",
    "kolmogorov_ratio_min",
    "kolmogorov_ratio_max",
    "rigidity_spread_max",
    "delocalization_spread_max",
    "short_scale_rel_error_max",
)

_PLAN_FLOATS = ("u0", "V", "A0", "A1", "v_max", "x", "xi")
_PLAN_INTS = ("replicas", "v_per_decade", "max_p")


@dataclass
class RunConfig:
    subcommand: str | None = None
    plan: ExperimentPlan | None = None
    ensemble: EnsembleSpec | None = None
    output_dir: Path = Path("results")
    seed: int = DEFAULT_SEED
    workers: int = field(default_factory=lambda: os.cpu_count() or 1)
    format: str = "both"
    acceptance: dict = field(default_factory=dict)
    strict: bool = True
    source_text: str = ""

    @property
    def config_hash(self):
        return hashlib.sha256(self.source_text.encode()).hexdigest()


def _split(text, kind):
    return tuple(kind(t) for t in text.replace(";", ",").split(",") if t.strip())


def _parse_int(text):
    return int(text, 0)


def parse_config(text, source="<string>"):
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None

    problems = []
    known = {"run", "ensemble", "plan", "acceptance"}
    for sec in cp.sections():
        if sec not in known:
            problems.append(f"[{sec}]: unknown section")

    cfg = RunConfig(source_text=text)
    run = cp["run"] if cp.has_section("run") else {}
    if "subcommand" in run:
        if run["subcommand"] not in SUBCOMMANDS:
            problems.append(f"run.subcommand: unknown {run['subcommand']!r}")
        cfg.subcommand = run["subcommand"]
    if "seed" in run:
        try:
            cfg.seed = _parse_int(run["seed"])
            if not 0 <= cfg.seed < 2**64:
                problems.append(f"run.seed: must be an unsigned 64-bit integer, got {cfg.seed}")
        except ValueError:
            problems.append(f"run.seed: not an integer: {run['seed']!r}")
    if "workers" in run:
        try:
            cfg.workers = int(run["workers"])
            if cfg.workers < 1:
                problems.append(f"run.workers: must be >= 1, got {cfg.workers}")
        except ValueError:
            problems.append(f"run.workers: not an integer: {run['workers']!r}")
    if "format" in run:
        if run["format"] not in FORMATS:
            problems.append(f"run.format: expected one of {FORMATS}, got {run['format']!r}")
        cfg.format = run["format"]
    if "output_dir" in run:
        cfg.output_dir = Path(run["output_dir"])
    for key in run:
        if key not in ("subcommand", "seed", "workers", "format", "output_dir"):
            problems.append(f"run.{key}: unknown key")

    ens_section = dict(cp["ensemble"]) if cp.has_section("ensemble") else {}
    plan_section = dict(cp["plan"]) if cp.has_section("plan") else {}
    n_values = ()
    if "n_values" in plan_section:
        try:
            n_values = _split(plan_section["n_values"], int)
        except ValueError:
            problems.append(f"plan.n_values: not a list of integers: {plan_section['n_values']!r}")
    n_for_spec = n_values[0] if n_values else None
    if "n" in ens_section:
        n_for_spec = None
    try:
        ensemble = EnsembleSpec.from_config(ens_section, n=n_for_spec) if (ens_section or n_for_spec) else None
    except ConfigError as exc:
        problems.extend(f"ensemble.{p}" for p in exc.problems)
        ensemble = None
    cfg.ensemble = ensemble

    if plan_section:
        kw = {}
        for key, text in plan_section.items():
            try:
                if key == "n_values":
                    continue
                if key in ("u_values", "v_values"):
                    kw[key] = _split(text, float) or None
                elif key == "p_values":
                    kw[key] = _split(text, int)
                elif key in _PLAN_FLOATS:
                    kw[key] = float(text)
                elif key in _PLAN_INTS:
                    kw[key] = int(text)
                elif key == "stage":
                    kw[key] = Stage(text.strip())
                elif key == "skip_invalid_cells":
                    cfg.strict = not cp.getboolean("plan", key)
                else:
                    problems.append(f"plan.{key}: unknown key")
            except ValueError:
                problems.append(f"plan.{key}: cannot parse {text!r}")
        if "u_values" in kw and kw["u_values"] is None:
            problems.append("plan.u_values: empty")
            del kw["u_values"]
        if not n_values:
            problems.append("plan.n_values: missing")
        if ensemble is not None and n_values and not problems:
            try:
                cfg.plan = ExperimentPlan(ensemble, n_values, base_seed=cfg.seed, **kw)
            except ConfigError as exc:
                problems.extend(f"plan.{p}" for p in exc.problems)
        if cfg.plan is not None and cfg.strict:
            for cell, reasons in cfg.plan.invalid_cells():
                problems.append(f"plan: cell {format_cell(cell)} violates {'; '.join(reasons)}")

    acc = dict(cp["acceptance"]) if cp.has_section("acceptance") else {}
    for key, text in acc.items():
        if key not in ACCEPTANCE_KEYS:
            problems.append(f"acceptance.{key}: unknown key")
            continue
        try:
            cfg.acceptance[key] = float(text)
        except ValueError:
            problems.append(f"acceptance.{key}: not a number: {text!r}")

    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), source=str(path))
