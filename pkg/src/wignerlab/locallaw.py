"""Monte Carlo engine for the local law and its applications.

Work is split into ``(n, replica)`` items.  Each item draws one matrix with
seed ``split_seed(base_seed, experiment, n, replica)`` and evaluates every
``(u, v)`` point of the plan on that matrix, so cells sharing ``n`` use
common random numbers.  Items may run on a process pool; results are
gathered in item order and reduced with ``math.fsum``, which makes the
report independent of the worker count.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from . import semicircle, spectral
from .ensemble import EnsembleSpec, EntryDistribution, Stage, sample_stage
from .errors import ConfigError, ConsistencyError, FitError
from .resolvent import solve_resolvent
from .seeding import split_seed

log = logging.getLogger(__name__)

DEFAULT_SEED = 0xC0FFEE
EXPERIMENT_KEYS = {"locallaw": 0, "edgelaw": 1, "applications": 2}
RESOLVENT_ROUTE_MAX_N = 200
ROUTE_AGREEMENT = 1e-8


@dataclass(frozen=True)
class ExperimentPlan:
    """Grid and replication settings shared by all three experiments.

    ``v_values`` overrides the default per-``n`` grid, which is log-spaced
    from ``A0/n`` to ``v_max`` with ``v_per_decade`` points per decade.
    ``x`` and ``xi`` only matter for :func:`run_applications`.
    """

    ensemble: EnsembleSpec
    n_values: tuple
    u_values: tuple = (0.0,)
    p_values: tuple = (1,)
    replicas: int = 200
    base_seed: int = DEFAULT_SEED
    u0: float = 2.5
    V: float = 1.0
    A0: float = 8.0
    A1: float = 1.0
    v_max: float | None = None
    v_per_decade: int = 12
    v_values: tuple | None = None
    stage: Stage = Stage.RAW
    x: float = 0.0
    xi: float = 50.0
    max_p: int = 6

    def __post_init__(self):
        problems = []
        if not self.n_values or any(int(n) < 2 for n in self.n_values):
            problems.append(f"n_values: need integers >= 2, got {self.n_values}")
        if not self.u_values:
            problems.append("u_values: empty")
        if not self.p_values or any(int(p) < 1 for p in self.p_values):
            problems.append(f"p_values: need integers >= 1, got {self.p_values}")
        if self.replicas < 2:
            problems.append(f"replicas: need at least 2 for standard errors, got {self.replicas}")
        for name in ("u0", "V", "A0", "A1", "xi"):
            if not getattr(self, name) > 0:
                problems.append(f"{name}: must be > 0, got {getattr(self, name)}")
        if self.v_per_decade < 1:
            problems.append(f"v_per_decade: must be >= 1, got {self.v_per_decade}")
        if self.v_max is not None and not 0 < self.v_max <= self.V:
            problems.append(f"v_max: must lie in (0, V={self.V}], got {self.v_max}")
        if problems:
            raise ConfigError(problems)
        object.__setattr__(self, "stage", Stage(self.stage))

    @property
    def alpha(self):
        return self.ensemble.alpha

    def v_grid(self, n):
        if self.v_values is not None:
            return np.array(sorted(self.v_values), dtype=float)
        lo = self.A0 / n
        hi = self.v_max if self.v_max is not None else min(1.0, self.V)
        if hi <= lo:
            return np.array([lo])
        count = max(2, int(math.ceil(self.v_per_decade * math.log10(hi / lo))) + 1)
        return np.geomspace(lo, hi, count)

    def p_limit(self, n, v):
        """Largest admissible moment order ``A1 (nv)^{(1 - 2 alpha)/2}``."""
        return self.A1 * (n * v) ** ((1 - 2 * self.alpha) / 2)

    def cells(self):
        for n in self.n_values:
            for u in self.u_values:
                for v in self.v_grid(n):
                    for p in self.p_values:
                        yield int(n), float(u), float(v), int(p)

    def cell_problems(self, cell):
        n, u, v, p = cell
        out = []
        if abs(u) > self.u0:
            out.append(f"|u|={abs(u)} > u0={self.u0}")
        if v < self.A0 / n * (1 - 1e-12):
            out.append(f"v={v:.6g} < A0/n={self.A0 / n:.6g}")
        if v > self.V * (1 + 1e-12):
            out.append(f"v={v:.6g} > V={self.V}")
        lim = self.p_limit(n, v)
        if p > lim:
            out.append(f"p={p} > A1 (nv)^((1-2a)/2) = {lim:.4g}")
        return out

    def invalid_cells(self):
        """``[(cell, reasons)]`` for every cell outside the admissible range."""
        return [(c, r) for c in self.cells() for r in [self.cell_problems(c)] if r]

    def describe(self):
        d = asdict(self)
        d["ensemble"] = self.ensemble.to_config()
        d["stage"] = self.stage.value
        d["n_values"] = list(self.n_values)
        return d


def format_cell(cell):
    n, u, v, p = cell
    return f"(n={n}, u={u:g}, v={v:.6g}, p={p})"


# --- parallel map ------------------------------------------------------------


def pmap(fn, items, workers=1):
    """Ordered map; a process pool when ``workers > 1``."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    chunk = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=chunk))


def mean_se(values):
    """Compensated mean and standard error of the mean."""
    vals = [float(x) for x in values]
    k = len(vals)
    mean = math.fsum(vals) / k
    if k < 2:
        return mean, math.nan
    var = math.fsum((x - mean) ** 2 for x in vals) / (k - 1)
    return mean, math.sqrt(var / k)


def replica_seed(plan, experiment, n, r):
    return split_seed(plan.base_seed, EXPERIMENT_KEYS[experiment], n, r)


# --- Lambda_n evaluation -----------------------------------------------------


def lambda_grid(sample, z):
    """``m_n(z) - s(z)`` on an array of ``z``.

    Uses eigenvalues for ``n > 200``; smaller matrices go through the
    resolvent trace and are cross-checked against the eigenvalue route.
    """
    z = np.asarray(z, dtype=complex)
    dec = spectral.decompose(sample, vectors=False)
    m_eig = np.asarray(spectral.stieltjes_empirical(dec, z))
    if sample.n <= RESOLVENT_ROUTE_MAX_N:
        m_res = np.array(
            [np.trace(solve_resolvent(sample.entries, zz, sample.seed)) / sample.n for zz in z.ravel()]
        ).reshape(z.shape)
        gap = np.max(np.abs(m_res - m_eig) / np.maximum(1.0, np.abs(m_eig)))
        if gap > ROUTE_AGREEMENT:
            raise ConsistencyError(f"resolvent and eigenvalue routes disagree by {gap:.3e} (seed {sample.seed})")
        m = m_res
    else:
        m = m_eig
    return m - semicircle.stieltjes(z)


def _lambda_item(args):
    plan, experiment, n, r = args
    seed = replica_seed(plan, experiment, n, r)
    sample = sample_stage(plan.ensemble.with_n(n), seed, plan.stage)
    u = np.asarray(plan.u_values, dtype=float)
    v = plan.v_grid(n)
    return lambda_grid(sample, u[:, None] + 1j * v[None, :])


# --- reports -----------------------------------------------------------------


@dataclass
class CellStat:
    n: int
    u: float
    v: float
    p: int
    mean: float
    se: float
    mean_imag: float
    se_imag: float
    envelope: float = math.nan
    psi: float = math.nan
    slope: float = math.nan
    dominant_term: int = 0

    @property
    def nv(self):
        return self.n * self.v


@dataclass
class SlopeFit:
    n: int
    u: float
    p: int
    slope: float
    half_width: float
    intercept: float
    points: int

    def within(self, target, tol):
        return abs(self.slope - target) <= tol


@dataclass
class EnvelopeFit:
    C: float
    residuals: list


@dataclass
class LocalLawReport:
    kind: str
    plan: dict
    rejected: list
    warnings: list
    cells: list
    slopes: list
    C: float
    checks: list = field(default_factory=list)

    def cell(self, n, u, v, p):
        for c in self.cells:
            if c.n == n and c.p == p and math.isclose(c.u, u) and math.isclose(c.v, v, rel_tol=1e-9):
                return c
        raise KeyError((n, u, v, p))

    def slope(self, n, u, p):
        for s in self.slopes:
            if s.n == n and s.p == p and math.isclose(s.u, u):
                return s
        raise KeyError((n, u, p))

    def to_dict(self):
        return {
            "kind": self.kind,
            "preamble": {"plan": self.plan, "rejected_cells": self.rejected, "warnings": self.warnings},
            "fitted_C": self.C,
            "slopes": [asdict(s) for s in self.slopes],
            "cells": [asdict(c) for c in self.cells],
            "checks": self.checks,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "u", "v", "p", "mean", "se", "envelope", "slope"])
            for c in self.cells:
                w.writerow([c.n, repr(c.u), repr(c.v), c.p, repr(c.mean), repr(c.se), repr(c.envelope), repr(c.slope)])


def fit_slope(nv, means, p=1):
    """OLS of ``log(mean^{1/p})`` on ``log(nv)`` with a 95% half-width."""
    nv = np.asarray(nv, dtype=float)
    y = np.log(np.asarray(means, dtype=float)) / p
    x = np.log(nv)
    if len(x) < 3 or np.ptp(x) == 0:
        raise FitError(f"slope fit needs >= 3 distinct v values, got {len(set(x.tolist()))}")
    res = stats.linregress(x, y)
    half = float(stats.t.ppf(0.975, len(x) - 2) * res.stderr)
    return float(res.slope), half, float(res.intercept)


def fit_envelope(cells):
    """Smallest C with ``mean <= (C p^2 / (nv))^p`` on every ``(nv, p, mean)`` cell."""
    cells = list(cells)
    if len(cells) < 3:
        raise FitError(f"envelope fit needs >= 3 cells, got {len(cells)}")
    if len({float(c[0]) for c in cells}) < 2:
        raise FitError("envelope fit is degenerate: all cells share one value of nv")
    logs = [math.log(mean) / p - math.log(p * p / nv) for nv, p, mean in cells]
    logC = max(logs)
    return EnvelopeFit(math.exp(logC), [lg - logC for lg in logs])


def envelope(C, nv, p):
    return (C * p * p / nv) ** p


def edge_envelope_terms(n, v, gamma, p):
    """The four terms of the edge bound with ``C = 1`` (each scales as ``C^p``)."""
    gv = gamma + v
    nv = n * v
    return (
        p**p / (n**p * gv**p),
        p ** (3 * p) / (nv ** (2 * p) * gv ** (p / 2)),
        1.0 / (n**p * v ** (p / 2) * gv ** (p / 2)),
        p**p / (nv ** (1.5 * p) * gv ** (p / 4)),
    )


def _screen(plan, strict=False):
    rejected = plan.invalid_cells()
    bad = {c for c, _ in rejected}
    if strict and rejected:
        raise ConfigError([f"cell {format_cell(c)}: {'; '.join(r)}" for c, r in rejected])
    notes = []
    if any(p > plan.max_p for p in plan.p_values):
        msg = f"p > {plan.max_p} requested; high moments are noisy at desk-scale replica counts"
        warnings.warn(msg, stacklevel=3)
        notes.append(msg)
    return [{"cell": format_cell(c), "reasons": r} for c, r in rejected], bad, notes


def _collect(plan, experiment, workers):
    items = [(plan, experiment, int(n), r) for n in plan.n_values for r in range(plan.replicas)]
    log.info("%s: %d work items on %d worker(s)", experiment, len(items), workers)
    results = pmap(_lambda_item, items, workers)
    out = {}
    k = 0
    for n in plan.n_values:
        out[int(n)] = np.stack(results[k : k + plan.replicas])
        k += plan.replicas
    return out


def _cell_stats(plan, lam, bad):
    cells = []
    for n in plan.n_values:
        n = int(n)
        v_grid = plan.v_grid(n)
        for iu, u in enumerate(plan.u_values):
            for iv, v in enumerate(v_grid):
                vals = lam[n][:, iu, iv]
                for p in plan.p_values:
                    cell = (n, float(u), float(v), int(p))
                    if cell in bad:
                        continue
                    m, se = mean_se(np.abs(vals) ** p)
                    mi, sei = mean_se(np.abs(vals.imag) ** p)
                    s_im = semicircle.stieltjes(complex(u, v)).imag
                    cells.append(CellStat(n, float(u), float(v), int(p), m, se, mi, sei, psi=s_im + p * p / (n * v)))
    return cells


def _slopes(cells, value="mean"):
    groups = {}
    for c in cells:
        groups.setdefault((c.n, c.u, c.p), []).append(c)
    out = []
    for (n, u, p), cs in groups.items():
        cs = sorted(cs, key=lambda c: c.v)
        if len(cs) < 3:
            continue
        slope, half, icpt = fit_slope([c.nv for c in cs], [getattr(c, value) for c in cs], p)
        for c in cs:
            c.slope = slope
        out.append(SlopeFit(n, u, p, slope, half, icpt, len(cs)))
    return out


def run_local_law(plan, workers=1, strict=False):
    """Estimate ``E|Lambda_n|^p`` over the plan grid and fit the ``(Cp^2/(nv))^p`` envelope."""
    rejected, bad, notes = _screen(plan, strict)
    lam = _collect(plan, "locallaw", workers)
    cells = _cell_stats(plan, lam, bad)
    slopes = _slopes(cells)
    C = math.nan
    if len(cells) >= 3 and len({c.nv for c in cells}) >= 2:
        C = fit_envelope([(c.nv, c.p, c.mean) for c in cells]).C
        for c in cells:
            c.envelope = envelope(C, c.nv, c.p)
    else:
        notes.append("too few cells for an envelope fit")
    return LocalLawReport("locallaw", plan.describe(), rejected, notes, cells, slopes, C)


def run_edge_law(plan, workers=1, strict=False):
    """``E|Im Lambda_n|^p`` for ``2 <= |u| <= u0`` on the truncated, rescaled ensemble."""
    off = [u for u in plan.u_values if not 2 <= abs(u) <= plan.u0]
    if off:
        raise ConfigError([f"u_values: edge law needs 2 <= |u| <= u0={plan.u0}, got {u}" for u in off])
    if plan.stage is not Stage.RESCALED:
        plan = replace(plan, stage=Stage.RESCALED)
    rejected, bad, notes = _screen(plan, strict)
    lam = _collect(plan, "edgelaw", workers)
    cells = _cell_stats(plan, lam, bad)
    slopes = _slopes(cells, value="mean_imag")
    ratios = []
    for c in cells:
        terms = edge_envelope_terms(c.n, c.v, semicircle.gamma_edge(c.u), c.p)
        c.dominant_term = int(np.argmax(terms)) + 1
        ratios.append((c.mean_imag / sum(terms)) ** (1.0 / c.p))
    C = max(ratios) if ratios else math.nan
    for c in cells:
        c.envelope = C**c.p * sum(edge_envelope_terms(c.n, c.v, semicircle.gamma_edge(c.u), c.p))
    return LocalLawReport("edgelaw", plan.describe(), rejected, notes, cells, slopes, C)


# --- applications ------------------------------------------------------------


def _applications_item(args):
    plan, n, r = args
    seed = replica_seed(plan, "applications", n, r)
    sample = sample_stage(plan.ensemble.with_n(n), seed, plan.stage)
    dec = spectral.decompose(sample, vectors=True)
    deloc = spectral.delocalization_stat(dec)
    return {
        "seed": seed,
        "kolmogorov": spectral.kolmogorov_distance(dec),
        "rigidity": spectral.rigidity_residuals(dec).max_normalized,
        "delocalization": deloc,
        "delocalization_over_log_n": deloc / math.log(n),
        "short_scale_density": spectral.short_scale_count(dec, plan.x, plan.xi),
    }


APPLICATION_STATS = (
    "kolmogorov",
    "rigidity",
    "delocalization",
    "delocalization_over_log_n",
    "short_scale_density",
)


@dataclass
class ApplicationsReport:
    plan: dict
    n_values: list
    means: dict
    ses: dict
    short_scale_error: dict
    ratios: dict
    rows: list
    checks: list = field(default_factory=list)

    def spread(self, stat, n_values=None):
        """``max / min`` of the per-n means of ``stat``."""
        ns = self.n_values if n_values is None else list(n_values)
        vals = [self.means[stat][n] for n in ns]
        return max(vals) / min(vals)

    def to_dict(self):
        key = lambda d: {str(k): v for k, v in d.items()}  # noqa: E731
        return {
            "kind": "applications",
            "preamble": {"plan": self.plan},
            "n_values": self.n_values,
            "means": {s: key(d) for s, d in self.means.items()},
            "ses": {s: key(d) for s, d in self.ses.items()},
            "short_scale_error": key(self.short_scale_error),
            "ratios": self.ratios,
            "checks": self.checks,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    def write_csv(self, path):
        spectral.write_stat_rows_csv(path, self.rows)


def run_applications(plan, workers=1):
    ns = [int(n) for n in plan.n_values]
    if len(set(ns)) < 2:
        raise ConfigError("n_values: applications need at least two distinct n")
    items = [(plan, n, r) for n in ns for r in range(plan.replicas)]
    results = pmap(_applications_item, items, workers)
    means = {s: {} for s in APPLICATION_STATS}
    ses = {s: {} for s in APPLICATION_STATS}
    rows = []
    k = 0
    for n in ns:
        chunk = results[k : k + plan.replicas]
        k += plan.replicas
        for s in APPLICATION_STATS:
            means[s][n], ses[s][n] = mean_se(res[s] for res in chunk)
        for res in chunk:
            rows.extend((res["seed"], n, s, res[s]) for s in APPLICATION_STATS)
    target = semicircle.density(plan.x)
    short_err = {n: abs(means["short_scale_density"][n] - target) / target if target > 0 else math.nan for n in ns}
    ratios = {
        s: [means[s][b] / means[s][a] for a, b in zip(ns, ns[1:])] for s in APPLICATION_STATS
    }
    return ApplicationsReport(plan.describe(), ns, means, ses, short_err, ratios, rows)


def gaussian_plan(n_values, **kw):
    return ExperimentPlan(EnsembleSpec(int(n_values[0]), EntryDistribution.gaussian()), tuple(n_values), **kw)


# --- acceptance checks declared in a config's [acceptance] section -----------


def _check(name, passed, value):
    return {"name": name, "passed": bool(passed), "value": float(value)}


def slope_checks(report, acceptance):
    if "slope_target" not in acceptance:
        return []
    target = acceptance["slope_target"]
    tol = acceptance.get("slope_tolerance", 0.15)
    return [
        _check(f"slope n={s.n} u={s.u:g} p={s.p}", s.within(target, tol), s.slope)
        for s in report.slopes
    ]


def applications_checks(report, acceptance):
    out = []
    ns = report.n_values
    lo = acceptance.get("kolmogorov_ratio_min")
    hi = acceptance.get("kolmogorov_ratio_max")
    if lo is not None or hi is not None:
        for (a, b), r in zip(zip(ns, ns[1:]), report.ratios["kolmogorov"]):
            ok = (lo is None or r >= lo) and (hi is None or r <= hi)
            out.append(_check(f"kolmogorov ratio n={b}/n={a}", ok, r))
    for stat, key in (("rigidity", "rigidity_spread_max"), ("delocalization_over_log_n", "delocalization_spread_max")):
        if key in acceptance:
            spread = report.spread(stat)
            out.append(_check(f"{stat} spread", spread <= acceptance[key], spread))
    if "short_scale_rel_error_max" in acceptance:
        n = max(ns)
        err = report.short_scale_error[n]
        out.append(_check(f"short-scale density n={n}", err <= acceptance["short_scale_rel_error_max"], err))
    return out
