"""Command-line entry point.

    wignerlab <subcommand> [--plan FILE] [--seed U64] [--workers N] [--out DIR]
                           [--format json|csv|both] [subcommand flags]

Exit status: 0 success, 1 a declared check failed, 2 bad flags or config.
Every run writes ``manifest.json`` next to its results;
``wignerlab rerun DIR/manifest.json --out NEWDIR`` repeats it exactly.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import platform
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__, ensemble, locallaw, resolvent, semicircle, spectral
from .config import FORMATS, RunConfig, load_config
from .errors import ConfigError
from .seeding import split_seed

log = logging.getLogger("wignerlab")

VALIDATE_SEED_KEY = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(2)


def _common(p):
    p.add_argument("--plan", type=Path, help="config document (INI key = value with sections)")
    p.add_argument("--seed", type=lambda s: int(s, 0), help="root seed (default 0xC0FFEE)")
    p.add_argument("--workers", type=int, help="worker processes (default: logical cores)")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--format", choices=FORMATS, help="result format (default both)")
    p.add_argument("-v", "--verbose", action="store_true")


def _ensemble_flags(p):
    p.add_argument("--family", choices=ensemble.FAMILIES, default=None)
    p.add_argument("--df", type=float, help="student_t degrees of freedom")
    p.add_argument("--tail-index", type=float, help="symmetric_pareto tail index")
    p.add_argument("--delta", type=float, help="claimed delta in E|X|^(4+delta) < inf")
    p.add_argument("--D", dest="trunc_D", type=float, help="truncation constant D")


def build_parser():
    parser = _Parser(prog="wignerlab", description="Wigner matrix local-law laboratory")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="draw one matrix and dump it as raw float64")
    _common(p)
    _ensemble_flags(p)
    p.add_argument("--n", type=int)
    p.add_argument("--stage", choices=[s.value for s in ensemble.Stage], default="raw")

    p = sub.add_parser("validate", help="exact identities and resolvent inequalities on random samples")
    _common(p)
    _ensemble_flags(p)
    p.add_argument("--n", type=int, default=40)
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--grid", default="5x5", help="NUxNV points of the domain")
    p.add_argument("--u0", type=float, default=2.5)
    p.add_argument("--V", type=float, default=2.0)
    p.add_argument("--A0", type=float, default=8.0)
    p.add_argument("--no-identities", action="store_true", help="skip the exact-identity residuals")

    for name, text in (
        ("locallaw", "E|m_n - s|^p over a (u, v, p, n) grid"),
        ("edgelaw", "E|Im m_n - Im s|^p outside the bulk"),
        ("applications", "Kolmogorov distance, rigidity, delocalization, short-scale law"),
    ):
        p = sub.add_parser(name, help=text)
        _common(p)

    p = sub.add_parser("semicircle-table", help="CSV of quantiles gamma_j")
    _common(p)
    p.add_argument("--n", type=int, required=True)

    p = sub.add_parser("rerun", help="repeat a run from its manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--workers", type=int)
    return parser


# --- helpers -----------------------------------------------------------------


def _resolve(args):
    """Merge config file and flags into a :class:`RunConfig`."""
    cfg = load_config(args.plan) if getattr(args, "plan", None) else RunConfig()
    cfg.subcommand = args.subcommand
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError(f"--seed: must be an unsigned 64-bit integer, got {args.seed}")
        cfg.seed = args.seed
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError(f"--workers: must be >= 1, got {args.workers}")
        cfg.workers = args.workers
    if args.out is not None:
        cfg.output_dir = args.out
    if args.format is not None:
        cfg.format = args.format
    if cfg.plan is not None and cfg.plan.base_seed != cfg.seed:
        cfg.plan = replace(cfg.plan, base_seed=cfg.seed)
    return cfg


def _spec_from_flags(args, cfg, n):
    if cfg.ensemble is not None and args.family is None:
        return cfg.ensemble.with_n(n)
    family = args.family or "gaussian"
    mapping = {"family": family}
    if args.delta is not None:
        mapping["claimed_delta"] = str(args.delta)
    if args.df is not None:
        mapping["df"] = str(args.df)
    if args.tail_index is not None:
        mapping["tail_index"] = str(args.tail_index)
    if args.trunc_D is not None:
        mapping["truncation_D"] = str(args.trunc_D)
    return ensemble.EnsembleSpec.from_config(mapping, n=n)


def _sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out, argv, cfg, outputs, wall):
    manifest = {
        "argv": list(argv),
        "subcommand": cfg.subcommand,
        "config_text": cfg.source_text,
        "config_sha256": cfg.config_hash,
        "seed": cfg.seed,
        "workers": cfg.workers,
        "format": cfg.format,
        "versions": {
            "wignerlab": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "wall_time_s": wall,
        "outputs": {Path(p).name: _sha256(p) for p in outputs},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return path


def _emit(report, out, fmt, stem):
    files = []
    if fmt in ("json", "both"):
        path = out / f"{stem}.json"
        path.write_text(report.to_json())
        files.append(path)
    if fmt in ("csv", "both"):
        path = out / f"{stem}.csv"
        report.write_csv(path)
        files.append(path)
    return files


# --- subcommands -------------------------------------------------------------


def cmd_sample(args, cfg):
    n = args.n or (cfg.ensemble.n if cfg.ensemble is not None else None)
    if n is None:
        raise ConfigError("sample: --n or [ensemble] n is required")
    spec = _spec_from_flags(args, cfg, n)
    s = ensemble.sample_stage(spec, cfg.seed, args.stage)
    out = cfg.output_dir
    binp = ensemble.save_sample(out / "sample.bin", s)
    meta = {
        "n": s.n,
        "seed": s.seed,
        "stage": s.stage.value,
        "ensemble": spec.to_config(),
        "truncated_count": s.truncated_count,
        "truncated_rows": s.truncated_rows,
        "bound": None if math.isinf(s.bound) else s.bound,
        "sigma": s.sigma,
    }
    metap = out / "sample.json"
    metap.write_text(json.dumps(meta, indent=1, sort_keys=True))
    return [binp, metap], 0


def _grid(text):
    try:
        nu, nv = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise ConfigError(f"--grid: expected NUxNV, got {text!r}") from None
    if nu < 1 or nv < 1:
        raise ConfigError(f"--grid: sizes must be positive, got {text!r}")
    return nu, nv


def cmd_validate(args, cfg):
    nu, nv = _grid(args.grid)
    spec = _spec_from_flags(args, cfg, args.n)
    domain = semicircle.DomainD(args.u0, args.V, args.A0, args.n)
    zs = domain.grid(nu, nv).ravel()
    rows = []
    failed = []
    lam_const = 0.0
    g_violations = 0
    for i in range(args.seeds):
        seed = split_seed(cfg.seed, VALIDATE_SEED_KEY, i)
        s = ensemble.sample_raw(spec, seed)
        for z in zs:
            rep = resolvent.validate_inequalities(s, z)
            rows.extend(c.as_row() for c in rep.checks)
            failed.extend(c for c in rep.failures(prefixes={"a", "b", "c", "d", "e", "f"}))
            g_violations += len(rep.failures(prefixes={"g"}))
            if not math.isnan(rep.lambda_constant):
                lam_const = max(lam_const, rep.lambda_constant)
            if not args.no_identities:
                tol = resolvent.identity_tolerance(args.n, z.imag)
                for name, r in resolvent.identity_residuals(s, z).items():
                    limit = 1e-5 if name == "derivative_fd" else tol
                    ok = bool(r <= limit)
                    rows.append(
                        {"check_id": f"identity_{name}", "passed": ok, "margin": float(limit - r),
                         "n": args.n, "seed": int(seed), "u": float(z.real), "v": float(z.imag)}
                    )
                    if not ok:
                        failed.append(rows[-1])
    out = cfg.output_dir
    files = []
    if cfg.format in ("json", "both"):
        p = out / "validation.json"
        p.write_text(json.dumps(rows, indent=1))
        files.append(p)
    if cfg.format in ("csv", "both"):
        import csv

        p = out / "validation.csv"
        with p.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["check_id", "passed", "margin", "n", "seed", "u", "v"])
            w.writeheader()
            w.writerows(rows)
        files.append(p)
    summary = {
        "checks": len(rows),
        "failed_a_to_f_and_identities": len(failed),
        "lambda_surrogate_violations": g_violations,
        "lambda_empirical_constant": lam_const,
    }
    p = out / "validation_summary.json"
    p.write_text(json.dumps(summary, indent=1, sort_keys=True))
    files.append(p)
    if g_violations:
        print(f"warning: |Lambda| <= 4 min(|T|/|b|, sqrt|T|) violated {g_violations} times", file=sys.stderr)
    print(json.dumps(summary, sort_keys=True))
    return files, 1 if failed else 0


def _need_plan(cfg):
    if cfg.plan is None:
        raise ConfigError(f"{cfg.subcommand}: --plan FILE with a [plan] section is required")
    return cfg.plan


def cmd_locallaw(args, cfg):
    rep = locallaw.run_local_law(_need_plan(cfg), workers=cfg.workers, strict=cfg.strict)
    rep.checks = locallaw.slope_checks(rep, cfg.acceptance)
    files = _emit(rep, cfg.output_dir, cfg.format, "locallaw")
    return files, 0 if all(c["passed"] for c in rep.checks) else 1


def cmd_edgelaw(args, cfg):
    rep = locallaw.run_edge_law(_need_plan(cfg), workers=cfg.workers, strict=cfg.strict)
    rep.checks = locallaw.slope_checks(rep, cfg.acceptance)
    files = _emit(rep, cfg.output_dir, cfg.format, "edgelaw")
    return files, 0 if all(c["passed"] for c in rep.checks) else 1


def cmd_applications(args, cfg):
    rep = locallaw.run_applications(_need_plan(cfg), workers=cfg.workers)
    rep.checks = locallaw.applications_checks(rep, cfg.acceptance)
    files = _emit(rep, cfg.output_dir, cfg.format, "applications")
    return files, 0 if all(c["passed"] for c in rep.checks) else 1


def cmd_semicircle_table(args, cfg):
    out = args.out if args.out is not None else Path("gammas.csv")
    if out.suffix.lower() != ".csv":
        out = out / "gammas.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    semicircle.write_quantile_table(out, args.n)
    cfg.output_dir = out.parent
    return [out], 0


COMMANDS = {
    "sample": cmd_sample,
    "validate": cmd_validate,
    "locallaw": cmd_locallaw,
    "edgelaw": cmd_edgelaw,
    "applications": cmd_applications,
    "semicircle-table": cmd_semicircle_table,
}


def _rerun(args):
    try:
        manifest = json.loads(args.manifest.read_text())
    except (OSError, ValueError) as exc:
        print(f"wignerlab: error: cannot read manifest: {exc}", file=sys.stderr)
        return 2
    argv = list(manifest["argv"])
    args.out.mkdir(parents=True, exist_ok=True)

    def set_flag(flag, value):
        if flag in argv:
            argv[argv.index(flag) + 1] = value
        else:
            argv.extend([flag, value])

    if manifest.get("config_text"):
        plan = args.out / "plan.cfg"
        plan.write_text(manifest["config_text"])
        set_flag("--plan", str(plan))
    out = args.out
    if manifest["subcommand"] == "semicircle-table":
        out = args.out / "gammas.csv"
    set_flag("--out", str(out))
    set_flag("--seed", str(manifest["seed"]))
    set_flag("--workers", str(args.workers or manifest["workers"]))
    return main(argv)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.subcommand == "rerun":
        return _rerun(args)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _resolve(args)
        if args.subcommand != "semicircle-table":
            cfg.output_dir.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        files, code = COMMANDS[args.subcommand](args, cfg)
    except ConfigError as exc:
        parser.print_usage(sys.stderr)
        for problem in exc.problems:
            print(f"wignerlab: config error: {problem}", file=sys.stderr)
        return 2
    _write_manifest(cfg.output_dir, argv, cfg, files, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
