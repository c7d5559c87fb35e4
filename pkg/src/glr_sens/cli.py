"""Command-line front end: ``glr-sens run | verify | list-problems``.

Exit codes: 0 success, 2 configuration error, 3 problem validation failure,
4 estimator runtime error, 5 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import GLRError, ReplicationError
from .estimators import EstimatorKind, check_preconditions, estimate
from .problems import BUILTIN, LEIBNIZ_SCENARIOS, get_problem
from .sampling import parse_seed
from .validation import validate_problem
from .verify import glr_identity_check, prop1_identity_check, truncated_box

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("glr_sens")

CONFIG_VERSION = 1
CSV_HEADER = ["estimator", "theta", "true_value", "point", "stderr", "replications", "seed"]
DEFAULT_SEED = 0
SEED_ENV = "GLR_SENS_SEED"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4
EXIT_VERIFY = 5

PRESETS = {
    "fig2": {
        "problem": "toy_shifted_exp",
        "estimators": ["glr_full", "pushout_lr"],
        "thetas": [0.2, 0.4, 0.6, 0.8],
        "replications": 2500,
    },
}

# residual tolerances used by `verify`
IDENTITY_TOL = 1e-5
PROP1_TOL = 1e-6
LEIBNIZ_TOL = {"shifted_exp_1d": 1e-6, "translating_box": 1e-7, "dilating_box": 1e-7}


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    estimators: list = field(default_factory=lambda: ["glr_full"])
    thetas: list = field(default_factory=list)
    replications: int = 2500
    seed: int = DEFAULT_SEED
    out: str | None = None
    format: str = "csv"
    parallel: int = 1


def fmt_float(v: float) -> str:
    return format(float(v), ".17g")


def load_config_file(path: str) -> dict:
    """Read the flat TOML experiment file; ``version`` must equal ``CONFIG_VERSION``."""
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path}: {exc}") from None
    version = data.pop("version", None)
    if version != CONFIG_VERSION:
        raise ConfigError(f"config file {path}: version must be {CONFIG_VERSION}, got {version!r}")
    known = {"preset", "problem", "estimators", "thetas", "replications", "seed", "out", "format", "parallel"}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"config file {path}: unknown keys {', '.join(unknown)}")
    return data


def parse_theta_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"cannot parse theta list {text!r}") from None


def build_config(args: argparse.Namespace, env=os.environ) -> ExperimentConfig:
    """Merge preset, config file, and flags (later sources win)."""
    values: dict = {}
    file_values = load_config_file(args.config) if args.config else {}
    preset = args.preset or file_values.pop("preset", None)
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; known: {', '.join(sorted(PRESETS))}")
        values.update(PRESETS[preset])
    values.update(file_values)
    for key in ("problem", "replications", "out", "format", "parallel"):
        if getattr(args, key, None) is not None:
            values[key] = getattr(args, key)
    if args.theta is not None:
        values["thetas"] = parse_theta_list(args.theta)
    if args.estimators is not None:
        values["estimators"] = [e for e in args.estimators.replace(",", " ").split() if e]

    seed_text = args.seed if args.seed is not None else values.get("seed", env.get(SEED_ENV))
    try:
        values["seed"] = DEFAULT_SEED if seed_text is None else parse_seed(seed_text)
    except ValueError:
        raise ConfigError(f"cannot parse seed {seed_text!r}") from None

    if "problem" not in values:
        raise ConfigError("no problem given (use --problem, --preset or a config file)")
    try:
        cfg = ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return check_config(cfg)


def check_config(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.problem not in BUILTIN:
        raise ConfigError(f"unknown problem {cfg.problem!r}; known: {', '.join(sorted(BUILTIN))}")
    if not isinstance(cfg.replications, int) or cfg.replications < 1:
        raise ConfigError("replications must be ≥ 1")
    if cfg.parallel < 1:
        raise ConfigError("parallel must be ≥ 1")
    if cfg.format not in ("csv", "table"):
        raise ConfigError(f"format must be csv or table, got {cfg.format!r}")
    try:
        kinds = [EstimatorKind(e) for e in cfg.estimators]
    except ValueError as exc:
        raise ConfigError(f"{exc}; known: {', '.join(k.value for k in EstimatorKind)}") from None
    if not kinds:
        raise ConfigError("no estimators given")
    thetas = [float(t) for t in cfg.thetas]
    if not thetas:
        raise ConfigError("no theta values given")
    interval = get_problem(cfg.problem).theta_interval
    for t in thetas:
        if t not in interval:
            raise ConfigError(f"theta={t:g} lies outside the parameter interval ({interval.lo:g}, {interval.hi:g})")
    return replace(cfg, estimators=kinds, thetas=thetas)


# -- output -------------------------------------------------------------------


def render_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in rows:
        writer.writerow([
            r["estimator"],
            fmt_float(r["theta"]),
            "" if r["true_value"] is None else fmt_float(r["true_value"]),
            fmt_float(r["point"]),
            fmt_float(r["stderr"]),
            r["replications"],
            r["seed"],
        ])
    return buf.getvalue()


def render_table(header: list[str], lines: list[list[str]]) -> str:
    widths = [max(len(h), *(len(row[i]) for row in lines)) if lines else len(h) for i, h in enumerate(header)]
    out = ["  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip()]
    out.append("  ".join("-" * w for w in widths))
    out += ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in lines]
    return "\n".join(out) + "\n"


def render_run_table(rows: list[dict]) -> str:
    lines = []
    for r in rows:
        true = "" if r["true_value"] is None else f"{r['true_value']:.4f}"
        lines.append([r["estimator"], f"{r['theta']:g}", true, f"{r['point']:.4f} ± {r['stderr']:.4f}", str(r["replications"]), str(r["seed"])])
    return render_table(["estimator", "theta", "true", "estimate", "N", "seed"], lines)


def emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# -- subcommands --------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig) -> int:
    p = get_problem(cfg.problem)
    try:
        for kind in cfg.estimators:
            check_preconditions(p, kind)
    except (ValueError, GLRError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        report = validate_problem(p)
    except GLRError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if not report.passed:
        for c in report.failures():
            print(f"validation failed: {c.name} (max residual {c.max_residual:.3g}) {c.detail}".rstrip(), file=sys.stderr)
        return EXIT_VALIDATION

    rows = []
    for kind in cfg.estimators:
        for theta in cfg.thetas:
            try:
                rep = estimate(p, kind, theta, cfg.replications, cfg.seed, cfg.parallel)
            except ReplicationError as exc:
                print(f"runtime error in {kind.value} at theta={theta:g}: {exc}", file=sys.stderr)
                return EXIT_RUNTIME
            except GLRError as exc:
                print(f"runtime error in {kind.value} at theta={theta:g}: {exc}", file=sys.stderr)
                return EXIT_RUNTIME
            rows.append({
                "estimator": kind.value,
                "theta": theta,
                "true_value": p.true_derivative(theta) if p.true_derivative else None,
                "point": rep.point,
                "stderr": rep.stderr,
                "replications": rep.replications,
                "seed": rep.seed,
            })
    emit(render_csv(rows) if cfg.format == "csv" else render_run_table(rows), cfg.out)
    return EXIT_OK


def _probe_point(p, theta: float) -> np.ndarray:
    # interior point used by the change-of-variables check: bounded axes use the midpoint
    lower, upper = truncated_box(p, theta, 0.25)
    return 0.5 * (np.array(lower) + np.array(upper))


def verify_problem(problem_id: str, thetas: list[float] | None = None, identity_tol: float = IDENTITY_TOL) -> list[dict]:
    """Run every checker registered for ``problem_id``; one result row per check."""
    p = get_problem(problem_id)
    grid = thetas or p.theta_interval.grid(5)
    results = []

    def record(check, theta, residual, tol, error=None):
        ok = error is None and residual < tol
        results.append({"check": check, "theta": theta, "residual": residual, "tol": tol, "passed": ok, "error": error})

    for theta in grid:
        try:
            rep = glr_identity_check(p, theta)
            record("glr_identity", theta, rep.residual, identity_tol)
        except (GLRError, ValueError) as exc:
            record("glr_identity", theta, math.inf, identity_tol, str(exc))
    # Newton inversion from the probe point; a failure is reported, not skipped
    for theta in grid:
        try:
            rep = prop1_identity_check(p, _probe_point(p, theta), theta)
            record("prop1_cov1", theta, rep.cov1_residual, PROP1_TOL)
            record("prop1_cov2", theta, rep.cov2_residual, PROP1_TOL)
        except (GLRError, ValueError) as exc:
            record("prop1_cov1", theta, math.inf, PROP1_TOL, str(exc))
    for name in p.extras.get("leibniz", []):
        for theta in grid:
            try:
                res = LEIBNIZ_SCENARIOS[name](theta)
                record(f"leibniz_{name}", theta, res.residual, LEIBNIZ_TOL[name])
            except (GLRError, ValueError) as exc:
                record(f"leibniz_{name}", theta, math.inf, LEIBNIZ_TOL[name], str(exc))
    return results


def run_verify(args: argparse.Namespace) -> int:
    if args.problem not in BUILTIN:
        print(f"error: unknown problem {args.problem!r}; known: {', '.join(sorted(BUILTIN))}", file=sys.stderr)
        return EXIT_CONFIG
    p = get_problem(args.problem)
    thetas = None
    if args.theta is not None:
        thetas = parse_theta_list(args.theta)
        for t in thetas:
            if t not in p.theta_interval:
                print(f"error: theta={t:g} lies outside the parameter interval ({p.theta_interval.lo:g}, {p.theta_interval.hi:g})", file=sys.stderr)
                return EXIT_CONFIG
    results = verify_problem(args.problem, thetas, args.tol)
    lines = [
        [r["check"], f"{r['theta']:.6g}", f"{r['residual']:.3e}", f"{r['tol']:.0e}", "pass" if r["passed"] else "FAIL"]
        for r in results
    ]
    emit(render_table(["check", "theta", "residual", "tol", "status"], lines), args.out)
    failed = sorted({r["check"] for r in results if not r["passed"]})
    if failed:
        for r in results:
            if r["error"]:
                print(f"{r['check']} at theta={r['theta']:g}: {r['error']}", file=sys.stderr)
        print(f"verification failed: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def run_list(args: argparse.Namespace) -> int:
    lines = []
    for pid in sorted(BUILTIN):
        p = get_problem(pid)
        doc = (BUILTIN[pid].__doc__ or "").strip().splitlines()
        analytic = "yes" if p.true_derivative else "no"
        lines.append([pid, str(p.dims), f"({p.theta_interval.lo:g}, {p.theta_interval.hi:g})", analytic, doc[0] if doc else ""])
    emit(render_table(["id", "dims", "theta interval", "analytic", "description"], lines), None)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glr-sens", description="GLR derivative estimation experiments and oracle checks.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="estimate derivatives and write a CSV or table")
    run.add_argument("--config", help="TOML experiment file (flat keys, version = 1)")
    run.add_argument("--preset", help=f"named experiment: {', '.join(sorted(PRESETS))}")
    run.add_argument("--problem", help="built-in problem id")
    run.add_argument("--estimators", help="comma-separated estimator kinds")
    run.add_argument("--theta", help="comma-separated theta values")
    run.add_argument("--reps", dest="replications", type=int, help="replications per theta")
    run.add_argument("--seed", help=f"decimal or 0x-hex seed (fallback: ${SEED_ENV}, then {DEFAULT_SEED})")
    run.add_argument("--out", help="output path (default stdout)")
    run.add_argument("--format", choices=["csv", "table"])
    run.add_argument("--parallel", type=int, help="worker threads")

    ver = sub.add_parser("verify", help="run the quadrature and finite-difference oracles")
    ver.add_argument("--problem", required=True, help="built-in problem id")
    ver.add_argument("--theta", help="comma-separated theta values (default: 5-point interior grid)")
    ver.add_argument("--tol", type=float, default=IDENTITY_TOL, help="identity residual tolerance")
    ver.add_argument("--out", help="output path (default stdout)")

    sub.add_parser("list-problems", help="list built-in problem ids")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        if args.command == "run":
            return run_experiment(build_config(args))
        if args.command == "verify":
            return run_verify(args)
        return run_list(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
