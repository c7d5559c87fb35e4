"""Pre-flight consistency checks on a user problem.

Probe points are drawn uniformly from the support with infinite bounds capped
at marginal quantiles, and probe parameters uniformly from the open interval.
Each check compares a user-supplied callable against a finite-difference or
quadrature reference and records the largest residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import calculus as calc
from .calculus import DEFAULT_FD, FDConfig
from .errors import DimensionMismatch
from .model import Problem
from .quadrature import QuadratureConfig, integrate_box
from .sampling import RngStream
from .verify import MAX_QUAD_DIMS, truncated_box

PROBE_TAIL = 1e-6
NORMALIZATION_TOL = 1e-8
CONSISTENCY_RTOL = 1e-5


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    max_residual: float
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def probe_points(p: Problem, probes: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """``probes`` points ``(m, n)`` and matching parameters ``(m,)``."""
    stream = RngStream(seed, 0)
    lo_t, hi_t = p.theta_interval.lo, p.theta_interval.hi
    thetas = lo_t + (hi_t - lo_t) * stream.uniform(probes)
    # caps are taken at the interval midpoint so every probe shares one box
    lower, upper = truncated_box(p, 0.5 * (lo_t + hi_t), PROBE_TAIL)
    lower, upper = np.array(lower), np.array(upper)
    xs = lower + (upper - lower) * stream.uniform((probes, p.dims))
    return xs, thetas


def _relative_excess(value, reference) -> tuple[bool, float]:
    """``(passed, max absolute residual)`` under a mixed absolute/relative tolerance."""
    diff = np.abs(np.asarray(value, float) - np.asarray(reference, float))
    ok = diff <= CONSISTENCY_RTOL * (1.0 + np.abs(reference))
    return bool(np.all(ok)), float(np.max(diff))


def _check_shape(values, expected: tuple, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != expected:
        raise DimensionMismatch(f"{what} returned shape {values.shape}, expected {expected}")
    return values


def _normalization(p: Problem, thetas, quad: QuadratureConfig) -> CheckResult:
    if p.dims > MAX_QUAD_DIMS:
        return CheckResult("normalization", True, 0.0, f"skipped: more than {MAX_QUAD_DIMS} dimensions")
    worst = 0.0
    for t in thetas:
        lower, upper = truncated_box(p, t, quad.tail_mass)
        mass = integrate_box(lambda x: calc.density(p, x, t), lower, upper, quad).value
        worst = max(worst, abs(mass - 1.0))
    return CheckResult("normalization", worst < NORMALIZATION_TOL, worst)


def validate_problem(
    p: Problem,
    probes: int = 16,
    seed: int = 0,
    fd: FDConfig = DEFAULT_FD,
    quad: QuadratureConfig = QuadratureConfig(abs_tol=1e-10),
    normalization_thetas: int = 3,
) -> ValidationReport:
    """Run the density, transform and performance consistency probes.

    Raises ``NonFiniteValue`` when a callable returns NaN or an infinity at a
    probe and ``DimensionMismatch`` when a callable returns the wrong shape.
    """
    if probes < 1:
        raise ValueError("probes must be >= 1")
    n = p.dims
    xs, thetas = probe_points(p, probes, seed)
    m = probes
    checks = []

    f = np.array([calc.check_finite(_check_shape(p.density.density(x, t), (), "density"), "density") for x, t in zip(xs, thetas)])
    neg = float(max(0.0, -f.min()))
    checks.append(CheckResult("density_nonnegative", neg == 0.0, neg))
    checks.append(_normalization(p, thetas[:normalization_thetas], quad))

    if p.density.score is not None:
        user = np.array([_check_shape(calc.score(p, x, t, fd), (), "score") for x, t in zip(xs, thetas)])
        ref = np.array([calc.fd_theta(lambda s: np.log(p.density.density(x, s)), t, fd) for x, t in zip(xs, thetas)])
        checks.append(CheckResult("score", *_relative_excess(user, calc.check_finite(ref, "log density"))))
    else:
        checks.append(CheckResult("score", True, 0.0, "no analytic score; finite differences used"))

    if p.density.grad_x is not None:
        user = np.array([_check_shape(calc.check_finite(p.density.grad_x(x, t), "grad_x"), (n,), "grad_x") for x, t in zip(xs, thetas)])
        ref = np.array([calc.fd_jacobian(lambda z: np.asarray(p.density.density(z, t))[..., None], x, fd)[0] for x, t in zip(xs, thetas)])
        checks.append(CheckResult("grad_x", *_relative_excess(user, ref)))

    jac = np.array([_check_shape(calc.jacobian(p, x, t, fd), (n, n), "jacobian") for x, t in zip(xs, thetas)])
    if p.transform.jacobian is not None:
        ref = np.array([calc.fd_jacobian(lambda z: p.transform.map(z, t), x, fd) for x, t in zip(xs, thetas)])
        checks.append(CheckResult("jacobian", *_relative_excess(jac, ref)))
    else:
        checks.append(CheckResult("jacobian", True, 0.0, "no analytic Jacobian; finite differences used"))

    vel = np.array([_check_shape(calc.dtheta(p, x, t, fd), (n,), "dtheta") for x, t in zip(xs, thetas)])
    if p.transform.dtheta is not None:
        ref = np.array([calc.fd_theta(lambda s: p.transform.map(x, s), t, fd) for x, t in zip(xs, thetas)])
        checks.append(CheckResult("dtheta", *_relative_excess(vel, calc.check_finite(ref, "map"))))
    else:
        checks.append(CheckResult("dtheta", True, 0.0, "no analytic dtheta; finite differences used"))

    with np.errstate(divide="ignore", invalid="ignore"):
        _, rcond = calc.solve_pivoted(jac, vel, singular_tol=0.0)
    worst = float(rcond.min())
    checks.append(CheckResult(
        "invertibility",
        worst >= calc.SINGULAR_TOL,
        # report how far below the threshold the worst probe fell
        max(0.0, calc.SINGULAR_TOL - worst),
        f"min rcond estimate {worst:.3g}",
    ))

    perf = np.array([
        calc.check_finite(_check_shape(p.psi(x, t), (), "performance"), "performance") for x, t in zip(xs, thetas)
    ])
    peak = float(np.max(np.abs(perf))) if m else 0.0
    bound = p.performance.bound
    checks.append(CheckResult("performance_bound", peak <= bound, max(0.0, peak - bound), f"max |phi| {peak:.6g}, bound {bound:.6g}"))

    if p.performance.grad is not None:
        ys = np.array([p.transform.map(x, t) for x, t in zip(xs, thetas)])
        g = calc.check_finite(p.performance.grad(ys), "performance gradient")
        _check_shape(g, (m, n), "performance gradient")
        checks.append(CheckResult("performance_grad", True, 0.0, "finite at probes"))

    if not math.isfinite(bound):
        checks.append(CheckResult("performance_bound_declared", False, math.inf, "bound must be finite"))
    return ValidationReport(checks)
