"""Per-sample derivative estimators and replicated estimates.

Per-sample functions accept one point ``(n,)`` or a batch ``(m, n)`` and
return a scalar or an ``(m,)`` array.  ``estimate`` draws replication ``k``
from its own stream ``RngStream(seed, k)`` and evaluates fixed-size chunks
of replications, so results do not depend on the number of worker threads.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import calculus as calc
from .calculus import DEFAULT_FD, DENSITY_FLOOR, FDConfig
from .errors import (
    GLRError,
    MissingFaceDraw,
    ReplicationError,
    SmoothnessViolation,
    UnsupportedSupport,
    ZeroDensity,
)
from .model import ParametricDensity, Problem, Smoothness, Support
from .sampling import RngStream, sample_face_conditional, summarize

log = logging.getLogger(__name__)

CHUNK = 256
_warned: set = set()


class EstimatorKind(str, Enum):
    IPA_LR = "ipa_lr"
    PUSHOUT_LR = "pushout_lr"
    GLR_INTERIOR = "glr_interior"
    GLR_SURFACE_RECT = "glr_surface_rect"
    GLR_FULL = "glr_full"
    GLR_SINGLE_RUN = "glr_single_run"


@dataclass(frozen=True)
class EstimateReport:
    estimator: EstimatorKind
    theta: float
    point: float
    stderr: float
    replications: int
    seed: int


# -- per-sample estimators ----------------------------------------------------


def ipa_lr_sample(p: Problem, base_density: ParametricDensity, x, theta: float, fd: FDConfig = DEFAULT_FD):
    """IPA term ``d_theta psi * h`` plus LR term ``psi * d_theta h`` with ``h = f / f0``.

    ``x`` is drawn from the theta-free ``base_density``.
    """
    if p.performance.smoothness is not Smoothness.SMOOTH:
        raise SmoothnessViolation("IPA needs a performance tagged smooth")
    x = np.asarray(x, dtype=float)
    f0 = calc.check_finite(base_density.density(x, theta), "base density")
    if np.any(f0 <= DENSITY_FLOOR):
        raise ZeroDensity("base density vanishes at the sample", index=calc._first_bad(f0 <= DENSITY_FLOOR))
    ratio = calc.density(p, x, theta) / f0
    dratio = calc.score(p, x, theta, fd) * ratio
    psi = p.psi(x, theta)
    if p.performance.grad is not None:
        y = p.transform.map(x, theta)
        dpsi = np.sum(np.asarray(p.performance.grad(y)) * calc.dtheta(p, x, theta, fd), axis=-1)
    else:
        dpsi = calc.fd_theta(lambda t: p.psi(x, t), theta, fd)
    return dpsi * ratio + psi * dratio


def pushout_lr_sample(y, theta: float, pushed_density_score, pushed_perf):
    """``phi(y) * d_theta log f_Y(y, theta)`` for ``y`` drawn from the pushed density."""
    y = np.asarray(y, dtype=float)
    perf = calc.check_finite(pushed_perf(y), "pushed performance")
    return perf * calc.check_finite(pushed_density_score(y, theta), "pushed score")


def glr_interior_sample(p: Problem, x, theta: float, fd: FDConfig = DEFAULT_FD):
    x = np.asarray(x, dtype=float)
    w = calc.weight_d(p, x, theta, fd) + calc.weight_l(p, x, theta, fd)
    return p.psi(x, theta) * w


def _face_marginal(p: Problem, face, theta: float) -> float:
    if p.density.marginal is not None:
        return float(np.asarray(p.density.marginal(face.index, face.value, theta)))
    if p.dims == 1:
        return float(calc.density(p, np.array([face.value]), theta))
    raise ValueError("surface estimator needs marginal densities")


def glr_surface_rect_sample(p: Problem, theta: float, face_draws: dict, fd: FDConfig = DEFAULT_FD):
    """Signed sum over finite faces of ``phi(g) f_{X_i}(face) s_i`` at the face draws.

    Faces at infinite bounds are not enumerated; their contribution is taken
    to be zero, which requires the density tails to decay.
    """
    if not isinstance(p.support, Support):
        raise UnsupportedSupport("surface estimator is implemented for hyperrectangles only")
    total = 0.0
    for face in p.support.faces():
        if face not in face_draws:
            raise MissingFaceDraw(f"no draw for face {face}")
        xf = np.asarray(face_draws[face], dtype=float)
        s = calc.velocity(p, xf, theta, fd)
        total = total + face.sign * p.psi(xf, theta) * _face_marginal(p, face, theta) * s[..., face.index]
    return total


def glr_full_sample(p: Problem, x, theta: float, face_draws: dict, fd: FDConfig = DEFAULT_FD):
    return glr_interior_sample(p, x, theta, fd) + glr_surface_rect_sample(p, theta, face_draws, fd)


def glr_single_run_sample(p: Problem, x, theta: float, fd: FDConfig = DEFAULT_FD):
    """Interior GLR term plus ``div(phi(g) s f) / f`` expanded by the product rule.

    The caller asserts that the discontinuity set of ``phi`` is small enough
    for the divergence theorem to hold; this is not checked.
    """
    perf = p.performance
    if perf.grad is None or perf.smoothness is Smoothness.MEASURABLE_ONLY:
        raise SmoothnessViolation("single-run estimator needs an a.e. differentiable performance with a gradient")
    x = np.asarray(x, dtype=float)
    f = calc.density(p, x, theta)
    w = calc.weights(p, x, theta, fd)
    y = p.transform.map(x, theta)
    psi = np.asarray(perf.eval(y), dtype=float)
    grad = np.asarray(perf.grad(y), dtype=float)
    jac = calc.jacobian(p, x, theta, fd)
    chain = np.sum(grad * np.einsum("...ij,...j->...i", jac, w.s), axis=-1)
    return psi * (w.d + w.l) + chain + psi * calc.div_sf(p, x, theta, fd) / f


# -- replication driver -------------------------------------------------------


def _stack(rows) -> np.ndarray:
    return np.stack([np.asarray(r, dtype=float) for r in rows])


def _chunk_values(p: Problem, kind: EstimatorKind, theta: float, seed: int, start: int, stop: int, fd: FDConfig):
    streams = [RngStream(seed, k) for k in range(start, stop)]
    if kind is EstimatorKind.PUSHOUT_LR:
        po = p.pushout
        ys = _stack([po.sampler(st, theta) for st in streams])
        return lambda rows=slice(None): pushout_lr_sample(ys[rows], theta, po.score, po.performance)
    if kind is EstimatorKind.IPA_LR:
        base = p.base_density
        xs = _stack([base.sampler(st, theta) for st in streams])
        return lambda rows=slice(None): ipa_lr_sample(p, base, xs[rows], theta, fd)

    xs = _stack([p.density.sampler(st, theta) for st in streams])
    if kind is EstimatorKind.GLR_INTERIOR:
        return lambda rows=slice(None): glr_interior_sample(p, xs[rows], theta, fd)
    if kind is EstimatorKind.GLR_SINGLE_RUN:
        return lambda rows=slice(None): glr_single_run_sample(p, xs[rows], theta, fd)

    faces = p.support.faces()
    draws = {face: [] for face in faces}
    for st, x in zip(streams, xs):
        for face in faces:
            draws[face].append(sample_face_conditional(p, st, face, theta, interior=x))
    draws = {face: _stack(v) for face, v in draws.items()}
    if kind is EstimatorKind.GLR_SURFACE_RECT:
        return lambda rows=slice(None): np.broadcast_to(
            glr_surface_rect_sample(p, theta, {f: d[rows] for f, d in draws.items()}, fd), xs[rows].shape[:1]
        )
    return lambda rows=slice(None): glr_full_sample(p, xs[rows], theta, {f: d[rows] for f, d in draws.items()}, fd)


def _run_chunk(p, kind, theta, seed, start, stop, fd) -> np.ndarray:
    try:
        evaluate = _chunk_values(p, kind, theta, seed, start, stop, fd)
        values = np.asarray(evaluate(), dtype=float)
        calc.check_finite(values, "estimator")
        return values
    except GLRError as exc:
        # locate the first failing replication by re-evaluating rows one at a time
        for k in range(start, stop):
            try:
                row = _chunk_values(p, kind, theta, seed, k, k + 1, fd)()
                calc.check_finite(row, "estimator")
            except GLRError as inner:
                raise ReplicationError(k, inner) from inner
        raise ReplicationError(start, exc) from exc


def check_preconditions(p: Problem, kind: EstimatorKind):
    """Raise ``ValueError`` when ``p`` cannot feed estimator ``kind``."""
    kind = EstimatorKind(kind)
    if kind is EstimatorKind.PUSHOUT_LR and p.pushout is None:
        raise ValueError(f"problem {p.name!r} registers no push-out formulation")
    if kind is EstimatorKind.IPA_LR:
        if p.base_density is None or p.base_density.sampler is None:
            raise ValueError(f"problem {p.name!r} registers no sampled base density")
        if p.performance.smoothness is not Smoothness.SMOOTH:
            raise SmoothnessViolation("IPA needs a performance tagged smooth")
    if kind is EstimatorKind.GLR_SINGLE_RUN and (
        p.performance.grad is None or p.performance.smoothness is Smoothness.MEASURABLE_ONLY
    ):
        raise SmoothnessViolation("single-run estimator needs an a.e. differentiable performance with a gradient")
    if kind not in (EstimatorKind.PUSHOUT_LR, EstimatorKind.IPA_LR) and p.density.sampler is None:
        raise ValueError(f"problem {p.name!r} has no sampler for its density")


def estimate(
    p: Problem,
    kind: EstimatorKind | str,
    theta: float,
    replications: int,
    seed: int,
    parallel: int = 1,
    fd: FDConfig = DEFAULT_FD,
) -> EstimateReport:
    kind = EstimatorKind(kind)
    if replications < 1:
        raise ValueError("replications must be >= 1")
    if theta not in p.theta_interval:
        raise ValueError(f"theta={theta} outside ({p.theta_interval.lo}, {p.theta_interval.hi})")
    check_preconditions(p, kind)
    if kind in (EstimatorKind.GLR_SURFACE_RECT, EstimatorKind.GLR_FULL) and not p.support.bounded and (p.name, kind) not in _warned:
        _warned.add((p.name, kind))
        log.warning("%s: infinite faces of %r assumed to contribute zero (density tails must decay)", kind.value, p.name)

    bounds = [(k, min(k + CHUNK, replications)) for k in range(0, replications, CHUNK)]
    if parallel > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            parts = list(pool.map(lambda b: _run_chunk(p, kind, theta, seed, b[0], b[1], fd), bounds))
    else:
        parts = [_run_chunk(p, kind, theta, seed, a, b, fd) for a, b in bounds]
    stats = summarize(np.concatenate(parts))
    return EstimateReport(kind, float(theta), stats.mean, stats.stderr, replications, seed)


def glr_full_estimate(p: Problem, theta: float, replications: int, seed: int, parallel: int = 1) -> EstimateReport:
    return estimate(p, EstimatorKind.GLR_FULL, theta, replications, seed, parallel)


def per_replication_values(p: Problem, kind: EstimatorKind | str, theta: float, replications: int, seed: int, fd: FDConfig = DEFAULT_FD) -> np.ndarray:
    """Raw per-replication samples, in replication order."""
    kind = EstimatorKind(kind)
    check_preconditions(p, kind)
    return np.concatenate([
        _run_chunk(p, kind, theta, seed, a, min(a + CHUNK, replications), fd)
        for a in range(0, replications, CHUNK)
    ])


def stderr_ratio(a: EstimateReport, b: EstimateReport) -> float:
    return a.stderr / b.stderr if b.stderr else math.inf
