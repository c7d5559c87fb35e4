"""Adaptive Gauss-Kronrod (7/15) quadrature, nested per axis over a box.

Many independent 1-D integrals ("owners") are refined together so that every
round issues a single vectorized call to the integrand.  Nested integration
uses this to run the inner integrals for all outer nodes of a round at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Nonconvergence

_XK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
])
_WK0 = 0.209482141084727828012999174891714
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
])
_WG0 = 0.417959183673469387755102040816327

# 15 nodes ordered -x..., 0, +x...
NODES = np.concatenate([-_XK, [0.0], _XK[::-1]])
KRONROD = np.concatenate([_WK, [_WK0], _WK[::-1]])
_g = np.zeros(7)
_g[[1, 3, 5]] = _WG
GAUSS = np.concatenate([_g, [_WG0], _g[::-1]])
# fraction of a half-width left uncovered beyond the outermost node
_GAP = 1.0 - _XK[0]


_EPS = np.finfo(float).eps


def _qk_error(f, k, g, half):
    # QUADPACK QK15 scaling of |K - G|
    raw = np.abs(k - g)
    mean = (k / np.where(half == 0, 1.0, 2.0 * half))[:, None]
    resasc = half * (np.abs(f - mean) @ KRONROD)
    resabs = half * (np.abs(f) @ KRONROD)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = np.where(
            (resasc > 0) & (raw > 0),
            resasc * np.minimum(1.0, (200.0 * raw / resasc) ** 1.5),
            raw,
        )
    return np.maximum(scaled, 50.0 * _EPS * resabs)


_LEFT_T = NODES[:3]
_RIGHT_T = NODES[:-4:-1]


def _edge_mismatch(f3, t3, fq, tq):
    """Unexplained difference between ``fq`` at ``tq`` and a linear extrapolation.

    ``f3`` holds the three outermost node values, outermost first.  Differences
    within 10x of the curvature-predicted extrapolation error count as smooth.
    """
    f0, f1, f2 = f3[:, 0], f3[:, 1], f3[:, 2]
    t0, t1, t2 = t3
    slope = (f1 - f0) / (t1 - t0)
    dd2 = ((f2 - f1) / (t2 - t1) - slope) / (t2 - t0)
    miss = np.abs(fq - (f0 + slope * (tq - t0)))
    expected = np.abs(dd2 * (tq - t0) * (tq - t1))
    floor = 1e3 * _EPS * np.maximum(np.abs(f0), np.abs(fq))
    return np.where(miss > 10.0 * expected + floor, miss, 0.0)


@dataclass(frozen=True)
class QuadratureConfig:
    abs_tol: float = 1e-10
    max_intervals: int = 5_000
    tail_mass: float = 1e-12
    inner_ratio: float = 0.1


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    evaluations: int


def integrate_many(fn, a, b, tol: float, max_intervals: int = 5_000):
    """Integrate ``K`` scalar functions on ``[a_k, b_k]`` simultaneously.

    ``fn(t, owner)`` receives flat node arrays and the owner index of each
    node.  Returns ``(values, errors, evaluations)``.

    Gauss-Kronrod nodes leave a small gap at each interval edge where a jump
    would be invisible.  Every gap is compared against the neighbouring
    interval's outermost node (or a probe just inside the integration limit)
    and an unexplained difference is charged to the error estimate.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    a, b = np.broadcast_arrays(a, b)
    a = a.ravel()
    b = b.ravel()
    n_owner = a.size
    ids = np.arange(n_owner)

    delta = 1e-13 * (b - a)
    probe_t = np.concatenate([a + delta, b - delta])
    probes = np.asarray(fn(probe_t, np.concatenate([ids, ids])), dtype=float)
    if not np.all(np.isfinite(probes)):
        raise Nonconvergence("integrand is not finite near an integration limit")
    probe_lo, probe_hi = probes[:n_owner], probes[n_owner:]
    evals = 2 * n_owner

    lo, hi, owner = a.copy(), b.copy(), ids.copy()
    val = np.zeros(n_owner)
    err = np.zeros(n_owner)
    edges = np.zeros((n_owner, 6))
    fresh = np.ones(n_owner, dtype=bool)
    while True:
        if np.any(fresh):
            mid = 0.5 * (lo[fresh] + hi[fresh])
            half = 0.5 * (hi[fresh] - lo[fresh])
            t = mid[:, None] + half[:, None] * NODES
            who = np.repeat(owner[fresh], NODES.size)
            f = np.asarray(fn(t.ravel(), who), dtype=float).reshape(t.shape)
            evals += f.size
            if not np.all(np.isfinite(f)):
                raise Nonconvergence("integrand is not finite at a quadrature node")
            k = half * (f @ KRONROD)
            g = half * (f @ GAUSS)
            val[fresh] = k
            err[fresh] = _qk_error(f, k, g, half)
            edges[fresh] = f[:, [0, 1, 2, -3, -2, -1]]
            fresh[:] = False

        order = np.lexsort((lo, owner))
        lo, hi, owner = lo[order], hi[order], owner[order]
        val, err, edges = val[order], err[order], edges[order]

        first = np.r_[True, owner[1:] != owner[:-1]]
        last = np.r_[owner[1:] != owner[:-1], True]
        half = 0.5 * (hi - lo)
        # neighbour's outermost node, or the limit probe, in this interval's [-1, 1] frame
        nb_half = np.where(first, 0.0, np.roll(half, 1))
        t_left = -1.0 - _GAP * nb_half / half
        f_left = np.where(first, probe_lo[owner], np.roll(edges[:, 5], 1))
        nb_half = np.where(last, 0.0, np.roll(half, -1))
        t_right = 1.0 + _GAP * nb_half / half
        f_right = np.where(last, probe_hi[owner], np.roll(edges[:, 0], -1))
        miss_l = _edge_mismatch(edges[:, :3], _LEFT_T, f_left, t_left)
        miss_r = _edge_mismatch(edges[:, :2:-1], _RIGHT_T, f_right, t_right)
        total = err + _GAP * half * (miss_l + miss_r)

        total_err = np.bincount(owner, total, minlength=n_owner)
        if np.all(total_err <= tol):
            break
        mid = 0.5 * (lo + hi)
        splittable = (hi - lo) > 1e-14 * np.maximum(1.0, np.abs(mid))
        # batched worst-first: split everything within 4x of the owner's worst interval
        worst = np.zeros(n_owner)
        np.maximum.at(worst, owner, np.where(splittable, total, 0.0))
        refine = (total_err[owner] > tol) & splittable & (total >= 0.25 * worst[owner]) & (total > 0)
        if not np.any(refine):
            raise Nonconvergence(f"quadrature stalled with error estimate {total_err.max():.3g} > {tol:.3g}")
        per_owner = np.bincount(owner, minlength=n_owner) + np.bincount(owner[refine], minlength=n_owner)
        if per_owner.max() > max_intervals:
            raise Nonconvergence(f"more than {max_intervals} subintervals needed")
        keep = ~refine
        m = mid[refine]
        n_new = 2 * m.size
        lo = np.concatenate([lo[keep], lo[refine], m])
        hi = np.concatenate([hi[keep], m, hi[refine]])
        owner = np.concatenate([owner[keep], owner[refine], owner[refine]])
        val = np.concatenate([val[keep], np.zeros(n_new)])
        err = np.concatenate([err[keep], np.zeros(n_new)])
        edges = np.concatenate([edges[keep], np.zeros((n_new, 6))])
        fresh = np.concatenate([np.zeros(keep.sum(), dtype=bool), np.ones(n_new, dtype=bool)])
    values = np.bincount(owner, val, minlength=n_owner)
    return values, total_err, evals


def _nested(fn, lower, upper, prefix, tol, cfg, counter):
    depth = prefix.shape[1]
    last = depth == len(lower) - 1
    width = upper[depth] - lower[depth]
    inner_tol = cfg.inner_ratio * tol / width if not last else None

    def slab(t, who):
        pts = np.concatenate([prefix[who], t[:, None]], axis=1)
        if last:
            return fn(pts)
        v, _ = _nested(fn, lower, upper, pts, inner_tol, cfg, counter)
        return v

    k = prefix.shape[0]
    vals, errs, evals = integrate_many(slab, np.full(k, lower[depth]), np.full(k, upper[depth]), tol, cfg.max_intervals)
    if last:
        counter[0] += evals
    else:
        errs = errs + width * inner_tol
    return vals, errs


def integrate_box(fn, lower, upper, cfg: QuadratureConfig = QuadratureConfig(), tol: float | None = None) -> QuadResult:
    """Integrate ``fn(points (m, n)) -> (m,)`` over a finite box.

    A zero-dimensional box (``lower == ()``) is a single evaluation.
    """
    lower = [float(v) for v in lower]
    upper = [float(v) for v in upper]
    if not lower:
        return QuadResult(float(np.asarray(fn(np.zeros((1, 0))), float).ravel()[0]), 0.0, 1)
    if not all(np.isfinite(lower + upper)):
        raise ValueError("integrate_box needs finite bounds; truncate first")
    tol = cfg.abs_tol if tol is None else tol
    counter = [0]
    vals, errs = _nested(fn, lower, upper, np.zeros((1, 0)), tol, cfg, counter)
    return QuadResult(float(vals[0]), float(errs[0]), counter[0])
