"""GLR weight functions and finite-difference operators.

Everything here is evaluated in x-space: the velocity ``s = J_g^{-1} d_theta g``
comes from a linear solve at the sampled point, so no inverse of ``g`` is
ever needed.  All functions accept a single point ``(n,)`` or a batch
``(..., n)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundaryPoint, NonFiniteValue, SingularJacobian, ZeroDensity
from .model import Problem

DENSITY_FLOOR = 1e-300
SINGULAR_TOL = 1e-10


@dataclass(frozen=True)
class FDConfig:
    rel_step: float = 1e-5
    min_abs_step: float = 1e-8
    scheme: str = "central"

    def __post_init__(self):
        if not self.rel_step > 0:
            raise ValueError("rel_step must be positive")
        if not self.min_abs_step > 0:
            raise ValueError("min_abs_step must be positive")
        if self.scheme != "central":
            raise ValueError(f"unsupported scheme {self.scheme!r}")

    def steps(self, x) -> np.ndarray:
        return np.maximum(self.rel_step * np.abs(x), self.min_abs_step)


DEFAULT_FD = FDConfig()


@dataclass(frozen=True)
class SensitivityWeights:
    s: np.ndarray
    d: np.ndarray
    l: np.ndarray


def _first_bad(mask) -> int:
    return int(np.flatnonzero(np.ravel(mask))[0])


def check_finite(values, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    bad = ~np.isfinite(values)
    if np.any(bad):
        index = None
        if values.ndim:
            index = int(np.unravel_index(_first_bad(bad), values.shape)[0])
        raise NonFiniteValue(f"{what} returned a non-finite value", index=index)
    return values


def _as_points(x, dims: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (dims,):
        raise ValueError(f"expected points with last axis {dims}, got shape {x.shape}")
    return x


# -- linear algebra -----------------------------------------------------------


def solve_pivoted(a, b, singular_tol: float = SINGULAR_TOL):
    """Solve ``a @ x = b`` for a batch of small systems by Gaussian elimination.

    Partial pivoting; the reciprocal condition estimate is the smallest pivot
    magnitude over the largest entry of ``a``.  Returns ``(x, rcond)``.
    Raises ``SingularJacobian`` when any estimate falls below ``singular_tol``.
    """
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    batch = a.shape[:-2]
    n = a.shape[-1]
    a = a.reshape(-1, n, n)
    b = b.reshape(-1, n)
    m = a.shape[0]
    rows = np.arange(m)
    scale = np.max(np.abs(a), axis=(1, 2))
    min_piv = np.full(m, np.inf)
    for k in range(n):
        piv = k + np.argmax(np.abs(a[:, k:, k]), axis=1)
        swap = piv != k
        if np.any(swap):
            r = rows[swap]
            p = piv[swap]
            a[r, k], a[r, p] = a[r, p].copy(), a[r, k].copy()
            b[r, k], b[r, p] = b[r, p].copy(), b[r, k].copy()
        pivot = a[:, k, k]
        min_piv = np.minimum(min_piv, np.abs(pivot))
        if k + 1 < n:
            safe = np.where(pivot == 0.0, 1.0, pivot)
            factors = a[:, k + 1 :, k] / safe[:, None]
            a[:, k + 1 :, k:] -= factors[:, :, None] * a[:, None, k, k:]
            b[:, k + 1 :] -= factors * b[:, k, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        rcond = np.where(scale > 0, min_piv / scale, 0.0)
    bad = ~(rcond >= singular_tol)
    if np.any(bad):
        i = _first_bad(bad)
        raise SingularJacobian(f"Jacobian is singular (rcond estimate {rcond[i]:.3g})", index=i)
    x = np.empty_like(b)
    for k in range(n - 1, -1, -1):
        acc = b[:, k] - np.sum(a[:, k, k + 1 :] * x[:, k + 1 :], axis=1)
        x[:, k] = acc / a[:, k, k]
    return x.reshape(batch + (n,)), rcond.reshape(batch)


# -- finite differences -------------------------------------------------------


def fd_jacobian(fn, x, fd: FDConfig = DEFAULT_FD) -> np.ndarray:
    """Central-difference Jacobian ``J[..., r, j] = dF_r / dx_j``."""
    x = np.asarray(x, dtype=float)
    h = fd.steps(x)
    cols = []
    for j in range(x.shape[-1]):
        xp = x.copy()
        xm = x.copy()
        xp[..., j] += h[..., j]
        xm[..., j] -= h[..., j]
        fp = check_finite(fn(xp), "map")
        fm = check_finite(fn(xm), "map")
        cols.append((fp - fm) / (xp[..., j] - xm[..., j])[..., None])
    return np.stack(cols, axis=-1)


def fd_divergence(field, x, fd: FDConfig = DEFAULT_FD) -> np.ndarray:
    """Trace of the central-difference Jacobian of a vector field."""
    x = np.asarray(x, dtype=float)
    h = fd.steps(x)
    total = np.zeros(x.shape[:-1])
    for j in range(x.shape[-1]):
        xp = x.copy()
        xm = x.copy()
        xp[..., j] += h[..., j]
        xm[..., j] -= h[..., j]
        fp = check_finite(field(xp), "field")[..., j]
        fm = check_finite(field(xm), "field")[..., j]
        total = total + (fp - fm) / (xp[..., j] - xm[..., j])
    return total


def fd_theta(fn, theta: float, fd: FDConfig = DEFAULT_FD):
    """Central difference of ``fn(theta)`` in the scalar parameter."""
    h = max(fd.rel_step * abs(theta), fd.min_abs_step)
    tp, tm = theta + h, theta - h
    return (np.asarray(fn(tp), float) - np.asarray(fn(tm), float)) / (tp - tm)


# -- problem derivatives with FD fallbacks ------------------------------------


def density(p: Problem, x, theta: float) -> np.ndarray:
    return check_finite(p.density.density(x, theta), "density")


def score(p: Problem, x, theta: float, fd: FDConfig = DEFAULT_FD) -> np.ndarray:
    if p.density.score is not None:
        return check_finite(p.density.score(x, theta), "score")
    return check_finite(fd_theta(lambda t: np.log(p.density.density(x, t)), theta, fd), "score")


def jacobian(p: Problem, x, theta: float, fd: FDConfig = DEFAULT_FD) -> np.ndarray:
    if p.transform.jacobian is not None:
        return check_finite(p.transform.jacobian(x, theta), "jacobian")
    return fd_jacobian(lambda z: p.transform.map(z, theta), x, fd)


def dtheta(p: Problem, x, theta: float, fd: FDConfig = DEFAULT_FD) -> np.ndarray:
    if p.transform.dtheta is not None:
        return check_finite(p.transform.dtheta(x, theta), "dtheta")
    return check_finite(fd_theta(lambda t: p.transform.map(x, t), theta, fd), "dtheta")


def _require_density(p: Problem, x, theta: float) -> np.ndarray:
    f = density(p, x, theta)
    low = ~(f > DENSITY_FLOOR)
    if np.any(low):
        raise ZeroDensity("density at or below floor", index=_first_bad(low))
    return f


def _require_interior(p: Problem, x):
    edge = p.support.on_boundary(x)
    if np.any(edge):
        raise BoundaryPoint("central stencil undefined on the boundary of the support", index=_first_bad(edge))


# -- GLR weights --------------------------------------------------------------


def velocity(p: Problem, x, theta: float, fd: FDConfig = DEFAULT_FD) -> np.ndarray:
    """``s`` solving ``J_g(x, theta) s = d_theta g(x, theta)``."""
    x = _as_points(x, p.dims)
    s, _ = solve_pivoted(jacobian(p, x, theta, fd), dtheta(p, x, theta, fd))
    return s


def weight_l(p: Problem, x, theta: float, fd: FDConfig = DEFAULT_FD) -> np.ndarray:
    x = _as_points(x, p.dims)
    _require_density(p, x, theta)
    return score(p, x, theta, fd)


def weight_d(p: Problem, x, theta: float, fd: FDConfig = DEFAULT_FD) -> np.ndarray:
    """``div(-f s) / f`` with the divergence taken by central differences."""
    x = _as_points(x, p.dims)
    _require_interior(p, x)
    f = _require_density(p, x, theta)

    def flux(z):
        return -density(p, z, theta)[..., None] * velocity(p, z, theta, fd)

    return fd_divergence(flux, x, fd) / f


def div_sf(p: Problem, x, theta: float, fd: FDConfig = DEFAULT_FD) -> np.ndarray:
    """``div(s f)`` by central differences (used by the single-run estimator)."""
    x = _as_points(x, p.dims)
    _require_interior(p, x)
    return fd_divergence(lambda z: density(p, z, theta)[..., None] * velocity(p, z, theta, fd), x, fd)


def weights(p: Problem, x, theta: float, fd: FDConfig = DEFAULT_FD) -> SensitivityWeights:
    x = _as_points(x, p.dims)
    return SensitivityWeights(
        s=velocity(p, x, theta, fd),
        d=weight_d(p, x, theta, fd),
        l=weight_l(p, x, theta, fd),
    )
