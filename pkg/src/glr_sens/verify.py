"""Deterministic oracles for unbiasedness and for the calculus identities behind it.

The quadrature expectation and its central difference in theta form the
reference derivative.  Every other checker computes the same quantity along
an independent route and reports the absolute disagreement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import calculus as calc
from .calculus import DEFAULT_FD, FDConfig
from .errors import DimensionTooLarge, RootFindFailure, SingularJacobian
from .model import ParameterInterval, ParametricDensity, Performance, Problem, Support, Transform
from .quadrature import QuadratureConfig, integrate_box

MAX_QUAD_DIMS = 3
DEFAULT_QUAD = QuadratureConfig()


def _fd_tol(cfg: QuadratureConfig, h: float) -> float:
    # a difference quotient divides quadrature error by 2h; tighten to keep it below abs_tol / 2
    return cfg.abs_tol * min(1.0, 100.0 * h)


def truncated_box(p: Problem, theta: float, tail_mass: float) -> tuple[list[float], list[float]]:
    """Replace infinite bounds by marginal quantiles leaving ``tail_mass`` outside."""
    lower, upper = [], []
    for i, (a, b) in enumerate(zip(p.support.lower, p.support.upper)):
        if not (math.isfinite(a) and math.isfinite(b)) and p.density.quantile is None:
            raise ValueError(f"axis {i} is unbounded and the density has no quantile hook")
        lower.append(a if math.isfinite(a) else float(p.density.quantile(i, tail_mass, theta)))
        upper.append(b if math.isfinite(b) else float(p.density.quantile(i, 1.0 - tail_mass, theta)))
    return lower, upper


def _check_dims(n: int, limit: int = MAX_QUAD_DIMS):
    if n > limit:
        raise DimensionTooLarge(f"tensor-product quadrature supports at most {limit} dimensions, got {n}")


def quadrature_expectation(p: Problem, theta: float, cfg: QuadratureConfig = DEFAULT_QUAD, tol: float | None = None) -> float:
    """E phi(g(X, theta)) integrated in x-space over the truncated support."""
    _check_dims(p.dims)
    lower, upper = truncated_box(p, theta, cfg.tail_mass)

    def integrand(x):
        return p.psi(x, theta) * calc.density(p, x, theta)

    return integrate_box(integrand, lower, upper, cfg, tol).value


def fd_derivative_oracle(p: Problem, theta: float, h: float = 1e-4, cfg: QuadratureConfig = DEFAULT_QUAD) -> float:
    if not (theta - h in p.theta_interval and theta + h in p.theta_interval):
        raise ValueError(f"theta +- h = {theta} +- {h} leaves the parameter interval")
    tol = _fd_tol(cfg, h)
    up = quadrature_expectation(p, theta + h, cfg, tol)
    down = quadrature_expectation(p, theta - h, cfg, tol)
    return (up - down) / (2.0 * h)


# -- right-hand side of the GLR identity --------------------------------------


def glr_interior_integral(p: Problem, theta: float, cfg: QuadratureConfig = DEFAULT_QUAD, fd: FDConfig = DEFAULT_FD) -> float:
    _check_dims(p.dims)
    lower, upper = truncated_box(p, theta, cfg.tail_mass)

    def integrand(x):
        w = calc.weight_d(p, x, theta, fd) + calc.weight_l(p, x, theta, fd)
        return p.psi(x, theta) * w * calc.density(p, x, theta)

    return integrate_box(integrand, lower, upper, cfg).value


def glr_surface_integral(p: Problem, theta: float, cfg: QuadratureConfig = DEFAULT_QUAD, fd: FDConfig = DEFAULT_FD) -> float:
    """Boundary flux of ``phi(g) f s`` over the finite faces, using the joint density."""
    _check_dims(p.dims)
    lower, upper = truncated_box(p, theta, cfg.tail_mass)
    total = 0.0
    for face in p.support.faces():
        i = face.index
        free_lo = lower[:i] + lower[i + 1 :]
        free_hi = upper[:i] + upper[i + 1 :]

        def integrand(z, face=face, i=i):
            x = np.insert(np.asarray(z, dtype=float), i, face.value, axis=-1)
            s = calc.velocity(p, x, theta, fd)
            return p.psi(x, theta) * s[..., i] * calc.density(p, x, theta)

        total += face.sign * integrate_box(integrand, free_lo, free_hi, cfg).value
    return total


@dataclass(frozen=True)
class IdentityReport:
    theta: float
    interior: float
    surface: float
    oracle: float

    @property
    def rhs(self) -> float:
        return self.interior + self.surface

    @property
    def residual(self) -> float:
        return abs(self.rhs - self.oracle)


def glr_identity_check(
    p: Problem,
    theta: float,
    cfg: QuadratureConfig = DEFAULT_QUAD,
    fd: FDConfig = DEFAULT_FD,
    h: float = 1e-4,
) -> IdentityReport:
    return IdentityReport(
        theta=theta,
        interior=glr_interior_integral(p, theta, cfg, fd),
        surface=glr_surface_integral(p, theta, cfg, fd),
        oracle=fd_derivative_oracle(p, theta, h, cfg),
    )


# -- Leibniz rule -------------------------------------------------------------


@dataclass(frozen=True)
class LeibnizReport:
    lhs: float
    rhs_integrand: float
    rhs_boundary: float

    @property
    def rhs(self) -> float:
        return self.rhs_integrand + self.rhs_boundary

    @property
    def residual(self) -> float:
        return abs(self.lhs - self.rhs)


def leibniz_check_1d(
    integrand,
    lower,
    theta: float,
    upper: float,
    h: float = 1e-4,
    dtheta_integrand=None,
    cfg: QuadratureConfig = DEFAULT_QUAD,
    fd: FDConfig = DEFAULT_FD,
) -> LeibnizReport:
    """Differentiate ``int_{lower(theta)}^{upper} integrand(x, theta) dx`` two ways.

    ``integrand(x, theta)`` takes a 1-D array of abscissae.  The left-hand
    side is a central difference of the integral; the right-hand side moves
    the derivative inside and adds ``-integrand(lower) * lower'(theta)``.
    """
    tol = _fd_tol(cfg, h)

    def integral(t, tol=tol):
        return integrate_box(lambda x: integrand(x[:, 0], t), [lower(t)], [upper], cfg, tol).value

    lhs = (integral(theta + h) - integral(theta - h)) / (2.0 * h)
    if dtheta_integrand is None:
        def dtheta_integrand(x, t):
            return calc.fd_theta(lambda s: integrand(x, s), t, fd)

    a = lower(theta)
    inner = integrate_box(lambda x: dtheta_integrand(x[:, 0], theta), [a], [upper], cfg).value
    da = float(calc.fd_theta(lower, theta, fd))
    edge = float(np.asarray(integrand(np.array([a]), theta)).ravel()[0])
    return LeibnizReport(lhs=lhs, rhs_integrand=inner, rhs_boundary=-edge * da)


def leibniz_check_nd(
    box: Support,
    phi_map: Transform,
    integrand,
    theta: float,
    h: float = 1e-4,
    dtheta_integrand=None,
    cfg: QuadratureConfig = DEFAULT_QUAD,
    fd: FDConfig = DEFAULT_FD,
) -> LeibnizReport:
    """Transport theorem on the moving domain ``phi_map(box, theta)``.

    Both sides are pulled back to the fixed box.  The left side differentiates
    ``int_box f(phi(u)) |det J_phi(u)| du`` by central differences; the right
    side integrates ``d_theta f |det J| + div_u(|det J| f(phi(u)) s(u))`` with
    ``s = J_phi^{-1} d_theta phi``, which is the pulled-back ``div_x(f v)``.
    The divergence part is evaluated as the outward flux through the faces of
    the box, which avoids differencing a velocity that may itself come from
    difference quotients.
    """
    _check_dims(box.dims, 2)
    if not box.bounded:
        raise ValueError("leibniz_check_nd needs a bounded box")
    lower, upper = list(box.lower), list(box.upper)
    # throwaway problem so the calculus fallbacks apply to phi_map
    carrier = _carrier(box, phi_map)

    def jac(u, t):
        return calc.jacobian(carrier, u, t, fd)

    def pulled(t):
        def fn(u):
            return integrand(phi_map.map(u, t), t) * np.abs(np.linalg.det(jac(u, t)))
        return fn

    tol = _fd_tol(cfg, h)
    lhs = (integrate_box(pulled(theta + h), lower, upper, cfg, tol).value
           - integrate_box(pulled(theta - h), lower, upper, cfg, tol).value) / (2.0 * h)

    if dtheta_integrand is None:
        def dtheta_integrand(x, t):
            return calc.fd_theta(lambda s: integrand(x, s), t, fd)

    def local_term(u):
        return dtheta_integrand(phi_map.map(u, theta), theta) * np.abs(np.linalg.det(jac(u, theta)))

    def transported(u):
        det = np.abs(np.linalg.det(jac(u, theta)))
        s = calc.velocity(carrier, u, theta, fd)
        return (det * integrand(phi_map.map(u, theta), theta))[..., None] * s

    rhs_local = integrate_box(local_term, lower, upper, cfg).value
    rhs_flux = 0.0
    for face in box.faces():
        i = face.index

        def normal_component(z, face=face, i=i):
            u = np.insert(np.asarray(z, dtype=float), i, face.value, axis=-1)
            return transported(u)[..., i]

        rhs_flux += face.sign * integrate_box(normal_component, lower[:i] + lower[i + 1 :], upper[:i] + upper[i + 1 :], cfg).value
    return LeibnizReport(lhs=lhs, rhs_integrand=rhs_local, rhs_boundary=rhs_flux)


def _carrier(box: Support, transform: Transform) -> Problem:
    n = box.dims
    return Problem(
        density=ParametricDensity(n, lambda x, t: np.ones(np.shape(x)[:-1])),
        transform=transform,
        performance=Performance(n, lambda y: np.zeros(np.shape(y)[:-1])),
        support=box,
        theta_interval=ParameterInterval(-1e300, 1e300),
        name="leibniz-carrier",
    )


# -- change of variables ------------------------------------------------------


def invert_transform(p: Problem, y, theta: float, x0, tol: float = 1e-12, max_iter: int = 60, fd: FDConfig = DEFAULT_FD) -> np.ndarray:
    """Damped Newton solve of ``g(x, theta) = y`` warm-started at ``x0``."""
    y = np.asarray(y, dtype=float)
    x = np.array(x0, dtype=float)
    scale = max(1.0, float(np.max(np.abs(y))))

    def resid(z):
        return np.asarray(p.transform.map(z, theta), dtype=float) - y

    r = resid(x)
    for _ in range(max_iter):
        norm = float(np.max(np.abs(r)))
        try:
            step, _ = calc.solve_pivoted(calc.jacobian(p, x, theta, fd), r)
        except SingularJacobian as exc:
            raise RootFindFailure(f"Newton hit a singular Jacobian at residual {norm:.3g}") from exc
        if norm <= tol * scale:
            # one polishing step; quadratic convergence takes it to rounding level
            cand = x - step
            rc = resid(cand)
            return cand if np.max(np.abs(rc)) <= norm else x
        lam = 1.0
        while lam > 1e-6:
            cand = x - lam * step
            rc = resid(cand)
            if np.all(np.isfinite(rc)) and np.max(np.abs(rc)) < norm:
                break
            lam *= 0.5
        else:
            raise RootFindFailure(f"Newton line search failed at residual {norm:.3g}")
        x, r = cand, rc
    raise RootFindFailure(f"Newton did not converge in {max_iter} iterations")


@dataclass(frozen=True)
class Prop1Report:
    cov1_lhs: float
    cov1_rhs: float
    cov2_lhs: float
    cov2_rhs: float

    @property
    def cov1_residual(self) -> float:
        return abs(self.cov1_lhs - self.cov1_rhs)

    @property
    def cov2_residual(self) -> float:
        return abs(self.cov2_lhs - self.cov2_rhs)


def prop1_identity_check(p: Problem, x, theta: float, h: float = 1e-5, fd: FDConfig = DEFAULT_FD) -> Prop1Report:
    """Compare the y-space derivatives of the pushed density with their x-space forms.

    First identity: ``d/dtheta [f(g^{-1}(y)) |det J_{g^{-1}}(y)|]`` at fixed ``y``
    against ``|det J_{g^{-1}}| (d + l) f``.  Second identity: ``div_y`` of the
    pushed flux against ``|det J_{g^{-1}}| div_x(w(g(x)) f s)``.  The second
    needs a differentiable weight ``w``: the performance itself when tagged
    smooth with a gradient, otherwise a unit Gaussian bump centred half a
    unit away from ``g(x, theta)`` along every axis (off-centre so that its
    gradient at the check point is not zero).
    """
    x = np.asarray(x, dtype=float)
    y0 = np.asarray(p.transform.map(x, theta), dtype=float)

    def pushed_density(t):
        xt = invert_transform(p, y0, t, x, fd=fd)
        return calc.density(p, xt, t) / abs(np.linalg.det(calc.jacobian(p, xt, t, fd)))

    cov1_lhs = (pushed_density(theta + h) - pushed_density(theta - h)) / (2.0 * h)
    det0 = abs(np.linalg.det(calc.jacobian(p, x, theta, fd)))
    w = calc.weight_d(p, x, theta, fd) + calc.weight_l(p, x, theta, fd)
    cov1_rhs = float(w * calc.density(p, x, theta) / det0)

    perf = p.performance
    if perf.smoothness.value == "smooth" and perf.grad is not None:
        weight = perf.eval
    else:
        centre = y0 + 0.5

        def weight(y):
            return np.exp(-0.5 * np.sum((np.asarray(y) - centre) ** 2, axis=-1))

    def flux_y(yv):
        xv = invert_transform(p, yv, theta, x, fd=fd)
        jac = calc.jacobian(p, xv, theta, fd)
        vel = calc.dtheta(p, xv, theta, fd)
        return weight(yv) * calc.density(p, xv, theta) / abs(np.linalg.det(jac)) * vel

    cov2_lhs = 0.0
    for j in range(p.dims):
        step = h * max(1.0, abs(y0[j]))
        yp, ym = y0.copy(), y0.copy()
        yp[j] += step
        ym[j] -= step
        cov2_lhs += (flux_y(yp)[j] - flux_y(ym)[j]) / (yp[j] - ym[j])

    def flux_x(z):
        gz = p.transform.map(z, theta)
        return (weight(gz) * calc.density(p, z, theta))[..., None] * calc.velocity(p, z, theta, fd)

    fd_h = FDConfig(rel_step=h, min_abs_step=h)
    cov2_rhs = float(calc.fd_divergence(flux_x, x, fd_h) / det0)
    return Prop1Report(float(cov1_lhs), cov1_rhs, float(cov2_lhs), cov2_rhs)


# -- divergence theorem -------------------------------------------------------


@dataclass(frozen=True)
class DivergenceReport:
    volume: float
    flux: float

    @property
    def residual(self) -> float:
        return abs(self.volume - self.flux)


def divergence_theorem_check(field, box: Support, cfg: QuadratureConfig = DEFAULT_QUAD, fd: FDConfig = DEFAULT_FD) -> DivergenceReport:
    """``int_box div F`` against the outward flux of ``F`` through the faces."""
    _check_dims(box.dims)
    if not box.bounded:
        raise ValueError("divergence_theorem_check needs a bounded box")
    lower, upper = list(box.lower), list(box.upper)
    volume = integrate_box(lambda x: calc.fd_divergence(field, x, fd), lower, upper, cfg).value
    flux = 0.0
    for face in box.faces():
        i = face.index

        def normal_component(z, face=face, i=i):
            x = np.insert(np.asarray(z, dtype=float), i, face.value, axis=-1)
            return np.asarray(field(x), dtype=float)[..., i]

        flux += face.sign * integrate_box(normal_component, lower[:i] + lower[i + 1 :], upper[:i] + upper[i + 1 :], cfg).value
    return DivergenceReport(volume, flux)
