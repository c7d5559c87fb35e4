"""Built-in problems, addressable by string id."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    ParameterInterval,
    ParametricDensity,
    Performance,
    Problem,
    PushOut,
    Smoothness,
    Support,
    Transform,
)
from .sampling import sample_exponential, sample_uniform_box
from .verify import LeibnizReport, leibniz_check_1d, leibniz_check_nd


def toy_true_derivative(theta: float) -> float:
    """d/dtheta P(X < theta) for X ~ Exp(theta)."""
    return 2.0 * theta * math.exp(-theta * theta)


def exponential_density() -> ParametricDensity:
    """Exp(theta) on [0, inf); the formula is used unchanged for x < 0."""

    def density(x, t):
        return t * np.exp(-t * np.asarray(x)[..., 0])

    return ParametricDensity(
        dims=1,
        density=density,
        score=lambda x, t: 1.0 / t - np.asarray(x)[..., 0],
        grad_x=lambda x, t: (-t * density(x, t))[..., None],
        marginal=lambda i, v, t: t * np.exp(-t * np.asarray(v, dtype=float)),
        sampler=lambda stream, t: np.array([sample_exponential(stream, t)]),
        quantile=lambda i, q, t: -math.log1p(-q) / t,
        independent=True,
    )


def _toy_pushout_lr() -> PushOut:
    # Y = X / theta ~ Exp(theta^2); same uniform as the X draw, so common random numbers
    return PushOut(
        sampler=lambda stream, t: np.array([sample_exponential(stream, t * t)]),
        score=lambda y, t: 2.0 / t - 2.0 * t * np.asarray(y)[..., 0],
        performance=lambda y: (np.asarray(y)[..., 0] < 1.0).astype(float),
    )


def builtin_toy_problem() -> Problem:
    """Shifted formulation: X ~ Exp(theta), g(x, theta) = x - theta, phi(y) = 1{y < 0}."""
    transform = Transform(
        dims=1,
        map=lambda x, t: np.asarray(x, dtype=float) - t,
        jacobian=lambda x, t: np.ones(np.shape(x) + (1,)),
        dtheta=lambda x, t: -np.ones(np.shape(x)),
        inverse=lambda y, t: np.asarray(y, dtype=float) + t,
    )
    performance = Performance(
        dims=1,
        eval=lambda y: (np.asarray(y)[..., 0] < 0.0).astype(float),
        smoothness=Smoothness.MEASURABLE_ONLY,
        bound=1.0,
    )
    return Problem(
        density=exponential_density(),
        transform=transform,
        performance=performance,
        support=Support((0.0,), (math.inf,)),
        theta_interval=ParameterInterval(0.1, 1.0),
        name="toy_shifted_exp",
        true_derivative=toy_true_derivative,
        pushout=_toy_pushout_lr(),
        extras={"leibniz": ["shifted_exp_1d"]},
    )


def toy_pushout_problem() -> Problem:
    """Scaled formulation g(x, theta) = x / theta: the image of the support is theta-free."""
    transform = Transform(
        dims=1,
        map=lambda x, t: np.asarray(x, dtype=float) / t,
        jacobian=lambda x, t: np.full(np.shape(x) + (1,), 1.0 / t),
        dtheta=lambda x, t: -np.asarray(x, dtype=float) / (t * t),
        inverse=lambda y, t: np.asarray(y, dtype=float) * t,
    )
    performance = Performance(
        dims=1,
        eval=lambda y: (np.asarray(y)[..., 0] < 1.0).astype(float),
        smoothness=Smoothness.MEASURABLE_ONLY,
        bound=1.0,
    )
    return Problem(
        density=exponential_density(),
        transform=transform,
        performance=performance,
        support=Support((0.0,), (math.inf,)),
        theta_interval=ParameterInterval(0.1, 1.0),
        name="toy_pushout",
        true_derivative=toy_true_derivative,
        pushout=_toy_pushout_lr(),
    )


def rect2d_problem() -> Problem:
    """X ~ U[0,1]^2, g(x, theta) = (x1 + theta x2, x2), phi(y) = 1{y1 < 1/2}.

    No analytic derivative is registered; the finite-difference oracle is the
    only ground truth.
    """
    density = ParametricDensity(
        dims=2,
        density=lambda x, t: np.ones(np.shape(x)[:-1]),
        score=lambda x, t: np.zeros(np.shape(x)[:-1]),
        grad_x=lambda x, t: np.zeros(np.shape(x)),
        marginal=lambda i, v, t: np.ones(np.shape(v)),
        sampler=lambda stream, t: sample_uniform_box(stream, (0.0, 0.0), (1.0, 1.0)),
        quantile=lambda i, q, t: q,
        independent=True,
    )

    def jac(x, t):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape + (2,))
        out[..., 0, 0] = 1.0
        out[..., 0, 1] = t
        out[..., 1, 1] = 1.0
        return out

    def dtheta(x, t):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        out[..., 0] = x[..., 1]
        return out

    def gmap(x, t):
        x = np.asarray(x, dtype=float)
        return np.stack([x[..., 0] + t * x[..., 1], x[..., 1]], axis=-1)

    def ginv(y, t):
        y = np.asarray(y, dtype=float)
        return np.stack([y[..., 0] - t * y[..., 1], y[..., 1]], axis=-1)

    return Problem(
        density=density,
        transform=Transform(dims=2, map=gmap, jacobian=jac, dtheta=dtheta, inverse=ginv),
        performance=Performance(
            dims=2,
            eval=lambda y: (np.asarray(y)[..., 0] < 0.5).astype(float),
            smoothness=Smoothness.MEASURABLE_ONLY,
            bound=1.0,
        ),
        support=Support((0.0, 0.0), (1.0, 1.0)),
        theta_interval=ParameterInterval(0.05, 0.5),
        name="rect2d",
        extras={"leibniz": ["translating_box", "dilating_box"]},
    )


def linear_scale_problem() -> Problem:
    """X ~ Exp(1), g(x, theta) = theta x, phi(y) = 1{y < 1/2}.

    Not registered as a built-in; it carries a transform that is linear in
    ``x`` with a closed-form pushed density ``f(y / theta) / theta``.
    """
    unit = exponential_density()
    density = ParametricDensity(
        dims=1,
        density=lambda x, t: unit.density(x, 1.0),
        score=lambda x, t: np.zeros(np.shape(x)[:-1]),
        grad_x=lambda x, t: unit.grad_x(x, 1.0),
        marginal=lambda i, v, t: unit.marginal(i, v, 1.0),
        sampler=lambda stream, t: unit.sampler(stream, 1.0),
        quantile=lambda i, q, t: unit.quantile(i, q, 1.0),
        independent=True,
    )
    transform = Transform(
        dims=1,
        map=lambda x, t: t * np.asarray(x, dtype=float),
        jacobian=lambda x, t: np.full(np.shape(x) + (1,), float(t)),
        dtheta=lambda x, t: np.asarray(x, dtype=float),
        inverse=lambda y, t: np.asarray(y, dtype=float) / t,
    )
    return Problem(
        density=density,
        transform=transform,
        performance=Performance(1, lambda y: (np.asarray(y)[..., 0] < 0.5).astype(float), bound=1.0),
        support=Support((0.0,), (math.inf,)),
        theta_interval=ParameterInterval(0.1, 2.0),
        name="linear_scale",
        # P(theta X < 1/2) = 1 - exp(-1 / (2 theta))
        true_derivative=lambda t: -math.exp(-0.5 / t) * 0.5 / (t * t),
    )


# -- Leibniz scenarios ---------------------------------------------------------


@dataclass(frozen=True)
class ScenarioResult:
    name: str
    theta: float
    report: LeibnizReport
    truth: float

    @property
    def residual(self) -> float:
        """Worst of the two-sided disagreement and each side's distance to the exact value."""
        r = self.report
        return max(r.residual, abs(r.lhs - self.truth), abs(r.rhs - self.truth))


def shifted_exp_1d(theta: float) -> ScenarioResult:
    """int_{-theta}^{1} 1{z<0} theta e^{-theta(z+theta)} dz, the shifted-variable form of P(X < theta)."""

    def integrand(z, t):
        z = np.asarray(z, dtype=float)
        return np.where(z < 0.0, t * np.exp(-t * (z + t)), 0.0)

    def d_integrand(z, t):
        z = np.asarray(z, dtype=float)
        return np.where(z < 0.0, (1.0 - t * (z + 2.0 * t)) * np.exp(-t * (z + t)), 0.0)

    report = leibniz_check_1d(integrand, lambda t: -t, theta, 1.0, dtheta_integrand=d_integrand)
    return ScenarioResult("shifted_exp_1d", theta, report, toy_true_derivative(theta))


_UNIT_SQUARE = Support((0.0, 0.0), (1.0, 1.0))


def translating_box(theta: float) -> ScenarioResult:
    """Unit square shifted by theta along x1; integrand x1; d/dtheta (theta + 1/2) = 1."""
    shift = Transform(
        dims=2,
        map=lambda u, t: np.asarray(u, dtype=float) + np.array([t, 0.0]),
        jacobian=lambda u, t: np.broadcast_to(np.eye(2), np.shape(u) + (2,)),
        dtheta=lambda u, t: np.broadcast_to(np.array([1.0, 0.0]), np.shape(u)),
    )
    report = leibniz_check_nd(
        _UNIT_SQUARE, shift, lambda x, t: np.asarray(x)[..., 0], theta,
        dtheta_integrand=lambda x, t: np.zeros(np.shape(x)[:-1]),
    )
    return ScenarioResult("translating_box", theta, report, 1.0)


def dilating_box(theta: float) -> ScenarioResult:
    """Unit square scaled by theta; integrand 1; d/dtheta theta^2 = 2 theta."""
    scale = Transform(
        dims=2,
        map=lambda u, t: t * np.asarray(u, dtype=float),
        jacobian=lambda u, t: t * np.broadcast_to(np.eye(2), np.shape(u) + (2,)),
        dtheta=lambda u, t: np.asarray(u, dtype=float),
    )
    report = leibniz_check_nd(
        _UNIT_SQUARE, scale, lambda x, t: np.ones(np.shape(x)[:-1]), theta,
        dtheta_integrand=lambda x, t: np.zeros(np.shape(x)[:-1]),
    )
    return ScenarioResult("dilating_box", theta, report, 2.0 * theta)


LEIBNIZ_SCENARIOS = {
    "shifted_exp_1d": shifted_exp_1d,
    "translating_box": translating_box,
    "dilating_box": dilating_box,
}


BUILTIN = {
    "toy_shifted_exp": builtin_toy_problem,
    "toy_pushout": toy_pushout_problem,
    "rect2d": rect2d_problem,
}


def get_problem(problem_id: str) -> Problem:
    try:
        factory = BUILTIN[problem_id]
    except KeyError:
        raise KeyError(f"unknown problem {problem_id!r}; known: {', '.join(sorted(BUILTIN))}") from None
    return factory()
