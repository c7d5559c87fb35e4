"""Shared fixtures and small hand-built problems."""

import math

import numpy as np
import pytest

from glr_sens.model import (
    ParameterInterval,
    ParametricDensity,
    Performance,
    Problem,
    Smoothness,
    Support,
    Transform,
)
from glr_sens.problems import (
    builtin_toy_problem,
    exponential_density,
    linear_scale_problem,
    rect2d_problem,
    toy_pushout_problem,
)
from glr_sens.sampling import sample_uniform_box

_ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion():
    """``criterion(n, title, passed, detail)`` records a pass/fail line, then asserts."""

    def record(number, title, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title}" + (f" ({detail})" if detail else "")
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert passed, line

    return record


@pytest.fixture
def toy():
    return builtin_toy_problem()


@pytest.fixture
def toy_pushout():
    return toy_pushout_problem()


@pytest.fixture
def rect2d():
    return rect2d_problem()


@pytest.fixture
def linear():
    return linear_scale_problem()


def identity_problem(performance=None, smoothness=Smoothness.MEASURABLE_ONLY, grad=None):
    """Exp(theta) input with g(x, theta) = x, so the velocity is identically zero."""
    if performance is None:
        performance = lambda y: (np.asarray(y)[..., 0] < 1.0).astype(float)  # noqa: E731
    return Problem(
        density=exponential_density(),
        transform=Transform(
            dims=1,
            map=lambda x, t: np.asarray(x, dtype=float),
            jacobian=lambda x, t: np.ones(np.shape(x) + (1,)),
            dtheta=lambda x, t: np.zeros(np.shape(x)),
            inverse=lambda y, t: np.asarray(y, dtype=float),
        ),
        performance=Performance(1, performance, grad=grad, smoothness=smoothness, bound=1e3),
        support=Support((0.0,), (math.inf,)),
        theta_interval=ParameterInterval(0.1, 1.0),
        name="identity",
    )


def beta22_problem():
    """Independent 6x(1-x) marginals on the unit square: the density vanishes on every face."""

    def marginal(v):
        v = np.asarray(v, dtype=float)
        return 6.0 * v * (1.0 - v)

    def density(x, t):
        x = np.asarray(x, dtype=float)
        return marginal(x[..., 0]) * marginal(x[..., 1])

    def sampler(stream, t):
        # rejection from the uniform box; 1.5 bounds the marginal
        while True:
            x = sample_uniform_box(stream, (0.0, 0.0), (1.0, 1.0))
            if stream.uniform() * 2.25 <= density(x, t):
                return x

    return Problem(
        density=ParametricDensity(
            dims=2,
            density=density,
            score=lambda x, t: np.zeros(np.shape(x)[:-1]),
            marginal=lambda i, v, t: marginal(v),
            sampler=sampler,
            independent=True,
        ),
        transform=Transform(
            dims=2,
            map=lambda x, t: np.asarray(x, dtype=float) + np.array([t, 0.0]),
            jacobian=lambda x, t: np.broadcast_to(np.eye(2), np.shape(x) + (2,)).copy(),
            dtheta=lambda x, t: np.broadcast_to(np.array([1.0, 0.0]), np.shape(x)).copy(),
        ),
        performance=Performance(2, lambda y: (np.asarray(y)[..., 0] < 0.9).astype(float), bound=1.0),
        support=Support((0.0, 0.0), (1.0, 1.0)),
        theta_interval=ParameterInterval(0.0, 0.5),
        name="beta22",
    )
