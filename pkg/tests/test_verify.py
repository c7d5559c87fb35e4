import dataclasses
import math

import numpy as np
import pytest

from glr_sens.errors import DimensionTooLarge, RootFindFailure
from glr_sens.model import ParameterInterval, ParametricDensity, Performance, Problem, Support, Transform
from glr_sens.problems import LEIBNIZ_SCENARIOS, toy_true_derivative
from glr_sens.quadrature import QuadratureConfig
from glr_sens.sampling import RngStream
from glr_sens.verify import (
    divergence_theorem_check,
    fd_derivative_oracle,
    glr_identity_check,
    glr_surface_integral,
    invert_transform,
    leibniz_check_1d,
    leibniz_check_nd,
    prop1_identity_check,
    quadrature_expectation,
)

from conftest import identity_problem

UNIT_SQUARE = Support((0.0, 0.0), (1.0, 1.0))


class TestQuadratureExpectation:
    def test_toy(self, toy):
        assert quadrature_expectation(toy, 0.5) == pytest.approx(1.0 - math.exp(-0.25), abs=1e-10)
        assert quadrature_expectation(toy, 0.5) == pytest.approx(0.221199, abs=5e-7)

    def test_normalization(self, rect2d):
        ones = Performance(2, lambda y: np.ones(np.shape(y)[:-1]), bound=1.0)
        assert quadrature_expectation(dataclasses.replace(rect2d, performance=ones), 0.3) == pytest.approx(1.0, abs=1e-10)

    def test_rect2d_against_monte_carlo(self, rect2d):
        # plain NumPy sampling, independent of the package's streams
        rng = np.random.default_rng(20240601)
        x = rng.random((1_000_000, 2))
        hits = (x[:, 0] + 0.3 * x[:, 1] < 0.5).astype(float)
        se = hits.std(ddof=1) / math.sqrt(hits.size)
        assert abs(quadrature_expectation(rect2d, 0.3) - hits.mean()) < 4 * se

    def test_truncation_invariance(self, toy):
        coarse = quadrature_expectation(toy, 0.5, QuadratureConfig(tail_mass=1e-12))
        fine = quadrature_expectation(toy, 0.5, QuadratureConfig(tail_mass=1e-14))
        assert abs(coarse - fine) < 1e-9

    def test_too_many_dimensions(self):
        n = 4
        p = Problem(
            density=ParametricDensity(n, lambda x, t: np.ones(np.shape(x)[:-1])),
            transform=Transform(n, lambda x, t: x),
            performance=Performance(n, lambda y: np.ones(np.shape(y)[:-1])),
            support=Support((0.0,) * n, (1.0,) * n),
            theta_interval=ParameterInterval(0.0, 1.0),
        )
        with pytest.raises(DimensionTooLarge):
            quadrature_expectation(p, 0.5)


class TestFdOracle:
    @pytest.mark.parametrize("theta", [0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
    def test_toy_grid(self, toy, theta):
        assert fd_derivative_oracle(toy, theta) == pytest.approx(toy_true_derivative(theta), abs=1e-6)

    def test_toy_at_interval_edge(self, toy):
        # theta = 0.1 is the open interval's endpoint; widen the interval to evaluate it there
        wide = dataclasses.replace(toy, theta_interval=ParameterInterval(0.05, 1.0))
        assert fd_derivative_oracle(wide, 0.1) == pytest.approx(toy_true_derivative(0.1), abs=1e-6)

    def test_fig2_true_values(self, toy):
        assert fd_derivative_oracle(toy, 0.4) == pytest.approx(0.6817, abs=5e-5)
        assert fd_derivative_oracle(toy, 0.6) == pytest.approx(0.8372, abs=5e-5)

    def test_theta_free_problem(self, rect2d):
        flat = dataclasses.replace(
            rect2d,
            transform=Transform(2, lambda x, t: np.asarray(x, float), lambda x, t: np.broadcast_to(np.eye(2), np.shape(x) + (2,))),
        )
        assert abs(fd_derivative_oracle(flat, 0.3)) < 1e-8

    def test_second_order(self, toy):
        theta = 0.5
        errs = [abs(fd_derivative_oracle(toy, theta, h=h) - toy_true_derivative(theta)) for h in (0.08, 0.04)]
        assert 3.5 <= errs[0] / errs[1] <= 4.5

    def test_leaving_interval(self, toy):
        with pytest.raises(ValueError):
            fd_derivative_oracle(toy, 0.10005)


class TestIdentityCheck:
    def test_toy(self, toy):
        rep = glr_identity_check(toy, 0.5)
        assert rep.surface == pytest.approx(0.5)
        assert rep.residual < 1e-5

    def test_pushout_form_has_no_surface(self, toy_pushout):
        rep = glr_identity_check(toy_pushout, 0.5)
        assert rep.surface == 0.0
        assert rep.residual < 1e-5

    @pytest.mark.parametrize("theta", [0.3, 0.7])
    def test_two_forms_agree(self, toy, toy_pushout, theta):
        a = glr_identity_check(toy, theta).rhs
        b = glr_identity_check(toy_pushout, theta).rhs
        assert abs(a - b) < 1e-8
        assert a == pytest.approx(toy_true_derivative(theta), abs=1e-8)

    def test_rect2d_surface_value(self, rect2d):
        # only the face x1 = 0 carries flux: -int_0^1 x2 dx2
        assert glr_surface_integral(rect2d, 0.3) == pytest.approx(-0.5, abs=1e-12)

    def test_detects_wrong_score(self, toy):
        bad = dataclasses.replace(toy.density, score=lambda x, t: 1.1 / t - np.asarray(x)[..., 0])
        assert glr_identity_check(dataclasses.replace(toy, density=bad), 0.5).residual > 1e-3


class TestLeibniz:
    @pytest.mark.parametrize("theta", [0.3, 0.5, 0.8])
    def test_shifted_exponential(self, theta):
        res = LEIBNIZ_SCENARIOS["shifted_exp_1d"](theta)
        assert abs(res.report.rhs - 2 * theta * math.exp(-theta * theta)) < 1e-6
        assert res.report.rhs_boundary == pytest.approx(theta)
        assert res.residual < 1e-6

    def test_fixed_lower_limit(self):
        rep = leibniz_check_1d(lambda x, t: np.exp(-t * x), lambda t: 0.0, 0.5, 1.0)
        assert rep.rhs_boundary == 0.0
        # d/dtheta int_0^1 e^{-theta x} dx = -int_0^1 x e^{-theta x} dx
        assert rep.rhs_integrand == pytest.approx(-(1.0 - 1.5 * math.exp(-0.5)) / 0.25, abs=1e-9)
        assert rep.residual < 1e-8

    def test_theta_free_integrand(self):
        rep = leibniz_check_1d(lambda x, t: np.cos(x), lambda t: -t, 0.4, 2.0)
        assert rep.lhs == pytest.approx(math.cos(-0.4), abs=1e-8)
        assert rep.residual < 1e-8

    @pytest.mark.parametrize("name", ["translating_box", "dilating_box"])
    @pytest.mark.parametrize("theta", [0.2, 0.7])
    def test_boxes(self, name, theta):
        res = LEIBNIZ_SCENARIOS[name](theta)
        assert res.report.residual < 1e-7
        assert res.residual < 1e-7

    def test_theta_free_map_has_no_flux(self):
        still = Transform(2, lambda u, t: np.asarray(u, float) * 2.0, lambda u, t: 2.0 * np.broadcast_to(np.eye(2), np.shape(u) + (2,)))
        rep = leibniz_check_nd(UNIT_SQUARE, still, lambda x, t: t * x[..., 0], 0.5)
        assert rep.rhs_boundary == 0.0
        # integrand derivative x1 over [0, 2]^2
        assert rep.lhs == pytest.approx(4.0, abs=1e-8)
        assert rep.residual < 1e-8

    def test_dtheta_fallback(self):
        # rotate-and-scale map with no analytic theta-derivative; integrand x1^2 + x2
        def rot(u, t):
            c, s = math.cos(t), math.sin(t)
            u = np.asarray(u, float)
            return (1 + t) * np.stack([c * u[..., 0] - s * u[..., 1], s * u[..., 0] + c * u[..., 1]], axis=-1)

        def rot_jac(u, t):
            c, s = math.cos(t), math.sin(t)
            return np.broadcast_to((1 + t) * np.array([[c, -s], [s, c]]), np.shape(u) + (2,))

        rep = leibniz_check_nd(UNIT_SQUARE, Transform(2, rot, rot_jac), lambda x, t: x[..., 0] ** 2 + x[..., 1], 0.3)
        assert rep.residual < 1e-7


class TestProp1:
    def test_toy(self, toy):
        rep = prop1_identity_check(toy, np.array([1.0]), 0.5)
        assert rep.cov1_residual < 1e-6
        assert rep.cov2_residual < 1e-6

    def test_identity_map(self):
        rep = prop1_identity_check(identity_problem(), np.array([0.7]), 0.5)
        assert rep.cov1_residual < 1e-6 and rep.cov2_residual < 1e-6

    def test_linear(self, linear):
        # f_Y(y) = e^{-y/theta}/theta; at y = 1, theta = 0.5 its theta-derivative is 4 e^{-2}
        rep = prop1_identity_check(linear, np.array([2.0]), 0.5)
        assert rep.cov1_lhs == pytest.approx(4 * math.exp(-2.0), abs=1e-6)
        assert rep.cov1_residual < 1e-6
        assert rep.cov2_residual < 1e-6

    def test_two_dimensional(self, rect2d):
        rep = prop1_identity_check(rect2d, np.array([0.3, 0.6]), 0.2)
        assert abs(rep.cov2_lhs) > 0.1
        assert rep.cov2_residual < 1e-6

    def test_detects_wrong_dtheta(self, toy):
        bad = dataclasses.replace(toy.transform, dtheta=lambda x, t: -2.0 * np.ones(np.shape(x)))
        rep = prop1_identity_check(dataclasses.replace(toy, transform=bad), np.array([1.0]), 0.5)
        assert rep.cov1_residual > 1e-3


class TestInvertTransform:
    def test_recovers_point(self, rect2d):
        x = np.array([0.37, 0.81])
        y = rect2d.transform.map(x, 0.4)
        np.testing.assert_allclose(invert_transform(rect2d, y, 0.4, x + 0.1), x, atol=1e-13)

    def test_failure(self, toy):
        expo = dataclasses.replace(toy.transform, map=lambda x, t: np.exp(x), jacobian=lambda x, t: np.exp(x)[..., None])
        with pytest.raises(RootFindFailure):
            invert_transform(dataclasses.replace(toy, transform=expo), np.array([-1.0]), 0.5, np.array([0.0]))


class TestDivergenceTheorem:
    def test_identity_field(self):
        rep = divergence_theorem_check(lambda x: np.asarray(x, float), UNIT_SQUARE)
        assert rep.volume == pytest.approx(2.0, abs=1e-8)
        assert rep.residual < 1e-8

    def test_constant_field(self):
        rep = divergence_theorem_check(lambda x: np.broadcast_to([3.0, -1.0], np.shape(x)), UNIT_SQUARE)
        assert abs(rep.flux) < 1e-12

    def test_polynomial_field(self):
        field = lambda x: np.stack([x[..., 0] ** 2, x[..., 0] * x[..., 1]], axis=-1)  # noqa: E731
        rep = divergence_theorem_check(field, UNIT_SQUARE)
        assert rep.volume == pytest.approx(1.5, abs=1e-7)
        assert rep.residual < 1e-7

    def test_random_smooth_fields_3d(self):
        coeffs = RngStream(4).uniform((3, 3)) - 0.5
        field = lambda x: np.sin(np.asarray(x) @ coeffs.T)  # noqa: E731
        rep = divergence_theorem_check(field, Support((0.0,) * 3, (1.0, 2.0, 0.5)), QuadratureConfig(abs_tol=1e-8))
        assert rep.residual < 1e-6
