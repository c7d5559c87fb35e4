import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glr_sens.errors import EmptyInput, InfiniteBound, InvalidRate, NoConditionalSampler
from glr_sens.model import Face, ParametricDensity
from glr_sens.problems import rect2d_problem
from glr_sens.sampling import (
    RngStream,
    exponential_from_uniform,
    parse_seed,
    sample_exponential,
    sample_face_conditional,
    sample_uniform_box,
    summarize,
)


class _FixedStream:
    """Stand-in stream that always returns the same uniform."""

    def __init__(self, u):
        self.u = u

    def uniform(self, size=None):
        return self.u if size is None else np.full(size, self.u)


class TestSeeds:
    @pytest.mark.parametrize("text, value", [("42", 42), ("0x2A", 42), (" 0xff ", 255), (7, 7)])
    def test_parse(self, text, value):
        assert parse_seed(text) == value

    def test_parse_rejects_garbage(self):
        with pytest.raises(ValueError):
            parse_seed("seven")


class TestRngStream:
    def test_reproducible(self):
        a = RngStream(123, 4).uniform(16)
        b = RngStream(123, 4).uniform(16)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        assert not np.array_equal(RngStream(123, 4).uniform(8), RngStream(123, 5).uniform(8))
        assert not np.array_equal(RngStream(123, 4).uniform(8), RngStream(124, 4).uniform(8))

    def test_substream_is_direct(self):
        # stream k is built without advancing through its predecessors
        np.testing.assert_array_equal(RngStream(9).substream(1000).uniform(4), RngStream(9, 1000).uniform(4))

    def test_pinned_values(self):
        # guards cross-platform bit reproducibility of the Philox key layout
        np.testing.assert_array_equal(
            RngStream(2024, 0).uniform(3), [0.7539532404108791, 0.6536530412806927, 0.8305111850799092]
        )
        np.testing.assert_array_equal(RngStream(2024, 7).uniform(2), [0.2624038764256238, 0.020703424212016874])

    def test_seed_is_reduced_to_64_bits(self):
        np.testing.assert_array_equal(RngStream(2024, 0).uniform(3), RngStream(2024 + (1 << 64), 0).uniform(3))


class TestExponential:
    def test_median(self):
        assert exponential_from_uniform(0.5, 1.0) == pytest.approx(math.log(2.0), abs=1e-15)

    def test_zero_uniform(self):
        assert exponential_from_uniform(0.0, 3.0) == 0.0

    def test_law_of_large_numbers(self):
        draws = sample_exponential(RngStream(1), 2.0, size=1_000_000)
        assert abs(draws.mean() - 0.5) < 0.002

    def test_ks_statistic(self):
        draws = np.sort(sample_exponential(RngStream(77), 1.5, size=10_000))
        cdf = 1.0 - np.exp(-1.5 * draws)
        n = draws.size
        ks = max(np.max(np.arange(1, n + 1) / n - cdf), np.max(cdf - np.arange(n) / n))
        assert ks < 0.02

    @pytest.mark.parametrize("rate", [0.0, -1.0, math.nan])
    def test_invalid_rate(self, rate):
        with pytest.raises(InvalidRate):
            sample_exponential(RngStream(0), rate)

    def test_scalar_draw(self):
        assert isinstance(sample_exponential(RngStream(0), 1.0), float)


class TestUniformBox:
    def test_midpoint(self):
        np.testing.assert_allclose(sample_uniform_box(_FixedStream(0.5), (0.0, -2.0), (1.0, 4.0)), [0.5, 1.0])

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            sample_uniform_box(RngStream(0), (0.0, 1.0), (1.0, 1.0))

    def test_infinite_rejected(self):
        with pytest.raises(InfiniteBound):
            sample_uniform_box(RngStream(0), (0.0,), (math.inf,))

    def test_coordinate_means(self):
        stream = RngStream(5)
        pts = np.array([sample_uniform_box(stream, (-1.0, 2.0), (3.0, 2.5)) for _ in range(20_000)])
        sigma = np.array([4.0, 0.5]) / math.sqrt(12.0 * len(pts))
        assert np.all(np.abs(pts.mean(axis=0) - [1.0, 2.25]) < 3 * sigma)


class TestFaceConditional:
    def test_toy_face_is_origin(self, toy):
        face = toy.support.faces()[0]
        np.testing.assert_array_equal(sample_face_conditional(toy, RngStream(0), face, 0.5, interior=np.array([3.0])), [0.0])

    def test_independent_reuses_interior(self, rect2d):
        face = Face(0, True, 1.0)
        out = sample_face_conditional(rect2d, RngStream(0), face, 0.3, interior=np.array([0.3, 0.7]))
        np.testing.assert_array_equal(out, [1.0, 0.7])

    def test_draws_when_no_interior(self, rect2d):
        out = sample_face_conditional(rect2d, RngStream(0), Face(1, False, 0.0), 0.3)
        assert out[1] == 0.0 and 0.0 <= out[0] < 1.0

    def test_dependent_without_sampler(self, rect2d):
        dep = ParametricDensity(2, rect2d.density.density, independent=False)
        p = dataclasses.replace(rect2d, density=dep)
        with pytest.raises(NoConditionalSampler):
            sample_face_conditional(p, RngStream(0), Face(0, False, 0.0), 0.3, interior=np.array([0.5, 0.5]))

    def test_dependent_with_sampler_is_clamped(self, rect2d):
        dep = ParametricDensity(
            2, rect2d.density.density, independent=False,
            conditional_sampler=lambda face, interior, t, stream: np.array([0.999999, stream.uniform()]),
        )
        p = dataclasses.replace(rect2d, density=dep)
        out = sample_face_conditional(p, RngStream(0), Face(0, True, 1.0), 0.3)
        assert out[0] == 1.0

    @given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.integers(0, 3))
    @settings(max_examples=50, deadline=None)
    def test_always_on_face(self, a, b, k):
        rect2d = rect2d_problem()
        face = rect2d.support.faces()[k]
        out = sample_face_conditional(rect2d, RngStream(0), face, 0.3, interior=np.array([a, b]))
        assert out[face.index] == face.value


class TestSummarize:
    def test_constant(self):
        s = summarize([1.0, 1.0, 1.0])
        assert s.mean == 1.0 and s.stderr == 0.0

    def test_two_points(self):
        s = summarize([0.0, 2.0])
        assert s.mean == 1.0 and s.stderr == pytest.approx(1.0)
        assert (s.min, s.max) == (0.0, 2.0)

    def test_single_value_has_nan_stderr(self):
        s = summarize([3.5])
        assert s.mean == 3.5 and math.isnan(s.stderr)

    def test_empty(self):
        with pytest.raises(EmptyInput):
            summarize([])

    def test_matches_numpy(self):
        v = RngStream(3).uniform(1001) * 10 + 1e6
        s = summarize(v)
        assert s.stderr == pytest.approx(np.std(v, ddof=1) / math.sqrt(v.size), rel=1e-9)

    def test_constant_large_offset_is_exact(self):
        v = np.full(2500, 0.1)
        assert summarize(v).mean == 0.1
