"""Problem bundle: density, transform, performance, support and parameter interval.

All user callables follow one batching convention: a point argument ``x`` is an
array whose last axis has length ``n`` and whose leading axes are arbitrary
batch axes.  Scalar outputs drop the last axis, vector outputs keep it and
matrix outputs append one more axis of length ``n``.  Callables must be pure.

Densities and transforms are expected to extend smoothly a little beyond the
support.  Central finite differences near a face evaluate them outside it.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from .errors import DimensionMismatch

PointFn = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class ParameterInterval:
    """Open bounded interval of admissible parameter values."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError("parameter interval bounds must be finite")
        if not self.lo < self.hi:
            raise ValueError(f"empty parameter interval ({self.lo}, {self.hi})")

    def __contains__(self, theta: float) -> bool:
        return self.lo < theta < self.hi

    def grid(self, k: int) -> list[float]:
        """``k`` evenly spaced interior points."""
        step = (self.hi - self.lo) / (k + 1)
        return [self.lo + step * (j + 1) for j in range(k)]


@dataclass(frozen=True)
class Face:
    """One face ``{x : x_index = value}`` of a hyperrectangle."""

    index: int
    upper: bool
    value: float

    @property
    def sign(self) -> float:
        return 1.0 if self.upper else -1.0

    def normal(self, dims: int) -> np.ndarray:
        n = np.zeros(dims)
        n[self.index] = self.sign
        return n

    def __str__(self):
        side = "b" if self.upper else "a"
        return f"x{self.index}={self.value:g} ({side}{self.index})"


@dataclass(frozen=True)
class Support:
    """Hyperrectangle ``[a_1, b_1] x ... x [a_n, b_n]``; bounds may be +-inf."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if len(lo) != len(hi) or not lo:
            raise DimensionMismatch("lower and upper bounds must have equal, positive length")
        for i, (a, b) in enumerate(zip(lo, hi)):
            if math.isnan(a) or math.isnan(b) or not a < b:
                raise ValueError(f"axis {i}: need a_i < b_i, got [{a}, {b}]")

    @property
    def dims(self) -> int:
        return len(self.lower)

    @property
    def bounded(self) -> bool:
        return all(map(math.isfinite, self.lower + self.upper))

    def faces(self) -> list[Face]:
        """Faces at finite bounds, ordered by axis then lower before upper."""
        out = []
        for i, (a, b) in enumerate(zip(self.lower, self.upper)):
            if math.isfinite(a):
                out.append(Face(i, False, a))
            if math.isfinite(b):
                out.append(Face(i, True, b))
        return out

    def on_boundary(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.any((x == np.asarray(self.lower)) | (x == np.asarray(self.upper)), axis=-1)

    def contains(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.all((x >= np.asarray(self.lower)) & (x <= np.asarray(self.upper)), axis=-1)


class Smoothness(str, Enum):
    SMOOTH = "smooth"
    AE_DIFFERENTIABLE = "ae_differentiable"
    MEASURABLE_ONLY = "measurable_only"


@dataclass(frozen=True)
class ParametricDensity:
    """Input density ``f(x, theta)`` with optional analytic derivatives and samplers.

    ``sampler(stream, theta)`` draws one point of shape ``(n,)``.
    ``quantile(i, q, theta)`` is the marginal quantile of coordinate ``i``; it is
    only needed when the support has infinite bounds.
    ``conditional_sampler(face, interior, theta, stream)`` draws from the law of
    ``X`` given ``X_i`` equal to the face value; it is only needed when the
    components are dependent.
    """

    dims: int
    density: PointFn
    score: PointFn | None = None
    grad_x: PointFn | None = None
    marginal: Callable[[int, Any, float], Any] | None = None
    sampler: Callable[[Any, float], np.ndarray] | None = None
    quantile: Callable[[int, float, float], float] | None = None
    independent: bool = False
    conditional_sampler: Callable[..., np.ndarray] | None = None


@dataclass(frozen=True)
class Transform:
    """Push-out map ``g(x, theta)``.  ``inverse`` is optional and only used by checks."""

    dims: int
    map: PointFn
    jacobian: PointFn | None = None
    dtheta: PointFn | None = None
    inverse: PointFn | None = None


@dataclass(frozen=True)
class Performance:
    """Bounded measurable ``phi(y)``.  ``bound`` is the declared sup-norm bound."""

    dims: int
    eval: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray] | None = None
    smoothness: Smoothness = Smoothness.MEASURABLE_ONLY
    bound: float = 1.0e6

    def __post_init__(self):
        object.__setattr__(self, "smoothness", Smoothness(self.smoothness))


@dataclass(frozen=True)
class PushOut:
    """Conventional push-out LR formulation ``E phi(Y)`` with a theta-free support."""

    sampler: Callable[[Any, float], np.ndarray]
    score: PointFn
    performance: Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Problem:
    density: ParametricDensity
    transform: Transform
    performance: Performance
    support: Support
    theta_interval: ParameterInterval
    name: str = "anonymous"
    true_derivative: Callable[[float], float] | None = None
    pushout: PushOut | None = None
    base_density: ParametricDensity | None = None
    extras: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        dims = {
            "density": self.density.dims,
            "transform": self.transform.dims,
            "performance": self.performance.dims,
            "support": self.support.dims,
        }
        if len(set(dims.values())) != 1:
            raise DimensionMismatch(f"component dimensions disagree: {dims}")
        if self.base_density is not None and self.base_density.dims != self.dims:
            raise DimensionMismatch("base density dimension differs from problem dimension")

    @property
    def dims(self) -> int:
        return self.support.dims

    def psi(self, x, theta: float) -> np.ndarray:
        """Sample performance ``phi(g(x, theta))``."""
        return np.asarray(self.performance.eval(self.transform.map(np.asarray(x, float), theta)), float)
