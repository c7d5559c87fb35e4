"""Seeded random streams, variate generation and replication statistics.

Streams are keyed Philox generators: the 128-bit key packs ``(seed, stream_id)``
so any replication's stream can be built directly, without advancing through
its predecessors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, InfiniteBound, InvalidRate, NoConditionalSampler

_MASK64 = (1 << 64) - 1


def parse_seed(text: str | int) -> int:
    """Accept an int or a decimal / ``0x`` hexadecimal string."""
    if isinstance(text, int):
        return text
    s = str(text).strip().lower()
    return int(s, 16) if s.startswith(("0x", "-0x")) else int(s, 10)


@dataclass
class RngStream:
    seed: int
    stream_id: int = 0
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        key = (self.seed & _MASK64) | ((self.stream_id & _MASK64) << 64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def substream(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)

    def uniform(self, size=None):
        """Uniform variates on ``[0, 1)``."""
        return self._gen.random(size)


def exponential_from_uniform(u, rate: float):
    """Inverse CDF of Exp(rate) applied to ``u``."""
    if not rate > 0:
        raise InvalidRate(f"rate must be positive, got {rate}")
    return -np.log1p(-np.asarray(u, dtype=float)) / rate


def sample_exponential(stream: RngStream, rate: float, size=None):
    if not rate > 0:
        raise InvalidRate(f"rate must be positive, got {rate}")
    u = stream.uniform(size)
    out = exponential_from_uniform(u, rate)
    return float(out) if size is None else out


def sample_uniform_box(stream: RngStream, lower, upper) -> np.ndarray:
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise InfiniteBound("uniform box needs finite bounds")
    if np.any(hi <= lo):
        raise ValueError("degenerate or inverted box")
    return lo + (hi - lo) * stream.uniform(lo.shape)


def sample_face_conditional(p, stream: RngStream, face, theta: float, interior=None) -> np.ndarray:
    """Draw a point on ``face`` from the conditional law given ``X_i = face.value``.

    Independent components reuse ``interior`` (the replication's interior draw)
    with the face coordinate clamped, so interior and surface terms share one
    sample path.
    """
    dens = p.density
    if dens.independent:
        if interior is None:
            if dens.sampler is None:
                raise NoConditionalSampler("density has no sampler for the free coordinates")
            interior = dens.sampler(stream, theta)
        point = np.array(interior, dtype=float, copy=True)
        point[..., face.index] = face.value
        return point
    if dens.conditional_sampler is None:
        raise NoConditionalSampler(f"dependent components and no conditional sampler for face {face}")
    point = np.array(dens.conditional_sampler(face, interior, theta, stream), dtype=float)
    point[..., face.index] = face.value
    return point


@dataclass(frozen=True)
class SummaryStats:
    n: int
    mean: float
    stderr: float
    min: float
    max: float


def summarize(values) -> SummaryStats:
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise EmptyInput("cannot summarize an empty sample")
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        # exact for constant samples; floating summation would drift
        return SummaryStats(int(v.size), lo, 0.0 if v.size > 1 else math.nan, lo, hi)
    mean = float(np.mean(v))
    if v.size > 1:
        # two-pass: centre first, then square
        var = float(np.sum((v - mean) ** 2)) / (v.size - 1)
        stderr = math.sqrt(var / v.size)
    else:
        stderr = math.nan
    return SummaryStats(int(v.size), mean, stderr, lo, hi)
