"""Deterministic, splittable random streams and simplex sampling.

All randomness in the package flows through :class:`RngStream`, a thin
value-like wrapper around numpy's counter-based Philox generator. A stream
is fully determined by its ``(seed, stream_id)`` pair, so any consumer that
owns a stream can be re-run in isolation and reproduce its draws exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_MASK64 = (1 << 64) - 1

# Recorded in run manifests so results stay attributable to the exact
# bit-generator algorithm.
GENERATOR_NAME = f"philox4x64 (numpy.random.Philox, numpy {np.__version__})"


def _mix64(z: int) -> int:
    """SplitMix64 finalizer; scrambles a 64-bit word."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


@dataclass
class RngStream:
    """A named random stream: cheap to create, safe to hand to one consumer.

    Distinct ``stream_id`` values under the same seed key distinct Philox
    counters, which gives statistically independent sequences. A stream must
    not be drawn from by two threads at once; parallel consumers each own a
    child obtained via :meth:`split`.
    """

    seed: int
    stream_id: int = 0
    _gen: np.random.Generator | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not 0 <= self.seed <= _MASK64:
            raise ValueError(f"seed must fit in 64 bits, got {self.seed}")
        if not 0 <= self.stream_id <= _MASK64:
            raise ValueError(f"stream_id must fit in 64 bits, got {self.stream_id}")

    @property
    def generator(self) -> np.random.Generator:
        """The live numpy generator backing this stream (created lazily)."""
        if self._gen is None:
            key = self.seed | (self.stream_id << 64)
            self._gen = np.random.Generator(np.random.Philox(key=key))
        return self._gen

    def split(self, child_id: int) -> "RngStream":
        """Derive an independent child stream; the parent is untouched.

        Splitting is a pure function of ``(seed, stream_id, child_id)``:
        the same call always yields a stream with identical draws.
        """
        mixed = _mix64(self.stream_id ^ _mix64(child_id & _MASK64))
        return RngStream(seed=self.seed, stream_id=mixed)

    def uniform(self, size=None) -> np.ndarray | float:
        """Uniform(0,1) variates (half-open on the right, as numpy's)."""
        return self.generator.random(size)


@dataclass
class SimplexSample:
    """Redistribution fractions: n non-negative entries with unit sum."""

    epsilon: np.ndarray

    @property
    def n(self) -> int:
        return self.epsilon.shape[0]


def split_stream(rng: RngStream, child_id: int) -> RngStream:
    """Functional alias for :meth:`RngStream.split`."""
    return rng.split(child_id)


def _positive_uniforms(rng: RngStream, shape) -> np.ndarray:
    # A draw of exactly 0.0 would blow up -log(u); reject and redraw rather
    # than clamp.
    u = rng.generator.random(shape)
    while True:
        zero = u == 0.0
        if not zero.any():
            return u
        u[zero] = rng.generator.random(int(zero.sum()))


def sample_simplex_batch(rng: RngStream, n: int, count: int) -> np.ndarray:
    """``count`` independent uniform draws from the (n-1)-simplex, one per row.

    Uses exponential normalization: negate the logs of n uniforms and divide
    by their sum (equivalent to Dirichlet with unit concentrations).
    """
    if n < 1:
        raise ValueError(f"simplex dimension must be >= 1, got n={n}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    e = -np.log(_positive_uniforms(rng, (count, n)))
    return e / e.sum(axis=1, keepdims=True)


def sample_simplex(rng: RngStream, n: int) -> SimplexSample:
    """One uniform sample from the (n-1)-simplex."""
    return SimplexSample(epsilon=sample_simplex_batch(rng, n, 1)[0])
