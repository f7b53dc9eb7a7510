"""Laplace and Gumbel noise: samplers and distribution functions.

Samplers draw one open-interval uniform per variate and push it through the
inverse CDF, so any draw can be replayed from the uniform that produced it.
Randomness comes from a counter-based generator (Philox) keyed by
``(seed, stream)``; disjoint streams give independent sequences, which lets
Monte Carlo work be split across processes without changing its output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError

# Uniforms are (2n + 1) / 2**53 for n in [0, 2**52): exactly representable,
# strictly inside (0, 1), and symmetric about 1/2.
_UNIFORM_BITS = 52


@dataclass(frozen=True)
class NoiseScale:
    """Scale parameter lambda of a Laplace distribution."""

    value: float

    def __post_init__(self):
        v = float(self.value)
        if not math.isfinite(v) or v <= 0:
            raise InvalidParameterError(f"noise scale must be positive and finite, got {self.value!r}")
        object.__setattr__(self, "value", v)

    def __float__(self):
        return self.value


def as_scale(scale) -> NoiseScale:
    return scale if isinstance(scale, NoiseScale) else NoiseScale(scale)


@dataclass
class RngState:
    """Reproducible random stream identified by ``(seed, stream)``.

    The underlying generator advances as draws are taken; two ``RngState``
    objects built from the same pair produce identical sequences.
    """

    seed: int
    stream: int = 0
    _generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise InvalidParameterError("seed must be a 64-bit unsigned integer")
        if self.stream < 0:
            raise InvalidParameterError("stream must be nonnegative")
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream,))
        self._generator = np.random.Generator(np.random.Philox(seq))

    @property
    def generator(self) -> np.random.Generator:
        return self._generator

    def spawn(self, stream: int) -> "RngState":
        """Fresh state on another stream of the same seed."""
        return RngState(self.seed, stream)


def as_generator(rng) -> np.random.Generator:
    """Accepts an RngState, a numpy Generator, or an integer seed."""
    if isinstance(rng, RngState):
        return rng.generator
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, (int, np.integer)):
        return RngState(int(rng)).generator
    raise TypeError(f"cannot build a generator from {type(rng).__name__}")


def open_uniform(rng, size=None):
    """Uniform draws on the open interval (0, 1)."""
    gen = as_generator(rng)
    n = gen.integers(0, 2**_UNIFORM_BITS, size=size, dtype=np.int64)
    return (2.0 * n + 1.0) * 2.0 ** -(_UNIFORM_BITS + 1)


def laplace_ppf(u, scale=1.0):
    """Inverse CDF of Laplace(scale) evaluated at ``u`` in (0, 1)."""
    lam = as_scale(scale).value
    u = np.asarray(u, dtype=float)
    lo = u < 0.5
    # Both branches are evaluated by np.where; guard the log arguments.
    left = np.log(2.0 * np.where(lo, u, 0.25))
    right = -np.log(2.0 * np.where(lo, 0.75, 1.0 - u))
    z = lam * np.where(lo, left, right)
    return z if z.ndim else float(z)


def sample_laplace(scale, rng, size=None):
    """Draws from Laplace(scale) by inverse-CDF transform.

    Args:
      scale: the Laplace scale lambda, a float or NoiseScale.
      rng: an RngState, numpy Generator or integer seed.
      size: optional output shape; ``None`` returns a Python float.
    """
    return laplace_ppf(open_uniform(rng, size), scale)


def laplace_cdf(z):
    """CDF of the standard Laplace distribution."""
    z = np.asarray(z, dtype=float)
    neg = 0.5 * np.exp(np.minimum(z, 0.0))
    pos = 1.0 - 0.5 * np.exp(-np.maximum(z, 0.0))
    out = np.where(z <= 0, neg, pos)
    return out if out.ndim else float(out)


def laplace_density(z, scale=1.0):
    lam = as_scale(scale).value
    z = np.asarray(z, dtype=float)
    out = np.exp(-np.abs(z) / lam) / (2.0 * lam)
    return out if out.ndim else float(out)


def laplace_diff_density(z, scale=1.0):
    """Density of X - Y for independent X, Y ~ Laplace(scale)."""
    lam = as_scale(scale).value
    a = np.abs(np.asarray(z, dtype=float))
    out = (lam + a) / (4.0 * lam**2) * np.exp(-a / lam)
    return out if out.ndim else float(out)


def gumbel_ppf(u, scale=1.0):
    u = np.asarray(u, dtype=float)
    out = -scale * np.log(-np.log(u))
    return out if out.ndim else float(out)


def sample_gumbel(scale, rng, size=None):
    """Draws ``scale`` times a standard Gumbel variate (inverse-CDF)."""
    if not scale > 0:
        raise InvalidParameterError(f"Gumbel scale must be positive, got {scale!r}")
    return gumbel_ppf(open_uniform(rng, size), scale)
