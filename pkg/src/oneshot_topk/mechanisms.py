"""Private selection of the k smallest (or largest) of m counts.

Indices are 0-based throughout the library; the CLI and file formats
translate to 1-based at the boundary. Ties among noisy values are broken
toward the smaller index so that every mechanism is a deterministic
function of its random draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameterError
from .noise import NoiseScale, as_generator, as_scale, gumbel_ppf, laplace_ppf, open_uniform

MAX_EPSILON = 0.2
MAX_DELTA = 0.05


def as_counts(x, min_len=2) -> np.ndarray:
    """Validates a count vector and returns it as a float array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise InvalidParameterError("counts must be one-dimensional")
    if arr.size < min_len:
        raise InvalidParameterError(f"need at least {min_len} counts, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError("counts must be finite")
    return arr


def _check_k(k, m):
    if not 1 <= k <= m:
        raise InvalidParameterError(f"k must lie in [1, m={m}], got k={k}")


@dataclass(frozen=True)
class PrivacyParams:
    """Privacy target together with the problem shape.

    The bounds ``epsilon <= 0.2`` and ``delta <= 0.05`` are the regime in
    which the approximate-DP calibration is proven; they are enforced here.
    """

    epsilon: float
    delta: float
    k: int
    m: int
    sensitivity: float = 1.0

    def __post_init__(self):
        if not 0 < self.epsilon <= MAX_EPSILON:
            raise InvalidParameterError(f"epsilon must lie in (0, {MAX_EPSILON}], got {self.epsilon}")
        if not 0 < self.delta <= MAX_DELTA:
            raise InvalidParameterError(f"delta must lie in (0, {MAX_DELTA}], got {self.delta}")
        if self.m < 2:
            raise InvalidParameterError(f"m must be at least 2, got {self.m}")
        if not 1 <= self.k <= self.m:
            raise InvalidParameterError(f"k must lie in [1, m={self.m}], got k={self.k}")
        if not self.sensitivity > 0:
            raise InvalidParameterError(f"sensitivity must be positive, got {self.sensitivity}")


@dataclass(frozen=True)
class TopKSelection:
    """Unordered selected index set plus freshly noised value estimates.

    Equality compares the index set only; estimates are random even when the
    selection agrees.
    """

    indices: frozenset
    estimates: dict = field(compare=False)
    noise_scale: NoiseScale = field(compare=False)

    def __post_init__(self):
        if set(self.estimates) != set(self.indices):
            raise InvalidParameterError("estimates must be keyed exactly by the selected indices")

    @property
    def k(self):
        return len(self.indices)


def calibrate_pure(k, sensitivity, epsilon) -> NoiseScale:
    """Noise scale ``2 k s / epsilon`` giving (epsilon, 0)-DP."""
    if k < 1:
        raise InvalidParameterError(f"k must be at least 1, got {k}")
    if not epsilon > 0:
        raise InvalidParameterError(f"epsilon must be positive, got {epsilon}")
    if not sensitivity > 0:
        raise InvalidParameterError(f"sensitivity must be positive, got {sensitivity}")
    return NoiseScale(2.0 * k * sensitivity / epsilon)


def calibrate_approx(params: PrivacyParams) -> NoiseScale:
    """Noise scale ``8 s sqrt(k ln(m / delta)) / epsilon`` giving (epsilon, delta)-DP."""
    ratio = params.m / params.delta
    if ratio <= 1:
        raise InvalidParameterError(f"m/delta must exceed 1, got {ratio}")
    lam = 8.0 * params.sensitivity * math.sqrt(params.k * math.log(ratio)) / params.epsilon
    return NoiseScale(lam)


def approx_regime_holds(k, m, delta):
    """Whether ``k >= C0 ln(m / delta)``, where the sqrt(k) calibration is the binding one.

    Below this threshold the approximate calibration already exceeds the
    pure one.
    """
    from .analysis import C0

    return k >= C0 * math.log(m / delta)


def smallest_k(noisy, k):
    """Indices of the k smallest entries along the last axis, ascending by value.

    Stable sort: ties go to the smaller index.
    """
    return np.argsort(noisy, axis=-1, kind="stable")[..., :k]


def oneshot_select_min(x, k, scale, rng) -> TopKSelection:
    """Oneshot Laplace mechanism selecting the k smallest counts.

    One Laplace(lambda) draw is added to every count and the indices of the k
    smallest noisy values are released as a set. Each released index gets a
    fresh, independent Laplace(lambda) draw added to its true value; the
    selection noise is never reused, since conditioned on selection it is
    biased downward.

    Draw order: m selection draws, then k estimate draws for the selected
    indices in increasing index order.
    """
    x = as_counts(x, min_len=1)
    scale = as_scale(scale)
    _check_k(k, x.size)
    gen = as_generator(rng)
    noisy = x + laplace_ppf(open_uniform(gen, x.size), scale)
    chosen = np.sort(smallest_k(noisy, k))
    fresh = laplace_ppf(open_uniform(gen, k), scale)
    estimates = {int(i): float(x[i] + g) for i, g in zip(chosen, fresh)}
    return TopKSelection(frozenset(estimates), estimates, scale)


def oneshot_select_max(x, k, scale, rng) -> TopKSelection:
    """Oneshot Laplace mechanism selecting the k largest counts (runs on -x)."""
    x = as_counts(x, min_len=1)
    sel = oneshot_select_min(-x, k, scale, rng)
    estimates = {i: -v for i, v in sel.estimates.items()}
    return TopKSelection(sel.indices, estimates, sel.noise_scale)


def report_noisy_min(x, scale, rng):
    """Index of the smallest Laplace-noised count and a fresh estimate of it."""
    sel = oneshot_select_min(as_counts(x, min_len=1), 1, scale, rng)
    (idx, est), = sel.estimates.items()
    return idx, est


def peeling_select(x, k, per_round_scale, rng):
    """Report Noisy Min applied k times, removing each winner.

    No composition accounting is done here; ``per_round_scale`` is whatever
    the caller's accounting produced.

    Returns:
      A list of ``(index, estimate)`` pairs in the order they were found.
    """
    x = as_counts(x, min_len=1)
    _check_k(k, x.size)
    gen = as_generator(rng)
    remaining = np.arange(x.size)
    out = []
    for _ in range(k):
        pos, est = report_noisy_min(x[remaining], per_round_scale, gen)
        out.append((int(remaining[pos]), est))
        remaining = np.delete(remaining, pos)
    return out


def gumbel_oneshot_select(x, k, scale, rng):
    """Oneshot Gumbel baseline: ordered indices of the k smallest ``x_i - G_i``.

    Subtracting a Gumbel variate is the min-side mirror of the Gumbel-max
    trick, so this reproduces exponential-mechanism peeling on ``-x``.
    """
    x = as_counts(x, min_len=1)
    _check_k(k, x.size)
    if not scale > 0:
        raise InvalidParameterError(f"Gumbel scale must be positive, got {scale!r}")
    noisy = x - gumbel_ppf(open_uniform(rng, x.size), scale)
    return [int(i) for i in smallest_k(noisy, k)]


def oneshot_membership_batch(x, k, scale, rng, trials):
    """Selection step of the oneshot mechanism repeated ``trials`` times.

    Estimates are not drawn. Returns a boolean ``(trials, m)`` array whose
    rows mark the selected sets.
    """
    x = as_counts(x, min_len=1)
    _check_k(k, x.size)
    noisy = x + laplace_ppf(open_uniform(rng, (trials, x.size)), scale)
    picked = smallest_k(noisy, k)
    member = np.zeros(noisy.shape, dtype=bool)
    np.put_along_axis(member, picked, True, axis=1)
    return member
