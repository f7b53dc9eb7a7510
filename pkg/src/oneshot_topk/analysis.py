"""Utility bound, exact outcome probabilities, and numerical checks of the supporting inequalities.

The exact oracle conditions on which selected element is the k-th smallest
noisy value and on that element's noise ``g``. Given both, every other index
``i`` lands in the selected set independently, with probability
``G((x_j + g - x_i) / lambda)`` where ``G`` is the standard Laplace CDF, so

    P(S) = sum_{j in S} int lap(g) prod_{i in S, i != j} q_i(g)
                                   prod_{i not in S} (1 - q_i(g)) dg.

Each integral is one-dimensional and piecewise smooth with kinks at ``g = 0``
and ``g = x_i - x_j``.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .errors import InvalidParameterError, ResourceError
from .mechanisms import as_counts
from .noise import as_generator, as_scale, laplace_cdf, laplace_density, open_uniform
from .quadrature import integrate

# Constants from the approximate-DP proof.
C0 = 3.9**2
C1 = 1.95
C_BENNETT = 1.9

MAX_EXACT_M = 20
MAX_EXACT_SETS = 200_000
TRUNCATION = 50.0  # tail cut-off of the noise integral, in units of lambda
QUAD_TOL = 1e-10


def utility_bound(m, scale, gap):
    """Lower bound on the probability that the true k-extreme set is returned.

    ``p = max(0, 1 - (m - 1) (2 lambda + gap) exp(-gap / lambda) / (4 lambda))``
    """
    if m < 2:
        raise InvalidParameterError(f"m must be at least 2, got {m}")
    if gap < 0:
        raise InvalidParameterError(f"gap must be nonnegative, got {gap}")
    lam = as_scale(scale).value
    miss = (m - 1) * (2.0 * lam + gap) * math.exp(-gap / lam) / (4.0 * lam)
    return max(0.0, 1.0 - miss)


def min_gap(x):
    """Smallest difference between consecutive sorted counts."""
    s = np.sort(as_counts(x))
    return float(np.min(np.diff(s)))


def _check_budget(m, k):
    if m > MAX_EXACT_M:
        raise ResourceError(f"exact oracle supports m <= {MAX_EXACT_M}, got {m}")
    n = math.comb(m, k)
    if n > MAX_EXACT_SETS:
        raise ResourceError(f"C({m},{k}) = {n} exceeds the budget of {MAX_EXACT_SETS} sets")


def _set_probabilities(x, member, lam, tol, chunk=4096):
    """Exact probabilities of the sets whose membership rows are ``member``."""
    m = x.size
    probs = np.zeros(member.shape[0])
    for j in range(m):
        rows = np.flatnonzero(member[:, j])
        if rows.size == 0:
            continue
        d = x - x[j]
        others = np.arange(m) != j
        kinks = np.concatenate([[0.0, d.min() - TRUNCATION * lam, d.max() + TRUNCATION * lam], d[others]])
        for start in range(0, rows.size, chunk):
            sub = member[rows[start:start + chunk]][:, others]

            def integrand(g, sub=sub):
                z = (g[None, :] - d[others][:, None]) / lam
                inside = laplace_cdf(z)
                outside = laplace_cdf(-z)
                factors = np.where(sub[:, :, None], inside[None], outside[None])
                return factors.prod(axis=1) * laplace_density(g, lam)

            vals, _ = integrate(integrand, kinks, tol=tol)
            probs[rows[start:start + chunk]] += vals
    return probs


def exact_outcome_probability(x, S, scale, tol=QUAD_TOL):
    """Probability that the oneshot mechanism on ``x`` selects exactly ``S``.

    Raises:
      NumericError: a quadrature failed to meet ``tol``.
    """
    x = as_counts(x, min_len=1)
    S = sorted(set(int(i) for i in S))
    if not S or S[0] < 0 or S[-1] >= x.size:
        raise InvalidParameterError("S must be a nonempty set of valid indices")
    member = np.zeros((1, x.size), dtype=bool)
    member[0, S] = True
    return float(_set_probabilities(x, member, as_scale(scale).value, tol)[0])


def outcome_distribution(x, k, scale, tol=QUAD_TOL):
    """Exact probabilities of every k-subset, in lexicographic order.

    Returns:
      ``(sets, probs)`` where ``sets`` is a list of index tuples.
    """
    x = as_counts(x, min_len=1)
    m = x.size
    if not 1 <= k <= m:
        raise InvalidParameterError(f"k must lie in [1, m={m}], got k={k}")
    _check_budget(m, k)
    sets = list(itertools.combinations(range(m), k))
    member = np.zeros((len(sets), m), dtype=bool)
    for r, s in enumerate(sets):
        member[r, list(s)] = True
    return sets, _set_probabilities(x, member, as_scale(scale).value, tol)


def as_probabilities(q):
    q = np.asarray(q, dtype=float)
    if q.ndim != 1 or not np.all((q > 0) & (q < 1)):
        raise InvalidParameterError("probabilities must lie strictly inside (0, 1)")
    return q


def check_tau_close(q, q2, tau):
    """Whether ``|q_i - q2_i| <= tau q_i (1 - q_i)`` for every coordinate."""
    q = np.asarray(q, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    if q.shape != q2.shape:
        raise InvalidParameterError(f"length mismatch: {q.shape} vs {q2.shape}")
    if tau < 0:
        raise InvalidParameterError("tau must be nonnegative")
    return bool(np.all(np.abs(q - q2) <= tau * q * (1.0 - q)))


def tau_regime(epsilon, k, m, delta):
    """Largest closeness ``tau`` covered by the Bernoulli subset-mechanism regime."""
    return epsilon / (C1 * math.sqrt(k * math.log(m / delta)))


def laplace_cdf_gap(z, z2):
    """``|G(z2) - G(z)|`` without cancellation when both points share a tail."""
    lo = np.minimum(z, z2)
    hi = np.maximum(z, z2)
    step = hi - lo
    left = 0.5 * np.exp(np.minimum(hi, 0.0)) * -np.expm1(-step)
    right = 0.5 * np.exp(-np.maximum(lo, 0.0)) * -np.expm1(-step)
    across = -0.5 * (np.expm1(-np.maximum(hi, 0.0)) + np.expm1(np.minimum(lo, 0.0)))
    return np.where(hi <= 0, left, np.where(lo >= 0, right, across))


def cdf_lipschitz_sides(z, z2):
    """Both sides of ``|G(z2) - G(z)| <= 2 e^{|z2 - z|} |z2 - z| G(z) (1 - G(z))``."""
    z = np.asarray(z, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    lhs = laplace_cdf_gap(z, z2)
    step = np.abs(z2 - z)
    rhs = 2.0 * np.exp(step) * step * laplace_cdf(z) * laplace_cdf(-z)
    return lhs, rhs


def cdf_lipschitz_bound_holds(z, z2):
    lhs, rhs = cdf_lipschitz_sides(z, z2)
    return bool(np.all(lhs <= rhs))


def bernoulli_subset_mechanism(q, rng):
    """Random subset including each index ``i`` independently with probability ``q_i``."""
    q = as_probabilities(q)
    return frozenset(int(i) for i in np.flatnonzero(open_uniform(rng, q.size) < q))


def bernoulli_subset_batch(q, rng, trials):
    """Boolean ``(trials, m)`` inclusion matrix for repeated subset draws."""
    q = as_probabilities(q)
    return open_uniform(as_generator(rng), (trials, q.size)) < q


def bennett_h(u):
    """Bennett's function ``(1 + u) log(1 + u) - u``."""
    if np.any(np.asarray(u) < 0):
        raise InvalidParameterError("bennett_h is defined for u >= 0")
    u = np.asarray(u, dtype=float)
    out = (1.0 + u) * np.log1p(u) - u
    return out if out.ndim else float(out)


def poisson_binomial_tail_bound(q, k, t):
    """Bound on ``P(sum Z_i <= k)`` for independent Bernoulli(q_i), given ``sum q >= (1 + t) k``."""
    q = as_probabilities(q)
    if not t > 0:
        raise InvalidParameterError(f"t must be positive, got {t}")
    if q.sum() < (1.0 + t) * k:
        raise InvalidParameterError(f"sum(q) = {q.sum():.6g} is below (1 + t) k = {(1 + t) * k:.6g}")
    return math.exp(-(1.0 + t) * k * bennett_h(t / (t + 1.0)))


def concentration_threshold(k, m, delta):
    """``K = (1 + c sqrt(log(m / delta) / k)) k``; beyond it the lower tail is at most delta/m."""
    return (1.0 + C_BENNETT * math.sqrt(math.log(m / delta) / k)) * k


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def poisson_binomial_exact_tail(q, k):
    """Exact ``P(sum Z_i <= k)`` by dynamic programming over the count.

    Only counts ``0..k`` are tracked. Each update is carried in a
    compensated (value, error) pair.
    """
    q = np.asarray(q, dtype=float)
    if q.ndim != 1 or np.any((q < 0) | (q > 1)):
        raise InvalidParameterError("probabilities must lie in [0, 1]")
    if q.size > 10_000:
        raise ResourceError("exact Poisson-binomial tail supports at most 10^4 variables")
    if k < 0:
        return 0.0
    if k >= q.size:
        return 1.0
    hi = np.zeros(k + 1)
    lo = np.zeros(k + 1)
    hi[0] = 1.0
    for p in q:
        stay_hi, stay_lo = hi * (1.0 - p), lo * (1.0 - p)
        move_hi = np.concatenate([[0.0], hi[:-1] * p])
        move_lo = np.concatenate([[0.0], lo[:-1] * p])
        s, e = _two_sum(stay_hi, move_hi)
        hi, lo = _two_sum(s, e + stay_lo + move_lo)
    return math.fsum(np.concatenate([hi, lo]))
