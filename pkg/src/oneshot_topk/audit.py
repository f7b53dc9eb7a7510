"""Certifying (epsilon, delta)-DP of the oneshot mechanism on small instances.

Only the released index set is audited, not the fresh estimates. Over a
finite outcome space, (epsilon, delta)-DP for a pair of inputs is exactly
the condition that the hockey-stick divergence
``sum_s max(P(s) - e^eps P'(s), 0)`` is at most delta in both directions.
The smallest such epsilon is found by bisection.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .analysis import MAX_EXACT_SETS, QUAD_TOL, outcome_distribution
from .errors import InvalidParameterError, ResourceError
from .mechanisms import as_counts, oneshot_membership_batch
from .noise import as_generator, as_scale

EPS_BRACKET = (0.0, 20.0)
EPS_TOL = 1e-4


@dataclass(frozen=True)
class AdjacentPair:
    x: np.ndarray
    x2: np.ndarray
    sensitivity: float = 1.0

    def __post_init__(self):
        x, x2 = as_counts(self.x, 1), as_counts(self.x2, 1)
        if x.shape != x2.shape:
            raise InvalidParameterError("adjacent vectors must have equal length")
        if not self.sensitivity > 0:
            raise InvalidParameterError("sensitivity must be positive")
        if np.max(np.abs(x - x2)) > self.sensitivity * (1 + 1e-12):
            raise InvalidParameterError("vectors differ by more than the sensitivity in some coordinate")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "x2", x2)

    def swapped(self):
        return AdjacentPair(self.x2, self.x, self.sensitivity)


@dataclass
class AuditReport:
    """Audit outcome for one adjacent pair (or the worst over many).

    ``samples_or_tolerance`` is the quadrature tolerance for exact audits and
    the trial count for Monte Carlo ones. Monte Carlo reports also carry
    ``interval``, the (optimistic, conservative) bounds around the point
    estimate; ``epsilon_hat`` is the conservative end.
    """

    epsilon_hat: float
    delta: float
    method: str
    samples_or_tolerance: float
    worst_pair: AdjacentPair
    worst_set: tuple
    target_epsilon: float | None = None
    epsilon_point: float | None = None
    interval: tuple | None = None
    pairs_checked: int = 1

    @property
    def slack(self):
        """``epsilon_hat / target_epsilon``; below 1 means the calibration is loose."""
        if not self.target_epsilon:
            return None
        return self.epsilon_hat / self.target_epsilon

    def passes(self, tol=0.0):
        return self.target_epsilon is not None and self.epsilon_hat <= self.target_epsilon + tol

    def to_dict(self):
        return {
            "epsilon_hat": self.epsilon_hat,
            "delta": self.delta,
            "method": self.method,
            "samples_or_tolerance": self.samples_or_tolerance,
            "target_epsilon": self.target_epsilon,
            "slack": self.slack,
            "epsilon_point": self.epsilon_point,
            "interval": list(self.interval) if self.interval else None,
            "pairs_checked": self.pairs_checked,
            "worst_pair": {
                "x": self.worst_pair.x.tolist(),
                "x2": self.worst_pair.x2.tolist(),
                "sensitivity": self.worst_pair.sensitivity,
            },
            "worst_set": [int(i) for i in self.worst_set],
        }


def enumerate_ksubsets(m, k):
    """All k-subsets of ``range(m)`` in lexicographic order."""
    if k < 0 or k > m:
        raise InvalidParameterError(f"need 0 <= k <= m, got k={k}, m={m}")
    if math.comb(m, k) > MAX_EXACT_SETS:
        raise ResourceError(f"C({m},{k}) exceeds the enumeration budget of {MAX_EXACT_SETS}")
    return list(itertools.combinations(range(m), k))


def hockey_stick(p, p2, epsilon):
    return float(np.maximum(np.asarray(p) - math.exp(epsilon) * np.asarray(p2), 0.0).sum())


def one_way_epsilon(p, p2, delta, bracket=EPS_BRACKET, tol=EPS_TOL):
    """Smallest epsilon (to ``tol``, rounded up) with ``sum max(p - e^eps p2, 0) <= delta``.

    Returns ``inf`` when even the top of the bracket fails.
    """
    lo, hi = bracket
    if hockey_stick(p, p2, lo) <= delta:
        return lo
    if hockey_stick(p, p2, hi) > delta:
        return math.inf
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if hockey_stick(p, p2, mid) <= delta:
            hi = mid
        else:
            lo = mid
    return hi


def epsilon_for_delta(p, p2, delta, bracket=EPS_BRACKET, tol=EPS_TOL):
    """Smallest epsilon meeting the hockey-stick condition in both directions."""
    return max(one_way_epsilon(p, p2, delta, bracket, tol), one_way_epsilon(p2, p, delta, bracket, tol))


def _worst_set(p, p2, sets):
    with np.errstate(divide="ignore", invalid="ignore"):
        loss = np.abs(np.log(p) - np.log(p2))
    loss = np.nan_to_num(loss, nan=0.0, posinf=np.inf)
    return sets[int(np.argmax(loss))]


def epsilon_hat_exact(pair, k, scale, delta, tol=QUAD_TOL, target_epsilon=None):
    """Exact-quadrature audit of one adjacent pair."""
    sets, p = outcome_distribution(pair.x, k, scale, tol)
    _, p2 = outcome_distribution(pair.x2, k, scale, tol)
    return AuditReport(
        epsilon_hat=epsilon_for_delta(p, p2, delta),
        delta=delta,
        method="exact-quadrature",
        samples_or_tolerance=tol,
        worst_pair=pair,
        worst_set=_worst_set(p, p2, sets),
        target_epsilon=target_epsilon,
    )


def _set_codes(m, k):
    """Lookup from bitmask to lexicographic set index."""
    sets = enumerate_ksubsets(m, k)
    lookup = np.full(2**m, -1, dtype=np.int64)
    for r, s in enumerate(sets):
        lookup[sum(1 << i for i in s)] = r
    return sets, lookup


def _frequencies(x, k, scale, gen, trials, lookup, n_sets, chunk=200_000):
    weights = 1 << np.arange(x.size, dtype=np.int64)
    counts = np.zeros(n_sets, dtype=np.int64)
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        member = oneshot_membership_batch(x, k, scale, gen, n)
        counts += np.bincount(lookup[member.astype(np.int64) @ weights], minlength=n_sets)
        done += n
    return counts


def clopper_pearson(counts, trials, alpha):
    """Two-sided exact binomial interval at level ``1 - alpha`` per entry."""
    counts = np.asarray(counts)
    lower = np.where(counts > 0, stats.beta.ppf(alpha / 2, counts, trials - counts + 1), 0.0)
    upper = np.where(counts < trials, stats.beta.ppf(1 - alpha / 2, counts + 1, trials - counts), 1.0)
    return lower, upper


def epsilon_hat_monte_carlo(pair, k, scale, delta, trials, rng, confidence=0.99, target_epsilon=None):
    """Sampled audit of one adjacent pair.

    Each outcome set gets a Clopper-Pearson interval, Bonferroni-corrected
    over sets. The conservative epsilon compares the upper envelope of one
    side against the lower envelope of the other; the optimistic one does
    the reverse.
    """
    if trials < 10_000:
        raise InvalidParameterError("Monte Carlo audit needs at least 10^4 trials")
    scale = as_scale(scale)
    gen = as_generator(rng)
    sets, lookup = _set_codes(pair.x.size, k)
    n_sets = len(sets)
    c = _frequencies(pair.x, k, scale, gen, trials, lookup, n_sets)
    c2 = _frequencies(pair.x2, k, scale, gen, trials, lookup, n_sets)
    alpha = (1 - confidence) / n_sets
    lo, up = clopper_pearson(c, trials, alpha)
    lo2, up2 = clopper_pearson(c2, trials, alpha)

    conservative = max(one_way_epsilon(up, lo2, delta), one_way_epsilon(up2, lo, delta))
    optimistic = max(one_way_epsilon(lo, up2, delta), one_way_epsilon(lo2, up, delta))
    p, p2 = c / trials, c2 / trials
    return AuditReport(
        epsilon_hat=conservative,
        delta=delta,
        method="monte-carlo",
        samples_or_tolerance=trials,
        worst_pair=pair,
        worst_set=_worst_set(p, p2, sets),
        target_epsilon=target_epsilon,
        epsilon_point=epsilon_for_delta(p, p2, delta),
        interval=(optimistic, conservative),
    )


def adjacent_corners(x, sensitivity=1.0, limit=2**20, candidate=None):
    """Adjacent inputs at the corners of the sensitivity box around ``x``.

    Selection probabilities are monotone in each coordinate, so the worst
    neighbour sits at a corner ``x + s v`` with ``v`` in ``{-1, +1}^m``.
    All ``2^m`` corners are returned when that is at most ``limit``.
    Otherwise only two structured corners are returned: ``candidate`` shifted
    down and its complement shifted up, and the reverse. The default
    candidate is the lower half of ``x`` by value.
    """
    x = as_counts(x, 1)
    m = x.size
    if not sensitivity > 0:
        raise InvalidParameterError("sensitivity must be positive")
    if 2**m <= limit:
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=m)))
        return [x + sensitivity * v for v in signs]
    if candidate is None:
        candidate = np.argsort(x, kind="stable")[: m // 2]
    v = np.ones(m)
    v[list(candidate)] = -1.0
    return [x + sensitivity * v, x - sensitivity * v]


def _exact_against(args):
    x2, k, lam, tol = args
    return outcome_distribution(x2, k, lam, tol)[1]


def audit_worst_case(x, k, scale, delta, sensitivity=1.0, target_epsilon=None,
                     tol=QUAD_TOL, limit=2**20, jobs=1):
    """Exact audit of ``x`` against every adjacent corner; returns the worst report.

    Corners are evaluated in parallel when ``jobs > 1``; the reduction keeps
    the first corner attaining the maximum, so the result does not depend on
    ``jobs``.
    """
    x = as_counts(x, 1)
    lam = as_scale(scale).value
    sets, p = outcome_distribution(x, k, lam, tol)
    corners = adjacent_corners(x, sensitivity, limit)
    work = [(c, k, lam, tol) for c in corners]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            dists = list(pool.map(_exact_against, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        dists = [_exact_against(w) for w in work]
    best = None
    for c, p2 in zip(corners, dists):
        eps = epsilon_for_delta(p, p2, delta)
        if best is None or eps > best[0]:
            best = (eps, c, p2)
    eps, c, p2 = best
    return AuditReport(
        epsilon_hat=eps,
        delta=delta,
        method="exact-quadrature",
        samples_or_tolerance=tol,
        worst_pair=AdjacentPair(x, c, sensitivity),
        worst_set=_worst_set(p, p2, sets),
        target_epsilon=target_epsilon,
        pairs_checked=len(corners),
    )
