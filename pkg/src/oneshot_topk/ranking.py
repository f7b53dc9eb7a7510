"""Private top-k ranking from BTL pairwise comparisons via the spectral method.

A comparison graph stores, for each edge ``(i, j)`` with ``i < j``, the ``L``
binary outcomes ``y_ij``; ``y_ij = 1`` means ``j`` beat ``i``. The orientation
``(j, i)`` is implied by ``y_ji = 1 - y_ij``. The random walk moves from ``i``
to ``j`` with probability ``ybar_ij / d``, so its stationary distribution
puts mass on frequent winners.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConstraintError, ConvergenceError, InvalidParameterError
from .mechanisms import PrivacyParams, calibrate_approx, oneshot_select_max
from .noise import as_generator, open_uniform


@dataclass(frozen=True, eq=False)
class ComparisonGraph:
    """Pairwise comparison data.

    Attributes:
      m: number of items.
      samples: maps each edge ``(i, j)``, ``i < j``, to a uint8 array of its
        ``L`` outcomes ``y_ij``.
      L: comparisons per edge.
      d: walk normalisation; must be at least the maximum degree.
    """

    m: int
    samples: dict
    L: int
    d: float

    def __post_init__(self):
        if self.m < 2:
            raise InvalidParameterError("need at least two items")
        if self.L < 1:
            raise InvalidParameterError("L must be at least 1")
        if not self.d > 0:
            raise InvalidParameterError("d must be positive")
        for (i, j), y in self.samples.items():
            if not 0 <= i < j < self.m:
                raise InvalidParameterError(f"edge {(i, j)} must satisfy 0 <= i < j < m")
            if len(y) != self.L:
                raise InvalidParameterError(f"edge {(i, j)} has {len(y)} samples, expected {self.L}")

    def __eq__(self, other):
        if not isinstance(other, ComparisonGraph):
            return NotImplemented
        return (
            (self.m, self.L, self.d) == (other.m, other.L, other.d)
            and self.samples.keys() == other.samples.keys()
            and all(np.array_equal(y, other.samples[e]) for e, y in self.samples.items())
        )

    __hash__ = None

    @property
    def edges(self):
        return sorted(self.samples)

    def degrees(self):
        deg = np.zeros(self.m, dtype=int)
        for i, j in self.samples:
            deg[i] += 1
            deg[j] += 1
        return deg

    @property
    def max_degree(self):
        return int(self.degrees().max())

    def is_connected(self):
        if not self.samples:
            return False
        e = np.array(self.edges)
        adj = coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(self.m, self.m))
        n, _ = connected_components(adj, directed=False)
        return n == 1

    def flipped(self, edge, sample):
        """Copy with one sample of ``edge`` replaced by its complement."""
        i, j = edge
        key = (min(i, j), max(i, j))
        y = self.samples[key].copy()
        y[sample] = 1 - y[sample]
        return replace(self, samples={**self.samples, key: y})

    def with_sample(self, edge, sample, value):
        i, j = edge
        key = (min(i, j), max(i, j))
        y = self.samples[key].copy()
        y[sample] = value
        return replace(self, samples={**self.samples, key: y})


def default_normalization(degrees):
    """Max degree plus one, which keeps every diagonal entry of P positive."""
    return float(np.max(degrees) + 1)


def simulate_comparisons(omega, edge_prob, L, rng, d=None):
    """Erdos-Renyi comparison graph with BTL outcomes.

    Each unordered pair is an edge independently with ``edge_prob``, and each
    edge gets ``L`` draws of ``y_ij ~ Bernoulli(omega_j / (omega_i + omega_j))``.
    Connectivity is not enforced; check ``is_connected()``.
    """
    omega = np.asarray(omega, dtype=float)
    if omega.ndim != 1 or omega.size < 2 or np.any(omega <= 0):
        raise InvalidParameterError("omega must hold at least two positive scores")
    if not 0 < edge_prob <= 1:
        raise InvalidParameterError("edge_prob must lie in (0, 1]")
    if L < 1:
        raise InvalidParameterError("L must be at least 1")
    gen = as_generator(rng)
    m = omega.size
    samples = {}
    for i in range(m):
        for j in range(i + 1, m):
            if open_uniform(gen) < edge_prob:
                p = omega[j] / (omega[i] + omega[j])
                samples[(i, j)] = (open_uniform(gen, L) < p).astype(np.uint8)
    deg = np.zeros(m, dtype=int)
    for i, j in samples:
        deg[i] += 1
        deg[j] += 1
    if d is None:
        d = default_normalization(deg)
    return ComparisonGraph(m, samples, L, float(d))


def sufficient_stats(graph):
    """``m x m`` matrix of win fractions; ``Y[i, j] = ybar_ij`` on edges, 0 elsewhere."""
    Y = np.zeros((graph.m, graph.m))
    for (i, j), y in graph.samples.items():
        ybar = float(np.mean(y, dtype=float))
        Y[i, j] = ybar
        Y[j, i] = 1.0 - ybar
    return Y


def exact_btl_stats(omega, edges):
    """Win fractions equal to the BTL probabilities on the given edges."""
    omega = np.asarray(omega, dtype=float)
    Y = np.zeros((omega.size, omega.size))
    for i, j in edges:
        Y[i, j] = omega[j] / (omega[i] + omega[j])
        Y[j, i] = omega[i] / (omega[i] + omega[j])
    return Y


def transition_from_stats(Y, d, edges=None):
    """Walk matrix with ``P_ij = Y_ij / d`` off the diagonal and the row complement on it.

    Args:
      Y: win-fraction matrix; entries off ``edges`` are ignored.
      d: normalisation, at least the maximum degree.
      edges: unordered pairs present; defaults to every pair with a nonzero
        entry in either direction.
    """
    Y = np.asarray(Y, dtype=float)
    m = Y.shape[0]
    mask = np.zeros((m, m), dtype=bool)
    if edges is None:
        mask = (Y != 0) | (Y.T != 0)
        np.fill_diagonal(mask, False)
    else:
        for i, j in edges:
            mask[i, j] = mask[j, i] = True
    if d < mask.sum(axis=1).max(initial=0):
        raise InvalidParameterError(f"d = {d} is below the maximum degree; diagonal would go negative")
    P = np.where(mask, Y, 0.0) / d
    np.fill_diagonal(P, 0.0)
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    return P


def build_transition(graph):
    return transition_from_stats(sufficient_stats(graph), graph.d, graph.edges)


def stationary_distribution(P, tol=1e-12, max_iter=10**6):
    """Stationary distribution by power iteration from the uniform vector.

    Stops once ``||pi P - pi||_1 <= tol``.

    Raises:
      ConvergenceError: ``max_iter`` iterations without reaching ``tol``;
        typical of reducible or periodic chains.
    """
    P = np.asarray(P, dtype=float)
    m = P.shape[0]
    pi = np.full(m, 1.0 / m)
    residual = math.inf
    for it in range(1, max_iter + 1):
        nxt = pi @ P
        nxt /= nxt.sum()
        residual = float(np.abs(nxt - pi).sum())
        pi = nxt
        if residual <= tol:
            return pi
    raise ConvergenceError(
        f"power iteration did not converge in {max_iter} iterations (residual {residual:.3g})",
        residual, max_iter,
    )


def ergodicity_coefficient(P):
    """``tau_1(P) = max_{i,j} ||P_i - P_j||_1 / 2``, the sup of ``||v^T P||_1``
    over ``||v||_1 = 1``, ``sum(v) = 0``."""
    P = np.asarray(P, dtype=float)
    best = 0.0
    for i in range(P.shape[0]):
        best = max(best, float(np.abs(P[i] - P[i + 1:]).sum(axis=1).max(initial=0.0)))
    return 0.5 * best


def stationary_sensitivity(d, L, rho):
    """Sup-norm sensitivity ``2 / (d L (1 - rho))`` of the stationary distribution."""
    if not 0 <= rho < 1:
        raise InvalidParameterError(f"rho must lie in [0, 1), got {rho}")
    if not d > 0 or L < 1:
        raise InvalidParameterError("need d > 0 and L >= 1")
    return 2.0 / (d * L * (1.0 - rho))


def perturbation_norm(graph, flip):
    """``||P - P~||_inf`` after flipping sample ``flip = (edge, l)``."""
    edge, sample = flip
    P = build_transition(graph)
    Q = build_transition(graph.flipped(edge, sample))
    return float(np.abs(P - Q).sum(axis=1).max())


@dataclass
class ErgodicityReport:
    tau1: float
    rho: float
    constrained: bool
    sensitivity: float | None


def check_constrained(graph, rho, P=None):
    """Ergodicity report for ``graph`` against the a-priori bound ``rho``."""
    if not 0 <= rho < 1:
        raise InvalidParameterError(f"rho must lie in [0, 1), got {rho}")
    if P is None:
        P = build_transition(graph)
    tau1 = ergodicity_coefficient(P)
    ok = tau1 <= rho and graph.is_connected()
    sens = stationary_sensitivity(graph.d, graph.L, rho) if ok else None
    return ErgodicityReport(tau1, rho, ok, sens)


@dataclass
class RankingDiagnostics:
    """Intermediate quantities of a private ranking run (not themselves private)."""

    pi: np.ndarray
    report: ErgodicityReport
    noise_scale: float
    selection: frozenset = field(default_factory=frozenset)


def private_top_k_rank(graph, k, epsilon, delta, rho, rng, diagnostics=False):
    """Privately select the k items with the largest stationary mass.

    The graph must be connected with ``tau_1(P) <= rho < 1``; otherwise the
    sensitivity bound behind the noise calibration does not hold and
    ``ConstraintError`` is raised instead of releasing anything.

    Returns:
      The selected index set, or a ``RankingDiagnostics`` when
      ``diagnostics`` is true.
    """
    if not graph.is_connected():
        raise ConstraintError("comparison graph is disconnected; stationary distribution is not unique")
    P = build_transition(graph)
    report = check_constrained(graph, rho, P)
    if not report.constrained:
        raise ConstraintError(f"ergodicity coefficient {report.tau1:.6g} exceeds rho = {rho:.6g}")
    pi = stationary_distribution(P)
    lam = calibrate_approx(PrivacyParams(epsilon, delta, k, graph.m, report.sensitivity))
    selection = oneshot_select_max(pi, k, lam, rng).indices
    if diagnostics:
        return RankingDiagnostics(pi, report, lam.value, selection)
    return selection


HEADER_KEYS = ("m", "L", "d")


def write_comparisons(graph, fh):
    """Writes ``m=<int> L=<int> d=<float>`` then one ``i j l outcome`` line per sample (1-based)."""
    fh.write(f"m={graph.m} L={graph.L} d={graph.d!r}\n")
    for i, j in graph.edges:
        y = graph.samples[(i, j)]
        prefix = f"{i + 1} {j + 1} "
        fh.write("".join(f"{prefix}{l + 1} {int(v)}\n" for l, v in enumerate(y)))


def read_comparisons(fh):
    """Parses the format written by ``write_comparisons``.

    Records given as ``j i`` with ``j > i`` are stored as ``1 - outcome`` on
    ``(i, j)``. Every edge that appears must have all ``L`` samples.
    """
    header = fh.readline().split()
    try:
        fields = dict(item.split("=", 1) for item in header)
        m, L, d = int(fields["m"]), int(fields["L"]), float(fields["d"])
    except (KeyError, ValueError) as exc:
        raise InvalidParameterError(f"bad header {' '.join(header)!r}") from exc
    samples = {}
    seen = {}
    for lineno, line in enumerate(fh, start=2):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 4:
            raise InvalidParameterError(f"line {lineno}: expected 'i j l outcome'")
        i, j, l, out = (int(p) for p in parts)
        if not (1 <= i <= m and 1 <= j <= m and i != j and 1 <= l <= L and out in (0, 1)):
            raise InvalidParameterError(f"line {lineno}: value out of range")
        if i > j:
            i, j, out = j, i, 1 - out
        key = (i - 1, j - 1)
        if key not in samples:
            samples[key] = np.zeros(L, dtype=np.uint8)
            seen[key] = np.zeros(L, dtype=bool)
        if seen[key][l - 1]:
            raise InvalidParameterError(f"line {lineno}: duplicate sample")
        samples[key][l - 1] = out
        seen[key][l - 1] = True
    for key, s in seen.items():
        if not s.all():
            raise InvalidParameterError(f"edge {(key[0] + 1, key[1] + 1)} is missing samples")
    return ComparisonGraph(m, samples, L, d)


def dumps_comparisons(graph):
    buf = io.StringIO()
    write_comparisons(graph, buf)
    return buf.getvalue()


def loads_comparisons(text):
    return read_comparisons(io.StringIO(text))
