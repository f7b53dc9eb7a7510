import itertools
import math

import numpy as np
import pytest

from oneshot_topk.audit import (
    AdjacentPair,
    adjacent_corners,
    audit_worst_case,
    clopper_pearson,
    enumerate_ksubsets,
    epsilon_for_delta,
    epsilon_hat_exact,
    epsilon_hat_monte_carlo,
    hockey_stick,
)
from oneshot_topk.errors import InvalidParameterError, ResourceError
from oneshot_topk.mechanisms import PrivacyParams, calibrate_approx, calibrate_pure
from oneshot_topk.noise import RngState


def union_violation(p, p2, eps):
    """max over every union of outcomes S of P(S) - e^eps P'(S), by enumeration."""
    best = 0.0
    for r in range(1, len(p) + 1):
        for S in itertools.combinations(range(len(p)), r):
            idx = list(S)
            best = max(best, p[idx].sum() - math.exp(eps) * p2[idx].sum())
    return best


class TestEnumerate:
    def test_m3_k2(self):
        assert enumerate_ksubsets(3, 2) == [(0, 1), (0, 2), (1, 2)]

    def test_k0(self):
        assert enumerate_ksubsets(4, 0) == [()]

    def test_counts(self):
        for m in range(13):
            for k in range(m + 1):
                expected = math.factorial(m) // (math.factorial(k) * math.factorial(m - k))
                assert len(enumerate_ksubsets(m, k)) == expected

    def test_budget(self):
        with pytest.raises(ResourceError):
            enumerate_ksubsets(40, 20)


class TestHockeyStick:
    def test_equals_worst_union(self):
        gen = RngState(60).generator
        for _ in range(30):
            p = gen.dirichlet(np.ones(6))
            p2 = gen.dirichlet(np.ones(6))
            eps = gen.uniform(0, 1)
            assert hockey_stick(p, p2, eps) == pytest.approx(union_violation(p, p2, eps), abs=1e-14)

    def test_bisection_finds_threshold(self):
        p = np.array([0.5, 0.3, 0.2])
        p2 = np.array([0.4, 0.35, 0.25])
        eps = epsilon_for_delta(p, p2, 0.0)
        # With delta = 0 the answer is the largest absolute log ratio.
        assert eps == pytest.approx(np.max(np.abs(np.log(p / p2))), abs=1e-4)
        assert eps >= np.max(np.abs(np.log(p / p2)))

    def test_unreachable_gives_inf(self):
        assert epsilon_for_delta(np.array([1.0, 0.0]), np.array([0.0, 1.0]), 0.0) == math.inf


class TestAdjacentPair:
    def test_rejects_far_vectors(self):
        with pytest.raises(InvalidParameterError):
            AdjacentPair([0, 0], [0, 1.5])

    def test_rejects_length_mismatch(self):
        with pytest.raises(InvalidParameterError):
            AdjacentPair([0, 0], [0, 0, 0])

    def test_sensitivity_scales(self):
        AdjacentPair([0, 0], [0, 1.5], sensitivity=2.0)


class TestCorners:
    def test_m2(self):
        corners = {tuple(c) for c in adjacent_corners([0.0, 0.0], 1.0)}
        assert corners == {(-1, -1), (-1, 1), (1, -1), (1, 1)}

    def test_m3_count_and_distance(self):
        x = np.array([0.5, 2.0, -1.0])
        corners = adjacent_corners(x, 0.7)
        assert len(corners) == 8
        for c in corners:
            assert np.max(np.abs(c - x)) == pytest.approx(0.7)

    def test_structured_when_over_limit(self):
        x = np.arange(6.0)
        corners = adjacent_corners(x, 1.0, limit=8)
        assert len(corners) == 2
        np.testing.assert_array_equal(corners[0], x + np.array([-1, -1, -1, 1, 1, 1]))
        np.testing.assert_array_equal(corners[1], x - np.array([-1, -1, -1, 1, 1, 1]))


class TestExactAudit:
    def test_identical_inputs(self):
        rep = epsilon_hat_exact(AdjacentPair([0, 1, 2], [0, 1, 2]), 1, 2.0, 0.0)
        assert rep.epsilon_hat == 0.0

    def test_pure_calibration_m4_k2(self):
        lam = calibrate_pure(2, 1, 0.5)
        assert lam.value == 8.0
        rep = audit_worst_case([0, 0, 0, 0], 2, lam, 0.0, target_epsilon=0.5)
        assert rep.epsilon_hat <= 0.5 + 1e-3
        assert rep.pairs_checked == 16
        assert len(rep.worst_set) == 2

    def test_approx_calibration_m4_k2(self):
        lam = calibrate_approx(PrivacyParams(0.2, 0.05, 2, 4))
        rep = audit_worst_case([0, 1, 1, 2], 2, lam, 0.05, target_epsilon=0.2)
        assert rep.epsilon_hat <= 0.2

    def test_symmetric_in_direction(self):
        pair = AdjacentPair([0, 1, 2, 0], [1, 0, 1, 1])
        a = epsilon_hat_exact(pair, 2, 3.0, 0.01)
        b = epsilon_hat_exact(pair.swapped(), 2, 3.0, 0.01)
        assert a.epsilon_hat == b.epsilon_hat

    def test_slack_recorded(self):
        rep = audit_worst_case([0, 0, 0], 1, calibrate_pure(1, 1, 0.2), 0.0, target_epsilon=0.2)
        assert rep.slack == pytest.approx(rep.epsilon_hat / 0.2)
        assert 0 < rep.slack <= 1.005

    def test_worst_case_independent_of_jobs(self):
        a = audit_worst_case([0, 1, 0], 1, 5.0, 0.0, jobs=1)
        b = audit_worst_case([0, 1, 0], 1, 5.0, 0.0, jobs=2)
        assert a.epsilon_hat == b.epsilon_hat
        np.testing.assert_array_equal(a.worst_pair.x2, b.worst_pair.x2)

    def test_report_serialises(self):
        rep = epsilon_hat_exact(AdjacentPair([0, 1], [1, 0]), 1, 2.0, 0.0, target_epsilon=1.0)
        d = rep.to_dict()
        assert d["method"] == "exact-quadrature"
        assert d["worst_pair"]["x2"] == [1.0, 0.0]


class TestMonteCarloAudit:
    def test_identical_inputs_interval_contains_zero(self):
        pair = AdjacentPair([0, 0.5, 1, 2], [0, 0.5, 1, 2])
        rep = epsilon_hat_monte_carlo(pair, 2, 2.0, 0.0, 10**5, RngState(70))
        assert rep.interval[0] == 0.0 <= rep.interval[1]

    @pytest.mark.parametrize("x,x2", [([0, 0, 0, 0], [-1, -1, 1, 1]), ([0, 1, 2, 3], [1, 0, 3, 2])])
    def test_agrees_with_exact(self, x, x2):
        pair = AdjacentPair(x, x2)
        lam = calibrate_pure(2, 1, 0.5)
        exact = epsilon_hat_exact(pair, 2, lam, 0.0).epsilon_hat
        mc = epsilon_hat_monte_carlo(pair, 2, lam, 0.0, 2 * 10**5, RngState(71))
        assert mc.interval[0] - 1e-4 <= exact <= mc.interval[1] + 1e-4

    def test_width_shrinks_like_inverse_sqrt(self):
        pair = AdjacentPair([0, 0, 0, 0], [-1, -1, 1, 1])
        widths = []
        for n in (10**4, 4 * 10**4, 16 * 10**4):
            rep = epsilon_hat_monte_carlo(pair, 2, 8.0, 0.0, n, RngState(72))
            widths.append(rep.interval[1] - rep.interval[0])
        for a, b in zip(widths, widths[1:]):
            assert 0.3 < b / a < 0.7

    def test_needs_enough_trials(self):
        with pytest.raises(InvalidParameterError):
            epsilon_hat_monte_carlo(AdjacentPair([0, 0], [0, 0]), 1, 1.0, 0.0, 100, RngState(0))


def test_clopper_pearson_edges():
    lo, hi = clopper_pearson([0, 10], 10, 0.05)
    assert lo[0] == 0.0 and hi[1] == 1.0
    assert hi[0] == pytest.approx(1 - 0.025 ** (1 / 10))
