import math

import numpy as np
import pytest

from robust_renyi import pseudodistance
from robust_renyi.core import Sample
from robust_renyi.core._errors import DomainError, NonFiniteCriterion, UnsupportedAlpha
from robust_renyi.models import ExponentialScale, NormalLocation, NormalScale
from robust_renyi.pseudodistance import (
    BoundDensity,
    Branch,
    c_alpha,
    check_alpha,
    criterion,
    criterion_ratio,
    h_kernel,
    population_criterion,
    power_divergence,
    renyi_pseudodistance,
    renyi_pseudodistance_holder,
    renyi_terms,
)

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def normal(m: float, sigma: float) -> BoundDensity:
    return BoundDensity(NormalScale(m), np.array([sigma]))


PAIRS = [
    (normal(0.0, 1.0), normal(0.5, 1.0)),
    (normal(0.0, 1.0), normal(0.0, 2.0)),
    (normal(-1.0, 0.7), normal(0.3, 1.4)),
    (normal(0.2, 1.5), normal(0.2, 0.6)),
]


class TestAlpha:
    def test_negative(self):
        with pytest.raises(DomainError):
            check_alpha(-0.1)

    def test_above_beta_max(self):
        with pytest.raises(UnsupportedAlpha):
            check_alpha(2.5)

    def test_not_finite(self):
        with pytest.raises(DomainError):
            check_alpha(math.nan)


class TestPseudodistance:
    def test_identical_densities(self):
        assert renyi_pseudodistance(normal(0.0, 1.0), normal(0.0, 1.0), 0.5) == pytest.approx(
            0.0, abs=1e-10
        )

    def test_kullback_leibler_limit(self):
        p = BoundDensity(NormalLocation(1.0), np.array([1.0]))
        q = BoundDensity(NormalLocation(1.0), np.array([0.0]))
        assert renyi_pseudodistance(p, q, 0.0) == pytest.approx(0.5, abs=1e-10)

    def test_different_scales(self):
        assert renyi_pseudodistance(normal(0.0, 1.0), normal(0.0, 2.0), 0.5) > 1e-3

    @pytest.mark.parametrize("alpha", [0.1, 0.5, 1.0])
    def test_positive_on_random_pairs(self, alpha):
        rng = np.random.default_rng(99)
        for _ in range(200):
            m1, m2 = rng.uniform(-1.0, 1.0, 2)
            s1, s2 = rng.uniform(0.5, 2.0, 2)
            value = renyi_pseudodistance(normal(m1, s1), normal(m2, s2), alpha, cross_check=False)
            assert value > 0.0

    @pytest.mark.parametrize("alpha", [0.1, 0.5, 1.0])
    def test_identical_pairs_vanish(self, alpha):
        rng = np.random.default_rng(7)
        for _ in range(20):
            m, s = rng.uniform(-1.0, 1.0), rng.uniform(0.5, 2.0)
            value = renyi_pseudodistance(normal(m, s), normal(m, s), alpha, cross_check=False)
            assert abs(value) < 1e-8

    @pytest.mark.parametrize(("p", "q"), PAIRS)
    @pytest.mark.parametrize("alpha", [0.1, 0.5, 1.0])
    def test_decomposition_identity(self, p, q, alpha):
        r0, r1, cross = renyi_terms(p, q, alpha)
        value = renyi_pseudodistance(p, q, alpha, cross_check=False)
        assert value == pytest.approx(r0 + r1 + cross, abs=1e-10)

    @pytest.mark.parametrize(("p", "q"), PAIRS)
    @pytest.mark.parametrize("alpha", [0.1, 0.5, 1.0])
    def test_holder_form_agrees(self, p, q, alpha):
        decomposed = renyi_pseudodistance(p, q, alpha, cross_check=False)
        assert renyi_pseudodistance_holder(p, q, alpha) == pytest.approx(decomposed, abs=1e-8)

    def test_alpha_to_zero(self):
        p, q = normal(0.3, 1.0), normal(0.0, 1.2)
        kl = renyi_pseudodistance(p, q, 0.0)
        assert renyi_pseudodistance(p, q, 1e-4, cross_check=False) == pytest.approx(kl, abs=1e-3)

    def test_exponential_pair(self):
        model = ExponentialScale()
        p = BoundDensity(model, np.array([1.0]))
        q = BoundDensity(model, np.array([2.0]))
        decomposed = renyi_pseudodistance(p, q, 0.5, cross_check=False)
        assert decomposed > 0.0
        assert renyi_pseudodistance_holder(p, q, 0.5) == pytest.approx(decomposed, abs=1e-8)

    def test_supports_must_match(self):
        p = BoundDensity(ExponentialScale(), np.array([1.0]))
        with pytest.raises(DomainError):
            renyi_pseudodistance(p, normal(0.0, 1.0), 0.5)

    def test_power_divergence(self):
        assert power_divergence(normal(0.0, 1.0), normal(0.0, 1.0), 0.5) == pytest.approx(
            0.0, abs=1e-12
        )
        assert power_divergence(normal(0.0, 1.0), normal(1.0, 1.0), 0.5) > 0.0


def gaussian_renyi(mp: float, sp: float, mq: float, sq: float, a: float) -> float:
    """R_a(N(mp, sp), N(mq, sq)) in closed form."""

    def log_power(s: float) -> float:
        return -(a / 2) * math.log(2 * math.pi * s * s) - 0.5 * math.log(1 + a)

    spread = sp * sp / a + sq * sq
    log_cross = (
        -(a / 2) * math.log(2 * math.pi * sp * sp)
        + 0.5 * math.log(sp * sp / a / spread)
        - (mp - mq) ** 2 / (2 * spread)
    )
    return log_power(sp) / (1 + a) + log_power(sq) / (a * (1 + a)) - log_cross / a


def exponential_renyi(tp: float, tq: float, a: float) -> float:
    def log_power(t: float) -> float:
        return -a * math.log(t) - math.log(1 + a)

    log_cross = -a * math.log(tp) - math.log(tq) - math.log(a / tp + 1 / tq)
    return log_power(tp) / (1 + a) + log_power(tq) / (a * (1 + a)) - log_cross / a


SEPARATED = [
    pytest.param(0.0, 0.05, 0.0, 3.0, 1.0, id="narrow-inside-wide"),
    pytest.param(0.0, 1.0, 8.0, 1.0, 0.5, id="far-apart"),
    pytest.param(0.0, 0.1, 5.0, 2.0, 0.25, id="narrow-in-tail"),
    pytest.param(2.0, 20.0, 0.0, 0.5, 0.5, id="wide-over-narrow"),
    pytest.param(-30.0, 0.5, 30.0, 0.5, 0.1, id="disjoint"),
]


class TestSeparatedPairs:
    def test_closed_form_matches_identical_pair(self):
        assert gaussian_renyi(0.3, 1.2, 0.3, 1.2, 0.5) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize(("mp", "sp", "mq", "sq", "alpha"), SEPARATED)
    def test_decomposition(self, mp, sp, mq, sq, alpha):
        expected = gaussian_renyi(mp, sp, mq, sq, alpha)
        value = renyi_pseudodistance(normal(mp, sp), normal(mq, sq), alpha, cross_check=False)
        assert value == pytest.approx(expected, rel=1e-7, abs=1e-7)

    @pytest.mark.parametrize(("mp", "sp", "mq", "sq", "alpha"), SEPARATED)
    def test_holder_form(self, mp, sp, mq, sq, alpha):
        expected = gaussian_renyi(mp, sp, mq, sq, alpha)
        value = renyi_pseudodistance_holder(normal(mp, sp), normal(mq, sq), alpha)
        assert value == pytest.approx(expected, rel=1e-7, abs=1e-7)

    def test_forced_window_matches_node_rule_on_resolved_pair(self):
        p, q = normal(0.0, 1.0), normal(0.5, 1.0)
        nodes = renyi_terms(p, q, 0.5, union_window=False)
        window = renyi_terms(p, q, 0.5, union_window=True)
        assert window == pytest.approx(nodes, abs=1e-9)

    def test_narrow_pair_skips_the_node_rule(self):
        p, q = normal(0.0, 0.05), normal(0.0, 3.0)
        expected = gaussian_renyi(0.0, 0.05, 0.0, 3.0, 1.0)
        assert renyi_pseudodistance(p, q, 1.0) == pytest.approx(expected, rel=1e-7)

    def test_cross_check_recovers_from_missed_nodes(self, monkeypatch):
        monkeypatch.setattr(pseudodistance, "_nodes_resolve", lambda p, q, quad: True)
        p, q = normal(0.0, 0.05), normal(0.0, 3.0)
        expected = gaussian_renyi(0.0, 0.05, 0.0, 3.0, 1.0)
        assert abs(renyi_pseudodistance(p, q, 1.0, cross_check=False) - expected) > 10.0
        assert renyi_pseudodistance(p, q, 1.0) == pytest.approx(expected, rel=1e-7)

    def test_exponential(self):
        model = ExponentialScale()
        p = BoundDensity(model, np.array([0.01]))
        q = BoundDensity(model, np.array([20.0]))
        expected = exponential_renyi(0.01, 20.0, 0.5)
        assert renyi_pseudodistance(p, q, 0.5) == pytest.approx(expected, rel=1e-7)

    def test_power_divergence_narrow_pair(self):
        a, sp, sq = 0.5, 0.05, 3.0
        spread = sp * sp / a + sq * sq
        cross = (2 * math.pi * sp * sp) ** (-a / 2) * math.sqrt(sp * sp / a / spread)
        expected = (
            (2 * math.pi * sp * sp) ** (-a / 2) / math.sqrt(1 + a)
            - (1 + 1 / a) * cross
            + (2 * math.pi * sq * sq) ** (-a / 2) / math.sqrt(1 + a) / a
        )
        value = power_divergence(normal(0.0, sp), normal(0.0, sq), a)
        assert value == pytest.approx(expected, rel=1e-7)

    @pytest.mark.parametrize("alpha", [0.1, 0.5, 1.0])
    def test_nonnegative_over_wide_ranges(self, alpha):
        rng = np.random.default_rng(2024)
        for _ in range(40):
            m1, m2 = rng.uniform(-10.0, 10.0, 2)
            s1, s2 = np.exp(rng.uniform(math.log(0.05), math.log(5.0), 2))
            value = renyi_pseudodistance(normal(m1, s1), normal(m2, s2), alpha, cross_check=False)
            assert value == pytest.approx(gaussian_renyi(m1, s1, m2, s2, alpha), rel=1e-6, abs=1e-7)
            assert value > -1e-9


class TestNormalizer:
    def test_normal_scale(self, normal_scale):
        assert c_alpha(normal_scale, [1.0], 1.0) == pytest.approx(
            (2 * math.pi) ** -0.25 * 2**-0.25, rel=1e-12
        )
        assert c_alpha(normal_scale, [1.0], 1.0) == pytest.approx(0.53112, abs=1e-5)

    def test_exponential(self, exponential):
        assert c_alpha(exponential, [1.0], 1.0) == pytest.approx(math.sqrt(0.5), rel=1e-12)

    def test_small_alpha(self, normal_scale):
        assert c_alpha(normal_scale, [2.0], 1e-8) == pytest.approx(1.0, abs=1e-6)

    def test_zero_alpha(self, normal_scale):
        with pytest.raises(DomainError):
            c_alpha(normal_scale, [1.0], 0.0)

    def test_kernel(self, normal_scale):
        expected = 1.0 / math.sqrt(2 * math.pi) / c_alpha(normal_scale, [1.0], 1.0)
        assert h_kernel(normal_scale, [1.0], 1.0, 0.0) == pytest.approx(expected, rel=1e-12)
        assert h_kernel(normal_scale, [1.0], 1.0, 0.0) == pytest.approx(0.75112, abs=1e-5)

    def test_kernel_outside_support(self, exponential):
        assert h_kernel(exponential, [1.0], 0.5, -1.0) == 0.0

    @pytest.mark.parametrize("alpha", [0.1, 0.5, 1.0])
    def test_population_criterion_peaks_at_truth(self, normal_scale, alpha):
        truth = population_criterion(normal_scale, [1.0], [1.0], alpha)
        for sigma in np.linspace(0.5, 2.0, 16):
            assert population_criterion(normal_scale, [sigma], [1.0], alpha) <= truth + 1e-14


class TestCriterion:
    def test_log_likelihood_branch(self, normal_location):
        value = criterion(normal_location, [0.0], Sample(np.array([0.0])), 0.0)
        assert value.branch is Branch.LOG_LIKELIHOOD
        assert value.value == pytest.approx(-LOG_SQRT_2PI, rel=1e-12)
        assert value.value == pytest.approx(-0.91894, abs=1e-5)

    def test_ratio_form(self, normal_scale):
        data = Sample(np.array([1.0, -1.0]))
        value = criterion(normal_scale, [1.0], data, 0.5)
        assert value.branch is Branch.ALPHA_POSITIVE
        ratio = criterion_ratio(normal_scale, [1.0], data, 0.5)
        assert value.value == pytest.approx(math.log(ratio) / 0.5, abs=1e-8)

    def test_ratio_by_hand(self, normal_scale):
        data = Sample(np.array([1.0, -1.0]))
        p = math.exp(-0.5) / math.sqrt(2 * math.pi)
        expected = p**0.5 / c_alpha(normal_scale, [1.0], 0.5)
        assert criterion_ratio(normal_scale, [1.0], data, 0.5) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("alpha", [1e-2, 1e-3, 1e-4, 1e-5])
    def test_continuity_at_zero(self, normal_scale, seeded_normal_sample, alpha):
        worst = max(
            abs(
                criterion(normal_scale, [s], seeded_normal_sample, alpha).value
                - criterion(normal_scale, [s], seeded_normal_sample, 0.0).value
            )
            for s in np.linspace(0.8, 2.0, 13)
        )
        assert worst < 20 * alpha

    def test_same_argmax_as_ratio(self, normal_scale, seeded_normal_sample):
        grid = np.linspace(0.5, 2.0, 301)
        logs = [criterion(normal_scale, [s], seeded_normal_sample, 0.5).value for s in grid]
        ratios = [criterion_ratio(normal_scale, [s], seeded_normal_sample, 0.5) for s in grid]
        assert int(np.argmax(logs)) == int(np.argmax(ratios))

    def test_zero_density_under_log_likelihood(self, exponential):
        with pytest.raises(NonFiniteCriterion):
            criterion(exponential, [1.0], Sample(np.array([1.0, -1.0])), 0.0)

    def test_zero_density_points_are_dropped(self, exponential):
        with_outside = criterion(exponential, [1.0], Sample(np.array([1.0, -1.0])), 0.5).value
        inside = criterion(exponential, [1.0], Sample(np.array([1.0])), 0.5).value
        assert with_outside == pytest.approx(inside + math.log(0.5) / 0.5, rel=1e-12)

    def test_all_points_outside(self, exponential):
        with pytest.raises(NonFiniteCriterion):
            criterion(exponential, [1.0], Sample(np.array([-1.0, -2.0])), 0.5)
