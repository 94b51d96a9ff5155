import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from privlearn.dp import (BudgetExceeded, BudgetLedger, bound_chernoff_mult, bound_hoeffding,
                          bound_laplace_sum, compose, empirical_privacy_ratio, laplace_cdf,
                          laplace_interval_probs, laplace_mechanism, laplace_sample, max_ratio)


@pytest.fixture
def rng():
    return np.random.default_rng(20)


class TestLaplace:
    def test_mean_and_std(self, rng):
        x = laplace_sample(1.0, rng, size=1_000_000)
        assert abs(x.mean()) <= 0.01
        assert abs(x.std() - math.sqrt(2)) <= 0.02 * math.sqrt(2)

    def test_symmetric_median(self, rng):
        x = laplace_sample(2.0, rng, size=100_000)
        assert abs(np.mean(x >= 0) - 0.5) <= 0.01

    def test_matches_reference_distribution(self, rng):
        x = laplace_sample(1.5, rng, size=50_000)
        assert stats.kstest(x, stats.laplace(scale=1.5).cdf).pvalue > 0.01

    def test_cdf_matches_reference(self):
        pts = np.linspace(-6, 6, 25)
        assert np.allclose(laplace_cdf(pts, 0.7), stats.laplace(scale=0.7).cdf(pts), atol=1e-14)

    def test_scalar_and_bad_scale(self, rng):
        assert isinstance(laplace_sample(1.0, rng), float)
        for bad in (0.0, -1.0):
            with pytest.raises(ValueError):
                laplace_sample(bad, rng)

    def test_interval_probs_sum_to_one(self):
        p = laplace_interval_probs(0.3, 1.0, [-1, 0, 1, 2])
        assert p.sum() == pytest.approx(1.0, abs=1e-15)
        assert np.all(p > 0)


class TestMechanism:
    def test_zero_sensitivity_is_exact(self, rng):
        assert laplace_mechanism(3.25, 0.0, 0.5, rng) == 3.25

    def test_noise_scale(self, rng):
        # a fraction over s entries has sensitivity 1/s, so the scale is 1/(s eps)
        s, eps = 40, 0.5
        draws = np.array([laplace_mechanism(0.0, 1 / s, eps, rng) for _ in range(40_000)])
        assert draws.std() == pytest.approx(math.sqrt(2) / (s * eps), rel=0.03)

    def test_errors(self, rng):
        with pytest.raises(ValueError):
            laplace_mechanism(0.0, 1.0, 0.0, rng)
        with pytest.raises(ValueError):
            laplace_mechanism(0.0, -1.0, 1.0, rng)

    @pytest.mark.parametrize("eps", [0.1, 0.5, 1.0, 2.0])
    def test_discretised_ratio_within_bound(self, eps):
        # neighbouring values differ by the sensitivity; interval masses obey e^eps
        edges = np.linspace(-5, 5, 41)
        mech = lambda v: dict(enumerate(laplace_interval_probs(v, 1.0 / eps, edges)))
        res = empirical_privacy_ratio(mech, 0.0, 1.0, mode="exact")
        assert res.ratio <= math.exp(eps) * (1 + 1e-9)
        assert res.ratio >= math.exp(eps) * 0.99  # tails make it essentially tight


class TestComposition:
    def test_examples(self):
        assert compose([0.1, 0.2, 0.3]) == pytest.approx(0.6)
        assert compose([]) == 0
        assert compose([0.25] * 8) == pytest.approx(2.0)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            compose([0.1, 0.0])

    @given(st.lists(st.floats(1e-3, 10), min_size=1, max_size=10), st.randoms())
    def test_order_free(self, eps, r):
        shuffled = list(eps)
        r.shuffle(shuffled)
        assert compose(shuffled) == pytest.approx(compose(eps))
        assert compose([compose(eps[:1]), *eps[1:]]) == pytest.approx(compose(eps))
        assert compose(eps[:1]) == eps[0]


class TestLedger:
    def test_cap(self):
        led = BudgetLedger(3, 1.0)
        led.charge([0], 0.5)
        led.charge([0], 0.5)
        with pytest.raises(BudgetExceeded):
            led.charge([0], 0.5)
        assert led.remaining(0) == pytest.approx(0.0)
        assert led.remaining(1) == 1.0

    def test_all_or_nothing_and_duplicates(self):
        led = BudgetLedger(4, 1.0)
        with pytest.raises(BudgetExceeded):
            led.charge([1, 2, 2, 2], 0.4)
        assert np.all(led.spent == 0)
        led.charge([1, 2, 2], 0.4)
        assert led.spent.tolist() == pytest.approx([0, 0.4, 0.8, 0])

    def test_bad_input(self):
        led = BudgetLedger(2, 1.0)
        with pytest.raises(IndexError):
            led.charge([2], 0.1)
        with pytest.raises(ValueError):
            led.charge([0], 0.0)
        with pytest.raises(ValueError):
            BudgetLedger(2, 0.0)


def randomized_response_dist(eps):
    flip = 1 / (1 + math.exp(eps))
    return lambda bit: {bit: 1 - flip, 1 - bit: flip}


class TestPrivacyRatio:
    @pytest.mark.parametrize("eps", [0.1, 0.5, 1.0])
    def test_randomized_response_is_tight(self, eps):
        res = empirical_privacy_ratio(randomized_response_dist(eps), 0, 1)
        assert res.ratio == pytest.approx(math.exp(eps), rel=1e-12)
        assert res.epsilon == pytest.approx(eps)

    def test_warner_two_thirds(self):
        res = empirical_privacy_ratio(lambda b: {b: 2 / 3, 1 - b: 1 / 3}, 0, 1)
        assert res.ratio == pytest.approx(2.0)
        assert res.epsilon == pytest.approx(math.log(2))

    def test_constant_mechanism(self):
        assert empirical_privacy_ratio(lambda z: {"w": 1.0}, 0, 1).ratio == 1.0

    def test_outcome_spaces_must_match(self):
        with pytest.raises(ValueError):
            max_ratio({"a": 1.0}, {"b": 1.0})

    def test_zero_against_positive_is_infinite(self):
        assert max_ratio({"a": 1.0, "b": 0.0}, {"a": 0.5, "b": 0.5})[0] == math.inf

    def test_montecarlo_close_to_exact(self, rng):
        eps = 0.5
        flip = 1 / (1 + math.exp(eps))
        mech = lambda b, g: int(b) ^ int(g.random() < flip)
        res = empirical_privacy_ratio(mech, 0, 1, "montecarlo", outcomes=[0, 1], trials=20_000, rng=rng)
        assert not res.inconclusive
        assert res.ratio == pytest.approx(math.exp(eps), rel=0.05)
        assert "20000" in res.note

    def test_montecarlo_flags_rare_outcomes(self, rng):
        mech = lambda b, g: "rare" if g.random() < 1e-4 else "common"
        res = empirical_privacy_ratio(mech, 0, 1, "montecarlo", outcomes=["rare", "common"], trials=2000, rng=rng)
        assert res.inconclusive

    def test_montecarlo_rejects_unknown_outcome(self, rng):
        with pytest.raises(ValueError):
            empirical_privacy_ratio(lambda b, g: 7, 0, 1, "montecarlo", outcomes=[0, 1], trials=5, rng=rng)


class TestBounds:
    def test_chernoff_examples(self):
        up, lo = bound_chernoff_mult(300, 0.5, 0.2)
        assert up == pytest.approx(math.exp(-2))
        assert lo == pytest.approx(math.exp(-3))
        assert bound_chernoff_mult(0, 0.5, 0.5) == (1.0, 1.0)
        assert lo <= up

    def test_hoeffding_examples(self):
        assert bound_hoeffding(800, 0.1, -1, 1) == pytest.approx(2 * math.exp(-4))
        assert bound_hoeffding(0, 0.1, 0, 1) == 1.0
        assert bound_hoeffding(10**7, 0.1, 0, 1) == pytest.approx(0.0, abs=1e-300)

    def test_laplace_sum_examples(self):
        assert bound_laplace_sum(400, 0.5, 1.0) == pytest.approx(math.exp(-25))
        assert bound_laplace_sum(10, 0.0, 1.0) == 1.0

    def test_parameter_errors(self):
        with pytest.raises(ValueError):
            bound_chernoff_mult(10, 0.5, 0.0)
        with pytest.raises(ValueError):
            bound_chernoff_mult(10, 1.0, 0.5)
        with pytest.raises(ValueError):
            bound_hoeffding(10, 0.1, 1, 1)
        with pytest.raises(ValueError):
            bound_laplace_sum(10, 0.1, 0.0)

    @given(st.integers(1, 10_000), st.floats(0.01, 0.99), st.floats(0.01, 1.0))
    def test_monotone(self, n, mu, phi):
        u1, l1 = bound_chernoff_mult(n, mu, phi)
        u2, l2 = bound_chernoff_mult(n + 1, mu, phi)
        assert u2 <= u1 and l2 <= l1
        u3, l3 = bound_chernoff_mult(n, mu, min(1.0, phi * 1.1))
        assert u3 <= u1 and l3 <= l1
        assert bound_hoeffding(n + 1, phi, 0, 1) <= bound_hoeffding(n, phi, 0, 1)
        assert bound_hoeffding(n, phi * 1.1, 0, 1) <= bound_hoeffding(n, phi, 0, 1)
        assert bound_laplace_sum(n + 1, phi, 2.0) <= bound_laplace_sum(n, phi, 2.0)
        assert bound_laplace_sum(n, phi * 1.1, 2.0) <= bound_laplace_sum(n, phi, 2.0)

    @pytest.mark.parametrize("n, delta, lam", [(100, 0.3, 1.0), (400, 0.2, 1.0)])
    def test_laplace_tail_montecarlo(self, rng, n, delta, lam):
        reps = 100_000
        means = laplace_sample(lam, rng, size=(reps, n)).mean(axis=1)
        assert np.mean(np.abs(means) >= delta) <= bound_laplace_sum(n, delta, lam)

    def test_chernoff_against_exact_binomial(self):
        for n, mu, phi in [(100, 0.3, 0.5), (300, 0.5, 0.2), (50, 0.1, 1.0)]:
            up, lo = bound_chernoff_mult(n, mu, phi)
            exact_up = stats.binom.sf(math.ceil((1 + phi) * mu * n) - 1, n, mu)
            exact_lo = stats.binom.cdf(math.floor((1 - phi) * mu * n), n, mu)
            assert exact_up <= up and exact_lo <= lo

    def test_hoeffding_montecarlo(self, rng):
        for n, delta in [(30, 0.2), (200, 0.08)]:
            means = rng.uniform(0, 1, size=(50_000, n)).mean(axis=1)
            assert np.mean(np.abs(means - 0.5) >= delta) <= bound_hoeffding(n, delta, 0, 1)
