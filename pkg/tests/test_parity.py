import itertools
import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from privlearn.gf2 import BitVector
from privlearn.learning import Database, LabelConvention, UniformCube, generate_database, parity, true_error
from privlearn.parity import (BOTTOM, AmplifiedConfig, InsufficientSamples, ParityConfig,
                              conditional_output, exact_output_distribution_A, learn_amplified,
                              learn_once, lemma_sample_size, required_sample_size_amplified)


def outcome_key(out):
    return BOTTOM if out.failed else BitVector.from_string(out.result.params["r"])


class TestConfig:
    def test_inclusion_prob(self):
        assert ParityConfig(0.5).inclusion_prob == 0.125

    @pytest.mark.parametrize("eps", [0.0, -0.1, 0.6])
    def test_epsilon_range(self, eps):
        with pytest.raises(ValueError):
            ParityConfig(eps)

    def test_amplified_values(self):
        cfg = AmplifiedConfig(8, 0.5, 0.2, 0.1)
        assert cfg.beta_prime == 0.05 and cfg.alpha_prime == pytest.approx(0.04)
        # smallest k with (3/4)^k <= 0.05
        assert cfg.k == 11 and 0.75 ** 11 <= 0.05 < 0.75 ** 10
        assert cfg.n_prime == math.ceil(20 * 8 / (0.5 * 0.04))
        assert cfg.s == math.ceil(48 * 11 / (0.04 * 0.5) * math.log(11 / 0.05))
        assert cfg.required_n() == 11 * cfg.n_prime + cfg.s + 1 == 230393
        assert required_sample_size_amplified(8, 0.5, 0.2, 0.1, 16, 48) == 212793

    def test_required_n_monotone(self):
        base = required_sample_size_amplified(8, 0.5, 0.2, 0.1)
        assert required_sample_size_amplified(9, 0.5, 0.2, 0.1) > base
        assert required_sample_size_amplified(8, 0.4, 0.2, 0.1) > base
        assert required_sample_size_amplified(8, 0.5, 0.1, 0.1) > base
        assert required_sample_size_amplified(8, 0.5, 0.2, 0.05) > base

    def test_k_near_the_top_of_the_beta_range(self):
        # beta' = 0.495 needs three halvings by 3/4
        assert AmplifiedConfig(4, 0.5, 0.2, 0.99).k == 3


class TestLearnOnce:
    def test_empty_database(self):
        z = Database.empty(3)
        dist = exact_output_distribution_A(z, ParityConfig(0.5))
        assert dist[BOTTOM] == 0.5
        assert all(v == pytest.approx(0.5 / 8) for k, v in dist.items() if k is not BOTTOM)

    def test_bottom_rate_on_empty_database(self):
        rng = np.random.default_rng(0)
        outs = [learn_once(Database.empty(3), ParityConfig(0.5), rng).failed for _ in range(20_000)]
        assert abs(np.mean(outs) - 0.5) < 0.015

    def test_contradiction_gives_bottom(self):
        z = Database([5, 5], [0, 1], 3)
        assert conditional_output(z, [0, 1]) == {BOTTOM: 1.0}

    def test_rejects_sign_labels(self):
        z = Database([1], [-1], 2, LabelConvention.SIGN)
        with pytest.raises(ValueError):
            learn_once(z, ParityConfig(0.5), np.random.default_rng(0))

    def test_output_consistent_with_subsample(self):
        rng = np.random.default_rng(1)
        r = BitVector.from_string("10110")
        z = generate_database(UniformCube(5), parity(r), 200, rng)
        for _ in range(200):
            out = learn_once(z, ParityConfig(0.5), rng)
            if not out.failed:
                # every example agrees with the true parity, so a consistent
                # hypothesis agrees with the target on the solved-for subspace
                assert out.diagnostics["subspace_size"] >= 1

    def test_exact_distribution_matches_montecarlo(self):
        rng = np.random.default_rng(2)
        z = Database([0b01, 0b11], [1, 0], 2)
        cfg = ParityConfig(0.5)
        exact = exact_output_distribution_A(z, cfg)
        assert sum(exact.values()) == pytest.approx(1.0, abs=1e-12)
        trials = 300_000
        counts = Counter(outcome_key(learn_once(z, cfg, rng)) for _ in range(trials))
        tv = 0.5 * sum(abs(counts.get(k, 0) / trials - p) for k, p in exact.items())
        assert tv <= 0.005

    def test_exact_bottom_at_least_half(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            d, n = int(rng.integers(1, 5)), int(rng.integers(0, 7))
            z = Database(rng.integers(0, 1 << d, n), rng.integers(0, 2, n), d)
            dist = exact_output_distribution_A(z, ParityConfig(0.25))
            assert dist[BOTTOM] >= 0.5
            assert sum(dist.values()) == pytest.approx(1.0, abs=1e-12)

    def test_enumeration_limits(self):
        with pytest.raises(ValueError):
            exact_output_distribution_A(Database(np.zeros(13), np.zeros(13), 2), ParityConfig(0.5))

    def test_conditional_mass_at_most_doubles(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            d, n = 3, 5
            z = Database(rng.integers(0, 8, n), rng.integers(0, 2, n), d)
            for size in range(n):
                for T in itertools.combinations(range(n), size):
                    before = conditional_output(z, T)
                    for i in set(range(n)) - set(T):
                        after = conditional_output(z, sorted(T + (i,)))
                        for h, mass in after.items():
                            if h is BOTTOM or mass == 0:
                                continue
                            assert mass <= 2 * before.get(h, 0) + 1e-15

    def test_lemma_utility(self):
        rng = np.random.default_rng(5)
        d, eps, alpha = 4, 0.5, 0.2
        n = lemma_sample_size(d, eps, alpha)
        cube = UniformCube(d)
        trials, good = 2000, 0
        for _ in range(trials):
            target = parity(BitVector.random(d, rng))
            out = learn_once(generate_database(cube, target, n, rng), ParityConfig(eps), rng)
            good += (not out.failed) and true_error(out.result, cube, target) <= alpha
        # one-sided: cannot reject success probability >= 1/4 at the 1% level
        assert stats.binomtest(good, trials, 0.25, alternative="less").pvalue > 0.01


class TestAmplified:
    def test_insufficient_samples(self):
        cfg = AmplifiedConfig(4, 0.5, 0.2, 0.1)
        z = Database(np.zeros(cfg.k * cfg.n_prime + cfg.s), np.zeros(cfg.k * cfg.n_prime + cfg.s), 4)
        with pytest.raises(InsufficientSamples):
            learn_amplified(z, cfg, np.random.default_rng(0))

    def test_dimension_mismatch(self):
        cfg = AmplifiedConfig(4, 0.5, 0.2, 0.1)
        with pytest.raises(ValueError):
            learn_amplified(Database.empty(3), cfg, np.random.default_rng(0))

    def test_bottom_only_when_every_candidate_fails(self):
        # x = 0 with label 1 contradicts itself, so only empty subsamples succeed
        cfg = AmplifiedConfig(2, 0.5, 0.5, 0.4, c=0.05, c_prime=0.05)
        n = cfg.required_n()
        z = Database(np.zeros(n), np.ones(n), 2)
        rng = np.random.default_rng(1)
        seen = set()
        for _ in range(300):
            out = learn_amplified(z, cfg, rng)
            seen.add(out.failed)
            assert out.failed == (out.diagnostics["bottoms"] == cfg.k)
            if not out.failed:
                assert np.isfinite(out.diagnostics["perturbed_errors"][out.diagnostics["selected"]])
        assert seen == {True, False}

    def test_utility_small_instance(self):
        rng = np.random.default_rng(6)
        cfg = AmplifiedConfig(6, 0.5, 0.2, 0.1)
        cube = UniformCube(6)
        ok = 0
        for _ in range(40):
            target = parity(BitVector.random(6, rng))
            out = learn_amplified(generate_database(cube, target, cfg.required_n(), rng), cfg, rng)
            ok += (not out.failed) and true_error(out.result, cube, target) <= cfg.alpha
        assert ok >= 36
