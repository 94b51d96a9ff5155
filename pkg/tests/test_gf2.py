import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from privlearn.gf2 import (BitVector, LinearSystem, contains, full_space, gaussian_eliminate,
                           inner_product, parity_of_words, rank, sample_uniform, solve_packed,
                           subspace_size)

bv = BitVector.from_string


def brute_solutions(d, coeffs, rhs):
    return {v for v in range(1 << d)
            if all(((c & v).bit_count() & 1) == y for c, y in zip(coeffs, rhs))}


def chi_square_p(counts, expected):
    return stats.chisquare(counts, [expected] * len(counts)).pvalue


class TestBitVector:
    def test_string_roundtrip(self):
        assert str(bv("1011")) == "1011"
        assert bv("10").bits == 1

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            BitVector(4, 2)
        with pytest.raises(ValueError):
            bv("102")
        with pytest.raises(ValueError):
            BitVector(0, 0)

    def test_xor_preserves_length(self):
        assert bv("1100") ^ bv("1010") == bv("0110")
        with pytest.raises(ValueError):
            bv("11") ^ bv("110")


class TestInnerProduct:
    @pytest.mark.parametrize("x, r, want", [("0000", "1011", 0), ("1011", "1011", 1), ("1100", "1010", 1)])
    def test_examples(self, x, r, want):
        assert inner_product(bv(x), bv(r)) == want

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            inner_product(bv("10"), bv("101"))

    @given(st.integers(1, 40).flatmap(lambda d: st.tuples(st.just(d), st.integers(0, 2**d - 1),
                                                          st.integers(0, 2**d - 1))))
    def test_matches_coordinate_sum(self, args):
        d, x, r = args
        X, R = BitVector(x, d), BitVector(r, d)
        assert inner_product(X, R) == sum(a * b for a, b in zip(X.to_list(), R.to_list())) % 2

    def test_vectorised_matches_scalar(self):
        rng = np.random.default_rng(0)
        words = rng.integers(0, 1 << 12, size=200, dtype=np.uint64)
        r = 0b101101110001
        got = parity_of_words(words, r)
        want = [inner_product(BitVector(int(w), 12), BitVector(r, 12)) for w in words]
        assert got.tolist() == want


class TestElimination:
    def test_empty_system_is_full_space(self):
        assert subspace_size(gaussian_eliminate(LinearSystem(2))) == 4

    def test_single_equation(self):
        space = gaussian_eliminate(LinearSystem(2).add_row(bv("11"), 1))
        assert space.size == 2
        assert {str(v) for v in space.members()} == {"10", "01"}

    def test_contradiction(self):
        space = gaussian_eliminate(LinearSystem(2).add_row(bv("10"), 0).add_row(bv("10"), 1))
        assert space.empty and subspace_size(space) == 0

    def test_one_independent_row_in_three_dims(self):
        assert gaussian_eliminate(LinearSystem(3).add_row(bv("110"), 1)).size == 4

    def test_consistent_row_halves(self):
        sys = LinearSystem(2).add_row(bv("11"), 1)
        assert gaussian_eliminate(sys).size == 2
        sys.add_row(bv("10"), 1)
        space = gaussian_eliminate(sys)
        assert space.size == 1 and list(space.members()) == [bv("10")]

    def test_contains_examples(self):
        space = gaussian_eliminate(LinearSystem(2).add_row(bv("11"), 1))
        assert bv("10") in space
        assert bv("11") not in space
        empty = gaussian_eliminate(LinearSystem(1).add_row(bv("1"), 0).add_row(bv("1"), 1))
        assert not contains(empty, bv("0")) and not contains(empty, bv("1"))
        with pytest.raises(ValueError):
            contains(space, bv("101"))

    def test_agrees_with_brute_force(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            d = int(rng.integers(1, 13))
            m = int(rng.integers(0, d + 4))
            coeffs = [int(c) for c in rng.integers(0, 1 << d, size=m)]
            rhs = [int(b) for b in rng.integers(0, 2, size=m)]
            space = solve_packed(d, coeffs, rhs)
            brute = brute_solutions(d, coeffs, rhs)
            assert space.size == len(brute)
            if space.size <= 4096:
                assert {v.bits for v in space.members()} == brute
            assert all(contains(space, BitVector(v, d)) == (v in brute) for v in range(1 << d))

    @settings(max_examples=200)
    @given(st.integers(1, 10).flatmap(lambda d: st.tuples(
        st.just(d), st.lists(st.integers(0, 2**d - 1), max_size=d + 2),
        st.integers(0, 2**d - 1), st.integers(0, 2**d - 1), st.integers(0, 1))))
    def test_adding_a_row_keeps_halves_or_empties(self, args):
        d, coeffs, r, c_new, y_new = args
        rhs = [(c & r).bit_count() & 1 for c in coeffs]  # consistent: r solves it
        before = solve_packed(d, coeffs, rhs).size
        after = solve_packed(d, coeffs + [c_new], rhs + [y_new]).size
        assert after in (before, before // 2, 0)
        if after == 0:
            # only an implied, contradicted equation can empty a consistent system
            old = [BitVector(c, d) for c in coeffs]
            assert rank(old + [BitVector(c_new, d)]) == rank(old)

    @settings(max_examples=100)
    @given(st.integers(1, 16).flatmap(lambda d: st.tuples(
        st.just(d), st.lists(st.integers(0, 2**d - 1), max_size=d), st.integers(0, 2**d - 1),
        st.integers(0, 2**32))))
    def test_samples_are_members(self, args):
        d, coeffs, r, seed = args
        rhs = [(c & r).bit_count() & 1 for c in coeffs]
        space = solve_packed(d, coeffs, rhs)
        rng = np.random.default_rng(seed)
        for _ in range(5):
            assert contains(space, sample_uniform(space, rng))

    def test_null_basis_independent(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            d = int(rng.integers(1, 20))
            coeffs = [int(c) for c in rng.integers(0, 1 << d, size=int(rng.integers(0, d)))]
            space = solve_packed(d, coeffs, [0] * len(coeffs))
            assert rank(list(space.null_basis)) == len(space.null_basis)


class TestSampling:
    def test_empty_raises(self):
        space = solve_packed(1, [1, 1], [0, 1])
        with pytest.raises(ValueError):
            sample_uniform(space, np.random.default_rng(0))

    def test_singleton(self):
        space = solve_packed(2, [0b01, 0b10], [1, 0])
        rng = np.random.default_rng(0)
        assert {sample_uniform(space, rng) for _ in range(50)} == {BitVector(1, 2)}

    def test_two_member_space_is_balanced(self):
        space = gaussian_eliminate(LinearSystem(2).add_row(bv("11"), 1))
        rng = np.random.default_rng(3)
        counts = Counter(str(sample_uniform(space, rng)) for _ in range(10_000))
        assert set(counts) == {"10", "01"}
        assert abs(counts["10"] / 10_000 - 0.5) <= 0.02

    def test_full_cube_uniform(self):
        rng = np.random.default_rng(4)
        counts = Counter(sample_uniform(full_space(3), rng).bits for _ in range(100_000))
        assert len(counts) == 8
        assert all(abs(c / 100_000 - 0.125) <= 0.01 for c in counts.values())
        assert chi_square_p(list(counts.values()), 100_000 / 8) > 0.01

    def test_chi_square_small_subspaces(self):
        rng = np.random.default_rng(5)
        for trial in range(6):
            d = 7
            coeffs = [int(c) for c in rng.integers(1, 1 << d, size=trial % 4 + 1)]
            r = int(rng.integers(0, 1 << d))
            space = solve_packed(d, coeffs, [(c & r).bit_count() & 1 for c in coeffs])
            assert space.size <= 64
            draws = Counter(sample_uniform(space, rng).bits for _ in range(100_000))
            assert set(draws) == {v.bits for v in space.members()}
            counts = [draws[v.bits] for v in space.members()]
            assert chi_square_p(counts, 100_000 / space.size) > 0.01


def test_rank_examples():
    assert rank([]) == 0
    assert rank([bv("110"), bv("011"), bv("101")]) == 2
    assert rank([BitVector(1 << k, 5) for k in range(5)]) == 5
    assert list(itertools.islice(full_space(2).members(), 4)) and full_space(2).size == 4
