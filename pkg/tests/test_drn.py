import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import first_rank_one_law

from mrn.drn import (
    check_annihilation,
    check_minus_plus_distribution,
    cocycle_forward,
    cocycle_pullback,
    good_time_density,
    ks_critical_value,
    ks_distance,
    seed_sync_times,
    stats_from_samples,
    sync_index,
    sync_time_stats,
    sync_times,
)
from mrn.errors import CappedSyncTime
from mrn.linalg import DetMatrix, det_rank, unit
from mrn.noise import Alphabet, FixedNoise, enumerate_alphabet, sample_realization

K2 = enumerate_alphabet(2)
K3 = enumerate_alphabet(3)
ID2 = DetMatrix.identity(2)
ALL1 = DetMatrix((0, 0))


def fixed(symbols, alphabet=K2, seed=0):
    return FixedNoise.from_symbols(alphabet, symbols, seed)


class TestCocycles:
    def test_forward_zero_is_identity(self):
        assert cocycle_forward(sample_realization(0, K3), 0) == DetMatrix.identity(3)

    def test_forward_composition_example(self):
        w = fixed({0: ID2, 1: ALL1})
        assert cocycle_forward(w, 2) == ALL1

    def test_pullback_examples(self):
        w = sample_realization(4, K3)
        assert cocycle_pullback(w, 1) == w.symbol_at(-1)
        w = fixed({-1: ALL1})
        assert det_rank(cocycle_pullback(w, 1)) == 1

    @given(st.integers(0, 10_000), st.integers(0, 30), st.integers(0, 30))
    def test_cocycle_identity(self, seed, m, n):
        w = sample_realization(seed, K3)
        assert cocycle_forward(w, m + n) == cocycle_forward(w.shifted(n), m) @ cocycle_forward(w, n)

    @given(st.integers(0, 10_000), st.integers(0, 40))
    def test_pullback_is_shifted_forward(self, seed, n):
        w = sample_realization(seed, K3)
        assert cocycle_pullback(w, n) == cocycle_forward(w.shifted(-n), n)

    @given(st.integers(0, 10_000))
    def test_rank_monotone(self, seed):
        w = sample_realization(seed, enumerate_alphabet(4))
        ranks = [det_rank(cocycle_forward(w, n)) for n in range(25)]
        assert all(b <= a for a, b in zip(ranks, ranks[1:]))
        back = [det_rank(cocycle_pullback(w, n)) for n in range(25)]
        assert all(b <= a for a, b in zip(back, back[1:]))

    def test_against_dense_products(self):
        w = sample_realization(8, K3)
        dense = np.eye(3)
        for n in range(1, 15):
            dense = w.symbol_at(n - 1).dense() @ dense
            assert np.array_equal(cocycle_forward(w, n).dense(), dense)


class TestSyncTimes:
    def test_immediate_collapse(self):
        assert sync_times(fixed({0: ALL1})).n_plus == 1

    def test_two_steps(self):
        assert sync_times(fixed({0: ID2, 1: ALL1})).n_plus == 2

    def test_pullback_example(self):
        r = sync_times(fixed({-1: ALL1}))
        assert (r.n_minus, r.j_index) == (1, 0)

    @given(st.integers(0, 100_000))
    def test_report_invariants(self, seed):
        w = sample_realization(seed, K3)
        r = sync_times(w)
        assert not r.capped
        assert det_rank(cocycle_forward(w, r.n_plus)) == 1
        assert det_rank(cocycle_forward(w, r.n_plus - 1)) > 1 or r.n_plus == 1
        assert det_rank(cocycle_pullback(w, r.n_minus)) == 1
        assert det_rank(cocycle_pullback(w, r.n_minus - 1)) > 1 or r.n_minus == 1
        assert cocycle_pullback(w, r.n_minus).apply(unit(3, 0)).argmax() == r.j_index

    @given(st.integers(0, 100_000), st.integers(0, 40))
    def test_j_invariance(self, seed, n):
        w = sample_realization(seed, K3)
        j0, jn = sync_index(w), sync_index(w.shifted(n))
        assert np.array_equal(cocycle_forward(w, n).apply(unit(3, j0)), unit(3, jn))

    @given(st.integers(0, 100_000), st.integers(0, 8))
    def test_j_independent_of_depth(self, seed, extra):
        w = sample_realization(seed, K3)
        r = sync_times(w)
        assert set(cocycle_pullback(w, r.n_minus + extra).digits) == {r.j_index}

    def test_cap_for_non_collapsing_alphabet(self):
        perms = Alphabet.from_symbols([DetMatrix((1, 0)), DetMatrix((0, 1))])
        r = sync_times(sample_realization(0, perms), cap=50)
        assert r.capped and r.n_plus == 50 and r.n_minus == 50 and r.j_index is None
        with pytest.raises(CappedSyncTime):
            sync_index(sample_realization(0, perms), cap=50)


class TestAnnihilation:
    @pytest.mark.parametrize("extra", [0, 1, 5])
    def test_zero_sum_killed(self, extra):
        for seed in range(30):
            w = sample_realization(seed, K3)
            assert check_annihilation(w, [1.0, -1.0, 0.0], extra)
            assert check_annihilation(w, [0.25, 0.5, -0.75], extra)

    def test_zero_vector(self):
        assert check_annihilation(sample_realization(0, K2), [0.0, 0.0])

    def test_capped(self):
        perms = Alphabet.from_symbols([DetMatrix((1, 0)), DetMatrix((0, 1))])
        with pytest.raises(CappedSyncTime):
            check_annihilation(sample_realization(0, perms), [1.0, -1.0], cap=20)


class TestStatistics:
    def test_law_matches_prefix_enumeration_k3(self):
        law = first_rank_one_law([K3.row(i) for i in range(27)], K3.weights, 8, forward=True)
        n_seeds = 20_000
        plus, minus, capped = seed_sync_times(K3, range(n_seeds))
        assert capped == 0
        for n, p in law.items():
            sigma = np.sqrt(p * (1 - p) / n_seeds)
            assert abs(np.mean(plus == n) - p) <= 4 * sigma + 1e-12
            assert abs(np.mean(minus == n) - p) <= 4 * sigma + 1e-12

    def test_pullback_law_equals_forward_law(self):
        symbols = [K3.row(i) for i in range(27)]
        fwd = first_rank_one_law(symbols, K3.weights, 7, forward=True)
        back = first_rank_one_law(symbols, K3.weights, 7, forward=False)
        assert fwd.keys() == back.keys()
        assert all(abs(fwd[n] - back[n]) < 1e-14 for n in fwd)

    def test_mean_bound_and_density(self):
        m, length = 3, 50_000
        s = sync_time_stats(K3, range(5000), m, orbit_length=length)
        nu1 = K3.rank_one_mass()
        assert s.mean_plus <= 1 / nu1
        p = s.cdf[m]
        # indicators of overlapping length-m windows are (m-1)-dependent
        sigma = np.sqrt(p * (1 - p) / s.n_seeds) + np.sqrt((2 * m - 1) * p * (1 - p) / length)
        assert abs(s.density_good_times - p) <= 4 * sigma

    def test_good_time_density_m1_counts_rank_one_symbols(self):
        w = sample_realization(2, K2)
        pos = w.positions(0, 1000)
        expected = np.mean([det_rank(K2.symbol(int(p))) == 1 for p in pos])
        assert good_time_density(w, 1, 1000) == expected

    def test_unbounded_sync_times_k2(self):
        n_seeds = 20_000
        plus, _, _ = seed_sync_times(K2, range(n_seeds))
        for n in range(1, 9):
            p = 0.5 ** (n - 1)
            sigma = np.sqrt(p * (1 - p) / n_seeds)
            assert np.mean(plus >= n) >= p - 4 * sigma

    def test_rows(self):
        s = stats_from_samples([1, 1, 2, 3], [1, 2, 2, 2], 0, 2, 0.5)
        rows = list(s.rows())
        assert rows[0] == (1, 2, 1, 0.5, 0.25)
        assert rows[-1][3:] == (1.0, 1.0)
        assert s.mean_plus == pytest.approx(1.75)

    def test_ks(self):
        assert ks_distance([1, 2, 3], [1, 2, 3]) == 0.0
        assert ks_distance([1, 1], [2, 2]) == 1.0
        assert check_minus_plus_distribution(K3, range(3000)) < ks_critical_value(3000, 3000)
        assert ks_critical_value(10_000, 10_000) == pytest.approx(1.6276 * np.sqrt(2 / 10_000), rel=1e-3)

    def test_seeded_reproducible(self):
        a = seed_sync_times(K3, range(100))
        b = seed_sync_times(K3, range(100))
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
