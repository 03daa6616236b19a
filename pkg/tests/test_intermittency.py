import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import omega1_probability

from mrn.drn import sync_times
from mrn.errors import ThresholdOverlap
from mrn.intermittency import (
    classify_curve,
    classify_times,
    ell_star_and_a,
    fit_thresholds,
    meet_curve,
    meet_probability,
    omega_membership,
    omega_set_counts,
    omega_set_measures,
    simulate_pair,
    symbol_test,
)
from mrn.linalg import unit
from mrn.noise import enumerate_alphabet, sample_realization
from mrn.perturbation import PerturbationMap, random_perturbation

K2 = enumerate_alphabet(2)
K3 = enumerate_alphabet(3)


def rank_one_free(seed, alphabet=K2):
    # f vanishes exactly on the rank-one symbols
    f = random_perturbation(seed, alphabet, 0.0, 1 / alphabet.k)
    return PerturbationMap(alphabet.k, {c: fa for c, fa in f.table.items() if alphabet.symbol(c).rank > 1})


class TestMeeting:
    def test_examples(self):
        w = sample_realization(0, K2)
        f = PerturbationMap(2)
        assert meet_probability(0.1, w, 0, f, unit(2, 0), unit(2, 0)) == 1.0
        assert meet_probability(0.1, w, 0, f) == 0.5

    @given(st.integers(0, 10_000))
    def test_collapse_at_eps0(self, seed):
        w = sample_realization(seed, K3)
        f = random_perturbation(seed, K3, 0.0, 1 / 3)
        n_plus = sync_times(w).n_plus
        curve = meet_curve(0.0, w, n_plus + 5, f)
        assert np.all(curve[n_plus:] == 1.0)
        assert np.all(curve[:n_plus] < 1.0)

    @given(st.integers(0, 10_000), st.integers(0, 30))
    def test_symmetric(self, seed, n):
        w = sample_realization(seed, K3)
        f = random_perturbation(seed, K3, 0.3, 0.2)
        qx, qy = np.array([0.2, 0.3, 0.5]), unit(3, 1)
        assert meet_probability(0.05, w, n, f, qx, qy) == pytest.approx(meet_probability(0.05, w, n, f, qy, qx), abs=1e-15)

    def test_curve_bounds(self):
        w = sample_realization(1, K3)
        f = random_perturbation(1, K3, 0.0, 1 / 3)
        c = meet_curve(0.3, w, 200, f)
        assert c.shape == (201,) and c.min() >= 0 and c.max() <= 1


class TestSimulation:
    def test_deterministic_chains(self):
        w = sample_realization(3, K3)
        f = random_perturbation(3, K3, 0.0, 1 / 3)
        s = simulate_pair(0.0, w, 40, 50, 0, f, unit(3, 0), unit(3, 2))
        assert np.array_equal(s.mc_meet_freq, s.meet_prob)

    def test_within_four_sigma(self):
        w = sample_realization(5, K3)
        f = random_perturbation(5, K3, 0.0, 1 / 3)
        s = simulate_pair(0.2, w, 60, 4000, 11, f)
        assert np.all(np.abs(s.mc_meet_freq - s.meet_prob) <= 4 * s.sigma() + 1e-12)

    def test_reproducible(self):
        w = sample_realization(5, K3)
        f = random_perturbation(5, K3, 0.0, 1 / 3)
        a = simulate_pair(0.2, w, 30, 100, 3, f)
        b = simulate_pair(0.2, w, 30, 100, 3, f)
        assert np.array_equal(a.mc_meet_freq, b.mc_meet_freq)

    def test_needs_samples(self):
        with pytest.raises(ValueError):
            simulate_pair(0.1, sample_realization(0, K2), 10, 0, 0, PerturbationMap(2))


class TestClassification:
    def test_exact_sync_at_eps0(self):
        w = sample_realization(2, K3)
        n_plus = sync_times(w).n_plus
        cls = classify_times(0.0, w, 1000, 1, 1.0, 1.0, PerturbationMap(3))
        assert cls.e_times.tolist() == list(range(n_plus, 1001))
        # with distinct start states the pre-collapse times are desynchronized
        assert cls.f_times.tolist() == list(range(1, n_plus))
        assert cls.density_e + cls.density_f == 1.0

    def test_distinct_start_states_before_collapse(self):
        for seed in range(20):
            w = sample_realization(seed, K3)
            n_plus = sync_times(w).n_plus
            cls = classify_times(0.0, w, 1000, 1, 0.5, 1.0, PerturbationMap(3), unit(3, 0), unit(3, 1))
            pre = set(range(1, n_plus))
            meet = meet_curve(0.0, w, n_plus, PerturbationMap(3), unit(3, 0), unit(3, 1))
            assert {n for n in pre if meet[n] < 1} <= set(cls.f_times.tolist())

    def test_overlap(self):
        meet = np.full(1001, 0.5)
        with pytest.raises(ThresholdOverlap):
            classify_curve(meet, 0.5, 1, 2.0, 2.0)
        with pytest.raises(ValueError):
            classify_curve(np.full(10, 0.5), 0.1, 1, 1.0, 1.0)
        with pytest.raises(ValueError):
            classify_curve(meet, 0.1, 1, 0.0, 1.0)

    @given(st.integers(0, 2**32), st.floats(1e-4, 0.1), st.floats(0.1, 4), st.floats(0.1, 4))
    def test_disjoint_and_density(self, seed, eps, b, c):
        rng = np.random.default_rng(seed)
        meet = 1 - rng.random(1001) * 10.0 ** rng.integers(-6, 1, 1001)
        cls = classify_curve(meet, eps, 1, b, c)
        assert not set(cls.e_times) & set(cls.f_times)
        assert cls.density_e == len(cls.e_times) / 1000
        labels = cls.labels(1000)
        assert labels.count("E") == len(cls.e_times)

    def test_fit_thresholds(self):
        meet = np.array([0.5, 1 - 2e-4, 0.9, 1 - 1e-4, 0.7])
        member = np.array([True, False, True, False])
        b, c = fit_thresholds(meet, 0.01, 1, member)
        assert b == pytest.approx(1.5 * 2e-2)
        assert c == pytest.approx(0.5 * 10)
        b, _ = fit_thresholds(np.ones(5), 0.01, 1, np.ones(4, bool))
        assert b == 1e-12

    def test_large_density_when_f_nonzero(self):
        w = sample_realization(7, K3)
        f = random_perturbation(7, K3, 0.0, 1 / 3)
        meet = meet_curve(1e-3, w, 2000, f)
        assert np.mean(meet[1:] > 0.9) > 0.9


class TestOmegaSets:
    def test_ell_star(self):
        assert ell_star_and_a(np.array([0.5, 0.5, 0.5])) == (1, 0.5)
        assert ell_star_and_a(np.array([1.0, 1.0])) == (None, None)
        assert ell_star_and_a(np.array([0.5, 0.2])) == (2, 0.2)
        assert ell_star_and_a(np.array([0.5, 0.0])) == (2, None)

    def test_zero_f(self):
        om = omega_set_measures(K3, PerturbationMap(3), 3, range(200))
        assert np.all(om.mu_omega_ell == 1.0) and om.mu_omega_bullet == 1.0
        assert om.ell_star is None

    def test_symbol_test_agrees(self):
        for rho in (0.3, 0.8):
            f = random_perturbation(1, K3, rho, 1 / 3)
            om = omega_set_measures(K3, f, 2, range(500))
            assert om.n_disagree == 0 and om.n_excluded == 0
            assert om.mu_omega_ell[1] <= om.mu_omega_ell[0]

    def test_rank_one_support_matches_oracle(self):
        f = rank_one_free(0)
        zero = [f.is_zero(K2.symbol(i)) for i in range(4)]
        p, undecided = omega1_probability([K2.row(i) for i in range(4)], K2.weights, zero)
        assert p == pytest.approx(0.5) and undecided < 1e-3
        n = 4000
        om = omega_set_measures(K2, f, 1, range(n))
        sigma = np.sqrt(p * (1 - p) / n)
        assert abs(om.mu_omega_ell[0] - p) <= 4 * sigma

    def test_membership_matches_symbol_test(self):
        f = rank_one_free(1)
        w = sample_realization(9, K2)
        member = omega_membership(w, f, 1, range(50))
        assert member.tolist() == [symbol_test(w.shifted(n), f) for n in range(50)]

    def test_counts_merge(self):
        f = random_perturbation(2, K3, 0.5, 1 / 3)
        whole = omega_set_counts(K3, f, 2, range(60))
        parts = omega_set_counts(K3, f, 2, range(25)) + omega_set_counts(K3, f, 2, range(25, 60))
        assert np.array_equal(whole.hits, parts.hits)
        assert (whole.used, whole.bullet, whole.disagree) == (parts.used, parts.bullet, parts.disagree)

    def test_empty_seeds(self):
        with pytest.raises(ValueError):
            omega_set_measures(K2, PerturbationMap(2), 1, [])
