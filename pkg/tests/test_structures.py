import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from qlog import laws as lw
from qlog import structures as st
from qlog.laws import ComponentLaw, Constant, Semigroup, Sinusoid

import oracles

POISSON1 = ComponentLaw("poisson", Constant(1.0))
SIN = ComponentLaw("poisson", Sinusoid(1.0, ((0.5, math.sqrt(2) / 10, 0.3),)))
NB = ComponentLaw("negbin", Semigroup(lw.irreducible_counts(2, 80), 2.0))


def pmf_of(law):
    return lambda i, c: law.z_pmf(i)[c]


class TestWeightedSum:
    @pytest.mark.parametrize("law", [POISSON1, SIN, NB], ids=["const", "sin", "nb"])
    @pytest.mark.parametrize("a,n", [(0, 6), (2, 7), (3, 8)])
    def test_brute_force(self, law, a, n):
        t = st.weighted_sum_pmf(law, a, n)
        upto = n + 4
        brute = oracles.brute_weighted_sum(pmf_of(law), range(a + 1, n + 1), upto)
        for m in range(upto + 1):
            assert abs(t[m] - brute[m]) <= 1e-12

    def test_cap(self):
        t = st.weighted_sum_pmf(POISSON1, 0, 10, cap=10)
        assert t.hi <= 10
        assert abs(t.total_mass() - 1) <= 1e-12


class TestSpectrumTable:
    def test_permutation_anchor(self):
        assert st.spectrum_table(POISSON1, 3).anchor == pytest.approx(math.exp(-11 / 6), rel=1e-14)

    @pytest.mark.parametrize("law", [POISSON1, SIN, NB], ids=["const", "sin", "nb"])
    def test_chapman_kolmogorov(self, law):
        table = st.spectrum_table(law, 30)
        for b in (1, 5, 17, 29):
            assert table.chapman_kolmogorov(b) <= 1e-14

    def test_sparse_matches_full(self):
        full = st.spectrum_table(SIN, 40)
        sparse = st.spectrum_table(SIN, 40, store="sparse")
        assert sparse.anchor == full.anchor
        for r in range(1, 41):
            assert st.largest_pmf_exact(SIN, sparse, 40, r) == pytest.approx(
                st.largest_pmf_exact(SIN, full, 40, r), rel=1e-12, abs=1e-300)

    def test_degenerate(self):
        law = ComponentLaw("poisson", Sinusoid(1.0, ((1.0, 0.5, 0.0),)))  # theta_i = 1 + cos(pi i)
        odd = st.spectrum_table(law, 7)
        assert odd.degenerate
        with pytest.raises(st.DegenerateStructureError):
            st.largest_cdf_exact(law, odd, 7, 0.5)
        assert not st.spectrum_table(law, 8).degenerate

    def test_store_check(self):
        with pytest.raises(ValueError):
            st.spectrum_table(POISSON1, 5, store="dense")


class TestComponentLaw:
    def test_fixed_points(self):
        # P[C_1 = 3] for a permutation of 3
        assert st.component_law(POISSON1, 3, 1, [3]) == pytest.approx(1 / 6, rel=1e-14)

    @pytest.mark.parametrize("n", range(1, 7))
    def test_cycle_types(self, n):
        table = st.spectrum_table(POISSON1, n)
        suffix = table.suffix(n)
        for cv in oracles.partitions(n):
            got = st.component_law(POISSON1, n, n, cv, table, suffix)
            assert abs(got - float(oracles.permutation_cycle_type_prob(cv))) <= 1e-12

    @pytest.mark.parametrize("law", [SIN, NB], ids=["sin", "nb"])
    def test_partitions_sum_to_one(self, law):
        n = 9
        table = st.spectrum_table(law, n)
        suffix = table.suffix(n)
        total = math.fsum(st.component_law(law, n, n, cv, table, suffix) for cv in oracles.partitions(n))
        assert abs(total - 1) <= 1e-12

    def test_oversize(self):
        assert st.component_law(POISSON1, 4, 2, [1, 2]) == 0

    def test_count_length(self):
        with pytest.raises(ValueError):
            st.component_law(POISSON1, 4, 2, [1])


class TestSampling:
    @pytest.mark.parametrize("law", [POISSON1, SIN, NB], ids=["const", "sin", "nb"])
    def test_conservation(self, law):
        n = 60
        s = st.sample_structures(law, st.spectrum_table(law, n), 2000, np.random.default_rng(1))
        assert np.all(s @ np.arange(1, n + 1) == n)
        assert np.all(s >= 0)

    def test_n1(self):
        s = st.sample_structures(POISSON1, st.spectrum_table(POISSON1, 1), 10, np.random.default_rng(0))
        assert s.tolist() == [[1]] * 10

    def test_cycle_type_frequencies(self):
        n, count = 3, 60_000
        s = st.sample_structures(POISSON1, st.spectrum_table(POISSON1, n), count, np.random.default_rng(7))
        for cv, p in ((( 3, 0, 0), 1 / 6), ((1, 1, 0), 1 / 2), ((0, 0, 1), 1 / 3)):
            freq = np.mean(np.all(s == np.array(cv), axis=1))
            assert abs(freq - p) <= 5 * math.sqrt(p * (1 - p) / count)

    def test_reproducible(self):
        table = st.spectrum_table(SIN, 30)
        a = st.sample_structures(SIN, table, 50, np.random.default_rng(3))
        b = st.sample_structures(SIN, table, 50, np.random.default_rng(3))
        np.testing.assert_array_equal(a, b)

    def test_mean_count_matches_exact(self):
        n, count = 20, 40_000
        table = st.spectrum_table(NB, n)
        s = st.sample_structures(NB, table, count, np.random.default_rng(11))
        suffix = table.suffix(1)
        pz = NB.z_pmf(1)
        exact = math.fsum(c * pz[c] * suffix[n - c] / table.anchor for c in range(n + 1))
        sd = s[:, 0].std()
        assert abs(s[:, 0].mean() - exact) <= 5 * sd / math.sqrt(count)


class TestLargest:
    def test_permutations_n3(self):
        table = st.spectrum_table(POISSON1, 3)
        np.testing.assert_allclose(st.largest_pmf_all(POISSON1, table, 3), [1 / 6, 1 / 2, 1 / 3], atol=1e-14)

    def test_permutations_n4(self):
        table = st.spectrum_table(POISSON1, 4)
        assert st.largest_cdf_exact(POISSON1, table, 4, 0.5) == pytest.approx(10 / 24, abs=1e-14)
        assert st.largest_cdf_exact(POISSON1, table, 4, 1.0) == 1.0

    @pytest.mark.parametrize("law", [POISSON1, SIN, NB], ids=["const", "sin", "nb"])
    def test_pmf_cdf_consistent(self, law):
        n = 35
        table = st.spectrum_table(law, n)
        p = st.largest_pmf_all(law, table, n)
        assert abs(math.fsum(p) - 1) <= 1e-12
        for r in (3, 10, 17, 30):
            assert st.largest_cdf_exact(law, table, n, r / n) == pytest.approx(math.fsum(p[:r]), abs=1e-12)

    def test_brute_force(self):
        n = 8
        table = st.spectrum_table(SIN, n)
        brute = np.zeros(n)
        total = 0.0
        for cv in oracles.partitions(n):
            w = math.prod(SIN.z_pmf(i)[c] for i, c in enumerate(cv, 1))
            total += w
            brute[max(i for i, c in enumerate(cv, 1) if c) - 1] += w
        np.testing.assert_allclose(st.largest_pmf_all(SIN, table, n), brute / total, atol=1e-12)

    def test_domain(self):
        table = st.spectrum_table(POISSON1, 4)
        with pytest.raises(ValueError):
            st.largest_cdf_exact(POISSON1, table, 4, 0.0)
        with pytest.raises(ValueError):
            st.largest_pmf_exact(POISSON1, table, 4, 5)


class TestSmallTV:
    def test_example(self):
        table = st.spectrum_table(POISSON1, 2)
        assert st.small_tv_exact(POISSON1, table, 2, 1) == pytest.approx(0.4481808382428365, abs=1e-14)

    @pytest.mark.parametrize("law", [POISSON1, SIN], ids=["const", "sin"])
    @pytest.mark.parametrize("n", [2, 5, 9])
    def test_brute_force(self, law, n):
        table = st.spectrum_table(law, n)
        for a in range(1, min(3, n) + 1):
            got = st.small_tv_exact(law, table, n, a)
            assert abs(got - oracles.brute_small_tv(pmf_of(law), n, a)) <= 1e-12

    def test_highprec_agrees(self):
        table = st.spectrum_table(POISSON1, 40)
        for a in (3, 5, 10):
            assert float(st.small_tv_highprec(POISSON1, 40, a)) == pytest.approx(
                st.small_tv_exact(POISSON1, table, 40, a), rel=1e-9, abs=1e-14)

    def test_highprec_family(self):
        with pytest.raises(ValueError):
            st.small_tv_highprec(NB, 20, 2)

    def test_highprec_decay(self):
        vals = [st.small_tv_highprec(POISSON1, n, 5) for n in (50, 100, 200)]
        assert vals[0] > vals[1] > vals[2] > 0

    @settings(max_examples=15, deadline=None)
    @given(hst.integers(3, 20), hst.integers(1, 3))
    def test_in_unit_interval(self, n, a):
        table = st.spectrum_table(SIN, n)
        v = st.small_tv_exact(SIN, table, n, min(a, n))
        assert 0 <= v <= 1
