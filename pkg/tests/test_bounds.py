import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from qlog import bounds as bd
from qlog import laws as lw
from qlog import pmf as pm
from qlog import reference as ref
from qlog.laws import ComponentLaw, Constant, Sinusoid, Table

POISSON1 = ComponentLaw("poisson", Constant(1.0))
SIN = ComponentLaw("poisson", Sinusoid(1.0, ((0.5, math.sqrt(2) / 10, 0.3),)))


def two_point_law(thetas):
    pieces = [pm.Pmf.from_array(np.array([1 - t / i, t / i])) for i, t in enumerate(thetas, 1)]
    return ComponentLaw("explicit", pieces=pieces)


class TestIngredients:
    def test_m_grid(self):
        assert bd.m_grid(10) == [1, 2, 4, 8]

    def test_theta_star(self):
        assert bd.theta_star(POISSON1, 50) == 1
        assert bd.theta_star(SIN, 50) == pytest.approx(float(SIN.theta_values(50).max()))

    def test_sigma_star_two_point(self):
        law = two_point_law([0.5] * 20)
        assert bd.sigma_star(law, 20) == pytest.approx(ref.harmonic(20), rel=1e-12)

    def test_sigma_star_dominates_harmonic(self):
        assert bd.sigma_star(POISSON1, 64) >= ref.harmonic(64)

    def test_l0_poisson(self):
        # P[Z_l = 0] = exp(-1/l) >= 1/2 exactly from l = 2
        assert bd.l0_index(POISSON1, 100) == 2

    def test_l0_undefined(self):
        law = ComponentLaw("poisson", Constant(10.0))  # P[Z_10 = 0] = exp(-1) < 1/2
        with pytest.raises(ValueError):
            bd.l0_index(law, 10)

    def test_c_l0(self):
        # over j >= 1 the smallest peak is P[Z_2 = 1] = exp(-1/2) / 2
        assert bd.c_l0(POISSON1, 2) == pytest.approx(2 * math.exp(0.5), rel=1e-12)

    def test_d1_cp(self):
        v = bd.d1(POISSON1, 64)
        t = ref.cp_pmf(1.0, 64)
        assert v == pytest.approx(pm.unit_shift_tv(t).value, rel=1e-12)
        assert 0 < v < 1

    def test_context_mismatch(self):
        c = bd.BoundContext(POISSON1, 32, 0)
        with pytest.raises(ValueError):
            bd.eps1(POISSON1, 32, 1, 2, c)


class TestFunctionals:
    def test_eps1_formula(self):
        n, a, m = 128, 3, 8
        c = bd.BoundContext(SIN, n, a)
        ts = c.theta_star
        want = 0.25 * ts * m * c.d1 + c.delta(m) + ts * (5 * ts * c.sigma_star + 2 * m + a) / n
        assert bd.eps1(SIN, n, a, m, c) == pytest.approx(want, rel=1e-15)

    def test_eps1_interior_minimum(self):
        n = 1024
        c = bd.BoundContext(SIN, n, 0)
        val, m = bd.eps1_min(SIN, n, 0, c)
        assert 1 < m < n
        assert val < bd.eps1(SIN, n, 0, 1, c) and val < bd.eps1(SIN, n, 0, n, c)

    def test_eps1_in_a(self):
        vals = [bd.eps1_min(POISSON1, 256, a)[0] for a in (0, 3, 15)]
        assert vals[0] < vals[1] < vals[2]

    def test_eps4_exponent(self):
        for theta in (0.5, 2.0):
            law = ComponentLaw("poisson", Constant(theta))
            ts = bd.theta_star(law, 64)
            got = bd.eps4(law, 64, 0, 4, e1=1e-3)
            assert got == pytest.approx(4 * math.exp(1 + ts) * 1e-3 ** (theta / (4 + theta)), rel=1e-14)

    def test_eps5_prime_decreases(self):
        vals = [bd.eps5_prime_min(POISSON1, n, 0)[0] for n in (128, 256, 512)]
        assert vals[0] > vals[1] > vals[2]

    def test_eps5_includes_c2(self):
        n, a, m = 128, 0, 4
        base = bd.eps5(POISSON1, n, a, m, n, c2=0.0)
        assert bd.eps5(POISSON1, n, a, m, n, c2=2.0) == pytest.approx(base + 2 * (1 / n), rel=1e-12)

    def test_eps2_full_scan_no_larger(self):
        c = bd.BoundContext(SIN, 128, 0)
        assert bd.eps2_min(SIN, 128, 0, c, full_scan=True)[0] <= bd.eps2_min(SIN, 128, 0, c)[0]

    def test_eps6_components(self):
        comp = bd.eps6_components(SIN, 256, 3)
        assert comp["a_over_n"] == 3 / 256
        assert comp["third"] == pytest.approx(min(comp["a_d1"], comp["eps2_small"]))
        assert bd.eps6_components(SIN, 256, 0)["third"] == 0


class TestStein:
    @pytest.mark.parametrize("theta,n", [(0.5, 60), (1.0, 200), (2.5, 90)])
    def test_cp_identity(self, theta, n):
        # the compound Poisson law satisfies the size-bias equation exactly
        t = ref.cp_pmf(theta, n, tail_tol=1e-17)
        r = np.arange(0, 3 * n)
        assert np.max(np.abs(bd.delta1_pmf(t, theta, n, 0, r))) <= 1e-13

    def test_delta1_small_example(self):
        t = pm.Pmf.from_array(np.array([0.5, 0.5]))
        # theta P[r-n <= T < r] - r P[T=r] at r=1, n=1: 1 * 0.5 - 0.5
        assert bd.delta1_pmf(t, 1.0, 1, 0, 1)[0] == 0.0


class TestCertification:
    @pytest.mark.parametrize("law", [POISSON1, SIN], ids=["const", "sin"])
    @pytest.mark.parametrize("a", [0, 3])
    def test_global(self, law, a):
        rep = bd.verify_global(law, 128, a)
        assert rep.ok
        assert rep.lhs["wasserstein_cp"] <= rep.rhs["wasserstein_cp"]
        assert rep.diagnostics["wasserstein_dickman"] >= 0

    @pytest.mark.parametrize("law", [POISSON1, SIN], ids=["const", "sin"])
    def test_local(self, law):
        rep = bd.verify_local(law, None, 128, 3)
        assert rep.ok
        assert set(rep.passes) == {"delta1", "cdf_s32", "cdf_s64"}
        assert "c''" in rep.constants_mode["eps5_prime"]

    def test_local_range_check(self):
        with pytest.raises(ValueError):
            bd.verify_local(POISSON1, None, 64, 10, r_range=range(5, 30))

    def test_report_dict(self):
        d = bd.verify_global(POISSON1, 64, 0, scaled=False).to_dict()
        assert {"n", "a", "m", "eps1", "passes"} <= set(d)

    def test_local_sup_error_shrinks(self):
        errs = [bd.local_sup_error(POISSON1, n) for n in (128, 256, 512)]
        assert errs[0] > errs[1] > errs[2]


class TestTail:
    def test_threshold(self):
        assert bd.tail_threshold(POISSON1, 200) == 3

    @pytest.mark.parametrize("law", [POISSON1, SIN], ids=["const", "sin"])
    @pytest.mark.parametrize("a", [0, 3, 15])
    def test_sweep(self, law, a):
        n = 200
        c = bd.BoundContext(law, n, a)
        for j in range(0, n + 1, 9):
            assert bd.tail_bound_check(law, n, j, a, c)[2]

    def test_trivial_rhs(self):
        lhs, rhs, ok = bd.tail_bound_check(POISSON1, 100, 100)
        assert ok and rhs >= 1


class TestBlockLemmas:
    def test_constant_sequence(self):
        seq = Constant(1.3)
        y = np.linspace(0, 1, 50)
        for variant in ("5.1a", "5.1b"):
            lhs, rhs, ok = bd.lemma5_check(seq, variant, {"n": 50, "m": 5, "l": 10, "y": y})
            assert lhs == 0 and ok

    def test_5_3_order(self):
        lhs, rhs, ok = bd.lemma5_check(SIN.seq, "5.3", {"n": 400, "m": 4, "l": 40})
        assert ok and lhs <= rhs

    def test_5_3_domain(self):
        with pytest.raises(ValueError):
            bd.lemma5_check(SIN.seq, "5.3", {"n": 400, "m": 30, "l": 40})

    def test_5_2(self):
        t = ref.cp_pmf(1.0, 30)
        g = lambda k: np.cos(0.3 * np.asarray(k))
        assert bd.lemma5_check(SIN.seq, "5.2i", {"n": 120, "m": 6, "l": 10, "T": t, "g": g, "g_sup": 1.0})[2]
        assert bd.lemma5_check(SIN.seq, "5.2ii", {"n": 120, "m": 6, "l": 10, "T": t, "k": 70})[2]

    def test_point_indicator(self):
        from qlog.structures import weighted_sum_pmf
        t = weighted_sum_pmf(SIN, 0, 256)
        g = lambda k: (np.asarray(k) == 300).astype(float)
        assert bd.lemma5_check(SIN.seq, "5.2i", {"n": 256, "m": 8, "l": 0, "T": t, "g": g, "g_sup": 1.0})[2]

    def test_5_3_example(self):
        assert bd.lemma5_check(SIN.seq, "5.3", {"n": 1024, "m": 16, "l": 64})[2]

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            bd.lemma5_check(SIN.seq, "9.9", {"n": 10, "m": 1})

    @settings(max_examples=60, deadline=None)
    @given(hst.lists(hst.floats(0, 3), min_size=30, max_size=80), hst.integers(1, 12),
           hst.sampled_from(["5.1a", "5.1b", "5.3"]), hst.integers(0, 2 ** 31 - 1))
    def test_random_instances(self, vals, m, variant, seed):
        rng = np.random.default_rng(seed)
        n = len(vals)
        m = min(m, n // 2)
        l = int(rng.integers(2 * m, n + 1)) if variant == "5.3" else int(rng.integers(0, n))
        y = rng.normal(size=n)
        assert bd.lemma5_check(Table(tuple(vals), 1.0), variant, {"n": n, "m": m, "l": l, "y": y})[2]
