import math

import numpy as np
import pytest

from qlog import pmf as pm
from qlog import reference as ref
from qlog.reference import EULER_GAMMA

import oracles


class TestCompoundPoisson:
    def test_n2(self):
        q = ref.cp_pmf(1.0, 2)
        for k in range(3):
            assert q[k] == pytest.approx(math.exp(-1.5), abs=1e-15)

    @pytest.mark.parametrize("theta,n", [(0.5, 10), (1.0, 50), (2.0, 7)])
    def test_q0(self, theta, n):
        q = ref.cp_pmf(theta, n)
        assert q[0] == pytest.approx(math.exp(-theta * ref.harmonic(n)), rel=1e-14)

    @pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
    @pytest.mark.parametrize("n", range(1, 9))
    def test_brute_force(self, theta, n):
        q = ref.cp_pmf(theta, n)
        upto = 2 * n
        brute = oracles.brute_weighted_sum(lambda i, c: oracles.poisson_pmf(theta / i, c), range(1, n + 1), upto)
        for m in range(upto + 1):
            assert abs(q[m] - brute[m]) <= 1e-12

    def test_mass(self):
        q = ref.cp_pmf(1.5, 300)
        assert abs(q.total_mass() - 1) <= 1e-12
        assert q.tail_mass <= 1e-10

    def test_log_space(self):
        # theta * H_n > 700 would underflow q_0 in the direct recursion
        n, theta = 400, 120.0
        assert theta * ref.harmonic(n) > 700
        q = ref.cp_pmf(theta, n, m_max=4 * int(theta * n))
        assert abs(math.fsum(q.probs) - 1) <= 1e-10
        mean = math.fsum(k * p for k, p in zip(range(q.lo, q.hi + 1), q.probs))
        assert mean == pytest.approx(theta * n, rel=1e-8)

    def test_log_space_forced(self):
        direct = ref.cp_pmf(2.0, 50, log_space=False)
        scaled = ref.cp_pmf(2.0, 50, log_space=True)
        m = min(direct.hi, scaled.hi)
        np.testing.assert_allclose(scaled.probs[: m + 1], direct.probs[: m + 1], rtol=1e-12, atol=1e-300)

    def test_small_tail_examples(self):
        assert ref.cp_small_tail_check(1.0, 30, 30)[2]
        lhs, rhs, ok = ref.cp_small_tail_check(1.0, 100, 9)
        assert ok and rhs == pytest.approx(10 / 101)
        lhs, rhs, ok = ref.cp_small_tail_check(2.0, 50, 0)
        assert lhs == pytest.approx(math.exp(-2 * ref.harmonic(50)))
        assert ok and rhs == pytest.approx(1 / 51 ** 2)

    @pytest.mark.parametrize("theta", [0.3, 1.0, 2.5])
    def test_small_tail_sweep(self, theta):
        n = 200
        q = ref.cp_pmf(theta, n)
        for j in range(0, n + 1, 7):
            assert ref.cp_small_tail_check(theta, n, j, q)[2]


class TestRho:
    def test_initial(self):
        assert ref.rho(0.5) == 1.0
        with pytest.raises(ValueError):
            ref.rho(-0.1)

    def test_analytic(self):
        assert abs(ref.rho(2.0) - (1 - math.log(2))) <= 1e-8
        for u in np.linspace(1, 2, 11):
            assert abs(ref.rho(u) - (1 - math.log(u))) <= 1e-12
        for u in np.linspace(2, 3, 11):
            assert abs(ref.rho(u) - oracles.rho_closed_2_3(u)) <= 1e-10

    def test_series_oracle(self):
        for u in (3.0, 4.5, 6.0, 7.25, 10.0):
            exact = oracles.rho_series(u)
            assert abs(ref.rho(u) - exact) <= 1e-8 * exact


class TestDickman:
    def test_p1_at_one(self):
        s = ref.dickman(1.0)
        assert s.p_theta(1.0) == pytest.approx(math.exp(-EULER_GAMMA), abs=1e-15)
        assert s.p_theta(2.0) == pytest.approx(math.exp(-EULER_GAMMA) * (1 - math.log(2)), abs=1e-12)

    def test_p1_is_rho(self):
        s = ref.dickman(1.0)
        x = s.x[s.x <= 10]
        np.testing.assert_allclose(s.p[: len(x)] * math.exp(EULER_GAMMA), ref.rho(x), atol=1e-8)

    def test_closed_seed(self):
        for theta in (0.5, 2.0):
            s = ref.dickman(theta)
            for x in (0.1, 0.5, 1.0):
                expect = math.exp(-EULER_GAMMA * theta) * x ** (theta - 1) / math.gamma(theta)
                assert s.p_theta(x) == pytest.approx(expect, rel=1e-13)

    def test_singularity(self):
        with pytest.raises(ref.SingularityError):
            ref.dickman(0.5).p_theta(0.0)

    @pytest.mark.parametrize("theta", [0.5, 1.0, 2.0])
    def test_invariants(self, theta):
        s = ref.dickman(theta)
        assert np.max(np.abs(s.stationarity_residual())) <= 10 * s.h ** 2
        assert abs(s.total_mass() - 1) <= 1e-6
        # far-tail values sit at the level of the integration error
        assert np.all(s.p[1:] >= -1e-8)

    @pytest.mark.parametrize("theta", [0.5, 1.0])
    def test_decreasing(self, theta):
        s = ref.dickman(theta)
        seg = s.p[s.x >= 1]
        seg = seg[seg > 1e-300]
        assert np.all(np.diff(seg) < 0)

    def test_f_closed_form(self):
        s = ref.dickman(1.0)
        assert s.f_theta(0.8) == pytest.approx(1.25, rel=1e-12)
        assert s.F_theta(1.0) == 1.0
        assert s.F_theta(0.5) == pytest.approx(1 - math.log(2), abs=1e-10)

    @pytest.mark.parametrize("theta", [0.7, 1.0, 2.0])
    def test_f_integrates_to_one(self, theta):
        from scipy import integrate
        s = ref.dickman(theta)
        val, _ = integrate.quad(lambda x: float(s.f_theta(x)), 0, 1, limit=200, points=[0.5, 1 / 3, 0.25])
        assert abs(val - 1) <= 1e-4

    @pytest.mark.parametrize("theta", [0.7, 1.0, 2.0])
    def test_F_derivative(self, theta):
        s = ref.dickman(theta)
        h = 1e-5
        for x in np.linspace(0.1, 0.9, 17):
            deriv = (s.F_theta(x + h) - s.F_theta(x - h)) / (2 * h)
            assert abs(deriv - s.f_theta(x)) <= 1e-3 * max(1, abs(s.f_theta(x)))

    def test_domain(self):
        s = ref.dickman(1.0)
        with pytest.raises(ValueError):
            s.f_theta(1.5)
        with pytest.raises(ValueError):
            s.F_theta(0.0)

    def test_lattice_limit(self):
        # n cp(theta, n){floor(0.7 n)} approaches p_theta(0.7) at rate O(1/n)
        theta = 1.0
        target = ref.dickman(theta).p_theta(0.7)
        errs = []
        for n in (500, 1000, 2000):
            q = ref.cp_pmf(theta, n)
            errs.append(abs(n * q[int(0.7 * n)] - target))
        assert errs[0] > errs[1] > errs[2]
        assert errs[2] * 2000 < 5
