import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from qlog import coupling as cp
from qlog import pmf as pm
from qlog.coupling import CouplingConfig
from qlog.laws import ComponentLaw, Constant, Sinusoid
from qlog.structures import weighted_sum_pmf

POISSON1 = ComponentLaw("poisson", Constant(1.0))
SIN = ComponentLaw("poisson", Sinusoid(1.0, ((0.5, math.sqrt(2) / 10, 0.3),)))
VANISHING = ComponentLaw("poisson", Sinusoid(1.0, ((1.0, 0.5, 0.0),)))  # theta_i = 0 for odd i


class TestJumpRule:
    def test_f2(self):
        assert [cp.f2(t) for t in (1, 2, 12, -8, 7)] == [0, 1, 2, 3, 0]
        with pytest.raises(ValueError):
            cp.f2(0)

    def test_next_jump(self):
        assert cp.next_jump_size(1, 1, 2) == 1
        assert cp.next_jump_size(2, 1, 2) == 2
        assert cp.next_jump_size(4, 1, 2) == 4
        assert cp.next_jump_size(-6, 1, 2) == 2
        assert cp.next_jump_size(0, 1, 2) == 0
        assert cp.next_jump_size(5, 2, 3) == 2
        assert cp.next_jump_size(6, 2, 3) == 6

    def test_config_validation(self):
        with pytest.raises(ValueError):
            CouplingConfig(n=100, psi=0.1, r=2, s=4)
        with pytest.raises(ValueError):
            CouplingConfig(n=100, psi=0.0)
        with pytest.raises(ValueError):
            CouplingConfig(n=100, psi=0.1, a=100)
        with pytest.raises(ValueError):
            CouplingConfig(n=100, psi=0.1, strategy="greedy")


class TestPairCoupling:
    @pytest.mark.parametrize("i,d", [(1, 1), (3, 2), (10, 4), (25, 1)])
    def test_marginals_exact(self, i, d):
        table = cp.pair_coupling_table(SIN, i, d)
        assert math.fsum(p for p, _, _ in table) == pytest.approx(1.0, abs=1e-13)  # truncated tails
        xi = pm.scale_support(SIN.z_pmf(i), i)
        xj = pm.scale_support(SIN.z_pmf(i + d), i + d)
        for side in (1, 2):
            marg = Counter()
            for p, A, B in table:
                marg[A if side == 1 else B] += p
            for (u, v), p in marg.items():
                assert p == pytest.approx(xi[u] * xj[v], abs=1e-15)

    def test_swap_mass(self):
        table = cp.pair_coupling_table(POISSON1, 2, 1)
        z2, z3 = POISSON1.z_pmf(2), POISSON1.z_pmf(3)
        q = min(z2[0] * z3[1], z2[1] * z3[0])
        swaps = [p for p, A, B in table if A != B]
        assert swaps == [pytest.approx(q)] * 2

    def test_couple_pair_draw(self):
        x = cp.couple_pair(POISSON1, 2, 1, 0.0)
        assert x == (0, 3, 2, 0)


class TestTraces:
    @pytest.mark.parametrize("strategy", ["blocked", "parity"])
    def test_invariants(self, strategy):
        cfg = CouplingConfig(n=512, psi=1 / 16, a=3, strategy=strategy, seed=5, trials=200)
        for tr in cp.run_trials(SIN, cfg):
            assert tr.walk[0] == 1
            assert len(tr.walk) == len(tr.pairs) + 1
            idx = [i for i, d in tr.pairs] + [i + d for i, d in tr.pairs if d]
            assert len(set(idx)) == len(idx)
            assert all(cfg.a < j <= cfg.n for j in idx)
            for k, (i, d) in enumerate(tr.pairs):
                step = tr.walk[k + 1] - tr.walk[k]
                if d:
                    assert step in (0, d, -d)
            assert tr.success == (tr.walk[-1] == 0)
            if not tr.success:
                assert tr.fail_reason in ("index_overflow", "no_eligible_index")

    def test_blocked_jump_rule(self):
        cfg = CouplingConfig(n=512, psi=1 / 16, seed=1, trials=100)
        for tr in cp.run_trials(SIN, cfg):
            for k, (i, d) in enumerate(tr.pairs):
                assert d == cp.next_jump_size(tr.walk[k], cfg.r, cfg.s)
            assert all(tr.pairs[k][0] < tr.pairs[k + 1][0] for k in range(len(tr.pairs) - 1))

    def test_parity_after_split(self):
        cfg = CouplingConfig(n=512, psi=1 / 16, strategy="parity", seed=2, trials=100)
        for tr in cp.run_trials(SIN, cfg):
            if tr.split_index is None:
                continue
            assert tr.split_index % 2 == 1
            assert all(t % 2 == 0 for t in tr.walk[1:])
            for k, (i, d) in enumerate(tr.pairs[1:], 1):
                assert d == 1 << cp.f2(tr.walk[k])

    @pytest.mark.parametrize("strategy", ["blocked", "parity"])
    def test_materialized_sums(self, strategy):
        cfg = CouplingConfig(n=200, psi=1 / 16, strategy=strategy, seed=9)
        runner = cp.run_blocked_coupling if strategy == "blocked" else cp.run_parity_coupling
        rng = np.random.default_rng(4)
        for _ in range(200):
            tr = runner(SIN, cfg, rng, materialize=True)
            diff = 1 + int(tr.x_prime.sum()) - int(tr.x_second.sum())
            assert diff == tr.walk[-1]
            idx = np.arange(1, cfg.n + 1)
            assert np.all(tr.x_prime % idx == 0) and np.all(tr.x_second % idx == 0)

    def test_no_overlap_always_fails(self):
        # odd indices never fire, so the parity split cannot happen
        cfg = CouplingConfig(n=200, psi=1 / 16, strategy="parity", trials=50)
        assert all(not tr.success and tr.fail_reason == "no_eligible_index" for tr in cp.run_trials(VANISHING, cfg))


class TestMarginals:
    @pytest.mark.parametrize("strategy", ["blocked", "parity"])
    def test_chi_square(self, strategy):
        n, trials = 40, 4000
        cfg = CouplingConfig(n=n, psi=1 / 16, strategy=strategy)
        runner = cp.run_blocked_coupling if strategy == "blocked" else cp.run_parity_coupling
        rng = np.random.default_rng(123)
        sp, ss = [], []
        for _ in range(trials):
            tr = runner(POISSON1, cfg, rng, materialize=True)
            sp.append(int(tr.x_prime.sum()))
            ss.append(int(tr.x_second.sum()))
        law = weighted_sum_pmf(POISSON1, 0, n)
        edges = [0, 10, 20, 30, 40, 50, 60, 80, 10 ** 9]
        expect = np.array([math.fsum(law.values_on(lo, min(hi - 1, law.hi))) if lo <= law.hi else 0.0
                           for lo, hi in zip(edges[:-1], edges[1:])])
        expect = expect / expect.sum() * trials
        for sample in (sp, ss):
            obs = np.histogram(sample, bins=edges)[0]
            assert stats.chisquare(obs, expect).pvalue > 1e-4


class TestEstimates:
    def test_reproducible(self):
        cfg = CouplingConfig(n=256, psi=1 / 16, seed=17, trials=120)
        assert cp.estimate_shift_tv(SIN, cfg) == cp.estimate_shift_tv(SIN, cfg)

    def test_workers_agree(self):
        cfg = CouplingConfig(n=256, psi=1 / 16, seed=3, trials=90)
        assert cp.estimate_shift_tv(SIN, cfg, workers=1) == cp.estimate_shift_tv(SIN, cfg, workers=3)

    def test_upper_bounds_exact(self):
        n = 256
        cfg = CouplingConfig(n=n, psi=1 / 16, seed=0, trials=400)
        est, half = cp.estimate_shift_tv(POISSON1, cfg)
        exact = pm.unit_shift_tv(weighted_sum_pmf(POISSON1, 0, n)).value
        assert est + 3 * math.sqrt(max(est * (1 - est), 1e-12) / cfg.trials) >= exact

    @pytest.mark.slow
    def test_large_poisson_succeeds(self):
        cfg = CouplingConfig(n=4096, psi=1 / 16, seed=1, trials=1000)
        est, _ = cp.estimate_shift_tv(POISSON1, cfg)
        assert 1 - est > 0.9

    def test_mineka_rejected(self):
        with pytest.raises(ValueError):
            cp.estimate_shift_tv(POISSON1, CouplingConfig(n=10, psi=0.1, strategy="mineka"))


class TestMineka:
    def test_poisson(self):
        bound, total = cp.mineka_bound(POISSON1, 0, 50)
        assert total == pytest.approx(1 - math.exp(-1), rel=1e-10)
        assert bound == pytest.approx((math.pi / 2 * total) ** -0.5, rel=1e-12)

    def test_degenerate(self):
        assert cp.mineka_bound(POISSON1, 1, 50) == (math.inf, 0.0)

    def test_pairs(self):
        bound, total = cp.mineka_bound(POISSON1, 0, 50, blocking="pairs")
        assert 0 < total and bound < math.inf
        with pytest.raises(ValueError):
            cp.mineka_bound(POISSON1, 0, 50, blocking="triples")
