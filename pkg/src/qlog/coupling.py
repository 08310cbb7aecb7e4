"""Couplings of ``S_{a,n} + 1`` with ``S_{a,n}`` for sums of independent ``X_i = i Z_i``.

Two copies ``X'`` and ``X''`` are built pair by pair.  On a pair ``(i, i+d)``
the swap ``(0, i+d) <-> (i, 0)`` happens with probability ``q(i,d)`` in each
direction, changing the running difference ``T`` by ``+-d``; every other pair
is drawn identically.  If ``T`` (started at 1) reaches 0 before the indices
run out, ``1 + sum X' = sum X''`` and the coupling succeeded.  The failure
probability is an upper bound on ``d_TV(L(S), L(S+1))``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import pmf as pm
from .laws import ComponentLaw

STRATEGIES = ("blocked", "parity", "mineka")


def f2(t: int) -> int:
    """Exponent of 2 in ``|t|``."""
    t = abs(int(t))
    if t == 0:
        raise ValueError("f2 is undefined at 0")
    return (t & -t).bit_length() - 1


def next_jump_size(T_prev: int, r: int, s: int) -> int:
    """Jump size for the next pair given the current difference.

    ``r`` while ``T`` is off ``sZ``; ``s 2^{f2(T/s)}`` once ``T`` is a nonzero
    multiple of ``s``; ``0`` (identical coupling) once ``T = 0``.
    """
    if T_prev == 0:
        return 0
    if T_prev % s != 0:
        return r
    return s * (1 << f2(T_prev // s))


@dataclass
class CouplingConfig:
    n: int
    psi: float
    r: int = 1
    s: int = 2
    k: int | None = None
    a: int = 0
    strategy: str = "blocked"
    seed: int = 0
    trials: int = 1000

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if not 0 <= self.a < self.n:
            raise ValueError("need 0 <= a < n")
        if not self.psi > 0:
            raise ValueError("psi must be positive")
        if self.strategy == "blocked" and math.gcd(self.r, self.s) != 1:
            raise ValueError("r and s must be coprime")
        if self.r < 1 or self.s < 1:
            raise ValueError("r and s must be positive")

    def to_dict(self):
        return {f: getattr(self, f) for f in self.__dataclass_fields__}


@dataclass
class CouplingTrace:
    pairs: list = field(default_factory=list)  # (i, d); d = 0 marks a single antithetic index
    walk: list = field(default_factory=lambda: [1])
    tau: int | None = None
    success: bool = False
    fail_reason: str | None = None
    split_index: int | None = None
    x_prime: np.ndarray | None = None
    x_second: np.ndarray | None = None

    def to_dict(self):
        return {"pairs": [list(p) for p in self.pairs], "walk": list(self.walk), "tau": self.tau,
                "success": self.success, "fail_reason": self.fail_reason, "split_index": self.split_index}


# ---------------------------------------------------------------------------
# pair coupling
# ---------------------------------------------------------------------------

def pair_coupling_table(law: ComponentLaw, i: int, d: int):
    """Joint law of ``((X'_i, X'_{i+d}), (X''_i, X''_{i+d}))``.

    Returns a list of ``(prob, (xi', xid'), (xi'', xid''))`` entries.  The two
    swap outcomes carry ``q(i,d)`` each; the rest is the product law with
    ``q`` removed from both swap points, drawn identically in both copies.
    """
    zi, zj = law.z_pmf(i), law.z_pmf(i + d)
    pi = {i * k: p for k, p in zip(range(zi.offset, zi.hi + 1), zi.probs) if p > 0}
    pj = {(i + d) * k: p for k, p in zip(range(zj.offset, zj.hi + 1), zj.probs) if p > 0}
    q = min(pi.get(0, 0.0) * pj.get(i + d, 0.0), pi.get(i, 0.0) * pj.get(0, 0.0))
    A, B = (0, i + d), (i, 0)
    out = []
    if q > 0:
        out.append((q, A, B))
        out.append((q, B, A))
    for xi, p in pi.items():
        for xj, pp in pj.items():
            mass = p * pp
            if (xi, xj) == A or (xi, xj) == B:
                mass -= q
            if mass > 0:
                out.append((mass, (xi, xj), (xi, xj)))
    return out


def couple_pair(law: ComponentLaw, i: int, d: int, u: float, table=None):
    """Inverse-cdf draw from :func:`pair_coupling_table`; returns ``(xi', xid', xi'', xid'')``."""
    if table is None:
        table = pair_coupling_table(law, i, d)
    acc = 0.0
    for prob, a, b in table:
        acc += prob
        if u < acc:
            return a + b
    prob, a, b = table[-1]
    return a + b


# ---------------------------------------------------------------------------
# eligibility precomputation
# ---------------------------------------------------------------------------

class _Eligibility:
    """``P[Z_i=0]``, ``P[Z_i=1]`` and sorted eligible-index arrays per jump size."""

    def __init__(self, law: ComponentLaw, n: int):
        self.n = n
        self.p0 = np.ones(n + 1)
        self.p1 = np.zeros(n + 1)
        th = law.theta_values(n)
        for i in range(1, n + 1):
            if th[i - 1] > 0:
                z = law.z_pmf(i)
                self.p0[i], self.p1[i] = z[0], z[1]
        self._cache = {}

    def q(self, i, d):
        return np.minimum(self.p0[i] * self.p1[i + d], self.p1[i] * self.p0[i + d])

    def eligible(self, d: int, psi: float, a: int) -> np.ndarray:
        key = (d, psi, a)
        got = self._cache.get(key)
        if got is None:
            i = np.arange(a + 1, self.n - d + 1)
            if len(i) == 0:
                got = i
            else:
                got = i[self.q(i, d) >= psi / (i + d)]
            self._cache[key] = got
        return got


def _pick(elig: np.ndarray, after: int, d: int, used: bytearray) -> int:
    start = int(np.searchsorted(elig, after, side="right"))
    for t in range(start, len(elig)):
        i = int(elig[t])
        if not used[i] and not used[i + d]:
            return i
    return -1


# ---------------------------------------------------------------------------
# couplings
# ---------------------------------------------------------------------------

def run_blocked_coupling(law: ComponentLaw, config: CouplingConfig, rng, materialize: bool = False,
                         _elig: _Eligibility | None = None) -> CouplingTrace:
    """One run of the jump-size-adaptive pair coupling on ``(a, n]``."""
    n, a, r, s, psi = config.n, config.a, config.r, config.s, config.psi
    el = _elig if _elig is not None else _Eligibility(law, n)
    used = bytearray(n + 2)
    tr = CouplingTrace()
    T = 1
    if T % s == 0:
        tr.tau = 0
    prev = a
    while T != 0:
        d = next_jump_size(T, r, s)
        elig = el.eligible(d, psi, a)
        i = _pick(elig, prev, d, used)
        if i < 0:
            tr.fail_reason = "index_overflow" if len(elig) else "no_eligible_index"
            break
        used[i] = used[i + d] = 1
        q = float(el.q(i, d))
        u = rng.random()
        if u < q:
            T += d
        elif u < 2 * q:
            T -= d
        tr.pairs.append((i, d))
        tr.walk.append(T)
        if tr.tau is None and T % s == 0:
            tr.tau = len(tr.walk) - 1
        prev = i
    tr.success = T == 0
    if materialize:
        _materialize(law, tr, a, n, rng)
    return tr


def run_parity_coupling(law: ComponentLaw, config: CouplingConfig, rng, materialize: bool = False,
                        _elig: _Eligibility | None = None) -> CouplingTrace:
    """Antithetic single-index coupling on odd indices, then power-of-two pair jumps.

    Even indices are drawn identically.  Each odd ``i`` in turn is swapped
    ``(i, 0) <-> (0, i)`` with probability ``min(P[X_i=0], P[X_i=i])`` in each
    direction until the first swap, after which ``T`` is ``1 + i`` or
    ``1 - i``, both even.  The remaining indices are then paired with jump
    sizes ``2^{f2(T)}``.
    """
    n, a, psi = config.n, config.a, config.psi
    el = _elig if _elig is not None else _Eligibility(law, n)
    used = bytearray(n + 2)
    tr = CouplingTrace()
    T = 1
    split = None
    for i in range(a + 1, n + 1):
        used[i] = 1
        if i % 2 == 0:
            continue
        qt = min(el.p0[i], el.p1[i])
        if qt <= 0:
            continue
        u = rng.random()
        if u < 2 * qt:
            T = 1 + i if u < qt else 1 - i
            split = i
            tr.pairs.append((i, 0))
            tr.walk.append(T)
            break
    tr.split_index = split
    if split is None:
        tr.fail_reason = "no_eligible_index"
        if materialize:
            _materialize(law, tr, a, n, rng)
        return tr
    tr.tau = len(tr.walk) - 1
    prev = split
    while T != 0:
        d = 1 << f2(T)
        elig = el.eligible(d, psi, a)
        i = _pick(elig, prev, d, used)
        if i < 0:
            tr.fail_reason = "index_overflow" if len(elig) else "no_eligible_index"
            break
        used[i] = used[i + d] = 1
        q = float(el.q(i, d))
        u = rng.random()
        if u < q:
            T += d
        elif u < 2 * q:
            T -= d
        tr.pairs.append((i, d))
        tr.walk.append(T)
        prev = i
    tr.success = T == 0
    if materialize:
        _materialize(law, tr, a, n, rng)
    return tr


def _draw(law: ComponentLaw, i: int, rng) -> int:
    z = law.z_pmf(i)
    u = rng.random()
    k = int(np.searchsorted(np.cumsum(z.probs), u, side="right"))
    return i * (z.offset + min(k, len(z) - 1))


def _materialize(law: ComponentLaw, tr: CouplingTrace, a: int, n: int, rng) -> None:
    """Fill in full realizations ``X'_i, X''_i`` for ``i = a+1..n`` consistent with the trace.

    The walk is replayed: each recorded pair is drawn from its joint table
    conditioned on the recorded difference step; everything else is an
    identical draw.
    """
    xp = np.zeros(n + 1, dtype=np.int64)
    xs = np.zeros(n + 1, dtype=np.int64)
    done = np.zeros(n + 1, dtype=bool)
    done[: a + 1] = True
    for step, (i, d) in enumerate(tr.pairs):
        delta = tr.walk[step + 1] - tr.walk[step]
        if d == 0:  # single antithetic index
            z = law.z_pmf(i)
            if delta > 0:
                xp[i], xs[i] = i, 0
            elif delta < 0:
                xp[i], xs[i] = 0, i
            else:
                # residual law P - qt delta_0 - qt delta_i, identical in both copies
                qt = min(z[0], z[1])
                vals = np.arange(z.offset, z.hi + 1) * i
                w = z.probs.copy()
                w[vals == 0] -= qt
                w[vals == i] -= qt
                w = np.maximum(w, 0)
                xp[i] = xs[i] = int(rng.choice(vals, p=w / w.sum()))
            done[i] = True
            continue
        table = pair_coupling_table(law, i, d)
        want = [(p, A, B) for p, A, B in table if (A[0] + A[1]) - (B[0] + B[1]) == delta]
        tot = sum(p for p, _, _ in want)
        x = couple_pair(law, i, d, rng.random() * tot, want)
        xp[i], xp[i + d], xs[i], xs[i + d] = x
        done[i] = done[i + d] = True
    # after a failed parity split phase every odd index was consumed as identical
    for i in range(a + 1, n + 1):
        if not done[i]:
            xp[i] = xs[i] = _draw(law, i, rng)
    tr.x_prime = xp[a + 1:]
    tr.x_second = xs[a + 1:]


def _trial_rng(seed: int, trial: int):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))


def _run_chunk(args):
    law, config, start, stop = args
    el = _Eligibility(law, config.n)
    runner = run_blocked_coupling if config.strategy == "blocked" else run_parity_coupling
    fails = 0
    for t in range(start, stop):
        tr = runner(law, config, _trial_rng(config.seed, t), _elig=el)
        fails += not tr.success
    return fails


def run_trials(law: ComponentLaw, config: CouplingConfig, trials: range | None = None):
    """Traces for the given trial indices (deterministic per ``(seed, trial)``)."""
    el = _Eligibility(law, config.n)
    runner = run_blocked_coupling if config.strategy == "blocked" else run_parity_coupling
    trials = range(config.trials) if trials is None else trials
    return [runner(law, config, _trial_rng(config.seed, t), _elig=el) for t in trials]


def estimate_shift_tv(law: ComponentLaw, config: CouplingConfig, workers: int = 1):
    """Failure fraction over ``config.trials`` runs and its 95% half-width.

    Trial ``t`` always uses the stream keyed by ``(seed, t)``, and chunk
    results are summed, so the answer does not depend on ``workers``.
    """
    if config.strategy == "mineka":
        raise ValueError("the Mineka strategy has a closed-form bound; use mineka_bound")
    N = config.trials
    if workers <= 1:
        fails = _run_chunk((law, config, 0, N))
    else:
        edges = np.linspace(0, N, workers + 1).astype(int)
        jobs = [(law, config, int(edges[w]), int(edges[w + 1])) for w in range(workers)]
        with ProcessPoolExecutor(workers) as ex:
            fails = sum(ex.map(_run_chunk, jobs))
    est = fails / N
    return est, 1.96 * math.sqrt(est * (1 - est) / N)


def _u_lower(x: pm.Pmf) -> float:
    pos = x.probs > 0
    if not np.any(pos[1:] & pos[:-1]):
        return 0.0  # no two adjacent support points: D^1 = 1 exactly
    d = pm.unit_shift_tv(x)
    return max(0.0, 1.0 - d.value - d.radius)


def mineka_bound(law: ComponentLaw, a: int, n: int, blocking: str | None = None):
    """``(pi/2 sum u_i)^(-1/2)`` with ``u_i = 1 - D^1(X_i)``; returns ``(bound, sum_u)``.

    ``blocking='pairs'`` uses the blocks ``X_j = (2j-1) Z_{2j-1} + 2j Z_{2j}``
    over the indices in ``(a, n]``.  The bound is ``inf`` when ``sum_u = 0``.
    Each ``u_i`` uses the upper end of the ``D^1`` estimate, so truncated
    tails never inflate ``sum_u``.
    """
    th = law.theta_values(n)

    def xlaw(i):
        if th[i - 1] == 0:
            return pm.delta(0)
        return pm.scale_support(law.z_pmf(i), i)

    us = []
    if blocking is None:
        for i in range(a + 1, n + 1):
            us.append(_u_lower(xlaw(i)))
    elif blocking == "pairs":
        i = a + 1
        while i <= n:
            blk = xlaw(i)
            if i + 1 <= n:
                blk = pm.convolve(blk, xlaw(i + 1))
            us.append(_u_lower(blk))
            i += 2
    else:
        raise ValueError("blocking must be None or 'pairs'")
    total = math.fsum(max(0.0, u) for u in us)
    if total == 0:
        return math.inf, 0.0
    return (math.pi / 2 * total) ** -0.5, total
