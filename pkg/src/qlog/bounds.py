"""Explicit error functionals for approximating ``T_{a,n}`` and their numerical certification.

The functionals combine a handful of quantities of the component law:
``theta* = max(1, theta, sup theta_i)``, ``sigma*_n = sum max(mu_i, 1/(i r_i))``,
the block deviation ``delta(m, theta)`` and ``D^1(T_{a,n})``, the total
variation distance between ``T_{a,n}`` and ``T_{a,n} + 1``.  Every
inequality that involves no unspecified constant is checked against an
exactly computed left-hand side; inequalities carrying the unknown
constant ``c''(theta)`` are evaluated with that constant as an input and
reported, never asserted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import pmf as pm
from .laws import ComponentLaw, ThetaSeq, delta_m_theta, mu_array
from .pmf import Pmf
from .reference import cp_pmf, dickman
from .structures import weighted_sum_pmf

CHECK_TOL = 1e-10


def m_grid(n: int) -> list[int]:
    """Powers of two ``1, 2, 4, ...`` not exceeding ``n``."""
    out, m = [], 1
    while m <= n:
        out.append(m)
        m *= 2
    return out


class BoundContext:
    """Quantities shared by every functional at one ``(law, n, a)``.

    The law of ``T_{a,n}``, its ``D^1``, the ``mu_i`` over ``[1, n]`` and the
    block deviations are computed once and reused.
    """

    def __init__(self, law: ComponentLaw, n: int, a: int = 0, t_pmf: Pmf | None = None):
        if not 0 <= a < n:
            raise ValueError("need 0 <= a < n")
        self.law, self.n, self.a = law, n, a
        self.theta = law.theta
        self.thetas = law.theta_values(n)
        self.r = law.r_values(n)
        self._t = t_pmf
        self._d1 = None
        self._mu = None
        self._delta = {}

    @property
    def t(self) -> Pmf:
        if self._t is None:
            self._t = weighted_sum_pmf(self.law, self.a, self.n)
        return self._t

    @property
    def d1(self) -> float:
        if self._d1 is None:
            self._d1 = pm.unit_shift_tv(self.t).value
        return self._d1

    @property
    def mu(self) -> np.ndarray:
        """``mu_1..mu_n`` with the sup over ``j`` taken on ``[i, n]``."""
        if self._mu is None:
            self._mu = mu_array(self.law, self.n)
        return self._mu

    @property
    def theta_star(self) -> float:
        return max(1.0, self.theta, float(self.thetas.max()))

    @property
    def sigma_star(self) -> float:
        i = np.arange(1, self.n + 1)
        return math.fsum(np.maximum(self.mu, 1.0 / (i * self.r)))

    def delta(self, m: int) -> float:
        if m not in self._delta:
            self._delta[m] = delta_m_theta(self.law.seq, m, self.theta, values=self.thetas)
        return self._delta[m]


def _ctx(law, n, a, ctx):
    if ctx is not None:
        if (ctx.law is not law) or ctx.n != n or ctx.a != a:
            raise ValueError("context built for a different (law, n, a)")
        return ctx
    return BoundContext(law, n, a)


def theta_star(law: ComponentLaw, n: int) -> float:
    """``max(1, theta, max_{i <= n} theta_i)``."""
    return max(1.0, law.theta, float(law.theta_values(n).max()))


def sigma_star(law: ComponentLaw, n: int, mus: np.ndarray | None = None) -> float:
    """``sum_{i <= n} max(mu_i, 1/(i r_i))``."""
    if mus is None:
        mus = mu_array(law, n)
    i = np.arange(1, n + 1)
    return math.fsum(np.maximum(mus[:n], 1.0 / (i * law.r_values(n))))


def d1(law: ComponentLaw, n: int, a: int = 0) -> float:
    """``D^1(T_{a,n})`` from the exact law."""
    return pm.unit_shift_tv(weighted_sum_pmf(law, a, n)).value


# ---------------------------------------------------------------------------
# epsilon functionals
# ---------------------------------------------------------------------------

def eps1(law: ComponentLaw, n: int, a: int, m: int, ctx: BoundContext | None = None) -> float:
    """``(1/4) theta* m D^1 + delta(m, theta) + theta* (5 theta* sigma*_n + 2m + a) / n``."""
    c = _ctx(law, n, a, ctx)
    ts = c.theta_star
    return 0.25 * ts * m * c.d1 + c.delta(m) + ts * (5 * ts * c.sigma_star + 2 * m + a) / n


def eps1_min(law: ComponentLaw, n: int, a: int, ctx: BoundContext | None = None, ms=None):
    """Minimum of :func:`eps1` over ``ms`` (default powers of two up to ``n``); returns ``(value, m)``."""
    c = _ctx(law, n, a, ctx)
    vals = [(eps1(law, n, a, m, c), m) for m in (ms or m_grid(n))]
    return min(vals)


def l0_index(law: ComponentLaw, n: int) -> int:
    """Smallest ``l0`` with ``P[Z_{l1} = 0] >= 1/2`` for every ``l0 <= l <= n``.

    Raises
    ------
    ValueError
        If ``P[Z_{n1} = 0] < 1/2``, so no such index exists inside ``[1, n]``.
    """
    bad = 0
    for l in range(1, n + 1):
        if law.z1_pmf(l)[0] < 0.5:
            bad = l
    if bad == n:
        raise ValueError("l0 undefined: P[Z_{n1}=0] < 1/2")
    return bad + 1


def c_l0(law: ComponentLaw, l0: int) -> float:
    """``1 / min_{l <= l0} max_{j >= 1} P[Z_{l1} = j]`` over indices with ``theta_l > 0``.

    Indices with ``theta_l = 0`` have ``Z_l = 0`` and never enter the
    estimates that use this constant.
    """
    best = math.inf
    th = law.theta_values(l0)
    for l in range(1, l0 + 1):
        if th[l - 1] == 0:
            continue
        z = law.z1_pmf(l)
        best = min(best, float(z.values_on(1, max(z.hi, 1)).max()))
    return 1.0 / best if best < math.inf else 1.0


def _l_grid(l0: int, n: int, full: bool) -> list[int]:
    if full:
        return list(range(l0, n + 1))
    out, l = [], l0
    while l <= n:
        out.append(l)
        l *= 2
    if out[-1] != n:
        out.append(n)
    return out


def eps2_l_term(law: ComponentLaw, n: int, a: int, ctx: BoundContext | None = None, full_scan: bool = False):
    """``theta* min_{l >= l0} {...}``, the part of ``eps2`` that does not depend on ``m``.

    Returns ``(value, l_argmin, l0, C(l0))``.
    """
    c = _ctx(law, n, a, ctx)
    l0 = l0_index(law, n)
    C = max(c_l0(law, l0), 2.0)
    i = np.arange(1, n + 1)
    w = 1.0 / (i * c.r)
    mu = c.mu
    per_i = C * (2 * w * (1 + mu) + mu) * c.d1
    prefix = np.concatenate([[0.0], np.cumsum(per_i)])  # prefix[l-1] = sum_{i<l}
    best = None
    for l in _l_grid(l0, n, full_scan):
        v = prefix[l - 1] + 4 * (w[l - 1] * (1 + mu[l - 1]) + mu[l - 1])
        if best is None or v < best[0]:
            best = (v, l)
    return c.theta_star * best[0], best[1], l0, C


def eps2(law: ComponentLaw, n: int, a: int, m: int, ctx: BoundContext | None = None, full_scan: bool = False) -> float:
    c = _ctx(law, n, a, ctx)
    lt = eps2_l_term(law, n, a, c, full_scan)[0]
    ts = c.theta_star
    return lt + m * ts * (2 + m / 6) * c.d1 + c.delta(m)


def eps2_min(law: ComponentLaw, n: int, a: int, ctx: BoundContext | None = None, ms=None, full_scan: bool = False):
    c = _ctx(law, n, a, ctx)
    lt = eps2_l_term(law, n, a, c, full_scan)[0]
    ts = c.theta_star
    vals = [(lt + m * ts * (2 + m / 6) * c.d1 + c.delta(m), m) for m in (ms or m_grid(n))]
    return min(vals)


def eps4(law: ComponentLaw, n: int, a: int, m: int, ctx: BoundContext | None = None,
         e1: float | None = None) -> float:
    """``4 e^{1+theta*} eps1^{theta/(4+theta)}``."""
    c = _ctx(law, n, a, ctx) if e1 is None else ctx
    if e1 is None:
        e1 = eps1(law, n, a, m, c)
    ts = c.theta_star if c is not None else theta_star(law, n)
    th = law.theta
    return 4 * math.exp(1 + ts) * e1 ** (th / (4 + th))


def _c2_term(theta: float, n: int, a: int, c2: float) -> float:
    return c2 * ((a + 1) / n) ** min(theta, 1.0)


def eps5(law: ComponentLaw, n: int, a: int, m: int, r: int, c2: float = 1.0,
         ctx: BoundContext | None = None) -> float:
    """``(n/r){2 theta(1+theta)(n/r) eps1 + eps2 + theta eps4 + c'' ((a+1)/n)^{theta ^ 1}}``.

    ``c2`` stands in for the unspecified constant ``c''(theta)``; the value is
    a diagnostic, not a certified bound.
    """
    c = _ctx(law, n, a, ctx)
    th = law.theta
    e1 = eps1(law, n, a, m, c)
    return (n / r) * (2 * th * (1 + th) * (n / r) * e1 + eps2(law, n, a, m, c)
                      + th * eps4(law, n, a, m, c, e1) + _c2_term(th, n, a, c2))


def eps5_prime(law: ComponentLaw, n: int, a: int, m: int, c2: float = 1.0,
               ctx: BoundContext | None = None) -> float:
    """``2{eps2 + 4 theta(1+theta) eps1 / n + c'' ((a+1)/n)^{theta ^ 1}}``, with ``c2`` for ``c''``.

    Evaluated exactly as displayed alongside the local bound; see the
    project notes for how it relates to :func:`eps5` on ``n/2 <= r <= n``.
    Not certified, because of ``c''``.
    """
    c = _ctx(law, n, a, ctx)
    th = law.theta
    return 2 * (eps2(law, n, a, m, c) + 4 * th * (1 + th) * eps1(law, n, a, m, c) / n
                + _c2_term(th, n, a, c2))


def eps5_prime_min(law, n, a, c2=1.0, ctx=None, ms=None):
    c = _ctx(law, n, a, ctx)
    return min((eps5_prime(law, n, a, m, c2, c), m) for m in (ms or m_grid(n)))


# ---------------------------------------------------------------------------
# exact left-hand sides
# ---------------------------------------------------------------------------

def delta1_pmf(t: Pmf, theta: float, n: int, a: int, r) -> np.ndarray:
    """``Delta_1(r) = theta P[r-n <= T < r-a] - r P[T = r]`` for an arbitrary lattice law ``T``."""
    r = np.atleast_1d(np.asarray(r, dtype=np.int64))
    # P[lo <= T <= hi] = F(hi) - F(lo - 1)
    hi = _cdf_at(t, r - a - 1)
    lo = _cdf_at(t, r - n - 1)
    return theta * (hi - lo) - r * _pmf_at(t, r)


def _cdf_at(t: Pmf, js: np.ndarray) -> np.ndarray:
    F = np.concatenate([[0.0], np.cumsum(t.probs)])
    pos = np.clip(js - t.offset + 1, 0, len(t.probs))
    return F[pos]


def _pmf_at(t: Pmf, js: np.ndarray) -> np.ndarray:
    pos = js - t.offset
    ok = (pos >= 0) & (pos < len(t.probs))
    out = np.zeros(len(js))
    out[ok] = t.probs[pos[ok]]
    return out


def delta1(law: ComponentLaw, table, n: int, a: int, r, ctx: BoundContext | None = None) -> np.ndarray:
    """Exact ``Delta_1(r)`` for ``T_{a,n}`` (``table`` is accepted for interface symmetry)."""
    c = _ctx(law, n, a, ctx)
    return delta1_pmf(c.t, law.theta, n, a, r)


@dataclass
class BoundReport:
    n: int
    a: int
    m: int
    theta_star: float
    sigma_star_n: float
    delta_m: float
    d1: float
    eps1: float
    eps2: float | None = None
    eps4: float | None = None
    eps5_prime: float | None = None
    lhs: dict = field(default_factory=dict)
    rhs: dict = field(default_factory=dict)
    passes: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    constants_mode: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.passes.values())

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _report(c: BoundContext) -> BoundReport:
    e1, m = eps1_min(c.law, c.n, c.a, c)
    return BoundReport(n=c.n, a=c.a, m=m, theta_star=c.theta_star, sigma_star_n=c.sigma_star,
                       delta_m=c.delta(m), d1=c.d1, eps1=e1)


def verify_global(law: ComponentLaw, n: int, a: int = 0, ctx: BoundContext | None = None,
                  scaled: bool = True) -> BoundReport:
    """Check ``d_W(L(T_{a,n}), cp(theta, n)) <= n min_m eps1`` on exact laws.

    The lattice Wasserstein distance carries a truncation radius, which is
    added to the right-hand side.  With ``scaled`` the distance of
    ``T_{a,n}/n`` to the Dickman law is reported next to
    ``(1+theta)^2/n + min_m eps1`` as a diagnostic (its ``(1+theta)^2/n``
    part is quoted, not derived here).
    """
    c = _ctx(law, n, a, ctx)
    rep = _report(c)
    cp = cp_pmf(law.theta, n)
    w = pm.wasserstein(c.t, cp)
    rhs = n * rep.eps1
    rep.lhs["wasserstein_cp"] = w.value
    rep.rhs["wasserstein_cp"] = rhs
    rep.diagnostics["wasserstein_cp_radius"] = w.radius
    rep.passes["wasserstein_cp"] = bool(w.value <= rhs + w.radius)
    if scaled:
        solver = dickman(law.theta)
        ws = pm.wasserstein_scaled(c.t, n, solver.cdf, x_max=solver.x_max)
        rep.diagnostics["wasserstein_dickman"] = ws
        rep.diagnostics["wasserstein_dickman_bound"] = (1 + law.theta) ** 2 / n + rep.eps1
        rep.constants_mode["wasserstein_dickman"] = "bound quoted from the compound Poisson to Dickman estimate; not asserted"
    return rep


def verify_local(law: ComponentLaw, table, n: int, a: int = 0, r_range=None, ss=None,
                 ctx: BoundContext | None = None, c2: float = 0.0) -> BoundReport:
    """Check ``|Delta_1(r)| <= min_m eps2`` on ``r_range`` and the distribution-function bound.

    The second certified inequality is
    ``|P[T < s] - cp(theta, n){[0, s-1]}| <= (1+theta) n min_m eps1 / s`` for
    each ``s`` in ``ss`` (default ``n/4`` and ``n/2``).  The local error
    ``sup_r |n P[T=r] - p_theta(r/n)|`` is reported as a diagnostic next to
    ``min_m eps5'`` evaluated with ``c'' = c2`` (default 0, i.e. excluded).
    """
    c = _ctx(law, n, a, ctx)
    if r_range is None:
        r_range = range(max(n // 2, 2 * a + 1), n + 1)
    r = np.asarray(list(r_range), dtype=np.int64)
    if len(r) and r.min() < 2 * a + 1:
        raise ValueError("local bounds need r >= 2a + 1")
    if ss is None:
        ss = (max(n // 4, 1), max(n // 2, 1))
    rep = _report(c)
    e2, m2 = eps2_min(law, n, a, c)
    rep.eps2 = e2
    rep.eps4 = eps4(law, n, a, rep.m, c, rep.eps1)
    rep.eps5_prime = eps5_prime_min(law, n, a, c2, c)[0]
    rep.constants_mode["eps5_prime"] = f"c''(theta) set to {c2} (not certified)"
    d = np.abs(delta1_pmf(c.t, law.theta, n, a, r))
    rep.lhs["delta1_sup"] = float(d.max()) if len(d) else 0.0
    rep.rhs["delta1_sup"] = e2
    rep.diagnostics["delta1_m"] = m2
    rep.passes["delta1"] = bool(rep.lhs["delta1_sup"] <= e2 + CHECK_TOL)
    cp = cp_pmf(law.theta, n)
    for s in ss:
        lhs = abs(pm.cdf(c.t, s - 1) - pm.cdf(cp, s - 1))
        rhs = (1 + law.theta) * n * rep.eps1 / s
        key = f"cdf_s{s}"
        rep.lhs[key], rep.rhs[key] = lhs, rhs
        rep.passes[key] = bool(lhs <= rhs + c.t.tail_mass + cp.tail_mass + CHECK_TOL)
    solver = dickman(law.theta)
    pts = _pmf_at(c.t, r)
    dens = np.array([solver.p_theta(k / n) for k in r])
    rep.diagnostics["local_sup_error"] = float(np.max(np.abs(n * pts - dens))) if len(r) else 0.0
    return rep


def local_sup_error(law: ComponentLaw, n: int, a: int = 0, lo: float = 0.5, hi: float = 1.0,
                    t_pmf: Pmf | None = None) -> float:
    """``max |n P[T_{a,n} = r] - p_theta(r/n)|`` over ``lo n <= r <= hi n``."""
    t = t_pmf if t_pmf is not None else weighted_sum_pmf(law, a, n)
    solver = dickman(law.theta)
    rs = np.arange(math.ceil(lo * n), math.floor(hi * n) + 1)
    return max(abs(n * t[int(k)] - solver.p_theta(k / n)) for k in rs)


def tail_threshold(law: ComponentLaw, n: int, ctx: BoundContext | None = None) -> int:
    """Smallest ``j0`` with ``mu_{j+1} <= 1/2`` and ``delta(floor(j/2), theta) <= theta/2`` for all ``j0 <= j < n``.

    Returns ``n`` when no smaller index qualifies (the bound is then trivial).
    ``j`` below 2 (block size zero) never qualifies.
    """
    mu = ctx.mu if ctx is not None else mu_array(law, n)
    vals = law.theta_values(n)
    th = law.theta
    good = np.zeros(n, dtype=bool)
    for j in range(2, n):
        good[j] = mu[j] <= 0.5 and delta_m_theta(law.seq, j // 2, th, values=vals) <= th / 2
    j0 = n
    for j in range(n - 1, -1, -1):
        if not good[j]:
            break
        j0 = j
    return j0


def tail_bound_check(law: ComponentLaw, n: int, j: int, a: int = 0, ctx: BoundContext | None = None):
    """``P[T_{a,n} <= j]`` against ``2 e^{1+theta*} ((j_eff + 1)/(n+1))^{theta/4}``.

    ``j_eff = max(j, j0, a)``: below ``a`` the event only involves indices
    above ``a``, so the product bound starts there.  Returns ``(lhs, rhs, pass)``.
    """
    c = _ctx(law, n, a, ctx)
    j0 = tail_threshold(law, n, c)
    je = max(j, j0, a)
    lhs = pm.cdf(c.t, j)
    rhs = 2 * math.exp(1 + c.theta_star) * ((je + 1) / (n + 1)) ** (law.theta / 4)
    return lhs, rhs, bool(lhs <= rhs + CHECK_TOL)


# ---------------------------------------------------------------------------
# block lemmas
# ---------------------------------------------------------------------------

def _seq_params(seq, n, theta):
    vals = seq.values(n) if isinstance(seq, ThetaSeq) else np.asarray(seq, dtype=float)[:n]
    if theta is None:
        theta = seq.theta if isinstance(seq, ThetaSeq) else float(np.mean(vals))
    t_sub = float(vals.max())
    return vals, float(theta), t_sub, max(float(theta), t_sub)


def lemma5_check(seq, variant: str, params: dict):
    """Evaluate both sides of one block-averaging inequality; returns ``(lhs, rhs, pass)``.

    ``params`` always holds ``n`` and ``m`` (and optionally ``theta``):

    ``"5.1a"``/``"5.1b"``: ``l`` and a vector ``y`` of length ``n``
    (``y[i-1]`` is ``y_i``); bounds ``|sum_{i=l+1}^n (theta_i - theta) y_i|``.
    ``"5.2i"``: ``l``, a lattice law ``T`` and a vectorized bounded ``g``.
    ``"5.2ii"``: ``l``, ``T`` and a point ``k``.
    ``"5.3"``: ``l`` with ``0 < 2m <= l <= n``; both displayed right-hand
    sides are checked and the smaller is returned.
    """
    n, m = int(params["n"]), int(params["m"])
    vals, th, t_sub, t_pr = _seq_params(seq, n, params.get("theta"))
    dlt = delta_m_theta(None, m, th, values=vals)
    l = int(params.get("l", 0))
    dev = vals - th
    idx = np.arange(1, n + 1)
    if variant in ("5.1a", "5.1b"):
        y = np.asarray(params["y"], dtype=float)[:n]
        lhs = abs(math.fsum(dev[l:] * y[l:]))
        ynorm = float(np.max(np.abs(y[l:])))
        if variant == "5.1a":
            dy = float(np.max(np.abs(np.diff(y[l:])))) if n - l >= 2 else 0.0
            rhs = (2 * m * t_pr + n * dlt) * ynorm + t_sub * (n * m / 8) * dy
        else:
            rhs = 2 * m * t_pr * ynorm + dlt * math.fsum(np.abs(y)) + t_sub / m * _block_variation(y, m, n)
    elif variant == "5.2i":
        T, g = params["T"], params["g"]
        ks = np.arange(T.lo, T.hi + 1)
        y = np.array([math.fsum(T.probs * g(ks + i)) for i in idx])
        gsup = float(params.get("g_sup", np.max(np.abs(g(np.arange(0, T.hi + n + 1))))))
        lhs = abs(math.fsum(dev[l:] * y[l:]))
        rhs = gsup * (2 * t_pr * m + n * dlt + 0.25 * t_sub * m * n * pm.unit_shift_tv(T).value)
    elif variant == "5.2ii":
        T, k = params["T"], int(params["k"])
        y = np.array([T[k - i] for i in idx])
        lhs = abs(math.fsum(dev[l:] * y[l:]))
        rhs = dlt + m * (2 * t_pr + t_sub * m / 6) * pm.unit_shift_tv(T).value
    elif variant == "5.3":
        if not 0 < 2 * m <= l <= n:
            raise ValueError("need 0 < 2m <= l <= n")
        s = abs(math.fsum(dev[l:] / idx[l:]))
        lhs = s  # compare logarithms: exp is monotone
        r1 = 2 * m * (1 + t_sub) / l + dlt * math.log(n / l)
        r2 = 1 + t_sub + dlt * math.log(n / l)
        rhs = min(r1, r2)
        ok = lhs <= r1 + CHECK_TOL and r1 <= r2 + CHECK_TOL
        return math.exp(lhs), math.exp(rhs), bool(ok)
    else:
        raise ValueError(f"unknown lemma variant {variant!r}")
    return lhs, rhs, bool(lhs <= rhs + CHECK_TOL)


def _block_variation(y: np.ndarray, m: int, n: int) -> float:
    """``sum_{l, l'} sum_{j=1}^{floor(n/m)-1} |y_{jm+l} - y_{jm+l'}|``."""
    nb = n // m
    if nb < 2:
        return 0.0
    blocks = y[m: nb * m].reshape(nb - 1, m)
    return float(np.abs(blocks[:, :, None] - blocks[:, None, :]).sum())


# ---------------------------------------------------------------------------
# small-component diagnostics
# ---------------------------------------------------------------------------

def eps6_components(law: ComponentLaw, n: int, a: int, c2: float = 1.0, ctx=None) -> dict:
    """Order-of-magnitude terms of the small-component distance (no pass flag).

    ``a/n``; ``min_m eps5'(n, a, m)``; and
    ``min{min_m eps2(a, 0, m), a D^1(T_{a,n})}``, where ``eps2(a, 0, m)``
    refers to the structure of size ``a``.
    """
    first = a / n
    if a == 0:
        c = _ctx(law, n, 0, ctx)
        return {"a_over_n": 0.0, "eps5_prime_min": eps5_prime_min(law, n, 0, c2, c)[0], "third": 0.0,
                "eps2_small": None, "a_d1": 0.0}
    c = _ctx(law, n, a, ctx)
    second = eps5_prime_min(law, n, a, c2, c)[0]
    a_d1 = a * c.d1
    try:
        e2s = eps2_min(law, a, 0)[0] if a >= 1 else math.inf
    except ValueError:
        e2s = math.inf  # l0 undefined inside [1, a]
    return {"a_over_n": first, "eps5_prime_min": second, "third": min(e2s, a_d1),
            "eps2_small": None if math.isinf(e2s) else e2s, "a_d1": a_d1}
