"""Exact component spectra under the conditioning relation.

For independent ``Z_1, Z_2, ...`` write ``T_{a,n} = sum_{a<i<=n} i Z_i``.  The
component counts of a size-``n`` structure have the law of ``(Z_1..Z_n)``
conditioned on ``T_{0,n} = n``, so every exact probability below is a ratio
of masses of the ``T`` laws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np

from . import pmf as pm
from .laws import ComponentLaw, Constant
from .pmf import Pmf


class DegenerateStructureError(ValueError):
    """``P[T_{0,n} = n] = 0``: no structure of size ``n`` exists."""


def weighted_sum_pmf(law: ComponentLaw, a: int, n: int, cap: int | None = None,
                     tail_tol: float = pm.DEFAULT_TAIL_TOL, max_len: int | None = None) -> Pmf:
    """Law of ``T_{a,n}`` by iterated convolution.

    Parameters
    ----------
    cap
        Keep the support inside ``[0, cap]`` exactly; mass above is recorded
        as ``tail_mass``.  ``None`` keeps the full law up to ``tail_tol``
        trimming per step.
    max_len
        Window cap for the untruncated law (default ``40 n + 64``).
    """
    if not 0 <= a <= n:
        raise ValueError("need 0 <= a <= n")
    if max_len is None:
        max_len = 40 * n + 64
    acc = pm.delta(0)
    for i in range(a + 1, n + 1):
        if law.theta_at(i) == 0:
            continue
        acc = pm.convolve(acc, pm.scale_support(law.z_pmf(i), i), tail_tol,
                          truncate_at=cap, max_len=max_len)
    return acc


def _step_row(row: np.ndarray, zprobs: np.ndarray, i: int) -> np.ndarray:
    """One convolution step on a fixed window ``[0, len(row)-1]`` with ``i Z_i``."""
    out = zprobs[0] * row
    w = len(row)
    for c in range(1, len(zprobs)):
        shift = c * i
        if shift >= w:
            break
        if zprobs[c] != 0:
            out[shift:] += zprobs[c] * row[: w - shift]
    return out


def _z_window(law: ComponentLaw, i: int, n: int) -> np.ndarray:
    """``P[Z_i = c]`` for ``c = 0..floor(n/i)``."""
    return law.z_pmf(i).values_on(0, n // i)


@dataclass
class SpectrumTable:
    """Prefix laws ``P[T_{0,b} = m]`` (``m <= n``) and the anchor ``P[T_{0,n} = n]``.

    ``store='full'`` keeps the whole ``(n+1) x (n+1)`` prefix matrix (needed for
    sampling); ``store='sparse'`` keeps only the column ``m = n`` and the masses
    ``P[T_{0,b} = n - l (b+1)]`` used by the largest-component formulas.
    """

    law: ComponentLaw
    n: int
    store: str = "full"

    def __post_init__(self):
        n = self.n
        if n < 1:
            raise ValueError("n must be positive")
        self.p0 = np.ones(n + 2)
        for i in range(1, n + 1):
            self.p0[i] = law_p0(self.law, i)
        # suffix products prod_{i>b} P[Z_i = 0], b = 0..n
        self.zero_tail = np.ones(n + 1)
        for b in range(n - 1, -1, -1):
            self.zero_tail[b] = self.zero_tail[b + 1] * self.p0[b + 1]
        row = np.zeros(n + 1)
        row[0] = 1.0
        if self.store == "full":
            self.prefix = np.zeros((n + 1, n + 1))
            self.prefix[0] = row
        elif self.store == "sparse":
            self.prefix = None
            self.at_n = np.zeros(n + 1)
            self.local = {}  # b -> masses at n - l(b+1), l = 1..
        else:
            raise ValueError("store must be 'full' or 'sparse'")
        for b in range(1, n + 1):
            if self.law.theta_at(b) != 0:
                row = _step_row(row, _z_window(self.law, b, n), b)
            if self.store == "full":
                self.prefix[b] = row
            else:
                self.at_n[b] = row[n]
                if b < n:
                    self.local[b] = row[n - (b + 1) * np.arange(1, n // (b + 1) + 1)]
        if self.store == "sparse":
            self.at_n[0] = 1.0 if n == 0 else 0.0
        self.anchor = float(row[n])
        self.degenerate = not self.anchor > 0

    def require(self):
        if self.degenerate:
            raise DegenerateStructureError(f"P[T_0,{self.n} = {self.n}] = 0")

    def prefix_row(self, b: int) -> np.ndarray:
        if self.prefix is None:
            raise ValueError("prefix rows need store='full'")
        return self.prefix[b]

    def prefix_at_n(self, b: int) -> float:
        """``P[T_{0,b} = n]``."""
        if self.prefix is not None:
            return float(self.prefix[b, self.n])
        return float(self.at_n[b])

    def suffix(self, b: int) -> np.ndarray:
        """``P[T_{b,n} = m]`` for ``m = 0..n``."""
        n = self.n
        row = np.zeros(n + 1)
        row[0] = 1.0
        for i in range(b + 1, n + 1):
            if self.law.theta_at(i) != 0:
                row = _step_row(row, _z_window(self.law, i, n), i)
        return row

    def chapman_kolmogorov(self, b: int) -> float:
        """``|sum_k P[T_{0,b}=k] P[T_{b,n}=n-k] - P[T_{0,n}=n]|``."""
        pre = self.prefix_row(b)
        suf = self.suffix(b)
        return abs(math.fsum(pre * suf[::-1]) - self.anchor)


def law_p0(law: ComponentLaw, i: int) -> float:
    return 1.0 if law.theta_at(i) == 0 else law.p0(i)


def spectrum_table(law: ComponentLaw, n: int, store: str = "full") -> SpectrumTable:
    return SpectrumTable(law, n, store)


# ---------------------------------------------------------------------------
# structure probabilities
# ---------------------------------------------------------------------------

def component_law(law: ComponentLaw, n: int, b: int, counts, table: SpectrumTable | None = None,
                  suffix: np.ndarray | None = None) -> float:
    """``P[C_1 = c_1, ..., C_b = c_b]`` for a size-``n`` structure."""
    counts = list(counts)
    if len(counts) != b:
        raise ValueError("need exactly b counts")
    if table is None:
        table = SpectrumTable(law, n, store="sparse")
    table.require()
    used = sum(i * c for i, c in enumerate(counts, 1))
    if used > n:
        return 0.0
    if suffix is None:
        suffix = table.suffix(b)
    prob = 1.0
    for i, c in enumerate(counts, 1):
        prob *= law.z_pmf(i)[c] if law.theta_at(i) != 0 else (1.0 if c == 0 else 0.0)
    return prob * suffix[n - used] / table.anchor


def sample_structures(law: ComponentLaw, table: SpectrumTable, count: int, rng) -> np.ndarray:
    """Draw ``count`` spectra ``(C_1..C_n)``; returns an integer array of shape ``(count, n)``.

    Counts are drawn from ``C_n`` down to ``C_1`` using the exact conditionals
    ``P[C_i = c | m] = P[Z_i = c] P[T_{0,i-1} = m - i c] / P[T_{0,i} = m]``,
    where ``m`` is the size not yet allocated.
    """
    table.require()
    n = table.n
    rem = np.full(count, n, dtype=np.int64)
    out = np.zeros((count, n), dtype=np.int64)
    for i in range(n, 0, -1):
        if law.theta_at(i) == 0:
            continue
        pz = _z_window(law, i, n)
        prev = table.prefix_row(i - 1)
        cs = np.arange(len(pz))
        idx = rem[:, None] - i * cs[None, :]
        w = np.where(idx >= 0, pz[None, :] * prev[np.maximum(idx, 0)], 0.0)
        tot = w.sum(axis=1)
        if np.any(tot <= 0):
            raise DegenerateStructureError("conditional law vanished during sampling")
        cum = np.cumsum(w, axis=1) / tot[:, None]
        u = rng.random(count)
        c = (cum < u[:, None]).sum(axis=1)
        c = np.minimum(c, len(pz) - 1)
        out[:, i - 1] = c
        rem -= i * c
    if np.any(rem != 0):
        raise RuntimeError("sampled spectrum does not add up to n")
    return out


def sample_structure(law: ComponentLaw, table: SpectrumTable, rng) -> np.ndarray:
    return sample_structures(law, table, 1, rng)[0]


def largest_cdf_exact(law: ComponentLaw, table: SpectrumTable, n: int, x: float) -> float:
    """``P[L <= n x]`` for the largest component size ``L``."""
    if not 0 < x <= 1:
        raise ValueError("x must lie in (0, 1]")
    table.require()
    b = min(n, int(math.floor(n * x + 1e-9 * n)))
    if b >= n:
        return 1.0
    val = table.zero_tail[b] * table.prefix_at_n(b) / table.anchor
    return min(1.0, max(0.0, val))


def largest_pmf_exact(law: ComponentLaw, table: SpectrumTable, n: int, r: int) -> float:
    """``P[L = r]``."""
    if not 1 <= r <= n:
        raise ValueError("need 1 <= r <= n")
    table.require()
    if law.theta_at(r) == 0:
        return 0.0
    pz = _z_window(law, r, n)
    ls = np.arange(1, len(pz))
    if table.prefix is not None:
        masses = table.prefix[r - 1, n - ls * r]
    else:
        masses = table.local[r - 1][: len(ls)] if r > 1 else np.where(n - ls * r == 0, 1.0, 0.0)
    return float(table.zero_tail[r] * math.fsum(pz[1:] * masses) / table.anchor)


def largest_pmf_all(law: ComponentLaw, table: SpectrumTable, n: int) -> np.ndarray:
    """``P[L = r]`` for ``r = 1..n``."""
    return np.array([largest_pmf_exact(law, table, n, r) for r in range(1, n + 1)])


# ---------------------------------------------------------------------------
# small components
# ---------------------------------------------------------------------------

def small_tv_exact(law: ComponentLaw, table: SpectrumTable, n: int, a: int) -> float:
    """``d_TV(L(C_1..C_a), L(Z_1..Z_a))`` in double precision.

    Grouping count vectors by ``k = sum_{i<=a} i c_i`` gives
    ``sum_k P[T_{0,a}=k] (1 - P[T_{a,n}=n-k]/P[T_{0,n}=n])^+``, where ``k``
    runs over every value including ``0`` and those above ``n`` (for which the
    ratio is 0).  Values far below ``1e-15`` are lost to rounding here; see
    :func:`small_tv_highprec`.
    """
    if not 1 <= a <= n:
        raise ValueError("need 1 <= a <= n")
    table.require()
    head = table.prefix_row(a) if table.prefix is not None else weighted_sum_pmf(law, 0, a, cap=n).values_on(0, n)
    suf = table.suffix(a)
    ratio = suf[n - np.arange(n + 1)] / table.anchor
    inside = math.fsum(head * np.maximum(0.0, 1.0 - ratio))
    above = max(0.0, 1.0 - math.fsum(head))
    return min(1.0, inside + above)


def _poisson_masses_mp(thetas, lo: int, hi: int, upto: int):
    """``P[T_{lo,hi} = m]`` for ``m = 0..upto`` for Poisson components, in mpmath.

    Uses ``m P(m) = sum_{lo<i<=min(m,hi)} theta_i P(m-i)``.
    """
    idx = list(range(lo + 1, hi + 1))
    p = [mpmath.mpf(0)] * (upto + 1)
    p[0] = mpmath.exp(-mpmath.fsum(thetas[i] / i for i in idx))
    const = len(set(thetas[i] for i in idx)) <= 1
    if const and idx:
        th = thetas[idx[0]]
        window = mpmath.mpf(0)  # sum of p[m-i] for lo < i <= hi
        for m in range(1, upto + 1):
            j_in = m - lo - 1
            if j_in >= 0:
                window += p[j_in]
            j_out = m - hi - 1
            if j_out >= 0:
                window -= p[j_out]
            p[m] = th * window / m
        return p
    for m in range(1, upto + 1):
        s = mpmath.fsum(thetas[i] * p[m - i] for i in idx if i <= m)
        p[m] = s / m
    return p


def small_tv_highprec(law: ComponentLaw, n: int, a: int, dps: int | None = None) -> mpmath.mpf:
    """The same total variation, evaluated in multiprecision (Poisson family only).

    For logarithmic laws the distance decays roughly like ``(a/n)^(n/a)``, far
    below double-precision resolution; the working precision defaults to
    ``(n/a) log10(n/a) + 40`` digits so that the cancellations in
    ``1 - P[T_{a,n}=n-k]/P[T_{0,n}=n]`` are resolved.
    """
    if law.family != "poisson":
        raise ValueError("multiprecision evaluation is implemented for Poisson components")
    if not 1 <= a < n:
        raise ValueError("need 1 <= a < n")
    if dps is None:
        ratio = n / a
        dps = int(ratio * math.log10(max(ratio, 2.0))) + 40
    vals = law.theta_values(n)
    with mpmath.workdps(dps):
        thetas = [None] + [mpmath.mpf(repr(float(v))) for v in vals]
        if isinstance(law.seq, Constant):
            thetas = [None] + [mpmath.mpf(repr(float(law.seq.theta)))] * n
        head = _poisson_masses_mp(thetas, 0, a, n)
        suf = _poisson_masses_mp(thetas, a, n, n)
        full = _poisson_masses_mp(thetas, 0, n, n)
        anchor = full[n]
        if anchor == 0:
            raise DegenerateStructureError(f"P[T_0,{n} = {n}] = 0")
        inside = mpmath.fsum(head[k] * max(mpmath.mpf(0), 1 - suf[n - k] / anchor) for k in range(n + 1))
        above = 1 - mpmath.fsum(head)
        return inside + max(above, mpmath.mpf(0))
