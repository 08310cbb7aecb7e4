"""Theta sequences, per-index component laws and their regularity diagnostics.

The component counts of a size-``n`` structure are modelled as independent
``Z_i`` conditioned on ``sum(i * Z_i) == n``.  Everything below is about the
unconditioned ``Z_i``: their laws, the sequence ``theta_i = i * E[Z_i]``, and
the quantities that measure how far the ``Z_i`` are from the Poisson(theta/i)
ideal (``epsilon_ik``, ``mu_i``, block-average deviation, pair overlaps).

Each ``Z_i`` may be split as a sum of ``r_i`` i.i.d. pieces ``Z_{i1}``; the
per-piece law is what the epsilon diagnostics look at.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from . import pmf as pm
from .pmf import Pmf

ZERO_SNAP = 1e-12
MU_RESIDUAL_TOL = 1e-12
MU_PIECE_TAIL = 1e-30  # truncation used for the pieces entering mu


class DivergenceError(RuntimeError):
    """The k-sum in a mu/epsilon functional could not be truncated safely."""


# ---------------------------------------------------------------------------
# theta sequences
# ---------------------------------------------------------------------------

def _snap(values: np.ndarray, theta: float) -> np.ndarray:
    tol = ZERO_SNAP * max(1.0, abs(theta))
    values = np.where(np.abs(values) < tol, 0.0, values)
    if np.any(values < 0):
        i = int(np.flatnonzero(values < 0)[0]) + 1
        raise ValueError(f"theta_{i} = {values[i - 1]!r} is negative")
    return values


class ThetaSeq:
    """Base class.  ``theta`` is the limiting (block-average) value."""

    theta: float
    kind = "abstract"

    def _raw(self, idx: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def values(self, n: int) -> np.ndarray:
        """``theta_1, ..., theta_n`` as an array of length ``n``."""
        return _snap(self._raw(np.arange(1, n + 1)), self.theta)

    def at(self, i: int) -> float:
        if i < 1:
            raise ValueError("indices start at 1")
        return float(_snap(self._raw(np.array([i])), self.theta)[0])

    def sup(self, n: int) -> float:
        return float(self.values(n).max()) if n >= 1 else 0.0

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Constant(ThetaSeq):
    theta: float
    kind = "constant"

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("theta must be positive")

    def _raw(self, idx):
        return np.full(len(idx), float(self.theta))

    def to_dict(self):
        return {"kind": "constant", "theta": self.theta}


def frequency_normalize(terms):
    """Map every frequency into ``(0, 1/2]`` without changing the integer skeleton.

    ``terms`` is a sequence of ``(amplitude, frequency, phase)`` triples.  The
    frequency is reduced to its fractional part; if that exceeds 1/2 it is
    reflected to ``1 - f`` and the phase negated, which leaves
    ``cos(2 pi f i - phi)`` unchanged at every integer ``i``.
    """
    out = []
    for lam, f, phi in terms:
        if f < 0:
            raise ValueError("frequencies must be non-negative")
        frac = f - math.floor(f)
        if frac == 0.0:
            raise ValueError(f"integer frequency {f!r} is not allowed")
        if frac > 0.5:
            frac, phi = 1.0 - frac, -phi
        out.append((float(lam), float(frac), float(phi)))
    return out


@dataclass(frozen=True)
class Sinusoid(ThetaSeq):
    """Integer skeleton of ``theta + sum_l lam_l cos(2 pi f_l t - phi_l)``."""

    theta: float
    terms: tuple = ()
    kind = "sinusoid"

    def __post_init__(self):
        if self.theta <= 0:
            raise ValueError("theta must be positive")
        terms = tuple(tuple(t) for t in frequency_normalize(self.terms))
        if any(lam < 0 for lam, _, _ in terms):
            raise ValueError("amplitudes must be non-negative")
        if sum(lam for lam, _, _ in terms) > self.theta * (1 + 1e-12):
            raise ValueError("amplitudes sum above theta would allow negative values")
        object.__setattr__(self, "terms", terms)

    @property
    def amplitude_sum(self) -> float:
        return sum(lam for lam, _, _ in self.terms)

    def _raw(self, idx):
        idx = np.asarray(idx, dtype=np.float64)
        out = np.full(idx.shape, float(self.theta))
        for lam, f, phi in self.terms:
            out += lam * np.cos(2 * np.pi * f * idx - phi)
        return out

    def to_dict(self):
        return {"kind": "sinusoid", "theta": self.theta, "terms": [list(t) for t in self.terms]}


@dataclass(frozen=True)
class Table(ThetaSeq):
    """Explicit values ``theta_1..theta_N``; ``theta`` defaults to their mean."""

    table: tuple
    theta: float = None
    kind = "table"

    def __post_init__(self):
        arr = np.asarray(self.table, dtype=float)
        if arr.ndim != 1 or len(arr) == 0:
            raise ValueError("table must be a non-empty vector")
        object.__setattr__(self, "table", tuple(float(v) for v in arr))
        if self.theta is None:
            object.__setattr__(self, "theta", float(arr.mean()))
        _snap(arr, self.theta)

    def _raw(self, idx):
        idx = np.asarray(idx)
        if len(idx) and idx.max() > len(self.table):
            raise IndexError(f"index {int(idx.max())} beyond table of length {len(self.table)}")
        return np.asarray(self.table)[idx - 1]

    def to_dict(self):
        return {"kind": "table", "values": list(self.table), "theta": self.theta}


@dataclass(frozen=True)
class Semigroup(ThetaSeq):
    """``theta_i = i p(i) q^{-i} / (1 - q^{-i})`` for prime counts ``p`` and norm base ``q``."""

    p: tuple
    q: float
    theta: float = None
    kind = "semigroup"

    def __post_init__(self):
        if not self.q > 1:
            raise ValueError("q must exceed 1")
        p = tuple(int(v) for v in self.p)
        if any(v < 0 for v in p):
            raise ValueError("prime counts must be non-negative")
        object.__setattr__(self, "p", p)
        if self.theta is None:
            object.__setattr__(self, "theta", float(np.mean(self._raw(np.arange(1, len(p) + 1)))))

    def _raw(self, idx):
        idx = np.asarray(idx)
        if len(idx) and idx.max() > len(self.p):
            raise IndexError(f"index {int(idx.max())} beyond prime-count table of length {len(self.p)}")
        pi = np.asarray(self.p, dtype=float)[idx - 1]
        # 1/(q^i - 1) through expm1 keeps full precision for small i*log(q)
        return idx * pi / np.expm1(idx * math.log(self.q))

    def to_dict(self):
        return {"kind": "semigroup", "p": list(self.p), "q": self.q, "theta": self.theta}


def _mobius(k: int) -> int:
    res, d = 1, 2
    while d * d <= k:
        if k % d == 0:
            k //= d
            if k % d == 0:
                return 0
            res = -res
        d += 1
    return -res if k > 1 else res


def irreducible_counts(q: int, n: int) -> tuple:
    """Number of monic irreducible polynomials of each degree ``1..n`` over ``F_q``.

    ``p(i) = (1/i) sum_{d | i} mobius(d) q^{i/d}``; with these prime counts
    the semigroup sequence satisfies ``theta_i -> 1``.
    """
    out = []
    for i in range(1, n + 1):
        tot = sum(_mobius(d) * q ** (i // d) for d in range(1, i + 1) if i % d == 0)
        out.append(tot // i)
    return tuple(out)


def theta_at(seq: ThetaSeq, i: int) -> float:
    return seq.at(i)


def theta_from_dict(d: dict) -> ThetaSeq:
    kind = d.get("kind")
    if kind == "constant":
        return Constant(float(d["theta"]))
    if kind == "sinusoid":
        return Sinusoid(float(d["theta"]), tuple(tuple(t) for t in d.get("terms", ())))
    if kind == "table":
        return Table(tuple(d["values"]), d.get("theta"))
    if kind == "semigroup":
        p = d["p"]
        if p == "irreducible":
            p = irreducible_counts(int(d["q"]), int(d["size"]))
        return Semigroup(tuple(p), float(d["q"]), d.get("theta"))
    raise ValueError(f"unknown theta kind {kind!r}")


def delta_m_theta(seq: ThetaSeq, m: int, theta: float | None = None, horizon: int | None = None,
                  values: np.ndarray | None = None) -> float:
    """Largest deviation of an ``m``-block average of theta_i from ``theta``.

    Only full blocks ``{jm+1, ..., (j+1)m}`` with ``(j+1)m <= horizon`` count.
    """
    if m < 1:
        raise ValueError("block size must be positive")
    if theta is None:
        theta = seq.theta
    if values is None:
        values = seq.values(horizon)
    nblocks = len(values) // m
    if nblocks == 0:
        return 0.0
    # averaging the deviations (not the values) keeps constant blocks exactly at 0
    dev = (values[: nblocks * m] - theta).reshape(nblocks, m).mean(axis=1)
    return float(np.max(np.abs(dev)))


def sinusoid_block_bound(seq: Sinusoid, m: int) -> float:
    """Trigonometric-sum bound ``sum_l lam_l / (m sin(pi f_l))`` on the block deviation."""
    return sum(lam / (m * math.sin(math.pi * f)) for lam, f, _ in seq.terms)


def jump_set(r: int, s: int, n: int) -> list[int]:
    """``{r} U {s 2^g}`` restricted to values at most ``n`` (sorted)."""
    out = {r}
    d = s
    while d <= n:
        out.add(d)
        d *= 2
    return sorted(out)


# ---------------------------------------------------------------------------
# component laws
# ---------------------------------------------------------------------------

def negbin_pmf(shape: float, x: float, tail_tol: float = pm.DEFAULT_TAIL_TOL) -> Pmf:
    """NB law with ``P[k] = C(shape+k-1, k) x^k (1-x)^shape`` for ``0 <= x < 1``.

    Computed by the ratio recursion so that tiny ``x`` (``q^{-i}`` for large
    ``i``) keeps full relative precision.
    """
    if shape == 0 or x == 0:
        return pm.delta(0)
    p0 = math.exp(shape * math.log1p(-x))
    mean = shape * x / (1 - x)
    probs = [p0]
    k = 0
    # past the mode the term ratio (shape+k) x/(k+1) is at most R = max(that, x) < 1
    # from then on, so the remaining tail is at most p_k R / (1 - R)
    while True:
        ratio = (shape + k) * x / (k + 1)
        pk = probs[-1] * ratio
        k += 1
        probs.append(pk)
        if k > mean:
            R = max((shape + k) * x / (k + 1), x)
            if R < 1 and pk * R / (1 - R) <= tail_tol:
                break
        if k > 10_000_000:
            raise DivergenceError("negative binomial window did not close")
    probs = np.array(probs)
    tail = max(0.0, 1.0 - math.fsum(probs))
    return Pmf.from_array(probs, 0, tail)


class ComponentLaw:
    """Laws of the independent ``Z_i`` together with their divisibility counts ``r_i``.

    Parameters
    ----------
    family
        ``"poisson"``: ``Z_{i1} ~ Po(theta_i / (i r_i))``.
        ``"negbin"``: ``Z_{i1} ~ NB(p(i)/r_i, q^{-i})``, theta from the semigroup.
        ``"explicit"``: per-index laws of ``Z_{i1}`` given as Pmfs.
    theta
        A :class:`ThetaSeq`.  For ``negbin`` it must be a :class:`Semigroup`;
        for ``explicit`` it is derived from the supplied pieces.
    r
        Divisibility counts (``r[i-1]`` is ``r_i``); ``None`` means all ones.
        For ``negbin`` the string ``"p"`` selects ``r_i = max(p(i), 1)``,
        i.e. geometric pieces.
    """

    def __init__(self, family: str, theta: ThetaSeq | None = None, r=None,
                 pieces: Sequence[Pmf] | None = None, tail_tol: float = pm.DEFAULT_TAIL_TOL):
        self.family = family
        self.tail_tol = tail_tol
        if family == "poisson":
            if theta is None:
                raise ValueError("poisson family needs a theta sequence")
        elif family == "negbin":
            if not isinstance(theta, Semigroup):
                raise ValueError("negbin family needs a Semigroup theta sequence")
        elif family == "explicit":
            if pieces is None:
                raise ValueError("explicit family needs per-index pieces")
            self.pieces = [p if isinstance(p, Pmf) else Pmf.from_array(p) for p in pieces]
            if any(p.lo < 0 for p in self.pieces):
                raise ValueError("component pieces must be supported on the non-negative integers")
        else:
            raise ValueError(f"unknown family {family!r}")
        self._r_spec = r
        if family == "explicit":
            rr = self._r_array(len(self.pieces))
            vals = [i * rr[i - 1] * pm.expectation(p, compensated=True) for i, p in enumerate(self.pieces, 1)]
            theta = Table(tuple(vals), theta.theta if theta is not None else None)
        self.seq = theta
        self._z1_cache: dict[int, Pmf] = {}
        self._z_cache: dict[int, Pmf] = {}
        self._theta_cache = np.zeros(0)

    # -- parameters -------------------------------------------------------

    def _r_array(self, n: int) -> np.ndarray:
        spec = self._r_spec
        if spec is None:
            return np.ones(n, dtype=np.int64)
        if isinstance(spec, str):
            if spec != "p" or self.family != "negbin":
                raise ValueError(f"unsupported r specification {spec!r}")
            return np.maximum(np.asarray(self.seq.p[:n], dtype=np.int64), 1)
        arr = np.asarray(spec, dtype=np.int64)
        if len(arr) < n:
            raise IndexError(f"r given for {len(arr)} indices, {n} needed")
        if np.any(arr[:n] < 1):
            raise ValueError("divisibility counts must be >= 1")
        return arr[:n]

    def r_at(self, i: int) -> int:
        return int(self._r_array(i)[i - 1])

    def r_values(self, n: int) -> np.ndarray:
        return self._r_array(n)

    @property
    def theta(self) -> float:
        return self.seq.theta

    def theta_values(self, n: int) -> np.ndarray:
        if len(self._theta_cache) < n:
            self._theta_cache = self.seq.values(n)
        return self._theta_cache[:n]

    def theta_at(self, i: int) -> float:
        return float(self.theta_values(i)[i - 1])

    def max_index(self) -> int | None:
        """Largest index the law is defined for (``None`` if unbounded)."""
        if self.family == "explicit":
            return len(self.pieces)
        if isinstance(self.seq, Table):
            return len(self.seq.table)
        if isinstance(self.seq, Semigroup):
            return len(self.seq.p)
        return None

    # -- per-index laws -----------------------------------------------------

    def _piece_mean(self, i: int) -> float:
        """``E[Z_{i1}] = theta_i / (i r_i)``."""
        return self.theta_at(i) / (i * self.r_at(i))

    def z1_pmf(self, i: int) -> Pmf:
        """Law of a single piece ``Z_{i1}``."""
        got = self._z1_cache.get(i)
        if got is not None:
            return got
        th = self.theta_at(i)
        if self.family == "explicit":
            out = self.pieces[i - 1]
        elif th == 0:
            out = pm.delta(0)
        elif self.family == "poisson":
            out = pm.poisson(th / (i * self.r_at(i)), self.tail_tol)
        else:
            out = negbin_pmf(self.seq.p[i - 1] / self.r_at(i), self.seq.q ** (-i), self.tail_tol)
        self._z1_cache[i] = out
        return out

    def z_pmf(self, i: int) -> Pmf:
        """Law of ``Z_i``, the ``r_i``-fold convolution of ``Z_{i1}``."""
        got = self._z_cache.get(i)
        if got is not None:
            return got
        th = self.theta_at(i)
        r = self.r_at(i)
        if th == 0:
            out = pm.delta(0)
        elif self.family == "poisson":
            out = pm.poisson(th / i, self.tail_tol)
        elif self.family == "negbin":
            out = negbin_pmf(self.seq.p[i - 1], self.seq.q ** (-i), self.tail_tol)
        else:
            out = _power(self.z1_pmf(i), r, self.tail_tol)
        self._z_cache[i] = out
        return out

    def p0(self, i: int) -> float:
        return self.z_pmf(i)[0]

    def p1(self, i: int) -> float:
        return self.z_pmf(i)[1]

    def to_dict(self) -> dict:
        d = {"family": self.family, "theta": self.seq.to_dict()}
        if self._r_spec is not None:
            d["r"] = self._r_spec if isinstance(self._r_spec, str) else [int(v) for v in self._r_spec]
        if self.family == "explicit":
            d["pieces"] = [{"offset": p.offset, "probs": [float(v) for v in p.probs]} for p in self.pieces]
        return d


def _power(p: Pmf, r: int, tail_tol: float) -> Pmf:
    """``r``-fold self-convolution by repeated squaring."""
    result = pm.delta(0)
    base = p
    while r:
        if r & 1:
            result = pm.convolve(result, base, tail_tol)
        r >>= 1
        if r:
            base = pm.convolve(base, base, tail_tol)
    return result


def law_from_dict(d: dict) -> ComponentLaw:
    family = d.get("family", "poisson")
    if family == "negbin":
        th = d.get("theta")
        seq = theta_from_dict(th) if th else theta_from_dict(
            {"kind": "semigroup", "p": d["p"], "q": d["q"], "size": d.get("size")})
        if not isinstance(seq, Semigroup):
            raise ValueError("negbin family requires semigroup parameters p and q")
        return ComponentLaw("negbin", seq, d.get("r"))
    if family == "explicit":
        pieces = [Pmf.from_array(np.asarray(p["probs"], float), int(p.get("offset", 0))) for p in d["pieces"]]
        return ComponentLaw("explicit", None, d.get("r"), pieces=pieces)
    return ComponentLaw(family, theta_from_dict(d["theta"]), d.get("r"))


def z_pmf(law: ComponentLaw, i: int) -> Pmf:
    return law.z_pmf(i)


# ---------------------------------------------------------------------------
# epsilon / mu diagnostics
# ---------------------------------------------------------------------------

def epsilon_ik(law: ComponentLaw, i: int, k: int) -> float:
    """``(i r_i / theta_i) P[Z_{i1} = k] - 1{k = 1}``; zero when theta_i = 0."""
    if k < 1:
        raise ValueError("k starts at 1")
    th = law.theta_at(i)
    if th == 0:
        return 0.0
    return i * law.r_at(i) / th * law.z1_pmf(i)[k] - (1.0 if k == 1 else 0.0)


def _z1_fine(law: ComponentLaw, j: int) -> Pmf:
    """``Z_{j1}`` with a negligible truncation tail, so the epsilon k-sums close exactly."""
    if law.family == "explicit":
        return law.z1_pmf(j)
    mean = law._piece_mean(j)
    if law.family == "poisson":
        return pm.poisson(mean, MU_PIECE_TAIL)
    return negbin_pmf(law.seq.p[j - 1] / law.r_at(j), law.seq.q ** (-j), MU_PIECE_TAIL)


def _epsilon_rows(law: ComponentLaw, lo: int, hi: int):
    """Epsilon matrix (rows j = lo..hi, columns k = 1..K) and per-row k-tail residuals."""
    rows = []
    for j in range(lo, hi + 1):
        th = law.theta_at(j)
        if th == 0:
            rows.append((np.zeros(0), 0.0))
            continue
        z1 = _z1_fine(law, j)
        scale = j * law.r_at(j) / th
        probs = z1.values_on(1, max(z1.hi, 1))
        eps = scale * probs
        eps[0] -= 1.0
        ks = np.arange(1, len(probs) + 1)
        # sum_k k P[Z_{j1}=k] equals theta_j/(j r_j) exactly, so the mass of
        # k * |eps_jk| beyond the stored window is 1 - scale * (stored part)
        resid = abs(1.0 - scale * math.fsum(ks * probs))
        rows.append((eps, resid))
    kmax = max((len(e) for e, _ in rows), default=0)
    mat = np.zeros((len(rows), max(kmax, 1)))
    for t, (e, _) in enumerate(rows):
        mat[t, : len(e)] = e
    resid = np.array([r for _, r in rows])
    return mat, resid


def mu_array(law: ComponentLaw, horizon: int, lo: int = 1) -> np.ndarray:
    """``mu_i = sum_k k sup_{i <= j <= horizon} |eps_{jk}|`` for ``i = lo..horizon``.

    Raises
    ------
    DivergenceError
        If the k-tail beyond the stored windows exceeds ``MU_RESIDUAL_TOL``.
    """
    mat, resid = _epsilon_rows(law, lo, horizon)
    if math.fsum(resid) > MU_RESIDUAL_TOL + 1e-13 * len(resid):
        j = lo + int(np.argmax(resid))
        raise DivergenceError(f"k-tail of epsilon at index {j} is {resid.max():.3g}; widen the window")
    sup = np.maximum.accumulate(np.abs(mat)[::-1], axis=0)[::-1]
    ks = np.arange(1, mat.shape[1] + 1)
    return sup @ ks


def mu_i(law: ComponentLaw, i: int, horizon: int) -> float:
    return float(mu_array(law, horizon, lo=i)[0])


def epsilon_sum(law: ComponentLaw, i: int) -> float:
    """``E_i = sum_k eps_{ik} = (i r_i / theta_i)(1 - P[Z_{i1} = 0]) - 1``."""
    th = law.theta_at(i)
    if th == 0:
        return 0.0
    z1 = _z1_fine(law, i)
    return i * law.r_at(i) / th * math.fsum(z1.values_on(1, max(z1.hi, 1))) - 1.0


def first_small_mu(law: ComponentLaw, horizon: int, mus: np.ndarray | None = None) -> int | None:
    """``i0 = min{i : mu_i <= 1/2}`` within ``[1, horizon]`` (``None`` if absent)."""
    if mus is None:
        mus = mu_array(law, horizon)
    hit = np.flatnonzero(mus <= 0.5)
    return int(hit[0]) + 1 if len(hit) else None


# ---------------------------------------------------------------------------
# overlaps and eligible sets
# ---------------------------------------------------------------------------

def q_overlap(law: ComponentLaw, i: int, d: int) -> float:
    """``min{P[X_i=0] P[X_{i+d}=i+d], P[X_i=i] P[X_{i+d}=0]}`` with ``X_i = i Z_i``."""
    if law.theta_at(i) == 0 or law.theta_at(i + d) == 0:
        return 0.0
    return min(law.p0(i) * law.p1(i + d), law.p1(i) * law.p0(i + d))


def q_tilde(law: ComponentLaw, i: int) -> float:
    """``min{P[X_i = 0], P[X_i = i]}``."""
    return min(law.p0(i), law.p1(i))


def in_E(law: ComponentLaw, i: int, d: int, psi: float) -> bool:
    return q_overlap(law, i, d) >= psi / (i + d)


def in_Eprime(seq, i: int, d: int, psi: float, i0: int = 1) -> bool:
    """``i >= i0`` and ``min(theta_i, theta_{i+d}) >= 4 psi``."""
    if isinstance(seq, ComponentLaw):
        seq = seq.seq
    return i >= i0 and min(seq.at(i), seq.at(i + d)) >= 4 * psi


def in_Etilde(law: ComponentLaw, i: int, psi: float) -> bool:
    return i % 2 == 1 and q_tilde(law, i) >= psi / i


def overlap_arrays(law: ComponentLaw, n: int):
    """``P[Z_i = 0]`` and ``P[Z_i = 1]`` for ``i = 1..n`` (index 0 unused)."""
    p0 = np.zeros(n + 1)
    p1 = np.zeros(n + 1)
    for i in range(1, n + 1):
        z = law.z_pmf(i)
        p0[i], p1[i] = z[0], z[1]
    return p0, p1


# ---------------------------------------------------------------------------
# blocking-condition witnesses
# ---------------------------------------------------------------------------

@dataclass
class QlcWitness:
    k: int
    psi: float
    d_set: list
    verified_range: tuple
    source: str = field(default="search")

    def to_dict(self):
        return {"k": self.k, "psi": self.psi, "d_set": list(self.d_set),
                "verified_range": list(self.verified_range), "source": self.source}


def _blocks_ok(vals: np.ndarray, k: int, psi: float, d_set, lo: int, hi: int, i0: int) -> bool:
    """Every full block ``{jk+1..(j+1)k}`` (j >= 1) inside ``[max(lo,i0), hi]`` meets E'(d, psi)."""
    start = max(lo, i0)
    j0 = max(1, -(-(start - 1) // k))
    j1 = hi // k - 1
    if j1 < j0:
        return True
    good_base = vals >= 4 * psi
    for d in d_set:
        idx = np.arange(j0 * k + 1, (j1 + 1) * k + 1)
        ok = good_base[idx - 1] & good_base[idx + d - 1] & (idx >= i0)
        if not ok.reshape(-1, k).any(axis=1).all():
            return False
    return True


def verify_witness(seq: ThetaSeq, w: QlcWitness, i0: int = 1) -> bool:
    """Independent re-scan of every block, one index at a time."""
    lo, hi = w.verified_range
    start = max(lo, i0)
    j = max(1, -(-(start - 1) // w.k))
    while (j + 1) * w.k <= hi:
        for d in w.d_set:
            if not any(in_Eprime(seq, i, d, w.psi, i0) for i in range(j * w.k + 1, (j + 1) * w.k + 1)):
                return False
        j += 1
    return True


def degenerate_cosine_case(seq: ThetaSeq) -> str | None:
    """Classify ``theta (1 + cos(pi t))`` (``'even'``) and ``theta (1 + cos(pi (t-1)))`` (``'odd'``).

    ``'even'`` means theta_i vanishes at every odd index, ``'odd'`` at every even one.
    """
    if not isinstance(seq, Sinusoid) or not seq.terms:
        return None
    if abs(seq.amplitude_sum - seq.theta) > 1e-12 * seq.theta:
        return None
    if any(abs(f - 0.5) > 1e-15 for _, f, _ in seq.terms):
        return None
    # with all f = 1/2, cos(pi i - phi) = (-1)^i cos(phi); the sum vanishes on a
    # parity class only if every phase is the same multiple of pi modulo 2 pi
    signs = set()
    for _, _, phi in seq.terms:
        c = math.cos(phi)
        if abs(abs(c) - 1) > 1e-12:
            return None
        signs.add(1 if c > 0 else -1)
    if len(signs) != 1:
        return None
    return "even" if signs.pop() > 0 else "odd"


def _psi2(seq: Sinusoid) -> float:
    c = (1 - math.pi ** 2 / 108) / 2
    return 0.5 * c * min(lam * (math.pi * min(f, 1 - 2 * f)) ** 2 for lam, f, _ in seq.terms)


def qlc_witness(seq: ThetaSeq, D, rng_range, i0: int = 1, k_max: int = 64,
                t_max: int = 20) -> QlcWitness | None:
    """Find block length ``k`` and ``psi`` so that every block meets ``E'(d, psi)`` for all ``d``.

    Sinusoids get the closed-form candidates first (``psi_1/8`` with ``k = 1``
    when the amplitudes leave a gap below theta, ``psi_2/8`` with ``k = 3``
    otherwise); every candidate is re-verified on the range.  The fallback
    grid scans ``k = 1..k_max`` and ``psi = 2^{-t} theta*`` for ``t = 0..t_max``,
    largest ``psi`` first.
    """
    lo, hi = rng_range
    D = sorted(set(int(d) for d in D))
    if not D:
        raise ValueError("jump set is empty")
    horizon = hi + max(D)
    vals = seq.values(horizon)
    candidates = []
    if isinstance(seq, Constant):
        candidates.append((1, seq.theta / 8, "gap"))
    elif isinstance(seq, Sinusoid):
        gap = seq.theta - seq.amplitude_sum
        if gap > 1e-12 * seq.theta:
            candidates.append((1, gap / 8, "gap"))
        else:
            psi2 = _psi2(seq)
            if psi2 > 0:
                candidates.append((3, psi2 / 8, "cosine"))
    for k, psi, src in candidates:
        if _blocks_ok(vals, k, psi, D, lo, hi, i0):
            return QlcWitness(k, psi, D, (lo, hi), src)
    theta_star = max(1.0, seq.theta, float(vals.max()))
    for k in range(1, k_max + 1):
        for t in range(t_max + 1):
            psi = theta_star * 2.0 ** (-t)
            if _blocks_ok(vals, k, psi, D, lo, hi, i0):
                return QlcWitness(k, psi, D, (lo, hi), "search")
    return None
