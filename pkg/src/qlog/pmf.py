"""Finite lattice probability mass functions with tail bookkeeping.

A :class:`Pmf` stores the masses of an integer-valued law on a contiguous
window ``offset, offset+1, ..., offset+len(probs)-1``.  Mass that was cut
off (always from the *upper* end, since every law built here is bounded
below) is recorded in ``tail_mass``.  Because all the laws of interest are
supported on the non-negative integers, cutting the upper tail never
perturbs the stored entries: they are exact lower bounds, and the total
deficit is ``tail_mass``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import stats

DEFAULT_TAIL_TOL = 1e-14
NORMALIZATION_TOL = 1e-12


class WindowOverflowError(RuntimeError):
    """The stored window would exceed the configured support cap."""


class Estimate(NamedTuple):
    """A point value together with a tail-derived uncertainty radius."""

    value: float
    radius: float

    def __float__(self) -> float:
        return float(self.value)


@dataclass(frozen=True)
class Pmf:
    offset: int
    probs: np.ndarray
    tail_mass: float = 0.0
    subprob: bool = field(default=False, compare=False)

    def __post_init__(self):
        probs = np.ascontiguousarray(self.probs, dtype=np.float64)
        if probs.ndim != 1:
            raise ValueError("probs must be one-dimensional")
        if np.any(probs < 0):
            raise ValueError("probabilities must be non-negative")
        if self.tail_mass < 0 or self.tail_mass > 1 + NORMALIZATION_TOL:
            raise ValueError(f"tail_mass {self.tail_mass} outside [0, 1]")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "offset", int(self.offset))
        object.__setattr__(self, "tail_mass", float(self.tail_mass))
        if not self.subprob:
            total = self.total_mass()
            if abs(total - 1.0) > NORMALIZATION_TOL * max(1, len(probs)) ** 0.5 + 1e-12:
                raise ValueError(f"mass {total!r} is not 1; pass subprob=True for sub-probability objects")

    # -- construction -----------------------------------------------------

    @classmethod
    def from_array(cls, probs, offset: int = 0, tail_mass: float = 0.0, subprob: bool = False) -> "Pmf":
        """Build a Pmf, dropping exact zeros at both ends of the window."""
        probs = np.asarray(probs, dtype=np.float64)
        nz = np.flatnonzero(probs)
        if len(nz) == 0:
            return cls(0, np.zeros(0), tail_mass, subprob=subprob)
        return cls(offset + int(nz[0]), probs[nz[0]: nz[-1] + 1], tail_mass, subprob=subprob)

    @property
    def lo(self) -> int:
        return self.offset

    @property
    def hi(self) -> int:
        """Largest stored support point (``lo - 1`` for the empty window)."""
        return self.offset + len(self.probs) - 1

    def __len__(self) -> int:
        return len(self.probs)

    def total_mass(self) -> float:
        return math.fsum(self.probs) + self.tail_mass

    def __getitem__(self, k: int) -> float:
        j = k - self.offset
        if 0 <= j < len(self.probs):
            return float(self.probs[j])
        return 0.0

    def values_on(self, lo: int, hi: int) -> np.ndarray:
        """Masses at ``lo..hi`` inclusive, zero outside the window."""
        out = np.zeros(hi - lo + 1)
        a, b = max(lo, self.lo), min(hi, self.hi)
        if a <= b:
            out[a - lo: b - lo + 1] = self.probs[a - self.offset: b - self.offset + 1]
        return out

    # -- serialization ----------------------------------------------------

    def to_json(self) -> str:
        return json.dumps({"offset": self.offset, "probs": [float(p) for p in self.probs],
                           "tail_mass": self.tail_mass})

    @classmethod
    def from_json(cls, text: str) -> "Pmf":
        d = json.loads(text)
        return cls(d["offset"], np.asarray(d["probs"], dtype=float), d.get("tail_mass", 0.0))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "prob"])
        for k, p in enumerate(self.probs):
            w.writerow([self.offset + k, format(float(p), ".17g")])
        return buf.getvalue()


# -- elementary laws ------------------------------------------------------

def delta(k: int = 0) -> Pmf:
    return Pmf(k, np.ones(1))


def bernoulli(p: float) -> Pmf:
    return Pmf.from_array([1.0 - p, p])


def uniform(lo: int, hi: int) -> Pmf:
    m = hi - lo + 1
    return Pmf(lo, np.full(m, 1.0 / m))


def poisson(lam: float, tail_tol: float = DEFAULT_TAIL_TOL) -> Pmf:
    """Po(lam) on the shortest window ``0..K`` whose upper tail is below ``tail_tol``."""
    if lam < 0:
        raise ValueError("negative Poisson mean")
    if lam == 0:
        return delta(0)
    k = int(lam + 10 * math.sqrt(lam) + 10)
    while stats.poisson.sf(k, lam) > tail_tol:
        k *= 2
    ks = np.arange(k + 1)
    sf = stats.poisson.sf(ks, lam)
    kmax = int(np.argmax(sf <= tail_tol))
    return Pmf(0, stats.poisson.pmf(np.arange(kmax + 1), lam), float(sf[kmax]))


# -- transformations ------------------------------------------------------

def shift(p: Pmf, c: int) -> Pmf:
    return Pmf(p.offset + c, p.probs, p.tail_mass, subprob=p.subprob)


def scale_support(p: Pmf, i: int) -> Pmf:
    """Law of ``i * X`` for ``X ~ p``, on the full lattice (zeros in between)."""
    if i < 1:
        raise ValueError("scale factor must be a positive integer")
    if i == 1 or len(p) == 0:
        return Pmf(p.offset * i, p.probs, p.tail_mass, subprob=p.subprob)
    out = np.zeros((len(p) - 1) * i + 1)
    out[::i] = p.probs
    return Pmf(p.offset * i, out, p.tail_mass, subprob=p.subprob)


def trim_upper(probs: np.ndarray, tail_tol: float) -> tuple[np.ndarray, float]:
    """Drop the longest upper segment of total mass at most ``tail_tol``."""
    if tail_tol <= 0 or len(probs) == 0:
        return probs, 0.0
    rev = np.cumsum(probs[::-1])
    cut = int(np.searchsorted(rev, tail_tol, side="right"))
    if cut == 0:
        return probs, 0.0
    return probs[: len(probs) - cut], float(rev[cut - 1])


def _sparse_convolve(a: np.ndarray, b: np.ndarray, out_len: int) -> np.ndarray:
    out = np.zeros(out_len)
    for k in np.flatnonzero(b):
        if k >= out_len:
            break
        m = min(len(a), out_len - k)
        out[k: k + m] += b[k] * a[:m]
    return out


def convolve(p: Pmf, q: Pmf, tail_tol: float = DEFAULT_TAIL_TOL, *,
             truncate_at: int | None = None, max_len: int | None = None) -> Pmf:
    """Law of the sum of independent draws from ``p`` and ``q``.

    Parameters
    ----------
    tail_tol
        Upper-tail mass that may be trimmed from the result window.
    truncate_at
        Hard upper support point; everything above is moved to ``tail_mass``
        regardless of size.  Entries at or below it stay exact.
    max_len
        Support cap.  Raises :class:`WindowOverflowError` if the window is
        still longer than this after tail trimming.
    """
    if len(p) == 0 or len(q) == 0:
        return Pmf(0, np.zeros(0), 1.0 if not (p.subprob or q.subprob) else 0.0, subprob=True)
    lo = p.offset + q.offset
    full_len = len(p) + len(q) - 1
    out_len = full_len
    if truncate_at is not None:
        out_len = max(0, min(full_len, truncate_at - lo + 1))
    a, b = (p.probs, q.probs) if len(p) >= len(q) else (q.probs, p.probs)
    nnz = np.count_nonzero(b)
    if nnz * 4 < len(b) or out_len < full_len:
        probs = _sparse_convolve(a, b, out_len)
    else:
        probs = np.convolve(a, b)
    kept = math.fsum(probs)
    # deficit carried over from the inputs plus whatever the hard cut removed
    tail = (1.0 - p.tail_mass) * q.tail_mass + p.tail_mass
    if out_len < full_len:
        cut = max(0.0, (1.0 - p.tail_mass) * (1.0 - q.tail_mass) - kept)
        tail += cut
    probs, trimmed = trim_upper(probs, tail_tol)
    tail += trimmed
    if max_len is not None and len(probs) > max_len:
        raise WindowOverflowError(f"window of {len(probs)} points exceeds cap {max_len}")
    sub = p.subprob or q.subprob
    res = Pmf.from_array(probs, lo, min(tail, 1.0), subprob=True)
    if not sub:
        object.__setattr__(res, "subprob", False)
    return res


# -- functionals ----------------------------------------------------------

def cdf(p: Pmf, j: int) -> float:
    """P[X <= j] over the stored window (a lower bound short by at most ``tail_mass``)."""
    if j < p.lo:
        return 0.0
    return math.fsum(p.probs[: j - p.offset + 1])


def cdf_array(p: Pmf, lo: int, hi: int) -> np.ndarray:
    """P[X <= j] for ``j = lo..hi``."""
    return np.cumsum(p.values_on(min(lo, p.lo), hi))[lo - min(lo, p.lo):]


def expectation(p: Pmf, compensated: bool = False) -> float:
    ks = np.arange(p.offset, p.offset + len(p), dtype=np.float64)
    terms = ks * p.probs
    return math.fsum(terms) if compensated else float(np.sum(terms))


def tv_distance(p: Pmf, q: Pmf) -> Estimate:
    """Total variation distance, with radius ``(p.tail_mass + q.tail_mass) / 2``."""
    lo, hi = min(p.lo, q.lo), max(p.hi, q.hi)
    if hi < lo:
        return Estimate(0.0, 0.5 * (p.tail_mass + q.tail_mass))
    diff = p.values_on(lo, hi) - q.values_on(lo, hi)
    val = 0.5 * math.fsum(np.abs(diff))
    return Estimate(min(val, 1.0), 0.5 * (p.tail_mass + q.tail_mass))


def unit_shift_tv(p: Pmf) -> Estimate:
    """D^1 = d_TV(L(X), L(X+1)) = mass - sum_k min(p_k, p_{k-1}).

    The overlap of the stored masses is exact; unrecorded tail mass can only
    add overlap, which the radius covers.  Laws on a sublattice (no two
    adjacent support points) therefore give exactly 1.
    """
    overlap = math.fsum(np.minimum(p.probs[1:], p.probs[:-1]))
    mass = p.total_mass() if p.subprob else 1.0  # tail_mass holds what the stored masses miss
    return Estimate(min(mass, max(0.0, mass - overlap)), p.tail_mass)


def max_point_mass(p: Pmf) -> float:
    return float(p.probs.max()) if len(p) else 0.0


def wasserstein(p: Pmf, q: Pmf) -> Estimate:
    """L1 distance between the lattice cdfs.

    The radius assumes the unrecorded tail mass sits within one window
    length above the stored support; it is exact (zero) for untruncated laws.
    """
    lo, hi = min(p.lo, q.lo), max(p.hi, q.hi)
    if hi < lo:
        return Estimate(0.0, 0.0)
    fp = np.cumsum(p.values_on(lo, hi))
    fq = np.cumsum(q.values_on(lo, hi))
    val = math.fsum(np.abs(fp - fq))
    return Estimate(val, (p.tail_mass + q.tail_mass) * 2 * (hi - lo + 1))


def wasserstein_scaled(p: Pmf, n: int, ref_cdf, x_max: float | None = None, nodes: int = 8) -> float:
    """``int |F_{X/n}(x) - F(x)| dx`` against a continuous reference cdf.

    ``ref_cdf`` must accept numpy arrays.  The integral runs over ``[0, x_max]``
    (default: the end of the window) with Gauss-Legendre nodes on each lattice
    cell, where the step cdf is constant.
    """
    if p.lo < 0:
        raise ValueError("scaled Wasserstein assumes non-negative support")
    if x_max is None:
        x_max = (p.hi + 1) / n
    cells = int(math.ceil(x_max * n))
    fp = np.cumsum(p.values_on(0, cells - 1))
    t, w = np.polynomial.legendre.leggauss(nodes)
    left = np.arange(cells) / n
    xs = left[:, None] + (t[None, :] + 1) / (2 * n)
    vals = np.abs(fp[:, None] - ref_cdf(xs.ravel()).reshape(xs.shape))
    return float(np.sum(vals * w[None, :]) / (2 * n))
