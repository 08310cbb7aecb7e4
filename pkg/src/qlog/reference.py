"""Reference laws: the lattice compound Poisson cp(theta, n) and the Dickman family.

``cp(theta, n)`` is the law of ``sum_{i<=n} i Z*_i`` with independent
``Z*_i ~ Po(theta/i)``.  Its masses satisfy the recursion
``m q_m = theta * sum_{i=1}^{min(m,n)} q_{m-i}``, which is what
:func:`cp_pmf` runs.

The Dickman density ``p_theta`` solves ``x p'(x) = (theta-1) p(x) - theta p(x-1)``
for ``x > 1`` and equals ``exp(-gamma theta) x^(theta-1) / Gamma(theta)`` on
``(0, 1]``.  Writing ``w(x) = x^(1-theta) p(x)`` turns the delay equation into
a pure quadrature, ``w'(x) = -theta x^(-theta) p(x-1)``, so each unit interval
is filled from the previous one.  ``[1, 2]`` has a convergent series solution;
beyond that the integral is taken with composite Simpson panels on the grid.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy import special

from .pmf import DEFAULT_TAIL_TOL, Pmf

EULER_GAMMA = 0.57721566490153286061
LOG_SPACE_THRESHOLD = 700.0


class SingularityError(ValueError):
    """Point evaluation of the density at an integrable singularity."""


# ---------------------------------------------------------------------------
# compound Poisson
# ---------------------------------------------------------------------------

def harmonic(n: int) -> float:
    return math.fsum(1.0 / i for i in range(1, n + 1))


def cp_pmf(theta: float, n: int, m_max: int | None = None, tail_tol: float = DEFAULT_TAIL_TOL,
           log_space: bool | None = None) -> Pmf:
    """Masses of cp(theta, n) on ``0..M``.

    The recursion stops at the first ``M`` for which the unexplained mass
    ``1 - q_0 - ... - q_M`` is at most ``tail_tol``, or at ``m_max`` (default
    ``40 n + 64``), whichever comes first; the remainder is recorded as
    ``tail_mass``.

    When ``theta * H_n`` exceeds 700, ``q_0`` underflows; the recursion then
    runs on rescaled values with a separate log scale (``log_space=True``
    forces this mode).
    """
    if theta <= 0 or n < 1:
        raise ValueError("need theta > 0 and n >= 1")
    if m_max is None:
        m_max = 40 * n + 64
    log_q0 = -theta * harmonic(n)
    if log_space is None:
        log_space = -log_q0 > LOG_SPACE_THRESHOLD
    q = np.zeros(m_max + 1)
    scale_log = log_q0 if log_space else 0.0  # q_true = q * exp(scale_log)
    q[0] = 1.0 if log_space else math.exp(log_q0)
    window = q[0]  # sum of q over the last min(m, n) entries
    # compensated running total of the true masses
    total, comp = (q[0] * math.exp(scale_log)), 0.0
    m_stop = m_max
    for m in range(1, m_max + 1):
        if m % n == 0:
            window = math.fsum(q[max(0, m - n): m])  # limit drift in the running sum
        qm = theta * window / m
        q[m] = qm
        window += qm
        if m - n >= 0:
            window -= q[m - n]
        if log_space and qm > 1e250:
            q[: m + 1] *= 1e-250
            window *= 1e-250
            scale_log += 250 * math.log(10.0)
        true_qm = q[m] * math.exp(scale_log)
        y = true_qm - comp
        t = total + y
        comp = (t - total) - y
        total = t
        if m >= n and 1.0 - total <= tail_tol:
            m_stop = m
            break
    probs = q[: m_stop + 1]
    if log_space:
        with np.errstate(under="ignore"):
            probs = np.exp(np.log(np.where(probs > 0, probs, 1.0)) + scale_log) * (probs > 0)
    tail = max(0.0, 1.0 - math.fsum(probs))
    return Pmf.from_array(probs, 0, tail)


def cp_small_tail_check(theta: float, n: int, j: int, law: Pmf | None = None):
    """Compare ``cp(theta,n){[0,j]}`` with ``((j+1)/(n+1))^theta``."""
    if not 0 <= j <= n:
        raise ValueError("need 0 <= j <= n")
    if law is None:
        law = cp_pmf(theta, n, m_max=max(j, n))
    lhs = math.fsum(law.values_on(0, j))
    rhs = ((j + 1) / (n + 1)) ** theta
    return lhs, rhs, lhs <= rhs + 1e-12


# ---------------------------------------------------------------------------
# delay-equation grid helpers
# ---------------------------------------------------------------------------

def _steps_per_unit(h: float) -> int:
    per = int(round(1.0 / h))
    if per < 4 or abs(per * h - 1.0) > 1e-9:
        raise ValueError("grid step must be 1/N for an integer N >= 4")
    return per


def _fill_interval(w: np.ndarray, g: np.ndarray, h: float, w0: float, scale: float) -> None:
    """Fill ``w[0..N]`` from ``w[0] = w0`` using ``w' = -scale * g`` on a uniform grid.

    Even offsets chain Simpson panels from ``w0``; the first odd point uses
    the cubic through ``g[0..3]`` integrated over one cell, and Simpson panels
    continue from there.  Everything stays inside one unit interval, where
    the integrand is smooth.
    """
    w[0] = w0
    w[1] = w0 - scale * h * (9 * g[0] + 19 * g[1] - 5 * g[2] + g[3]) / 24
    panel = scale * h / 3 * (g[:-2] + 4 * g[1:-1] + g[2:])  # panel j covers [j, j+2]
    w[2::2] = w[0] - _compensated_cumsum(panel[0::2])
    w[3::2] = w[1] - _compensated_cumsum(panel[1::2])


def _compensated_cumsum(x: np.ndarray) -> np.ndarray:
    """Prefix sums with the rounding error of every addition added back.

    A plain cumsum drifts like a random walk, which the delay equation sees as
    a smooth perturbation of the whole interval; such perturbations are
    carried forward almost undamped in absolute terms and swamp the tiny
    values of rho near u = 10.  The per-step errors follow from the
    error-free two-sum of consecutive partial sums.
    """
    s = np.cumsum(x)
    a = np.concatenate((np.zeros(1, dtype=s.dtype), s[:-1]))
    bb = s - a
    err = (a - (s - bb)) + (x - bb)
    return s + np.cumsum(err)


def _interp_unit(grid: np.ndarray, per: int, x: np.ndarray) -> np.ndarray:
    """Four-point Lagrange interpolation from a grid of step ``1/per``.

    The stencil never crosses an integer, where the interpolated function may
    lose smoothness.
    """
    t = x * per
    j = np.floor(t).astype(np.int64)
    k = np.minimum(j // per, (len(grid) - 2) // per)  # unit interval index
    lo = k * per
    s = np.clip(j - 1, lo, lo + per - 3)
    u = t - s
    f0, f1, f2, f3 = (grid[s + c] for c in range(4))
    return (-f0 * (u - 1) * (u - 2) * (u - 3) / 6 + f1 * u * (u - 2) * (u - 3) / 2
            - f2 * u * (u - 1) * (u - 3) / 2 + f3 * u * (u - 1) * (u - 2) / 6)


# ---------------------------------------------------------------------------
# Dickman's rho
# ---------------------------------------------------------------------------

def rho_grid(h: float = 1e-4, u_max: int = 20, extrapolate: bool = True) -> np.ndarray:
    """rho on ``0, h, 2h, ..., u_max`` from ``u rho'(u) = -rho(u-1)``, ``rho = 1`` on ``[0,1]``.

    No closed form is used on any interval past 1.  The Simpson scheme is
    fourth order; with ``extrapolate`` one Richardson step against the ``2h``
    grid removes the leading error term, which matters for the relative
    accuracy of the tiny values near ``u = 10``.
    """
    raw = _rho_raw(h, u_max)
    per = _steps_per_unit(h)
    if not extrapolate or per % 2 or per < 8:
        return raw
    coarse = _rho_raw(2 * h, u_max)
    corr = np.empty_like(raw)
    corr[::2] = (raw[::2] - coarse) / 15
    corr[1::2] = 0.5 * (corr[:-1:2] + corr[2::2])
    return raw + corr


def _rho_raw(h: float, u_max: int) -> np.ndarray:
    # The delay equation carries a smooth relative perturbation of one unit
    # interval forward almost undamped in absolute terms, so float64 rounding
    # near u = 2 would swamp rho(10) ~ 3e-11.  Work in extended precision,
    # keeping only the previous interval at that precision.
    ld = np.longdouble
    per = _steps_per_unit(h)
    out = np.empty(per * u_max + 1)
    out[: per + 1] = 1.0
    prev = np.ones(per + 1, dtype=ld)
    cur = np.empty(per + 1, dtype=ld)
    u_unit = np.arange(per + 1, dtype=ld) / ld(per)
    hl = ld(1) / ld(per)
    for k in range(1, u_max):
        lo = k * per
        g = prev / (k + u_unit)
        _fill_interval(cur, g, hl, prev[-1], ld(1))
        out[lo: lo + per + 1] = cur
        prev, cur = cur, prev
    return out


@lru_cache(maxsize=4)
def _rho_table(h: float, u_max: int) -> np.ndarray:
    return rho_grid(h, u_max)


def rho(u, h: float = 1e-4, u_max: int = 20):
    """Dickman's function.  Returns 0 past ``u_max`` (rho(20) is below 1e-28)."""
    arr = np.asarray(u, dtype=np.float64)
    if np.any(arr < 0):
        raise ValueError("rho is defined for u >= 0")
    table = _rho_table(h, u_max)
    per = _steps_per_unit(h)
    out = np.where(arr <= 1, 1.0, 0.0)
    mid = (arr > 1) & (arr <= u_max)
    if np.any(mid):
        out[mid] = _interp_unit(table, per, arr[mid])
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# Dickman density
# ---------------------------------------------------------------------------

def _series_segment(x: np.ndarray, theta: float, c: float) -> np.ndarray:
    """Exact ``p_theta`` on ``[1, 2]``.

    With ``s = (x-1)/x`` one has
    ``x^(1-theta) p(x) = c - theta c sum_k s^(theta+k)/(theta+k)``; ``s <= 1/2``.
    """
    s = (x - 1) / x
    acc = np.zeros_like(x)
    sk = np.ones_like(x)
    for k in range(80):
        acc += sk / (theta + k)
        sk = sk * s
    with np.errstate(divide="ignore"):
        w = c - theta * c * np.power(s, theta) * acc
    return w * np.power(x, theta - 1)


class DickmanSolver:
    """Grid solution of the Dickman density for one value of theta.

    Parameters
    ----------
    theta
        Positive parameter.
    h
        Grid step; ``1/h`` must be an integer.
    x_max
        Integer end of the grid; the density is taken as 0 beyond it.
    """

    def __init__(self, theta: float, h: float = 1e-4, x_max: int = 20):
        if theta <= 0:
            raise ValueError("theta must be positive")
        if int(x_max) != x_max or x_max < 2:
            raise ValueError("x_max must be an integer >= 2")
        self.theta = float(theta)
        self.h = float(h)
        self.x_max = int(x_max)
        self.gamma_euler = EULER_GAMMA
        self.per = _steps_per_unit(h)
        self.seed_const = math.exp(-EULER_GAMMA * theta - special.gammaln(theta))
        self.x = np.arange(self.per * self.x_max + 1) * self.h
        self.p = self._solve()
        self.p.setflags(write=False)
        self.p_at_one = self.seed_const

    def _solve(self) -> np.ndarray:
        th, per, c = self.theta, self.per, self.seed_const
        x = self.x
        p = np.empty_like(x)
        p[0] = np.inf if th < 1 else (c if th == 1 else 0.0)
        p[1: per + 1] = c * x[1: per + 1] ** (th - 1)
        p[per: 2 * per + 1] = _series_segment(x[per: 2 * per + 1], th, c)
        w = np.empty(per + 1)
        for k in range(2, self.x_max):
            lo = k * per
            # w = x^(1-theta) p on [k, k+1]; integrand uses the interval behind
            xs = x[lo: lo + per + 1]
            g = xs ** (-th) * p[lo - per: lo + 1]
            _fill_interval(w, g, self.h, xs[0] ** (1 - th) * p[lo], th)
            p[lo: lo + per + 1] = w * xs ** (th - 1)
        return p

    # -- evaluation -------------------------------------------------------

    def p_theta(self, x):
        """Density at ``x`` (array or scalar)."""
        arr = np.asarray(x, dtype=np.float64)
        th = self.theta
        if th < 1 and np.any(arr == 0):
            raise SingularityError("p_theta is unbounded at 0 for theta < 1")
        out = np.zeros(arr.shape)
        seg0 = (arr > 0) & (arr <= 1)
        out[seg0] = self.seed_const * arr[seg0] ** (th - 1)
        if th == 1:
            out[arr == 0] = self.seed_const
        seg1 = (arr > 1) & (arr <= 2)
        if np.any(seg1):
            out[seg1] = _series_segment(arr[seg1], th, self.seed_const)
        rest = (arr > 2) & (arr <= self.x_max)
        if np.any(rest):
            out[rest] = _interp_unit(self.p, self.per, arr[rest])
        return out if out.ndim else float(out)

    def f_theta(self, x):
        """``e^(gamma theta) Gamma(theta+1) x^(theta-2) p_theta((1-x)/x)`` on ``(0, 1]``."""
        arr = np.asarray(x, dtype=np.float64)
        if np.any((arr <= 0) | (arr > 1)):
            raise ValueError("f_theta is defined on (0, 1]")
        th = self.theta
        y = (1 - arr) / arr
        if th < 1 and np.any(y == 0):
            # (1-x)/x = 0 hits the singular point of p_theta; the density of
            # the limit law is infinite there
            pass
        with np.errstate(divide="ignore"):
            py = np.where(y > 0, self.p_theta(np.where(y > 0, y, 1.0)),
                          np.inf if th < 1 else (self.seed_const if th == 1 else 0.0))
        out = math.exp(EULER_GAMMA * th + special.gammaln(th + 1)) * arr ** (th - 2) * py
        return out if out.ndim else float(out)

    def F_theta(self, x):
        """``x^(theta-1) p_theta(1/x) / p_theta(1)`` on ``(0, 1]``."""
        arr = np.asarray(x, dtype=np.float64)
        if np.any((arr <= 0) | (arr > 1)):
            raise ValueError("F_theta is defined on (0, 1]")
        out = arr ** (self.theta - 1) * self.p_theta(1 / arr) / self.p_at_one
        return out if out.ndim else float(out)

    def cdf(self, x):
        """Distribution function of P_theta, by cumulative quadrature on the grid."""
        arr = np.asarray(x, dtype=np.float64)
        cum = self._cum()
        out = np.where(arr >= self.x_max, 1.0, 0.0)
        inside = (arr > 0) & (arr < self.x_max)
        if np.any(inside):
            xi = arr[inside]
            first = xi <= 1
            vals = np.empty(xi.shape)
            vals[first] = self.seed_const * xi[first] ** self.theta / self.theta
            later = ~first
            if np.any(later):
                vals[later] = _interp_unit(cum, self.per, xi[later])
            out[inside] = vals
        return out if out.ndim else float(out)

    def _cum(self) -> np.ndarray:
        cached = getattr(self, "_cum_cache", None)
        if cached is not None:
            return cached
        per, h = self.per, self.h
        cum = np.zeros_like(self.p)
        cum[: per + 1] = self.seed_const * self.x[: per + 1] ** self.theta / self.theta
        # Simpson-in-pairs cumulative integral, restarted at each integer
        for k in range(1, self.x_max):
            lo = k * per
            seg = self.p[lo: lo + per + 1]
            part = np.empty(per + 1)
            _fill_interval(part, seg, h, 0.0, -1.0)
            cum[lo: lo + per + 1] = cum[lo] + part
        self._cum_cache = cum
        return cum

    def stationarity_residual(self) -> np.ndarray:
        """``x p(x) - theta * int_{x-1}^{x} p`` at every grid point ``x > 1``."""
        cum = self._cum()
        per = self.per
        lo = per + 1
        idx = np.arange(lo, len(self.x))
        return self.x[idx] * self.p[idx] - self.theta * (cum[idx] - cum[idx - per])

    def total_mass(self) -> float:
        return float(self._cum()[-1])


@lru_cache(maxsize=16)
def dickman(theta: float, h: float = 1e-4, x_max: int = 20) -> DickmanSolver:
    """Shared, cached solver instance."""
    return DickmanSolver(theta, h, x_max)


def p_theta(x, theta: float):
    return dickman(float(theta)).p_theta(x)


def f_theta(x, theta: float):
    return dickman(float(theta)).f_theta(x)


def F_theta(x, theta: float):
    return dickman(float(theta)).F_theta(x)
