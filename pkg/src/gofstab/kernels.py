"""Pairwise kernels and limit laws of the directional statistics.

Every directional statistic here is a V-statistic
``T_n = (1/n) sum_{i,j} psi(X_i' X_j)`` with a kernel that only depends on
the angle between two points.  This module provides

* ``pair_kernel``: ``psi`` tabulated on the half-chord ``z = ||x - y|| / 2``
  by two-dimensional Gauss quadrature over projection directions, so that
  finite-n statistics cost O(n^2) instead of O(n^2 x directions);
* ``funk_hecke_coefficients``: the eigenvalues ``lambda_k`` of the kernel on
  degree-k spherical harmonics, giving the limit law
  ``T_inf = sum_k lambda_k chi^2_{d_k}``.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from numba import njit
from numpy.polynomial.legendre import leggauss
from scipy import integrate, special

from .errors import DomainError, KindMismatchError
from .kinds import StatisticKind, as_kind
from .statistics import mean_chord, projected_density_const, projected_expectation, projection_cdf

KERNEL_GRID = 2049
_S_NODES = 64
_PHI_NODES = 96


def _h(kind: StatisticKind, a, b):
    """Inner statistic contribution of a pair of projected u-values."""
    if kind is StatisticKind.PCvM:
        return 1.0 / 3.0 - np.maximum(a, b) + 0.5 * (a * a + b * b)
    with np.errstate(divide="ignore"):
        return -1.0 - np.log1p(-np.minimum(a, b)) - np.log(np.maximum(a, b))


def kernel_at_zero(kind, p: int) -> float:
    """``psi(1)``, which is also the null mean of the limit law."""
    kind = as_kind(kind)
    if kind is StatisticKind.PCvM:
        return 1.0 / 6.0
    if kind is StatisticKind.PAD:
        return 1.0
    if kind is StatisticKind.NBak:
        return mean_chord(p)
    raise KindMismatchError(f"{kind} has no pairwise kernel")


_CDF_X = np.linspace(-1.0, 1.0, 2 ** 17 + 1)


@lru_cache(maxsize=16)
def _cdf_table(p: int) -> np.ndarray:
    return projection_cdf(_CDF_X, p)


@njit(cache=True)
def _sphere_kernel(theta, r, ws, gx, gw, cdf, cvm):
    # E h(F(r cos phi), F(r cos(phi - t))) over the radial Jacobi rule and two
    # Gauss-Legendre half-circles in phi, for every angle t
    m = cdf.shape[0] - 1
    out = np.empty(theta.shape[0])
    for i in range(theta.shape[0]):
        t = theta[i]
        acc = 0.0
        for half in range(2):
            base = t / 2 + half * np.pi
            for q in range(gx.shape[0]):
                phi = base + np.pi / 2 * (gx[q] + 1)
                c1 = math.cos(phi)
                c2 = math.cos(phi - t)
                wq = gw[q] * np.pi / 2 / (2 * np.pi)
                inner = 0.0
                for s in range(r.shape[0]):
                    x1 = (min(max(r[s] * c1, -1.0), 1.0) + 1.0) * 0.5 * m
                    x2 = (min(max(r[s] * c2, -1.0), 1.0) + 1.0) * 0.5 * m
                    k1 = min(int(x1), m - 1)
                    k2 = min(int(x2), m - 1)
                    a = cdf[k1] + (x1 - k1) * (cdf[k1 + 1] - cdf[k1])
                    b = cdf[k2] + (x2 - k2) * (cdf[k2 + 1] - cdf[k2])
                    lo = min(a, b)
                    hi = max(a, b)
                    if cvm:
                        h = 1.0 / 3.0 - hi + 0.5 * (a * a + b * b)
                    elif lo >= 1.0 or hi <= 0.0:
                        h = math.inf
                    else:
                        h = -1.0 - math.log1p(-lo) - math.log(hi)
                    inner += ws[s] * h
                acc += wq * inner
        out[i] = acc
    return out


@lru_cache(maxsize=64)
def pair_kernel(kind, p: int, size: int = KERNEL_GRID) -> np.ndarray:
    """Kernel values on the uniform half-chord grid ``z = linspace(0, 1, size)``."""
    kind = as_kind(kind)
    if p < 2:
        raise DomainError("p must be at least 2")
    z = np.linspace(0.0, 1.0, size)
    if kind is StatisticKind.NBak:
        out = mean_chord(p) - 2.0 * z
        out.setflags(write=False)
        return out
    if kind not in (StatisticKind.PCvM, StatisticKind.PAD):
        raise KindMismatchError(f"{kind} has no pairwise kernel")
    theta = 2.0 * np.arcsin(z)
    gx, gw = leggauss(_PHI_NODES)
    out = np.empty(size)
    if p == 2:
        for i, t in enumerate(theta):
            cuts = np.unique([-np.pi, t - np.pi, t / 2 - np.pi, 0.0, t / 2, t, np.pi])
            phi, wp = [], []
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                if hi - lo < 1e-15:
                    continue
                phi.append(lo + (hi - lo) * (gx + 1) / 2)
                wp.append(gw * (hi - lo) / 2)
            phi = np.concatenate(phi)
            wp = np.concatenate(wp) / (2 * np.pi)
            a = 1.0 - np.abs(phi) / np.pi
            b = 1.0 - np.abs(np.angle(np.exp(1j * (phi - t)))) / np.pi
            out[i] = np.sum(wp * _h(kind, a, b))
    else:
        # F_p tabulated once on a uniform grid and interpolated inside the compiled loop
        xs, ws = special.roots_jacobi(_S_NODES, (p - 4) / 2.0, 0.0)
        r = np.sqrt((xs + 1.0) / 2.0)
        ws = ws / ws.sum()
        out = _sphere_kernel(theta, r, ws, gx, gw, _cdf_table(p), kind is StatisticKind.PCvM)
    # the diagonal value is known in closed form; quadrature is weakest there
    out[0] = kernel_at_zero(kind, p)
    out.setflags(write=False)
    return out


@njit(cache=True)
def _vstat(points, table):
    n, p = points.shape
    m = table.shape[0] - 1
    acc = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            d2 = 0.0
            for k in range(p):
                diff = points[i, k] - points[j, k]
                d2 += diff * diff
            z = 0.5 * math.sqrt(d2)
            if z >= 1.0:
                acc += table[m]
                continue
            pos = z * m
            lo = int(pos)
            frac = pos - lo
            acc += table[lo] + frac * (table[lo + 1] - table[lo])
    return table[0] + 2.0 * acc / n


@njit(cache=True)
def _vstat_batch(samples, table):
    out = np.empty(samples.shape[0])
    for r in range(samples.shape[0]):
        out[r] = _vstat(samples[r], table)
    return out


def pairwise_statistic(kind, points) -> float:
    """Exact finite-n value ``(1/n) sum_{i,j} psi`` up to kernel tabulation error."""
    kind = as_kind(kind)
    pts = np.ascontiguousarray(points, dtype=float)
    return float(_vstat(pts, np.asarray(pair_kernel(kind, pts.shape[1]))))


def pairwise_statistic_batch(kind, samples) -> np.ndarray:
    """Statistic for each ``samples[r]`` of an ``(M, n, p)`` array."""
    kind = as_kind(kind)
    s = np.ascontiguousarray(samples, dtype=float)
    return _vstat_batch(s, np.asarray(pair_kernel(kind, s.shape[2])))


# ---------------------------------------------------------------------------
# spectral representation
# ---------------------------------------------------------------------------

def harmonic_dimension(k: int, p: int) -> int:
    """Dimension of the space of degree-k spherical harmonics on S^{p-1}."""
    if k == 0:
        return 1
    return math.comb(k + p - 1, p - 1) - math.comb(k + p - 3, p - 1)


def _coefficient(kind: StatisticKind, p: int, k: int) -> float:
    quad = dict(epsabs=1e-14, epsrel=1e-10, limit=500)
    if p == 2:
        if kind is StatisticKind.NBak:
            return (4.0 / math.pi) / (4 * k * k - 1)
        if kind is StatisticKind.PCvM:
            return 1.0 / (2 * (k * math.pi) ** 2)

        def f(t):
            u = t / math.pi
            return math.sin(k * t) ** 2 / ((k * math.pi) ** 2 * math.pi * u * (1 - u))

        pts = [math.pi * j / k for j in range(1, k)] if k <= 50 else None
        val, _ = integrate.quad(f, 0.0, math.pi, points=pts, **quad)
        return val
    lam = (p - 2) / 2.0
    c = projected_density_const(p)
    ck1 = special.eval_gegenbauer(k, lam, 1.0)
    e = (p - 3) / 2.0
    if kind is StatisticKind.NBak:
        return projected_expectation(
            lambda t: -math.sqrt(max(2.0 - 2.0 * t, 0.0)) * special.eval_gegenbauer(k, lam, t) / ck1, p)
    scale = c * 2 * lam / (k * (k + 2 * lam)) / ck1

    def f(s):
        one = 1.0 - s * s
        mu = scale * one ** (lam + 0.5) * special.eval_gegenbauer(k - 1, lam + 1, s)
        val = mu * mu * c * one ** e
        if kind is StatisticKind.PAD:
            u = projection_cdf(s, p)
            uu = u * (1.0 - u)
            # mu^2 vanishes faster than u(1-u) at the poles
            val = val / uu if uu > 0.0 else 0.0
        return val

    val, _ = integrate.quad(f, -1.0, 1.0, points=[0.0], **quad)
    return val


@lru_cache(maxsize=128)
def funk_hecke_coefficients(kind, p: int, K: int = 100) -> tuple:
    """``(lambda_1..lambda_K, d_1..d_K, tail_mean)`` for the limit law.

    ``tail_mean`` is the part of ``E T_inf = psi(1)`` carried by degrees
    above K; it is added as a constant when sampling the limit law.
    """
    kind = as_kind(kind)
    if kind not in (StatisticKind.PCvM, StatisticKind.PAD, StatisticKind.NBak):
        raise KindMismatchError(f"{kind} is not a directional statistic")
    lams, dims = [], []
    total = kernel_at_zero(kind, p)
    acc = 0.0
    for k in range(1, K + 1):
        d = harmonic_dimension(k, p)
        lk = _coefficient(kind, p, k)
        lams.append(lk)
        dims.append(float(d))
        acc += lk * d
        if total - acc < 1e-12 * total:
            break
    return np.array(lams), np.array(dims), max(total - acc, 0.0)


def sample_limit_law(kind, p: int, size: int, rng, K: int = 100) -> np.ndarray:
    """Draws of ``sum_k lambda_k chi^2_{d_k}`` plus the truncated tail mean."""
    lams, dims, tail = funk_hecke_coefficients(as_kind(kind), p, K)
    out = np.full(size, tail)
    for lk, d in zip(lams, dims):
        out += lk * rng.chisquare(d, size)
    return out
