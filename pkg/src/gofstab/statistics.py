"""Classical ecdf statistics on [0, 1] and directional uniformity statistics.

The classical statistics use the usual order-statistic formulas.  The
projected-ecdf statistics are evaluated as the average, over projection
directions, of the classical inner statistic applied to the projected and
probability-integral-transformed sample; ``W2`` for the Cramér-von Mises
weight and ``A2`` for the Anderson-Darling weight.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Union

import numpy as np
from scipy import integrate, special

from .errors import DegenerateObservationError, DomainError, KindMismatchError
from .kinds import StatisticKind, as_kind

#: Clamp used by the opt-in ``clamp`` mode of the Anderson-Darling statistic.
A2_CLAMP_EPS = 1e-12
UNIT_NORM_TOL = 1e-10


@dataclass(frozen=True)
class UnitSample:
    """Sorted sample on [0, 1], typically ``U_i = F0(X_i)``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise DomainError("a UnitSample needs at least one value")
        if not np.all(np.isfinite(v)):
            raise DomainError("UnitSample values must be finite")
        if v.min() < 0.0 or v.max() > 1.0:
            raise DomainError("UnitSample values must lie in [0, 1]")
        v = np.sort(v)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    @classmethod
    def from_angles(cls, angles, degrees: bool = False) -> "UnitSample":
        """Map circular data to ``u = (theta mod 2 pi) / (2 pi)``."""
        a = np.asarray(angles, dtype=float)
        if degrees:
            a = np.deg2rad(a)
        return cls(np.mod(a, 2 * np.pi) / (2 * np.pi))


@dataclass(frozen=True)
class SphericalSample:
    """``n x p`` matrix of unit vectors on the sphere S^{p-1}."""

    points: np.ndarray

    def __post_init__(self):
        x = np.array(self.points, dtype=float)
        if x.ndim != 2 or x.shape[0] == 0:
            raise DomainError("points must be a non-empty n x p matrix")
        if x.shape[1] < 2:
            raise DomainError("ambient dimension p must be at least 2")
        norms = np.linalg.norm(x, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_NORM_TOL):
            raise DomainError("every row must have unit Euclidean norm")
        x.setflags(write=False)
        object.__setattr__(self, "points", x)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def p(self) -> int:
        return self.points.shape[1]

    @classmethod
    def normalized(cls, points, tol: float = 1e-6) -> "SphericalSample":
        """Normalize rows that are within ``tol`` of unit norm; reject others."""
        x = np.asarray(points, dtype=float)
        if x.ndim != 2:
            raise DomainError("points must be a 2-d array")
        norms = np.linalg.norm(x, axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > tol)
        if bad.size:
            raise DomainError(
                f"row {bad[0] + 1} has norm {norms[bad[0]]:.6g}, not within {tol} of 1")
        return cls(x / norms[:, None])

    @classmethod
    def from_angles(cls, angles, degrees: bool = False) -> "SphericalSample":
        a = np.asarray(angles, dtype=float)
        if degrees:
            a = np.deg2rad(a)
        return cls(np.column_stack([np.cos(a), np.sin(a)]))


@dataclass(frozen=True)
class Estimation:
    direction_count: int
    scheme: str  # "grid" or "montecarlo"
    std_error: float
    skipped: int = 0


@dataclass(frozen=True)
class StatisticValue:
    kind: StatisticKind
    value: float
    n: int
    p: Optional[int] = None
    estimation: Optional[Estimation] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", as_kind(self.kind))
        if not self.value >= 0:
            raise DomainError(f"statistic value must be nonnegative, got {self.value}")

    @property
    def scaled(self) -> float:
        """Value on the scale of the limiting law (``sqrt(n) D_n``, ``sqrt(n) V_n``)."""
        return self.value * asymptotic_scale(self.kind, self.n)


def asymptotic_scale(kind, n):
    """Factor taking a statistic to the scale of its limiting law.

    ``D_n`` and ``V_n`` converge after multiplication by ``sqrt(n)``; the
    quadratic statistics already carry the factor ``n``.
    """
    kind = as_kind(kind)
    if kind in (StatisticKind.D, StatisticKind.V):
        return np.sqrt(n)
    return 1.0


# ---------------------------------------------------------------------------
# classical statistics
# ---------------------------------------------------------------------------

def _classical_sorted(kind: StatisticKind, u: np.ndarray, clamp: bool = False) -> np.ndarray:
    """Vectorized statistics over the last axis of an already sorted array."""
    n = u.shape[-1]
    i = np.arange(1, n + 1, dtype=float)
    if kind in (StatisticKind.D, StatisticKind.V):
        d_plus = np.max(i / n - u, axis=-1)
        d_minus = np.max(u - (i - 1) / n, axis=-1)
        if kind is StatisticKind.D:
            return np.maximum(d_plus, d_minus)
        return d_plus + d_minus
    if kind in (StatisticKind.W2, StatisticKind.U2):
        w2 = 1.0 / (12 * n) + np.sum((u - (2 * i - 1) / (2 * n)) ** 2, axis=-1)
        if kind is StatisticKind.W2:
            return w2
        return w2 - n * (np.mean(u, axis=-1) - 0.5) ** 2
    if kind is StatisticKind.A2:
        if clamp:
            u = np.clip(u, A2_CLAMP_EPS, 1.0 - A2_CLAMP_EPS)
        with np.errstate(divide="ignore"):
            s = (2 * i - 1) * (np.log(u) + np.log1p(-u[..., ::-1]))
        return -n - np.sum(s, axis=-1) / n
    raise KindMismatchError(f"{kind} is not a classical statistic")


def classical_statistic(kind, u: Union[UnitSample, np.ndarray], clamp: bool = False) -> StatisticValue:
    """Kolmogorov-Smirnov, Cramér-von Mises, Anderson-Darling, Kuiper or Watson.

    Parameters
    ----------
    kind : StatisticKind or str
        One of ``D``, ``W2``, ``A2``, ``V``, ``U2``.
    u : UnitSample or array_like
        Probability-integral-transformed sample.
    clamp : bool
        Only used by ``A2``.  By default a value equal to 0 or 1 raises
        :class:`DegenerateObservationError`; with ``clamp=True`` such values
        are moved to ``[1e-12, 1 - 1e-12]``.

    Returns
    -------
    StatisticValue
    """
    kind = as_kind(kind)
    if not kind.is_classical:
        raise KindMismatchError(f"{kind} operates on spherical samples")
    if not isinstance(u, UnitSample):
        u = UnitSample(u)
    v = u.values
    if kind is StatisticKind.A2 and not clamp and (v[0] <= 0.0 or v[-1] >= 1.0):
        raise DegenerateObservationError(
            "degenerate observation: A2 needs every u strictly inside (0, 1)")
    value = float(_classical_sorted(kind, v, clamp=clamp))
    return StatisticValue(kind, max(value, 0.0), u.n)


# ---------------------------------------------------------------------------
# hypersphere helpers
# ---------------------------------------------------------------------------

def projection_cdf(x, p: int):
    """Cdf of ``gamma' X`` for ``X ~ Unif(S^{p-1})``.

    ``T^2 ~ Beta(1/2, (p - 1)/2)``, so
    ``F_p(x) = (1 + sign(x) I_{x^2}(1/2, (p-1)/2)) / 2``.
    """
    if p < 2:
        raise DomainError("p must be at least 2")
    xa = np.asarray(x, dtype=float)
    if np.any(xa < -1.0) or np.any(xa > 1.0) or np.any(np.isnan(xa)):
        raise DomainError("projection_cdf is defined on [-1, 1]")
    if p == 2:
        out = 1.0 - np.arccos(xa) / np.pi
    else:
        out = 0.5 * (1.0 + np.sign(xa) * special.betainc(0.5, (p - 1) / 2.0, xa * xa))
    return float(out) if np.ndim(out) == 0 else out


def projected_density_const(p: int) -> float:
    """Normalizing constant of ``(1 - t^2)^{(p-3)/2}`` on [-1, 1]."""
    return math.exp(math.lgamma(p / 2) - 0.5 * math.log(math.pi) - math.lgamma((p - 1) / 2))


def projected_expectation(func, p: int) -> float:
    """``E func(T)`` for ``T = gamma' X`` with density ``c_p (1 - t^2)^{(p-3)/2}`` on [-1, 1].

    Small p use an algebraic-weight rule for the endpoint behaviour; large p
    integrate the log-space density with breakpoints around its narrow peak.
    """
    c = projected_density_const(p)
    e = (p - 3) / 2.0
    if p < 40:
        val, _ = integrate.quad(func, -1.0, 1.0, weight="alg", wvar=(e, e),
                                epsabs=1e-13, epsrel=1e-12, limit=200)
        return c * val
    lc = math.log(c)
    sd = 1.0 / math.sqrt(p)
    pts = [k * sd for k in (-12, -6, -2, 0, 2, 6, 12) if abs(k * sd) < 1.0]
    val, _ = integrate.quad(lambda t: math.exp(lc + e * math.log1p(-t * t)) * func(t), -1.0, 1.0,
                            points=pts, epsabs=1e-14, epsrel=1e-13, limit=400)
    return val


@lru_cache(maxsize=None)
def mean_chord(p: int) -> float:
    """Expected chord length ``E||X1 - X2||`` for two uniform points on S^{p-1}."""
    if p < 2:
        raise DomainError("p must be at least 2")
    return projected_expectation(lambda t: math.sqrt(max(2.0 - 2.0 * t, 0.0)), p)


def bakshaev_statistic(x: SphericalSample) -> StatisticValue:
    """Chordal energy statistic ``n E||X1-X2|| - (1/n) sum_{i,j} ||Xi - Xj||``."""
    pts = x.points
    gram = np.clip(pts @ pts.T, -1.0, 1.0)
    chords = np.sqrt(np.maximum(2.0 - 2.0 * gram, 0.0))
    np.fill_diagonal(chords, 0.0)
    value = x.n * mean_chord(x.p) - chords.sum() / x.n
    return StatisticValue(StatisticKind.NBak, max(float(value), 0.0), x.n, x.p)


# ---------------------------------------------------------------------------
# projected-ecdf statistics by direction averaging
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridScheme:
    """Equispaced directions on the circle (p = 2 only)."""

    G: int = 2048

    def __post_init__(self):
        if self.G < 16:
            raise DomainError("grid scheme needs G >= 16")


@dataclass(frozen=True)
class MonteCarloScheme:
    """Uniform random directions drawn as normalized Gaussian vectors."""

    M: int = 10_000
    seed: int = 0
    chunk: int = field(default=2048, compare=False)

    def __post_init__(self):
        if self.M < 100:
            raise DomainError("Monte Carlo scheme needs at least 100 directions")


def _inner_values(kind: StatisticKind, u: np.ndarray):
    """Inner classical statistic per row of projected u-values (unsorted)."""
    u = np.sort(u, axis=-1)
    if kind is StatisticKind.PCvM:
        return _classical_sorted(StatisticKind.W2, u), 0
    bad = (u[:, 0] <= 0.0) | (u[:, -1] >= 1.0)
    vals = _classical_sorted(StatisticKind.A2, u[~bad])
    return vals, int(bad.sum())


def projected_statistic(kind, x: SphericalSample, scheme=None) -> StatisticValue:
    """Projected Cramér-von Mises or Anderson-Darling statistic.

    The outer integral over directions is approximated by an equispaced grid
    (``GridScheme``, p = 2) or by uniform random directions
    (``MonteCarloScheme``).  Directions where an ``A2`` inner statistic hits a
    projected value of exactly 0 or 1 are skipped and counted in
    ``estimation.skipped``.
    """
    kind = as_kind(kind)
    if kind not in (StatisticKind.PCvM, StatisticKind.PAD):
        raise KindMismatchError(f"{kind} is not a projected-ecdf statistic")
    if scheme is None:
        scheme = GridScheme() if x.p == 2 else MonteCarloScheme()
    pts = x.points
    if isinstance(scheme, GridScheme):
        if x.p != 2:
            raise DomainError("the grid scheme is only available for p = 2")
        ang = np.arctan2(pts[:, 1], pts[:, 0])
        theta = 2 * np.pi * np.arange(scheme.G) / scheme.G
        d = np.abs(np.angle(np.exp(1j * (ang[None, :] - theta[:, None]))))
        vals, skipped = _inner_values(kind, 1.0 - d / np.pi)
        count = vals.size
        mean = float(vals.mean()) if count else float("nan")
        return StatisticValue(kind, mean, x.n, 2, Estimation(count, "grid", 0.0, skipped))
    if isinstance(scheme, MonteCarloScheme):
        rng = np.random.default_rng(scheme.seed)
        total = 0.0
        total_sq = 0.0
        count = 0
        skipped = 0
        remaining = scheme.M
        while remaining > 0:
            m = min(scheme.chunk, remaining)
            remaining -= m
            g = rng.standard_normal((m, x.p))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            proj = np.clip(g @ pts.T, -1.0, 1.0)
            vals, sk = _inner_values(kind, projection_cdf(proj, x.p))
            skipped += sk
            count += vals.size
            total += vals.sum()
            total_sq += np.sum(vals ** 2)
        mean = total / count
        var = max(total_sq / count - mean ** 2, 0.0) * count / max(count - 1, 1)
        se = math.sqrt(var / count)
        return StatisticValue(kind, float(mean), x.n, x.p,
                              Estimation(count, "montecarlo", se, skipped))
    raise TypeError(f"unknown direction scheme {scheme!r}")


def compute_statistic(kind, data, **kwargs) -> StatisticValue:
    """Dispatch on kind: classical kinds take unit data, spherical ones points.

    Spherical kinds default to the exact pairwise-kernel evaluation; pass
    ``scheme=`` to request direction averaging instead.
    """
    kind = as_kind(kind)
    if kind.is_classical:
        return classical_statistic(kind, data, clamp=kwargs.get("clamp", False))
    if not isinstance(data, SphericalSample):
        data = SphericalSample(data)
    if kind is StatisticKind.NBak:
        return bakshaev_statistic(data)
    scheme = kwargs.get("scheme")
    if scheme is not None:
        return projected_statistic(kind, data, scheme)
    from .kernels import pairwise_statistic

    return StatisticValue(kind, max(pairwise_statistic(kind, data.points), 0.0), data.n, data.p)
