"""Asymptotic null laws and critical tables.

Classical kinds use the literature series for their limiting survival
functions.  Directional kinds have no closed form; their critical values
come from tables, either the published ones for ``p = 2..11`` or tables
rebuilt by simulation with :func:`build_projected_table`.
"""
from __future__ import annotations

import csv
import datetime as _dt
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple

import numpy as np
from scipy import integrate, optimize, special

from .errors import DataError, DomainError, KindMismatchError, TableMissError
from .kinds import CLASSICAL, StatisticKind, as_kind

SERIES_TERMS = 100
TAIL_TOLERANCE = 1e-12
QUANTILE_BRACKET = (1e-6, 50.0)
ALPHA_MAX = 0.25


# ---------------------------------------------------------------------------
# alpha grid
# ---------------------------------------------------------------------------

def alpha_key(alpha: float) -> float:
    """Canonical float for dictionary keys built from grid arithmetic."""
    return round(float(alpha), 10)


@dataclass(frozen=True)
class AlphaGrid:
    """Significance levels ``a / A`` for ``a = 1..A``."""

    A: int = 1000
    alpha_max_used: float = ALPHA_MAX

    def __post_init__(self):
        if self.A < 2:
            raise DomainError("an alpha grid needs A >= 2")

    @property
    def values(self) -> np.ndarray:
        return np.arange(1, self.A + 1) / self.A

    @property
    def used(self) -> np.ndarray:
        """Grid points up to ``alpha_max_used``, the range the forms are valid on."""
        v = self.values
        return v[v <= self.alpha_max_used + 1e-12]

    def __contains__(self, alpha) -> bool:
        a = float(alpha) * self.A
        return abs(a - round(a)) < 1e-9 and 1 <= round(a) <= self.A


# ---------------------------------------------------------------------------
# limiting survival functions of the classical statistics
# ---------------------------------------------------------------------------

def _kolmogorov_sf(x: float, K: int, tol: float) -> float:
    if x < 1.0:
        # the alternating series converges slowly here; use the Jacobi dual
        s = 0.0
        for k in range(1, K + 1):
            term = math.exp(-((2 * k - 1) * math.pi) ** 2 / (8 * x * x))
            s += term
            if term < tol:
                break
        return 1.0 - math.sqrt(2 * math.pi) / x * s
    s = 0.0
    for k in range(1, K + 1):
        term = math.exp(-2.0 * k * k * x * x)
        s += term if k % 2 else -term
        if term < tol:
            break
    return 2.0 * s


def _kuiper_sf(x: float, K: int, tol: float) -> float:
    if x < 1.0:
        s = 0.0
        for m in range(1, K + 1):
            term = m * m * math.exp(-(math.pi * m) ** 2 / (2 * x * x))
            s += term
            if term < tol:
                break
        return 1.0 - math.sqrt(2 * math.pi) * math.pi ** 2 / x ** 3 * s
    s = 0.0
    for k in range(1, K + 1):
        term = 2.0 * (4.0 * k * k * x * x - 1.0) * math.exp(-2.0 * k * k * x * x)
        s += term
        if abs(term) < tol:
            break
    return s


def _cvm_cdf(x: float, K: int, tol: float) -> float:
    """Anderson-Darling (1952) Bessel series for the Cramér-von Mises limit."""
    s = 0.0
    for k in range(K):
        y = (4 * k + 1) ** 2 / (16.0 * x)
        if 2 * y > 745.0:
            break
        c = math.exp(math.lgamma(k + 0.5) - math.lgamma(0.5) - math.lgamma(k + 1))
        # kve is the exponentially scaled K, so exp(-y) K(y) = kve(y) exp(-2y)
        term = c * math.sqrt(4 * k + 1) * special.kve(0.25, y) * math.exp(-2 * y)
        s += term
        if term < tol:
            break
    return s / (math.pi * math.sqrt(x))


def _ad_cdf(z: float, K: int, tol: float) -> float:
    """Anderson-Darling (1954) series for the Anderson-Darling limit."""
    s = 0.0
    for j in range(K):
        c = ((4 * j + 1) * math.pi) ** 2 / (8.0 * z)
        if c > 745.0:
            break
        # exp(-c) moved inside the integrand to avoid overflow for large z
        integral, _ = integrate.quad(
            lambda w: math.exp(z / (8.0 * (w * w + 1.0)) - c * (w * w + 1.0)),
            0.0, np.inf, epsabs=0.0, epsrel=1e-13, limit=200)
        term = special.binom(-0.5, j) * (4 * j + 1) * integral
        s += term
        if abs(term) < tol:
            break
    return math.sqrt(2 * math.pi) / z * s


def _smirnov_tail_sf(x: float, roots, det_abs, tol: float) -> float:
    """Upper tail of ``sum_k lam_k chi^2_1`` by Smirnov's inversion formula.

    ``roots[j]`` is ``1 / lam_{j+1}`` and ``det_abs(y)`` is ``|prod_k (1 - lam_k y)|``.
    Each integral has inverse square-root endpoint singularities, handled by an
    algebraic quadrature weight.  Accurate for moderate and large ``x``, where
    only the first few intervals contribute.
    """
    s = 0.0
    first = None
    for k in range(1, len(roots) // 2 + 1):
        a, b = roots[2 * k - 2], roots[2 * k - 1]
        lead = math.exp(-x * a / 2)
        if first is None:
            first = lead
        elif lead < tol * first * 1e-6:
            break

        def f(y):
            # e^{-xy/2} / (y sqrt(|D(y)|)) with the endpoint factor (y-a)(b-y) removed
            eps = 1e-9 * (b - a)
            y = min(max(y, a + eps), b - eps)
            return math.exp(-x * (y - a) / 2) / (y * math.sqrt(det_abs(y) / ((y - a) * (b - y))))

        val, _ = integrate.quad(f, a, b, weight="alg", wvar=(-0.5, -0.5),
                                epsabs=0.0, epsrel=1e-10, limit=200)
        s += (1 if k % 2 else -1) * lead * val
    return s / math.pi


def _cvm_tail_sf(x: float, tol: float) -> float:
    roots = [(j * math.pi) ** 2 for j in range(1, 41)]
    return _smirnov_tail_sf(x, roots, lambda y: abs(math.sin(math.sqrt(y)) / math.sqrt(y)), tol)


def _ad_tail_sf(x: float, tol: float) -> float:
    roots = [j * (j + 1.0) for j in range(1, 41)]
    return _smirnov_tail_sf(
        x, roots, lambda y: abs(math.cos(math.pi * math.sqrt(0.25 + y)) / (math.pi * y)), tol)


# beyond these the complementary series lose relative accuracy; switch to the tail form
_CVM_TAIL_X = 1.0
_AD_TAIL_X = 6.0


def asymptotic_sf(kind, x: float, K: int = SERIES_TERMS, tol: float = TAIL_TOLERANCE) -> float:
    """Survival function of the null limiting law of a classical statistic.

    Parameters
    ----------
    kind : StatisticKind or str
        ``D``, ``W2``, ``A2``, ``V`` or ``U2``.
    x : float
        Positive argument.
    K : int
        Maximum number of series terms.
    tol : float
        Summation stops once a term falls below this.
    """
    kind = as_kind(kind)
    if not kind.is_classical:
        raise KindMismatchError(f"{kind} has no closed-form limiting law")
    x = float(x)
    if not x > 0:
        raise DomainError("asymptotic_sf needs x > 0")
    if kind is StatisticKind.D:
        sf = _kolmogorov_sf(x, K, tol)
    elif kind is StatisticKind.V:
        sf = _kuiper_sf(x, K, tol)
    elif kind is StatisticKind.U2:
        sf = _kolmogorov_sf(math.pi * math.sqrt(x), K, tol)
    elif kind is StatisticKind.W2:
        sf = _cvm_tail_sf(x, tol) if x >= _CVM_TAIL_X else 1.0 - _cvm_cdf(x, K, tol)
    else:
        sf = _ad_tail_sf(x, tol) if x >= _AD_TAIL_X else 1.0 - _ad_cdf(x, K, tol)
    return min(max(sf, 0.0), 1.0)


@lru_cache(maxsize=8192)
def _quantile_cached(kind: StatisticKind, alpha: float) -> float:
    lo, hi = QUANTILE_BRACKET
    f = lambda x: asymptotic_sf(kind, x) - alpha
    # bracketed root first, then a Newton polish with a central difference
    x = optimize.brentq(f, lo, hi, xtol=1e-12, rtol=1e-14, maxiter=200)
    for _ in range(3):
        h = 1e-6 * x
        slope = (f(x + h) - f(x - h)) / (2 * h)
        if slope >= 0:
            break
        step = f(x) / slope
        x_new = x - step
        if not lo < x_new < hi or abs(step) < 1e-10:
            break
        x = x_new
    return x


def asymptotic_quantile(kind, alpha: float) -> float:
    """Upper ``alpha``-quantile ``T_{inf; alpha}`` of a classical limiting law."""
    kind = as_kind(kind)
    if not kind.is_classical:
        raise KindMismatchError(f"{kind} has no closed-form limiting law")
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0, 1)")
    return _quantile_cached(kind, float(alpha))


# ---------------------------------------------------------------------------
# critical tables
# ---------------------------------------------------------------------------

Key = Tuple[StatisticKind, Optional[int], float]


@dataclass
class CriticalTable:
    """Asymptotic upper quantiles keyed by ``(kind, p, alpha)``.

    ``p`` is ``None`` for classical kinds.  ``meta`` holds the provenance
    record written to the JSON sidecar.
    """

    entries: Dict[Key, float] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def provenance(self) -> str:
        return self.meta.get("provenance", "unknown")

    def add(self, kind, p, alpha, value):
        self.entries[(as_kind(kind), None if p is None else int(p), alpha_key(alpha))] = float(value)

    def lookup(self, kind, p, alpha) -> float:
        kind = as_kind(kind)
        key = (kind, None if p is None else int(p), alpha_key(alpha))
        try:
            return self.entries[key]
        except KeyError:
            raise TableMissError(kind.value, p, alpha) from None

    def column(self, kind, p, alphas) -> np.ndarray:
        return np.array([self.lookup(kind, p, a) for a in alphas])

    def keys_for(self, kind, p=None):
        kind = as_kind(kind)
        return sorted(a for (k, q, a) in self.entries if k is kind and q == p)

    def check_monotone(self):
        """Raise :class:`DataError` unless values strictly decrease in alpha."""
        groups = {}
        for (k, p, a), v in self.entries.items():
            groups.setdefault((k, p), []).append((a, v))
        for (k, p), rows in groups.items():
            vals = [v for _, v in sorted(rows)]
            if np.any(np.diff(vals) >= 0):
                raise DataError(f"critical values for {k} p={p} are not decreasing in alpha")

    def to_csv(self, path):
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "p", "alpha", "value"])
            for (k, p, a), v in sorted(self.entries.items(),
                                       key=lambda t: (t[0][0].code, t[0][1] or 0, t[0][2])):
                w.writerow([k.value, "" if p is None else p, repr(a), repr(v)])
        with open(path.with_suffix(".json"), "w") as fh:
            json.dump(self.meta, fh, indent=2, sort_keys=True)

    @classmethod
    def from_csv(cls, path) -> "CriticalTable":
        path = Path(path)
        table = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                p = int(row["p"]) if row["p"] else None
                table.add(row["kind"], p, float(row["alpha"]), float(row["value"]))
        side = path.with_suffix(".json")
        if side.exists():
            table.meta = json.loads(side.read_text())
        return table


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def build_classical_table(kinds: Iterable = CLASSICAL, alphas=None) -> CriticalTable:
    """Series-based asymptotic quantiles for the classical kinds."""
    if alphas is None:
        alphas = AlphaGrid().used
    table = CriticalTable(meta={"provenance": "series", "M": None, "seed": None,
                                "n_asymptotic": None, "created": _now()})
    for kind in kinds:
        for a in alphas:
            table.add(kind, None, a, asymptotic_quantile(kind, a))
    return table


def _data_file(name: str):
    return resources.files("gofstab").joinpath("data").joinpath(name)


@lru_cache(maxsize=1)
def classical_table() -> CriticalTable:
    """Asymptotic quantiles of the classical kinds on the default grid.

    Loaded from the packaged CSV when present, otherwise computed.
    """
    f = _data_file("classical_critical.csv")
    if f.is_file():
        with resources.as_file(f) as path:
            return CriticalTable.from_csv(path)
    return build_classical_table()


# published asymptotic critical values of the directional statistics, p = 2..11
_PUBLISHED_P = tuple(range(2, 12))
_PUBLISHED = {
    (StatisticKind.PCvM, 0.10): "0.3035 0.2768 0.2606 0.2500 0.2421 0.2361 0.2312 0.2272 0.2239 0.2210",
    (StatisticKind.PCvM, 0.05): "0.3735 0.3288 0.3027 0.2858 0.2735 0.2641 0.2568 0.2508 0.2458 0.2416",
    (StatisticKind.PCvM, 0.01): "0.5358 0.4461 0.3960 0.3638 0.3413 0.3244 0.3115 0.3008 0.2922 0.2849",
    (StatisticKind.PAD, 0.10): "1.6871 1.5604 1.4816 1.4279 1.3883 1.3576 1.3327 1.3124 1.2957 1.2809",
    (StatisticKind.PAD, 0.05): "2.0293 1.8214 1.6951 1.6106 1.5494 1.5023 1.4651 1.4347 1.4092 1.3875",
    (StatisticKind.PAD, 0.01): "2.8197 2.4096 2.1679 2.0090 1.8969 1.8126 1.7471 1.6931 1.6493 1.6121",
    (StatisticKind.NBak, 0.10): "2.4034 2.2141 2.1003 2.0231 1.9673 1.9238 1.8887 1.8601 1.8367 1.8158",
    (StatisticKind.NBak, 0.05): "2.9906 2.6305 2.4320 2.3034 2.2119 2.1423 2.0879 2.0437 2.0067 1.9752",
    (StatisticKind.NBak, 0.01): "4.3495 3.5687 3.1669 2.9136 2.7402 2.6112 2.5124 2.4314 2.3661 2.3108",
}


def published_projected_table() -> CriticalTable:
    """Published ``T_{500,p;alpha}`` values for ``alpha`` in {0.10, 0.05, 0.01}."""
    table = CriticalTable(meta={"provenance": "mc_n500", "M": 10 ** 7, "seed": None,
                                "n_asymptotic": 500, "created": None, "source": "published"})
    for (kind, alpha), row in _PUBLISHED.items():
        for p, v in zip(_PUBLISHED_P, row.split()):
            table.add(kind, p, alpha, float(v))
    return table


@lru_cache(maxsize=1)
def default_projected_table() -> CriticalTable:
    """Dense-grid critical table of the directional kinds shipped with the package."""
    f = _data_file("projected_critical.csv")
    if not f.is_file():
        raise DataError("packaged projected critical table is missing; "
                        "rebuild it with build_projected_table")
    with resources.as_file(f) as path:
        return CriticalTable.from_csv(path)


def projected_asymptotic_quantile(kind, p: int, alpha: float, table: Optional[CriticalTable] = None) -> float:
    """Exact-alpha lookup of ``T_{inf,p; alpha}``; no interpolation in alpha.

    Defaults to the published table, which covers ``p = 2..11`` at
    ``alpha`` in {0.10, 0.05, 0.01}.
    """
    kind = as_kind(kind)
    if not kind.is_spherical:
        raise KindMismatchError(f"{kind} is not a directional statistic")
    if table is None:
        table = published_projected_table()
    return table.lookup(kind, p, alpha)


# ---------------------------------------------------------------------------
# building directional tables by simulation
# ---------------------------------------------------------------------------

BLOCK = 50_000


def upper_quantiles(sorted_values: np.ndarray, alphas) -> np.ndarray:
    """Type-1 upper quantiles: order statistic ``ceil(M (1 - alpha))`` (1-based)."""
    M = sorted_values.shape[-1]
    idx = np.ceil(M * (1.0 - np.asarray(alphas, dtype=float)) - 1e-9).astype(int)
    idx = np.clip(idx, 1, M)
    return sorted_values[..., idx - 1]


def _block_draws(kind: StatisticKind, p: int, n: int, seed: int, block: int, size: int,
                 engine: str) -> np.ndarray:
    ss = np.random.SeedSequence(seed, spawn_key=(kind.code, p, block))
    rng = np.random.default_rng(ss)
    if engine == "spectral":
        from .kernels import sample_limit_law

        return sample_limit_law(kind, p, size, rng)
    from .kernels import pairwise_statistic_batch

    out = np.empty(size)
    step = max(1, 2_000_000 // (n * p))
    for s in range(0, size, step):
        m = min(step, size - s)
        x = rng.standard_normal((m, n, p))
        x /= np.linalg.norm(x, axis=2, keepdims=True)
        out[s:s + m] = pairwise_statistic_batch(kind, x)
    return out


def _draw_kind(args):
    return _block_draws(*args)


def build_projected_table(kind, P: Iterable[int], alphas=None, M: int = 10 ** 6,
                          seed: int = 0, engine: str = "spectral", n: int = 500,
                          workers: int = 1) -> CriticalTable:
    """Simulate ``T_{n,p}`` ``M`` times per ``p`` and tabulate upper quantiles.

    Parameters
    ----------
    kind : {"PCvM", "PAD", "NBak"}
    P : iterable of int
        Dimensions.
    alphas : array_like, optional
        Levels to tabulate; defaults to the used part of ``AlphaGrid()``.
    M : int
        Replicates per dimension, at least 1000.
    seed : int
        Root seed.  Block ``b`` of dimension ``p`` uses the sub-stream
        ``(seed, kind, p, b)``, so results do not depend on ``workers``.
    engine : {"spectral", "pairwise"}
        ``"spectral"`` draws from the limiting law ``sum_k lambda_k chi2_{d_k}``
        (the large-n proxy the table stands for); ``"pairwise"`` simulates
        samples of size ``n`` and evaluates the exact V-statistic.
    n : int
        Sample size for the pairwise engine.
    workers : int
        Processes used for the replicate blocks.
    """
    kind = as_kind(kind)
    if not kind.is_spherical:
        raise KindMismatchError(f"{kind} is not a directional statistic")
    if M < 1000:
        raise DomainError("build_projected_table needs M >= 1000")
    if engine not in ("spectral", "pairwise"):
        raise DomainError(f"unknown engine {engine!r}")
    if alphas is None:
        alphas = AlphaGrid().used
    alphas = np.asarray(alphas, dtype=float)
    table = CriticalTable(meta={"provenance": "mc_n500", "M": int(M), "seed": int(seed),
                                "n_asymptotic": int(n), "engine": engine, "created": _now()})
    for p in P:
        p = int(p)
        jobs = [(kind, p, n, seed, b, min(BLOCK, M - b * BLOCK), engine)
                for b in range(math.ceil(M / BLOCK))]
        if workers > 1:
            with ProcessPoolExecutor(workers) as ex:
                parts = list(ex.map(_draw_kind, jobs))
        else:
            parts = [_draw_kind(j) for j in jobs]
        draws = np.sort(np.concatenate(parts))
        for a, v in zip(alphas, upper_quantiles(draws, alphas)):
            table.add(kind, p, a, v)
    return table


def asymptotic_critical_values(kind, p: Optional[int] = None, alphas=None,
                               table: Optional[CriticalTable] = None) -> np.ndarray:
    """``T_{inf; alpha}`` over ``alphas`` for any kind, from series or tables."""
    kind = as_kind(kind)
    if alphas is None:
        alphas = AlphaGrid().used
    if kind.is_classical:
        if table is None:
            table = classical_table()
        try:
            return table.column(kind, None, alphas)
        except TableMissError:
            return np.array([asymptotic_quantile(kind, a) for a in alphas])
    if p is None:
        raise DomainError(f"{kind} needs the dimension p")
    if table is None:
        table = default_projected_table()
    return table.column(kind, p, alphas)
