"""Upper-tail p-values from stabilized statistics without simulation.

Given the asymptotic quantiles ``T_{inf; alpha_j}`` on a grid of levels, the
p-value is the level ``alpha*`` at which the stabilized statistic
``T g(n, alpha)`` crosses the linear interpolant of the asymptotic
quantiles.  The first grid level where ``T g(n, alpha_j) > T_{inf; alpha_j}``
gives the bracket; Newton-Raphson solves for the crossing inside it.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Tuple

import numpy as np
from numba import njit

from .asymptotics import AlphaGrid, CriticalTable, asymptotic_critical_values
from .errors import ConfigurationError, DataError, KindMismatchError, ValidityError
from .kinds import StatisticKind, as_kind
from .stabilizer import DimStabilizedForm, StabilizedForm, default_form
from .statistics import StatisticValue

__all__ = ["AlphaGrid", "PValueResult", "PValueEngine", "approx_pvalue", "reject",
           "engine_for", "pvalue_batch"]

NEWTON = "newton"
EXTRAPOLATED = "extrapolated"
CAPPED = "capped"
_METHODS = (NEWTON, EXTRAPOLATED, CAPPED)


class PValueResult(NamedTuple):
    value: float
    bracket: Optional[Tuple[float, float]]
    method: str

    def __str__(self) -> str:
        if self.method == CAPPED:
            return f">={self.value:g}"
        return f"{self.value:.6g}"


_new_result = tuple.__new__


@njit(cache=True, inline="always")
def _apow1(alpha, b):
    # alpha ** -b with the common half-integer exponents special-cased
    if b == 0.0:
        return 1.0
    if b == 0.5:
        return 1.0 / np.sqrt(alpha)
    if b == 1.0:
        return 1.0 / alpha
    return alpha ** (-b)


@njit(cache=True, inline="always")
def _g(T, npow, coeff, alpha, aexp):
    # T * g(n, alpha) and its alpha-derivative at an arbitrary alpha
    g = 1.0
    dg = 0.0
    for k in range(coeff.shape[0]):
        c = coeff[k] * npow[k]
        a = _apow1(alpha, aexp[k])
        g += c * a
        dg -= aexp[k] * c * a / alpha
    return T * g, T * dg


@njit(cache=True, inline="always")
def _crosses(T, coeff, npow, apow, tinf, i):
    g = 1.0
    for k in range(coeff.shape[0]):
        g += coeff[k] * npow[k] * apow[k, i]
    return T * g > tinf[i]


@njit(cache=True)
def _thresholds(n, grid, terms):
    """``tinf_i / g(n, alpha_i)`` if these are nonincreasing in i, else an empty array."""
    tinf = grid[1]
    apow = grid[2:]
    nexp = terms[0]
    coeff = terms[2]
    K = coeff.shape[0]
    J = tinf.shape[0]
    out = np.empty(J)
    for i in range(J):
        g = 1.0
        for k in range(K):
            g += coeff[k] * n ** (-nexp[k]) * apow[k, i]
        if g <= 0.0:
            return np.empty(0)
        out[i] = tinf[i] / g
        if i > 0 and out[i] > out[i - 1]:
            return np.empty(0)
    return out


_HEADER = 4


def _pack(grid, terms, n, max_iter, tol):
    """One flat buffer with everything ``_solve`` needs for sample size ``n``.

    Layout: ``K, J, max_iter, tol``, the ``(2 + K) x J`` grid, the ``3 x K``
    terms, ``n^{-a_k}`` and finally the thresholds (empty when not monotone).
    A single array argument keeps the compiled call's dispatch cost low.
    """
    K = terms.shape[1]
    J = grid.shape[1]
    npow = float(n) ** -terms[0]
    crit = _thresholds(float(n), grid, terms)
    return np.concatenate([[K, J, max_iter, tol], grid.ravel(), terms.ravel(), npow, crit])


@njit(cache=True)
def _solve(T, buf):
    """Return (value, alpha1, alpha2, method code 0/1/2) from a ``_pack`` buffer."""
    K = int(buf[0])
    J = int(buf[1])
    o = _HEADER
    grid = buf[o:o + (2 + K) * J].reshape((2 + K, J))
    o += (2 + K) * J
    terms = buf[o:o + 3 * K].reshape((3, K))
    o += 3 * K
    return _solve_core(T, grid, terms, buf[o:o + K], buf[o + K:], int(buf[2]), buf[3])


def _direct_entry(dispatcher, signature):
    """Compiled entry point for one signature, skipping per-call type dispatch.

    Falls back to the dispatcher if numba does not expose the entry point.
    """
    dispatcher.compile(signature)
    try:
        return dispatcher.overloads[dispatcher.signatures[-1]].entry_point
    except (AttributeError, KeyError, IndexError):
        return dispatcher


@njit(cache=True, inline="always")
def _solve_core(T, grid, terms, npow, crit, max_iter, tol):
    # grid rows: levels, asymptotic quantiles, level powers alpha_j^{-b_k};
    # terms rows: n-exponents, alpha-exponents, coefficients
    alphas = grid[0]
    tinf = grid[1]
    apow = grid[2:]
    aexp = terms[1]
    coeff = terms[2]
    K = coeff.shape[0]
    J = alphas.shape[0]
    j = -1
    if crit.shape[0] == J:
        # thresholds tinf_i / g_i nonincreasing: binary search, then confirm exactly
        lo = 0
        hi = J
        while lo < hi:
            mid = (lo + hi) // 2
            if T > crit[mid]:
                hi = mid
            else:
                lo = mid + 1
        j = lo
        while j > 0 and _crosses(T, coeff, npow, apow, tinf, j - 1):
            j -= 1
        while j < J and not _crosses(T, coeff, npow, apow, tinf, j):
            j += 1
        if j == J:
            j = -1
    else:
        for i in range(J):
            if _crosses(T, coeff, npow, apow, tinf, i):
                j = i
                break
    if j < 0:
        return 0.25, 0.0, 0.0, 2
    if j == 0:
        a1 = alphas[0]
        a2 = alphas[1]
        t1 = tinf[0]
        t2 = tinf[1]
    else:
        a1 = alphas[j - 1]
        a2 = alphas[j]
        t1 = tinf[j - 1]
        t2 = tinf[j]
    slope = (t2 - t1) / (a2 - a1)
    if j == 0:
        # extrapolate the line through the two smallest levels towards 0: take the
        # first sign change on the halving sequence a1 / 2^k, then bisect; the
        # result is nonincreasing in T because T g - line is increasing in T
        hi = a1
        lo = a1
        found = False
        for _ in range(80):
            lo = 0.5 * hi
            ts, _ = _g(T, npow, coeff, lo, aexp)
            if ts - (t1 + slope * (lo - a1)) <= 0.0:
                found = True
                break
            hi = lo
        if not found:
            return 0.0, a1, a2, 1
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            ts, _ = _g(T, npow, coeff, mid, aexp)
            if ts - (t1 + slope * (mid - a1)) > 0.0:
                hi = mid
            else:
                lo = mid
            if hi - lo < tol * 1e-3 * a1:
                break
        return 0.5 * (lo + hi), a1, a2, 1
    # Newton from a1, safeguarded: the bracket [lo, hi] around the root shrinks
    # with every evaluation and a step that would leave it is replaced by bisection
    lo = a1
    hi = a2
    x = a1
    for _ in range(max_iter + 200):
        ts, dts = _g(T, npow, coeff, x, aexp)
        h = ts - (t1 + slope * (x - a1))
        if h > 0.0:
            hi = x
        else:
            lo = x
        dh = dts - slope
        x_new = x - h / dh if dh != 0.0 else lo - 1.0
        if not lo <= x_new <= hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) < tol or hi - lo < tol:
            x = x_new
            break
        x = x_new
    return x, a1, a2, 0


_solve_fast = _direct_entry(_solve, "(float64, float64[::1])")


@dataclass
class PValueEngine:
    """Precomputed ingredients of the p-value for one (kind, p, form, table).

    Calling the engine with ``(T, n)`` runs the compiled root finder; the
    level powers ``alpha_j^{-b_k}`` are tabulated once here.
    """

    kind: StatisticKind
    form: StabilizedForm
    alphas: np.ndarray
    tinf: np.ndarray
    p: Optional[int] = None
    max_iter: int = 50
    tol: float = 1e-10

    def __post_init__(self):
        self.alphas = np.ascontiguousarray(self.alphas, dtype=float)
        self.tinf = np.ascontiguousarray(self.tinf, dtype=float)
        if self.alphas.shape != self.tinf.shape or self.alphas.size < 2:
            raise DataError("alpha grid and asymptotic quantiles must align and have >= 2 points")
        if np.any(np.diff(self.alphas) <= 0):
            raise DataError("alpha grid must be strictly increasing")
        if np.any(np.diff(self.tinf) >= 0):
            raise DataError("asymptotic quantiles must be strictly decreasing over the grid")
        self._nexp, self._aexp, self._coeff = self.form.arrays()
        apow = self.alphas[None, :] ** (-self._aexp[:, None])
        self._grid = np.ascontiguousarray(np.vstack([self.alphas, self.tinf, apow]))
        self._terms = np.ascontiguousarray(np.vstack([self._nexp, self._aexp, self._coeff]))
        self._n_min = self.form.n_min
        self._per_n = {}

    def raw(self, T: float, n: int):
        return _solve_fast(float(T), self._buffer(n))

    def _buffer(self, n):
        buf = self._per_n.get(n)
        if buf is None:
            if n < self._n_min:
                raise ValidityError(f"n={n} below n_min={self._n_min}")
            if len(self._per_n) > 1024:
                self._per_n.clear()
            buf = self._per_n[n] = _pack(self._grid, self._terms, n, self.max_iter, self.tol)
        return buf

    def __call__(self, T: float, n: int) -> PValueResult:
        buf = self._per_n.get(n)
        if buf is None:
            buf = self._buffer(n)
        v, a1, a2, m = _solve_fast(float(T), buf)
        return _new_result(PValueResult, (v, None if m == 2 else (a1, a2), _METHODS[m]))

    def stabilized(self, T: float, n: int) -> np.ndarray:
        """``T g(n, alpha_j)`` over the grid."""
        return T * self.form.value(n, self.alphas)


_ENGINES = {}
_DEFAULT_ENGINES = {}


def engine_for(kind, p: Optional[int] = None, form=None, grid: Optional[AlphaGrid] = None,
               T_inf=None, table: Optional[CriticalTable] = None) -> PValueEngine:
    """Build (or fetch from cache) the engine for the given ingredients."""
    kind = as_kind(kind)
    if grid is None:
        grid = AlphaGrid()
    if form is None:
        form = default_form(kind)
    if isinstance(form, DimStabilizedForm):
        if p is None:
            raise ConfigurationError(f"{kind} needs the dimension p")
        if not form.p_range[0] <= p <= form.p_range[1]:
            raise ValidityError(f"p={p} outside [{form.p_range[0]}, {form.p_range[1]}]")
        form = form.at(p)
    if not isinstance(form, StabilizedForm):
        raise ConfigurationError("p-values need an (n, alpha) or (n, p, alpha) form")
    if form.kind is not kind:
        raise KindMismatchError(f"form is for {form.kind}, not {kind}")
    alphas = grid.used
    if T_inf is not None:
        return PValueEngine(kind, form, alphas, np.asarray(T_inf, dtype=float), p)
    key = (kind, p, form, grid, id(table))
    eng = _ENGINES.get(key)
    if eng is None:
        eng = PValueEngine(kind, form, alphas, asymptotic_critical_values(kind, p, alphas, table), p)
        _ENGINES[key] = eng
    return eng


def approx_pvalue(T, n: Optional[int] = None, p: Optional[int] = None, form=None,
                  grid: Optional[AlphaGrid] = None, T_inf=None, kind=None,
                  table: Optional[CriticalTable] = None) -> PValueResult:
    """Approximate upper-tail p-value of a statistic.

    Parameters
    ----------
    T : StatisticValue or float
        The statistic.  A plain float needs ``kind`` and ``n`` and is taken
        on the scale of the limiting law (``sqrt(n) D_n`` for ``D``).
    n, p : int, optional
        Sample size and dimension (taken from ``T`` when it is a StatisticValue).
    form : StabilizedForm or DimStabilizedForm, optional
        Defaults to the built-in form of the kind.
    grid : AlphaGrid, optional
        Defaults to ``AlphaGrid(1000)``; only levels up to 0.25 are scanned.
    T_inf : array_like, optional
        Asymptotic quantiles over ``grid.used``; defaults to the series
        (classical kinds) or the packaged table (directional kinds).

    Returns
    -------
    PValueResult
        ``method`` is ``"newton"`` inside a grid bracket, ``"extrapolated"``
        below the smallest level and ``"capped"`` (value 0.25) when the
        statistic is not significant at any level up to 0.25.
    """
    if isinstance(T, StatisticValue):
        kind = T.kind
        n = T.n if n is None else n
        p = T.p if p is None else p
        value = T.scaled
    else:
        if kind is None or n is None:
            raise ConfigurationError("a plain statistic value needs kind and n")
        value = T
    if form is None and grid is None and T_inf is None and table is None:
        eng = _DEFAULT_ENGINES.get((kind, p))
        if eng is None:
            eng = _DEFAULT_ENGINES[(kind, p)] = engine_for(kind, p)
    else:
        eng = engine_for(kind, p, form, grid, T_inf, table)
    # same as eng(value, n), spelled out to save a call on the hot path
    buf = eng._per_n.get(n)
    if buf is None:
        buf = eng._buffer(n)
    v, a1, a2, m = _solve_fast(float(value), buf)
    return _new_result(PValueResult, (v, None if m == 2 else (a1, a2), _METHODS[m]))


def reject(T, alpha: float, n: Optional[int] = None, p: Optional[int] = None, form=None,
           kind=None, table: Optional[CriticalTable] = None) -> bool:
    """Reject at level ``alpha`` iff ``T g(n, alpha) > T_{inf; alpha}``."""
    from .stabilizer import asymptotic_critical_value, stabilize

    if isinstance(T, StatisticValue):
        kind = T.kind
        n = T.n if n is None else n
        p = T.p if p is None else p
        value = T.scaled
    else:
        if kind is None or n is None:
            raise ConfigurationError("a plain statistic value needs kind and n")
        value = float(T)
    kind = as_kind(kind)
    if not 0.0 < alpha <= 0.25:
        raise ValidityError(f"alpha={alpha} outside (0, 0.25]")
    if form is None:
        form = default_form(kind)
    t_star = stabilize(value, alpha, form, n=n, p=p)
    if table is None and kind.is_spherical:
        from .asymptotics import default_projected_table

        table = default_projected_table()
    return bool(t_star > asymptotic_critical_value(kind, alpha, p, table))


def pvalue_batch(rows: Iterable, kind, form=None, table: Optional[CriticalTable] = None):
    """p-values for ``(statistic, n[, p])`` rows; yields ``(T, n, p, PValueResult)``."""
    kind = as_kind(kind)
    for row in rows:
        T = float(row[0])
        n = int(row[1])
        p = int(row[2]) if len(row) > 2 and row[2] not in ("", None) else None
        yield T, n, p, approx_pvalue(T, n=n, p=p, form=form, kind=kind, table=table)


def pvalue_batch_csv(src, dst, kind, form=None, table=None):
    """Read ``statistic,n[,p]`` rows from ``src`` and write results to ``dst``."""
    with open(src, newline="") as fh:
        reader = csv.reader(fh)
        rows = []
        for lineno, row in enumerate(reader, 1):
            if not row or row[0].strip().lower() in ("statistic", ""):
                continue
            try:
                float(row[0]), int(row[1])
            except (ValueError, IndexError):
                raise DataError(f"line {lineno}: expected statistic,n[,p]") from None
            rows.append(row)
    with open(dst, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["statistic", "n", "p", "pvalue", "method"])
        for T, n, p, res in pvalue_batch(rows, kind, form, table):
            w.writerow([T, n, "" if p is None else p, repr(res.value), res.method])


def monte_carlo_pvalue(kind, T: float, n: int, trials: int = 10_000, rng=None, p: Optional[int] = None) -> float:
    """Brute-force upper-tail p-value from ``trials`` null replicates (reference method)."""
    from .simulation import simulate_statistics

    if rng is None:
        rng = np.random.default_rng()
    sims = simulate_statistics(as_kind(kind), n, trials, rng, p)
    return float((1 + np.sum(sims >= T)) / (trials + 1))
