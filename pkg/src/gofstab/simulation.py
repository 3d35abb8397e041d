"""Monte Carlo null distributions, quantile tables and ratio datasets.

Replicates are drawn in fixed-size blocks.  Block ``b`` of cell ``(n, p)``
uses its own generator seeded from ``(seed, kind, n, p, b)``, so a table is
bit-identical whatever the number of worker processes.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import PchipInterpolator

from .asymptotics import AlphaGrid, CriticalTable, asymptotic_quantile, upper_quantiles
from .errors import BoundaryError, DataError, DomainError
from .kernels import pairwise_statistic_batch
from .kinds import StatisticKind, as_kind
from .statistics import _classical_sorted, asymptotic_scale

TABLE_VERSION = "1"
BLOCK = 10_000
_MAX_FLOATS = 4_000_000


def substream(seed: int, kind, n: int, p: Optional[int], block: int) -> np.random.Generator:
    """Generator for one replicate block of one table cell."""
    kind = as_kind(kind)
    ss = np.random.SeedSequence(int(seed), spawn_key=(kind.code, int(n), int(p or 0), int(block)))
    return np.random.default_rng(ss)


def uniform_sphere(rng: np.random.Generator, size, p: int) -> np.ndarray:
    """Uniform points on S^{p-1} as normalized Gaussian vectors, shape ``size + (p,)``."""
    shape = (size,) if np.isscalar(size) else tuple(size)
    x = rng.standard_normal(shape + (p,))
    x /= np.linalg.norm(x, axis=-1, keepdims=True)
    return x


def simulate_statistics(kind, n: int, size: int, rng: np.random.Generator,
                        p: Optional[int] = None) -> np.ndarray:
    """``size`` independent draws of ``T_n`` under the null.

    Classical statistics are returned on the scale of their limiting law,
    so ``D`` and ``V`` come out as ``sqrt(n) D_n`` and ``sqrt(n) V_n``.
    """
    kind = as_kind(kind)
    if n < 1 or size < 1:
        raise DomainError("n and size must be positive")
    if kind.is_spherical and (p is None or p < 2):
        raise DomainError(f"{kind} needs a dimension p >= 2")
    out = np.empty(size)
    width = n * (p or 1)
    step = max(1, _MAX_FLOATS // width)
    for s in range(0, size, step):
        m = min(step, size - s)
        if kind.is_classical:
            u = np.sort(rng.random((m, n)), axis=1)
            out[s:s + m] = _classical_sorted(kind, u, clamp=kind is StatisticKind.A2) * asymptotic_scale(kind, n)
        else:
            out[s:s + m] = pairwise_statistic_batch(kind, uniform_sphere(rng, (m, n), p))
    return np.maximum(out, 0.0)


def simulate_classical_family(n: int, size: int, rng: np.random.Generator, kinds=None) -> dict:
    """Draws of several classical statistics computed on the same samples."""
    kinds = [as_kind(k) for k in (kinds or ("D", "W2", "A2", "V", "U2"))]
    out = {k: np.empty(size) for k in kinds}
    step = max(1, _MAX_FLOATS // n)
    for s in range(0, size, step):
        m = min(step, size - s)
        u = np.sort(rng.random((m, n)), axis=1)
        for k in kinds:
            out[k][s:s + m] = _classical_sorted(k, u, clamp=k is StatisticKind.A2) * asymptotic_scale(k, n)
    return out


def sample_null(kind, n: int, p: Optional[int] = None, stream=None) -> float:
    """One replicate of ``T_n`` under the null.

    ``stream`` is a Generator, a seed, or a tuple ``(seed, replicate)``; the
    tuple form always maps to the same draw.
    """
    kind = as_kind(kind)
    if isinstance(stream, tuple):
        seed, rep = stream
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(kind.code, n, p or 0, 1 << 30, rep)))
    elif isinstance(stream, np.random.Generator):
        rng = stream
    else:
        rng = np.random.default_rng(stream)
    return float(simulate_statistics(kind, n, 1, rng, p)[0])


# ---------------------------------------------------------------------------
# quantile tables
# ---------------------------------------------------------------------------

@dataclass
class QuantileTable:
    """Upper quantiles ``T_{n,[p];alpha}`` over the full alpha grid.

    ``values`` has shape ``(len(n_list), len(p_list) or 1, grid.A)``.
    """

    kind: StatisticKind
    n_list: tuple
    p_list: Optional[tuple]
    grid: AlphaGrid
    values: np.ndarray
    M: int
    seed: int
    version: str = TABLE_VERSION
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.kind = as_kind(self.kind)
        self.n_list = tuple(int(n) for n in self.n_list)
        self.p_list = None if self.p_list is None else tuple(int(p) for p in self.p_list)
        self.values = np.asarray(self.values, dtype=float)
        expect = (len(self.n_list), len(self.p_list or (None,)), self.grid.A)
        if self.values.shape != expect:
            raise DataError(f"values shape {self.values.shape} != {expect}")

    @property
    def alphas(self) -> np.ndarray:
        return self.grid.values

    def _index(self, n, p):
        try:
            i = self.n_list.index(int(n))
        except ValueError:
            raise DataError(f"n={n} not in table") from None
        if self.p_list is None:
            return i, 0
        try:
            return i, self.p_list.index(int(p))
        except (ValueError, TypeError):
            raise DataError(f"p={p} not in table") from None

    def cell(self, n: int, p: Optional[int] = None) -> np.ndarray:
        i, j = self._index(n, p)
        return self.values[i, j]

    def quantile(self, n: int, alpha: float, p: Optional[int] = None) -> float:
        a = alpha * self.grid.A
        if abs(a - round(a)) > 1e-9 or not 1 <= round(a) <= self.grid.A:
            raise DataError(f"alpha={alpha} is not on the table grid")
        return float(self.cell(n, p)[int(round(a)) - 1])

    def to_csv(self, path):
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "n", "p", "alpha", "quantile"])
            for i, n in enumerate(self.n_list):
                for j, p in enumerate(self.p_list or (None,)):
                    for a, v in zip(self.alphas, self.values[i, j]):
                        w.writerow([self.kind.value, n, "" if p is None else p, repr(float(a)), repr(float(v))])
        meta = {"M": self.M, "seed": self.seed, "alpha_A": self.grid.A, "n_list": list(self.n_list),
                "p_list": None if self.p_list is None else list(self.p_list),
                "version": self.version, "kind": self.kind.value, **self.extra}
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    @classmethod
    def from_csv(cls, path) -> "QuantileTable":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        n_list = tuple(meta["n_list"])
        p_list = None if meta.get("p_list") is None else tuple(meta["p_list"])
        A = int(meta["alpha_A"])
        values = np.full((len(n_list), len(p_list or (None,)), A), np.nan)
        n_idx = {n: i for i, n in enumerate(n_list)}
        p_idx = {p: j for j, p in enumerate(p_list or (None,))}
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.DictReader(fh), 2):
                try:
                    p = int(row["p"]) if row["p"] else None
                    a = int(round(float(row["alpha"]) * A))
                    values[n_idx[int(row["n"])], p_idx[p], a - 1] = float(row["quantile"])
                except (KeyError, ValueError) as exc:
                    raise DataError(f"{path}:{lineno}: bad quantile row ({exc})") from None
        if np.isnan(values).any():
            raise DataError(f"{path}: quantile table is incomplete")
        extra = {k: v for k, v in meta.items()
                 if k not in ("M", "seed", "alpha_A", "n_list", "p_list", "version", "kind")}
        return cls(meta["kind"], n_list, p_list, AlphaGrid(A), values,
                   int(meta["M"]), int(meta["seed"]), str(meta.get("version", TABLE_VERSION)), extra)


def _cell_draws(args):
    kind, n, p, M, seed, block = args
    parts = []
    for b in range(math.ceil(M / block)):
        m = min(block, M - b * block)
        parts.append(simulate_statistics(kind, n, m, substream(seed, kind, n, p, b), p))
    return np.concatenate(parts)


def build_quantile_table(kind, N: Sequence[int], grid: Optional[AlphaGrid] = None, M: int = 10 ** 5,
                         P: Optional[Sequence[int]] = None, seed: int = 0, workers: int = 1,
                         block: int = BLOCK) -> QuantileTable:
    """Simulate ``M`` null replicates per cell and keep only the grid quantiles.

    The upper ``alpha``-quantile is the order statistic at 1-based index
    ``ceil(M (1 - alpha))``; ``alpha = 1`` therefore returns the minimum.
    """
    kind = as_kind(kind)
    if M < 1000:
        raise DomainError("build_quantile_table needs M >= 1000")
    if grid is None:
        grid = AlphaGrid()
    if kind.is_spherical and not P:
        raise DomainError(f"{kind} tables need a set of dimensions P")
    Ps = tuple(P) if kind.is_spherical else (None,)
    jobs = [(kind, int(n), p, int(M), int(seed), int(block)) for n in N for p in Ps]
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            draws = list(ex.map(_cell_draws, jobs))
    else:
        draws = [_cell_draws(j) for j in jobs]
    alphas = grid.values
    values = np.empty((len(N), len(Ps), grid.A))
    for idx, d in enumerate(draws):
        d.sort()
        values[idx // len(Ps), idx % len(Ps)] = upper_quantiles(d, alphas)
    return QuantileTable(kind, tuple(N), tuple(P) if kind.is_spherical else None, grid, values,
                         int(M), int(seed), extra={"block": int(block)})


# ---------------------------------------------------------------------------
# ratio datasets and densities
# ---------------------------------------------------------------------------

@dataclass
class RatioDataset:
    """Regression rows ``(n, p, alpha, Y = T_{inf;alpha} / T_{n;alpha})``."""

    kind: StatisticKind
    n: np.ndarray
    p: Optional[np.ndarray]
    alpha: np.ndarray
    Y: np.ndarray
    T_n: np.ndarray
    T_inf: np.ndarray
    M: int
    density: Optional[np.ndarray] = None

    def __len__(self):
        return self.Y.size

    def subset(self, mask) -> "RatioDataset":
        mask = np.asarray(mask)
        return RatioDataset(self.kind, self.n[mask], None if self.p is None else self.p[mask],
                            self.alpha[mask], self.Y[mask], self.T_n[mask], self.T_inf[mask], self.M,
                            None if self.density is None else self.density[mask])


def _classical_asymptotic(kind, alphas):
    return np.array([asymptotic_quantile(kind, a) for a in alphas])


def ratio_dataset(table: QuantileTable, asymptotic: Optional[CriticalTable] = None,
                  alpha_max: Optional[float] = None, with_density: bool = False) -> RatioDataset:
    """One row per table cell and grid level.

    Classical kinds take ``T_{inf;alpha}`` from the series (or ``asymptotic``
    when given); directional kinds need ``asymptotic`` to hold
    ``T_{inf,p;alpha}`` on the same grid and levels above the largest level
    in it are dropped.  ``alpha = 1`` is always dropped (the upper quantile
    there is the sample minimum, with no asymptotic counterpart).
    """
    kind = table.kind
    alphas = table.alphas[:-1]
    if alpha_max is not None:
        alphas = alphas[alphas <= alpha_max + 1e-12]
    a_idx = np.rint(alphas * table.grid.A).astype(int) - 1
    rows = {k: [] for k in ("n", "p", "alpha", "Tn", "Tinf", "dens")}
    for i, n in enumerate(table.n_list):
        for j, p in enumerate(table.p_list or (None,)):
            if kind.is_classical:
                if asymptotic is None:
                    tinf = _classical_asymptotic(kind, alphas)
                else:
                    tinf = asymptotic.column(kind, None, alphas)
                use = np.ones(alphas.size, bool)
            else:
                if asymptotic is None:
                    raise DataError("directional kinds need an asymptotic critical table")
                have = set(asymptotic.keys_for(kind, p))
                use = np.array([round(float(a), 10) in have for a in alphas])
                tinf = np.full(alphas.size, np.nan)
                tinf[use] = asymptotic.column(kind, p, alphas[use])
            tn = table.values[i, j, a_idx]
            if np.any(tn[use] <= 0):
                raise DataError(f"nonpositive quantile for n={n} p={p}")
            rows["n"].append(np.full(use.sum(), n))
            rows["p"].append(np.full(use.sum(), -1 if p is None else p))
            rows["alpha"].append(alphas[use])
            rows["Tn"].append(tn[use])
            rows["Tinf"].append(tinf[use])
            if with_density:
                # one spline per cell; the smallest level uses its one-sided derivative
                deriv = _cdf_derivative(table.cell(n, p), table.alphas)
                rows["dens"].append(deriv(tn[use]))
    cat = {k: np.concatenate(v) if v else np.empty(0) for k, v in rows.items()}
    Y = cat["Tinf"] / cat["Tn"]
    return RatioDataset(kind, cat["n"].astype(int), None if table.p_list is None else cat["p"].astype(int),
                        cat["alpha"], Y, cat["Tn"], cat["Tinf"], table.M,
                        cat["dens"] if with_density else None)


def _cdf_derivative(quantiles: np.ndarray, alphas: np.ndarray):
    # cdf points (T_{n;alpha}, 1 - alpha); T increases as alpha decreases
    x = quantiles[::-1]
    y = 1.0 - alphas[::-1]
    # collapse ties (discrete atoms or repeated order statistics) to their mean cdf level
    ux, inv = np.unique(x, return_inverse=True)
    uy = np.bincount(inv, weights=y) / np.bincount(inv)
    if ux.size < 2:
        raise DataError("quantiles are constant; no density")
    return PchipInterpolator(ux, uy).derivative()


def _density(quantiles: np.ndarray, alphas: np.ndarray, alpha: float) -> float:
    k = int(np.argmin(np.abs(alphas - alpha)))
    if abs(alphas[k] - alpha) > 1e-12:
        raise DataError(f"alpha={alpha} is not on the grid")
    if k == 0 or k == alphas.size - 1:
        raise BoundaryError(f"alpha={alpha} sits on the grid boundary; the density needs interior points")
    return float(_cdf_derivative(quantiles, alphas)(quantiles[k]))


def density_at_quantile(table: QuantileTable, n: int, alpha: float, p: Optional[int] = None) -> float:
    """``f_n(T_{n;alpha})`` from a monotone cubic interpolant of the tabulated cdf."""
    return _density(table.cell(n, p), table.alphas, alpha)


def monte_carlo_critical_value(kind, n: int, alpha: float, M: int, rng, p: Optional[int] = None) -> float:
    """Critical value read off ``M`` simulated statistics (reference method)."""
    d = np.sort(simulate_statistics(kind, n, M, rng, p))
    return float(upper_quantiles(d, [alpha])[0])


def packaged_desk_table() -> QuantileTable:
    """Desk-scale ``D`` table shipped with the package (M = 1e5, n = 5..50, 100, 200)."""
    from importlib import resources

    ref = resources.files("gofstab").joinpath("data").joinpath("desk_D.csv")
    with resources.as_file(ref) as path:
        return QuantileTable.from_csv(path)
