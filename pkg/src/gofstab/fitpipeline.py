"""Re-derive stabilizing forms from Monte Carlo quantile tables.

The regression is ``Y - 1 = sum_k beta_k n^{-l_k/2} alpha^{-m_k/2} + error`` with
``Y = T_{inf;alpha} / T_{n;alpha}`` and no free intercept.  Terms are selected
by a forward-backward BIC search started from ``{n^{-1/2}, n^{-1}}`` and then
pruned to three terms by adjusted R^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from .errors import (ConfigurationError, DataError, DomainError, InsufficientDataError,
                     SingularFitError)
from .kinds import as_kind
from .simulation import QuantileTable, RatioDataset, ratio_dataset
from .stabilizer import R_KEYS, DimStabilizedForm, StabilizedForm, Term, predictor_label

Pred = Tuple[int, int]  # (l, m) for n^{-l/2} alpha^{-m/2}
WEIGHT_SCHEMES = ("w1", "w2", "w3", "w4", "w5", "w6", "w7")
DROP_THRESHOLD = 0.0015
ALPHA_BLOCKS = ((0.0, 0.1), (0.1, 0.25), (0.25, 0.5), (0.5, 1.0))
N_BLOCKS = ((5, 10), (11, 50), (51, 10 ** 9))


def pred_label(pred: Pred) -> str:
    return predictor_label(pred[0] / 2, pred[1] / 2)


@dataclass(frozen=True)
class RegressionSpec:
    lambda_: int = 2
    mu: int = 2
    weight_scheme: str = "w2"
    start: Tuple[Pred, ...] = ((1, 0), (2, 0))
    alpha_max: float = 0.25

    def __post_init__(self):
        if self.lambda_ < 2 or self.mu < 2:
            raise ConfigurationError("lambda and mu must be at least 2")
        if self.weight_scheme not in WEIGHT_SCHEMES:
            raise ConfigurationError(f"unknown weight scheme {self.weight_scheme!r}")

    @property
    def scope(self) -> Tuple[Pred, ...]:
        return tuple((l, m) for l in range(1, self.lambda_ + 1) for m in range(0, self.mu + 1))


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------

def avar_ratio(T_inf_alpha, T_n_alpha, alpha, M, f_n):
    """Asymptotic variance of ``Y = T_{inf;alpha} / T_{n;alpha}`` from ``M`` replicates.

    ``T_inf^2 alpha (1 - alpha) / (M T_n^4 f_n(T_n)^2)``.
    """
    f_n = np.asarray(f_n, dtype=float)
    if np.any(f_n == 0):
        raise DomainError("singular density: f_n(T_n) = 0")
    alpha = np.asarray(alpha, dtype=float)
    if np.any((alpha <= 0) | (alpha >= 1)):
        raise DomainError("alpha must lie in (0, 1)")
    out = (np.asarray(T_inf_alpha, float) ** 2 * alpha * (1 - alpha)
           / (M * np.asarray(T_n_alpha, float) ** 4 * f_n ** 2))
    return float(out) if out.ndim == 0 else out


def compute_weights(scheme: str, rows: RatioDataset, alpha_max: float = 0.25) -> np.ndarray:
    """Row weights for the WLS fit.

    ``w1`` and ``w2`` keep only rejection levels (``alpha <= alpha_max``),
    ``w2`` downweighting large n by ``n^{-1/2}``.  ``w3``-``w6`` also use the
    inverse square root of the asymptotic variance of ``Y``; ``w7`` is
    ``(n alpha)^{-1/2}``.
    """
    if scheme not in WEIGHT_SCHEMES:
        raise ConfigurationError(f"unknown weight scheme {scheme!r}")
    n = rows.n.astype(float)
    a = rows.alpha
    ind = (a <= alpha_max + 1e-12).astype(float)
    if scheme == "w1":
        return ind
    if scheme == "w2":
        return ind / np.sqrt(n)
    if scheme == "w7":
        return 1.0 / np.sqrt(n * a)
    if rows.density is None:
        raise ConfigurationError(f"weight scheme {scheme} needs densities at the quantiles")
    inv_sd = 1.0 / np.sqrt(avar_ratio(rows.T_inf, rows.T_n, a, rows.M, rows.density))
    return {"w3": inv_sd * ind, "w4": inv_sd * ind / np.sqrt(n),
            "w5": inv_sd, "w6": inv_sd / np.sqrt(n)}[scheme]


# ---------------------------------------------------------------------------
# weighted least squares
# ---------------------------------------------------------------------------

def design_matrix(n, alpha, preds: Sequence[Pred]) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if not preds:
        return np.empty((n.size, 0))
    return np.column_stack([n ** (-l / 2) * alpha ** (-m / 2) for l, m in preds])


@dataclass
class WLSResult:
    coef: np.ndarray
    residuals: np.ndarray
    rss: float
    n_eff: int
    k: int
    bic: float
    r2: float
    r2_adj: float


def wls_fit(X, y, w, names: Optional[Sequence[str]] = None) -> WLSResult:
    """Minimize ``sum_j w_j (y_j - X_j beta)^2`` without intercept.

    R^2 is uncentered (the model has no free intercept) and the adjusted
    version uses ``n_eff / (n_eff - k)``; the BIC is
    ``n_eff ln(RSS_w / n_eff) + k ln n_eff`` with ``n_eff`` the number of
    rows with positive weight.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.size or w.size != y.size:
        raise DataError("design, response and weights must align")
    if np.any(w < 0):
        raise DataError("weights must be nonnegative")
    k = X.shape[1]
    pos = w > 0
    n_eff = int(pos.sum())
    if k == 0:
        resid = y.copy()
        rss = float(np.sum(w * resid ** 2))
        bic = n_eff * math.log(rss / n_eff) if rss > 0 else -np.inf
        return WLSResult(np.empty(0), resid, rss, n_eff, 0, bic, 0.0, 0.0)
    if n_eff < k:
        raise SingularFitError(f"{n_eff} positive-weight rows for {k} predictors",
                               names or [str(i) for i in range(k)])
    sw = np.sqrt(w[pos])
    Xw = X[pos] * sw[:, None]
    yw = y[pos] * sw
    # column scaling keeps the rank test meaningful for predictors of very different size
    scale = np.linalg.norm(Xw, axis=0)
    if np.any(scale == 0):
        bad = [i for i in range(k) if scale[i] == 0]
        raise SingularFitError("predictor vanishes on the weighted rows",
                               [names[i] if names else str(i) for i in bad])
    U, s, Vt = np.linalg.svd(Xw / scale, full_matrices=False)
    if s[-1] <= s[0] * 1e-12:
        null = Vt[-1]
        bad = [i for i in range(k) if abs(null[i]) > 1e-6]
        raise SingularFitError("weighted design is rank deficient",
                               [names[i] if names else str(i) for i in bad])
    beta = (Vt.T @ ((U.T @ yw) / s)) / scale
    resid = y - X @ beta
    rss = float(np.sum(w * resid ** 2))
    tss = float(np.sum(w * y ** 2))
    r2 = 1.0 - rss / tss if tss > 0 else 0.0
    r2_adj = 1.0 - (1.0 - r2) * n_eff / (n_eff - k) if n_eff > k else -np.inf
    bic = (n_eff * math.log(rss / n_eff) if rss > 0 else -np.inf) + k * math.log(n_eff)
    return WLSResult(beta, resid, rss, n_eff, k, bic, r2, r2_adj)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def vif_diagnostics(X, w, names: Optional[Sequence[str]] = None) -> dict:
    """Weighted variance inflation factors; perfect collinearity gives ``inf``."""
    X = np.asarray(X, dtype=float)
    w = np.asarray(w, dtype=float)
    k = X.shape[1]
    if k < 2:
        raise DataError("VIF needs at least two predictors")
    names = list(names) if names else [str(i) for i in range(k)]
    pos = w > 0
    sw = np.sqrt(w[pos] / w[pos].sum())
    Xp = X[pos]
    vifs = {}
    for j in range(k):
        y = Xp[:, j]
        others = np.column_stack([np.ones(pos.sum()), np.delete(Xp, j, axis=1)])
        ybar = np.sum(sw ** 2 * y)
        tss = np.sum(sw ** 2 * (y - ybar) ** 2)
        beta, *_ = np.linalg.lstsq(others * sw[:, None], y * sw, rcond=None)
        rss = np.sum(sw ** 2 * (y - others @ beta) ** 2)
        if tss <= 0 or rss <= tss * 1e-13:
            vifs[names[j]] = np.inf
        else:
            vifs[names[j]] = float(tss / rss)
    worst = max(vifs, key=lambda n: vifs[n])
    return {"vif": vifs, "mvif": vifs[worst], "argmax": worst}


def _block_sigmas(rows: RatioDataset, resid: np.ndarray, alpha_max: float):
    by_alpha = {}
    for lo, hi in ALPHA_BLOCKS:
        m = (rows.alpha > lo) & (rows.alpha <= hi + 1e-12)
        by_alpha[f"({lo:g},{hi:g}]"] = float(np.sqrt(np.mean(resid[m] ** 2))) if m.any() else float("nan")
    by_n = {}
    upper = rows.alpha <= alpha_max + 1e-12
    for lo, hi in N_BLOCKS:
        m = upper & (rows.n >= lo) & (rows.n <= hi)
        key = f"[{lo},{hi}]" if hi < 10 ** 9 else f"[{lo},inf)"
        by_n[key] = float(np.sqrt(np.mean(resid[m] ** 2))) if m.any() else float("nan")
    return by_alpha, by_n


@dataclass
class FittedModel:
    kind: object
    preds: Tuple[Pred, ...]
    coef: np.ndarray
    bic: float
    r2_adj: float
    sigma_alpha: Dict[str, float]
    sigma_n: Dict[str, float]
    mvif: float
    mvif_pred: Optional[str]
    weight_scheme: str
    meta: dict = field(default_factory=dict)

    def to_form(self) -> StabilizedForm:
        terms = tuple(Term(l / 2, m / 2, float(c)) for (l, m), c in zip(self.preds, self.coef))
        return StabilizedForm(as_kind(self.kind), terms, name="refit")

    def summary(self) -> str:
        lines = [f"kind={self.kind} weights={self.weight_scheme} terms={len(self.preds)}"]
        for p, c in zip(self.preds, self.coef):
            lines.append(f"  {pred_label(p):>20s}  {c:+.6f}")
        lines.append(f"BIC={self.bic:.3f} R2_adj={self.r2_adj:.6f} MVIF={self.mvif:.3g} ({self.mvif_pred})")
        lines.append("sigma by alpha block: " + ", ".join(f"{k}={v:.2e}" for k, v in self.sigma_alpha.items()))
        lines.append("sigma by n block (alpha<=0.25): " + ", ".join(f"{k}={v:.2e}" for k, v in self.sigma_n.items()))
        return "\n".join(lines)


def fit_model(rows: RatioDataset, weights: np.ndarray, preds: Sequence[Pred],
              weight_scheme: str = "", alpha_max: float = 0.25) -> FittedModel:
    preds = tuple(preds)
    names = [pred_label(p) for p in preds]
    X = design_matrix(rows.n, rows.alpha, preds)
    res = wls_fit(X, rows.Y - 1.0, weights, names)
    by_alpha, by_n = _block_sigmas(rows, res.residuals, alpha_max)
    if len(preds) >= 2:
        v = vif_diagnostics(X, weights, names)
        mvif, arg = v["mvif"], v["argmax"]
    else:
        mvif, arg = 1.0, names[0] if names else None
    return FittedModel(rows.kind, preds, res.coef, res.bic, res.r2_adj, by_alpha, by_n, mvif, arg,
                       weight_scheme, {"n_eff": res.n_eff, "rss": res.rss, "r2": res.r2,
                                       "bic_definition": "n_eff*ln(RSS_w/n_eff)+k*ln(n_eff)"})


# ---------------------------------------------------------------------------
# model selection
# ---------------------------------------------------------------------------

def _try_fit(rows, weights, preds, scheme, alpha_max):
    try:
        return fit_model(rows, weights, preds, scheme, alpha_max)
    except SingularFitError:
        return None


def stepwise_bic(spec: RegressionSpec, rows: RatioDataset, weights: np.ndarray) -> FittedModel:
    """Forward-backward search over single-term additions and deletions.

    Moves are taken only when they strictly lower the BIC; among equal
    candidates the one whose term comes first in ``(l, m)`` order wins.
    """
    scope = spec.scope
    current = tuple(sorted(p for p in spec.start if p in scope))
    model = fit_model(rows, weights, current, spec.weight_scheme, spec.alpha_max)
    history = [("start", current, model.bic)]
    while True:
        best = None
        moves = [("add", p) for p in scope if p not in current]
        if len(current) > 1:
            moves += [("drop", p) for p in current]
        for action, p in sorted(moves, key=lambda t: t[1]):
            preds = tuple(sorted(current + (p,))) if action == "add" else tuple(q for q in current if q != p)
            cand = _try_fit(rows, weights, preds, spec.weight_scheme, spec.alpha_max)
            if cand is None:
                continue
            if cand.bic < model.bic - 1e-9 and (best is None or cand.bic < best[2].bic - 1e-12):
                best = (action, p, cand)
        if best is None:
            break
        action, p, model = best
        current = model.preds
        history.append((action, p, model.bic))
    model.meta["history"] = history
    return model


def drop_to_three(model: FittedModel, rows: RatioDataset, weights: np.ndarray,
                  threshold: float = DROP_THRESHOLD, target: int = 3) -> FittedModel:
    """Drop the least useful term while it costs under ``threshold`` of R^2_adj.

    Stops at ``target`` terms or when every drop would exceed the threshold.
    """
    dropped = []
    while len(model.preds) > target:
        best = None
        for p in model.preds:
            preds = tuple(q for q in model.preds if q != p)
            cand = _try_fit(rows, weights, preds, model.weight_scheme, 0.25)
            if cand is not None and (best is None or cand.r2_adj > best.r2_adj):
                best = cand
        if best is None or model.r2_adj - best.r2_adj >= threshold * abs(model.r2_adj):
            break
        dropped.append(next(p for p in model.preds if p not in best.preds))
        best.meta["history"] = model.meta.get("history", [])
        model = best
    model.meta["dropped"] = dropped
    return model


def refit(table: QuantileTable, spec: Optional[RegressionSpec] = None, asymptotic=None,
          n_min: int = 5) -> FittedModel:
    """Quantile table to fitted three-term model, end to end."""
    spec = spec or RegressionSpec()
    needs_density = spec.weight_scheme in ("w3", "w4", "w5", "w6")
    rows = ratio_dataset(table, asymptotic, with_density=needs_density)
    rows = rows.subset(rows.n >= n_min)
    w = compute_weights(spec.weight_scheme, rows, spec.alpha_max)
    model = stepwise_bic(spec, rows, w)
    if len(model.preds) > 3:
        model = drop_to_three(model, rows, w)
    return model


# ---------------------------------------------------------------------------
# dimension curves
# ---------------------------------------------------------------------------

_R_PREDS = {"1/n": (2, 0), "1/(n alpha)": (2, 2), "1/(n sqrt(alpha))": (2, 1)}


def fit_fixed_predictors(rows: RatioDataset, weights: np.ndarray) -> Dict[str, float]:
    """Coefficients of ``1/n``, ``1/(n alpha)``, ``1/(n sqrt(alpha))`` for one dimension."""
    preds = [_R_PREDS[r] for r in R_KEYS]
    res = wls_fit(design_matrix(rows.n, rows.alpha, preds), rows.Y - 1.0, weights,
                  list(R_KEYS))
    return dict(zip(R_KEYS, res.coef))


@dataclass
class DimensionFit:
    form: DimStabilizedForm
    per_p: Dict[int, Dict[str, float]]
    rule: Dict[str, str]


def fit_dimension_curves(per_p: Dict[int, Dict[str, float]], kind="PCvM",
                         drop_negligible: bool = True, t_threshold: float = 2.0) -> DimensionFit:
    """Fit ``q_r(p) = beta_1 / sqrt(p) + beta_2 / p`` by least squares across dimensions.

    With ``drop_negligible`` the ``1/p`` coefficient is dropped when its
    t-statistic is below ``t_threshold`` (the rule is recorded per predictor).
    """
    P = sorted(per_p)
    if len(P) < 3:
        raise InsufficientDataError("dimension curves need at least three dimensions")
    p = np.asarray(P, dtype=float)
    X = np.column_stack([1 / np.sqrt(p), 1 / p])
    q, rule = {}, {}
    for r in R_KEYS:
        if r not in per_p[P[0]]:
            continue
        y = np.array([per_p[d][r] for d in P])
        beta, *_ = np.linalg.lstsq(X, y, rcond=None)
        keep_two = True
        if drop_negligible and len(P) > 2:
            resid = y - X @ beta
            dof = len(P) - 2
            s2 = float(resid @ resid) / dof if dof > 0 else 0.0
            cov = s2 * np.linalg.inv(X.T @ X)
            se = math.sqrt(max(cov[1, 1], 0.0))
            if se > 0 and abs(beta[1]) / se < t_threshold:
                keep_two = False
        if keep_two:
            q[r] = (float(beta[0]), float(beta[1]))
            rule[r] = "two-term"
        else:
            b1, *_ = np.linalg.lstsq(X[:, :1], y, rcond=None)
            q[r] = (float(b1[0]), 0.0)
            rule[r] = "significance: 1/p term dropped"
    return DimensionFit(DimStabilizedForm(kind, q), {d: dict(per_p[d]) for d in P}, rule)


def fit_dimension_form(table: QuantileTable, asymptotic, scheme: str = "w2",
                       n_min: int = 5, **kw) -> DimensionFit:
    """Per-dimension fixed-predictor fits followed by the ``q_r(p)`` curves."""
    if table.p_list is None:
        raise DataError("dimension fits need a table with dimensions")
    rows = ratio_dataset(table, asymptotic, with_density=scheme in ("w3", "w4", "w5", "w6"))
    rows = rows.subset(rows.n >= n_min)
    per_p = {}
    for p in table.p_list:
        sub = rows.subset(rows.p == p)
        per_p[p] = fit_fixed_predictors(sub, compute_weights(scheme, sub))
    return fit_dimension_curves(per_p, table.kind, **kw)


# ---------------------------------------------------------------------------
# quantile ratios
# ---------------------------------------------------------------------------

@dataclass
class QuantileRatioDiagnostics:
    kind: object
    alpha0: float
    n_list: Tuple[int, ...]
    alphas: np.ndarray
    ratio_to_alpha0: np.ndarray   # T_{n;alpha} / T_{n;alpha0}, shape (n, alpha)
    ratio_to_limit: np.ndarray    # T_{inf;alpha} / T_{n;alpha}
    k_inf: np.ndarray             # T_{inf;alpha} / T_{inf;alpha0}

    def spread(self) -> np.ndarray:
        """Per-alpha range over n of ``T_{n;alpha} / T_{n;alpha0}``."""
        return self.ratio_to_alpha0.max(axis=0) - self.ratio_to_alpha0.min(axis=0)

    def rows(self) -> Iterable[tuple]:
        for i, n in enumerate(self.n_list):
            for j, a in enumerate(self.alphas):
                yield (n, a, self.ratio_to_alpha0[i, j], self.ratio_to_limit[i, j], self.k_inf[j])


def quantile_ratio_diagnostics(table: QuantileTable, alpha0: float = 0.1, alphas=None,
                               p: Optional[int] = None, asymptotic=None) -> QuantileRatioDiagnostics:
    from .asymptotics import asymptotic_critical_values

    if alpha0 not in table.grid:
        raise DataError(f"alpha0={alpha0} is not on the table grid")
    if alphas is None:
        alphas = table.grid.used
    alphas = np.asarray(alphas, dtype=float)
    idx = np.rint(alphas * table.grid.A).astype(int) - 1
    i0 = int(round(alpha0 * table.grid.A)) - 1
    kind = table.kind
    tinf = asymptotic_critical_values(kind, p, alphas, asymptotic)
    tinf0 = asymptotic_critical_values(kind, p, [alpha0], asymptotic)[0]
    r0 = np.empty((len(table.n_list), alphas.size))
    rl = np.empty_like(r0)
    for i, n in enumerate(table.n_list):
        cell = table.cell(n, p)
        r0[i] = cell[idx] / cell[i0]
        rl[i] = tinf / cell[idx]
    return QuantileRatioDiagnostics(kind, alpha0, table.n_list, alphas, r0, rl, tinf / tinf0)
