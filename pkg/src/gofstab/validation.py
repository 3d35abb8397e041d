"""Calibration study: empirical rejection rates of approximate critical values.

For each kind and n, ``M`` null statistics are simulated once and compared
with the critical values of every method at every level (common random
numbers), so differences between methods are not blurred by independent
simulation noise.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .asymptotics import asymptotic_quantile
from .kinds import as_kind
from .simulation import simulate_statistics, substream
from .stabilizer import STEPHENS_FORMS, critical_value

METHODS = ("new_form", "stephens", "montecarlo_cv")
N_TEST = (5, 6, 7, 8, 9, 10, 20, 30, 40, 50, 100, 200, 300)
A_TEST = tuple(a / 100 for a in range(1, 26))
N_BANDS = ((5, 10), (20, 50), (100, 300))


@dataclass
class ValidationReport:
    rows: List[dict] = field(default_factory=list)
    M: int = 0

    def add(self, **row):
        self.rows.append(row)

    def select(self, **crit) -> List[dict]:
        return [r for r in self.rows if all(r[k] == v for k, v in crit.items())]

    def mean_relative_error(self, method: str, kind=None, n_band=None, alphas=None) -> float:
        rows = self.select(method=method)
        if kind is not None:
            rows = [r for r in rows if r["kind"] == as_kind(kind).value]
        if n_band is not None:
            rows = [r for r in rows if n_band[0] <= r["n"] <= n_band[1]]
        if alphas is not None:
            keep = {round(a, 10) for a in alphas}
            rows = [r for r in rows if round(r["alpha"], 10) in keep]
        return float(np.mean([r["rel_error"] for r in rows])) if rows else float("nan")

    def summary(self) -> Dict[tuple, float]:
        out = {}
        kinds = sorted({r["kind"] for r in self.rows})
        methods = [m for m in METHODS if any(r["method"] == m for r in self.rows)]
        for k in kinds:
            for m in methods:
                for band in N_BANDS:
                    v = self.mean_relative_error(m, k, band)
                    if not np.isnan(v):
                        out[(k, m, band)] = v
        return out

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "n", "p", "alpha", "method", "rate", "rel_error", "M", "note"])
            for r in self.rows:
                w.writerow([r["kind"], r["n"], "" if r.get("p") is None else r["p"], r["alpha"],
                            r["method"], r["rate"], r["rel_error"], r["M"], r.get("note", "")])
            w.writerow([])
            w.writerow(["kind", "method", "n_band", "mean_rel_error"])
            for (k, m, band), v in self.summary().items():
                w.writerow([k, m, f"{band[0]}-{band[1]}", v])


def stephens_threshold(kind, n: int, alpha: float) -> float:
    """Critical value from a legacy form; evaluated below its n >= 8 range when asked."""
    kind = as_kind(kind)
    return float(STEPHENS_FORMS[kind].inverse(asymptotic_quantile(kind, alpha), n))


def calibrate(kinds: Sequence = ("D", "W2", "A2", "V", "U2"), N: Sequence[int] = N_TEST,
              alphas: Sequence[float] = A_TEST, M: int = 10 ** 5, methods: Sequence[str] = METHODS,
              seed: int = 0, M_cv: int = 10 ** 4, p: Optional[int] = None,
              forms: Optional[dict] = None) -> ValidationReport:
    """Empirical rejection rates of each method's critical values under the null.

    Parameters
    ----------
    forms : dict, optional
        Maps kind to a stabilizing form replacing the built-in one for the
        ``new_form`` method.
    """
    report = ValidationReport(M=int(M))
    forms = forms or {}
    for kind in map(as_kind, kinds):
        for n in N:
            sims = simulate_statistics(kind, n, M, substream(seed, kind, n, p, 0), p)
            cv_sims = None
            if "montecarlo_cv" in methods:
                cv_sims = np.sort(simulate_statistics(kind, n, M_cv, substream(seed + 1, kind, n, p, 1), p))
            for a in alphas:
                for method in methods:
                    note = ""
                    if method == "new_form":
                        thr = critical_value(kind, n, a, p=p, form=forms.get(kind), strict=False)
                    elif method == "stephens":
                        if kind not in STEPHENS_FORMS:
                            continue
                        thr = stephens_threshold(kind, n, a)
                        if n < STEPHENS_FORMS[kind].n_min:
                            note = "legacy form outside n >= 8"
                    else:
                        idx = int(np.ceil(M_cv * (1 - a) - 1e-9))
                        thr = cv_sims[idx - 1]
                    rate = float(np.mean(sims > thr))
                    report.add(kind=kind.value, n=int(n), p=p, alpha=float(a), method=method,
                               rate=rate, rel_error=abs(a - rate) / a, M=int(M), note=note)
    return report
