"""Rolling-window uniformity scans with Benjamini-Yekutieli FDR adjustment."""
from __future__ import annotations

import csv
import datetime as _dt
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .errors import DataError, DomainError
from .kinds import as_kind
from .pvalue import approx_pvalue
from .statistics import SphericalSample, UnitSample, compute_statistic


def by_fdr(pvalues) -> np.ndarray:
    """Benjamini-Yekutieli adjusted p-values, valid under arbitrary dependence.

    ``adj_(i) = min(1, p_(i) m c(m) / i)`` with ``c(m) = sum_{k<=m} 1/k``,
    made monotone from the largest p-value down, returned in input order.
    """
    p = np.asarray(pvalues, dtype=float)
    if p.ndim != 1:
        raise DomainError("by_fdr expects a 1-d sequence")
    if p.size == 0:
        return p.copy()
    if np.any(np.isnan(p)) or np.any(p < 0) or np.any(p > 1):
        raise DomainError("p-values must lie in [0, 1]")
    m = p.size
    c = math.fsum(1.0 / k for k in range(1, m + 1))
    order = np.argsort(p, kind="stable")
    raw = p[order] * m * c / np.arange(1, m + 1)
    adj = np.minimum.accumulate(raw[::-1])[::-1]
    out = np.empty(m)
    out[order] = np.minimum(adj, 1.0)
    return out


@dataclass(frozen=True)
class ScanConfig:
    window: Optional[int] = 100
    window_days: Optional[float] = None
    step: int = 1
    kind: str = "PAD"
    fdr: str = "by"
    alpha_report: float = 0.05

    def __post_init__(self):
        if self.window_days is None:
            if self.window is None or self.window < 5:
                raise DomainError("window must hold at least 5 observations")
            if not 1 <= self.step <= self.window:
                raise DomainError("step must lie in [1, window]")
        elif self.window_days <= 0 or self.step < 1:
            raise DomainError("window_days must be positive and step >= 1")
        if self.fdr not in ("none", "by"):
            raise DomainError(f"unknown FDR method {self.fdr!r}")


def parse_time(text: str) -> float:
    """ISO-8601 date/time or a plain day number, as days."""
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    try:
        t = _dt.datetime.fromisoformat(text)
    except ValueError:
        raise DataError(f"unparsable time {text!r}") from None
    if t.tzinfo is None:
        t = t.replace(tzinfo=_dt.timezone.utc)
    return t.timestamp() / 86400.0


def read_scan_csv(path):
    """Rows of ``time, longitude_deg[, group]``; returns dict group -> (times, longitudes)."""
    groups = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"time", "longitude_deg"} <= set(reader.fieldnames):
            raise DataError("scan input needs columns time and longitude_deg")
        for lineno, row in enumerate(reader, 2):
            try:
                t = parse_time(row["time"])
                lon = float(row["longitude_deg"])
            except (DataError, ValueError, TypeError):
                raise DataError(f"row {lineno}: unparsable time or longitude") from None
            if not np.isfinite(lon):
                raise DataError(f"row {lineno}: longitude is not finite")
            groups.setdefault(row.get("group") or "", ([], []))
            groups[row.get("group") or ""][0].append(t)
            groups[row.get("group") or ""][1].append(lon)
    return {g: (np.array(t), np.array(l)) for g, (t, l) in groups.items()}


def _windows(times: np.ndarray, config: ScanConfig):
    n = times.size
    if config.window_days is None:
        w = config.window
        for start in range(0, n - w + 1, config.step):
            yield start, start + w
    else:
        t0 = times[0]
        k = 0
        while True:
            lo = t0 + k * config.step
            if lo > times[-1]:
                break
            hi = lo + config.window_days
            a = int(np.searchsorted(times, lo, "left"))
            b = int(np.searchsorted(times, hi, "left"))
            yield a, b
            k += 1
            if hi > times[-1]:
                break


def scan_stream(times, longitudes_deg, config: ScanConfig) -> List[dict]:
    """Test every window of the stream; adjusted p-values are computed once over all windows."""
    times = np.asarray(times, dtype=float)
    lon = np.asarray(longitudes_deg, dtype=float)
    order = np.argsort(times, kind="stable")
    times, lon = times[order], lon[order]
    kind = as_kind(config.kind)
    rows = []
    notes = []
    for a, b in _windows(times, config):
        n = b - a
        if n < 5:
            notes.append(f"window starting at {times[a] if a < times.size else float('nan'):g} "
                         f"has {n} observations; skipped")
            continue
        if kind.is_classical:
            stat = compute_statistic(kind, UnitSample.from_angles(lon[a:b], degrees=True))
        else:
            stat = compute_statistic(kind, SphericalSample.from_angles(lon[a:b], degrees=True))
        res = approx_pvalue(stat)
        rows.append({"start": times[a], "end": times[b - 1], "n": n, "statistic": stat.value,
                     "p_raw": res.value, "method": res.method})
    if not rows and not notes:
        notes.append(f"stream of {times.size} observations is shorter than the window; nothing to scan")
    if rows:
        raw = np.array([r["p_raw"] for r in rows])
        adj = by_fdr(raw) if config.fdr == "by" else raw
        for r, v in zip(rows, adj):
            r["p_adj"] = float(v)
    return rows, notes
