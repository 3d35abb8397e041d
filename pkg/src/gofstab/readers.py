"""Plain-text input readers with line-numbered errors."""
from __future__ import annotations

import csv

import numpy as np

from .errors import DataError, DomainError
from .statistics import SphericalSample, UnitSample


def _numbers(path):
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                out.append((lineno, float(text.split(",")[0])))
            except ValueError:
                raise DataError(f"line {lineno}: not a number: {text!r}") from None
    if not out:
        raise DataError(f"{path}: no values")
    return out


def read_unit_values(path) -> UnitSample:
    """One value in [0, 1] per line."""
    rows = _numbers(path)
    for lineno, v in rows:
        if not 0.0 <= v <= 1.0 or not np.isfinite(v):
            raise DomainError(f"line {lineno}: value {v} outside [0, 1]")
    return UnitSample(np.array([v for _, v in rows]))


def read_angles(path, degrees: bool = False) -> np.ndarray:
    """One angle per line (radians unless ``degrees``)."""
    rows = _numbers(path)
    for lineno, v in rows:
        if not np.isfinite(v):
            raise DataError(f"line {lineno}: angle is not finite")
    return np.array([v for _, v in rows])


def read_spherical_csv(path) -> SphericalSample:
    """CSV with p numeric columns per row; rows within 1e-6 of unit norm are normalized."""
    rows = []
    width = None
    with open(path, newline="") as fh:
        for lineno, rec in enumerate(csv.reader(fh), 1):
            if not rec or rec[0].strip().startswith("#"):
                continue
            try:
                vals = [float(x) for x in rec]
            except ValueError:
                if not rows and width is None:
                    continue  # header
                raise DataError(f"line {lineno}: non-numeric entry") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise DataError(f"line {lineno}: expected {width} columns, got {len(vals)}")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no rows")
    return SphericalSample.normalized(np.array(rows))
