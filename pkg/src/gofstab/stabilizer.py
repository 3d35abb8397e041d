"""Stabilizing multipliers ``g(n, alpha)`` and ``g(n, p, alpha)``.

A stabilized statistic ``T*_n(alpha) = T_n g(n, alpha)`` is compared with the
asymptotic critical value ``T_{inf; alpha}``.  Equivalently, ``T_n`` is compared
with the finite-n critical value ``T_{inf; alpha} / g(n, alpha)``.

Three families of coefficient bundles are provided:

* :class:`StabilizedForm` for ``g(n, alpha) = 1 + sum_k c_k n^{-a_k} alpha^{-b_k}``;
* :class:`DimStabilizedForm` for the directional kinds, whose coefficients are
  curves ``q_r(p) = beta_1 / sqrt(p) + beta_2 / p``;
* :class:`StephensForm`, the older ``(T - p(n)) g(n)`` modifications.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from .asymptotics import (CriticalTable, asymptotic_quantile, default_projected_table,
                          published_projected_table)
from .errors import (ConfigurationError, KindMismatchError, TableMissError,
                     ValidityError, ValidityWarning)
from .kinds import StatisticKind, as_kind
from .statistics import StatisticValue

N_MIN = 5
ALPHA_MAX = 0.25
ALPHA_MIN = 0.001
P_RANGE = (2, 300)
STEPHENS_N_MIN = 8


@dataclass(frozen=True)
class Term:
    """``coeff * n^{-n_exp} * alpha^{-alpha_exp}``."""

    n_exp: float
    alpha_exp: float
    coeff: float

    def label(self) -> str:
        return predictor_label(self.n_exp, self.alpha_exp)


def predictor_label(n_exp: float, alpha_exp: float) -> str:
    def power(sym, e):
        if e == 0:
            return ""
        if e == 0.5:
            return f"sqrt({sym})"
        if e == 1:
            return sym
        return f"{sym}^{e:g}"

    parts = [s for s in (power("n", n_exp), power("alpha", alpha_exp)) if s]
    return "1/(" + " ".join(parts) + ")" if len(parts) > 1 else "1/" + parts[0]


def _check_validity(n, alpha, n_min, alpha_max, strict, p=None, p_range=None):
    problems = []
    if n < n_min:
        problems.append(f"n={n} below n_min={n_min}")
    if not 0.0 < alpha <= alpha_max + 1e-12:
        problems.append(f"alpha={alpha} outside (0, {alpha_max}]")
    if p is not None and p_range is not None and not p_range[0] <= p <= p_range[1]:
        problems.append(f"p={p} outside [{p_range[0]}, {p_range[1]}]")
    if not problems:
        return
    if strict:
        raise ValidityError("; ".join(problems))
    if not 0.0 < alpha < 1.0 or n < 1:
        raise ValidityError("; ".join(problems))
    warnings.warn("evaluated outside the fitted range: " + "; ".join(problems), ValidityWarning,
                  stacklevel=3)


@dataclass(frozen=True)
class StabilizedForm:
    kind: StatisticKind
    terms: Tuple[Term, ...]
    n_min: int = N_MIN
    alpha_max: float = ALPHA_MAX
    name: str = "n_alpha"

    def __post_init__(self):
        object.__setattr__(self, "kind", as_kind(self.kind))
        object.__setattr__(self, "terms", tuple(self.terms))
        if len(self.terms) > 6:
            raise ConfigurationError("a stabilizing form has at most 6 terms")
        for t in self.terms:
            if t.n_exp < 0.5 or (2 * t.n_exp) % 1 or t.alpha_exp < 0 or (2 * t.alpha_exp) % 1:
                raise ConfigurationError(f"exponents must be half-integers, n_exp >= 1/2: {t}")

    def arrays(self):
        """``(n_exp, alpha_exp, coeff)`` as float arrays."""
        a = np.array([(t.n_exp, t.alpha_exp, t.coeff) for t in self.terms], dtype=float).reshape(-1, 3)
        return a[:, 0].copy(), a[:, 1].copy(), a[:, 2].copy()

    def value(self, n, alpha):
        """Unchecked, vectorized ``g(n, alpha)``."""
        n = np.asarray(n, dtype=float)
        alpha = np.asarray(alpha, dtype=float)
        g = np.ones(np.broadcast(n, alpha).shape)
        for t in self.terms:
            g = g + t.coeff * n ** (-t.n_exp) * alpha ** (-t.alpha_exp)
        return g

    def dalpha(self, n, alpha):
        """Unchecked partial derivative of ``g`` with respect to ``alpha``."""
        n = np.asarray(n, dtype=float)
        alpha = np.asarray(alpha, dtype=float)
        d = np.zeros(np.broadcast(n, alpha).shape)
        for t in self.terms:
            d = d - t.alpha_exp * t.coeff * n ** (-t.n_exp) * alpha ** (-t.alpha_exp - 1)
        return d

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "model": "n_alpha", "name": self.name,
                "terms": [{"n_exp": t.n_exp, "alpha_exp": t.alpha_exp, "coeff": t.coeff}
                          for t in self.terms],
                "n_min": self.n_min, "alpha_max": self.alpha_max}


R_KEYS = ("1/n", "1/(n alpha)", "1/(n sqrt(alpha))")
_R_EXPONENTS = {"1/n": (1.0, 0.0), "1/(n alpha)": (1.0, 1.0), "1/(n sqrt(alpha))": (1.0, 0.5)}


@dataclass(frozen=True)
class DimStabilizedForm:
    """``g(n, p, alpha) = 1 + sum_r q_r(p) r(n, alpha)``."""

    kind: StatisticKind
    q: Dict[str, Tuple[float, float]]
    n_min: int = N_MIN
    alpha_max: float = ALPHA_MAX
    p_range: Tuple[int, int] = P_RANGE
    name: str = "n_p_alpha"

    def __post_init__(self):
        object.__setattr__(self, "kind", as_kind(self.kind))
        if not self.kind.is_spherical:
            raise ConfigurationError(f"dimension-dependent forms are for directional kinds, not {self.kind}")
        unknown = set(self.q) - set(R_KEYS)
        if unknown:
            raise ConfigurationError(f"unknown predictors {sorted(unknown)}")
        object.__setattr__(self, "q", {r: (float(b[0]), float(b[1])) for r, b in self.q.items()})
        object.__setattr__(self, "p_range", tuple(self.p_range))

    def q_value(self, r: str, p) -> float:
        b1, b2 = self.q.get(r, (0.0, 0.0))
        return b1 / np.sqrt(p) + b2 / np.asarray(p, dtype=float)

    def at(self, p: int) -> StabilizedForm:
        """The ``(n, alpha)`` form obtained by fixing the dimension."""
        terms = [Term(*_R_EXPONENTS[r], float(self.q_value(r, p))) for r in R_KEYS if r in self.q]
        return StabilizedForm(self.kind, tuple(terms), self.n_min, self.alpha_max, f"{self.name}@p={p}")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "model": "n_p_alpha", "name": self.name,
                "q": {r: list(b) for r, b in self.q.items()},
                "n_min": self.n_min, "alpha_max": self.alpha_max, "p_range": list(self.p_range)}


@dataclass(frozen=True)
class StephensForm:
    """``(T - s1/n - s2/n^2)(1 + m1/sqrt(n) + m2/n)``."""

    kind: StatisticKind
    subtract: Tuple[float, float] = (0.0, 0.0)
    multiply: Tuple[float, float] = (0.0, 0.0)
    n_min: int = STEPHENS_N_MIN
    name: str = "stephens"

    def __post_init__(self):
        object.__setattr__(self, "kind", as_kind(self.kind))

    def modify(self, T, n):
        s1, s2 = self.subtract
        m1, m2 = self.multiply
        n = np.asarray(n, dtype=float)
        return (np.asarray(T, dtype=float) - s1 / n - s2 / n ** 2) * (1.0 + m1 / np.sqrt(n) + m2 / n)

    def inverse(self, T_star, n):
        """The ``T`` whose modification equals ``T_star``."""
        s1, s2 = self.subtract
        m1, m2 = self.multiply
        n = np.asarray(n, dtype=float)
        return np.asarray(T_star, dtype=float) / (1.0 + m1 / np.sqrt(n) + m2 / n) + s1 / n + s2 / n ** 2

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "model": "stephens", "name": self.name,
                "subtract": list(self.subtract), "multiply": list(self.multiply),
                "n_min": self.n_min}


AnyForm = Union[StabilizedForm, DimStabilizedForm, StephensForm]


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def eval_g(form: StabilizedForm, n, alpha, strict: bool = True) -> float:
    """``g(n, alpha)``; ``strict=False`` only warns outside the fitted range."""
    _check_validity(n, alpha, form.n_min, form.alpha_max, strict)
    return float(form.value(n, alpha))


def eval_g_dim(form: DimStabilizedForm, n, p, alpha, strict: bool = True) -> float:
    """``g(n, p, alpha) = 1 + q_{1/n}(p)/n + q_{1/(n alpha)}(p)/(n alpha) + q_{1/(n sqrt(alpha))}(p)/(n sqrt(alpha))``."""
    _check_validity(n, alpha, form.n_min, form.alpha_max, strict, p, form.p_range)
    return float(form.at(p).value(n, alpha))


def _resolve(form, p, strict: bool = True):
    if isinstance(form, DimStabilizedForm):
        if p is None:
            raise ConfigurationError("a dimension-dependent form needs p")
        _check_validity(form.n_min, form.alpha_max, form.n_min, form.alpha_max, strict, p, form.p_range)
        return form.at(p)
    return form


def stabilize(T, alpha, form=None, n=None, p=None, strict: bool = True) -> float:
    """``T*_n(alpha) = T_n g(n, alpha)`` (or ``g(n, p, alpha)`` for directional kinds).

    ``T`` may be a :class:`StatisticValue`, in which case ``n`` and ``p`` are
    taken from it and ``D``/``V`` are rescaled by ``sqrt(n)``, or a plain
    number on the limiting-law scale together with ``n``.
    """
    if isinstance(T, StatisticValue):
        kind, value = T.kind, T.scaled
        n = T.n if n is None else n
        p = T.p if p is None else p
    else:
        kind, value = None, float(T)
    if form is None:
        if kind is None:
            raise ConfigurationError("pass a form or a StatisticValue")
        form = default_form(kind)
    if kind is not None and kind is not form.kind:
        raise KindMismatchError(f"statistic is {kind}, form is for {form.kind}")
    if n is None:
        raise ConfigurationError("sample size n is required")
    g_form = _resolve(form, p, strict)
    return value * eval_g(g_form, n, alpha, strict)


def asymptotic_critical_value(kind, alpha, p: Optional[int] = None,
                              table: Optional[CriticalTable] = None) -> float:
    """``T_{inf; alpha}`` for a classical kind or ``T_{inf, p; alpha}`` for a directional one.

    Directional kinds look in ``table`` if given, otherwise in the published
    table and then the packaged dense table.
    """
    kind = as_kind(kind)
    if kind.is_classical:
        if table is not None:
            return table.lookup(kind, None, alpha)
        return asymptotic_quantile(kind, alpha)
    if p is None:
        raise ConfigurationError(f"{kind} needs the dimension p")
    if table is not None:
        return table.lookup(kind, p, alpha)
    try:
        return published_projected_table().lookup(kind, p, alpha)
    except TableMissError:
        return default_projected_table().lookup(kind, p, alpha)


def critical_value(kind, n: int, alpha: float, p: Optional[int] = None, form=None,
                   table: Optional[CriticalTable] = None, strict: bool = True) -> float:
    """Finite-n critical value ``T_{inf; alpha} / g(n, alpha)``.

    The value is on the limiting-law scale; divide by ``sqrt(n)`` to compare
    with a raw ``D_n`` or ``V_n``.
    """
    kind = as_kind(kind)
    if alpha < ALPHA_MIN - 1e-15:
        raise ValidityError(f"alpha={alpha} below the smallest supported level {ALPHA_MIN}")
    if form is None:
        form = default_form(kind)
    if form.kind is not kind:
        raise KindMismatchError(f"form is for {form.kind}, not {kind}")
    g = eval_g(_resolve(form, p, strict), n, alpha, strict)
    return asymptotic_critical_value(kind, alpha, p, table) / g


def stephens_modify(kind, T, n, form: Optional[StephensForm] = None):
    """Legacy modified statistic; ``A2`` is returned unchanged."""
    kind = as_kind(kind)
    if n < STEPHENS_N_MIN:
        raise ValidityError(f"n={n} below n_min={STEPHENS_N_MIN} of the legacy forms")
    if form is None:
        form = STEPHENS_FORMS.get(kind)
        if form is None:
            raise KindMismatchError(f"no legacy modification for {kind}")
    return form.modify(T, n) if np.ndim(T) else float(form.modify(T, n))


def stephens_critical_value(kind, n: int, alpha: float) -> float:
    """Finite-n critical value implied by a legacy form and the asymptotic quantile."""
    kind = as_kind(kind)
    if n < STEPHENS_N_MIN:
        raise ValidityError(f"n={n} below n_min={STEPHENS_N_MIN} of the legacy forms")
    return float(STEPHENS_FORMS[kind].inverse(asymptotic_quantile(kind, alpha), n))


# ---------------------------------------------------------------------------
# JSON bundles
# ---------------------------------------------------------------------------

def form_from_dict(d: dict) -> AnyForm:
    model = d.get("model")
    if model == "n_alpha":
        terms = tuple(Term(float(t["n_exp"]), float(t["alpha_exp"]), float(t["coeff"]))
                      for t in d["terms"])
        return StabilizedForm(d["kind"], terms, int(d.get("n_min", N_MIN)),
                              float(d.get("alpha_max", ALPHA_MAX)), d.get("name", "n_alpha"))
    if model == "n_p_alpha":
        return DimStabilizedForm(d["kind"], {r: tuple(b) for r, b in d["q"].items()},
                                 int(d.get("n_min", N_MIN)), float(d.get("alpha_max", ALPHA_MAX)),
                                 tuple(d.get("p_range", P_RANGE)), d.get("name", "n_p_alpha"))
    if model == "stephens":
        return StephensForm(d["kind"], tuple(d["subtract"]), tuple(d["multiply"]),
                            int(d.get("n_min", STEPHENS_N_MIN)), d.get("name", "stephens"))
    raise ConfigurationError(f"unknown form model {model!r}")


def load_form(path) -> AnyForm:
    return form_from_dict(json.loads(Path(path).read_text()))


def save_form(form: AnyForm, path):
    Path(path).write_text(json.dumps(form.to_dict(), indent=2))


# ---------------------------------------------------------------------------
# built-in coefficients
# ---------------------------------------------------------------------------

# (n_exp, alpha_exp, coefficient as printed)
_N_ALPHA = {
    "D": [(0.5, 0.0, "0.1575"), (1.0, 0.5, "0.0192"), (0.5, 0.5, "-0.0051")],
    "W2": [(1.0, 0.0, "-0.1651"), (1.0, 0.5, "0.0749"), (1.0, 1.0, "-0.0014")],
    "V": [(0.5, 0.0, "0.2330"), (1.0, 0.5, "0.0276"), (0.5, 0.5, "-0.0068")],
    "U2": [(1.0, 0.0, "-0.1505"), (1.0, 0.5, "0.0917"), (1.0, 1.0, "-0.0018")],
    "A2": [(1.0, 0.0, "0.0360"), (1.0, 0.5, "-0.0234"), (1.0, 1.0, "0.0006")],
}

_P2_DIRECT = {
    "PCvM": [(1.0, 0.0, "-0.1908"), (1.0, 0.5, "0.1017"), (1.0, 1.0, "-0.0022")],
    "PAD": [(1.0, 0.0, "-0.0751"), (1.0, 0.5, "0.0692"), (1.0, 1.0, "-0.0014")],
}

_PAD_P2_SPECIALIZED = [(1.0, 0.0, "-0.1106"), (1.0, 0.5, "0.0796"), (1.0, 1.0, "-0.0018")]

# q_r(p) = beta1 / sqrt(p) + beta2 / p
_N_P_ALPHA = {
    "PCvM": {"1/n": ("0.1130", "-0.5415"), "1/(n alpha)": ("-0.0031", "0"),
             "1/(n sqrt(alpha))": ("0.1438", "0")},
    "PAD": {"1/n": ("0.0978", "-0.3596"), "1/(n alpha)": ("-0.0025", "0"),
            "1/(n sqrt(alpha))": ("0.1126", "0")},
    "NBak": {"1/n": ("0.1189", "-0.5838"), "1/(n alpha)": ("-0.0030", "0"),
             "1/(n sqrt(alpha))": ("0.1210", "0.0385")},
}

# subtract (1/n, 1/n^2), multiply (1/sqrt(n), 1/n)
_STEPHENS = {
    "D": (("0", "0"), ("0.12", "0.11")),
    "W2": (("0.4", "-0.6"), ("0", "1")),
    "A2": (("0", "0"), ("0", "0")),
    "V": (("0", "0"), ("0.155", "0.24")),
    "U2": (("0.1", "-0.1"), ("0", "0.8")),
}


def _terms(rows):
    return tuple(Term(a, b, float(c)) for a, b, c in rows)


BUILTIN_FORMS: Dict[StatisticKind, StabilizedForm] = {
    as_kind(k): StabilizedForm(k, _terms(rows)) for k, rows in _N_ALPHA.items()}

DIM_FORMS: Dict[StatisticKind, DimStabilizedForm] = {
    as_kind(k): DimStabilizedForm(k, {r: (float(b1), float(b2)) for r, (b1, b2) in q.items()})
    for k, q in _N_P_ALPHA.items()}

P2_FORMS: Dict[str, StabilizedForm] = {
    "PCvM:p2_direct": StabilizedForm("PCvM", _terms(_P2_DIRECT["PCvM"]), name="p2_direct"),
    "PAD:p2_direct": StabilizedForm("PAD", _terms(_P2_DIRECT["PAD"]), name="p2_direct"),
    "PAD:p2_specialized": StabilizedForm("PAD", _terms(_PAD_P2_SPECIALIZED), name="p2_specialized"),
}

STEPHENS_FORMS: Dict[StatisticKind, StephensForm] = {
    as_kind(k): StephensForm(k, (float(s[0]), float(s[1])), (float(m[0]), float(m[1])))
    for k, (s, m) in _STEPHENS.items()}

#: coefficient strings exactly as published, for golden tests
PUBLISHED_COEFFICIENTS = {"n_alpha": _N_ALPHA, "p2_direct": _P2_DIRECT,
                          "p2_specialized": {"PAD": _PAD_P2_SPECIALIZED},
                          "n_p_alpha": _N_P_ALPHA, "stephens": _STEPHENS}


def default_form(kind, variant: Optional[str] = None) -> AnyForm:
    """Built-in form for ``kind``.

    ``variant`` selects ``"p2_direct"`` (PCvM, PAD) or ``"p2_specialized"``
    (PAD) forms fitted at p = 2, or ``"stephens"`` for the legacy forms.
    """
    kind = as_kind(kind)
    if variant in (None, "n_alpha", "n_p_alpha"):
        if kind.is_classical:
            return BUILTIN_FORMS[kind]
        return DIM_FORMS[kind]
    if variant == "stephens":
        if kind not in STEPHENS_FORMS:
            raise KindMismatchError(f"no legacy form for {kind}")
        return STEPHENS_FORMS[kind]
    key = f"{kind.value}:{variant}"
    if key not in P2_FORMS:
        raise ConfigurationError(f"no form variant {variant!r} for {kind}")
    return P2_FORMS[key]
