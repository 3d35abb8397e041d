import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gofstab.asymptotics import asymptotic_quantile, published_projected_table
from gofstab.errors import (ConfigurationError, KindMismatchError, ValidityError,
                            ValidityWarning)
from gofstab.kinds import CLASSICAL, SPHERICAL
from gofstab.stabilizer import (BUILTIN_FORMS, DIM_FORMS, P2_FORMS, PUBLISHED_COEFFICIENTS,
                                STEPHENS_FORMS, DimStabilizedForm, StabilizedForm, Term,
                                critical_value, default_form, eval_g, eval_g_dim, form_from_dict,
                                load_form, save_form, stabilize, stephens_critical_value,
                                stephens_modify)
from gofstab.statistics import StatisticValue

# Independent transcription of the coefficient bundles: (1/sqrt(n), 1/(n sqrt(a)), 1/(sqrt(n) sqrt(a)))
# for D and V, (1/n, 1/(n sqrt(a)), 1/(n a)) for the rest.
GOLDEN_N_ALPHA = {
    "D": {(0.5, 0.0): "0.1575", (1.0, 0.5): "0.0192", (0.5, 0.5): "-0.0051"},
    "V": {(0.5, 0.0): "0.2330", (1.0, 0.5): "0.0276", (0.5, 0.5): "-0.0068"},
    "W2": {(1.0, 0.0): "-0.1651", (1.0, 0.5): "0.0749", (1.0, 1.0): "-0.0014"},
    "U2": {(1.0, 0.0): "-0.1505", (1.0, 0.5): "0.0917", (1.0, 1.0): "-0.0018"},
    "A2": {(1.0, 0.0): "0.0360", (1.0, 0.5): "-0.0234", (1.0, 1.0): "0.0006"},
}
GOLDEN_Q = {
    "PCvM": {"1/n": ("0.1130", "-0.5415"), "1/(n alpha)": ("-0.0031", "0"),
             "1/(n sqrt(alpha))": ("0.1438", "0")},
    "PAD": {"1/n": ("0.0978", "-0.3596"), "1/(n alpha)": ("-0.0025", "0"),
            "1/(n sqrt(alpha))": ("0.1126", "0")},
    "NBak": {"1/n": ("0.1189", "-0.5838"), "1/(n alpha)": ("-0.0030", "0"),
             "1/(n sqrt(alpha))": ("0.1210", "0.0385")},
}
GOLDEN_STEPHENS = {
    "D": ((0, 0), (0.12, 0.11)),
    "W2": ((0.4, -0.6), (0, 1)),
    "A2": ((0, 0), (0, 0)),
    "V": ((0, 0), (0.155, 0.24)),
    "U2": ((0.1, -0.1), (0, 0.8)),
}


def test_golden_n_alpha_coefficients():
    for kind, rows in PUBLISHED_COEFFICIENTS["n_alpha"].items():
        assert {(a, b): c for a, b, c in rows} == GOLDEN_N_ALPHA[kind]
        form = BUILTIN_FORMS[default_form(kind).kind]
        for t in form.terms:
            assert t.coeff == float(GOLDEN_N_ALPHA[kind][(t.n_exp, t.alpha_exp)])


def test_golden_dimension_coefficients():
    assert PUBLISHED_COEFFICIENTS["n_p_alpha"] == GOLDEN_Q
    for kind, form in DIM_FORMS.items():
        for r, (b1, b2) in GOLDEN_Q[kind.value].items():
            assert form.q[r] == (float(b1), float(b2))


def test_golden_stephens_coefficients():
    for kind, form in STEPHENS_FORMS.items():
        s, m = GOLDEN_STEPHENS[kind.value]
        assert form.subtract == s and form.multiply == m


def test_eval_g_hand_examples():
    assert eval_g(default_form("D"), 25, 0.04) == pytest.approx(1.03024, abs=1e-12)
    assert eval_g(default_form("W2"), 100, 0.25) == pytest.approx(0.999791, abs=1e-12)


def test_eval_g_dim_hand_example():
    form = default_form("PCvM")
    assert form.q_value("1/n", 4) == pytest.approx(0.1130 / 2 - 0.5415 / 4, abs=1e-15)
    assert form.q_value("1/n", 4) == pytest.approx(-0.0789, abs=5e-5)
    expected = 1 + (0.1130 / 2 - 0.5415 / 4) / 20 - (0.0031 / 2) / (20 * 0.05) + (0.1438 / 2) / (20 * math.sqrt(0.05))
    assert eval_g_dim(form, 20, 4, 0.05) == pytest.approx(expected, abs=1e-12)
    assert eval_g_dim(form, 20, 4, 0.05) == pytest.approx(1.010584, abs=5e-7)


def test_nbak_two_term_curve():
    form = default_form("NBak")
    for p in (2, 3, 7, 50):
        assert form.q_value("1/(n sqrt(alpha))", p) == pytest.approx(0.1210 / math.sqrt(p) + 0.0385 / p)


@pytest.mark.parametrize("alpha", [0.01, 0.05, 0.10, 0.25])
def test_large_n_limit(alpha):
    for form in BUILTIN_FORMS.values():
        assert abs(eval_g(form, 10 ** 9, alpha) - 1) <= 1e-4
    for form in P2_FORMS.values():
        assert abs(eval_g(form, 10 ** 9, alpha) - 1) <= 1e-4
    for form in DIM_FORMS.values():
        for p in (2, 10, 300):
            assert abs(eval_g_dim(form, 10 ** 9, p, alpha) - 1) <= 1e-4


def test_validity_errors():
    form = default_form("D")
    with pytest.raises(ValidityError):
        eval_g(form, 4, 0.05)
    with pytest.raises(ValidityError):
        eval_g(form, 10, 0.3)
    with pytest.raises(ValidityError):
        eval_g(form, 10, 0.0)
    with pytest.raises(ValidityError):
        eval_g_dim(default_form("PAD"), 10, 301, 0.05)
    with pytest.raises(ValidityError):
        eval_g_dim(default_form("PAD"), 10, 1, 0.05)
    with pytest.raises(ValidityError):
        critical_value("D", 10, 0.0005, strict=False)


def test_relaxed_mode_warns():
    with pytest.warns(ValidityWarning):
        v = eval_g(default_form("D"), 10, 0.5, strict=False)
    assert v == pytest.approx(float(default_form("D").value(10, 0.5)))
    with pytest.raises(ValidityError):
        eval_g(default_form("D"), 10, 1.5, strict=False)


def test_form_construction_rules():
    with pytest.raises(ConfigurationError):
        StabilizedForm("D", (Term(0.25, 0.0, 1.0),))
    with pytest.raises(ConfigurationError):
        StabilizedForm("D", tuple(Term(1.0, 0.0, 0.1) for _ in range(7)))
    with pytest.raises(ConfigurationError):
        DimStabilizedForm("D", GOLDEN_Q["PAD"])


def test_stabilize_examples():
    form = default_form("D")
    assert stabilize(0.0, 0.05, form, n=30) == 0.0
    sv = StatisticValue("D", 1.3581 / 1.03024 / 5.0, 25)
    t_star = stabilize(sv, 0.04)
    assert t_star == pytest.approx(1.3581, rel=1e-12)
    assert (t_star > asymptotic_quantile("D", 0.04)) == (1.3581 > asymptotic_quantile("D", 0.04))


def test_stabilize_kind_mismatch():
    with pytest.raises(KindMismatchError):
        stabilize(StatisticValue("W2", 0.3, 20), 0.05, default_form("D"))
    with pytest.raises(KindMismatchError):
        critical_value("D", 20, 0.05, form=default_form("W2"))
    with pytest.raises(ConfigurationError):
        stabilize(0.3, 0.05, default_form("D"))


def test_pad_p2_variants():
    assert default_form("PAD", "p2_direct").name == "p2_direct"
    assert default_form("PAD", "p2_specialized").name == "p2_specialized"
    assert default_form("PCvM", "p2_direct").kind.value == "PCvM"
    with pytest.raises(ConfigurationError):
        default_form("NBak", "p2_direct")


def test_critical_value_examples():
    assert critical_value("D", 10 ** 9, 0.10) == pytest.approx(1.2239, abs=5e-4)
    g_v = float(default_form("V").value(25, 0.05))
    assert critical_value("V", 25, 0.05) == pytest.approx(1.7473 / g_v, abs=5e-4 / g_v)
    g_p = eval_g_dim(default_form("PCvM"), 50, 3, 0.10)
    assert critical_value("PCvM", 50, 0.10, p=3) == pytest.approx(0.2768 / g_p, rel=1e-12)
    assert published_projected_table().lookup("PCvM", 3, 0.10) == 0.2768


@pytest.mark.parametrize("kind", [k.value for k in CLASSICAL])
@pytest.mark.parametrize("n", [5, 10, 50, 300])
def test_critical_value_decreasing_on_grid(kind, n):
    cv = [critical_value(kind, n, a / 100) for a in range(1, 26)]
    assert np.all(np.diff(cv) < 0)


@pytest.mark.parametrize("kind", [k.value for k in SPHERICAL])
def test_directional_critical_values_decreasing(kind):
    cv = [critical_value(kind, 20, a, p=3) for a in (0.01, 0.05, 0.10)]
    assert cv[0] > cv[1] > cv[2]


@given(T=st.floats(0.0, 5.0), n=st.integers(5, 2000), a=st.integers(1, 25),
       kind=st.sampled_from(["D", "W2", "A2", "V", "U2"]))
def test_cross_representation_identity(T, n, a, kind):
    alpha = a / 100
    lhs = stabilize(T, alpha, default_form(kind), n=n)
    q = asymptotic_quantile(kind, alpha)
    cv = critical_value(kind, n, alpha)
    if abs(lhs - q) > 1e-12 * q:
        assert (lhs > q) == (T > cv)


@given(T1=st.floats(0.0, 5.0), T2=st.floats(0.0, 5.0), n=st.integers(5, 500))
def test_stabilize_monotone_in_T(T1, T2, n):
    form = default_form("W2")
    lo, hi = sorted((T1, T2))
    assert stabilize(lo, 0.05, form, n=n) <= stabilize(hi, 0.05, form, n=n)


def test_stephens_examples():
    assert stephens_modify("D", 1.0, 100) == pytest.approx(1.0131, abs=1e-12)
    assert stephens_modify("W2", 0.004, 100) == pytest.approx(6.06e-5, rel=1e-9)
    for T in (0.1, 1.7, 3.0):
        assert stephens_modify("A2", T, 20) == T
    with pytest.raises(ValidityError):
        stephens_modify("D", 1.0, 7)
    with pytest.raises(ValidityError):
        stephens_critical_value("V", 7, 0.05)


def test_stephens_inverse_round_trip():
    for kind, form in STEPHENS_FORMS.items():
        for n in (8, 20, 200):
            T = 0.73
            assert form.modify(form.inverse(T, n), n) == pytest.approx(T, rel=1e-12)
            assert form.modify(T, 10 ** 12) == pytest.approx(T, rel=1e-5)


def test_stephens_critical_value_inverts():
    cv = stephens_critical_value("D", 30, 0.05)
    assert stephens_modify("D", cv, 30) == pytest.approx(asymptotic_quantile("D", 0.05), rel=1e-12)


@pytest.mark.parametrize("form", list(BUILTIN_FORMS.values()) + list(DIM_FORMS.values())
                         + list(STEPHENS_FORMS.values()) + list(P2_FORMS.values()))
def test_json_round_trip(form, tmp_path):
    path = tmp_path / "form.json"
    save_form(form, path)
    assert load_form(path) == form
    d = json.loads(path.read_text())
    assert d["model"] in ("n_alpha", "n_p_alpha", "stephens")


def test_unknown_model_rejected():
    with pytest.raises(ConfigurationError):
        form_from_dict({"kind": "D", "model": "polynomial"})
