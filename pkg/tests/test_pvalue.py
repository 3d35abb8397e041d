import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gofstab.asymptotics import AlphaGrid, asymptotic_quantile
from gofstab.errors import ConfigurationError, DataError, ValidityError
from gofstab.kinds import CLASSICAL
from gofstab.pvalue import (CAPPED, EXTRAPOLATED, NEWTON, PValueEngine, approx_pvalue,
                            engine_for, monte_carlo_pvalue, pvalue_batch_csv, reject)
from gofstab.stabilizer import critical_value, default_form
from gofstab.statistics import StatisticValue, UnitSample, compute_statistic

KINDS = [k.value for k in CLASSICAL]


def test_capped_for_small_statistic():
    res = approx_pvalue(0.01, n=30, kind="W2")
    assert res.value == 0.25 and res.method == CAPPED and res.bracket is None
    assert str(res).startswith(">=")


def test_super_uniform_grid_sample_is_capped():
    u = UnitSample((np.arange(1, 21) - 0.5) / 20)
    stat = compute_statistic("D", u)
    assert stat.value == pytest.approx(0.025)
    assert approx_pvalue(stat).method == CAPPED


def test_critical_value_round_trip_example():
    res = approx_pvalue(critical_value("D", 100, 0.05), n=100, kind="D")
    assert res.method == NEWTON
    assert res.value == pytest.approx(0.05, abs=0.002)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("n", [5, 10, 100, 1000])
@pytest.mark.parametrize("alpha", [0.003, 0.01, 0.05, 0.1, 0.2, 0.25])
def test_self_consistency(kind, n, alpha):
    res = approx_pvalue(critical_value(kind, n, alpha), n=n, kind=kind)
    assert res.value == pytest.approx(alpha, abs=0.002)


def test_extrapolated_for_huge_statistic():
    res = approx_pvalue(5.0, n=50, kind="D")
    assert res.method == EXTRAPOLATED
    assert 0.0 <= res.value < 1e-3


def test_statistic_value_input_rescales():
    sv = StatisticValue("D", 0.2, 49)
    assert approx_pvalue(sv) == approx_pvalue(0.2 * 7, n=49, kind="D")


def test_plain_value_needs_kind_and_n():
    with pytest.raises(ConfigurationError):
        approx_pvalue(0.5, n=20)
    with pytest.raises(ConfigurationError):
        approx_pvalue(0.5, kind="W2")


def test_n_below_validity():
    with pytest.raises(ValidityError):
        approx_pvalue(0.5, n=4, kind="W2")


def test_non_monotone_quantiles_rejected():
    grid = AlphaGrid()
    tinf = np.array([asymptotic_quantile("W2", a) for a in grid.used])
    tinf[10] = tinf[9] + 0.01
    with pytest.raises(DataError):
        approx_pvalue(0.5, n=20, kind="W2", grid=grid, T_inf=tinf)
    with pytest.raises(DataError):
        PValueEngine(default_form("W2").kind, default_form("W2"), grid.used, tinf[:-1])


def test_deterministic():
    a = approx_pvalue(0.4, n=17, kind="U2")
    b = approx_pvalue(0.4, n=17, kind="U2")
    assert a == b


@given(T1=st.floats(0.0, 4.0), T2=st.floats(0.0, 4.0), n=st.integers(5, 600),
       kind=st.sampled_from(KINDS))
def test_monotone_in_statistic(T1, T2, n, kind):
    lo, hi = sorted((T1, T2))
    assert approx_pvalue(hi, n=n, kind=kind).value <= approx_pvalue(lo, n=n, kind=kind).value


def test_monotone_on_thousand_pairs(rng):
    for _ in range(1000):
        kind = KINDS[rng.integers(len(KINDS))]
        n = int(rng.integers(5, 500))
        lo, hi = np.sort(rng.uniform(0, 3, 2))
        assert approx_pvalue(hi, n=n, kind=kind).value <= approx_pvalue(lo, n=n, kind=kind).value


@given(T=st.floats(0.0, 4.0), n=st.integers(5, 600), kind=st.sampled_from(KINDS))
def test_output_range_and_bracket(T, n, kind):
    res = approx_pvalue(T, n=n, kind=kind)
    assert 0.0 <= res.value <= 0.25
    if res.method == NEWTON:
        a1, a2 = res.bracket
        assert a1 <= res.value <= a2
        eng = engine_for(kind)
        i = int(np.searchsorted(eng.alphas, a1))
        assert eng.alphas[i + 1] == a2
        t1, t2 = eng.stabilized(T, n)[[i, i + 1]]
        assert t1 <= eng.tinf[i] and t2 > eng.tinf[i + 1]


@pytest.mark.parametrize("kind", KINDS)
def test_consistent_with_reject(kind, rng):
    step = 1e-3
    for _ in range(100):
        n = int(rng.integers(5, 400))
        T = float(rng.uniform(0, 1.1 * asymptotic_quantile(kind, 0.005)))
        pv = approx_pvalue(T, n=n, kind=kind).value
        for a in np.arange(1, 26) / 100:
            if abs(pv - a) > step:
                assert reject(T, a, n=n, kind=kind) == (pv < a)


def test_reject_examples():
    for a in np.arange(1, 26) / 100:
        assert not reject(0.0, a, n=50, kind="A2")
        assert reject(10.0, a, n=50, kind="A2")
    with pytest.raises(ValidityError):
        reject(1.0, 0.3, n=50, kind="A2")


def test_directional_pvalue():
    cv = critical_value("PAD", 40, 0.05, p=3)
    res = approx_pvalue(cv, n=40, p=3, kind="PAD")
    assert res.value == pytest.approx(0.05, abs=0.003)
    with pytest.raises(ConfigurationError):
        approx_pvalue(1.0, n=40, kind="PAD")


def test_batch_csv(tmp_path):
    src = tmp_path / "in.csv"
    dst = tmp_path / "out.csv"
    src.write_text("statistic,n\n0.01,20\n0.9,30\n")
    pvalue_batch_csv(src, dst, "W2")
    rows = list(csv.DictReader(open(dst)))
    assert [r["method"] for r in rows] == [CAPPED, NEWTON]
    assert float(rows[1]["pvalue"]) == approx_pvalue(0.9, n=30, kind="W2").value
    src.write_text("0.3,abc\n")
    with pytest.raises(DataError):
        pvalue_batch_csv(src, dst, "W2")


def test_monte_carlo_pvalue_agrees():
    T = critical_value("W2", 20, 0.05)
    mc = monte_carlo_pvalue("W2", T, 20, trials=20_000, rng=np.random.default_rng(3))
    assert mc == pytest.approx(0.05, abs=4 * np.sqrt(0.05 * 0.95 / 20_000))


def test_kind_names_and_members_share_cached_engines():
    from gofstab.kinds import StatisticKind

    assert hash(StatisticKind.W2) == hash("W2")
    assert approx_pvalue(0.3, n=20, kind="W2") == approx_pvalue(0.3, n=20, kind=StatisticKind.W2)
