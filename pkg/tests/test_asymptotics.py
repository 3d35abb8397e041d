import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from gofstab.asymptotics import (AlphaGrid, CriticalTable, asymptotic_critical_values,
                                 asymptotic_quantile, asymptotic_sf, build_classical_table,
                                 build_projected_table, classical_table, default_projected_table,
                                 projected_asymptotic_quantile, published_projected_table,
                                 upper_quantiles)
from gofstab.errors import DataError, DomainError, TableMissError

CLASSICAL = ("D", "W2", "A2", "V", "U2")


def _imhof_sf(x, lams, tail_mean):
    """P(sum lam_k chi2_1 > x) by Imhof inversion, tail eigenvalues folded into the mean."""
    lams = np.asarray(lams)
    x = x - tail_mean

    def integrand(u):
        theta = 0.5 * np.sum(np.arctan(lams * u)) - 0.5 * x * u
        rho = np.exp(0.25 * np.sum(np.log1p((lams * u) ** 2)))
        return math.sin(theta) / (u * rho)

    val, _ = integrate.quad(integrand, 0, np.inf, limit=2000, epsabs=1e-12)
    return 0.5 + val / math.pi


def _cvm_eigen(K=4000):
    k = np.arange(1, K + 1)
    lam = 1 / (k * math.pi) ** 2
    return lam, 1 / 6 - lam.sum()


def _ad_eigen(K=4000):
    k = np.arange(1, K + 1)
    lam = 1.0 / (k * (k + 1))
    return lam, 1.0 - lam.sum()


@pytest.mark.parametrize("x", [0.3, 0.8, 1.3581, 2.0])
def test_kolmogorov_matches_scipy(x):
    assert asymptotic_sf("D", x) == pytest.approx(stats.kstwobign.sf(x), abs=1e-12)


@pytest.mark.parametrize("x", [0.9, 1.3, 1.7473, 2.5])
def test_kuiper_matches_direct_series(x):
    k = np.arange(1, 200)
    direct = np.sum(2 * (4 * k ** 2 * x ** 2 - 1) * np.exp(-2 * k ** 2 * x ** 2))
    assert asymptotic_sf("V", x) == pytest.approx(direct, abs=1e-12)


@pytest.mark.parametrize("x", [0.05, 0.1869, 0.2685, 0.5])
def test_watson_matches_direct_series(x):
    k = np.arange(1, 200)
    direct = 2 * np.sum((-1.0) ** (k - 1) * np.exp(-2 * k ** 2 * math.pi ** 2 * x))
    assert asymptotic_sf("U2", x) == pytest.approx(direct, abs=1e-12)


@pytest.mark.parametrize("x", [0.1, 0.3473, 0.7435])
def test_cvm_matches_imhof(x):
    lam, tail = _cvm_eigen()
    assert asymptotic_sf("W2", x) == pytest.approx(_imhof_sf(x, lam, tail), abs=1e-6)


@pytest.mark.parametrize("x", [0.8, 2.4922, 3.8784])
def test_ad_matches_imhof(x):
    lam, tail = _ad_eigen()
    assert asymptotic_sf("A2", x) == pytest.approx(_imhof_sf(x, lam, tail), abs=1e-6)


PUBLISHED_ASYMPTOTIC = {  # alpha = 0.15, 0.10, 0.05, 0.025, 0.01
    "D": (1.1380, 1.2239, 1.3581, 1.4803, 1.6277),
    "W2": (0.2841, 0.3473, 0.4613, 0.5806, 0.7435),
    "V": (1.5370, 1.6196, 1.7473, 1.8625, 2.0010),
    "U2": (0.1313, 0.1518, 0.1869, 0.2220, 0.2685),
    "A2": (1.6212, 1.9331, 2.4922, 3.0775, 3.8784),
}


@pytest.mark.parametrize("kind", CLASSICAL)
def test_published_asymptotic_quantiles(kind):
    for a, v in zip((0.15, 0.10, 0.05, 0.025, 0.01), PUBLISHED_ASYMPTOTIC[kind]):
        assert asymptotic_quantile(kind, a) == pytest.approx(v, abs=5e-4)


def test_sf_examples():
    assert asymptotic_sf("D", 1.3581) == pytest.approx(0.05, abs=5e-4)
    assert asymptotic_sf("U2", 0.2685) == pytest.approx(0.01, abs=5e-4)
    assert asymptotic_sf("V", 50.0) == pytest.approx(0.0, abs=1e-15)
    assert asymptotic_sf("V", 1e-4) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(DomainError):
        asymptotic_sf("D", 0.0)


@pytest.mark.parametrize("kind", CLASSICAL)
@pytest.mark.parametrize("alpha", [0.25, 0.10, 0.01])
def test_quantile_round_trip(kind, alpha):
    assert asymptotic_sf(kind, asymptotic_quantile(kind, alpha)) == pytest.approx(alpha, abs=1e-9)


@pytest.mark.parametrize("kind", CLASSICAL)
def test_sf_monotone_on_log_grid(kind):
    xs = np.logspace(-2.5, 1.5, 200)
    sf = np.array([asymptotic_sf(kind, x) for x in xs])
    assert np.all(sf >= 0) and np.all(sf <= 1)
    assert np.all(np.diff(sf) <= 1e-15)


@pytest.mark.parametrize("kind", ["D", "V", "U2"])
def test_truncation_stability(kind):
    for x in np.logspace(-2, 1, 30):
        assert abs(asymptotic_sf(kind, x, K=100) - asymptotic_sf(kind, x, K=1000)) < 1e-12


def test_alpha_grid():
    g = AlphaGrid()
    assert g.values[0] == 1 / 1000 and g.values.size == 1000
    assert np.all(np.diff(g.values) > 0)
    assert g.used[-1] == pytest.approx(0.25) and g.used.size == 250
    assert 0.05 in g and 0.0505 not in g


def test_published_projected_lookups():
    assert projected_asymptotic_quantile("PCvM", 2, 0.05) == 0.3735
    assert projected_asymptotic_quantile("NBak", 11, 0.01) == 2.3108
    assert projected_asymptotic_quantile("PAD", 3, 0.10) == 1.5604
    with pytest.raises(TableMissError, match="table miss"):
        projected_asymptotic_quantile("PAD", 3, 0.07)
    published_projected_table().check_monotone()


def test_packaged_dense_table_agrees_with_published():
    dense = default_projected_table()
    dense.check_monotone()
    pub = published_projected_table()
    # alpha = 0.01 quantiles carry about 3x the Monte Carlo error of alpha = 0.05 at M = 1e6
    for (kind, p, a), v in pub.entries.items():
        tol = 0.02 if a == 0.01 else 0.01
        assert dense.lookup(kind, p, a) == pytest.approx(v, abs=tol)


def test_classical_table_matches_series():
    t = classical_table()
    for kind in CLASSICAL:
        assert t.lookup(kind, None, 0.05) == pytest.approx(asymptotic_quantile(kind, 0.05), abs=1e-12)
    vals = asymptotic_critical_values("W2", None, [0.01, 0.05])
    assert vals[0] > vals[1]


def test_critical_table_csv_round_trip(tmp_path):
    t = build_classical_table(["D"], [0.01, 0.05, 0.1])
    t.to_csv(tmp_path / "t.csv")
    back = CriticalTable.from_csv(tmp_path / "t.csv")
    assert back.entries == t.entries and back.provenance == "series"
    bad = CriticalTable()
    bad.add("D", None, 0.01, 1.0)
    bad.add("D", None, 0.05, 1.5)
    with pytest.raises(DataError):
        bad.check_monotone()


def test_upper_quantile_type1():
    v = np.arange(1, 101, dtype=float)  # M = 100
    assert upper_quantiles(v, [0.05])[0] == 95.0
    assert upper_quantiles(v, [1.0])[0] == 1.0
    assert upper_quantiles(v, [0.001])[0] == 100.0


@given(st.lists(st.floats(0.001, 0.999), min_size=2, max_size=10, unique=True))
def test_upper_quantiles_monotone(alphas):
    v = np.sort(np.random.default_rng(0).standard_normal(1000))
    a = np.sort(alphas)
    q = upper_quantiles(v, a)
    assert np.all(np.diff(q) <= 0)


def test_build_projected_table_small_and_seeded():
    a = build_projected_table("PCvM", [2], alphas=[0.1, 0.05], M=20_000, seed=5)
    b = build_projected_table("PCvM", [2], alphas=[0.1, 0.05], M=20_000, seed=5)
    assert a.entries == b.entries
    assert a.meta["provenance"] == "mc_n500" and a.meta["M"] == 20_000
    assert a.lookup("PCvM", 2, 0.05) == pytest.approx(0.3735, abs=0.02)
    a.check_monotone()


@pytest.mark.slow
def test_build_projected_table_pcvm_p2_full_scale():
    t = build_projected_table("PCvM", [2], alphas=[0.10, 0.05], M=10 ** 6, seed=101)
    assert t.lookup("PCvM", 2, 0.05) == pytest.approx(0.3735, abs=0.005)


@pytest.mark.slow
def test_build_projected_table_seed_consistency():
    a = build_projected_table("PAD", [3], alphas=[0.10], M=10 ** 6, seed=1)
    b = build_projected_table("PAD", [3], alphas=[0.10], M=10 ** 6, seed=2)
    # sd of a quantile: sqrt(a (1 - a) / M) / f(q); f estimated from the table spread
    c = build_projected_table("PAD", [3], alphas=[0.09, 0.11], M=10 ** 6, seed=1)
    dens = 0.02 / (c.lookup("PAD", 3, 0.09) - c.lookup("PAD", 3, 0.11))
    se = math.sqrt(0.1 * 0.9 / 1e6) / dens
    assert abs(a.lookup("PAD", 3, 0.1) - b.lookup("PAD", 3, 0.1)) < 4 * math.sqrt(2) * se
