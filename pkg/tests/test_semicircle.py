import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from wignerlab import semicircle as sc

finite_z = st.builds(complex, st.floats(-50, 50), st.floats(1e-6, 50))


def stieltjes_quad(z):
    f = lambda x, part: getattr(sc.density(x) / (x - z), part)  # noqa: E731
    re = integrate.quad(f, -2, 2, args=("real",), limit=400, epsabs=1e-13)[0]
    im = integrate.quad(f, -2, 2, args=("imag",), limit=400, epsabs=1e-13)[0]
    return complex(re, im)


def test_density_values():
    assert sc.density(0) == pytest.approx(1 / math.pi, abs=1e-10)
    assert sc.density(2) == 0 and sc.density(-2) == 0 and sc.density(3) == 0
    assert sc.density(1) == pytest.approx(0.2756644477, abs=1e-10)


def test_density_normalized():
    assert integrate.quad(sc.density, -2, 2, epsabs=1e-13)[0] == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("x", [-1.9, -0.7, 0.0, 1.0, 1.5, 1.999])
def test_cdf_matches_quadrature(x):
    ref = integrate.quad(sc.density, -2, x, epsabs=1e-14)[0]
    assert sc.cdf(x) == pytest.approx(ref, abs=1e-10)


def test_cdf_support():
    assert sc.cdf(0) == 0.5
    assert sc.cdf(-2) == 0.0 and sc.cdf(2) == 1.0
    assert sc.cdf(-7) == 0.0 and sc.cdf(7) == 1.0


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_cdf_monotone(a, b):
    lo, hi = sorted((a, b))
    assert sc.cdf(lo) <= sc.cdf(hi)


def test_stieltjes_at_i():
    s = sc.stieltjes(1j)
    assert s == pytest.approx(1j * (math.sqrt(5) - 1) / 2, abs=1e-14)
    assert s == pytest.approx(stieltjes_quad(1j), abs=1e-10)


@pytest.mark.parametrize("z", [0.3 + 0.2j, -1.5 + 0.05j, 2.5 + 0.1j, -4 + 2j, 0.0 + 10j])
def test_stieltjes_matches_quadrature(z):
    assert sc.stieltjes(z) == pytest.approx(stieltjes_quad(z), abs=1e-8)


def test_stieltjes_rejects_real_axis():
    with pytest.raises(ValueError):
        sc.stieltjes(1.0 + 0j)


def test_grid_branch_and_self_consistency():
    dom = sc.DomainD(u0=3, V=10, A0=2, n=100)
    z = dom.grid(100, 100)
    s = sc.stieltjes(z)
    assert np.all(s.imag > 0)
    assert np.all(np.abs(s) <= 1)
    assert np.max(np.abs(s * s + z * s + 1)) < 1e-12


@given(finite_z)
def test_branch_property(z):
    s = sc.stieltjes(z)
    assert s.imag > 0
    assert abs(s) <= 1 + 1e-15
    assert abs(s * s + z * s + 1) <= 1e-12 * max(1, abs(z))


def test_stieltjes_decays_at_infinity():
    assert abs(sc.stieltjes(1e8j)) == pytest.approx(1e-8, rel=1e-6)


def test_b_of_z():
    assert sc.b_of_z(1j) == pytest.approx(1j * math.sqrt(5), abs=1e-14)
    z = 1e6j
    assert sc.b_of_z(z) == pytest.approx(z, rel=1e-10)


@given(finite_z)
def test_b_squared(z):
    b = sc.b_of_z(z)
    assert abs(b * b - (z * z - 4)) <= 1e-12 * max(1, abs(z) ** 2)
    assert abs(abs(b) ** 2 - abs(z * z - 4)) <= 1e-12 * max(1, abs(z) ** 2)


def test_b_edge_scaling_constants():
    dom = sc.DomainD(u0=3, V=10, A0=2, n=100)
    z = dom.grid(100, 100)
    gamma = sc.gamma_edge(z.real)
    ratio = np.abs(sc.b_of_z(z)) / np.sqrt(gamma + z.imag)
    c, C = ratio.min(), ratio.max()
    # fitted constants, reported rather than prescribed
    assert 0 < c <= C < np.inf
    assert c > 0.5 and C < 4


def test_gamma_edge():
    assert sc.gamma_edge(2.5) == 0.5
    assert sc.gamma_edge(2) == 0 and sc.gamma_edge(-2) == 0
    assert sc.gamma_edge(0) == 2


def test_moments():
    assert [sc.moment(k) for k in range(9)] == [1, 0, 1, 0, 2, 0, 5, 0, 14]
    assert sc.moment(60) == math.comb(60, 30) // 31
    with pytest.raises(OverflowError):
        sc.moment(61)
    with pytest.raises(ValueError):
        sc.moment(-1)


@pytest.mark.parametrize("k", [2, 4, 6, 8])
def test_moments_match_quadrature(k):
    ref = integrate.quad(lambda x: x**k * sc.density(x), -2, 2, epsabs=1e-13)[0]
    assert sc.moment(k) == pytest.approx(ref, abs=1e-9)


def bisect_quantile(q):
    lo, hi = -2.0, 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if sc.cdf(mid) < q:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_quantile_examples():
    assert sc.quantile(0.5) == pytest.approx(0.0, abs=1e-14)
    x = sc.quantile(0.25)
    assert sc.cdf(x) == pytest.approx(0.25, abs=1e-10)
    assert x == pytest.approx(bisect_quantile(0.25), abs=1e-12)


@given(st.floats(1e-9, 1 - 1e-9))
def test_quantile_matches_bisection(q):
    assert abs(sc.quantile(q) - bisect_quantile(q)) <= 1e-12


@given(st.floats(1e-6, 0.5))
def test_quantile_symmetry(q):
    assert abs(sc.quantile(q) + sc.quantile(1 - q)) <= 1e-12


@given(st.floats(-2 + 1e-6, 2 - 1e-6))
def test_quantile_inverts_cdf(x):
    q = sc.cdf(x)
    if 0 < q < 1:
        assert abs(sc.quantile(q) - x) <= 1e-9


@pytest.mark.parametrize("q", [0, 1, -0.1, 1.5, float("nan")])
def test_quantile_range_error(q):
    with pytest.raises(ValueError):
        sc.quantile(q)


def test_eigenvalue_quantiles_and_table(tmp_path):
    n = 512
    path = tmp_path / "g.csv"
    gammas = sc.write_quantile_table(path, n)
    assert gammas[-1] == 2.0
    j = np.arange(1, n)
    assert np.max(np.abs(sc.cdf(gammas[:-1]) - j / n)) <= 1e-10
    rows = list(csv.DictReader(path.open()))
    assert len(rows) == n and rows[0].keys() == {"j", "n", "gamma_j"}
    assert float(rows[10]["gamma_j"]) == gammas[10]


def test_spectral_point_and_domain_validation():
    assert sc.SpectralPoint(1, 2).z == 1 + 2j
    with pytest.raises(ValueError):
        sc.SpectralPoint(0, 0)
    with pytest.raises(ValueError):
        sc.DomainD(u0=1, V=0.01, A0=8, n=10)
    dom = sc.DomainD(u0=2.5, V=1, A0=8, n=100)
    assert np.all(dom.contains(dom.grid(5, 5)))
    assert sc.stieltjes(sc.SpectralPoint(0, 1)) == sc.stieltjes(1j)
