import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from wignerlab import semicircle as sc
from wignerlab import spectral
from wignerlab.ensemble import EnsembleSpec, EntryDistribution, WignerSample, sample_raw
from wignerlab.errors import SpectralError
from wignerlab.resolvent import solve_resolvent

from conftest import sym

eigs = st.lists(st.floats(-3, 3), min_size=1, max_size=40)


def planted(vals):
    return spectral.SpectralDecomposition.planted(vals)


def test_decompose_diagonal():
    d = spectral.decompose(WignerSample.from_matrix(np.diag([3.0, 1.0, 2.0])))
    assert np.array_equal(d.eigenvalues, [1, 2, 3])
    assert np.allclose(np.abs(d.eigenvectors), np.eye(3)[:, [1, 2, 0]])


def test_decompose_2x2():
    a = 0.7
    d = spectral.decompose(WignerSample.from_matrix([[0, a], [a, 0]]))
    assert d.eigenvalues == pytest.approx([-a, a], abs=1e-15)


def test_decompose_random_invariants(gaussian_spec):
    s = sample_raw(gaussian_spec(50), 1)
    d = spectral.decompose(s)
    u, lam = d.eigenvectors, d.eigenvalues
    assert np.all(np.diff(lam) >= 0)
    assert np.max(np.abs(u.T @ u - np.eye(50))) <= 1e-9
    assert np.max(np.abs((u * lam) @ u.T - s.entries)) <= 1e-8 * np.max(np.abs(lam))
    assert abs(lam.sum() - np.trace(s.entries)) <= 1e-9 * 50 * np.max(np.abs(s.entries))
    assert d.source_seed == 1


def test_decompose_error_carries_seed():
    bad = WignerSample(2, np.array([[np.nan, 0], [0, 1.0]]), seed=77)
    with pytest.raises(SpectralError, match="77"):
        spectral.decompose(bad)


def test_counting():
    d = planted([1, 2, 3])
    assert spectral.counting(d, -np.inf, np.inf) == 3
    assert spectral.counting(d, 1.5, 3) == 2
    assert spectral.counting(d, 1, 1) == 1
    with pytest.raises(ValueError):
        spectral.counting(d, 2, 1)


def test_counting_matches_linear_scan(gaussian_spec):
    d = spectral.decompose(sample_raw(gaussian_spec(200), 2), vectors=False)
    lam = d.eigenvalues
    rng = np.random.default_rng(0)
    for a, b in np.sort(rng.uniform(-2.5, 2.5, (50, 2)), axis=1):
        scan = sum(a <= x <= b for x in lam)
        assert spectral.counting(d, a, b) == scan
        assert scan / 200 == pytest.approx(spectral.esd(d, b) - np.mean(lam < a), abs=1e-15)


@given(eigs, st.floats(-4, 4), st.floats(0, 3))
def test_counting_property(vals, a, w):
    d = planted(vals)
    c = spectral.counting(d, a, a + w)
    assert 0 <= c <= d.n


def test_esd_right_continuous():
    d = planted([0.0, 1.0])
    assert spectral.esd(d, 0.0) == 0.5
    assert spectral.esd(d, -1e-12) == 0.0
    assert spectral.esd(d, np.inf) == 1.0


def test_stieltjes_empirical_trivial():
    assert spectral.stieltjes_empirical(planted([0.0]), 1j) == pytest.approx(1j)


def test_kernel_density_view(gaussian_spec):
    d = spectral.decompose(sample_raw(gaussian_spec(80), 3), vectors=False)
    for u, v in [(0, 0.1), (1.2, 0.03), (-2.4, 1.0)]:
        m = spectral.stieltjes_empirical(d, complex(u, v))
        assert m.imag == pytest.approx(spectral.cauchy_kernel_density(d, u, v), abs=1e-12)


def test_empirical_stieltjes_matches_resolvent_trace(gaussian_spec):
    s = sample_raw(gaussian_spec(50), 4)
    d = spectral.decompose(s, vectors=False)
    for z in [0.1 + 0.05j, 2.2 + 0.3j, -1 + 1j]:
        tr = np.trace(solve_resolvent(s.entries, z)) / 50
        assert abs(spectral.stieltjes_empirical(d, z) - tr) <= 1e-9


@given(eigs, st.floats(-5, 5), st.floats(1e-3, 10))
def test_empirical_stieltjes_conjugate_and_positive(vals, u, v):
    d = planted(vals)
    m = spectral.stieltjes_empirical(d, complex(u, v))
    assert m.imag > 0
    mbar = np.mean(1.0 / (d.eigenvalues - complex(u, -v)))
    assert abs(mbar - m.conjugate()) <= 1e-12 * max(1, abs(m))


def test_kolmogorov_examples():
    assert spectral.kolmogorov_distance(planted([0.0])) == pytest.approx(0.5)
    n = 40
    gam = sc.quantile((np.arange(1, n + 1) - 0.5) / n)
    assert spectral.kolmogorov_distance(planted(gam)) == pytest.approx(1 / (2 * n), abs=1e-12)


GRID_LO, GRID_HI = -2.5, 2.5


def grid_scan(d, points=10**5):
    x = np.linspace(GRID_LO, GRID_HI, points)
    return np.max(np.abs(spectral.esd(d, x) - sc.cdf(x)))


def test_kolmogorov_vs_dense_grid(gaussian_spec):
    for seed in range(5):
        d = spectral.decompose(sample_raw(gaussian_spec(100), seed), vectors=False)
        exact = spectral.kolmogorov_distance(d)
        scan = grid_scan(d)
        assert scan <= exact + 1e-12
        # a grid point within one spacing h of the worst jump misses at most h * max g_sc
        h = (GRID_HI - GRID_LO) / (10**5 - 1)
        assert exact - scan <= h / math.pi + 1e-12


@given(eigs)
def test_kolmogorov_in_unit_interval_and_dominates_scan(vals):
    d = planted(vals)
    k = spectral.kolmogorov_distance(d)
    assert 0 <= k <= 1
    assert grid_scan(d, 2001) <= k + 1e-12


def test_kolmogorov_ties():
    d = planted([0.0, 0.0])
    assert spectral.kolmogorov_distance(d) == pytest.approx(0.5)


def test_lindeberg_rademacher_zero():
    s = sample_raw(EnsembleSpec(30, EntryDistribution.rademacher()), 1)
    assert spectral.lindeberg_ratio(s, 1.0) == 0.0


def test_lindeberg_small_tau_keeps_everything(gaussian_spec):
    s = sample_raw(gaussian_spec(30), 1)
    assert spectral.lindeberg_ratio(s, 1e-300) == pytest.approx(np.sum(s.x**2) / 900, rel=1e-14)
    with pytest.raises(ValueError):
        spectral.lindeberg_ratio(s, 0)


@pytest.mark.slow
def test_lindeberg_student_t_matches_quadrature():
    spec = EnsembleSpec(400, EntryDistribution.student_t(5))
    t = math.sqrt(400)
    ref = 2 * integrate.quad(lambda x: x * x * spec.dist.pdf(x), t, np.inf, epsabs=1e-14)[0]
    vals = [spectral.lindeberg_ratio(sample_raw(spec, s), 1.0) for s in range(100)]
    mean, se = np.mean(vals), np.std(vals, ddof=1) / math.sqrt(len(vals))
    assert abs(mean - ref) <= 3 * se


def test_rigidity_planted_zero():
    n = 64
    d = planted(sc.eigenvalue_quantiles(n))
    tab = spectral.rigidity_residuals(d)
    assert len(tab.j) == n - 1
    assert tab.max_normalized == 0.0
    assert len(spectral.rigidity_residuals(d, include_last=True).j) == n


def test_rigidity_normalization_algebra():
    n = 101
    gam = sc.eigenvalue_quantiles(n)
    shift = 1e-3
    tab = spectral.rigidity_residuals(planted(gam + shift))
    j = 51
    assert tab.normalized[j - 1] == pytest.approx(shift * n ** (2 / 3) * min(j, n - j + 1) ** (1 / 3))


def test_rigidity_csv(tmp_path):
    tab = spectral.rigidity_residuals(planted(sc.eigenvalue_quantiles(10) + 0.01))
    p = tmp_path / "r.csv"
    tab.write_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "j,lambda,gamma,residual,normalized" and len(lines) == 10


def test_delocalization():
    d = spectral.decompose(WignerSample.from_matrix(np.diag([1.0, 2.0, 3.0])))
    assert spectral.delocalization_stat(d) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        spectral.delocalization_stat(planted([1.0]))


@given(st.integers(2, 20), st.integers(0, 1000))
def test_delocalization_at_least_one(n, seed):
    a = sym(np.random.default_rng(seed).standard_normal((n, n)))
    d = spectral.decompose(WignerSample.from_matrix(a))
    assert spectral.delocalization_stat(d) >= 1 - 1e-12


def test_short_scale_planted():
    d = planted(np.linspace(-1.5, 1.5, 200))
    assert spectral.short_scale_count(d, 3.0, 2.0) == 0
    n, g = 1000, 0.3
    lam = np.arange(-n // 2, n // 2) / (n * g) + 0.5 / (n * g)
    d = planted(lam)
    # a window of 50 spacings holds 50 or 51 points
    assert abs(spectral.short_scale_count(d, 0.0, 50) - g) <= 1 / 50 + 1e-12
    with pytest.raises(ValueError):
        spectral.short_scale_count(d, 0.0, 0.0)


def test_trace_moment_matches_eigenvalues(gaussian_spec):
    s = sample_raw(gaussian_spec(40), 9)
    lam = spectral.decompose(s, vectors=False).eigenvalues
    for k in range(7):
        assert spectral.trace_moment(s, k) == pytest.approx(np.mean(lam**k), rel=1e-10, abs=1e-12)


def test_csv_exports(tmp_path):
    d = planted([0.5, -0.5])
    spectral.write_eigenvalues_csv(tmp_path / "e.csv", d)
    assert (tmp_path / "e.csv").read_text().splitlines() == ["j,lambda", "1,-0.5", "2,0.5"]
    spectral.write_stat_rows_csv(tmp_path / "s.csv", [(1, 4, "kolmogorov", 0.25)])
    assert (tmp_path / "s.csv").read_text().splitlines()[1] == "1,4,kolmogorov,0.25"
