import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.stats import kstest

from gsegraph.graph import default_gse_graph
from gsegraph.spectrum import first_eigenwavenumbers, kramers_fold
from gsegraph.statistics import (
    ENSEMBLES,
    FewLevelsWarning,
    analyze,
    cluster_function,
    ks_to_surmise,
    number_variance,
    reference_number_variance,
    reference_rigidity,
    rigidity,
    spacing_distribution,
    surmise_cdf,
    surmise_pdf,
    unfold,
    unfold_record,
)

EULER = 0.5772156649015329


def poisson_sequence(n, seed=0):
    return np.cumsum(np.random.default_rng(seed).exponential(size=n))


def gue_sequence(N=1500, seed=0):
    """Bulk of one GUE spectrum unfolded with the semicircle staircase."""
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    lam = np.linalg.eigvalsh((A + A.conj().T) / (2 * np.sqrt(N)))
    x = N * (0.5 + (lam * np.sqrt(4 - lam**2) / 4 + np.arcsin(lam / 2)) / np.pi)
    return x[N // 4: 3 * N // 4]


# -- unfolding -----------------------------------------------------------------


def test_unfold_picket_fence():
    L = 3.7
    k = np.arange(1, 101) * math.pi / L
    u = unfold(k, L, discard=0)
    assert np.allclose(u.values, np.arange(1, 101))
    assert np.allclose(np.diff(u.values), 1)
    folded = unfold(np.arange(1, 101) * 2 * math.pi / L, L, folded=True, discard=0)
    assert np.allclose(folded.values, np.arange(1, 101))


def test_unfold_errors():
    with pytest.raises(ValueError):
        unfold([], 1.0)
    with pytest.raises(ValueError):
        unfold([2.0, 1.0], 1.0, discard=0)


def test_graph_unfolded_mean_spacing():
    rec = kramers_fold(first_eigenwavenumbers(default_gse_graph(), 1000))
    u = unfold_record(rec)
    assert len(u) == 450
    assert abs(u.mean_spacing - 1) < 0.01


# -- reference curves ------------------------------------------------------------


@pytest.mark.parametrize("ensemble", ENSEMBLES)
def test_surmise_normalised(ensemble):
    norm = integrate.quad(lambda s: surmise_pdf(ensemble, s), 0, np.inf)[0]
    mean = integrate.quad(lambda s: s * surmise_pdf(ensemble, s), 0, np.inf)[0]
    assert abs(norm - 1) < 1e-10 and abs(mean - 1) < 1e-10
    for s in (0.3, 1.0, 2.2):
        partial = integrate.quad(lambda t: surmise_pdf(ensemble, t), 0, s)[0]
        assert abs(surmise_cdf(ensemble, s) - partial) < 1e-10


def _two_level_spacings(ensemble, n, rng):
    """Spacing of two-level random matrices, normalised to unit mean."""
    if ensemble == "goe":
        a = rng.standard_normal((n, 2, 2))
        H = a + a.transpose(0, 2, 1)
    elif ensemble == "gue":
        a = rng.standard_normal((n, 2, 2)) + 1j * rng.standard_normal((n, 2, 2))
        H = a + a.conj().transpose(0, 2, 1)
    else:
        # 2x2 quaternion self-dual matrix in its 4x4 complex form
        a = rng.standard_normal((n, 2, 2)) + 1j * rng.standard_normal((n, 2, 2))
        A = a + a.conj().transpose(0, 2, 1)
        # same variance as the off-diagonal entries of A
        b = np.sqrt(2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        B = np.zeros((n, 2, 2), dtype=complex)
        B[:, 0, 1], B[:, 1, 0] = b, -b
        H = np.block([[A, B], [-B.conj(), A.conj()]])
    lam = np.linalg.eigvalsh(H)
    s = lam[:, -1] - lam[:, 0]
    return s / s.mean()


@pytest.mark.parametrize("ensemble", ["goe", "gue", "gse"])
def test_surmise_against_two_level_matrices(ensemble):
    s = _two_level_spacings(ensemble, 100_000, np.random.default_rng(7))
    assert kstest(s, lambda t: surmise_cdf(ensemble, t)).statistic < 0.01


def test_gse_quaternion_levels_are_degenerate():
    rng = np.random.default_rng(1)
    a = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    A = a + a.conj().T
    B = np.array([[0, 1.3 - 0.2j], [-(1.3 - 0.2j), 0]])
    lam = np.linalg.eigvalsh(np.block([[A, B], [-B.conj(), A.conj()]]))
    assert abs(lam[1] - lam[0]) < 1e-12 and abs(lam[3] - lam[2]) < 1e-12


@pytest.mark.parametrize("ensemble", ["goe", "gue", "gse"])
def test_cluster_function_sum_rule(ensemble):
    r = np.linspace(0, 400, 400_001)
    y = cluster_function(ensemble, r)
    assert y[0] == pytest.approx(1.0)
    assert abs(integrate.trapezoid(y, r) - 0.5) < 2e-3


def test_reference_curves_large_L():
    L = np.array([15.0, 25.0])
    c = np.log(2 * np.pi * L) + EULER
    sigma = {
        "goe": 2 / np.pi**2 * (c + 1 - np.pi**2 / 8),
        "gue": 1 / np.pi**2 * (c + 1),
        "gse": 1 / (2 * np.pi**2) * (c + np.log(2) + 1 + np.pi**2 / 8),
    }
    delta = {
        "gue": 1 / (2 * np.pi**2) * (c - 5 / 4),
        "gse": 1 / (4 * np.pi**2) * (c + np.log(2) - 5 / 4 + np.pi**2 / 8),
    }
    for e, v in sigma.items():
        assert np.allclose(reference_number_variance(e, L), v, rtol=0.01)
    for e, v in delta.items():
        assert np.allclose(reference_rigidity(e, L), v, rtol=0.01)
    assert np.allclose(reference_number_variance("poisson", L), L)
    assert np.allclose(reference_rigidity("poisson", L), L / 15)


def test_reference_small_L():
    # at most one level in a short window: n is Bernoulli(L)
    L = np.array([0.01, 0.02])
    for e in ("goe", "gue", "gse"):
        assert np.allclose(reference_number_variance(e, L), L - L**2, rtol=1e-3)


@pytest.mark.parametrize("ensemble", ["goe", "gue", "gse"])
def test_rigidity_against_cluster_kernel(ensemble):
    for L in (0.5, 2.0, 6.0):
        kernel = lambda r: (L - r) ** 3 * (2 * L * L - 9 * L * r - 3 * r * r) * cluster_function(ensemble, np.array([r]))[0]
        direct = L / 15 - integrate.quad(kernel, 0, L, limit=200)[0] / (15 * L**4)
        assert reference_rigidity(ensemble, [L])[0] == pytest.approx(direct, rel=1e-4)


def test_reference_ordering():
    L = np.linspace(0.5, 10, 20)
    poi, goe, gue, gse = (reference_number_variance(e, L) for e in ENSEMBLES)
    assert np.all(poi > goe) and np.all(goe > gue) and np.all(gue > gse)
    # the rigidity kernel changes sign, so its ordering only settles beyond L ~ 1
    L = np.linspace(2, 10, 20)
    poi, goe, gue, gse = (reference_rigidity(e, L) for e in ENSEMBLES)
    assert np.all(poi > goe) and np.all(goe > gue) and np.all(gue > gse)


# -- measured statistics -----------------------------------------------------------


def test_poisson_spacing_distribution():
    x = poisson_sequence(100_000)
    assert ks_to_surmise(x, "poisson") < 0.01


def test_picket_fence_spacing_in_one_bin():
    sp = spacing_distribution(np.arange(1000.0))
    occupied = np.flatnonzero(sp.density)
    assert len(occupied) == 1
    assert sp.edges[occupied[0]] <= 1 < sp.edges[occupied[0] + 1]


def test_spacing_normalisation_and_integral():
    sp = spacing_distribution(gue_sequence())
    assert abs(np.sum(sp.density * np.diff(sp.edges)) - 1) < 1e-3
    assert sp.integrated[0] == 0 and sp.integrated[-1] == pytest.approx(1, abs=1e-3)
    assert np.all(np.diff(sp.integrated) >= 0)


def test_few_levels_warning():
    with pytest.warns(FewLevelsWarning):
        sp = spacing_distribution(np.arange(100.0))
    assert sp.few_levels


def test_poisson_number_variance_and_rigidity():
    x = poisson_sequence(100_000, seed=1)
    L = np.array([1.0, 2.0, 5.0, 10.0])
    assert np.allclose(number_variance(x, L, n_windows=20_000), L, rtol=0.05)
    assert np.allclose(rigidity(x, L, n_windows=5_000), L / 15, rtol=0.05)


def test_picket_fence_long_range():
    x = np.arange(5000.0)
    L = np.linspace(0.3, 30, 40)
    assert np.all(number_variance(x, L) <= 0.25 + 1e-12)
    assert rigidity(x, [200.0])[0] == pytest.approx(1 / 12, rel=0.01)


def test_gue_sequence_matches_reference():
    x = gue_sequence(2000, seed=3)
    L = np.array([1.0, 3.0])
    assert np.allclose(rigidity(x, L), reference_rigidity("gue", L), rtol=0.1)


@pytest.mark.parametrize("sequence", [poisson_sequence(20_000, 4), gue_sequence(1500, 5)])
def test_rigidity_bounded_by_half_number_variance(sequence):
    L = np.array([1.0, 2.0, 4.0, 8.0])
    assert np.all(rigidity(sequence, L) <= number_variance(sequence, L, n_windows=5000) / 2 * 1.1)


def test_window_estimators_deterministic_and_checked():
    x = poisson_sequence(2000)
    assert np.array_equal(number_variance(x, [3.0], seed=5), number_variance(x, [3.0], seed=5))
    assert np.array_equal(rigidity(x, [3.0], seed=5), rigidity(x, [3.0], seed=5))
    with pytest.raises(ValueError):
        number_variance(x, [x[-1] - x[0] + 1])
    with pytest.raises(ValueError):
        rigidity(x, [])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(min_value=0.01, max_value=3.0), min_size=60, max_size=200),
       st.floats(min_value=0.5, max_value=8.0))
def test_measures_nonnegative(gaps, L):
    x = np.cumsum(gaps)
    if L >= x[-1] - x[0]:
        return
    assert number_variance(x, [L], n_windows=50)[0] >= 0
    assert rigidity(x, [L], n_windows=50)[0] >= -1e-12


def test_report_exports(tmp_path):
    x = gue_sequence(2000, seed=8)
    rep = analyze(x, np.linspace(0.5, 5, 6), n_windows=200, meta={"source": "test"})
    d = json.loads(rep.to_json())
    assert d["meta"]["source"] == "test"
    assert set(d["references"]["number_variance"]) == set(ENSEMBLES)
    assert min(d["number_variance"]) >= 0 and min(d["rigidity"]) >= 0
    paths = rep.write_csv(str(tmp_path / "stats"))
    rows = (tmp_path / "stats_long_range.csv").read_text().splitlines()
    assert len(rows) == 7 and rows[0].startswith("L,sigma2,delta3")
    assert len(paths) == 2
