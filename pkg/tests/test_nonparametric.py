import itertools
import math

import numpy as np
import pytest
from scipy import stats
from scipy.sparse.csgraph import minimum_spanning_tree as sp_mst
from scipy.spatial.distance import cdist

from pdmon import nonparametric as npt
from pdmon.core import Hypothesis
from pdmon.errors import BandwidthUndefined, DegeneratePoints, EmptySample, TooFewSamples
from pdmon.permutation import permutation_masks


# ---------------------------------------------------------------------------
# Mann-Whitney
# ---------------------------------------------------------------------------

def pair_count_u(x0, x1):
    """#{x1_j > x0_i} + half the ties: the count the rank formula reproduces."""
    x0, x1 = np.asarray(x0)[:, None], np.asarray(x1)[None, :]
    return float(np.sum(x1 > x0) + 0.5 * np.sum(x1 == x0))


def enumerate_u(n0, n1):
    """Exact null counts of U by listing every split of ranks 1..n."""
    n = n0 + n1
    counts = np.zeros(n0 * n1 + 1, dtype=np.int64)
    for pos in itertools.combinations(range(1, n + 1), n0):
        u = n0 * n1 + n0 * (n0 + 1) // 2 - sum(pos)
        counts[u] += 1
    return counts


def test_mwu_critical_value_n20():
    assert npt.mwu_critical_value(20, 20, 0.05) == 127


def test_mwu_separated_example():
    r = npt.mann_whitney_u([1, 2, 3], [4, 5, 6])
    assert r.details["R0"] == 6
    assert r.statistic == 9
    assert r.statistic == pair_count_u([1, 2, 3], [4, 5, 6])


def test_mwu_identical_samples():
    x = [0.3, 1.2, 2.2, 5.0]
    r = npt.mann_whitney_u(x, x)
    assert r.statistic == 8 and not r.reject_h0


@pytest.mark.parametrize("n0,n1", [(1, 1), (2, 5), (4, 4), (6, 3), (7, 8)])
def test_mwu_null_counts_match_enumeration(n0, n1):
    np.testing.assert_array_equal(npt.mwu_null_counts(n0, n1), enumerate_u(n0, n1))


def test_mwu_exact_p_matches_enumeration():
    rng = np.random.default_rng(3)
    x0, x1 = rng.normal(size=5), rng.normal(0.8, 1, size=6)
    r = npt.mann_whitney_u(x0, x1, Hypothesis(sidedness="two_sided"))
    counts = enumerate_u(5, 6)
    u = int(r.statistic)
    lo = counts[:u + 1].sum() / counts.sum()
    hi = counts[u:].sum() / counts.sum()
    assert r.p_value == pytest.approx(min(1.0, 2 * min(lo, hi)), abs=1e-15)
    assert "exact" in r.notes


def test_mwu_normal_path_with_ties():
    x0 = [1, 1, 2, 2, 3, 3, 3, 4] * 4
    x1 = [2, 3, 3, 4, 4, 5, 5, 5] * 4
    r = npt.mann_whitney_u(x0, x1)
    assert "normal approximation" in r.notes and "tie" in r.notes
    assert r.statistic == pair_count_u(x0, x1)
    assert r.reject_h0


def test_mwu_normal_matches_scipy_asymptotic():
    rng = np.random.default_rng(4)
    x0, x1 = rng.normal(size=30), rng.normal(0.3, 1, size=25)
    r = npt.mann_whitney_u(x0, x1)
    ref = stats.mannwhitneyu(x1, x0, method="asymptotic", use_continuity=True)
    assert r.statistic == pytest.approx(ref.statistic)
    assert r.p_value == pytest.approx(ref.pvalue, rel=1e-10)


def test_mwu_empty():
    with pytest.raises(EmptySample):
        npt.mann_whitney_u([], [1.0])


# ---------------------------------------------------------------------------
# Levene
# ---------------------------------------------------------------------------

def test_levene_hand_example():
    # Z0 = |x0 - 5| = (5,5,5,5), Z1 = |x1 - 5| = (1,0,0,1)
    # between = 4*(5-2.75)^2 + 4*(0.5-2.75)^2 = 40.5, within = 1, W = 6 * 40.5 / 1
    r = npt.levene_test([0, 0, 10, 10], [4, 5, 5, 6])
    assert r.statistic == pytest.approx(243.0)
    assert r.df == 1 and r.details["df2"] == 6
    assert r.reject_h0


def test_levene_zero_between():
    r = npt.levene_test([1, 3, 5, 7], [11, 13, 15, 17])
    assert r.statistic == 0.0 and not r.reject_h0


def test_levene_centers_differ_on_skewed_data():
    x0 = [0.1, 0.2, 0.2, 0.3, 5.0, 9.0]
    x1 = [1.0, 1.1, 1.5, 2.0, 2.5, 3.0]
    mean = npt.levene_test(x0, x1, "mean")
    med = npt.levene_test(x0, x1, "median")
    ref_mean = stats.levene(x0, x1, center="mean").statistic
    ref_med = stats.levene(x0, x1, center="median").statistic
    assert mean.statistic == pytest.approx(ref_mean)
    assert med.statistic == pytest.approx(ref_med)
    assert mean.statistic != pytest.approx(med.statistic)


def test_levene_needs_two():
    with pytest.raises(TooFewSamples):
        npt.levene_test([1.0], [1.0, 2.0])


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov
# ---------------------------------------------------------------------------

def test_ks_disjoint():
    r = npt.ks_test([0.1, 0.2], [0.8, 0.9])
    assert r.statistic == 1.0


def test_ks_critical_constant():
    n = 50
    r = npt.ks_test(np.arange(n), np.arange(n) + 0.5)
    assert r.details["c_alpha"] == pytest.approx(1.36, abs=5e-3)
    assert r.critical_value == pytest.approx(r.details["c_alpha"] * math.sqrt(2 * n / n ** 2))


def test_ks_identity():
    x = [3.0, 1.0, 2.0]
    r = npt.ks_test(x, x)
    assert r.statistic == 0.0 and not r.reject_h0


def test_ks_matches_scipy_statistic():
    rng = np.random.default_rng(5)
    for _ in range(20):
        x0 = rng.normal(size=rng.integers(1, 40))
        x1 = np.round(rng.normal(0.3, 1.3, size=rng.integers(1, 40)), 1)
        assert npt.ks_test(x0, x1).statistic == pytest.approx(stats.ks_2samp(x0, x1).statistic)


def test_ks_one_sided_direction():
    x0, x1 = np.arange(10) + 5.0, np.arange(10.0)
    assert npt.ks_test(x0, x1, Hypothesis(sidedness="greater")).statistic == 0.5
    assert npt.ks_test(x0, x1, Hypothesis(sidedness="less")).statistic == 0.0


# ---------------------------------------------------------------------------
# Anderson-Darling
# ---------------------------------------------------------------------------

def ad_loop(x0, x1):
    """Midrank two-sample AD written out term by term."""
    samples = [np.asarray(x0, float), np.asarray(x1, float)]
    pooled = np.concatenate(samples)
    n = pooled.size
    total = 0.0
    for s in samples:
        inner = 0.0
        for z in np.unique(pooled):
            lj = np.sum(pooled == z)
            bj = np.sum(pooled < z) + lj / 2
            mij = np.sum(s < z) + np.sum(s == z) / 2
            den = bj * (n - bj) - n * lj / 4
            if den > 0:
                inner += lj * (n * mij - s.size * bj) ** 2 / den
        total += inner / s.size
    return (n - 1) / n ** 2 * total


def test_ad_statistic_matches_loop():
    rng = np.random.default_rng(6)
    for _ in range(10):
        x0 = np.round(rng.normal(size=rng.integers(2, 15)), 1)
        x1 = np.round(rng.normal(0.5, 1, size=rng.integers(2, 15)), 1)
        assert npt.anderson_darling_statistic(x0, x1) == pytest.approx(ad_loop(x0, x1), rel=1e-12)


def test_ad_batched_equals_direct():
    rng = np.random.default_rng(8)
    x0, x1 = np.round(rng.normal(size=12), 1), np.round(rng.normal(size=9), 1)
    pooled = np.concatenate([x0, x1])
    ev = npt.AndersonDarlingStatistic().prepare(pooled)
    masks = permutation_masks(1, 0, 20, 12, 21)
    direct = [npt.anderson_darling_statistic(pooled[m], pooled[~m]) for m in masks]
    np.testing.assert_allclose(ev(masks), direct, rtol=1e-12)


def test_ad_identical_samples():
    x = np.linspace(0, 1, 15)
    r = npt.anderson_darling_test(x, x, n_permutations=200)
    assert r.p_value > 0.9


def test_ad_disjoint_supports():
    r = npt.anderson_darling_test(np.arange(20.0), np.arange(20.0) + 100, n_permutations=500)
    assert r.p_value <= 0.01


def test_ad_miniature_full_enumeration():
    x0, x1 = [0.1, 0.5, 0.9, 1.3], [1.0, 1.6, 2.2, 2.9]
    pooled = np.array(x0 + x1)
    t_obs = npt.anderson_darling_statistic(x0, x1)
    null = []
    for idx in itertools.combinations(range(8), 4):
        m = np.zeros(8, bool)
        m[list(idx)] = True
        null.append(npt.anderson_darling_statistic(pooled[m], pooled[~m]))
    exact = np.mean(np.array(null) >= t_obs - 1e-12)
    r = npt.anderson_darling_test(x0, x1, n_permutations=20000, seed=2)
    assert r.p_value == pytest.approx(exact, abs=0.01)


# ---------------------------------------------------------------------------
# Friedman-Rafsky
# ---------------------------------------------------------------------------

def kruskal_mst(dist):
    """Kruskal with edges ordered by (weight, i, j) and union-find."""
    n = dist.shape[0]
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    edges = sorted((dist[i, j], i, j) for i in range(n) for j in range(i + 1, n))
    out = []
    for w, i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            out.append((i, j))
    return sorted(out)


@pytest.mark.parametrize("seed", range(5))
def test_mst_matches_kruskal_with_ties(seed):
    rng = np.random.default_rng(seed)
    pts = rng.integers(0, 4, size=(25, 2)).astype(float)  # many tied distances
    dist = cdist(pts, pts)
    ours = sorted(map(tuple, npt.minimum_spanning_tree(dist).tolist()))
    assert ours == kruskal_mst(dist)


def test_mst_weight_matches_scipy():
    rng = np.random.default_rng(11)
    pts = rng.normal(size=(60, 3))
    dist = cdist(pts, pts)
    e = npt.minimum_spanning_tree(dist)
    assert dist[e[:, 0], e[:, 1]].sum() == pytest.approx(sp_mst(dist).sum(), rel=1e-12)


def test_fr_printed_mean_n5():
    mean, _ = npt.fr_moments_printed(5, 5, 0)
    assert mean == pytest.approx(50 / 9)


def test_fr_separated_clusters():
    rng = np.random.default_rng(1)
    a = rng.normal(0, 0.1, size=(5, 2))
    b = rng.normal(50, 0.1, size=(5, 2))
    r = npt.friedman_rafsky_test(a, b, n_permutations=200)
    assert r.details["cross_edges"] == 1
    assert r.reject_h0 and r.sidedness == "less"


def test_fr_exact_moments_match_permutations():
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=(50, 2)), rng.normal(size=(50, 2))
    r = npt.friedman_rafsky_test(x, y, n_permutations=10)
    pooled = np.vstack([x, y])
    e = npt.minimum_spanning_tree(cdist(pooled, pooled))
    m = permutation_masks(99, 0, 10000, 50, 100)
    cross = np.sum(m[:, e[:, 0]] != m[:, e[:, 1]], axis=1)
    assert r.details["mean_R"] == pytest.approx(cross.mean(), rel=0.02)
    assert r.details["var_R"] == pytest.approx(cross.var(ddof=1), rel=0.05)


def test_fr_exact_moments_by_enumeration():
    """All 126 splits of a 9-point path: exact mean and variance of R."""
    edges = np.array([[i, i + 1] for i in range(8)])
    vals = []
    for idx in itertools.combinations(range(9), 4):
        lab = np.zeros(9, bool)
        lab[list(idx)] = True
        vals.append(np.sum(lab[edges[:, 0]] != lab[edges[:, 1]]))
    deg = np.bincount(edges.ravel())
    mean, var = npt.fr_moments(4, 5, int(np.sum(deg * (deg - 1) // 2)))
    assert mean == pytest.approx(np.mean(vals), rel=1e-12)
    assert var == pytest.approx(np.var(vals), rel=1e-12)


def test_fr_errors():
    with pytest.raises(DegeneratePoints):
        npt.friedman_rafsky_test(np.zeros((3, 2)), np.zeros((3, 2)))
    with pytest.raises(TooFewSamples):
        npt.friedman_rafsky_test(np.zeros((1, 2)), np.ones((2, 2)))


# ---------------------------------------------------------------------------
# MMD
# ---------------------------------------------------------------------------

def test_mmd_threshold_value():
    assert npt.mmd_threshold(100, 0.05) == pytest.approx(math.sqrt(0.02) * (1 + math.sqrt(2 * math.log(20))))
    assert npt.mmd_threshold(100, 0.05) == pytest.approx(0.4876, abs=1e-4)


def test_mmd_identical_multisets():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(40, 3))
    r = npt.mmd_test(x, x[::-1], n_permutations=100)
    assert r.statistic == 0.0 and not r.reject_h0
    assert r.p_value is None and r.critical_value > 0


def test_mmd_symmetric():
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=(30, 2)), rng.normal(0.5, 1, size=(25, 2))
    assert npt.mmd_biased(x, y, 1.3) == npt.mmd_biased(y, x, 1.3)


def test_mmd_matches_direct_three_terms():
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=(7, 2)), rng.normal(size=(5, 2))
    k = lambda a, b: math.exp(-np.sum((a - b) ** 2) / (2 * 0.8 ** 2))
    v = (sum(k(a, b) for a in x for b in x) / 49 - 2 * sum(k(a, b) for a in x for b in y) / 35
         + sum(k(a, b) for a in y for b in y) / 25)
    assert npt.mmd_biased(x, y, 0.8) == pytest.approx(math.sqrt(v), rel=1e-10)


def test_mmd_permutation_mode_uses_p_value():
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=(60, 2)), rng.normal(1.0, 1, size=(60, 2))
    r = npt.mmd_test(x, y, calibration="permutation", n_permutations=300)
    assert r.p_value == r.details["permutation_p_value"]
    assert r.reject_h0


def test_mmd_bandwidth_undefined():
    with pytest.raises(BandwidthUndefined):
        npt.mmd_test(np.ones((4, 2)), np.ones((3, 2)))


def test_median_heuristic():
    pts = np.array([[0.0], [1.0], [3.0]])
    assert npt.median_heuristic(pts) == 2.0


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        npt.KernelSpec(family="laplace")
    with pytest.raises(ValueError):
        npt.KernelSpec(bandwidth=-1.0)
