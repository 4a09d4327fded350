import itertools
import math

import numpy as np
import pytest
from scipy import stats

from pdmon import divergence as dv
from pdmon.errors import EmptySample, UnsmoothedZeroBin


def assignment_ot(x0, x1, p=1):
    """W_p by trying every matching of atoms replicated to a common size L."""
    n0, n1 = len(x0), len(x1)
    L = n0 * n1 // math.gcd(n0, n1)
    a = np.repeat(np.asarray(x0, float), L // n0)
    b = np.repeat(np.asarray(x1, float), L // n1)
    best = min(np.mean(np.abs(a - b[list(perm)]) ** p) for perm in itertools.permutations(range(L)))
    return best ** (1 / p)


def lp_ot(x0, x1, p=1):
    """W_p from the transportation linear program over all couplings."""
    from scipy.optimize import linprog
    n0, n1 = len(x0), len(x1)
    cost = np.abs(np.subtract.outer(np.asarray(x0, float), np.asarray(x1, float))) ** p
    rows = np.kron(np.eye(n0), np.ones(n1))
    cols = np.kron(np.ones(n0), np.eye(n1))
    res = linprog(cost.ravel(), A_eq=np.vstack([rows, cols]),
                  b_eq=np.r_[np.full(n0, 1 / n0), np.full(n1, 1 / n1)], bounds=(0, None), method="highs")
    return res.fun ** (1 / p)


def small_pairs():
    """All (n0, n1) with n0, n1 <= 6 whose common multiple keeps enumeration small."""
    return [(a, b) for a in range(1, 7) for b in range(1, 7) if a * b // math.gcd(a, b) <= 8]


def test_energy_singletons():
    assert dv.energy_distance([0.0], [1.0]) == 2.0


def test_energy_identical_multisets():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(30, 3))
    assert dv.energy_distance(x, x[rng.permutation(30)]) == 0.0


def test_energy_symmetric():
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=(20, 2)), rng.normal(1, 2, size=(13, 2))
    assert dv.energy_distance(x, y) == pytest.approx(dv.energy_distance(y, x), rel=1e-14)


def test_energy_matches_scipy_univariate():
    # scipy reports the square root of the V-statistic
    rng = np.random.default_rng(2)
    x, y = rng.normal(size=15), rng.normal(0.5, 1, size=11)
    ref = stats.energy_distance(x, y) ** 2
    assert dv.energy_distance(x, y) == pytest.approx(ref, rel=1e-10)


def test_energy_batched_matches_direct():
    rng = np.random.default_rng(3)
    pooled = rng.normal(size=(12, 2))
    masks = np.zeros((3, 12), bool)
    masks[0, :5] = True
    masks[1, ::2] = True
    masks[2, [1, 4, 9]] = True
    got = dv.EnergyStatistic().prepare(pooled)(masks)
    want = [dv.energy_distance(pooled[m], pooled[~m]) for m in masks]
    np.testing.assert_allclose(got, want, rtol=1e-10)


def test_energy_empty():
    with pytest.raises(EmptySample):
        dv.energy_distance([], [1.0])


def test_wasserstein_examples():
    assert dv.wasserstein_1d([0, 0], [1, 1]) == 1.0
    assert dv.wasserstein_1d([3.0, 1.0], [1.0, 3.0]) == 0.0
    x = np.array([0.3, -1.2, 4.0, 2.2])
    assert dv.wasserstein_1d(x, x + 2.5) == pytest.approx(2.5)
    assert dv.wasserstein_1d(x, x - 2.5, p=2) == pytest.approx(2.5)


@pytest.mark.parametrize("n0,n1", small_pairs())
def test_wasserstein_matches_assignment_oracle(n0, n1):
    rng = np.random.default_rng(10 * n0 + n1)
    for _ in range(3):
        x0 = np.round(rng.normal(size=n0), 2)
        x1 = np.round(rng.normal(0.4, 1.5, size=n1), 2)
        for p in (1, 2):
            assert dv.wasserstein_1d(x0, x1, p) == pytest.approx(assignment_ot(x0, x1, p), abs=1e-9)


@pytest.mark.parametrize("seed", range(30))
def test_wasserstein_matches_transport_lp(seed):
    rng = np.random.default_rng(seed)
    n0, n1 = rng.integers(1, 7, size=2)
    x0 = np.round(rng.normal(size=n0), 2)
    x1 = np.round(rng.normal(0.4, 1.5, size=n1), 2)
    for p in (1, 2):
        assert dv.wasserstein_1d(x0, x1, p) == pytest.approx(lp_ot(x0, x1, p), abs=1e-9)


def test_wasserstein_matches_scipy():
    rng = np.random.default_rng(9)
    x0, x1 = rng.normal(size=37), rng.exponential(size=23)
    assert dv.wasserstein_1d(x0, x1) == pytest.approx(stats.wasserstein_distance(x0, x1), rel=1e-12)


def test_wasserstein_batched_matches_direct():
    rng = np.random.default_rng(4)
    pooled = np.round(rng.normal(size=11), 1)
    masks = np.zeros((4, 11), bool)
    masks[0, :4] = True
    masks[1, [0, 3, 7, 10]] = True
    masks[2, 5:9] = True
    masks[3, [1, 2, 6, 8]] = True
    for p in (1, 2):
        st = dv.WassersteinStatistic(p)
        got = st.prepare(pooled)(masks)
        want = [st(pooled[m], pooled[~m]) for m in masks]
        np.testing.assert_allclose(got, want, rtol=1e-12)


def test_wasserstein_rejects_multivariate():
    with pytest.raises(ValueError):
        dv.wasserstein_1d(np.zeros((3, 2)), np.zeros((3, 2)))


def test_kl_example_and_asymmetry():
    p0, p1 = [0.9, 0.1], [0.5, 0.5]
    kl = dv.kl_divergence(p0, p1)
    assert kl == pytest.approx(0.9 * math.log(1.8) + 0.1 * math.log(0.2), rel=1e-12)
    assert kl == pytest.approx(0.3681, abs=1e-4)
    assert dv.kl_divergence(p1, p0) != pytest.approx(kl)


def test_js_symmetric_and_bounded():
    assert dv.js_divergence([1, 0], [0, 1]) == pytest.approx(math.log(2))
    rng = np.random.default_rng(5)
    for _ in range(50):
        p, q = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(6) * 0.3)
        assert abs(dv.js_divergence(p, q) - dv.js_divergence(q, p)) <= 1e-12
        assert 0 <= dv.js_divergence(p, q) <= math.log(2)


def test_js_matches_scipy():
    from scipy.spatial.distance import jensenshannon
    p, q = np.array([0.2, 0.5, 0.3]), np.array([0.6, 0.1, 0.3])
    assert dv.js_divergence(p, q) == pytest.approx(jensenshannon(p, q) ** 2, rel=1e-12)


def test_identical_histograms_are_zero():
    h = dv.HistogramPair.from_samples([1.0, 2.0, 3.0, 2.0], [2.0, 3.0, 1.0, 2.0])
    assert dv.f_divergence(h, "kl") == 0.0
    assert dv.f_divergence(h, "js") == 0.0


def test_unsmoothed_zero_bin():
    h = dv.HistogramPair.from_samples([0.0, 0.0, 1.0], [1.0, 1.0, 1.0], epsilon=0.0, edges=[0, 0.5, 1])
    with pytest.raises(UnsmoothedZeroBin):
        dv.f_divergence(h, "kl")
    assert dv.f_divergence(h, "js") > 0


def test_histogram_invariants():
    rng = np.random.default_rng(6)
    x0, x1 = rng.normal(size=200), rng.normal(3, 1, size=150)
    h = dv.HistogramPair.from_samples(x0, x1, epsilon=1e-3)
    nb = len(h.edges) - 1
    assert dv.MIN_BINS <= nb <= dv.MAX_BINS
    for p in (h.p0, h.p1):
        assert p.sum() == pytest.approx(1.0, abs=1e-9)
        assert p.min() >= 1e-3 / nb / (1 + 1e-3 * nb) - 1e-15


def test_categorical_histogram():
    h = dv.HistogramPair.from_samples(np.array(["a", "b", "a"], dtype=object),
                                      np.array(["b", "c"], dtype=object))
    assert h.levels == ("a", "b", "c")


def test_histogram_batched_matches_direct():
    rng = np.random.default_rng(7)
    pooled = np.round(rng.normal(size=40), 1)
    masks = np.zeros((2, 40), bool)
    masks[0, :20] = True
    masks[1, ::2] = True
    for kind in ("kl", "js"):
        st = dv.HistogramDivergenceStatistic(kind)
        edges = dv.freedman_diaconis_edges(pooled)
        want = [dv.f_divergence(dv.HistogramPair.from_samples(pooled[m], pooled[~m], edges=edges), kind)
                for m in masks]
        np.testing.assert_allclose(st.prepare(pooled)(masks), want, rtol=1e-10)
