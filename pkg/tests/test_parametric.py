import math

import numpy as np
import pytest

from pdmon import parametric as pt
from pdmon.core import Hypothesis
from pdmon.errors import DegenerateVariance, EmptySample, TooFewSamples


def test_welch_matches_hand_computation():
    x0 = [5.1, 4.9, 5.6, 5.8, 6.0, 5.3]
    x1 = [4.0, 4.4, 3.9, 4.8, 4.1]
    m0, m1 = np.mean(x0), np.mean(x1)
    v0, v1 = np.var(x0, ddof=1), np.var(x1, ddof=1)
    se = math.sqrt(v0 / 6 + v1 / 5)
    df = (v0 / 6 + v1 / 5) ** 2 / ((v0 / 6) ** 2 / 5 + (v1 / 5) ** 2 / 4)
    r = pt.welch_test(x0, x1)
    assert r.statistic == pytest.approx((m0 - m1) / se, rel=1e-12)
    assert r.df == pytest.approx(df, rel=1e-12)


def test_pooled_t_statistic():
    x0, x1 = [1.0, 2.0, 3.0, 4.0], [2.0, 3.0, 4.0, 5.0, 6.0]
    sp2 = (3 * np.var(x0, ddof=1) + 4 * np.var(x1, ddof=1)) / 7
    t = (2.5 - 4.0) / math.sqrt(sp2 * (1 / 4 + 1 / 5))
    r = pt.t_test(x0, x1)
    assert r.statistic == pytest.approx(t)
    assert r.df == 7


def test_z_test_known_sigma():
    r = pt.z_test([1.0, 1.0], [0.0, 0.0], sigma0=1.0, sigma1=1.0, hyp=Hypothesis(sidedness="greater"))
    assert r.statistic == pytest.approx(1.0)
    assert r.p_value == pytest.approx(0.15865525393145707, abs=1e-12)


def test_z_requires_sigmas():
    with pytest.raises(ValueError):
        pt.MeanTestSpec("z")
    with pytest.raises(ValueError):
        pt.MeanTestSpec("t_welch", sigma0=1.0)


def test_equal_samples_do_not_reject():
    x = np.linspace(0, 1, 30)
    for fn in (pt.welch_test, pt.t_test, pt.f_test, pt.bartlett_test):
        r = fn(x, x)
        assert not r.reject_h0


def test_constant_equal_samples_give_zero_statistic():
    r = pt.welch_test([2.0, 2.0, 2.0], [2.0, 2.0])
    assert r.statistic == 0.0 and r.p_value == 1.0
    assert "zero variance" in r.notes


def test_constant_unequal_samples_give_infinite_statistic():
    r = pt.welch_test([2.0, 2.0, 2.0], [1.0, 1.0])
    assert math.isinf(r.statistic) and r.reject_h0


def test_too_few_and_empty():
    with pytest.raises(TooFewSamples):
        pt.welch_test([1.0], [1.0, 2.0])
    with pytest.raises(EmptySample):
        pt.welch_test([], [1.0, 2.0])


def test_f_ratio_and_sidedness():
    x0 = [1.0, 3.0, 5.0, 7.0, 9.0]
    x1 = [4.0, 5.0, 6.0, 5.0, 4.0]
    r = pt.f_test(x0, x1, Hypothesis(sidedness="greater"))
    assert r.statistic == pytest.approx(np.var(x0, ddof=1) / np.var(x1, ddof=1))
    assert r.df == 4 and r.details["df2"] == 4
    assert r.reject_h0


def test_bartlett_k2_formula():
    x0 = [1.0, 3.0, 5.0, 7.0, 9.0, 2.0]
    x1 = [4.0, 5.0, 6.0, 5.0, 4.0]
    n0, n1 = 6, 5
    v0, v1 = np.var(x0, ddof=1), np.var(x1, ddof=1)
    sp2 = ((n0 - 1) * v0 + (n1 - 1) * v1) / (n0 + n1 - 2)
    num = (n0 + n1 - 2) * math.log(sp2) - (n0 - 1) * math.log(v0) - (n1 - 1) * math.log(v1)
    den = 1 + (1 / (n0 - 1) + 1 / (n1 - 1) - 1 / (n0 + n1 - 2)) / 3
    r = pt.bartlett_test(x0, x1)
    assert r.statistic == pytest.approx(num / den, rel=1e-12)
    assert r.sidedness == "greater" and r.df == 1


def test_zero_variance_is_degenerate():
    with pytest.raises(DegenerateVariance):
        pt.f_test([1.0, 1.0, 1.0], [1.0, 2.0, 3.0])


def test_welch_power_matches_noncentral_t():
    """Welch power at a 0.5 sigma shift, n=100/100, compared with the
    noncentral-t value (about 0.94)."""
    from scipy import stats

    nc = 0.5 / math.sqrt(2 / 100)
    crit = stats.t.isf(0.025, 198)
    theory = stats.nct.sf(crit, 198, nc) + stats.nct.cdf(-crit, 198, nc)
    rng = np.random.default_rng(7)
    hits = sum(pt.welch_test(rng.normal(0.5, 1, 100), rng.normal(0, 1, 100)).reject_h0
               for _ in range(400))
    se = math.sqrt(theory * (1 - theory) / 400)
    assert abs(hits / 400 - theory) < 4 * se
