"""Mean- and variance-shift tests under normality assumptions.

All statistics are oriented as "window t0 minus/over window t1", so a
``greater`` alternative means the baseline quantity is the larger one.
Sample variances use the n-1 denominator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .core import ChiSquare, FDist, Hypothesis, Normal, StudentT, TestResult, decide
from .errors import DegenerateVariance, EmptySample, NonFiniteValue, TooFewSamples


def as_sample(x, min_n: int = 1, name: str = "sample") -> np.ndarray:
    """Coerce to a 1-D finite float array with at least ``min_n`` entries."""
    a = np.asarray(x, dtype=float).ravel()
    if a.size == 0:
        raise EmptySample(f"{name} is empty")
    if a.size < min_n:
        raise TooFewSamples(f"{name} needs at least {min_n} observations, got {a.size}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteValue(f"{name} contains non-finite values")
    return a


@dataclass(frozen=True)
class MeanTestSpec:
    variant: Literal["z", "t_pooled", "t_welch"] = "t_welch"
    sigma0: float | None = None
    sigma1: float | None = None

    def __post_init__(self):
        if self.variant not in ("z", "t_pooled", "t_welch"):
            raise ValueError(f"unknown mean test variant {self.variant!r}")
        if self.variant == "z":
            if self.sigma0 is None or self.sigma1 is None or self.sigma0 <= 0 or self.sigma1 <= 0:
                raise ValueError("the z variant needs known sigma0, sigma1 > 0")
        elif self.sigma0 is not None or self.sigma1 is not None:
            raise ValueError(f"{self.variant} estimates variances; sigma0/sigma1 must be unset")


@dataclass(frozen=True)
class VarianceTestSpec:
    variant: Literal["f", "bartlett"] = "f"

    def __post_init__(self):
        if self.variant not in ("f", "bartlett"):
            raise ValueError(f"unknown variance test variant {self.variant!r}")


def welch_df(v0: float, n0: int, v1: float, n1: int) -> float:
    """Welch-Satterthwaite degrees of freedom from sample variances."""
    a, b = v0 / n0, v1 / n1
    return (a + b) ** 2 / (a * a / (n0 - 1) + b * b / (n1 - 1))


def mean_shift_test(x0, x1, spec: MeanTestSpec = MeanTestSpec(),
                    hyp: Hypothesis = Hypothesis()) -> TestResult:
    """Two-sample z, pooled t or Welch t test for a difference in means."""
    min_n = 1 if spec.variant == "z" else 2
    x0 = as_sample(x0, min_n, "x0")
    x1 = as_sample(x1, min_n, "x1")
    n0, n1 = x0.size, x1.size
    diff = float(x0.mean() - x1.mean())
    notes = []

    if spec.variant == "z":
        se = math.sqrt(spec.sigma0 ** 2 / n0 + spec.sigma1 ** 2 / n1)
        return decide(diff / se, Normal(), hyp, method="z_test", n0=n0, n1=n1)

    v0, v1 = float(x0.var(ddof=1)), float(x1.var(ddof=1))
    if spec.variant == "t_pooled":
        df = n0 + n1 - 2
        sp = math.sqrt(((n0 - 1) * v0 + (n1 - 1) * v1) / df)
        se = sp * math.sqrt(1 / n0 + 1 / n1)
        method = "t_pooled"
    else:
        se = math.sqrt(v0 / n0 + v1 / n1)
        if se > 0:
            df = welch_df(v0, n0, v1, n1)
        else:
            df = n0 + n1 - 2
            notes.append("both variances zero; Welch df replaced by n0+n1-2")
        method = "t_welch"

    if se == 0:
        if diff == 0:
            stat = 0.0
            notes.append("zero variance and equal means; statistic set to 0")
        else:
            stat = math.copysign(math.inf, diff)
            notes.append("zero variance with unequal means; statistic is infinite")
    else:
        stat = diff / se
    return decide(stat, StudentT(df), hyp, method=method, n0=n0, n1=n1, df=df,
                  notes="; ".join(notes))


def z_test(x0, x1, sigma0: float, sigma1: float, hyp: Hypothesis = Hypothesis()) -> TestResult:
    return mean_shift_test(x0, x1, MeanTestSpec("z", sigma0, sigma1), hyp)


def t_test(x0, x1, hyp: Hypothesis = Hypothesis(), equal_var: bool = True) -> TestResult:
    return mean_shift_test(x0, x1, MeanTestSpec("t_pooled" if equal_var else "t_welch"), hyp)


def welch_test(x0, x1, hyp: Hypothesis = Hypothesis()) -> TestResult:
    return mean_shift_test(x0, x1, MeanTestSpec("t_welch"), hyp)


def bartlett_statistic(v0: float, n0: int, v1: float, n1: int) -> float:
    dfp = n0 + n1 - 2
    sp2 = ((n0 - 1) * v0 + (n1 - 1) * v1) / dfp
    num = dfp * math.log(sp2) - (n0 - 1) * math.log(v0) - (n1 - 1) * math.log(v1)
    den = 1 + (1 / (n0 - 1) + 1 / (n1 - 1) - 1 / dfp) / 3
    return num / den


def variance_shift_test(x0, x1, spec: VarianceTestSpec = VarianceTestSpec(),
                        hyp: Hypothesis = Hypothesis()) -> TestResult:
    """F-test on the variance ratio, or Bartlett's two-group test.

    The F-test honours ``hyp.sidedness`` (two-sided splits alpha over both
    tails). Bartlett's statistic is compared with the upper chi-square(1)
    tail regardless of sidedness.
    """
    x0 = as_sample(x0, 2, "x0")
    x1 = as_sample(x1, 2, "x1")
    n0, n1 = x0.size, x1.size
    v0, v1 = float(x0.var(ddof=1)), float(x1.var(ddof=1))
    if v0 == 0 or v1 == 0:
        raise DegenerateVariance("a sample variance is zero")
    if spec.variant == "f":
        return decide(v0 / v1, FDist(n0 - 1, n1 - 1), hyp, method="f_test", n0=n0, n1=n1,
                      details={"var0": v0, "var1": v1})
    stat = bartlett_statistic(v0, n0, v1, n1)
    return decide(max(stat, 0.0), ChiSquare(1), hyp, method="bartlett", n0=n0, n1=n1,
                  sidedness="greater", details={"var0": v0, "var1": v1})


def f_test(x0, x1, hyp: Hypothesis = Hypothesis()) -> TestResult:
    return variance_shift_test(x0, x1, VarianceTestSpec("f"), hyp)


def bartlett_test(x0, x1, hyp: Hypothesis = Hypothesis()) -> TestResult:
    return variance_shift_test(x0, x1, VarianceTestSpec("bartlett"), hyp)
