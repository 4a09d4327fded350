"""Classification metrics, performance-degradation tests and the
correctness-shift test.

Proportion-type metrics use a normal approximation to the binomial when
both ``m*p`` and ``m*(1-p)`` reach 5; F1, balanced accuracy and any case
failing that rule go through a multinomial bootstrap of the confusion
cells.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Literal

import numpy as np

from .core import Dataset, Hypothesis, Normal, TestResult, decide
from .encoding import Encoder
from .errors import MissingColumn, SmallSampleAssumptionViolated, UndefinedMetric
from .nonparametric import KernelSpec, friedman_rafsky_test, mmd_test

N_BOOTSTRAP = 2000
MIN_EXPECTED = 5


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        for k in ("tp", "tn", "fp", "fn"):
            if getattr(self, k) < 0:
                raise ValueError(f"{k} must be >= 0")

    @property
    def n(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def as_array(self) -> np.ndarray:
        return np.array([self.tp, self.tn, self.fp, self.fn])

    def to_dict(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


class MetricKind(str, Enum):
    ACCURACY = "accuracy"
    PRECISION = "precision"
    RECALL = "recall"
    F1 = "f1"
    SPECIFICITY = "specificity"
    NPV = "npv"
    BALANCED_ACCURACY = "balanced_accuracy"


# metric -> (numerator, denominator) over columns tp, tn, fp, fn
_FRACTIONS = {
    MetricKind.ACCURACY: ((1, 1, 0, 0), (1, 1, 1, 1)),
    MetricKind.PRECISION: ((1, 0, 0, 0), (1, 0, 1, 0)),
    MetricKind.RECALL: ((1, 0, 0, 0), (1, 0, 0, 1)),
    MetricKind.SPECIFICITY: ((0, 1, 0, 0), (0, 1, 1, 0)),
    MetricKind.NPV: ((0, 1, 0, 0), (0, 1, 0, 1)),
    MetricKind.F1: ((2, 0, 0, 0), (2, 0, 1, 1)),
}
BINOMIAL = frozenset({MetricKind.ACCURACY, MetricKind.PRECISION, MetricKind.RECALL,
                      MetricKind.SPECIFICITY, MetricKind.NPV})


def confusion(d: Dataset) -> ConfusionCounts:
    label, pred = d.schema.label, d.schema.prediction
    if label is None or pred is None:
        raise MissingColumn("dataset needs both a label and a prediction column")
    y, yh = d[label].astype(bool), d[pred].astype(bool)
    return ConfusionCounts(tp=int(np.sum(y & yh)), tn=int(np.sum(~y & ~yh)),
                           fp=int(np.sum(~y & yh)), fn=int(np.sum(y & ~yh)))


def _metric_array(cells: np.ndarray, kind: MetricKind) -> np.ndarray:
    """Vectorised metric over rows of (tp, tn, fp, fn); NaN where undefined."""
    cells = np.asarray(cells, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        if kind is MetricKind.BALANCED_ACCURACY:
            return (_metric_array(cells, MetricKind.RECALL)
                    + _metric_array(cells, MetricKind.SPECIFICITY)) / 2
        num, den = _FRACTIONS[kind]
        d = cells @ np.array(den, dtype=float)
        return np.where(d > 0, (cells @ np.array(num, dtype=float)) / np.where(d > 0, d, 1), np.nan)


def effective_count(cm: ConfusionCounts, kind: MetricKind) -> int:
    """The metric's own denominator (e.g. tp + fn for recall)."""
    kind = MetricKind(kind)
    if kind not in BINOMIAL:
        return cm.n
    return int(cm.as_array() @ np.array(_FRACTIONS[kind][1]))


def metric(cm: ConfusionCounts, kind: MetricKind | str) -> float:
    kind = MetricKind(kind)
    v = float(_metric_array(cm.as_array()[None, :], kind)[0])
    if math.isnan(v):
        raise UndefinedMetric(f"{kind.value} has a zero denominator for {cm}")
    return v


def _binomial_ok(p: float, m: int) -> bool:
    return m * p >= MIN_EXPECTED and m * (1 - p) >= MIN_EXPECTED


def bootstrap_metric(cm: ConfusionCounts, kind: MetricKind, n_boot: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Metric on ``n_boot`` multinomial resamples of the confusion cells."""
    cells = cm.as_array()
    draws = rng.multinomial(cm.n, cells / cm.n, size=n_boot)
    return _metric_array(draws, kind)


def _warn_fallback(reason: str):
    warnings.warn(SmallSampleAssumptionViolated(reason), stacklevel=3)


def deviation_test(d0: Dataset, d1: Dataset, kind: MetricKind | str = MetricKind.ACCURACY,
                   hyp: Hypothesis = Hypothesis(tau=0.0), *, path: Literal["auto", "binomial", "bootstrap"] = "auto",
                   n_boot: int = N_BOOTSTRAP, seed: int = 0) -> TestResult:
    """One-sided test of H0: M_t0 - M_t1 <= tau against a larger drop.

    ``tau`` is an absolute difference in metric units.
    """
    kind = MetricKind(kind)
    tau = 0.0 if hyp.tau is None else float(hyp.tau)
    cm0, cm1 = confusion(d0), confusion(d1)
    m0_hat, m1_hat = metric(cm0, kind), metric(cm1, kind)
    diff = m0_hat - m1_hat
    c0, c1 = effective_count(cm0, kind), effective_count(cm1, kind)
    details = {"metric": kind.value, "M0": m0_hat, "M1": m1_hat, "tau": tau, "m0": c0, "m1": c1}

    use_boot = path == "bootstrap" or kind not in BINOMIAL
    notes = []
    if kind not in BINOMIAL and path == "binomial":
        raise ValueError(f"{kind.value} has no binomial sampling model; use the bootstrap path")
    if not use_boot and not (_binomial_ok(m0_hat, c0) and _binomial_ok(m1_hat, c1)):
        reason = f"m*p >= {MIN_EXPECTED} and m*(1-p) >= {MIN_EXPECTED} fails; bootstrap used"
        _warn_fallback(reason)
        notes.append(reason)
        use_boot = True

    if not use_boot:
        se = math.sqrt(m0_hat * (1 - m0_hat) / c0 + m1_hat * (1 - m1_hat) / c1)
        z = (diff - tau) / se
        return decide(z, Normal(), hyp, method=f"deviation_z[{kind.value}]", n0=d0.n, n1=d1.n,
                      sidedness="greater", details=details,
                      notes="unpooled two-proportion z on the metric denominators")

    rng = np.random.default_rng(seed)
    b0 = bootstrap_metric(cm0, kind, n_boot, rng)
    b1 = bootstrap_metric(cm1, kind, n_boot, rng)
    delta = b0 - b1
    ok = ~np.isnan(delta)
    delta = delta[ok]
    if delta.size == 0:
        raise UndefinedMetric("metric undefined on every bootstrap resample")
    p = float((1 + np.sum(delta <= tau)) / (1 + delta.size))
    details.update({"n_boot": n_boot, "n_boot_defined": int(delta.size), "seed": seed,
                    "percentile_lower": float(np.quantile(delta, hyp.alpha))})
    notes.append(f"multinomial bootstrap of confusion cells, B={n_boot}")
    return TestResult(f"deviation_bootstrap[{kind.value}]", diff, bool(p < hyp.alpha), hyp.alpha,
                      "greater", p_value=p, n0=d0.n, n1=d1.n, notes="; ".join(notes),
                      details=details)


def spec_threshold_test(d1: Dataset, kind: MetricKind | str = MetricKind.ACCURACY,
                        hyp: Hypothesis = Hypothesis(tau=0.9), *,
                        path: Literal["auto", "binomial", "bootstrap"] = "auto",
                        n_boot: int = N_BOOTSTRAP, seed: int = 0) -> TestResult:
    """One-sided test of H0: M_t1 >= tau against M_t1 < tau."""
    kind = MetricKind(kind)
    if hyp.tau is None or not 0 < hyp.tau < 1:
        raise ValueError("spec_threshold_test needs tau in (0, 1)")
    tau = float(hyp.tau)
    cm = confusion(d1)
    m_hat = metric(cm, kind)
    m = effective_count(cm, kind)
    details = {"metric": kind.value, "M1": m_hat, "tau": tau, "m1": m}
    use_boot = path == "bootstrap" or kind not in BINOMIAL
    notes = []
    if kind not in BINOMIAL and path == "binomial":
        raise ValueError(f"{kind.value} has no binomial sampling model; use the bootstrap path")
    if not use_boot and not _binomial_ok(tau, m):
        reason = f"m*tau >= {MIN_EXPECTED} and m*(1-tau) >= {MIN_EXPECTED} fails; bootstrap used"
        _warn_fallback(reason)
        notes.append(reason)
        use_boot = True

    if not use_boot:
        z = (m_hat - tau) / math.sqrt(tau * (1 - tau) / m)
        return decide(z, Normal(), hyp, method=f"spec_threshold_z[{kind.value}]", n0=None,
                      n1=d1.n, sidedness="less", details=details,
                      notes="one-sample proportion z under the threshold")

    rng = np.random.default_rng(seed)
    b = bootstrap_metric(cm, kind, n_boot, rng)
    b = b[~np.isnan(b)]
    if b.size == 0:
        raise UndefinedMetric("metric undefined on every bootstrap resample")
    p = float((1 + np.sum(b >= tau)) / (1 + b.size))
    details.update({"n_boot": n_boot, "n_boot_defined": int(b.size), "seed": seed,
                    "percentile_upper": float(np.quantile(b, 1 - hyp.alpha))})
    notes.append(f"multinomial bootstrap of confusion cells, B={n_boot}")
    return TestResult(f"spec_threshold_bootstrap[{kind.value}]", m_hat - tau, bool(p < hyp.alpha),
                      hyp.alpha, "less", p_value=p, n1=d1.n, notes="; ".join(notes),
                      details=details)


# ---------------------------------------------------------------------------
# correctness indicator
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorrectnessRow:
    features: dict
    z: int


def correctness_indicator(d: Dataset) -> np.ndarray:
    label, pred = d.schema.label, d.schema.prediction
    if label is None or pred is None:
        raise MissingColumn("dataset needs both a label and a prediction column")
    return (d[label] == d[pred]).astype(np.int8)


def correctness_dataset(d: Dataset) -> list[CorrectnessRow]:
    """One row per input: its feature values plus z = 1 iff the prediction was right."""
    z = correctness_indicator(d)
    names = [c.name for c in d.schema.features]
    rows = d.drop(d.schema.label, d.schema.prediction).to_rows() if names else [{}] * d.n
    return [CorrectnessRow({k: r[k] for k in names}, int(zi)) for r, zi in zip(rows, z)]


def correctness_matrix(d0: Dataset, d1: Dataset, *, z_scale: float = 1.0, include_z: bool = True,
                       columns=None) -> tuple[np.ndarray, np.ndarray]:
    """Encoded (s, c, z) rows for both windows; z is appended as ``z_scale * z``."""
    enc = Encoder.fit(d0, d1, columns)
    x0, x1 = enc.transform(d0), enc.transform(d1)
    if include_z:
        x0 = np.hstack([x0, z_scale * correctness_indicator(d0)[:, None]])
        x1 = np.hstack([x1, z_scale * correctness_indicator(d1)[:, None]])
    return x0, x1


def correctness_shift_test(d0: Dataset, d1: Dataset,
                           method: Literal["mmd", "friedman_rafsky"] = "mmd",
                           hyp: Hypothesis = Hypothesis(), *, z_scale: float = 1.0,
                           include_z: bool = True, n_permutations: int = 1000, seed: int = 0,
                           kernel: KernelSpec = KernelSpec()) -> TestResult:
    """Joint two-sample test on (features, correctness) rows.

    MMD is calibrated by permutation here. ``include_z=False`` drops the
    correctness coordinate, which turns this into a plain covariate test.
    """
    x0, x1 = correctness_matrix(d0, d1, z_scale=z_scale, include_z=include_z)
    if method == "mmd":
        res = mmd_test(x0, x1, kernel, hyp, n_permutations=n_permutations, seed=seed,
                       calibration="permutation")
    elif method == "friedman_rafsky":
        res = friedman_rafsky_test(x0, x1, hyp, n_permutations=n_permutations, seed=seed)
    else:
        raise ValueError(f"unknown correctness-shift method {method!r}")
    details = dict(res.details, z_scale=z_scale, include_z=include_z,
                   accuracy0=float(correctness_indicator(d0).mean()),
                   accuracy1=float(correctness_indicator(d1).mean()))
    return TestResult(f"correctness_shift[{res.method}]", res.statistic, res.reject_h0, res.alpha,
                      res.sidedness, p_value=res.p_value, critical_value=res.critical_value,
                      df=res.df, n0=res.n0, n1=res.n1, notes=res.notes, details=details)
