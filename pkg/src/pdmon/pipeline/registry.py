"""Name-addressable registry of every two-sample test, used by the config
file and the ``test`` subcommand."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .. import divergence as dv
from .. import nonparametric as npt
from .. import parametric as pt
from .. import performance as perf
from ..core import Dataset, Hypothesis, Kind, TestResult
from ..encoding import Encoder
from ..errors import ConfigError, MissingColumn
from ..permutation import PermutationPlan, permutation_test

UNIVARIATE = "univariate"  # one numeric feature
JOINT = "joint"  # encoded feature matrix
LABELED = "labeled"  # needs labels and predictions in the windows


@dataclass(frozen=True)
class TestEntry:
    name: str
    shape: str
    run: Callable[..., TestResult]
    default_stage: str = "covariate_shift"
    categorical_ok: bool = False

    __test__ = False


def _num(d: Dataset, f: str) -> np.ndarray:
    return d[f]


def _perm(stat):
    def run(x0, x1, hyp, seed, params):
        plan = PermutationPlan(stat(params), int(params.get("n_permutations", 1000)), seed)
        return permutation_test(x0, x1, plan, hyp)
    return run


def _mean(variant):
    def run(x0, x1, hyp, seed, params):
        if variant == "z":
            return pt.z_test(x0, x1, params["sigma0"], params["sigma1"], hyp)
        return pt.mean_shift_test(x0, x1, pt.MeanTestSpec(variant), hyp)
    return run


REGISTRY: dict[str, TestEntry] = {}


def _register(*entries: TestEntry):
    for e in entries:
        REGISTRY[e.name] = e


_register(
    TestEntry("z", UNIVARIATE, _mean("z")),
    TestEntry("t_pooled", UNIVARIATE, _mean("t_pooled")),
    TestEntry("welch", UNIVARIATE, _mean("t_welch")),
    TestEntry("f", UNIVARIATE, lambda x0, x1, hyp, seed, p: pt.f_test(x0, x1, hyp)),
    TestEntry("bartlett", UNIVARIATE, lambda x0, x1, hyp, seed, p: pt.bartlett_test(x0, x1, hyp)),
    TestEntry("mann_whitney", UNIVARIATE, lambda x0, x1, hyp, seed, p: npt.mann_whitney_u(x0, x1, hyp)),
    TestEntry("levene", UNIVARIATE,
              lambda x0, x1, hyp, seed, p: npt.levene_test(x0, x1, p.get("center", "mean"), hyp)),
    TestEntry("ks", UNIVARIATE, lambda x0, x1, hyp, seed, p: npt.ks_test(x0, x1, hyp)),
    TestEntry("anderson_darling", UNIVARIATE,
              lambda x0, x1, hyp, seed, p: npt.anderson_darling_test(
                  x0, x1, hyp, int(p.get("n_permutations", 1000)), seed)),
    TestEntry("wasserstein", UNIVARIATE, _perm(lambda p: dv.WassersteinStatistic(int(p.get("p", 1))))),
    TestEntry("kl", UNIVARIATE, _perm(lambda p: dv.HistogramDivergenceStatistic(
        "kl", float(p.get("epsilon", 1e-6)))), categorical_ok=True),
    TestEntry("js", UNIVARIATE, _perm(lambda p: dv.HistogramDivergenceStatistic(
        "js", float(p.get("epsilon", 1e-6)))), categorical_ok=True),
    TestEntry("energy", JOINT, _perm(lambda p: dv.EnergyStatistic())),
    TestEntry("mmd", JOINT, lambda x0, x1, hyp, seed, p: npt.mmd_test(
        x0, x1, npt.KernelSpec(bandwidth=p.get("bandwidth", "median_heuristic")), hyp,
        int(p.get("n_permutations", 1000)), seed, p.get("calibration", "permutation"))),
    TestEntry("friedman_rafsky", JOINT, lambda x0, x1, hyp, seed, p: npt.friedman_rafsky_test(
        x0, x1, hyp, int(p.get("n_permutations", 1000)), seed)),
    TestEntry("deviation", LABELED, lambda d0, d1, hyp, seed, p: perf.deviation_test(
        d0, d1, p.get("metric", "accuracy"), hyp, n_boot=int(p.get("n_boot", perf.N_BOOTSTRAP)),
        seed=seed), default_stage="performance"),
    TestEntry("spec_threshold", LABELED, lambda d0, d1, hyp, seed, p: perf.spec_threshold_test(
        d1, p.get("metric", "accuracy"), hyp, n_boot=int(p.get("n_boot", perf.N_BOOTSTRAP)),
        seed=seed), default_stage="performance"),
    TestEntry("correctness_shift", LABELED, lambda d0, d1, hyp, seed, p: perf.correctness_shift_test(
        d0, d1, p.get("method", "mmd"), hyp, z_scale=float(p.get("z_scale", 1.0)),
        n_permutations=int(p.get("n_permutations", 1000)), seed=seed),
        default_stage="correctness_shift"),
)


def run_test(name: str, d0: Dataset, d1: Dataset, hyp: Hypothesis, *, feature: str | None = None,
             features=None, include_label: bool = False, seed: int = 0,
             params: dict | None = None) -> TestResult:
    """Run a registered test on two datasets.

    Univariate tests read ``feature``; joint tests encode ``features``
    (default: all feature columns), plus the label when ``include_label``.
    """
    try:
        entry = REGISTRY[name]
    except KeyError:
        raise ConfigError(f"unknown test {name!r}; known: {', '.join(sorted(REGISTRY))}") from None
    params = dict(params or {})
    if entry.shape == LABELED:
        return entry.run(d0, d1, hyp, seed, params)
    if entry.shape == UNIVARIATE:
        if feature is None:
            raise ConfigError(f"test {name!r} needs a feature")
        for d in (d0, d1):
            if feature not in d.schema:
                raise MissingColumn(f"feature {feature!r} not in window {d.window}")
        categorical = d0.schema[feature].kind is Kind.CATEGORICAL
        if categorical and not entry.categorical_ok:
            raise ConfigError(f"test {name!r} needs a numeric feature; {feature!r} is categorical")
        x0, x1 = d0[feature], d1[feature]
        if not categorical:
            x0, x1 = np.asarray(x0, float), np.asarray(x1, float)
        res = entry.run(x0, x1, hyp, seed, params)
    else:
        cols = list(features) if features else [c.name for c in d0.schema.features]
        if include_label:
            if d0.schema.label is None or d1.schema.label is None:
                raise MissingColumn("label column unavailable")
            cols.append(d0.schema.label)
        enc = Encoder.fit(d0, d1, cols)
        res = entry.run(enc.transform(d0), enc.transform(d1), hyp, seed, params)
    return res
