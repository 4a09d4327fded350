"""Synthetic monitoring windows with planted shifts.

Generator: ``age`` ~ N(55, 12) and ``site`` in {A, B, C} are clinical
features, ``x1`` and ``x2`` ~ N(0, 1) are model inputs. A frozen linear
score decides the prediction ``1[score > 0]``; the label equals the
prediction except for independent flips at rate ``NOISE`` (the label
model is a step link, so the baseline accuracy is 0.95 everywhere in
feature space and pure covariate shift leaves it unchanged).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.stats import norm

from ..core import Column, Dataset, Kind, Role, Schema

NOISE = 0.05
SITES = ("A", "B", "C")
SITE_PROBS = (0.4, 0.35, 0.25)
SITE_EFFECT = {"A": 0.0, "B": 0.3, "C": -0.3}
AGE_MEAN, AGE_SD = 55.0, 12.0

SIM_SCHEMA = Schema((
    Column("age", Role.CLINICAL, Kind.NUMERIC),
    Column("site", Role.CLINICAL, Kind.CATEGORICAL),
    Column("x1", Role.INPUT, Kind.NUMERIC),
    Column("x2", Role.INPUT, Kind.NUMERIC),
    Column("label", Role.LABEL, Kind.NUMERIC),
    Column("prediction", Role.PREDICTION, Kind.NUMERIC),
))

ScenarioKind = Literal["none", "mean_shift", "variance_shift", "label_flip_concept_drift",
                       "subgroup_local_degradation", "gradual_drift"]
KINDS = ("none", "mean_shift", "variance_shift", "label_flip_concept_drift",
         "subgroup_local_degradation", "gradual_drift")


@dataclass(frozen=True)
class ShiftScenario:
    """What changes in window t1.

    * ``mean_shift``: numeric features of affected rows move by
      ``magnitude`` baseline SDs.
    * ``variance_shift``: deviations of affected rows scale by ``1 + magnitude``.
    * ``label_flip_concept_drift``: labels of affected rows flip with
      probability ``magnitude``.
    * ``subgroup_local_degradation``: rows in the oldest ``fraction`` of the
      age distribution get label noise ``NOISE + magnitude``.
    * ``gradual_drift``: ``x1`` ramps linearly from 0 to ``magnitude`` over
      the rows of t1, in row order.
    """

    kind: ScenarioKind = "none"
    magnitude: float = 0.0
    fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown scenario kind {self.kind!r}")
        if self.magnitude < 0:
            raise ValueError("magnitude must be >= 0")
        if self.kind == "none" and self.magnitude != 0:
            raise ValueError("kind 'none' requires magnitude 0")
        if not 0 < self.fraction <= 1:
            raise ValueError("fraction must lie in (0, 1]")
        if self.kind == "subgroup_local_degradation" and NOISE + self.magnitude > 1:
            raise ValueError("label noise rate would exceed 1")


def model_score(age, site, x1, x2) -> np.ndarray:
    effect = np.array([SITE_EFFECT[s] for s in site])
    return 0.8 * x1 - 0.5 * x2 + 0.03 * (age - 50.0) + effect


def _draw_features(rng: np.random.Generator, n: int) -> dict:
    age = rng.normal(AGE_MEAN, AGE_SD, n)
    site = np.array(SITES, dtype=object)[rng.choice(len(SITES), size=n, p=SITE_PROBS)]
    x1 = rng.normal(0.0, 1.0, n)
    x2 = rng.normal(0.0, 1.0, n)
    return {"age": age, "site": site, "x1": x1, "x2": x2}


def _label(rng: np.random.Generator, cols: dict, noise: np.ndarray | float) -> None:
    pred = (model_score(cols["age"], cols["site"], cols["x1"], cols["x2"]) > 0).astype(np.int8)
    flip = rng.random(pred.size) < noise
    cols["prediction"] = pred
    cols["label"] = (pred ^ flip).astype(np.int8)


def age_cutoff(fraction: float) -> float:
    """Age above which a row belongs to the oldest ``fraction`` of the baseline population."""
    return float(norm.ppf(1.0 - fraction, AGE_MEAN, AGE_SD))


def simulate(scenario: ShiftScenario, n0: int, n1: int,
             schema: Schema = SIM_SCHEMA) -> tuple[Dataset, Dataset]:
    """Draw a baseline window and a shifted current window, deterministic in ``scenario.seed``."""
    if n0 < 1 or n1 < 1:
        raise ValueError("window sizes must be >= 1")
    if schema != SIM_SCHEMA:
        raise ValueError("only the built-in simulation schema is supported")
    rng0 = np.random.default_rng([scenario.seed, 0])
    rng1 = np.random.default_rng([scenario.seed, 1])

    c0 = _draw_features(rng0, n0)
    _label(rng0, c0, NOISE)

    c1 = _draw_features(rng1, n1)
    affected = rng1.random(n1) < scenario.fraction if scenario.fraction < 1 else np.ones(n1, bool)
    kind, mag = scenario.kind, scenario.magnitude
    sds = {"age": AGE_SD, "x1": 1.0, "x2": 1.0}
    means = {"age": AGE_MEAN, "x1": 0.0, "x2": 0.0}
    noise = np.full(n1, NOISE)
    if kind == "mean_shift":
        for k, sd in sds.items():
            c1[k] = c1[k] + affected * mag * sd
    elif kind == "variance_shift":
        for k in sds:
            c1[k] = np.where(affected, means[k] + (1 + mag) * (c1[k] - means[k]), c1[k])
    elif kind == "subgroup_local_degradation":
        noise = np.where(c1["age"] > age_cutoff(scenario.fraction), NOISE + mag, NOISE)
    elif kind == "gradual_drift":
        c1["x1"] = c1["x1"] + mag * (np.arange(n1) / max(n1 - 1, 1))
    _label(rng1, c1, noise)
    if kind == "label_flip_concept_drift":
        flip = affected & (rng1.random(n1) < mag)
        c1["label"] = (c1["label"] ^ flip).astype(np.int8)

    return Dataset(schema, c0, "t0"), Dataset(schema, c1, "t1")
