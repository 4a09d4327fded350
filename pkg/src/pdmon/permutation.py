"""Permutation calibration for arbitrary two-sample statistics.

A statistic is any callable ``stat(d0, d1) -> float`` where larger values
mean "more different". Statistics may additionally implement
``prepare(pooled) -> evaluate`` where ``evaluate(masks)`` maps a boolean
``(B, N)`` array (True = row belongs to window t0) to ``B`` statistic
values. ``prepare`` is the place to freeze tuning parameters (bandwidths,
bin edges, distance matrices) from the pooled sample, so they are fixed
before any relabelling happens.

Permutation ``b`` orders the pooled rows by uniform keys read from block
``b`` of a counter-based Philox stream keyed on ``seed``. Any single
permutation can be regenerated on its own, the batched and per-call paths
see identical relabellings, and results do not depend on evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .core import Empirical, Hypothesis, TestResult, decide
from .errors import StatisticFailure

_CHUNK = 256
_MASK64 = (1 << 64) - 1
NULL_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


@dataclass(frozen=True)
class PermutationPlan:
    statistic: Callable[[Any, Any], float]
    n_permutations: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.n_permutations < 1:
            raise ValueError("n_permutations must be >= 1")
        if not callable(self.statistic):
            raise TypeError("statistic must be callable")


def permutation_keys(seed: int, start: int, stop: int, n: int) -> np.ndarray:
    """Uniform sort keys for permutations ``start..stop-1``, one row each.

    Row ``b`` is read from a fixed block of the Philox counter space keyed by
    ``seed``, so it depends only on ``(seed, b)``.
    """
    words = -(-n // 4)  # counters per row; each counter yields four doubles
    bitgen = np.random.Philox(key=seed & _MASK64, counter=[start * words, 0, 0, 0])
    u = np.random.Generator(bitgen).random((stop - start) * words * 4)
    return u.reshape(stop - start, words * 4)[:, :n]


def permutation_indices(seed: int, b: int, n: int) -> np.ndarray:
    """Uniformly random ordering of ``range(n)`` for permutation number ``b``."""
    return np.argsort(permutation_keys(seed, b, b + 1, n)[0], kind="stable")


def permutation_masks(seed: int, start: int, stop: int, n0: int, n: int) -> np.ndarray:
    """Boolean ``(stop-start, n)`` array marking the rows relabelled as t0."""
    keys = permutation_keys(seed, start, stop, n)
    if n0 == n:
        return np.ones_like(keys, dtype=bool)
    if n0 == 0:
        return np.zeros_like(keys, dtype=bool)
    kth = np.partition(keys, n0 - 1, axis=1)[:, n0 - 1:n0]
    return keys <= kth


def _pool(d0, d1):
    return np.concatenate([np.asarray(d0), np.asarray(d1)], axis=0)


def permutation_null(d0, d1, plan: PermutationPlan) -> tuple[float, np.ndarray]:
    """Observed statistic and its ``B`` permuted replicates."""
    pooled = _pool(d0, d1)
    n0, n = len(d0), len(pooled)
    B = plan.n_permutations
    stat = plan.statistic
    null = np.empty(B)

    if hasattr(stat, "prepare"):
        evaluate = stat.prepare(pooled)
        observed = np.zeros((1, n), dtype=bool)
        observed[0, :n0] = True
        t_obs = float(evaluate(observed)[0])
        for start in range(0, B, _CHUNK):
            stop = min(B, start + _CHUNK)
            masks = permutation_masks(plan.seed, start, stop, n0, n)
            try:
                null[start:stop] = evaluate(masks)
            except Exception as exc:
                raise StatisticFailure(f"statistic failed in permutations {start}..{stop - 1}: {exc}",
                                       start) from exc
        return t_obs, null

    t_obs = float(stat(pooled[:n0], pooled[n0:]))
    for start in range(0, B, _CHUNK):
        keys = permutation_keys(plan.seed, start, min(B, start + _CHUNK), n)
        for b, row in enumerate(keys, start):
            idx = np.argsort(row, kind="stable")
            try:
                null[b] = stat(pooled[idx[:n0]], pooled[idx[n0:]])
            except Exception as exc:
                raise StatisticFailure(f"statistic failed on permutation {b}: {exc}", b) from exc
    return t_obs, null


def null_summary(null: np.ndarray) -> dict:
    qs = np.quantile(null, NULL_QUANTILES)
    return {f"q{int(q * 100):02d}": float(v) for q, v in zip(NULL_QUANTILES, qs)}


def permutation_test(d0, d1, plan: PermutationPlan, hyp: Hypothesis = Hypothesis(), *,
                     method: str | None = None, details: dict | None = None) -> TestResult:
    """Permutation test with the add-one p-value ``(1 + #{T_b >= T_obs}) / (1 + B)``.

    Large statistics count as evidence against H0 whatever ``hyp.sidedness``
    says; orient the statistic accordingly.
    """
    t_obs, null = permutation_null(d0, d1, plan)
    name = method or getattr(plan.statistic, "name", getattr(plan.statistic, "__name__", "statistic"))
    d = {"n_permutations": plan.n_permutations, "seed": plan.seed,
         "null_quantiles": null_summary(null)}
    d.update(details or {})
    return decide(t_obs, Empirical(null), hyp, method=f"permutation[{name}]",
                  n0=len(d0), n1=len(d1), sidedness="greater", details=d,
                  notes=f"B={plan.n_permutations} label permutations, seed={plan.seed}")


def permutation_pvalue(t_obs: float, null: np.ndarray) -> float:
    return Empirical(null).sf(t_obs)
