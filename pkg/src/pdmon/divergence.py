"""Distances and divergences between two empirical distributions.

These return raw magnitudes; wrap them with
:func:`pdmon.permutation.permutation_test` to obtain a calibrated test.
Each divergence also has a statistic class whose ``prepare`` hook lets the
permutation engine evaluate many relabellings at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.spatial.distance import cdist

from .errors import EmptySample, NonFiniteValue, UnsmoothedZeroBin


def as_points(x, name: str = "sample") -> np.ndarray:
    """Coerce to a finite ``(n, d)`` float array; 1-D input becomes one column."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"{name} must be 1-D or 2-D")
    if a.shape[0] == 0:
        raise EmptySample(f"{name} is empty")
    if not np.all(np.isfinite(a)):
        raise NonFiniteValue(f"{name} contains non-finite values")
    return a


def canonical_order(a: np.ndarray) -> np.ndarray:
    """Rows sorted lexicographically, so equal multisets give equal arrays."""
    return a[np.lexsort(a.T[::-1])] if a.shape[1] else a


# ---------------------------------------------------------------------------
# Energy distance
# ---------------------------------------------------------------------------

def energy_distance(d0, d1) -> float:
    """V-statistic energy distance ``2E|X-Y| - E|X-X'| - E|Y-Y'|`` (Euclidean)."""
    x = canonical_order(as_points(d0, "d0"))
    y = canonical_order(as_points(d1, "d1"))
    if x.shape[1] != y.shape[1]:
        raise ValueError("samples have different dimensions")
    dxy = cdist(x, y).mean()
    dxx = cdist(x, x).mean()
    dyy = cdist(y, y).mean()
    return max(0.0, 2.0 * dxy - dxx - dyy)


def _block_sums(mat: np.ndarray, masks: np.ndarray):
    """Sums of ``mat`` over the (t0,t0), (t0,t1), (t1,t1) blocks for each mask row."""
    a = masks.astype(float)
    am = a @ mat
    s_aa = np.einsum("ij,ij->i", am, a)
    s_a_all = am.sum(axis=1)
    s_ab = s_a_all - s_aa
    s_bb = mat.sum() - 2.0 * s_ab - s_aa
    return s_aa, s_ab, s_bb


class EnergyStatistic:
    name = "energy_distance"

    def __call__(self, d0, d1) -> float:
        return energy_distance(d0, d1)

    def prepare(self, pooled):
        pts = as_points(pooled, "pooled")
        dist = cdist(pts, pts)

        def evaluate(masks):
            n0 = masks.sum(axis=1)
            n1 = masks.shape[1] - n0
            s_aa, s_ab, s_bb = _block_sums(dist, masks)
            return np.maximum(0.0, 2.0 * s_ab / (n0 * n1) - s_aa / n0 ** 2 - s_bb / n1 ** 2)

        return evaluate


# ---------------------------------------------------------------------------
# One-dimensional Wasserstein distance
# ---------------------------------------------------------------------------

def quantile_grid(n0: int, n1: int):
    """Merged quantile grid for two empirical distributions.

    Returns ``(i, j, w)``: on the k-th grid interval the quantile functions
    equal the ``i[k]``-th and ``j[k]``-th order statistics (0-based) and
    the interval has length ``w[k]``.
    """
    u = np.union1d(np.arange(n0 + 1) / n0, np.arange(n1 + 1) / n1)
    u[0], u[-1] = 0.0, 1.0
    w = np.diff(u)
    keep = w > 0
    mid = 0.5 * (u[:-1] + u[1:])[keep]
    i = np.minimum(np.floor(mid * n0).astype(int), n0 - 1)
    j = np.minimum(np.floor(mid * n1).astype(int), n1 - 1)
    return i, j, w[keep]


def wasserstein_1d(x0, x1, p: int = 1) -> float:
    """Exact p-Wasserstein distance between two univariate empirical measures.

    Integrates ``|Q0(u) - Q1(u)|**p`` over the merged quantile grid and
    returns the p-th root.
    """
    if p < 1:
        raise ValueError("order p must be >= 1")
    a = np.sort(_univariate(x0, "x0"))
    b = np.sort(_univariate(x1, "x1"))
    i, j, w = quantile_grid(a.size, b.size)
    total = float(np.sum(w * np.abs(a[i] - b[j]) ** p))
    return total ** (1.0 / p)


def _univariate(x, name="sample"):
    a = as_points(x, name)
    if a.shape[1] != 1:
        raise ValueError("wasserstein_1d needs univariate samples")
    return a[:, 0]


class WassersteinStatistic:
    def __init__(self, p: int = 1):
        self.p = p
        self.name = f"wasserstein_{p}"

    def __call__(self, x0, x1) -> float:
        return wasserstein_1d(x0, x1, self.p)

    def prepare(self, pooled):
        z = np.asarray(pooled, dtype=float).ravel()
        order = np.argsort(z, kind="stable")
        zs = z[order]
        p = self.p

        def evaluate(masks):
            m = masks[:, order]
            n0 = int(m[0].sum())
            n1 = m.shape[1] - n0
            # positions of each group's members along the sorted pooled sample
            pos0 = np.argsort(~m, axis=1, kind="stable")[:, :n0]
            pos1 = np.argsort(m, axis=1, kind="stable")[:, :n1]
            i, j, w = quantile_grid(n0, n1)
            diff = np.abs(zs[pos0[:, i]] - zs[pos1[:, j]])
            return (diff ** p @ w) ** (1.0 / p)

        return evaluate


# ---------------------------------------------------------------------------
# Histogram f-divergences
# ---------------------------------------------------------------------------

MIN_BINS, MAX_BINS = 10, 256


def freedman_diaconis_edges(pooled) -> np.ndarray:
    """Shared bin edges from the Freedman-Diaconis rule, clamped to [10, 256] bins."""
    z = np.asarray(pooled, dtype=float).ravel()
    lo, hi = float(z.min()), float(z.max())
    if hi == lo:
        return np.linspace(lo - 0.5, hi + 0.5, MIN_BINS + 1)
    q75, q25 = np.percentile(z, [75, 25])
    width = 2.0 * (q75 - q25) * z.size ** (-1.0 / 3.0)
    nbins = MIN_BINS if width <= 0 else int(math.ceil((hi - lo) / width))
    nbins = min(MAX_BINS, max(MIN_BINS, nbins))
    return np.linspace(lo, hi, nbins + 1)


def bin_index(x, edges) -> np.ndarray:
    """Bin of each value; the last bin is closed on the right, outliers are clipped."""
    idx = np.searchsorted(edges, np.asarray(x, dtype=float), side="right") - 1
    return np.clip(idx, 0, len(edges) - 2)


def smooth(counts: np.ndarray, n, epsilon: float) -> np.ndarray:
    """Add ``epsilon`` mass to every bin and renormalise (row-wise)."""
    nb = counts.shape[-1]
    return (counts / np.asarray(n)[..., None] + epsilon) / (1.0 + epsilon * nb)


@dataclass(frozen=True, eq=False)
class HistogramPair:
    """Two probability vectors over shared bins (numeric edges or category levels)."""

    p0: np.ndarray
    p1: np.ndarray
    edges: np.ndarray | None = None
    levels: tuple | None = None
    epsilon: float = 1e-6

    def __post_init__(self):
        p0 = np.asarray(self.p0, dtype=float)
        p1 = np.asarray(self.p1, dtype=float)
        if p0.shape != p1.shape or p0.ndim != 1:
            raise ValueError("p0 and p1 must be 1-D with identical bins")
        if np.any(p0 < 0) or np.any(p1 < 0):
            raise ValueError("masses must be non-negative")
        for p in (p0, p1):
            if abs(p.sum() - 1.0) > 1e-9:
                raise ValueError(f"masses sum to {p.sum()}, expected 1")
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "p1", p1)

    @classmethod
    def from_samples(cls, x0, x1, epsilon: float = 1e-6, edges=None) -> "HistogramPair":
        x0 = np.asarray(x0)
        x1 = np.asarray(x1)
        if x0.size == 0 or x1.size == 0:
            raise EmptySample("histogram needs non-empty samples")
        if x0.dtype == object or x1.dtype == object:
            levels = tuple(sorted(set(map(str, x0)) | set(map(str, x1))))
            lookup = {v: k for k, v in enumerate(levels)}
            c0 = np.bincount([lookup[str(v)] for v in x0], minlength=len(levels))
            c1 = np.bincount([lookup[str(v)] for v in x1], minlength=len(levels))
            return cls(smooth(c0, x0.size, epsilon), smooth(c1, x1.size, epsilon),
                       levels=levels, epsilon=epsilon)
        if edges is None:
            edges = freedman_diaconis_edges(np.concatenate([x0.ravel(), x1.ravel()]))
        nb = len(edges) - 1
        c0 = np.bincount(bin_index(x0.ravel(), edges), minlength=nb)
        c1 = np.bincount(bin_index(x1.ravel(), edges), minlength=nb)
        return cls(smooth(c0, x0.size, epsilon), smooth(c1, x1.size, epsilon),
                   edges=np.asarray(edges), epsilon=epsilon)


def _kl(p, q):
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p / q), 0.0)
    return terms.sum(axis=-1)


def kl_divergence(p0, p1) -> float:
    p0, p1 = np.asarray(p0, dtype=float), np.asarray(p1, dtype=float)
    if np.any((p0 > 0) & (p1 == 0)):
        raise UnsmoothedZeroBin("p1 has an empty bin where p0 has mass; KL is infinite")
    return max(0.0, float(_kl(p0, p1)))


def js_divergence(p0, p1) -> float:
    p0, p1 = np.asarray(p0, dtype=float), np.asarray(p1, dtype=float)
    m = 0.5 * (p0 + p1)
    return max(0.0, float(0.5 * _kl(p0, m) + 0.5 * _kl(p1, m)))


def f_divergence(hist: HistogramPair, kind: Literal["kl", "js"] = "js") -> float:
    """KL(p0 || p1) or Jensen-Shannon divergence, natural log."""
    if kind == "kl":
        return kl_divergence(hist.p0, hist.p1)
    if kind == "js":
        return js_divergence(hist.p0, hist.p1)
    raise ValueError(f"unknown divergence {kind!r}")


class HistogramDivergenceStatistic:
    """KL/JS between per-window histograms; bins are frozen from the pooled sample."""

    def __init__(self, kind: Literal["kl", "js"] = "js", epsilon: float = 1e-6):
        if kind not in ("kl", "js"):
            raise ValueError(f"unknown divergence {kind!r}")
        self.kind = kind
        self.epsilon = epsilon
        self.name = f"{kind}_divergence"

    def __call__(self, x0, x1) -> float:
        return f_divergence(HistogramPair.from_samples(x0, x1, self.epsilon), self.kind)

    def prepare(self, pooled):
        z = np.asarray(pooled)
        if z.dtype == object:
            levels = sorted(set(map(str, z)))
            lookup = {v: k for k, v in enumerate(levels)}
            idx = np.array([lookup[str(v)] for v in z])
            nb = len(levels)
        else:
            edges = freedman_diaconis_edges(z)
            idx = bin_index(z.ravel(), edges)
            nb = len(edges) - 1
        onehot = np.zeros((idx.size, nb))
        onehot[np.arange(idx.size), idx] = 1.0
        total = onehot.sum(axis=0)
        eps, kind = self.epsilon, self.kind

        def evaluate(masks):
            n0 = masks.sum(axis=1)
            n1 = masks.shape[1] - n0
            c0 = masks.astype(float) @ onehot
            c1 = total - c0
            p0, p1 = smooth(c0, n0, eps), smooth(c1, n1, eps)
            if kind == "kl":
                if eps == 0 and np.any((p0 > 0) & (p1 == 0)):
                    raise UnsmoothedZeroBin("empty bin in p1 under KL")
                return np.maximum(0.0, _kl(p0, p1))
            m = 0.5 * (p0 + p1)
            return np.maximum(0.0, 0.5 * _kl(p0, m) + 0.5 * _kl(p1, m))

        return evaluate
