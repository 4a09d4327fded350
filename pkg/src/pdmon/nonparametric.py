"""Distribution-free two-sample tests: rank tests, ECDF tests, the
minimum-spanning-tree runs test and the kernel MMD test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import special
from scipy.spatial.distance import cdist, pdist
from scipy.stats import rankdata

from .core import Empirical, FDist, Hypothesis, Normal, TestResult, decide
from .divergence import as_points, canonical_order, _block_sums
from .errors import BandwidthUndefined, DegeneratePoints, TooFewSamples
from .parametric import as_sample
from .permutation import PermutationPlan, null_summary, permutation_null

EXACT_MWU_LIMIT = 400  # exact U distribution when n0 * n1 <= this


# ---------------------------------------------------------------------------
# Mann-Whitney U
# ---------------------------------------------------------------------------

def mwu_null_counts(n0: int, n1: int) -> np.ndarray:
    """Number of orderings giving each U = 0..n0*n1 when there are no ties.

    Coefficients of the Gaussian binomial ``[n0+n1 choose n0]_q``, built by
    alternately multiplying by ``1 - q^(n1+i)`` and dividing by ``1 - q^i``.
    """
    size = n0 * n1 + 1
    poly = np.zeros(size, dtype=np.int64)
    poly[0] = 1
    for i in range(1, n0 + 1):
        k = n1 + i
        nxt = poly.copy()
        nxt[k:] -= poly[:size - k]
        # divide by (1 - q^i): running sum with stride i
        for r in range(i, size):
            nxt[r] += nxt[r - i]
        poly = nxt
    return poly


def mwu_critical_value(n0: int, n1: int, alpha: float, sidedness: str = "two_sided") -> int | None:
    """Largest c with P(U <= c) <= alpha (alpha/2 if two-sided), exact null; None if none."""
    counts = mwu_null_counts(n0, n1)
    cdf = np.cumsum(counts) / counts.sum()
    level = alpha / 2 if sidedness == "two_sided" else alpha
    ok = np.nonzero(cdf <= level)[0]
    return int(ok[-1]) if ok.size else None


def mann_whitney_u(x0, x1, hyp: Hypothesis = Hypothesis()) -> TestResult:
    """Mann-Whitney U with ``U = n0*n1 + n0(n0+1)/2 - R0`` (midranks for ties).

    U counts pairs with the t1 value above the t0 value, so a ``greater``
    alternative (t0 shifted up) corresponds to small U.
    """
    x0 = as_sample(x0, 1, "x0")
    x1 = as_sample(x1, 1, "x1")
    n0, n1 = x0.size, x1.size
    pooled = np.concatenate([x0, x1])
    ranks = rankdata(pooled)
    r0 = float(ranks[:n0].sum())
    u = n0 * n1 + n0 * (n0 + 1) / 2 - r0
    _, tie_counts = np.unique(pooled, return_counts=True)
    has_ties = bool(np.any(tie_counts > 1))
    side = hyp.sidedness
    details = {"R0": r0}

    if n0 * n1 <= EXACT_MWU_LIMIT and not has_ties:
        counts = mwu_null_counts(n0, n1)
        probs = counts / counts.sum()
        k = int(round(u))
        lower = float(probs[:k + 1].sum())
        upper = float(probs[k:].sum())
        if side == "greater":
            p = lower
        elif side == "less":
            p = upper
        else:
            p = min(1.0, 2.0 * min(lower, upper))
        crit = mwu_critical_value(n0, n1, hyp.alpha, side)
        if crit is not None and side == "less":
            crit = n0 * n1 - crit
        details["critical_region"] = (
            "U <= c" if side == "greater" else "U >= c" if side == "less" else "min(U, n0*n1-U) <= c")
        return TestResult("mann_whitney_u", float(u), bool(p < hyp.alpha), hyp.alpha, side,
                          p_value=p, critical_value=None if crit is None else float(crit),
                          n0=n0, n1=n1, notes="exact null distribution", details=details)

    n = n0 + n1
    mu = n0 * n1 / 2
    tie_term = float(np.sum(tie_counts ** 3 - tie_counts)) / (n * (n - 1)) if n > 1 else 0.0
    var = n0 * n1 / 12 * ((n + 1) - tie_term)
    notes = "normal approximation with continuity correction"
    if has_ties:
        notes += " and tie-corrected variance"
    if var <= 0:
        p = 1.0
        z = 0.0
    else:
        sd = math.sqrt(var)
        if side == "greater":
            z = (u - mu + 0.5) / sd
            p = float(special.ndtr(z))
        elif side == "less":
            z = (u - mu - 0.5) / sd
            p = float(special.ndtr(-z))
        else:
            z = max(abs(u - mu) - 0.5, 0.0) / sd
            p = min(1.0, 2.0 * float(special.ndtr(-z)))
    details["z"] = z
    zc = -special.ndtri(hyp.alpha / 2 if side == "two_sided" else hyp.alpha)
    crit = mu - zc * math.sqrt(max(var, 0.0)) - 0.5
    if side == "less":
        crit = n0 * n1 - crit
    return TestResult("mann_whitney_u", float(u), bool(p < hyp.alpha), hyp.alpha, side,
                      p_value=p, critical_value=float(crit), n0=n0, n1=n1, notes=notes,
                      details=details)


# ---------------------------------------------------------------------------
# Levene
# ---------------------------------------------------------------------------

def levene_test(x0, x1, center: Literal["mean", "median"] = "mean",
                hyp: Hypothesis = Hypothesis()) -> TestResult:
    """Two-group Levene test on absolute deviations from each group's centre.

    Compared with the upper tail of F(1, n0+n1-2).
    """
    x0 = as_sample(x0, 2, "x0")
    x1 = as_sample(x1, 2, "x1")
    if center not in ("mean", "median"):
        raise ValueError("center must be 'mean' or 'median'")
    c = np.mean if center == "mean" else np.median
    z0 = np.abs(x0 - c(x0))
    z1 = np.abs(x1 - c(x1))
    n0, n1 = z0.size, z1.size
    n = n0 + n1
    zbar = (z0.sum() + z1.sum()) / n
    between = n0 * (z0.mean() - zbar) ** 2 + n1 * (z1.mean() - zbar) ** 2
    within = float(np.sum((z0 - z0.mean()) ** 2) + np.sum((z1 - z1.mean()) ** 2))
    notes = ""
    if within == 0:
        w = 0.0 if between == 0 else math.inf
        notes = "zero within-group spread of deviations"
    else:
        w = (n - 2) * between / within
    return decide(w, FDist(1, n - 2), hyp, method=f"levene[{center}]", n0=n0, n1=n1,
                  sidedness="greater", notes=notes)


# ---------------------------------------------------------------------------
# Kolmogorov-Smirnov
# ---------------------------------------------------------------------------

def ecdf_gaps(x0: np.ndarray, x1: np.ndarray):
    """F0 - F1 evaluated at every distinct pooled value."""
    s0, s1 = np.sort(x0), np.sort(x1)
    grid = np.unique(np.concatenate([s0, s1]))
    f0 = np.searchsorted(s0, grid, side="right") / s0.size
    f1 = np.searchsorted(s1, grid, side="right") / s1.size
    return f0 - f1


def ks_c_alpha(alpha: float, sidedness: str = "two_sided") -> float:
    """Asymptotic Kolmogorov constant c(alpha), e.g. 1.358 at alpha = 0.05."""
    if sidedness == "two_sided":
        return float(special.kolmogi(alpha))
    return math.sqrt(-math.log(alpha) / 2)


def ks_test(x0, x1, hyp: Hypothesis = Hypothesis()) -> TestResult:
    """Two-sample KS test with the asymptotic Kolmogorov null.

    Critical value ``c(alpha) * sqrt((n0 + n1) / (n0 * n1))``. For one-sided
    alternatives the statistic is the signed supremum (``greater``: t0
    stochastically larger, i.e. sup(F1 - F0)).
    """
    x0 = as_sample(x0, 1, "x0")
    x1 = as_sample(x1, 1, "x1")
    n0, n1 = x0.size, x1.size
    en = n0 * n1 / (n0 + n1)
    gaps = ecdf_gaps(x0, x1)
    side = hyp.sidedness
    if side == "two_sided":
        d = float(np.max(np.abs(gaps)))
        p = float(special.kolmogorov(math.sqrt(en) * d))
    else:
        d = float(max(0.0, np.max(-gaps if side == "greater" else gaps)))
        p = math.exp(-2.0 * en * d * d)
    c = ks_c_alpha(hyp.alpha, side)
    crit = c * math.sqrt((n0 + n1) / (n0 * n1))
    return TestResult("ks_test", d, bool(p < hyp.alpha), hyp.alpha, side, p_value=min(1.0, p),
                      critical_value=crit, n0=n0, n1=n1, notes="asymptotic Kolmogorov null",
                      details={"c_alpha": c})


# ---------------------------------------------------------------------------
# Anderson-Darling (k = 2, midrank form)
# ---------------------------------------------------------------------------

def _ad_from_counts(f0: np.ndarray, ties: np.ndarray, n0: int, n1: int) -> np.ndarray:
    """Midrank two-sample AD statistic from per-distinct-value counts of sample 0.

    ``f0`` has shape (B, L): how many t0 observations equal each of the L
    distinct pooled values; ``ties`` holds the multiplicity of each value.
    """
    n = n0 + n1
    f1 = ties - f0
    bj = np.cumsum(ties)
    ba = bj - ties / 2.0
    m0 = np.cumsum(f0, axis=-1) - f0 / 2.0
    m1 = np.cumsum(f1, axis=-1) - f1 / 2.0
    denom = ba * (n - ba) - n * ties / 4.0
    ok = denom > 0
    t0 = np.where(ok, ties * (n * m0 - n0 * ba) ** 2 / np.where(ok, denom, 1.0), 0.0)
    t1 = np.where(ok, ties * (n * m1 - n1 * ba) ** 2 / np.where(ok, denom, 1.0), 0.0)
    return (n - 1) / n ** 2 * (t0.sum(axis=-1) / n0 + t1.sum(axis=-1) / n1)


class AndersonDarlingStatistic:
    name = "anderson_darling"

    def __call__(self, x0, x1) -> float:
        return anderson_darling_statistic(x0, x1)

    def prepare(self, pooled):
        z = np.asarray(pooled, dtype=float).ravel()
        order = np.argsort(z, kind="stable")
        values, starts, ties = np.unique(z[order], return_index=True, return_counts=True)
        ties = ties.astype(float)

        def evaluate(masks):
            m = masks[:, order].astype(float)
            f0 = np.add.reduceat(m, starts, axis=1)
            n0 = int(masks[0].sum())
            return _ad_from_counts(f0, ties, n0, masks.shape[1] - n0)

        return evaluate


def anderson_darling_statistic(x0, x1) -> float:
    """Scholz-Stephens midrank k-sample AD statistic for two samples (not normalised)."""
    x0 = as_sample(x0, 1, "x0")
    x1 = as_sample(x1, 1, "x1")
    pooled = np.concatenate([x0, x1])
    values, ties = np.unique(pooled, return_counts=True)
    f0 = np.searchsorted(np.sort(x0), values, side="right") - np.searchsorted(np.sort(x0), values, side="left")
    return float(_ad_from_counts(f0.astype(float), ties.astype(float), x0.size, x1.size))


def anderson_darling_test(x0, x1, hyp: Hypothesis = Hypothesis(),
                          n_permutations: int = 1000, seed: int = 0) -> TestResult:
    """Two-sample AD statistic calibrated by label permutation."""
    x0 = as_sample(x0, 2, "x0")
    x1 = as_sample(x1, 2, "x1")
    plan = PermutationPlan(AndersonDarlingStatistic(), n_permutations, seed)
    t_obs, null = permutation_null(x0, x1, plan)
    return decide(t_obs, Empirical(null), hyp, method="anderson_darling", n0=x0.size, n1=x1.size,
                  sidedness="greater",
                  notes=f"permutation null, B={n_permutations}, seed={seed}",
                  details={"null_quantiles": null_summary(null)})


# ---------------------------------------------------------------------------
# Friedman-Rafsky
# ---------------------------------------------------------------------------

def minimum_spanning_tree(dist: np.ndarray) -> np.ndarray:
    """Prim's algorithm over a dense distance matrix.

    Edges compare by ``(weight, min(i, j), max(i, j))``, a strict total
    order, so the tree is unique and equals the one Kruskal's algorithm
    produces with lexicographic tie-breaking. Returns an ``(n-1, 2)`` array
    of ``(i, j)`` with ``i < j``.
    """
    n = dist.shape[0]
    if n < 2:
        return np.zeros((0, 2), dtype=int)
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best_w = dist[0].astype(float).copy()
    best_u = np.zeros(n, dtype=int)
    best_w[0] = np.inf
    idx = np.arange(n)
    edges = np.empty((n - 1, 2), dtype=int)
    for k in range(n - 1):
        cand = np.nonzero(~in_tree)[0]
        w = best_w[cand]
        tied = cand[w == w.min()]
        u = best_u[tied]
        lo, hi = np.minimum(u, tied), np.maximum(u, tied)
        pick = np.lexsort((hi, lo))[0]
        v = tied[pick]
        edges[k] = (lo[pick], hi[pick])
        in_tree[v] = True
        best_w[v] = np.inf
        # relax: does v offer a smaller (weight, key) edge to each outside vertex?
        dv = dist[v]
        out = ~in_tree
        nlo, nhi = np.minimum(v, idx), np.maximum(v, idx)
        olo, ohi = np.minimum(best_u, idx), np.maximum(best_u, idx)
        better = out & ((dv < best_w) | ((dv == best_w) & ((nlo < olo) | ((nlo == olo) & (nhi < ohi)))))
        best_w[better] = dv[better]
        best_u[better] = v
    return edges


def fr_moments_printed(n0: int, n1: int, w: float) -> tuple[float, float]:
    """Mean and variance of R exactly as printed with the runs statistic.

    Kept for reference only: the printed variance is far smaller than the
    permutation variance of the cross-edge count (see tests).
    """
    n = n0 + n1
    mean = 2 * n0 * n1 / (n - 1)
    var = 2 * n0 * n1 / (n * (n - 1)) * (1 + (w - (n - 1)) / (2 * (n - 2)))
    return mean, var


def fr_moments(n0: int, n1: int, adjacent_pairs: int, n_edges: int | None = None) -> tuple[float, float]:
    """Permutation mean and variance of the cross-edge count of a fixed tree.

    ``adjacent_pairs`` is the number of unordered edge pairs sharing a node.
    """
    n = n0 + n1
    e = n - 1 if n_edges is None else n_edges
    p1 = 2 * n0 * n1 / (n * (n - 1))
    mean = e * p1
    if n < 4:
        q_dis = 0.0
    else:
        q_dis = 4 * n0 * (n0 - 1) * n1 * (n1 - 1) / (n * (n - 1) * (n - 2) * (n - 3))
    q_adj = n0 * n1 / (n * (n - 1)) if n > 2 else 0.0
    disjoint = e * (e - 1) / 2 - adjacent_pairs
    var = e * p1 * (1 - p1) + 2 * (adjacent_pairs * (q_adj - p1 ** 2) + disjoint * (q_dis - p1 ** 2))
    return mean, var


def friedman_rafsky_test(d0, d1, hyp: Hypothesis = Hypothesis(),
                         n_permutations: int = 1000, seed: int = 0) -> TestResult:
    """Friedman-Rafsky MST runs test; few cross-sample edges signal separation.

    The standardised statistic uses the exact permutation moments of the
    cross-edge count for the observed tree and is compared with the lower
    normal tail. The permutation p-value and the moments from the printed
    formulas are reported in ``details``.
    """
    x = as_points(d0, "d0")
    y = as_points(d1, "d1")
    n0, n1 = len(x), len(y)
    n = n0 + n1
    if n < 4:
        raise TooFewSamples("Friedman-Rafsky needs at least 4 pooled points")
    if n0 < 1 or n1 < 1:
        raise TooFewSamples("both samples must be non-empty")
    pooled = np.vstack([x, y])
    if np.all(pooled == pooled[0]):
        raise DegeneratePoints("all pooled points are identical")
    edges = minimum_spanning_tree(cdist(pooled, pooled))
    labels = np.r_[np.ones(n0, bool), np.zeros(n1, bool)]
    r = int(np.sum(labels[edges[:, 0]] != labels[edges[:, 1]]))
    deg = np.bincount(edges.ravel(), minlength=n)
    adjacent = int(np.sum(deg * (deg - 1) // 2))
    mean, var = fr_moments(n0, n1, adjacent)
    z = (r - mean) / math.sqrt(var) if var > 0 else 0.0
    pm, pv = fr_moments_printed(n0, n1, adjacent)

    from .permutation import permutation_masks
    null = np.empty(n_permutations)
    for start in range(0, n_permutations, 256):
        stop = min(n_permutations, start + 256)
        m = permutation_masks(seed, start, stop, n0, n)
        null[start:stop] = np.sum(m[:, edges[:, 0]] != m[:, edges[:, 1]], axis=1)
    p_perm = float((1 + np.sum(null <= r)) / (1 + n_permutations))

    details = {
        "cross_edges": r,
        "adjacent_edge_pairs": adjacent,
        "mean_R": mean,
        "var_R": var,
        "printed_mean_R": pm,
        "printed_var_R": pv,
        "permutation_p_value": p_perm,
        "n_permutations": n_permutations,
        "seed": seed,
    }
    return decide(z, Normal(), hyp, method="friedman_rafsky", n0=n0, n1=n1, sidedness="less",
                  notes="normal null with exact permutation moments of the cross-edge count",
                  details=details)


# ---------------------------------------------------------------------------
# Maximum mean discrepancy
# ---------------------------------------------------------------------------

MEDIAN_SUBSAMPLE = 1000


@dataclass(frozen=True)
class KernelSpec:
    family: Literal["gaussian_rbf"] = "gaussian_rbf"
    bandwidth: float | Literal["median_heuristic"] = "median_heuristic"

    def __post_init__(self):
        if self.family != "gaussian_rbf":
            raise ValueError(f"unsupported kernel family {self.family!r}")
        if self.bandwidth != "median_heuristic" and not (
                isinstance(self.bandwidth, (int, float)) and self.bandwidth > 0):
            raise ValueError("bandwidth must be positive or 'median_heuristic'")

    sup = 1.0  # K: upper bound of the kernel


def median_heuristic(pooled: np.ndarray) -> float:
    """Median of the non-zero pairwise distances (on <= 1000 evenly spaced rows)."""
    pts = as_points(pooled)
    if len(pts) > MEDIAN_SUBSAMPLE:
        pts = pts[np.linspace(0, len(pts) - 1, MEDIAN_SUBSAMPLE).astype(int)]
    d = pdist(pts)
    d = d[d > 0]
    if d.size == 0:
        raise BandwidthUndefined("all points are identical; no non-zero distance")
    return float(np.median(d))


def resolve_bandwidth(kernel: KernelSpec, pooled) -> float:
    if kernel.bandwidth == "median_heuristic":
        return median_heuristic(pooled)
    return float(kernel.bandwidth)


def gaussian_gram(x: np.ndarray, y: np.ndarray, bandwidth: float) -> np.ndarray:
    return np.exp(-cdist(x, y, "sqeuclidean") / (2.0 * bandwidth ** 2))


def mmd_biased(d0, d1, bandwidth: float) -> float:
    """Biased empirical MMD (square root of the three-term V-statistic)."""
    x = canonical_order(as_points(d0, "d0"))
    y = canonical_order(as_points(d1, "d1"))
    m, n = len(x), len(y)
    kxx = gaussian_gram(x, x, bandwidth).sum() / m ** 2
    kxy = gaussian_gram(x, y, bandwidth).sum() / (m * n)
    kyy = gaussian_gram(y, y, bandwidth).sum() / n ** 2
    return math.sqrt(max(0.0, kxx - 2.0 * kxy + kyy))


def mmd_threshold(m: int, alpha: float, k_sup: float = 1.0) -> float:
    """Acceptance bound ``sqrt(2K/m) * (1 + sqrt(2 log(1/alpha)))``."""
    return math.sqrt(2.0 * k_sup / m) * (1.0 + math.sqrt(2.0 * math.log(1.0 / alpha)))


class MMDStatistic:
    """Biased MMD with the bandwidth frozen from the pooled sample."""

    name = "mmd"

    def __init__(self, kernel: KernelSpec = KernelSpec()):
        self.kernel = kernel

    def __call__(self, d0, d1) -> float:
        pooled = np.vstack([as_points(d0), as_points(d1)])
        return mmd_biased(d0, d1, resolve_bandwidth(self.kernel, pooled))

    def prepare(self, pooled):
        pts = as_points(pooled, "pooled")
        bw = resolve_bandwidth(self.kernel, pts)
        gram = gaussian_gram(pts, pts, bw)

        def evaluate(masks):
            n0 = masks.sum(axis=1)
            n1 = masks.shape[1] - n0
            s_aa, s_ab, s_bb = _block_sums(gram, masks)
            return np.sqrt(np.maximum(0.0, s_aa / n0 ** 2 - 2.0 * s_ab / (n0 * n1) + s_bb / n1 ** 2))

        evaluate.bandwidth = bw
        return evaluate


def mmd_test(d0, d1, kernel: KernelSpec = KernelSpec(), hyp: Hypothesis = Hypothesis(),
             n_permutations: int = 1000, seed: int = 0,
             calibration: Literal["bound", "permutation"] = "bound") -> TestResult:
    """Kernel two-sample test on the biased MMD estimate.

    ``calibration="bound"`` rejects when MMD_b reaches the distribution-free
    bound with K = 1 and m = min(n0, n1); the permutation p-value is then
    reported in ``details`` only. ``calibration="permutation"`` decides by
    the permutation p-value.
    """
    x = as_points(d0, "d0")
    y = as_points(d1, "d1")
    if len(x) < 2 or len(y) < 2:
        raise TooFewSamples("MMD needs at least 2 points per sample")
    if x.shape[1] != y.shape[1]:
        raise ValueError("samples have different dimensions")
    pooled = np.vstack([x, y])
    bw = resolve_bandwidth(kernel, pooled)
    frozen = KernelSpec(kernel.family, bw)
    stat = mmd_biased(x, y, bw)
    threshold = mmd_threshold(min(len(x), len(y)), hyp.alpha, KernelSpec.sup)
    t_obs, null = permutation_null(x, y, PermutationPlan(MMDStatistic(frozen), n_permutations, seed))
    p_perm = Empirical(null).sf(t_obs)
    details = {"bandwidth": bw, "bound_threshold": threshold, "permutation_p_value": p_perm,
               "n_permutations": n_permutations, "seed": seed,
               "null_quantiles": null_summary(null)}
    if calibration == "bound":
        return TestResult("mmd[bound]", stat, bool(stat >= threshold), hyp.alpha, "greater",
                          critical_value=threshold, n0=len(x), n1=len(y),
                          notes="reject when MMD_b >= sqrt(2K/m)(1+sqrt(2 log(1/alpha)))",
                          details=details)
    if calibration == "permutation":
        return TestResult("mmd[permutation]", stat, bool(p_perm < hyp.alpha), hyp.alpha, "greater",
                          p_value=p_perm, critical_value=threshold, n0=len(x), n1=len(y),
                          notes=f"permutation null, B={n_permutations}, seed={seed}",
                          details=details)
    raise ValueError(f"unknown calibration {calibration!r}")
