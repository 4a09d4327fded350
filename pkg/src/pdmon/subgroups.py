"""Subgroup search over conjunctions of simple feature predicates.

Atoms are either ``feature == level`` or ``lo <= feature < hi`` with edges
at pooled quantiles (the last bin is closed). A subgroup is a conjunction
of atoms on distinct features; it is feasible when it holds at least ``r``
rows in each window. Beam search grows conjunctions one atom per level;
an exhaustive enumerator over the same space serves as a reference.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np

from .core import Dataset, Kind, Schema
from .divergence import energy_distance
from .encoding import Encoder
from .errors import NoFeasibleSubgroup
from .nonparametric import gaussian_gram, median_heuristic
from .performance import MetricKind, _metric_array, confusion, correctness_indicator


@dataclass(frozen=True, order=False)
class PredicateAtom:
    feature: str
    form: Literal["categorical_equals", "numeric_in"]
    value: str | None = None
    lo: float | None = None
    hi: float | None = None
    closed: bool = False  # include hi (last quantile bin)

    def __post_init__(self):
        if self.form == "categorical_equals":
            if self.value is None:
                raise ValueError("categorical atom needs a value")
        elif self.form == "numeric_in":
            if self.lo is None or self.hi is None or self.lo > self.hi:
                raise ValueError("numeric atom needs lo <= hi")
        else:
            raise ValueError(f"unknown atom form {self.form!r}")

    @property
    def key(self) -> tuple:
        if self.form == "categorical_equals":
            return (self.feature, 0, self.value, 0.0)
        return (self.feature, 1, self.lo, self.hi)

    def mask(self, d: Dataset) -> np.ndarray:
        col = d[self.feature]
        if self.form == "categorical_equals":
            return col == self.value
        upper = col <= self.hi if self.closed else col < self.hi
        return (col >= self.lo) & upper

    def __str__(self):
        if self.form == "categorical_equals":
            return f"{self.feature}={self.value}"
        return f"{self.feature} in [{self.lo:.6g}, {self.hi:.6g}{']' if self.closed else ')'}"

    def to_dict(self) -> dict:
        if self.form == "categorical_equals":
            return {"feature": self.feature, "form": self.form, "value": self.value}
        return {"feature": self.feature, "form": self.form, "lo": self.lo, "hi": self.hi,
                "closed": self.closed}

    @classmethod
    def from_dict(cls, d) -> "PredicateAtom":
        return cls(**d)


@dataclass(frozen=True)
class SubgroupFinding:
    atoms: tuple[PredicateAtom, ...]
    support0: int
    support1: int
    objective: float
    metric0: float | None = None
    metric1: float | None = None

    @property
    def label(self) -> str:
        return " AND ".join(str(a) for a in self.atoms)

    def to_dict(self) -> dict:
        return {"atoms": [a.to_dict() for a in self.atoms], "description": self.label,
                "support0": self.support0, "support1": self.support1,
                "objective": self.objective, "metric0": self.metric0, "metric1": self.metric1}

    @classmethod
    def from_dict(cls, d) -> "SubgroupFinding":
        return cls(tuple(PredicateAtom.from_dict(a) for a in d["atoms"]), d["support0"],
                   d["support1"], d["objective"], d.get("metric0"), d.get("metric1"))


def build_atoms(schema: Schema, d0: Dataset, d1: Dataset, bins: int = 4,
                features=None) -> list[PredicateAtom]:
    """Level atoms for categorical features, pooled-quantile bins for numeric ones."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    names = features if features is not None else [c.name for c in schema.features]
    atoms = []
    for name in names:
        col = schema[name]
        if col.kind is Kind.CATEGORICAL:
            for level in sorted(set(d0[name]) | set(d1[name])):
                atoms.append(PredicateAtom(name, "categorical_equals", value=str(level)))
            continue
        pooled = np.concatenate([d0[name], d1[name]])
        edges = np.unique(np.quantile(pooled, np.linspace(0, 1, bins + 1)))
        if edges.size == 1:
            atoms.append(PredicateAtom(name, "numeric_in", lo=float(edges[0]), hi=float(edges[0]),
                                       closed=True))
            continue
        for i in range(edges.size - 1):
            atoms.append(PredicateAtom(name, "numeric_in", lo=float(edges[i]), hi=float(edges[i + 1]),
                                       closed=i == edges.size - 2))
    return sorted(atoms, key=lambda a: a.key)


# ---------------------------------------------------------------------------
# search
# ---------------------------------------------------------------------------

Scorer = Callable[[np.ndarray, np.ndarray], "tuple[float, float | None, float | None] | None"]


@dataclass
class _Space:
    atoms: list[PredicateAtom]
    masks0: np.ndarray  # (n_atoms, n0)
    masks1: np.ndarray
    r: int
    score: Scorer
    cache: dict = field(default_factory=dict)

    def evaluate(self, combo: tuple[int, ...]) -> SubgroupFinding | None:
        if combo in self.cache:
            return self.cache[combo]
        m0 = np.logical_and.reduce(self.masks0[list(combo)], axis=0)
        m1 = np.logical_and.reduce(self.masks1[list(combo)], axis=0)
        s0, s1 = int(m0.sum()), int(m1.sum())
        out = None
        if s0 >= self.r and s1 >= self.r:
            scored = self.score(m0, m1)
            if scored is not None and math.isfinite(scored[0]):
                obj, a, b = scored
                out = SubgroupFinding(tuple(self.atoms[i] for i in combo), s0, s1, float(obj), a, b)
        self.cache[combo] = out
        return out


def _rank_key(f: SubgroupFinding):
    return (-f.objective, -min(f.support0, f.support1), tuple(a.key for a in f.atoms))


def _distinct_features(space: _Space, combo) -> bool:
    feats = [space.atoms[i].feature for i in combo]
    return len(set(feats)) == len(feats)


def _beam_search(space: _Space, depth: int, beam: int) -> list[SubgroupFinding]:
    found: dict[tuple, SubgroupFinding] = {}
    frontier = []
    for i in range(len(space.atoms)):
        f = space.evaluate((i,))
        if f is not None:
            found[(i,)] = f
            frontier.append(((i,), f))
    for _ in range(depth - 1):
        frontier.sort(key=lambda cf: _rank_key(cf[1]))
        survivors = [c for c, _ in frontier[:beam]]
        children = set()
        for combo in survivors:
            for j in range(len(space.atoms)):
                child = tuple(sorted(set(combo) | {j}))
                if len(child) == len(combo) + 1 and _distinct_features(space, child):
                    children.add(child)
        frontier = []
        for child in sorted(children):
            f = space.evaluate(child)
            if f is not None:
                found[child] = f
                frontier.append((child, f))
        if not frontier:
            break
    return list(found.values())


def _exhaustive(space: _Space, depth: int) -> list[SubgroupFinding]:
    found = []
    for size in range(1, depth + 1):
        for combo in itertools.combinations(range(len(space.atoms)), size):
            if _distinct_features(space, combo):
                f = space.evaluate(combo)
                if f is not None:
                    found.append(f)
    return found


def _run(space: _Space, depth: int, beam: int, top_k: int, strategy: str) -> list[SubgroupFinding]:
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if beam < 1 or top_k < 1:
        raise ValueError("beam and top_k must be >= 1")
    if strategy == "beam":
        found = _beam_search(space, depth, beam)
    elif strategy == "exhaustive":
        found = _exhaustive(space, depth)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    if not found:
        raise NoFeasibleSubgroup(f"no conjunction reaches support {space.r} in both windows")
    return sorted(found, key=_rank_key)[:top_k]


def _space(d0, d1, atoms, r, score) -> _Space:
    m0 = np.array([a.mask(d0) for a in atoms], dtype=bool).reshape(len(atoms), d0.n)
    m1 = np.array([a.mask(d1) for a in atoms], dtype=bool).reshape(len(atoms), d1.n)
    return _Space(atoms, m0, m1, r, score)


def scan_degradation(d0: Dataset, d1: Dataset, kind: MetricKind | str = MetricKind.ACCURACY, *,
                     r: int = 30, depth: int = 2, beam: int = 16, top_k: int = 5, bins: int = 4,
                     features=None, strategy: Literal["beam", "exhaustive"] = "beam"
                     ) -> list[SubgroupFinding]:
    """Subgroups with the largest drop M^G_t0 - M^G_t1 of a performance metric."""
    if r < 1:
        raise ValueError("r must be >= 1")
    kind = MetricKind(kind)
    cells0 = _cells(d0)
    cells1 = _cells(d1)

    def score(m0, m1):
        a = _metric_array(cells0[m0].sum(axis=0)[None, :], kind)[0]
        b = _metric_array(cells1[m1].sum(axis=0)[None, :], kind)[0]
        if np.isnan(a) or np.isnan(b):
            return None
        return a - b, float(a), float(b)

    atoms = build_atoms(d0.schema, d0, d1, bins, features)
    return _run(_space(d0, d1, atoms, r, score), depth, beam, top_k, strategy)


def _cells(d: Dataset) -> np.ndarray:
    """Per-row one-hot of (tp, tn, fp, fn)."""
    confusion(d)  # validates columns
    y = d[d.schema.label].astype(bool)
    yh = d[d.schema.prediction].astype(bool)
    return np.stack([y & yh, ~y & ~yh, ~y & yh, y & ~yh], axis=1).astype(np.int64)


def scan_discrepancy(d0: Dataset, d1: Dataset, divergence: Literal["energy", "mmd"] = "energy", *,
                     r: int = 30, depth: int = 2, beam: int = 16, top_k: int = 5, bins: int = 4,
                     features=None, correctness: bool = False, z_scale: float = 1.0,
                     strategy: Literal["beam", "exhaustive"] = "beam") -> list[SubgroupFinding]:
    """Subgroups whose conditional feature distributions differ most between windows.

    Rows are encoded once over both full windows; with ``correctness=True``
    the correctness indicator is appended as a coordinate. For MMD the
    bandwidth is fixed from the full pooled sample.
    """
    if r < 2:
        raise ValueError("r must be >= 2 for divergence objectives")
    enc = Encoder.fit(d0, d1)
    x0, x1 = enc.transform(d0), enc.transform(d1)
    if correctness:
        x0 = np.hstack([x0, z_scale * correctness_indicator(d0)[:, None]])
        x1 = np.hstack([x1, z_scale * correctness_indicator(d1)[:, None]])
    if divergence == "energy":
        def score(m0, m1):
            return energy_distance(x0[m0], x1[m1]), None, None
    elif divergence == "mmd":
        bw = median_heuristic(np.vstack([x0, x1]))

        def score(m0, m1):
            a, b = x0[m0], x1[m1]
            v = (gaussian_gram(a, a, bw).mean() - 2 * gaussian_gram(a, b, bw).mean()
                 + gaussian_gram(b, b, bw).mean())
            return math.sqrt(max(0.0, v)), None, None
    else:
        raise ValueError(f"unknown divergence {divergence!r}")
    atoms = build_atoms(d0.schema, d0, d1, bins, features)
    return _run(_space(d0, d1, atoms, r, score), depth, beam, top_k, strategy)
