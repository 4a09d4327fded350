"""Numeric encoding of two windows for joint multivariate tests.

Numeric columns are standardised with the pooled mean and SD so neither
window is privileged; categorical columns become one-hot blocks over the
levels seen in either window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dataset, Kind
from .errors import MissingColumn


@dataclass(frozen=True)
class Encoder:
    columns: tuple[str, ...]
    centers: dict
    scales: dict
    levels: dict  # categorical column -> sorted tuple of levels

    @classmethod
    def fit(cls, d0: Dataset, d1: Dataset, columns=None) -> "Encoder":
        if columns is None:
            columns = [c.name for c in d0.schema.features]
        centers, scales, levels = {}, {}, {}
        for name in columns:
            if name not in d0.schema or name not in d1.schema:
                raise MissingColumn(f"column {name!r} absent from a window")
            if d0.schema[name].kind is Kind.CATEGORICAL:
                levels[name] = tuple(sorted(set(d0[name]) | set(d1[name])))
            else:
                pooled = np.concatenate([d0[name], d1[name]]).astype(float)
                centers[name] = float(pooled.mean())
                sd = float(pooled.std(ddof=1)) if pooled.size > 1 else 0.0
                scales[name] = sd if sd > 0 else 1.0
        return cls(tuple(columns), centers, scales, levels)

    @property
    def dimension(self) -> int:
        return sum(len(self.levels[c]) if c in self.levels else 1 for c in self.columns)

    def transform(self, d: Dataset) -> np.ndarray:
        blocks = []
        for name in self.columns:
            col = d[name]
            if name in self.levels:
                lv = self.levels[name]
                blocks.append((col[:, None] == np.array(lv, dtype=object)[None, :]).astype(float))
            else:
                blocks.append(((col - self.centers[name]) / self.scales[name])[:, None])
        if not blocks:
            return np.zeros((d.n, 0))
        return np.hstack(blocks)


def encode_pair(d0: Dataset, d1: Dataset, columns=None) -> tuple[np.ndarray, np.ndarray]:
    enc = Encoder.fit(d0, d1, columns)
    return enc.transform(d0), enc.transform(d1)
