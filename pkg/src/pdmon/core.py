"""Shared data model: schemas, datasets, hypotheses, test results and the
reference-distribution decision rule used by every test in the package."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, asdict
from enum import Enum
from typing import Any, Iterable, Literal, Mapping, Sequence

import numpy as np
from scipy import special

from .errors import (
    EmptySample,
    NonBinaryLabel,
    NonFiniteValue,
    ParseError,
    SchemaError,
    SchemaMismatch,
    UnknownNullModel,
)

Sidedness = Literal["two_sided", "greater", "less"]
SIDEDNESS = ("two_sided", "greater", "less")
WINDOWS = ("t0", "t1")


class Role(str, Enum):
    INPUT = "input_feature"
    CLINICAL = "clinical_feature"
    LABEL = "label"
    PREDICTION = "prediction"


class Kind(str, Enum):
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"


FEATURE_ROLES = (Role.INPUT, Role.CLINICAL)


@dataclass(frozen=True)
class Column:
    name: str
    role: Role
    kind: Kind = Kind.NUMERIC

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))
        object.__setattr__(self, "kind", Kind(self.kind))
        if self.role in (Role.LABEL, Role.PREDICTION) and self.kind is not Kind.NUMERIC:
            raise SchemaError(f"{self.role.value} column {self.name!r} must be numeric 0/1")


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]

    def __post_init__(self):
        cols = tuple(c if isinstance(c, Column) else Column(**c) for c in self.columns)
        object.__setattr__(self, "columns", cols)
        names = [c.name for c in cols]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate column names: {dupes}")
        for role in (Role.LABEL, Role.PREDICTION):
            if sum(c.role is role for c in cols) > 1:
                raise SchemaError(f"at most one {role.value} column allowed")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def __getitem__(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(c.name == name for c in self.columns)

    def with_role(self, *roles: Role) -> list[Column]:
        return [c for c in self.columns if c.role in roles]

    @property
    def features(self) -> list[Column]:
        """Input and clinical feature columns, in schema order."""
        return self.with_role(*FEATURE_ROLES)

    @property
    def label(self) -> str | None:
        cols = self.with_role(Role.LABEL)
        return cols[0].name if cols else None

    @property
    def prediction(self) -> str | None:
        cols = self.with_role(Role.PREDICTION)
        return cols[0].name if cols else None

    def drop(self, *names: str) -> "Schema":
        return Schema(tuple(c for c in self.columns if c.name not in names))

    def to_dict(self) -> dict:
        return {"columns": [{"name": c.name, "role": c.role.value, "kind": c.kind.value}
                            for c in self.columns]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Schema":
        return cls(tuple(Column(**c) for c in d["columns"]))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """One monitoring window: column arrays keyed by schema name.

    Numeric columns are float64, label/prediction columns int8 in {0, 1},
    categorical columns object arrays of interned strings. Arrays are
    read-only; derive new datasets with :meth:`subset`.
    """

    schema: Schema
    data: Mapping[str, np.ndarray]
    window: str = "t0"
    timestamp: str = ""

    def __post_init__(self):
        if self.window not in WINDOWS:
            raise SchemaError(f"window must be one of {WINDOWS}, got {self.window!r}")
        if set(self.data) != set(self.schema.names):
            missing = sorted(set(self.schema.names) - set(self.data))
            extra = sorted(set(self.data) - set(self.schema.names))
            raise SchemaMismatch(f"columns missing {missing}, unexpected {extra}")
        lengths = {len(v) for v in self.data.values()}
        if len(lengths) != 1:
            raise SchemaMismatch("columns have unequal lengths")
        if lengths.pop() < 1:
            raise EmptySample("a dataset needs at least one row")
        frozen = {}
        for col in self.schema.columns:
            frozen[col.name] = _readonly(_coerce_array(self.data[col.name], col))
        object.__setattr__(self, "data", frozen)

    @property
    def n(self) -> int:
        return len(next(iter(self.data.values())))

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[name]

    def column(self, name: str) -> np.ndarray:
        return self.data[name]

    @property
    def has_labels(self) -> bool:
        return self.schema.label is not None and self.schema.prediction is not None

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.schema, {k: v[rows] for k, v in self.data.items()},
                       self.window, self.timestamp)

    def with_window(self, window: str, timestamp: str | None = None) -> "Dataset":
        return Dataset(self.schema, self.data, window,
                       self.timestamp if timestamp is None else timestamp)

    def drop(self, *names: str) -> "Dataset":
        schema = self.schema.drop(*names)
        return Dataset(schema, {k: self.data[k] for k in schema.names}, self.window, self.timestamp)

    def to_rows(self) -> list[dict[str, Any]]:
        out = []
        cols = [(c, self.data[c.name]) for c in self.schema.columns]
        for i in range(self.n):
            row = {}
            for c, arr in cols:
                v = arr[i]
                if c.kind is Kind.CATEGORICAL:
                    row[c.name] = str(v)
                elif c.role in (Role.LABEL, Role.PREDICTION):
                    row[c.name] = int(v)
                else:
                    row[c.name] = float(v)
            out.append(row)
        return out

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.schema == other.schema and self.window == other.window
                and self.timestamp == other.timestamp
                and all(np.array_equal(self.data[k], other.data[k]) for k in self.schema.names))

    __hash__ = None


def _coerce_array(values, col: Column) -> np.ndarray:
    if col.kind is Kind.CATEGORICAL:
        if isinstance(values, np.ndarray) and values.dtype == object:
            return values
        return np.array([sys.intern(str(v)) for v in values], dtype=object)
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValue(f"column {col.name!r} holds non-finite values")
    if col.role in (Role.LABEL, Role.PREDICTION):
        if not np.all((arr == 0) | (arr == 1)):
            raise NonBinaryLabel(f"column {col.name!r} must be 0/1")
        return arr.astype(np.int8)
    return arr


_TRUE = {"1", "1.0", "true", "True"}
_FALSE = {"0", "0.0", "false", "False"}


def _parse_binary(v, name, row):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, str):
        s = v.strip()
        if s in _TRUE:
            return 1
        if s in _FALSE:
            return 0
        raise NonBinaryLabel(f"row {row}, column {name!r}: {v!r} is not 0/1")
    try:
        x = float(v)
    except (TypeError, ValueError):
        raise NonBinaryLabel(f"row {row}, column {name!r}: {v!r} is not 0/1") from None
    if x == 0 or x == 1:
        return int(x)
    raise NonBinaryLabel(f"row {row}, column {name!r}: {v!r} is not 0/1")


def _parse_float(v, name, row):
    if isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool):
        x = float(v)
    else:
        try:
            x = float(str(v).strip())
        except ValueError:
            raise ParseError(f"row {row}, column {name!r}: cannot parse {v!r} as a number",
                             row=row, column=name) from None
    if not math.isfinite(x):
        raise NonFiniteValue(f"row {row}, column {name!r}: non-finite value {v!r}")
    return x


def validate_dataset(raw_rows: Iterable[Mapping[str, Any]], schema: Schema,
                     window: str = "t0", timestamp: str = "") -> Dataset:
    """Check raw records against ``schema`` and build a :class:`Dataset`.

    Rows are 0-indexed in error messages. Label and prediction cells are
    coerced to 0/1 (accepting booleans, ``"0"``/``"1"`` and 0.0/1.0).
    """
    expected = set(schema.names)
    cols: dict[str, list] = {name: [] for name in schema.names}
    for i, row in enumerate(raw_rows):
        keys = set(row)
        if keys != expected:
            missing = sorted(expected - keys)
            extra = sorted(keys - expected)
            raise SchemaMismatch(f"row {i}: missing columns {missing}, unexpected columns {extra}")
        for c in schema.columns:
            v = row[c.name]
            if c.kind is Kind.CATEGORICAL:
                cols[c.name].append(v)
            elif c.role in (Role.LABEL, Role.PREDICTION):
                cols[c.name].append(_parse_binary(v, c.name, i))
            else:
                cols[c.name].append(_parse_float(v, c.name, i))
    if not cols or not next(iter(cols.values())):
        raise EmptySample("a dataset needs at least one row")
    return Dataset(schema, cols, window, timestamp)


@dataclass(frozen=True)
class Hypothesis:
    """Significance level, alternative direction and optional margin.

    ``sidedness`` names the alternative relative to (t0 - t1): ``greater``
    means the t0 quantity exceeds the t1 quantity.
    """

    alpha: float = 0.05
    sidedness: Sidedness = "two_sided"
    tau: float | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.sidedness not in SIDEDNESS:
            raise ValueError(f"sidedness must be one of {SIDEDNESS}, got {self.sidedness!r}")
        if self.tau is not None and not math.isfinite(self.tau):
            raise ValueError("tau must be finite")

    def replace(self, **kw) -> "Hypothesis":
        d = asdict(self)
        d.update(kw)
        return Hypothesis(**d)


@dataclass(frozen=True)
class TestResult:
    method: str
    statistic: float
    reject_h0: bool
    alpha: float
    sidedness: str = "two_sided"
    p_value: float | None = None
    critical_value: float | None = None
    df: float | None = None
    n0: int | None = None
    n1: int | None = None
    notes: str = ""
    details: dict = field(default_factory=dict)

    __test__ = False  # keep pytest from collecting this class

    def __post_init__(self):
        if self.p_value is None and self.critical_value is None:
            raise ValueError("a TestResult needs a p-value or a critical value")
        if self.p_value is not None and not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "critical_value": self.critical_value,
            "df": self.df,
            "reject_h0": self.reject_h0,
            "alpha": self.alpha,
            "sidedness": self.sidedness,
            "n0": self.n0,
            "n1": self.n1,
            "notes": self.notes,
            "details": self.details,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TestResult":
        return cls(**d)


# ---------------------------------------------------------------------------
# Reference distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Normal:
    name = "normal"
    symmetric = True

    def cdf(self, x):
        return float(special.ndtr(x))

    def sf(self, x):
        return float(special.ndtr(-x))

    def ppf(self, q):
        return float(special.ndtri(q))

    def isf(self, q):
        return -float(special.ndtri(q))


@dataclass(frozen=True)
class StudentT:
    df: float
    name = "t"
    symmetric = True

    def cdf(self, x):
        return float(special.stdtr(self.df, x))

    def sf(self, x):
        return float(special.stdtr(self.df, -x))

    def ppf(self, q):
        return float(special.stdtrit(self.df, q))

    def isf(self, q):
        return -float(special.stdtrit(self.df, q))


@dataclass(frozen=True)
class FDist:
    df1: float
    df2: float
    name = "f"
    symmetric = False

    def cdf(self, x):
        return float(special.fdtr(self.df1, self.df2, max(x, 0.0)))

    def sf(self, x):
        return float(special.fdtrc(self.df1, self.df2, max(x, 0.0)))

    def ppf(self, q):
        return float(special.fdtri(self.df1, self.df2, q))

    def isf(self, q):
        return float(special.fdtri(self.df1, self.df2, 1.0 - q))


@dataclass(frozen=True)
class ChiSquare:
    df: float
    name = "chi2"
    symmetric = False

    def cdf(self, x):
        return float(special.chdtr(self.df, max(x, 0.0)))

    def sf(self, x):
        return float(special.chdtrc(self.df, max(x, 0.0)))

    def ppf(self, q):
        return float(special.chdtri(self.df, 1.0 - q))

    def isf(self, q):
        return float(special.chdtri(self.df, q))


class Empirical:
    """Null distribution given by sampled statistic values (e.g. permutations).

    Tail probabilities use the add-one convention ``(1 + #tail) / (1 + B)``.
    """

    name = "empirical"
    symmetric = False

    def __init__(self, samples: Sequence[float], rtol: float = 1e-12):
        s = np.sort(np.asarray(samples, dtype=float))
        if s.size == 0:
            raise ValueError("empirical null needs at least one sample")
        self.samples = s
        self.rtol = rtol

    def _tol(self, x):
        return self.rtol * max(1.0, abs(x))

    def sf(self, x):
        k = self.samples.size - np.searchsorted(self.samples, x - self._tol(x), side="left")
        return (1.0 + k) / (1.0 + self.samples.size)

    def cdf(self, x):
        k = np.searchsorted(self.samples, x + self._tol(x), side="right")
        return (1.0 + k) / (1.0 + self.samples.size)

    def ppf(self, q):
        return float(np.quantile(self.samples, q))

    def isf(self, q):
        return float(np.quantile(self.samples, 1.0 - q))


NULL_MODELS = {"normal": Normal, "t": StudentT, "f": FDist, "chi2": ChiSquare}


def null_model(name: str, *params) -> Any:
    """Look up a reference distribution by name (``normal``, ``t``, ``f``, ``chi2``)."""
    try:
        return NULL_MODELS[name](*params)
    except KeyError:
        raise UnknownNullModel(f"unknown null model {name!r}") from None


def tail_probability(statistic: float, null, sidedness: str,
                     alpha: float = 0.05) -> tuple[float, float | None, dict]:
    """p-value and critical value of ``statistic`` under ``null``.

    Returns ``(p, critical, extra)`` where ``extra`` may hold a lower
    critical value for two-sided tests on asymmetric nulls.
    """
    if not hasattr(null, "sf"):
        raise UnknownNullModel(f"unsupported null model {null!r}")
    extra = {}
    if sidedness == "greater":
        p, crit = null.sf(statistic), null.isf(alpha)
    elif sidedness == "less":
        p, crit = null.cdf(statistic), null.ppf(alpha)
    elif sidedness == "two_sided":
        if null.symmetric:
            p, crit = 2.0 * null.sf(abs(statistic)), null.isf(alpha / 2)
        else:
            p = 2.0 * min(null.cdf(statistic), null.sf(statistic))
            crit = null.isf(alpha / 2)
            extra["critical_value_lower"] = null.ppf(alpha / 2)
    else:
        raise ValueError(f"bad sidedness {sidedness!r}")
    return min(1.0, max(0.0, p)), crit, extra


def decide(statistic: float, null, hypothesis: Hypothesis, *, method: str = "",
           n0: int | None = None, n1: int | None = None, df: float | None = None,
           notes: str = "", details: dict | None = None,
           sidedness: str | None = None) -> TestResult:
    """Turn a statistic into a :class:`TestResult` under a reference null.

    ``null`` is one of :class:`Normal`, :class:`StudentT`, :class:`FDist`,
    :class:`ChiSquare`, :class:`Empirical` (or a ``(name, *params)`` tuple).
    Rejection is ``p < alpha``. ``sidedness`` overrides the hypothesis
    direction for tests whose rejection region is fixed (e.g. chi-square).
    """
    if isinstance(null, tuple):
        null = null_model(*null)
    side = sidedness or hypothesis.sidedness
    if math.isnan(statistic):
        raise ValueError("statistic is NaN")
    p, crit, extra = tail_probability(statistic, null, side, hypothesis.alpha)
    d = dict(details or {})
    d.update(extra)
    d.setdefault("null", null.name)
    if df is None:
        df = getattr(null, "df", None) if not isinstance(null, FDist) else null.df1
    if isinstance(null, FDist):
        d.setdefault("df2", null.df2)
    return TestResult(method=method, statistic=float(statistic), reject_h0=bool(p < hypothesis.alpha),
                      alpha=hypothesis.alpha, sidedness=side, p_value=p, critical_value=crit,
                      df=None if df is None else float(df), n0=n0, n1=n1, notes=notes, details=d)
