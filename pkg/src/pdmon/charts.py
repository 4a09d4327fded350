"""Univariate control charts: Shewhart, CUSUM and EWMA.

Each update is a pure function ``(state, x, params) -> (state, signal)``.
Charts never reset themselves after an alarm; callers decide that.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Literal

import numpy as np

ChartKind = Literal["shewhart", "cusum", "ewma"]


@dataclass(frozen=True)
class ChartParams:
    mu0: float
    sigma0: float
    L: float = 3.0
    k: float | None = None  # CUSUM reference value; defaults to 0.5 * sigma0
    h: float | None = None  # CUSUM limit; defaults to 5 * sigma0
    lam: float = 0.2
    rho: float = 3.0

    def __post_init__(self):
        if not (math.isfinite(self.mu0) and math.isfinite(self.sigma0)):
            raise ValueError("mu0 and sigma0 must be finite")
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be > 0")
        if self.k is None:
            object.__setattr__(self, "k", 0.5 * self.sigma0)
        if self.h is None:
            object.__setattr__(self, "h", 5.0 * self.sigma0)
        if self.L <= 0 or self.rho <= 0:
            raise ValueError("L and rho must be > 0")
        if self.h <= 0:
            raise ValueError("h must be > 0")
        if self.k < 0:
            raise ValueError("k must be >= 0")
        if not 0 < self.lam <= 1:
            raise ValueError("lambda must lie in (0, 1]")

    @classmethod
    def from_baseline(cls, x0, **kw) -> "ChartParams":
        """Estimate mu0 and sigma0 from a baseline window (sample mean and SD)."""
        x0 = np.asarray(x0, dtype=float)
        if x0.size < 2:
            raise ValueError("baseline needs at least 2 observations")
        return cls(mu0=float(x0.mean()), sigma0=float(x0.std(ddof=1)), **kw)

    @property
    def ucl(self) -> float:
        return self.mu0 + self.L * self.sigma0

    @property
    def lcl(self) -> float:
        return self.mu0 - self.L * self.sigma0

    def to_dict(self) -> dict:
        return {"mu0": self.mu0, "sigma0": self.sigma0, "L": self.L, "k": self.k, "h": self.h,
                "lambda": self.lam, "rho": self.rho}

    @classmethod
    def from_dict(cls, d) -> "ChartParams":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        return cls(**d)


@dataclass(frozen=True)
class Signal:
    alarm: bool
    direction: Literal["upper", "lower", ""] = ""
    value: float = 0.0
    upper: float = math.inf
    lower: float = -math.inf

    def __bool__(self):
        return self.alarm


@dataclass(frozen=True)
class ChartState:
    t: int = 0
    s_plus: float = 0.0
    s_minus: float = 0.0
    e: float = 0.0
    last_signal: Signal | None = None

    @classmethod
    def initial(cls, params: ChartParams) -> "ChartState":
        return cls(t=0, s_plus=0.0, s_minus=0.0, e=params.mu0)


def _limits_signal(value: float, upper: float, lower: float) -> Signal:
    if value > upper:
        return Signal(True, "upper", value, upper, lower)
    if value < lower:
        return Signal(True, "lower", value, upper, lower)
    return Signal(False, "", value, upper, lower)


def shewhart_update(state: ChartState, x: float, params: ChartParams):
    sig = _limits_signal(float(x), params.ucl, params.lcl)
    return replace(state, t=state.t + 1, last_signal=sig), sig


def cusum_update(state: ChartState, x: float, params: ChartParams):
    dev = float(x) - params.mu0
    sp = max(0.0, state.s_plus + dev - params.k)
    sm = min(0.0, state.s_minus + dev + params.k)
    if sp > params.h:
        sig = Signal(True, "upper", sp, params.h, -params.h)
    elif sm < -params.h:
        sig = Signal(True, "lower", sm, params.h, -params.h)
    else:
        sig = Signal(False, "", max(sp, -sm), params.h, -params.h)
    return replace(state, t=state.t + 1, s_plus=sp, s_minus=sm, last_signal=sig), sig


def ewma_sigma(t: int, params: ChartParams) -> float:
    """Standard deviation of E_t: sqrt(lam/(2-lam) * (1-(1-lam)^(2t))) * sigma0."""
    lam = params.lam
    return math.sqrt(lam / (2 - lam) * (1 - (1 - lam) ** (2 * t))) * params.sigma0


def ewma_update(state: ChartState, x: float, params: ChartParams):
    t = state.t + 1
    e = params.lam * float(x) + (1 - params.lam) * state.e
    half = params.rho * ewma_sigma(t, params)
    sig = _limits_signal(e, params.mu0 + half, params.mu0 - half)
    return replace(state, t=t, e=e, last_signal=sig), sig


UPDATES = {"shewhart": shewhart_update, "cusum": cusum_update, "ewma": ewma_update}


@dataclass(frozen=True)
class Alarm:
    """One out-of-control excursion: onset step ``t`` and how many steps it lasted."""

    t: int
    chart: str
    direction: str
    value: float
    duration: int = 1

    def to_dict(self) -> dict:
        return {"t": self.t, "chart": self.chart, "direction": self.direction, "value": self.value,
                "duration": self.duration}


def run_chart(stream: Iterable[float], kind: ChartKind, params: ChartParams,
              state: ChartState | None = None) -> tuple[ChartState, list[Alarm]]:
    """Feed a whole stream through one chart.

    Consecutive alarming steps in the same direction form one excursion;
    each excursion is reported once with its 1-based onset step.
    """
    try:
        update = UPDATES[kind]
    except KeyError:
        raise ValueError(f"unknown chart kind {kind!r}") from None
    state = ChartState.initial(params) if state is None else state
    alarms: list[Alarm] = []
    prev = ""
    for x in stream:
        state, sig = update(state, x, params)
        if sig.alarm and sig.direction == prev:
            alarms[-1] = replace(alarms[-1], duration=alarms[-1].duration + 1)
        elif sig.alarm:
            alarms.append(Alarm(state.t, kind, sig.direction, sig.value))
        prev = sig.direction if sig.alarm else ""
    return state, alarms


def first_alarm(stream: Iterable[float], kind: ChartKind, params: ChartParams) -> int | None:
    update = UPDATES[kind]
    state = ChartState.initial(params)
    for x in stream:
        state, sig = update(state, x, params)
        if sig.alarm:
            return state.t
    return None
