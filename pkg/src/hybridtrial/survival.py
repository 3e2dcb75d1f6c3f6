"""Censored exponential survival primitives.

Provides the building blocks used by every analysis method in the package:
the exponential CDF, weighted maximum-likelihood fitting of two-group
proportional-hazards exponential models, and the standard two-sample
log-rank test.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.stats import chi2


class Arm(IntEnum):
    """Arm label for a subject."""

    TRIAL_CONTROL = 0
    TRIAL_EXPERIMENTAL = 1
    EXTERNAL_CONTROL = 2


class DegenerateFitError(ValueError):
    """A group has zero weighted events; the exponential MLE is degenerate."""


@dataclass(frozen=True)
class Subject:
    """One patient record.

    ``accrual_time`` may be negative only for historical external patients
    (planner context); simulated subjects always have accrual_time >= 0.
    """

    accrual_time: float
    observed_time: float
    event: bool
    arm: Arm
    weight: float = 1.0

    def __post_init__(self) -> None:
        if self.observed_time < 0:
            raise ValueError("observed_time must be >= 0")
        if not 0.0 <= self.weight <= 1.0:
            raise ValueError("weight must be in [0, 1]")


@dataclass
class SurvivalDataset:
    """Column-oriented collection of subjects.

    Subjects are stored as parallel numpy arrays; row order is meaningful
    and preserved by all operations.
    """

    accrual_time: np.ndarray
    observed_time: np.ndarray
    event: np.ndarray
    arm: np.ndarray
    weight: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        self.accrual_time = np.asarray(self.accrual_time, dtype=np.float64)
        self.observed_time = np.asarray(self.observed_time, dtype=np.float64)
        self.event = np.asarray(self.event, dtype=bool)
        self.arm = np.asarray(self.arm, dtype=np.int8)
        self.weight = np.asarray(self.weight, dtype=np.float64)
        n = len(self.observed_time)
        for name in ("accrual_time", "event", "arm", "weight"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"field {name} has length mismatch")
        if np.any(self.observed_time < 0):
            raise ValueError("observed_time must be >= 0")
        if np.any((self.weight < 0) | (self.weight > 1)):
            raise ValueError("weights must be in [0, 1]")

    @classmethod
    def from_subjects(cls, subjects: Iterable[Subject], label: str = "") -> "SurvivalDataset":
        subs = list(subjects)
        return cls(
            accrual_time=np.array([s.accrual_time for s in subs], dtype=np.float64),
            observed_time=np.array([s.observed_time for s in subs], dtype=np.float64),
            event=np.array([s.event for s in subs], dtype=bool),
            arm=np.array([int(s.arm) for s in subs], dtype=np.int8),
            weight=np.array([s.weight for s in subs], dtype=np.float64),
            label=label,
        )

    def __len__(self) -> int:
        return len(self.observed_time)

    def __getitem__(self, i: int) -> Subject:
        return Subject(
            accrual_time=float(self.accrual_time[i]),
            observed_time=float(self.observed_time[i]),
            event=bool(self.event[i]),
            arm=Arm(int(self.arm[i])),
            weight=float(self.weight[i]),
        )

    def subjects(self) -> Iterator[Subject]:
        for i in range(len(self)):
            yield self[i]

    def arm_counts(self) -> dict[Arm, int]:
        return {a: int(np.sum(self.arm == a)) for a in Arm}

    def empty_arms(self) -> tuple[Arm, ...]:
        """Arms with no subjects; representable but worth flagging upstream."""
        return tuple(a for a, n in self.arm_counts().items() if n == 0)

    def subset(self, mask: np.ndarray, label: str | None = None) -> "SurvivalDataset":
        return SurvivalDataset(
            accrual_time=self.accrual_time[mask],
            observed_time=self.observed_time[mask],
            event=self.event[mask],
            arm=self.arm[mask],
            weight=self.weight[mask],
            label=self.label if label is None else label,
        )

    def arm_mask(self, arms: Sequence[Arm]) -> np.ndarray:
        codes = np.array([int(a) for a in arms], dtype=np.int8)
        return np.isin(self.arm, codes)

    def with_weights(self, weight: np.ndarray) -> "SurvivalDataset":
        return SurvivalDataset(
            accrual_time=self.accrual_time,
            observed_time=self.observed_time,
            event=self.event,
            arm=self.arm,
            weight=np.asarray(weight, dtype=np.float64),
            label=self.label,
        )


@dataclass(frozen=True)
class GroupFit:
    """Weighted exponential MLE for a single group."""

    rate: float
    weighted_events: float
    weighted_exposure: float

    @property
    def log_rate(self) -> float:
        return float(np.log(self.rate))

    @property
    def se_log_rate(self) -> float:
        return float(1.0 / np.sqrt(self.weighted_events))


@dataclass(frozen=True)
class ExpFit:
    """Two-group weighted exponential proportional-hazards fit.

    ``se_log_hr`` is the observed-information standard error
    sqrt(1/D0 + 1/D1) with D_g the weighted event count in group g.
    """

    log_baseline_hazard: float
    log_hazard_ratio: float
    se_log_hr: float
    weighted_events: tuple[float, float]
    weighted_exposure: tuple[float, float] = field(default=(np.nan, np.nan))


@dataclass(frozen=True)
class LogRankResult:
    statistic: float
    p_value: float


def exp_cdf(t: float, rate: float) -> float:
    """Exponential CDF 1 - exp(-rate * t).

    ``t`` in months >= 0, ``rate`` in events/month > 0.
    """
    if not np.isfinite(rate) or rate <= 0:
        raise ValueError(f"rate must be finite and > 0, got {rate}")
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    return float(-np.expm1(-rate * t))


def fit_group_rate(
    times: np.ndarray, events: np.ndarray, weights: np.ndarray | None = None
) -> GroupFit:
    """Weighted exponential MLE for one group: rate = sum(w*d) / sum(w*y)."""
    times = np.asarray(times, dtype=np.float64)
    events = np.asarray(events, dtype=bool)
    if weights is None:
        weights = np.ones_like(times)
    weights = np.asarray(weights, dtype=np.float64)
    if times.size == 0:
        raise ValueError("empty group")
    d = float(np.sum(weights * events))
    y = float(np.sum(weights * times))
    if y <= 0:
        raise ValueError("total weighted follow-up time must be > 0")
    if d <= 0:
        raise DegenerateFitError("zero weighted events in group")
    return GroupFit(rate=d / y, weighted_events=d, weighted_exposure=y)


def fit_weighted_exponential(
    data: SurvivalDataset,
    group0: Sequence[Arm],
    group1: Sequence[Arm],
) -> ExpFit:
    """Weighted MLE of the two-group exponential proportional-hazards model.

    The closed form (per-group weighted event count over weighted exposure)
    is the exact maximizer of the weighted log-likelihood
    sum_i w_i * (delta_i * log(lambda_i) - lambda_i * y_i).
    """
    m0 = data.arm_mask(group0)
    m1 = data.arm_mask(group1)
    if not m0.any() or not m1.any():
        raise ValueError("both groups must be nonempty")
    if np.any(m0 & m1):
        raise ValueError("groups must not overlap")
    g0 = fit_group_rate(data.observed_time[m0], data.event[m0], data.weight[m0])
    g1 = fit_group_rate(data.observed_time[m1], data.event[m1], data.weight[m1])
    return ExpFit(
        log_baseline_hazard=g0.log_rate,
        log_hazard_ratio=g1.log_rate - g0.log_rate,
        se_log_hr=float(np.sqrt(1.0 / g0.weighted_events + 1.0 / g1.weighted_events)),
        weighted_events=(g0.weighted_events, g1.weighted_events),
        weighted_exposure=(g0.weighted_exposure, g1.weighted_exposure),
    )


def logrank_test(group0: SurvivalDataset, group1: SurvivalDataset) -> LogRankResult:
    """Standard unweighted two-sample log-rank test.

    At each distinct event time the observed-minus-expected event count in
    ``group0`` and the hypergeometric variance are accumulated; the statistic
    is (sum(O-E))^2 / sum(V), referred to chi-squared(1).
    Ties are grouped at identical times.
    """
    t0, d0 = group0.observed_time, group0.event
    t1, d1 = group1.observed_time, group1.event
    if not (d0.any() or d1.any()):
        raise ValueError("log-rank test undefined: no events in either group")

    event_times = np.unique(np.concatenate([t0[d0], t1[d1]]))
    # Risk set sizes just before each event time (>= t); event counts at t.
    s0 = np.sort(t0)
    s1 = np.sort(t1)
    n0 = len(s0) - np.searchsorted(s0, event_times, side="left")
    n1 = len(s1) - np.searchsorted(s1, event_times, side="left")
    e0 = np.sort(t0[d0])
    e1 = np.sort(t1[d1])
    dd0 = np.searchsorted(e0, event_times, side="right") - np.searchsorted(e0, event_times, side="left")
    dd1 = np.searchsorted(e1, event_times, side="right") - np.searchsorted(e1, event_times, side="left")

    n = n0 + n1
    dt = dd0 + dd1
    with np.errstate(invalid="ignore", divide="ignore"):
        expected0 = dt * n0 / n
        var_t = np.where(
            n > 1,
            dt * (n0 / n) * (n1 / n) * (n - dt) / np.maximum(n - 1, 1),
            0.0,
        )
    o_minus_e = float(np.sum(dd0 - expected0))
    v = float(np.sum(var_t))
    if v <= 0:
        return LogRankResult(statistic=0.0, p_value=1.0)
    stat = o_minus_e * o_minus_e / v
    return LogRankResult(statistic=float(stat), p_value=float(chi2.sf(stat, df=1)))
