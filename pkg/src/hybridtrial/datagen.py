"""Hybrid-trial data generation.

Derives the hybrid design from borrowing assumptions, lays down
deterministic linear accrual, simulates exponential event and loss-to-follow-up
times, and applies event-driven administrative censoring with downweighted
external events.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .survival import Arm, SurvivalDataset


class InfeasibleDesignError(ValueError):
    """The requested hybrid design cannot be constructed."""


def round_half_up(x: float) -> int:
    """Round to nearest integer, ties away from zero toward +inf."""
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class DesignInputs:
    """Planning assumptions for one simulated hybrid trial.

    ``downweight`` is the expected downweighting factor applied to external
    events when counting toward ``target_events``; ``hr_experimental`` and
    ``hr_external`` are the true hazard ratios for the experimental arm and
    the external-vs-trial-control residual bias.
    """

    n_experimental: int
    n_control: int
    randomization_ratio: float
    downweight: float
    accrual_rate: float
    baseline_hazard: float
    p_lost: float
    target_events: float
    hr_experimental: float
    hr_external: float

    def __post_init__(self) -> None:
        if self.n_experimental <= 0 or self.n_control <= 0:
            raise ValueError("arm sizes must be positive")
        if self.randomization_ratio <= 0:
            raise ValueError("randomization_ratio must be > 0")
        if not 0 < self.downweight <= 1:
            raise ValueError("downweight must be in (0, 1]")
        if self.accrual_rate <= 0:
            raise ValueError("accrual_rate must be > 0")
        if self.baseline_hazard <= 0:
            raise ValueError("baseline_hazard must be > 0")
        if not 0 <= self.p_lost < 1:
            raise ValueError("p_lost must be in [0, 1)")
        if self.target_events < 0:
            raise ValueError("target_events must be >= 0")
        if self.hr_experimental <= 0 or self.hr_external <= 0:
            raise ValueError("hazard ratios must be > 0")


@dataclass(frozen=True)
class TrialDesign:
    """Derived design quantities for the hybrid trial."""

    n_experimental: int
    n_trial_control: int
    n_external: int
    rate_experimental: float
    rate_trial_control: float
    rate_external: float
    t_enroll: float


@dataclass
class CensoredTrial:
    """A dataset after administrative censoring.

    ``t_target`` is the calendar time at which the weighted event target was
    reached (None when ``under_target``).
    """

    dataset: SurvivalDataset
    t_target: float | None
    under_target: bool


def derive_hybrid_design(inputs: DesignInputs) -> TrialDesign:
    """Derive arm sizes and accrual rates for a hybrid design.

    The trial control arm is reduced to n_experimental / ratio; external
    patients compensate for the removed controls after downweighting, and
    external accrual is fully concurrent (finishes with trial enrollment).
    """
    r = inputs.randomization_ratio
    n_trial_control = round_half_up(inputs.n_experimental / r)
    if n_trial_control > inputs.n_control:
        raise InfeasibleDesignError(
            f"hybrid control arm ({n_trial_control}) exceeds planned controls "
            f"({inputs.n_control})"
        )
    n_external = round_half_up((inputs.n_control - n_trial_control) / inputs.downweight)
    rate_experimental = inputs.accrual_rate * r / (r + 1.0)
    rate_trial_control = inputs.accrual_rate / (r + 1.0)
    t_enroll = inputs.n_experimental / rate_experimental
    rate_external = n_external / t_enroll
    return TrialDesign(
        n_experimental=inputs.n_experimental,
        n_trial_control=n_trial_control,
        n_external=n_external,
        rate_experimental=rate_experimental,
        rate_trial_control=rate_trial_control,
        rate_external=rate_external,
        t_enroll=t_enroll,
    )


def generate_accrual(design: TrialDesign) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Uniform accrual times u_i = i / rate for i = 1..n, per arm.

    Returns (experimental, trial control, external) accrual vectors.
    """

    def times(n: int, rate: float) -> np.ndarray:
        if n == 0:
            return np.empty(0, dtype=np.float64)
        return np.arange(1, n + 1, dtype=np.float64) / rate

    return (
        times(design.n_experimental, design.rate_experimental),
        times(design.n_trial_control, design.rate_trial_control),
        times(design.n_external, design.rate_external),
    )


def simulate_outcomes(
    design: TrialDesign, inputs: DesignInputs, rng: np.random.Generator
) -> SurvivalDataset:
    """Simulate event and loss-to-follow-up times for every subject.

    Event times are exponential with hazard
    baseline * hr_experimental^[experimental] * hr_external^[external];
    loss-to-follow-up times are exponential with that hazard scaled by
    p_lost / (1 - p_lost), so each subject is an event with probability
    1 - p_lost regardless of arm.

    Random draws are consumed in a fixed arm-major order (experimental,
    trial control, external; event times before censoring times within an
    arm) so results do not depend on how replicates are scheduled.
    """
    u_exp, u_ctl, u_ext = generate_accrual(design)
    arm_specs = [
        (u_exp, Arm.TRIAL_EXPERIMENTAL, inputs.baseline_hazard * inputs.hr_experimental),
        (u_ctl, Arm.TRIAL_CONTROL, inputs.baseline_hazard),
        (u_ext, Arm.EXTERNAL_CONTROL, inputs.baseline_hazard * inputs.hr_external),
    ]
    accrual, observed, event, arm = [], [], [], []
    lost_odds = inputs.p_lost / (1.0 - inputs.p_lost)
    for u, label, hazard in arm_specs:
        n = len(u)
        if n == 0:
            continue
        t_event = rng.exponential(1.0 / hazard, size=n)
        if lost_odds > 0:
            t_lost = rng.exponential(1.0 / (hazard * lost_odds), size=n)
        else:
            t_lost = np.full(n, np.inf)
        y = np.minimum(t_event, t_lost)
        accrual.append(u)
        observed.append(y)
        event.append(t_event <= t_lost)
        arm.append(np.full(n, int(label), dtype=np.int8))
    return SurvivalDataset(
        accrual_time=np.concatenate(accrual),
        observed_time=np.concatenate(observed),
        event=np.concatenate(event),
        arm=np.concatenate(arm),
        weight=np.ones(sum(len(a) for a in accrual)),
        label="simulated",
    )


def apply_administrative_censoring(
    data: SurvivalDataset, target_events: float, downweight: float
) -> CensoredTrial:
    """Censor all follow-up at the calendar time the weighted target is hit.

    The calendar time of an observation is accrual + follow-up. Events are
    counted with weight 1 for trial arms and ``downweight`` for external
    subjects; t_target is the calendar time of the event at which the
    running weighted count first reaches ``target_events``. Subjects with
    later calendar times are censored at t_target - accrual; subjects who
    would have enrolled after t_target are dropped. If the target is never
    reached the dataset is returned unchanged and flagged.
    """
    calendar = data.accrual_time + data.observed_time
    ev_idx = np.flatnonzero(data.event)
    order = np.argsort(calendar[ev_idx], kind="stable")
    ev_sorted = ev_idx[order]
    ev_weights = np.where(data.arm[ev_sorted] == Arm.EXTERNAL_CONTROL, downweight, 1.0)
    cum = np.cumsum(ev_weights)
    k = int(np.searchsorted(cum, target_events))
    if k >= len(cum):
        return CensoredTrial(dataset=data, t_target=None, under_target=True)
    t_target = float(calendar[ev_sorted[k]])

    late = calendar > t_target
    observed = np.where(late, t_target - data.accrual_time, data.observed_time)
    event = data.event & ~late
    keep = observed >= 0
    censored = SurvivalDataset(
        accrual_time=data.accrual_time[keep],
        observed_time=observed[keep],
        event=event[keep],
        arm=data.arm[keep],
        weight=data.weight[keep],
        label=data.label,
    )
    return CensoredTrial(dataset=censored, t_target=t_target, under_target=False)


def simulate_trial(inputs: DesignInputs, rng: np.random.Generator) -> CensoredTrial:
    """Full data-generating pipeline for one replicate."""
    design = derive_hybrid_design(inputs)
    raw = simulate_outcomes(design, inputs, rng)
    return apply_administrative_censoring(raw, inputs.target_events, inputs.downweight)
