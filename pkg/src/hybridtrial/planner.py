"""Deterministic trial-design benefit planner.

Updates the randomization ratio and accrual rates for historical and
concurrent external controls, projects expected event curves, solves for
the clinical cutoff, and summarizes timeline and size benefits of a hybrid
design against the original design.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import InfeasibleDesignError, round_half_up

CUTOFF_TOL_MONTHS = 0.01


@dataclass(frozen=True)
class PlannerInputs:
    """Planning assumptions.

    ``external_rate`` is the effective external accrual (patients/month
    after downweighting); ``t_historic`` months of pre-trial external
    accrual contribute external_rate * t_historic historical patients.
    """

    n_experimental: int
    n_control: int
    accrual_rate: float
    external_rate: float
    t_historic: float
    baseline_hazard: float
    hr_experimental: float
    p_lost: float
    target_events: float
    initial_ratio: float = 1.0

    def __post_init__(self) -> None:
        if self.n_experimental <= 0 or self.n_control <= 0:
            raise ValueError("arm sizes must be positive")
        if self.accrual_rate <= 0:
            raise ValueError("accrual_rate must be > 0")
        if self.external_rate < 0:
            raise ValueError("external_rate must be >= 0")
        if self.t_historic < 0:
            raise ValueError("t_historic must be >= 0")
        if self.baseline_hazard <= 0:
            raise ValueError("baseline_hazard must be > 0")
        if self.hr_experimental <= 0:
            raise ValueError("hr_experimental must be > 0")
        if not 0 <= self.p_lost < 1:
            raise ValueError("p_lost must be in [0, 1)")
        if self.target_events < 0:
            raise ValueError("target_events must be >= 0")
        if self.initial_ratio <= 0:
            raise ValueError("initial_ratio must be > 0")

    @property
    def n_external_historic(self) -> float:
        return self.t_historic * self.external_rate


@dataclass
class PlannerOutputs:
    """Solved design: rates, ratio, accrual vectors, and (optionally) cutoff."""

    inputs: PlannerInputs
    final_ratio: float
    rate_experimental: float
    rate_control: float
    t_enroll: float
    n_trial_controls: int
    n_external_concurrent: int
    n_external_historic: int
    accrual_experimental: np.ndarray
    accrual_control: np.ndarray
    accrual_external: np.ndarray
    t_cutoff: float | None = None


@dataclass(frozen=True)
class EventProjection:
    experimental: float
    trial_control: float
    external: float

    @property
    def total(self) -> float:
        return self.experimental + self.trial_control + self.external


@dataclass(frozen=True)
class BenefitReport:
    enrollment_saving_months: float
    cutoff_saving_months: float
    fewer_randomized_patients: int
    original_events_at_cutoff: EventProjection
    hybrid_events_at_cutoff: EventProjection


def update_design_for_external(inputs: PlannerInputs) -> PlannerOutputs:
    """Solve the hybrid design's accrual rates and randomization ratio.

    After crediting historical external patients against the planned control
    count, trial accrual is split so that experimental and hybrid-control
    (trial + concurrent external) enrollment finish simultaneously:
        s_C + s_E = s
        s_E / n_E - s_C / m = s_RWD / m,   m = n_C - historical externals.

    Historical external patients are enumerated backward in time at the
    external accrual rate; concurrent externals accrue until t_enroll.
    """
    n_hist = inputs.n_external_historic
    m = inputs.n_control - n_hist
    if m <= 0:
        raise InfeasibleDesignError(
            "historical external patients cover the whole planned control arm"
        )
    # Interim ratio update for the historical credit (superseded by the
    # concurrent solve below, which also determines the final ratio).
    r = inputs.n_experimental / m
    rate_experimental = inputs.accrual_rate * r / (r + 1.0)

    rate_experimental = (
        inputs.n_experimental
        * (inputs.accrual_rate + inputs.external_rate)
        / (m + inputs.n_experimental)
    )
    rate_control = inputs.accrual_rate - rate_experimental
    if rate_experimental <= 0 or rate_control <= 0:
        raise InfeasibleDesignError("accrual split produced a non-positive rate")
    t_enroll = inputs.n_experimental / rate_experimental

    n_trial_controls = round_half_up(rate_control * t_enroll)
    n_hist_i = round_half_up(n_hist)
    n_conc = round_half_up(inputs.external_rate * t_enroll) if inputs.external_rate > 0 else 0

    u_exp = np.arange(1, inputs.n_experimental + 1) / rate_experimental
    u_ctl = np.arange(1, n_trial_controls + 1) / rate_control
    if inputs.external_rate > 0:
        u_hist = -np.arange(n_hist_i - 1, -1, -1, dtype=np.float64) / inputs.external_rate
        u_conc = np.arange(1, n_conc + 1) / inputs.external_rate
        u_ext = np.concatenate([u_hist, u_conc])
    else:
        u_ext = np.empty(0)

    return PlannerOutputs(
        inputs=inputs,
        final_ratio=rate_experimental / rate_control,
        rate_experimental=rate_experimental,
        rate_control=rate_control,
        t_enroll=t_enroll,
        n_trial_controls=n_trial_controls,
        n_external_concurrent=n_conc,
        n_external_historic=n_hist_i,
        accrual_experimental=u_exp,
        accrual_control=u_ctl,
        accrual_external=u_ext,
    )


def project_events(outputs: PlannerOutputs, inputs: PlannerInputs, t: float) -> EventProjection:
    """Expected cumulative events per arm at trial time t.

    Each accrued patient contributes retention times the exponential CDF of
    their follow-up; historical external patients' follow-up is capped at t,
    so no external events predate the trial start.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    lam_exp = inputs.baseline_hazard * inputs.hr_experimental
    lam_ctl = inputs.baseline_hazard
    retain = 1.0 - inputs.p_lost

    def expected(u: np.ndarray, lam: float, cap: bool) -> float:
        u = u[u <= t]
        if u.size == 0:
            return 0.0
        follow = t - u
        if cap:
            follow = np.minimum(follow, t)
        return float(retain * np.sum(-np.expm1(-lam * follow)))

    return EventProjection(
        experimental=expected(outputs.accrual_experimental, lam_exp, cap=False),
        trial_control=expected(outputs.accrual_control, lam_ctl, cap=False),
        external=expected(outputs.accrual_external, lam_ctl, cap=True),
    )


def solve_cutoff(outputs: PlannerOutputs, inputs: PlannerInputs) -> float:
    """Smallest t at which total expected events reach the target.

    The external curve already runs at the effective (post-downweighting)
    accrual rate, so events are summed unweighted. Bisection on the
    monotone expected-event curve, to 0.01-month tolerance.
    """
    target = inputs.target_events
    if target <= 0:
        return 0.0
    n_total = (
        len(outputs.accrual_experimental)
        + len(outputs.accrual_control)
        + len(outputs.accrual_external)
    )
    limit = (1.0 - inputs.p_lost) * n_total
    if target > limit:
        raise InfeasibleDesignError(
            f"target {target:g} events unreachable: at most {limit:g} expected"
        )
    lo, hi = 0.0, max(outputs.t_enroll, 1.0)
    while project_events(outputs, inputs, hi).total < target:
        hi *= 2.0
        if hi > 1e6:
            raise InfeasibleDesignError("event target not reached in any practical horizon")
    while hi - lo > CUTOFF_TOL_MONTHS:
        mid = 0.5 * (lo + hi)
        if project_events(outputs, inputs, mid).total >= target:
            hi = mid
        else:
            lo = mid
    return hi


def build_plan(inputs: PlannerInputs) -> PlannerOutputs:
    """Solve the design and fill in its clinical cutoff."""
    outputs = update_design_for_external(inputs)
    outputs.t_cutoff = solve_cutoff(outputs, inputs)
    return outputs


def randomized_patients(outputs: PlannerOutputs) -> int:
    return outputs.inputs.n_experimental + outputs.n_trial_controls


def summarize_benefits(original: PlannerOutputs, hybrid: PlannerOutputs) -> BenefitReport:
    """Timeline and size deltas between two solved plans."""
    if original.t_cutoff is None or hybrid.t_cutoff is None:
        raise ValueError("both plans need a solved cutoff (use build_plan)")
    return BenefitReport(
        enrollment_saving_months=original.t_enroll - hybrid.t_enroll,
        cutoff_saving_months=original.t_cutoff - hybrid.t_cutoff,
        fewer_randomized_patients=randomized_patients(original) - randomized_patients(hybrid),
        original_events_at_cutoff=project_events(original, original.inputs, original.t_cutoff),
        hybrid_events_at_cutoff=project_events(hybrid, hybrid.inputs, hybrid.t_cutoff),
    )
