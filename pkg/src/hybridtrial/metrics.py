"""Operating-characteristic metrics.

Per-replicate effective-borrowing for the commensurate method and
cross-replicate aggregation into power/type I error, MSE, bias, and
effective-event summaries.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

if TYPE_CHECKING:  # pragma: no cover
    from .mcmc import PosteriorSummary
    from .methods import AnalysisResult


@dataclass(frozen=True)
class OperatingCharacteristics:
    """Aggregate over replicates for one (scenario, method) cell.

    ``rejection_rate`` is power when the true log HR is negative and type I
    error when it is zero. ``sd_effective_events`` is NaN when undefined
    (fewer than two replicates).
    """

    rejection_rate: float
    rejection_mc_se: float
    mse_log_hr: float
    bias_log_hr: float
    mean_effective_events: float
    sd_effective_events: float
    n_replicates: int
    n_excluded: int = 0


def commensurate_effective_events(
    trial_only: "PosteriorSummary", hybrid: "PosteriorSummary", d_trial_events: float
) -> float:
    """Effective external events borrowed by the commensurate model.

    max{0, d * (var_trial / var_hybrid - 1)} with the posterior variances of
    the log hazard ratio and d the trial event count (external excluded).
    """
    var_trial = float(trial_only.variance[1])
    var_hybrid = float(hybrid.variance[2])
    if var_hybrid <= 0:
        raise ValueError("hybrid posterior variance must be > 0")
    if var_trial <= 0:
        raise ValueError("trial-only posterior variance must be > 0")
    return max(0.0, d_trial_events * (var_trial / var_hybrid - 1.0))


def aggregate(
    results: Sequence["AnalysisResult"], true_log_hr: float, n_excluded: int = 0
) -> OperatingCharacteristics:
    """Aggregate one method's replicate results into operating characteristics.

    Summation is compensated (math.fsum), so the output does not depend on
    input order. All results must come from the same method, and every
    result must carry an effective-events value.
    """
    if not results:
        raise ValueError("no results to aggregate")
    methods = {r.method for r in results}
    if len(methods) > 1:
        raise ValueError(f"mixed methods in aggregation input: {sorted(m.value for m in methods)}")
    if any(r.effective_events is None for r in results):
        raise ValueError("results missing effective_events; supply the companion fit")

    n = len(results)
    p = math.fsum(1.0 for r in results if r.reject) / n
    errors = [r.log_hr_hat - true_log_hr for r in results]
    bias = math.fsum(errors) / n
    mse = math.fsum(e * e for e in errors) / n
    eff = [float(r.effective_events) for r in results]
    mean_eff = math.fsum(eff) / n
    if n > 1:
        sd_eff = math.sqrt(max(0.0, math.fsum((e - mean_eff) ** 2 for e in eff) / (n - 1)))
    else:
        sd_eff = float("nan")
    return OperatingCharacteristics(
        rejection_rate=p,
        rejection_mc_se=math.sqrt(p * (1.0 - p) / n),
        mse_log_hr=mse,
        bias_log_hr=bias,
        mean_effective_events=mean_eff,
        sd_effective_events=sd_eff,
        n_replicates=n,
        n_excluded=n_excluded,
    )
