"""Hybrid controlled trial simulation and design toolkit.

Simulates trials whose control arm borrows from an external real-world
cohort, analyzes them with static and dynamic borrowing methods, estimates
operating characteristics over scenario grids, calibrates tuning
parameters, and projects design-level timeline/size benefits.
"""

__version__ = "0.1.0"

from .datagen import (
    CensoredTrial,
    DesignInputs,
    InfeasibleDesignError,
    TrialDesign,
    apply_administrative_censoring,
    derive_hybrid_design,
    generate_accrual,
    simulate_outcomes,
    simulate_trial,
)
from .mcmc import (
    CompiledTarget,
    InitializationError,
    PosteriorDraws,
    PosteriorSummary,
    SamplerConfig,
    sample,
    summarize,
)
from .methods import (
    AnalysisResult,
    Method,
    TuningParameters,
    analyze_commensurate,
    analyze_no_borrowing,
    analyze_power_prior,
    analyze_test_then_pool,
    analyze_two_step,
    bayes_trial_only,
    controls_projection,
    two_step_weight,
)
from .metrics import OperatingCharacteristics, aggregate, commensurate_effective_events
from .planner import (
    BenefitReport,
    EventProjection,
    PlannerInputs,
    PlannerOutputs,
    build_plan,
    project_events,
    solve_cutoff,
    summarize_benefits,
    update_design_for_external,
)
from .runner import (
    CalibrationReport,
    OCGrid,
    ReplicateOutcome,
    ScenarioConfig,
    calibrate_tuning,
    dataset_digest,
    run_cells,
    run_grid,
    run_replicate,
)
from .survival import (
    Arm,
    DegenerateFitError,
    ExpFit,
    GroupFit,
    LogRankResult,
    Subject,
    SurvivalDataset,
    exp_cdf,
    fit_group_rate,
    fit_weighted_exponential,
    logrank_test,
)

__all__ = [
    "__version__",
    "AnalysisResult",
    "Arm",
    "BenefitReport",
    "CalibrationReport",
    "CensoredTrial",
    "CompiledTarget",
    "DegenerateFitError",
    "DesignInputs",
    "EventProjection",
    "ExpFit",
    "GroupFit",
    "InfeasibleDesignError",
    "InitializationError",
    "LogRankResult",
    "Method",
    "OCGrid",
    "OperatingCharacteristics",
    "PlannerInputs",
    "PlannerOutputs",
    "PosteriorDraws",
    "PosteriorSummary",
    "ReplicateOutcome",
    "SamplerConfig",
    "ScenarioConfig",
    "Subject",
    "SurvivalDataset",
    "TrialDesign",
    "TuningParameters",
    "aggregate",
    "analyze_commensurate",
    "analyze_no_borrowing",
    "analyze_power_prior",
    "analyze_test_then_pool",
    "analyze_two_step",
    "apply_administrative_censoring",
    "bayes_trial_only",
    "build_plan",
    "calibrate_tuning",
    "commensurate_effective_events",
    "controls_projection",
    "dataset_digest",
    "derive_hybrid_design",
    "exp_cdf",
    "fit_group_rate",
    "fit_weighted_exponential",
    "generate_accrual",
    "logrank_test",
    "project_events",
    "run_cells",
    "run_grid",
    "run_replicate",
    "sample",
    "simulate_outcomes",
    "simulate_trial",
    "solve_cutoff",
    "summarize",
    "summarize_benefits",
    "two_step_weight",
    "update_design_for_external",
]
