"""Simulation orchestration.

Builds the scenario grid, runs replicates in parallel with deterministic
seed derivation, analyzes every configured method on the same dataset
(paired Monte Carlo), aggregates operating characteristics, and drives
grid-search calibration of tuning parameters.

Seed scheme (replayable outside this package): every random stream is a
numpy ``default_rng`` seeded by ``SeedSequence(entropy=master_seed,
spawn_key=key)`` where ``key`` packs the cell's hazard ratios (each float64
split into two uint32 words, low word first), the replicate index, and a
stream tag: 0 = data generation, 1 = trial-only Bayes fit, 2 = power prior,
3 = commensurate. Sampler seeds are the first uint64 from that sequence;
chains inside one sampler run spawn sub-streams keyed (0,), (1,), ...
Results are therefore identical for any worker count or scheduling order.
"""
from __future__ import annotations

import dataclasses
import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .datagen import DesignInputs, simulate_trial
from .mcmc import SamplerConfig
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
)
from .metrics import OperatingCharacteristics, aggregate
from .survival import Arm, SurvivalDataset

TAG_DATA = 0
TAG_TRIAL_ONLY = 1
TAG_POWER_PRIOR = 2
TAG_COMMENSURATE = 3

_CHUNK = 25

METHOD_ORDER = tuple(Method)


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation run: design, tuning, grid, and execution parameters."""

    design: DesignInputs
    tuning: TuningParameters = TuningParameters()
    methods: tuple[Method, ...] = METHOD_ORDER
    n_replicates: int = 1000
    master_seed: int = 0
    alpha: float = 0.025
    sampler: SamplerConfig = SamplerConfig()
    hr_experimental_grid: tuple[float, ...] = ()
    hr_external_grid: tuple[float, ...] = ()
    commensurate_scale_mode: str = "sd_half_cauchy"

    def __post_init__(self) -> None:
        if self.n_replicates < 1:
            raise ValueError("n_replicates must be >= 1")
        if not self.methods:
            raise ValueError("at least one method required")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        object.__setattr__(self, "methods", tuple(self.methods))
        if not self.hr_experimental_grid:
            object.__setattr__(self, "hr_experimental_grid", (self.design.hr_experimental,))
        else:
            object.__setattr__(self, "hr_experimental_grid", tuple(self.hr_experimental_grid))
        if not self.hr_external_grid:
            object.__setattr__(self, "hr_external_grid", (self.design.hr_external,))
        else:
            object.__setattr__(self, "hr_external_grid", tuple(self.hr_external_grid))


@dataclass
class ReplicateOutcome:
    """Everything recorded about one replicate of one grid cell."""

    rep: int
    dataset_digest: str
    trial_events: float
    external_events: float
    under_target: bool
    results: dict[Method, AnalysisResult] = field(default_factory=dict)
    errors: dict[Method, str] = field(default_factory=dict)


@dataclass
class OCGrid:
    """Operating characteristics keyed by (hr_exp, hr_rwd, method)."""

    rows: dict[tuple[float, float, Method], OperatingCharacteristics]
    hr_experimental_grid: tuple[float, ...]
    hr_external_grid: tuple[float, ...]
    methods: tuple[Method, ...]
    under_target: dict[tuple[float, float], int]

    def ordered_items(self):
        """Rows in grid order, then method declaration order."""
        methods = [m for m in METHOD_ORDER if m in self.methods]
        for hr_exp in self.hr_experimental_grid:
            for hr_rwd in self.hr_external_grid:
                for m in methods:
                    key = (hr_exp, hr_rwd, m)
                    if key in self.rows:
                        yield key, self.rows[key]


def dataset_digest(data: SurvivalDataset) -> str:
    """SHA-256 over the dataset's columns; equal digests mean equal data."""
    h = hashlib.sha256()
    for arr in (data.accrual_time, data.observed_time, data.event, data.arm, data.weight):
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()


def _float_words(x: float) -> tuple[int, int]:
    bits = int(np.float64(x).view(np.uint64))
    return bits & 0xFFFFFFFF, bits >> 32


def stream_key(hr_exp: float, hr_rwd: float, rep: int, tag: int) -> tuple[int, ...]:
    return _float_words(hr_exp) + _float_words(hr_rwd) + (rep, tag)


def replicate_rng(
    master_seed: int, hr_exp: float, hr_rwd: float, rep: int, tag: int = TAG_DATA
) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=stream_key(hr_exp, hr_rwd, rep, tag))
    return np.random.default_rng(ss)


def sampler_seed(master_seed: int, hr_exp: float, hr_rwd: float, rep: int, tag: int) -> int:
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=stream_key(hr_exp, hr_rwd, rep, tag))
    return int(ss.generate_state(1, np.uint64)[0])


def run_replicate(
    config: ScenarioConfig, hr_exp: float, hr_rwd: float, rep: int
) -> ReplicateOutcome:
    """Generate one dataset and analyze it with every configured method.

    Each method sees the identical dataset; per-method sampler seeds are
    keyed by fixed stream tags so a method's result does not depend on
    which other methods were requested. Analyses that fail on degenerate
    data are recorded as per-method errors, not raised.
    """
    inputs = dataclasses.replace(config.design, hr_experimental=hr_exp, hr_external=hr_rwd)
    rng = replicate_rng(config.master_seed, hr_exp, hr_rwd, rep)
    trial = simulate_trial(inputs, rng)
    data = trial.dataset
    outcome = ReplicateOutcome(
        rep=rep,
        dataset_digest=dataset_digest(data),
        trial_events=float(np.sum(data.event[data.arm != Arm.EXTERNAL_CONTROL])),
        external_events=float(np.sum(data.event[data.arm == Arm.EXTERNAL_CONTROL])),
        under_target=trial.under_target,
    )

    trial_only_summary = None
    if Method.COMMENSURATE in config.methods:
        cfg = dataclasses.replace(
            config.sampler,
            seed=sampler_seed(config.master_seed, hr_exp, hr_rwd, rep, TAG_TRIAL_ONLY),
        )
        try:
            trial_only_summary = bayes_trial_only(data, cfg)
        except ValueError as exc:
            outcome.errors[Method.COMMENSURATE] = f"trial-only companion fit failed: {exc}"

    for method in config.methods:
        if method in outcome.errors:
            continue
        try:
            if method is Method.NO_BORROW:
                res = analyze_no_borrowing(data, config.alpha)
            elif method is Method.TEST_THEN_POOL:
                res = analyze_test_then_pool(data, config.tuning, config.alpha)
            elif method is Method.TWO_STEP:
                res = analyze_two_step(data, config.tuning, config.alpha)
            elif method is Method.POWER_PRIOR:
                cfg = dataclasses.replace(
                    config.sampler,
                    seed=sampler_seed(config.master_seed, hr_exp, hr_rwd, rep, TAG_POWER_PRIOR),
                )
                res = analyze_power_prior(data, config.tuning, config.alpha, cfg)
            elif method is Method.COMMENSURATE:
                cfg = dataclasses.replace(
                    config.sampler,
                    seed=sampler_seed(config.master_seed, hr_exp, hr_rwd, rep, TAG_COMMENSURATE),
                )
                res = analyze_commensurate(
                    data,
                    config.tuning,
                    config.alpha,
                    cfg,
                    trial_only=trial_only_summary,
                    scale_mode=config.commensurate_scale_mode,
                )
            else:  # pragma: no cover
                raise ValueError(f"unknown method {method}")
            outcome.results[method] = res
        except ValueError as exc:
            outcome.errors[method] = str(exc)
    return outcome


def _run_chunk(args) -> tuple[tuple[float, float], list[ReplicateOutcome]]:
    config, hr_exp, hr_rwd, reps = args
    return (hr_exp, hr_rwd), [run_replicate(config, hr_exp, hr_rwd, r) for r in reps]


def _iter_tasks(config: ScenarioConfig):
    for hr_exp in config.hr_experimental_grid:
        for hr_rwd in config.hr_external_grid:
            for start in range(0, config.n_replicates, _CHUNK):
                reps = range(start, min(start + _CHUNK, config.n_replicates))
                yield (config, hr_exp, hr_rwd, list(reps))


def run_cells(
    config: ScenarioConfig, n_workers: int = 1
) -> dict[tuple[float, float], list[ReplicateOutcome]]:
    """All replicate outcomes for every cell of the configured grid."""
    cells: dict[tuple[float, float], list[ReplicateOutcome]] = {
        (he, hr): []
        for he in config.hr_experimental_grid
        for hr in config.hr_external_grid
    }
    tasks = list(_iter_tasks(config))
    if n_workers <= 1:
        chunks = map(_run_chunk, tasks)
    else:
        executor = ProcessPoolExecutor(max_workers=n_workers)
        try:
            chunks = list(executor.map(_run_chunk, tasks))
        finally:
            executor.shutdown()
    for cell, outcomes in chunks:
        cells[cell].extend(outcomes)
    for cell in cells:
        cells[cell].sort(key=lambda o: o.rep)
    return cells


def run_grid(
    config: ScenarioConfig,
    n_workers: int = 1,
    cells: dict[tuple[float, float], list[ReplicateOutcome]] | None = None,
) -> OCGrid:
    """Run the full scenario grid and aggregate per-method OCs.

    Replicates whose analysis errored on degenerate data are excluded from
    that method's aggregation and counted in its exclusion tally. Pass
    ``cells`` (from :func:`run_cells` with the same config) to aggregate
    already-computed outcomes.
    """
    if cells is None:
        cells = run_cells(config, n_workers=n_workers)
    rows: dict[tuple[float, float, Method], OperatingCharacteristics] = {}
    under: dict[tuple[float, float], int] = {}
    for (hr_exp, hr_rwd), outcomes in cells.items():
        under[(hr_exp, hr_rwd)] = sum(1 for o in outcomes if o.under_target)
        for method in config.methods:
            ok = [o.results[method] for o in outcomes if method in o.results]
            n_excluded = sum(1 for o in outcomes if method in o.errors)
            if not ok:
                continue
            rows[(hr_exp, hr_rwd, method)] = aggregate(
                ok, true_log_hr=math.log(hr_exp), n_excluded=n_excluded
            )
    return OCGrid(
        rows=rows,
        hr_experimental_grid=config.hr_experimental_grid,
        hr_external_grid=config.hr_external_grid,
        methods=config.methods,
        under_target=under,
    )


_TUNING_FIELD = {
    Method.TEST_THEN_POOL: "alpha_pool",
    Method.TWO_STEP: "decay_c",
    Method.POWER_PRIOR: "power_a",
    Method.COMMENSURATE: "cauchy_scale_v",
}


@dataclass(frozen=True)
class CalibrationRow:
    value: float
    power: float
    power_mc_se: float
    t1e_by_scenario: dict[float, float]
    max_t1e: float
    max_t1e_mc_se: float
    meets_target: bool


@dataclass
class CalibrationReport:
    method: Method
    target_power: float
    rows: list[CalibrationRow]
    selected: float | None
    feasible: bool
    rationale: str


def calibrate_tuning(
    config: ScenarioConfig,
    method: Method,
    parameter_grid: tuple[float, ...],
    target_power: float,
    power_scenario: tuple[float, float],
    t1e_scenarios: tuple[float, ...],
    n_workers: int = 1,
) -> CalibrationReport:
    """Grid-search one method's tuning parameter.

    For each candidate value the power at ``power_scenario`` and the maximum
    type I error over ``t1e_scenarios`` (at hr_exp = 1) are estimated; the
    selected candidate minimizes max type I error among those meeting
    ``target_power`` (ties broken by grid order). If no candidate meets the
    target the highest-power candidate is returned flagged infeasible.
    Candidates see identical datasets (seeds do not depend on tuning).
    """
    if method not in _TUNING_FIELD:
        raise ValueError(f"{method.value} has no tuning parameter")
    if not parameter_grid:
        raise ValueError("parameter grid must be nonempty")
    field_name = _TUNING_FIELD[method]
    rows: list[CalibrationRow] = []
    for value in parameter_grid:
        tuning = dataclasses.replace(config.tuning, **{field_name: value})
        power_cfg = dataclasses.replace(
            config,
            tuning=tuning,
            methods=(method,),
            hr_experimental_grid=(power_scenario[0],),
            hr_external_grid=(power_scenario[1],),
        )
        grid = run_grid(power_cfg, n_workers=n_workers)
        oc = grid.rows[(power_scenario[0], power_scenario[1], method)]
        power, power_se = oc.rejection_rate, oc.rejection_mc_se

        t1e_cfg = dataclasses.replace(
            config,
            tuning=tuning,
            methods=(method,),
            hr_experimental_grid=(1.0,),
            hr_external_grid=tuple(t1e_scenarios),
        )
        t1e_grid = run_grid(t1e_cfg, n_workers=n_workers)
        t1e = {hr: t1e_grid.rows[(1.0, hr, method)].rejection_rate for hr in t1e_scenarios}
        worst = max(t1e_scenarios, key=lambda hr: t1e[hr])
        rows.append(
            CalibrationRow(
                value=value,
                power=power,
                power_mc_se=power_se,
                t1e_by_scenario=t1e,
                max_t1e=t1e[worst],
                max_t1e_mc_se=t1e_grid.rows[(1.0, worst, method)].rejection_mc_se,
                meets_target=power >= target_power,
            )
        )

    qualifying = [r for r in rows if r.meets_target]
    if qualifying:
        best = min(qualifying, key=lambda r: r.max_t1e)
        rationale = (
            f"{best.value:g} has the lowest max type I error ({best.max_t1e:.4f}) among "
            f"{len(qualifying)} candidate(s) with power >= {target_power:g}"
        )
        return CalibrationReport(method, target_power, rows, best.value, True, rationale)
    best = max(rows, key=lambda r: r.power)
    rationale = (
        f"no candidate reached power {target_power:g}; best effort {best.value:g} "
        f"with power {best.power:.4f}"
    )
    return CalibrationReport(method, target_power, rows, best.value, False, rationale)
