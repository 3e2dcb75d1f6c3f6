"""Run-configuration parsing, validation, presets, and digests.

Configs are JSON with an explicit ``schema_version``. Validation is strict:
unknown keys anywhere are errors, so a typo cannot silently change a tuning
parameter. The resolved config (all defaults filled in) is what gets
digested into the run manifest, so the digest changes iff any effective
field changes.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from pathlib import Path
from typing import Any

from .datagen import DesignInputs
from .mcmc import SamplerConfig
from .methods import COMMENSURATE_SCALE_MODES, Method, TuningParameters
from .planner import PlannerInputs
from .runner import ScenarioConfig

SCHEMA_VERSION = 1

_DESIGN_DEFAULTS = {
    "n_experimental": 450,
    "n_control": 450,
    "randomization_ratio": 2.0,
    "downweight": 0.6,
    "accrual_rate": 34.0,
    "baseline_hazard": 0.043,
    "p_lost": 0.05,
    "target_events": 655.0,
    "hr_experimental": 0.78,
    "hr_external": 1.0,
}

_TUNING_DEFAULTS = {
    "alpha_pool": 0.15,
    "decay_c": 8.25,
    "power_a": 0.6,
    "cauchy_scale_v": 0.035,
}

_SAMPLER_DEFAULTS = {
    "n_chains": 4,
    "n_iter": 10_000,
    "n_burnin": 5_000,
    "target_acceptance": 0.3,
}

_TOP_DEFAULTS: dict[str, Any] = {
    "grid": None,
    "tuning": None,
    "sampler": None,
    "methods": [m.value for m in Method],
    "n_replicates": 1000,
    "master_seed": 0,
    "alpha": 0.025,
    "commensurate_scale_mode": "sd_half_cauchy",
    "planner": None,
}

_PLANNER_KEYS = {
    "n_experimental",
    "n_control",
    "accrual_rate",
    "external_rate",
    "t_historic",
    "baseline_hazard",
    "hr_experimental",
    "p_lost",
    "target_events",
    "initial_ratio",
}

PRESETS: dict[str, dict[str, Any]] = {
    # Reduced grid and sampler budget for interactive / acceptance runs.
    "desk": {
        "grid": {
            "hr_experimental": [0.78, 1.0],
            "hr_external": [0.6, 1.0, 1.1, 1.2, 1.3, 1.5, 1.8, 2.0],
        },
        "n_replicates": 500,
        "sampler": {"n_chains": 4, "n_iter": 5_000, "n_burnin": 2_500, "target_acceptance": 0.3},
    },
    # The full published grid.
    "paper": {
        "grid": {
            "hr_experimental": [0.7, 0.78, 0.85, 1.0],
            "hr_external": [round(0.5 + 0.1 * i, 1) for i in range(16)],
        },
        "n_replicates": 1000,
        "sampler": {"n_chains": 4, "n_iter": 10_000, "n_burnin": 5_000, "target_acceptance": 0.3},
    },
}


class ConfigError(ValueError):
    """Invalid configuration; message names the offending field."""


def _type_name(value: Any) -> str:
    return type(value).__name__


def _check_unknown(section: dict, allowed: set[str], path: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{path}{key}: unknown key")


def _number(section: dict, key: str, path: str, lo=None, hi=None, lo_open=False, hi_open=False):
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}{key}: expected a number, got {_type_name(value)}")
    if lo is not None and (value <= lo if lo_open else value < lo):
        raise ConfigError(f"{path}{key}: must be {'>' if lo_open else '>='} {lo}, got {value}")
    if hi is not None and (value >= hi if hi_open else value > hi):
        raise ConfigError(f"{path}{key}: must be {'<' if hi_open else '<='} {hi}, got {value}")
    return float(value)


def _integer(section: dict, key: str, path: str, lo=None) -> int:
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}{key}: expected an integer, got {_type_name(value)}")
    if lo is not None and value < lo:
        raise ConfigError(f"{path}{key}: must be >= {lo}, got {value}")
    return value


def _float_list(value: Any, path: str) -> list[float]:
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{path}: expected a nonempty list of numbers")
    out = []
    for i, x in enumerate(value):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ConfigError(f"{path}[{i}]: expected a number, got {_type_name(x)}")
        out.append(float(x))
    return out


def load_config(path: str | Path) -> dict:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def apply_preset(cfg: dict, preset: str | None) -> dict:
    """Overlay a preset's run-scale fields (grid, replicates, sampler)."""
    if preset is None:
        return dict(cfg)
    if preset not in PRESETS:
        raise ConfigError(f"preset: unknown preset {preset!r} (choose from {sorted(PRESETS)})")
    out = dict(cfg)
    out.update({k: json.loads(json.dumps(v)) for k, v in PRESETS[preset].items()})
    return out


def resolve_config(cfg: dict) -> dict:
    """Validate and fill defaults; returns the fully resolved config."""
    allowed = {"schema_version", "design"} | set(_TOP_DEFAULTS)
    _check_unknown(cfg, allowed, "")
    if "schema_version" not in cfg:
        raise ConfigError("schema_version: required")
    if cfg["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(
            f"schema_version: expected {SCHEMA_VERSION}, got {cfg['schema_version']!r}"
        )

    out: dict[str, Any] = {"schema_version": SCHEMA_VERSION}

    design = dict(cfg.get("design") or {})
    if not isinstance(design, dict):
        raise ConfigError("design: expected an object")
    _check_unknown(design, set(_DESIGN_DEFAULTS), "design.")
    merged = {**_DESIGN_DEFAULTS, **design}
    out["design"] = {
        "n_experimental": _integer(merged, "n_experimental", "design.", lo=1),
        "n_control": _integer(merged, "n_control", "design.", lo=1),
        "randomization_ratio": _number(merged, "randomization_ratio", "design.", lo=0, lo_open=True),
        "downweight": _number(merged, "downweight", "design.", lo=0, hi=1, lo_open=True),
        "accrual_rate": _number(merged, "accrual_rate", "design.", lo=0, lo_open=True),
        "baseline_hazard": _number(merged, "baseline_hazard", "design.", lo=0, lo_open=True),
        "p_lost": _number(merged, "p_lost", "design.", lo=0, hi=1, hi_open=True),
        "target_events": _number(merged, "target_events", "design.", lo=0),
        "hr_experimental": _number(merged, "hr_experimental", "design.", lo=0, lo_open=True),
        "hr_external": _number(merged, "hr_external", "design.", lo=0, lo_open=True),
    }

    grid = cfg.get("grid")
    if grid is None:
        out["grid"] = {
            "hr_experimental": [out["design"]["hr_experimental"]],
            "hr_external": [out["design"]["hr_external"]],
        }
    else:
        if not isinstance(grid, dict):
            raise ConfigError("grid: expected an object")
        _check_unknown(grid, {"hr_experimental", "hr_external"}, "grid.")
        out["grid"] = {
            "hr_experimental": _float_list(
                grid.get("hr_experimental", [out["design"]["hr_experimental"]]),
                "grid.hr_experimental",
            ),
            "hr_external": _float_list(
                grid.get("hr_external", [out["design"]["hr_external"]]), "grid.hr_external"
            ),
        }
        for name in ("hr_experimental", "hr_external"):
            if any(x <= 0 for x in out["grid"][name]):
                raise ConfigError(f"grid.{name}: hazard ratios must be > 0")

    tuning = dict(cfg.get("tuning") or {})
    _check_unknown(tuning, set(_TUNING_DEFAULTS), "tuning.")
    merged = {**_TUNING_DEFAULTS, **tuning}
    out["tuning"] = {
        "alpha_pool": _number(merged, "alpha_pool", "tuning.", lo=0, hi=1, lo_open=True, hi_open=True),
        "decay_c": _number(merged, "decay_c", "tuning.", lo=0, lo_open=True),
        "power_a": _number(merged, "power_a", "tuning.", lo=0, hi=1),
        "cauchy_scale_v": _number(merged, "cauchy_scale_v", "tuning.", lo=0, lo_open=True),
    }

    sampler = dict(cfg.get("sampler") or {})
    _check_unknown(sampler, set(_SAMPLER_DEFAULTS), "sampler.")
    merged = {**_SAMPLER_DEFAULTS, **sampler}
    out["sampler"] = {
        "n_chains": _integer(merged, "n_chains", "sampler.", lo=1),
        "n_iter": _integer(merged, "n_iter", "sampler.", lo=2),
        "n_burnin": _integer(merged, "n_burnin", "sampler.", lo=0),
        "target_acceptance": _number(
            merged, "target_acceptance", "sampler.", lo=0, hi=1, lo_open=True, hi_open=True
        ),
    }
    if out["sampler"]["n_burnin"] >= out["sampler"]["n_iter"]:
        raise ConfigError("sampler.n_burnin: must be < sampler.n_iter")

    methods = cfg.get("methods", _TOP_DEFAULTS["methods"])
    if not isinstance(methods, list) or not methods:
        raise ConfigError("methods: expected a nonempty list of method names")
    known = {m.value for m in Method}
    for name in methods:
        if name not in known:
            raise ConfigError(f"methods: unknown method {name!r} (choose from {sorted(known)})")
    out["methods"] = list(methods)

    out["n_replicates"] = _integer(
        {"n_replicates": cfg.get("n_replicates", _TOP_DEFAULTS["n_replicates"])},
        "n_replicates",
        "",
        lo=1,
    )
    out["master_seed"] = _integer(
        {"master_seed": cfg.get("master_seed", _TOP_DEFAULTS["master_seed"])},
        "master_seed",
        "",
        lo=0,
    )
    out["alpha"] = _number(
        {"alpha": cfg.get("alpha", _TOP_DEFAULTS["alpha"])},
        "alpha",
        "",
        lo=0,
        hi=1,
        lo_open=True,
        hi_open=True,
    )

    mode = cfg.get("commensurate_scale_mode", _TOP_DEFAULTS["commensurate_scale_mode"])
    if mode not in COMMENSURATE_SCALE_MODES:
        raise ConfigError(
            f"commensurate_scale_mode: unknown mode {mode!r} "
            f"(choose from {sorted(COMMENSURATE_SCALE_MODES)})"
        )
    out["commensurate_scale_mode"] = mode

    planner = cfg.get("planner")
    if planner is not None:
        if not isinstance(planner, dict):
            raise ConfigError("planner: expected an object")
        _check_unknown(planner, _PLANNER_KEYS, "planner.")
        merged = {
            "n_experimental": 450,
            "n_control": 450,
            "accrual_rate": 34.0,
            "external_rate": 11.3,
            "t_historic": 0.0,
            "baseline_hazard": 0.043,
            "hr_experimental": 0.78,
            "p_lost": 0.05,
            "target_events": 655.0,
            "initial_ratio": 1.0,
            **planner,
        }
        out["planner"] = {
            "n_experimental": _integer(merged, "n_experimental", "planner.", lo=1),
            "n_control": _integer(merged, "n_control", "planner.", lo=1),
            "accrual_rate": _number(merged, "accrual_rate", "planner.", lo=0, lo_open=True),
            "external_rate": _number(merged, "external_rate", "planner.", lo=0),
            "t_historic": _number(merged, "t_historic", "planner.", lo=0),
            "baseline_hazard": _number(merged, "baseline_hazard", "planner.", lo=0, lo_open=True),
            "hr_experimental": _number(merged, "hr_experimental", "planner.", lo=0, lo_open=True),
            "p_lost": _number(merged, "p_lost", "planner.", lo=0, hi=1, hi_open=True),
            "target_events": _number(merged, "target_events", "planner.", lo=0),
            "initial_ratio": _number(merged, "initial_ratio", "planner.", lo=0, lo_open=True),
        }
    else:
        out["planner"] = None

    return out


def config_digest(resolved: dict) -> str:
    """SHA-256 of the canonical JSON encoding of a resolved config."""
    canonical = json.dumps(resolved, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def build_scenario(resolved: dict) -> ScenarioConfig:
    design = DesignInputs(**resolved["design"])
    return ScenarioConfig(
        design=design,
        tuning=TuningParameters(**resolved["tuning"]),
        methods=tuple(Method(name) for name in resolved["methods"]),
        n_replicates=resolved["n_replicates"],
        master_seed=resolved["master_seed"],
        alpha=resolved["alpha"],
        sampler=SamplerConfig(seed=0, **resolved["sampler"]),
        hr_experimental_grid=tuple(resolved["grid"]["hr_experimental"]),
        hr_external_grid=tuple(resolved["grid"]["hr_external"]),
        commensurate_scale_mode=resolved["commensurate_scale_mode"],
    )


def build_planner_inputs(resolved: dict) -> PlannerInputs:
    if resolved.get("planner") is None:
        raise ConfigError("planner: section required for the plan command")
    return PlannerInputs(**resolved["planner"])


def scenario_overrides(resolved: dict, seed: int | None, reps: int | None) -> dict:
    """Apply CLI overrides onto a resolved config (returns a new dict)."""
    out = json.loads(json.dumps(resolved))
    if seed is not None:
        if seed < 0:
            raise ConfigError("seed: must be >= 0")
        out["master_seed"] = seed
    if reps is not None:
        if reps < 1:
            raise ConfigError("reps: must be >= 1")
        out["n_replicates"] = reps
    return out
