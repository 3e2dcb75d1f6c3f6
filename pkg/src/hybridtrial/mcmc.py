"""Posterior sampler for the package's low-dimensional Bayesian models.

An adaptive per-coordinate random-walk Metropolis sampler with chain
management, burn-in, and posterior summaries. Targets may be arbitrary
Python callables (parameter vector -> log density) or, for the built-in
exponential-family models, a :class:`CompiledTarget` that routes through the
numba kernel for speed. Both paths run the same algorithm and consume the
same pre-generated random streams.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels


class InitializationError(ValueError):
    """The log density is not finite at the initial point."""


@dataclass(frozen=True)
class SamplerConfig:
    n_chains: int = 4
    n_iter: int = 10_000
    n_burnin: int = 5_000
    target_acceptance: float = 0.3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_chains < 1:
            raise ValueError("n_chains must be >= 1")
        if not 0 <= self.n_burnin < self.n_iter:
            raise ValueError("need 0 <= n_burnin < n_iter")
        if not 0 < self.target_acceptance < 1:
            raise ValueError("target_acceptance must be in (0, 1)")


@dataclass(frozen=True)
class CompiledTarget:
    """A log density evaluated by the numba kernel.

    ``kind`` selects the model family in :mod:`hybridtrial._kernels`;
    ``data`` holds its sufficient statistics and hyperparameters. Calling
    the target evaluates the identical compiled log density, so the generic
    sampler path and the kernel path see the same function.
    """

    kind: int
    data: np.ndarray
    dim: int

    def __call__(self, theta: np.ndarray) -> float:
        theta = np.asarray(theta, dtype=np.float64)
        return float(_kernels.logp(self.kind, theta, self.data))


@dataclass
class PosteriorDraws:
    """Retained draws from all chains, shape (n_chains, n_kept, n_params)."""

    draws: np.ndarray
    acceptance: np.ndarray  # post-burn-in acceptance rate, (n_chains, n_params)
    warnings: list[str] = field(default_factory=list)

    @property
    def n_params(self) -> int:
        return self.draws.shape[2]

    def pooled(self) -> np.ndarray:
        return self.draws.reshape(-1, self.n_params)


@dataclass
class PosteriorSummary:
    """Empirical posterior summaries with split-R-hat diagnostics.

    ``split_rhat`` entries are NaN when undefined (constant draws or chains
    too short to split).
    """

    mean: np.ndarray
    variance: np.ndarray
    split_rhat: np.ndarray
    n_draws: int
    _pooled: np.ndarray

    def quantile(self, q: float | np.ndarray, param: int | None = None) -> float | np.ndarray:
        if param is not None:
            return np.quantile(self._pooled[:, param], q)
        if self._pooled.shape[1] == 1:
            return np.quantile(self._pooled[:, 0], q)
        return np.quantile(self._pooled, q, axis=0)

    def max_rhat(self) -> float:
        finite = self.split_rhat[np.isfinite(self.split_rhat)]
        return float(np.max(finite)) if finite.size else float("nan")


def _run_chain_python(
    log_density: Callable[[np.ndarray], float],
    init: np.ndarray,
    n_burnin: int,
    target_acceptance: float,
    normals: np.ndarray,
    unifs: np.ndarray,
    out: np.ndarray,
    acc_out: np.ndarray,
) -> int:
    """Pure-Python mirror of :func:`hybridtrial._kernels.rwm_chain`."""
    n_iter = normals.shape[0]
    dim = init.shape[0]
    theta = init.copy()
    lp = log_density(theta)
    scales = np.full(dim, 0.5)
    window_accepts = np.zeros(dim)
    post_accepts = np.zeros(dim)
    window_index = 0
    stuck = 0
    kept = 0
    with np.errstate(divide="ignore"):
        for it in range(n_iter):
            for j in range(dim):
                old = theta[j]
                theta[j] = old + scales[j] * normals[it, j]
                lp_new = log_density(theta)
                if np.log(unifs[it, j]) < lp_new - lp:
                    lp = lp_new
                    window_accepts[j] += 1.0
                    if it >= n_burnin:
                        post_accepts[j] += 1.0
                else:
                    theta[j] = old
            if it < n_burnin and (it + 1) % _kernels.ADAPT_WINDOW == 0:
                window_index += 1
                step = min(0.5, 2.0 / np.sqrt(window_index))
                total = window_accepts.sum()
                rates = window_accepts / _kernels.ADAPT_WINDOW
                scales *= np.exp(step * (rates - target_acceptance))
                window_accepts[:] = 0.0
                if total == 0.0:
                    stuck = 1
            if it >= n_burnin:
                out[kept] = theta
                kept += 1
    acc_out[:] = post_accepts / (n_iter - n_burnin)
    return stuck


def sample(
    log_density: Callable[[np.ndarray], float],
    init: np.ndarray,
    config: SamplerConfig,
) -> PosteriorDraws:
    """Draw from a posterior with adaptive random-walk Metropolis.

    Chains use independent streams derived from ``config.seed`` (numpy
    SeedSequence spawn keys (0,), (1,), ...), so output is identical for a
    given config no matter how calls are scheduled. Proposal scales adapt
    per coordinate during burn-in and freeze afterward, preserving detailed
    balance for the retained draws.
    """
    init = np.asarray(init, dtype=np.float64)
    lp0 = log_density(init)
    if not np.isfinite(lp0):
        raise InitializationError(f"log density not finite at init: {lp0}")
    dim = init.shape[0]
    kept = config.n_iter - config.n_burnin
    draws = np.empty((config.n_chains, kept, dim))
    acceptance = np.empty((config.n_chains, dim))
    warnings: list[str] = []
    compiled = isinstance(log_density, CompiledTarget)
    root = np.random.SeedSequence(entropy=config.seed)
    for c, ss in enumerate(root.spawn(config.n_chains)):
        rng = np.random.default_rng(ss)
        normals = rng.standard_normal((config.n_iter, dim))
        unifs = rng.random((config.n_iter, dim))
        if compiled:
            stuck = _kernels.rwm_chain(
                log_density.kind,
                log_density.data,
                init,
                config.n_burnin,
                config.target_acceptance,
                normals,
                unifs,
                draws[c],
                acceptance[c],
            )
        else:
            stuck = _run_chain_python(
                log_density,
                init,
                config.n_burnin,
                config.target_acceptance,
                normals,
                unifs,
                draws[c],
                acceptance[c],
            )
        if stuck:
            warnings.append(f"chain {c}: no proposals accepted in a burn-in window")
    return PosteriorDraws(draws=draws, acceptance=acceptance, warnings=warnings)


def summarize(draws: PosteriorDraws | np.ndarray) -> PosteriorSummary:
    """Empirical mean, variance, quantiles, and split-R-hat of retained draws.

    Accepts :class:`PosteriorDraws` or an array shaped (n_chains, n_kept,
    n_params); 1-D or 2-D arrays are treated as a single chain. Callers
    wanting stable summaries should provide at least 100 retained draws;
    only empty input is rejected.
    """
    if isinstance(draws, PosteriorDraws):
        arr = draws.draws
    else:
        arr = np.asarray(draws, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[np.newaxis, :, np.newaxis]
        elif arr.ndim == 2:
            arr = arr[np.newaxis, :, :]
    if arr.size == 0:
        raise ValueError("no draws to summarize")
    n_chains, kept, dim = arr.shape
    pooled = arr.reshape(-1, dim)
    n = pooled.shape[0]
    mean = pooled.mean(axis=0)
    variance = pooled.var(axis=0, ddof=1) if n > 1 else np.full(dim, np.nan)
    return PosteriorSummary(
        mean=mean,
        variance=variance,
        split_rhat=_split_rhat(arr),
        n_draws=n,
        _pooled=pooled,
    )


def _split_rhat(arr: np.ndarray) -> np.ndarray:
    """Split-R-hat per parameter: each chain is halved, then the classic
    between/within comparison runs on the half-chains."""
    n_chains, kept, dim = arr.shape
    half = kept // 2
    if half < 2:
        return np.full(dim, np.nan)
    halves = np.concatenate([arr[:, :half, :], arr[:, kept - half :, :]], axis=0)
    within = halves.var(axis=1, ddof=1).mean(axis=0)
    between = half * halves.mean(axis=1).var(axis=0, ddof=1)
    out = np.full(dim, np.nan)
    ok = within > 0
    var_hat = (half - 1) / half * within[ok] + between[ok] / half
    out[ok] = np.sqrt(var_hat / within[ok])
    return out
