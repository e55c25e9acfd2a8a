"""Replicated sampling of estimators with parallelism-independent results.

Replicate ``r`` draws from its own generator seeded by
``SeedSequence(master_seed, spawn_key=(r,))``, so every replicate value is
fixed by ``(master_seed, r)`` alone.  Replicates are processed in fixed-size
chunks on a thread pool and reduced in index order.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .designs import Design
from .estimators import BaselineInfo, MissingBaseline, WeightedLinearEstimator, estimate_batch
from .outcomes import HaneModel, evaluate_batch

CHUNK_SIZE = 512
THREADS_ENV = "NETEXP_THREADS"


@dataclass(frozen=True)
class McConfig:
    """``survey_size`` re-draws a uniform sample of that many baselines in every replicate."""

    replicates: int
    master_seed: int
    keep_replicate_values: bool = False
    threads: int | None = None
    survey_size: int | None = None

    def __post_init__(self):
        if isinstance(self.replicates, bool) or int(self.replicates) != self.replicates or self.replicates < 2:
            raise ValueError(f"replicates must be an integer >= 2, got {self.replicates!r}")
        if isinstance(self.master_seed, bool) or int(self.master_seed) != self.master_seed or self.master_seed < 0:
            raise ValueError(f"master_seed must be a non-negative integer, got {self.master_seed!r}")
        if self.threads is not None and self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.survey_size is not None and self.survey_size < 1:
            raise ValueError("survey_size must be >= 1")
        object.__setattr__(self, "replicates", int(self.replicates))
        object.__setattr__(self, "master_seed", int(self.master_seed))


@dataclass(frozen=True, eq=False)
class McResult:
    empirical_mean: float
    empirical_variance: float
    stderr_of_mean: float
    replicates: int
    values: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "empirical_mean": self.empirical_mean,
            "empirical_variance": self.empirical_variance,
            "stderr_of_mean": self.stderr_of_mean,
            "replicates": self.replicates,
        }


def resolve_threads(requested: int | None = None) -> int:
    """Worker count: explicit request, else ``NETEXP_THREADS``, else available CPUs."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {env!r}") from None
        if value < 1:
            raise ValueError(f"{THREADS_ENV} must be a positive integer, got {env!r}")
        return value
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def replicate_rng(master_seed: int, r: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(r,)))


def _chunk_values(model, e, d, b, cfg, start, stop) -> np.ndarray:
    n = d.n
    Z = np.empty((stop - start, n), dtype=np.uint8)
    means = np.empty(stop - start) if cfg.survey_size else None
    for row, r in enumerate(range(start, stop)):
        rng = replicate_rng(cfg.master_seed, r)
        Z[row] = d.sample(rng)
        if means is not None:
            ids = rng.choice(n, cfg.survey_size, replace=False)
            means[row] = math.fsum(model.alpha[ids].tolist()) / cfg.survey_size
    Y = evaluate_batch(model, Z)
    if means is None:
        return estimate_batch(e, Z, Y, b)
    coef = np.where(Z == 1, e.w, e.v)
    return np.einsum("ij,ij->i", coef, Y) - coef.sum(axis=1) * means


def run_mc(
    model: HaneModel,
    e: WeightedLinearEstimator,
    d: Design,
    b: BaselineInfo | None,
    cfg: McConfig,
) -> McResult:
    """Empirical mean, unbiased variance and standard error over ``cfg.replicates`` draws."""
    if model.n != d.n or e.n != d.n:
        raise ValueError(f"size mismatch: model {model.n}, estimator {e.n}, design {d.n}")
    if cfg.survey_size is not None:
        if e.baseline_mode != "subtract_population_mean":
            raise MissingBaseline("a per-replicate baseline survey only serves population-mean estimators")
        if cfg.survey_size > d.n:
            raise ValueError(f"survey_size {cfg.survey_size} exceeds the population size {d.n}")
    elif e.baseline_mode != "none":
        (b if b is not None else BaselineInfo.none()).adjustment(e.baseline_mode, d.n)
    R = cfg.replicates
    bounds = [(s, min(s + CHUNK_SIZE, R)) for s in range(0, R, CHUNK_SIZE)]
    threads = resolve_threads(cfg.threads)
    if threads == 1 or len(bounds) == 1:
        parts = [_chunk_values(model, e, d, b, cfg, s, t) for s, t in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda st: _chunk_values(model, e, d, b, cfg, *st), bounds))
    values = np.concatenate(parts)
    mean = math.fsum(values.tolist()) / R
    var = math.fsum(((values - mean) ** 2).tolist()) / (R - 1)
    return McResult(mean, var, math.sqrt(var / R), R, values if cfg.keep_replicate_values else None)
