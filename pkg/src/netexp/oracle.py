"""Exact moments by complete enumeration of a design's support.

This is the ground-truth channel: it shares nothing with the closed forms
beyond :func:`~netexp.outcomes.evaluate_batch` and the estimator weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .designs import DEFAULT_ENUMERATION_CAP, Design, ExactLaw
from .estimators import BaselineInfo, WeightedLinearEstimator, estimate_batch
from .outcomes import HaneModel, evaluate_batch

CHUNK = 4096
NEGATIVE_VARIANCE_TOL = 1e-12


@dataclass(frozen=True)
class ExactMoments:
    mean: float
    variance: float
    support_size: int


def law_moments(law: ExactLaw, values) -> tuple[float, float]:
    """Probability-weighted mean and (two-pass) variance of per-support-point ``values``."""
    values = np.asarray(values, dtype=np.float64)
    probs = law.probs
    mean = math.fsum((probs * values).tolist())
    var = math.fsum((probs * (values - mean) ** 2).tolist())
    if -NEGATIVE_VARIANCE_TOL <= var < 0:
        var = 0.0
    return mean, var


def estimator_values(
    model: HaneModel, e: WeightedLinearEstimator, law: ExactLaw, b: BaselineInfo | None = None
) -> np.ndarray:
    """Estimate at every support point, in chunks to bound memory."""
    out = np.empty(law.size)
    Z = law.assignments
    for start in range(0, law.size, CHUNK):
        block = Z[start : start + CHUNK]
        out[start : start + CHUNK] = estimate_batch(e, block, evaluate_batch(model, block), b)
    return out


def exact_estimator_moments(
    model: HaneModel,
    e: WeightedLinearEstimator,
    d: Design,
    b: BaselineInfo | None = None,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> ExactMoments:
    """Exact mean and variance of an estimator over the full support of ``d``."""
    if model.n != d.n or e.n != d.n:
        raise ValueError(f"size mismatch: model {model.n}, estimator {e.n}, design {d.n}")
    law = d.enumerate(cap)
    mean, var = law_moments(law, estimator_values(model, e, law, b))
    return ExactMoments(mean, var, law.size)


def _product(Z: np.ndarray, idx) -> np.ndarray:
    return np.prod(Z[:, list(idx)].astype(np.float64), axis=1)


def exact_design_moment(d: Design, indices, kind: str = "raw", cap: int = DEFAULT_ENUMERATION_CAP) -> float:
    """``E[prod z_idx]`` (``kind="raw"``) or the matching covariance (``kind="central"``).

    Central moments split the index list by length: 1 -> ``Var[z_i]``,
    2 -> ``Cov[z_i, z_j]``, 3 -> ``Cov[z_i, z_j z_k]``, 4 -> ``Cov[z_i z_j, z_k z_l]``.
    """
    indices = [int(i) for i in indices]
    if not 1 <= len(indices) <= 4:
        raise ValueError("between 1 and 4 indices are supported")
    for i in indices:
        if not 0 <= i < d.n:
            raise IndexError(f"node id {i} out of range for n={d.n}")
    if kind not in ("raw", "central"):
        raise ValueError(f"kind must be 'raw' or 'central', got {kind!r}")
    law = d.enumerate(cap)
    Z = law.assignments
    if kind == "raw":
        return law.expectation(_product(Z, indices))
    split = {1: (indices, indices), 2: (indices[:1], indices[1:]), 3: (indices[:1], indices[1:]), 4: (indices[:2], indices[2:])}
    left, right = split[len(indices)]
    x, y = _product(Z, left), _product(Z, right)
    ex, ey = law.expectation(x), law.expectation(y)
    return law.expectation((x - ex) * (y - ey))
