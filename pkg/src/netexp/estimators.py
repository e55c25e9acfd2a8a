"""Individually weighted linear estimators.

Every estimator has the single form ``sum_i (w_i z_i + v_i (1 - z_i)) (y_i - adj_i)``
with signed ``v``; ``adj`` is zero, an individual baseline estimate, or a common
population-mean estimate depending on ``baseline_mode``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from ._validation import check_assignment, check_assignments, check_vector, frozen
from .designs import CRD, Bernoulli, ClusterRD, Design, SaturationRD, SymmetryReport, check_symmetry
from .network import InterferenceGraph

BASELINE_MODES = ("none", "subtract_individual", "subtract_population_mean")


class EstimatorConstructionError(ValueError):
    """The requested estimator does not exist for this design."""


class MissingBaseline(ValueError):
    """The estimator needs baseline information that was not supplied."""


class DesignWarning(UserWarning):
    """The design violates a condition the estimator needs to be unbiased."""


@dataclass(frozen=True, eq=False)
class WeightedLinearEstimator:
    w: np.ndarray
    v: np.ndarray
    baseline_mode: str = "none"
    label: str = "custom"
    target: str | None = None
    notes: tuple = ()

    def __post_init__(self):
        w = check_vector(self.w, name="w")
        v = check_vector(self.v, w.shape[0], "v")
        if self.baseline_mode not in BASELINE_MODES:
            raise ValueError(f"baseline_mode must be one of {BASELINE_MODES}, got {self.baseline_mode!r}")
        object.__setattr__(self, "w", frozen(w.copy()))
        object.__setattr__(self, "v", frozen(v.copy()))
        object.__setattr__(self, "notes", tuple(self.notes))

    @property
    def n(self) -> int:
        return self.w.shape[0]

    def coefficients(self, z) -> np.ndarray:
        """Per-unit multiplier ``w_i z_i + v_i (1 - z_i)`` of the adjusted outcome."""
        return np.where(np.asarray(z) == 1, self.w, self.v)

    def __repr__(self):
        return f"WeightedLinearEstimator(label={self.label!r}, n={self.n}, baseline_mode={self.baseline_mode!r})"


@dataclass(frozen=True, eq=False)
class BaselineInfo:
    """What is known about the baselines ``alpha`` before the experiment.

    ``alpha_hat`` is a per-node estimate (exact or noisy); ``mean`` a population
    mean estimate.  Build with the classmethods.
    """

    mode: str
    alpha_hat: np.ndarray | None = None
    mean: float | None = None
    sample_ids: np.ndarray | None = None

    @classmethod
    def exact_individual(cls, alpha) -> "BaselineInfo":
        a = frozen(check_vector(alpha, name="alpha").copy())
        return cls("exact_individual", alpha_hat=a, mean=math.fsum(a.tolist()) / a.size)

    @classmethod
    def exact_population_mean(cls, alpha) -> "BaselineInfo":
        a = check_vector(alpha, name="alpha")
        return cls("exact_population_mean", mean=math.fsum(a.tolist()) / a.size)

    @classmethod
    def population_mean(cls, value: float) -> "BaselineInfo":
        return cls("exact_population_mean", mean=float(value))

    @classmethod
    def survey(cls, sample_ids, sampled_alphas) -> "BaselineInfo":
        ids = np.asarray(sample_ids, dtype=np.int64)
        vals = check_vector(sampled_alphas, ids.size, "sampled_alphas")
        if ids.size == 0:
            raise ValueError("survey needs at least one sampled node")
        if np.unique(ids).size != ids.size or ids.min() < 0:
            raise ValueError("survey sample ids must be distinct non-negative node ids")
        return cls("survey", mean=math.fsum(vals.tolist()) / vals.size, sample_ids=frozen(ids.copy()))

    @classmethod
    def noisy(cls, alpha_hat) -> "BaselineInfo":
        a = frozen(check_vector(alpha_hat, name="alpha_hat").copy())
        return cls("noisy", alpha_hat=a, mean=math.fsum(a.tolist()) / a.size)

    @classmethod
    def none(cls) -> "BaselineInfo":
        return cls("none")

    def adjustment(self, mode: str, n: int) -> np.ndarray:
        """Per-node amount subtracted from outcomes for an estimator's ``baseline_mode``."""
        if mode == "none":
            return np.zeros(n)
        if mode == "subtract_individual":
            if self.alpha_hat is None:
                raise MissingBaseline(f"estimator needs individual baselines; baseline info {self.mode!r} has none")
            if self.alpha_hat.shape[0] != n:
                raise ValueError(f"baseline vector has length {self.alpha_hat.shape[0]}, expected {n}")
            if self.sample_ids is not None and self.sample_ids.max() >= n:
                raise ValueError("survey sample id out of range")
            return np.asarray(self.alpha_hat)
        if self.mean is None:
            raise MissingBaseline(f"estimator needs a population-mean baseline; baseline info {self.mode!r} has none")
        if self.sample_ids is not None and self.sample_ids.max() >= n:
            raise ValueError("survey sample id out of range")
        return np.full(n, self.mean)


def estimate(e: WeightedLinearEstimator, z, y, b: BaselineInfo | None = None) -> float:
    """Evaluate the estimator on one realized assignment and outcome vector."""
    z = check_assignment(z, e.n)
    y = check_vector(y, e.n, "outcomes")
    b = b if b is not None else BaselineInfo.none()
    adj = b.adjustment(e.baseline_mode, e.n)
    return math.fsum((e.coefficients(z) * (y - adj)).tolist())


def estimate_batch(e: WeightedLinearEstimator, Z, Y, b: BaselineInfo | None = None) -> np.ndarray:
    """Row-wise :func:`estimate` for stacked assignments and outcomes."""
    Z = check_assignments(Z, e.n)
    Y = np.asarray(Y, dtype=np.float64)
    if Y.shape != Z.shape:
        raise ValueError(f"outcome matrix shape {Y.shape} does not match assignments {Z.shape}")
    b = b if b is not None else BaselineInfo.none()
    adj = b.adjustment(e.baseline_mode, e.n)
    coef = np.where(Z == 1, e.w, e.v)
    return np.einsum("ij,ij->i", coef, Y - adj)


# --------------------------------------------------------------------------
# Constructors
# --------------------------------------------------------------------------


def _interior_marginals(d: Design, what: str) -> np.ndarray:
    mu = np.asarray(d.marginals(), dtype=np.float64)
    if np.any(mu <= 0) or np.any(mu >= 1):
        raise EstimatorConstructionError(f"{what} needs 0 < E[z_i] < 1 for every unit")
    return mu


def _report(d: Design, report, graph) -> SymmetryReport:
    if report is not None:
        return report
    if graph is None:
        raise EstimatorConstructionError("need a SymmetryReport or the interference graph to check the design")
    return check_symmetry(d, graph)


def ht_sutva(d: Design) -> WeightedLinearEstimator:
    """Horvitz-Thompson weights as classically written under SUTVA: both arms weighted positively."""
    mu = _interior_marginals(d, "ht_sutva")
    n = d.n
    return WeightedLinearEstimator(1 / (n * mu), 1 / (n * (1 - mu)), "none", "ht_sutva", None)


def difference_in_means(d: Design) -> WeightedLinearEstimator:
    """Treated mean minus control mean, for designs with a deterministic treated count."""
    n = d.n
    if isinstance(d, CRD):
        m = d.m
    elif isinstance(d, SaturationRD):
        m = int(sum(d.treated))
    elif isinstance(d, ClusterRD):
        sizes = d.partition.sizes
        if not d.partition.is_uniform():
            raise EstimatorConstructionError("difference_in_means under ClusterRD needs equal cluster sizes")
        m = int(sizes[0]) * d.m_clusters
    else:
        raise EstimatorConstructionError("difference_in_means needs a design with a fixed number of treated units")
    if not 0 < m < n:
        raise EstimatorConstructionError("difference_in_means needs both arms non-empty")
    return WeightedLinearEstimator(np.full(n, 1 / m), np.full(n, -1 / (n - m)), "none", "difference_in_means", "tte")


def tte_ht(d: Design) -> WeightedLinearEstimator:
    """The only candidate unbiased unadjusted TTE estimator: ``z_i/E[z_i] - (1-z_i)/E[1-z_i]``, scaled by ``1/n``."""
    mu = _interior_marginals(d, "tte_ht")
    n = d.n
    return WeightedLinearEstimator(1 / (n * mu), -1 / (n * (1 - mu)), "none", "tte_ht", "tte")


def tte_adjusted_simple(d: Design) -> WeightedLinearEstimator:
    """``(1/n) sum_i (y_i - alpha_i) / E[z_i]``; unbiased exactly when marginals agree across edges."""
    mu = np.asarray(d.marginals(), dtype=np.float64)
    if np.any(mu <= 0):
        raise EstimatorConstructionError("tte_adjusted_simple needs E[z_i] > 0 for every unit")
    w = 1 / (d.n * mu)
    return WeightedLinearEstimator(w, w, "subtract_individual", "tte_adjusted_simple", "tte")


def tte_adjusted(
    d: Design,
    report: SymmetryReport | None = None,
    graph: InterferenceGraph | None = None,
    baseline: str | None = None,
    allow_biased: bool = False,
) -> WeightedLinearEstimator:
    """Baseline-adjusted TTE estimator.

    With a common marginal ``p`` this is ``(mean(y) - mean(alpha_hat)) / p`` and
    needs only a population-mean baseline.  Otherwise it uses per-node weights
    ``w_i = 1/(n E[z_i])``, ``v_i = rho_i/(n E[1-z_i])`` and individual baselines.

    ``baseline`` forces ``"population_mean"`` or ``"individual"``.  With
    ``allow_biased`` a design failing the symmetry check falls back to
    :func:`tte_adjusted_simple` instead of raising.
    """
    if baseline not in (None, "population_mean", "individual"):
        raise ValueError(f"baseline must be 'population_mean' or 'individual', got {baseline!r}")
    mu = _interior_marginals(d, "tte_adjusted")
    n = d.n
    p = d.uniform_marginal()
    if p is not None and baseline != "individual":
        w = np.full(n, 1 / (n * p))
        return WeightedLinearEstimator(w, w, "subtract_population_mean", "tte_adjusted", "tte")
    if baseline == "population_mean":
        raise EstimatorConstructionError(
            "a population-mean baseline suffices only when all units share one treatment probability"
        )
    if p is not None:
        w = np.full(n, 1 / (n * p))
        return WeightedLinearEstimator(w, w, "subtract_individual", "tte_adjusted", "tte")
    rep = _report(d, report, graph)
    if rep.equal_marginals:
        w = 1 / (n * mu)
        return WeightedLinearEstimator(w, w, "subtract_individual", "tte_adjusted", "tte")
    if rep.rho_tte is not None:
        w = 1 / (n * mu)
        v = rep.rho_tte / (n * (1 - mu))
        return WeightedLinearEstimator(w, v, "subtract_individual", "tte_adjusted", "tte")
    if allow_biased:
        e = tte_adjusted_simple(d)
        return WeightedLinearEstimator(
            e.w, e.v, e.baseline_mode, e.label, "tte", ("design fails the symmetry condition; estimate is biased",)
        )
    raise EstimatorConstructionError(
        "design has unequal marginals across edges and no per-node rho; no unbiased adjusted TTE estimator"
    )


def ate_ht(d: Design) -> WeightedLinearEstimator:
    """Horvitz-Thompson contrast for the direct effect; unbiased only if treatments are independent across edges."""
    mu = _interior_marginals(d, "ate_ht")
    n = d.n
    notes = ()
    if not isinstance(d, Bernoulli):
        notes = ("design does not randomize units independently; bias expected under interference",)
        warnings.warn(notes[0], DesignWarning, stacklevel=2)
    return WeightedLinearEstimator(1 / (n * mu), -1 / (n * (1 - mu)), "none", "ate_ht", "ate", notes)


def ate_adjusted(
    d: Design,
    report: SymmetryReport | None = None,
    graph: InterferenceGraph | None = None,
    approximate: bool = False,
) -> WeightedLinearEstimator:
    """Baseline-adjusted direct-effect estimator with ``rho_i = P(z_i=1 | z_k=1)``.

    ``approximate`` selects the CRD variant that subtracts a population-mean
    baseline instead of individual ones; it is slightly biased at finite n.
    """
    mu = _interior_marginals(d, "ate_adjusted")
    rep = _report(d, report, graph)
    if rep.rho_ate is None:
        raise EstimatorConstructionError(f"no valid rho for ate_adjusted: {rep.failures.get('ate', 'unknown')}")
    rho = np.asarray(rep.rho_ate)
    if np.any(rho >= 1):
        raise EstimatorConstructionError("ate_adjusted needs rho_i < 1")
    n = d.n
    w = 1 / (n * mu)
    v = -rho / (n * mu * (1 - rho))
    if approximate:
        if not isinstance(d, CRD):
            raise EstimatorConstructionError("the population-mean ate variant is defined for CRD")
        return WeightedLinearEstimator(w, v, "subtract_population_mean", "ate_adjusted_approx", "ate")
    return WeightedLinearEstimator(w, v, "subtract_individual", "ate_adjusted", "ate")


def aie_adjusted(
    d: Design,
    report: SymmetryReport | None = None,
    graph: InterferenceGraph | None = None,
    approximate: bool = False,
) -> WeightedLinearEstimator:
    """Baseline-adjusted interference-effect estimator: control units only, ``rho_i = P(z_k=1 | z_i=0)``."""
    mu = np.asarray(d.marginals(), dtype=np.float64)
    if np.any(mu >= 1):
        raise EstimatorConstructionError("aie_adjusted needs E[1 - z_i] > 0 for every unit")
    rep = _report(d, report, graph)
    if rep.rho_aie is None:
        raise EstimatorConstructionError(f"no valid rho for aie_adjusted: {rep.failures.get('aie', 'unknown')}")
    rho = np.asarray(rep.rho_aie)
    if np.any(rho <= 0):
        raise EstimatorConstructionError("aie_adjusted needs rho_i > 0")
    n = d.n
    w = np.zeros(n)
    v = 1 / (n * rho * (1 - mu))
    if approximate:
        if not isinstance(d, CRD):
            raise EstimatorConstructionError("the population-mean aie variant is defined for CRD")
        return WeightedLinearEstimator(w, v, "subtract_population_mean", "aie_adjusted_approx", "aie")
    return WeightedLinearEstimator(w, v, "subtract_individual", "aie_adjusted", "aie")


# --------------------------------------------------------------------------
# Coefficient-matching constraints
# --------------------------------------------------------------------------


def unbiasedness_system(d: Design, g: InterferenceGraph, target: str, adjusted: bool = False):
    """Linear constraints on ``(w, v)`` for unbiasedness over all HANE parameter values.

    Unknowns are stacked as ``[w_0..w_{n-1}, v_0..v_{n-1}]``.  One row per
    baseline (dropped when ``adjusted``), per direct effect and per edge.
    Returns ``(A, rhs)``.
    """
    if target not in ("tte", "ate", "aie"):
        raise ValueError(f"target must be tte, ate or aie, got {target!r}")
    n = d.n
    mu = np.asarray(d.marginals(), dtype=np.float64)
    rows, rhs = [], []
    if not adjusted:
        for i in range(n):
            r = np.zeros(2 * n)
            r[i], r[n + i] = mu[i], 1 - mu[i]
            rows.append(r)
            rhs.append(0.0)
    for i in range(n):
        r = np.zeros(2 * n)
        r[i] = mu[i]
        rows.append(r)
        rhs.append(0.0 if target == "aie" else 1 / n)
    E = d.joint2_many(g.dst, g.src)
    for k, i, e_ik in zip(g.src.tolist(), g.dst.tolist(), E.tolist()):
        r = np.zeros(2 * n)
        r[i], r[n + i] = e_ik, mu[k] - e_ik
        rows.append(r)
        rhs.append(0.0 if target == "ate" else 1 / n)
    return np.array(rows).reshape(-1, 2 * n), np.array(rhs)


def find_unbiased_weights(d: Design, g: InterferenceGraph, target: str, adjusted: bool = False, tol: float = 1e-9):
    """Least-squares solve of :func:`unbiasedness_system`; ``None`` when it is infeasible."""
    A, rhs = unbiasedness_system(d, g, target, adjusted)
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    if np.max(np.abs(A @ sol - rhs), initial=0.0) > tol:
        return None
    n = d.n
    return sol[:n], sol[n:]


# --------------------------------------------------------------------------
# JSON estimator specs
# --------------------------------------------------------------------------

ESTIMATOR_NAMES = (
    "ht_sutva",
    "difference_in_means",
    "tte_ht",
    "tte_adjusted",
    "tte_adjusted_simple",
    "ate_ht",
    "ate_adjusted",
    "ate_adjusted_approx",
    "aie_adjusted",
    "aie_adjusted_approx",
)


def estimator_from_spec(spec, d: Design, graph: InterferenceGraph, report: SymmetryReport | None = None):
    """Build an estimator from ``{"name": ..., "baseline": "population_mean" | "individual"}`` or a bare name."""
    if isinstance(spec, str):
        spec = {"name": spec}
    name = spec.get("name")
    if name not in ESTIMATOR_NAMES:
        raise ValueError(f"unknown estimator {name!r}; choose from {', '.join(ESTIMATOR_NAMES)}")
    baseline = spec.get("baseline")
    if baseline not in (None, "population_mean", "individual", "none"):
        raise ValueError(f"estimator baseline must be 'population_mean' or 'individual', got {baseline!r}")
    if name in ("ht_sutva", "difference_in_means", "tte_ht", "ate_ht"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", DesignWarning)
            return {"ht_sutva": ht_sutva, "difference_in_means": difference_in_means, "tte_ht": tte_ht, "ate_ht": ate_ht}[name](d)
    report = report if report is not None else check_symmetry(d, graph)
    if name == "tte_adjusted":
        return tte_adjusted(d, report, baseline=baseline, allow_biased=bool(spec.get("allow_biased", True)))
    if name == "tte_adjusted_simple":
        return tte_adjusted_simple(d)
    if name.startswith("ate_adjusted"):
        return ate_adjusted(d, report, approximate=name.endswith("approx") or baseline == "population_mean")
    return aie_adjusted(d, report, approximate=name.endswith("approx") or baseline == "population_mean")
