"""Closed-form bias and variance of weighted linear estimators under HANE.

Two layers:

* influence-based formulas for the baseline-adjusted TTE estimator, where the
  estimate is an inverse-probability-weighted sum ``(1/n) sum_k z_k L_k / E[z_k]``;
* a general machinery for any ``(w, v)``: the estimate is written as
  ``constant + sum_i L_i z_i + sum_{i<j} H_ij z_i z_j`` and its variance follows
  from the first four raw moments of the design.

Under an exchangeable fixed-count design (a CRD, or a CRD over clusters) the
moments only depend on how many distinct units are involved:
``mu_k = m(m-1)..(m-k+1) / N(N-1)..(N-k+1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_count, frozen
from .designs import CRD, Bernoulli, ClusterRD, Design, SaturationRD, counts_from_fractions, falling_ratio
from .estimators import BaselineInfo, WeightedLinearEstimator
from .network import Partition
from .outcomes import HaneModel


def _fsum(x) -> float:
    return math.fsum(np.asarray(x, dtype=np.float64).ravel().tolist())


def _popvar(x: np.ndarray) -> float:
    """Population variance (divisor n), two-pass."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return 0.0
    mean = _fsum(x) / x.size
    return _fsum((x - mean) ** 2) / x.size


# --------------------------------------------------------------------------
# Influence
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InfluenceProfile:
    """Per-unit influence ``L_i = beta_i + sum_k E[z_i] gamma_ik / E[z_k]`` and its population moments."""

    L: np.ndarray
    population_mean: float
    population_variance: float


@dataclass(frozen=True, eq=False)
class ClusterInfluence:
    """Cluster-level influence: scaled sums ``(T/n) sum_{i in tau} L_i`` and within-cluster population variances."""

    L_prime: np.ndarray
    V: np.ndarray


def _check_model_design(model: HaneModel, n: int):
    if model.n != n:
        raise ValueError(f"model has {model.n} units but the design has {n}")


def influence(model: HaneModel, d: Design) -> InfluenceProfile:
    """Influence of every unit on the adjusted TTE estimate under design ``d``."""
    _check_model_design(model, d.n)
    mu = np.asarray(d.marginals(), dtype=np.float64)
    if np.any(mu <= 0):
        raise ValueError("influence needs E[z_k] > 0 for every unit")
    g = model.graph
    L = model.beta + np.bincount(g.src, weights=mu[g.src] * g.gamma / mu[g.dst], minlength=g.n)
    return InfluenceProfile(frozen(L), _fsum(L) / L.size, _popvar(L))


def cluster_influence(model: HaneModel, partition: Partition) -> ClusterInfluence:
    """Equal-marginal influence aggregated per cluster."""
    _check_model_design(model, partition.n)
    g = model.graph
    L = model.beta + np.bincount(g.src, weights=g.gamma, minlength=g.n)
    T, n = partition.n_clusters, partition.n
    Lp = np.array([T / n * _fsum(L[partition.members(t)]) for t in range(T)])
    V = np.array([_popvar(L[partition.members(t)]) for t in range(T)])
    return ClusterInfluence(frozen(Lp), frozen(V))


# --------------------------------------------------------------------------
# Bias
# --------------------------------------------------------------------------


def bias_tte_ht(model: HaneModel, d: Design) -> float:
    """Bias of the unadjusted HT TTE estimator: ``(1/n) sum_{k->i} (Cov[z_i,z_k]/Var[z_i] - 1) gamma_ki``."""
    _check_model_design(model, d.n)
    mu = np.asarray(d.marginals(), dtype=np.float64)
    var = mu * (1 - mu)
    if np.any(var <= 0):
        raise ValueError("bias_tte_ht needs 0 < E[z_i] < 1 for every unit")
    g = model.graph
    if g.n_edges == 0:
        return 0.0
    k, i = g.src, g.dst
    cov = d.joint2_many(i, k) - mu[i] * mu[k]
    return _fsum((cov / var[i] - 1.0) * g.gamma) / g.n


def bias_tte_adjusted(model: HaneModel, d: Design) -> float:
    """Bias of ``(1/n) sum_i (y_i - alpha_i)/E[z_i]``: ``(1/n) sum_{i->k} (E[z_i]/E[z_k] - 1) gamma_ik``."""
    _check_model_design(model, d.n)
    mu = np.asarray(d.marginals(), dtype=np.float64)
    if np.any(mu <= 0):
        raise ValueError("bias_tte_adjusted needs E[z_i] > 0 for every unit")
    g = model.graph
    if g.n_edges == 0:
        return 0.0
    return _fsum((mu[g.src] / mu[g.dst] - 1.0) * g.gamma) / g.n


# --------------------------------------------------------------------------
# Influence-based variances of the adjusted TTE estimator
# --------------------------------------------------------------------------


def var_tte_adjusted_crd(model: HaneModel, n: int, m: int) -> float:
    """``(1-p)/(p(n-1)) * popvar(L)`` with ``p = m/n``."""
    n = check_count(n, 1, None, "n")
    m = check_count(m, 0, n, "m")
    if not 0 < m < n:
        raise ValueError("var_tte_adjusted_crd needs 0 < m < n")
    prof = influence(model, CRD(n, m))
    p = m / n
    return (1 - p) / (p * (n - 1)) * prof.population_variance


def var_tte_adjusted_cluster(model: HaneModel, partition: Partition, m_clusters: int) -> float:
    """``(1-p)/(p(T-1)) * popvar(L')`` for equal-size clusters, ``p = m_clusters/T``."""
    T = partition.n_clusters
    m_clusters = check_count(m_clusters, 0, T, "m_clusters")
    if not partition.is_uniform():
        raise ValueError(
            "var_tte_adjusted_cluster needs equal cluster sizes; use var_general_cluster for unequal clusters"
        )
    if not 0 < m_clusters < T:
        raise ValueError("var_tte_adjusted_cluster needs 0 < m_clusters < T")
    ci = cluster_influence(model, partition)
    p = m_clusters / T
    return (1 - p) / (p * (T - 1)) * _popvar(ci.L_prime)


def var_tte_adjusted_saturation(model: HaneModel, partition: Partition, p_tau) -> float:
    """``sum_tau (1-p_tau) n_tau^2 / (p_tau n^2 (n_tau-1)) V_tau`` with marginal-ratio influence.

    Clusters with ``p_tau`` in {0, 1} are deterministic and contribute nothing.
    """
    d = SaturationRD.from_fractions(partition, p_tau)
    prof = influence(model, d)
    n = partition.n
    total = []
    for tau, (size, m) in enumerate(zip(partition.sizes.tolist(), d.treated)):
        if m in (0, size):
            continue
        if size < 2:
            raise ValueError(f"cluster {tau} has a single unit with 0 < p_tau < 1")
        p = m / size
        V = _popvar(prof.L[partition.members(tau)])
        total.append((1 - p) * size**2 / (p * n**2 * (size - 1)) * V)
    return math.fsum(total)


# --------------------------------------------------------------------------
# L/H decomposition
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LHDecomposition:
    """``estimate(z) = constant + sum_i L_i z_i + sum_{i<j} H_ij z_i z_j``.

    ``H`` is stored sparsely over unordered pairs: ``pair_i < pair_j`` with values ``H``.
    """

    L: np.ndarray
    pair_i: np.ndarray
    pair_j: np.ndarray
    H: np.ndarray
    constant: float

    @property
    def n(self) -> int:
        return self.L.shape[0]

    def H_dense(self) -> np.ndarray:
        M = np.zeros((self.n, self.n))
        M[self.pair_i, self.pair_j] = self.H
        M[self.pair_j, self.pair_i] = self.H
        return M

    def value(self, z) -> float:
        z = np.asarray(z, dtype=np.float64)
        return self.constant + _fsum(self.L * z) + _fsum(self.H * z[self.pair_i] * z[self.pair_j])

    def values(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        return self.constant + Z @ self.L + (Z[:, self.pair_i] * Z[:, self.pair_j]) @ self.H


def _adjusted_alpha(model: HaneModel, e: WeightedLinearEstimator, baseline: BaselineInfo | None) -> np.ndarray:
    """``alpha - adj``: what remains of the baselines after the estimator's adjustment."""
    if e.baseline_mode == "none":
        return np.asarray(model.alpha)
    if baseline is None:
        if e.baseline_mode == "subtract_individual":
            return np.zeros(model.n)
        return model.alpha - _fsum(model.alpha) / model.n
    return model.alpha - baseline.adjustment(e.baseline_mode, model.n)


def lh_decompose(model: HaneModel, e: WeightedLinearEstimator, baseline: BaselineInfo | None = None) -> LHDecomposition:
    """Write the estimator as a quadratic polynomial in ``z``.

    With ``baseline=None`` an adjusting estimator uses the exact baselines
    (individual ones are removed entirely, a population mean leaves
    ``alpha - mean(alpha)``).
    """
    if e.n != model.n:
        raise ValueError(f"estimator has {e.n} weights but the model has {model.n} units")
    n = model.n
    a = _adjusted_alpha(model, e, baseline)
    w, v = np.asarray(e.w), np.asarray(e.v)
    g = model.graph
    k, i = g.src, g.dst
    L = (w - v) * a + w * model.beta + np.bincount(k, weights=v[i] * g.gamma, minlength=n)
    hv = (w[i] - v[i]) * g.gamma
    lo, hi = np.minimum(i, k), np.maximum(i, k)
    keys, inv = np.unique(lo.astype(np.int64) * n + hi, return_inverse=True)
    H = np.bincount(inv, weights=hv, minlength=keys.size) if keys.size else np.zeros(0)
    keep = H != 0
    keys, H = keys[keep], H[keep]
    constant = _fsum(v * a)
    return LHDecomposition(frozen(L), frozen(keys // n), frozen(keys % n), frozen(H), constant)


def decomposition_value(dec: LHDecomposition, z) -> float:
    return dec.value(z)


def expected_estimate(
    model: HaneModel, e: WeightedLinearEstimator, d: Design, baseline: BaselineInfo | None = None
) -> float:
    """Exact expectation of any weighted linear estimator from first and second design moments."""
    _check_model_design(model, d.n)
    dec = lh_decompose(model, e, baseline)
    mu = np.asarray(d.marginals(), dtype=np.float64)
    E2 = d.joint2_many(dec.pair_i, dec.pair_j) if dec.H.size else np.zeros(0)
    return math.fsum([dec.constant, _fsum(dec.L * mu), _fsum(dec.H * E2)])


# --------------------------------------------------------------------------
# General variance from L and H
# --------------------------------------------------------------------------


def _pair_sums(n: int, pi: np.ndarray, pj: np.ndarray, H: np.ndarray):
    """``D_i = sum_j H_ij``, ``h = sum H``, ``Q = sum H^2`` over unordered pairs."""
    D = np.bincount(pi, weights=H, minlength=n) + np.bincount(pj, weights=H, minlength=n)
    return D, _fsum(H), _fsum(H * H)


def _exchangeable_variance(L, pi, pj, H, mu) -> float:
    """Variance of ``sum L_i z_i + sum_{i<j} H_ij z_i z_j`` when ``E[prod_{i in A} z_i] = mu[|A|]``.

    Covariances are grouped by how many distinct units the two products share.
    Exact for any exchangeable design, including tiny and degenerate ones.
    """
    n = L.shape[0]
    mu1, mu2, mu3, mu4 = mu
    c11, c12 = mu1 - mu1 * mu1, mu2 - mu1 * mu1
    c_in, c_out = mu2 - mu1 * mu2, mu3 - mu1 * mu2
    d2, d3, d4 = mu2 - mu2 * mu2, mu3 - mu2 * mu2, mu4 - mu2 * mu2
    S, SL2 = _fsum(L), _fsum(L * L)
    t1 = c11 * SL2 + c12 * (S * S - SL2)
    if H.size == 0:
        return t1
    D, h, Q = _pair_sums(n, pi, pj, H)
    sum_pair_L = _fsum(H * (L[pi] + L[pj]))
    t2 = 2.0 * (c_in * sum_pair_L + c_out * (S * h - sum_pair_L))
    SD2 = _fsum(D * D)
    t3 = d2 * Q + d3 * (SD2 - 2 * Q) + d4 * (h * h - SD2 + Q)
    return math.fsum([t1, t2, t3])


def _crd_five_term(L, pi, pj, H, n: int, m: int) -> float:
    """CRD variance of ``sum L_i z_i + sum_{i<j} H_ij z_i z_j`` written with ``p = m/n``; needs ``n >= 4``."""
    p = m / n
    S = _fsum(L)
    t1 = (1 - p) * p * n * n / (n - 1) * _popvar(L)
    if H.size == 0:
        return t1
    D, h, Q = _pair_sums(n, pi, pj, H)
    q1, q2, q3 = (m - 1) / (n - 1), (m - 2) / (n - 2), (m - 3) / (n - 3)
    t2 = 2 * (1 - p) * p * (n * p - 1) / ((n - 1) * (n - 2)) * (n * _fsum(H * (L[pi] + L[pj])) - 2 * S * h)
    t3 = p * q1 * (q2 * q3 - p * q1) * h * h
    t4 = n * p * (1 - p) * (n * p - 1) * (n * p - 2) / ((n - 1) * (n - 2) * (n - 3)) * _fsum(D * D)
    t5 = n * p * (1 - p) * (n * p - 1) / ((n - 1) * (n - 2)) * (1 - (n * p - 2) / (n - 3)) * Q
    return math.fsum([t1, t2, t3, t4, t5])


def _clamp(x: float) -> float:
    return 0.0 if x < 0 and x >= -1e-12 * max(1.0, abs(x)) else x


def var_general_crd(
    model: HaneModel, e: WeightedLinearEstimator, n: int, m: int, baseline: BaselineInfo | None = None
) -> float:
    """Variance of any weighted linear estimator under CRD(n, m), via the five-term closed form."""
    n = check_count(n, 1, None, "n")
    m = check_count(m, 0, n, "m")
    if n < 4:
        raise ValueError("var_general_crd needs n >= 4")
    if not 0 < m < n:
        raise ValueError("var_general_crd needs 0 < m < n")
    _check_model_design(model, n)
    dec = lh_decompose(model, e, baseline)
    return _clamp(_crd_five_term(dec.L, dec.pair_i, dec.pair_j, dec.H, n, m))


def var_general_bernoulli(
    model: HaneModel, e: WeightedLinearEstimator, p: float, baseline: BaselineInfo | None = None
) -> float:
    """Variance of any weighted linear estimator under independent Bernoulli(p) assignment."""
    d = Bernoulli(model.n, p)
    dec = lh_decompose(model, e, baseline)
    return _clamp(_exchangeable_variance(dec.L, dec.pair_i, dec.pair_j, dec.H, (d.p, d.p**2, d.p**3, d.p**4)))


def _cluster_reduce(dec: LHDecomposition, partition: Partition):
    """Collapse unit-level ``L, H`` onto clusters (members of a cluster share one indicator)."""
    T = partition.n_clusters
    lab = partition.labels
    Lc = np.bincount(lab, weights=dec.L, minlength=T)
    ci, cj = lab[dec.pair_i], lab[dec.pair_j]
    same = ci == cj
    Lc = Lc + np.bincount(ci[same], weights=dec.H[same], minlength=T)
    lo, hi = np.minimum(ci[~same], cj[~same]), np.maximum(ci[~same], cj[~same])
    keys, inv = np.unique(lo.astype(np.int64) * T + hi, return_inverse=True)
    Hc = np.bincount(inv, weights=dec.H[~same], minlength=keys.size) if keys.size else np.zeros(0)
    return Lc, keys // T, keys % T, Hc


def var_general_cluster(
    model: HaneModel,
    e: WeightedLinearEstimator,
    partition: Partition,
    m_clusters: int,
    baseline: BaselineInfo | None = None,
) -> float:
    """Variance under ClusterRD: the CRD closed form applied at the cluster level; needs ``T >= 4``."""
    _check_model_design(model, partition.n)
    T = partition.n_clusters
    m_clusters = check_count(m_clusters, 0, T, "m_clusters")
    if T < 4:
        raise ValueError("var_general_cluster needs at least 4 clusters")
    if not 0 < m_clusters < T:
        raise ValueError("var_general_cluster needs 0 < m_clusters < T")
    Lc, pi, pj, Hc = _cluster_reduce(lh_decompose(model, e, baseline), partition)
    return _clamp(_crd_five_term(Lc, pi, pj, Hc, T, m_clusters))


# --------------------------------------------------------------------------
# Stratified (saturation) designs
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StratifiedTerms:
    """The four covariance families whose sum is the stratified variance.

    ``cov_a_b`` already carries the factor two from ``2 Cov[A, B]``.
    """

    var_a: float
    cov_a_b: float
    var_b: float
    cov_b_b: float

    @property
    def total(self) -> float:
        return math.fsum([self.var_a, self.cov_a_b, self.var_b, self.cov_b_b])


def stratified_variance_terms(
    model: HaneModel,
    e: WeightedLinearEstimator,
    partition: Partition,
    treated,
    baseline: BaselineInfo | None = None,
) -> StratifiedTerms:
    """Term families of the variance under independent within-cluster CRDs with ``treated[tau]`` units each.

    ``A_tau`` collects the terms inside cluster ``tau`` and ``B_{tau tau'}`` the
    cross-cluster pair terms.  Per-cluster moments are falling-factorial ratios,
    so clusters of any size (including fully treated or untreated ones) are exact.
    """
    _check_model_design(model, partition.n)
    n, T = partition.n, partition.n_clusters
    sizes = partition.sizes.tolist()
    treated = [check_count(c, 0, s, "treated count") for c, s in zip(treated, sizes)]
    if len(treated) != T:
        raise ValueError(f"need one treated count per cluster ({T}), got {len(treated)}")
    dec = lh_decompose(model, e, baseline)
    lab = partition.labels
    mu = np.array([[falling_ratio(m, s, k) for k in (1, 2, 3, 4)] for m, s in zip(treated, sizes)])
    mu1, mu2, mu3 = mu[:, 0], mu[:, 1], mu[:, 2]
    c11, c12 = mu1 - mu1**2, mu2 - mu1**2
    c_in, c_out = mu2 - mu1 * mu2, mu3 - mu1 * mu2

    ci, cj = lab[dec.pair_i], lab[dec.pair_j]
    within = ci == cj
    wi, wj, wH = dec.pair_i[within], dec.pair_j[within], dec.H[within]
    xi, xj, xH = dec.pair_i[~within], dec.pair_j[~within], dec.H[~within]

    # Var[A_tau]
    var_a = []
    for tau in range(T):
        members = partition.members(tau)
        local = np.full(n, -1)
        local[members] = np.arange(members.size)
        sel = lab[wi] == tau
        var_a.append(
            _exchangeable_variance(dec.L[members], local[wi[sel]], local[wj[sel]], wH[sel], tuple(mu[tau]))
        )

    # Within-cluster aggregates: D_h (within-cluster pair mass at h), S_tau, h_tau
    D = np.bincount(wi, weights=wH, minlength=n) + np.bincount(wj, weights=wH, minlength=n)
    S_tau = np.bincount(lab, weights=dec.L, minlength=T)
    h_tau = np.bincount(lab[wi], weights=wH, minlength=T)
    t = lab
    cov_Az = c11[t] * dec.L + c12[t] * (S_tau[t] - dec.L) + c_in[t] * D + c_out[t] * (h_tau[t] - D)

    # R[h, tau'] = sum_{k in tau'} H_hk over cross-cluster pairs (both orientations)
    R = np.zeros((n, T))
    np.add.at(R, (xi, lab[xj]), xH)
    np.add.at(R, (xj, lab[xi]), xH)

    # 2 Cov[A_tau, B_{tau tau'}] summed over tau and tau' != tau
    cov_a_b = 2.0 * _fsum(cov_Az[:, None] * R * mu1[None, :])

    # Var[B_{tau tau'}], tau < tau'
    var_b = []
    if xH.size:
        a, b = np.minimum(lab[xi], lab[xj]), np.maximum(lab[xi], lab[xj])
        # orient each cross pair as (unit in lower cluster, unit in upper cluster)
        u = np.where(lab[xi] == a, xi, xj)
        w_ = np.where(lab[xi] == a, xj, xi)
        block = a.astype(np.int64) * T + b
        for key in np.unique(block).tolist():
            s, s2 = divmod(key, T)
            sel = block == key
            Gv = xH[sel]
            rows = np.bincount(u[sel], weights=Gv, minlength=n)
            cols = np.bincount(w_[sel], weights=Gv, minlength=n)
            tot = _fsum(Gv)
            m1, m2, n1, n2 = mu1[s], mu2[s], mu1[s2], mu2[s2]
            var_b.append(
                math.fsum(
                    [
                        m2 * n2 * tot * tot,
                        m2 * (n1 - n2) * _fsum(cols * cols),
                        (m1 - m2) * n2 * _fsum(rows * rows),
                        (m1 - m2) * (n1 - n2) * _fsum(Gv * Gv),
                        -(m1 * n1 * tot) ** 2,
                    ]
                )
            )

    # Cov[B_{tau tau'}, B_{tau tau''}] over ordered tau' != tau'' sharing cluster tau
    cov_b_b = []
    if xH.size:
        for tau in range(T):
            members = partition.members(tau)
            Rt = R[members] * mu1[None, :]  # columns scaled by the partner cluster's marginal
            Rt[:, tau] = 0.0
            col = Rt.sum(axis=0)
            # sum over ordered distinct (tau', tau'') of c11 sum_h R'R'' + c12 (sum R' sum R'' - sum_h R'_h R''_h)
            gram = Rt.T @ Rt
            same = _fsum(gram) - _fsum(np.diag(gram))
            outer = _fsum(np.outer(col, col)) - _fsum(col * col)
            cov_b_b.append(c11[tau] * same + c12[tau] * (outer - same))

    return StratifiedTerms(math.fsum(var_a), cov_a_b, math.fsum(var_b), math.fsum(cov_b_b))


def var_general_stratified(
    model: HaneModel,
    e: WeightedLinearEstimator,
    partition: Partition,
    p_tau,
    baseline: BaselineInfo | None = None,
) -> float:
    """Variance under a saturation design with per-cluster treated fractions ``p_tau``."""
    terms = stratified_variance_terms(model, e, partition, counts_from_fractions(partition, p_tau), baseline)
    return _clamp(terms.total)


# --------------------------------------------------------------------------
# Dispatch
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AnalyticalResult:
    mean: float
    variance: float
    formula: str


def _is_ipw_adjusted(e: WeightedLinearEstimator, d: Design) -> bool:
    """True for ``w = v = 1/(n E[z_i])`` with some baseline subtraction."""
    if e.baseline_mode == "none":
        return False
    mu = np.asarray(d.marginals(), dtype=np.float64)
    if np.any(mu <= 0):
        return False
    target = 1 / (d.n * mu)
    return bool(np.allclose(e.w, target, rtol=1e-12, atol=0) and np.allclose(e.v, target, rtol=1e-12, atol=0))


def analytical_moments(
    model: HaneModel, e: WeightedLinearEstimator, d: Design, baseline: BaselineInfo | None = None
) -> AnalyticalResult:
    """Closed-form mean and variance, choosing the most specific formula that applies."""
    mean = expected_estimate(model, e, d, baseline)
    ipw = _is_ipw_adjusted(e, d)
    if isinstance(d, CRD):
        if 0 < d.m < d.n and ipw:
            return AnalyticalResult(mean, var_tte_adjusted_crd(model, d.n, d.m), "var_tte_adjusted_crd")
        if d.n >= 4 and 0 < d.m < d.n:
            return AnalyticalResult(mean, var_general_crd(model, e, d.n, d.m, baseline), "var_general_crd")
        part = Partition(np.zeros(d.n, dtype=np.int64))
        terms = stratified_variance_terms(model, e, part, (d.m,), baseline)
        return AnalyticalResult(mean, _clamp(terms.total), "var_general_stratified")
    if isinstance(d, Bernoulli):
        return AnalyticalResult(mean, var_general_bernoulli(model, e, d.p, baseline), "var_general_bernoulli")
    if isinstance(d, ClusterRD):
        T, mc = d.T, d.m_clusters
        if ipw and d.partition.is_uniform() and 0 < mc < T:
            return AnalyticalResult(
                mean, var_tte_adjusted_cluster(model, d.partition, mc), "var_tte_adjusted_cluster"
            )
        if T >= 4 and 0 < mc < T:
            return AnalyticalResult(
                mean, var_general_cluster(model, e, d.partition, mc, baseline), "var_general_cluster"
            )
        Lc, pi, pj, Hc = _cluster_reduce(lh_decompose(model, e, baseline), d.partition)
        mu = tuple(falling_ratio(mc, T, k) for k in (1, 2, 3, 4))
        return AnalyticalResult(mean, _clamp(_exchangeable_variance(Lc, pi, pj, Hc, mu)), "var_general_cluster")
    if isinstance(d, SaturationRD):
        if ipw and all(s >= 2 or m in (0, s) for s, m in zip(d.partition.sizes.tolist(), d.treated)):
            return AnalyticalResult(
                mean, var_tte_adjusted_saturation(model, d.partition, d.p_tau), "var_tte_adjusted_saturation"
            )
        terms = stratified_variance_terms(model, e, d.partition, d.treated, baseline)
        return AnalyticalResult(mean, _clamp(terms.total), "var_general_stratified")
    raise TypeError(f"no closed form for design {type(d).__name__}")
