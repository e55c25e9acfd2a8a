"""Randomized designs: sampling, exact moments, enumeration and symmetry checks.

All treatment budgets are integer counts.  Raw moments of any index set have
closed forms through falling-factorial ratios: under a uniform choice of ``m``
out of ``N`` items, ``k`` given distinct items are all chosen with probability
``m(m-1)...(m-k+1) / N(N-1)...(N-k+1)``.
"""

from __future__ import annotations

import itertools
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from ._validation import check_count, check_index, check_probability, frozen
from .network import InterferenceGraph, Partition, load_partition

DEFAULT_ENUMERATION_CAP = 2_000_000
SYMMETRY_TOL = 1e-12


class SupportTooLarge(ValueError):
    """Enumeration would exceed the configured support cap."""

    def __init__(self, size: int, cap: int):
        super().__init__(f"design support has {size} points, above the cap of {cap}; raise the cap to at least {size}")
        self.size = size
        self.cap = cap


def falling_ratio(m: int, N: int, k: int) -> float:
    """``m^(k) / N^(k)``: probability that ``k`` fixed distinct items are among ``m`` chosen of ``N``."""
    if k > N or k > m:
        return 0.0
    out = 1.0
    for j in range(k):
        out *= (m - j) / (N - j)
    return out


@dataclass(frozen=True, eq=False)
class ExactLaw:
    """Complete support of a design: one assignment per row, with its probability."""

    assignments: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        Z = np.ascontiguousarray(self.assignments, dtype=np.uint8)
        p = np.asarray(self.probs, dtype=np.float64)
        if Z.ndim != 2 or p.shape != (Z.shape[0],):
            raise ValueError("assignments must be (S, n) with one probability per row")
        if np.any(p <= 0):
            raise ValueError("support probabilities must be positive")
        if abs(math.fsum(p.tolist()) - 1.0) > 1e-12:
            raise ValueError("support probabilities must sum to 1")
        object.__setattr__(self, "assignments", frozen(Z))
        object.__setattr__(self, "probs", frozen(p))

    @property
    def size(self) -> int:
        return int(self.probs.shape[0])

    def __len__(self):
        return self.size

    def __iter__(self):
        for row, pr in zip(self.assignments, self.probs.tolist()):
            yield row, pr

    def expectation(self, values) -> float:
        """``sum_s prob_s * values_s`` with exactly rounded summation."""
        return math.fsum((self.probs * np.asarray(values, dtype=np.float64)).tolist())

    def all_distinct(self) -> bool:
        packed = np.packbits(self.assignments, axis=1)
        return np.unique(packed, axis=0).shape[0] == self.size


def _combination_matrix(n: int, m: int) -> np.ndarray:
    """All ``C(n, m)`` subsets of ``range(n)`` as 0/1 rows, in lexicographic order."""
    S = math.comb(n, m)
    Z = np.zeros((S, n), dtype=np.uint8)
    if m == 0 or S == 0:
        return Z
    flat = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(n), m)), dtype=np.int64, count=S * m
    )
    Z[np.repeat(np.arange(S), m), flat] = 1
    return Z


class Design(ABC):
    """A distribution over treatment vectors ``z in {0,1}^n``."""

    n: int

    @abstractmethod
    def marginals(self) -> np.ndarray:
        """``E[z_i]`` for every node."""

    @abstractmethod
    def joint2_many(self, I, J) -> np.ndarray:
        """``E[z_i z_j]`` element-wise over index arrays (``i == j`` allowed)."""

    @abstractmethod
    def moment(self, indices) -> float:
        """Raw moment ``E[prod_{i in indices} z_i]`` (repeated indices collapse)."""

    @abstractmethod
    def sample(self, rng: np.random.Generator) -> np.ndarray:
        ...

    @abstractmethod
    def support_size(self) -> int:
        ...

    @abstractmethod
    def _enumerate(self) -> ExactLaw:
        ...

    @abstractmethod
    def to_spec(self) -> dict:
        ...

    fixed_count = True

    def marginal(self, i) -> float:
        return float(self.marginals()[check_index(i, self.n)])

    def joint2(self, i, j) -> float:
        i, j = check_index(i, self.n), check_index(j, self.n)
        return float(self.joint2_many(np.array([i]), np.array([j]))[0])

    def cov2(self, i, j) -> float:
        return self.joint2(i, j) - self.marginal(i) * self.marginal(j)

    def joint_row(self, i) -> np.ndarray:
        i = check_index(i, self.n)
        return self.joint2_many(np.full(self.n, i), np.arange(self.n))

    def uniform_marginal(self) -> float | None:
        """The common treatment probability if all marginals coincide exactly, else ``None``."""
        mu = self.marginals()
        return float(mu[0]) if np.all(np.abs(mu - mu[0]) <= SYMMETRY_TOL) else None

    def enumerate(self, cap: int = DEFAULT_ENUMERATION_CAP) -> ExactLaw:
        size = self.support_size()
        if size > cap:
            raise SupportTooLarge(size, cap)
        return self._enumerate()

    def _check_moment_indices(self, indices) -> list[int]:
        return sorted({check_index(i, self.n) for i in indices})


@dataclass(frozen=True)
class Bernoulli(Design):
    """Independent coin flips with common probability ``p``."""

    n: int
    p: float

    fixed_count = False

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError("n must be at least 1")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "p", check_probability(self.p, "p"))

    def marginals(self):
        return np.full(self.n, self.p)

    def joint2_many(self, I, J):
        I, J = np.asarray(I), np.asarray(J)
        return np.where(I == J, self.p, self.p * self.p)

    def moment(self, indices):
        return self.p ** len(self._check_moment_indices(indices))

    def sample(self, rng):
        return (rng.random(self.n) < self.p).astype(np.uint8)

    def support_size(self):
        if self.p in (0.0, 1.0):
            return 1
        return 2**self.n

    def _enumerate(self):
        if self.p in (0.0, 1.0):
            return ExactLaw(np.full((1, self.n), int(self.p), dtype=np.uint8), np.ones(1))
        codes = np.arange(2**self.n, dtype=np.int64)
        Z = ((codes[:, None] >> np.arange(self.n)) & 1).astype(np.uint8)
        k = Z.sum(axis=1)
        probs = self.p**k * (1.0 - self.p) ** (self.n - k)
        return ExactLaw(Z, probs / math.fsum(probs.tolist()))

    def to_spec(self):
        return {"type": "bernoulli", "p": self.p}

    def __str__(self):
        return f"Bernoulli(n={self.n}, p={self.p:g})"


@dataclass(frozen=True)
class CRD(Design):
    """Completely randomized design: a uniform ``m``-subset of the ``n`` units is treated."""

    n: int
    m: int

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError("n must be at least 1")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "m", check_count(self.m, 0, self.n, "treated count m"))

    @property
    def p(self) -> float:
        return self.m / self.n

    def raw(self, k: int) -> float:
        """``E[z_1 ... z_k]`` for ``k`` distinct units."""
        return falling_ratio(self.m, self.n, k)

    def marginals(self):
        return np.full(self.n, self.p)

    def joint2_many(self, I, J):
        I, J = np.asarray(I), np.asarray(J)
        return np.where(I == J, self.raw(1), self.raw(2))

    def moment(self, indices):
        return self.raw(len(self._check_moment_indices(indices)))

    def sample(self, rng):
        z = np.zeros(self.n, dtype=np.uint8)
        z[rng.choice(self.n, self.m, replace=False)] = 1
        return z

    def support_size(self):
        return math.comb(self.n, self.m)

    def _enumerate(self):
        Z = _combination_matrix(self.n, self.m)
        return ExactLaw(Z, np.full(Z.shape[0], 1.0 / Z.shape[0]))

    def to_spec(self):
        return {"type": "crd", "treated": self.m}

    def __str__(self):
        return f"CRD(n={self.n}, m={self.m})"


@dataclass(frozen=True)
class ClusterRD(Design):
    """Uniform ``m_clusters``-subset of clusters is treated; members share their cluster's assignment."""

    partition: Partition
    m_clusters: int

    def __post_init__(self):
        if not isinstance(self.partition, Partition):
            raise ValueError("ClusterRD needs a Partition")
        T = self.partition.n_clusters
        object.__setattr__(self, "m_clusters", check_count(self.m_clusters, 0, T, "treated cluster count"))

    @property
    def n(self) -> int:
        return self.partition.n

    @property
    def T(self) -> int:
        return self.partition.n_clusters

    @property
    def p(self) -> float:
        return self.m_clusters / self.T

    def marginals(self):
        return np.full(self.n, self.p)

    def joint2_many(self, I, J):
        lab = self.partition.labels
        same = lab[np.asarray(I)] == lab[np.asarray(J)]
        return np.where(same, falling_ratio(self.m_clusters, self.T, 1), falling_ratio(self.m_clusters, self.T, 2))

    def moment(self, indices):
        idx = self._check_moment_indices(indices)
        clusters = {int(self.partition.labels[i]) for i in idx}
        return falling_ratio(self.m_clusters, self.T, len(clusters))

    def sample(self, rng):
        chosen = rng.choice(self.T, self.m_clusters, replace=False)
        return np.isin(self.partition.labels, chosen).astype(np.uint8)

    def support_size(self):
        return math.comb(self.T, self.m_clusters)

    def _enumerate(self):
        Zc = _combination_matrix(self.T, self.m_clusters)
        Z = np.ascontiguousarray(Zc[:, self.partition.labels])
        return ExactLaw(Z, np.full(Z.shape[0], 1.0 / Z.shape[0]))

    def to_spec(self):
        return {"type": "cluster_rd", "partition": self.partition.labels.tolist(), "treated_clusters": self.m_clusters}

    def __str__(self):
        return f"ClusterRD(T={self.T}, treated_clusters={self.m_clusters})"


def counts_from_fractions(partition: Partition, p_tau) -> tuple[int, ...]:
    """Convert per-cluster saturation fractions to integer counts; non-integral counts are rejected."""
    p_tau = [float(x) for x in p_tau]
    if len(p_tau) != partition.n_clusters:
        raise ValueError(f"need one saturation per cluster ({partition.n_clusters}), got {len(p_tau)}")
    counts = []
    for tau, (p, size) in enumerate(zip(p_tau, partition.sizes.tolist())):
        check_probability(p, f"saturation of cluster {tau}")
        c = p * size
        if abs(c - round(c)) > 1e-9:
            raise ValueError(f"saturation {p} of cluster {tau} (size {size}) is not an integer count")
        counts.append(int(round(c)))
    return tuple(counts)


@dataclass(frozen=True)
class SaturationRD(Design):
    """Independent within-cluster CRDs treating ``treated[tau]`` units of cluster ``tau``."""

    partition: Partition
    treated: tuple

    def __post_init__(self):
        if not isinstance(self.partition, Partition):
            raise ValueError("SaturationRD needs a Partition")
        sizes = self.partition.sizes.tolist()
        treated = tuple(self.treated)
        if len(treated) != len(sizes):
            raise ValueError(f"need one treated count per cluster ({len(sizes)}), got {len(treated)}")
        treated = tuple(check_count(c, 0, s, f"treated count of cluster {t}") for t, (c, s) in enumerate(zip(treated, sizes)))
        object.__setattr__(self, "treated", treated)

    @classmethod
    def from_fractions(cls, partition: Partition, p_tau) -> "SaturationRD":
        return cls(partition, counts_from_fractions(partition, p_tau))

    @property
    def n(self) -> int:
        return self.partition.n

    @property
    def T(self) -> int:
        return self.partition.n_clusters

    @cached_property
    def p_tau(self) -> np.ndarray:
        return frozen(np.array(self.treated, dtype=np.float64) / self.partition.sizes)

    @cached_property
    def _pair_within(self) -> np.ndarray:
        sizes = self.partition.sizes
        return frozen(np.array([falling_ratio(m, s, 2) for m, s in zip(self.treated, sizes.tolist())]))

    @cached_property
    def _members(self) -> list:
        return [self.partition.members(t) for t in range(self.T)]

    def marginals(self):
        return self.p_tau[self.partition.labels]

    def joint2_many(self, I, J):
        I, J = np.asarray(I), np.asarray(J)
        lab = self.partition.labels
        ti, tj = lab[I], lab[J]
        cross = self.p_tau[ti] * self.p_tau[tj]
        within = np.where(I == J, self.p_tau[ti], self._pair_within[ti])
        return np.where(ti == tj, within, cross)

    def moment(self, indices):
        idx = self._check_moment_indices(indices)
        labels = self.partition.labels[idx]
        sizes = self.partition.sizes
        out = 1.0
        for tau, k in zip(*np.unique(labels, return_counts=True)):
            out *= falling_ratio(self.treated[tau], int(sizes[tau]), int(k))
        return out

    def sample(self, rng):
        z = np.zeros(self.n, dtype=np.uint8)
        for members, m in zip(self._members, self.treated):
            if m:
                z[rng.choice(members, m, replace=False)] = 1
        return z

    def support_size(self):
        return math.prod(math.comb(int(s), m) for s, m in zip(self.partition.sizes, self.treated))

    def _enumerate(self):
        blocks = [_combination_matrix(int(s), m) for s, m in zip(self.partition.sizes, self.treated)]
        S = math.prod(b.shape[0] for b in blocks)
        Z = np.zeros((S, self.n), dtype=np.uint8)
        # mixed-radix expansion: the last cluster varies fastest
        stride = S
        for members, block in zip(self._members, blocks):
            stride //= block.shape[0]
            pick = (np.arange(S) // stride) % block.shape[0]
            Z[:, members] = block[pick]
        return ExactLaw(Z, np.full(S, 1.0 / S))

    def to_spec(self):
        return {"type": "saturation", "partition": self.partition.labels.tolist(), "treated_per_cluster": list(self.treated)}

    def __str__(self):
        return f"SaturationRD(T={self.T}, treated={list(self.treated)})"


# --------------------------------------------------------------------------
# CRD higher moments, with the explicit case split on index coincidences
# --------------------------------------------------------------------------


def _require_crd(d) -> CRD:
    if not isinstance(d, CRD):
        raise TypeError(f"operation is defined for CRD only, got {type(d).__name__}")
    return d


def crd_cov2(d: CRD, i, j) -> float:
    """``Cov[z_i, z_j]``: ``p(1-p)`` on the diagonal, ``-p(1-p)/(n-1)`` off it."""
    d = _require_crd(d)
    i, j = check_index(i, d.n), check_index(j, d.n)
    p = d.p
    if i == j:
        return p * (1 - p)
    return -p * (1 - p) / (d.n - 1)


def crd_moment3(d: CRD, i, j, k) -> float:
    """``Cov[z_i, z_j z_k]`` under a CRD."""
    d = _require_crd(d)
    i, j, k = (check_index(x, d.n) for x in (i, j, k))
    n, p = d.n, d.p
    if j == k:
        return crd_cov2(d, i, j)
    if i in (j, k):
        return p * (1 - p) * (n * p - 1) / (n - 1)
    return -2 * p * (1 - p) * (n * p - 1) / ((n - 1) * (n - 2))


def crd_moment4(d: CRD, i, j, k, l) -> float:
    """``Cov[z_i z_j, z_k z_l]`` under a CRD."""
    d = _require_crd(d)
    i, j, k, l = (check_index(x, d.n) for x in (i, j, k, l))
    if i == j:
        return crd_moment3(d, i, k, l)
    if k == l:
        return crd_moment3(d, k, i, j)
    n, p = d.n, d.p
    q1 = (n * p - 1) / (n - 1)
    distinct = len({i, j, k, l})
    if distinct == 2:
        return p * q1 * (1 - p * q1)
    if distinct == 3:
        return p * q1 * ((n * p - 2) / (n - 2) - p * q1)
    return p * q1 * ((n * p - 2) * (n * p - 3) / ((n - 2) * (n - 3)) - p * q1)


# --------------------------------------------------------------------------
# Symmetry conditions behind the unbiased adjusted estimators
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SymmetryReport:
    """Outcome of the conditional-probability checks on a design over a graph.

    Each ``rho_*`` is a per-node array or ``None`` when some node admits no
    common constant over its in-neighbours.
    """

    equal_marginals: bool
    marginals: np.ndarray
    rho_tte: np.ndarray | None
    rho_ate: np.ndarray | None
    rho_aie: np.ndarray | None
    failures: dict = field(default_factory=dict)


def _per_node_constant(nodes, values, constrained, n, tol):
    """Group ``values`` by target node and test that each group is constant.

    Returns ``(rho, bad)`` where ``rho`` is NaN for nodes with no constraint and
    ``bad`` lists nodes whose group is not constant.
    """
    rho = np.full(n, np.nan)
    nodes, values = nodes[constrained], values[constrained]
    if nodes.size == 0:
        return rho, []
    order = np.argsort(nodes, kind="stable")
    nodes, values = nodes[order], values[order]
    starts = np.flatnonzero(np.r_[True, nodes[1:] != nodes[:-1]])
    lo = np.minimum.reduceat(values, starts)
    hi = np.maximum.reduceat(values, starts)
    heads = nodes[starts]
    rho[heads] = values[starts]
    bad = heads[(hi - lo) > tol * np.maximum(1.0, np.abs(hi))]
    return rho, bad.tolist()


def check_symmetry(d: Design, g: InterferenceGraph, tol: float = SYMMETRY_TOL) -> SymmetryReport:
    """Verify, from exact moments, the per-node constancy conditions over every edge ``k -> i``.

    * tte: ``P(z_k=0 | z_i=1) / P(z_k=1 | z_i=0)`` constant in ``k``;
    * ate: ``P(z_i=1 | z_k=1)`` constant in ``k``;
    * aie: ``P(z_k=1 | z_i=0)`` constant in ``k``.

    Edges on which a condition is vacuous (the relevant effect can never be
    observed, e.g. perfectly correlated cluster mates) impose no constraint.
    Nodes without constraining in-edges get a default: the equal-marginal value
    ``(1-mu_i)/mu_i`` for tte, and the average over all other nodes for ate/aie.
    """
    if g.n != d.n:
        raise ValueError(f"graph has {g.n} nodes but design has {d.n}")
    n = d.n
    mu = np.asarray(d.marginals(), dtype=np.float64)
    k_idx, i_idx = g.src, g.dst
    E = d.joint2_many(i_idx, k_idx)
    mu_i, mu_k = mu[i_idx], mu[k_idx]
    equal = bool(np.all(np.abs(mu_i - mu_k) <= tol))
    interior = (mu > tol) & (mu < 1 - tol)
    failures = {}

    with np.errstate(divide="ignore", invalid="ignore"):
        # tte
        num = np.where(mu_i > 0, (mu_i - E) / mu_i, np.nan)
        den = np.where(mu_i < 1, (mu_k - E) / (1 - mu_i), np.nan)
        vacuous = (np.abs(den) <= tol) & (np.abs(num) <= tol)
        broken = (np.abs(den) <= tol) & (np.abs(num) > tol)
        rho_t, bad_t = _per_node_constant(i_idx, num / den, ~vacuous & ~broken, n, tol)
        bad_t = sorted(set(bad_t) | set(i_idx[broken].tolist()))
        default_t = (1 - mu) / mu
        rho_t = np.where(np.isnan(rho_t), default_t, rho_t)

        # ate
        val_a = np.where(mu_k > tol, E / mu_k, np.nan)
        rho_a, bad_a = _per_node_constant(i_idx, val_a, mu_k > tol, n, tol)

        # aie
        val_c = (mu_k - E) / (1 - mu_i)
        rho_c, bad_c = _per_node_constant(i_idx, val_c, np.ones_like(val_c, dtype=bool), n, tol)

    for rho, default_kind in ((rho_a, "ate"), (rho_c, "aie")):
        for i in np.flatnonzero(np.isnan(rho)).tolist():
            rho[i] = _default_rho(d, mu, i, default_kind)

    def finish(rho, bad, name):
        if bad:
            failures[name] = f"no common constant at node(s) {bad[:10]}"
            return None
        if not np.all(interior):
            failures[name] = "some marginal treatment probability is 0 or 1"
            return None
        if not np.all(np.isfinite(rho)):
            failures[name] = "undefined conditional probability"
            return None
        return frozen(rho)

    return SymmetryReport(
        equal_marginals=equal,
        marginals=frozen(mu.copy()),
        rho_tte=finish(rho_t, bad_t, "tte"),
        rho_ate=finish(rho_a, bad_a, "ate"),
        rho_aie=finish(rho_c, bad_c, "aie"),
        failures=failures,
    )


def _default_rho(d: Design, mu: np.ndarray, i: int, kind: str) -> float:
    others = np.delete(np.arange(d.n), i)
    if others.size == 0:
        return mu[i] if kind == "ate" else 1.0 - mu[i]
    E = d.joint2_many(np.full(others.size, i), others)
    if kind == "ate":
        ok = mu[others] > SYMMETRY_TOL
        if not np.any(ok):
            return mu[i]
        return float(np.mean(E[ok] / mu[others][ok]))
    if mu[i] >= 1:
        return float("nan")
    return float(np.mean((mu[others] - E) / (1 - mu[i])))


# --------------------------------------------------------------------------
# JSON design specs
# --------------------------------------------------------------------------


def _resolve_partition(value, n: int | None, base_dir) -> Partition:
    if isinstance(value, Partition):
        part = value
    elif isinstance(value, (str, Path)):
        path = Path(value)
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        part = load_partition(path)
    elif isinstance(value, dict) and "clusters" in value:
        if n is None:
            raise ValueError("equal-cluster partitions need the population size")
        part = Partition.equal(n, int(value["clusters"]))
    else:
        part = Partition(np.asarray(value))
    if n is not None and part.n != n:
        raise ValueError(f"partition covers {part.n} nodes but the population has {n}")
    return part


def design_from_spec(spec: dict, n: int | None = None, base_dir=None) -> Design:
    """Build a design from its JSON form.

    ``{"type": "crd", "treated": m}``, ``{"type": "bernoulli", "p": p}``,
    ``{"type": "cluster_rd", "partition": ..., "treated_clusters": k}`` or
    ``{"type": "saturation", "partition": ..., "treated_per_cluster": [...]}``
    (``"saturation": [p_tau, ...]`` fractions are accepted in place of counts).
    A partition is a CSV path, an inline label list or ``{"clusters": T}``.
    """
    if not isinstance(spec, dict) or "type" not in spec:
        raise ValueError(f"design spec must be an object with a 'type', got {spec!r}")
    kind = str(spec["type"]).lower()
    n = spec.get("n", n)
    if kind == "bernoulli":
        if n is None:
            raise ValueError("bernoulli design needs n")
        return Bernoulli(int(n), spec["p"])
    if kind == "crd":
        if n is None:
            raise ValueError("crd design needs n")
        return CRD(int(n), spec["treated"])
    if kind in ("cluster_rd", "cluster"):
        part = _resolve_partition(spec["partition"], n, base_dir)
        return ClusterRD(part, spec["treated_clusters"])
    if kind in ("saturation", "saturation_rd", "stratified"):
        part = _resolve_partition(spec["partition"], n, base_dir)
        if "treated_per_cluster" in spec:
            return SaturationRD(part, tuple(spec["treated_per_cluster"]))
        return SaturationRD.from_fractions(part, spec["saturation"])
    raise ValueError(f"unknown design type {spec['type']!r}")
