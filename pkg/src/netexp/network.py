"""Directed weighted interference graphs, cluster partitions and their generators.

Edge orientation is fixed package-wide: an edge ``(src, dst, gamma)`` means that
treating ``src`` adds ``gamma`` to the outcome of ``dst``.  A missing ordered
pair carries no effect.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ._validation import check_probability, frozen


class GraphFormatError(ValueError):
    """Raised when an edge-list or partition file cannot be parsed."""


@dataclass(frozen=True, eq=False)
class InterferenceGraph:
    """Sparse directed graph of additive network effects.

    Edges are stored sorted by ``(src, dst)``.  Use :meth:`from_edges` rather
    than the raw constructor when the edge order is not already canonical.
    """

    n: int
    src: np.ndarray
    dst: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        n = int(self.n)
        if n < 1:
            raise ValueError(f"population size must be at least 1, got {n}")
        src = np.asarray(self.src, dtype=np.int64).reshape(-1)
        dst = np.asarray(self.dst, dtype=np.int64).reshape(-1)
        gamma = np.asarray(self.gamma, dtype=np.float64).reshape(-1)
        if not (src.shape == dst.shape == gamma.shape):
            raise ValueError("src, dst and gamma must have equal length")
        if src.size:
            if src.min() < 0 or dst.min() < 0 or src.max() >= n or dst.max() >= n:
                raise ValueError(f"edge endpoints must be node ids in 0..{n - 1}")
            if np.any(src == dst):
                bad = int(src[np.argmax(src == dst)])
                raise ValueError(f"self-edge on node {bad}; direct effects belong in beta")
            if not np.all(np.isfinite(gamma)):
                raise ValueError("edge weights must be finite")
            key = src * n + dst
            order = np.argsort(key, kind="stable")
            key = key[order]
            if np.any(key[1:] == key[:-1]):
                dup = int(key[np.argmax(key[1:] == key[:-1])])
                raise ValueError(f"duplicate edge {dup // n}->{dup % n}")
            src, dst, gamma = src[order], dst[order], gamma[order]
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "src", frozen(src))
        object.__setattr__(self, "dst", frozen(dst))
        object.__setattr__(self, "gamma", frozen(gamma))

    @classmethod
    def from_edges(cls, n: int, edges) -> "InterferenceGraph":
        """Build from an iterable of ``(src, dst, gamma)`` triples."""
        edges = list(edges)
        if not edges:
            return cls.empty(n)
        src, dst, gamma = zip(*edges)
        return cls(n, np.array(src), np.array(dst), np.array(gamma, dtype=float))

    @classmethod
    def empty(cls, n: int) -> "InterferenceGraph":
        return cls(n, np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))

    @property
    def n_edges(self) -> int:
        return int(self.src.shape[0])

    def edges(self):
        """Iterate ``(src, dst, gamma)`` with python scalars."""
        for s, d, g in zip(self.src.tolist(), self.dst.tolist(), self.gamma.tolist()):
            yield s, d, g

    def to_sparse(self) -> sp.csr_matrix:
        """``n x n`` matrix with entry ``[src, dst] = gamma``."""
        return sp.csr_matrix((self.gamma, (self.src, self.dst)), shape=(self.n, self.n))

    def __eq__(self, other):
        if not isinstance(other, InterferenceGraph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
            and np.array_equal(self.gamma, other.gamma)
        )

    __hash__ = None

    def __repr__(self):
        return f"InterferenceGraph(n={self.n}, n_edges={self.n_edges})"


@dataclass(frozen=True, eq=False)
class Partition:
    """Assignment of every node to one of ``n_clusters`` non-empty clusters."""

    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.size == 0:
            raise ValueError("partition labels must be a non-empty 1-d array")
        if not np.issubdtype(labels.dtype, np.integer):
            if not np.all(np.mod(labels, 1) == 0):
                raise ValueError("cluster ids must be integers")
        labels = labels.astype(np.int64)
        if labels.min() < 0:
            raise ValueError("cluster ids must be non-negative")
        T = int(labels.max()) + 1
        sizes = np.bincount(labels, minlength=T)
        if np.any(sizes == 0):
            missing = int(np.flatnonzero(sizes == 0)[0])
            raise ValueError(f"cluster {missing} is empty; ids must be exactly 0..T-1")
        object.__setattr__(self, "labels", frozen(labels))

    @classmethod
    def equal(cls, n: int, n_clusters: int) -> "Partition":
        """Contiguous blocks whose sizes differ by at most one."""
        if not 1 <= n_clusters <= n:
            raise ValueError(f"need 1 <= n_clusters <= n, got {n_clusters} for n={n}")
        return cls(np.arange(n) * n_clusters // n)

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_clusters)

    def members(self, tau: int) -> np.ndarray:
        return np.flatnonzero(self.labels == tau)

    def is_uniform(self) -> bool:
        return bool(np.all(self.sizes == self.sizes[0]))

    def __eq__(self, other):
        if not isinstance(other, Partition):
            return NotImplemented
        return np.array_equal(self.labels, other.labels)

    __hash__ = None

    def __repr__(self):
        return f"Partition(n={self.n}, n_clusters={self.n_clusters})"


@dataclass(frozen=True)
class GammaLaw:
    """Distribution of edge weights (also reused for node parameters).

    ``kind`` is one of ``constant``, ``uniform`` or ``normal``; the textual form
    is ``"constant:c"``, ``"uniform:a,b"`` or ``"normal:mu,sigma"``.
    """

    kind: str
    params: tuple

    _ARITY = {"constant": 1, "uniform": 2, "normal": 2}

    def __post_init__(self):
        if self.kind not in self._ARITY:
            raise ValueError(f"unknown distribution {self.kind!r}; use constant, uniform or normal")
        params = tuple(float(x) for x in self.params)
        if len(params) != self._ARITY[self.kind]:
            raise ValueError(f"{self.kind} takes {self._ARITY[self.kind]} parameter(s), got {len(params)}")
        if not all(math.isfinite(x) for x in params):
            raise ValueError("distribution parameters must be finite")
        if self.kind == "uniform" and params[0] > params[1]:
            raise ValueError("uniform law needs a <= b")
        if self.kind == "normal" and params[1] < 0:
            raise ValueError("normal law needs sigma >= 0")
        object.__setattr__(self, "params", params)

    @classmethod
    def parse(cls, spec) -> "GammaLaw":
        """Accept a ``GammaLaw``, a number, ``"kind:p1,p2"`` or ``{"kind":..., "params": [...]}``."""
        if isinstance(spec, GammaLaw):
            return spec
        if isinstance(spec, (int, float)) and not isinstance(spec, bool):
            return cls("constant", (spec,))
        if isinstance(spec, dict):
            return cls(spec["kind"], tuple(spec.get("params", ())))
        if isinstance(spec, str):
            kind, _, rest = spec.partition(":")
            try:
                params = tuple(float(x) for x in rest.split(",")) if rest else ()
            except ValueError:
                raise ValueError(f"cannot parse distribution spec {spec!r}") from None
            return cls(kind.strip().lower(), params)
        raise ValueError(f"cannot parse distribution spec {spec!r}")

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "constant":
            return np.full(size, self.params[0])
        if self.kind == "uniform":
            return rng.uniform(self.params[0], self.params[1], size)
        return rng.normal(self.params[0], self.params[1], size)

    def __str__(self):
        return f"{self.kind}:" + ",".join(repr(p) for p in self.params)


def generate_erdos_renyi(n: int, edge_prob: float, gamma_law, seed: int) -> InterferenceGraph:
    """Directed Erdos-Renyi graph: each ordered pair ``i != k`` is an edge independently.

    The edge count is drawn from its binomial law and the edge positions as a
    uniform subset of the ``n(n-1)`` ordered pairs, which is the same law as
    independent coin flips per pair.
    """
    if n < 1:
        raise ValueError(f"n must be at least 1, got {n}")
    edge_prob = check_probability(edge_prob, "edge_prob")
    law = GammaLaw.parse(gamma_law)
    rng = np.random.default_rng(seed)
    n_pairs = n * (n - 1)
    count = int(rng.binomial(n_pairs, edge_prob)) if n_pairs else 0
    idx = np.sort(rng.choice(n_pairs, size=count, replace=False)) if count else np.zeros(0, np.int64)
    src = idx // max(n - 1, 1)
    r = idx % max(n - 1, 1)
    dst = r + (r >= src)
    return InterferenceGraph(n, src, dst, law.sample(rng, count))


def generate_clustered(
    partition: Partition, p_within: float, p_between: float, gamma_law, seed: int
) -> InterferenceGraph:
    """Planted-partition digraph: same-cluster pairs use ``p_within``, others ``p_between``."""
    if not isinstance(partition, Partition):
        raise ValueError("generate_clustered needs a Partition")
    p_within = check_probability(p_within, "p_within")
    p_between = check_probability(p_between, "p_between")
    law = GammaLaw.parse(gamma_law)
    rng = np.random.default_rng(seed)
    n, labels = partition.n, partition.labels
    srcs, dsts = [], []
    for i in range(n):
        probs = np.where(labels == labels[i], p_within, p_between)
        probs[i] = 0.0
        hit = np.flatnonzero(rng.random(n) < probs)
        srcs.append(np.full(hit.size, i, dtype=np.int64))
        dsts.append(hit)
    src = np.concatenate(srcs)
    dst = np.concatenate(dsts)
    return InterferenceGraph(n, src, dst, law.sample(rng, src.size))


@dataclass(frozen=True)
class DegreeStats:
    out_degrees: np.ndarray
    d_max: int
    weighted_out: np.ndarray


def degree_stats(g: InterferenceGraph) -> DegreeStats:
    out = np.bincount(g.src, minlength=g.n)
    weighted = np.bincount(g.src, weights=g.gamma, minlength=g.n)
    return DegreeStats(out, int(out.max()) if out.size else 0, weighted)


def save_graph(g: InterferenceGraph, path) -> None:
    """Write the canonical ``src,dst,gamma`` edge list (``repr`` floats round-trip exactly)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("src,dst,gamma\n")
        for s, d, w in g.edges():
            fh.write(f"{s},{d},{w!r}\n")


def load_graph(path, n: int) -> InterferenceGraph:
    """Read an edge list; the node count is supplied separately."""
    src, dst, gamma = [], [], []
    seen = set()
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["src", "dst", "gamma"]:
            raise GraphFormatError(f"{path}: line 1: expected header 'src,dst,gamma'")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise GraphFormatError(f"{path}: line {lineno}: expected 3 fields, got {len(row)}")
            try:
                s, d = int(row[0]), int(row[1])
            except ValueError:
                raise GraphFormatError(f"{path}: line {lineno}: node ids must be integers") from None
            try:
                w = float(row[2])
            except ValueError:
                raise GraphFormatError(f"{path}: line {lineno}: weight {row[2]!r} is not a number") from None
            if not math.isfinite(w):
                raise GraphFormatError(f"{path}: line {lineno}: weight must be finite")
            if s == d:
                raise GraphFormatError(f"{path}: line {lineno}: self-edge on node {s}")
            if not (0 <= s < n and 0 <= d < n):
                raise GraphFormatError(f"{path}: line {lineno}: node id out of range 0..{n - 1}")
            if (s, d) in seen:
                raise GraphFormatError(f"{path}: line {lineno}: duplicate edge {s}->{d}")
            seen.add((s, d))
            src.append(s)
            dst.append(d)
            gamma.append(w)
    return InterferenceGraph(n, np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64), np.array(gamma))


def save_partition(partition: Partition, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("node,cluster\n")
        for node, tau in enumerate(partition.labels.tolist()):
            fh.write(f"{node},{tau}\n")


def load_partition(path) -> Partition:
    """Read a ``node,cluster`` file; every node 0..n-1 must appear exactly once."""
    rows = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["node", "cluster"]:
            raise GraphFormatError(f"{path}: line 1: expected header 'node,cluster'")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                node, tau = int(row[0]), int(row[1])
            except (ValueError, IndexError):
                raise GraphFormatError(f"{path}: line {lineno}: expected two integers") from None
            if node in rows:
                raise GraphFormatError(f"{path}: line {lineno}: node {node} listed twice")
            rows[node] = tau
    n = len(rows)
    if sorted(rows) != list(range(n)):
        raise GraphFormatError(f"{path}: node ids must be exactly 0..{n - 1}")
    try:
        return Partition(np.array([rows[i] for i in range(n)]))
    except ValueError as exc:
        raise GraphFormatError(f"{path}: {exc}") from None
