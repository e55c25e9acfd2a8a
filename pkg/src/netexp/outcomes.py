"""Heterogeneous additive network effects (HANE) potential outcomes.

``Y_i(z) = alpha_i + beta_i z_i + sum_k gamma_ki z_k`` with ``gamma_ki`` stored
on the graph edge ``k -> i``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_assignment, check_assignments, check_vector, frozen
from .network import GammaLaw, InterferenceGraph, generate_erdos_renyi, load_graph


@dataclass(frozen=True, eq=False)
class HaneModel:
    """Population parameters: baselines ``alpha``, direct effects ``beta`` and the effect graph."""

    graph: InterferenceGraph
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        n = self.graph.n
        object.__setattr__(self, "alpha", frozen(check_vector(self.alpha, n, "alpha").copy()))
        object.__setattr__(self, "beta", frozen(check_vector(self.beta, n, "beta").copy()))

    @property
    def n(self) -> int:
        return self.graph.n

    def with_graph(self, graph: InterferenceGraph) -> "HaneModel":
        return HaneModel(graph, self.alpha, self.beta)

    def __eq__(self, other):
        if not isinstance(other, HaneModel):
            return NotImplemented
        return (
            self.graph == other.graph
            and np.array_equal(self.alpha, other.alpha)
            and np.array_equal(self.beta, other.beta)
        )

    __hash__ = None

    def __repr__(self):
        return f"HaneModel(n={self.n}, n_edges={self.graph.n_edges})"


def evaluate(model: HaneModel, z) -> np.ndarray:
    """Outcome vector under assignment ``z``; O(n + |E|)."""
    g = model.graph
    z = check_assignment(z, g.n)
    spill = np.bincount(g.dst, weights=g.gamma * z[g.src], minlength=g.n)
    return model.alpha + model.beta * z + spill


def evaluate_batch(model: HaneModel, Z) -> np.ndarray:
    """Row-wise :func:`evaluate` for an ``(S, n)`` matrix of assignments."""
    Z = check_assignments(Z, model.n)
    Zf = Z.astype(np.float64)
    spill = np.asarray(model.graph.to_sparse().T.dot(Zf.T)).T
    return model.alpha + model.beta * Zf + spill


def true_ate(model: HaneModel) -> float:
    return math.fsum(model.beta.tolist()) / model.n


def true_aie(model: HaneModel) -> float:
    return math.fsum(model.graph.gamma.tolist()) / model.n


def true_tte(model: HaneModel) -> float:
    """Average effect of moving everyone from control to treatment."""
    return math.fsum(model.beta.tolist() + model.graph.gamma.tolist()) / model.n


def random_model(
    n: int,
    edge_prob: float,
    seed: int,
    gamma="uniform:-2,2",
    alpha="uniform:-5,5",
    beta="uniform:-1,1",
) -> HaneModel:
    """Erdos-Renyi effect graph plus i.i.d. node parameters, all from one seed."""
    ss_graph, ss_alpha, ss_beta = np.random.SeedSequence(seed).spawn(3)
    graph = generate_erdos_renyi(n, edge_prob, gamma, int(ss_graph.generate_state(1)[0]))
    a = GammaLaw.parse(alpha).sample(np.random.default_rng(ss_alpha), n)
    b = GammaLaw.parse(beta).sample(np.random.default_rng(ss_beta), n)
    return HaneModel(graph, a, b)


# --------------------------------------------------------------------------
# Linear contagion
# --------------------------------------------------------------------------


class ContagionError(ValueError):
    """The contagion system has no convergent fixed point."""


@dataclass(frozen=True, eq=False)
class ContagionModel:
    """``Y_i = a_i + b_i z_i + sum_k c_ki Y_k``; ``C[k, i] = c_ki``, zero diagonal."""

    a: np.ndarray
    b: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        a = check_vector(self.a, name="a")
        n = a.shape[0]
        b = check_vector(self.b, n, "b")
        C = np.asarray(self.C, dtype=np.float64)
        if C.shape != (n, n):
            raise ValueError(f"C must have shape ({n}, {n}), got {C.shape}")
        if not np.all(np.isfinite(C)):
            raise ValueError("C contains non-finite entries")
        if np.any(np.diag(C) != 0):
            raise ValueError("C must have a zero diagonal")
        object.__setattr__(self, "a", frozen(a.copy()))
        object.__setattr__(self, "b", frozen(b.copy()))
        object.__setattr__(self, "C", frozen(C.copy()))

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.C)))) if self.n else 0.0


def _neumann_solve(At: np.ndarray, rhs: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    """Solve ``x = rhs + At @ x`` by fixed-point iteration until the max-norm residual is <= tol."""
    x = rhs.copy()
    for _ in range(max_iter):
        x_next = rhs + At @ x
        if np.max(np.abs(x_next - x), initial=0.0) <= tol:
            return x_next
        x = x_next
    raise ContagionError(f"Neumann series did not reach residual {tol:g} in {max_iter} iterations")


def from_contagion(cm: ContagionModel, tol: float = 1e-10) -> HaneModel:
    """Reduce a linear contagion model to the equivalent HANE model.

    Baselines solve ``y = a + C^T y``; the effect matrix ``M = (I - C^T)^{-1} diag(b)``
    gives ``beta_i = M_ii`` and an edge ``k -> i`` with weight ``M_ik`` for every
    nonzero off-diagonal entry.
    """
    n = cm.n
    rho = cm.spectral_radius()
    if rho >= 1.0:
        raise ContagionError(f"spectral radius of C is {rho:.6g} >= 1; no fixed point")
    if rho > 0:
        max_iter = max(n + 1, int(math.ceil(10 * math.log(1 / tol) / math.log(1 / rho))))
    else:
        max_iter = n + 2  # nilpotent: the series terminates
    Ct = cm.C.T
    alpha = _neumann_solve(Ct, cm.a, tol, max_iter)
    M = _neumann_solve(Ct, np.diag(cm.b), tol, max_iter)
    beta = np.diag(M).copy()
    off = M.copy()
    np.fill_diagonal(off, 0.0)
    i_idx, k_idx = np.nonzero(off)
    graph = InterferenceGraph(n, k_idx, i_idx, off[i_idx, k_idx])
    return HaneModel(graph, alpha, beta)


def contagion_fixed_point(cm: ContagionModel, z, tol: float = 1e-12, max_iter: int = 100_000) -> np.ndarray:
    """Structural outcomes by direct iteration of ``y <- a + diag(b) z + C^T y``."""
    z = check_assignment(z, cm.n)
    return _neumann_solve(cm.C.T, cm.a + cm.b * z, tol, max_iter)


# --------------------------------------------------------------------------
# Model files
# --------------------------------------------------------------------------


def model_to_dict(model: HaneModel) -> dict:
    return {
        "n": model.n,
        "alpha": model.alpha.tolist(),
        "beta": model.beta.tolist(),
        "edges": [[s, d, w] for s, d, w in model.graph.edges()],
    }


def model_from_dict(data: dict) -> HaneModel:
    try:
        n = int(data["n"])
        edges = data.get("edges", [])
        for row in edges:
            if len(row) != 3:
                raise ValueError(f"edge entries must be [src, dst, gamma], got {row!r}")
        graph = InterferenceGraph.from_edges(n, [(int(s), int(d), float(w)) for s, d, w in edges])
        return HaneModel(graph, data["alpha"], data["beta"])
    except KeyError as exc:
        raise ValueError(f"model file is missing field {exc.args[0]!r}") from None


def save_model(model: HaneModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_model(path) -> HaneModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def load_model_csv(nodes_path, edges_path) -> HaneModel:
    """Split-file form: ``id,alpha,beta`` node table plus a ``src,dst,gamma`` edge list."""
    rows = {}
    with open(nodes_path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["id", "alpha", "beta"]:
            raise ValueError(f"{nodes_path}: expected header 'id,alpha,beta'")
        for lineno, row in enumerate(reader, start=2):
            try:
                rows[int(row["id"])] = (float(row["alpha"]), float(row["beta"]))
            except (TypeError, ValueError):
                raise ValueError(f"{nodes_path}: line {lineno}: malformed row") from None
    n = len(rows)
    if sorted(rows) != list(range(n)):
        raise ValueError(f"{nodes_path}: node ids must be exactly 0..{n - 1}")
    alpha = [rows[i][0] for i in range(n)]
    beta = [rows[i][1] for i in range(n)]
    return HaneModel(load_graph(edges_path, n), alpha, beta)


def save_model_csv(model: HaneModel, nodes_path, edges_path) -> None:
    from .network import save_graph

    with open(nodes_path, "w", encoding="utf-8", newline="") as fh:
        fh.write("id,alpha,beta\n")
        for i, (a, b) in enumerate(zip(model.alpha.tolist(), model.beta.tolist())):
            fh.write(f"{i},{a!r},{b!r}\n")
    save_graph(model.graph, edges_path)
