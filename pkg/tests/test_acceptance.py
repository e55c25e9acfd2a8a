"""End-to-end acceptance checks, one test per criterion.

A per-criterion PASS/FAIL line is printed in the terminal summary.
"""

import itertools
import math
import time

import numpy as np
import pytest

from netexp.analysis import (
    bias_tte_ht,
    lh_decompose,
    var_general_cluster,
    var_general_crd,
    var_general_stratified,
    var_tte_adjusted_cluster,
    var_tte_adjusted_crd,
    var_tte_adjusted_saturation,
)
from netexp.designs import CRD, Bernoulli, ClusterRD, SaturationRD, crd_cov2, crd_moment3, crd_moment4
from netexp.estimators import (
    BaselineInfo,
    WeightedLinearEstimator,
    aie_adjusted,
    ate_adjusted,
    ate_ht,
    find_unbiased_weights,
    tte_adjusted,
    tte_adjusted_simple,
    tte_ht,
)
from netexp.montecarlo import McConfig, run_mc
from netexp.network import InterferenceGraph, Partition
from netexp.oracle import exact_estimator_moments
from netexp.outcomes import (
    ContagionModel,
    HaneModel,
    contagion_fixed_point,
    evaluate,
    evaluate_batch,
    from_contagion,
    random_model,
    true_aie,
    true_ate,
    true_tte,
)

GRID_SIZE = 200


def grid_model(k):
    n = 4 + k % 5
    return random_model(n, 0.4, 10_000 + k, gamma="uniform:-2,2", alpha="uniform:-5,5", beta="uniform:-1,1")


def small_divisor(n):
    """Cluster count in {2, 3} dividing n, or None for primes."""
    for T in (2, 3):
        if n % T == 0:
            return T
    return None


def grid_designs(model, k):
    n = model.n
    designs = [CRD(n, math.ceil(n / 3))]
    T = 2 + k % 2
    designs.append(ClusterRD(Partition.equal(n, T), 1))
    Ts = small_divisor(n) or 1
    part = Partition.equal(n, Ts)
    designs.append(SaturationRD(part, tuple([1] * Ts) if Ts > 1 else (math.ceil(n / 3),)))
    return designs


def rel_close(a, b, rel):
    return abs(a - b) <= rel * max(abs(a), abs(b), 1e-300) or abs(a - b) <= 1e-12


@pytest.mark.criterion(1, "adjusted TTE estimator unbiased on 200 models x {CRD, ClusterRD, SaturationRD}")
def test_criterion_1_tte_adjusted_unbiased():
    start = time.perf_counter()
    worst = 0.0
    for k in range(GRID_SIZE):
        model = grid_model(k)
        b = BaselineInfo.exact_individual(model.alpha)
        truth = true_tte(model)
        for d in grid_designs(model, k):
            e = tte_adjusted(d, graph=model.graph)
            worst = max(worst, abs(exact_estimator_moments(model, e, d, b).mean - truth))
    elapsed = time.perf_counter() - start
    assert worst <= 1e-10
    assert elapsed < 30


@pytest.mark.criterion(2, "unadjusted HT TTE bias equals closed form; worked case bias -6, mean -1")
def test_criterion_2_tte_ht_bias(cycle_model):
    for k in range(GRID_SIZE):
        model = grid_model(k)
        d = CRD(model.n, math.ceil(model.n / 3))
        om = exact_estimator_moments(model, tte_ht(d), d)
        oracle_bias = om.mean - true_tte(model)
        assert abs(oracle_bias - bias_tte_ht(model, d)) <= 1e-10
        if abs(math.fsum(model.graph.gamma.tolist())) > 1e-9:
            assert abs(oracle_bias) > 1e-12
    d = CRD(3, 1)
    om = exact_estimator_moments(cycle_model, tte_ht(d), d)
    assert om.mean == pytest.approx(-1.0, abs=1e-15)
    assert bias_tte_ht(cycle_model, d) == pytest.approx(-6.0, abs=1e-15)


@pytest.mark.criterion(3, "influence-based variance formulas match enumeration (CRD, cluster, saturation)")
def test_criterion_3_influence_variances(cycle_model):
    for k in range(GRID_SIZE):
        model = grid_model(k)
        n = model.n
        b = BaselineInfo.exact_individual(model.alpha)
        m = math.ceil(n / 3)
        d = CRD(n, m)
        oracle = exact_estimator_moments(model, tte_adjusted(d, graph=model.graph), d, b).variance
        assert rel_close(var_tte_adjusted_crd(model, n, m), oracle, 1e-9)
        T = small_divisor(n)
        if T is None:
            continue
        part = Partition.equal(n, T)
        dc = ClusterRD(part, 1)
        oracle = exact_estimator_moments(model, tte_adjusted(dc, graph=model.graph), dc, b).variance
        assert rel_close(var_tte_adjusted_cluster(model, part, 1), oracle, 1e-9)
        size = n // T
        for counts in ((1,) * T, tuple(1 + (t % (size - 1)) for t in range(T))):
            ds = SaturationRD(part, counts)
            e = tte_adjusted_simple(ds)
            oracle = exact_estimator_moments(model, e, ds, b).variance
            assert rel_close(var_tte_adjusted_saturation(model, part, ds.p_tau), oracle, 1e-9)
    assert var_tte_adjusted_crd(cycle_model, 3, 1) == pytest.approx(8 / 3, rel=1e-15)
    g = InterferenceGraph.empty(4)
    flat = HaneModel(g, np.zeros(4), [3.0, 5.0, 7.0, 9.0])
    assert var_tte_adjusted_cluster(flat, Partition(np.array([0, 0, 1, 1])), 1) == pytest.approx(4.0, rel=1e-15)


@pytest.mark.criterion(4, "general L/H variance (CRD, cluster, stratified) matches enumeration; identity holds")
def test_criterion_4_general_variance():
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    pc = Partition(np.repeat(np.arange(4), 2))
    ps = Partition(np.repeat(np.arange(2), 5))
    for k in range(100):
        cases = [
            (6, lambda m, e: var_general_crd(m, e, 6, 3), CRD(6, 3)),
            (8, lambda m, e: var_general_cluster(m, e, pc, 2), ClusterRD(pc, 2)),
            (10, lambda m, e: var_general_stratified(m, e, ps, [0.2, 0.2]), SaturationRD(ps, (1, 1))),
        ]
        for n, formula, d in cases:
            model = random_model(n, 0.4, 50_000 + 3 * k + n)
            e = WeightedLinearEstimator(rng.normal(size=n), rng.normal(size=n))
            assert rel_close(formula(model, e), exact_estimator_moments(model, e, d).variance, 1e-9)
            dec = lh_decompose(model, e)
            Z = d.enumerate().assignments
            direct = (np.where(Z == 1, e.w, e.v) * evaluate_batch(model, Z)).sum(axis=1)
            scale = np.maximum(1.0, np.abs(direct))
            assert np.all(np.abs(dec.values(Z) - direct) <= 1e-12 * scale)
    assert time.perf_counter() - start < 60


def complete_digraph_model(n, rng):
    edges = [(i, k, float(rng.uniform(-2, 2))) for i in range(n) for k in range(n) if i != k]
    return HaneModel(InterferenceGraph.from_edges(n, edges), rng.uniform(-5, 5, n), rng.uniform(-1, 1, n))


@pytest.mark.criterion(5, "direct and interference estimators unbiased; CRD breaks HT-ATE; AIE infeasibility witness")
def test_criterion_5_ate_aie():
    rng = np.random.default_rng(5)
    for n in range(2, 9):
        d = Bernoulli(n, 0.5)
        for model in (random_model(n, 0.4, 700 + n), complete_digraph_model(n, rng)):
            assert abs(exact_estimator_moments(model, ate_ht(d), d).mean - true_ate(model)) <= 1e-10
    for k in range(GRID_SIZE):
        model = grid_model(k)
        n = model.n
        d = CRD(n, math.ceil(n / 3))
        b = BaselineInfo.exact_individual(model.alpha)
        assert abs(exact_estimator_moments(model, ate_adjusted(d, graph=model.graph), d, b).mean - true_ate(model)) <= 1e-10
        assert abs(exact_estimator_moments(model, aie_adjusted(d, graph=model.graph), d, b).mean - true_aie(model)) <= 1e-10
    g = InterferenceGraph.from_edges(2, [(0, 1, 5.0)])
    model = HaneModel(g, [0.0, 0.0], [1.0, 2.0])
    with pytest.warns(UserWarning):
        e = ate_ht(CRD(2, 1))
    assert abs(exact_estimator_moments(model, e, CRD(2, 1)).mean - true_ate(model)) > 1e-6
    cyc = InterferenceGraph.from_edges(3, [(0, 1, 2.0), (1, 2, 4.0), (2, 0, 6.0)])
    assert find_unbiased_weights(CRD(3, 1), cyc, "aie", adjusted=False) is None


def _enumerated_cov(Z, a, b):
    x = np.prod(Z[:, list(a)], axis=1).astype(float)
    y = np.prod(Z[:, list(b)], axis=1).astype(float)
    return math.fsum((x * y).tolist()) / len(Z) - (math.fsum(x.tolist()) / len(Z)) * (math.fsum(y.tolist()) / len(Z))


@pytest.mark.criterion(6, "CRD second/third/fourth covariance branches match enumeration for n in {4,5,6}")
def test_criterion_6_crd_moments():
    for n in (4, 5, 6):
        for m in range(n + 1):
            d = CRD(n, m)
            Z = d.enumerate().assignments
            for i, j in itertools.product(range(n), repeat=2):
                assert abs(crd_cov2(d, i, j) - _enumerated_cov(Z, (i,), (j,))) <= 1e-12
            for i, j, k in itertools.product(range(n), repeat=3):
                assert abs(crd_moment3(d, i, j, k) - _enumerated_cov(Z, (i,), (j, k))) <= 1e-12
            for i, j, k, l in itertools.product(range(n), repeat=4):
                assert abs(crd_moment4(d, i, j, k, l) - _enumerated_cov(Z, (i, j), (k, l))) <= 1e-12


def random_contagion(rng, n):
    C = rng.uniform(-1, 1, (n, n)) * (rng.random((n, n)) < 0.3)
    np.fill_diagonal(C, 0.0)
    radius = np.max(np.abs(np.linalg.eigvals(C))) if n > 1 else 0.0
    target = rng.uniform(0.05, 0.5)
    if radius > 0:
        C *= target / radius
    return ContagionModel(rng.normal(size=n), rng.normal(size=n), C)


@pytest.mark.criterion(7, "contagion reduction reproduces the structural fixed point")
def test_criterion_7_contagion():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(2, 21))
        cm = random_contagion(rng, n)
        assert cm.spectral_radius() <= 0.5 + 1e-12
        hane = from_contagion(cm)
        for _ in range(10):
            z = rng.integers(0, 2, n)
            assert np.max(np.abs(evaluate(hane, z) - contagion_fixed_point(cm, z))) <= 1e-8


@pytest.mark.criterion(8, "Monte Carlo at n=500: mean within 4 SE, variance within 5%, thread-independent")
def test_criterion_8_monte_carlo():
    start = time.perf_counter()
    model = random_model(500, 0.02, 8, gamma="uniform:0,1")
    d = CRD(500, 50)
    e = tte_adjusted(d, graph=model.graph)
    b = BaselineInfo.exact_individual(model.alpha)
    one = run_mc(model, e, d, b, McConfig(20_000, 123, keep_replicate_values=True, threads=1))
    four = run_mc(model, e, d, b, McConfig(20_000, 123, keep_replicate_values=True, threads=4))
    elapsed = time.perf_counter() - start
    assert np.array_equal(one.values, four.values)
    assert one.empirical_mean == four.empirical_mean
    assert abs(one.empirical_mean - true_tte(model)) <= 4 * one.stderr_of_mean
    target = var_tte_adjusted_crd(model, 500, 50)
    assert abs(one.empirical_variance - target) <= 0.05 * target
    assert elapsed < 60


@pytest.mark.criterion(9, "CRD adjusted-estimator variance halves when n doubles at fixed p")
def test_criterion_9_scaling():
    rng = np.random.default_rng(9)
    p = 0.2
    small, large = [], []
    for _ in range(200):
        for n, bucket in ((100, small), (200, large)):
            model = HaneModel(InterferenceGraph.empty(n), np.zeros(n), rng.normal(1.0, 2.0, n))
            bucket.append(var_tte_adjusted_crd(model, n, int(p * n)))
    ratio = np.mean(large) / np.mean(small)
    assert abs(ratio - 0.5) <= 0.05
