import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netexp.network import (
    GammaLaw,
    GraphFormatError,
    InterferenceGraph,
    Partition,
    degree_stats,
    generate_clustered,
    generate_erdos_renyi,
    load_graph,
    load_partition,
    save_graph,
    save_partition,
)


def test_edges_are_canonically_sorted():
    g = InterferenceGraph.from_edges(3, [(2, 0, 6.0), (0, 1, 2.0), (1, 2, 4.0)])
    assert list(g.edges()) == [(0, 1, 2.0), (1, 2, 4.0), (2, 0, 6.0)]


@pytest.mark.parametrize(
    "edges, message",
    [
        ([(1, 1, 1.0)], "self-edge"),
        ([(0, 1, 1.0), (0, 1, 2.0)], "duplicate"),
        ([(0, 3, 1.0)], "0..2"),
        ([(0, 1, float("inf"))], "finite"),
    ],
)
def test_invalid_graphs_rejected(edges, message):
    with pytest.raises(ValueError, match=message):
        InterferenceGraph.from_edges(3, edges)


def test_graph_arrays_are_read_only():
    g = InterferenceGraph.from_edges(2, [(0, 1, 1.0)])
    with pytest.raises(ValueError):
        g.gamma[0] = 3.0


def test_er_empty_when_probability_zero():
    assert generate_erdos_renyi(5, 0.0, "normal:0,1", 7).n_edges == 0


def test_er_complete_with_constant_weight():
    g = generate_erdos_renyi(3, 1.0, "constant:2", 1)
    assert g.n_edges == 6
    assert np.all(g.gamma == 2.0)


def test_er_edge_count_concentrates():
    n, p = 100, 0.1
    sd = np.sqrt(n * (n - 1) * p * (1 - p))
    counts = [generate_erdos_renyi(n, p, "normal:0,1", s).n_edges for s in range(40)]
    assert all(abs(c - 990) <= 4 * sd for c in counts)
    assert abs(np.mean(counts) - 990) <= 5 * sd / np.sqrt(len(counts))


def test_er_each_ordered_pair_equally_likely():
    n, reps = 4, 4000
    hits = np.zeros((n, n))
    for s in range(reps):
        g = generate_erdos_renyi(n, 0.3, "constant:1", s)
        hits[g.src, g.dst] += 1
    off = hits[~np.eye(n, dtype=bool)] / reps
    assert np.all(np.abs(off - 0.3) <= 5 * np.sqrt(0.3 * 0.7 / reps))
    assert np.all(np.diag(hits) == 0)


def test_er_is_deterministic():
    assert generate_erdos_renyi(30, 0.2, "uniform:-1,1", 5) == generate_erdos_renyi(30, 0.2, "uniform:-1,1", 5)


@pytest.mark.parametrize("bad", [-0.1, 1.5])
def test_er_rejects_bad_probability(bad):
    with pytest.raises(ValueError):
        generate_erdos_renyi(5, bad, "constant:1", 0)


def test_unknown_law_rejected():
    with pytest.raises(ValueError, match="unknown distribution"):
        generate_erdos_renyi(5, 0.5, "cauchy:0,1", 0)


@pytest.mark.parametrize(
    "spec, kind, params",
    [("normal:0,1", "normal", (0.0, 1.0)), (2.5, "constant", (2.5,)), ({"kind": "uniform", "params": [0, 3]}, "uniform", (0.0, 3.0))],
)
def test_gamma_law_parse(spec, kind, params):
    law = GammaLaw.parse(spec)
    assert (law.kind, law.params) == (kind, params)


def test_clustered_single_cluster_no_within_edges():
    assert generate_clustered(Partition(np.zeros(5, dtype=int)), 0.0, 0.9, "constant:1", 0).n_edges == 0


def test_clustered_within_only():
    g = generate_clustered(Partition(np.array([0, 0, 1, 1])), 1.0, 0.0, "constant:1", 0)
    assert sorted(zip(g.src.tolist(), g.dst.tolist())) == [(0, 1), (1, 0), (2, 3), (3, 2)]


def test_clustered_cross_fraction():
    part = Partition.equal(60, 6)
    lab = part.labels
    cross_pairs = 60 * 59 - 6 * 10 * 9
    counts = []
    for s in range(20):
        g = generate_clustered(part, 0.5, 0.01, "constant:1", s)
        counts.append(int(np.sum(lab[g.src] != lab[g.dst])))
    sd = np.sqrt(cross_pairs * 0.01 * 0.99 / len(counts))
    assert abs(np.mean(counts) - 0.01 * cross_pairs) <= 5 * sd


def test_degree_stats_cycle():
    g = InterferenceGraph.from_edges(3, [(0, 1, 2.0), (1, 2, 4.0), (2, 0, 6.0)])
    ds = degree_stats(g)
    assert ds.out_degrees.tolist() == [1, 1, 1]
    assert ds.d_max == 1
    assert ds.weighted_out.tolist() == [2.0, 4.0, 6.0]


def test_degree_stats_empty_and_complete():
    assert degree_stats(InterferenceGraph.empty(4)).d_max == 0
    ds = degree_stats(generate_erdos_renyi(3, 1.0, "constant:1", 0))
    assert ds.d_max == 2
    assert ds.weighted_out.tolist() == [2.0, 2.0, 2.0]


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 12), p=st.floats(0, 1), seed=st.integers(0, 2**32 - 1))
def test_graph_file_round_trip(tmp_path_factory, n, p, seed):
    g = generate_erdos_renyi(n, p, "normal:0,3", seed)
    path = tmp_path_factory.mktemp("g") / "edges.csv"
    save_graph(g, path)
    assert load_graph(path, n) == g


@pytest.mark.parametrize(
    "row, message",
    [("2,2,1.0", "line 2: self-edge"), ("0,1,notanumber", "line 2"), ("0,9,1.0", "out of range"), ("0,1", "3 fields")],
)
def test_graph_file_errors(tmp_path, row, message):
    path = tmp_path / "e.csv"
    path.write_text(f"src,dst,gamma\n{row}\n")
    with pytest.raises(GraphFormatError, match=message):
        load_graph(path, 3)


def test_graph_file_duplicate_line_number(tmp_path):
    path = tmp_path / "e.csv"
    path.write_text("src,dst,gamma\n0,1,1\n1,0,1\n0,1,2\n")
    with pytest.raises(GraphFormatError, match="line 4: duplicate"):
        load_graph(path, 2)


def test_partition_validation_and_round_trip(tmp_path):
    with pytest.raises(ValueError):
        Partition(np.array([0, 2, 2]))
    part = Partition.equal(7, 3)
    assert part.sizes.sum() == 7 and part.n_clusters == 3
    assert not part.is_uniform()
    assert Partition.equal(6, 3).is_uniform()
    save_partition(part, tmp_path / "p.csv")
    assert load_partition(tmp_path / "p.csv") == part
