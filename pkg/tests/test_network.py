"""Tests for network.py."""
import networkx as nx
import numpy as np
import polars as pl
import pytest

from wstlab.network import (
    DisconnectedNetworkError,
    DuplicateEdgeError,
    GeneratorParameterError,
    MalformedNetworkError,
    NonpositiveConductanceError,
    NotAnEdgeError,
    SelfLoopError,
    VertexOutOfRangeError,
    balance_report,
    build_network,
    edge_overlap_report,
    from_networkx,
    gen_complete,
    gen_expander_chain_with_leaves,
    gen_glued_triangle_chain,
    gen_random_regular,
    gen_regular_plus_pendants,
    network_from_frame,
    network_to_frame,
    parse_graph_spec,
    read_network,
    stationary_distribution,
    to_networkx,
    typical_vertices,
    write_network,
)
from wstlab.schemas import PolarsSchemaError


def test_build_network_normalises_endpoints(triangle):
    """Edges are stored with u < v in input order."""
    net = build_network(3, [(1, 0, 1.0), (2, 1, 2.0)])
    assert net.edges == [(0, 1), (1, 2)]
    assert triangle.m == 3
    assert triangle.edge_index(2, 0) == 2


def test_vertex_strength(triangle):
    np.testing.assert_allclose(triangle.vertex_strength, [4.0, 3.0, 5.0])
    np.testing.assert_allclose(
        stationary_distribution(triangle), [4 / 12, 3 / 12, 5 / 12]
    )


def test_strength_is_readonly(triangle):
    with pytest.raises(ValueError):
        triangle.vertex_strength[0] = 1.0


@pytest.mark.parametrize(
    "edges, error",
    [
        ([(0, 0, 1.0), (0, 1, 1.0)], SelfLoopError),
        ([(0, 1, 1.0), (1, 0, 2.0)], DuplicateEdgeError),
        ([(0, 1, 0.0)], NonpositiveConductanceError),
        ([(0, 1, -1.0)], NonpositiveConductanceError),
        ([(0, 1, float("nan"))], NonpositiveConductanceError),
        ([(0, 2, 1.0)], VertexOutOfRangeError),
    ],
)
def test_malformed_networks(edges, error):
    """Every malformation has its own error, all of them MalformedNetworkError."""
    with pytest.raises(error):
        build_network(2, edges)
    assert issubclass(error, MalformedNetworkError)


def test_disconnected_network():
    with pytest.raises(DisconnectedNetworkError):
        build_network(4, [(0, 1, 1.0), (2, 3, 1.0)])


def test_single_vertex_network():
    net = build_network(1, [])
    assert net.n == 1
    assert net.m == 0


def test_edge_index_missing_edge(path3):
    with pytest.raises(NotAnEdgeError):
        path3.edge_index(0, 2)
    with pytest.raises(KeyError):
        path3.edge_index(0, 2)
    assert not path3.has_edge(0, 2)
    assert path3.has_edge(2, 1)


def test_neighbors_and_degree(star5):
    assert star5.neighbors(0).tolist() == [1, 2, 3, 4]
    assert star5.neighbors(3).tolist() == [0]
    assert star5.degree().tolist() == [4, 1, 1, 1, 1]


def test_adjacency_edge_ids(triangle):
    """Every half-edge points back to its stable index."""
    adj = triangle.adjacency
    for v in range(triangle.n):
        for k in range(adj.indptr[v], adj.indptr[v + 1]):
            w = int(adj.neighbors[k])
            assert triangle.edge_index(v, w) == adj.edge_ids[k]
            assert adj.weights[k] == triangle.conductance[adj.edge_ids[k]]


def test_laplacian_rows_sum_to_zero(triangle):
    lap = triangle.laplacian().toarray()
    np.testing.assert_allclose(lap.sum(axis=1), 0.0, atol=1e-12)
    np.testing.assert_allclose(np.diag(lap), triangle.vertex_strength)


def test_with_conductance(triangle):
    net = triangle.with_conductance(np.array([2.0, 2.0, 2.0]))
    assert net.edges == triangle.edges
    np.testing.assert_allclose(net.vertex_strength, [4.0, 4.0, 4.0])


def test_frame_round_trip(triangle):
    frame = network_to_frame(triangle)
    assert frame.columns == ["u", "v", "c"]
    net = network_from_frame(frame.lazy())
    assert net.edges == triangle.edges
    np.testing.assert_array_equal(net.conductance, triangle.conductance)


def test_network_from_frame_rejects_bad_schema():
    with pytest.raises(PolarsSchemaError):
        network_from_frame(pl.DataFrame({"u": [0], "v": [1]}))


def test_file_round_trip(tmp_path):
    """Conductances survive the text format bit for bit."""
    net = build_network(3, [(0, 1, 0.1), (1, 2, 1 / 3), (0, 2, 1e-300)])
    path = tmp_path / "net.txt"
    write_network(net, path)
    assert path.read_text().splitlines()[0] == "3 3"
    back = read_network(path)
    assert back.edges == net.edges
    np.testing.assert_array_equal(back.conductance, net.conductance)


def test_read_network_header_mismatch(tmp_path):
    path = tmp_path / "net.txt"
    path.write_text("3 3\n0 1 1.0\n1 2 1.0\n")
    with pytest.raises(MalformedNetworkError):
        read_network(path)


def test_networkx_round_trip(triangle):
    graph = to_networkx(triangle)
    assert graph[0][2]["weight"] == 3.0
    back = from_networkx(graph)
    assert set(back.edges) == set(triangle.edges)
    for u, v in triangle.edges:
        assert back.conductance[back.edge_index(u, v)] == graph[u][v]["weight"]


def test_from_networkx_unweighted():
    net = from_networkx(nx.cycle_graph(5), weight=None)
    assert net.m == 5
    np.testing.assert_array_equal(net.conductance, np.ones(5))


def test_gen_complete():
    net = gen_complete(5, 2.0)
    assert net.m == 10
    np.testing.assert_allclose(net.vertex_strength, 8.0)
    with pytest.raises(GeneratorParameterError):
        gen_complete(1)


def test_gen_glued_triangle_chain():
    net = gen_glued_triangle_chain(3)
    assert net.n == 7
    assert net.m == 9
    assert net.degree().tolist() == [2, 4, 4, 2, 2, 2, 2]


def test_gen_expander_chain_with_leaves():
    net = gen_expander_chain_with_leaves(d=3, copies=2, leaves=3)
    assert net.n == 11
    # two K_4, one bridge, three leaves
    assert net.m == 6 + 6 + 1 + 3
    assert net.has_edge(3, 4)
    assert net.degree()[8:].tolist() == [1, 1, 1]


def test_gen_random_regular():
    net = gen_random_regular(12, 5, seed=4)
    assert net.m == 30
    assert set(net.degree().tolist()) == {5}
    assert gen_random_regular(12, 5, seed=4).edges == net.edges
    with pytest.raises(GeneratorParameterError):
        gen_random_regular(5, 3)
    with pytest.raises(GeneratorParameterError):
        gen_random_regular(4, 4)


def test_gen_regular_plus_pendants():
    net = gen_regular_plus_pendants(gen_complete(6), m=3, f=2, seed=1)
    assert net.n == 9
    assert net.degree()[6:].tolist() == [2, 2, 2]
    with pytest.raises(GeneratorParameterError):
        gen_regular_plus_pendants(gen_complete(3), m=1, f=4)
    with pytest.raises(GeneratorParameterError):
        gen_regular_plus_pendants(gen_complete(3), m=1, f=0)


def test_parse_graph_spec():
    assert parse_graph_spec("complete:n=6").m == 15
    assert parse_graph_spec("complete:n=3,c=2.5").conductance.tolist() == [2.5] * 3
    assert parse_graph_spec("triangle_chain:n=2").n == 5
    regular = parse_graph_spec("regular:n=12,d=5,seed=4")
    assert set(regular.degree().tolist()) == {5}
    pendants = parse_graph_spec("pendants:base=8,d=complete,m=2,f=3,seed=0")
    assert pendants.n == 10


def test_parse_graph_spec_file(tmp_path, triangle):
    path = tmp_path / "tri.txt"
    write_network(triangle, path)
    assert parse_graph_spec(str(path)).edges == triangle.edges


@pytest.mark.parametrize("spec", ["nosuch:n=3", "complete:n", "complete:k=3"])
def test_parse_graph_spec_errors(spec):
    with pytest.raises(GeneratorParameterError):
        parse_graph_spec(spec)


def test_balance_report_complete_graph():
    """K_n with conductance 1/(n-1) is balanced at gamma 1/2."""
    n = 50
    report = balance_report(gen_complete(n, 1 / (n - 1)), gamma=0.5, K=4, delta=0.1)
    assert report.frac_typical == 1.0
    assert report.atypical_strength_ratio == 0.0
    assert report.max_edge_ratio == pytest.approx(2 / (n - 1))
    assert report.total_strength_ratio == pytest.approx(2.0)
    assert report.all_pass


def test_balance_report_fails_with_heavy_edge():
    report = balance_report(gen_complete(10), gamma=9.0, K=2, delta=0.1)
    assert report.passes[0]
    assert not report.passes[2]
    assert not report.all_pass


@pytest.mark.parametrize(
    "gamma, K, delta", [(0.0, 2.0, 0.1), (1.0, 1.0, 0.1), (1.0, 2.0, 1.0)]
)
def test_balance_report_parameter_errors(gamma, K, delta):  # noqa: N803
    with pytest.raises(ValueError):
        balance_report(gen_complete(4), gamma, K, delta)


def test_typical_vertices(star5):
    mask = typical_vertices(star5, gamma=2.0, K=2.0)
    assert mask.tolist() == [False, False, True, True, True]


def test_edge_overlap_report():
    frac, max_edge, flags = edge_overlap_report(gen_complete(20, 0.01), 0.1, 0.2)
    assert frac == 1.0
    assert max_edge == pytest.approx(0.1)
    assert flags == (True, True)


def test_read_network_skips_header_comments(tmp_path, triangle):
    path = tmp_path / "net.txt"
    write_network(triangle, path, header={"version": "0.1.0", "seed": 3})
    lines = path.read_text().splitlines()
    assert lines[0] == "# wstlab version=0.1.0 seed=3"
    assert lines[1] == "3 3"
    back = read_network(path)
    assert back.edges == triangle.edges
    np.testing.assert_array_equal(back.conductance, triangle.conductance)
