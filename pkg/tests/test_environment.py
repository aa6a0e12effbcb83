"""Tests for environment.py."""
import math

import numpy as np
import pytest

from wstlab.environment import (
    ConductanceUnderflowError,
    Environment,
    EpsilonRangeError,
    LabelEnvironmentError,
    NegativeBetaError,
    TiedLabelsError,
    TreeEdgeError,
    TreeMismatchError,
    conditional_label_quantiles,
    conditional_uniformity_test,
    draw_environment,
    environment_edge_probabilities,
    environment_network,
    environment_to_frame,
    mst_path_max,
    mst_path_maxima,
    mu,
    read_environment,
    sample_environment_tree,
    significant_edges,
    significant_edges_conductance,
    tree_symmetric_difference,
    write_environment,
)
from wstlab.network import build_network, gen_complete
from wstlab.sampling import SpanningTree, kruskal_min
from wstlab.walks import RngStream


def test_environment_validation():
    env = Environment([0.2, 0.5, 0.9], 2.0)
    np.testing.assert_allclose(env.log_conductance, [-0.4, -1.0, -1.8])
    assert env.log_range == pytest.approx(1.4)
    assert env.with_beta(0.0).log_range == 0.0
    with pytest.raises(ValueError):
        env.label[0] = 0.3
    with pytest.raises(NegativeBetaError):
        Environment([0.5], -1.0)
    with pytest.raises(LabelEnvironmentError):
        Environment([1.5], 1.0)


def test_environment_check(triangle, k4):
    env = Environment([0.1, 0.2, 0.3], 1.0)
    env.check(triangle)
    with pytest.raises(LabelEnvironmentError):
        env.check(k4)


def test_draw_environment(k4):
    env = draw_environment(k4, 3.0, RngStream(1))
    assert env.label.shape == (6,)
    assert np.all((env.label >= 0) & (env.label < 1))
    again = draw_environment(k4, 3.0, RngStream(1))
    np.testing.assert_array_equal(env.label, again.label)
    with pytest.raises(NegativeBetaError):
        draw_environment(k4, -0.5, RngStream(1))


def test_mu():
    assert mu(0.0) == 1.0
    assert mu(1.0) == pytest.approx(0.6321205588285577)
    assert mu(1e-12) == pytest.approx(1.0)
    assert mu(1e6) == pytest.approx(1e-6)
    with pytest.raises(NegativeBetaError):
        mu(-1.0)


def test_environment_network(triangle):
    net = environment_network(triangle, Environment([0.2, 0.5, 0.9], 2.0))
    np.testing.assert_allclose(net.conductance, [1.0, math.exp(-0.6), math.exp(-1.4)])
    with pytest.raises(ConductanceUnderflowError):
        environment_network(triangle, Environment([0.0, 0.5, 1.0], 1e4))


def test_sample_environment_tree_small_beta(k4):
    env = draw_environment(k4, 0.5, RngStream(0))
    tree = sample_environment_tree(k4, env, RngStream(0, 1))
    assert len(tree) == 3
    with pytest.raises(ValueError):
        sample_environment_tree(k4, env, RngStream(0), method="prim")


@pytest.mark.parametrize("method", ["auto", "sequential"])
def test_sample_environment_tree_frozen(k4, method):
    """At huge beta the weighted tree is the label MST."""
    env = Environment([0.1, 0.4, 0.2, 0.6, 0.3, 0.5], 1e5)
    mst = kruskal_min(k4, env.label)
    tree = sample_environment_tree(k4, env, RngStream(0), method=method)
    assert tree.edges == mst.edges


def test_environment_edge_probabilities(k4):
    flat = environment_edge_probabilities(k4, Environment(np.full(6, 0.3), 7.0))
    np.testing.assert_allclose(flat, 0.5, rtol=1e-12)
    env = Environment([0.1, 0.4, 0.2, 0.6, 0.3, 0.5], 1e5)
    frozen = environment_edge_probabilities(k4, env)
    np.testing.assert_allclose(frozen, kruskal_min(k4, env.label).mask.astype(float))


def test_mst_path_max(path3):
    net = build_network(3, [(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)])
    labels = np.array([0.2, 0.5, 0.9])
    mst = kruskal_min(net, labels)
    assert mst.edges == (0, 1)
    assert mst_path_max(mst, labels, (0, 2)) == 0.5
    assert mst_path_max(mst, labels, 2) == 0.5
    with pytest.raises(TreeEdgeError):
        mst_path_max(mst, labels, (0, 1))


def test_mst_path_max_ties_and_bad_tree(triangle):
    tied = np.array([0.2, 0.5, 0.5])
    with pytest.raises(TiedLabelsError):
        mst_path_max(kruskal_min(triangle, tied), tied, 2)
    labels = np.array([0.2, 0.9, 0.5])
    with pytest.raises(LabelEnvironmentError):
        mst_path_max(SpanningTree(triangle, (0, 1)), labels, 2)


def test_mst_path_maxima_match_single_queries():
    net = gen_complete(9)
    labels = RngStream(6).random(net.m)
    mst = kruskal_min(net, labels)
    external, maxima = mst_path_maxima(mst, labels)
    assert external.size == net.m - net.n + 1
    for index, value in zip(external.tolist(), maxima.tolist()):
        assert value == mst_path_max(mst, labels, index)
        assert value < labels[index]


def test_mst_path_maxima_on_a_tree(path4):
    external, maxima = mst_path_maxima(SpanningTree(path4, (0, 1, 2)), np.zeros(3))
    assert external.size == 0
    assert maxima.size == 0


def test_significant_edges(triangle):
    env = Environment([0.1, 0.3, 0.6], 2.0)
    result = significant_edges(triangle, env, 0.5)
    assert result.edges.tolist() == [2]
    assert result.gaps.tolist() == pytest.approx([0.3])
    assert result.threshold == pytest.approx(math.log(2) / 2)
    assert len(significant_edges(triangle, env, 0.6)) == 0


def test_significant_edges_at_zero_beta(k4):
    env = Environment([0.1, 0.4, 0.2, 0.6, 0.3, 0.5], 0.0)
    result = significant_edges(k4, env, 0.1)
    assert result.trivial
    assert len(result) == 3


@pytest.mark.parametrize("epsilon", [0.0, 1.0, -0.2, 2.0])
def test_significant_edges_epsilon_range(triangle, epsilon):
    with pytest.raises(EpsilonRangeError):
        significant_edges(triangle, Environment([0.1, 0.3, 0.6], 1.0), epsilon)


def test_significant_edges_conductance():
    """The external edge of conductance 2 sees a path minimum of 3."""
    net = build_network(3, [(0, 1, 6.0), (1, 2, 3.0), (0, 2, 2.0)])
    assert significant_edges_conductance(net, 0.5).edges.tolist() == [2]
    assert len(significant_edges_conductance(net, 0.7)) == 0


def test_tree_symmetric_difference(triangle, k4):
    t1 = SpanningTree(triangle, (0, 1))
    assert tree_symmetric_difference(t1, t1) == 0
    assert tree_symmetric_difference(t1, SpanningTree(triangle, (1, 2))) == 2
    with pytest.raises(TreeMismatchError):
        tree_symmetric_difference(t1, SpanningTree(k4, (0, 1, 2)))


def test_conditional_label_quantiles():
    net = gen_complete(30)
    quantiles = []
    for i in range(20):
        env = draw_environment(net, 1.0, RngStream(9, i))
        quantiles.append(conditional_label_quantiles(net, env))
    pooled = np.concatenate(quantiles)
    assert pooled.size == 20 * (net.m - net.n + 1)
    assert np.all((pooled >= 0) & (pooled <= 1))
    statistic, pvalue = conditional_uniformity_test(pooled)
    assert statistic < 0.05
    assert pvalue > 1e-4


def test_conditional_uniformity_test_rejects():
    _, pvalue = conditional_uniformity_test(np.full(200, 0.9))
    assert pvalue < 1e-6


def test_environment_frame_and_dump(tmp_path, triangle, k4):
    env = Environment([0.125, 1 / 3, 0.875], 4.5)
    frame = environment_to_frame(triangle, env)
    assert frame.columns == ["edge_index", "u", "v", "label"]
    path = tmp_path / "env.csv"
    write_environment(triangle, env, path)
    assert path.read_text().startswith("# beta=4.5\n")
    back = read_environment(path, triangle)
    assert back.beta == 4.5
    np.testing.assert_allclose(back.label, env.label, rtol=1e-15)
    with pytest.raises(LabelEnvironmentError):
        read_environment(path, k4)


def test_read_environment_missing_header(tmp_path):
    path = tmp_path / "env.csv"
    path.write_text("edge_index,u,v,label\n0,0,1,0.5\n")
    with pytest.raises(LabelEnvironmentError):
        read_environment(path)
