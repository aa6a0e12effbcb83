"""Tests for sampling.py."""
import io
import math

import numpy as np
import pytest

from wstlab.network import build_network, gen_complete
from wstlab.resistance import ResistanceSolver, kirchhoff_probabilities
from wstlab.sampling import (
    SAMPLERS,
    ConditioningError,
    EnumerationLimitError,
    InvalidTreeError,
    SamplerStalledError,
    SpanningTree,
    aldous_broder_sample,
    conditioned_sample,
    edge_marginals,
    enumerate_spanning_trees,
    exact_conditional_law,
    exact_tree_law,
    kruskal_min,
    max_st,
    sequential_sample,
    total_variation,
    tree_law,
    wilson_sample,
    write_trees,
)
from wstlab.walks import RngStream, WalkStalledError


@pytest.fixture
def weighted_k4():
    return build_network(
        4,
        [(0, 1, 1.0), (0, 2, 2.0), (0, 3, 0.5), (1, 2, 3.0), (1, 3, 1.0), (2, 3, 4.0)],
    )


def test_spanning_tree_is_sorted(triangle):
    tree = SpanningTree(triangle, (2, 0))
    assert tree.edges == (0, 2)
    assert len(tree) == 2
    assert 2 in tree and 1 not in tree
    assert tree.mask.tolist() == [True, False, True]
    assert tree.pairs == [(0, 1), (0, 2)]
    assert tree.weight() == 3.0


@pytest.mark.parametrize("edges", [(0,), (0, 0), (0, 1, 2), (0, 7)])
def test_invalid_trees(triangle, edges):
    with pytest.raises(InvalidTreeError):
        SpanningTree(triangle, edges)


def test_invalid_tree_cycle(k4):
    with pytest.raises(InvalidTreeError):
        # (0, 1), (0, 2), (1, 2)
        SpanningTree(k4, (0, 1, 3))


def test_tree_paths(path4):
    tree = SpanningTree(path4, (0, 1, 2))
    parent, parent_edge = tree.parent
    assert parent.tolist() == [-1, 0, 1, 2]
    assert parent_edge.tolist() == [-1, 0, 1, 2]
    assert tree.depth.tolist() == [0, 1, 2, 3]
    assert tree.path_edges(0, 3) == [0, 1, 2]
    assert tree.path_edges(3, 1) == [2, 1]
    assert tree.path_edges(2, 2) == []


def test_tree_path_through_root(star5):
    tree = SpanningTree(star5, (0, 1, 2, 3))
    assert tree.path_edges(1, 4) == [0, 3]


def test_enumerate_triangle(triangle):
    trees = enumerate_spanning_trees(triangle)
    assert sorted(weight for _, weight in trees) == [2.0, 3.0, 6.0]
    law = exact_tree_law(triangle)
    assert law[(0, 1)] == pytest.approx(2 / 11)
    assert law[(0, 2)] == pytest.approx(3 / 11)
    assert law[(1, 2)] == pytest.approx(6 / 11)


def test_enumerate_complete_graphs():
    """Cayley's formula."""
    assert len(enumerate_spanning_trees(gen_complete(4))) == 16
    assert len(enumerate_spanning_trees(gen_complete(5))) == 125


def test_enumeration_limit():
    with pytest.raises(EnumerationLimitError):
        enumerate_spanning_trees(gen_complete(13))


def test_exact_law_marginals_match_kirchhoff(weighted_k4):
    law = exact_tree_law(weighted_k4)
    assert math.fsum(law.values()) == pytest.approx(1.0)
    marginals = np.zeros(weighted_k4.m)
    for edges, p in law.items():
        marginals[list(edges)] += p
    np.testing.assert_allclose(
        marginals, kirchhoff_probabilities(ResistanceSolver(weighted_k4)), rtol=1e-10
    )


@pytest.mark.parametrize("name", sorted(SAMPLERS))
def test_walk_samplers_match_exact_law(weighted_k4, name):
    """Empirical laws of the walk samplers are close to the enumeration."""
    empirical = tree_law(weighted_k4, SAMPLERS[name], RngStream(11), 6000)
    assert total_variation(empirical, exact_tree_law(weighted_k4)) < 0.06


def test_sequential_sample_matches_exact_law(weighted_k4):
    rng = RngStream(5)
    empirical = tree_law(
        weighted_k4, lambda net, r: sequential_sample(net, None, r), rng, 4000
    )
    assert total_variation(empirical, exact_tree_law(weighted_k4)) < 0.06


def test_samplers_are_reproducible(weighted_k4):
    first = [wilson_sample(weighted_k4, RngStream(2, 7)).edges for _ in range(3)]
    second = [wilson_sample(weighted_k4, RngStream(2, 7)).edges for _ in range(3)]
    assert first == second


@pytest.mark.parametrize("sampler", [wilson_sample, aldous_broder_sample])
def test_walk_sampler_output_passes_tree_checks(sampler):
    net = gen_complete(12)
    rng = RngStream(4)
    for _ in range(50):
        tree = sampler(net, rng)
        assert list(tree.edges) == sorted(tree.edges)
        assert SpanningTree(net, tree.edges) == tree


def test_wilson_with_extreme_log_conductances(k4):
    """Raw exponentials of these weights underflow; the tree is still valid."""
    logc = np.full(k4.m, -5000.0)
    logc[0] = -4000.0
    tree = wilson_sample(k4, RngStream(0), log_conductance=logc)
    assert len(tree) == 3


def test_sampler_stalls(path4):
    with pytest.raises(SamplerStalledError):
        wilson_sample(path4, RngStream(0), max_steps=1)
    with pytest.raises(WalkStalledError):
        aldous_broder_sample(path4, RngStream(0), max_steps=1)


def test_kruskal_min(triangle):
    assert kruskal_min(triangle, np.array([0.5, 0.2, 0.9])).edges == (0, 1)
    # ties go to the lower edge index
    assert kruskal_min(triangle, np.zeros(3)).edges == (0, 1)
    with pytest.raises(ValueError):
        kruskal_min(triangle, np.array([0.1, np.nan, 0.2]))
    with pytest.raises(ValueError):
        kruskal_min(triangle, np.zeros(2))


def test_max_st(triangle):
    assert max_st(triangle).edges == (1, 2)
    assert max_st(triangle, np.array([5.0, 0.0, 1.0])).edges == (0, 2)


def test_sequential_sample_reduces_to_kruskal(weighted_k4):
    """Conductance ratios of exp(500) leave no randomness."""
    logc = 500.0 * np.array([3.0, 1.0, 5.0, 0.0, 4.0, 2.0])
    expected = max_st(weighted_k4, logc)
    for i in range(5):
        tree = sequential_sample(weighted_k4, logc, RngStream(1, i))
        assert tree.edges == expected.edges


def test_conditioned_sample_respects_conditioning(weighted_k4):
    rng = RngStream(4)
    for _ in range(50):
        tree = conditioned_sample(weighted_k4, [0], [5], rng)
        assert 0 in tree
        assert 5 not in tree


def test_conditioned_sample_law(weighted_k4):
    exact = exact_conditional_law(weighted_k4, [1], [3])
    rng = RngStream(8)
    empirical = tree_law(
        weighted_k4, lambda net, r: conditioned_sample(net, [1], [3], r), rng, 4000
    )
    assert total_variation(empirical, exact) < 0.06


def test_conditioned_sample_fully_determined(triangle):
    tree = conditioned_sample(triangle, [0, 1], [], RngStream(0))
    assert tree.edges == (0, 1)


@pytest.mark.parametrize(
    "forced_in, forced_out",
    [([0], [1]), ([0, 5], []), ([], [0, 5])],
)
def test_conditional_laws_agree(weighted_k4, forced_in, forced_out):
    """Filtering the enumeration equals enumerating the reduced network."""
    rejection = exact_conditional_law(weighted_k4, forced_in, forced_out, "rejection")
    contraction = exact_conditional_law(
        weighted_k4, forced_in, forced_out, "contraction"
    )
    assert set(rejection) == set(contraction)
    for edges, p in rejection.items():
        assert contraction[edges] == pytest.approx(p, rel=1e-10)


def test_conditioning_errors(triangle, path3):
    with pytest.raises(ConditioningError):
        conditioned_sample(triangle, [0], [0], RngStream(0))
    with pytest.raises(ConditioningError):
        conditioned_sample(triangle, [0, 1, 2], [], RngStream(0))
    with pytest.raises(ConditioningError):
        conditioned_sample(path3, [], [0], RngStream(0))
    with pytest.raises(ValueError):
        exact_conditional_law(triangle, [0], [], method="gibbs")


def test_total_variation():
    assert total_variation({(0,): 0.5, (1,): 0.5}, {(0,): 1.0}) == pytest.approx(0.5)
    assert total_variation({(0,): 1.0}, {(0,): 1.0}) == 0.0


def test_edge_marginals(triangle):
    trees = [SpanningTree(triangle, (0, 1)), SpanningTree(triangle, (1, 2))]
    np.testing.assert_allclose(edge_marginals(trees), [0.5, 1.0, 0.5])
    with pytest.raises(ValueError):
        edge_marginals([])


def test_write_trees(triangle):
    buffer = io.StringIO()
    write_trees([SpanningTree(triangle, (0, 2))], buffer)
    write_trees([SpanningTree(triangle, (1, 2))], buffer, expand=True)
    assert buffer.getvalue().splitlines() == ["0 2", "1 2 # 1-2 0-2"]
