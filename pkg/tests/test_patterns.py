"""Tests for patterns.py."""
import math

import numpy as np
import pytest

from wstlab.patterns import (
    PatternError,
    RootedTreePattern,
    brute_force_stab,
    canonicalize,
    enumerate_patterns,
    path,
    pgw_reference_probability,
    reference_mass,
    star,
)


def test_canonical_encodings():
    assert star(3).encoding == "(()()())"
    assert path(2).encoding == "((()))"
    assert path(0).encoding == "()"


def test_canonicalize_ignores_labels_and_child_order():
    a = canonicalize([("r", "x"), ("x", "y"), ("r", "z")], "r")
    b = canonicalize([(5, 1), (1, 2), (2, 3)], 1)
    assert a == b
    assert a.encoding == "((())())"
    assert hash(a) == hash(b)


def test_canonicalize_depends_on_root():
    edges = [(0, 1), (1, 2)]
    assert canonicalize(edges, 0, 2) != canonicalize(edges, 1, 2)
    assert canonicalize(edges, 1).encoding == "(()())"


def test_radius_is_part_of_identity():
    assert star(2, radius=1) != star(2, radius=2)
    assert star(2, radius=1) == RootedTreePattern.from_encoding("(()())", 1)


def test_single_vertex():
    pattern = canonicalize([], "v", 0)
    assert pattern.k == 1
    assert pattern.t == 0
    assert pattern.stab == 1


@pytest.mark.parametrize(
    "encoding, radius, k, t, stab",
    [
        ("(())", 1, 2, 1, 1),
        ("(()()())", 1, 4, 1, 6),
        ("((()))", 2, 3, 2, 1),
        ("((()())(()()))", 2, 7, 3, 8),
        ("((())())", 2, 4, 3, 1),
        ("(())", 2, 2, 2, 1),
    ],
)
def test_pattern_statistics(encoding, radius, k, t, stab):
    pattern = RootedTreePattern.from_encoding(encoding, radius)
    assert (pattern.k, pattern.t, pattern.stab) == (k, t, stab)
    assert brute_force_stab(pattern) == stab


def test_bfs_order_is_canonical():
    pattern = RootedTreePattern.from_encoding("((())())", 2)
    assert pattern.parent[0] == -1
    assert list(pattern.depth) == sorted(pattern.depth)
    assert pattern.height == 2
    assert len(pattern.edges) == pattern.k - 1


@pytest.mark.parametrize("encoding", ["(()", "())", "(x)", "", "()()"])
def test_from_encoding_errors(encoding):
    with pytest.raises(PatternError):
        RootedTreePattern.from_encoding(encoding)


def test_canonicalize_errors():
    with pytest.raises(PatternError):
        canonicalize([(0, 1), (1, 2), (2, 0)], 0)
    with pytest.raises(PatternError):
        canonicalize([(0, 0)], 0)
    with pytest.raises(PatternError):
        canonicalize([(1, 2)], 0)
    with pytest.raises(PatternError):
        canonicalize([(0, 1), (1, 2)], 0, radius=1)


def test_reference_probabilities():
    """Stars of radius one follow a size-biased Poisson(1) law."""
    assert pgw_reference_probability(star(1)).probability == pytest.approx(math.exp(-1))
    probability = pgw_reference_probability(star(3)).probability
    assert probability == pytest.approx(math.exp(-1) / 2)
    root_only = pgw_reference_probability(path(0, radius=0))
    assert root_only == (1.0, True)


def test_reference_probability_outside_support():
    """A radius-two ball must reach depth two."""
    result = pgw_reference_probability(star(1, radius=2))
    assert not result.in_support
    assert result.probability == 0.0


def test_reference_probability_radius_two():
    pattern = path(2, radius=2)
    # exp(-2) (3 - 2) / 1
    assert pgw_reference_probability(pattern).probability == pytest.approx(math.exp(-2))


def test_enumerate_patterns():
    assert [p.encoding for p in enumerate_patterns(1, 4)] == [
        "()",
        "(())",
        "(()())",
        "(()()())",
    ]
    radius_two = enumerate_patterns(2, 4)
    assert len(radius_two) == 7
    assert len(set(radius_two)) == 7
    assert all(p.height <= 2 for p in radius_two)
    with pytest.raises(PatternError):
        enumerate_patterns(-1, 3)


def test_reference_mass():
    mass, tail = reference_mass(1, 12)
    assert mass == pytest.approx(1.0, abs=1e-6)
    assert tail < 1e-6
    mass_two, tail_two = reference_mass(2, 6)
    assert 0.0 < mass_two < 1.0
    assert mass_two + tail_two == pytest.approx(1.0)


def _random_rooted_tree(rng, k):
    parents = [int(rng.integers(0, j)) for j in range(1, k)]
    return [(p, j) for j, p in enumerate(parents, start=1)]


@pytest.mark.parametrize("seed", range(10))
def test_canonicalize_is_label_invariant(seed):
    """1000 random trees per seed, each under a random relabeling."""
    rng = np.random.default_rng(seed)
    for _ in range(1000):
        k = int(rng.integers(1, 21))
        edges = _random_rooted_tree(rng, k)
        root = int(rng.integers(0, k))
        labels = [f"v{x}" for x in rng.permutation(k)]
        relabeled = [
            (labels[b], labels[a]) if rng.random() < 0.5 else (labels[a], labels[b])
            for a, b in edges
        ]
        order = rng.permutation(len(relabeled))
        relabeled = [relabeled[i] for i in order]
        pattern = canonicalize(edges, root)
        assert canonicalize(relabeled, labels[root]) == pattern
        assert canonicalize(pattern.edges, 0, pattern.radius) == pattern


@pytest.mark.parametrize(
    "k, count", [(1, 1), (2, 1), (3, 2), (4, 4), (5, 9), (6, 20), (7, 48), (8, 115)]
)
def test_stab_matches_brute_force_for_all_small_trees(k, count):
    trees = [p for p in enumerate_patterns(k - 1, 8) if p.k == k]
    assert len(trees) == count
    for pattern in trees:
        assert pattern.stab == brute_force_stab(pattern)
