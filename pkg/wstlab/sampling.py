"""Exact spanning-tree samplers, minimum spanning trees and enumeration oracles.

Every sampler targets the weighted spanning tree law ``P(T) ∝ prod_{e in T} c(e)``.
Samplers are pure functions of the network and an :class:`RngStream`.
"""
import logging
from collections import Counter
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import TextIO

import numpy as np
from scipy.cluster.hierarchy import DisjointSet

from wstlab.network import DisconnectedNetworkError, ElectricNetwork
from wstlab.resistance import DEFAULT_WINDOW, BandedReduction, quotient_network
from wstlab.walks import RngStream, TransitionTable, WalkStalledError

logger = logging.getLogger(__name__)

MAX_WALK_STEPS = 10**10
ENUMERATION_LIMIT = 12

TreeLaw = dict[tuple[int, ...], float]
Sampler = Callable[[ElectricNetwork, RngStream], "SpanningTree"]


class SamplingError(Exception):
    """Base class for errors raised by the samplers."""

    pass


class InvalidTreeError(SamplingError, ValueError):
    """Exception raised when an edge set is not a spanning tree."""

    pass


class SamplerStalledError(SamplingError, WalkStalledError):
    """Exception raised when a walk-based sampler exceeds its step budget."""

    pass


class EnumerationLimitError(SamplingError):
    """Exception raised when exhaustive enumeration is asked of a large network."""

    pass


class ConditioningError(SamplingError, ValueError):
    """Exception raised for inconsistent forced-in / forced-out edge sets."""

    pass


@dataclass(frozen=True)
class SpanningTree:
    """Spanning tree of a network, stored as sorted edge indices.

    Attributes:
        net (ElectricNetwork): The network the indices refer to.
        edges (tuple[int, ...]): Sorted edge indices, exactly ``n - 1`` of them.
    """

    net: ElectricNetwork = field(compare=False, repr=False)
    edges: tuple[int, ...]

    def __post_init__(self) -> None:
        edges = tuple(sorted(int(e) for e in self.edges))
        object.__setattr__(self, "edges", edges)
        n = self.net.n
        if len(edges) != n - 1:
            raise InvalidTreeError(
                f"A spanning tree of {n} vertices has {n - 1} edges, got {len(edges)}."
            )
        in_range = not edges or 0 <= edges[0] <= edges[-1] < self.net.m
        if len(set(edges)) != len(edges) or not in_range:
            raise InvalidTreeError("Edge indices must be distinct and valid.")
        components = DisjointSet(range(n))
        for e in edges:
            if not components.merge(int(self.net.edge_u[e]), int(self.net.edge_v[e])):
                raise InvalidTreeError(f"Edge {e} closes a cycle.")

    def __len__(self) -> int:
        return len(self.edges)

    @classmethod
    def from_walk(cls, net: ElectricNetwork, edges: Iterable[int]) -> "SpanningTree":
        """Tree from walk-sampler output, which is acyclic by construction.

        Skips the cycle check of the regular constructor.
        """
        tree = object.__new__(cls)
        object.__setattr__(tree, "net", net)
        object.__setattr__(tree, "edges", tuple(sorted(edges)))
        return tree

    def __contains__(self, edge: int) -> bool:
        return edge in self.edge_set

    @cached_property
    def edge_set(self) -> frozenset[int]:
        """Edge indices as a set."""
        return frozenset(self.edges)

    @cached_property
    def mask(self) -> np.ndarray:
        """Boolean membership mask over all network edges."""
        mask = np.zeros(self.net.m, dtype=bool)
        mask[list(self.edges)] = True
        return mask

    @cached_property
    def adjacency(self) -> list[list[tuple[int, int]]]:
        """``(neighbour, edge index)`` lists of the tree."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.net.n)]
        for e in self.edges:
            u, v = int(self.net.edge_u[e]), int(self.net.edge_v[e])
            adj[u].append((v, e))
            adj[v].append((u, e))
        return adj

    @cached_property
    def _rooted(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        parent = np.full(self.net.n, -1, dtype=np.int64)
        parent_edge = np.full(self.net.n, -1, dtype=np.int64)
        depth = np.zeros(self.net.n, dtype=np.int64)
        seen = np.zeros(self.net.n, dtype=bool)
        seen[0] = True
        queue = [0]
        for v in queue:
            for w, e in self.adjacency[v]:
                if not seen[w]:
                    seen[w] = True
                    parent[w], parent_edge[w] = v, e
                    depth[w] = depth[v] + 1
                    queue.append(w)
        return parent, parent_edge, depth

    @property
    def parent(self) -> tuple[np.ndarray, np.ndarray]:
        """Parent vertex and parent edge of every vertex, rooted at 0 (root gets -1)."""
        parent, parent_edge, _ = self._rooted
        return parent, parent_edge

    @property
    def depth(self) -> np.ndarray:
        """Depth of every vertex below vertex 0."""
        return self._rooted[2]

    @property
    def pairs(self) -> list[tuple[int, int]]:
        """Tree edges as endpoint pairs."""
        return [(int(self.net.edge_u[e]), int(self.net.edge_v[e])) for e in self.edges]

    def weight(self) -> float:
        """Product of the conductances of the tree edges."""
        return float(np.prod(self.net.conductance[list(self.edges)]))

    def path_edges(self, u: int, v: int) -> list[int]:
        """Edge indices on the unique tree path from ``u`` to ``v``."""
        parent, parent_edge = self.parent
        depth = self.depth
        path_u: list[int] = []
        path_v: list[int] = []
        while depth[u] > depth[v]:
            path_u.append(int(parent_edge[u]))
            u = int(parent[u])
        while depth[v] > depth[u]:
            path_v.append(int(parent_edge[v]))
            v = int(parent[v])
        while u != v:
            path_u.append(int(parent_edge[u]))
            path_v.append(int(parent_edge[v]))
            u, v = int(parent[u]), int(parent[v])
        return path_u + path_v[::-1]


def wilson_sample(
    net: ElectricNetwork,
    rng: RngStream,
    log_conductance: np.ndarray | None = None,
    table: TransitionTable | None = None,
    max_steps: int = MAX_WALK_STEPS,
) -> SpanningTree:
    """Sample a weighted spanning tree with Wilson's algorithm rooted at vertex 0.

    Loop-erased walks are run from every vertex not yet in the tree until they
    hit it; loop erasure keeps only the last exit from every visited vertex.

    Args:
        net (ElectricNetwork): Connected network.
        rng (RngStream): Random stream.
        log_conductance (np.ndarray, optional): Per-edge log conductances to use
            instead of the network's own; values far below float64 range are
            handled by the per-vertex max-subtracted tables.
        table (TransitionTable, optional): Prebuilt tables for repeated draws.
        max_steps (int): Total walk step budget.

    Returns:
        SpanningTree: An exact sample.

    Raises:
        SamplerStalledError: If the walks exceed ``max_steps`` steps.
    """
    table = table or TransitionTable(net, log_conductance)
    step = table.step
    draws = rng.uniforms()
    n = net.n
    in_tree = [False] * n
    in_tree[0] = True
    next_vertex = [-1] * n
    next_edge = [-1] * n
    edges: list[int] = []
    steps = 0
    for start in range(1, n):
        v = start
        while not in_tree[v]:
            w, e = step(v, next(draws))
            next_vertex[v], next_edge[v] = w, e
            v = w
            steps += 1
            if steps > max_steps:
                raise SamplerStalledError(f"Wilson exceeded {max_steps} walk steps.")
        v = start
        while not in_tree[v]:
            in_tree[v] = True
            edges.append(next_edge[v])
            v = next_vertex[v]
    return SpanningTree.from_walk(net, edges)


def aldous_broder_sample(
    net: ElectricNetwork,
    rng: RngStream,
    log_conductance: np.ndarray | None = None,
    table: TransitionTable | None = None,
    max_steps: int = MAX_WALK_STEPS,
) -> SpanningTree:
    """Sample a weighted spanning tree with the Aldous-Broder covering walk.

    The walk starts at vertex 0 and keeps the edge of first entry into every
    other vertex.

    Raises:
        SamplerStalledError: If the walk exceeds ``max_steps`` steps.
    """
    table = table or TransitionTable(net, log_conductance)
    step = table.step
    draws = rng.uniforms()
    visited = [False] * net.n
    visited[0] = True
    remaining = net.n - 1
    edges: list[int] = []
    v = 0
    steps = 0
    while remaining:
        w, e = step(v, next(draws))
        if not visited[w]:
            visited[w] = True
            edges.append(e)
            remaining -= 1
        v = w
        steps += 1
        if steps > max_steps:
            raise SamplerStalledError(f"Aldous-Broder exceeded {max_steps} walk steps.")
    return SpanningTree.from_walk(net, edges)


def kruskal_min(net: ElectricNetwork, labels: np.ndarray) -> SpanningTree:
    """Minimum spanning tree under per-edge labels, ties broken by edge index.

    Raises:
        DisconnectedNetworkError: If no spanning tree exists.
    """
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != (net.m,) or not np.all(np.isfinite(labels)):
        raise ValueError("Labels must be finite, one per edge.")
    components = DisjointSet(range(net.n))
    edge_u, edge_v = net.edge_u.tolist(), net.edge_v.tolist()
    chosen: list[int] = []
    for e in np.argsort(labels, kind="stable").tolist():
        if len(chosen) == net.n - 1:
            break
        if components.merge(edge_u[e], edge_v[e]):
            chosen.append(e)
    if len(chosen) != net.n - 1:
        raise DisconnectedNetworkError("Labels cover a disconnected edge set.")
    return SpanningTree(net, tuple(chosen))


def max_st(
    net: ElectricNetwork, log_conductance: np.ndarray | None = None
) -> SpanningTree:
    """Spanning tree maximising the product of conductances.

    Kruskal on ascending ``-log c``, which is also the label MST of a random
    environment for every ``beta > 0``.
    """
    logc = net.log_conductance if log_conductance is None else log_conductance
    return kruskal_min(net, -np.asarray(logc, dtype=np.float64))


def enumerate_spanning_trees(net: ElectricNetwork) -> list[tuple[SpanningTree, float]]:
    """All spanning trees with their weights, by include/exclude recursion.

    Branches are pruned as soon as the included edges close a cycle or the
    excluded edges disconnect the network.

    Raises:
        EnumerationLimitError: If the network has more than 12 vertices.
    """
    if net.n > ENUMERATION_LIMIT:
        raise EnumerationLimitError(
            f"Enumeration is limited to {ENUMERATION_LIMIT} vertices, got {net.n}."
        )
    edge_u, edge_v = net.edge_u.tolist(), net.edge_v.tolist()
    conductance = net.conductance.tolist()
    n, m = net.n, net.m
    found: list[tuple[SpanningTree, float]] = []

    def spans(chosen: list[int], start: int) -> bool:
        components = DisjointSet(range(n))
        for e in [*chosen, *range(start, m)]:
            components.merge(edge_u[e], edge_v[e])
        return components.n_subsets == 1

    def recurse(
        start: int, chosen: list[int], component: list[int], weight: float
    ) -> None:
        if len(chosen) == n - 1:
            found.append((SpanningTree(net, tuple(chosen)), weight))
            return
        if m - start < n - 1 - len(chosen):
            return
        a, b = component[edge_u[start]], component[edge_v[start]]
        if a != b:
            merged = [a if label == b else label for label in component]
            recurse(start + 1, [*chosen, start], merged, weight * conductance[start])
        if spans(chosen, start + 1):
            recurse(start + 1, chosen, component, weight)

    recurse(0, [], list(range(n)), 1.0)
    return found


def exact_tree_law(net: ElectricNetwork) -> TreeLaw:
    """Exact tree law from enumeration, keyed by sorted edge-index tuples."""
    trees = enumerate_spanning_trees(net)
    total = sum(weight for _, weight in trees)
    return {tree.edges: weight / total for tree, weight in trees}


def _check_conditioning(
    net: ElectricNetwork, forced_in: Iterable[int], forced_out: Iterable[int]
) -> tuple[list[int], set[int], np.ndarray]:
    inside = sorted(set(int(e) for e in forced_in))
    outside = set(int(e) for e in forced_out)
    if outside & set(inside):
        raise ConditioningError("Forced-in and forced-out edge sets overlap.")
    components = DisjointSet(range(net.n))
    for e in inside:
        if not components.merge(int(net.edge_u[e]), int(net.edge_v[e])):
            raise ConditioningError(
                f"Forced-in edges contain a cycle through edge {e}."
            )
    roots = np.array([components[v] for v in range(net.n)])
    _, labels = np.unique(roots, return_inverse=True)
    return inside, outside, labels


def _reduce(
    net: ElectricNetwork, forced_in: Iterable[int], forced_out: Iterable[int]
) -> tuple[list[int], ElectricNetwork, np.ndarray]:
    inside, outside, labels = _check_conditioning(net, forced_in, forced_out)
    keep = np.ones(net.m, dtype=bool)
    keep[list(outside)] = False
    keep[inside] = False
    try:
        reduced, edge_map = quotient_network(net, labels, keep=keep)
    except DisconnectedNetworkError as err:
        raise ConditioningError(
            "Deleting the forced-out edges disconnects the network."
        ) from err
    return inside, reduced, edge_map


def conditioned_sample(
    net: ElectricNetwork,
    forced_in: Iterable[int],
    forced_out: Iterable[int],
    rng: RngStream,
) -> SpanningTree:
    """Sample the tree law conditioned on containing ``A`` and avoiding ``B``.

    By the spatial Markov property this is ``A`` together with a weighted
    spanning tree of the network with ``A`` contracted and ``B`` deleted.
    Parallel edges created by the contraction are merged for the walk; the
    original edge is then picked among them in proportion to its conductance.

    Raises:
        ConditioningError: If ``A`` has a cycle, meets ``B``, or deleting ``B``
            disconnects the network.
    """
    inside, reduced, edge_map = _reduce(net, forced_in, forced_out)
    if reduced.n == 1:
        return SpanningTree(net, tuple(inside))
    reduced_tree = wilson_sample(reduced, rng)
    chosen = list(inside)
    for r in reduced_tree.edges:
        candidates = np.flatnonzero(edge_map == r)
        if candidates.size == 1:
            chosen.append(int(candidates[0]))
            continue
        weights = np.cumsum(net.conductance[candidates])
        pick = int(np.searchsorted(weights, rng.random() * weights[-1], side="right"))
        chosen.append(int(candidates[min(pick, candidates.size - 1)]))
    return SpanningTree(net, tuple(chosen))


def exact_conditional_law(
    net: ElectricNetwork,
    forced_in: Iterable[int],
    forced_out: Iterable[int],
    method: str = "rejection",
) -> TreeLaw:
    """Exact conditional tree law given ``A`` in and ``B`` out.

    Args:
        net (ElectricNetwork): Small network.
        forced_in (Iterable[int]): The edge set ``A``.
        forced_out (Iterable[int]): The edge set ``B``.
        method (str): ``"rejection"`` filters the full enumeration;
            ``"contraction"`` enumerates the contracted, deleted network and
            lifts every reduced tree back through the merged parallel edges.
    """
    forced_in = list(forced_in)
    forced_out = list(forced_out)
    if method == "rejection":
        _check_conditioning(net, forced_in, forced_out)
        law = {
            edges: p
            for edges, p in exact_tree_law(net).items()
            if set(forced_in) <= set(edges) and not set(forced_out) & set(edges)
        }
        total = sum(law.values())
        if total == 0:
            raise ConditioningError("The conditioning event has probability zero.")
        return {edges: p / total for edges, p in law.items()}
    if method != "contraction":
        raise ValueError(f"Unknown method {method!r}.")
    inside, reduced, edge_map = _reduce(net, forced_in, forced_out)
    if reduced.n == 1:
        return {tuple(sorted(inside)): 1.0}
    groups = [np.flatnonzero(edge_map == r).tolist() for r in range(reduced.m)]
    law: TreeLaw = {}
    for tree, weight in enumerate_spanning_trees(reduced):
        partial = [(list(inside), 1.0)]
        for r in tree.edges:
            total = float(reduced.conductance[r])
            partial = [
                (chosen + [e], p * float(net.conductance[e]) / total)
                for chosen, p in partial
                for e in groups[r]
            ]
        for chosen, p in partial:
            key = tuple(sorted(chosen))
            law[key] = law.get(key, 0.0) + weight * p
    total = sum(law.values())
    return {edges: p / total for edges, p in law.items()}


def sequential_sample(
    net: ElectricNetwork,
    log_conductance: np.ndarray | None,
    rng: RngStream,
    window: float = DEFAULT_WINDOW,
) -> SpanningTree:
    """Sample a weighted spanning tree edge by edge with the chain rule.

    Edges are visited in decreasing conductance order. Each is kept with its
    Kirchhoff probability in the network where the kept edges are contracted,
    the rejected ones deleted and the undecided edges weaker by more than
    ``exp(window)`` dropped. Edges whose endpoints are not joined by any band
    edge are kept without a solve, so at very large conductance ratios the
    sampler reduces to Kruskal on ``-log c``.

    Args:
        net (ElectricNetwork): Graph structure.
        log_conductance (np.ndarray, optional): Per-edge log conductances;
            the network's own when ``None``.
        rng (RngStream): Random stream.
        window (float): Log-width of the band of undecided edges.

    Returns:
        SpanningTree: A sample, exact up to a total variation of order
            ``m exp(-window)``.
    """
    if log_conductance is None:
        logc = net.log_conductance
    else:
        logc = np.asarray(log_conductance)
    reduction = BandedReduction(net, logc, window)
    order = reduction.order
    chosen: list[int] = []
    for position, index in enumerate(order.tolist()):
        if len(chosen) == net.n - 1:
            break
        u, v = int(net.edge_u[index]), int(net.edge_v[index])
        if reduction.connected(u, v):
            continue
        band = order[position : reduction.band_end(position)]
        p = reduction.probability(index, band)
        if p >= 1.0 or rng.random() < p:
            reduction.contract(index)
            chosen.append(index)
    return SpanningTree(net, tuple(chosen))


def tree_law(
    net: ElectricNetwork, sampler: Sampler, rng: RngStream, samples: int
) -> TreeLaw:
    """Empirical tree law of ``samples`` draws from ``sampler``."""
    counts = Counter(sampler(net, rng).edges for _ in range(samples))
    return {edges: count / samples for edges, count in counts.items()}


def total_variation(law_a: TreeLaw, law_b: TreeLaw) -> float:
    """Total variation distance between two laws on the same outcome space."""
    keys = set(law_a) | set(law_b)
    return 0.5 * sum(abs(law_a.get(k, 0.0) - law_b.get(k, 0.0)) for k in keys)


def edge_marginals(trees: Sequence[SpanningTree]) -> np.ndarray:
    """Empirical inclusion frequency of every edge over a batch of trees."""
    if not trees:
        raise ValueError("Need at least one tree.")
    return np.mean([tree.mask for tree in trees], axis=0)


def write_trees(
    trees: Iterable[SpanningTree], stream: TextIO, expand: bool = False
) -> None:
    """Write one line per tree: space-separated edge indices.

    With ``expand=True`` every line is followed by ``#`` and the ``u-v`` pairs.
    """
    for tree in trees:
        line = " ".join(map(str, tree.edges))
        if expand:
            line += " # " + " ".join(f"{u}-{v}" for u, v in tree.pairs)
        stream.write(line + "\n")


SAMPLERS: dict[str, Sampler] = {
    "wilson": wilson_sample,
    "aldous_broder": aldous_broder_sample,
}
