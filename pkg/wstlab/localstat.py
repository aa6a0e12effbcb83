"""Local statistics of spanning trees: ball censuses and the compatible-tuple sum."""
import logging
import math
from collections import Counter
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Literal, NamedTuple

import numpy as np
import polars as pl

from wstlab.network import ElectricNetwork, typical_vertices
from wstlab.patterns import (
    PatternError,
    RootedTreePattern,
    pattern_from_children,
    pgw_reference_probability,
)
from wstlab.resistance import ResistanceSolver, edge_resistances
from wstlab.sampling import SpanningTree
from wstlab.schemas import CENSUS_SCHEMA
from wstlab.walks import RngStream

logger = logging.getLogger(__name__)

BALL_CAP = 10_000
EXHAUSTIVE_MAX_N = 30
EXHAUSTIVE_MAX_K = 3

TreeSampler = Callable[[ElectricNetwork, RngStream], SpanningTree]


class IncompatibleTupleError(PatternError, ValueError):
    """Exception raised when a vertex tuple does not embed the pattern."""

    pass


class TheoremSumModeError(PatternError, ValueError):
    """Exception raised when exhaustive summation is asked of a large instance."""

    pass


def ball(
    tree: SpanningTree, v: int, radius: int, cap: int = BALL_CAP
) -> RootedTreePattern | None:
    """Canonical pattern of the radius-``r`` ball of ``v`` in the tree metric.

    Returns:
        RootedTreePattern | None: The pattern, or ``None`` when the ball has
            more than ``cap`` vertices.
    """
    adjacency = tree.adjacency
    local = {v: 0}
    children: list[list[int]] = [[]]
    frontier = [v]
    for _ in range(radius):
        next_frontier = []
        for x in frontier:
            for y, _ in adjacency[x]:
                if y in local:
                    continue
                local[y] = len(children)
                children.append([])
                children[local[x]].append(local[y])
                next_frontier.append(y)
                if len(children) > cap:
                    return None
        frontier = next_frontier
    return pattern_from_children(children, 0, radius)


@dataclass
class LocalCensus:
    """Counts of canonical ball patterns around sampled roots.

    Attributes:
        radius (int): Ball radius.
        samples (int): Number of observed roots, truncated ones included.
        counts (Counter): Occurrences of every pattern.
        truncation_count (int): Roots whose ball exceeded the size cap.
    """

    radius: int
    samples: int = 0
    counts: Counter = field(default_factory=Counter)
    truncation_count: int = 0

    def add(self, pattern: RootedTreePattern | None) -> None:
        """Record one observation; ``None`` marks a truncated ball."""
        self.samples += 1
        if pattern is None:
            self.truncation_count += 1
        else:
            self.counts[pattern] += 1

    def merge(self, other: "LocalCensus") -> "LocalCensus":
        """Combined census of two independent batches."""
        if other.radius != self.radius:
            raise ValueError("Cannot merge censuses of different radii.")
        return LocalCensus(
            radius=self.radius,
            samples=self.samples + other.samples,
            counts=self.counts + other.counts,
            truncation_count=self.truncation_count + other.truncation_count,
        )

    def probabilities(self) -> dict[RootedTreePattern, float]:
        """Empirical probability of every observed pattern."""
        if self.samples == 0:
            return {}
        return {p: c / self.samples for p, c in self.counts.items()}

    def standard_error(self, pattern: RootedTreePattern) -> float:
        """Binomial standard error of a pattern frequency."""
        if self.samples == 0:
            return 0.0
        p = self.counts.get(pattern, 0) / self.samples
        return math.sqrt(p * (1.0 - p) / self.samples)

    def to_frame(
        self,
        theorem_sums: dict[RootedTreePattern, float] | None = None,
        extra_patterns: Sequence[RootedTreePattern] = (),
    ) -> pl.DataFrame:
        """Census table with empirical, reference and compatible-tuple-sum columns.

        Args:
            theorem_sums (dict, optional): Compatible-tuple sums per pattern;
                missing patterns get null.
            extra_patterns (Sequence[RootedTreePattern]): Unobserved patterns to
                list with a zero count.
        """
        patterns = set(self.counts) | set(extra_patterns)
        rows = sorted(patterns, key=lambda p: (p.k, p.encoding))
        theorem_sums = theorem_sums or {}
        return pl.DataFrame(
            {
                "pattern_encoding": [p.encoding for p in rows],
                "k": [p.k for p in rows],
                "t": [p.t for p in rows],
                "stab": [p.stab for p in rows],
                "count": [self.counts.get(p, 0) for p in rows],
                "empirical_p": [
                    self.counts.get(p, 0) / self.samples if self.samples else 0.0
                    for p in rows
                ],
                "reference_p": [pgw_reference_probability(p).probability for p in rows],
                "theorem_sum_p": [theorem_sums.get(p) for p in rows],
            },
            schema=CENSUS_SCHEMA,
        )


def census(
    net: ElectricNetwork,
    sampler: TreeSampler,
    radius: int,
    replicas: int,
    rng: RngStream,
    roots_per_tree: int = 1,
    cap: int = BALL_CAP,
) -> LocalCensus:
    """Census of ball patterns over sampled trees and uniform roots.

    Replica ``i`` draws its tree and roots from ``rng.child(i)``.

    Args:
        net (ElectricNetwork): Network passed to the sampler.
        sampler (TreeSampler): ``sampler(net, rng)`` returns a spanning tree.
        radius (int): Ball radius.
        replicas (int): Number of sampled trees.
        rng (RngStream): Parent stream.
        roots_per_tree (int): Roots observed per tree. More than one makes the
            observations correlated.
        cap (int): Ball size above which an observation counts as truncated.
    """
    if replicas < 1 or roots_per_tree < 1:
        raise ValueError("Need replicas >= 1 and roots_per_tree >= 1.")
    if roots_per_tree > 1:
        logger.info(
            "Observing %d roots per tree; observations are correlated", roots_per_tree
        )
    result = LocalCensus(radius)
    for i in range(replicas):
        stream = rng.child(i)
        tree = sampler(net, stream)
        roots = stream.integers(0, net.n, size=roots_per_tree)
        for root in np.atleast_1d(roots).tolist():
            result.add(ball(tree, root, radius, cap))
    if result.truncation_count:
        logger.warning(
            "%d of %d balls were truncated", result.truncation_count, result.samples
        )
    return result


def b_values(net: ElectricNetwork) -> np.ndarray:
    """``b(v) = sum_{u ~ v} c(u, v) / C_u`` for every vertex."""
    strength = net.vertex_strength
    c = net.conductance
    u, v = net.edge_u, net.edge_v
    forward = np.bincount(u, weights=c / strength[v], minlength=net.n)
    backward = np.bincount(v, weights=c / strength[u], minlength=net.n)
    return forward + backward


def b_value(net: ElectricNetwork, v: int) -> float:
    """The weighted neighbour sum ``b(v)``."""
    return float(b_values(net)[v])


def _check_compatible(
    net: ElectricNetwork, vertices: Sequence[int], pattern: RootedTreePattern
) -> None:
    if len(vertices) != pattern.k:
        raise IncompatibleTupleError(
            f"Pattern has {pattern.k} vertices, tuple has {len(vertices)}."
        )
    if len(set(vertices)) != len(vertices):
        raise IncompatibleTupleError("Tuple vertices must be distinct.")
    for p, j in pattern.edges:
        if not net.has_edge(vertices[p], vertices[j]):
            raise IncompatibleTupleError(
                f"Pattern edge ({p}, {j}) maps to non-edge"
                f" ({vertices[p]}, {vertices[j]})."
            )


def f_value(
    net: ElectricNetwork,
    vertices: Sequence[int],
    pattern: RootedTreePattern,
    b: np.ndarray | None = None,
) -> float:
    """Per-tuple weight of the compatible-tuple representation.

    ``F = (1/n) exp(-sum_{j<=t} b(v_j)) (sum_{j>t} C_{v_j}) / prod_j C_{v_j}``,
    evaluated in log space.

    Args:
        net (ElectricNetwork): Network.
        vertices (Sequence[int]): Tuple ``v_1..v_k`` in the pattern's BFS order.
        pattern (RootedTreePattern): The pattern.
        b (np.ndarray, optional): Precomputed :func:`b_values`.

    Raises:
        IncompatibleTupleError: If the tuple repeats a vertex or some pattern
            edge is missing from the network.
    """
    _check_compatible(net, vertices, pattern)
    b = b_values(net) if b is None else b
    strength = net.vertex_strength[list(vertices)]
    tail = math.fsum(strength[pattern.t :].tolist())
    if tail == 0.0:
        return 0.0
    log_f = (
        -math.log(net.n)
        - math.fsum(b[list(vertices[: pattern.t])].tolist())
        + math.log(tail)
        - math.fsum(np.log(strength).tolist())
    )
    return math.exp(log_f)


class TheoremSum(NamedTuple):
    """Value of the compatible-tuple sum with its Monte-Carlo standard error."""

    estimate: float
    stderr: float
    mode: str
    evaluations: int


def _tuple_weights(
    net: ElectricNetwork,
    pattern: RootedTreePattern,
    tuples: np.ndarray,
    b: np.ndarray,
) -> np.ndarray:
    """``F * prod c`` for rows of distinct, pattern-compatible tuples."""
    strength = net.vertex_strength
    log_c = np.zeros(tuples.shape[0])
    for p, j in pattern.edges:
        log_c += np.log(_conductances(net, tuples[:, p], tuples[:, j]))
    tail = strength[tuples[:, pattern.t :]].sum(axis=1)
    with np.errstate(divide="ignore"):
        log_f = (
            -math.log(net.n)
            - b[tuples[:, : pattern.t]].sum(axis=1)
            + np.log(tail)
            - np.log(strength[tuples]).sum(axis=1)
        )
    return np.exp(log_f + log_c)


def _conductances(net: ElectricNetwork, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    matrix = net.adjacency_matrix
    return np.asarray(matrix[a, b]).ravel()


def theorem_sum(
    net: ElectricNetwork,
    pattern: RootedTreePattern,
    gamma: float,
    K: float,  # noqa: N803
    mode: Literal["exhaustive", "monte_carlo"] = "exhaustive",
    rng: RngStream | None = None,
    samples: int = 100_000,
) -> TheoremSum:
    """The compatible-tuple sum ``sum F(T(v)) prod c / |Stab_T|`` over typical tuples.

    Tuples range over injective, pattern-compatible vertex tuples whose
    vertices all have strength in ``[gamma, K gamma]``.

    Args:
        net (ElectricNetwork): Network.
        pattern (RootedTreePattern): The pattern ``T``.
        gamma (float): Strength scale of the typical set.
        K (float): Width of the typical window.
        mode (str): ``"exhaustive"`` (``n <= 30`` or ``k <= 3``) or
            ``"monte_carlo"``, which draws random tuples from the stationary
            root and conductance-proportional steps and reweights them.
        rng (RngStream, optional): Stream for Monte-Carlo mode.
        samples (int): Monte-Carlo tuple count.

    Raises:
        TheoremSumModeError: For exhaustive mode beyond the size guard or a
            Monte-Carlo call without a stream.
    """
    typical = typical_vertices(net, gamma, K)
    b = b_values(net)
    if mode == "exhaustive":
        if net.n > EXHAUSTIVE_MAX_N and pattern.k > EXHAUSTIVE_MAX_K:
            raise TheoremSumModeError(
                f"Exhaustive sums need n <= {EXHAUSTIVE_MAX_N}"
                f" or k <= {EXHAUSTIVE_MAX_K}."
            )
        total, count = _exhaustive_sum(net, pattern, typical, b)
        return TheoremSum(total / pattern.stab, 0.0, mode, count)
    if mode != "monte_carlo":
        raise TheoremSumModeError(f"Unknown mode {mode!r}.")
    if rng is None:
        raise TheoremSumModeError("Monte-Carlo mode needs a random stream.")
    tuples, probability = _draw_t_tuples(net, pattern, rng, samples)
    valid = _distinct_rows(tuples) & typical[tuples].all(axis=1)
    weights = np.zeros(samples)
    if valid.any():
        kept = _tuple_weights(net, pattern, tuples[valid], b)
        weights[valid] = kept / probability[valid]
    weights /= pattern.stab
    stderr = float(weights.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return TheoremSum(float(weights.mean()), stderr, mode, samples)


def _exhaustive_sum(
    net: ElectricNetwork,
    pattern: RootedTreePattern,
    typical: np.ndarray,
    b: np.ndarray,
) -> tuple[float, int]:
    """Sum of ``F * prod c`` over typical compatible tuples, last vertex vectorised."""
    if pattern.k == pattern.t and pattern.radius >= 1:
        return 0.0, 0
    if pattern.k > net.n:
        return 0.0, 0
    neighbors = [
        np.array([w for w in net.neighbors(v).tolist() if typical[w]], dtype=np.int64)
        for v in range(net.n)
    ]
    roots = np.flatnonzero(typical)
    if pattern.k == 1:
        tuples = roots[:, None]
        total = math.fsum(_tuple_weights(net, pattern, tuples, b).tolist())
        return total, int(roots.size)
    parts: list[float] = []
    count = 0

    def extend(prefix: list[int]) -> None:
        nonlocal count
        j = len(prefix)
        candidates = neighbors[prefix[pattern.parent[j]]]
        candidates = candidates[~np.isin(candidates, prefix)]
        if candidates.size == 0:
            return
        if j == pattern.k - 1:
            tuples = np.column_stack(
                [np.full(candidates.size, x) for x in prefix] + [candidates]
            )
            parts.append(math.fsum(_tuple_weights(net, pattern, tuples, b).tolist()))
            count += int(candidates.size)
            return
        for w in candidates.tolist():
            extend([*prefix, w])

    for root in roots.tolist():
        extend([root])
    return math.fsum(parts), count


def _distinct_rows(tuples: np.ndarray) -> np.ndarray:
    ordered = np.sort(tuples, axis=1)
    return np.all(np.diff(ordered, axis=1) != 0, axis=1)


def _draw_t_tuples(
    net: ElectricNetwork, pattern: RootedTreePattern, rng: RngStream, size: int
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``size`` random T-tuples with their exact draw probabilities."""
    strength = net.vertex_strength
    adj = net.adjacency
    total = strength.sum()
    stationary_cum = np.cumsum(strength)
    tuples = np.empty((size, pattern.k), dtype=np.int64)
    targets = rng.random(size) * stationary_cum[-1]
    first = np.searchsorted(stationary_cum, targets, side="right")
    tuples[:, 0] = np.minimum(first, net.n - 1)
    log_prob = np.log(strength[tuples[:, 0]] / total)
    cum = np.cumsum(adj.weights)
    seg_start = adj.indptr[:-1]
    seg_end = adj.indptr[1:]
    for j in range(1, pattern.k):
        at = tuples[:, pattern.parent[j]]
        base = cum[seg_start[at]] - adj.weights[seg_start[at]]
        target = base + rng.random(size) * strength[at]
        slot = np.searchsorted(cum, target, side="right")
        slot = np.clip(slot, seg_start[at], seg_end[at] - 1)
        tuples[:, j] = adj.neighbors[slot]
        log_prob += np.log(adj.weights[slot] / strength[at])
    return tuples, np.exp(log_prob)


def random_t_tuple(
    net: ElectricNetwork, pattern: RootedTreePattern, rng: RngStream
) -> tuple[list[int], float]:
    """Draw one random T-tuple.

    The root is drawn from the stationary measure ``C_v / sum C`` and every later
    vertex is a conductance-proportional neighbour of its pattern parent.
    Repeated vertices are allowed.

    Returns:
        tuple[list[int], float]: The tuple in BFS order and its exact draw
            probability.
    """
    tuples, probability = _draw_t_tuples(net, pattern, rng, 1)
    return tuples[0].tolist(), float(probability[0])


def typical_neighbor_scores(
    solver: ResistanceSolver, gamma: float, K: float  # noqa: N803
) -> np.ndarray:
    """Per-vertex score of the typical-neighbour condition.

    The score of ``v`` adds ``c R_eff`` over incident edges with
    ``R_eff > 4 / gamma`` and ``c / gamma`` over incident edges leading outside
    the typical-strength set.
    """
    net = solver.net
    reff = edge_resistances(solver)
    typical = typical_vertices(net, gamma, K)
    long_edges = np.where(reff > 4.0 / gamma, net.conductance * reff, 0.0)
    to_u = np.where(~typical[net.edge_u], net.conductance / gamma, 0.0)
    to_v = np.where(~typical[net.edge_v], net.conductance / gamma, 0.0)
    score = np.bincount(net.edge_u, weights=long_edges + to_v, minlength=net.n)
    score += np.bincount(net.edge_v, weights=long_edges + to_u, minlength=net.n)
    return score


def typical_neighbors(
    solver: ResistanceSolver, gamma: float, K: float, threshold: float  # noqa: N803
) -> np.ndarray:
    """Mask of vertices whose typical-neighbour score is at most ``threshold``."""
    return typical_neighbor_scores(solver, gamma, K) <= threshold


def is_nice_tuple(
    solver: ResistanceSolver,
    vertices: Sequence[int],
    pattern: RootedTreePattern,
    gamma: float,
    K: float,  # noqa: N803
    threshold: float,
) -> bool:
    """Whether the embedded pattern is nice.

    Nice means every vertex has typical strength and typical neighbours, and
    every pattern edge has ``R_eff <= 4 / gamma``.
    """
    net = solver.net
    _check_compatible(net, vertices, pattern)
    good = typical_vertices(net, gamma, K)
    good &= typical_neighbors(solver, gamma, K, threshold)
    if not all(good[v] for v in vertices):
        return False
    return all(
        solver.resistance(vertices[p], vertices[j]) <= 4.0 / gamma
        for p, j in pattern.edges
    )
