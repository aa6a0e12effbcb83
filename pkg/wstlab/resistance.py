"""Effective resistances, Kirchhoff edge marginals and matrix-tree quantities.

All solves go through the reduced weighted Laplacian with vertex 0 grounded.
Small and medium networks use a dense Cholesky factorization; large ones use
Jacobi-preconditioned conjugate gradients.
"""
import logging
import math
from collections.abc import Iterable
from functools import cached_property
from typing import Literal, NamedTuple

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.cluster.hierarchy import DisjointSet
from scipy.sparse.csgraph import breadth_first_order
from scipy.sparse.linalg import cg, splu

from wstlab.network import ElectricNetwork, NetworkError
from wstlab.walks import RngStream, TransitionTable, hitting_time

logger = logging.getLogger(__name__)

DENSE_LIMIT = 4000
DEFAULT_TOL = 1e-10
DEFAULT_WINDOW = 30.0
DIRECT_RANGE = 600.0
FOSTER_TOL = 1e-8
MAX_COMMUTE_STEPS = 10**8

SolverMode = Literal["auto", "dense", "iterative"]


class ResistanceError(Exception):
    """Base class for errors raised by the resistance engine."""

    pass


class SolverError(ResistanceError):
    """Exception raised when a factorization or solve misses its tolerance."""

    pass


class VertexSetError(ResistanceError, ValueError):
    """Exception raised for invalid vertex arguments, such as ``u`` in ``S``."""

    pass


class ResistanceSolver:
    """Factorized reduced Laplacian of a network.

    Args:
        net (ElectricNetwork): Connected network.
        mode (str): ``"dense"``, ``"iterative"`` or ``"auto"`` (dense up to
            ``DENSE_LIMIT`` vertices).
        tol (float): Bound on ``||L phi - b|| / ||b||`` for every solve.

    Attributes:
        clamp_count (int): Number of Kirchhoff probabilities that fell outside
            ``[0, 1]`` from roundoff and were clamped.
    """

    def __init__(
        self, net: ElectricNetwork, mode: SolverMode = "auto", tol: float = DEFAULT_TOL
    ):
        if mode == "auto":
            mode = "dense" if net.n <= DENSE_LIMIT else "iterative"
        if mode not in ("dense", "iterative"):
            raise SolverError(f"Unknown solver mode {mode!r}.")
        self.net = net
        self.mode = mode
        self.tol = tol
        self.clamp_count = 0
        self._laplacian = net.laplacian()
        self._reduced = self._laplacian[1:, 1:].tocsc()
        self._factor = None
        if mode == "dense" and net.n > 1:
            try:
                self._factor = scipy.linalg.cho_factor(
                    self._reduced.toarray(), lower=True, check_finite=False
                )
            except np.linalg.LinAlgError as err:
                raise SolverError(f"Cholesky factorization failed: {err}") from err
        logger.debug("Prepared %s solver for n=%d, m=%d", mode, net.n, net.m)

    def _solve_reduced(self, rhs: np.ndarray) -> np.ndarray:
        if self._factor is not None:
            return scipy.linalg.cho_solve(self._factor, rhs, check_finite=False)
        diag = self._reduced.diagonal()
        preconditioner = sparse.diags(1.0 / diag)
        solution, info = cg(
            self._reduced, rhs, rtol=self.tol, atol=0.0, M=preconditioner,
            maxiter=10 * self.net.n,
        )
        if info != 0:
            raise SolverError(f"Conjugate gradients did not converge (info={info}).")
        return solution

    def solve(self, demand: np.ndarray) -> np.ndarray:
        """Potentials ``phi`` with ``L phi = demand`` and ``phi[0] = 0``.

        Raises:
            ResistanceError: If the demand does not sum to zero.
            SolverError: If the residual exceeds ``tol * ||demand||``.
        """
        demand = np.asarray(demand, dtype=np.float64)
        scale = np.linalg.norm(demand)
        if abs(demand.sum()) > 1e-12 * max(scale, 1.0) * math.sqrt(self.net.n):
            raise ResistanceError("Demand vector must sum to zero.")
        phi = np.zeros(self.net.n)
        if self.net.n == 1 or scale == 0:
            return phi
        phi[1:] = self._solve_reduced(demand[1:])
        residual = np.linalg.norm(self._laplacian @ phi - demand)
        if residual > self.tol * scale:
            # one step of iterative refinement
            phi[1:] += self._solve_reduced((demand - self._laplacian @ phi)[1:])
            residual = np.linalg.norm(self._laplacian @ phi - demand)
        if residual > self.tol * scale:
            raise SolverError(
                f"Relative residual {residual / scale:.3e} exceeds {self.tol:.1e}."
            )
        return phi

    @cached_property
    def grounded_inverse(self) -> np.ndarray:
        """Inverse of the reduced Laplacian, zero-padded at vertex 0."""
        if self.mode != "dense":
            raise SolverError("The grounded inverse is only formed in dense mode.")
        inverse = np.zeros((self.net.n, self.net.n))
        if self.net.n > 1:
            inverse[1:, 1:] = scipy.linalg.cho_solve(
                self._factor, np.eye(self.net.n - 1), check_finite=False
            )
        return inverse

    def resistance(self, u: int, v: int) -> float:
        """Effective resistance between two vertices."""
        if u == v:
            return 0.0
        if "grounded_inverse" in self.__dict__:
            g = self.grounded_inverse
            return max(float(g[u, u] + g[v, v] - 2.0 * g[u, v]), 0.0)
        demand = np.zeros(self.net.n)
        demand[u], demand[v] = 1.0, -1.0
        phi = self.solve(demand)
        return max(float(phi[u] - phi[v]), 0.0)

    def clamp(self, value: float, label: str) -> float:
        """Clamp a probability to ``[0, 1]``, counting and logging every clamp."""
        if 0.0 <= value <= 1.0:
            return value
        self.clamp_count += 1
        logger.warning("Clamped %s = %.17g to [0, 1]", label, value)
        return min(max(value, 0.0), 1.0)


def potentials(solver: ResistanceSolver, demand: np.ndarray) -> np.ndarray:
    """Grounded potentials for a zero-sum demand vector."""
    return solver.solve(demand)


def _check_vertex(net: ElectricNetwork, v: int) -> None:
    if not 0 <= v < net.n:
        raise VertexSetError(f"Vertex {v} outside 0..{net.n - 1}.")


def effective_resistance(solver: ResistanceSolver, u: int, v: int) -> float:
    """Effective resistance ``R_eff(u <-> v)``.

    Computed as ``phi(u) - phi(v)`` for a unit current entering at ``u`` and
    leaving at ``v``.

    Args:
        solver (ResistanceSolver): Factorized network.
        u (int): First vertex.
        v (int): Second vertex.

    Returns:
        float: The effective resistance, zero iff ``u == v``.
    """
    _check_vertex(solver.net, u)
    _check_vertex(solver.net, v)
    return solver.resistance(u, v)


def contract_vertex_set(
    net: ElectricNetwork, vertices: Iterable[int]
) -> tuple[ElectricNetwork, np.ndarray]:
    """Merge a vertex set into one supernode.

    Edges inside the set disappear and parallel edges created by the merge are
    replaced by one edge carrying their summed conductance.

    Returns:
        tuple[ElectricNetwork, np.ndarray]: The contracted network and the new
            label of every old vertex. The supernode gets the smallest label of
            its members' positions.
    """
    members = np.zeros(net.n, dtype=bool)
    members[list(vertices)] = True
    first = int(np.argmax(members))
    keys = np.arange(net.n)
    keys[members] = first
    _, labels = np.unique(keys, return_inverse=True)
    reduced, _ = quotient_network(net, labels)
    return reduced, labels


def quotient_network(
    net: ElectricNetwork,
    labels: np.ndarray,
    keep: np.ndarray | None = None,
    conductance: np.ndarray | None = None,
) -> tuple[ElectricNetwork, np.ndarray]:
    """Identify vertices with equal labels and drop or merge the affected edges.

    Args:
        net (ElectricNetwork): Network to reduce.
        labels (np.ndarray): New vertex id for every vertex, covering
            ``0..k-1``.
        keep (np.ndarray, optional): Mask of edges to keep; others are deleted.
        conductance (np.ndarray, optional): Conductances to use in place of the
            network's own.

    Returns:
        tuple[ElectricNetwork, np.ndarray]: The reduced network and, for every
            original edge, the index of the reduced edge it became (``-1`` for
            deleted edges and edges turned into loops).

    Raises:
        DisconnectedNetworkError: If the deletions disconnect the network.
    """
    labels = np.asarray(labels, dtype=np.int64)
    k = int(labels.max()) + 1
    c = net.conductance if conductance is None else np.asarray(conductance)
    lu, lv = labels[net.edge_u], labels[net.edge_v]
    valid = lu != lv
    if keep is not None:
        valid &= np.asarray(keep, dtype=bool)
    a = np.minimum(lu, lv)[valid]
    b = np.maximum(lu, lv)[valid]
    unique_keys, inverse = np.unique(a * k + b, return_inverse=True)
    merged = np.bincount(inverse, weights=c[valid], minlength=unique_keys.size)
    edge_map = np.full(net.m, -1, dtype=np.int64)
    edge_map[valid] = inverse
    reduced = ElectricNetwork(k, unique_keys // k, unique_keys % k, merged)
    return reduced, edge_map


def effective_resistance_to_set(
    solver: ResistanceSolver, u: int, vertex_set: Iterable[int]
) -> float:
    """Effective resistance between ``u`` and a vertex set.

    The set is contracted to a supernode and a fresh solver of the same mode
    is built on the contracted network.

    Raises:
        VertexSetError: If the set is empty or contains ``u``.
    """
    members = sorted(set(vertex_set))
    if not members:
        raise VertexSetError("The target set is empty.")
    if u in members:
        raise VertexSetError(f"Vertex {u} belongs to the target set.")
    for v in [u, *members]:
        _check_vertex(solver.net, v)
    if len(members) == 1:
        return solver.resistance(u, members[0])
    reduced, labels = contract_vertex_set(solver.net, members)
    sub = ResistanceSolver(reduced, mode=solver.mode, tol=solver.tol)
    return sub.resistance(int(labels[u]), int(labels[members[0]]))


def _edge_id(net: ElectricNetwork, edge: int | tuple[int, int]) -> int:
    if isinstance(edge, tuple):
        return net.edge_index(*edge)
    if not 0 <= edge < net.m:
        raise VertexSetError(f"Edge index {edge} outside 0..{net.m - 1}.")
    return int(edge)


def edge_resistances(solver: ResistanceSolver) -> np.ndarray:
    """Effective resistance across every edge, in edge index order."""
    net = solver.net
    if solver.mode == "dense":
        g = solver.grounded_inverse
        u, v = net.edge_u, net.edge_v
        return np.maximum(g[u, u] + g[v, v] - 2.0 * g[u, v], 0.0)
    return np.array([solver.resistance(u, v) for u, v in net.edges])


def kirchhoff_edge_probability(
    solver: ResistanceSolver, edge: int | tuple[int, int]
) -> float:
    """Probability that an edge belongs to the weighted spanning tree.

    Kirchhoff's formula gives ``P(e in T) = c(e) R_eff(e)``.

    Args:
        solver (ResistanceSolver): Factorized network.
        edge (int | tuple[int, int]): Edge index or endpoint pair.

    Returns:
        float: The probability, clamped to ``[0, 1]``.

    Raises:
        NotAnEdgeError: If an endpoint pair is not an edge.
    """
    net = solver.net
    index = _edge_id(net, edge)
    u, v = int(net.edge_u[index]), int(net.edge_v[index])
    value = float(net.conductance[index]) * solver.resistance(u, v)
    return solver.clamp(value, f"P(edge {index})")


def kirchhoff_probabilities(solver: ResistanceSolver) -> np.ndarray:
    """Kirchhoff probability of every edge, clamped to ``[0, 1]``."""
    raw = solver.net.conductance * edge_resistances(solver)
    outside = (raw < 0.0) | (raw > 1.0)
    if outside.any():
        solver.clamp_count += int(outside.sum())
        logger.warning(
            "Clamped %d edge probabilities (worst %.3e outside [0, 1])",
            int(outside.sum()),
            float(np.max(np.maximum(raw - 1.0, -raw))),
        )
    return np.clip(raw, 0.0, 1.0)


def foster_sum(solver: ResistanceSolver) -> float:
    """``sum_e c(e) R_eff(e)``, which equals ``n - 1`` for a connected network."""
    net = solver.net
    return math.fsum((net.conductance * edge_resistances(solver)).tolist())


def overlap_exact(solver: ResistanceSolver) -> float:
    """Expected number of common edges of two independent weighted spanning trees."""
    return math.fsum((kirchhoff_probabilities(solver) ** 2).tolist())


def commute_time(solver: ResistanceSolver, a: int, x: int) -> float:
    """Expected commute time ``E_a[tau_x] + E_x[tau_a]``.

    Equal to ``2 (sum_e c(e)) R_eff(a <-> x)``.

    Raises:
        VertexSetError: If ``a == x``.
    """
    if a == x:
        raise VertexSetError("Commute time needs two distinct vertices.")
    return 2.0 * solver.net.total_conductance * effective_resistance(solver, a, x)


def random_walk_commute_time(
    net: ElectricNetwork,
    a: int,
    x: int,
    rng: RngStream,
    walks: int = 1000,
    max_steps: int = MAX_COMMUTE_STEPS,
) -> tuple[float, float]:
    """Simulated commute time between ``a`` and ``x``.

    Returns:
        tuple[float, float]: Mean over ``walks`` round trips and its standard
            error.
    """
    if a == x:
        raise VertexSetError("Commute time needs two distinct vertices.")
    table = TransitionTable(net)
    draws = rng.uniforms()
    times = np.array(
        [
            hitting_time(table, a, x, draws, max_steps)
            + hitting_time(table, x, a, draws, max_steps)
            for _ in range(walks)
        ],
        dtype=np.float64,
    )
    stderr = float(times.std(ddof=1) / math.sqrt(walks)) if walks > 1 else 0.0
    return float(times.mean()), stderr


def partition_function_log(net: ElectricNetwork) -> float:
    """Log of ``Z(c) = sum_T prod_{e in T} c(e)`` by the matrix-tree theorem.

    Raises:
        SolverError: If the reduced Laplacian cannot be factorized.
    """
    if net.n == 1:
        return 0.0
    reduced = net.laplacian()[1:, 1:]
    if net.n <= DENSE_LIMIT:
        try:
            factor, _ = scipy.linalg.cho_factor(reduced.toarray(), lower=True)
        except np.linalg.LinAlgError as err:
            raise SolverError(f"Cholesky factorization failed: {err}") from err
        return 2.0 * math.fsum(np.log(np.diag(factor)).tolist())
    try:
        lu = splu(reduced.tocsc())
    except RuntimeError as err:
        raise SolverError(f"Sparse LU failed: {err}") from err
    return math.fsum(np.log(np.abs(lu.U.diagonal())).tolist())


class EdgeResistanceBounds(NamedTuple):
    """Lower bounds on ``R_eff`` across an edge."""

    degree: float
    split_edge: float


def edge_resistance_bounds(
    net: ElectricNetwork, edge: int | tuple[int, int]
) -> EdgeResistanceBounds:
    """Nash-Williams lower bounds on the resistance across an edge.

    The degree bound is ``1/(2 C_u) + 1/(2 C_v)``. The split-edge bound
    subdivides the edge by a middle vertex carrying two edges of conductance
    ``2c`` and applies the inequality to the two stars around ``u`` and ``v``,
    giving ``1/(C_u + c) + 1/(C_v + c)``.
    """
    index = _edge_id(net, edge)
    u, v = int(net.edge_u[index]), int(net.edge_v[index])
    c = float(net.conductance[index])
    strength_u, strength_v = net.vertex_strength[u], net.vertex_strength[v]
    return EdgeResistanceBounds(
        degree=float(1.0 / (2.0 * strength_u) + 1.0 / (2.0 * strength_v)),
        split_edge=float(1.0 / (strength_u + c) + 1.0 / (strength_v + c)),
    )


def nash_williams_bound(net: ElectricNetwork, u: int, v: int) -> float:
    """Best of the two edge resistance lower bounds for edge ``(u, v)``.

    Raises:
        NotAnEdgeError: If ``(u, v)`` is not an edge.
    """
    return max(edge_resistance_bounds(net, net.edge_index(u, v)))


def resistance_to_set_gap(
    solver: ResistanceSolver,
    k: int,
    vertex_set: Iterable[int],
    strength: np.ndarray | None = None,
) -> float:
    """Distance of ``R_eff(k <-> S)`` from ``1/s_k + 1/sum_{j in S} s_j``.

    Args:
        solver (ResistanceSolver): Factorized network.
        k (int): Source vertex.
        vertex_set (Iterable[int]): Target set.
        strength (np.ndarray, optional): The ``s`` values; vertex strengths by
            default.
    """
    members = sorted(set(vertex_set))
    s = solver.net.vertex_strength if strength is None else np.asarray(strength)
    approx = 1.0 / s[k] + 1.0 / float(np.sum(s[members]))
    return abs(effective_resistance_to_set(solver, k, members) - approx)


def effective_conductance(weights: np.ndarray, s: int, t: int) -> float:
    """Effective conductance between ``s`` and ``t`` by subtraction-free elimination.

    Every other vertex ``x`` is removed by the star-mesh transform
    ``W += W[:, x] W[x, :] / C_x`` where ``C_x`` is the sum of the current
    row. Only additions of positive terms occur, so the result keeps full
    relative accuracy across conductances of wildly different magnitudes.

    Args:
        weights (np.ndarray): Symmetric nonnegative conductance matrix.
        s (int): First terminal.
        t (int): Second terminal.

    Returns:
        float: The effective conductance; zero if ``t`` is unreachable.
    """
    w = np.array(weights, dtype=np.float64)
    np.fill_diagonal(w, 0.0)
    size = w.shape[0]
    for x in range(size):
        if x in (s, t):
            continue
        row = w[x].copy()
        total = row.sum()
        w[x, :] = 0.0
        w[:, x] = 0.0
        if total > 0.0:
            row[x] = 0.0
            w += np.outer(row, row) / total
            np.fill_diagonal(w, 0.0)
    return float(w[s, t])


class BandedReduction:
    """Contract-strong, delete-weak reduction of a network around single edges.

    For conductances whose log range far exceeds what float64 can hold, the
    Kirchhoff probability of an edge ``e`` only depends, up to a relative error
    of order ``m exp(-window)``, on the network in which edges stronger than
    ``e`` by more than ``exp(window)`` are contracted and edges weaker by more
    than ``exp(window)`` are deleted. Inside the band, conductances are
    rescaled by ``c(e)`` so they stay within ``exp(+-window)``.

    The caller decides which edges are contracted (:meth:`contract`) and which
    edges form the band of a query (:meth:`probability`).
    """

    def __init__(
        self,
        net: ElectricNetwork,
        log_conductance: np.ndarray,
        window: float = DEFAULT_WINDOW,
    ):
        self.net = net
        self.log_conductance = np.asarray(log_conductance, dtype=np.float64)
        self.window = window
        self.order = np.argsort(-self.log_conductance, kind="stable")
        self.sorted_log = self.log_conductance[self.order]
        self._roots = DisjointSet(range(net.n))
        self._labels = np.arange(net.n)
        self._stale = False

    def contract(self, index: int) -> bool:
        """Contract edge ``index``; returns whether it joined two classes."""
        u, v = int(self.net.edge_u[index]), int(self.net.edge_v[index])
        joined = self._roots.merge(u, v)
        self._stale = self._stale or joined
        return joined

    def connected(self, u: int, v: int) -> bool:
        """Whether two vertices are already in the same contracted class."""
        return self._roots.connected(u, v)

    @property
    def labels(self) -> np.ndarray:
        """Contracted class of every vertex."""
        if self._stale:
            n = self.net.n
            self._labels = np.fromiter(
                (self._roots[v] for v in range(n)), dtype=np.int64, count=n
            )
            self._stale = False
        return self._labels

    def band_end(self, position: int) -> int:
        """First sorted position weaker than ``order[position]`` beyond the window."""
        cutoff = self.window - self.sorted_log[position]
        return int(np.searchsorted(-self.sorted_log, cutoff, side="right"))

    def probability(self, index: int, candidates: np.ndarray) -> float:
        """Probability of edge ``index`` in the contracted ``candidates`` network."""
        net = self.net
        labels = self.labels
        a = int(labels[net.edge_u[index]])
        b = int(labels[net.edge_v[index]])
        if a == b:
            return 0.0
        others = candidates[candidates != index]
        su = labels[net.edge_u[others]]
        sv = labels[net.edge_v[others]]
        keep = su != sv
        if not keep.any():
            return 1.0
        su, sv = su[keep], sv[keep]
        logc = self.log_conductance
        weights = np.exp(logc[others[keep]] - logc[index])
        ends = np.concatenate([[a, b], su, sv])
        nodes, inverse = np.unique(ends, return_inverse=True)
        size, count = nodes.size, su.size
        iu, iv = inverse[2 : 2 + count], inverse[2 + count :]
        graph = sparse.coo_matrix(
            (
                np.concatenate([weights, weights]),
                (np.concatenate([iu, iv]), np.concatenate([iv, iu])),
            ),
            shape=(size, size),
        ).tocsr()
        reach = breadth_first_order(
            graph, inverse[0], directed=False, return_predecessors=False
        )
        if not np.any(reach == inverse[1]):
            return 1.0
        local = np.sort(reach)
        sub = graph[local][:, local].toarray()
        conductance = effective_conductance(
            sub,
            int(np.searchsorted(local, inverse[0])),
            int(np.searchsorted(local, inverse[1])),
        )
        return 1.0 / (1.0 + conductance)


def log_domain_edge_probabilities(
    net: ElectricNetwork,
    log_conductance: np.ndarray | None = None,
    window: float = DEFAULT_WINDOW,
    direct_range: float = DIRECT_RANGE,
    mode: SolverMode = "auto",
) -> np.ndarray:
    """Kirchhoff probabilities for conductances given in log form.

    When the log range is at most ``direct_range`` the conductances are shifted
    to a maximum of one and solved directly; the result is accepted only if
    the probabilities pass the Foster identity. Otherwise every edge goes
    through a :class:`BandedReduction`, sweeping edges in decreasing conductance
    order so the contracted classes only ever grow.

    Args:
        net (ElectricNetwork): Graph structure; its own conductances are used
            when ``log_conductance`` is omitted.
        log_conductance (np.ndarray, optional): Per-edge log conductances.
        window (float): Log-width of the band kept around every edge.
        direct_range (float): Largest log range tried with a direct solve.
        mode (str): Solver mode for the direct path.

    Returns:
        np.ndarray: Per-edge probabilities in edge index order.
    """
    logc = net.log_conductance if log_conductance is None else np.asarray(
        log_conductance, dtype=np.float64
    )
    if net.m == 0:
        return np.zeros(0)
    top = float(logc.max())
    spread = top - float(logc.min())
    if spread <= direct_range:
        try:
            shifted = net.with_conductance(np.exp(logc - top))
            probs = kirchhoff_probabilities(ResistanceSolver(shifted, mode=mode))
        except (SolverError, NetworkError) as err:
            logger.info("Direct Kirchhoff solve failed (%s); using banded sweep", err)
        else:
            gap = abs(math.fsum(probs.tolist()) - (net.n - 1))
            if gap <= FOSTER_TOL * max(net.n - 1, 1):
                return probs
            logger.info(
                "Direct Kirchhoff solve failed the Foster check at log range %.1f",
                spread,
            )
    logger.debug("Banded Kirchhoff sweep over %d edges (window %.1f)", net.m, window)
    reduction = BandedReduction(net, logc, window)
    probs = np.empty(net.m)
    strong = 0
    for position, index in enumerate(reduction.order.tolist()):
        level = reduction.sorted_log[position]
        while reduction.sorted_log[strong] > level + window:
            reduction.contract(int(reduction.order[strong]))
            strong += 1
        band = reduction.order[strong : reduction.band_end(position)]
        probs[index] = reduction.probability(index, band)
    return probs
