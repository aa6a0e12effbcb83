"""Electric networks: the data model, graph generators and balance checkers.

An electric network is a simple connected graph whose edges carry strictly
positive conductances. Edges are stored with ``u < v`` under a stable index and
every per-edge array in the package is indexed in that order.
"""
import logging
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import networkx as nx
import numpy as np
import polars as pl
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from wstlab.output import header_line
from wstlab.schemas import EDGE_SCHEMA, validate_edge_schema

logger = logging.getLogger(__name__)


class NetworkError(Exception):
    """Base class for errors raised while building or querying a network."""

    pass


class MalformedNetworkError(NetworkError):
    """Exception raised when the edge list does not describe a simple network."""

    pass


class SelfLoopError(MalformedNetworkError):
    """Exception raised when an edge joins a vertex to itself."""

    pass


class DuplicateEdgeError(MalformedNetworkError):
    """Exception raised when the same unordered pair appears twice."""

    pass


class NonpositiveConductanceError(MalformedNetworkError):
    """Exception raised when a conductance is not a finite positive real."""

    pass


class VertexOutOfRangeError(MalformedNetworkError):
    """Exception raised when an endpoint is outside ``0..n-1``."""

    pass


class DisconnectedNetworkError(NetworkError):
    """Exception raised when a well-formed edge list is not connected."""

    pass


class NotAnEdgeError(NetworkError, KeyError):
    """Exception raised when a vertex pair is not an edge of the network."""

    pass


class GeneratorParameterError(NetworkError, ValueError):
    """Exception raised when a graph generator gets parameters out of range."""

    pass


class BalanceParameterError(NetworkError, ValueError):
    """Exception raised when balance parameters are outside their domain."""

    pass


class Adjacency(NamedTuple):
    """CSR view of a network.

    Neighbours of ``v`` are ``neighbors[indptr[v]:indptr[v+1]]``.
    """

    indptr: np.ndarray
    neighbors: np.ndarray
    edge_ids: np.ndarray
    weights: np.ndarray


def _readonly(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@dataclass(frozen=True, eq=False)
class ElectricNetwork:
    """Simple connected graph with strictly positive edge conductances.

    Instances are immutable and validated on construction; use
    :func:`build_network` to build one from a list of ``(u, v, c)`` triples.

    Attributes:
        n (int): Number of vertices.
        edge_u (np.ndarray): Smaller endpoint of every edge.
        edge_v (np.ndarray): Larger endpoint of every edge.
        conductance (np.ndarray): Conductance of every edge.
        vertex_strength (np.ndarray): ``C_v``, the sum of incident conductances.
    """

    n: int
    edge_u: np.ndarray
    edge_v: np.ndarray
    conductance: np.ndarray
    vertex_strength: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        edge_u = np.asarray(self.edge_u, dtype=np.int64)
        edge_v = np.asarray(self.edge_v, dtype=np.int64)
        conductance = np.asarray(self.conductance, dtype=np.float64)
        _validate_edges(self.n, edge_u, edge_v, conductance)
        strength = np.bincount(edge_u, weights=conductance, minlength=self.n)
        strength += np.bincount(edge_v, weights=conductance, minlength=self.n)
        object.__setattr__(self, "edge_u", _readonly(edge_u))
        object.__setattr__(self, "edge_v", _readonly(edge_v))
        object.__setattr__(self, "conductance", _readonly(conductance))
        object.__setattr__(self, "vertex_strength", _readonly(strength))
        n_components, _ = connected_components(
            self.adjacency_matrix, directed=False, return_labels=True
        )
        if n_components != 1:
            raise DisconnectedNetworkError(
                f"Network on {self.n} vertices has {n_components} components."
            )

    @property
    def m(self) -> int:
        """Number of edges."""
        return int(self.edge_u.size)

    @property
    def edges(self) -> list[tuple[int, int]]:
        """Edge endpoints in stable index order."""
        return list(zip(self.edge_u.tolist(), self.edge_v.tolist()))

    @property
    def total_conductance(self) -> float:
        """Sum of all edge conductances."""
        return float(np.sum(self.conductance))

    @cached_property
    def log_conductance(self) -> np.ndarray:
        """Natural log of every conductance."""
        return _readonly(np.log(self.conductance))

    @cached_property
    def adjacency_matrix(self) -> sparse.csr_matrix:
        """Symmetric sparse matrix of conductances."""
        rows = np.concatenate([self.edge_u, self.edge_v])
        cols = np.concatenate([self.edge_v, self.edge_u])
        data = np.concatenate([self.conductance, self.conductance])
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    @cached_property
    def adjacency(self) -> Adjacency:
        """CSR adjacency with the edge index of every half-edge."""
        heads = np.concatenate([self.edge_u, self.edge_v])
        tails = np.concatenate([self.edge_v, self.edge_u])
        ids = np.concatenate([np.arange(self.m), np.arange(self.m)])
        order = np.lexsort((tails, heads))
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(np.bincount(heads, minlength=self.n), out=indptr[1:])
        return Adjacency(
            indptr=_readonly(indptr),
            neighbors=_readonly(tails[order]),
            edge_ids=_readonly(ids[order]),
            weights=_readonly(self.conductance[ids[order]]),
        )

    @cached_property
    def _edge_lookup(self) -> dict[tuple[int, int], int]:
        return {pair: index for index, pair in enumerate(self.edges)}

    def edge_index(self, u: int, v: int) -> int:
        """Return the stable index of edge ``{u, v}``.

        Raises:
            NotAnEdgeError: If ``u`` and ``v`` are not adjacent.
        """
        key = (min(u, v), max(u, v))
        try:
            return self._edge_lookup[key]
        except KeyError:
            raise NotAnEdgeError(f"({u}, {v}) is not an edge") from None

    def has_edge(self, u: int, v: int) -> bool:
        """Whether ``u`` and ``v`` are adjacent."""
        return (min(u, v), max(u, v)) in self._edge_lookup

    def neighbors(self, v: int) -> np.ndarray:
        """Neighbours of ``v`` in increasing order."""
        adj = self.adjacency
        return adj.neighbors[adj.indptr[v] : adj.indptr[v + 1]]

    def degree(self) -> np.ndarray:
        """Number of neighbours of every vertex."""
        return np.diff(self.adjacency.indptr)

    def laplacian(self) -> sparse.csr_matrix:
        """Weighted graph Laplacian ``diag(C) - A``."""
        return (sparse.diags(self.vertex_strength) - self.adjacency_matrix).tocsr()

    def with_conductance(self, conductance: np.ndarray) -> "ElectricNetwork":
        """Same graph with a new conductance vector."""
        return ElectricNetwork(self.n, self.edge_u, self.edge_v, conductance)


def _validate_edges(
    n: int, edge_u: np.ndarray, edge_v: np.ndarray, conductance: np.ndarray
) -> None:
    if n < 1:
        raise MalformedNetworkError(f"Vertex count must be positive, got {n}.")
    if not (edge_u.shape == edge_v.shape == conductance.shape):
        raise MalformedNetworkError("Edge arrays must have equal length.")
    if edge_u.size and (edge_u.min() < 0 or edge_v.max() >= n):
        raise VertexOutOfRangeError(f"Endpoints must lie in 0..{n - 1}.")
    loops = np.flatnonzero(edge_u == edge_v)
    if loops.size:
        raise SelfLoopError(f"Self-loop at vertex {int(edge_u[loops[0]])}.")
    if np.any(edge_u > edge_v):
        raise MalformedNetworkError("Edges must be stored with u < v.")
    bad = np.flatnonzero(~np.isfinite(conductance) | (conductance <= 0))
    if bad.size:
        raise NonpositiveConductanceError(
            f"Edge {int(bad[0])} has conductance {conductance[bad[0]]!r}."
        )
    keys = edge_u * n + edge_v
    unique, counts = np.unique(keys, return_counts=True)
    if np.any(counts > 1):
        key = int(unique[np.argmax(counts > 1)])
        raise DuplicateEdgeError(f"Edge ({key // n}, {key % n}) appears twice.")


def build_network(
    n: int, weighted_edges: Iterable[tuple[int, int, float]]
) -> ElectricNetwork:
    """Build a validated electric network.

    Args:
        n (int): Vertex count.
        weighted_edges (Iterable[tuple[int, int, float]]): ``(u, v, c)`` triples.
            Endpoints may come in either order; the stable edge index is the
            position in this sequence.

    Returns:
        ElectricNetwork: The validated network with cached strengths.

    Raises:
        MalformedNetworkError: For self-loops, duplicate pairs, out of range
            endpoints or nonpositive conductances.
        DisconnectedNetworkError: If the edges do not connect all vertices.
    """
    triples = list(weighted_edges)
    if not triples:
        edge_u = edge_v = np.zeros(0, dtype=np.int64)
        conductance = np.zeros(0)
    else:
        raw = np.array([(a, b) for a, b, _ in triples], dtype=np.int64)
        edge_u = raw.min(axis=1)
        edge_v = raw.max(axis=1)
        conductance = np.array([c for _, _, c in triples], dtype=np.float64)
    return ElectricNetwork(n, edge_u, edge_v, conductance)


def stationary_distribution(net: ElectricNetwork) -> np.ndarray:
    """Invariant measure of the network random walk, ``C_v / sum C``."""
    return net.vertex_strength / net.vertex_strength.sum()


def network_from_frame(
    frame: pl.DataFrame | pl.LazyFrame, n: int | None = None
) -> ElectricNetwork:
    """Build a network from a polars frame with columns ``u``, ``v`` and ``c``.

    Args:
        frame (pl.DataFrame | pl.LazyFrame): Edge frame.
        n (int, optional): Vertex count. Defaults to one more than the largest
            endpoint.

    Returns:
        ElectricNetwork: The validated network.
    """
    validate_edge_schema(frame)
    if isinstance(frame, pl.LazyFrame):
        frame = frame.collect()
    edge_u = frame["u"].to_numpy().astype(np.int64)
    edge_v = frame["v"].to_numpy().astype(np.int64)
    if n is None:
        n = int(max(edge_u.max(), edge_v.max())) + 1
    return build_network(
        n, zip(edge_u.tolist(), edge_v.tolist(), frame["c"].to_list())
    )


def network_to_frame(net: ElectricNetwork) -> pl.DataFrame:
    """Edge frame of a network in stable index order."""
    return pl.DataFrame(
        {"u": net.edge_u, "v": net.edge_v, "c": net.conductance}, schema=EDGE_SCHEMA
    )


def read_network(path: str | Path) -> ElectricNetwork:
    """Read the plain-text network format.

    Leading ``#`` lines are skipped. The next line holds ``n m``; each of the
    following ``m`` lines holds ``u v c`` with 0-based endpoints.

    Raises:
        MalformedNetworkError: If the header disagrees with the edge count.
    """
    path = Path(path)
    comments = 0
    with path.open() as fh:
        line = fh.readline()
        while line.startswith("#"):
            comments += 1
            line = fh.readline()
    header = line.split()
    if len(header) != 2:
        raise MalformedNetworkError(f"{path}: first line must be 'n m'.")
    n, m = int(header[0]), int(header[1])
    if m == 0:
        return build_network(n, [])
    frame = pl.read_csv(
        path,
        separator=" ",
        has_header=False,
        skip_rows=comments + 1,
        schema=EDGE_SCHEMA,
    )
    if frame.height != m:
        raise MalformedNetworkError(
            f"{path}: header announces {m} edges, found {frame.height}."
        )
    return network_from_frame(frame, n)


def format_network(
    net: ElectricNetwork, header: Mapping[str, object] | None = None
) -> str:
    """The plain-text network format with round-trip exact floats.

    A ``header`` is written as one provenance comment line on top.
    """
    lines = [header_line(header).rstrip("\n")] if header else []
    lines.append(f"{net.n} {net.m}")
    lines += [
        f"{u} {v} {c!r}"
        for u, v, c in zip(
            net.edge_u.tolist(), net.edge_v.tolist(), net.conductance.tolist()
        )
    ]
    return "\n".join(lines) + "\n"


def write_network(
    net: ElectricNetwork,
    path: str | Path,
    header: Mapping[str, object] | None = None,
) -> None:
    """Write a network in the plain-text format."""
    Path(path).write_text(format_network(net, header))


def from_networkx(graph: nx.Graph, weight: str | None = "weight") -> ElectricNetwork:
    """Convert a networkx graph, relabelling nodes to ``0..n-1`` in node order.

    Args:
        graph (nx.Graph): Simple undirected graph.
        weight (str, optional): Edge attribute holding the conductance. Missing
            attributes, or ``weight=None``, mean unit conductance.
    """
    index = {node: i for i, node in enumerate(graph.nodes())}
    triples = [
        (index[a], index[b], 1.0 if weight is None else float(data.get(weight, 1.0)))
        for a, b, data in graph.edges(data=True)
    ]
    return build_network(len(index), triples)


def to_networkx(net: ElectricNetwork) -> nx.Graph:
    """Networkx copy of a network with the conductance under ``weight``."""
    graph = nx.Graph()
    graph.add_nodes_from(range(net.n))
    for index, (a, b) in enumerate(net.edges):
        graph.add_edge(a, b, weight=float(net.conductance[index]), index=index)
    return graph


def gen_complete(n: int, conductance: float = 1.0) -> ElectricNetwork:
    """Complete graph ``K_n`` with uniform conductance.

    Raises:
        GeneratorParameterError: If ``n < 2`` or the conductance is not positive.
    """
    if n < 2:
        raise GeneratorParameterError(f"K_n needs n >= 2, got {n}.")
    if not conductance > 0:
        raise GeneratorParameterError("Conductance must be positive.")
    edge_u, edge_v = np.triu_indices(n, k=1)
    return ElectricNetwork(n, edge_u, edge_v, np.full(edge_u.size, float(conductance)))


def gen_random_regular(n: int, d: int, seed: int | None = None) -> ElectricNetwork:
    """Uniform random ``d``-regular graph with unit conductances.

    Raises:
        GeneratorParameterError: If ``n * d`` is odd or ``d >= n``.
    """
    if d >= n or (n * d) % 2:
        raise GeneratorParameterError(f"No {d}-regular graph on {n} vertices.")
    graph = nx.random_regular_graph(d, n, seed=seed)
    if not nx.is_connected(graph):
        raise DisconnectedNetworkError("Sampled regular graph is disconnected.")
    return from_networkx(graph, weight=None)


def gen_regular_plus_pendants(
    base: ElectricNetwork, m: int, f: int, seed: int | None = None
) -> ElectricNetwork:
    """Add ``m`` vertices, each joined by ``f`` unit edges to distinct old vertices.

    This is the counterexample family where a few low-degree vertices sit on top
    of a high-degree base graph.

    Args:
        base (ElectricNetwork): Base network.
        m (int): Number of extra vertices.
        f (int): Edges per extra vertex, attached to endpoints sampled without
            replacement.
        seed (int, optional): Seed for the endpoint choice.

    Raises:
        GeneratorParameterError: If ``f == 0`` or ``f > n``.
    """
    if f < 1:
        raise GeneratorParameterError("f = 0 would leave the new vertices isolated.")
    if f > base.n:
        raise GeneratorParameterError(f"f={f} exceeds the {base.n} base vertices.")
    rng = np.random.default_rng(seed)
    triples = list(zip(base.edge_u.tolist(), base.edge_v.tolist(), base.conductance))
    for extra in range(base.n, base.n + m):
        for old in np.sort(rng.choice(base.n, size=f, replace=False)).tolist():
            triples.append((old, extra, 1.0))
    return build_network(base.n + m, triples)


def gen_glued_triangle_chain(n: int) -> ElectricNetwork:
    """``n`` unit triangles glued in a line.

    Vertices ``a_0..a_n`` are numbered ``0..n`` and ``b_1..b_n`` are numbered
    ``n+1..2n``; triangle ``i`` is ``{a_{i-1}, a_i, b_i}``.

    Raises:
        GeneratorParameterError: If ``n < 1``.
    """
    if n < 1:
        raise GeneratorParameterError("Need at least one triangle.")
    triples = []
    for i in range(1, n + 1):
        b = n + i
        triples += [(i - 1, i, 1.0), (i - 1, b, 1.0), (i, b, 1.0)]
    return build_network(2 * n + 1, triples)


def gen_expander_chain_with_leaves(
    d: int, copies: int, leaves: int = 0
) -> ElectricNetwork:
    """Chain of ``copies`` cliques ``K_{d+1}`` joined by bridges, plus pendant leaves.

    Clique ``j`` occupies vertices ``j(d+1)..(j+1)(d+1)-1``; its last vertex is
    bridged to the first vertex of clique ``j+1``. Leaves are attached
    round-robin to the clique vertices in increasing order.

    Raises:
        GeneratorParameterError: If ``d < 2``, ``copies < 1`` or ``leaves < 0``.
    """
    if d < 2 or copies < 1 or leaves < 0:
        raise GeneratorParameterError("Need d >= 2, copies >= 1 and leaves >= 0.")
    size = d + 1
    triples = []
    for j in range(copies):
        offset = j * size
        triples += [
            (offset + a, offset + b, 1.0)
            for a in range(size)
            for b in range(a + 1, size)
        ]
        if j + 1 < copies:
            triples.append((offset + size - 1, offset + size, 1.0))
    core = copies * size
    triples += [(i % core, core + i, 1.0) for i in range(leaves)]
    return build_network(core + leaves, triples)


GENERATORS: dict[str, Callable[..., ElectricNetwork]] = {
    "complete": gen_complete,
    "regular": gen_random_regular,
    "triangle_chain": gen_glued_triangle_chain,
    "expander_chain": gen_expander_chain_with_leaves,
}


def parse_graph_spec(spec: str) -> ElectricNetwork:
    """Build a network from ``generator:key=value,...`` or a network file path.

    The ``pendants`` generator takes ``base=<n>,d=<d>`` (a random regular base,
    or ``d=complete``) together with ``m``, ``f`` and ``seed``.

    Examples:
        ``complete:n=200``, ``triangle_chain:n=50``,
        ``expander_chain:d=10,copies=5,leaves=4``,
        ``pendants:base=100,d=complete,m=10,f=2,seed=1``.

    Raises:
        GeneratorParameterError: For unknown generators or malformed parameters.
    """
    if Path(spec).is_file():
        return read_network(spec)
    name, _, arg_text = spec.partition(":")
    kwargs: dict[str, int | float | str] = {}
    for item in filter(None, arg_text.split(",")):
        key, sep, value = item.partition("=")
        if not sep:
            raise GeneratorParameterError(f"Malformed parameter {item!r} in {spec!r}.")
        kwargs[key.strip()] = _parse_number(value.strip())
    if name == "pendants":
        return _pendants_from_spec(kwargs)
    if name not in GENERATORS:
        raise GeneratorParameterError(
            f"Unknown generator {name!r}; choose from {[*GENERATORS, 'pendants']}."
        )
    if name == "complete" and "c" in kwargs:
        kwargs["conductance"] = kwargs.pop("c")
    try:
        return GENERATORS[name](**kwargs)
    except TypeError as err:
        raise GeneratorParameterError(f"Bad parameters for {name!r}: {err}") from err


def _pendants_from_spec(kwargs: dict) -> ElectricNetwork:
    base_n = int(kwargs.get("base", 0))
    degree = kwargs.get("d", "complete")
    seed = kwargs.get("seed")
    if degree == "complete":
        base = gen_complete(base_n)
    else:
        base = gen_random_regular(base_n, int(degree), seed=seed)
    return gen_regular_plus_pendants(
        base, int(kwargs.get("m", 1)), int(kwargs.get("f", 1)), seed=seed
    )


def _parse_number(text: str) -> int | float | str:
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


@dataclass(frozen=True)
class BalanceReport:
    """Finite-parameter evaluation of the almost-balanced assumption.

    Attributes:
        gamma (float): Typical strength scale.
        K (float): Width of the typical window ``[gamma, K gamma]``.
        delta (float): Tolerance of all three conditions.
        frac_typical (float): Fraction of vertices with typical strength.
        atypical_strength_ratio (float): Summed strength outside the window,
            divided by ``gamma * n``.
        max_edge_ratio (float): Largest conductance divided by ``gamma``.
        total_strength_ratio (float): Summed strength of all vertices divided by
            ``gamma * n``.
        typical_mask (np.ndarray): Membership mask of the typical vertex set.
        passes (tuple[bool, bool, bool]): One flag per condition.
    """

    gamma: float
    K: float  # noqa: N815
    delta: float
    frac_typical: float
    atypical_strength_ratio: float
    max_edge_ratio: float
    total_strength_ratio: float
    typical_mask: np.ndarray = field(repr=False)
    passes: tuple[bool, bool, bool]

    @property
    def all_pass(self) -> bool:
        """Whether all three conditions hold."""
        return all(self.passes)


def typical_vertices(
    net: ElectricNetwork, gamma: float, K: float  # noqa: N803
) -> np.ndarray:
    """Mask of vertices whose strength lies in ``[gamma, K gamma]``."""
    strength = net.vertex_strength
    return (strength >= gamma) & (strength <= K * gamma)


def balance_report(
    net: ElectricNetwork,
    gamma: float,
    K: float,  # noqa: N803
    delta: float,
) -> BalanceReport:
    """Evaluate the three almost-balanced conditions at concrete parameters.

    The conditions are: at least ``(1 - delta) n`` vertices are typical; the
    strength outside the typical set is at most ``delta gamma n``; and every
    conductance is at most ``delta gamma``.

    Args:
        net (ElectricNetwork): Network to check.
        gamma (float): Positive strength scale.
        K (float): Window width, greater than one.
        delta (float): Tolerance in ``(0, 1)``.

    Returns:
        BalanceReport: Measured quantities and the pass flags.

    Raises:
        BalanceParameterError: If a parameter is outside its domain.
    """
    if not gamma > 0:
        raise BalanceParameterError(f"gamma must be positive, got {gamma}.")
    if not K > 1:
        raise BalanceParameterError(f"K must exceed 1, got {K}.")
    if not 0 < delta < 1:
        raise BalanceParameterError(f"delta must lie in (0, 1), got {delta}.")
    mask = typical_vertices(net, gamma, K)
    scale = gamma * net.n
    frac_typical = float(mask.mean())
    atypical = float(net.vertex_strength[~mask].sum()) / scale
    max_edge = float(net.conductance.max()) / gamma if net.m else 0.0
    return BalanceReport(
        gamma=gamma,
        K=K,
        delta=delta,
        frac_typical=frac_typical,
        atypical_strength_ratio=atypical,
        max_edge_ratio=max_edge,
        total_strength_ratio=float(net.vertex_strength.sum()) / scale,
        typical_mask=_readonly(mask),
        passes=(
            frac_typical >= 1 - delta,
            atypical <= delta,
            max_edge <= delta,
        ),
    )


def edge_overlap_report(
    net: ElectricNetwork, gamma: float, delta: float
) -> tuple[float, float, tuple[bool, bool]]:
    """Evaluate the two-condition high-degree assumption used for edge overlaps.

    Returns:
        tuple: Fraction of vertices with ``C_v >= gamma``, the largest
            conductance over ``gamma``, and the two pass flags.
    """
    if not gamma > 0 or not 0 < delta < 1:
        raise BalanceParameterError("Need gamma > 0 and delta in (0, 1).")
    frac_high = float(np.mean(net.vertex_strength >= gamma))
    max_edge = float(net.conductance.max()) / gamma if net.m else 0.0
    return frac_high, max_edge, (frac_high >= 1 - delta, max_edge <= delta)
