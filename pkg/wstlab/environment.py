"""The beta random environment and its comparison with the label MST.

Every edge carries an i.i.d. uniform label ``U_e`` and conductance
``exp(-beta U_e)``. All beta-dependent quantities are computed from labels or
log conductances; raw conductances are only materialised when their range fits
in float64.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import polars as pl
from scipy import stats

from wstlab.network import ElectricNetwork
from wstlab.resistance import (
    DEFAULT_WINDOW,
    SolverMode,
    log_domain_edge_probabilities,
)
from wstlab.sampling import (
    SpanningTree,
    kruskal_min,
    sequential_sample,
    wilson_sample,
)
from wstlab.schemas import ENVIRONMENT_SCHEMA, validate_environment_schema
from wstlab.walks import RngStream, TransitionTable

logger = logging.getLogger(__name__)

WILSON_RANGE = 64.0


class LabelEnvironmentError(Exception):
    """Base class for errors raised by the environment model."""

    pass


class NegativeBetaError(LabelEnvironmentError, ValueError):
    """Exception raised when beta is negative."""

    pass


class TiedLabelsError(LabelEnvironmentError):
    """Exception raised when tied labels make the MST ambiguous."""

    pass


class TreeEdgeError(LabelEnvironmentError, ValueError):
    """Exception raised when an MST edge is passed where an external edge is needed."""

    pass


class EpsilonRangeError(LabelEnvironmentError, ValueError):
    """Exception raised when epsilon is outside ``(0, 1)``."""

    pass


class TreeMismatchError(LabelEnvironmentError, ValueError):
    """Exception raised when two trees do not span the same network."""

    pass


class ConductanceUnderflowError(LabelEnvironmentError, ArithmeticError):
    """Exception raised when materialised conductances would underflow."""

    pass


@dataclass(frozen=True, eq=False)
class Environment:
    """Labels ``U_e`` in ``[0, 1]`` together with the inverse temperature beta.

    Attributes:
        label (np.ndarray): Per-edge labels in edge index order.
        beta (float): Nonnegative inverse temperature.
        log_conductance (np.ndarray): ``-beta * label``.
    """

    label: np.ndarray
    beta: float
    log_conductance: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.beta >= 0:
            raise NegativeBetaError(f"beta must be nonnegative, got {self.beta}.")
        label = np.array(self.label, dtype=np.float64)
        if label.size and (label.min() < 0.0 or label.max() > 1.0):
            raise LabelEnvironmentError("Labels must lie in [0, 1].")
        label.flags.writeable = False
        log_conductance = -float(self.beta) * label
        log_conductance.flags.writeable = False
        object.__setattr__(self, "label", label)
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "log_conductance", log_conductance)

    @property
    def log_range(self) -> float:
        """``beta * (max U - min U)``, the log ratio of the extreme conductances."""
        if self.label.size == 0:
            return 0.0
        return self.beta * float(self.label.max() - self.label.min())

    def with_beta(self, beta: float) -> "Environment":
        """Same labels at another inverse temperature."""
        return Environment(self.label, beta)

    def check(self, net: ElectricNetwork) -> None:
        """Raise if the environment does not have one label per edge of ``net``."""
        if self.label.shape != (net.m,):
            raise LabelEnvironmentError(
                f"Environment has {self.label.size} labels for {net.m} edges."
            )


def draw_environment(net: ElectricNetwork, beta: float, rng: RngStream) -> Environment:
    """Draw i.i.d. uniform labels for every edge.

    Raises:
        NegativeBetaError: If ``beta < 0``.
    """
    if not beta >= 0:
        raise NegativeBetaError(f"beta must be nonnegative, got {beta}.")
    return Environment(rng.random(net.m), beta)


def mu(beta: float) -> float:
    """``E[exp(-beta U)] = (1 - exp(-beta)) / beta``, equal to one at ``beta = 0``."""
    if beta < 0:
        raise NegativeBetaError(f"beta must be nonnegative, got {beta}.")
    if beta == 0:
        return 1.0
    return -math.expm1(-beta) / beta


def environment_network(net: ElectricNetwork, env: Environment) -> ElectricNetwork:
    """Network with conductances ``exp(-beta (U - min U))``.

    The shift by ``min U`` rescales every conductance by the same factor, which
    leaves the tree law and all Kirchhoff probabilities unchanged.

    Raises:
        ConductanceUnderflowError: If some conductance underflows to zero.
    """
    env.check(net)
    if net.m == 0:
        return net
    shifted = env.log_conductance - env.log_conductance.max()
    conductance = np.exp(shifted)
    if np.any(conductance == 0.0):
        raise ConductanceUnderflowError(
            f"Log range {env.log_range:.1f} underflows float64 conductances."
        )
    return net.with_conductance(conductance)


def sample_environment_tree(
    net: ElectricNetwork,
    env: Environment,
    rng: RngStream,
    method: str = "auto",
    wilson_range: float = WILSON_RANGE,
    window: float = DEFAULT_WINDOW,
    table: TransitionTable | None = None,
) -> SpanningTree:
    """Sample a weighted spanning tree of the environment conductances.

    Args:
        net (ElectricNetwork): Graph structure.
        env (Environment): Labels and beta.
        rng (RngStream): Random stream.
        method (str): ``"wilson"``, ``"sequential"`` or ``"auto"``, which picks
            Wilson while the log range is at most ``wilson_range`` and the
            chain-rule sampler beyond, where walks get trapped behind strong
            edges.
        wilson_range (float): Switch-over point for ``"auto"``.
        window (float): Band width of the chain-rule sampler.
        table (TransitionTable, optional): Prebuilt Wilson tables for ``env``.
    """
    env.check(net)
    if method == "auto":
        method = "wilson" if env.log_range <= wilson_range else "sequential"
        logger.debug("Environment log range %.1f: using %s", env.log_range, method)
    if method == "wilson":
        return wilson_sample(net, rng, log_conductance=env.log_conductance, table=table)
    if method == "sequential":
        return sequential_sample(net, env.log_conductance, rng, window=window)
    raise ValueError(f"Unknown sampling method {method!r}.")


def environment_edge_probabilities(
    net: ElectricNetwork,
    env: Environment,
    window: float = DEFAULT_WINDOW,
    mode: SolverMode = "auto",
) -> np.ndarray:
    """Kirchhoff probability of every edge under the environment conductances."""
    env.check(net)
    return log_domain_edge_probabilities(
        net, env.log_conductance, window=window, mode=mode
    )


def _edge_index(net: ElectricNetwork, edge: int | tuple[int, int]) -> int:
    if isinstance(edge, tuple):
        return net.edge_index(*edge)
    return int(edge)


def mst_path_max(
    mst: SpanningTree, labels: np.ndarray, edge: int | tuple[int, int]
) -> float:
    """Largest label on the MST path between the endpoints of an external edge.

    Raises:
        TreeEdgeError: If the edge belongs to the MST.
        TiedLabelsError: If the path maximum equals the edge label.
        LabelEnvironmentError: If the path maximum exceeds the edge label,
            which means ``mst`` is not the label MST.
    """
    net = mst.net
    index = _edge_index(net, edge)
    if index in mst:
        raise TreeEdgeError(f"Edge {index} belongs to the MST.")
    labels = np.asarray(labels, dtype=np.float64)
    path = mst.path_edges(int(net.edge_u[index]), int(net.edge_v[index]))
    path_max = float(labels[path].max())
    _check_cycle_property(path_max, float(labels[index]), index)
    return path_max


def _check_cycle_property(path_max: float, label: float, index: int) -> None:
    if path_max == label:
        raise TiedLabelsError(f"Edge {index} ties with its MST path maximum.")
    if path_max > label:
        raise LabelEnvironmentError(
            f"Edge {index} is lighter than its MST path; the tree is not minimal."
        )


class _PathMaxima:
    """Binary-lifting tables answering path-maximum queries on a rooted tree."""

    def __init__(self, tree: SpanningTree, labels: np.ndarray):
        parent, parent_edge = tree.parent
        self.depth = tree.depth
        up = np.where(parent < 0, 0, parent)
        weight = np.where(parent_edge < 0, -np.inf, labels[np.maximum(parent_edge, 0)])
        levels = max(1, int(self.depth.max()).bit_length())
        self.up = [up]
        self.weight = [weight]
        for _ in range(1, levels):
            previous_up, previous_weight = self.up[-1], self.weight[-1]
            self.up.append(previous_up[previous_up])
            self.weight.append(
                np.maximum(previous_weight, previous_weight[previous_up])
            )

    def query(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        u, v = u.copy(), v.copy()
        swap = self.depth[u] < self.depth[v]
        u[swap], v[swap] = v[swap], u[swap]
        best = np.full(u.size, -np.inf)
        diff = self.depth[u] - self.depth[v]
        for k, (up, weight) in enumerate(zip(self.up, self.weight)):
            sel = ((diff >> k) & 1).astype(bool)
            best[sel] = np.maximum(best[sel], weight[u[sel]])
            u[sel] = up[u[sel]]
        for up, weight in zip(reversed(self.up), reversed(self.weight)):
            sel = up[u] != up[v]
            step = np.maximum(weight[u[sel]], weight[v[sel]])
            best[sel] = np.maximum(best[sel], step)
            u[sel], v[sel] = up[u[sel]], up[v[sel]]
        sel = u != v
        last = self.weight[0]
        best[sel] = np.maximum(best[sel], np.maximum(last[u[sel]], last[v[sel]]))
        return best


def mst_path_maxima(
    mst: SpanningTree, labels: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Path maxima ``m_e`` for all external edges at once.

    Returns:
        tuple[np.ndarray, np.ndarray]: External edge indices and their ``m_e``.

    Raises:
        TiedLabelsError: If some external edge ties with its path maximum.
    """
    net = mst.net
    labels = np.asarray(labels, dtype=np.float64)
    external = np.flatnonzero(~mst.mask)
    if external.size == 0:
        return external, np.zeros(0)
    queries = _PathMaxima(mst, labels)
    maxima = queries.query(net.edge_u[external], net.edge_v[external])
    ties = maxima >= labels[external]
    if ties.any():
        index = int(external[np.argmax(ties)])
        worst = float(maxima[np.argmax(ties)])
        _check_cycle_property(worst, float(labels[index]), index)
    return external, maxima


@dataclass(frozen=True)
class SignificantEdges:
    """External edges that are epsilon-significant.

    Attributes:
        edges (np.ndarray): Significant external edge indices.
        gaps (np.ndarray): ``U_e - m_e`` (label units) of those edges.
        threshold (float): Significance threshold in label units.
        trivial (bool): Set when beta is zero and every external edge
            qualifies.
    """

    edges: np.ndarray
    gaps: np.ndarray
    threshold: float
    trivial: bool = False

    def __len__(self) -> int:
        return int(self.edges.size)


def _check_epsilon(epsilon: float) -> None:
    if not 0.0 < epsilon < 1.0:
        raise EpsilonRangeError(f"epsilon must lie in (0, 1), got {epsilon}.")


def _significant(
    mst: SpanningTree, labels: np.ndarray, threshold: float
) -> SignificantEdges:
    external, maxima = mst_path_maxima(mst, labels)
    gaps = labels[external] - maxima
    keep = gaps <= threshold
    return SignificantEdges(external[keep], gaps[keep], threshold)


def significant_edges(
    net: ElectricNetwork,
    env: Environment,
    epsilon: float,
    mst: SpanningTree | None = None,
) -> SignificantEdges:
    """Epsilon-significant edges of a random environment.

    An edge outside the MaxST is significant when some edge on its MaxST path
    has conductance at most ``c(e) / epsilon``. In label space this reads
    ``U_e - m_e <= -log(epsilon) / beta``.

    Args:
        net (ElectricNetwork): Graph structure.
        env (Environment): Labels and beta.
        epsilon (float): Ratio threshold in ``(0, 1)``.
        mst (SpanningTree, optional): Precomputed label MST.

    Raises:
        EpsilonRangeError: If epsilon is outside ``(0, 1)``.
        TiedLabelsError: If tied labels make the MaxST ambiguous.
    """
    _check_epsilon(epsilon)
    env.check(net)
    mst = mst or kruskal_min(net, env.label)
    if env.beta == 0:
        external, maxima = mst_path_maxima(mst, env.label)
        gaps = env.label[external] - maxima
        return SignificantEdges(external, gaps, math.inf, trivial=True)
    return _significant(mst, env.label, -math.log(epsilon) / env.beta)


def significant_edges_conductance(
    net: ElectricNetwork, epsilon: float
) -> SignificantEdges:
    """Epsilon-significant edges of a network with given conductances.

    Uses ``-log c`` as labels, so the gaps are ``log(min_f c(f) / c(e))`` over
    the MaxST path and the threshold is ``-log(epsilon)``.
    """
    _check_epsilon(epsilon)
    labels = -net.log_conductance
    return _significant(kruskal_min(net, labels), labels, -math.log(epsilon))


def tree_symmetric_difference(t1: SpanningTree, t2: SpanningTree) -> int:
    """Number of edges in exactly one of the two trees.

    Raises:
        TreeMismatchError: If the trees belong to networks of different sizes.
    """
    if t1.net.n != t2.net.n or t1.net.m != t2.net.m:
        raise TreeMismatchError("Trees span networks of different sizes.")
    return len(t1.edge_set ^ t2.edge_set)


def conditional_label_quantiles(
    net: ElectricNetwork, env: Environment, mst: SpanningTree | None = None
) -> np.ndarray:
    """``(U_e - m_e) / (1 - m_e)`` for every external edge.

    Given the MST and its labels, the external labels are independent and
    uniform on ``[m_e, 1]``, so these quantiles are i.i.d. uniform on ``[0, 1]``.
    """
    env.check(net)
    mst = mst or kruskal_min(net, env.label)
    external, maxima = mst_path_maxima(mst, env.label)
    return (env.label[external] - maxima) / (1.0 - maxima)


def conditional_uniformity_test(quantiles: np.ndarray) -> tuple[float, float]:
    """Kolmogorov-Smirnov statistic and p-value of pooled quantiles against uniform."""
    result = stats.kstest(np.asarray(quantiles, dtype=np.float64), "uniform")
    return float(result.statistic), float(result.pvalue)


def environment_to_frame(net: ElectricNetwork, env: Environment) -> pl.DataFrame:
    """Environment as a frame with columns ``edge_index, u, v, label``."""
    env.check(net)
    return pl.DataFrame(
        {
            "edge_index": np.arange(net.m),
            "u": net.edge_u,
            "v": net.edge_v,
            "label": env.label,
        },
        schema=ENVIRONMENT_SCHEMA,
    )


def write_environment(net: ElectricNetwork, env: Environment, path: str | Path) -> None:
    """Dump an environment as CSV with a ``# beta=`` header line."""
    with Path(path).open("w") as fh:
        fh.write(f"# beta={env.beta!r}\n")
        environment_to_frame(net, env).write_csv(fh)


def read_environment(
    path: str | Path, net: ElectricNetwork | None = None
) -> Environment:
    """Read an environment dump written by :func:`write_environment`.

    Args:
        path (str | Path): Dump file.
        net (ElectricNetwork, optional): When given, the edge endpoints in the
            dump must match its edges.

    Raises:
        LabelEnvironmentError: If the header or the edge list is inconsistent.
    """
    path = Path(path)
    with path.open() as fh:
        header = fh.readline().strip()
    if not header.startswith("# beta="):
        raise LabelEnvironmentError(f"{path}: missing '# beta=' header line.")
    beta = float(header.removeprefix("# beta="))
    frame = pl.read_csv(path, comment_prefix="#", schema_overrides=ENVIRONMENT_SCHEMA)
    validate_environment_schema(frame)
    frame = frame.sort("edge_index")
    if not np.array_equal(frame["edge_index"].to_numpy(), np.arange(frame.height)):
        raise LabelEnvironmentError(f"{path}: edge indices must be 0..m-1.")
    if net is not None and (
        frame.height != net.m
        or not np.array_equal(frame["u"].to_numpy(), net.edge_u)
        or not np.array_equal(frame["v"].to_numpy(), net.edge_v)
    ):
        raise LabelEnvironmentError(f"{path}: edges do not match the network.")
    return Environment(frame["label"].to_numpy(), beta)
