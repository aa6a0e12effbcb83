"""Reproducible random streams and network random-walk transition tables."""
import logging
from bisect import bisect_right
from collections.abc import Iterator

import numpy as np

from wstlab.network import ElectricNetwork

logger = logging.getLogger(__name__)

FIRST_CHUNK = 64
UNIFORM_CHUNK = 1 << 16


class WalkStalledError(RuntimeError):
    """Exception raised when a random walk exceeds its step budget."""

    pass


class RngStream:
    """Deterministic random stream identified by ``(seed, stream)``.

    Streams are derived with :class:`numpy.random.SeedSequence` spawn keys, so
    distinct stream ids give statistically independent generators and
    ``child(i)`` gives the stream of replica ``i`` below this one.

    Attributes:
        seed (int): Master seed.
        stream (int): Stream id below the parent.
        spawn_key (tuple[int, ...]): Full path of stream ids from the master.
        counter (int): Number of variates consumed so far.
    """

    def __init__(self, seed: int, stream: int = 0, parent_key: tuple[int, ...] = ()):
        if seed < 0:
            raise ValueError(f"Seed must be nonnegative, got {seed}.")
        self.seed = int(seed)
        self.stream = int(stream)
        self.spawn_key = (*parent_key, self.stream)
        sequence = np.random.SeedSequence(self.seed, spawn_key=self.spawn_key)
        self.generator = np.random.Generator(np.random.PCG64(sequence))
        self.counter = 0

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, spawn_key={self.spawn_key})"

    def child(self, index: int) -> "RngStream":
        """Independent sub-stream ``index`` of this stream."""
        return RngStream(self.seed, index, parent_key=self.spawn_key)

    def random(self, size: int | None = None) -> float | np.ndarray:
        """Uniform variates on ``[0, 1)``."""
        self.counter += 1 if size is None else int(size)
        return self.generator.random(size)

    def integers(
        self, low: int, high: int, size: int | None = None
    ) -> int | np.ndarray:
        """Uniform integers on ``[low, high)``."""
        self.counter += 1 if size is None else int(size)
        return self.generator.integers(low, high, size=size)

    def uniforms(
        self, first_chunk: int = FIRST_CHUNK, max_chunk: int = UNIFORM_CHUNK
    ) -> Iterator[float]:
        """Endless iterator of uniforms drawn in chunks that double in size.

        ``counter`` advances by one per yielded variate.
        """
        chunk = max(1, int(first_chunk))
        while True:
            for u in self.generator.random(chunk).tolist():
                self.counter += 1
                yield u
            chunk = min(2 * chunk, max_chunk)


class TransitionTable:
    """Per-vertex cumulative transition tables of the network random walk.

    The walk at ``v`` moves along edge ``e`` with probability ``c(e) / C_v``.
    Weights are taken in log form and exponentiated after subtracting the
    per-vertex maximum, so conductances whose raw exponentials underflow still
    give correctly normalised steps.

    Args:
        net (ElectricNetwork): Network whose adjacency is walked.
        log_conductance (np.ndarray, optional): Per-edge log conductances.
            Defaults to the logs of the network's own conductances.
    """

    def __init__(self, net: ElectricNetwork, log_conductance: np.ndarray | None = None):
        adj = net.adjacency
        if log_conductance is None:
            log_conductance = net.log_conductance
        log_w = np.asarray(log_conductance, dtype=np.float64)[adj.edge_ids]
        degree = np.diff(adj.indptr)
        self.n = net.n
        self.indptr = adj.indptr.tolist()
        self.neighbors = adj.neighbors.tolist()
        self.edge_ids = adj.edge_ids.tolist()
        if log_w.size == 0:
            self.cumulative: list[float] = []
            return
        starts = adj.indptr[:-1]
        vertex_max = np.maximum.reduceat(log_w, starts)
        weights = np.exp(log_w - np.repeat(vertex_max, degree))
        running = np.cumsum(weights)
        before = np.repeat(running[starts] - weights[starts], degree)
        cumulative = running - before
        cumulative /= np.repeat(cumulative[adj.indptr[1:] - 1], degree)
        cumulative[adj.indptr[1:] - 1] = 1.0
        self.cumulative = cumulative.tolist()

    def step(self, v: int, u: float) -> tuple[int, int]:
        """Neighbour and edge chosen from ``v`` by the uniform variate ``u``."""
        lo, hi = self.indptr[v], self.indptr[v + 1] - 1
        k = bisect_right(self.cumulative, u, lo, hi)
        return self.neighbors[k], self.edge_ids[k]


def hitting_time(
    table: TransitionTable,
    start: int,
    target: int,
    draws: Iterator[float],
    max_steps: int,
) -> int:
    """Number of steps a walk from ``start`` needs to reach ``target``."""
    steps = 0
    v = start
    step = table.step
    while v != target:
        v, _ = step(v, next(draws))
        steps += 1
        if steps > max_steps:
            raise WalkStalledError(
                f"Walk from {start} did not hit {target} within {max_steps} steps."
            )
    return steps
