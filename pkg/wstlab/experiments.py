"""Sweep drivers for edge overlaps, total lengths and local censuses.

Every beta point owns a random stream derived from the master seed and the
beta value itself, and replica ``i`` of that point uses child stream ``i``.
A single row can therefore be rerun in isolation with the same seed, beta
and replica count, and results do not depend on the worker count.
"""
import hashlib
import logging
import math
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import repeat

import numpy as np
import polars as pl

from wstlab.config import ExperimentConfig, config_hash
from wstlab.environment import (
    ConductanceUnderflowError,
    LabelEnvironmentError,
    draw_environment,
    environment_edge_probabilities,
    environment_network,
    sample_environment_tree,
)
from wstlab.localstat import LocalCensus, ball, theorem_sum
from wstlab.network import ElectricNetwork, NetworkError, parse_graph_spec
from wstlab.patterns import RootedTreePattern, pgw_reference_probability
from wstlab.resistance import ResistanceError
from wstlab.sampling import SamplingError, SpanningTree, kruskal_min
from wstlab.walks import RngStream

logger = logging.getLogger(__name__)

ZETA3 = 1.2020569031595942

_ROW_ERRORS = (
    NetworkError,
    ResistanceError,
    SamplingError,
    LabelEnvironmentError,
    ArithmeticError,
    ValueError,
    np.linalg.LinAlgError,
)


@dataclass
class SweepRow:
    """One beta point of a sweep.

    Attributes:
        beta (float): Inverse temperature.
        estimate (float): Mean over replicas; NaN on failed rows.
        stderr (float): Standard error of the mean.
        replicas (int): Replicas averaged.
        wall_time (float): Seconds spent on the row.
        seed (int): Master seed.
        stream (str): Spawn key range of the replicas, ``point/first-last``.
        config_hash (str): Hash of the producing configuration.
        failed (bool): Whether the row raised and was skipped.
        error (str): Error message of a failed row.
        extras (dict): Experiment-specific columns.
    """

    beta: float
    estimate: float
    stderr: float
    replicas: int
    wall_time: float
    seed: int
    stream: str
    config_hash: str
    failed: bool = False
    error: str = ""
    extras: dict[str, float | bool | None] = field(default_factory=dict)

    def __post_init__(self):
        if not self.failed and not (math.isfinite(self.estimate) and self.stderr >= 0):
            raise ValueError(
                f"Row at beta={self.beta} has estimate {self.estimate}"
                f" and stderr {self.stderr}."
            )


def rows_to_frame(
    rows: Sequence[SweepRow], include_wall_time: bool = True
) -> pl.DataFrame:
    """Sweep rows as a table, extras as trailing columns in first-seen order."""
    extra_keys: list[str] = []
    for row in rows:
        extra_keys += [key for key in row.extras if key not in extra_keys]
    columns: dict[str, list] = {
        "beta": [row.beta for row in rows],
        "estimate": [row.estimate for row in rows],
        "stderr": [row.stderr for row in rows],
        "replicas": [row.replicas for row in rows],
    }
    if include_wall_time:
        columns["wall_time"] = [row.wall_time for row in rows]
    columns |= {
        "failed": [row.failed for row in rows],
        "error": [row.error for row in rows],
        "seed": [row.seed for row in rows],
        "stream": [row.stream for row in rows],
        "config_hash": [row.config_hash for row in rows],
    }
    for key in extra_keys:
        columns[key] = [row.extras.get(key) for row in rows]
    return pl.DataFrame(columns, strict=False)


def beta_stream_id(beta: float) -> int:
    """Stream id of a beta point, a function of the beta value alone."""
    digest = hashlib.sha256(repr(float(beta)).encode("utf-8")).hexdigest()
    return int(digest[:8], 16)


def replica_streams(seed: int, beta: float, replicas: int) -> list[RngStream]:
    """Streams of the replicas of one beta point."""
    point = RngStream(seed, beta_stream_id(beta))
    return [point.child(i) for i in range(replicas)]


def mean_and_stderr(values: Sequence[float]) -> tuple[float, float]:
    """Mean (by ``math.fsum``) and standard error of the mean."""
    if not values:
        raise ValueError("No values to average.")
    mean = math.fsum(values) / len(values)
    if len(values) == 1:
        return mean, 0.0
    variance = math.fsum((x - mean) ** 2 for x in values) / (len(values) - 1)
    return mean, math.sqrt(variance / len(values))


def run_replicas(
    task: Callable,
    net: ElectricNetwork,
    beta: float,
    streams: Sequence[RngStream],
    workers: int = 1,
    args: tuple = (),
) -> list:
    """Apply ``task(net, beta, stream, *args)`` to every stream, in stream order."""
    if workers <= 1 or len(streams) == 1:
        return [task(net, beta, stream, *args) for stream in streams]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        extra = [repeat(a) for a in args]
        return list(pool.map(task, repeat(net), repeat(beta), streams, *extra))


def _run_point(
    config: ExperimentConfig,
    net: ElectricNetwork,
    beta: float,
    replica: Callable[[list[RngStream]], tuple[list[float], dict]],
) -> SweepRow:
    streams = replica_streams(config.seed, beta, config.replicas)
    provenance = dict(
        beta=beta,
        replicas=config.replicas,
        seed=config.seed,
        stream=f"{beta_stream_id(beta)}/0-{config.replicas - 1}",
        config_hash=config_hash(config),
    )
    start = time.perf_counter()
    try:
        values, extras = replica(streams)
        estimate, stderr = mean_and_stderr(values)
    except _ROW_ERRORS as err:
        elapsed = time.perf_counter() - start
        logger.error("Row beta=%g failed: %s", beta, err)
        return SweepRow(
            estimate=math.nan,
            stderr=math.nan,
            wall_time=elapsed,
            failed=True,
            error=f"{type(err).__name__}: {err}",
            **provenance,
        )
    elapsed = time.perf_counter() - start
    logger.info("beta=%g: %.6g +/- %.2g (%.1fs)", beta, estimate, stderr, elapsed)
    return SweepRow(
        estimate=estimate, stderr=stderr, wall_time=elapsed, extras=extras, **provenance
    )


def _overlap_replica(
    net: ElectricNetwork, beta: float, stream: RngStream, window: float, mode: str
) -> float:
    env = draw_environment(net, beta, stream)
    probs = environment_edge_probabilities(net, env, window=window, mode=mode)
    return math.fsum((probs**2).tolist())


def overlap_sweep(
    config: ExperimentConfig, net: ElectricNetwork | None = None
) -> list[SweepRow]:
    """Average exact edge overlap ``sum_e P(e in T)^2`` over fresh environments.

    The graph's own conductances are ignored: the environment conductance of
    edge ``e`` is ``exp(-beta U_e)``, so the zero-beta row is the uniform
    spanning tree value.

    Args:
        config (ExperimentConfig): Graph, beta grid, replicas, seed, solver.
        net (ElectricNetwork, optional): Prebuilt network for ``config.graph``.

    Returns:
        list[SweepRow]: One row per beta with ``overlap_per_n`` and
            ``overlap_fraction`` (over ``n - 1``) extras. Failing rows are
            flagged and the sweep goes on.
    """
    net = net if net is not None else parse_graph_spec(config.graph)
    config = config.with_default_betas(net.n)
    rows = []
    for beta in config.betas:

        def replica(streams, beta=beta):
            values = run_replicas(
                _overlap_replica,
                net,
                beta,
                streams,
                config.workers,
                (config.window, config.solver),
            )
            mean = math.fsum(values) / len(values)
            extras = {
                "overlap_per_n": mean / net.n,
                "overlap_fraction": mean / max(net.n - 1, 1),
            }
            return values, extras

        rows.append(_run_point(config, net, beta, replica))
    return rows


def total_length(tree: SpanningTree, labels: np.ndarray) -> float:
    """Sum of the labels over the tree edges."""
    return math.fsum(np.asarray(labels)[list(tree.edges)].tolist())


def component_count_integral(tree: SpanningTree, labels: np.ndarray) -> float:
    """``integral_0^1 (k(t) - 1) dt`` over the tree edges.

    Here ``k(t)`` counts the components of ``{e : U_e <= t}``.

    Within the tree, ``k`` starts at ``n`` and drops by one at each tree-edge
    label, so the integral is a sum over the gaps between sorted labels.

    Raises:
        ValueError: If a tree label lies outside ``[0, 1]``.
    """
    values = np.sort(np.asarray(labels, dtype=np.float64)[list(tree.edges)])
    if values.size and (values[0] < 0.0 or values[-1] > 1.0):
        raise ValueError("Labels must lie in [0, 1].")
    cuts = np.concatenate([[0.0], values])
    gaps = np.diff(np.append(cuts, 1.0))
    counts = np.arange(values.size, -1, -1, dtype=np.float64)
    return math.fsum((counts * gaps).tolist())


def small_beta_formula(n: int, beta: float) -> float:
    """``(n/beta)(1 - beta e^-beta - e^-beta)/(1 - e^-beta)``, ``n/2`` at zero."""
    if beta < 1e-5:
        return n * (0.5 - beta / 12.0)
    tail = -math.expm1(-beta)
    return (n / beta) * (tail - beta * math.exp(-beta)) / tail


def length_bound_shape(n: int, beta: float) -> float:
    """``n log n / (beta + log n)``, the shape of the intermediate-beta bound."""
    return n * math.log(n) / (beta + math.log(n))


def is_complete(net: ElectricNetwork) -> bool:
    """Whether the network is a complete graph."""
    return net.m == net.n * (net.n - 1) // 2


def _length_replica(
    net: ElectricNetwork,
    beta: float,
    stream: RngStream,
    samples: int,
    method: str,
    window: float,
) -> tuple[float, float]:
    env = draw_environment(net, beta, stream.child(0))
    lengths = [
        total_length(
            sample_environment_tree(
                net, env, stream.child(1 + j), method=method, window=window
            ),
            env.label,
        )
        for j in range(samples)
    ]
    mst_length = total_length(kruskal_min(net, env.label), env.label)
    return math.fsum(lengths) / samples, mst_length


def length_sweep(
    config: ExperimentConfig, net: ElectricNetwork | None = None
) -> list[SweepRow]:
    """Mean total label length of environment trees, with reference curves.

    Each replica draws an environment, samples ``config.samples`` trees in it
    and records the MST of the same labels. Reference columns ``zeta3`` and
    ``small_beta_formula`` are filled for complete graphs only
    (``reference_curve`` says which); ``bound_shape`` reports the
    intermediate-beta bound without its constant.
    """
    net = net if net is not None else parse_graph_spec(config.graph)
    config = config.with_default_betas(net.n)
    complete = is_complete(net)
    if not complete:
        logger.info("Graph is not complete: no reference curve")
    rows = []
    for beta in config.betas:

        def replica(streams, beta=beta):
            pairs = run_replicas(
                _length_replica,
                net,
                beta,
                streams,
                config.workers,
                (config.samples, config.method, config.window),
            )
            mst_mean, mst_stderr = mean_and_stderr([mst for _, mst in pairs])
            extras = {
                "mst_length": mst_mean,
                "mst_stderr": mst_stderr,
                "reference_curve": complete,
                "zeta3": ZETA3 if complete else None,
                "small_beta_formula": (
                    small_beta_formula(net.n, beta) if complete else None
                ),
                "bound_shape": length_bound_shape(net.n, beta),
            }
            return [wst for wst, _ in pairs], extras

        rows.append(_run_point(config, net, beta, replica))
    return rows


@dataclass
class CensusReport:
    """Output of :func:`census_compare`.

    Attributes:
        rows (list[SweepRow]): Per-beta summary; the estimate is the total
            variation between the environment-tree census and the reference
            law over the observed patterns.
        tables (dict[float, pl.DataFrame]): Per-beta census tables with an
            extra ``mst_p`` column.
    """

    rows: list[SweepRow]
    tables: dict[float, pl.DataFrame]


def reference_total_variation(census: LocalCensus) -> float:
    """Half the summed gap to the reference probabilities over observed patterns."""
    probabilities = census.probabilities()
    return 0.5 * math.fsum(
        abs(p - pgw_reference_probability(pattern).probability)
        for pattern, p in probabilities.items()
    )


def census_total_variation(a: LocalCensus, b: LocalCensus) -> float:
    """Total variation between two empirical pattern laws."""
    pa, pb = a.probabilities(), b.probabilities()
    gaps = (abs(pa.get(k, 0.0) - pb.get(k, 0.0)) for k in set(pa) | set(pb))
    return 0.5 * math.fsum(gaps)


def _census_replica(
    net: ElectricNetwork,
    beta: float,
    stream: RngStream,
    radius: int,
    roots_per_tree: int,
    method: str,
    window: float,
) -> tuple[list[RootedTreePattern | None], list[RootedTreePattern | None]]:
    env = draw_environment(net, beta, stream.child(0))
    tree = sample_environment_tree(
        net, env, stream.child(1), method=method, window=window
    )
    mst = kruskal_min(net, env.label)
    draws = stream.child(2).integers(0, net.n, size=roots_per_tree)
    roots = np.atleast_1d(draws).tolist()
    return [ball(tree, r, radius) for r in roots], [ball(mst, r, radius) for r in roots]


def _theorem_sums(
    config: ExperimentConfig,
    net: ElectricNetwork,
    beta: float,
    patterns: Sequence[RootedTreePattern],
) -> dict[RootedTreePattern, float]:
    """Monte-Carlo compatible-tuple sums on one extra environment of the point."""
    stream = RngStream(config.seed, beta_stream_id(beta)).child(config.replicas)
    env = draw_environment(net, beta, stream.child(0))
    try:
        env_net = environment_network(net, env)
    except ConductanceUnderflowError as err:
        logger.warning("No compatible-tuple sums at beta=%g: %s", beta, err)
        return {}
    gamma = config.gamma or 0.5 * float(env_net.vertex_strength.mean())
    return {
        pattern: theorem_sum(
            env_net,
            pattern,
            gamma,
            config.K,
            mode="monte_carlo",
            rng=stream.child(1 + i),
            samples=config.theorem_samples,
        ).estimate
        for i, pattern in enumerate(patterns)
        if pattern.radius >= 1
    }


def census_compare(
    config: ExperimentConfig, net: ElectricNetwork | None = None
) -> CensusReport:
    """Compare ball censuses of environment trees, MSTs and the reference law.

    Each replica draws an environment, samples a tree in it, builds the MST of
    the same labels and observes ``config.roots_per_tree`` uniform roots in
    both trees.

    Raises:
        ValueError: If ``config.radius > 3``.
    """
    if config.radius > 3:
        raise ValueError("Census comparisons support radius at most 3.")
    net = net if net is not None else parse_graph_spec(config.graph)
    config = config.with_default_betas(net.n)
    rows: list[SweepRow] = []
    tables: dict[float, pl.DataFrame] = {}
    for beta in config.betas:
        found: dict[str, LocalCensus] = {}

        def replica(streams, beta=beta, found=found):
            results = run_replicas(
                _census_replica,
                net,
                beta,
                streams,
                config.workers,
                (config.radius, config.roots_per_tree, config.method, config.window),
            )
            wst, mst = LocalCensus(config.radius), LocalCensus(config.radius)
            for wst_balls, mst_balls in results:
                for pattern in wst_balls:
                    wst.add(pattern)
                for pattern in mst_balls:
                    mst.add(pattern)
            found.update(wst=wst, mst=mst)
            tv_reference = reference_total_variation(wst)
            extras = {
                "tv_mst": census_total_variation(wst, mst),
                "tv_mst_reference": reference_total_variation(mst),
                "observations": wst.samples,
                "truncated": wst.truncation_count,
            }
            return [tv_reference], extras

        row = _run_point(config, net, beta, replica)
        if not row.failed:
            row.stderr = 0.0
            tables[beta] = _census_table(config, net, beta, found["wst"], found["mst"])
        rows.append(row)
    return CensusReport(rows, tables)


def _census_table(
    config: ExperimentConfig,
    net: ElectricNetwork,
    beta: float,
    wst: LocalCensus,
    mst: LocalCensus,
) -> pl.DataFrame:
    patterns = sorted(
        set(wst.counts) | set(mst.counts), key=lambda p: (p.k, p.encoding)
    )
    sums = None
    if config.theorem_samples:
        sums = _theorem_sums(config, net, beta, patterns)
    table = wst.to_frame(theorem_sums=sums, extra_patterns=patterns)
    mst_p = mst.probabilities()
    by_encoding = {p.encoding: mst_p.get(p, 0.0) for p in patterns}
    return table.with_columns(
        pl.Series(
            "mst_p", [by_encoding[e] for e in table["pattern_encoding"]], pl.Float64
        ),
        pl.lit(beta).alias("beta"),
    )
