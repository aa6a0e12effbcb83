"""Self-check suites: electrical identities, sampler oracles and tree-law properties.

Each suite returns one :class:`CheckResult` per check with the measured value
and the tolerance it was held to; :func:`verify` collects them in a table.
"""
import itertools
import logging
import math
from collections.abc import Callable, Iterator
from dataclasses import asdict, dataclass
from functools import cache, partial

import networkx as nx
import numpy as np
import polars as pl

from wstlab.network import (
    ElectricNetwork,
    balance_report,
    build_network,
    edge_overlap_report,
    from_networkx,
    gen_complete,
    gen_expander_chain_with_leaves,
    gen_regular_plus_pendants,
)
from wstlab.resistance import (
    FOSTER_TOL,
    ResistanceSolver,
    edge_resistances,
    effective_resistance,
    foster_sum,
    kirchhoff_probabilities,
    nash_williams_bound,
    partition_function_log,
)
from wstlab.sampling import (
    aldous_broder_sample,
    conditioned_sample,
    enumerate_spanning_trees,
    exact_conditional_law,
    exact_tree_law,
    total_variation,
    tree_law,
    wilson_sample,
)
from wstlab.walks import RngStream, TransitionTable

logger = logging.getLogger(__name__)

IDENTITY_TOL = 1e-10
EXACT_TOL = 1e-9


class UnknownSuiteError(KeyError):
    """Exception raised when a verification suite does not exist."""

    pass


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one check."""

    suite: str
    check: str
    subject: str
    passed: bool
    value: float
    tolerance: float


@cache
def small_connected_graphs(max_n: int) -> tuple[nx.Graph, ...]:
    """Connected simple graphs on 2 to ``max_n <= 7`` vertices, up to isomorphism."""
    if max_n > 7:
        raise ValueError("The graph atlas stops at 7 vertices.")
    return tuple(
        g
        for g in nx.graph_atlas_g()
        if 2 <= g.number_of_nodes() <= max_n and nx.is_connected(g)
    )


def random_conductances(
    graph: nx.Graph, rng: RngStream, low: float = 0.1, high: float = 10.0
) -> ElectricNetwork:
    """The graph with i.i.d. uniform conductances on ``[low, high]``."""
    net = from_networkx(graph, weight=None)
    return net.with_conductance(low + (high - low) * rng.random(net.m))


def random_network(
    n: int, rng: RngStream, extra_p: float = 0.3, low: float = 0.1, high: float = 10.0
) -> ElectricNetwork:
    """Random recursive tree plus independent extra edges, random conductances."""
    edges = {(int(rng.integers(0, v)), v) for v in range(1, n)}
    for u, v in itertools.combinations(range(n), 2):
        if (u, v) not in edges and rng.random() < extra_p:
            edges.add((u, v))
    ordered = sorted(edges)
    conductance = low + (high - low) * rng.random(len(ordered))
    return build_network(n, [(u, v, c) for (u, v), c in zip(ordered, conductance)])


def _describe(net: ElectricNetwork) -> str:
    return f"n={net.n},m={net.m}"


def _resistance_matrix(solver: ResistanceSolver) -> np.ndarray:
    g = solver.grounded_inverse
    diagonal = np.diag(g)
    return diagonal[:, None] + diagonal[None, :] - 2.0 * g


def identities_suite(rng: RngStream, networks: int = 50, **_) -> Iterator[CheckResult]:
    """Foster, Nash-Williams, metric and Rayleigh checks on random networks."""
    for i in range(networks):
        stream = rng.child(i)
        net = random_network(int(stream.integers(4, 31)), stream)
        subject = _describe(net)
        solver = ResistanceSolver(net, mode="dense")
        foster_gap = abs(foster_sum(solver) - (net.n - 1))
        yield CheckResult(
            "identities", "foster", subject, foster_gap <= FOSTER_TOL * (net.n - 1),
            foster_gap, FOSTER_TOL * (net.n - 1),
        )
        reff = edge_resistances(solver)
        slack = min(
            reff[e] - nash_williams_bound(net, u, v)
            for e, (u, v) in enumerate(net.edges)
        )
        yield CheckResult(
            "identities", "nash_williams", subject, slack >= -IDENTITY_TOL,
            slack, IDENTITY_TOL,
        )
        triples = stream.integers(0, net.n, size=60).reshape(20, 3)
        scale = IDENTITY_TOL * max(1.0, float(reff.max()) * net.n)
        excess = max(
            effective_resistance(solver, a, c)
            - effective_resistance(solver, a, b)
            - effective_resistance(solver, b, c)
            for a, b, c in triples.tolist()
        )
        yield CheckResult(
            "identities", "metric", subject, excess <= scale, excess, scale
        )
        before = _resistance_matrix(solver)
        edge = int(stream.integers(0, net.m))
        boosted = net.conductance.copy()
        boosted[edge] *= 1.0 + 9.0 * float(stream.random())
        boosted_solver = ResistanceSolver(net.with_conductance(boosted), mode="dense")
        after = _resistance_matrix(boosted_solver)
        increase = float(np.max(after - before))
        scale = IDENTITY_TOL * max(1.0, float(before.max()))
        yield CheckResult(
            "identities", "rayleigh", subject, increase <= scale, increase, scale
        )


def _small_networks(
    rng: RngStream, max_n: int, assignments: int
) -> Iterator[tuple[str, RngStream, ElectricNetwork]]:
    for g, graph in enumerate(small_connected_graphs(max_n)):
        for a in range(assignments):
            stream = rng.child(g).child(a)
            net = random_conductances(graph, stream)
            yield _describe(net) + f",graph={g}", stream, net


def oracle_suite(
    rng: RngStream, samples: int = 2000, max_n: int = 4, assignments: int = 1, **_
) -> Iterator[CheckResult]:
    """Samplers against the enumeration oracle, with matrix-tree and Kirchhoff checks.

    The sampler tolerance is ``max(0.01, sqrt(trees / samples))``, a few times
    the expected total variation of an exact sampler.
    """
    samplers = {"wilson": wilson_sample, "aldous_broder": aldous_broder_sample}
    for subject, stream, net in _small_networks(rng, max_n, assignments):
        trees = enumerate_spanning_trees(net)
        total = math.fsum(weight for _, weight in trees)
        gap = abs(math.exp(partition_function_log(net)) - total) / total
        yield CheckResult(
            "oracle", "matrix_tree", subject, gap <= EXACT_TOL, gap, EXACT_TOL
        )
        exact = exact_tree_law(net)
        marginals = np.zeros(net.m)
        for edges, p in exact.items():
            marginals[list(edges)] += p
        kirchhoff = kirchhoff_probabilities(ResistanceSolver(net, mode="dense"))
        gap = float(np.max(np.abs(kirchhoff - marginals)))
        yield CheckResult(
            "oracle", "kirchhoff", subject, gap <= EXACT_TOL, gap, EXACT_TOL
        )
        tolerance = max(0.01, math.sqrt(len(exact) / samples))
        table = TransitionTable(net)
        for k, (name, sampler) in enumerate(samplers.items()):
            walk = partial(sampler, table=table)
            law = tree_law(net, walk, stream.child(k), samples)
            tv = total_variation(law, exact)
            yield CheckResult("oracle", name, subject, tv <= tolerance, tv, tolerance)


def _conditionings(net: ElectricNetwork) -> Iterator[tuple[list[int], list[int]]]:
    yield [0], []
    last = net.m - 1
    if last > 0:
        yield [], [last]
        yield [0], [last]
    if net.m > 2:
        yield [0, 1], []


def markov_suite(
    rng: RngStream, samples: int = 2000, max_n: int = 5, **_
) -> Iterator[CheckResult]:
    """Spatial Markov property: contraction law equals the rejection law.

    Exact comparisons run on every small graph; a statistical one compares
    :func:`conditioned_sample` with the exact conditional law on ``K_4``.
    """
    for name, _, net in _small_networks(rng, max_n, 1):
        for forced_in, forced_out in _conditionings(net):
            subject = f"{name},A={forced_in},B={forced_out}"
            try:
                rejection = exact_conditional_law(
                    net, forced_in, forced_out, "rejection"
                )
            except ValueError:
                # the event is impossible, e.g. B holds a bridge
                continue
            contraction = exact_conditional_law(
                net, forced_in, forced_out, "contraction"
            )
            tv = total_variation(rejection, contraction)
            yield CheckResult(
                "markov", "exact", subject, tv <= EXACT_TOL, tv, EXACT_TOL
            )
    net = gen_complete(4)
    exact = exact_conditional_law(net, [0], [], "rejection")
    stream = rng.child(10**6)
    law = tree_law(net, lambda n, r: conditioned_sample(n, [0], [], r), stream, samples)
    tolerance = max(0.02, math.sqrt(len(exact) / samples))
    tv = total_variation(law, exact)
    yield CheckResult("markov", "sampled", "K_4,A=[0]", tv <= tolerance, tv, tolerance)


def association_suite(rng: RngStream, max_n: int = 4, **_) -> Iterator[CheckResult]:
    """Negative association of edge inclusions for all edge pairs and triples."""
    for subject, _, net in _small_networks(rng, max_n, 1):
        law = exact_tree_law(net)
        weights = np.array(list(law.values()))
        masks = np.zeros((len(law), net.m), dtype=bool)
        for row, edges in enumerate(law):
            masks[row, list(edges)] = True
        marginal = weights @ masks
        worst = -math.inf
        violations = 0
        for size in (2, 3):
            for group in itertools.combinations(range(net.m), size):
                joint = float(weights @ masks[:, group].all(axis=1))
                excess = joint - float(np.prod(marginal[list(group)]))
                worst = max(worst, excess)
                violations += excess > 1e-12
        if worst == -math.inf:
            continue
        yield CheckResult(
            "association", "negative_association", subject,
            violations == 0, worst, 1e-12,
        )


def balance_suite(rng: RngStream, **_) -> Iterator[CheckResult]:
    """Almost-balanced checks on the generator families.

    Complete graphs pass; fifty pendant vertices on ``K_100`` break the
    typical-fraction condition; the leaves of the expander chain are atypical.
    The conditions are monotone in ``delta``.
    """
    n = 200
    complete = gen_complete(n, conductance=1.0 / (n - 1))
    report = balance_report(complete, gamma=0.5, K=4.0, delta=0.1)
    yield CheckResult(
        "balance", "complete_passes", "K_200", report.all_pass, report.frac_typical, 0.9
    )
    seed = int(rng.integers(0, 2**31))
    pendants = gen_regular_plus_pendants(gen_complete(100), m=50, f=2, seed=seed)
    report = balance_report(pendants, gamma=50.0, K=4.0, delta=0.1)
    yield CheckResult(
        "balance", "pendants_fail", "K_100+50x2", not report.passes[0],
        report.frac_typical, 0.9,
    )
    chain = gen_expander_chain_with_leaves(d=10, copies=5, leaves=20)
    report = balance_report(chain, gamma=10.0, K=2.0, delta=0.5)
    leaves_atypical = bool(np.all(~report.typical_mask[-20:]))
    yield CheckResult(
        "balance", "leaves_atypical", "chain(10,5,20)", leaves_atypical,
        report.frac_typical, 0.5,
    )
    _, max_edge, passes = edge_overlap_report(complete, gamma=0.5, delta=0.1)
    yield CheckResult(
        "balance", "edge_overlap_assumption", "K_200", all(passes), max_edge, 0.1
    )
    deltas = [0.05, 0.1, 0.2, 0.4, 0.8]
    flags = [balance_report(pendants, 50.0, 4.0, d).all_pass for d in deltas]
    monotone = all(not a or b for a, b in zip(flags, flags[1:]))
    yield CheckResult(
        "balance", "monotone_in_delta", "K_100+50x2", monotone,
        float(sum(flags)), float(len(deltas)),
    )


SUITES: dict[str, Callable[..., Iterator[CheckResult]]] = {
    "identities": identities_suite,
    "oracle": oracle_suite,
    "markov": markov_suite,
    "association": association_suite,
    "balance": balance_suite,
}


def verify(suite: str, seed: int = 0, **options) -> pl.DataFrame:
    """Run a suite (or ``"all"``) and tabulate the checks.

    Args:
        suite (str): One of :data:`SUITES` or ``"all"``.
        seed (int): Master seed; suite ``i`` in :data:`SUITES` order uses
            stream ``i``.
        **options: Size knobs such as ``samples``, ``networks``, ``max_n``.

    Returns:
        pl.DataFrame: Columns ``suite, check, subject, passed, value, tolerance``.

    Raises:
        UnknownSuiteError: If the suite does not exist.
    """
    if suite != "all" and suite not in SUITES:
        choices = [*SUITES, "all"]
        raise UnknownSuiteError(f"Unknown suite {suite!r}; choose from {choices}.")
    names = list(SUITES) if suite == "all" else [suite]
    rng = RngStream(seed)
    results = []
    for name in names:
        checks = list(SUITES[name](rng.child(list(SUITES).index(name)), **options))
        failed = sum(not c.passed for c in checks)
        log = logger.warning if failed else logger.info
        log("Suite %s: %d checks, %d failed", name, len(checks), failed)
        results += checks
    return pl.DataFrame(
        [asdict(c) for c in results],
        schema={
            "suite": pl.String,
            "check": pl.String,
            "subject": pl.String,
            "passed": pl.Boolean,
            "value": pl.Float64,
            "tolerance": pl.Float64,
        },
    )
