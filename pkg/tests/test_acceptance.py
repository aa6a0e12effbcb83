"""Acceptance-scale statistical checks, run by the nox acceptance session."""
import math

import pytest

from wstlab.config import ExperimentConfig
from wstlab.environment import draw_environment, sample_environment_tree
from wstlab.experiments import (
    ZETA3,
    census_compare,
    component_count_integral,
    length_sweep,
    overlap_sweep,
    small_beta_formula,
    total_length,
)
from wstlab.localstat import census, theorem_sum
from wstlab.network import gen_complete
from wstlab.patterns import path, star
from wstlab.resistance import FOSTER_TOL, ResistanceSolver, foster_sum
from wstlab.sampling import kruskal_min, max_st, wilson_sample
from wstlab.verify import random_network, verify
from wstlab.walks import RngStream, TransitionTable

pytestmark = pytest.mark.slow


def test_sampler_oracle_on_five_vertex_graphs():
    table = verify("oracle", seed=0, samples=1_000_000, max_n=5, assignments=5)
    failed = table.filter(~table["passed"])
    assert failed.height == 0, failed


def test_property_suites():
    for suite, options in [
        ("association", {"max_n": 4}),
        ("markov", {"max_n": 5, "samples": 20_000}),
        ("identities", {"networks": 100}),
    ]:
        table = verify(suite, seed=1, **options)
        failed = table.filter(~table["passed"])
        assert failed.height == 0, failed


@pytest.mark.parametrize("n", [500, 2000])
def test_foster_identity_dense(n):
    net = random_network(n, RngStream(n), extra_p=0.005)
    gap = abs(foster_sum(ResistanceSolver(net, mode="dense")) - (n - 1))
    assert gap <= FOSTER_TOL * (n - 1)


def test_mst_length_tends_to_zeta3():
    net = gen_complete(300)
    rng = RngStream(3)
    lengths = []
    for i in range(200):
        labels = rng.child(i).random(net.m)
        lengths.append(total_length(kruskal_min(net, labels), labels))
    assert abs(math.fsum(lengths) / len(lengths) - ZETA3) < 0.05


def test_small_beta_length_formula():
    config = ExperimentConfig(
        graph="complete:n=1000", betas=(5.0,), replicas=200, seed=5
    )
    (row,) = length_sweep(config)
    target = small_beta_formula(1000, 5.0)
    assert abs(row.estimate - target) <= 0.05 * target


def test_uniform_length_is_half_per_edge():
    config = ExperimentConfig(
        graph="complete:n=200", betas=(0.0,), replicas=50, seed=6
    )
    (row,) = length_sweep(config)
    assert abs(row.estimate - 199 / 2) < 4 * row.stderr + 0.5


@pytest.mark.parametrize("frozen", [False, True])
def test_local_law_on_k2000(frozen):
    """Radius-one stars follow exp(-1)/(j-1)! for the UST and at beta = sqrt(n)."""
    n = 2000
    net = gen_complete(n)
    if frozen:
        beta = math.sqrt(n)

        def sampler(net, rng):
            env = draw_environment(net, beta, rng.child(0))
            return sample_environment_tree(net, env, rng.child(1))

    else:
        table = TransitionTable(net)

        def sampler(net, rng):
            return wilson_sample(net, rng, table=table)

    result = census(net, sampler, 1, 200, RngStream(7), roots_per_tree=500)
    probabilities = result.probabilities()
    for j in (1, 2, 3):
        expected = math.exp(-1) / math.factorial(j - 1)
        observed = probabilities.get(star(j), 0.0)
        assert abs(observed - expected) <= 0.01
        if not frozen:
            tuple_sum = theorem_sum(
                net,
                star(j),
                1000.0,
                4.0,
                mode="monte_carlo",
                rng=RngStream(11 + j),
                samples=100_000,
            )
            assert abs(tuple_sum.estimate - observed) <= 0.02


def test_mst_agreement_regime():
    n = 200
    config = ExperimentConfig(
        graph=f"complete:n={n}", betas=(2e6,), replicas=5, seed=8
    )
    (row,) = overlap_sweep(config)
    assert row.estimate >= 0.95 * (n - 1)
    report = census_compare(config.override(replicas=100, roots_per_tree=500))
    assert report.rows[0].extras["tv_mst"] <= 0.03


def test_length_identity_and_maxst_invariance():
    net = gen_complete(8)
    rng = RngStream(9)
    for i in range(10_000):
        stream = rng.child(i)
        labels = stream.random(net.m)
        tree = wilson_sample(net, stream.child(0))
        integral = component_count_integral(tree, labels)
        assert abs(integral - total_length(tree, labels)) <= 1e-12
        if i < 1000:
            env = draw_environment(net, 1.0 + i, stream.child(1))
            heaviest = max_st(net, env.log_conductance)
            assert heaviest.edges == kruskal_min(net, env.label).edges


@pytest.mark.parametrize("pattern", [star(1), star(2), path(2)])
def test_theorem_sum_modes_agree(pattern):
    net = gen_complete(20)
    exact = theorem_sum(net, pattern, gamma=9.5, K=4.0)
    estimate = theorem_sum(
        net,
        pattern,
        9.5,
        4.0,
        mode="monte_carlo",
        rng=RngStream(10),
        samples=100_000,
    )
    assert abs(estimate.estimate - exact.estimate) <= 3 * estimate.stderr + 1e-12
