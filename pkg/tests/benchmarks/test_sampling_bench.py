import pytest

from wstlab.environment import draw_environment
from wstlab.network import gen_complete
from wstlab.sampling import (
    aldous_broder_sample,
    kruskal_min,
    sequential_sample,
    wilson_sample,
)
from wstlab.walks import RngStream, TransitionTable


@pytest.fixture
def k100():
    return gen_complete(100)


@pytest.mark.benchmark(group="ust")
def test_wilson_sample(k100, benchmark):
    """Uniform spanning tree of K_100 by loop-erased walks."""
    table = TransitionTable(k100)
    rng = RngStream(0)
    benchmark(wilson_sample, k100, rng, table=table)


@pytest.mark.benchmark(group="ust")
def test_aldous_broder_sample(k100, benchmark):
    """Uniform spanning tree of K_100 by a covering walk."""
    rng = RngStream(0)
    benchmark(aldous_broder_sample, k100, rng)


@pytest.mark.benchmark(group="wst")
def test_wilson_sample_environment(k100, benchmark):
    """Weighted tree of a K_100 environment at beta = 10."""
    env = draw_environment(k100, 10.0, RngStream(1))
    rng = RngStream(2)
    benchmark(wilson_sample, k100, rng, log_conductance=env.log_conductance)


@pytest.mark.benchmark(group="wst")
def test_sequential_sample_environment(benchmark):
    """Chain-rule tree of a K_40 environment at beta = 1000."""
    net = gen_complete(40)
    env = draw_environment(net, 1000.0, RngStream(1))
    rng = RngStream(2)
    benchmark(sequential_sample, net, env.log_conductance, rng)


@pytest.mark.benchmark(group="mst")
def test_kruskal_min(benchmark):
    """Minimum spanning tree of K_300 under uniform labels."""
    net = gen_complete(300)
    labels = RngStream(3).random(net.m)
    benchmark(kruskal_min, net, labels)
