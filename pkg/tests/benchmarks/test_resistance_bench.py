import pytest

from wstlab.environment import draw_environment
from wstlab.network import gen_complete
from wstlab.resistance import (
    ResistanceSolver,
    kirchhoff_probabilities,
    log_domain_edge_probabilities,
)
from wstlab.verify import random_network
from wstlab.walks import RngStream


@pytest.fixture
def k200():
    return gen_complete(200)


@pytest.fixture
def sparse_network():
    return random_network(1500, RngStream(0), extra_p=0.002)


@pytest.mark.benchmark(group="kirchhoff")
def test_kirchhoff_probabilities_dense(k200, benchmark):
    """Kirchhoff probabilities of K_200 through a dense factorization."""
    benchmark(lambda: kirchhoff_probabilities(ResistanceSolver(k200, mode="dense")))


@pytest.mark.benchmark(group="kirchhoff_sparse")
def test_kirchhoff_probabilities_dense_sparse_network(sparse_network, benchmark):
    """Kirchhoff probabilities of a sparse random network, dense solver."""
    benchmark(
        lambda: kirchhoff_probabilities(ResistanceSolver(sparse_network, mode="dense"))
    )


@pytest.mark.benchmark(group="kirchhoff_sparse")
def test_kirchhoff_probabilities_iterative_sparse_network(sparse_network, benchmark):
    """Kirchhoff probabilities of a sparse random network, sparse LU solver."""
    benchmark(
        lambda: kirchhoff_probabilities(
            ResistanceSolver(sparse_network, mode="iterative")
        )
    )


@pytest.mark.benchmark(group="log_domain")
@pytest.mark.parametrize("beta", [10.0, 5000.0])
def test_log_domain_edge_probabilities(beta, benchmark):
    """Edge probabilities of a K_60 environment, direct and banded."""
    net = gen_complete(60)
    env = draw_environment(net, beta, RngStream(1))
    benchmark(log_domain_edge_probabilities, net, env.log_conductance)
