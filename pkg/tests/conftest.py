import pytest

from wstlab.network import build_network, gen_complete


@pytest.fixture
def triangle():
    """Triangle with c(0,1)=1, c(1,2)=2, c(0,2)=3."""
    return build_network(3, [(0, 1, 1.0), (1, 2, 2.0), (0, 2, 3.0)])


@pytest.fixture
def k4():
    return gen_complete(4)


@pytest.fixture
def path3():
    """Unit path 0-1-2."""
    return build_network(3, [(0, 1, 1.0), (1, 2, 1.0)])


@pytest.fixture
def path4():
    return build_network(4, [(0, 1, 1.0), (1, 2, 1.0), (2, 3, 1.0)])


@pytest.fixture
def star5():
    """Star with center 0 and four leaves, conductances 1..4."""
    return build_network(5, [(0, j, float(j)) for j in range(1, 5)])


@pytest.fixture
def complete_graph():
    def make(n, conductance=1.0):
        return gen_complete(n, conductance)

    return make


@pytest.fixture
def k5():
    return gen_complete(5)
