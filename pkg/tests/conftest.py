import numpy as np
import pytest

from gridfreq import ControllerSpec, PiacSingle
from gridfreq.data import case_path
from gridfreq.dispatch import Quadratic
from gridfreq.netmodel import Line, Network, Node, NodeKind, load_case, load_partition


@pytest.fixture
def two_node():
    """Minimal connected case: one machine, one frequency-dependent load."""
    return Network(
        nodes=(
            Node(1, NodeKind.MACHINE, inertia=1.0, droop=1.0, power=1.0,
                 has_controller=True, alpha=1.0),
            Node(2, NodeKind.FREQ, droop=1.0, power=-1.0),
        ),
        lines=(Line(1, 2, 5.0),),
    )


@pytest.fixture
def two_node_spec(two_node):
    return ControllerSpec(PiacSingle(10.0), {1: Quadratic(1.0)})


@pytest.fixture
def triangle():
    """Three machines in a ring with equal susceptance."""
    b = 2.0
    return Network(
        nodes=(
            Node(1, NodeKind.MACHINE, inertia=1.0, droop=1.0, power=0.5,
                 has_controller=True, alpha=1.0),
            Node(2, NodeKind.MACHINE, inertia=2.0, droop=1.0, power=-0.2,
                 has_controller=True, alpha=2.0),
            Node(3, NodeKind.MACHINE, inertia=1.5, droop=2.0, power=-0.3),
        ),
        lines=(Line(1, 2, b), Line(2, 3, b), Line(1, 3, b)),
    )


@pytest.fixture
def chain_with_passive():
    """Machine -- passive -- freq chain (exercises the per-step Newton solve)."""
    return Network(
        nodes=(
            Node(1, NodeKind.MACHINE, inertia=1.0, droop=1.0, power=0.6,
                 has_controller=True, alpha=1.0),
            Node(2, NodeKind.PASSIVE, power=-0.1),
            Node(3, NodeKind.FREQ, droop=1.0, power=-0.5),
        ),
        lines=(Line(1, 2, 4.0), Line(2, 3, 4.0)),
    )


@pytest.fixture(scope="session")
def ieee39():
    return load_case(case_path("ieee39"))


@pytest.fixture(scope="session")
def ieee39_partition():
    return load_partition(case_path("ieee39"))


@pytest.fixture(scope="session")
def ieee39_costs(ieee39):
    return {nd.id: Quadratic(nd.alpha) for nd in ieee39.nodes if nd.has_controller}


def rel_err(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-30)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
