import pytest

from tailcausal.graph import Dag


@pytest.fixture
def diamond():
    """1 -> 2, 1 -> 3, 2 -> 4, 3 -> 4."""
    return Dag(4, [(1, 2), (1, 3), (2, 4), (3, 4)])


@pytest.fixture
def tree():
    """1 -> 2, 1 -> 3, 2 -> 4."""
    return Dag(4, [(1, 2), (1, 3), (2, 4)])


@pytest.fixture
def two_root():
    """1 -> 3, 2 -> 4, 3 -> 4 (nodes 1 and 2 are both sources)."""
    return Dag(4, [(1, 3), (2, 4), (3, 4)])


@pytest.fixture
def chain3():
    return Dag(3, [(1, 2), (2, 3)])
