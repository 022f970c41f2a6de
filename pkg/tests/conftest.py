"""Shared helpers: an independent recount oracle and tiny record builders."""

import numpy as np
import pytest

from mmsb_online import Dyad, DyadRecord, Hyperparams


def recount(state):
    """Rebuild all count tables from the assignment map alone."""
    k = state.hyper.K
    n = {}
    m1 = np.zeros((k, k), dtype=np.int64)
    m0 = np.zeros((k, k), dtype=np.int64)
    nodes = set()
    for dyad, assign, value, _ in state.assignments():
        g, h = assign
        for node, grp in ((dyad.initiator, g), (dyad.receiver, h)):
            row = n.setdefault(node, np.zeros(k, dtype=np.int64))
            row[grp] += 1
            nodes.add(node)
        (m1 if value else m0)[g, h] += 1
    return n, m1, m0, nodes


def assert_counts_consistent(state):
    n, m1, m0, nodes = recount(state)
    assert nodes == state.node_registry, "registry does not match assignment map"
    np.testing.assert_array_equal(state.block_link_counts, m1)
    np.testing.assert_array_equal(state.block_nonlink_counts, m0)
    for node in nodes:
        np.testing.assert_array_equal(state.role_counts(node), n[node])


def make_records(triples, interval=1):
    return [DyadRecord(Dyad(p, q), v, interval) for p, q, v in triples]


@pytest.fixture
def hyper2():
    return Hyperparams.symmetric(2, 0.1)


@pytest.fixture
def hyper3():
    return Hyperparams.symmetric(3, 0.1)
