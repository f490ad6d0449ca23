import itertools
import math

import numpy as np
import pytest

from fkslab.clusters import BoundarySpec
from fkslab.geometry import RegionSpec, build_region, plaquette, single_edge
from fkslab.oracle import (CapExceeded, Enumeration, FkParams, IsingEnumeration, edge_open,
                           fk_conditional_edge, fk_connection_probs, fk_edge_covariances,
                           fk_edge_marginals, fk_event_prob, fk_partition, ising_expectation,
                           sprinkled_connection_probs)

EDGE = single_edge()
PLAQ = plaquette()
LAM1 = build_region(RegionSpec.box(1, 2))


def test_single_edge_partition_functions():
    p, q = 0.3, 2.0
    assert math.isclose(fk_partition(EDGE, BoundarySpec.free(), FkParams(p, q)), p * q + (1 - p) * q * q)
    assert math.isclose(fk_partition(EDGE, BoundarySpec.wired(EDGE), FkParams(p, q)), q)


def test_single_edge_marginal():
    assert math.isclose(fk_edge_marginals(EDGE, BoundarySpec.free(), FkParams(0.5, 2))[0], 1 / 3)


def test_q_one_is_bernoulli():
    m = fk_edge_marginals(LAM1, BoundarySpec.free(), FkParams(0.37, 1.0))
    assert np.allclose(m, 0.37, atol=1e-12)


def test_extreme_p():
    assert np.allclose(fk_edge_marginals(PLAQ, BoundarySpec.free(), FkParams(0.0, 2)), 0)
    assert np.allclose(fk_edge_marginals(PLAQ, BoundarySpec.free(), FkParams(1.0, 2)), 1)


def _reference_partition(region, bc, p, q):
    """Plain-Python sum with a dictionary union-find."""
    blocks = [list(map(int, b)) for b in bc.blocks]
    inner = set(range(region.n_inner))
    total = 0.0
    edges = region.edges.tolist()
    for bits in itertools.product((0, 1), repeat=len(edges)):
        parent = {}

        def find(x):
            while parent.setdefault(x, x) != x:
                x = parent[x]
            return x

        def union(a, b):
            parent[find(a)] = find(b)

        for blk in blocks:
            for v in blk[1:]:
                union(blk[0], v)
        for (a, b), o in zip(edges, bits):
            find(a), find(b)
            if o:
                union(a, b)
        counted = {find(v) for v in inner} | {find(blk[0]) for blk in blocks}
        o = sum(bits)
        total += p ** o * (1 - p) ** (len(bits) - o) * q ** len(counted)
    return total


@pytest.mark.parametrize("region", [PLAQ, build_region(RegionSpec.box(0, 2)), single_edge()],
                         ids=["plaquette", "site", "edge"])
@pytest.mark.parametrize("q", [1.0, 1.5, 3.0])
def test_partition_matches_reference(region, q):
    for bc in (BoundarySpec.free(), BoundarySpec.wired(region)):
        got = fk_partition(region, bc, FkParams(0.4, q))
        assert math.isclose(got, _reference_partition(region, bc, 0.4, q), rel_tol=1e-12)


def test_caps_raise():
    big = build_region(RegionSpec.box(2, 2))
    with pytest.raises(CapExceeded):
        fk_partition(big, BoundarySpec.free(), FkParams(0.5))
    with pytest.raises(CapExceeded):
        IsingEnumeration(build_region(RegionSpec.box(2, 2)), np.zeros(20))


def test_connection_probabilities_on_edge():
    free = fk_connection_probs(EDGE, BoundarySpec.free(), FkParams(0.5, 2), [(0, 1)])
    assert math.isclose(free[0], 1 / 3)
    wired = fk_connection_probs(EDGE, BoundarySpec.wired(EDGE), FkParams(0.5, 2), [(0, 1)])
    assert math.isclose(wired[0], 1.0)


def test_event_prob_matches_marginal():
    bc = BoundarySpec.wired(PLAQ)
    m = fk_edge_marginals(PLAQ, bc, FkParams(0.6, 2))
    assert math.isclose(fk_event_prob(PLAQ, bc, FkParams(0.6, 2), edge_open(2)), m[2], rel_tol=1e-12)


def test_conditional_given_closed_path():
    # on the plaquette, closing three edges leaves the fourth a free-merging edge
    p, q = 0.5, 2.0
    got = fk_conditional_edge(PLAQ, BoundarySpec.free(), FkParams(p, q), 0, {1: 0, 2: 0, 3: 0})
    assert math.isclose(got, p / (p + q * (1 - p)))
    got = fk_conditional_edge(PLAQ, BoundarySpec.free(), FkParams(p, q), 0, {1: 1, 2: 1, 3: 1})
    assert math.isclose(got, p)


def test_fkg_on_plaquette():
    for bc in (BoundarySpec.free(), BoundarySpec.wired(PLAQ)):
        _, cov = fk_edge_covariances(PLAQ, bc, FkParams(0.45, 2.5))
        assert cov.min() >= -1e-15


def test_revealed_edges_validated():
    with pytest.raises(ValueError):
        Enumeration(PLAQ, revealed={0: 2})


def test_sprinkled_limits():
    pairs = [(0, 3)]
    base = fk_connection_probs(PLAQ, BoundarySpec.free(), FkParams(0.3, 2), pairs)
    assert np.allclose(sprinkled_connection_probs(PLAQ, BoundarySpec.free(), FkParams(0.3, 2), 0.0, pairs), base)
    assert np.allclose(sprinkled_connection_probs(PLAQ, BoundarySpec.free(), FkParams(0.3, 2), 1.0, pairs), 1.0)


def test_ising_two_spin_partition():
    r = single_edge()
    e = IsingEnumeration(r, np.zeros(0))
    beta = 0.7
    assert math.isclose(e.log_partition(beta), math.log(2 * math.exp(beta) + 2 * math.exp(-beta)))
    assert math.isclose(e.expectation(beta, (0, 1)), math.tanh(beta))


def test_ising_plus_field_magnetisation_positive():
    r = build_region(RegionSpec.box(1, 2))
    assert ising_expectation(r, 0.3, np.ones(r.n_ghost), (4,)) > 0
    assert math.isclose(ising_expectation(r, 0.3, np.zeros(r.n_ghost), (4,)), 0.0, abs_tol=1e-14)
