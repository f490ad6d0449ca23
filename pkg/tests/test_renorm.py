from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fkslab.events import unique_event
from fkslab.geometry import RegionSpec, build_region
from fkslab.renorm import (RenormField, eta_field, eta_statistics, gamma_flip_violations,
                           origin_cluster, renorm_n, renorm_pipeline, renorm_sites,
                           site_connectivity, witness_violations)

SLAB = build_region(RegionSpec.slab(8, 12, 3))


def test_site_positions():
    sites = renorm_sites(80, 100, Fraction(1, 2))
    n = renorm_n(80, 100, Fraction(1, 2))
    assert n == 4
    assert sites[1 + n, -2 + n].tolist() == [0, 5, -10]


@given(L=st.integers(8, 64), extra=st.integers(1, 64), den=st.sampled_from([1, 2, 4, 8]))
def test_sites_keep_their_boxes_inside(L, extra, den):
    delta = Fraction(1, den)
    N = L + extra
    if renorm_n(L, N, delta) < 1:
        with pytest.raises(ValueError):
            renorm_sites(L, N, delta)
        return
    sites = renorm_sites(L, N, delta)
    assert np.abs(sites).max() + L <= N


def test_constant_configurations():
    ones = np.ones(SLAB.n_edges, np.uint8)
    zeros = np.zeros(SLAB.n_edges, np.uint8)
    assert eta_field(ones, zeros, SLAB, 8, 12, 1).values.all()
    assert not eta_field(zeros, ones, SLAB, 8, 12, 1).values.any()


def test_each_site_matches_the_event_at_its_centre():
    rng = np.random.default_rng(4)
    w = (rng.random(SLAB.n_edges) < 0.45).astype(np.uint8)
    g = (rng.random(SLAB.n_edges) < 0.05).astype(np.uint8)
    fld = eta_field(w, g, SLAB, 8, 12, 1)
    sites = renorm_sites(8, 12, 1)
    for u in [(0, 0), (4, -4), (-3, 2), (1, 4)]:
        x = sites[u[0] + fld.n, u[1] + fld.n]
        assert fld[u] == unique_event(w, g, SLAB, 8, center=x)


def test_witness_and_flip_checks_on_random_samples():
    rng = np.random.default_rng(9)
    for _ in range(3):
        w = (rng.random(SLAB.n_edges) < 0.42).astype(np.uint8)
        g = (rng.random(SLAB.n_edges) < 0.05).astype(np.uint8)
        fld = eta_field(w, g, SLAB, 8, 12, 1)
        assert witness_violations(fld, w, g, SLAB, 8, 12, 1) == 0
        assert gamma_flip_violations(w, g, SLAB, 8, 12, 1, rng, 5) == 0


def _field(rows):
    a = np.array(rows, np.uint8)
    return RenormField((a.shape[0] - 1) // 2, a)


def test_site_connectivity_examples():
    f = _field([[1, 1, 1], [0, 0, 1], [1, 0, 1]])
    assert site_connectivity(f, (-1, -1), (1, 1))
    assert not site_connectivity(f, (-1, -1), (1, -1))
    assert not site_connectivity(f, (0, 0), (0, 0))
    assert not origin_cluster(f).any()
    with pytest.raises(ValueError):
        site_connectivity(f, (2, 0), (0, 0))
    with pytest.raises(ValueError):
        RenormField(2, np.zeros((3, 3)))


def test_origin_cluster_mask():
    f = _field([[0, 1, 0], [0, 1, 1], [1, 0, 0]])
    assert origin_cluster(f).sum() == 3


def test_run_length_encoding():
    f = _field([[1, 1, 0], [0, 0, 0], [1, 0, 1]])
    assert f.rle() == [1, 2, 0, 4, 1, 1, 0, 1, 1, 1]


def test_statistics_on_constant_fields():
    ones = [_field(np.ones((9, 9))) for _ in range(30)]
    rep = eta_statistics(ones, k=2)
    assert rep["mean_density"] == 1.0 and rep["alpha_hat"] == 1.0 and rep["classes_used"] == 1
    with pytest.raises(ValueError):
        eta_statistics(ones, k=5)
    with pytest.raises(ValueError):
        eta_statistics([])


def test_statistics_on_independent_sites():
    rng = np.random.default_rng(1)
    fields = [_field((rng.random((11, 11)) < 0.7)) for _ in range(400)]
    rep = eta_statistics(fields, k=3, probes="axes", min_count=100)
    assert abs(rep["mean_density"] - 0.7) < 0.02
    assert rep["alpha_hat"] > 0.55


def test_pipeline_extremes():
    dense = renorm_pipeline(8, 12, 1.0, 0.0, 1, samples=3, burn_in=1, thin=1)
    assert dense["eta_density"][0] == 1.0 and dense["witness_violations"] == 0
    assert all(m == 1.0 for _, m, _ in dense["direct"])
    empty = renorm_pipeline(8, 12, 0.0, 1.0, 1, samples=3, burn_in=1, thin=1)
    assert empty["eta_density"][0] == 0.0
    assert all(m == 1.0 for _, m, _ in empty["direct"]) and empty["full_box_open"] == 1.0
