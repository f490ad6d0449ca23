"""End-to-end acceptance checks, one test per criterion.

Each test carries a ``criterion`` marker; conftest prints a PASS/FAIL line per
criterion at the end of the session. Seeds are fixed up front and never tuned.
"""
import csv
import io
import itertools
import math
import time

import numpy as np
import pytest

from fkslab.clusters import BoundarySpec
from fkslab.events import SamplerSpec, sample_observable
from fkslab.geometry import RegionSpec, build_region, plaquette, region_from_vertices, single_edge
from fkslab.harness import run
from fkslab.ising import (beta_to_p, boundary_field, ginibre_gap, surface_tension_derivative_check)
from fkslab.oracle import (Enumeration, FkParams, IsingEnumeration, fk_connection_probs,
                           fk_edge_covariances, fk_edge_marginals)
from fkslab.renorm import gamma_flip_violations, renorm_pipeline
from fkslab.rng import stream
from fkslab.sampler import SequentialConditionals, sequential_coupling

SEED = 20261019
LAM1 = build_region(RegionSpec.box(1, 2))

pytestmark = pytest.mark.acceptance


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def _close(a, sa, b, sb=0.0, k=3.0):
    return abs(a - b) <= k * math.hypot(sa, sb)


@pytest.fixture(scope="module")
def out(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


def _run(cfg, out, chains=1):
    rec = run(dict(cfg, chains=chains, output=str(out), plot=False))
    return rec.csv


# --- shared runs ---------------------------------------------------------------

GRID2 = [(bc, q, p) for bc in ("free", "wired") for q in (1.0, 1.5, 2.0) for p in (0.3, 0.6)]


def config2(bc, q, p, kernel="heat-bath"):
    return dict(subcommand="estimate", region="box", N=1, d=2, bc=bc, q=q, p=p, kernel=kernel,
                samples=100_000, segments=4, burn_in=1000, thin=5, batches=100, targets=[[1, 1]], seed=SEED)


@pytest.fixture(scope="module")
def runs2(out):
    t0 = time.perf_counter()
    csvs = {key: _run(config2(*key), out) for key in GRID2}
    return csvs, time.perf_counter() - t0


def configs9():
    surf = [dict(subcommand="sweep", base="surface", kind="free", axis="p", values=[0.45, 0.55, 0.65], L=L, d=3,
                 delta=0.5, C=1, q=2.0, samples=4000, segments=4, burn_in=500, thin=2, seed=SEED)
            for L in (4, 6, 8)]
    mix = dict(subcommand="sweep", base="mixing", axis="K", values=[2, 4, 6, 8], s=0.5, p=0.65, d=3, q=2.0,
               samples=20000, segments=4, burn_in=500, thin=2, seed=SEED)
    return surf + [mix]


@pytest.fixture(scope="module")
def runs9(out):
    t0 = time.perf_counter()
    csvs = [_run(c, out) for c in configs9()]
    return csvs, time.perf_counter() - t0


CONFIG10 = dict(subcommand="sweep", base="unique", axis="eps", values=[0.0, 0.01, 0.05], L=32, delta=0.5, d=3,
                p=0.65, q=2.0, samples=400, segments=4, burn_in=200, thin=5, seed=SEED)


@pytest.fixture(scope="module")
def runs10(out):
    return _run(CONFIG10, out)


# --- 1 -------------------------------------------------------------------------


@pytest.mark.criterion(1, "single-edge marginals exact")
def test_criterion_01_single_edge_oracle():
    t0 = time.perf_counter()
    edge = single_edge()
    worst = 0.0
    for p, q in itertools.product((0.1, 0.5, 0.9), (1.0, 2.0, 4.0)):
        wired = fk_edge_marginals(edge, BoundarySpec.wired(edge), FkParams(p, q))[0]
        free = fk_edge_marginals(edge, BoundarySpec.free(), FkParams(p, q))[0]
        worst = max(worst, abs(wired - p), abs(free - p / (p + q * (1 - p))))
    wall = time.perf_counter() - t0
    print(f"max deviation {worst:.2e}, {wall:.3f} s")
    assert worst <= 1e-12
    assert wall < 1.0


# --- 2 -------------------------------------------------------------------------


def _check_against_oracle(csv_text, bc_name, q, p):
    bc = BoundarySpec.wired(LAM1) if bc_name == "wired" else BoundarySpec.free()
    params = FkParams(p, q)
    marg = fk_edge_marginals(LAM1, bc, params)
    corner = fk_connection_probs(LAM1, bc, params, [(LAM1.index((0, 0)), LAM1.index((1, 1)))])[0]
    bad = []
    for row in _rows(csv_text):
        name = row["experiment"]
        exact = marg[int(name.split(":")[1])] if name.startswith("edge:") else corner
        est, se = float(row["estimate"]), float(row["stderr"])
        if not _close(est, se, exact):
            bad.append((bc_name, q, p, name, est, se, exact, (est - exact) / se))
    return bad, len(_rows(csv_text))


@pytest.mark.criterion(2, "heat-bath matches exact marginals and connection")
def test_criterion_02_sampler_vs_oracle(runs2):
    csvs, wall = runs2
    bad, total = [], 0
    for key, text in csvs.items():
        b, n = _check_against_oracle(text, *key)
        bad += b
        total += n
    print(f"{total} comparisons, {len(bad)} outside 3 se, {wall:.0f} s")
    for b in bad:
        print("  outside:", b)
    assert total == 12 * 25
    assert wall < 600
    assert not bad


# --- 3 -------------------------------------------------------------------------


@pytest.mark.criterion(3, "Swendsen-Wang agrees with heat bath")
def test_criterion_03_sw_vs_heat_bath(runs2, out):
    hb, _ = runs2
    bad, total = [], 0
    for bc, q, p in GRID2:
        if q != 2.0:
            continue
        sw = _rows(_run(config2(bc, q, p, kernel="sw"), out))
        for a, b in zip(_rows(hb[(bc, q, p)]), sw):
            assert a["experiment"] == b["experiment"]
            total += 1
            ea, sa, eb, sb = (float(a["estimate"]), float(a["stderr"]), float(b["estimate"]), float(b["stderr"]))
            if not _close(ea, sa, eb, sb):
                bad.append((bc, p, a["experiment"], ea, eb, (ea - eb) / math.hypot(sa, sb)))
    print(f"{total} comparisons, {len(bad)} outside 3 sigma")
    for b in bad:
        print("  outside:", b)
    assert not bad


# --- 4 -------------------------------------------------------------------------


@pytest.mark.criterion(4, "Russo derivative identity on the plaquette")
def test_criterion_04_russo():
    plaq = plaquette()
    worst_rel, worst_floor = 0.0, math.inf
    for bc in (BoundarySpec.free(), BoundarySpec.wired(plaq)):
        enum = Enumeration(plaq, bc)
        for q in (1.0, 1.5, 2.0, 4.0):
            for p in (0.1, 0.3, 0.5, 0.7, 0.9):
                h = 1e-5
                up = fk_edge_marginals(plaq, bc, FkParams(p + h, q), enum)
                dn = fk_edge_marginals(plaq, bc, FkParams(p - h, q), enum)
                fd = (up - dn) / (2 * h)
                _, cov = fk_edge_covariances(plaq, bc, FkParams(p, q), enum)
                russo = cov.sum(axis=0) / (p * (1 - p))
                worst_rel = max(worst_rel, float(np.max(np.abs(fd - russo) / np.abs(russo))))
                worst_floor = min(worst_floor, float(np.min(russo - 1 / q)))
    print(f"max relative gap {worst_rel:.2e}, min derivative - 1/q {worst_floor:.3e}")
    assert worst_rel <= 1e-6
    assert worst_floor >= -1e-9


# --- 5 -------------------------------------------------------------------------


def _partitions(items):
    if not items:
        yield []
        return
    head, rest = items[0], items[1:]
    for part in _partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[head] + part[i]] + part[i + 1:]
        yield [[head]] + part


def _refines(fine, coarse):
    return all(any(set(b) <= set(c) for c in coarse) for b in fine)


@pytest.mark.criterion(5, "boundary-gap inequality and monotone coupling")
def test_criterion_05_boundary_gap_and_coupling():
    plaq = plaquette()
    parts = list(_partitions(list(range(plaq.n_vertices))))
    assert len(parts) == 15
    bcs = [BoundarySpec(tuple(np.array(b) for b in part if len(b) > 1)) for part in parts]
    grid = (0.1, 0.3, 0.5, 0.7, 0.9)
    qs = (1.0, 1.5, 2.0, 3.0)
    marg = {(i, p, q): fk_edge_marginals(plaq, bcs[i], FkParams(p, q))
            for i in range(len(parts)) for p in grid for q in qs}
    worst, checks = math.inf, 0
    for i, j in itertools.product(range(len(parts)), repeat=2):
        if not _refines(parts[i], parts[j]):
            continue
        for (p, pp), q in itertools.product(itertools.combinations(grid, 2), qs):
            gap = marg[(j, pp, q)] - marg[(i, p, q)] - (pp - p) / q
            worst = min(worst, float(gap.min()))
            checks += len(gap)
    print(f"{checks} exact checks, min slack {worst:.3e}")
    assert worst >= -1e-12

    violations = 0
    cases = [(BoundarySpec.free(), 0.3, 0.6, 2.0), (bcs[3], 0.5, 0.55, 1.5), (BoundarySpec.wired(plaq), 0.2, 0.9, 4.0)]
    for bc, p, pp, q in cases:
        cond = (SequentialConditionals(plaq, bc, FkParams(p, q)), SequentialConditionals(plaq, bc, FkParams(pp, q)))
        for seed in range(10_000):
            lo, hi = sequential_coupling(plaq, p, pp, seed, q=q, bc=bc, conditionals=cond)
            violations += int(np.any(lo > hi))
    print(f"coupling: {len(cases)} x 10^4 seeds, {violations} violations")
    assert violations == 0


# --- 6 -------------------------------------------------------------------------


@pytest.mark.criterion(6, "Ginibre inequality on 2x2 systems")
def test_criterion_06_ginibre():
    block = region_from_vertices([(0, 0), (1, 0), (0, 1), (1, 1)], d=2)
    sets = [(i,) for i in range(4)] + list(itertools.combinations(range(4), 2))
    rng = stream(SEED, "ginibre")
    worst = math.inf
    for _ in range(20):
        eta_p = rng.uniform(0, 2, block.n_ghost)
        eta = eta_p * rng.uniform(-1, 1, block.n_ghost)
        for beta in (0.2, 0.5, 1.0):
            for A, B in itertools.product(sets, repeat=2):
                worst = min(worst, ginibre_gap(block, beta, eta, eta_p, A, B))
    print(f"min slack {worst:.3e}")
    assert worst >= -1e-12


# --- 7 -------------------------------------------------------------------------


@pytest.mark.criterion(7, "surface-tension derivative identity")
def test_criterion_07_derivative_identity():
    for beta in (0.2, 0.4, 0.8):
        rep = surface_tension_derivative_check(1, 1, beta)
        print(f"beta={beta}: gap {rep['gap']:.2e}, min summand {rep['min_summand']:.3e}")
        assert rep["gap"] <= 1e-6
        assert rep["min_summand"] >= -1e-12


# --- 8 -------------------------------------------------------------------------


@pytest.mark.criterion(8, "Edwards-Sokal correlation identity")
def test_criterion_08_edwards_sokal():
    regions = [LAM1, build_region(RegionSpec.halfbox(1, 2)), build_region(RegionSpec.box(0, 3)),
               region_from_vertices([(0, 0), (1, 0), (0, 1), (1, 1)], d=2)]
    worst = 0.0
    for reg in regions:
        n = reg.n_inner
        pairs = list(itertools.combinations(range(n), 2)) + [(x, n) for x in range(n)]
        for beta in (0.1, 0.44, 1.0):
            spins = IsingEnumeration(reg, boundary_field(reg, "+"))
            fk = fk_connection_probs(reg, BoundarySpec.wired(reg), FkParams(beta_to_p(beta), 2.0), pairs)
            corr = [spins.expectation(beta, (a, b) if b < n else (a,)) for a, b in pairs]
            worst = max(worst, float(np.max(np.abs(fk - corr))))
    print(f"max deviation {worst:.2e}")
    assert worst <= 1e-12


# --- 9 -------------------------------------------------------------------------


@pytest.mark.criterion(9, "monotone trends at desk scale")
def test_criterion_09_trends(runs9):
    csvs, wall = runs9
    problems = []
    for text, L in zip(csvs[:3], (4, 6, 8)):
        rows = _rows(text)
        assert [float(r["p"]) for r in rows] == [0.45, 0.55, 0.65]
        for a, b in zip(rows, rows[1:]):
            ea, sa, eb, sb = (float(a["estimate"]), float(a["stderr"]), float(b["estimate"]), float(b["stderr"]))
            if eb - ea > 3 * math.hypot(sa, sb):
                problems.append(f"L={L}: disconnection rises from p={a['p']} to p={b['p']}")
        last = rows[-1]
        tau, tau_se = float(last["derived_value"]), float(last["derived_stderr"])
        print(f"L={L}: prob {[r['estimate'] for r in rows]}, tau at p=0.65 {tau:.4g} +- {tau_se:.2g} "
              f"[{last['flag'] or 'estimate'}]")
        if not tau - 2 * tau_se > 0:
            problems.append(f"L={L}: tau not positive")
    mix = _rows(csvs[3])
    gaps = [(int(r["K"]), float(r["estimate"]), float(r["stderr"])) for r in mix]
    print("mixing gaps:", gaps)
    for (K1, g1, s1), (K2, g2, s2) in zip(gaps, gaps[1:]):
        if g2 - g1 > 3 * math.hypot(s1, s2):
            problems.append(f"mixing gap rises from K={K1} to K={K2}")
    print(f"wall {wall:.0f} s")
    assert wall <= 7200
    assert not problems, problems


# --- 10 ------------------------------------------------------------------------


@pytest.mark.criterion(10, "sprinkling behaviour of Unique and U_i")
def test_criterion_10_sprinkling(runs10):
    rows = _rows(runs10)
    by = {(r["experiment"], float(r["eps"])): (float(r["estimate"]), float(r["stderr"])) for r in rows}
    eps = CONFIG10["values"]
    for name in ("unique", "u_final_one", "u_monotone"):
        print(name, [by[(name, e)] for e in eps])
    problems = []
    for a, b in zip(eps, eps[1:]):
        (ma, sa), (mb, sb) = by[("unique", a)], by[("unique", b)]
        if ma - mb > 3 * math.hypot(sa, sb):
            problems.append(f"Unique frequency drops from eps={a} to eps={b}")
    for e in eps:
        if by[("u_monotone", e)][0] != 1.0:
            problems.append(f"U sequence increased on some sample at eps={e}")
    (m0, s0), (m5, s5) = by[("u_final_one", 0.0)], by[("u_final_one", 0.05)]
    lift = m5 - m0
    print(f"final U = 1 lift {lift:.4f} against 3 sigma = {3 * math.hypot(s0, s5):.4f}")
    if not lift > 3 * math.hypot(s0, s5):
        problems.append(f"final U = 1 frequency does not rise by more than 3 sigma ({m0} -> {m5})")
    assert not problems, problems


# --- 11 ------------------------------------------------------------------------


@pytest.mark.criterion(11, "renormalization witness and gamma monotonicity")
def test_criterion_11_renormalization():
    rep = renorm_pipeline(8, 32, 0.42, 0.05, 1, samples=1000, seed=SEED, d=3, segments=4, burn_in=500, thin=5)
    print(f"eta density {rep['eta_density'][0]:.3f}, origin cluster {rep['eta_origin_cluster'][0]:.3f}, "
          f"witness violations {rep['witness_violations']} over {rep['samples']} samples, "
          f"{rep['wall_seconds']:.0f} s")
    assert rep["samples"] == 1000
    assert rep["witness_violations"] == 0

    region = build_region(RegionSpec.slab(8, 32, 3))
    rng = stream(SEED, "flips")
    spec = SamplerSpec(region, BoundarySpec.free(), 0.42, 2.0, 0.05, burn_in=500, thin=5)
    obs = lambda w, g: float(gamma_flip_violations(w, g, region, 8, 32, 1, rng, 10))
    segs = sample_observable(obs, spec, 100, SEED, ("flips",), segments=1, chains=1)
    flips = 100 * 10
    bad = int(np.concatenate(segs).sum())
    print(f"{flips} single-edge gamma flips, {bad} sites lost")
    assert bad == 0


# --- 12 ------------------------------------------------------------------------


@pytest.mark.criterion(12, "byte-identical CSV across worker counts")
def test_criterion_12_determinism(runs2, runs9, runs10, out):
    mismatched = []
    for key in GRID2:
        if _run(config2(*key), out, chains=3) != runs2[0][key]:
            mismatched.append(("sampler", key))
    for cfg, text in zip(configs9(), runs9[0]):
        if _run(cfg, out, chains=3) != text:
            mismatched.append(("trends", cfg.get("L"), cfg["base"]))
    if _run(CONFIG10, out, chains=3) != runs10:
        mismatched.append(("sprinkling",))
    print(f"{len(GRID2) + len(configs9()) + 1} reruns with 3 workers, {len(mismatched)} differ")
    assert not mismatched, mismatched
