"""Ising measures with boundary fields and their FK-side estimators."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .clusters import BoundarySpec, graph_for
from .events import SamplerSpec, estimate_many, params_record
from .geometry import Region, RegionSpec, build_region
from .oracle import IsingEnumeration
from .rng import stream
from .stats import EstimatorResult, rate_result


def beta_to_p(beta):
    """FK-Ising edge parameter p = 1 - exp(-2 beta)."""
    if not beta >= 0 or math.isinf(beta):
        raise ValueError("beta must be finite and >= 0")
    return -math.expm1(-2.0 * beta)


def p_to_beta(p):
    if not 0.0 <= p < 1.0:
        raise ValueError("p must lie in [0, 1); p = 1 has no finite beta")
    return -0.5 * math.log1p(-p)


def field_strength_for(s, p, beta):
    """Bottom field h whose FK intensity 1 - exp(-2 beta h) equals s p."""
    return -0.5 * math.log1p(-s * p) / beta


@dataclass(frozen=True, eq=False)
class IsingParams:
    beta: float
    eta: np.ndarray

    def __post_init__(self):
        if not (self.beta >= 0 and math.isfinite(self.beta)):
            raise ValueError("beta must be finite and >= 0")
        eta = np.asarray(self.eta, dtype=np.float64)
        if not np.all(np.isfinite(eta)):
            raise ValueError("boundary field must be finite")
        object.__setattr__(self, "eta", eta)


def boundary_field(region: Region, preset: str, h=None):
    """Named boundary fields.

    ``+`` is 1 everywhere, ``0`` is 0 everywhere, ``pm`` (or ``±``) is 1 on
    ghosts with last coordinate >= 0 and -1 below, and ``h,+`` / ``h,0`` put
    ``h`` on the bottom ghost layer of a half-box with 1 / 0 on the rest.
    """
    n = region.n_ghost
    if preset == "+":
        return np.ones(n)
    if preset == "0":
        return np.zeros(n)
    if preset in ("pm", "±"):
        return np.where(region.ghosts[:, -1] >= 0, 1.0, -1.0)
    if preset in ("h,+", "h,0"):
        if h is None:
            raise ValueError(f"preset {preset!r} needs a bottom field h")
        bottom = region.ghosts[:, -1] == -1
        rest = 1.0 if preset == "h,+" else 0.0
        return np.where(bottom, float(h), rest)
    raise ValueError(f"unknown boundary field preset {preset!r}")


def _spin_neighbors(region: Region):
    cached = getattr(region, "_spin_nbrs", None)
    if cached is None:
        nbr, _ = region.neighbor_table
        nbr = nbr[: region.n_inner]
        n = region.n_inner
        site = np.where((nbr >= 0) & (nbr < n), nbr, -1)
        ghost = np.where(nbr >= n, nbr - n, -1)
        cached = (np.ascontiguousarray(site), np.ascontiguousarray(ghost))
        object.__setattr__(region, "_spin_nbrs", cached)
    return cached


def ising_heat_bath_sweep(spins, region: Region, beta, eta, rng):
    """Resample every site from exp(beta s m)/(2 cosh(beta m)), m the local field."""
    site, ghost = _spin_neighbors(region)
    u = rng.random(region.n_inner)
    kernels.ising_heat_bath_sweep(spins, site, ghost, np.asarray(eta, dtype=np.float64), float(beta), u)
    return spins


def ising_chain(region, beta, eta, n_samples, seed, *key, burn_in=1000, thin=1, init=1):
    rng = stream(seed, "ising", *key)
    spins = np.full(region.n_inner, init, dtype=np.int8)
    for _ in range(burn_in):
        ising_heat_bath_sweep(spins, region, beta, eta, rng)
    for _ in range(n_samples):
        for _ in range(thin):
            ising_heat_bath_sweep(spins, region, beta, eta, rng)
        yield spins


# --- surface tension -------------------------------------------------------


def _ghost_sides(region):
    plus = region.faces["plus"]
    minus = region.faces["minus"]
    return plus, minus


def wired_surface_tension_estimate(L, M, p, samples=1000, seed=0, d=2, segments=1, chains=1,
                                   burn_in=1000, thin=10, kernel=None, n_batches=20):
    """phi^1 on R(L, M) of {plus ghosts not joined to minus ghosts by open edges}.

    This probability equals Z^pm / Z^+, so tau = -log(prob) / L^{d-1}.
    """
    region = build_region(RegionSpec.rect(L, M, d))
    bc = BoundarySpec.wired(region)
    plus, minus = _ghost_sides(region)
    free = graph_for(region, BoundarySpec.free())

    def obs(w, g):
        roots = kernels.label(free.n_nodes, free.eu, free.ev, w)
        return float(not np.intersect1d(roots[plus], roots[minus]).size)

    spec = SamplerSpec(region, bc, p, 2.0, kernel=kernel, burn_in=burn_in, thin=thin)
    mean, se, wall = estimate_many(obs, spec, samples, seed, ("surface", L, M), segments, chains, n_batches)
    rec = params_record(spec, L=L, M=M, seed=seed)
    return rate_result("wired_disconnection", rec, float(mean[0]), float(se[0]), samples,
                       L ** (d - 1), "tau_wired", wall_seconds=wall, segments=segments)


def surface_tension_derivative_check(L, M, beta, h=1e-5, d=2):
    """Central difference of (1/L^{d-1}) log(Z^+/Z^pm) against the sum over
    E(R(L, M)) of <s_x s_y>^+ - <s_x s_y>^pm, all by enumeration."""
    region = build_region(RegionSpec.rect(L, M, d))
    area = L ** (d - 1)
    plus = IsingEnumeration(region, boundary_field(region, "+"))
    pm = IsingEnumeration(region, boundary_field(region, "pm"))

    def f(b):
        return (plus.log_partition(b) - pm.log_partition(b)) / area

    lo = max(beta - h, 0.0)
    fd = (f(beta + h) - f(lo)) / (beta + h - lo)
    pp, pq = plus.probabilities(beta), pm.probabilities(beta)
    summands = []
    for a, b in region.edges:
        summands.append(_pair(plus, pp, a, b) - _pair(pm, pq, a, b))
    summands = np.array(summands)
    exact = summands.sum() / area
    report = dict(L=L, M=M, d=d, beta=beta, h=h, finite_difference=fd, correlation_sum=exact,
                  gap=abs(fd - exact), min_summand=float(summands.min()), summands=summands)
    if report["min_summand"] < -1e-12:
        raise AssertionError(f"negative correlation difference {report['min_summand']}")
    return report


def _pair(enum, probs, a, b):
    ca, cb = enum.values((a, b))
    return float((ca * cb) @ probs)


def ginibre_gap(region, beta, eta, eta_prime, A, B):
    """Left side minus right side of Ginibre's inequality for |eta| <= eta'."""
    eta, eta_prime = np.asarray(eta, float), np.asarray(eta_prime, float)
    if np.any(np.abs(eta) > eta_prime + 1e-15):
        raise ValueError("need |eta| <= eta' pointwise")
    e, e2 = IsingEnumeration(region, eta), IsingEnumeration(region, eta_prime)
    ex = lambda en, S: en.expectation(beta, S)
    lhs = ex(e2, tuple(A) + tuple(B)) - ex(e, tuple(A) + tuple(B))
    rhs = abs(ex(e2, A) * ex(e, B) - ex(e2, B) * ex(e, A))
    return lhs - rhs


# --- weak mixing -------------------------------------------------------------


def halfbox_boundaries(region, s):
    """(outer wired, outer free) boundaries on a half-box, bottom ghosts wired
    in both and bottom ghost edges scaled by ``s``."""
    bottom = region.faces["bottom"]
    is_bottom = np.zeros(region.n_vertices, dtype=bool)
    is_bottom[bottom] = True
    mult = {int(e): float(s) for e in np.flatnonzero(is_bottom[region.edges].any(axis=1))}
    wired = BoundarySpec.from_faces(region, [["bottom", "rest"]], mult, name="s,1")
    free = BoundarySpec.from_faces(region, ["bottom"], mult, name="s,0")
    return wired, free


def root_edge(region):
    """The bond from the origin to e_d."""
    d = region.d
    return region.edge_index((0,) * d, (0,) * (d - 1) + (1,))


def weak_mixing_gap(K, s, p, samples=1000, seed=0, d=3, segments=1, chains=1, burn_in=1000,
                    thin=10, kernel=None, n_batches=20):
    """phi^{s,1}[w_b0] - phi^{s,0}[w_b0] on the half-box H(K), q = 2."""
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    if K < 1:
        raise ValueError("K must be >= 1")
    region = build_region(RegionSpec.halfbox(K, d))
    b0 = root_edge(region)
    wired, free = halfbox_boundaries(region, s)
    obs = lambda w, g: float(w[b0])
    res = []
    for bc in (wired, free):
        spec = SamplerSpec(region, bc, p, 2.0, kernel=kernel, burn_in=burn_in, thin=thin)
        res.append(estimate_many(obs, spec, samples, seed, ("mixing", K, bc.name), segments, chains, n_batches))
    (m1, s1, w1), (m0, s0, w0) = res
    gap = float(m1[0] - m0[0])
    se = math.hypot(float(s1[0]), float(s0[0]))
    rec = params_record(spec, K=K, seed=seed, s=s)
    rec["bc"] = "s,1-s,0"
    return EstimatorResult("weak_mixing_gap", rec, samples, gap, se, wall_seconds=w1 + w0,
                           segments=segments, extra=dict(wired=float(m1[0]), free=float(m0[0])))
