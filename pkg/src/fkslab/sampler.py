"""Markov chains for the FK measure, the sprinkled measure and the monotone
sequential coupling."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .clusters import BondConfig, BoundarySpec, graph_for
from .geometry import Region
from .oracle import Enumeration, FkParams
from .rng import stream

KERNELS = ("heat-bath", "sw", "frozen")


@dataclass
class ChainState:
    bonds: np.ndarray
    rng: np.random.Generator
    sweep: int = 0
    _tag: int = 0
    _scratch: tuple = field(default=None, repr=False)

    @classmethod
    def start(cls, region: Region, seed, *key, init="zeros"):
        fill = 1 if init == "ones" else 0
        return cls(np.full(region.n_edges, fill, dtype=np.uint8), stream(seed, "chain", *key))

    def config(self, region):
        return BondConfig(self.bonds.copy(), region)


def heat_bath_sweep(state: ChainState, region: Region, bc: BoundarySpec, params: FkParams) -> ChainState:
    """Resample every edge once, in index order, from its exact conditional law.

    An edge whose endpoints are joined off the edge (wiring included) opens with
    probability p_e; an edge whose opening would merge two counted clusters
    opens with probability p_e / (p_e + q (1 - p_e)).
    """
    g = graph_for(region, bc)
    ptr, nbr, eid = g.adjacency
    if state._scratch is None or len(state._scratch[0]) != g.n_nodes:
        state._scratch = (np.zeros(g.n_nodes, np.int64), np.zeros(g.n_nodes, np.int64))
    seen, queue = state._scratch
    pe = bc.edge_probabilities(region, params.p)
    u = state.rng.random(region.n_edges)
    state._tag = kernels.heat_bath_sweep(g.eu, g.ev, ptr, nbr, eid, g.counted, pe, float(params.q),
                                         state.bonds, u, seen, queue, state._tag)
    state.sweep += 1
    return state


def frozen_heat_bath_sweep(state, region, bc, params):
    """Faster approximate sweep (one labeling per sweep); not an exact kernel."""
    g = graph_for(region, bc)
    pe = bc.edge_probabilities(region, params.p)
    u = state.rng.random(region.n_edges)
    kernels.frozen_heat_bath_sweep(g.n_nodes, g.eu, g.ev, g.counted, pe, float(params.q), state.bonds, u)
    state.sweep += 1
    return state


def check_sw_boundary(region, bc):
    """Refuse wirings that have no Ising boundary-field counterpart."""
    g = graph_for(region, bc)
    if len(g.block_nodes) > 1:
        raise ValueError("Swendsen-Wang needs at most one wiring block (a + boundary field)")
    loose = ~g.counted
    if np.any(g.degree[loose] > 1):
        raise ValueError("Swendsen-Wang needs every free ghost to have a single edge")
    return g


def swendsen_wang_step(state: ChainState, region: Region, bc: BoundarySpec, p: float, q=2.0) -> ChainState:
    """Edwards-Sokal round trip: random spins per cluster (the wired block pinned
    to +1), then every edge between agreeing spins reopens with probability p_e."""
    if q != 2:
        raise ValueError("Swendsen-Wang is only available for q = 2")
    g = check_sw_boundary(region, bc)
    pinned = int(g.block_nodes[0]) if len(g.block_nodes) else -1
    pe = bc.edge_probabilities(region, p)
    u_spin = state.rng.random(g.n_nodes)
    u_edge = state.rng.random(region.n_edges)
    kernels.swendsen_wang_step(g.n_nodes, g.eu, g.ev, g.counted, pinned, pe, state.bonds, u_spin, u_edge)
    state.sweep += 1
    return state


def advance(state, region, bc, params, kernel="heat-bath"):
    if kernel == "heat-bath":
        return heat_bath_sweep(state, region, bc, params)
    if kernel == "sw":
        return swendsen_wang_step(state, region, bc, params.p, params.q)
    if kernel == "frozen":
        return frozen_heat_bath_sweep(state, region, bc, params)
    raise ValueError(f"unknown kernel {kernel!r}; choose from {KERNELS}")


def default_kernel(q, region, bc):
    if q == 2:
        try:
            check_sw_boundary(region, bc)
            return "sw"
        except ValueError:
            pass
    return "heat-bath"


def run_chain(region, bc, params, n_samples, seed, *key, burn_in=1000, thin=10,
              kernel="heat-bath", init="zeros"):
    """Yield ``n_samples`` configurations (bond arrays, shared buffer) after burn-in."""
    if burn_in < 0 or thin < 1:
        raise ValueError("burn_in must be >= 0 and thin >= 1")
    state = ChainState.start(region, seed, *key, init=init)
    for _ in range(burn_in):
        advance(state, region, bc, params, kernel)
    for _ in range(n_samples):
        for _ in range(thin):
            advance(state, region, bc, params, kernel)
        yield state


def sample_sprinkled(region, bc, p, q, eps, n_samples, seed, *key, burn_in=1000, thin=10,
                     kernel="heat-bath", init="zeros"):
    """Stream of (omega, gamma): omega from the FK chain, gamma fresh iid Ber(eps)."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must lie in [0, 1]")
    params = FkParams(p, q)
    sprinkle = stream(seed, "sprinkle", *key)
    for state in run_chain(region, bc, params, n_samples, seed, *key, burn_in=burn_in,
                           thin=thin, kernel=kernel, init=init):
        gamma = (sprinkle.random(region.n_edges) < eps).astype(np.uint8)
        yield state.bonds.copy(), gamma


class SequentialConditionals:
    """Memoised exact conditionals phi[w(e_i) = 1 | w(e_j) for j < i]."""

    def __init__(self, region, bc, params):
        self.region, self.bc, self.params = region, bc, params
        self._memo = {}

    def __call__(self, prefix):
        key = tuple(prefix)
        if key not in self._memo:
            i = len(key)
            revealed = dict(enumerate(key))
            enum = Enumeration(self.region, self.bc, revealed=revealed)
            self._memo[key] = enum.open_prob(enum.probabilities(self.params), i)
        return self._memo[key]


def sequential_coupling(region, p, p_prime, seed, q=2.0, bc=None, conditionals=None):
    """Drive two sequential constructions with the same uniforms U_i.

    Edge e_i is open in omega_p iff U_i <= phi_p[w(e_i) | omega_p(e_j), j < i],
    and likewise for p'. Returns (omega_p, omega_p').
    """
    if p > p_prime:
        raise ValueError("need p <= p'")
    bc = bc or BoundarySpec.free()
    if conditionals is None:
        conditionals = (SequentialConditionals(region, bc, FkParams(p, q)),
                        SequentialConditionals(region, bc, FkParams(p_prime, q)))
    u = stream(seed, "coupling").random(region.n_edges)
    lo, hi = [], []
    for i in range(region.n_edges):
        lo.append(1 if u[i] <= conditionals[0](lo) else 0)
        hi.append(1 if u[i] <= conditionals[1](hi) else 0)
    return np.array(lo, np.uint8), np.array(hi, np.uint8)


def epsilon_for(p, p_prime, q):
    """Sprinkling intensity (p' - p)/q dominated by raising p to p'."""
    if not 0.0 <= p < p_prime <= 1.0:
        raise ValueError("need 0 <= p < p' <= 1")
    if q < 1:
        raise ValueError("need q >= 1")
    return (p_prime - p) / q
