"""Exact enumeration of FK and Ising measures on micro-instances."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .clusters import BondConfig, BoundarySpec, graph_for, label_clusters
from .geometry import Region

MAX_EDGES = 24
MAX_SPINS = 20


class CapExceeded(ValueError):
    """Raised instead of silently truncating an enumeration."""


@dataclass(frozen=True)
class FkParams:
    p: float
    q: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if self.q < 1.0:
            raise ValueError(f"q must be >= 1, got {self.q}")


@dataclass(frozen=True)
class EventPredicate:
    """Deterministic boolean function of (BondConfig, ClusterLabeling)."""

    name: str
    fn: Callable

    def __call__(self, omega, labeling):
        return bool(self.fn(omega, labeling))


def edge_open(e):
    return EventPredicate(f"edge{e}", lambda w, lab: w.bits[e] == 1)


ALWAYS = EventPredicate("always", lambda w, lab: True)


class Enumeration:
    """Every assignment of the unrevealed edges with its cluster count.

    ``pairs`` are vertex-index pairs whose connectivity is tabulated, on the
    graph of ``probe_bc`` when given (e.g. free wiring to ask whether two ghost
    faces are joined by open edges alone) and otherwise on the graph of ``bc``.
    """

    def __init__(self, region: Region, bc: BoundarySpec | None = None, pairs=(),
                 revealed=None, probe_bc: BoundarySpec | None = None, cap=MAX_EDGES):
        self.region = region
        self.bc = bc or BoundarySpec.free()
        revealed = dict(revealed or {})
        for e, v in revealed.items():
            if not 0 <= e < region.n_edges or v not in (0, 1):
                raise ValueError(f"revealed entry {e}={v} is not a valid edge assignment")
        self.revealed = revealed
        self.free_idx = np.array([e for e in range(region.n_edges) if e not in revealed], dtype=np.int64)
        if len(self.free_idx) > cap:
            raise CapExceeded(f"{len(self.free_idx)} free edges exceeds the enumeration cap of {cap}")
        self.fixed = np.zeros(region.n_edges, dtype=np.uint8)
        for e, v in revealed.items():
            self.fixed[e] = v
        g = graph_for(region, self.bc)
        n_conf = 1 << len(self.free_idx)
        self.pairs = [tuple(int(v) for v in pr) for pr in pairs]
        pg = graph_for(region, probe_bc) if probe_bc is not None else g
        pa = pg.node_of[np.array([a for a, _ in self.pairs], dtype=np.int64)]
        pb = pg.node_of[np.array([b for _, b in self.pairs], dtype=np.int64)]
        none = np.zeros(0, np.int64)
        self.ks, self.conn = kernels.enumerate_clusters(
            g.n_nodes, g.eu, g.ev, g.counted, self.free_idx, self.fixed, 0, n_conf,
            none if probe_bc is not None else pa, none if probe_bc is not None else pb)
        if probe_bc is not None:
            _, self.conn = kernels.enumerate_clusters(
                pg.n_nodes, pg.eu, pg.ev, pg.counted, self.free_idx, self.fixed, 0, n_conf, pa, pb)
        self.masks = np.arange(n_conf, dtype=np.int64)

    @property
    def n_configs(self):
        return len(self.masks)

    def open_prob(self, probs, e):
        """Sum of ``probs`` over configurations with edge ``e`` open."""
        hit = np.flatnonzero(self.free_idx == e)
        if len(hit) == 0:
            return float(probs.sum()) if self.fixed[e] else 0.0
        return float(probs.reshape(-1, 2, 1 << int(hit[0]))[:, 1, :].sum())

    def bit(self, e):
        """Open indicator of edge ``e`` across all enumerated configurations."""
        hit = np.flatnonzero(self.free_idx == e)
        if len(hit) == 0:
            return np.full(self.n_configs, bool(self.fixed[e]))
        return ((self.masks >> int(hit[0])) & 1).astype(bool)

    def weights(self, params: FkParams):
        """Unnormalised FK weights p^o (1-p)^c q^k of every configuration."""
        pe = self.bc.edge_probabilities(self.region, params.p)
        # product measure part: bit j of the configuration index is edge free_idx[j]
        prod = np.ones(1)
        for e in self.free_idx:
            prod = np.concatenate([prod * (1.0 - pe[e]), prod * pe[e]])
        w = prod * np.power(float(params.q), self.ks.astype(np.float64))
        fixed_factor = math.prod(pe[e] if v else 1.0 - pe[e] for e, v in self.revealed.items())
        return w * fixed_factor

    def probabilities(self, params):
        w = self.weights(params)
        total = w.sum()
        if total <= 0:
            raise ValueError("revealed assignment has zero weight")
        return w / total

    def config(self, m):
        bits = self.fixed.copy()
        for j, e in enumerate(self.free_idx):
            bits[e] = (m >> j) & 1
        return BondConfig(bits, self.region)

    def event_mask(self, event: EventPredicate):
        out = np.empty(self.n_configs, dtype=bool)
        for m in range(self.n_configs):
            w = self.config(m)
            out[m] = event(w, label_clusters(self.region, w, self.bc))
        return out

    def sprinkled(self, params, eps):
        """Law of omega|gamma (gamma iid Ber(eps)) over the enumerated configurations."""
        if self.revealed:
            raise ValueError("sprinkled law needs every edge free")
        probs = self.probabilities(params).copy()
        n = len(self.free_idx)
        for j in range(n):
            view = probs.reshape(-1, 2, 1 << j)
            zero = view[:, 0, :].copy()
            view[:, 1, :] += eps * zero
            view[:, 0, :] = (1.0 - eps) * zero
        return probs


def _enumeration(region, bc, revealed=None, pairs=(), probe_bc=None):
    return Enumeration(region, bc, pairs=pairs, revealed=revealed, probe_bc=probe_bc)


def fk_partition(region: Region, bc: BoundarySpec, params: FkParams) -> float:
    """Z = sum over configurations of p^o (1-p)^c q^k (pairwise summation)."""
    return float(_enumeration(region, bc).weights(params).sum())


def fk_event_prob(region: Region, bc: BoundarySpec, params: FkParams, event: EventPredicate) -> float:
    enum = _enumeration(region, bc)
    probs = enum.probabilities(params)
    return float(probs[enum.event_mask(event)].sum())


def fk_edge_marginals(region, bc, params, enum=None):
    enum = enum or _enumeration(region, bc)
    probs = enum.probabilities(params)
    return np.array([enum.open_prob(probs, e) for e in range(region.n_edges)])


def fk_connection_probs(region, bc, params, pairs, probe_bc=None):
    enum = _enumeration(region, bc, pairs=pairs, probe_bc=probe_bc)
    probs = enum.probabilities(params)
    return np.array([probs[enum.conn[:, j]].sum() for j in range(len(enum.pairs))])


def fk_conditional_edge(region, bc, params, e, revealed=None) -> float:
    """Exact P(edge e open | revealed edges), summing over the unrevealed ones."""
    revealed = dict(revealed or {})
    revealed.pop(e, None)
    enum = _enumeration(region, bc, revealed=revealed)
    return enum.open_prob(enum.probabilities(params), e)


def fk_edge_covariances(region, bc, params, enum=None):
    """Marginals m_e and the matrix phi[w_e w_f] - m_e m_f."""
    enum = enum or _enumeration(region, bc)
    probs = enum.probabilities(params)
    bits = np.stack([enum.bit(e) for e in range(region.n_edges)]).astype(np.float64)
    m = bits @ probs
    joint = (bits * probs) @ bits.T
    return m, joint - np.outer(m, m)


def sprinkled_connection_probs(region, bc, params, eps, pairs):
    """psi[x <-> y in omega|gamma] for each vertex pair."""
    enum = _enumeration(region, bc, pairs=pairs)
    law = enum.sprinkled(params, eps)
    return np.array([law[enum.conn[:, j]].sum() for j in range(len(enum.pairs))])


# --- Ising ---------------------------------------------------------------


class IsingEnumeration:
    """All spin configurations of a region with the bond sum -H for a fixed field."""

    def __init__(self, region: Region, eta):
        n = region.n_inner
        if n > MAX_SPINS:
            raise CapExceeded(f"{n} spins exceeds the enumeration cap of {MAX_SPINS}")
        eta = np.asarray(eta, dtype=np.float64)
        if eta.shape != (region.n_ghost,):
            raise ValueError(f"boundary field needs {region.n_ghost} entries")
        if not np.all(np.isfinite(eta)):
            raise ValueError("boundary field must be finite")
        self.region = region
        self.eta = eta
        masks = np.arange(1 << n, dtype=np.int64)
        self.spins = (2 * ((masks[:, None] >> np.arange(n)) & 1) - 1).astype(np.int8)
        self.bond_sum = self._bond_sum(region.edges)

    def values(self, vertices):
        """Spin value columns for vertex indices (ghosts read from the field)."""
        n = self.region.n_inner
        cols = []
        for v in vertices:
            v = int(v)
            if v < n:
                cols.append(self.spins[:, v].astype(np.float64))
            else:
                cols.append(np.full(len(self.spins), self.eta[v - n]))
        return cols

    def _bond_sum(self, edges):
        s = np.zeros(len(self.spins), dtype=np.float64)
        for a, b in edges:
            ca, cb = self.values((a, b))
            s += ca * cb
        return s

    def log_weights(self, beta):
        return beta * self.bond_sum

    def log_partition(self, beta):
        lw = self.log_weights(beta)
        top = lw.max()
        return float(top + np.log(np.exp(lw - top).sum()))

    def probabilities(self, beta):
        lw = self.log_weights(beta)
        w = np.exp(lw - lw.max())
        return w / w.sum()

    def expectation(self, beta, A):
        probs = self.probabilities(beta)
        prod = np.ones(len(self.spins))
        for col in self.values(A):
            prod = prod * col
        return float(prod @ probs)


def ising_partition(region, beta, eta) -> float:
    return math.exp(IsingEnumeration(region, eta).log_partition(beta))


def ising_log_partition(region, beta, eta) -> float:
    return IsingEnumeration(region, eta).log_partition(beta)


def ising_expectation(region, beta, eta, A) -> float:
    """<prod_{x in A} sigma_x> with ghost spins pinned to the field."""
    return IsingEnumeration(region, eta).expectation(beta, A)
