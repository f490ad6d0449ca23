"""Bond configurations, boundary wirings and cluster labeling.

A boundary condition is a list of wiring blocks. Each block is a set of
vertices (usually ghosts) identified into a single node; the block stands for
a boundary cluster that is present whatever the configuration inside, so it is
always counted in ``k``. A ghost that belongs to no block is free: it is a
plain dangling endpoint and only counts when an open edge joins it to the
region. Per-edge intensity multipliers scale ``p`` on selected edges.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .geometry import AnnulusSpec, Region


@dataclass(frozen=True, eq=False)
class BoundarySpec:
    blocks: tuple = ()
    multipliers: dict = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        blocks = tuple(np.unique(np.asarray(b, dtype=np.int64)) for b in self.blocks)
        blocks = tuple(b for b in blocks if len(b))
        seen = np.concatenate(blocks) if blocks else np.zeros(0, np.int64)
        if len(np.unique(seen)) != len(seen):
            raise ValueError("wiring blocks must be pairwise disjoint")
        for e, s in self.multipliers.items():
            if not 0.0 <= s <= 1.0:
                raise ValueError(f"multiplier for edge {e} outside [0, 1]: {s}")
        object.__setattr__(self, "blocks", blocks)
        if not self.name:
            object.__setattr__(self, "name", "free" if not blocks else f"{len(blocks)}-block")

    @classmethod
    def free(cls):
        return cls(name="free")

    @classmethod
    def wired(cls, region: Region):
        """All ghosts in one block; for ghost-free regions all vertices are wired."""
        if region.n_ghost:
            return cls((np.arange(region.n_inner, region.n_vertices),), name="wired")
        return cls((np.arange(region.n_inner),), name="wired")

    @classmethod
    def from_faces(cls, region: Region, groups, multipliers=None, name=""):
        """One block per group; a group is a face name or a list of face names."""
        blocks = []
        for g in groups:
            names = [g] if isinstance(g, str) else list(g)
            blocks.append(np.concatenate([region.faces[n] for n in names]))
        return cls(tuple(blocks), dict(multipliers or {}), name=name)

    def edge_probabilities(self, region: Region, p):
        pe = np.full(region.n_edges, float(p))
        for e, s in self.multipliers.items():
            pe[e] = s * p
        return pe

    def coarser_than(self, other: "BoundarySpec"):
        """True if every block of ``other`` lies inside a block of self."""
        owner = {}
        for i, b in enumerate(self.blocks):
            for v in b.tolist():
                owner[v] = i
        for b in other.blocks:
            tags = {owner.get(v, None) for v in b.tolist()}
            if len(b) > 1 and (None in tags or len(tags) != 1):
                return False
            if len(b) == 1 and None in tags:
                return False
        return True


class Graph:
    """Region edges re-expressed on nodes, every wiring block collapsed to one node."""

    def __init__(self, region: Region, bc: BoundarySpec):
        self.region = region
        self.bc = bc
        node_of = np.full(region.n_vertices, -1, dtype=np.int64)
        block_nodes = []
        for i, b in enumerate(bc.blocks):
            if b.max(initial=-1) >= region.n_vertices:
                raise ValueError("wiring block refers to a vertex outside the region")
            node_of[b] = -2 - i
        nid = 0
        first = {}
        for v in range(region.n_vertices):
            tag = node_of[v]
            if tag == -1:
                node_of[v] = nid
                nid += 1
            elif tag not in first:
                first[tag] = nid
                block_nodes.append(nid)
                node_of[v] = nid
                nid += 1
            else:
                node_of[v] = first[tag]
        self.node_of = node_of
        self.n_nodes = nid
        self.block_nodes = np.array(block_nodes, dtype=np.int64)
        counted = np.zeros(nid, dtype=np.bool_)
        counted[node_of[:region.n_inner]] = True
        counted[self.block_nodes] = True
        self.counted = counted
        self.eu = node_of[region.edges[:, 0]].copy()
        self.ev = node_of[region.edges[:, 1]].copy()

    @cached_property
    def adjacency(self):
        ends = np.concatenate([self.eu, self.ev])
        others = np.concatenate([self.ev, self.eu])
        edge_ids = np.concatenate([np.arange(len(self.eu))] * 2)
        order = np.argsort(ends, kind="stable")
        ptr = np.zeros(self.n_nodes + 1, dtype=np.int64)
        np.add.at(ptr, ends + 1, 1)
        return np.cumsum(ptr), others[order].astype(np.int64), edge_ids[order].astype(np.int64)

    @cached_property
    def degree(self):
        return np.diff(self.adjacency[0])


_GRAPHS = {}


def graph_for(region: Region, bc: BoundarySpec) -> Graph:
    key = (id(region), id(bc))
    g = _GRAPHS.get(key)
    if g is None or g.region is not region or g.bc is not bc:
        g = Graph(region, bc)
        if len(_GRAPHS) > 64:
            _GRAPHS.clear()
        _GRAPHS[key] = g
    return g


@dataclass(eq=False)
class BondConfig:
    bits: np.ndarray
    region: Region

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bits.shape != (self.region.n_edges,):
            raise ValueError(f"config has {self.bits.shape} entries, region has "
                             f"{self.region.n_edges} edges")

    @classmethod
    def zeros(cls, region):
        return cls(np.zeros(region.n_edges, np.uint8), region)

    @classmethod
    def ones(cls, region):
        return cls(np.ones(region.n_edges, np.uint8), region)

    def __or__(self, other):
        if other.region is not self.region:
            raise ValueError("configs live on different regions")
        return BondConfig(self.bits | other.bits, self.region)

    def restrict(self, vertex_mask):
        """Keep only edges with both endpoints in the mask (omega intersected with a box)."""
        return BondConfig(self.bits & self.region.edges_within(vertex_mask), self.region)

    def to_hex(self):
        return np.packbits(self.bits, bitorder="little").tobytes().hex()

    @classmethod
    def from_hex(cls, text, region):
        raw = np.frombuffer(bytes.fromhex(text), dtype=np.uint8)
        return cls(np.unpackbits(raw, bitorder="little")[:region.n_edges], region)

    def __len__(self):
        return len(self.bits)


def _bits(omega, region):
    if isinstance(omega, BondConfig):
        if omega.region is not region:
            raise ValueError("config belongs to another region")
        return omega.bits
    bits = np.asarray(omega, dtype=np.uint8)
    if bits.shape != (region.n_edges,):
        raise ValueError("config length does not match the region")
    return bits


@dataclass(eq=False)
class ClusterLabeling:
    region: Region
    ids: np.ndarray  # component id per vertex (ghosts included), 0..n_components-1
    k: int  # number of counted components
    counted: np.ndarray  # per component: holds a region vertex or a wiring block
    faces: dict  # face name -> bool per component

    @property
    def n_components(self):
        return len(self.counted)

    def members(self, cid):
        return np.flatnonzero(self.ids == cid)

    def ids_of(self, vertex_set):
        idx = _as_indices(self.region, vertex_set)
        if len(idx) == 0:
            raise ValueError("empty vertex set")
        return set(np.unique(self.ids[idx]).tolist())


def _as_indices(region, vertex_set):
    if isinstance(vertex_set, np.ndarray) and vertex_set.dtype == bool:
        return np.flatnonzero(vertex_set)
    items = list(vertex_set)
    if not items:
        return np.zeros(0, np.int64)
    if np.ndim(items[0]) == 0:
        return np.asarray(items, dtype=np.int64)
    return region.indices(items)


def label_clusters(region: Region, omega, bc: BoundarySpec | None = None, mask=None) -> ClusterLabeling:
    """Connected components of the open edges with wiring blocks pre-merged.

    ``mask`` (bool over vertices) keeps only edges with both endpoints inside it,
    which is how clusters of omega intersected with a sub-box are obtained.
    """
    bc = bc or BoundarySpec.free()
    bits = _bits(omega, region)
    if mask is not None:
        bits = bits & region.edges_within(mask)
    g = graph_for(region, bc)
    roots = kernels.label(g.n_nodes, g.eu, g.ev, bits)
    node_roots = roots[g.node_of]
    uniq, ids = np.unique(node_roots, return_inverse=True)
    comp_counted = np.zeros(len(uniq), dtype=bool)
    comp_counted[ids[:region.n_inner]] = True
    for b in g.block_nodes:
        comp_counted[np.searchsorted(uniq, roots[b])] = True
    faces = {}
    for name, vs in region.faces.items():
        flag = np.zeros(len(uniq), dtype=bool)
        flag[ids[vs]] = True
        faces[name] = flag
    return ClusterLabeling(region, ids, int(comp_counted.sum()), comp_counted, faces)


def cluster_count(region, omega, bc=None):
    return label_clusters(region, omega, bc).k


def is_connected(labeling: ClusterLabeling, A, B) -> bool:
    """True iff some component meets both vertex sets (coordinates, indices or masks)."""
    return bool(labeling.ids_of(A) & labeling.ids_of(B))


def crossing_clusters(labeling: ClusterLabeling, annulus: AnnulusSpec) -> set:
    """Ids of components touching both the inner and the outer sphere of the annulus."""
    region = labeling.region
    center = annulus.center or None
    dist = region.sup_dist(center)
    live = ~region.is_ghost
    inner = set(np.unique(labeling.ids[live & (dist == annulus.inner)]).tolist())
    outer = set(np.unique(labeling.ids[live & (dist == annulus.outer)]).tolist())
    return inner & outer


def boundary_clusters(labeling: ClusterLabeling, outer, mid, center=None, nested=None):
    """Ids of components meeting the sphere of radius ``mid``.

    The labeling is expected to come from omega restricted to the box of radius
    ``outer``. With ``nested`` (list of radii) also returns, per radius r, the
    ids that additionally meet the box of radius r.
    """
    if not mid < outer:
        raise ValueError("need mid < outer")
    region = labeling.region
    dist = region.sup_dist(center)
    live = ~region.is_ghost
    if dist[live].max() < outer:
        raise ValueError("outer box does not fit in the region")
    base = set(np.unique(labeling.ids[live & (dist == mid)]).tolist())
    if nested is None:
        return base
    subs = [base & set(np.unique(labeling.ids[live & (dist <= r)]).tolist()) for r in nested]
    return base, subs
