"""Finite regions of Z^d with indexed edges, ghost endpoints and named faces.

Vertex indices run over the region's own vertices first (lexicographic order of
coordinates), then over the ghosts (outside endpoints of boundary-crossing
edges, also lexicographic). Edge indices follow the lexicographic order of
``(lower endpoint, upper endpoint)`` coordinates, so rebuilding a region gives
identical arrays.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

KINDS = ("box", "slab", "rect", "halfbox")


@dataclass(frozen=True)
class RegionSpec:
    """Box(N), Slab(L, N), Rect(L, M) or HalfBox(K) in dimension ``d``."""

    kind: str
    d: int
    L: int | None = None
    N: int | None = None
    M: int | None = None
    K: int | None = None

    @classmethod
    def box(cls, N, d):
        return cls("box", d, N=N)

    @classmethod
    def slab(cls, L, N, d=3):
        return cls("slab", d, L=L, N=N)

    @classmethod
    def rect(cls, L, M, d):
        return cls("rect", d, L=L, M=M)

    @classmethod
    def halfbox(cls, K, d):
        return cls("halfbox", d, K=K)

    def to_dict(self):
        return {k: v for k, v in self.__dict__.items() if v is not None}

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(frozen=True)
class AnnulusSpec:
    outer: int
    inner: int
    center: tuple = ()

    def __post_init__(self):
        if self.inner < 0 or self.outer <= self.inner:
            raise ValueError(f"need outer > inner >= 0, got {self.outer}, {self.inner}")


@dataclass(frozen=True)
class BoxSpec:
    """The box of sup-radius ``radius`` around ``center`` (empty center means the origin)."""

    radius: int
    center: tuple = ()


@dataclass(frozen=True, eq=False)
class Region:
    d: int
    vertices: np.ndarray  # (n_inner, d) coordinates of the region's own vertices
    ghosts: np.ndarray  # (n_ghost, d)
    edges: np.ndarray  # (n_edges, 2) vertex indices, ghosts offset by n_inner
    faces: dict = field(default_factory=dict)
    spec: RegionSpec | None = None
    name: str = ""

    @property
    def n_inner(self):
        return len(self.vertices)

    @property
    def n_ghost(self):
        return len(self.ghosts)

    @property
    def n_vertices(self):
        return self.n_inner + self.n_ghost

    @property
    def n_edges(self):
        return len(self.edges)

    @cached_property
    def coords(self):
        """Coordinates of every vertex, ghosts included."""
        return np.concatenate([self.vertices, self.ghosts]).astype(np.int64)

    @cached_property
    def _lookup(self):
        c = self.coords
        lo = c.min(axis=0)
        shape = c.max(axis=0) - lo + 1
        table = np.full(int(np.prod(shape)), -1, dtype=np.int64)
        table[np.ravel_multi_index((c - lo).T, shape)] = np.arange(len(c))
        return lo, shape, table

    def index(self, x):
        """Vertex index of coordinate ``x`` (ghosts included); KeyError if absent."""
        lo, shape, table = self._lookup
        x = np.asarray(x, dtype=np.int64) - lo
        if x.shape != (self.d,) or np.any(x < 0) or np.any(x >= shape):
            raise KeyError(tuple(int(v) for v in np.asarray(x) + lo))
        i = table[np.ravel_multi_index(x, shape)]
        if i < 0:
            raise KeyError(tuple(int(v) for v in x + lo))
        return int(i)

    def indices(self, points):
        return np.array([self.index(x) for x in points], dtype=np.int64)

    def edge_index(self, x, y):
        a, b = self.index(x), self.index(y)
        hit = np.flatnonzero(((self.edges[:, 0] == a) & (self.edges[:, 1] == b))
                             | ((self.edges[:, 0] == b) & (self.edges[:, 1] == a)))
        if len(hit) == 0:
            raise KeyError((tuple(x), tuple(y)))
        return int(hit[0])

    @cached_property
    def is_ghost(self):
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[self.n_inner:] = True
        return mask

    def sup_dist(self, center=None):
        """Sup-norm distance of every vertex (ghosts included) to ``center``."""
        c = np.zeros(self.d, dtype=np.int64) if center is None else np.asarray(center)
        return np.abs(self.coords - c).max(axis=1)

    def ball(self, r, center=None):
        """Boolean mask over vertices of the box of radius ``r`` around ``center``."""
        return self.sup_dist(center) <= r

    def sphere(self, r, center=None):
        """Inner vertex boundary of the radius-``r`` box: vertices at sup-distance exactly ``r``."""
        return self.sup_dist(center) == r

    def edges_within(self, mask):
        """Boolean mask over edges with both endpoints in the vertex mask."""
        return mask[self.edges[:, 0]] & mask[self.edges[:, 1]]

    @cached_property
    def inner_boundary(self):
        """Region vertices with a neighbour outside the region."""
        out = np.zeros(self.n_vertices, dtype=bool)
        ghost_edges = self.is_ghost[self.edges].any(axis=1)
        for a, b in self.edges[ghost_edges]:
            out[a if a < self.n_inner else b] = True
        return out

    @cached_property
    def neighbor_table(self):
        """(n_vertices, 2d) arrays of neighbour vertex and edge indices, -1 where absent.

        Slot ``2k`` is the ``+e_k`` direction, slot ``2k+1`` is ``-e_k``.
        """
        nbr = np.full((self.n_vertices, 2 * self.d), -1, dtype=np.int64)
        nbr_e = np.full((self.n_vertices, 2 * self.d), -1, dtype=np.int64)
        c = self.coords
        diff = c[self.edges[:, 1]] - c[self.edges[:, 0]]
        for k in range(self.d):
            for sign, slot in ((1, 2 * k), (-1, 2 * k + 1)):
                sel = np.flatnonzero(diff[:, k] == sign)
                nbr[self.edges[sel, 0], slot] = self.edges[sel, 1]
                nbr_e[self.edges[sel, 0], slot] = sel
                back = slot + 1 if sign == 1 else slot - 1
                nbr[self.edges[sel, 1], back] = self.edges[sel, 0]
                nbr_e[self.edges[sel, 1], back] = sel
        return nbr, nbr_e

    def __repr__(self):
        label = self.name or (self.spec and self.spec.kind) or "region"
        return (f"Region({label}, d={self.d}, |V|={self.n_inner}, "
                f"|E|={self.n_edges}, ghosts={self.n_ghost})")


def _lex_sort_rows(a):
    if len(a) == 0:
        return np.arange(0)
    return np.lexsort(a.T[::-1])


def region_from_vertices(points, d=None, boundary=True, faces=None, spec=None, name=""):
    """Region on an arbitrary finite vertex set.

    With ``boundary=True`` the edge set is every edge of Z^d meeting the set
    (outside endpoints become ghosts); with ``boundary=False`` only edges with
    both endpoints in the set are kept and there are no ghosts.
    """
    pts = np.unique(np.asarray(points, dtype=np.int64).reshape(len(points), -1), axis=0)
    d = pts.shape[1] if d is None else d
    if pts.shape[1] != d or d < 1:
        raise ValueError("points must be d-tuples")
    pts = pts[_lex_sort_rows(pts)]
    inside = {tuple(x) for x in pts.tolist()}
    unit = np.eye(d, dtype=np.int64)
    pairs = []
    for k in range(d):
        up = pts + unit[k]
        down = pts - unit[k]
        up_in = np.array([tuple(x) in inside for x in up.tolist()], dtype=bool)
        down_in = np.array([tuple(x) in inside for x in down.tolist()], dtype=bool)
        pairs.append(np.stack([pts[up_in], up[up_in]], axis=1))
        if boundary:
            pairs.append(np.stack([pts[~up_in], up[~up_in]], axis=1))
            pairs.append(np.stack([down[~down_in], pts[~down_in]], axis=1))
    pairs = np.concatenate(pairs) if pairs else np.zeros((0, 2, d), dtype=np.int64)
    return _assemble(d, pts, pairs, inside, faces or {}, spec, name)


def _assemble(d, pts, pairs, inside, face_fns, spec, name):
    # pairs: (m, 2, d) with pairs[:, 0] < pairs[:, 1] lexicographically
    order = _lex_sort_rows(pairs.reshape(len(pairs), 2 * d))
    pairs = pairs[order]
    flat = pairs.reshape(-1, d)
    in_mask = _member(flat, pts)
    ghosts = np.unique(flat[~in_mask], axis=0) if (~in_mask).any() else np.zeros((0, d), np.int64)
    ghosts = ghosts[_lex_sort_rows(ghosts)] if len(ghosts) else ghosts
    region = Region(d=d, vertices=pts, ghosts=ghosts, edges=np.zeros((0, 2), np.int64),
                    spec=spec, name=name)
    idx = np.array([region.index(x) for x in flat], dtype=np.int64) if len(flat) else np.zeros(0, np.int64)
    edges = idx.reshape(-1, 2)
    region = Region(d=d, vertices=pts, ghosts=ghosts, edges=edges, spec=spec, name=name)
    faces = {key: np.flatnonzero(fn(region.coords, region.is_ghost)) for key, fn in face_fns.items()}
    object.__setattr__(region, "faces", faces)
    return region


def _member(rows, pts):
    s = {tuple(x) for x in pts.tolist()}
    return np.array([tuple(x) in s for x in rows.tolist()], dtype=bool)


def _product_points(ranges):
    grids = np.meshgrid(*[np.arange(a, b + 1) for a, b in ranges], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)


def _product_region(ranges, face_fns, spec):
    """Fast path for products of intervals; same result as ``region_from_vertices``."""
    d = len(ranges)
    pts = _product_points(ranges)
    lo = np.array([a for a, _ in ranges])
    hi = np.array([b for _, b in ranges])
    unit = np.eye(d, dtype=np.int64)
    pairs = []
    for k in range(d):
        up = pts + unit[k]
        pairs.append(np.stack([pts, up], axis=1))  # up is either inside or a ghost
        low = pts[pts[:, k] == lo[k]]
        pairs.append(np.stack([low - unit[k], low], axis=1))
    pairs = np.concatenate(pairs)
    order = _lex_sort_rows(pairs.reshape(len(pairs), 2 * d))
    pairs = pairs[order]
    flat = pairs.reshape(-1, d)
    in_mask = np.all((flat >= lo) & (flat <= hi), axis=1)
    ghosts = np.unique(flat[~in_mask], axis=0)
    ghosts = ghosts[_lex_sort_rows(ghosts)]
    region = Region(d=d, vertices=pts, ghosts=ghosts, edges=np.zeros((0, 2), np.int64), spec=spec)
    lo_t, shape, table = region._lookup
    edges = table[np.ravel_multi_index((flat - lo_t).T, shape)].reshape(-1, 2)
    region = Region(d=d, vertices=pts, ghosts=ghosts, edges=edges, spec=spec,
                    name=spec.kind if spec else "")
    faces = {key: np.flatnonzero(fn(region.coords, region.is_ghost)) for key, fn in face_fns.items()}
    object.__setattr__(region, "faces", faces)
    return region


def _boundary_face(region_ranges):
    lo = np.array([a for a, _ in region_ranges])
    hi = np.array([b for _, b in region_ranges])

    def face(c, ghost):
        return ~ghost & np.any((c == lo) | (c == hi), axis=1)
    return face


def build_region(spec: RegionSpec) -> Region:
    """Build the region described by ``spec``.

    Faces: ``boundary`` (inner vertex boundary) for boxes and slabs; ``top``,
    ``bot`` and ``lateral`` (region vertices) plus ``plus``/``minus`` (ghosts
    with last coordinate >= 0 / < 0) for rectangles; ``bottom``/``rest``
    (ghosts) for half-boxes.
    """
    d = spec.d
    if d < 2:
        raise ValueError("dimension must be >= 2")
    sizes = {k: getattr(spec, k) for k in "LNMK" if getattr(spec, k) is not None}
    # Box(0) is the single site; every other size must be positive
    if any(v < 1 for k, v in sizes.items() if not (spec.kind == "box" and v == 0)):
        raise ValueError(f"sizes must be >= 1, got {sizes}")
    if spec.kind == "box":
        N = spec.N
        ranges = [(-N, N)] * d
        return _product_region(ranges, {"boundary": _boundary_face(ranges)}, spec)
    if spec.kind == "slab":
        if d < 3:
            raise ValueError("slab requires d >= 3")
        ranges = [(-spec.L, spec.L)] * (d - 2) + [(-spec.N, spec.N)] * 2
        return _product_region(ranges, {"boundary": _boundary_face(ranges)}, spec)
    if spec.kind == "rect":
        L, M = spec.L, spec.M
        ranges = [(-L, L)] * (d - 1) + [(-M, M)]
        lateral_lo = np.array([-L] * (d - 1))
        faces = {
            "top": lambda c, g: ~g & (c[:, -1] == M),
            "bot": lambda c, g: ~g & (c[:, -1] == -M),
            "lateral": lambda c, g: (~g & (np.abs(c[:, -1]) < M)
                                     & np.any(np.abs(c[:, :-1]) == -lateral_lo, axis=1)),
            "plus": lambda c, g: g & (c[:, -1] >= 0),
            "minus": lambda c, g: g & (c[:, -1] < 0),
        }
        return _product_region(ranges, faces, spec)
    if spec.kind == "halfbox":
        K = spec.K
        ranges = [(-K, K)] * (d - 1) + [(0, K)]
        faces = {
            "bottom": lambda c, g: g & (c[:, -1] == -1),
            "rest": lambda c, g: g & (c[:, -1] != -1),
        }
        return _product_region(ranges, faces, spec)
    raise ValueError(f"unknown region kind {spec.kind!r}")


def single_edge(d=2):
    """Two adjacent vertices joined by one edge, no ghosts."""
    return region_from_vertices([(0,) * d, (1,) + (0,) * (d - 1)], boundary=False, name="edge")


def plaquette(d=2):
    """The unit square {0,1}^2 (padded with zeros) with its four edges, no ghosts."""
    pts = [(a, b) + (0,) * (d - 2) for a in (0, 1) for b in (0, 1)]
    return region_from_vertices(pts, boundary=False, name="plaquette")


def round_half_up(x):
    """Nearest integer, ties toward +infinity."""
    if isinstance(x, float):
        return math.floor(x + 0.5)
    return math.floor(Fraction(x) + Fraction(1, 2))


def annulus_sequence(L, delta, center=None):
    """Nested boxes V_i of radius round(delta*L/2) - i*round(sqrt(L)).

    ``i`` runs from 0 to ``max(1, floor(delta*sqrt(L)/4))``; every radius must
    stay >= 1. Each V_i is returned as the annulus V_0 minus V_i (V_0 itself
    for ``i = 0``, inner radius 0 standing for the empty hole).
    """
    delta = Fraction(delta).limit_denominator(10**6) if not isinstance(delta, Fraction) else delta
    if L < 1 or delta <= 0:
        raise ValueError("need L >= 1 and delta > 0")
    r0 = round_half_up(delta * L / 2)
    step = round_half_up(math.sqrt(L))
    imax = max(1, math.floor(float(delta) * math.sqrt(L) / 4))
    radii = [r0 - i * step for i in range(imax + 1)]
    if radii[-1] < 1:
        raise ValueError(f"annulus radius rounds below 1: {radii}")
    c = tuple(center) if center is not None else ()
    return [BoxSpec(r, c) for r in radii]


def grid_boxes(R, ell, center=None, d=None):
    """Points of ell*Z^d (anchored at ``center``) inside the box of radius R.

    Each point x stands for the box of radius ``ell`` around x.
    """
    if not 1 <= ell <= R:
        raise ValueError(f"need 1 <= ell <= R, got ell={ell}, R={R}")
    if center is None:
        if d is None:
            raise ValueError("give center or d")
        center = (0,) * d
    k = R // ell
    offsets = range(-k * ell, k * ell + 1, ell)
    return [tuple(c + o for c, o in zip(center, off))
            for off in itertools.product(offsets, repeat=len(center))]
