"""Named events on (omega, gamma) and Monte Carlo estimators for them."""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .clusters import BondConfig, BoundarySpec, graph_for, label_clusters
from .geometry import Region, RegionSpec, annulus_sequence, build_region, grid_boxes
from .oracle import EventPredicate, FkParams
from .sampler import default_kernel, run_chain
from .rng import stream
from .stats import EstimatorResult, FLAG_BOUND, pooled, rate_result


# --- sampling plumbing -----------------------------------------------------


@dataclass
class SamplerSpec:
    """Where and how (omega, gamma) pairs are drawn."""

    region: Region
    bc: BoundarySpec = field(default_factory=BoundarySpec.free)
    p: float = 0.5
    q: float = 2.0
    eps: float = 0.0
    kernel: str | None = None
    burn_in: int = 1000
    thin: int = 10
    init: str = "zeros"

    def __post_init__(self):
        FkParams(self.p, self.q)
        if not 0.0 <= self.eps <= 1.0:
            raise ValueError("eps must lie in [0, 1]")
        if self.kernel is None:
            self.kernel = default_kernel(self.q, self.region, self.bc)


def split(samples, segments):
    if samples < 1 or segments < 1:
        raise ValueError("samples and segments must be positive")
    if segments > samples:
        raise ValueError("more segments than samples")
    base, extra = divmod(samples, segments)
    return [base + (1 if i < extra else 0) for i in range(segments)]


def _segment(observable, spec: SamplerSpec, n, seed, key):
    params = FkParams(spec.p, spec.q)
    sprinkle = stream(seed, "sprinkle", *key)
    out = []
    zeros = np.zeros(spec.region.n_edges, np.uint8)
    for state in run_chain(spec.region, spec.bc, params, n, seed, *key, burn_in=spec.burn_in,
                           thin=spec.thin, kernel=spec.kernel, init=spec.init):
        if spec.eps > 0:
            gamma = (sprinkle.random(spec.region.n_edges) < spec.eps).astype(np.uint8)
        else:
            gamma = zeros
        out.append(np.atleast_1d(np.asarray(observable(state.bonds, gamma), dtype=np.float64)))
    return np.array(out)


def sample_observable(observable, spec: SamplerSpec, samples, seed, key=(), segments=1, chains=1):
    """Per-segment arrays of observable values (samples x observables).

    Segment ``j`` is an independent chain keyed by ``(seed, *key, j)``; the
    worker count ``chains`` only changes scheduling, never the numbers.
    """
    if chains < 1:
        raise ValueError("chains must be >= 1")
    sizes = split(samples, segments)
    jobs = [(n, tuple(key) + (j,)) for j, n in enumerate(sizes)]
    if chains == 1:
        return [_segment(observable, spec, n, seed, k) for n, k in jobs]
    with ThreadPoolExecutor(max_workers=chains) as pool:
        return list(pool.map(lambda job: _segment(observable, spec, job[0], seed, job[1]), jobs))


def estimate_many(observable, spec, samples, seed, key=(), segments=1, chains=1, n_batches=20):
    """Means and batch-means errors of a vector-valued observable."""
    t0 = time.perf_counter()
    segs = sample_observable(observable, spec, samples, seed, key, segments, chains)
    mean, se = pooled(segs, n_batches)
    return mean, se, time.perf_counter() - t0


def params_record(spec: SamplerSpec | None = None, **kw):
    rec = {}
    if spec is not None:
        rs = spec.region.spec
        rec.update(d=spec.region.d, q=spec.q, p=spec.p, eps=spec.eps, bc=spec.bc.name)
        if rs is not None:
            rec.update({k: v for k, v in rs.to_dict().items() if k in "LNMK"})
    rec.update({k: v for k, v in kw.items() if v is not None})
    return rec


def estimate(event, spec: SamplerSpec, samples, seed, chains=1, segments=1, key=(), name=None):
    """Frequency of an event with a batch-means error.

    ``event`` is an ``EventPredicate`` (called with the bond configuration and
    its cluster labeling under the sampler's boundary condition) or a plain
    function of the ``(omega, gamma)`` bond arrays.
    """
    if isinstance(event, EventPredicate):
        region, bc = spec.region, spec.bc

        def obs(w, g):
            cfg = BondConfig(w, region)
            return float(event(cfg, label_clusters(region, cfg, bc)))
        label = event.name
    else:
        obs = event
        label = getattr(event, "__name__", "event")
    mean, se, wall = estimate_many(obs, spec, samples, seed, key or (label,), segments, chains)
    return EstimatorResult(name or label, params_record(spec, seed=seed), samples, float(mean[0]),
                           float(se[0]), wall_seconds=wall, segments=segments)


# --- box frames --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoxFrame:
    """Index arithmetic for regions that are products of intervals."""

    region: Region
    lo: np.ndarray
    hi: np.ndarray
    gstride: np.ndarray
    nbr_e: np.ndarray

    @classmethod
    def of(cls, region: Region):
        cached = getattr(region, "_frame", None)
        if cached is not None:
            return cached
        v = region.vertices
        lo, hi = v.min(axis=0), v.max(axis=0)
        shape = hi - lo + 1
        if int(np.prod(shape)) != region.n_inner:
            raise ValueError("region is not a product of intervals")
        stride = np.ones(region.d, dtype=np.int64)
        for k in range(region.d - 2, -1, -1):
            stride[k] = stride[k + 1] * shape[k + 1]
        idx = ((v - lo) * stride).sum(axis=1)
        if not np.array_equal(idx, np.arange(region.n_inner)):
            raise ValueError("region vertices are not in row-major order")
        frame = cls(region, lo.astype(np.int64), hi.astype(np.int64), stride,
                    np.ascontiguousarray(region.neighbor_table[1][: region.n_inner]))
        object.__setattr__(region, "_frame", frame)
        return frame

    def center(self, c=None):
        c = np.zeros(self.region.d, np.int64) if c is None else np.asarray(c, dtype=np.int64)
        if c.shape != (self.region.d,):
            raise ValueError("center has the wrong dimension")
        return c

    def check_box(self, center, r):
        if np.any(center - r < self.lo) or np.any(center + r > self.hi):
            raise ValueError(f"box of radius {r} at {tuple(center.tolist())} leaves the region")

    def components(self, omega, center, r):
        """Local labels of omega restricted to the radius-r box (C order over offsets)."""
        self.check_box(center, r)
        dist = kernels.box_dist(r, self.region.d)
        w = _u8(omega)
        return kernels.box_components(self.nbr_e, self.gstride, self.lo, center, r, w, w, 0, -1, dist), dist

    def local_coords(self, r):
        side = 2 * r + 1
        grids = np.meshgrid(*[np.arange(-r, r + 1)] * self.region.d, indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)


def _u8(bits):
    if isinstance(bits, BondConfig):
        bits = bits.bits
    return np.ascontiguousarray(bits, dtype=np.uint8)


# --- events ------------------------------------------------------------------


def density_event(omega, region: Region, ell, R_inner, R_outer, center=None) -> bool:
    """Every grid box of radius ell (grid ell Z^d inside the radius-R_inner box)
    is joined to the sphere of radius R_outer by omega inside the R_outer box."""
    if not (1 <= ell <= R_inner < R_outer):
        raise ValueError("need 1 <= ell <= R_inner < R_outer")
    frame = BoxFrame.of(region)
    c = frame.center(center)
    parent, dist = frame.components(omega, c, R_outer)
    good_root = np.zeros(len(parent), dtype=bool)
    good_root[parent[dist == R_outer]] = True
    good = good_root[parent].reshape((2 * R_outer + 1,) * region.d)
    for x in grid_boxes(R_inner, ell, center=(0,) * region.d):
        sl = tuple(slice(max(0, xi - ell + R_outer), min(2 * R_outer, xi + ell + R_outer) + 1) for xi in x)
        if not good[sl].any():
            return False
    return True


def unique_event(omega, gamma, region: Region, L, center=None) -> bool:
    """Unique(L) at ``center``: a cluster of omega in the L-box reaches from the
    L/8 sphere to the L sphere, and every cluster crossing from the L/4 to the
    L/2 sphere falls into one component of (omega | gamma) inside the L/2 box."""
    return unique_parts(omega, gamma, region, L, center)[1]


def unique_parts(omega, gamma, region, L, center=None):
    if L < 8:
        raise ValueError("Unique(L) needs L >= 8")
    frame = BoxFrame.of(region)
    c = frame.center(center)
    frame.check_box(c, L)
    a, full = kernels.unique_event(frame.nbr_e, frame.gstride, frame.lo, c, L, _u8(omega), _u8(gamma))
    return bool(a), bool(full)


@dataclass
class USequence:
    values: list  # (i, U_i)

    @property
    def monotone(self):
        us = [u for _, u in self.values]
        return all(b <= a for a, b in zip(us, us[1:]))

    @property
    def final(self):
        return self.values[-1][1]

    def halving(self, step=8):
        """Per i: whether U_{i+step} > max(1, U_i / 2)."""
        us = dict(self.values)
        return {i: us[i + step] > max(1, us[i] / 2) for i in us if i + step in us}


def u_radii(L, delta):
    boxes = annulus_sequence(L, delta)
    R = math.floor(delta * L)
    if R <= boxes[0].radius:
        raise ValueError("outer box must be larger than V_0")
    return R, [b.radius for b in boxes]


def u_sequence(omega, gamma, region, L, delta, center=None) -> USequence:
    """Class counts U_i of the clusters meeting V_0's sphere, merged through
    omega plus the sprinkled edges of V_0 minus V_i."""
    R, radii = u_radii(L, delta)
    frame = BoxFrame.of(region)
    c = frame.center(center)
    frame.check_box(c, R)
    us = kernels.u_sequence(frame.nbr_e, frame.gstride, frame.lo, c, R, np.array(radii, np.int64),
                            _u8(omega), _u8(gamma))
    return USequence(list(enumerate(us.tolist())))


def _face_mask(local, L, M, top):
    inside = np.all(np.abs(local[:, :-1]) <= L, axis=1)
    return inside & (local[:, -1] == (M if top else -M))


def disconnected(omega, region, L, M, R, center=None) -> bool:
    """Bottom face of the (L, M) rectangle not joined to its top face by omega in the R-box."""
    frame = BoxFrame.of(region)
    c = frame.center(center)
    if M > R or L > R:
        raise ValueError("rectangle does not fit in the box")
    parent, _ = frame.components(omega, c, R)
    local = frame.local_coords(R)
    top = set(np.unique(parent[_face_mask(local, L, M, True)]).tolist())
    bot = np.unique(parent[_face_mask(local, L, M, False)])
    return not any(b in top for b in bot.tolist())


def connected_pairs(bits, region, pairs, bc=None):
    """Whether each (x, y) vertex pair is joined by open edges, wiring blocks
    of ``bc`` included (none by default)."""
    g = graph_for(region, bc or _FREE)
    roots = kernels.label(g.n_nodes, g.eu, g.ev, _u8(bits))
    node = g.node_of
    return np.array([roots[node[a]] == roots[node[b]] for a, b in pairs], dtype=bool)


_FREE = BoundarySpec.free()


# --- estimators ------------------------------------------------------------


def tau_height(L, delta):
    M = math.floor(delta * L)
    if M < 1:
        raise ValueError("delta * L rounds below 1")
    return M


def disconnection_free(L, delta, C, p, q=2.0, samples=1000, seed=0, d=3, segments=1, chains=1,
                       burn_in=1000, thin=10, kernel=None, n_batches=20):
    """phi^0 on the CL-box of {bottom of R(L, delta L) not joined to its top},
    with tau = log(1/prob)/L^{d-1}."""
    if C < 1 or delta <= 0 or delta > C:
        raise ValueError("need C >= 1 and 0 < delta <= C")
    M = tau_height(L, delta)
    R = math.floor(C * L)
    region = build_region(RegionSpec.box(R, d))
    spec = SamplerSpec(region, BoundarySpec.free(), p, q, kernel=kernel, burn_in=burn_in, thin=thin)
    obs = lambda w, g: float(disconnected(w, region, L, M, R))
    mean, se, wall = estimate_many(obs, spec, samples, seed, ("disconnection", L, M, R), segments, chains, n_batches)
    rec = params_record(spec, L=L, delta=delta, C=C, seed=seed)
    return rate_result("disconnection_free", rec, float(mean[0]), float(se[0]), samples,
                       L ** (d - 1), "tau_free", wall_seconds=wall, segments=segments)


def plan_sizes(Ls, pilot, samples, min_hits=10):
    """Largest prefix of ``Ls`` whose pilot probability times ``samples`` reaches
    ``min_hits``; sizes beyond it are reported as bounds only."""
    keep = []
    for L in sorted(Ls):
        if pilot(L) * samples < min_hits:
            break
        keep.append(L)
    return keep


def slab_connection(L, N, p, q=2.0, eps=0.0, targets=((0, 0, 0),), samples=1000, seed=0, d=3,
                    segments=1, chains=1, burn_in=1000, thin=10, kernel=None, n_batches=20):
    """psi^0 on the slab of {0 <-> x in omega | gamma} for each target x."""
    region = build_region(RegionSpec.slab(L, N, d))
    origin = region.index((0,) * d)
    pairs = []
    for x in targets:
        try:
            pairs.append((origin, region.index(x)))
        except KeyError:
            raise ValueError(f"target {tuple(x)} is outside the slab") from None
    spec = SamplerSpec(region, BoundarySpec.free(), p, q, eps, kernel=kernel, burn_in=burn_in, thin=thin)
    obs = lambda w, g: connected_pairs(w | g, region, pairs).astype(np.float64)
    mean, se, wall = estimate_many(obs, spec, samples, seed, ("slab", L, N), segments, chains, n_batches)
    out = []
    for x, m, s in zip(targets, mean, se):
        rec = params_record(spec, seed=seed, x=list(map(int, x)))
        out.append(EstimatorResult("slab_connection", rec, samples, float(m), float(s),
                                   wall_seconds=wall, segments=segments))
    return out


def far_corners(L, N, d=3):
    """Targets used to probe the infimum over x: corners of the slab's last two coordinates."""
    return [(0,) * (d - 2) + (a, b) for a in (-N, N) for b in (-N, N)] + [(L,) * (d - 2) + (N, N)]


def unique_frequency(L, delta, p, eps, q=2.0, samples=100, seed=0, d=3, segments=1, chains=1,
                     burn_in=1000, thin=10, kernel=None, n_batches=20, bc="free"):
    """Frequencies of Unique(delta L) at the origin, the final U = 1, and the
    per-sample monotonicity of the U sequence (all on one chain).

    ``bc`` is ``free`` or ``wired`` on the outer box; the two extremes are the
    only boundary conditions the estimator offers.
    """
    R, radii = u_radii(L, delta)
    scale = math.floor(delta * L)
    region = build_region(RegionSpec.box(max(R, scale), d))

    def obs(w, g):
        _, uni = unique_parts(w, g, region, scale)
        seq = u_sequence(w, g, region, L, delta)
        return [float(uni), float(seq.final == 1), float(seq.monotone)]

    if bc not in ("free", "wired"):
        raise ValueError(f"bc must be 'free' or 'wired', got {bc!r}")
    outer = BoundarySpec.wired(region) if bc == "wired" else BoundarySpec.free()
    spec = SamplerSpec(region, outer, p, q, eps, kernel=kernel, burn_in=burn_in, thin=thin)
    mean, se, wall = estimate_many(obs, spec, samples, seed, ("unique", L), segments, chains, n_batches)
    rec = params_record(spec, L=L, delta=delta, seed=seed)
    names = ("unique", "u_final_one", "u_monotone")
    return [EstimatorResult(n, rec, samples, float(m), float(s), wall_seconds=wall, segments=segments)
            for n, m, s in zip(names, mean, se)]


def default_ell(L, d, c0=1.0):
    return max(1, math.ceil(c0 * math.log(L) ** (1.0 / (d - 1))))


__all__ = [
    "SamplerSpec", "estimate", "estimate_many", "sample_observable", "BoxFrame", "density_event",
    "unique_event", "unique_parts", "USequence", "u_sequence", "disconnected", "connected_pairs",
    "disconnection_free", "plan_sizes", "slab_connection", "far_corners", "unique_frequency",
    "default_ell", "FLAG_BOUND",
]
