"""Coarse-grained site field built from Unique events along a slab."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import ndimage

from . import kernels
from .clusters import BoundarySpec, graph_for
from .events import BoxFrame, SamplerSpec, sample_observable, _u8
from .geometry import RegionSpec, build_region, round_half_up
from .stats import pooled

SITE_THRESHOLD_2D = 0.593


def _frac(x):
    return x if isinstance(x, Fraction) else Fraction(x).limit_denominator(10**6)


def renorm_n(L, N, delta):
    return math.floor(8 * (N - L) / (_frac(delta) * L))


def renorm_sites(L, N, delta, d=3):
    """Centers x(u), u in {-n..n}^2, as an array of shape (2n+1, 2n+1, d).

    The last two coordinates are round(delta L u / 8); the others are 0.
    """
    delta = _frac(delta)
    n = renorm_n(L, N, delta)
    if n < 1:
        raise ValueError(f"n = {n}; need N large enough for at least one step")
    step = delta * L / 8
    coords = np.array([round_half_up(step * u) for u in range(-n, n + 1)], dtype=np.int64)
    if np.abs(coords).max() + L > N:
        raise ValueError("the L-box around some site leaves the slab")
    out = np.zeros((2 * n + 1, 2 * n + 1, d), dtype=np.int64)
    out[:, :, d - 2] = coords[:, None]
    out[:, :, d - 1] = coords[None, :]
    return out


@dataclass
class RenormField:
    n: int
    values: np.ndarray  # (2n+1, 2n+1) uint8, entry [u1 + n, u2 + n]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.uint8)
        if self.values.shape != (2 * self.n + 1,) * 2:
            raise ValueError("field shape does not match n")

    def __getitem__(self, u):
        return int(self.values[u[0] + self.n, u[1] + self.n])

    def rle(self):
        """Run-length encoding of the row-major field: [value, run, value, run, ...]."""
        flat = self.values.ravel()
        cut = np.flatnonzero(np.diff(flat)) + 1
        starts = np.concatenate([[0], cut])
        runs = np.diff(np.concatenate([starts, [len(flat)]]))
        return [int(v) for pair in zip(flat[starts], runs) for v in pair]


def eta_field(omega, gamma, region, L, N, delta, sample_id=None) -> RenormField:
    """eta_u = Unique(delta L) at x(u), every cluster computed inside its own box."""
    delta = _frac(delta)
    scale = math.floor(delta * L)
    sites = renorm_sites(L, N, delta, region.d)
    n = (sites.shape[0] - 1) // 2
    frame = BoxFrame.of(region)
    centers = sites.reshape(-1, region.d)
    frame.check_box(centers.min(axis=0), 0)
    for c in (centers.min(axis=0), centers.max(axis=0)):
        frame.check_box(c, scale)
    vals = kernels.unique_many(frame.nbr_e, frame.gstride, frame.lo, centers, scale, _u8(omega), _u8(gamma))
    return RenormField(n, vals.reshape(2 * n + 1, 2 * n + 1),
                       dict(L=L, N=N, delta=str(delta), d=region.d, sample=sample_id))


def _site_labels(values):
    labels, _ = ndimage.label(values)  # default structure: nearest neighbours
    return labels


def site_connectivity(fld: RenormField, u, v) -> bool:
    """u and v joined by a nearest-neighbour path of open sites."""
    for w in (u, v):
        if max(abs(w[0]), abs(w[1])) > fld.n:
            raise ValueError(f"site {tuple(w)} outside B_n")
    if not (fld[u] and fld[v]):
        return False
    labels = _site_labels(fld.values)
    return labels[u[0] + fld.n, u[1] + fld.n] == labels[v[0] + fld.n, v[1] + fld.n]


def origin_cluster(fld: RenormField):
    """Boolean (2n+1, 2n+1) mask of sites joined to the origin."""
    if not fld[(0, 0)]:
        return np.zeros_like(fld.values, dtype=bool)
    labels = _site_labels(fld.values)
    return labels == labels[fld.n, fld.n]


def _probe_offsets(k, probes):
    if probes == "axes":
        return [(k, 0), (-k, 0), (0, k), (0, -k)]
    if probes == "star":
        return [(a, b) for a in (-k, 0, k) for b in (-k, 0, k) if (a, b) != (0, 0)]
    raise ValueError(f"unknown probe set {probes!r}")


def eta_statistics(fields, k=None, delta=None, probes="axes", min_count=20):
    """Marginal density per site and the smallest conditional density.

    A conditioning class is the joint value of the far probe sites at sup
    distance ``k`` from u (``axes``: the four sites u +- k e_i; ``star``: all
    eight sites of the ring's axes and diagonals), pooled over every u whose
    probes lie in B_n. Classes seen fewer than ``min_count`` times are skipped.
    """
    if not fields:
        raise ValueError("no fields")
    if k is None:
        if delta is None:
            raise ValueError("give k or delta")
        k = math.ceil(16 / _frac(delta))
    n = fields[0].n
    stack = np.stack([f.values for f in fields]).astype(np.int64)
    density = stack.mean(axis=0)
    offs = _probe_offsets(k, probes)
    side = 2 * n + 1
    lo = max(abs(a) for a, _ in offs)
    if lo > n:
        raise ValueError(f"probe distance {k} exceeds n = {n}")
    inner = slice(lo, side - lo)
    code = np.zeros(stack[:, inner, inner].shape, dtype=np.int64)
    for j, (a, b) in enumerate(offs):
        code |= stack[:, lo + a: side - lo + a, lo + b: side - lo + b] << j
    target = stack[:, inner, inner]
    keys, inv = np.unique(code.ravel(), return_inverse=True)
    tot = np.bincount(inv, minlength=len(keys))
    hits = np.bincount(inv, weights=target.ravel(), minlength=len(keys))
    used = tot >= min_count
    rates = hits[used] / tot[used]
    report = dict(k=k, probes=probes, density=density, mean_density=float(density.mean()),
                  classes_used=int(used.sum()), classes_skipped=int((~used).sum()),
                  skipped_observations=int(tot[~used].sum()))
    if used.any():
        j = int(np.argmin(rates))
        c = tot[used][j]
        report.update(alpha_hat=float(rates[j]), alpha_se=float(math.sqrt(rates[j] * (1 - rates[j]) / c)),
                      alpha_class=int(keys[used][j]), alpha_count=int(c))
    else:
        report.update(alpha_hat=float("nan"), alpha_se=float("nan"))
    return report


def witness_violations(fld: RenormField, omega, gamma, region, L, N, delta):
    """Sites u joined to the origin in eta whose small boxes around 0 and x(u)
    are not joined in omega | gamma inside the slab; returns their count."""
    delta = _frac(delta)
    small = math.floor(delta * L / 8)
    sites = renorm_sites(L, N, delta, region.d)
    reach = origin_cluster(fld)
    if not reach.any():
        return 0
    g = graph_for(region, BoundarySpec.free())
    roots = kernels.label(g.n_nodes, g.eu, g.ev, _u8(omega) | _u8(gamma))
    frame = BoxFrame.of(region)
    offsets = np.stack(np.meshgrid(*[np.arange(-small, small + 1)] * region.d, indexing="ij"),
                       axis=-1).reshape(-1, region.d)

    def roots_near(c):
        idx = ((c + offsets - frame.lo) * frame.gstride).sum(axis=1)
        return set(np.unique(roots[idx]).tolist())

    origin = np.zeros(region.d, np.int64)
    base = roots_near(origin)
    bad = 0
    for i, j in zip(*np.nonzero(reach)):
        if not base & roots_near(sites[i, j]):
            bad += 1
    return bad


def gamma_flip_violations(omega, gamma, region, L, N, delta, rng, flips):
    """Open random closed gamma edges one at a time (each flip on its own,
    starting from ``gamma``) and count eta sites that drop from 1 to 0.

    Only sites whose box contains the flipped edge are recomputed; the rest
    cannot change.
    """
    delta = _frac(delta)
    scale = math.floor(delta * L)
    omega, gamma = _u8(omega), _u8(gamma)
    base = eta_field(omega, gamma, region, L, N, delta).values.ravel()
    centers = renorm_sites(L, N, delta, region.d).reshape(-1, region.d)
    frame = BoxFrame.of(region)
    closed = np.flatnonzero(gamma == 0)
    bad = 0
    for e in rng.choice(closed, size=min(flips, len(closed)), replace=False):
        ends = region.coords[region.edges[e]]
        near = np.flatnonzero(np.all(np.abs(centers[:, None, :] - ends[None]).max(axis=2) <= scale, axis=1))
        if len(near) == 0:
            continue
        trial = gamma.copy()
        trial[e] = 1
        after = kernels.unique_many(frame.nbr_e, frame.gstride, frame.lo, centers[near], scale, omega, trial)
        bad += int(np.sum(base[near].astype(bool) & ~after))
    return bad


def renorm_pipeline(L, N, p, eps, delta, samples=100, seed=0, d=3, q=2.0, far=None,
                    segments=1, chains=1, burn_in=1000, thin=10, kernel=None, keep_fields=False):
    """Sample (omega, gamma) on the slab and report eta density, alpha-hat,
    eta connection frequencies from the origin, direct omega|gamma connection
    frequencies to far points, witness violations and fully open sprinkling boxes."""
    delta = _frac(delta)
    region = build_region(RegionSpec.slab(L, N, d))
    sites = renorm_sites(L, N, delta, d)
    n = (sites.shape[0] - 1) // 2
    far = list(far) if far is not None else [(n, n), (n, -n), (-n, n), (-n, -n), (n, 0)]
    far_x = [tuple(int(v) for v in sites[a + n, b + n]) for a, b in far]
    origin = region.index((0,) * d)
    targets = [region.index(x) for x in far_x]
    g = graph_for(region, BoundarySpec.free())
    full_box = np.flatnonzero(region.edges_within(region.ball(L)))

    def obs(w, gm):
        fld = eta_field(w, gm, region, L, N, delta)
        reach = origin_cluster(fld)
        roots = kernels.label(g.n_nodes, g.eu, g.ev, w | gm)
        direct = [float(roots[origin] == roots[t]) for t in targets]
        viol = witness_violations(fld, w, gm, region, L, N, delta)
        eta_far = [float(reach[a + n, b + n]) for a, b in far]
        return ([fld.values.mean(), float(reach.mean())] + eta_far + direct
                + [float(viol), float(gm[full_box].all())] + fld.values.ravel().tolist())

    spec = SamplerSpec(region, BoundarySpec.free(), p, q, eps, kernel=kernel, burn_in=burn_in, thin=thin)
    t0 = time.perf_counter()
    segs = sample_observable(obs, spec, samples, seed, ("renorm", L, N), segments, chains)
    head = 2 + 2 * len(far)
    mean, se = pooled([s[:, :head] for s in segs])
    flat = np.concatenate(segs)
    k = len(far)
    all_fields = [RenormField(n, row[head + 2:].reshape(2 * n + 1, 2 * n + 1)) for row in flat]
    stats = eta_statistics(all_fields, k=min(math.ceil(16 / delta), n), min_count=20)
    return dict(
        L=L, N=N, p=p, eps=eps, delta=str(delta), d=d, samples=samples, n=n,
        eta_density=(float(mean[0]), float(se[0])),
        eta_origin_cluster=(float(mean[1]), float(se[1])),
        eta_far=[(far[i], float(mean[2 + i]), float(se[2 + i])) for i in range(k)],
        direct=[(far_x[i], float(mean[2 + k + i]), float(se[2 + k + i])) for i in range(k)],
        witness_violations=int(flat[:, head].sum()),
        full_box_open=float(flat[:, head + 1].mean()),
        alpha_hat=stats["alpha_hat"], alpha_se=stats["alpha_se"], alpha_k=stats["k"],
        classes_used=stats["classes_used"], classes_skipped=stats["classes_skipped"],
        site_threshold=SITE_THRESHOLD_2D, fields=all_fields if keep_fields else None,
        wall_seconds=time.perf_counter() - t0,
    )
