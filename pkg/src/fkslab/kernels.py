"""Compiled inner loops. All of them work on the quotient graph in which every
wiring block is a single node (see ``clusters.Graph``)."""
import numpy as np
from numba import njit

JIT = dict(cache=True, nogil=True)


@njit(**JIT)
def find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(**JIT)
def union(parent, size, a, b):
    ra = find(parent, a)
    rb = find(parent, b)
    if ra == rb:
        return ra
    if size[ra] < size[rb]:
        ra, rb = rb, ra
    parent[rb] = ra
    size[ra] += size[rb]
    return ra


@njit(**JIT)
def label(n, eu, ev, bonds):
    """Root of every node after merging along open edges (fully compressed)."""
    parent = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    for e in range(len(eu)):
        if bonds[e]:
            union(parent, size, eu[e], ev[e])
    for x in range(n):
        find(parent, x)
    return parent


@njit(**JIT)
def count_counted(parent, counted, stamp):
    """Number of distinct components holding at least one counted node."""
    k = 0
    for x in range(len(parent)):
        if counted[x]:
            r = parent[x]
            if stamp[r] == 0:
                stamp[r] = 1
                k += 1
    for x in range(len(parent)):
        stamp[parent[x]] = 0
    return k


@njit(**JIT)
def _bfs(start, target, adj_ptr, adj_nbr, adj_edge, bonds, skip, counted, seen, tag, queue):
    """Explore the open component of ``start`` ignoring edge ``skip``.

    Returns (reached target, component holds a counted node).
    """
    head = 0
    tail = 1
    queue[0] = start
    seen[start] = tag
    has_counted = counted[start]
    while head < tail:
        x = queue[head]
        head += 1
        for j in range(adj_ptr[x], adj_ptr[x + 1]):
            e = adj_edge[j]
            if e == skip or not bonds[e]:
                continue
            y = adj_nbr[j]
            if seen[y] == tag:
                continue
            if y == target:
                return True, True
            seen[y] = tag
            if counted[y]:
                has_counted = True
            queue[tail] = y
            tail += 1
    return False, has_counted


@njit(**JIT)
def heat_bath_sweep(eu, ev, adj_ptr, adj_nbr, adj_edge, counted, pe, q, bonds, u, seen, queue, tag):
    """One exact single-edge heat-bath sweep in edge-index order.

    The open probability of edge e is pe/(pe + (1-pe) q^dk), where dk is the
    drop in the cluster count caused by opening e with everything else fixed.
    Returns the updated BFS tag counter.
    """
    for e in range(len(eu)):
        a = eu[e]
        b = ev[e]
        dk = 0
        if a != b:
            tag += 1
            reached, a_counted = _bfs(a, b, adj_ptr, adj_nbr, adj_edge, bonds, e, counted,
                                      seen, tag, queue)
            if not reached and a_counted:
                if counted[b]:
                    dk = 1
                else:
                    tag += 1
                    _, b_counted = _bfs(b, -1, adj_ptr, adj_nbr, adj_edge, bonds, e, counted,
                                        seen, tag, queue)
                    if b_counted:
                        dk = 1
        p = pe[e]
        if dk == 0:
            prob = p
        else:
            prob = p / (p + (1.0 - p) * q)
        bonds[e] = 1 if u[e] < prob else 0
    return tag


@njit(**JIT)
def frozen_heat_bath_sweep(n, eu, ev, counted, pe, q, bonds, u):
    """Approximate sweep: connectivity is read from one labeling taken at the
    start of the sweep instead of being recomputed per edge."""
    parent = label(n, eu, ev, bonds)
    for e in range(len(eu)):
        a = eu[e]
        b = ev[e]
        p = pe[e]
        if parent[a] != parent[b] and counted[a] and counted[b]:
            prob = p / (p + (1.0 - p) * q)
        else:
            prob = p
        bonds[e] = 1 if u[e] < prob else 0


@njit(**JIT)
def swendsen_wang_step(n, eu, ev, counted, pinned, pe, bonds, u_spin, u_edge):
    """Edwards-Sokal round trip for q = 2; ``pinned`` is the wired node or -1."""
    parent = label(n, eu, ev, bonds)
    spin = np.zeros(n, dtype=np.int8)
    for x in range(n):
        if parent[x] == x:
            spin[x] = 1 if u_spin[x] < 0.5 else -1
    if pinned >= 0:
        spin[parent[pinned]] = 1
    for e in range(len(eu)):
        a = eu[e]
        b = ev[e]
        if counted[a] and counted[b]:
            agree = spin[parent[a]] == spin[parent[b]]
            bonds[e] = 1 if (agree and u_edge[e] < pe[e]) else 0
        else:
            bonds[e] = 1 if u_edge[e] < pe[e] else 0


@njit(**JIT)
def _root(parent, x):
    while parent[x] != x:
        x = parent[x]
    return x


@njit(**JIT)
def enumerate_clusters(n, eu, ev, counted, free_idx, fixed, start, stop, pa, pb):
    """Cluster count and pair connectivity for every assignment of the free edges.

    Assignment ``m`` opens free edge ``free_idx[j]`` iff bit j of m is set; the
    other edges keep their value in ``fixed``. The assignments are walked depth
    first (highest bit at the top) with a union-find that is rolled back on the
    way up, so each step costs one union rather than a full relabeling.
    """
    total = stop - start
    ks = np.empty(total, dtype=np.int8)
    conn = np.zeros((total, len(pa)), dtype=np.bool_)
    parent = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    live = counted.copy()
    nf = len(free_idx)
    is_free = np.zeros(len(eu), dtype=np.bool_)
    for j in range(nf):
        is_free[free_idx[j]] = True
    for e in range(len(eu)):
        if fixed[e] and not is_free[e]:
            union(parent, size, eu[e], ev[e])
    k = 0
    roots_live = np.zeros(n, dtype=np.bool_)
    for x in range(n):
        if counted[x]:
            roots_live[find(parent, x)] = True
    for x in range(n):
        live[x] = roots_live[x]
        if parent[x] == x and live[x]:
            k += 1
    val = np.full(nf + 1, -1, dtype=np.int64)
    child = np.full(nf + 1, -1, dtype=np.int64)  # root attached at this depth
    was_live = np.zeros(nf + 1, dtype=np.bool_)
    m = 0
    d = 0
    while d >= 0:
        if d == nf:
            if start <= m < stop:
                t = m - start
                ks[t] = k
                for j in range(len(pa)):
                    conn[t, j] = _root(parent, pa[j]) == _root(parent, pb[j])
            d -= 1
            continue
        bit = nf - 1 - d
        v = val[d]
        if v == 1:
            c = child[d]
            if c >= 0:
                r = parent[c]
                parent[c] = c
                size[r] -= size[c]
                if was_live[d] and live[c]:
                    k += 1
                live[r] = was_live[d]
            m -= 1 << bit
            val[d] = -1
            d -= 1
            continue
        if v == -1:
            val[d] = 0
        else:
            val[d] = 1
            m += 1 << bit
            e = free_idx[bit]
            ra = _root(parent, eu[e])
            rb = _root(parent, ev[e])
            if ra == rb:
                child[d] = -1
            else:
                if size[ra] < size[rb]:
                    ra, rb = rb, ra
                child[d] = rb
                was_live[d] = live[ra]
                if live[ra] and live[rb]:
                    k -= 1
                live[ra] = live[ra] or live[rb]
                parent[rb] = ra
                size[ra] += size[rb]
        d += 1
        val[d] = -1
    return ks, conn


@njit(**JIT)
def ising_heat_bath_sweep(spins, nbr_site, nbr_ghost, field, beta, u):
    """Site-by-site heat bath in index order. Neighbour slots hold a site index
    in ``nbr_site`` or a ghost index in ``nbr_ghost`` (the other one is -1)."""
    for x in range(len(spins)):
        m = 0.0
        for j in range(nbr_site.shape[1]):
            y = nbr_site[x, j]
            if y >= 0:
                m += spins[y]
            else:
                g = nbr_ghost[x, j]
                if g >= 0:
                    m += field[g]
        p_up = 1.0 / (1.0 + np.exp(-2.0 * beta * m))
        spins[x] = 1 if u[x] < p_up else -1


# --- box-local cluster computations --------------------------------------
# A box of radius r around ``center`` is indexed locally in C order over the
# offsets [-r, r]^d. ``gstride``/``lo`` map coordinates of a product region to
# its vertex index, ``nbr_e[v, 2k]`` is the edge from v in direction +e_k.


@njit(**JIT)
def _step(off, r):
    """Advance an offset vector through [-r, r]^d in C order."""
    k = len(off) - 1
    while k >= 0:
        if off[k] < r:
            off[k] += 1
            return
        off[k] = -r
        k -= 1


@njit(**JIT)
def box_dist(r, d):
    """Sup-norm distance to the center of every local vertex of the box."""
    n = (2 * r + 1) ** d
    out = np.empty(n, dtype=np.int64)
    off = np.full(d, -r, dtype=np.int64)
    for t in range(n):
        m = 0
        for k in range(d):
            a = abs(off[k])
            if a > m:
                m = a
        out[t] = m
        _step(off, r)
    return out


@njit(**JIT)
def box_components(nbr_e, gstride, lo, center, r, bonds_a, bonds_b, b_rin, b_rout, dist):
    """Union-find over the box of radius r using edges inside the box.

    An edge is open if bonds_a is set, or if bonds_b is set and both endpoints
    lie at sup-distance in (b_rin, b_rout] from the center.
    """
    d = len(center)
    side = 2 * r + 1
    n = side ** d
    parent = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    lstride = np.empty(d, dtype=np.int64)
    s = 1
    for k in range(d - 1, -1, -1):
        lstride[k] = s
        s *= side
    base = 0
    for k in range(d):
        base += (center[k] - r - lo[k]) * gstride[k]
    off = np.full(d, -r, dtype=np.int64)
    for t in range(n):
        v = base
        for k in range(d):
            v += (off[k] + r) * gstride[k]
        for k in range(d):
            if off[k] == r:
                continue
            e = nbr_e[v, 2 * k]
            t2 = t + lstride[k]
            is_open = bonds_a[e] != 0
            if not is_open and bonds_b[e] != 0:
                da = dist[t]
                db = dist[t2]
                is_open = da > b_rin and db > b_rin and da <= b_rout and db <= b_rout
            if is_open:
                union(parent, size, t, t2)
        _step(off, r)
    for t in range(n):
        find(parent, t)
    return parent


@njit(**JIT)
def _classes(parent_a, ra, parent_b, rb, member, d):
    """Merge clusters flagged in ``member`` (roots of the radius-ra labeling)
    whenever they meet a common component of the radius-rb labeling."""
    n_a = len(parent_a)
    cls = np.arange(n_a)
    size = np.ones(n_a, dtype=np.int64)
    rep = np.full(len(parent_b), -1, dtype=np.int64)
    side_a = 2 * ra + 1
    off = np.full(d, -rb, dtype=np.int64)
    for t in range(len(parent_b)):
        ta = 0
        for k in range(d):
            ta = ta * side_a + (off[k] + ra)
        _step(off, rb)
        a = parent_a[ta]
        if not member[a]:
            continue
        b = parent_b[t]
        if rep[b] < 0:
            rep[b] = a
        else:
            union(cls, size, a, rep[b])
    for t in range(n_a):
        find(cls, t)
    return cls


@njit(**JIT)
def unique_event(nbr_e, gstride, lo, center, L, omega, gamma):
    """Unique(L) at ``center``: returns (crossing part, full event)."""
    d = len(center)
    r2 = L // 2
    r4 = L // 4
    r8 = L // 8
    dist = box_dist(L, d)
    pa = box_components(nbr_e, gstride, lo, center, L, omega, omega, 0, -1, dist)
    n = len(pa)
    t8 = np.zeros(n, dtype=np.bool_)
    tl = np.zeros(n, dtype=np.bool_)
    t4 = np.zeros(n, dtype=np.bool_)
    t2 = np.zeros(n, dtype=np.bool_)
    for t in range(n):
        dd = dist[t]
        root = pa[t]
        if dd == r8:
            t8[root] = True
        if dd == L:
            tl[root] = True
        if dd == r4:
            t4[root] = True
        if dd == r2:
            t2[root] = True
    crossing = False
    for t in range(n):
        if t8[t] and tl[t]:
            crossing = True
            break
    if not crossing:
        return False, False
    dist2 = box_dist(r2, d)
    pb = box_components(nbr_e, gstride, lo, center, r2, omega, gamma, -1, r2, dist2)
    cls = _classes(pa, L, pb, r2, t2, d)
    first = -1
    for t in range(n):
        if t4[t] and t2[t]:
            c = cls[t]
            if first < 0:
                first = c
            elif c != first:
                return True, False
    return True, True


@njit(**JIT)
def unique_many(nbr_e, gstride, lo, centers, L, omega, gamma):
    out = np.zeros(len(centers), dtype=np.bool_)
    for i in range(len(centers)):
        _, ok = unique_event(nbr_e, gstride, lo, centers[i], L, omega, gamma)
        out[i] = ok
    return out


@njit(**JIT)
def u_sequence(nbr_e, gstride, lo, center, R, radii, omega, gamma):
    """U_i for nested boxes of the given radii (radii[0] is V_0).

    Clusters of omega in the radius-R box meeting the sphere of radius
    radii[0] are merged when a component of omega | (gamma inside V_0 minus
    V_i), taken inside V_0, meets both; U_i counts the classes meeting V_i.
    """
    d = len(center)
    r0 = radii[0]
    dist = box_dist(R, d)
    pa = box_components(nbr_e, gstride, lo, center, R, omega, omega, 0, -1, dist)
    n = len(pa)
    member = np.zeros(n, dtype=np.bool_)
    for t in range(n):
        if dist[t] == r0:
            member[pa[t]] = True
    dist0 = box_dist(r0, d)
    out = np.zeros(len(radii), dtype=np.int64)
    for i in range(len(radii)):
        ri = radii[i]
        pb = box_components(nbr_e, gstride, lo, center, r0, omega, gamma, ri, r0, dist0)
        cls = _classes(pa, R, pb, r0, member, d)
        meets = np.zeros(n, dtype=np.bool_)
        for t in range(n):
            root = pa[t]
            if member[root] and dist[t] <= ri:
                meets[root] = True
        seen = np.zeros(n, dtype=np.bool_)
        count = 0
        for t in range(n):
            if meets[t]:
                c = cls[t]
                if not seen[c]:
                    seen[c] = True
                    count += 1
        out[i] = count
    return out
