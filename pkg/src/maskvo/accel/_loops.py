"""Loop-style grid kernels, written to compile under numba's nopython mode.

Each function here is self-contained (no cross-function calls) so that
``numba_backend`` can jit-compile them one by one while the raw Python
versions stay importable for the contour tracer fallback and for tests.
Outside the image, erosion treats pixels as OBSTACLE and dilation as empty;
this keeps opening idempotent and preserves obstacles cut by the image edge.
"""

import numpy as np


def erode_obstacles(obstacle, k):
    """Erode the obstacle set with a k-by-k window anchored at the top-left."""
    h, w = obstacle.shape
    out = np.zeros((h, w), np.bool_)
    for r in range(h):
        for c in range(w):
            ok = True
            for i in range(k):
                rr = r + i
                for j in range(k):
                    cc = c + j
                    if rr < h and cc < w and not obstacle[rr, cc]:
                        ok = False
                        break
                if not ok:
                    break
            out[r, c] = ok
    return out


def dilate_obstacles(eroded, k):
    """Dilate with the reflected k-by-k window so erode+dilate is an opening."""
    h, w = eroded.shape
    out = np.zeros((h, w), np.bool_)
    for r in range(h):
        for c in range(w):
            hit = False
            for i in range(k):
                rr = r - i
                if rr < 0:
                    break
                for j in range(k):
                    cc = c - j
                    if cc >= 0 and eroded[rr, cc]:
                        hit = True
                        break
                if hit:
                    break
            out[r, c] = hit
    return out


def small_component_mask(obstacle, min_area):
    """Mark obstacle pixels whose 8-connected component has < min_area pixels."""
    h, w = obstacle.shape
    n = h * w
    parent = np.full(n, -1, np.int64)
    # first pass: union each obstacle pixel with its already-scanned neighbors
    for r in range(h):
        for c in range(w):
            if not obstacle[r, c]:
                continue
            idx = r * w + c
            if parent[idx] < 0:
                parent[idx] = idx
            for t in range(4):  # W, NW, N, NE
                if t == 0:
                    nr, nc = r, c - 1
                elif t == 1:
                    nr, nc = r - 1, c - 1
                elif t == 2:
                    nr, nc = r - 1, c
                else:
                    nr, nc = r - 1, c + 1
                if nr < 0 or nc < 0 or nc >= w:
                    continue
                if not obstacle[nr, nc]:
                    continue
                nidx = nr * w + nc
                ra = idx
                while parent[ra] != ra:
                    parent[ra] = parent[parent[ra]]
                    ra = parent[ra]
                rb = nidx
                while parent[rb] != rb:
                    parent[rb] = parent[parent[rb]]
                    rb = parent[rb]
                if ra < rb:
                    parent[rb] = ra
                else:
                    parent[ra] = rb
    # second pass: count component sizes at the roots
    sizes = np.zeros(n, np.int64)
    for idx in range(n):
        if parent[idx] < 0:
            continue
        root = idx
        while parent[root] != root:
            root = parent[root]
        cur = idx
        while parent[cur] != cur:
            nxt = parent[cur]
            parent[cur] = root
            cur = nxt
        sizes[root] += 1
    out = np.zeros((h, w), np.bool_)
    for r in range(h):
        for c in range(w):
            idx = r * w + c
            if parent[idx] >= 0 and sizes[parent[idx]] < min_area:
                out[r, c] = True
    return out


def contour_pixels(free):
    """Free pixels off the image border with at least one obstacle 8-neighbor."""
    h, w = free.shape
    out = np.zeros((h, w), np.bool_)
    for r in range(1, h - 1):
        for c in range(1, w - 1):
            if not free[r, c]:
                continue
            hit = False
            for dr in range(-1, 2):
                for dc in range(-1, 2):
                    if dr == 0 and dc == 0:
                        continue
                    if not free[r + dr, c + dc]:
                        hit = True
                        break
                if hit:
                    break
            out[r, c] = hit
    return out


def trace_paths(boundary):
    """Order boundary pixels into 8-connected chains by Moore-neighborhood walks.

    Walks start at the row-major-first unvisited pixel, follow the clockwise
    Moore scan from the backtrack direction, and extend backwards from the
    start so open chains come out as a single run.  Returns the concatenated
    pixel list ``(T, 2)`` and chain offsets ``(C + 1,)``.
    """
    h, w = boundary.shape
    total = 0
    for r in range(h):
        for c in range(w):
            if boundary[r, c]:
                total += 1
    pts = np.empty((total, 2), np.int64)
    offsets = np.empty(total + 1, np.int64)
    offsets[0] = 0
    n_pts = 0
    n_chains = 0
    if total == 0:
        return pts, offsets[:1]
    visited = np.zeros((h, w), np.bool_)
    drs = np.array([0, 1, 1, 1, 0, -1, -1, -1], np.int64)  # E SE S SW W NW N NE
    dcs = np.array([1, 1, 0, -1, -1, -1, 0, 1], np.int64)
    fwd = np.empty((total, 2), np.int64)
    bwd = np.empty((total, 2), np.int64)
    for r0 in range(h):
        for c0 in range(w):
            if not boundary[r0, c0] or visited[r0, c0]:
                continue
            visited[r0, c0] = True
            n_fwd = 0
            n_bwd = 0
            for phase in range(2):
                r, c = r0, c0
                incoming = 0
                first = True
                while True:
                    found = False
                    nd = 0
                    for t in range(8):
                        if first:
                            nd = t
                        else:
                            nd = (incoming + 5 + t) % 8
                        nr = r + drs[nd]
                        nc = c + dcs[nd]
                        if nr < 0 or nr >= h or nc < 0 or nc >= w:
                            continue
                        if boundary[nr, nc] and not visited[nr, nc]:
                            found = True
                            break
                    if not found:
                        break
                    first = False
                    incoming = nd
                    r = r + drs[nd]
                    c = c + dcs[nd]
                    visited[r, c] = True
                    if phase == 0:
                        fwd[n_fwd, 0] = r
                        fwd[n_fwd, 1] = c
                        n_fwd += 1
                    else:
                        bwd[n_bwd, 0] = r
                        bwd[n_bwd, 1] = c
                        n_bwd += 1
            for i in range(n_bwd):
                pts[n_pts, 0] = bwd[n_bwd - 1 - i, 0]
                pts[n_pts, 1] = bwd[n_bwd - 1 - i, 1]
                n_pts += 1
            pts[n_pts, 0] = r0
            pts[n_pts, 1] = c0
            n_pts += 1
            for i in range(n_fwd):
                pts[n_pts, 0] = fwd[i, 0]
                pts[n_pts, 1] = fwd[i, 1]
                n_pts += 1
            n_chains += 1
            offsets[n_chains] = n_pts
    return pts, offsets[: n_chains + 1]


def select_min_per_bin(bins, ranges, order, n_bins):
    """Per bin, pick the candidate minimizing (range, row-major order).

    Returns indices into the candidate arrays, ascending by bin.
    """
    best_idx = np.full(n_bins, -1, np.int64)
    best_rng = np.empty(n_bins, np.float64)
    best_ord = np.empty(n_bins, np.int64)
    for i in range(bins.shape[0]):
        b = bins[i]
        if best_idx[b] < 0:
            best_idx[b] = i
            best_rng[b] = ranges[i]
            best_ord[b] = order[i]
        elif ranges[i] < best_rng[b] or (
            ranges[i] == best_rng[b] and order[i] < best_ord[b]
        ):
            best_idx[b] = i
            best_rng[b] = ranges[i]
            best_ord[b] = order[i]
    count = 0
    for b in range(n_bins):
        if best_idx[b] >= 0:
            count += 1
    out = np.empty(count, np.int64)
    j = 0
    for b in range(n_bins):
        if best_idx[b] >= 0:
            out[j] = best_idx[b]
            j += 1
    return out


def nearest_two(query, refs):
    """Indices of the two nearest reference points per query point.

    Ties keep the earlier reference index, matching numpy argmin semantics.
    """
    n = query.shape[0]
    m = refs.shape[0]
    i1 = np.zeros(n, np.int64)
    i2 = np.zeros(n, np.int64)
    for i in range(n):
        qx = query[i, 0]
        qy = query[i, 1]
        b1 = np.inf
        b2 = np.inf
        j1 = 0
        j2 = 0
        for j in range(m):
            dx = refs[j, 0] - qx
            dy = refs[j, 1] - qy
            d = dx * dx + dy * dy
            if d < b1:
                b2 = b1
                j2 = j1
                b1 = d
                j1 = j
            elif d < b2:
                b2 = d
                j2 = j
        i1[i] = j1
        i2[i] = j2
    return i1, i2


def hamming_pairs(a, b):
    """Bit distance between paired 256-bit descriptors stored as (K, 4) uint64."""
    k = a.shape[0]
    out = np.empty(k, np.int64)
    for i in range(k):
        total = np.uint64(0)
        for word in range(a.shape[1]):
            v = a[i, word] ^ b[i, word]
            v = v - ((v >> np.uint64(1)) & np.uint64(0x5555555555555555))
            v = (v & np.uint64(0x3333333333333333)) + (
                (v >> np.uint64(2)) & np.uint64(0x3333333333333333)
            )
            v = (v + (v >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
            total += (v * np.uint64(0x0101010101010101)) >> np.uint64(56)
        out[i] = total
    return out


def render_free(size, scale, px, py, ptheta, verts, offsets, bounds, occlusion):
    """Render the free-space mask seen from pose (px, py, ptheta).

    A pixel is free when its world point lies inside ``bounds``, outside
    every convex polygon (CCW vertex order), and, with ``occlusion`` set,
    the segment from the vehicle origin to the point crosses no polygon.
    """
    h = size
    w = size
    out = np.zeros((h, w), np.bool_)
    n_poly = offsets.shape[0] - 1
    cth = np.cos(ptheta)
    sth = np.sin(ptheta)
    for r in range(h):
        xv = (h * 0.5 - r - 0.5) * scale
        for c in range(w):
            yv = (w * 0.5 - c - 0.5) * scale
            wx = px + cth * xv - sth * yv
            wy = py + sth * xv + cth * yv
            if wx < bounds[0] or wx > bounds[2] or wy < bounds[1] or wy > bounds[3]:
                continue
            dx = wx - px
            dy = wy - py
            free = True
            for p in range(n_poly):
                lo = offsets[p]
                hi = offsets[p + 1]
                inside = True
                t_lo = -np.inf
                t_hi = np.inf
                feasible = True
                for e in range(lo, hi):
                    v0x = verts[e, 0]
                    v0y = verts[e, 1]
                    e1 = e + 1 if e + 1 < hi else lo
                    ex = verts[e1, 0] - v0x
                    ey = verts[e1, 1] - v0y
                    nx = ey
                    ny = -ex
                    if nx * (wx - v0x) + ny * (wy - v0y) > 0.0:
                        inside = False
                    if occlusion:
                        denom = nx * dx + ny * dy
                        num = nx * (v0x - px) + ny * (v0y - py)
                        if denom > 0.0:
                            t = num / denom
                            if t < t_hi:
                                t_hi = t
                        elif denom < 0.0:
                            t = num / denom
                            if t > t_lo:
                                t_lo = t
                        elif num < 0.0:
                            feasible = False
                if inside:
                    free = False
                    break
                if occlusion and feasible and t_lo <= t_hi and t_lo > 0.0 and t_lo < 1.0:
                    free = False
                    break
            out[r, c] = free
    return out
