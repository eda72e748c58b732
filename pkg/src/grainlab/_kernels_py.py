"""Pure-Python reference kernels for the inclusion-exclusion estimators.

The compiled module `grainlab._fastkern` implements the same entry points;
`grainlab.kernels` selects whichever is available.  These versions are the
correctness reference (the test suite compares the two backends) and the
fallback when the extension was not built.
"""

import math

import numpy as np

BACKEND = "python"


class BudgetExceededError(RuntimeError):
    """Subset enumeration exceeded the configured budget."""


# ----------------------------------------------------------------------
# box kernels (axis-aligned, any dimension 1..4)


def _box_neighbors(lo, hi):
    """Adjacency lists of the pairwise-overlap graph via cell hashing."""
    n, d = lo.shape
    adj = [[] for _ in range(n)]
    if n == 0:
        return adj
    cell = max(float(np.max(hi - lo, initial=0.0)), 1e-9)
    key = {}
    idx = np.floor(lo / cell).astype(np.int64)
    for i in range(n):
        key.setdefault(tuple(idx[i]), []).append(i)
    for i in range(n):
        lo_cell = np.floor((lo[i] - cell) / cell).astype(np.int64)
        hi_cell = np.floor(hi[i] / cell).astype(np.int64)
        for c in np.ndindex(*(hi_cell - lo_cell + 1)):
            bucket = key.get(tuple(lo_cell + np.array(c)))
            if not bucket:
                continue
            for j in bucket:
                if j > i and np.all(lo[j] <= hi[i]) and np.all(lo[i] <= hi[j]):
                    adj[i].append(j)
                    adj[j].append(i)
    return [sorted(a) for a in adj]


def _box_dfs(lo, hi, budget, visit):
    """Enumerate subsets with nonempty common intersection.

    Calls visit(sign, cur_lo, cur_hi) for every subset; subsets are grown
    only towards higher indices, and a subset is pruned as soon as its
    intersection is empty (no superset can recover).
    """
    n = lo.shape[0]
    adj = _box_neighbors(lo, hi)
    count = 0
    for i in range(n):
        stack = [(np.array(lo[i]), np.array(hi[i]), 1,
                  [j for j in adj[i] if j > i])]
        visit(1, lo[i], hi[i])
        count += 1
        if count > budget:
            raise BudgetExceededError("subset budget exceeded")
        while stack:
            cur_lo, cur_hi, size, cands = stack.pop()
            for ci, j in enumerate(cands):
                new_lo = np.maximum(cur_lo, lo[j])
                new_hi = np.minimum(cur_hi, hi[j])
                if np.any(new_lo > new_hi):
                    continue
                count += 1
                if count > budget:
                    raise BudgetExceededError("subset budget exceeded")
                visit(-1 if size % 2 else 1, new_lo, new_hi)
                nxt = [jj for jj in cands[ci + 1:]
                       if np.all(lo[jj] <= new_hi) and np.all(new_lo <= hi[jj])]
                stack.append((new_lo, new_hi, size + 1, nxt))
    return count


def box_clipped_stats(lo, hi, wlo, whi, budget):
    """(chi, volume, nsubsets) of the union of boxes clipped to a window."""
    lo = np.maximum(np.asarray(lo, dtype=float), np.asarray(wlo, dtype=float))
    hi = np.minimum(np.asarray(hi, dtype=float), np.asarray(whi, dtype=float))
    keep = np.all(lo <= hi, axis=1)
    lo, hi = lo[keep], hi[keep]
    acc = {"chi": 0, "vol": 0.0}

    def visit(sign, cl, ch):
        acc["chi"] += sign
        acc["vol"] += sign * float(np.prod(ch - cl))

    count = _box_dfs(lo, hi, budget, visit)
    return acc["chi"], acc["vol"], count


def box_local_subsets(lo, hi, alo, ahi, budget):
    """Signed intersection boxes of subsets whose center lies in [alo, ahi).

    Only particles meeting the localization window can contribute, so the
    rest are dropped before enumeration.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    alo = np.asarray(alo, dtype=float)
    ahi = np.asarray(ahi, dtype=float)
    keep = np.all(lo <= ahi, axis=1) & np.all(alo <= hi, axis=1)
    lo, hi = lo[keep], hi[keep]
    signs, out_lo, out_hi = [], [], []

    def visit(sign, cl, ch):
        c = 0.5 * (cl + ch)
        if np.all(c >= alo) and np.all(c < ahi):
            signs.append(sign)
            out_lo.append(cl.copy())
            out_hi.append(ch.copy())

    _box_dfs(lo, hi, budget, visit)
    d = lo.shape[1]
    if not signs:
        return (np.zeros(0, dtype=np.int64), np.zeros((0, d)),
                np.zeros((0, d)))
    return (np.array(signs, dtype=np.int64), np.array(out_lo),
            np.array(out_hi))


def _uncovered_measure(flo, fhi, covers):
    """Measure of a box minus a union of boxes (coordinate compression)."""
    if not covers:
        return float(np.prod(fhi - flo))
    m = len(flo)
    if m == 0:
        return 0.0 if covers else 1.0
    grids = []
    for ax in range(m):
        pts = {flo[ax], fhi[ax]}
        for clo, chi in covers:
            pts.add(min(max(clo[ax], flo[ax]), fhi[ax]))
            pts.add(min(max(chi[ax], flo[ax]), fhi[ax]))
        grids.append(np.array(sorted(pts)))
    total = 0.0
    for cell in np.ndindex(*[len(g) - 1 for g in grids]):
        clo = np.array([grids[ax][cell[ax]] for ax in range(m)])
        chi_ = np.array([grids[ax][cell[ax] + 1] for ax in range(m)])
        mid = 0.5 * (clo + chi_)
        vol = float(np.prod(chi_ - clo))
        if vol <= 0:
            continue
        covered = any(np.all(mid >= np.asarray(c[0])) and
                      np.all(mid <= np.asarray(c[1])) for c in covers)
        if not covered:
            total += vol
    return total


def box_exposed(lo, hi, wlo, whi):
    """Uncovered boundary content inside the window, per facet direction.

    Returns an array of shape (d, 2): entry (ax, 0) is the total exposed
    (d-1)-content of facets with outer normal +e_ax, entry (ax, 1) the one
    for -e_ax.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    wlo = np.asarray(wlo, dtype=float)
    whi = np.asarray(whi, dtype=float)
    n, d = lo.shape
    out = np.zeros((d, 2))
    adj = _box_neighbors(lo, hi)
    for i in range(n):
        rest = [ax for ax in range(d)]
        for ax in range(d):
            others = [a for a in rest if a != ax]
            for side, val in ((0, hi[i, ax]), (1, lo[i, ax])):
                if not (wlo[ax] <= val <= whi[ax]):
                    continue
                flo = np.maximum(lo[i][others], wlo[others])
                fhi = np.minimum(hi[i][others], whi[others])
                if np.any(flo >= fhi):
                    continue
                covers = []
                for j in adj[i]:
                    if lo[j, ax] < val < hi[j, ax]:
                        covers.append((lo[j][others], hi[j][others]))
                out[ax, side] += _uncovered_measure(flo, fhi, covers)
    return out


# ----------------------------------------------------------------------
# convex polygon kernels (d = 2)


def _clip_convex(subject, clipper):
    """Sutherland-Hodgman: subject polygon clipped by a convex polygon."""
    pts = subject
    m = len(clipper)
    for k in range(m):
        if len(pts) == 0:
            return np.zeros((0, 2))
        a = clipper[k]
        b = clipper[(k + 1) % m]
        ex, ey = b[0] - a[0], b[1] - a[1]
        out = []
        prev = pts[-1]
        prev_in = ex * (prev[1] - a[1]) - ey * (prev[0] - a[0]) >= -1e-12
        for cur in pts:
            cur_in = ex * (cur[1] - a[1]) - ey * (cur[0] - a[0]) >= -1e-12
            if cur_in != prev_in:
                dx, dy = cur[0] - prev[0], cur[1] - prev[1]
                denom = ex * dy - ey * dx
                t = -(ex * (prev[1] - a[1]) - ey * (prev[0] - a[0])) / denom
                out.append((prev[0] + t * dx, prev[1] + t * dy))
            if cur_in:
                out.append((cur[0], cur[1]))
            prev, prev_in = cur, cur_in
        pts = np.array(out) if out else np.zeros((0, 2))
    return pts


def _poly_area_signed(pts):
    if len(pts) < 3:
        return 0.0
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _poly_steiner(pts):
    """Steiner point of a CCW convex polygon (exact arc decomposition)."""
    n = len(pts)
    if n == 1:
        return pts[0]
    if n == 2:
        return 0.5 * (pts[0] + pts[1])
    thetas = []
    for i in range(n):
        e = pts[(i + 1) % n] - pts[i]
        thetas.append(math.atan2(-e[0], e[1]))
    acc = np.zeros(2)
    for i in range(n):
        th1, th2 = thetas[i - 1], thetas[i]
        if th2 < th1:
            th2 += 2.0 * math.pi

        def anti(t, v=pts[i]):
            c2, s2 = math.cos(2 * t), math.sin(2 * t)
            return np.array([v[0] * (t / 2 + s2 / 4) - v[1] * c2 / 4,
                             -v[0] * c2 / 4 + v[1] * (t / 2 - s2 / 4)])

        acc += anti(th2) - anti(th1)
    return acc / math.pi


def _split(verts, offs):
    return [verts[offs[i]:offs[i + 1]] for i in range(len(offs) - 1)]


def _poly_bboxes(polys):
    lo = np.array([p.min(axis=0) for p in polys])
    hi = np.array([p.max(axis=0) for p in polys])
    return lo, hi


def _poly_dfs(polys, budget, visit):
    """Subset enumeration with running polygon intersections."""
    lo, hi = _poly_bboxes(polys)
    adj = _box_neighbors(lo, hi)
    count = 0
    for i in range(len(polys)):
        if len(polys[i]) == 0:
            continue
        visit(1, polys[i])
        count += 1
        if count > budget:
            raise BudgetExceededError("subset budget exceeded")
        stack = [(polys[i], 1, [j for j in adj[i] if j > i])]
        while stack:
            cur, size, cands = stack.pop()
            for ci, j in enumerate(cands):
                inter = _clip_convex(cur, polys[j])
                if len(inter) < 3 or _poly_area_signed(inter) <= 1e-14:
                    continue
                count += 1
                if count > budget:
                    raise BudgetExceededError("subset budget exceeded")
                visit(-1 if size % 2 else 1, inter)
                blo = inter.min(axis=0)
                bhi = inter.max(axis=0)
                nxt = [jj for jj in cands[ci + 1:]
                       if np.all(polys[jj].min(axis=0) <= bhi)
                       and np.all(blo <= polys[jj].max(axis=0))]
                stack.append((inter, size + 1, nxt))
    return count


def poly_clipped_stats(verts, offs, wlo, whi, budget):
    """(chi, area, nsubsets) of a union of convex polygons within a window."""
    window = np.array([[wlo[0], wlo[1]], [whi[0], wlo[1]],
                       [whi[0], whi[1]], [wlo[0], whi[1]]])
    polys = []
    for p in _split(np.asarray(verts, dtype=float), offs):
        c = _clip_convex(p, window)
        if len(c) >= 3 and _poly_area_signed(c) > 1e-14:
            polys.append(c)
    acc = {"chi": 0, "area": 0.0}

    def visit(sign, pts):
        acc["chi"] += sign
        acc["area"] += sign * _poly_area_signed(pts)

    count = _poly_dfs(polys, budget, visit)
    return acc["chi"], acc["area"], count


def poly_chi_local(verts, offs, alo, ahi, budget):
    """(chi, nsubsets): signed subset count localized by Steiner points."""
    alo = np.asarray(alo, dtype=float)
    ahi = np.asarray(ahi, dtype=float)
    polys = _split(np.asarray(verts, dtype=float), offs)
    keep = [p for p in polys
            if np.all(p.min(axis=0) <= ahi) and np.all(alo <= p.max(axis=0))]
    acc = {"chi": 0}

    def visit(sign, pts):
        s = _poly_steiner(pts)
        if np.all(s >= alo) and np.all(s < ahi):
            acc["chi"] += sign

    count = _poly_dfs(keep, budget, visit)
    return acc["chi"], count


def poly_exposed(verts, offs, wlo, whi):
    """Exposed edge lengths inside the window.

    Returns (normals (m,2), lengths (m,)) with one entry per particle edge
    (zero-length entries dropped): the part of each edge inside the window
    that is not covered by any other particle.
    """
    polys = _split(np.asarray(verts, dtype=float), offs)
    lo, hi = _poly_bboxes(polys)
    adj = _box_neighbors(lo, hi)
    wlo = np.asarray(wlo, dtype=float)
    whi = np.asarray(whi, dtype=float)
    normals, lengths = [], []
    for i, p in enumerate(polys):
        n = len(p)
        for e in range(n):
            a, b = p[e], p[(e + 1) % n]
            ev = b - a
            elen = float(np.hypot(ev[0], ev[1]))
            if elen <= 1e-14:
                continue
            # admissible parameter range: edge cap window cap (not covered)
            t0, t1 = 0.0, 1.0
            ok = True
            for ax in range(2):
                t0, t1, ok = _refine_interval(t0, t1, a[ax], ev[ax],
                                              wlo[ax], whi[ax])
                if not ok:
                    break
            if not ok or t1 <= t0:
                continue
            chords = []
            for j in adj[i]:
                iv = _chord_interval(a, ev, polys[j])
                if iv is not None:
                    chords.append(iv)
            uncovered = _interval_difference((t0, t1), chords)
            if uncovered > 1e-15:
                normals.append([ev[1] / elen, -ev[0] / elen])
                lengths.append(uncovered * elen)
    if not normals:
        return np.zeros((0, 2)), np.zeros(0)
    return np.array(normals), np.array(lengths)


def _refine_interval(t0, t1, base, slope, lo, hi):
    # restrict {t: lo <= base + slope t <= hi}
    if abs(slope) < 1e-15:
        if base < lo or base > hi:
            return t0, t1, False
        return t0, t1, True
    ta = (lo - base) / slope
    tb = (hi - base) / slope
    if ta > tb:
        ta, tb = tb, ta
    return max(t0, ta), min(t1, tb), True


def _chord_interval(a, ev, poly):
    """Parameter interval of the edge a + t*ev lying inside a convex polygon."""
    t0, t1 = 0.0, 1.0
    m = len(poly)
    for k in range(m):
        p = poly[k]
        q = poly[(k + 1) % m]
        nx, ny = q[1] - p[1], p[0] - q[0]  # inward: n . (x - p) <= 0 outside
        # half-plane: n . x <= n . p  with n the outward normal
        num = nx * (p[0] - a[0]) + ny * (p[1] - a[1])
        den = nx * ev[0] + ny * ev[1]
        if abs(den) < 1e-15:
            if num < -1e-12:
                return None
            continue
        t = num / den
        if den > 0:
            t1 = min(t1, t)
        else:
            t0 = max(t0, t)
        if t0 >= t1 - 1e-15:
            return None
    return (t0, t1)


def _interval_difference(base, chords):
    """Length of base interval minus the union of chord intervals."""
    t0, t1 = base
    if t1 <= t0:
        return 0.0
    clipped = sorted((max(a, t0), min(b, t1)) for a, b in chords
                     if b > t0 and a < t1)
    total = t1 - t0
    cur = t0
    for a, b in clipped:
        if b <= cur:
            continue
        total -= b - max(a, cur)
        cur = max(cur, b)
    return total
