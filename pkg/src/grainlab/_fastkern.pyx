# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels for the inclusion-exclusion estimators.

Mirror of grainlab._kernels_py (same entry points, same conventions); the
test suite checks both backends against each other.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport atan2, cos, sin, floor, M_PI, sqrt
from libc.stdlib cimport free, malloc, realloc

from grainlab._kernels_py import BudgetExceededError

cnp.import_array()

BACKEND = "cython"

DEF MAXD = 4
DEF MAXV = 512          # scratch vertices for polygon clipping
DEF MAXDEPTH = 128


# ----------------------------------------------------------------------
# neighbor grid


cdef struct Grid:
    long *head
    long *nxt
    long dims[MAXD]
    double origin[MAXD]
    double cell
    long ncells
    int d


cdef int _grid_build(Grid *g, double[:, ::1] lo, double[:, ::1] hi) except -1:
    cdef long n = lo.shape[0]
    cdef int d = lo.shape[1], ax
    cdef long i, idx
    cdef double ext, m
    g.d = d
    g.cell = 1e-9
    for i in range(n):
        for ax in range(d):
            ext = hi[i, ax] - lo[i, ax]
            if ext > g.cell:
                g.cell = ext
    for ax in range(d):
        m = 1e300
        for i in range(n):
            if lo[i, ax] < m:
                m = lo[i, ax]
        g.origin[ax] = m
    g.ncells = 1
    for ax in range(d):
        m = -1e300
        for i in range(n):
            if hi[i, ax] > m:
                m = hi[i, ax]
        g.dims[ax] = <long>floor((m - g.origin[ax]) / g.cell) + 1 if n else 1
        if g.dims[ax] < 1:
            g.dims[ax] = 1
        g.ncells *= g.dims[ax]
    g.head = <long*>malloc(g.ncells * sizeof(long))
    g.nxt = <long*>malloc((n if n else 1) * sizeof(long))
    if g.head == NULL or g.nxt == NULL:
        raise MemoryError()
    for i in range(g.ncells):
        g.head[i] = -1
    for i in range(n):
        idx = 0
        for ax in range(d):
            idx = idx * g.dims[ax] + <long>floor(
                (lo[i, ax] - g.origin[ax]) / g.cell)
        g.nxt[i] = g.head[idx]
        g.head[idx] = i
    return 0


cdef void _grid_free(Grid *g):
    free(g.head)
    free(g.nxt)


cdef long _grid_query(Grid *g, double[:, ::1] lo, double[:, ::1] hi,
                      long i, long *out) nogil:
    """All j != i whose box overlaps box i, ascending order."""
    cdef long c0[MAXD]
    cdef long c1[MAXD]
    cdef long cur[MAXD]
    cdef int ax, k, ok
    cdef long idx, j, cnt = 0
    for ax in range(g.d):
        c0[ax] = <long>floor((lo[i, ax] - g.origin[ax] - g.cell) / g.cell)
        if c0[ax] < 0:
            c0[ax] = 0
        c1[ax] = <long>floor((hi[i, ax] - g.origin[ax]) / g.cell)
        if c1[ax] >= g.dims[ax]:
            c1[ax] = g.dims[ax] - 1
        cur[ax] = c0[ax]
    while True:
        idx = 0
        for ax in range(g.d):
            idx = idx * g.dims[ax] + cur[ax]
        j = g.head[idx]
        while j >= 0:
            if j != i:
                ok = 1
                for ax in range(g.d):
                    if lo[j, ax] > hi[i, ax] or lo[i, ax] > hi[j, ax]:
                        ok = 0
                        break
                if ok:
                    out[cnt] = j
                    cnt += 1
            j = g.nxt[j]
        ax = g.d - 1
        while ax >= 0:
            cur[ax] += 1
            if cur[ax] <= c1[ax]:
                break
            cur[ax] = c0[ax]
            ax -= 1
        if ax < 0:
            break
    # insertion sort (lists are short)
    cdef long t
    for idx in range(1, cnt):
        t = out[idx]
        j = idx - 1
        while j >= 0 and out[j] > t:
            out[j + 1] = out[j]
            j -= 1
        out[j + 1] = t
    return cnt


# ----------------------------------------------------------------------
# box DFS


cdef struct BoxAcc:
    # mode 0: clipped stats (chi, vol); mode 1: local subsets
    int mode
    long chi
    double vol
    double alo[MAXD]
    double ahi[MAXD]
    long nout
    long cap
    long *signs
    double *out_lo
    double *out_hi


cdef int _box_emit(BoxAcc *acc, int sign, double *cl, double *ch,
                   int d) except -1:
    cdef int ax
    cdef double c, v
    if acc.mode == 0:
        acc.chi += sign
        v = 1.0
        for ax in range(d):
            v *= ch[ax] - cl[ax]
        acc.vol += sign * v
        return 0
    for ax in range(d):
        c = 0.5 * (cl[ax] + ch[ax])
        if not (c >= acc.alo[ax] and c < acc.ahi[ax]):
            return 0
    if acc.nout == acc.cap:
        acc.cap *= 2
        acc.signs = <long*>realloc(acc.signs, acc.cap * sizeof(long))
        acc.out_lo = <double*>realloc(acc.out_lo,
                                      acc.cap * MAXD * sizeof(double))
        acc.out_hi = <double*>realloc(acc.out_hi,
                                      acc.cap * MAXD * sizeof(double))
        if acc.signs == NULL or acc.out_lo == NULL or acc.out_hi == NULL:
            raise MemoryError()
    acc.signs[acc.nout] = sign
    for ax in range(d):
        acc.out_lo[acc.nout * MAXD + ax] = cl[ax]
        acc.out_hi[acc.nout * MAXD + ax] = ch[ax]
    acc.nout += 1
    return 0


cdef long _box_rec(double[:, ::1] lo, double[:, ::1] hi, int d,
                   double *cur_lo, double *cur_hi, int depth,
                   long *cands, long ncand, long *pool, long pool_off,
                   long budget, long count, BoxAcc *acc) except -2:
    cdef long ci, j, jj, nnew
    cdef int ax, ok
    cdef double nlo[MAXD]
    cdef double nhi[MAXD]
    cdef long *nxt = pool + pool_off
    for ci in range(ncand):
        j = cands[ci]
        ok = 1
        for ax in range(d):
            nlo[ax] = cur_lo[ax] if cur_lo[ax] > lo[j, ax] else lo[j, ax]
            nhi[ax] = cur_hi[ax] if cur_hi[ax] < hi[j, ax] else hi[j, ax]
            if nlo[ax] > nhi[ax]:
                ok = 0
                break
        if not ok:
            continue
        count += 1
        if count > budget:
            raise BudgetExceededError("subset budget exceeded")
        _box_emit(acc, -1 if depth % 2 else 1, nlo, nhi, d)
        nnew = 0
        for jj in range(ci + 1, ncand):
            ok = 1
            for ax in range(d):
                if lo[cands[jj], ax] > nhi[ax] or nlo[ax] > hi[cands[jj], ax]:
                    ok = 0
                    break
            if ok:
                nxt[nnew] = cands[jj]
                nnew += 1
        if nnew > 0 and depth + 1 < MAXDEPTH:
            count = _box_rec(lo, hi, d, nlo, nhi, depth + 1, nxt, nnew,
                             pool, pool_off + nnew, budget, count, acc)
    return count


cdef long _box_dfs(double[:, ::1] lo, double[:, ::1] hi, long budget,
                   BoxAcc *acc) except -2:
    cdef long n = lo.shape[0]
    cdef int d = lo.shape[1]
    cdef long i, k, nc, nstart, count = 0
    cdef double cl[MAXD]
    cdef double ch[MAXD]
    cdef Grid g
    cdef long *nbr
    cdef long *pool
    cdef long *start
    if n == 0:
        return 0
    _grid_build(&g, lo, hi)
    nbr = <long*>malloc(n * sizeof(long))
    pool = <long*>malloc((MAXDEPTH + 1) * n * sizeof(long))
    start = <long*>malloc(n * sizeof(long))
    if nbr == NULL or pool == NULL or start == NULL:
        _grid_free(&g)
        raise MemoryError()
    try:
        for i in range(n):
            count += 1
            if count > budget:
                raise BudgetExceededError("subset budget exceeded")
            for k in range(d):
                cl[k] = lo[i, k]
                ch[k] = hi[i, k]
            _box_emit(acc, 1, cl, ch, d)
            nc = _grid_query(&g, lo, hi, i, nbr)
            nstart = 0
            for k in range(nc):
                if nbr[k] > i:
                    start[nstart] = nbr[k]
                    nstart += 1
            if nstart:
                count = _box_rec(lo, hi, d, cl, ch, 1, start, nstart,
                                 pool, 0, budget, count, acc)
    finally:
        free(nbr)
        free(pool)
        free(start)
        _grid_free(&g)
    return count


def box_clipped_stats(lo, hi, wlo, whi, long budget):
    """(chi, volume, nsubsets) of the union of boxes clipped to a window."""
    lo = np.maximum(np.asarray(lo, dtype=np.float64),
                    np.asarray(wlo, dtype=np.float64))
    hi = np.minimum(np.asarray(hi, dtype=np.float64),
                    np.asarray(whi, dtype=np.float64))
    keep = np.all(lo <= hi, axis=1)
    cdef double[:, ::1] clo = np.ascontiguousarray(lo[keep])
    cdef double[:, ::1] chi_ = np.ascontiguousarray(hi[keep])
    cdef BoxAcc acc
    acc.mode = 0
    acc.chi = 0
    acc.vol = 0.0
    cdef long count = _box_dfs(clo, chi_, budget, &acc)
    return int(acc.chi), float(acc.vol), int(count)


def box_local_subsets(lo, hi, alo, ahi, long budget):
    """Signed intersection boxes of subsets with center in [alo, ahi)."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    alo_arr = np.asarray(alo, dtype=np.float64)
    ahi_arr = np.asarray(ahi, dtype=np.float64)
    keep = np.all(lo <= ahi_arr, axis=1) & np.all(alo_arr <= hi, axis=1)
    cdef double[:, ::1] clo = np.ascontiguousarray(lo[keep])
    cdef double[:, ::1] chi_ = np.ascontiguousarray(hi[keep])
    cdef int d = clo.shape[1], ax
    cdef BoxAcc acc
    acc.mode = 1
    acc.nout = 0
    acc.cap = 4096
    acc.signs = <long*>malloc(acc.cap * sizeof(long))
    acc.out_lo = <double*>malloc(acc.cap * MAXD * sizeof(double))
    acc.out_hi = <double*>malloc(acc.cap * MAXD * sizeof(double))
    if acc.signs == NULL or acc.out_lo == NULL or acc.out_hi == NULL:
        raise MemoryError()
    for ax in range(d):
        acc.alo[ax] = alo_arr[ax]
        acc.ahi[ax] = ahi_arr[ax]
    try:
        _box_dfs(clo, chi_, budget, &acc)
        signs = np.empty(acc.nout, dtype=np.int64)
        out_lo = np.empty((acc.nout, d), dtype=np.float64)
        out_hi = np.empty((acc.nout, d), dtype=np.float64)
        for i in range(acc.nout):
            signs[i] = acc.signs[i]
            for ax in range(d):
                out_lo[i, ax] = acc.out_lo[i * MAXD + ax]
                out_hi[i, ax] = acc.out_hi[i * MAXD + ax]
        return signs, out_lo, out_hi
    finally:
        free(acc.signs)
        free(acc.out_lo)
        free(acc.out_hi)


# ----------------------------------------------------------------------
# box exposed boundary


def box_exposed(lo, hi, wlo, whi):
    """Uncovered boundary content inside the window per facet direction."""
    cdef double[:, ::1] blo = np.ascontiguousarray(
        np.asarray(lo, dtype=np.float64))
    cdef double[:, ::1] bhi = np.ascontiguousarray(
        np.asarray(hi, dtype=np.float64))
    cdef double[::1] wl = np.ascontiguousarray(
        np.asarray(wlo, dtype=np.float64))
    cdef double[::1] wh = np.ascontiguousarray(
        np.asarray(whi, dtype=np.float64))
    cdef long n = blo.shape[0]
    cdef int d = blo.shape[1]
    out = np.zeros((d, 2), dtype=np.float64)
    cdef double[:, ::1] out_v = out
    if n == 0:
        return out
    cdef Grid g
    _grid_build(&g, blo, bhi)
    cdef long *nbr = <long*>malloc(n * sizeof(long))
    cdef long *cov = <long*>malloc(n * sizeof(long))
    # compression grids per axis (at most 2 + 2*ncov points each)
    cdef double *gridpts = <double*>malloc((MAXD - 1) * 2 * (n + 1) *
                                           sizeof(double))
    if nbr == NULL or cov == NULL or gridpts == NULL:
        _grid_free(&g)
        raise MemoryError()
    cdef long i, j, k, nc, ncov
    cdef int ax, side, oth
    cdef double val, meas
    cdef double flo[MAXD]
    cdef double fhi[MAXD]
    try:
        for i in range(n):
            nc = _grid_query(&g, blo, bhi, i, nbr)
            for ax in range(d):
                for side in range(2):
                    val = bhi[i, ax] if side == 0 else blo[i, ax]
                    if val < wl[ax] or val > wh[ax]:
                        continue
                    ncov = 0
                    for k in range(nc):
                        j = nbr[k]
                        if blo[j, ax] < val and val < bhi[j, ax]:
                            cov[ncov] = j
                            ncov += 1
                    # facet rectangle in the other coordinates
                    oth = 0
                    for k in range(d):
                        if k == ax:
                            continue
                        flo[oth] = blo[i, k] if blo[i, k] > wl[k] else wl[k]
                        fhi[oth] = bhi[i, k] if bhi[i, k] < wh[k] else wh[k]
                        oth += 1
                    meas = _uncovered(blo, bhi, flo, fhi, d, ax, cov, ncov,
                                      gridpts, n)
                    if meas > 0:
                        out_v[ax, side] += meas
    finally:
        free(nbr)
        free(cov)
        free(gridpts)
        _grid_free(&g)
    return out


cdef double _uncovered(double[:, ::1] blo, double[:, ::1] bhi,
                       double *flo, double *fhi, int d, int ax,
                       long *cov, long ncov, double *gridpts,
                       long stride) nogil:
    """Measure of the facet rectangle minus the union of covering boxes."""
    cdef int m = d - 1, a, oth, ok, covered, inside
    cdef long k, c, npts
    cdef double total = 0.0, v, x, lo_, hi_
    cdef long sizes[MAXD]
    cdef long cell[MAXD]
    cdef double mid[MAXD]
    if m == 0:
        # facet is a point (d = 1); exposed iff not covered
        return 0.0 if ncov > 0 else 1.0
    for a in range(m):
        if fhi[a] <= flo[a]:
            return 0.0
    if ncov == 0:
        total = 1.0
        for a in range(m):
            total *= fhi[a] - flo[a]
        return total
    # build sorted breakpoints per reduced axis
    for a in range(m):
        oth = a if a < ax else a + 1
        npts = 0
        gridpts[a * 2 * (stride + 1)] = flo[a]
        gridpts[a * 2 * (stride + 1) + 1] = fhi[a]
        npts = 2
        for k in range(ncov):
            c = cov[k]
            x = blo[c, oth]
            if x < flo[a]:
                x = flo[a]
            if x > fhi[a]:
                x = fhi[a]
            gridpts[a * 2 * (stride + 1) + npts] = x
            npts += 1
            x = bhi[c, oth]
            if x < flo[a]:
                x = flo[a]
            if x > fhi[a]:
                x = fhi[a]
            gridpts[a * 2 * (stride + 1) + npts] = x
            npts += 1
        # insertion sort
        for k in range(1, npts):
            v = gridpts[a * 2 * (stride + 1) + k]
            c = k - 1
            while c >= 0 and gridpts[a * 2 * (stride + 1) + c] > v:
                gridpts[a * 2 * (stride + 1) + c + 1] = gridpts[
                    a * 2 * (stride + 1) + c]
                c -= 1
            gridpts[a * 2 * (stride + 1) + c + 1] = v
        sizes[a] = npts - 1
        cell[a] = 0
    while True:
        v = 1.0
        ok = 1
        for a in range(m):
            lo_ = gridpts[a * 2 * (stride + 1) + cell[a]]
            hi_ = gridpts[a * 2 * (stride + 1) + cell[a] + 1]
            if hi_ <= lo_:
                ok = 0
                break
            v *= hi_ - lo_
            mid[a] = 0.5 * (lo_ + hi_)
        if ok:
            covered = 0
            for k in range(ncov):
                c = cov[k]
                inside = 1
                for a in range(m):
                    oth = a if a < ax else a + 1
                    if mid[a] < blo[c, oth] or mid[a] > bhi[c, oth]:
                        inside = 0
                        break
                if inside:
                    covered = 1
                    break
            if not covered:
                total += v
        # increment multi-index
        a = m - 1
        while a >= 0:
            cell[a] += 1
            if cell[a] < sizes[a]:
                break
            cell[a] = 0
            a -= 1
        if a < 0:
            break
    return total


# ----------------------------------------------------------------------
# convex polygon kernels


cdef int _clip_half(double *pts, int n, double ax, double ay,
                    double bx, double by, double *out) nogil:
    """Clip CCW polygon by the left half-plane of directed edge a->b."""
    cdef double ex = bx - ax, ey = by - ay
    cdef double px, py, cx, cy, d1, d2, t
    cdef int i, m = 0
    if n == 0:
        return 0
    px = pts[2 * (n - 1)]
    py = pts[2 * (n - 1) + 1]
    d1 = ex * (py - ay) - ey * (px - ax)
    for i in range(n):
        cx = pts[2 * i]
        cy = pts[2 * i + 1]
        d2 = ex * (cy - ay) - ey * (cx - ax)
        if (d2 >= -1e-12) != (d1 >= -1e-12):
            t = -d1 / (d2 - d1)
            out[2 * m] = px + t * (cx - px)
            out[2 * m + 1] = py + t * (cy - py)
            m += 1
        if d2 >= -1e-12:
            out[2 * m] = cx
            out[2 * m + 1] = cy
            m += 1
        px = cx
        py = cy
        d1 = d2
    return m


cdef int _clip_convex_c(double *subject, int n, double *clipper, int m,
                        double *scratch) nogil:
    """subject cap clipper, both CCW; result written back into subject."""
    cdef int k, q, nn = n
    cdef double ax, ay, bx, by
    for k in range(m):
        ax = clipper[2 * k]
        ay = clipper[2 * k + 1]
        bx = clipper[2 * ((k + 1) % m)]
        by = clipper[2 * ((k + 1) % m) + 1]
        nn = _clip_half(subject, nn, ax, ay, bx, by, scratch)
        if nn == 0:
            return 0
        for q in range(2 * nn):
            subject[q] = scratch[q]
    return nn


cdef double _area_c(double *pts, int n) nogil:
    cdef double s = 0.0
    cdef int i, j
    for i in range(n):
        j = (i + 1) % n
        s += pts[2 * i] * pts[2 * j + 1] - pts[2 * j] * pts[2 * i + 1]
    return 0.5 * s


cdef void _steiner_c(double *pts, int n, double *out) nogil:
    cdef double th1, th2, ex, ey, accx = 0.0, accy = 0.0
    cdef double vx, vy, c2a, s2a, c2b, s2b
    cdef int i, ip
    if n == 1:
        out[0] = pts[0]
        out[1] = pts[1]
        return
    if n == 2:
        out[0] = 0.5 * (pts[0] + pts[2])
        out[1] = 0.5 * (pts[1] + pts[3])
        return
    for i in range(n):
        ip = (i - 1) % n
        if ip < 0:
            ip += n
        ex = pts[2 * ((ip + 1) % n)] - pts[2 * ip]
        ey = pts[2 * ((ip + 1) % n) + 1] - pts[2 * ip + 1]
        th1 = atan2(-ex, ey)
        ex = pts[2 * ((i + 1) % n)] - pts[2 * i]
        ey = pts[2 * ((i + 1) % n) + 1] - pts[2 * i + 1]
        th2 = atan2(-ex, ey)
        if th2 < th1:
            th2 += 2.0 * M_PI
        vx = pts[2 * i]
        vy = pts[2 * i + 1]
        c2a = cos(2 * th2)
        s2a = sin(2 * th2)
        c2b = cos(2 * th1)
        s2b = sin(2 * th1)
        accx += vx * ((th2 - th1) / 2 + (s2a - s2b) / 4) \
            - vy * (c2a - c2b) / 4
        accy += -vx * (c2a - c2b) / 4 \
            + vy * ((th2 - th1) / 2 - (s2a - s2b) / 4)
    out[0] = accx / M_PI
    out[1] = accy / M_PI


cdef struct PolyAcc:
    int mode            # 0: clipped stats, 1: local chi
    long chi
    double area
    double alo[2]
    double ahi[2]


cdef void _poly_emit(PolyAcc *acc, int sign, double *pts, int n) nogil:
    cdef double s[2]
    if acc.mode == 0:
        acc.chi += sign
        acc.area += sign * _area_c(pts, n)
        return
    _steiner_c(pts, n, s)
    if (s[0] >= acc.alo[0] and s[0] < acc.ahi[0] and
            s[1] >= acc.alo[1] and s[1] < acc.ahi[1]):
        acc.chi += sign


cdef long _poly_rec(double[:, ::1] verts, long[::1] offs,
                    double[:, ::1] blo, double[:, ::1] bhi,
                    double *cur, int ncur, int depth,
                    long *cands, long ncand, long *pool, long pool_off,
                    double *scratch, double *clipbuf,
                    long budget, long count, PolyAcc *acc) except -2:
    cdef long ci, j, jj, nnew, base
    cdef int k, nn, nv
    cdef double nlo0, nlo1, nhi0, nhi1
    cdef double *nxtbuf = scratch + 2 * MAXV * depth
    cdef double *clipped = clipbuf + 2 * MAXV * depth
    cdef long *nxt = pool + pool_off
    for ci in range(ncand):
        j = cands[ci]
        # copy current polygon, clip by polygon j
        nv = offs[j + 1] - offs[j]
        for k in range(2 * ncur):
            clipped[k] = cur[k]
        nn = _clip_convex_c(clipped, ncur, &verts[offs[j], 0], nv, nxtbuf)
        if nn < 3 or _area_c(clipped, nn) <= 1e-14:
            continue
        count += 1
        if count > budget:
            raise BudgetExceededError("subset budget exceeded")
        _poly_emit(acc, -1 if depth % 2 else 1, clipped, nn)
        nlo0 = nhi0 = clipped[0]
        nlo1 = nhi1 = clipped[1]
        for k in range(1, nn):
            if clipped[2 * k] < nlo0:
                nlo0 = clipped[2 * k]
            if clipped[2 * k] > nhi0:
                nhi0 = clipped[2 * k]
            if clipped[2 * k + 1] < nlo1:
                nlo1 = clipped[2 * k + 1]
            if clipped[2 * k + 1] > nhi1:
                nhi1 = clipped[2 * k + 1]
        nnew = 0
        for jj in range(ci + 1, ncand):
            if (blo[cands[jj], 0] <= nhi0 and nlo0 <= bhi[cands[jj], 0] and
                    blo[cands[jj], 1] <= nhi1 and nlo1 <= bhi[cands[jj], 1]):
                nxt[nnew] = cands[jj]
                nnew += 1
        if nnew > 0 and depth + 1 < MAXDEPTH:
            count = _poly_rec(verts, offs, blo, bhi, clipped, nn,
                              depth + 1, nxt, nnew, pool, pool_off + nnew,
                              scratch, clipbuf, budget, count, acc)
    return count


cdef long _poly_dfs(double[:, ::1] verts, long[::1] offs, long budget,
                    PolyAcc *acc) except -2:
    cdef long n = offs.shape[0] - 1
    cdef long i, k, nc, nstart, count = 0
    cdef int nv
    cdef Grid g
    if n == 0:
        return 0
    blo_np = np.empty((n, 2))
    bhi_np = np.empty((n, 2))
    cdef double[:, ::1] blo = blo_np
    cdef double[:, ::1] bhi = bhi_np
    for i in range(n):
        blo[i, 0] = blo[i, 1] = 1e300
        bhi[i, 0] = bhi[i, 1] = -1e300
        for k in range(offs[i], offs[i + 1]):
            if verts[k, 0] < blo[i, 0]:
                blo[i, 0] = verts[k, 0]
            if verts[k, 0] > bhi[i, 0]:
                bhi[i, 0] = verts[k, 0]
            if verts[k, 1] < blo[i, 1]:
                blo[i, 1] = verts[k, 1]
            if verts[k, 1] > bhi[i, 1]:
                bhi[i, 1] = verts[k, 1]
    _grid_build(&g, blo, bhi)
    cdef long *nbr = <long*>malloc(n * sizeof(long))
    cdef long *pool = <long*>malloc((MAXDEPTH + 1) * n * sizeof(long))
    cdef long *start = <long*>malloc(n * sizeof(long))
    cdef double *scratch = <double*>malloc(2 * MAXV * MAXDEPTH *
                                           sizeof(double))
    cdef double *clipbuf = <double*>malloc(2 * MAXV * MAXDEPTH *
                                           sizeof(double))
    cdef double *cur = <double*>malloc(2 * MAXV * sizeof(double))
    if (nbr == NULL or pool == NULL or start == NULL or scratch == NULL
            or clipbuf == NULL or cur == NULL):
        _grid_free(&g)
        raise MemoryError()
    try:
        for i in range(n):
            nv = offs[i + 1] - offs[i]
            if nv == 0:
                continue
            count += 1
            if count > budget:
                raise BudgetExceededError("subset budget exceeded")
            for k in range(nv):
                cur[2 * k] = verts[offs[i] + k, 0]
                cur[2 * k + 1] = verts[offs[i] + k, 1]
            _poly_emit(acc, 1, cur, nv)
            nc = _grid_query(&g, blo, bhi, i, nbr)
            nstart = 0
            for k in range(nc):
                if nbr[k] > i:
                    start[nstart] = nbr[k]
                    nstart += 1
            if nstart:
                count = _poly_rec(verts, offs, blo, bhi, cur, nv,
                                  1, start, nstart, pool, 0,
                                  scratch, clipbuf, budget, count, acc)
    finally:
        free(nbr)
        free(pool)
        free(start)
        free(scratch)
        free(clipbuf)
        free(cur)
        _grid_free(&g)
    return count


def _clip_all_to_window(verts, offs, wlo, whi):
    """Python-level pre-clipping of every polygon to the window box."""
    from grainlab._kernels_py import _clip_convex, _poly_area_signed, _split
    window = np.array([[wlo[0], wlo[1]], [whi[0], wlo[1]],
                       [whi[0], whi[1]], [wlo[0], whi[1]]], dtype=np.float64)
    out_v, out_o = [], [0]
    total = 0
    for p in _split(np.asarray(verts, dtype=np.float64), offs):
        c = _clip_convex(p, window)
        if len(c) >= 3 and _poly_area_signed(c) > 1e-14:
            out_v.append(np.asarray(c))
            total += len(c)
            out_o.append(total)
    if out_v:
        return np.ascontiguousarray(np.vstack(out_v)), np.asarray(
            out_o, dtype=np.int64)
    return np.zeros((0, 2)), np.zeros(1, dtype=np.int64)


def poly_clipped_stats(verts, offs, wlo, whi, long budget):
    """(chi, area, nsubsets) of a union of convex polygons within a window."""
    cv, co = _clip_all_to_window(verts, offs, wlo, whi)
    cdef double[:, ::1] vv = np.ascontiguousarray(cv)
    cdef long[::1] oo = np.ascontiguousarray(co)
    cdef PolyAcc acc
    acc.mode = 0
    acc.chi = 0
    acc.area = 0.0
    cdef long count = _poly_dfs(vv, oo, budget, &acc)
    return int(acc.chi), float(acc.area), int(count)


def poly_chi_local(verts, offs, alo, ahi, long budget):
    """(chi, nsubsets): signed subset count localized by Steiner points."""
    from grainlab._kernels_py import _split
    alo_arr = np.asarray(alo, dtype=np.float64)
    ahi_arr = np.asarray(ahi, dtype=np.float64)
    polys = _split(np.asarray(verts, dtype=np.float64), offs)
    keeps = [p for p in polys
             if np.all(p.min(axis=0) <= ahi_arr)
             and np.all(alo_arr <= p.max(axis=0))]
    if keeps:
        kv = np.ascontiguousarray(np.vstack(keeps))
        ko = np.cumsum([0] + [len(p) for p in keeps]).astype(np.int64)
    else:
        kv = np.zeros((0, 2))
        ko = np.zeros(1, dtype=np.int64)
    cdef double[:, ::1] vv = np.ascontiguousarray(kv)
    cdef long[::1] oo = np.ascontiguousarray(ko)
    cdef PolyAcc acc
    acc.mode = 1
    acc.chi = 0
    acc.alo[0] = alo_arr[0]
    acc.alo[1] = alo_arr[1]
    acc.ahi[0] = ahi_arr[0]
    acc.ahi[1] = ahi_arr[1]
    cdef long count = _poly_dfs(vv, oo, budget, &acc)
    return int(acc.chi), int(count)


def poly_exposed(verts, offs, wlo, whi):
    """Exposed edge (normal, length) pairs inside the window."""
    cdef double[:, ::1] vv = np.ascontiguousarray(
        np.asarray(verts, dtype=np.float64))
    cdef long[::1] oo = np.ascontiguousarray(
        np.asarray(offs, dtype=np.int64))
    cdef long n = oo.shape[0] - 1
    cdef double wl0 = wlo[0], wl1 = wlo[1], wh0 = whi[0], wh1 = whi[1]
    if n == 0:
        return np.zeros((0, 2)), np.zeros(0)
    blo_np = np.empty((n, 2))
    bhi_np = np.empty((n, 2))
    cdef double[:, ::1] blo = blo_np
    cdef double[:, ::1] bhi = bhi_np
    cdef long i, k
    for i in range(n):
        blo[i, 0] = blo[i, 1] = 1e300
        bhi[i, 0] = bhi[i, 1] = -1e300
        for k in range(oo[i], oo[i + 1]):
            if vv[k, 0] < blo[i, 0]:
                blo[i, 0] = vv[k, 0]
            if vv[k, 0] > bhi[i, 0]:
                bhi[i, 0] = vv[k, 0]
            if vv[k, 1] < blo[i, 1]:
                blo[i, 1] = vv[k, 1]
            if vv[k, 1] > bhi[i, 1]:
                bhi[i, 1] = vv[k, 1]
    cdef Grid g
    _grid_build(&g, blo, bhi)
    cdef long *nbr = <long*>malloc(n * sizeof(long))
    cdef double *ivs = <double*>malloc(2 * (n + 2) * sizeof(double))
    if nbr == NULL or ivs == NULL:
        _grid_free(&g)
        raise MemoryError()
    normals, lengths = [], []
    cdef long nc, j, e, niv, m
    cdef int nv, nvj, kk, ok
    cdef double axp, ayp, bxp, byp, ex, ey, elen, t0, t1, tj0, tj1
    cdef double px, py, qx, qy, nx, ny, num, den, t, tot, curt
    try:
        for i in range(n):
            nv = oo[i + 1] - oo[i]
            nc = _grid_query(&g, blo, bhi, i, nbr)
            for e in range(nv):
                axp = vv[oo[i] + e, 0]
                ayp = vv[oo[i] + e, 1]
                bxp = vv[oo[i] + (e + 1) % nv, 0]
                byp = vv[oo[i] + (e + 1) % nv, 1]
                ex = bxp - axp
                ey = byp - ayp
                elen = sqrt(ex * ex + ey * ey)
                if elen <= 1e-14:
                    continue
                # window restriction
                t0 = 0.0
                t1 = 1.0
                ok = 1
                for kk in range(2):
                    num = (wl0 if kk == 0 else wl1)
                    den = (ex if kk == 0 else ey)
                    px = (axp if kk == 0 else ayp)
                    qx = (wh0 if kk == 0 else wh1)
                    if den > -1e-15 and den < 1e-15:
                        if px < num or px > qx:
                            ok = 0
                            break
                    else:
                        tj0 = (num - px) / den
                        tj1 = (qx - px) / den
                        if tj0 > tj1:
                            t = tj0
                            tj0 = tj1
                            tj1 = t
                        if tj0 > t0:
                            t0 = tj0
                        if tj1 < t1:
                            t1 = tj1
                if not ok or t1 <= t0:
                    continue
                # chords of neighbors
                niv = 0
                for k in range(nc):
                    j = nbr[k]
                    nvj = oo[j + 1] - oo[j]
                    tj0 = 0.0
                    tj1 = 1.0
                    ok = 1
                    for kk in range(nvj):
                        px = vv[oo[j] + kk, 0]
                        py = vv[oo[j] + kk, 1]
                        qx = vv[oo[j] + (kk + 1) % nvj, 0]
                        qy = vv[oo[j] + (kk + 1) % nvj, 1]
                        nx = qy - py
                        ny = px - qx
                        num = nx * (px - axp) + ny * (py - ayp)
                        den = nx * ex + ny * ey
                        if den > -1e-15 and den < 1e-15:
                            if num < -1e-12:
                                ok = 0
                                break
                            continue
                        t = num / den
                        if den > 0:
                            if t < tj1:
                                tj1 = t
                        else:
                            if t > tj0:
                                tj0 = t
                        if tj0 >= tj1 - 1e-15:
                            ok = 0
                            break
                    if ok and tj1 > t0 and tj0 < t1:
                        ivs[2 * niv] = tj0 if tj0 > t0 else t0
                        ivs[2 * niv + 1] = tj1 if tj1 < t1 else t1
                        niv += 1
                # sort intervals by start, subtract union
                for k in range(1, niv):
                    px = ivs[2 * k]
                    py = ivs[2 * k + 1]
                    m = k - 1
                    while m >= 0 and ivs[2 * m] > px:
                        ivs[2 * (m + 1)] = ivs[2 * m]
                        ivs[2 * (m + 1) + 1] = ivs[2 * m + 1]
                        m -= 1
                    ivs[2 * (m + 1)] = px
                    ivs[2 * (m + 1) + 1] = py
                tot = t1 - t0
                curt = t0
                for k in range(niv):
                    if ivs[2 * k + 1] <= curt:
                        continue
                    px = ivs[2 * k] if ivs[2 * k] > curt else curt
                    tot -= ivs[2 * k + 1] - px
                    curt = ivs[2 * k + 1]
                if tot > 1e-15:
                    normals.append((ey / elen, -ex / elen))
                    lengths.append(tot * elen)
    finally:
        free(nbr)
        free(ivs)
        _grid_free(&g)
    if not normals:
        return np.zeros((0, 2)), np.zeros(0)
    return np.array(normals), np.array(lengths)
