"""Exact convex-polytope kernel: supports, volumes, area measures, mixed volumes.

Bodies are stored by their vertices (V-representation); facet data is derived
on demand and never read from input.  Dimensions 2 and 3 are fully supported,
dimension 4 is restricted to axis-aligned boxes, dimension 1 appears only as
the image of projections.  Lower-dimensional bodies (segments, plates) are
first class: they carry an affine-dimension flag and the degenerate
conventions documented on each function.
"""

import itertools
import json
import math

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial import QhullError


class GeometryError(Exception):
    """Base class for errors raised by the geometry kernel."""


class InvalidPolytopeError(GeometryError):
    pass


class DegenerateBodyError(GeometryError):
    pass


class UnsupportedCaseError(GeometryError):
    pass


class ConditioningError(GeometryError):
    """Numeric coefficient extraction was too ill-conditioned to trust."""


# Relative tolerance for floating comparisons throughout the kernel.
REL_TOL = 1e-9
# Vertex deduplication / rank decisions.
GEOM_EPS = 1e-12


def unit_ball_volume(m):
    """Volume kappa_m of the m-dimensional unit ball."""
    return math.pi ** (m / 2.0) / math.gamma(1.0 + m / 2.0)


def _as_points(vertices, dim=None):
    pts = np.atleast_2d(np.asarray(vertices, dtype=float))
    if pts.size == 0:
        raise InvalidPolytopeError("empty vertex list")
    if not np.all(np.isfinite(pts)):
        raise InvalidPolytopeError("non-finite vertex coordinates")
    if dim is not None and pts.shape[1] != dim:
        raise InvalidPolytopeError(
            "expected dimension %d, got %d" % (dim, pts.shape[1]))
    return pts


def _dedupe(pts):
    order = np.lexsort(pts.T[::-1])
    pts = pts[order]
    keep = np.ones(len(pts), dtype=bool)
    scale = max(1.0, np.abs(pts).max())
    for i in range(1, len(pts)):
        if np.linalg.norm(pts[i] - pts[i - 1]) <= 1e-10 * scale:
            keep[i] = False
    return pts[keep]


def _affine_basis(pts):
    """Orthonormal basis of the affine hull directions of a point cloud."""
    center = pts.mean(axis=0)
    diff = pts - center
    scale = max(1.0, np.abs(diff).max())
    u, s, vt = np.linalg.svd(diff, full_matrices=False)
    rank = int(np.sum(s > 1e-9 * scale * math.sqrt(len(pts))))
    return center, vt[:rank].T  # (d, rank), columns orthonormal


def _monotone_chain(pts):
    """Indices of the convex hull of 2D points, counterclockwise order."""
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts_sorted = pts[order]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    scale = max(1.0, np.abs(pts).max()) ** 2
    lower = []
    for i in range(len(pts_sorted)):
        while len(lower) >= 2 and cross(
                pts_sorted[lower[-2]], pts_sorted[lower[-1]],
                pts_sorted[i]) <= 1e-14 * scale:
            lower.pop()
        lower.append(i)
    upper = []
    for i in range(len(pts_sorted) - 1, -1, -1):
        while len(upper) >= 2 and cross(
                pts_sorted[upper[-2]], pts_sorted[upper[-1]],
                pts_sorted[i]) <= 1e-14 * scale:
            upper.pop()
        upper.append(i)
    hull = lower[:-1] + upper[:-1]
    return order[hull]


class Polytope:
    """Convex polytope given by vertices, with derived facet data.

    `dim` is the ambient dimension, `affine_dim` the dimension of the affine
    hull; bodies with affine_dim < dim are flagged degenerate but remain
    usable as test bodies (segments, plates).
    """

    __slots__ = ("dim", "vertices", "affine_dim", "_facets", "_is_box",
                 "_box_lo", "_box_hi", "_facet_polys")

    def __init__(self, vertices, dim=None):
        pts = _as_points(vertices, dim)
        self.dim = pts.shape[1]
        if not 1 <= self.dim <= 4:
            raise InvalidPolytopeError("dimension must be 1..4")
        pts = _dedupe(pts)
        center, basis = _affine_basis(pts)
        self.affine_dim = basis.shape[1]
        if self.affine_dim == self.dim:
            if self.dim == 1:
                pts = np.array([[pts[:, 0].min()], [pts[:, 0].max()]])
            elif self.dim == 2:
                pts = pts[_monotone_chain(pts)]
            elif self.dim == 3:
                hull = ConvexHull(pts)
                pts = pts[hull.vertices]
            else:  # dim 4: verified below, boxes only need no reduction
                pass
        elif self.affine_dim > 0:
            # reduce within the affine hull so every stored vertex is extreme
            local = (pts - center) @ basis
            sub = Polytope(local)
            pts = center + sub.vertices @ basis.T
        self.vertices = pts
        self.vertices.setflags(write=False)
        self._facets = None
        self._facet_polys = None
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        corners = np.array(list(itertools.product(*zip(lo, hi))))
        self._is_box = (
            self.affine_dim == self.dim
            and len(pts) == 2 ** self.dim
            and all(np.linalg.norm(pts - c, axis=1).min() <= 1e-9 *
                    max(1.0, np.abs(pts).max()) for c in corners))
        self._box_lo, self._box_hi = lo, hi
        if self.dim == 4 and self.affine_dim == 4 and not self._is_box:
            raise UnsupportedCaseError(
                "full-dimensional 4D bodies are supported for axis-aligned "
                "boxes only")

    # ------------------------------------------------------------------
    # constructors
    @classmethod
    def box(cls, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != hi.shape or np.any(hi < lo):
            raise InvalidPolytopeError("invalid box bounds")
        corners = np.array(list(itertools.product(*zip(lo, hi))))
        return cls(corners)

    @classmethod
    def cube(cls, dim, side=1.0, centered=False):
        lo = np.full(dim, -side / 2.0 if centered else 0.0)
        return cls.box(lo, lo + side)

    @classmethod
    def segment(cls, a, b):
        return cls(np.array([a, b], dtype=float))

    @classmethod
    def regular_polygon(cls, n, radius=1.0, phase=0.0):
        ang = phase + 2.0 * math.pi * np.arange(n) / n
        return cls(radius * np.stack([np.cos(ang), np.sin(ang)], axis=1))

    @classmethod
    def simplex(cls, dim):
        """conv{0, e_1, ..., e_dim}."""
        return cls(np.vstack([np.zeros(dim), np.eye(dim)]))

    @classmethod
    def from_json(cls, data):
        if isinstance(data, str):
            data = json.loads(data)
        return cls(data["vertices"], dim=int(data["dim"]))

    def to_json(self):
        return {"dim": int(self.dim), "vertices": self.vertices.tolist()}

    # ------------------------------------------------------------------
    @property
    def is_full_dim(self):
        return self.affine_dim == self.dim

    @property
    def is_box(self):
        return self._is_box

    @property
    def box_bounds(self):
        if not self._is_box:
            raise InvalidPolytopeError("not an axis-aligned box")
        return self._box_lo.copy(), self._box_hi.copy()

    def bounding_box(self):
        return self._box_lo.copy(), self._box_hi.copy()

    def circumradius(self, center=None):
        c = np.zeros(self.dim) if center is None else np.asarray(center)
        return float(np.linalg.norm(self.vertices - c, axis=1).max())

    def support(self, u):
        """Support function h(P, u) = max_v <v, u>; homogeneous in u."""
        u = np.asarray(u, dtype=float)
        return float(np.max(self.vertices @ u))

    def support_many(self, dirs):
        return np.max(np.asarray(dirs, dtype=float) @ self.vertices.T, axis=1)

    def translate(self, t):
        return Polytope(self.vertices + np.asarray(t, dtype=float))

    def scale(self, lam):
        if lam < 0:
            raise InvalidPolytopeError("negative scale; use reflect()")
        if lam == 0:
            return Polytope(np.zeros((1, self.dim)))
        return Polytope(self.vertices * lam)

    def reflect(self):
        """Reflection P* = -P in the origin."""
        return Polytope(-self.vertices)

    def rotate(self, rot):
        rot = np.asarray(rot, dtype=float)
        return Polytope(self.vertices @ rot.T)

    def __repr__(self):
        return "Polytope(dim=%d, affine_dim=%d, nverts=%d)" % (
            self.dim, self.affine_dim, len(self.vertices))

    # ------------------------------------------------------------------
    def facets(self):
        """List of (outward unit normal, offset) pairs, full-dim bodies only."""
        if not self.is_full_dim:
            raise DegenerateBodyError("lower-dimensional body has no facets")
        if self._facets is None:
            self._build_facets()
        return self._facets

    def facet_polygons(self):
        """For d=3: list of (normal, offset, ordered vertex loop) per facet."""
        if self.dim != 3:
            raise UnsupportedCaseError("facet polygons implemented for d=3")
        if self._facet_polys is None:
            self._build_facets()
        return self._facet_polys

    def _build_facets(self):
        if self.dim == 1:
            a, b = self.vertices[:, 0].min(), self.vertices[:, 0].max()
            self._facets = [(np.array([1.0]), b), (np.array([-1.0]), -a)]
            return
        if self.dim == 2:
            verts = self.vertices
            facets = []
            for i in range(len(verts)):
                a, b = verts[i], verts[(i + 1) % len(verts)]
                edge = b - a
                n = np.array([edge[1], -edge[0]])
                n /= np.linalg.norm(n)
                facets.append((n, float(n @ a)))
            self._facets = facets
            return
        if self.dim == 4:
            lo, hi = self._box_lo, self._box_hi
            facets = []
            for ax in range(4):
                e = np.zeros(4)
                e[ax] = 1.0
                facets.append((e.copy(), hi[ax]))
                facets.append((-e, -lo[ax]))
            self._facets = facets
            return
        # d = 3: merge Qhull simplices into planar facets
        hull = ConvexHull(self.vertices)
        eqs = hull.equations  # rows (n, -offset) with n.x + b <= 0 inside
        groups = {}
        for idx, eq in enumerate(eqs):
            key = tuple(np.round(eq / np.linalg.norm(eq[:3]), 9))
            groups.setdefault(key, []).append(idx)
        facets = []
        polys = []
        for key, simplex_ids in groups.items():
            n = eqs[simplex_ids[0], :3].astype(float)
            n /= np.linalg.norm(n)
            off = float(-eqs[simplex_ids[0], 3] / np.linalg.norm(
                eqs[simplex_ids[0], :3]))
            vids = sorted(set(
                v for sid in simplex_ids for v in hull.simplices[sid]))
            pts = self.vertices[vids]
            # order the facet loop by angle in the facet plane
            c = pts.mean(axis=0)
            t1 = pts[np.argmax(np.linalg.norm(pts - c, axis=1))] - c
            t1 /= np.linalg.norm(t1)
            t2 = np.cross(n, t1)
            ang = np.arctan2((pts - c) @ t2, (pts - c) @ t1)
            loop = pts[np.argsort(ang)]
            facets.append((n, off))
            polys.append((n, off, loop))
        self._facets = facets
        self._facet_polys = polys

    def halfspaces(self):
        """H-representation as (A, b) with A x <= b."""
        fs = self.facets()
        A = np.array([f[0] for f in fs])
        b = np.array([f[1] for f in fs])
        return A, b

    def contains(self, x, tol=1e-9):
        A, b = self.halfspaces()
        return bool(np.all(A @ np.asarray(x) <= b + tol))


# ----------------------------------------------------------------------
# spherical measures


class DiscreteSphericalMeasure:
    """Weighted atoms on the unit sphere (area measures and their means)."""

    __slots__ = ("directions", "weights")

    def __init__(self, directions, weights, merge=True):
        dirs = np.atleast_2d(np.asarray(directions, dtype=float))
        w = np.asarray(weights, dtype=float).ravel()
        if len(dirs) != len(w):
            raise ValueError("directions/weights length mismatch")
        if np.any(w < -1e-12 * max(1.0, np.abs(w).max(initial=0.0))):
            raise ValueError("negative atom weight")
        norms = np.linalg.norm(dirs, axis=1)
        if len(dirs) and not np.allclose(norms, 1.0, atol=1e-9):
            raise ValueError("directions must be unit vectors")
        w = np.maximum(w, 0.0)
        if merge and len(dirs):
            dirs, w = _merge_atoms(dirs, w)
        self.directions = dirs
        self.weights = w

    @classmethod
    def empty(cls, dim):
        return cls(np.zeros((0, dim)), np.zeros(0), merge=False)

    @property
    def dim(self):
        return self.directions.shape[1]

    def total_mass(self):
        return float(self.weights.sum())

    def barycenter(self):
        if len(self.weights) == 0:
            return np.zeros(self.dim)
        return self.weights @ self.directions

    def is_centred(self, tol=1e-8):
        m = self.total_mass()
        if m == 0.0:
            return True
        return bool(np.linalg.norm(self.barycenter()) <= tol * m)

    def reflect(self):
        return DiscreteSphericalMeasure(-self.directions, self.weights,
                                        merge=False)

    def scaled(self, factor):
        return DiscreteSphericalMeasure(self.directions,
                                        self.weights * factor, merge=False)

    def __add__(self, other):
        if len(self.directions) == 0:
            return other
        if len(other.directions) == 0:
            return self
        return DiscreteSphericalMeasure(
            np.vstack([self.directions, other.directions]),
            np.concatenate([self.weights, other.weights]))

    def pair_support(self, body, centred=True):
        """Integral of the (centred) support function of `body` against self."""
        if len(self.directions) == 0:
            return 0.0
        h = body.support_many(self.directions)
        if centred:
            s = steiner_point(body)
            h = h - self.directions @ s
        return float(h @ self.weights)


def _merge_atoms(dirs, w, tol=1e-9):
    order = np.lexsort(dirs.T[::-1])
    dirs, w = dirs[order], w[order]
    out_d, out_w = [dirs[0]], [w[0]]
    for i in range(1, len(dirs)):
        if np.linalg.norm(dirs[i] - out_d[-1]) <= tol:
            out_w[-1] += w[i]
        else:
            out_d.append(dirs[i])
            out_w.append(w[i])
    return np.array(out_d), np.array(out_w)


class Subspace:
    """Linear subspace given by an orthonormal basis (columns)."""

    __slots__ = ("basis",)

    def __init__(self, basis):
        basis = np.atleast_2d(np.asarray(basis, dtype=float))
        if basis.shape[0] < basis.shape[1]:
            raise ValueError("basis must be d x k with k <= d")
        gram = basis.T @ basis
        if not np.allclose(gram, np.eye(basis.shape[1]), atol=1e-12):
            raise ValueError("basis not orthonormal to 1e-12")
        self.basis = basis

    @property
    def ambient_dim(self):
        return self.basis.shape[0]

    @property
    def dim(self):
        return self.basis.shape[1]

    @classmethod
    def full(cls, d):
        return cls(np.eye(d))

    @classmethod
    def span(cls, vectors):
        q, _ = np.linalg.qr(np.atleast_2d(np.asarray(vectors, float)).T)
        return cls(q)


# ----------------------------------------------------------------------
# functionals


def support_function(poly, u):
    """h(P, u): maximum of <v, u> over the vertices."""
    return poly.support(u)


def volume(poly):
    """Lebesgue volume; zero for lower-dimensional bodies."""
    if not poly.is_full_dim:
        return 0.0
    d = poly.dim
    if poly.is_box:
        return float(np.prod(poly._box_hi - poly._box_lo))
    if d == 1:
        return float(poly.vertices[:, 0].max() - poly.vertices[:, 0].min())
    if d == 2:
        v = poly.vertices
        x, y = v[:, 0], v[:, 1]
        return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) -
                               np.dot(y, np.roll(x, -1))))
    if d == 3:
        return float(ConvexHull(poly.vertices).volume)
    raise UnsupportedCaseError("4D volume supported for boxes only")


def _relative_volume(poly):
    """Volume within the affine hull ((affine_dim)-content)."""
    if poly.affine_dim == 0:
        return 0.0
    if poly.is_full_dim:
        return volume(poly)
    center, basis = _affine_basis(poly.vertices)
    local = (poly.vertices - center) @ basis
    return volume(Polytope(local))


def _in_affine_coords(poly):
    center, basis = _affine_basis(poly.vertices)
    return Polytope((poly.vertices - center) @ basis), center, basis


def steiner_point(poly):
    """Steiner point s(P) = (1/kappa_d) * integral of h(P,u) u over S^{d-1}.

    Exact facet-arc decomposition in d = 1, 2; spherical product quadrature
    (Gauss-Legendre x uniform, 4608 >= 2048 nodes) in d = 3; box centers in
    d = 4.  For lower-dimensional bodies the point is computed inside the
    affine hull (the Steiner point does not depend on the ambient dimension).
    """
    if len(poly.vertices) == 1:
        return poly.vertices[0].copy()
    if poly.affine_dim == 1:
        # segments: midpoint of the two extreme vertices
        direction = poly.vertices[-1] - poly.vertices[0]
        t = poly.vertices @ direction
        return 0.5 * (poly.vertices[np.argmin(t)] + poly.vertices[np.argmax(t)])
    if not poly.is_full_dim:
        sub, center, basis = _in_affine_coords(poly)
        return center + basis @ steiner_point(sub)
    if poly.is_box:
        return 0.5 * (poly._box_lo + poly._box_hi)
    if poly.dim == 2:
        return _steiner_2d(poly)
    if poly.dim == 3:
        return _steiner_3d(poly)
    raise UnsupportedCaseError("4D Steiner point supported for boxes only")


def _steiner_2d(poly):
    # each vertex owns the arc of directions between its adjacent edge normals
    verts = poly.vertices
    n = len(verts)
    normals = []
    for i in range(n):
        e = verts[(i + 1) % n] - verts[i]
        normals.append(math.atan2(-e[0], e[1]))
    acc = np.zeros(2)
    for i in range(n):
        th1 = normals[i - 1]
        th2 = normals[i]
        if th2 < th1:
            th2 += 2.0 * math.pi
        v = verts[i]
        acc += _arc_integral(v, th1, th2)
    return acc / math.pi


def _arc_integral(v, th1, th2):
    # integral over [th1, th2] of <v, u(t)> u(t) dt, u(t) = (cos t, sin t)
    def anti(t):
        c2, s2 = math.cos(2 * t), math.sin(2 * t)
        ix = v[0] * (t / 2 + s2 / 4) + v[1] * (-c2 / 4)
        iy = v[0] * (-c2 / 4) + v[1] * (t / 2 - s2 / 4)
        return np.array([ix, iy])

    return anti(th2) - anti(th1)


_S2_GRID = None


def _sphere_grid():
    """Cached product quadrature on S^2 (antipodally symmetric)."""
    global _S2_GRID
    if _S2_GRID is None:
        nz, nphi = 48, 96
        z, wz = np.polynomial.legendre.leggauss(nz)
        phi = 2.0 * math.pi * (np.arange(nphi) + 0.5) / nphi
        wphi = 2.0 * math.pi / nphi
        zz = np.repeat(z, nphi)
        pp = np.tile(phi, nz)
        r = np.sqrt(1.0 - zz ** 2)
        nodes = np.stack([r * np.cos(pp), r * np.sin(pp), zz], axis=1)
        weights = np.repeat(wz, nphi) * wphi
        _S2_GRID = (nodes, weights)
    return _S2_GRID


def _steiner_3d(poly):
    nodes, weights = _sphere_grid()
    h = poly.support_many(nodes)
    return (nodes * (h * weights)[:, None]).sum(axis=0) / unit_ball_volume(3)


def minkowski_sum(p, q):
    """Minkowski sum; convex hull of the pairwise vertex sums."""
    if p.dim != q.dim:
        raise InvalidPolytopeError("dimension mismatch in Minkowski sum")
    if p.is_box and q.is_box:
        return Polytope.box(p._box_lo + q._box_lo, p._box_hi + q._box_hi)
    sums = (p.vertices[:, None, :] + q.vertices[None, :, :]).reshape(
        -1, p.dim)
    return Polytope(sums)


def intrinsic_volumes(poly):
    """(V_0, ..., V_d); exact for d <= 3 and for axis-aligned boxes in d = 4.

    Lower-dimensional bodies are evaluated inside their affine hull and
    padded with zeros (intrinsic volumes do not depend on the ambient space).
    """
    d = poly.dim
    if not poly.is_full_dim:
        if poly.affine_dim == 0:
            return np.array([1.0] + [0.0] * d)
        sub, _, _ = _in_affine_coords(poly)
        inner = intrinsic_volumes(sub)
        return np.concatenate([inner, np.zeros(d - poly.affine_dim)])
    if poly.is_box:
        edges = poly._box_hi - poly._box_lo
        out = np.empty(d + 1)
        for j in range(d + 1):
            out[j] = sum(np.prod(c) for c in itertools.combinations(edges, j))
        return out
    if d == 1:
        return np.array([1.0, volume(poly)])
    if d == 2:
        per = perimeter(poly)
        return np.array([1.0, per / 2.0, volume(poly)])
    if d == 3:
        area = sum(_polygon_area_3d(loop) for _, _, loop in
                   poly.facet_polygons())
        v1 = _mean_width_term_3d(poly)
        return np.array([1.0, v1, area / 2.0, volume(poly)])
    raise UnsupportedCaseError("4D intrinsic volumes supported for boxes only")


def perimeter(poly):
    v = poly.vertices
    if poly.affine_dim <= 1:
        # doubly covered segment
        return 2.0 * _relative_volume(poly) if poly.affine_dim == 1 else 0.0
    return float(np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1).sum())


def _polygon_area_3d(loop):
    c = loop.mean(axis=0)
    area = 0.0
    for i in range(len(loop)):
        a = loop[i] - c
        b = loop[(i + 1) % len(loop)] - c
        area += 0.5 * np.linalg.norm(np.cross(a, b))
    return area


def _edges_3d(poly):
    """Unique edges with their two adjacent facet normals."""
    polys = poly.facet_polygons()
    edge_map = {}
    for fi, (n, _, loop) in enumerate(polys):
        m = len(loop)
        for i in range(m):
            a, b = loop[i], loop[(i + 1) % m]
            key = tuple(sorted([tuple(np.round(a, 9)), tuple(np.round(b, 9))]))
            edge_map.setdefault(key, []).append(fi)
    edges = []
    for key, fids in edge_map.items():
        if len(fids) != 2:
            continue
        a = np.array(key[0])
        b = np.array(key[1])
        edges.append((a, b, polys[fids[0]][0], polys[fids[1]][0]))
    return edges


def _mean_width_term_3d(poly):
    # V_1 = (1/2pi) * sum over edges of length * exterior (normal) angle
    total = 0.0
    for a, b, n1, n2 in _edges_3d(poly):
        length = np.linalg.norm(b - a)
        cosang = float(np.clip(n1 @ n2, -1.0, 1.0))
        total += length * math.acos(cosang)
    return total / (2.0 * math.pi)


def area_measure_top(poly):
    """Top-order area measure S_{d-1}(P, .) as a discrete spherical measure.

    One atom per facet (outer normal, facet (d-1)-content).  A body of
    affine dimension d-1 (plate in d=3, segment in d=2) contributes two
    opposite atoms of weight equal to its content; bodies of lower affine
    dimension have zero top-order measure.
    """
    d = poly.dim
    if not poly.is_full_dim:
        if poly.affine_dim == d - 1:
            _, basis = _affine_basis(poly.vertices)
            n = _orthogonal_complement(basis)
            content = _relative_volume(poly)
            return DiscreteSphericalMeasure(
                np.array([n, -n]), np.array([content, content]), merge=False)
        return DiscreteSphericalMeasure.empty(d)
    if poly.is_box:
        lo, hi = poly._box_lo, poly._box_hi
        edges = hi - lo
        dirs, ws = [], []
        for ax in range(d):
            w = float(np.prod(np.delete(edges, ax)))
            e = np.zeros(d)
            e[ax] = 1.0
            dirs.extend([e.copy(), -e])
            ws.extend([w, w])
        return DiscreteSphericalMeasure(np.array(dirs), np.array(ws),
                                        merge=False)
    if d == 2:
        v = poly.vertices
        dirs, ws = [], []
        for i in range(len(v)):
            e = v[(i + 1) % len(v)] - v[i]
            length = np.linalg.norm(e)
            dirs.append(np.array([e[1], -e[0]]) / length)
            ws.append(float(length))
        return DiscreteSphericalMeasure(np.array(dirs), np.array(ws))
    if d == 3:
        dirs, ws = [], []
        for n, _, loop in poly.facet_polygons():
            dirs.append(n)
            ws.append(_polygon_area_3d(loop))
        return DiscreteSphericalMeasure(np.array(dirs), np.array(ws))
    raise UnsupportedCaseError("4D area measure supported for boxes only")


def _orthogonal_complement(basis):
    d = basis.shape[0]
    u, s, vt = np.linalg.svd(basis.T, full_matrices=True)
    n = vt[-1]
    return n / np.linalg.norm(n)


def project(poly, subspace):
    """Orthogonal projection onto `subspace`, in its coordinate frame."""
    if subspace.ambient_dim != poly.dim:
        raise InvalidPolytopeError("subspace ambient dimension mismatch")
    coords = poly.vertices @ subspace.basis
    return Polytope(coords)


# ----------------------------------------------------------------------
# mixed volumes


def _scaled_sum_volume(bodies, lams):
    acc = None
    for poly, lam in zip(bodies, lams):
        scaled = poly.scale(lam)
        acc = scaled if acc is None else minkowski_sum(acc, scaled)
    return volume(acc)


def mixed_volume(bodies):
    """Mixed volume V(K_1[n_1], ..., K_k[n_k]).

    `bodies` is a list of (Polytope, multiplicity) pairs with multiplicities
    summing to d.  The value is extracted as a polynomial coefficient of
    vol(l_1 K_1 + ... + l_k K_k) sampled on the integer grid {1, ..., d+1}
    per slot (the first slot is fixed at 1 by homogeneity).
    """
    polys = [b[0] for b in bodies]
    mults = [int(b[1]) for b in bodies]
    if not polys:
        raise InvalidPolytopeError("empty body list")
    d = polys[0].dim
    if any(p.dim != d for p in polys):
        raise InvalidPolytopeError("mixed volume needs equal dimensions")
    if any(m < 0 for m in mults) or sum(mults) != d:
        raise ValueError("multiplicities must be nonnegative and sum to d")
    keep = [i for i, m in enumerate(mults) if m > 0]
    polys = [polys[i] for i in keep]
    mults = [mults[i] for i in keep]
    k = len(polys)
    if k == 1:
        return volume(polys[0])

    # monomials in the trailing k-1 scale variables, total degree <= d
    exps = [e for e in itertools.product(range(d + 1), repeat=k - 1)
            if sum(e) <= d]
    grid = list(itertools.product(range(1, d + 2), repeat=k - 1))
    rows = np.array([[np.prod(np.array(g, dtype=float) ** np.array(e))
                      for e in exps] for g in grid])
    vals = np.array([_scaled_sum_volume(polys, (1.0,) + tuple(map(float, g)))
                     for g in grid])
    coeffs, residual, rank, sv = np.linalg.lstsq(rows, vals, rcond=None)
    cond = sv[0] / sv[-1] if sv[-1] > 0 else np.inf
    fit_err = np.linalg.norm(rows @ coeffs - vals)
    scale = max(1.0, np.linalg.norm(vals))
    if rank < len(exps) or cond > 1e12 or fit_err > 1e-6 * scale:
        raise ConditioningError(
            "mixed volume extraction ill-conditioned "
            f"(cond={cond:.3g}, residual={fit_err:.3g})")
    target = tuple(mults[1:])
    c = coeffs[exps.index(target)]
    multinom = math.factorial(d)
    for m in mults:
        multinom //= math.factorial(m)
    return float(c / multinom)


def mixed_volume_1_dm1(k_body, m_body):
    """V(K[1], M[d-1]) via the centred support/area-measure pairing."""
    d = k_body.dim
    return area_measure_top(m_body).pair_support(k_body) / d
