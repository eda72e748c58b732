"""Stationary Boolean model simulation and density estimation.

Particles are sampled in the observation window dilated by the maximal grain
circumradius, so every particle that can touch the window is present
(minus-sampling).  Unbounded functionals (volume fraction, exposed boundary)
are therefore unbiased on the window itself; the Euler-characteristic and
mixed-volume densities use the inclusion-exclusion estimator localized by
the Steiner points of the intersections on the eroded window, which makes
them unbiased as well.
"""

import itertools
import json
import math

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection, QhullError

from . import geom, kernels
from .geom import (DiscreteSphericalMeasure, Polytope, UnsupportedCaseError,
                   steiner_point, volume)
from .kernels import BudgetExceededError
from .tables import DensityTable

DEFAULT_BUDGET = 50_000_000
# quantile at which an unbounded (log-normal) scaling law is truncated so
# that grains stay bounded and minus-sampling stays exact
LOGNORMAL_TRUNC_Q = 1.0 - 1e-6


class InvalidModelError(ValueError):
    pass


class ScalingLaw:
    """Grain scaling factor law: fixed, discrete, or truncated log-normal."""

    def __init__(self, kind="fixed", values=None, mu=0.0, sigma=1.0):
        if kind not in ("fixed", "discrete", "lognormal"):
            raise InvalidModelError(f"unknown scaling law {kind!r}")
        self.kind = kind
        if kind == "discrete":
            values = [(float(s), float(p)) for s, p in values]
            if not values or abs(sum(p for _, p in values) - 1.0) > 1e-9:
                raise InvalidModelError("discrete scaling probs must sum to 1")
            if any(s <= 0 for s, _ in values):
                raise InvalidModelError("scales must be positive")
            self.values = values
        elif kind == "lognormal":
            self.mu = float(mu)
            self.sigma = float(sigma)
            if self.sigma <= 0:
                raise InvalidModelError("lognormal sigma must be positive")

    def max_scale(self):
        if self.kind == "fixed":
            return 1.0
        if self.kind == "discrete":
            return max(s for s, _ in self.values)
        from scipy.stats import norm
        return math.exp(self.mu
                        + self.sigma * norm.ppf(LOGNORMAL_TRUNC_Q))

    def moment(self, m):
        """E[xi^m] under the (truncated) law."""
        if self.kind == "fixed":
            return 1.0
        if self.kind == "discrete":
            return sum(p * s ** m for s, p in self.values)
        from scipy.stats import norm
        zq = norm.ppf(LOGNORMAL_TRUNC_Q)
        raw = math.exp(m * self.mu + 0.5 * m ** 2 * self.sigma ** 2)
        return raw * norm.cdf(zq - m * self.sigma) / LOGNORMAL_TRUNC_Q

    def sample(self, rng, size=None):
        if self.kind == "fixed":
            return np.ones(size) if size is not None else 1.0
        if self.kind == "discrete":
            scales = np.array([s for s, _ in self.values])
            probs = np.array([p for _, p in self.values])
            idx = rng.choice(len(scales), size=size, p=probs)
            return scales[idx]
        from scipy.stats import norm
        u = rng.uniform(0.0, LOGNORMAL_TRUNC_Q, size=size)
        return np.exp(self.mu + self.sigma * norm.ppf(u))

    def to_json(self):
        if self.kind == "discrete":
            return {"kind": "discrete", "values": self.values}
        if self.kind == "lognormal":
            return {"kind": "lognormal", "mu": self.mu, "sigma": self.sigma}
        return {"kind": "fixed"}

    @classmethod
    def from_json(cls, data):
        data = dict(data)
        return cls(data.pop("kind", "fixed"), **data)


class GrainModel:
    """Intensity plus typical-grain law (shape mixture, rotation, scaling).

    Base shapes are recentred so their Steiner point is the origin; rotation
    and scaling fix the origin, so sampled grains are Steiner-centred too.
    """

    def __init__(self, shapes, gamma, rotation="none", scaling=None):
        if gamma <= 0:
            raise InvalidModelError("intensity gamma must be positive")
        shapes = [(shape, float(p)) for shape, p in shapes]
        if not shapes or abs(sum(p for _, p in shapes) - 1.0) > 1e-9:
            raise InvalidModelError("shape probabilities must sum to 1")
        self.dim = shapes[0][0].dim
        if any(s.dim != self.dim for s, _ in shapes):
            raise InvalidModelError("all shapes must share a dimension")
        if rotation not in ("none", "uniform"):
            raise InvalidModelError(f"unknown rotation law {rotation!r}")
        if rotation == "uniform" and self.dim not in (2, 3):
            raise InvalidModelError("uniform rotation supported for d=2,3")
        self.shapes = [(s.translate(-steiner_point(s)), p) for s, p in shapes]
        self.gamma = float(gamma)
        self.rotation = rotation
        self.scaling = scaling or ScalingLaw("fixed")
        self.is_box_model = (rotation == "none"
                             and all(s.is_box for s, _ in self.shapes))

    def max_circumradius(self):
        base = max(s.circumradius() for s, _ in self.shapes)
        return base * self.scaling.max_scale()

    def shape_probs(self):
        return np.array([p for _, p in self.shapes])

    def sample_rotation(self, rng):
        if self.rotation == "none":
            return None
        if self.dim == 2:
            a = rng.uniform(0.0, 2.0 * math.pi)
            c, s = math.cos(a), math.sin(a)
            return np.array([[c, -s], [s, c]])
        # Haar-uniform rotation from a QR factorization
        m = rng.standard_normal((3, 3))
        q, r = np.linalg.qr(m)
        q *= np.sign(np.diag(r))
        if np.linalg.det(q) < 0:
            q[:, 0] = -q[:, 0]
        return q

    def sample_grain(self, rng):
        idx = rng.choice(len(self.shapes), p=self.shape_probs())
        shape = self.shapes[idx][0]
        scale = float(self.scaling.sample(rng))
        rot = self.sample_rotation(rng)
        verts = shape.vertices * scale
        if rot is not None:
            verts = verts @ rot.T
        return Polytope(verts)

    def to_json(self):
        return {
            "gamma": self.gamma,
            "rotation": self.rotation,
            "scaling": self.scaling.to_json(),
            "shapes": [{"prob": p, **s.to_json()} for s, p in self.shapes],
        }

    @classmethod
    def from_json(cls, data):
        shapes = [(Polytope.from_json(s), s["prob"]) for s in data["shapes"]]
        return cls(shapes, data["gamma"], data.get("rotation", "none"),
                   ScalingLaw.from_json(data.get("scaling", {"kind": "fixed"})))


class Window:
    """Axis-aligned observation window (anchor + positive edges)."""

    def __init__(self, edges, anchor=None):
        self.edges = np.asarray(edges, dtype=float)
        if np.any(self.edges <= 0):
            raise InvalidModelError("window edges must be positive")
        self.anchor = (np.zeros_like(self.edges) if anchor is None
                       else np.asarray(anchor, dtype=float))

    @property
    def dim(self):
        return len(self.edges)

    @property
    def lo(self):
        return self.anchor.copy()

    @property
    def hi(self):
        return self.anchor + self.edges

    def volume(self):
        return float(np.prod(self.edges))

    def eroded(self, r):
        if np.any(self.edges <= 2 * r):
            raise InvalidModelError(
                "window too small to erode by the grain radius")
        return Window(self.edges - 2 * r, self.anchor + r)

    def to_json(self):
        return {"edges": self.edges.tolist(), "anchor": self.anchor.tolist()}

    @classmethod
    def from_json(cls, data):
        return cls(data["edges"], data.get("anchor"))


class Realization:
    """Sampled particles (grains translated to their centers) plus metadata.

    For box models the particles are stored as (lo, hi) arrays and converted
    to Polytope objects lazily; general models store the polytopes directly.
    """

    def __init__(self, window, dilation_radius, seed, box_bounds=None,
                 polytopes=None):
        self.window = window
        self.dilation_radius = float(dilation_radius)
        self.seed = seed
        self._box_bounds = box_bounds
        self._polytopes = polytopes

    @property
    def dim(self):
        return self.window.dim

    @property
    def is_box(self):
        return self._box_bounds is not None

    @property
    def count(self):
        if self._box_bounds is not None:
            return len(self._box_bounds[0])
        return len(self._polytopes)

    def box_arrays(self):
        if self._box_bounds is None:
            raise UnsupportedCaseError("realization does not hold boxes")
        return self._box_bounds

    @property
    def particles(self):
        if self._polytopes is None:
            lo, hi = self._box_bounds
            self._polytopes = [Polytope.box(lo[i], hi[i])
                               for i in range(len(lo))]
        return self._polytopes

    def poly_arrays(self):
        """Flattened (verts, offsets) arrays for the d=2 kernels."""
        polys = [p.vertices for p in self.particles]
        if not polys:
            return np.zeros((0, 2)), np.zeros(1, dtype=np.int64)
        offs = np.cumsum([0] + [len(p) for p in polys]).astype(np.int64)
        return np.ascontiguousarray(np.vstack(polys)), offs

    def dump_jsonl(self, path):
        """One particle per line."""
        with open(path, "w") as fh:
            for p in self.particles:
                fh.write(json.dumps(p.to_json()) + "\n")


def sample_realization(model, window, seed):
    """Poisson sample of all particles meeting the dilated window.

    The count is Poisson with mean gamma * vol(window + R B^d) where R is
    the maximal grain circumradius; centers are uniform in the dilated
    window and grains i.i.d. from the typical-grain law.  Deterministic in
    (model, window, seed).
    """
    if model.dim != window.dim:
        raise InvalidModelError("model/window dimension mismatch")
    rng = np.random.default_rng([int(seed) & 0x7FFFFFFF, 0x5EED])
    r = model.max_circumradius()
    dlo = window.lo - r
    dhi = window.hi + r
    mean = model.gamma * float(np.prod(dhi - dlo))
    n = int(rng.poisson(mean))
    centers = rng.uniform(dlo, dhi, size=(n, model.dim))
    if model.is_box_model:
        shapes = rng.choice(len(model.shapes), size=n, p=model.shape_probs())
        scales = np.asarray(model.scaling.sample(rng, size=n), dtype=float)
        lows = np.array([s.box_bounds[0] for s, _ in model.shapes])
        highs = np.array([s.box_bounds[1] for s, _ in model.shapes])
        lo = centers + lows[shapes] * scales[:, None]
        hi = centers + highs[shapes] * scales[:, None]
        return Realization(window, r, seed, box_bounds=(lo, hi))
    parts = [Polytope(model.sample_grain(rng).vertices + centers[i])
             for i in range(n)]
    return Realization(window, r, seed, polytopes=parts)


# ----------------------------------------------------------------------
# Euler characteristic of the union


def union_euler(real, budget=DEFAULT_BUDGET):
    """Exact Euler characteristic of (union of particles) cap window.

    Inclusion-exclusion over the subsets with nonempty common intersection
    (every such intersection is convex, so it contributes +-1), enumerated
    by depth-first search with the empty-intersection pruning rule.
    """
    win = real.window
    if real.is_box:
        lo, hi = real.box_arrays()
        chi, _, _ = kernels.box_clipped_stats(lo, hi, win.lo, win.hi, budget)
        return int(chi)
    if real.dim == 2:
        verts, offs = real.poly_arrays()
        chi, _, _ = kernels.poly_clipped_stats(verts, offs, win.lo, win.hi,
                                               budget)
        return int(chi)
    if real.dim == 3:
        chi, _ = _polytope_chi(real.particles, win.lo, win.hi, None, budget)
        return int(chi)
    raise UnsupportedCaseError("union_euler: d=4 supported for boxes only")


def _stack_halfspaces(parts):
    rows_a, rows_b = [], []
    for p in parts:
        a, b = p.halfspaces()
        rows_a.append(a)
        rows_b.append(b)
    return np.vstack(rows_a), np.concatenate(rows_b)


def _chebyshev_center(a, b):
    """(center, radius) of the largest ball in {x: a x <= b}; radius < 0
    means infeasible within tolerance."""
    d = a.shape[1]
    c = np.zeros(d + 1)
    c[-1] = -1.0
    norms = np.linalg.norm(a, axis=1)
    a_ext = np.hstack([a, norms[:, None]])
    res = linprog(c, A_ub=a_ext, b_ub=b, bounds=[(None, None)] * d + [(None, None)],
                  method="highs")
    if not res.success:
        return None, -np.inf
    return res.x[:d], res.x[d]


def _polytope_chi(parts, wlo, whi, local_box, budget):
    """chi by LP-feasibility DFS for general convex polytopes (d=3).

    With local_box None: particles are clipped to the window and the full
    inclusion-exclusion sum is returned.  With local_box = (alo, ahi): the
    subsets are counted when the Chebyshev center of the intersection falls
    inside the box (covariant localization; used by the density estimator).
    """
    d = len(wlo)
    hs = []
    for p in parts:
        a, b = p.halfspaces()
        hs.append((a, b))
    if local_box is None:
        win_a = np.vstack([np.eye(d), -np.eye(d)])
        win_b = np.concatenate([whi, -wlo])
        hs = [(np.vstack([a, win_a]), np.concatenate([b, win_b]))
              for a, b in hs]
        alo = np.full(d, -np.inf)
        ahi = np.full(d, np.inf)
    else:
        alo, ahi = local_box
    bb = [(p.bounding_box()) for p in parts]
    lo = np.array([b[0] for b in bb]) if parts else np.zeros((0, d))
    hi = np.array([b[1] for b in bb]) if parts else np.zeros((0, d))
    if local_box is None:
        lo = np.maximum(lo, wlo)
        hi = np.minimum(hi, whi)
        keep = np.all(lo <= hi, axis=1)
    else:
        keep = np.all(lo <= ahi, axis=1) & np.all(alo <= hi, axis=1)
    order = np.flatnonzero(keep)
    chi = 0
    count = 0
    stack = []
    for pos, i in enumerate(order):
        a_i, b_i = hs[i]
        c, rad = _chebyshev_center(a_i, b_i)
        count += 1
        if count > budget:
            raise BudgetExceededError("subset budget exceeded")
        if rad <= 1e-12:
            continue
        if np.all(c >= alo) and np.all(c < ahi):
            chi += 1
        cands = [j for j in order[pos + 1:]
                 if np.all(lo[j] <= hi[i]) and np.all(lo[i] <= hi[j])]
        stack.append((a_i, b_i, 1, cands, np.minimum(hi[i], hi[j] if False else hi[i])))
        # depth-first extension
        frames = [(a_i, b_i, 1, cands, lo[i].copy(), hi[i].copy())]
        while frames:
            a_cur, b_cur, size, cand, blo, bhi = frames.pop()
            for ci, j in enumerate(cand):
                if np.any(lo[j] > bhi) or np.any(blo > hi[j]):
                    continue
                a_new = np.vstack([a_cur, hs[j][0]])
                b_new = np.concatenate([b_cur, hs[j][1]])
                c, rad = _chebyshev_center(a_new, b_new)
                count += 1
                if count > budget:
                    raise BudgetExceededError("subset budget exceeded")
                if rad <= 1e-12:
                    continue
                sign = -1 if size % 2 else 1
                if np.all(c >= alo) and np.all(c < ahi):
                    chi += sign
                nlo = np.maximum(blo, lo[j])
                nhi = np.minimum(bhi, hi[j])
                frames.append((a_new, b_new, size + 1,
                               cand[ci + 1:], nlo, nhi))
    return chi, count


def _local_subsets_polytopes(parts, alo, ahi, budget):
    """(sign, intersection Polytope) pairs localized by Steiner points.

    Used by the d=3 mixed-density estimator for non-box grains; computes
    every intersection polytope by vertex enumeration, so this path is for
    desk-scale windows.
    """
    d = len(alo)
    bb = [p.bounding_box() for p in parts]
    lo = np.array([b[0] for b in bb]) if parts else np.zeros((0, d))
    hi = np.array([b[1] for b in bb]) if parts else np.zeros((0, d))
    keep = np.all(lo <= ahi, axis=1) & np.all(alo <= hi, axis=1)
    order = np.flatnonzero(keep)
    out = []
    count = 0

    def emit(sign, poly):
        s = steiner_point(poly)
        if np.all(s >= alo) and np.all(s < ahi):
            out.append((sign, poly))

    for pos, i in enumerate(order):
        count += 1
        if count > budget:
            raise BudgetExceededError("subset budget exceeded")
        emit(1, parts[i])
        a_i, b_i = parts[i].halfspaces()
        cands = [j for j in order[pos + 1:]
                 if np.all(lo[j] <= hi[i]) and np.all(lo[i] <= hi[j])]
        frames = [(a_i, b_i, 1, cands, lo[i].copy(), hi[i].copy())]
        while frames:
            a_cur, b_cur, size, cand, blo, bhi = frames.pop()
            for ci, j in enumerate(cand):
                if np.any(lo[j] > bhi) or np.any(blo > hi[j]):
                    continue
                a_new = np.vstack([a_cur, parts[j].halfspaces()[0]])
                b_new = np.concatenate([b_cur, parts[j].halfspaces()[1]])
                poly = _halfspace_polytope(a_new, b_new)
                count += 1
                if count > budget:
                    raise BudgetExceededError("subset budget exceeded")
                if poly is None:
                    continue
                emit(-1 if size % 2 else 1, poly)
                frames.append((a_new, b_new, size + 1, cand[ci + 1:],
                               np.maximum(blo, lo[j]),
                               np.minimum(bhi, hi[j])))
    return out, count


def _halfspace_polytope(a, b):
    c, rad = _chebyshev_center(a, b)
    if rad <= 1e-10:
        return None
    try:
        hsi = HalfspaceIntersection(
            np.hstack([a, -b[:, None]]), c)
        return Polytope(hsi.intersections)
    except QhullError:
        return None


# ----------------------------------------------------------------------
# exposed boundary


def exposed_boundary_measure(real, points_per_facet=10_000, seed=0):
    """Uncovered particle boundary per outer-normal direction, per volume.

    Exact for boxes (any d <= 4) and for d = 2 polygons; Monte Carlo facet
    coverage for d = 3 polytopes (stratified points per facet).  The atom
    weights are (d-1)-contents inside the window divided by the window
    volume, so the measure estimates e^{-V_d(X) density} * mean area
    measure of the particle process.
    """
    win = real.window
    wvol = win.volume()
    if real.is_box:
        lo, hi = real.box_arrays()
        table = kernels.box_exposed(lo, hi, win.lo, win.hi)
        d = real.dim
        dirs, ws = [], []
        for ax in range(d):
            e = np.zeros(d)
            e[ax] = 1.0
            dirs.extend([e.copy(), -e])
            ws.extend([table[ax, 0], table[ax, 1]])
        return DiscreteSphericalMeasure(np.array(dirs),
                                        np.array(ws) / wvol, merge=False)
    if real.dim == 2:
        verts, offs = real.poly_arrays()
        normals, lengths = kernels.poly_exposed(verts, offs, win.lo, win.hi)
        if len(lengths) == 0:
            return DiscreteSphericalMeasure.empty(2)
        return DiscreteSphericalMeasure(normals, lengths / wvol)
    if real.dim == 3:
        return _exposed_mc_3d(real, points_per_facet, seed)
    raise UnsupportedCaseError("exposed boundary: d=4 needs box grains")


def _exposed_mc_3d(real, points_per_facet, seed):
    rng = np.random.default_rng([int(seed) & 0x7FFFFFFF, 0xFACE7])
    win = real.window
    parts = real.particles
    bb = [p.bounding_box() for p in parts]
    lo = np.array([b[0] for b in bb])
    hi = np.array([b[1] for b in bb])
    dirs, ws = [], []
    for i, p in enumerate(parts):
        nbrs = [j for j in range(len(parts)) if j != i
                and np.all(lo[j] <= hi[i]) and np.all(lo[i] <= hi[j])]
        nbr_hs = [parts[j].halfspaces() for j in nbrs]
        for n, off, loop in p.facet_polygons():
            area = geom._polygon_area_3d(loop)
            if area <= 0:
                continue
            pts = _sample_polygon_3d(loop, points_per_facet, rng)
            ok = np.all((pts >= win.lo) & (pts <= win.hi), axis=1)
            for a, b in nbr_hs:
                if not ok.any():
                    break
                ok &= np.any(pts @ a.T > b + 1e-12, axis=1)
            frac = ok.mean()
            if frac > 0:
                dirs.append(n)
                ws.append(area * frac)
    if not dirs:
        return DiscreteSphericalMeasure.empty(3)
    return DiscreteSphericalMeasure(np.array(dirs),
                                    np.array(ws) / win.volume())


def _sample_polygon_3d(loop, n, rng):
    """Stratified points on a convex facet polygon (triangle fan)."""
    c = loop.mean(axis=0)
    tri_areas = []
    tris = []
    for i in range(len(loop)):
        a, b = loop[i], loop[(i + 1) % len(loop)]
        tris.append((c, a, b))
        tri_areas.append(0.5 * np.linalg.norm(np.cross(a - c, b - c)))
    tri_areas = np.array(tri_areas)
    total = tri_areas.sum()
    counts = np.maximum(1, np.round(n * tri_areas / total)).astype(int)
    pts = []
    for (p0, p1, p2), k in zip(tris, counts):
        r1 = np.sqrt(rng.uniform(size=k))
        r2 = rng.uniform(size=k)
        pts.append((1 - r1)[:, None] * p0
                   + (r1 * (1 - r2))[:, None] * p1
                   + (r1 * r2)[:, None] * p2)
    return np.vstack(pts)


# ----------------------------------------------------------------------
# density estimation


def _volume_fraction(real, budget, grid_res=0.25, seed=0):
    win = real.window
    if real.is_box:
        lo, hi = real.box_arrays()
        _, vol, _ = kernels.box_clipped_stats(lo, hi, win.lo, win.hi, budget)
        return vol / win.volume()
    if real.dim == 2:
        verts, offs = real.poly_arrays()
        _, area, _ = kernels.poly_clipped_stats(verts, offs, win.lo, win.hi,
                                                budget)
        return area / win.volume()
    # d = 3 polytopes: point-grid hit fraction
    rng = np.random.default_rng([int(seed) & 0x7FFFFFFF, 0x901D])
    axes = [np.arange(a + grid_res / 2, b, grid_res)
            for a, b in zip(win.lo, win.hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    pts = pts + rng.uniform(-grid_res / 2, grid_res / 2, size=pts.shape)
    hit = np.zeros(len(pts), dtype=bool)
    for p in real.particles:
        blo, bhi = p.bounding_box()
        cand = np.flatnonzero(~hit
                              & np.all(pts >= blo, axis=1)
                              & np.all(pts <= bhi, axis=1))
        if len(cand) == 0:
            continue
        a, b = p.halfspaces()
        inside = np.all(pts[cand] @ a.T <= b + 1e-12, axis=1)
        hit[cand[inside]] = True
    return float(hit.mean())


def _chi_density(real, budget):
    win = real.window
    r = real.dilation_radius
    ero = win.eroded(r)
    evol = ero.volume()
    if real.is_box:
        lo, hi = real.box_arrays()
        signs, _, _ = kernels.box_local_subsets(lo, hi, ero.lo, ero.hi,
                                                budget)
        return float(signs.sum()) / evol
    if real.dim == 2:
        verts, offs = real.poly_arrays()
        chi, _ = kernels.poly_chi_local(verts, offs, ero.lo, ero.hi, budget)
        return float(chi) / evol
    if real.dim == 3:
        chi, _ = _polytope_chi(real.particles, win.lo, win.hi,
                               (ero.lo, ero.hi), budget)
        return float(chi) / evol
    raise UnsupportedCaseError("chi density: d=4 needs box grains")


def _box_support_centred(ilo, ihi, dirs):
    """Centred support values h*(B, u) of boxes B for many directions."""
    half = 0.5 * (ihi - ilo)
    return np.abs(dirs) @ half.T  # (natoms, nboxes)


def _mixed_j1_rows(real, test_bodies, budget):
    """V(Z[1], K[d-1]) estimates for d = 3 via localized inclusion-exclusion.

    Every nonempty intersection I of particles contributes
    (-1)^{|I|+1} V_{1,2}(I, K*) = (-1)^{|I|+1} integral of h*(I, u) dS_2(K, u)
    when its Steiner point lies in the eroded window.
    """
    win = real.window
    ero = win.eroded(real.dilation_radius)
    evol = ero.volume()
    atom_data = []
    for body_id, body in test_bodies:
        am = geom.area_measure_top(body)
        atom_data.append((body_id, am.directions, am.weights))
    out = {}
    if real.is_box:
        lo, hi = real.box_arrays()
        signs, ilo, ihi = kernels.box_local_subsets(lo, hi, ero.lo, ero.hi,
                                                    budget)
        for body_id, dirs, wts in atom_data:
            if len(signs) == 0:
                out[body_id] = 0.0
                continue
            h = _box_support_centred(ilo, ihi, dirs)
            v12 = wts @ h  # (nsubsets,)
            out[body_id] = float(signs @ v12) / (3.0 * evol)
        return out
    # general d=3 polytopes
    subsets, _ = _local_subsets_polytopes(real.particles, ero.lo, ero.hi,
                                          budget)
    for body_id, dirs, wts in atom_data:
        acc = 0.0
        for sign, poly in subsets:
            s = steiner_point(poly)
            h = poly.support_many(dirs) - dirs @ s
            acc += sign * float(wts @ h)
        out[body_id] = acc / (3.0 * evol)
    return out


def estimate_densities(model, window, test_bodies, reps, seed,
                       quantities=None, budget=DEFAULT_BUDGET,
                       points_per_facet=10_000, grid_res=0.25):
    """Estimate observable densities over independent replications.

    Quantities (subset selectable): `volume_fraction` (V_d(Z) density),
    `surface_pair:<id>` (V(Z[d-1], K[1]) densities for each test body),
    `chi_density` (V_0(Z) density, Steiner-localized on the eroded window),
    `chi_window` (plain chi of the clipped union over the eroded window
    volume; kept as a boundary-bias diagnostic), and for d = 3
    `mixed_j1:<id>` (V(Z[1], K[2]) densities).

    Bit-identical output for identical (model, window, seed, reps): each
    replication owns the RNG stream keyed by (seed, rep).
    """
    if reps < 1:
        raise InvalidModelError("reps must be >= 1")
    d = model.dim
    if quantities is None:
        quantities = ["volume_fraction", "surface_pair", "chi_density"]
        if d == 3:
            quantities = quantities + ["mixed_j1"]
    bodies = list(test_bodies or [])
    named = [(f"K{i}", b) if not isinstance(b, tuple) else b
             for i, b in enumerate(bodies)]
    samples = {}

    def push(key, body, value):
        samples.setdefault((key, body), []).append(value)

    for rep in range(reps):
        real = sample_realization(model, window, _rep_seed(seed, rep))
        if "volume_fraction" in quantities:
            push("volume_fraction", "",
                 _volume_fraction(real, budget, grid_res,
                                  _rep_seed(seed, rep)))
        if "surface_pair" in quantities and named:
            mu = exposed_boundary_measure(real, points_per_facet,
                                          _rep_seed(seed, rep))
            for body_id, body in named:
                push("surface_pair", body_id, mu.pair_support(body) / d)
        if "chi_density" in quantities:
            push("chi_density", "", _chi_density(real, budget))
        if "chi_window" in quantities:
            ero = window.eroded(real.dilation_radius)
            clipped = Realization(ero, real.dilation_radius, real.seed,
                                  box_bounds=real._box_bounds,
                                  polytopes=real._polytopes)
            push("chi_window", "",
                 union_euler(clipped, budget) / ero.volume())
        if "mixed_j1" in quantities and named and d == 3:
            rows = _mixed_j1_rows(real, named, budget)
            for body_id, val in rows.items():
                push("mixed_j1", body_id, val)

    table = DensityTable()
    for (key, body), vals in samples.items():
        arr = np.asarray(vals)
        est = float(arr.mean())
        se = float(arr.std(ddof=1) / math.sqrt(len(arr))) if len(arr) > 1 else 0.0
        table.add(key, body, est, se, len(arr))
    return table


def _rep_seed(seed, rep):
    return (int(seed) * 100_003 + rep) & 0x7FFFFFFF


# ----------------------------------------------------------------------
# forward computation (exact expectations from the grain law)


def forward_densities(model, test_bodies, iso_angles=720):
    """Right-hand sides of the density equations from (gamma, grain law).

    Emits the same quantity ids as `estimate_densities` (with stderr 0)
    plus the X-side means `vbar_x:<j>` and the mixed means that enter the
    Euler-characteristic equations.
    """
    d = model.dim
    table = DensityTable()
    vbar = xside_means(model)
    q = math.exp(-vbar[d])
    for j in range(d + 1):
        table.add(f"vbar_x:{j}", "", vbar[j], 0.0, 1)
    table.add("volume_fraction", "", 1.0 - q, 0.0, 1)

    named = [(f"K{i}", b) if not isinstance(b, tuple) else b
             for i, b in enumerate(test_bodies or [])]

    sbar = mean_area_measure(model, iso_angles)
    hbar = mean_support_function(model)
    for body_id, body in named:
        table.add("surface_pair", body_id, q * sbar.pair_support(body) / d,
                  0.0, 1)

    from .invert import milesdavy_forward
    from . import translative as T

    if model.rotation == "uniform":
        z = milesdavy_forward(vbar)
        table.add("chi_density", "", z[0], 0.0, 1)
        return table

    if d == 2:
        v11 = T.angle_integral_2d(sbar, sbar)
        table.add("vbar_m:1,1", "", v11, 0.0, 1)
        table.add("chi_density", "", q * (vbar[0] - 0.5 * v11), 0.0, 1)
    elif d == 3:
        v222 = T.angle_integral_3d(sbar, sbar, sbar)
        v12 = T.support_area_integral(hbar, sbar)
        table.add("vbar_m:2,2,2", "", v222, 0.0, 1)
        table.add("vbar_m:1,2", "", v12, 0.0, 1)
        table.add("chi_density", "",
                  q * (vbar[0] - v12 + v222 / 6.0), 0.0, 1)
        for body_id, body in named:
            am = geom.area_measure_top(body)
            v12k = float(np.array([hbar(u) for u in am.directions])
                         @ am.weights)
            v222k = T.angle_integral_3d(sbar, sbar,
                                        geom.area_measure_top(body.reflect()))
            table.add("mixed_j1", body_id,
                      q * (v12k - 0.5 * v222k) / 3.0, 0.0, 1)
    elif d == 4:
        if not all(s.is_box for s, _ in model.shapes):
            raise UnsupportedCaseError("d=4 forward needs box grains")
        mixed = {m: mixed_mean_boxes(model, m)
                 for m in [(1, 3), (2, 2), (2, 3, 3), (3, 3, 3, 3)]}
        for m, v in mixed.items():
            table.add("vbar_m:" + ",".join(map(str, m)), "", v, 0.0, 1)
        chi = q * (vbar[0] - mixed[(1, 3)] - 0.5 * mixed[(2, 2)]
                   + 0.5 * mixed[(2, 3, 3)]
                   - mixed[(3, 3, 3, 3)] / 24.0)
        table.add("chi_density", "", chi, 0.0, 1)
        for body_id, body in named:
            if not body.is_box:
                raise UnsupportedCaseError("d=4 test bodies must be boxes")
            kedges = T.BoxSpec.of(body)
            v13k = mixed_mean_boxes(model, (1, 3), kedges)
            v233k = mixed_mean_boxes(model, (2, 3, 3), kedges)
            v3333k = mixed_mean_boxes(model, (3, 3, 3, 3), kedges)
            v22k = mixed_mean_boxes(model, (2, 2), kedges)
            v332k = mixed_mean_boxes(model, (3, 3, 2), kedges)
            table.add("mixed_j1", body_id,
                      q * (v13k / 4.0 - v233k / 4.0 + v3333k / 24.0), 0.0, 1)
            table.add("mixed_j2", body_id,
                      q * (v22k / 6.0 - v332k / 12.0), 0.0, 1)
    return table


def xside_means(model):
    """Densities of the intrinsic volumes of the particle process."""
    d = model.dim
    out = np.zeros(d + 1)
    for shape, p in model.shapes:
        iv = geom.intrinsic_volumes(shape)
        for j in range(d + 1):
            out[j] += p * iv[j] * model.scaling.moment(j)
    return model.gamma * out


def mean_area_measure(model, iso_angles=720):
    """gamma * E[S_{d-1}(grain, .)] as a discrete measure.

    For uniform rotation the measure is isotropic; it is discretized on a
    dense direction grid (d=2) or the cached sphere quadrature (d=3).
    """
    d = model.dim
    factor = model.gamma * model.scaling.moment(d - 1)
    if model.rotation == "none":
        acc = DiscreteSphericalMeasure.empty(d)
        for shape, p in model.shapes:
            acc = acc + geom.area_measure_top(shape).scaled(p * factor)
        return acc
    total = factor * sum(p * geom.area_measure_top(s).total_mass()
                         for s, p in model.shapes)
    if d == 2:
        ang = 2.0 * math.pi * (np.arange(iso_angles) + 0.5) / iso_angles
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        return DiscreteSphericalMeasure(
            dirs, np.full(iso_angles, total / iso_angles), merge=False)
    nodes, weights = geom._sphere_grid()
    w = weights / weights.sum() * total
    return DiscreteSphericalMeasure(nodes, w, merge=False)


def mean_support_function(model):
    """gamma * E[h*(grain, .)] as a callable on directions."""
    shapes = model.shapes
    gamma = model.gamma
    m1 = model.scaling.moment(1)
    if model.rotation == "none":
        def hbar(u):
            return gamma * m1 * sum(p * s.support(u) for s, p in shapes)
        return hbar
    # isotropic: constant equal to the rotation average of h*
    nodes, weights = geom._sphere_grid() if model.dim == 3 else (None, None)
    if model.dim == 2:
        ang = np.linspace(0.0, 2.0 * math.pi, 1441)[:-1]
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        avg = sum(p * float(np.mean(s.support_many(dirs)))
                  for s, p in shapes)
    else:
        avg = sum(p * float(np.average(s.support_many(nodes),
                                       weights=weights))
                  for s, p in shapes)
    const = gamma * m1 * avg

    def hbar_iso(u):
        return const

    return hbar_iso


def mixed_mean_boxes(model, entries, test_box=None):
    """Mean mixed functional of the process for box grains.

    entries is the index tuple; with test_box set, the last slot is the
    fixed test body (reflected box has identical edges, so the reflection
    is immaterial here) and the remaining slots carry independent grains.
    """
    from . import translative as T
    d = model.dim
    k = len(entries)
    nx = k - 1 if test_box is not None else k
    probs = [p for _, p in model.shapes]
    specs = [T.BoxSpec(s.box_bounds[1] - s.box_bounds[0])
             for s, _ in model.shapes]
    total = 0.0
    for combo in itertools.product(range(len(specs)), repeat=nx):
        pw = math.prod(probs[c] for c in combo)
        boxes = [specs[c] for c in combo]
        if test_box is not None:
            boxes = boxes + [test_box]
        total += pw * T.mixed_functional_boxes(entries, boxes)
    scale = math.prod(model.scaling.moment(m) for m in entries[:nx])
    return model.gamma ** nx * scale * total
