"""Translative mixed functionals V_{m_1,...,m_k} and their evaluation routes.

Three independent routes are provided and cross-checked by the test suite:
exact polynomial extraction from Minkowski-sum volumes (via `geom`), exact
per-coordinate expansion for axis-aligned boxes (rational arithmetic), and
midpoint-rule grid oracles with Richardson error control.  The angle-integral
representations used by the low-dimensional recovery pipelines live here as
well; their normalization constants are frozen calibration values (see
ANGLE_CAL_2D / ANGLE_CAL_3D).
"""

import itertools
import math
from fractions import Fraction

import numpy as np

from . import geom
from .geom import (DiscreteSphericalMeasure, Polytope, UnsupportedCaseError,
                   mixed_volume, volume)


class InvalidIndexError(ValueError):
    """Index tuple is not admissible for any translative functional."""


class PrecisionFailureError(RuntimeError):
    """A numeric oracle could not reach its target accuracy."""


def mix_indices(j, d, k=None):
    """The index sets mix(j,k) (or their union mix(j) when k is None).

    mix(j,1) = {(j,)}; for k >= 2, mix(j,k) collects the k-tuples with
    entries in {j+1, ..., d-1} summing to (k-1)d + j.
    """
    if not 0 <= j <= d - 1:
        raise InvalidIndexError("j must satisfy 0 <= j <= d-1")
    if k is not None:
        if k == 1:
            return [(j,)]
        return [t for t in itertools.product(range(j + 1, d), repeat=k)
                if sum(t) == (k - 1) * d + j]
    out = []
    for kk in range(1, d - j + 1):
        out.extend(mix_indices(j, d, kk))
    return out


class MixedIndex:
    """A validated index tuple (m_1, ..., m_k) of a translative functional.

    The target homogeneity j is determined by sum(m) = (k-1)d + j; entries
    equal to 0 or d are admissible (they correspond to the decomposition
    property) but lie outside the strict interior sets mix(j,k).
    """

    __slots__ = ("entries", "dim", "j")

    def __init__(self, entries, dim):
        entries = tuple(int(m) for m in entries)
        k = len(entries)
        if k == 0:
            raise InvalidIndexError("empty index tuple")
        j = sum(entries) - (k - 1) * dim
        if not 0 <= j <= dim:
            raise InvalidIndexError(
                f"tuple {entries} has no admissible homogeneity in "
                f"dimension {dim}")
        if any(m < j or m > dim for m in entries):
            raise InvalidIndexError(
                f"entries of {entries} must lie in [{j}, {dim}] "
                f"(derived j={j})")
        self.entries = entries
        self.dim = dim
        self.j = j

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __repr__(self):
        return f"MixedIndex({self.entries}, d={self.dim}, j={self.j})"

    def in_mix(self):
        """Whether the tuple lies in the interior set mix(j, k)."""
        k = len(self.entries)
        if k == 1:
            return True
        return all(self.j + 1 <= m <= self.dim - 1 for m in self.entries)


class BoxSpec:
    """Edge lengths of an axis-aligned box (closed-form carrier)."""

    __slots__ = ("edges",)

    def __init__(self, edges):
        edges = tuple(float(e) for e in edges)
        if any(e < 0 for e in edges):
            raise ValueError("box edges must be nonnegative")
        self.edges = edges

    @property
    def dim(self):
        return len(self.edges)

    def polytope(self):
        return Polytope.box(np.zeros(self.dim), np.array(self.edges))

    @classmethod
    def of(cls, poly):
        lo, hi = poly.box_bounds
        return cls(hi - lo)


# ----------------------------------------------------------------------
# exact routes


def mixed_functional_pair(m, k_body, m_body):
    """V_{m,d-m}(K, M) = C(d,m) V(K[m], M*[d-m]) via mixed volumes."""
    d = k_body.dim
    if not 0 <= m <= d:
        raise InvalidIndexError("m out of range")
    if m == d:
        return volume(k_body)
    if m == 0:
        return volume(m_body)
    refl = m_body.reflect()
    return math.comb(d, m) * mixed_volume([(k_body, m), (refl, d - m)])


def _poly_mul(p, q):
    out = {}
    for e1, c1 in p.items():
        for e2, c2 in q.items():
            e = tuple(a + b for a, b in zip(e1, e2))
            out[e] = out.get(e, Fraction(0)) + c1 * c2
    return out


def _coordinate_polys(lengths):
    """Indicator and length-integral polynomials of one coordinate.

    For intervals of lengths s_i scaled by l_i, the translation measure of
    the nonempty-overlap event is e_{k-1}(l_1 s_1, ..., l_k s_k) and the
    integral of the overlap length is prod(l_i s_i).
    """
    k = len(lengths)
    ind = {}
    for i in range(k):
        e = tuple(0 if r == i else 1 for r in range(k))
        c = Fraction(1)
        for r in range(k):
            if r != i:
                c *= lengths[r]
        ind[e] = ind.get(e, Fraction(0)) + c
    full = tuple(1 for _ in range(k))
    length = {full: math.prod(lengths)}
    if k == 1:
        ind = {(0,): Fraction(1)}
        length = {(1,): lengths[0]}
    return ind, length


def mixed_functional_boxes(index, boxes):
    """V_{m_1,...,m_k} for axis-aligned boxes, exact rational arithmetic.

    The iterated intersection integral of V_j factorizes per coordinate;
    scaling every box by its own variable turns it into a polynomial whose
    coefficient at l_1^{m_1}...l_k^{m_k} is the requested functional.
    """
    if not isinstance(index, MixedIndex):
        index = MixedIndex(index, boxes[0].dim)
    k = len(index)
    if len(boxes) != k:
        raise InvalidIndexError("need one box per index entry")
    d = boxes[0].dim
    if any(b.dim != d for b in boxes):
        raise InvalidIndexError("boxes must share a dimension")
    if index.dim != d:
        raise InvalidIndexError("index dimension mismatch")
    j = index.j

    lengths = [[Fraction(b.edges[ax]) for b in boxes] for ax in range(d)]
    # dp over coordinates; state = number of "length" coordinates used
    dp = [{tuple(0 for _ in range(k)): Fraction(1)}] + [None] * j
    for ax in range(d):
        ind, length = _coordinate_polys(lengths[ax])
        new = [None] * (j + 1)
        for t in range(j + 1):
            acc = {}
            if dp[t] is not None:
                for e, c in _poly_mul(dp[t], ind).items():
                    acc[e] = acc.get(e, Fraction(0)) + c
            if t >= 1 and dp[t - 1] is not None:
                for e, c in _poly_mul(dp[t - 1], length).items():
                    acc[e] = acc.get(e, Fraction(0)) + c
            new[t] = acc or None
        dp = new
    final = dp[j] or {}
    return float(final.get(index.entries, Fraction(0)))


def box_iterated_integral(j, boxes):
    """Closed form of the iterated translative integral of V_j for boxes."""
    d = boxes[0].dim
    k = len(boxes)
    total = 0.0
    for entries in itertools.product(range(j, d + 1), repeat=k):
        if sum(entries) == (k - 1) * d + j:
            total += mixed_functional_boxes(MixedIndex(entries, d), boxes)
    return total


# ----------------------------------------------------------------------
# grid oracles


def _separating_axes(p, q):
    axes = [f[0] for f in p.facets()] + [f[0] for f in q.facets()]
    if p.dim == 3:
        ep = [b - a for a, b, _, _ in geom._edges_3d(p)]
        eq = [b - a for a, b, _, _ in geom._edges_3d(q)]
        for u in ep:
            for v in eq:
                c = np.cross(u, v)
                n = np.linalg.norm(c)
                if n > 1e-12:
                    axes.append(c / n)
    return np.array(axes)


def _overlap_mask(p, q, xs):
    """For each translation x, whether p and (q + x) intersect (SAT)."""
    axes = _separating_axes(p, q)
    proj_p = p.vertices @ axes.T
    proj_q = q.vertices @ axes.T
    pmin, pmax = proj_p.min(axis=0), proj_p.max(axis=0)
    qmin, qmax = proj_q.min(axis=0), proj_q.max(axis=0)
    t = xs @ axes.T
    eps = 1e-12
    ok = (qmax + t >= pmin[None, :] - eps) & (qmin + t <= pmax[None, :] + eps)
    return np.all(ok, axis=1)


def _midpoint_grid(lo, hi, h):
    axes = [np.arange(a + h / 2.0, b, h) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _box_indicator_integral(lengths, h):
    """Midpoint-rule measure of the nonempty-overlap set of 1D intervals."""
    k = len(lengths)
    s1 = lengths[0]
    los = [-lengths[i] - h for i in range(1, k)]
    his = [s1 + h for _ in range(1, k)]
    xs = _midpoint_grid(los, his, h)
    lo_all = np.maximum(np.max(xs, axis=1, initial=0.0), 0.0)
    ends = np.concatenate([np.full((len(xs), 1), s1),
                           xs + np.array(lengths[1:])[None, :]], axis=1)
    hi_all = np.minimum(np.min(ends, axis=1), s1)
    ok = hi_all >= lo_all - 1e-15
    return float(ok.sum()) * h ** (k - 1), float(
        np.maximum(hi_all - lo_all, 0.0)[ok].sum()) * h ** (k - 1)


def _oracle_boxes(j, boxes, h):
    d = boxes[0].dim
    k = len(boxes)
    per_axis = []
    for ax in range(d):
        lengths = [b.edges[ax] for b in boxes]
        per_axis.append(_box_indicator_integral(lengths, h))
    total = 0.0
    for subset in itertools.combinations(range(d), j):
        term = 1.0
        for ax in range(d):
            ind, leng = per_axis[ax]
            term *= leng if ax in subset else ind
        total += term
    return total


def _oracle_pair(j, p, q, h):
    lo = p.bounding_box()[0] - q.bounding_box()[1] - h
    hi = p.bounding_box()[1] - q.bounding_box()[0] + h
    xs = _midpoint_grid(lo, hi, h)
    cell = h ** p.dim
    if j == 0:
        mask = _overlap_mask(p, q, xs)
        return float(mask.sum()) * cell
    if p.dim != 2:
        raise UnsupportedCaseError(
            "grid oracle with j >= 1 implemented for d = 2 and boxes")
    mask = _overlap_mask(p, q, xs)
    total = 0.0
    for x in xs[mask]:
        inter = _clip_polygons(p, q.translate(x))
        if inter is None:
            continue
        if j == 1:
            total += _poly_perimeter(inter) / 2.0
        else:
            total += _poly_area(inter)
    return total * cell


def _clip_polygons(p, q):
    """Sutherland-Hodgman intersection of convex polygons (vertex arrays)."""
    subject = [tuple(v) for v in p.vertices]
    for n, off in q.facets():
        if not subject:
            return None
        clipped = []
        prev = subject[-1]
        prev_in = n[0] * prev[0] + n[1] * prev[1] <= off + 1e-12
        for cur in subject:
            cur_in = n[0] * cur[0] + n[1] * cur[1] <= off + 1e-12
            if cur_in != prev_in:
                dv = (cur[0] - prev[0], cur[1] - prev[1])
                denom = n[0] * dv[0] + n[1] * dv[1]
                t = (off - n[0] * prev[0] - n[1] * prev[1]) / denom
                clipped.append((prev[0] + t * dv[0], prev[1] + t * dv[1]))
            if cur_in:
                clipped.append(cur)
            prev, prev_in = cur, cur_in
        subject = clipped
    if len(subject) < 3:
        return None
    return np.array(subject)


def _poly_area(pts):
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) -
                           np.dot(y, np.roll(x, -1))))


def _poly_perimeter(pts):
    return float(np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1).sum())


def translative_oracle(j, bodies, resolution, full_output=False):
    """Midpoint-rule evaluation of the iterated translative integral of V_j.

    Two resolutions (h and h/2) are combined by first-order Richardson
    extrapolation; the difference serves as the error estimate.  Raises
    PrecisionFailureError when the estimate exceeds 10% of the value.
    """
    k = len(bodies)
    if k < 2:
        raise InvalidIndexError("need at least two bodies")
    if all(b.is_box for b in bodies):
        boxes = [BoxSpec.of(b) for b in bodies]
        coarse = _oracle_boxes(j, boxes, resolution)
        fine = _oracle_boxes(j, boxes, resolution / 2.0)
    elif k == 2:
        if j != 0 and bodies[0].dim != 2:
            raise UnsupportedCaseError(
                "non-box oracle supports j=0 (d=2,3) or d=2 intersections")
        coarse = _oracle_pair(j, bodies[0], bodies[1], resolution)
        fine = _oracle_pair(j, bodies[0], bodies[1], resolution / 2.0)
    else:
        raise UnsupportedCaseError(
            "k > 2 grid oracle implemented for boxes only")
    value = 2.0 * fine - coarse
    err = abs(fine - coarse)
    if err > 0.1 * max(abs(value), 1e-12):
        raise PrecisionFailureError(
            f"oracle error estimate {err:.3g} above 10% of value {value:.3g};"
            " decrease the resolution")
    if full_output:
        return value, err
    return value


# ----------------------------------------------------------------------
# angle integrals (d = 2, 3)

# Calibration constants for the angle-integral representations.  The source
# formulas inherit an unspecified normalization of the underlying boundary
# measures; these values were fixed once by matching the exact mixed-volume
# route on axis-aligned boxes (V_{1,1} on rectangles, V_{2,2,2} on cuboids)
# and are verified against independent oracles in the test suite.
ANGLE_CAL_2D = 1.0 / (2.0 * math.pi)
ANGLE_CAL_3D = 1.0 / (4.0 * math.pi)


def angle_integral_2d(mu, nu):
    """V_{1,1}-type pairing of two spherical measures in the plane.

    Feeding the mean area measure of a particle process in both slots gives
    the density V_{1,1}(X, X).
    """
    if mu.dim != 2 or nu.dim != 2:
        raise ValueError("angle_integral_2d expects planar measures")
    if len(mu.directions) == 0 or len(nu.directions) == 0:
        return 0.0
    u = mu.directions
    v = nu.directions
    dots = np.clip(u @ v.T, -1.0, 1.0)
    ang = np.arccos(dots)
    det = np.abs(u[:, 0][:, None] * v[:, 1][None, :]
                 - u[:, 1][:, None] * v[:, 0][None, :])
    return ANGLE_CAL_2D * float(mu.weights @ (ang * det) @ nu.weights)


def _spherical_triangle_area(cos_a, cos_b, cos_c):
    """l'Huilier's formula from the three pairwise cosines, clamped."""
    a = np.arccos(np.clip(cos_a, -1.0, 1.0))
    b = np.arccos(np.clip(cos_b, -1.0, 1.0))
    c = np.arccos(np.clip(cos_c, -1.0, 1.0))
    s = 0.5 * (a + b + c)
    t = (np.tan(s / 2) * np.tan((s - a) / 2) * np.tan((s - b) / 2)
         * np.tan((s - c) / 2))
    return 4.0 * np.arctan(np.sqrt(np.maximum(t, 0.0)))


def angle_integral_3d(mu, nu, rho):
    """V_{2,2,2}-type triple pairing of spherical measures in 3-space."""
    if mu.dim != 3 or nu.dim != 3 or rho.dim != 3:
        raise ValueError("angle_integral_3d expects measures on S^2")
    if min(len(mu.directions), len(nu.directions), len(rho.directions)) == 0:
        return 0.0
    u, v, w = mu.directions, nu.directions, rho.directions
    wu, wv, ww = mu.weights, nu.weights, rho.weights
    uv = np.clip(u @ v.T, -1.0, 1.0)
    total = 0.0
    for i in range(len(u)):
        vw = np.clip(v @ w.T, -1.0, 1.0)
        uw = np.clip(u[i] @ w.T, -1.0, 1.0)
        area = _spherical_triangle_area(vw, uw[None, :], uv[i][:, None])
        # |det(u,v,w)| = |<u x v, w>|
        cross = np.cross(np.broadcast_to(u[i], v.shape), v)
        det = np.abs(cross @ w.T)
        total += wu[i] * float(wv @ (area * det) @ ww)
    return ANGLE_CAL_3D * total


def support_area_integral(h_samples, mu):
    """Sum of h(-u) weights over the atoms of mu.

    With h the mean centred support function of a process and mu its mean
    top-order area measure this evaluates the density V_{1,2}(X, X).
    """
    if len(mu.directions) == 0:
        return 0.0
    vals = np.array([float(h_samples(-u)) for u in mu.directions])
    return float(vals @ mu.weights)


# ----------------------------------------------------------------------
# dilation coefficient extraction


def _pair_box_functional_scaled(l_edges, n_edges, m1):
    """V_{m1, d-m1}(L, N) for boxes with the per-coordinate expansion."""
    d = len(l_edges)
    total = 0.0
    for subset in itertools.combinations(range(d), m1):
        term = 1.0
        for ax in range(d):
            term *= l_edges[ax] if ax in subset else n_edges[ax]
        total += term
    return total


def _dilation_value_boxes(l_edges, k_edges, m_edges, m1, alpha, beta):
    """Exact integral of V_{m1,d-m1}(L, (aK) cap (bM + x)) over x, boxes."""
    d = len(l_edges)
    total = 0.0
    for subset in itertools.combinations(range(d), m1):
        term = 1.0
        for ax in range(d):
            if ax in subset:
                term *= l_edges[ax] * (alpha * k_edges[ax]
                                       + beta * m_edges[ax])
            else:
                term *= alpha * k_edges[ax] * beta * m_edges[ax]
        total += term
    return total


def dilation_extract(l_body, k_body, m_body, resolution=0.25,
                     full_output=False):
    """Extract the middle coefficient of the two-parameter dilation integral.

    For d = 4 the map (a, b) -> integral of V_{2,2}(L, (aK) cap (bM + x)) dx
    is a combination of a^2 b^4, a^4 b^2 and a^3 b^3; the a^3 b^3 coefficient
    is V_{2,3,3}(L, K, M).  For d = 3 the analog integrates V_{2,1} and the
    a^2 b^2 coefficient is V_{2,2,2}(L, K, M).  Axis-aligned boxes only (the
    x-integral is done in closed form per coordinate; the polynomial
    structure is still obtained by fitting on an (a, b) grid).
    """
    d = l_body.dim
    if d == 4:
        m1, mid = 2, (3, 3)
        terms = [(2, 4), (4, 2), (3, 3)]
    elif d == 3:
        m1, mid = 2, (2, 2)
        terms = [(1, 3), (3, 1), (2, 2)]
    else:
        raise UnsupportedCaseError("dilation extraction needs d in {3, 4}")
    for b in (l_body, k_body, m_body):
        if not (b.is_box or b.affine_dim == 0 or
                np.allclose(*b.bounding_box())):
            raise UnsupportedCaseError(
                "dilation extraction implemented for boxes (points allowed)")
    l_edges = l_body.bounding_box()[1] - l_body.bounding_box()[0]
    k_edges = k_body.bounding_box()[1] - k_body.bounding_box()[0]
    m_edges = m_body.bounding_box()[1] - m_body.bounding_box()[0]

    grid = np.arange(1.0, 2.0 + 1e-9, resolution)
    if len(grid) < 2:
        raise PrecisionFailureError("resolution leaves too few grid nodes")
    rows, vals = [], []
    for a in grid:
        for b in grid:
            rows.append([a ** p * b ** q for p, q in terms])
            vals.append(_dilation_value_boxes(
                l_edges, k_edges, m_edges, m1, a, b))
    rows = np.array(rows)
    vals = np.array(vals)
    coeffs, _, _, _ = np.linalg.lstsq(rows, vals, rcond=None)
    resid = np.linalg.norm(rows @ coeffs - vals)
    if resid > 1e-6 * max(1.0, np.linalg.norm(vals)):
        raise PrecisionFailureError(
            f"dilation fit residual {resid:.3g} above threshold")
    out = {t: float(c) for t, c in zip(terms, coeffs)}
    if full_output:
        return out
    return out[mid]
