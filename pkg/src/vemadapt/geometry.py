"""Polygon primitives, element metrics and quadrature on polygons and segments."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DegenerateSegment, InvalidPolygon, NonStarShaped

COLLINEAR_TOL = 1e-9


def _shoelace_terms(v: np.ndarray):
    # relative to the vertex mean: absolute coordinates cancel badly on tiny elements
    origin = v.mean(axis=0)
    x, y = v[:, 0] - origin[0], v[:, 1] - origin[1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    return origin, x, y, xn, yn, x * yn - xn * y


def signed_area(vertices) -> float:
    v = np.asarray(vertices, dtype=float)
    return 0.5 * float(_shoelace_terms(v)[-1].sum())


def _segments_cross(p1, p2, q1, q2) -> bool:
    """Proper intersection test for two segments (shared endpoints excluded)."""
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return d1 * d2 < 0 and d3 * d4 < 0


def is_simple(vertices) -> bool:
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    for i in range(n):
        a, b = v[i], v[(i + 1) % n]
        for j in range(i + 2, n):
            if i == 0 and j == n - 1:
                continue
            if _segments_cross(a, b, v[j], v[(j + 1) % n]):
                return False
    return True


@dataclass(frozen=True)
class ElementGeometry:
    """Metrics of one polygonal element.

    ``fan`` holds, for each sub-triangle, the pair of consecutive boundary
    vertex indices; the third corner is always the barycentre.
    """

    vertices: np.ndarray
    area: float
    barycentre: np.ndarray
    diameter: float
    fan: np.ndarray = field(repr=False)
    _rules: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def nvert(self) -> int:
        return len(self.vertices)

    @property
    def subtriangles(self) -> np.ndarray:
        """Sub-triangle corner coordinates, shape (n, 3, 2)."""
        b = np.broadcast_to(self.barycentre, (len(self.fan), 2))
        return np.stack([b, self.vertices[self.fan[:, 0]], self.vertices[self.fan[:, 1]]], axis=1)

    def edges(self):
        """Yield (start, end) coordinates of each boundary edge in loop order."""
        n = self.nvert
        for i in range(n):
            yield self.vertices[i], self.vertices[(i + 1) % n]


def element_geometry(vertices, check_simple: bool = False) -> ElementGeometry:
    v = np.ascontiguousarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
        raise InvalidPolygon("a polygon needs at least three 2D vertices")
    if not np.all(np.isfinite(v)):
        raise InvalidPolygon("non-finite vertex coordinates")
    origin, x, y, xn, yn, cross = _shoelace_terms(v)
    area = 0.5 * float(cross.sum())
    if area <= 0.0:
        raise InvalidPolygon(f"polygon is not positively oriented (signed area {area:g})")
    if check_simple and not is_simple(v):
        raise InvalidPolygon("polygon boundary self-intersects")
    cx = float(((x + xn) * cross).sum()) / (6.0 * area)
    cy = float(((y + yn) * cross).sum()) / (6.0 * area)
    bary = np.array([cx, cy]) + origin

    diff = v[:, None, :] - v[None, :, :]
    diameter = float(np.sqrt((diff ** 2).sum(axis=2).max()))

    n = len(v)
    fan = np.column_stack([np.arange(n), (np.arange(n) + 1) % n])
    # fan triangle (bary, v_i, v_{i+1}) must be positively oriented
    tri = (x - cx) * (yn - cy) - (xn - cx) * (y - cy)
    if np.any(tri <= 1e-14 * diameter * diameter):
        raise NonStarShaped("element is not star-shaped with respect to its barycentre")
    return ElementGeometry(v, area, bary, diameter, fan)


def collinear(p, q, r, tol: float = COLLINEAR_TOL) -> bool:
    """True when ``q`` lies within ``tol * max(|pr|, 1)`` of the line through p and r."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    r = np.asarray(r, dtype=float)
    d = r - p
    length = float(np.hypot(d[0], d[1]))
    if length == 0.0:
        return bool(np.hypot(*(q - p)) <= tol)
    dist = abs(d[0] * (q[1] - p[1]) - d[1] * (q[0] - p[0])) / length
    return dist <= tol * max(length, 1.0)


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray
    weights: np.ndarray
    exactness: int

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


@lru_cache(maxsize=None)
def gauss_legendre01(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def reference_triangle_rule(exactness: int):
    """Collapsed (Duffy) Gauss rule on the triangle (0,0),(1,0),(1,1).

    Returned as barycentric-like weights of the corners A, B, C so that a
    point is ``A + u (B - A) + u v (C - B)``.
    """
    n = max(1, -(-(exactness + 2) // 2))
    t, w = gauss_legendre01(n)
    u, v = np.meshgrid(t, t, indexing="ij")
    wu, wv = np.meshgrid(w, w, indexing="ij")
    u = u.ravel()
    v = v.ravel()
    weights = (wu * wv).ravel() * u
    # coefficients of A, B, C
    lam = np.column_stack([1.0 - u, u - u * v, u * v])
    # reference triangle has area 1/2 under the map's Jacobian normalisation
    return lam, weights


def triangle_quadrature(tris: np.ndarray, exactness: int):
    """Composite rule over triangles of shape (m, 3, 2). Returns (points, weights)."""
    lam, w = reference_triangle_rule(exactness)
    tris = np.asarray(tris, dtype=float)
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    det = np.abs((b[:, 0] - a[:, 0]) * (c[:, 1] - b[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - b[:, 0]))
    pts = np.einsum("qk,mkd->mqd", lam, tris).reshape(-1, 2)
    wts = (det[:, None] * w[None, :]).ravel()
    return pts, wts


def polygon_quadrature(geom: ElementGeometry, exactness: int) -> QuadratureRule:
    if exactness < 0:
        raise ValueError("exactness must be non-negative")
    rule = geom._rules.get(exactness)
    if rule is None:
        pts, wts = triangle_quadrature(geom.subtriangles, exactness)
        pts.flags.writeable = False
        wts.flags.writeable = False
        rule = geom._rules[exactness] = QuadratureRule(pts, wts, exactness)
    return rule


def segment_quadrature(a, b, exactness: int) -> QuadratureRule:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    length = float(np.hypot(*(b - a)))
    if length < 1e-14:
        raise DegenerateSegment("segment endpoints coincide")
    n = max(1, -(-(exactness + 1) // 2))
    t, w = gauss_legendre01(n)
    pts = a[None, :] + t[:, None] * (b - a)[None, :]
    return QuadratureRule(pts, w * length, exactness)


def segment_rule01(exactness: int):
    """Gauss points and weights on [0, 1] of the requested exactness."""
    return gauss_legendre01(max(1, -(-(exactness + 1) // 2)))
