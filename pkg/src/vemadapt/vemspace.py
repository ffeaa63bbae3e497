"""The order-k virtual element space: DoF layout and computable projections.

Local DoF order on an element: nodal values around the loop, then edge
moments edge by edge (loop order, moments ascending), then internal
moments in graded order. Edge moments use ``(t - 1/2) ** beta`` with ``t``
running from the interface's first to its second vertex, so the two
elements sharing an interface agree on them.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.linalg

from .errors import RankDeficientD, SingularTraceSystem, UnsupportedOrder
from .geometry import ElementGeometry, element_geometry, gauss_legendre01, polygon_quadrature
from .mesh import PolyMesh
from .poly import derivative_matrices, dim_poly, monomials

SUPPORTED_ORDERS = (1, 2, 3)


def check_order(k: int) -> int:
    if k not in SUPPORTED_ORDERS:
        raise UnsupportedOrder(f"order k={k} is not supported (choose from {SUPPORTED_ORDERS})")
    return k


def local_dof_count(nvert: int, k: int) -> int:
    return nvert + nvert * (k - 1) + dim_poly(k - 2)


class DofMap:
    """Global numbering of nodal, edge-moment and internal-moment DoFs."""

    NODAL, EDGE, INTERNAL = 0, 1, 2

    def __init__(self, mesh: PolyMesh, k: int):
        check_order(k)
        self.k = k
        nv, ni, ne = mesh.n_vertices, mesh.n_interfaces, mesh.n_elements
        self.edge_offset = nv
        self.internal_offset = nv + ni * (k - 1)
        self.n_internal = dim_poly(k - 2)
        self.n_dofs = self.internal_offset + ne * self.n_internal

        kind = np.empty(self.n_dofs, dtype=np.int8)
        entity = np.empty(self.n_dofs, dtype=np.int64)
        order = np.zeros(self.n_dofs, dtype=np.int64)
        kind[:nv] = self.NODAL
        entity[:nv] = np.arange(nv)
        if k > 1:
            kind[nv:self.internal_offset] = self.EDGE
            entity[nv:self.internal_offset] = np.repeat(np.arange(ni), k - 1)
            order[nv:self.internal_offset] = np.tile(np.arange(k - 1), ni)
            kind[self.internal_offset:] = self.INTERNAL
            entity[self.internal_offset:] = np.repeat(np.arange(ne), self.n_internal)
            order[self.internal_offset:] = np.tile(np.arange(self.n_internal), ne)
        self.kind, self.entity, self.order = kind, entity, order

        self.local = []
        for e in range(ne):
            loop = mesh.elements[e]
            parts = [loop]
            if k > 1:
                ifs = mesh.elem_ifaces[e]
                parts.append((self.edge_offset + ifs[:, None] * (k - 1) + np.arange(k - 1)).ravel())
                parts.append(self.internal_offset + e * self.n_internal + np.arange(self.n_internal))
            self.local.append(np.concatenate(parts).astype(np.int64))

        boundary = np.zeros(self.n_dofs, dtype=bool)
        bi = mesh.boundary_interfaces
        boundary[mesh.iface_vertices[bi].ravel()] = True
        if k > 1:
            boundary[(self.edge_offset + bi[:, None] * (k - 1) + np.arange(k - 1)).ravel()] = True
        self.boundary = boundary

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary)

    @property
    def constrained(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    def __len__(self):
        return self.n_dofs


def build_dofmap(mesh: PolyMesh, k: int) -> DofMap:
    return DofMap(mesh, k)


@lru_cache(maxsize=None)
def _edge_gauss(k: int):
    return gauss_legendre01(k + 2)


@lru_cache(maxsize=None)
def _trace_system(k: int, sign: int):
    """Inverse of the (k+1)x(k+1) system mapping edge DoFs to trace
    coefficients in powers of the loop parameter t in [0, 1]."""
    t, w = _edge_gauss(k)
    powers = t[:, None] ** np.arange(k + 1)[None, :]
    v = np.zeros((k + 1, k + 1))
    v[0, 0] = 1.0
    v[1, :] = 1.0
    for beta in range(k - 1):
        q = (sign * (t - 0.5)) ** beta
        v[2 + beta, :] = (w * q) @ powers
    try:
        inv = np.linalg.inv(v)
    except np.linalg.LinAlgError as exc:
        raise SingularTraceSystem("edge trace system is singular") from exc
    inv.setflags(write=False)
    return inv


@dataclass(frozen=True)
class EdgeTrace:
    """Degree-k trace on an edge, as coefficients of powers of t in [0, 1]."""

    coeffs: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return np.polyval(self.coeffs[::-1], t)

    def at(self, points, a, b):
        a = np.asarray(a, dtype=float)
        d = np.asarray(b, dtype=float) - a
        t = (np.atleast_2d(points) - a) @ d / (d @ d)
        return self(t)


def edge_trace(endpoint_values, moments, k: int) -> EdgeTrace:
    """The unique polynomial of degree k on [0, 1] with the given endpoint
    values and moments ``int_0^1 p(t) (t - 1/2)^beta dt``, beta < k - 1."""
    vals = np.concatenate([np.asarray(endpoint_values, dtype=float).ravel(),
                           np.asarray(moments, dtype=float).ravel()])
    if len(vals) != k + 1:
        raise ValueError(f"order {k} needs 2 endpoint values and {k - 1} moments")
    return EdgeTrace(_trace_system(k, 1) @ vals)


@dataclass
class LocalOperators:
    """Per-element projection matrices acting on local DoF vectors.

    ``D`` (N x n_k) holds the DoFs of the scaled monomials, ``PiS`` and
    ``Pi0k`` (n_k x N) give coefficients of the DoF-Euclidean and L2
    projections onto P_k, and ``PiGrad`` is the pair of (n_{k-1} x N)
    maps giving the L2 projection of the gradient onto P_{k-1}^2.
    """

    k: int
    geom: ElementGeometry
    D: np.ndarray
    PiS: np.ndarray
    Pi0k: np.ndarray
    PiGrad: tuple
    H: np.ndarray
    stab: np.ndarray
    condition: float
    _hchol: dict
    _hscale: float

    @property
    def ndofs(self) -> int:
        return self.D.shape[0]

    def mass_solve(self, rhs: np.ndarray, degree: int) -> np.ndarray:
        """Solve with the leading degree-``degree`` block of the element mass matrix."""
        return scipy.linalg.cho_solve(self._hchol[degree], rhs, check_finite=False) / self._hscale


_operator_cache: dict = {}
_CACHE_LIMIT = 200_000


def clear_operator_cache():
    _operator_cache.clear()


def _normalized_operators(shat: np.ndarray, signs: np.ndarray, k: int):
    g = element_geometry(shat)
    c, h, area = g.barycentre, g.diameter, g.area
    n = len(shat)
    nk, nk1, nk2 = dim_poly(k), dim_poly(k - 1), dim_poly(k - 2)
    ndof = local_dof_count(n, k)

    q = polygon_quadrature(g, 2 * k)
    mq = monomials(q.points, c, h, k)
    hmat = (mq * q.weights[:, None]).T @ mq
    hmat = 0.5 * (hmat + hmat.T)

    dmat = np.zeros((ndof, nk))
    dmat[:n] = monomials(shat, c, h, k)
    t, w = _edge_gauss(k)
    nxt = np.roll(np.arange(n), -1)
    p0, p1 = shat, shat[nxt]
    for i in range(n):
        pts = p0[i] + t[:, None] * (p1[i] - p0[i])
        m_edge = monomials(pts, c, h, k)
        for beta in range(k - 1):
            qb = (signs[i] * (t - 0.5)) ** beta
            dmat[n + i * (k - 1) + beta] = (w * qb) @ m_edge
    if nk2:
        dmat[n + n * (k - 1):] = hmat[:nk2, :] / area

    # least squares through QR: the normal equations would square cond(D)
    qd, rd = scipy.linalg.qr(dmat, mode="economic", check_finite=False)
    rdiag = np.abs(np.diag(rd))
    if rdiag.min() <= 1e3 * np.finfo(float).eps * rdiag.max():
        raise RankDeficientD("D^T D is singular; element geometry is degenerate")
    pis = scipy.linalg.solve_triangular(rd, qd.T, check_finite=False)
    cond = float(np.linalg.cond(rd)) ** 2

    hchol = {}
    for deg in range(k + 1):
        m = dim_poly(deg)
        hchol[deg] = scipy.linalg.cho_factor(hmat[:m, :m], lower=True, check_finite=False)

    # moments of order > k-2 come from PiS, so B - H PiS vanishes below row nk2
    # and Pi0k is PiS plus a correction driven by the internal moments only
    first_internal = n + n * (k - 1)
    corr = np.zeros((nk, ndof))
    if nk2:
        corr[:nk2] = -hmat[:nk2] @ pis
        corr[:nk2, first_internal:] += area * np.eye(nk2)
    pi0 = pis + scipy.linalg.cho_solve(hchol[k], corr, check_finite=False)

    # gradient projection: int dv m_a = -int v dm_a + int_{bdry} v m_a n
    gx = np.zeros((nk1, ndof))
    gy = np.zeros((nk1, ndof))
    if nk2:
        dx, dy = derivative_matrices(k - 1)
        # dx[j, a]: coefficient of m_j in d/ds m_a, j indexes P_{k-2}
        gx[:, first_internal:] -= (dx.T * area) / h
        gy[:, first_internal:] -= (dy.T * area) / h
    for i in range(n):
        pts = p0[i] + t[:, None] * (p1[i] - p0[i])
        ma = monomials(pts, c, h, k - 1)
        tr = (t[:, None] ** np.arange(k + 1)[None, :]) @ _trace_system(k, int(signs[i]))
        local = [i, int(nxt[i])] + [n + i * (k - 1) + b for b in range(k - 1)]
        d = p1[i] - p0[i]
        block = (ma * w[:, None]).T @ tr
        gx[:, local] += block * d[1]
        gy[:, local] -= block * d[0]
    pigx = scipy.linalg.cho_solve(hchol[k - 1], gx, check_finite=False)
    pigy = scipy.linalg.cho_solve(hchol[k - 1], gy, check_finite=False)

    proj = np.eye(ndof) - dmat @ pi0
    stab = proj.T @ proj
    # centre/scale of the normalised frame differ from (0, 1) by round-off
    return dict(D=dmat, PiS=pis, Pi0k=pi0, PiGradx=pigx, PiGrady=pigy, H=hmat,
                stab=0.5 * (stab + stab.T), cond=cond, hchol=hchol, h=h)


def build_local_operators(geom: ElementGeometry, k: int, edge_signs=None, cache: bool = True) -> LocalOperators:
    """Projection matrices for one element.

    ``edge_signs[i]`` is +1 when loop edge i runs along its interface's
    orientation and -1 otherwise; it only matters for k >= 3.
    """
    check_order(k)
    n = geom.nvert
    signs = np.ones(n, dtype=np.int64) if edge_signs is None else np.asarray(edge_signs, dtype=np.int64)
    shat = (geom.vertices - geom.barycentre) / geom.diameter
    key = None
    data = None
    if cache:
        key = (k, np.round(shat, 11).tobytes(), signs.tobytes() if k >= 3 else b"")
        data = _operator_cache.get(key)
    if data is None:
        data = _normalized_operators(shat, signs, k)
        if cache:
            if len(_operator_cache) > _CACHE_LIMIT:
                _operator_cache.clear()
            _operator_cache[key] = data
    h = geom.diameter
    scale = data["h"]
    return LocalOperators(
        k=k, geom=geom, D=data["D"], PiS=data["PiS"], Pi0k=data["Pi0k"],
        PiGrad=(data["PiGradx"] * (scale / h), data["PiGrady"] * (scale / h)),
        H=data["H"] * (h / scale) ** 2, stab=data["stab"], condition=data["cond"],
        _hchol=data["hchol"], _hscale=(h / scale) ** 2,
    )


def element_operators(mesh: PolyMesh, e: int, k: int, cache: bool = True) -> LocalOperators:
    return build_local_operators(mesh.geometry(e), k, mesh.elem_signs[e], cache=cache)


def interpolate(mesh: PolyMesh, dofmap: DofMap, func, exactness: int | None = None) -> np.ndarray:
    """DoF vector of a pointwise-evaluable function ``func(points) -> values``."""
    k = dofmap.k
    out = np.zeros(dofmap.n_dofs)
    out[:mesh.n_vertices] = func(mesh.vertices)
    if k > 1:
        t, w = gauss_legendre01(k + 4)
        for s in range(mesh.n_interfaces):
            a, b = mesh.vertices[mesh.iface_vertices[s]]
            vals = func(a[None, :] + t[:, None] * (b - a)[None, :])
            for beta in range(k - 1):
                out[dofmap.edge_offset + s * (k - 1) + beta] = np.dot(w * (t - 0.5) ** beta, vals)
        nk2 = dim_poly(k - 2)
        ex = 2 * k + 4 if exactness is None else exactness
        for e in range(mesh.n_elements):
            g = mesh.geometry(e)
            q = polygon_quadrature(g, ex)
            m = monomials(q.points, g.barycentre, g.diameter, k - 2)
            vals = func(q.points)
            out[dofmap.internal_offset + e * nk2: dofmap.internal_offset + (e + 1) * nk2] = \
                (m.T @ (q.weights * vals)) / g.area
    return out


def polynomial_dofs(ops: LocalOperators, coeffs) -> np.ndarray:
    """Local DoFs of the polynomial with the given scaled-monomial coefficients."""
    return ops.D @ np.asarray(coeffs, dtype=float)
