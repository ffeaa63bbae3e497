"""Local discrete forms, stabilization, load vector and global assembly."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .geometry import ElementGeometry, gauss_legendre01, polygon_quadrature
from .mesh import PolyMesh
from .poly import dim_poly, monomials
from .vemspace import DofMap, LocalOperators, element_operators

Field = Callable[[np.ndarray], np.ndarray]


def _const_scalar(c: float) -> Field:
    return lambda p: np.full(len(p), float(c))


def _const_vector(v) -> Field:
    v = np.asarray(v, dtype=float)
    return lambda p: np.broadcast_to(v, (len(p), 2)).copy()


def _const_matrix(m) -> Field:
    m = np.asarray(m, dtype=float)
    return lambda p: np.broadcast_to(m, (len(p), 2, 2)).copy()


@dataclass
class CoefficientSet:
    """PDE data as vectorised callables on point arrays of shape (n, 2).

    ``kappa`` returns (n, 2, 2); ``dkappa`` returns the divergence of kappa,
    ``sum_i d_i kappa_ij``, as (n, 2); ``b`` returns (n, 2); the rest (n,).
    """

    kappa: Field = field(default_factory=lambda: _const_matrix(np.eye(2)))
    dkappa: Field = field(default_factory=lambda: _const_vector((0.0, 0.0)))
    b: Field = field(default_factory=lambda: _const_vector((0.0, 0.0)))
    div_b: Field = field(default_factory=lambda: _const_scalar(0.0))
    gamma: Field = field(default_factory=lambda: _const_scalar(0.0))
    f: Field = field(default_factory=lambda: _const_scalar(0.0))
    has_convection: bool = True

    @classmethod
    def constant(cls, kappa=np.eye(2), b=(0.0, 0.0), gamma=0.0, f: Field | float = 0.0) -> "CoefficientSet":
        kappa = np.asarray(kappa, dtype=float)
        if kappa.ndim == 0:
            kappa = kappa * np.eye(2)
        return cls(kappa=_const_matrix(kappa), b=_const_vector(b), gamma=_const_scalar(gamma),
                   f=f if callable(f) else _const_scalar(f),
                   has_convection=bool(np.any(np.asarray(b) != 0)))

    def gamma_tilde(self, p: np.ndarray) -> np.ndarray:
        return self.gamma(p) - 0.5 * self.div_b(p)

    def check(self, points: np.ndarray) -> None:
        """Raise ValueError if kappa is not SPD at the sample points."""
        k = self.kappa(points)
        if not np.allclose(k, np.transpose(k, (0, 2, 1))):
            raise ValueError("diffusion tensor is not symmetric")
        if np.any(np.linalg.eigvalsh(k) <= 0):
            raise ValueError("diffusion tensor is not positive definite")


@dataclass
class LocalSystem:
    """``S`` is the stabilizer on DoF vectors of ``(I - Pi0k) v``; ``A`` already
    contains its pull-back to ``v``."""

    element: int
    A: np.ndarray
    rhs: np.ndarray
    S: np.ndarray


def default_exactness(k: int) -> int:
    return 2 * k + 2


def local_forms(geom: ElementGeometry, ops: LocalOperators, coeffs: CoefficientSet, k: int,
                tau1: float = 1.0, tau0: float = 1.0, element: int = -1,
                exactness: int | None = None) -> LocalSystem:
    q = polygon_quadrature(geom, default_exactness(k) if exactness is None else exactness)
    w = q.weights
    mq = monomials(q.points, geom.barycentre, geom.diameter, k)
    nk1 = dim_poly(k - 1)
    mq1 = mq[:, :nk1]
    p = mq @ ops.Pi0k
    gx = mq1 @ ops.PiGrad[0]
    gy = mq1 @ ops.PiGrad[1]

    kap = coeffs.kappa(q.points)
    gt = coeffs.gamma_tilde(q.points)
    wk = kap * w[:, None, None]
    a = (gx.T @ (wk[:, 0, 0, None] * gx) + gx.T @ (wk[:, 0, 1, None] * gy)
         + gy.T @ (wk[:, 1, 0, None] * gx) + gy.T @ (wk[:, 1, 1, None] * gy))
    a += p.T @ ((w * gt)[:, None] * p)

    area = geom.area
    kbar = float(np.dot(w, 0.5 * (kap[:, 0, 0] + kap[:, 1, 1]))) / area
    gbar = max(float(np.dot(w, gt)) / area, 0.0)
    h = geom.diameter
    sfac = tau1 * kbar + tau0 * gbar * h * h
    # S holds the DoF-Euclidean product on skeleton DoFs; internal DoFs of
    # (I - Pi0k) v vanish, so the form on v is sfac * stab
    skeleton = np.zeros(ops.ndofs)
    skeleton[:geom.nvert * k] = sfac
    s = np.diag(skeleton)
    a += sfac * ops.stab

    if coeffs.has_convection:
        bv = coeffs.b(q.points)
        bg = bv[:, 0, None] * gx + bv[:, 1, None] * gy
        c = p.T @ (w[:, None] * bg)
        a += 0.5 * (c - c.T)

    fvals = coeffs.f(q.points)
    fh = ops.mass_solve(mq1.T @ (w * fvals), k - 1)
    rhs = p.T @ (w * (mq1 @ fh))
    return LocalSystem(element, a, rhs, s)


@dataclass
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    constrained: np.ndarray
    values: np.ndarray

    @property
    def free(self) -> np.ndarray:
        mask = np.ones(self.matrix.shape[0], dtype=bool)
        mask[self.constrained] = False
        return np.flatnonzero(mask)

    def reduced(self):
        """Free-DoF block and right-hand side with constraint values lifted."""
        free = self.free
        a = self.matrix.tocsr()
        a_ff = a[free][:, free].tocsc()
        b = self.rhs[free] - a[free][:, self.constrained] @ self.values
        return a_ff, b

    def expand(self, x_free: np.ndarray) -> np.ndarray:
        x = np.zeros(self.matrix.shape[0])
        x[self.free] = x_free
        x[self.constrained] = self.values
        return x


def assemble(dofmap: DofMap, locals_: list, dirichlet=None) -> SparseSystem:
    n = dofmap.n_dofs
    rows, cols, vals = [], [], []
    rhs = np.zeros(n)
    for ls in locals_:
        idx = dofmap.local[ls.element]
        if idx.max() >= n or idx.min() < 0:
            raise IndexError("local DoF index out of range")
        m = len(idx)
        rows.append(np.repeat(idx, m))
        cols.append(np.tile(idx, m))
        vals.append(ls.A.ravel())
        np.add.at(rhs, idx, ls.rhs)
    if rows:
        mat = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                            shape=(n, n)).tocsr()
    else:
        mat = sp.csr_matrix((n, n))
    if dirichlet is None:
        ids, values = dofmap.constrained, np.zeros(len(dofmap.constrained))
    else:
        ids, values = dirichlet
    return SparseSystem(mat, rhs, np.asarray(ids, dtype=np.int64), np.asarray(values, dtype=float))


def dirichlet_values(mesh: PolyMesh, dofmap: DofMap, g: Field | None):
    """Boundary DoF ids and their prescribed values from the trace ``g``."""
    ids = dofmap.constrained
    if g is None:
        return ids, np.zeros(len(ids))
    k = dofmap.k
    values = np.zeros(dofmap.n_dofs)
    bv = mesh.boundary_vertices()
    values[bv] = g(mesh.vertices[bv])
    if k > 1:
        t, w = gauss_legendre01(k + 8)
        for s in mesh.boundary_interfaces:
            a, b = mesh.vertices[mesh.iface_vertices[s]]
            gv = g(a[None, :] + t[:, None] * (b - a)[None, :])
            for beta in range(k - 1):
                values[dofmap.edge_offset + s * (k - 1) + beta] = np.dot(w * (t - 0.5) ** beta, gv)
    return ids, values[ids]


@dataclass
class Discretization:
    """Everything produced by one assemble pass, reused by the estimator."""

    mesh: PolyMesh
    dofmap: DofMap
    coeffs: CoefficientSet
    k: int
    tau1: float
    tau0: float
    ops: list
    locals: list
    system: SparseSystem


def discretize(mesh: PolyMesh, coeffs: CoefficientSet, k: int, g: Field | None = None,
               tau1: float = 1.0, tau0: float = 1.0) -> Discretization:
    dm = DofMap(mesh, k)
    ops, locs = [], []
    for e in range(mesh.n_elements):
        o = element_operators(mesh, e, k)
        ops.append(o)
        locs.append(local_forms(mesh.geometry(e), o, coeffs, k, tau1, tau0, element=e))
    system = assemble(dm, locs, dirichlet_values(mesh, dm, g))
    return Discretization(mesh, dm, coeffs, k, tau1, tau0, ops, locs, system)
