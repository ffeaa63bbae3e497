"""Scaled monomial bases, polynomial algebra and element L2 projections.

Monomials are ``m_a(x) = ((x - x_E) / h_E) ** a`` ordered by total degree,
then by decreasing power of the first coordinate: (0,0), (1,0), (0,1),
(2,0), (1,1), (0,2), ...
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.linalg

from .errors import FrameMismatch, SingularMass
from .geometry import ElementGeometry, polygon_quadrature


def dim_poly(k: int) -> int:
    """Dimension of P_k in two variables (0 for k < 0)."""
    return 0 if k < 0 else (k + 1) * (k + 2) // 2


@lru_cache(maxsize=None)
def multi_indices(k: int) -> tuple:
    return tuple((d - j, j) for d in range(k + 1) for j in range(d + 1))


def index_of(a1: int, a2: int) -> int:
    d = a1 + a2
    return d * (d + 1) // 2 + a2


@lru_cache(maxsize=None)
def _exponents(k: int):
    idx = np.array(multi_indices(k), dtype=int).reshape(-1, 2)
    return idx[:, 0], idx[:, 1]


def monomials(points, center, h: float, k: int) -> np.ndarray:
    """Values of all scaled monomials of degree <= k, shape (npts, dim_poly(k))."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    s = (pts - np.asarray(center, dtype=float)) / h
    return monomials_scaled(s, k)


def monomials_scaled(s: np.ndarray, k: int) -> np.ndarray:
    npts = len(s)
    if k < 0:
        return np.zeros((npts, 0))
    px = np.ones((npts, k + 1))
    py = np.ones((npts, k + 1))
    for j in range(1, k + 1):
        px[:, j] = px[:, j - 1] * s[:, 0]
        py[:, j] = py[:, j - 1] * s[:, 1]
    ex, ey = _exponents(k)
    return px[:, ex] * py[:, ey]


@lru_cache(maxsize=None)
def derivative_matrices(k: int):
    """Matrices (Dx, Dy) of shape (dim_poly(k-1), dim_poly(k)) differentiating
    coefficient vectors in the scaled variable (no 1/h factor)."""
    n_out = dim_poly(k - 1)
    n_in = dim_poly(k)
    dx = np.zeros((n_out, n_in))
    dy = np.zeros((n_out, n_in))
    for j, (a1, a2) in enumerate(multi_indices(k)):
        if a1 > 0:
            dx[index_of(a1 - 1, a2), j] = a1
        if a2 > 0:
            dy[index_of(a1, a2 - 1), j] = a2
    dx.setflags(write=False)
    dy.setflags(write=False)
    return dx, dy


@lru_cache(maxsize=None)
def _product_table(kp: int, kq: int):
    ip = multi_indices(kp)
    iq = multi_indices(kq)
    rows, cols, out = [], [], []
    for i, (a1, a2) in enumerate(ip):
        for j, (b1, b2) in enumerate(iq):
            rows.append(i)
            cols.append(j)
            out.append(index_of(a1 + b1, a2 + b2))
    return np.array(rows), np.array(cols), np.array(out)


class ScaledPoly:
    """Polynomial in the scaled monomial basis of one element frame."""

    __slots__ = ("coeffs", "degree", "center", "h")

    def __init__(self, coeffs, degree: int, center, h: float):
        coeffs = np.asarray(coeffs, dtype=float)
        if len(coeffs) != dim_poly(degree):
            raise ValueError(f"degree {degree} needs {dim_poly(degree)} coefficients, got {len(coeffs)}")
        self.coeffs = coeffs
        self.degree = degree
        self.center = np.asarray(center, dtype=float)
        self.h = float(h)

    @classmethod
    def monomial(cls, a1: int, a2: int, center, h: float, degree: int | None = None):
        degree = a1 + a2 if degree is None else degree
        c = np.zeros(dim_poly(degree))
        c[index_of(a1, a2)] = 1.0
        return cls(c, degree, center, h)

    @classmethod
    def zero(cls, degree: int, center, h: float):
        return cls(np.zeros(dim_poly(max(degree, 0))), max(degree, 0), center, h)

    def _check_frame(self, other: "ScaledPoly"):
        if self.h != other.h or not np.array_equal(self.center, other.center):
            raise FrameMismatch("polynomials live in different element frames")

    def __call__(self, points) -> np.ndarray:
        return monomials(points, self.center, self.h, self.degree) @ self.coeffs

    def eval(self, x) -> float:
        return float(self(np.asarray(x, dtype=float).reshape(1, 2))[0])

    def raise_degree(self, degree: int) -> "ScaledPoly":
        if degree < self.degree:
            raise ValueError("cannot lower the degree")
        c = np.zeros(dim_poly(degree))
        c[: len(self.coeffs)] = self.coeffs
        return ScaledPoly(c, degree, self.center, self.h)

    def __add__(self, other):
        if isinstance(other, (int, float)):
            c = self.coeffs.copy()
            c[0] += other
            return ScaledPoly(c, self.degree, self.center, self.h)
        self._check_frame(other)
        d = max(self.degree, other.degree)
        return ScaledPoly(self.raise_degree(d).coeffs + other.raise_degree(d).coeffs, d, self.center, self.h)

    __radd__ = __add__

    def __neg__(self):
        return ScaledPoly(-self.coeffs, self.degree, self.center, self.h)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return ScaledPoly(self.coeffs * other, self.degree, self.center, self.h)
        return multiply(self, other)

    __rmul__ = __mul__

    def grad(self):
        return grad(self)

    def __repr__(self):
        return f"ScaledPoly(degree={self.degree}, coeffs={self.coeffs!r})"


def multiply(p: ScaledPoly, q: ScaledPoly) -> ScaledPoly:
    p._check_frame(q)
    rows, cols, out = _product_table(p.degree, q.degree)
    c = np.zeros(dim_poly(p.degree + q.degree))
    np.add.at(c, out, p.coeffs[rows] * q.coeffs[cols])
    return ScaledPoly(c, p.degree + q.degree, p.center, p.h)


def grad(p: ScaledPoly):
    """Gradient as a pair of ScaledPoly of degree ``max(k-1, 0)``."""
    if p.degree == 0:
        z = ScaledPoly.zero(0, p.center, p.h)
        return z, ScaledPoly.zero(0, p.center, p.h)
    dx, dy = derivative_matrices(p.degree)
    return (ScaledPoly(dx @ p.coeffs / p.h, p.degree - 1, p.center, p.h),
            ScaledPoly(dy @ p.coeffs / p.h, p.degree - 1, p.center, p.h))


def divergence(v) -> ScaledPoly:
    vx, vy = v
    return grad(vx)[0] + grad(vy)[1]


class MassMatrix:
    """``H[a, b] = int_E m_a m_b`` for one element and degree."""

    def __init__(self, matrix: np.ndarray, degree: int):
        self.matrix = matrix
        self.degree = degree
        try:
            self._chol = scipy.linalg.cho_factor(matrix, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise SingularMass("element mass matrix is not positive definite") from exc

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        x = scipy.linalg.cho_solve(self._chol, rhs, check_finite=False)
        # one step of iterative refinement
        r = rhs - self.matrix @ x
        return x + scipy.linalg.cho_solve(self._chol, r, check_finite=False)

    def cond(self) -> float:
        return float(np.linalg.cond(self.matrix))


def mass_matrix(geom: ElementGeometry, degree: int, exactness: int | None = None) -> MassMatrix:
    if degree < 0:
        raise ValueError("degree must be non-negative")
    q = polygon_quadrature(geom, 2 * degree if exactness is None else exactness)
    m = monomials(q.points, geom.barycentre, geom.diameter, degree)
    h = (m * q.weights[:, None]).T @ m
    return MassMatrix(0.5 * (h + h.T), degree)


def l2_project(f, geom: ElementGeometry, degree: int, exactness: int | None = None) -> ScaledPoly:
    """L2(E) projection of a pointwise-evaluable field ``f(points) -> values``."""
    if exactness is None:
        exactness = 2 * degree + 4
    q = polygon_quadrature(geom, max(exactness, 2 * degree))
    m = monomials(q.points, geom.barycentre, geom.diameter, degree)
    h = (m * q.weights[:, None]).T @ m
    mm = MassMatrix(0.5 * (h + h.T), degree)
    vals = np.asarray(f(q.points), dtype=float)
    b = m.T @ (q.weights * vals)
    return ScaledPoly(mm.solve(b), degree, geom.barycentre, geom.diameter)
