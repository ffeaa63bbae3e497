"""Residual a posteriori error estimator and true-error evaluation.

Per element the estimator collects

* ``eta2``   element residual and flux-jump terms,
* ``xi2``    data oscillation (coefficient and load approximation),
* ``theta2`` virtual inconsistency terms (four parts, see ``theta_parts``),
* ``psi2``   the stabilization applied to ``(I - Pi0k) u_h``.

Interior-interface contributions are split evenly between the two
neighbours so that element indicators add up to the global estimator.
Boundary interfaces carry no jump terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import CoefficientSet, Discretization
from .errors import MissingExactSolution
from .geometry import ElementGeometry, gauss_legendre01, polygon_quadrature
from .mesh import PolyMesh
from .poly import ScaledPoly, dim_poly, divergence, monomials, monomials_scaled, multiply
from .vemspace import LocalOperators

# shift used to evaluate coefficient traces from inside an element
INSIDE_SHIFT = 1e-9
# effectivity is not reported when the error is at round-off level relative to |u|_1
DEGENERATE_ERROR = 1e-9


def estimator_exactness(k: int) -> int:
    return 2 * k + 4


@dataclass
class DataApprox:
    """Element-wise polynomial approximations of the PDE data."""

    kappa_h: tuple  # (xx, xy, yy)
    b_h: tuple
    gamma_h: ScaledPoly
    f_h: ScaledPoly


def _project_values(ops: LocalOperators, mq: np.ndarray, w: np.ndarray, vals: np.ndarray, degree: int):
    """Coefficients of the L2 projection onto P_degree of sampled values.

    ``vals`` may carry trailing component axes; the result has shape
    (dim_poly(degree), *components).
    """
    m = mq[:, :dim_poly(degree)]
    rhs = np.tensordot(m * w[:, None], vals, axes=(0, 0))
    return ops.mass_solve(rhs, degree)


def data_approx_element(geom: ElementGeometry, ops: LocalOperators, coeffs: CoefficientSet, k: int,
                        degree: int | None = None, exactness: int | None = None) -> DataApprox:
    degree = k - 1 if degree is None else degree
    q = polygon_quadrature(geom, estimator_exactness(k) if exactness is None else exactness)
    mq = monomials(q.points, geom.barycentre, geom.diameter, max(k, degree))
    c, h = geom.barycentre, geom.diameter

    def poly(coef, deg):
        return ScaledPoly(coef, deg, c, h)

    kap = coeffs.kappa(q.points)
    kc = _project_values(ops, mq, q.weights, np.stack([kap[:, 0, 0], kap[:, 0, 1], kap[:, 1, 1]], axis=1), degree)
    bc = _project_values(ops, mq, q.weights, coeffs.b(q.points), degree)
    gc = _project_values(ops, mq, q.weights, coeffs.gamma(q.points), degree)
    fc = _project_values(ops, mq, q.weights, coeffs.f(q.points), k - 1)
    return DataApprox(tuple(poly(kc[:, i], degree) for i in range(3)),
                      tuple(poly(bc[:, i], degree) for i in range(2)),
                      poly(gc, degree), poly(fc, k - 1))


def data_approx(disc: Discretization, degree: int | None = None) -> list:
    mesh = disc.mesh
    return [data_approx_element(mesh.geometry(e), disc.ops[e], disc.coeffs, disc.k, degree)
            for e in range(mesh.n_elements)]


@dataclass
class ElementState:
    """Projections of u_h on one element plus the data needed for jump terms."""

    geom: ElementGeometry
    pik: ScaledPoly
    grad: tuple
    flux: tuple  # kappa_h * PiGrad u_h


def element_state(ops: LocalOperators, u: np.ndarray, approx: DataApprox) -> ElementState:
    g = ops.geom
    c, h, k = g.barycentre, g.diameter, ops.k
    pik = ScaledPoly(ops.Pi0k @ u, k, c, h)
    gx = ScaledPoly(ops.PiGrad[0] @ u, k - 1, c, h)
    gy = ScaledPoly(ops.PiGrad[1] @ u, k - 1, c, h)
    kxx, kxy, kyy = approx.kappa_h
    fx = multiply(kxx, gx) + multiply(kxy, gy)
    fy = multiply(kxy, gx) + multiply(kyy, gy)
    return ElementState(g, pik, (gx, gy), (fx, fy))


def element_residual_poly(state: ElementState, approx: DataApprox) -> ScaledPoly:
    """R = f_h + div(kappa_h Pi grad u_h) - b_h . Pi grad u_h - gamma_h Pi0k u_h."""
    gx, gy = state.grad
    r = approx.f_h + divergence(state.flux)
    r = r - (multiply(approx.b_h[0], gx) + multiply(approx.b_h[1], gy))
    return r - multiply(approx.gamma_h, state.pik)


def element_residual(state: ElementState, approx: DataApprox, exactness: int) -> float:
    """h_E^2 ||R||^2 (jump terms are handled by :func:`interface_jumps`)."""
    g = state.geom
    q = polygon_quadrature(g, exactness)
    r = element_residual_poly(state, approx)(q.points)
    return g.diameter ** 2 * float(np.dot(q.weights, r * r))


@dataclass
class _Samples:
    pts: np.ndarray
    w: np.ndarray
    mq: np.ndarray
    gv: np.ndarray       # PiGrad u_h values (n, 2)
    dg: np.ndarray       # dg[:, i, j] = d_i (PiGrad u_h)_j
    pv: np.ndarray       # Pi0k u_h values


def _sample(state: ElementState, exactness: int, k: int) -> _Samples:
    g = state.geom
    q = polygon_quadrature(g, exactness)
    mq = monomials(q.points, g.barycentre, g.diameter, k)
    nk1 = dim_poly(k - 1)
    gx, gy = state.grad
    gv = np.column_stack([mq[:, :nk1] @ gx.coeffs, mq[:, :nk1] @ gy.coeffs])
    dg = np.zeros((len(q.points), 2, 2))
    if k >= 2:
        nk2 = dim_poly(k - 2)
        for j, comp in enumerate((gx, gy)):
            dx, dy = comp.grad()
            dg[:, 0, j] = mq[:, :nk2] @ dx.coeffs
            dg[:, 1, j] = mq[:, :nk2] @ dy.coeffs
    return _Samples(q.points, q.weights, mq, gv, dg, mq @ state.pik.coeffs)


def data_oscillation(state: ElementState, approx: DataApprox, coeffs: CoefficientSet,
                     exactness: int, samples: _Samples | None = None) -> float:
    """Element part of the data oscillation term (edge part in :func:`interface_jumps`)."""
    k = state.pik.degree
    s = samples or _sample(state, exactness, k)
    h2 = state.geom.diameter ** 2
    kap = coeffs.kappa(s.pts)
    dk = coeffs.dkappa(s.pts)
    kxx, kxy, kyy = approx.kappa_h
    kh = np.empty_like(kap)
    kh[:, 0, 0] = kxx(s.pts)
    kh[:, 0, 1] = kh[:, 1, 0] = kxy(s.pts)
    kh[:, 1, 1] = kyy(s.pts)
    dkh = np.column_stack([grad_at(kxx, s.pts, 0) + grad_at(kxy, s.pts, 1),
                           grad_at(kxy, s.pts, 0) + grad_at(kyy, s.pts, 1)])
    dkap = kap - kh
    div_term = np.sum((dk - dkh) * s.gv, axis=1) + np.einsum("nij,nij->n", dkap, s.dg)
    bv = coeffs.b(s.pts)
    bh = np.column_stack([approx.b_h[0](s.pts), approx.b_h[1](s.pts)])
    fv = coeffs.f(s.pts)
    ffh = fv - approx.f_h(s.pts)
    rd = ffh + div_term - np.sum((bv - bh) * s.gv, axis=1) - (coeffs.gamma(s.pts) - approx.gamma_h(s.pts)) * s.pv
    return h2 * float(np.dot(s.w, rd * rd)) + h2 * float(np.dot(s.w, ffh * ffh))


def grad_at(p: ScaledPoly, pts: np.ndarray, axis: int) -> np.ndarray:
    if p.degree == 0:
        return np.zeros(len(pts))
    return p.grad()[axis](pts)


def virtual_inconsistency(state: ElementState, ops: LocalOperators, coeffs: CoefficientSet,
                          exactness: int, samples: _Samples | None = None) -> np.ndarray:
    """The four virtual inconsistency contributions as an array."""
    k = state.pik.degree
    s = samples or _sample(state, exactness, k)
    h2 = state.geom.diameter ** 2

    def proj_err(vals, degree):
        c = _project_values(ops, s.mq, s.w, vals, degree)
        d = vals - s.mq[:, :dim_poly(degree)] @ c
        if d.ndim == 1:
            return float(np.dot(s.w, d * d))
        return float(np.dot(s.w, np.sum(d * d, axis=1)))

    kap = coeffs.kappa(s.pts)
    t1 = proj_err(np.einsum("nij,nj->ni", kap, s.gv), k - 1)
    if coeffs.has_convection:
        bv = coeffs.b(s.pts)
        t2 = h2 * proj_err(np.sum(bv * s.gv, axis=1), k)
        t3 = proj_err(bv * s.pv[:, None], k - 1)
    else:
        t2 = t3 = 0.0
    t4 = h2 * proj_err(coeffs.gamma_tilde(s.pts) * s.pv, k)
    return np.array([t1, t2, t3, t4])


def stab_term(S: np.ndarray, ops: LocalOperators, u: np.ndarray) -> float:
    w = u - ops.D @ (ops.Pi0k @ u)
    return float(w @ S @ w)


def interface_jumps(mesh: PolyMesh, states: list, coeffs: CoefficientSet, exactness: int):
    """Per-element shares of ``h_s ||J||^2`` and ``h_s ||J_data||^2``."""
    ne = mesh.n_elements
    eta = np.zeros(ne)
    xi = np.zeros(ne)
    inner = mesh.interior_interfaces
    if len(inner) == 0:
        return eta, xi
    k = states[0].pik.degree
    t, w = gauss_legendre01(max(1, -(-(exactness + 1) // 2)))
    nq = len(t)
    a = mesh.vertices[mesh.iface_vertices[inner, 0]]
    b = mesh.vertices[mesh.iface_vertices[inner, 1]]
    d = b - a
    length = np.hypot(d[:, 0], d[:, 1])
    normal = np.column_stack([d[:, 1], -d[:, 0]]) / length[:, None]  # outward from left element
    pts = a[:, None, :] + t[None, :, None] * d[:, None, :]

    def side(elems):
        cen = np.array([states[e].geom.barycentre for e in elems])
        hh = np.array([states[e].geom.diameter for e in elems])
        fdeg = states[elems[0]].flux[0].degree
        fc = np.array([[states[e].flux[0].coeffs, states[e].flux[1].coeffs] for e in elems])
        gc = np.array([[states[e].grad[0].coeffs, states[e].grad[1].coeffs] for e in elems])
        sc = ((pts - cen[:, None, :]) / hh[:, None, None]).reshape(-1, 2)
        mf = monomials_scaled(sc, fdeg).reshape(len(elems), nq, -1)
        flux = np.einsum("sqm,scm->sqc", mf, fc)
        grad = np.einsum("sqm,scm->sqc", mf[:, :, :dim_poly(k - 1)], gc)
        inside = pts + INSIDE_SHIFT * (cen[:, None, :] - pts)
        kap = coeffs.kappa(inside.reshape(-1, 2)).reshape(len(elems), nq, 2, 2)
        kg = np.einsum("sqij,sqj->sqi", kap, grad)
        return flux, kg

    left = mesh.iface_left[inner]
    right = mesh.iface_right[inner]
    fl, kgl = side(left)
    fr, kgr = side(right)
    jump = np.einsum("sqc,sc->sq", fl - fr, normal)
    jd = np.einsum("sqc,sc->sq", (kgl - fl) - (kgr - fr), normal)
    # h_s * ||.||_{0,s}^2 with h_s = |s|
    je = length ** 2 * ((jump * jump) @ w)
    jde = length ** 2 * ((jd * jd) @ w)
    np.add.at(eta, left, 0.5 * je)
    np.add.at(eta, right, 0.5 * je)
    np.add.at(xi, left, 0.5 * jde)
    np.add.at(xi, right, 0.5 * jde)
    return eta, xi


@dataclass
class ErrorBreakdown:
    eta2: np.ndarray
    xi2: np.ndarray
    theta_parts: np.ndarray
    psi2: np.ndarray
    err2: np.ndarray | None = None
    unorm2: np.ndarray | None = None  # per-element |u|_1^2 of the exact solution
    extra: dict = field(default_factory=dict)

    @property
    def theta2(self) -> np.ndarray:
        return self.theta_parts.sum(axis=1)

    @property
    def indicators(self) -> np.ndarray:
        """Per-element squared totals used for marking."""
        return self.eta2 + self.xi2 + self.theta2 + self.psi2

    @property
    def eta(self) -> float:
        return float(np.sqrt(self.eta2.sum()))

    @property
    def xi(self) -> float:
        return float(np.sqrt(self.xi2.sum()))

    @property
    def theta(self) -> float:
        return float(np.sqrt(self.theta2.sum()))

    @property
    def psi(self) -> float:
        return float(np.sqrt(self.psi2.sum()))

    @property
    def total(self) -> float:
        return float(np.sqrt(self.indicators.sum()))

    @property
    def h1err(self) -> float:
        if self.err2 is None:
            return float("nan")
        return float(np.sqrt(self.err2.sum()))

    @property
    def degenerate(self) -> bool:
        """True when the true error is too small for a meaningful effectivity."""
        if self.err2 is None:
            return False
        scale = 1.0 if self.unorm2 is None else max(float(np.sqrt(self.unorm2.sum())), 1e-300)
        return self.h1err <= DEGENERATE_ERROR * scale

    @property
    def effectivity(self) -> float:
        if self.err2 is None or self.degenerate:
            return float("nan")
        return self.total / self.h1err


def true_error(geoms: list, piks: list, grad_u, exactness: int):
    """Per-element squared H1-seminorm error of Pi0k u_h and of u itself."""
    err2 = np.zeros(len(geoms))
    unorm2 = np.zeros(len(geoms))
    for e, (g, pik) in enumerate(zip(geoms, piks)):
        q = polygon_quadrature(g, exactness)
        gx, gy = pik.grad()
        ex = grad_u(q.points)
        dx = ex[:, 0] - gx(q.points)
        dy = ex[:, 1] - gy(q.points)
        err2[e] = float(np.dot(q.weights, dx * dx + dy * dy))
        unorm2[e] = float(np.dot(q.weights, np.sum(ex * ex, axis=1)))
    return err2, unorm2


def estimate(disc: Discretization, u: np.ndarray, grad_u=None, coeff_degree: int | None = None) -> ErrorBreakdown:
    """Evaluate every estimator term for the DoF vector ``u``."""
    mesh, k, coeffs = disc.mesh, disc.k, disc.coeffs
    ex = estimator_exactness(k)
    ne = mesh.n_elements
    eta2 = np.zeros(ne)
    xi2 = np.zeros(ne)
    theta = np.zeros((ne, 4))
    psi2 = np.zeros(ne)
    states = []
    for e in range(ne):
        ops = disc.ops[e]
        ue = u[disc.dofmap.local[e]]
        approx = data_approx_element(ops.geom, ops, coeffs, k, coeff_degree, ex)
        st = element_state(ops, ue, approx)
        states.append(st)
        s = _sample(st, ex, k)
        r = element_residual_poly(st, approx)(s.pts)
        eta2[e] = ops.geom.diameter ** 2 * float(np.dot(s.w, r * r))
        xi2[e] = data_oscillation(st, approx, coeffs, ex, s)
        theta[e] = virtual_inconsistency(st, ops, coeffs, ex, s)
        psi2[e] = stab_term(disc.locals[e].S, ops, ue)
    je, jd = interface_jumps(mesh, states, coeffs, ex)
    eta2 += je
    xi2 += jd
    br = ErrorBreakdown(eta2, xi2, theta, np.maximum(psi2, 0.0))
    if grad_u is not None:
        br.err2, br.unorm2 = true_error([st.geom for st in states], [st.pik for st in states], grad_u, ex)
    return br


def true_error_and_effectivity(disc: Discretization, u: np.ndarray, grad_u, breakdown: ErrorBreakdown) -> ErrorBreakdown:
    """Attach the projected-solution H1 error to an existing breakdown."""
    if grad_u is None:
        raise MissingExactSolution("the exact gradient is required for the true error")
    geoms = [ops.geom for ops in disc.ops]
    piks = [ScaledPoly(ops.Pi0k @ u[disc.dofmap.local[e]], disc.k, ops.geom.barycentre, ops.geom.diameter)
            for e, ops in enumerate(disc.ops)]
    breakdown.err2, breakdown.unorm2 = true_error(geoms, piks, grad_u, estimator_exactness(disc.k))
    return breakdown
