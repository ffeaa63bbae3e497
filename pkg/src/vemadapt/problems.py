"""Benchmark problems: coefficients, exact solutions, forcing and boundary data."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .assembly import CoefficientSet, _const_matrix, _const_scalar, _const_vector


@dataclass
class Problem:
    name: str
    coeffs: CoefficientSet
    u: Callable | None = None
    grad_u: Callable | None = None
    g: Callable | None = None
    domain: str = "unit-square"
    # points (and lines x=c / y=c) where the solution is not smooth
    singular_points: list = field(default_factory=list)
    singular_lines: list = field(default_factory=list)

    @property
    def has_exact(self) -> bool:
        return self.u is not None and self.grad_u is not None


def problem_smooth() -> Problem:
    pi = np.pi

    def u(p):
        return np.sin(pi * p[:, 0]) * np.sin(pi * p[:, 1])

    def grad_u(p):
        x, y = p[:, 0], p[:, 1]
        return np.column_stack([pi * np.cos(pi * x) * np.sin(pi * y), pi * np.sin(pi * x) * np.cos(pi * y)])

    def f(p):
        return 2 * pi * pi * u(p)

    coeffs = CoefficientSet(f=f, has_convection=False)
    return Problem("smooth", coeffs, u, grad_u, lambda p: np.zeros(len(p)))


# convection/reaction block shared by the two adaptive benchmarks
def _b(p):
    x, y = p[:, 0], p[:, 1]
    return np.column_stack([np.cos(x) * np.exp(y), np.exp(x) * np.sin(y)])


def _div_b(p):
    x, y = p[:, 0], p[:, 1]
    return -np.sin(x) * np.exp(y) + np.exp(x) * np.cos(y)


def _gamma(p):
    return np.sin(2 * np.pi * p[:, 0]) * np.sin(2 * np.pi * p[:, 1])


def _polar(p, origin=(0.0, 0.0)):
    x = p[:, 0] - origin[0]
    y = p[:, 1] - origin[1]
    r = np.hypot(x, y)
    th = np.arctan2(y, x)
    th = np.where(th < 0, th + 2 * np.pi, th)
    return r, th


def _cdr_problem(name, u, grad_u, lap_u, **kw) -> Problem:
    def f(p):
        return -lap_u(p) + np.sum(_b(p) * grad_u(p), axis=1) + _gamma(p) * u(p)

    coeffs = CoefficientSet(kappa=_const_matrix(np.eye(2)), dkappa=_const_vector((0.0, 0.0)),
                            b=_b, div_b=_div_b, gamma=_gamma, f=f)
    return Problem(name, coeffs, u, grad_u, u, **kw)


def problem_lshape_gaussian() -> Problem:
    """Corner singularity r^(2/3) sin(2 theta / 3) plus a sharp Gaussian at (0.5, 0.5)."""

    def gauss(p):
        return np.exp(-1000 * ((p[:, 0] - 0.5) ** 2 + (p[:, 1] - 0.5) ** 2))

    def u(p):
        r, th = _polar(p)
        return r ** (2 / 3) * np.sin(2 * th / 3) + gauss(p)

    def grad_u(p):
        r, th = _polar(p)
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.where(r > 0, (2 / 3) * r ** (-1 / 3), 0.0)
        gs = np.column_stack([-c * np.sin(th / 3), c * np.cos(th / 3)])
        gg = gauss(p)[:, None] * np.column_stack([-2000 * (p[:, 0] - 0.5), -2000 * (p[:, 1] - 0.5)])
        return gs + gg

    def lap_u(p):
        # the corner part is harmonic
        d2 = (p[:, 0] - 0.5) ** 2 + (p[:, 1] - 0.5) ** 2
        return (-4000 + 4e6 * d2) * gauss(p)

    return _cdr_problem("lshape-gaussian", u, grad_u, lap_u, domain="lshape",
                        singular_points=[(0.0, 0.0)])


def problem_internal_layer() -> Problem:
    """16 x(1-x) y(1-y) arctan(25x - 100y + 50) on the unit square."""

    def parts(p):
        x, y = p[:, 0], p[:, 1]
        z = 25 * x - 100 * y + 50
        P = 16 * x * (1 - x) * y * (1 - y)
        Px = 16 * (1 - 2 * x) * y * (1 - y)
        Py = 16 * x * (1 - x) * (1 - 2 * y)
        Pxx = -32 * y * (1 - y)
        Pyy = -32 * x * (1 - x)
        q = 1 + z * z
        A = np.arctan(z)
        Ax = 25 / q
        Ay = -100 / q
        Axx = -1250 * z / q ** 2
        Ayy = -20000 * z / q ** 2
        return P, Px, Py, Pxx, Pyy, A, Ax, Ay, Axx, Ayy

    def u(p):
        P, *_ = parts(p)
        return P * np.arctan(25 * p[:, 0] - 100 * p[:, 1] + 50)

    def grad_u(p):
        P, Px, Py, _, _, A, Ax, Ay, _, _ = parts(p)
        return np.column_stack([Px * A + P * Ax, Py * A + P * Ay])

    def lap_u(p):
        P, Px, Py, Pxx, Pyy, A, Ax, Ay, Axx, Ayy = parts(p)
        return (Pxx + Pyy) * A + 2 * (Px * Ax + Py * Ay) + P * (Axx + Ayy)

    prob = _cdr_problem("internal-layer", u, grad_u, lap_u)
    prob.g = lambda p: np.zeros(len(p))
    return prob


@dataclass(frozen=True)
class KelloggParams:
    a: float = 0.4
    b: float = 25.27414236908818
    alpha: float = 0.25
    sigma: float = -5.49778714378214


def kellogg_angular(theta, prm: KelloggParams = KelloggParams()):
    """Angular factor of the Kellogg solution and its derivative."""
    th = np.asarray(theta)
    th = th.astype(np.result_type(th, float))  # keeps extended precision if given
    al, sg, pi = prm.alpha, prm.sigma, np.pi
    # per quadrant: amplitude and phase shift of cos((theta - shift) * alpha)
    amp = np.select([th < pi / 2, th < pi, th < 3 * pi / 2],
                    [np.cos((pi / 2 - sg) * al), np.cos(pi / 4 * al), np.cos(sg * al)],
                    np.cos(pi / 4 * al))
    shift = np.select([th < pi / 2, th < pi, th < 3 * pi / 2],
                      [pi / 4, pi - sg, 5 * pi / 4], 3 * pi / 2 + sg)
    g = amp * np.cos((th - shift) * al)
    dg = -amp * al * np.sin((th - shift) * al)
    return g, dg


def problem_kellogg(prm: KelloggParams = KelloggParams(), name: str | None = None) -> Problem:
    a = prm.a

    def kappa_scalar(p):
        return np.where((p[:, 0] - a) * (p[:, 1] - a) >= 0, prm.b, 1.0)

    def kappa(p):
        out = np.zeros((len(p), 2, 2))
        ks = kappa_scalar(p)
        out[:, 0, 0] = ks
        out[:, 1, 1] = ks
        return out

    def u(p):
        r, th = _polar(p, (a, a))
        g, _ = kellogg_angular(th, prm)
        return r ** prm.alpha * g

    def grad_u(p):
        r, th = _polar(p, (a, a))
        g, dg = kellogg_angular(th, prm)
        with np.errstate(divide="ignore", invalid="ignore"):
            ra = np.where(r > 0, r ** (prm.alpha - 1), 0.0)
        ur = prm.alpha * ra * g
        ut = ra * dg
        c, s = np.cos(th), np.sin(th)
        return np.column_stack([ur * c - ut * s, ur * s + ut * c])

    coeffs = CoefficientSet(kappa=kappa, f=_const_scalar(0.0), has_convection=False)
    prob = Problem(name or f"kellogg(a={a:g})", coeffs, u, grad_u, u,
                   singular_points=[(a, a)], singular_lines=[("x", a), ("y", a)])
    prob.kappa_scalar = kappa_scalar
    return prob


PROBLEMS = {
    "smooth": problem_smooth,
    "lshape-gaussian": problem_lshape_gaussian,
    "internal-layer": problem_internal_layer,
    "kellogg-aligned": lambda: problem_kellogg(KelloggParams(a=0.4), "kellogg-aligned"),
    "kellogg-unaligned": lambda: problem_kellogg(KelloggParams(a=2 * np.sqrt(2) / 5), "kellogg-unaligned"),
}


def get_problem(name: str) -> Problem:
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise KeyError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
