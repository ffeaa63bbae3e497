"""Sparse linear solves for the assembled (generally nonsymmetric) systems."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import SparseSystem
from .errors import SingularSystem, SolverBreakdown

log = logging.getLogger(__name__)

DIRECT_LIMIT = 200_000


@dataclass
class SolveReport:
    solution: np.ndarray
    residual: float
    method: str
    iterations: int = 0


def solve_matrix(a, b, tol: float = 1e-10, direct_limit: int = DIRECT_LIMIT) -> SolveReport:
    """Solve ``a x = b``: sparse LU (COLAMD ordering), else ILU-preconditioned BiCGStab."""
    a = sp.csc_matrix(a)
    b = np.asarray(b, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(b)):
        raise ValueError("right-hand side is not finite")
    bnorm = float(np.linalg.norm(b))
    if n == 0:
        return SolveReport(np.zeros(0), 0.0, "empty")
    if bnorm == 0.0:
        return SolveReport(np.zeros(n), 0.0, "trivial")

    if n <= direct_limit:
        try:
            lu = spla.splu(a, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise SingularSystem(str(exc)) from exc
        x = lu.solve(b)
        r = b - a @ x
        x = x + lu.solve(r)
        res = float(np.linalg.norm(b - a @ x)) / bnorm
        if not np.isfinite(res) or res > tol:
            raise SingularSystem(f"direct solve residual {res:.3e} exceeds {tol:.1e}")
        return SolveReport(x, res, "splu")

    ilu = spla.spilu(a, drop_tol=1e-5, fill_factor=20)
    m = spla.LinearOperator(a.shape, ilu.solve)
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = spla.bicgstab(a, b, M=m, rtol=tol * 0.1, atol=0.0, maxiter=5000, callback=cb)
    res = float(np.linalg.norm(b - a @ x)) / bnorm
    if info != 0 or res > tol:
        raise SolverBreakdown(f"BiCGStab stopped with info={info}, residual {res:.3e}")
    return SolveReport(x, res, "bicgstab+ilu", count[0])


def solve(system: SparseSystem, tol: float = 1e-10) -> SolveReport:
    """Solve the constrained system; the report carries the full DoF vector."""
    a_ff, b = system.reduced()
    rep = solve_matrix(a_ff, b, tol)
    log.debug("solved %d unknowns via %s, residual %.2e", a_ff.shape[0], rep.method, rep.residual)
    return SolveReport(system.expand(rep.solution), rep.residual, rep.method, rep.iterations)
