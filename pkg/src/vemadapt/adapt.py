"""Solve, estimate, mark and refine loop, plus the uniform-refinement driver."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .assembly import discretize
from .estimator import ErrorBreakdown, estimate
from .mesh import HangingPolicy, PolyMesh, dorfler_mark, refine
from .problems import Problem
from .solver import solve
from .vemspace import check_order

log = logging.getLogger(__name__)

ESTIMATOR_FLOOR = 1e-10
RELATIVE_STOP = 1e-8


@dataclass
class AdaptConfig:
    k: int = 1
    theta: float = 0.5
    max_dofs: int = 50_000
    max_iters: int = 100
    hanging_policy: HangingPolicy = HangingPolicy.UNLIMITED
    tau1: float = 1.0
    tau0: float = 1.0
    solver_tol: float = 1e-10
    # iterations whose meshes are kept; None keeps {0, mid, final}
    snapshots: tuple | None = None

    def __post_init__(self):
        check_order(self.k)
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("theta must lie in (0, 1]")
        if self.max_dofs < 1 or self.max_iters < 1:
            raise ValueError("max_dofs and max_iters must be positive")
        self.hanging_policy = HangingPolicy.parse(self.hanging_policy)


@dataclass
class IterationRecord:
    iteration: int
    cells: int
    ndofs: int
    breakdown: ErrorBreakdown
    seconds: float
    marked: int = 0


@dataclass
class RunHistory:
    problem: str
    records: list = field(default_factory=list)
    snapshots: dict = field(default_factory=dict)  # iteration -> (mesh, indicators)
    stop_reason: str = ""
    solution: np.ndarray | None = None

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        out = []
        for r in self.records:
            if name in ("cells", "ndofs", "seconds", "iteration", "marked"):
                out.append(getattr(r, name))
            else:
                out.append(getattr(r.breakdown, name))
        return np.asarray(out, dtype=float)

    def slope(self, name: str = "h1err", last: int | None = None) -> float:
        """Least-squares slope of log(name) against log(ndofs)."""
        n = self.column("ndofs")
        y = self.column(name)
        if last is not None:
            n, y = n[-last:], y[-last:]
        ok = (y > 0) & np.isfinite(y)
        if ok.sum() < 2:
            return float("nan")
        return float(np.polyfit(np.log(n[ok]), np.log(y[ok]), 1)[0])


def _solve_and_estimate(problem: Problem, mesh: PolyMesh, cfg: AdaptConfig):
    disc = discretize(mesh, problem.coeffs, cfg.k, g=problem.g, tau1=cfg.tau1, tau0=cfg.tau0)
    u = solve(disc.system, cfg.solver_tol).solution
    br = estimate(disc, u, problem.grad_u)
    scale = float(np.sqrt(abs(u @ (disc.system.matrix @ u))))
    return disc, u, br, scale


def _keep_snapshots(history: RunHistory, wanted, final: int):
    if wanted is None:
        wanted = {0, final // 2, final}
    history.snapshots = {i: s for i, s in history.snapshots.items() if i in set(wanted)}


def run_adaptive(problem: Problem, mesh: PolyMesh, cfg: AdaptConfig,
                 callback: Callable | None = None) -> RunHistory:
    """Iterate until the DoF budget, the iteration budget or the estimator floor is reached."""
    hist = RunHistory(problem.name)
    it = 0
    while True:
        t0 = time.perf_counter()
        disc, u, br, scale = _solve_and_estimate(problem, mesh, cfg)
        ndofs = disc.dofmap.n_dofs
        ind = br.indicators

        if br.total <= max(RELATIVE_STOP * scale, ESTIMATOR_FLOOR):
            reason = "estimator below tolerance"
        elif it + 1 >= cfg.max_iters:
            reason = "iteration budget reached"
        elif ndofs >= cfg.max_dofs:
            reason = "dof budget reached"
        else:
            reason = ""

        marks = set() if reason else dorfler_mark(ind, cfg.theta)
        rec = IterationRecord(it, mesh.n_elements, ndofs, br, 0.0, len(marks))
        if cfg.snapshots is None or it in cfg.snapshots:
            hist.snapshots[it] = (mesh, ind)
        if reason:
            rec.seconds = time.perf_counter() - t0
            hist.records.append(rec)
            hist.stop_reason = reason
            hist.solution = u
            break
        new_mesh = refine(mesh, marks, cfg.hanging_policy)
        rec.seconds = time.perf_counter() - t0
        hist.records.append(rec)
        log.info("iter %d: %d cells, %d dofs, estimator %.3e, marked %d",
                 it, mesh.n_elements, ndofs, br.total, len(marks))
        if callback is not None:
            callback(rec)
        mesh = new_mesh
        it += 1
    _keep_snapshots(hist, cfg.snapshots, len(hist.records) - 1)
    return hist


def run_uniform(problem: Problem, generator: Callable[[int], PolyMesh], sizes, cfg: AdaptConfig) -> RunHistory:
    """One solve and estimate per mesh ``generator(n)`` for n in ``sizes``."""
    hist = RunHistory(problem.name)
    sizes = list(sizes)
    for i, n in enumerate(sizes):
        t0 = time.perf_counter()
        mesh = generator(n)
        disc, u, br, _ = _solve_and_estimate(problem, mesh, cfg)
        hist.records.append(IterationRecord(i, mesh.n_elements, disc.dofmap.n_dofs, br,
                                            time.perf_counter() - t0))
        if cfg.snapshots is None or i in cfg.snapshots:
            hist.snapshots[i] = (mesh, br.indicators)
        hist.solution = u
    hist.stop_reason = "all levels done"
    _keep_snapshots(hist, cfg.snapshots, len(hist.records) - 1)
    return hist
