"""Mesh families on the benchmark domains."""

from __future__ import annotations

import numpy as np
from scipy.spatial import Voronoi

from .errors import GenerationFailed, InvalidPolygon
from .geometry import signed_area
from .mesh import PolyMesh


def _grid_mesh(nx: int, ny: int, x0, y0, hx, hy, keep=None, jitter=None) -> PolyMesh:
    vid = -np.ones((nx + 1, ny + 1), dtype=np.int64)
    cells = []
    for i in range(nx):
        for j in range(ny):
            if keep is None or keep(i, j):
                cells.append((i, j))
    verts = []
    for i, j in cells:
        for a, b in ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)):
            if vid[a, b] < 0:
                vid[a, b] = len(verts)
                verts.append((x0 + a * hx, y0 + b * hy))
    verts = np.array(verts, dtype=float)
    if jitter is not None:
        verts = jitter(verts, vid)
    loops = [[vid[i, j], vid[i + 1, j], vid[i + 1, j + 1], vid[i, j + 1]] for i, j in cells]
    return _checked(verts, loops)


def _checked(verts, loops) -> PolyMesh:
    try:
        return PolyMesh(verts, loops)
    except InvalidPolygon as exc:
        raise GenerationFailed(str(exc)) from exc


def gen_squares(n: int) -> PolyMesh:
    """n x n squares on the unit square."""
    if n < 1:
        raise ValueError("n must be positive")
    return _grid_mesh(n, n, 0.0, 0.0, 1.0 / n, 1.0 / n)


def gen_lshape(n: int) -> PolyMesh:
    """3 n^2 squares of side 1/n on (-1, 1)^2 minus the quadrant x > 0, y < 0."""
    if n < 1:
        raise ValueError("n must be positive")
    return _grid_mesh(2 * n, 2 * n, -1.0, -1.0, 1.0 / n, 1.0 / n,
                      keep=lambda i, j: not (i >= n and j < n))


def gen_random_quads(n: int, jitter: float = 0.3, seed: int = 0) -> PolyMesh:
    """Tensor grid on the unit square with interior vertices moved by up to jitter*h."""
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    h = 1.0 / n

    def move(verts, vid):
        out = verts.copy()
        interior = np.all((verts > 1e-12) & (verts < 1 - 1e-12), axis=1)
        out[interior] += rng.uniform(-jitter * h, jitter * h, size=(int(interior.sum()), 2))
        return out

    return _grid_mesh(n, n, 0.0, 0.0, h, h, jitter=move)


def _clip_to_box(p: np.ndarray) -> np.ndarray:
    return np.clip(p, 0.0, 1.0)


def _bounded_voronoi(seeds: np.ndarray, merge_tol: float = 1e-10):
    """Voronoi cells of seeds in the unit square, via reflection across its sides."""
    n = len(seeds)
    reflected = [seeds,
                 np.column_stack([-seeds[:, 0], seeds[:, 1]]),
                 np.column_stack([2.0 - seeds[:, 0], seeds[:, 1]]),
                 np.column_stack([seeds[:, 0], -seeds[:, 1]]),
                 np.column_stack([seeds[:, 0], 2.0 - seeds[:, 1]])]
    vor = Voronoi(np.vstack(reflected))
    raw = vor.vertices.copy()
    # snap round-off at the box boundary
    for d in range(2):
        for target in (0.0, 1.0):
            close = np.abs(raw[:, d] - target) < 1e-9
            raw[close, d] = target

    # merge coincident Voronoi vertices (near-cocircular seeds)
    key = np.round(raw / merge_tol).astype(np.int64)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()

    loops = []
    for i in range(n):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or not region:
            raise GenerationFailed(f"Voronoi cell {i} is unbounded")
        # cells are convex: order by angle about the vertex mean
        cv = raw[region]
        ang = np.arctan2(cv[:, 1] - cv[:, 1].mean(), cv[:, 0] - cv[:, 0].mean())
        region = [region[j] for j in np.argsort(ang)]
        loop = []
        for v in region:
            m = int(inverse[v])
            if not loop or loop[-1] != m:
                loop.append(m)
        while len(loop) > 1 and loop[0] == loop[-1]:
            loop.pop()
        pts = raw[first[loop]]
        if signed_area(pts) < 0:
            loop = loop[::-1]
        loops.append(loop)

    used = sorted({v for loop in loops for v in loop})
    remap = {v: j for j, v in enumerate(used)}
    verts = raw[first[used]]
    loops = [[remap[v] for v in loop] for loop in loops]
    return verts, loops


def _cell_centroids(verts, loops) -> np.ndarray:
    out = np.empty((len(loops), 2))
    for i, loop in enumerate(loops):
        p = verts[loop]
        x, y = p[:, 0], p[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cr = x * yn - xn * y
        a = 0.5 * cr.sum()
        out[i] = [((x + xn) * cr).sum() / (6 * a), ((y + yn) * cr).sum() / (6 * a)]
    return out


def gen_voronoi(n_seeds: int, seed: int = 0, lloyd_iterations: int = 3) -> PolyMesh:
    """Voronoi mesh of the unit square from Lloyd-relaxed random seeds."""
    if n_seeds < 1:
        raise ValueError("need at least one seed")
    rng = np.random.default_rng(seed)
    seeds = rng.uniform(0.0, 1.0, size=(n_seeds, 2))
    verts, loops = _bounded_voronoi(seeds)
    for _ in range(lloyd_iterations):
        seeds = _cell_centroids(verts, loops)
        verts, loops = _bounded_voronoi(seeds)
    return _checked(verts, loops)


def gen_hexagonal(n: int) -> PolyMesh:
    """Hexagon-dominated mesh of the unit square (Voronoi cells of a staggered lattice)."""
    if n < 1:
        raise ValueError("n must be positive")
    h = 1.0 / n
    rows = max(1, int(round(1.0 / (h * np.sqrt(3) / 2))))
    dy = 1.0 / rows
    pts = []
    for r in range(rows):
        shift = 0.25 * h if r % 2 else -0.25 * h
        for c in range(n):
            pts.append(((c + 0.5) * h + shift, (r + 0.5) * dy))
    return _checked(*_bounded_voronoi(np.array(pts)))


GENERATORS = {
    "squares": lambda n, seed=0: gen_squares(n),
    "lshape": lambda n, seed=0: gen_lshape(n),
    "voronoi": lambda n, seed=0: gen_voronoi(n * n, seed),
    "random-quads": lambda n, seed=0: gen_random_quads(n, 0.3, seed),
    "hexagonal": lambda n, seed=0: gen_hexagonal(n),
}
