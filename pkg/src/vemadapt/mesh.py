"""Polygonal mesh topology, planar faces, refinement and bulk marking."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyMesh, InvalidPolygon, NonConformingMesh
from .geometry import COLLINEAR_TOL, ElementGeometry, collinear, element_geometry, is_simple

BOUNDARY = -1


class HangingPolicy(enum.Enum):
    UNLIMITED = "unlimited"
    ONE_PER_FACE = "one-per-face"

    @classmethod
    def parse(cls, value) -> "HangingPolicy":
        if isinstance(value, cls):
            return value
        aliases = {"unlimited": cls.UNLIMITED, "one-per-face": cls.ONE_PER_FACE,
                   "maxonehangingperface": cls.ONE_PER_FACE, "limited": cls.ONE_PER_FACE}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown hanging-node policy {value!r}") from None


@dataclass(frozen=True)
class PlanarFace:
    element: int
    interfaces: tuple
    interior_vertices: tuple
    # loop positions of the face's first and last vertex
    start: int
    stop: int


class PolyMesh:
    """Conforming polygonal mesh (hanging nodes are ordinary vertices).

    Interface ``s`` joins ``iface_vertices[s] = (a, b)`` oriented as seen from
    its left element ``iface_left[s]``; ``iface_right[s]`` is ``BOUNDARY`` on
    the domain boundary.
    """

    def __init__(self, vertices, elements, generation: int = 0, validate: bool = True):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.elements = [np.asarray(loop, dtype=np.int64) for loop in elements]
        self.generation = generation
        self._geoms: list | None = None
        self._build_topology()
        if validate:
            self.validate()

    # -- construction -----------------------------------------------------
    def _build_topology(self):
        nv = len(self.vertices)
        table: dict = {}
        iv, left, right = [], [], []
        self.elem_ifaces = []
        self.elem_signs = []
        for e, loop in enumerate(self.elements):
            if len(loop) < 3:
                raise InvalidPolygon(f"element {e} has fewer than three vertices")
            if loop.min() < 0 or loop.max() >= nv:
                raise NonConformingMesh(f"element {e} references a missing vertex")
            if len(set(loop.tolist())) != len(loop):
                raise InvalidPolygon(f"element {e} repeats a vertex")
            ids = np.empty(len(loop), dtype=np.int64)
            signs = np.empty(len(loop), dtype=np.int64)
            for i in range(len(loop)):
                a, b = int(loop[i]), int(loop[(i + 1) % len(loop)])
                key = (a, b) if a < b else (b, a)
                s = table.get(key)
                if s is None:
                    s = len(iv)
                    table[key] = s
                    iv.append((a, b))
                    left.append(e)
                    right.append(BOUNDARY)
                    signs[i] = 1
                else:
                    if right[s] != BOUNDARY or iv[s] != (b, a):
                        raise NonConformingMesh(
                            f"edge ({a}, {b}) of element {e} has no unique oppositely oriented mate")
                    right[s] = e
                    signs[i] = -1
                ids[i] = s
            self.elem_ifaces.append(ids)
            self.elem_signs.append(signs)
        self.iface_vertices = np.array(iv, dtype=np.int64).reshape(-1, 2)
        self.iface_left = np.array(left, dtype=np.int64)
        self.iface_right = np.array(right, dtype=np.int64)
        self._iface_index = table

    def validate(self, check_simple: bool = True):
        used = np.zeros(len(self.vertices), dtype=bool)
        for loop in self.elements:
            used[loop] = True
        if not used.all():
            raise NonConformingMesh("mesh has unused vertices")
        total = 0.0
        for e in range(self.n_elements):
            pts = self.vertices[self.elements[e]]
            g = self.geometry(e)
            if check_simple and not is_simple(pts):
                raise InvalidPolygon(f"element {e} is not simple")
            total += g.area
        dom = self.domain_area()
        if abs(total - dom) > 1e-10 * max(abs(dom), 1.0):
            raise NonConformingMesh(f"element areas sum to {total}, boundary encloses {dom}")

    # -- queries ------------------------------------------------------------
    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_interfaces(self) -> int:
        return len(self.iface_vertices)

    @property
    def boundary_interfaces(self) -> np.ndarray:
        return np.flatnonzero(self.iface_right == BOUNDARY)

    @property
    def interior_interfaces(self) -> np.ndarray:
        return np.flatnonzero(self.iface_right != BOUNDARY)

    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.iface_vertices[self.boundary_interfaces].ravel())

    def interface_id(self, a: int, b: int) -> int:
        return self._iface_index[(a, b) if a < b else (b, a)]

    def geometry(self, e: int) -> ElementGeometry:
        if self._geoms is None:
            self._geoms = [None] * self.n_elements
        g = self._geoms[e]
        if g is None:
            g = element_geometry(self.vertices[self.elements[e]])
            self._geoms[e] = g
        return g

    def areas(self) -> np.ndarray:
        return np.array([self.geometry(e).area for e in range(self.n_elements)])

    def domain_area(self) -> float:
        b = self.iface_vertices[self.boundary_interfaces]
        p, q = self.vertices[b[:, 0]], self.vertices[b[:, 1]]
        return 0.5 * float(np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]))

    def neighbour(self, s: int, e: int) -> int:
        return int(self.iface_right[s] if self.iface_left[s] == e else self.iface_left[s])

    def bounding_box(self):
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def __repr__(self):
        return (f"PolyMesh(vertices={self.n_vertices}, elements={self.n_elements}, "
                f"interfaces={self.n_interfaces}, generation={self.generation})")


def build_mesh(vertices, element_loops, generation: int = 0) -> PolyMesh:
    return PolyMesh(vertices, element_loops, generation=generation)


def _corner_flags(pts: np.ndarray, tol: float) -> np.ndarray:
    n = len(pts)
    return np.array([not collinear(pts[i - 1], pts[i], pts[(i + 1) % n], tol) for i in range(n)])


def planar_faces(mesh: PolyMesh, element_id: int, tol: float = COLLINEAR_TOL) -> list:
    """Partition an element boundary into maximal collinear runs."""
    loop = mesh.elements[element_id]
    ifaces = mesh.elem_ifaces[element_id]
    return _faces_of_loop(mesh.vertices[loop], tol, element_id, loop, ifaces)


def _faces_of_loop(pts, tol, element_id=-1, loop=None, ifaces=None) -> list:
    n = len(pts)
    corners = np.flatnonzero(_corner_flags(pts, tol))
    if len(corners) < 3:
        raise InvalidPolygon(f"element {element_id} has fewer than three corners")
    faces = []
    for j, c in enumerate(corners):
        nxt = corners[(j + 1) % len(corners)]
        length = (nxt - c) % n
        positions = [(c + t) % n for t in range(length + 1)]
        interior = tuple(int(loop[p]) if loop is not None else int(p) for p in positions[1:-1])
        edges = tuple(int(ifaces[p]) if ifaces is not None else int(p) for p in positions[:-1])
        faces.append(PlanarFace(element_id, edges, interior, int(c), int(nxt)))
    return faces


def _one_per_face_closure(mesh: PolyMesh, marks: set, tol: float) -> set:
    marks = set(marks)
    faces_cache: dict = {}

    def faces(e):
        f = faces_cache.get(e)
        if f is None:
            f = planar_faces(mesh, e, tol)
            faces_cache[e] = f
        return f

    changed = True
    while changed:
        changed = False
        split = set()
        for e in marks:
            for f in faces(e):
                if not f.interior_vertices:
                    split.add(f.interfaces[0])
        candidates = set()
        for s in split:
            for nb in (mesh.iface_left[s], mesh.iface_right[s]):
                if nb != BOUNDARY and nb not in marks:
                    candidates.add(int(nb))
        for nb in sorted(candidates):
            for f in faces(nb):
                added = sum(1 for s in f.interfaces if s in split)
                if added and len(f.interior_vertices) + added > 1:
                    marks.add(nb)
                    changed = True
                    break
    return marks


def refine(mesh: PolyMesh, marks, policy=HangingPolicy.UNLIMITED, tol: float = COLLINEAR_TOL,
           return_parents: bool = False):
    """Split each marked element by joining its face split points to its barycentre.

    A planar face carrying hanging nodes is split at those nodes; any other
    face is split at its midpoint, which becomes a hanging node of an
    unrefined neighbour.
    """
    policy = HangingPolicy.parse(policy)
    marks = {int(m) for m in marks}
    for m in marks:
        if not 0 <= m < mesh.n_elements:
            raise ValueError(f"marked element {m} does not exist")
    if policy is HangingPolicy.ONE_PER_FACE:
        marks = _one_per_face_closure(mesh, marks, tol)

    verts = [p for p in mesh.vertices]
    midpoint_of: dict = {}
    for e in sorted(marks):
        for f in planar_faces(mesh, e, tol):
            if not f.interior_vertices:
                s = f.interfaces[0]
                if s not in midpoint_of:
                    a, b = mesh.iface_vertices[s]
                    midpoint_of[s] = len(verts)
                    verts.append(0.5 * (mesh.vertices[a] + mesh.vertices[b]))

    new_loops = []
    parents = []
    for e in range(mesh.n_elements):
        loop = mesh.elements[e]
        ifaces = mesh.elem_ifaces[e]
        expanded = []
        for i, v in enumerate(loop):
            expanded.append(int(v))
            m = midpoint_of.get(int(ifaces[i]))
            if m is not None:
                expanded.append(m)
        if e not in marks:
            new_loops.append(expanded)
            parents.append(e)
            continue
        pts = np.array([verts[v] for v in expanded])
        faces = _faces_of_loop(pts, tol, e)
        splits = sorted(p for f in faces for p in f.interior_vertices)
        geom = element_geometry(pts)
        b = len(verts)
        verts.append(geom.barycentre.copy())
        n = len(expanded)
        for j, s0 in enumerate(splits):
            s1 = splits[(j + 1) % len(splits)]
            run = [expanded[(s0 + t) % n] for t in range(((s1 - s0) % n) + 1)]
            new_loops.append([b] + run)
            parents.append(e)

    out = PolyMesh(np.array(verts), new_loops, generation=mesh.generation + 1, validate=False)
    for e in range(out.n_elements):
        out.geometry(e)  # raises NonStarShaped for degenerate children
    if return_parents:
        return out, np.array(parents)
    return out


def dorfler_mark(indicators, theta: float) -> set:
    """Smallest greedy set whose summed indicators reach ``theta**2`` of the total.

    ``indicators`` are per-element squared error contributions.
    """
    ind = np.asarray(indicators, dtype=float)
    if ind.size == 0:
        raise EmptyMesh("cannot mark an empty mesh")
    if not 0.0 < theta <= 1.0:
        raise ValueError("theta must lie in (0, 1]")
    if np.any(ind < 0) or not np.all(np.isfinite(ind)):
        raise ValueError("indicators must be finite and non-negative")
    total = float(ind.sum())
    if total == 0.0:
        return set()
    order = np.lexsort((np.arange(ind.size), -ind))
    csum = np.cumsum(ind[order])
    target = theta * theta * total
    n = int(np.searchsorted(csum, target * (1.0 - 1e-13), side="left")) + 1
    return {int(i) for i in order[:min(n, ind.size)]}


# -- mesh file format --------------------------------------------------------

def write_mesh(mesh: PolyMesh, path) -> None:
    lines = [f"{mesh.n_vertices} {mesh.n_elements}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [" ".join([str(len(loop))] + [str(int(v)) for v in loop]) for loop in mesh.elements]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> PolyMesh:
    tokens = Path(path).read_text().split("\n")
    rows = [ln.split() for ln in tokens if ln.strip()]
    nv, ne = int(rows[0][0]), int(rows[0][1])
    verts = np.array([[float(r[0]), float(r[1])] for r in rows[1:1 + nv]])
    loops = []
    for r in rows[1 + nv:1 + nv + ne]:
        m = int(r[0])
        if len(r) != m + 1:
            raise ValueError(f"element line declares {m} vertices but lists {len(r) - 1}")
        loops.append([int(t) for t in r[1:]])
    return PolyMesh(verts, loops)
