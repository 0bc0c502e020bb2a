"""Structured simplicial meshes of the truncated cylinder (0,1)^d x (0,T)."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, StructuralError

_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class NodeClassification:
    interior_nodes: np.ndarray
    trace_nodes: np.ndarray
    dirichlet_nodes: np.ndarray

    @cached_property
    def dof_nodes(self) -> np.ndarray:
        return np.union1d(self.interior_nodes, self.trace_nodes)


@dataclass(frozen=True, eq=False)
class Patch:
    center_node: int
    layer: int
    elements: np.ndarray
    boundary_trace_faces: np.ndarray


@dataclass(frozen=True, eq=False)
class CylinderMesh:
    """Conforming simplicial mesh; every simplex lists its vertices by increasing y.

    ``parent`` maps each element to the containing element of the mesh it was
    refined from (None for a mesh built directly).
    """

    d: int
    vertices: np.ndarray
    simplices: np.ndarray
    T: float
    n_x: int = 0
    n_y: int = 0
    parent: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def mesh_size(self) -> float:
        return 1.0 / self.n_x if self.n_x else float("nan")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.simplices)

    @cached_property
    def _affine(self):
        v = self.vertices[self.simplices]  # (ne, nv, dim)
        ne, nv, _ = v.shape
        A = np.ones((ne, nv, nv))
        A[:, 1:, :] = np.transpose(v, (0, 2, 1))
        inv = np.linalg.inv(A)
        return inv[:, :, 0], inv[:, :, 1:]

    @property
    def gradients(self) -> np.ndarray:
        """Constant gradients of the barycentric coordinates, shape (ne, nv, dim)."""
        return self._affine[1]

    def barycentric(self, elements, points) -> np.ndarray:
        """Barycentric coordinates of ``points[i]`` in element ``elements[i]``."""
        c, g = self._affine
        return c[elements] + np.einsum("eij,ej->ei", g[elements], points)

    @cached_property
    def volumes(self) -> np.ndarray:
        v = self.vertices[self.simplices]
        edges = v[:, 1:, :] - v[:, :1, :]
        fact = 2.0 if self.d == 1 else 6.0
        return np.abs(np.linalg.det(edges)) / fact

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.simplices].mean(axis=1)

    @cached_property
    def levels(self):
        """(bottom vertex count, bottom y, layer height) per element."""
        y = self.vertices[self.simplices][:, :, -1]
        y_b = y[:, 0]
        y_t = y[:, -1]
        m_b = np.sum(np.abs(y - y_b[:, None]) <= _TOL, axis=1)
        top_ok = np.abs(y - y_t[:, None]) <= _TOL
        bottom = np.arange(y.shape[1])[None, :] < m_b[:, None]
        if not np.all(bottom | top_ok):
            raise StructuralError("mesh elements must span exactly two y-levels")
        y_b = np.where(np.abs(y_b) <= _TOL, 0.0, y_b)
        return m_b, y_b, y_t - y_b

    def weighted_moments(self, a: float):
        """Cached (W0, M2): int y^a and int b_i b_j y^a per element."""
        from .quadrature import element_moments

        key = ("moments", float(a))
        if key not in self._cache:
            m_b, y_b, dy = self.levels
            self._cache[key] = element_moments(
                m_b, y_b, dy, self.volumes, float(a), self.d + 2
            )
        return self._cache[key]

    @cached_property
    def incidence(self) -> sp.csr_matrix:
        """Element-vertex incidence, shape (ne, nv_total)."""
        ne, nv = self.simplices.shape
        rows = np.repeat(np.arange(ne), nv)
        data = np.ones(ne * nv, dtype=np.int8)
        return sp.csr_matrix(
            (data, (rows, self.simplices.ravel())), shape=(ne, self.n_vertices)
        )

    @cached_property
    def classification(self) -> NodeClassification:
        return classify_nodes(self)

    @cached_property
    def trace_faces(self):
        """Faces on y = 0: (element ids, vertex index tuples)."""
        m_b, y_b, _ = self.levels
        sel = np.flatnonzero((y_b == 0.0) & (m_b == self.d + 1))
        return sel, self.simplices[sel, : self.d + 1]

    @cached_property
    def trace_face_measures(self) -> np.ndarray:
        _, faces = self.trace_faces
        v = self.vertices[faces][:, :, : self.d]
        if self.d == 1:
            return np.abs(v[:, 1, 0] - v[:, 0, 0])
        e = v[:, 1:, :] - v[:, :1, :]
        return 0.5 * np.abs(np.linalg.det(e))

    def write(self, path) -> None:
        """Plain-text dump: VERTICES n, coordinates, SIMPLICES m, index tuples."""
        with open(path, "w") as fh:
            fh.write(f"VERTICES {self.n_vertices}\n")
            for row in self.vertices:
                fh.write(" ".join(repr(float(c)) for c in row) + "\n")
            fh.write(f"SIMPLICES {self.n_elements}\n")
            for row in self.simplices:
                fh.write(" ".join(str(int(i)) for i in row) + "\n")


def _sort_by_height(vertices: np.ndarray, simplices: np.ndarray) -> np.ndarray:
    y = vertices[simplices][:, :, -1]
    order = np.argsort(y, axis=1, kind="stable")
    return np.take_along_axis(simplices, order, axis=1)


def _cell_simplices(d: int) -> list[list[tuple]]:
    """Local corner offsets of the simplices splitting one cell, diagonal 0 -> 1."""
    if d == 1:
        return [[(0, 0), (1, 0), (1, 1)], [(0, 0), (1, 1), (0, 1)]]
    out = []
    for perm in itertools.permutations(range(3)):
        corner = [0, 0, 0]
        path = [tuple(corner)]
        for ax in perm:
            corner[ax] = 1
            path.append(tuple(corner))
        out.append(path)
    return out


def build_cylinder_mesh(d: int, n_x: int, T: float, n_y: int) -> CylinderMesh:
    """Uniform mesh of (0,1)^d x (0,T): n_x cells per x-axis, n_y cells in y.

    d = 1 splits every rectangle into two triangles, d = 2 every box into six
    Kuhn tetrahedra; both use the same global diagonal so the meshes nest
    under uniform refinement.
    """
    if d not in (1, 2):
        raise DomainError("spatial dimension must be 1 or 2")
    if n_x < 1 or n_y < 1:
        raise DomainError("need at least one cell per direction")
    if not T > 0:
        raise DomainError("truncation height must be positive")
    xs = np.arange(n_x + 1) / n_x
    ys = np.arange(n_y + 1) * (T / n_y)
    ys[-1] = T
    counts = [n_x + 1] * d + [n_y + 1]
    grids = np.meshgrid(*([xs] * d + [ys]), indexing="ij")
    # vertex index: first x-axis fastest, y slowest
    vertices = np.stack([g.transpose().ravel() for g in grids], axis=1)
    strides = np.cumprod([1] + counts[:-1])
    cells = np.stack(
        np.meshgrid(*[np.arange(c - 1) for c in counts], indexing="ij"), axis=-1
    ).reshape(-1, d + 1)
    # order cells with first axis fastest as well
    cells = cells[np.lexsort(cells.T)]
    base = cells @ strides
    simplices = []
    for local in _cell_simplices(d):
        offs = np.array([np.dot(c, strides) for c in local])
        simplices.append(base[:, None] + offs[None, :])
    simplices = np.stack(simplices, axis=1).reshape(-1, d + 2)
    simplices = _sort_by_height(vertices, simplices)
    return CylinderMesh(d=d, vertices=vertices, simplices=simplices, T=float(T),
                        n_x=n_x, n_y=n_y)


def cylinder_mesh_for(d: int, H: float, T: float) -> CylinderMesh:
    """Mesh with spacing H in every direction; T/H must be an integer."""
    n_x = int(round(1.0 / H))
    n_y = int(round(T / H))
    if abs(n_x * H - 1.0) > 1e-9 or abs(n_y * H - T) > 1e-9:
        raise DomainError(f"H = {H} does not tile (0,1) x (0,{T})")
    return build_cylinder_mesh(d, n_x, T, n_y)


def _cells_per_simplex(d: int) -> int:
    return 2 if d == 1 else 6


def refine(mesh: CylinderMesh, factor: int) -> CylinderMesh:
    """Uniform refinement; the result records the parent element of each element."""
    if factor < 1:
        raise DomainError("refinement factor must be positive")
    fine = build_cylinder_mesh(mesh.d, mesh.n_x * factor, mesh.T, mesh.n_y * factor)
    parent = locate_parents(mesh, fine)
    return CylinderMesh(d=fine.d, vertices=fine.vertices, simplices=fine.simplices,
                        T=fine.T, n_x=fine.n_x, n_y=fine.n_y, parent=parent)


def locate_parents(coarse: CylinderMesh, fine: CylinderMesh) -> np.ndarray:
    """Coarse element containing each fine element (structured meshes only)."""
    check_nested(coarse, fine)
    d = coarse.d
    c = fine.centroids
    hx = 1.0 / coarse.n_x
    hy = coarse.T / coarse.n_y
    idx = [np.clip(np.floor(c[:, i] / hx).astype(int), 0, coarse.n_x - 1) for i in range(d)]
    idx.append(np.clip(np.floor(c[:, -1] / hy).astype(int), 0, coarse.n_y - 1))
    cell = idx[0].copy()
    stride = coarse.n_x
    for i in range(1, d):
        cell += idx[i] * stride
        stride *= coarse.n_x
    cell += idx[-1] * stride
    ns = _cells_per_simplex(d)
    cand = cell[:, None] * ns + np.arange(ns)[None, :]
    best = np.empty(len(c), dtype=int)
    score = np.full(len(c), -np.inf)
    for r in range(ns):
        b = coarse.barycentric(cand[:, r], c)
        m = b.min(axis=1)
        better = m > score
        best[better] = cand[better, r]
        score[better] = m[better]
    if np.any(score < -1e-10):
        raise StructuralError("fine mesh is not nested in the coarse mesh")
    return best


def check_nested(coarse: CylinderMesh, fine: CylinderMesh) -> int:
    """Return the refinement factor, raising StructuralError if the meshes do not nest."""
    if coarse.d != fine.d or abs(coarse.T - fine.T) > 1e-12:
        raise StructuralError("meshes cover different cylinders")
    if not coarse.n_x or fine.n_x % coarse.n_x:
        raise StructuralError("fine x-resolution is not a multiple of the coarse one")
    factor = fine.n_x // coarse.n_x
    if fine.n_y != factor * coarse.n_y:
        raise StructuralError("fine y-resolution does not match the refinement factor")
    return factor


def classify_nodes(mesh: CylinderMesh) -> NodeClassification:
    v = mesh.vertices
    x, y = v[:, : mesh.d], v[:, -1]
    on_lateral = np.any((x <= _TOL) | (x >= 1.0 - _TOL), axis=1)
    top = y >= mesh.T - _TOL
    bottom = y <= _TOL
    dirichlet = on_lateral | top
    trace = bottom & ~dirichlet
    interior = ~dirichlet & ~trace
    return NodeClassification(
        interior_nodes=np.flatnonzero(interior),
        trace_nodes=np.flatnonzero(trace),
        dirichlet_nodes=np.flatnonzero(dirichlet),
    )


def grow(mesh: CylinderMesh, elements: np.ndarray, layers: int = 1) -> np.ndarray:
    """Add ``layers`` rings of elements touching the current element set."""
    inc = mesh.incidence
    mask = np.zeros(mesh.n_elements, dtype=bool)
    mask[elements] = True
    for _ in range(layers):
        verts = (inc.T @ mask.astype(np.int8)) > 0
        mask = (inc @ verts.astype(np.int8)) > 0
    return np.flatnonzero(mask)


def node_star(mesh: CylinderMesh, v: int) -> np.ndarray:
    inc = mesh.incidence.tocsc()
    return np.sort(inc.indices[inc.indptr[v]: inc.indptr[v + 1]])


def patch(mesh: CylinderMesh, v: int, k: int) -> Patch:
    """k-layer element patch around node v."""
    if k < 0:
        raise DomainError("patch layer must be non-negative")
    if not 0 <= v < mesh.n_vertices:
        raise DomainError(f"node {v} is not a mesh node")
    elements = grow(mesh, node_star(mesh, v), k)
    face_elems, faces = mesh.trace_faces
    inside = np.isin(face_elems, elements)
    return Patch(center_node=int(v), layer=int(k), elements=elements,
                 boundary_trace_faces=faces[inside])


def prolongation(coarse: CylinderMesh, fine: CylinderMesh) -> sp.csr_matrix:
    """Fine nodal values of every coarse hat function, shape (n_fine, n_coarse)."""
    parent = fine.parent if fine.parent is not None else locate_parents(coarse, fine)
    nv = fine.simplices.shape[1]
    verts = fine.simplices.ravel()
    first = np.unique(verts, return_index=True)[1]
    elem = first // nv
    pts = fine.vertices[verts[first]]
    par = parent[elem]
    bary = coarse.barycentric(par, pts)
    bary[np.abs(bary) < 1e-13] = 0.0
    bary[np.abs(bary - 1.0) < 1e-13] = 1.0
    rows = np.repeat(verts[first], nv)
    cols = coarse.simplices[par].ravel()
    P = sp.csr_matrix((bary.ravel(), (rows, cols)), shape=(fine.n_vertices, coarse.n_vertices))
    P.eliminate_zeros()
    return P
