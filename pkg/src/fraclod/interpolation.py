"""Kernel functionals of the projective quasi-interpolation I_H.

Each coarse degree of freedom v contributes one linear functional of a fine
function u:

* interior node: the value at v of the local y^a-weighted L2 projection of u
  onto the coarse space restricted to the element star of v;
* trace node, local mode: the value at v of the unweighted L2 projection of
  tr(u) onto the coarse trace space on the star of v inside y = 0;
* trace node, global mode: (tr(u), l_v) over Omega, whose joint kernel equals
  that of the global L2 projection on Omega.

The fine-scale space is the common kernel of all rows; the operator itself is
only applied for diagnostics.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .assembly import assemble_trace_mass, assemble_weighted_mass
from .errors import DomainError, StructuralError
from .mesh import CylinderMesh, check_nested, locate_parents, node_star

BOUNDARY_MODES = ("local", "global")


@dataclass(frozen=True, eq=False)
class ConstraintSet:
    """Raw functional rows (one per coarse dof node) and their normalization."""

    rows: sp.csr_matrix
    nodes: np.ndarray
    is_trace: np.ndarray
    scale: np.ndarray
    boundary_mode: str
    coarse: CylinderMesh
    fine: CylinderMesh

    @property
    def normalized(self) -> sp.csr_matrix:
        """Rows scaled so that the largest entry of each has magnitude one."""
        return (sp.diags(1.0 / self.scale) @ self.rows).tocsr()


def _children(parent: np.ndarray, n_coarse: int):
    order = np.argsort(parent, kind="stable")
    ptr = np.concatenate([[0], np.cumsum(np.bincount(parent, minlength=n_coarse))])
    return order, ptr


def _gather(order, ptr, coarse_elems):
    return np.concatenate([order[ptr[c]: ptr[c + 1]] for c in coarse_elems])


class _FineCoupling:
    """Integrals of coarse hats against fine hats, grouped by coarse parent."""

    def __init__(self, coarse: CylinderMesh, fine: CylinderMesh, a: float):
        self.coarse, self.fine = coarse, fine
        parent = fine.parent if fine.parent is not None else locate_parents(coarse, fine)
        self.parent = parent
        self.order, self.ptr = _children(parent, coarse.n_elements)
        _, M2 = fine.weighted_moments(a)
        nv = fine.simplices.shape[1]
        pts = fine.vertices[fine.simplices].reshape(-1, fine.vertices.shape[1])
        bary = coarse.barycentric(np.repeat(parent, nv), pts).reshape(len(parent), nv, nv)
        # vol[e, j, l] = int_e lambda_{coarse j} phi_{fine l} y^a
        self.vol = np.einsum("elj,elm->ejm", bary, M2)

        face_elems, faces = fine.trace_faces
        k = fine.d + 1
        fpar = parent[face_elems]
        fpts = fine.vertices[faces].reshape(-1, fine.vertices.shape[1])
        fbary = coarse.barycentric(np.repeat(fpar, k), fpts).reshape(len(fpar), k, nv)
        local = (np.ones((k, k)) + np.eye(k)) / (k * (k + 1))
        mt = fine.trace_face_measures[:, None, None] * local[None]
        self.face_par = fpar
        self.faces = faces
        self.tr = np.einsum("flj,flm->fjm", fbary, mt)
        self.face_order, self.face_ptr = _children(fpar, coarse.n_elements)

    def volume_block(self, coarse_elems) -> sp.csr_matrix:
        e = _gather(self.order, self.ptr, coarse_elems)
        rows = np.repeat(self.coarse.simplices[self.parent[e]], self.fine.simplices.shape[1], axis=1)
        cols = np.tile(self.fine.simplices[e], (1, self.coarse.simplices.shape[1]))
        return sp.csr_matrix(
            (self.vol[e].ravel(), (rows.ravel(), cols.ravel())),
            shape=(self.coarse.n_vertices, self.fine.n_vertices),
        )

    def trace_block(self, coarse_elems=None) -> sp.csr_matrix:
        if coarse_elems is None:
            f = np.arange(len(self.face_par))
        else:
            f = _gather(self.face_order, self.face_ptr, coarse_elems)
        k = self.faces.shape[1]
        nvc = self.coarse.simplices.shape[1]
        rows = np.repeat(self.coarse.simplices[self.face_par[f]], k, axis=1)
        cols = np.tile(self.faces[f], (1, nvc))
        return sp.csr_matrix(
            (self.tr[f].ravel(), (rows.ravel(), cols.ravel())),
            shape=(self.coarse.n_vertices, self.fine.n_vertices),
        )


def build_constraints(coarse: CylinderMesh, fine: CylinderMesh, a: float,
                      boundary_mode: str = "local") -> ConstraintSet:
    """One kernel functional per coarse dof node (Dirichlet nodes carry none).

    The local projections use every coarse hat living on the star, Dirichlet
    nodes included, so that they reproduce linear functions up to the boundary.
    """
    if boundary_mode not in BOUNDARY_MODES:
        raise DomainError(f"boundary mode must be one of {BOUNDARY_MODES}")
    check_nested(coarse, fine)
    cls = coarse.classification
    coupling = _FineCoupling(coarse, fine, a)
    _, M2c = coarse.weighted_moments(a)
    face_elems_c, _ = coarse.trace_faces
    global_trace = coupling.trace_block() if boundary_mode == "global" else None

    nodes = cls.dof_nodes
    is_trace = np.isin(nodes, cls.trace_nodes)
    out = []
    for v, on_trace in zip(nodes, is_trace):
        if on_trace and boundary_mode == "global":
            out.append(global_trace[v])
            continue
        star = node_star(coarse, v)
        if on_trace:
            star = star[np.isin(star, face_elems_c)]
            G = coupling.trace_block(star)
            basis = np.unique(coarse.simplices[star][:, : coarse.d + 1])
            Mfull = assemble_trace_mass_subset(coarse, star)
            M = Mfull[basis][:, basis].toarray()
        else:
            G = coupling.volume_block(star)
            basis = np.unique(coarse.simplices[star])
            Mfull = _scatter_local(coarse, M2c[star], star)
            M = Mfull[basis][:, basis].toarray()
        e = (basis == v).astype(float)
        try:
            z = la.solve(M, e, assume_a="pos")
        except la.LinAlgError as exc:  # pragma: no cover - non-degenerate patches
            raise StructuralError(f"singular local mass matrix at coarse node {v}") from exc
        out.append(sp.csr_matrix(z[None, :]) @ G[basis])
    rows = sp.vstack(out).tocsr() if out else sp.csr_matrix((0, fine.n_vertices))
    rows.eliminate_zeros()
    scale = np.array([np.abs(rows[i].data).max() if rows[i].nnz else 1.0
                      for i in range(rows.shape[0])])
    return ConstraintSet(rows=rows, nodes=nodes, is_trace=is_trace, scale=scale,
                         boundary_mode=boundary_mode, coarse=coarse, fine=fine)


def _scatter_local(mesh: CylinderMesh, local: np.ndarray, elements) -> sp.csr_matrix:
    simp = mesh.simplices[elements]
    nv = simp.shape[1]
    rows = np.repeat(simp, nv, axis=1).ravel()
    cols = np.tile(simp, (1, nv)).ravel()
    n = mesh.n_vertices
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def assemble_trace_mass_subset(mesh: CylinderMesh, elements) -> sp.csr_matrix:
    """Trace mass restricted to the y = 0 faces of the given elements."""
    face_elems, faces = mesh.trace_faces
    sel = np.isin(face_elems, elements)
    k = mesh.d + 1
    local = (np.ones((k, k)) + np.eye(k)) / (k * (k + 1))
    vals = mesh.trace_face_measures[sel][:, None, None] * local[None]
    f = faces[sel]
    rows = np.repeat(f, k, axis=1).ravel()
    cols = np.tile(f, (1, k)).ravel()
    n = mesh.n_vertices
    return sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(n, n))


def apply_IH(constraints: ConstraintSet, u) -> np.ndarray:
    """Coarse nodal values of I_H u (zero at Dirichlet nodes)."""
    u = np.asarray(u, dtype=float)
    if u.shape != (constraints.fine.n_vertices,):
        raise StructuralError("function does not live on the fine mesh")
    coarse = constraints.coarse
    vals = constraints.rows @ u
    out = np.zeros(coarse.n_vertices)
    if constraints.boundary_mode == "local":
        out[constraints.nodes] = vals
        return out
    inner = ~constraints.is_trace
    out[constraints.nodes[inner]] = vals[inner]
    tnodes = constraints.nodes[constraints.is_trace]
    if len(tnodes):
        Mt = assemble_trace_mass(coarse)[tnodes][:, tnodes].toarray()
        out[tnodes] = la.solve(Mt, vals[constraints.is_trace], assume_a="pos")
    return out


def weighted_mass(mesh: CylinderMesh, a: float) -> sp.csr_matrix:
    key = ("mass", float(a))
    if key not in mesh._cache:
        mesh._cache[key] = assemble_weighted_mass(mesh, a)
    return mesh._cache[key]
