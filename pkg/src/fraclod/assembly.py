"""Sparse P1 operators of the y^a-weighted extension problem."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import StructuralError
from .mesh import CylinderMesh, Patch
from .quadrature import interval_rule, simplex_bary_rule


def _scatter(mesh: CylinderMesh, local: np.ndarray, elements=None) -> sp.csr_matrix:
    simp = mesh.simplices if elements is None else mesh.simplices[elements]
    nv = simp.shape[1]
    rows = np.repeat(simp, nv, axis=1).ravel()
    cols = np.tile(simp, (1, nv)).ravel()
    n = mesh.n_vertices
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def element_stiffness(mesh: CylinderMesh, a: float, coeff=None) -> np.ndarray:
    """Local matrices W0_e * grad(b_i)^T diag(A_e, .., A_e, 1) grad(b_j)."""
    W0, _ = mesh.weighted_moments(a)
    G = mesh.gradients
    gx, gy = G[:, :, :-1], G[:, :, -1]
    kx = np.einsum("eik,ejk->eij", gx, gx)
    if coeff is not None:
        kx = kx * np.asarray(coeff)[:, None, None]
    return W0[:, None, None] * (kx + gy[:, :, None] * gy[:, None, :])


def dirichlet_identity(K: sp.spmatrix, dirichlet: np.ndarray) -> sp.csr_matrix:
    """Replace rows and columns of the given nodes by the identity."""
    n = K.shape[0]
    free = np.ones(n)
    free[dirichlet] = 0.0
    D = sp.diags(free)
    return (D @ K @ D + sp.diags(1.0 - free)).tocsr()


def assemble_weighted_stiffness(mesh: CylinderMesh, field=None, a: float = 0.0,
                                apply_dirichlet: bool = True) -> sp.csr_matrix:
    """K_ij = int B grad(l_i) . grad(l_j) y^a over the cylinder.

    ``field`` is a CoefficientField, an array of per-element values, or None
    for A = 1.
    """
    coeff = None
    if field is not None:
        coeff = field if isinstance(field, np.ndarray) else field.on_elements(mesh)
    K = _scatter(mesh, element_stiffness(mesh, a, coeff))
    if apply_dirichlet:
        K = dirichlet_identity(K, mesh.classification.dirichlet_nodes)
    return K


def energy_matrix(mesh: CylinderMesh, a: float) -> sp.csr_matrix:
    """Plain-gradient weighted stiffness (A = 1, no Dirichlet replacement), cached."""
    key = ("energy", float(a))
    if key not in mesh._cache:
        mesh._cache[key] = assemble_weighted_stiffness(mesh, None, a, apply_dirichlet=False)
    return mesh._cache[key]


def assemble_weighted_mass(mesh: CylinderMesh, a: float, elements=None) -> sp.csr_matrix:
    """M_ij = int l_i l_j y^a over all elements or the given subset."""
    _, M2 = mesh.weighted_moments(a)
    local = M2 if elements is None else M2[elements]
    return _scatter(mesh, local, elements)


def assemble_weighted_mass_local(mesh: CylinderMesh, patch: Patch, a: float,
                                 exclude_dirichlet: bool = False):
    """Dense Gram matrix of the basis functions living on a patch.

    Returns (node ids, M) with M_ij = int_patch l_i l_j y^a.
    """
    elems = np.asarray(patch.elements)
    if elems.size == 0:
        raise StructuralError("empty patch")
    nodes = np.unique(mesh.simplices[elems])
    if exclude_dirichlet:
        nodes = np.setdiff1d(nodes, mesh.classification.dirichlet_nodes)
    M = assemble_weighted_mass(mesh, a, elems)[nodes][:, nodes].toarray()
    return nodes, M


def trace_quadrature(mesh: CylinderMesh, degree: int = 6):
    """Points (nf, nq, d) and weights (nf, nq) on the y = 0 faces, plus face barycentrics."""
    _, faces = mesh.trace_faces
    if mesh.d == 1:
        t, w = interval_rule(degree)
        bary = np.stack([1.0 - t, t], axis=1)
    else:
        bary, w = simplex_bary_rule(2, degree)
    coords = mesh.vertices[faces][:, :, : mesh.d]
    pts = np.einsum("qk,fkd->fqd", bary, coords)
    weights = mesh.trace_face_measures[:, None] * w[None, :]
    return pts, weights, bary


def assemble_trace_load(mesh: CylinderMesh, f, order, degree: int = 6) -> np.ndarray:
    """load_i = c_s int_Omega f tr(l_i) dx; zero at nodes above y = 0 and Dirichlet nodes.

    ``f`` maps points of shape (n, d) to values of shape (n,).
    """
    _, faces = mesh.trace_faces
    pts, weights, bary = trace_quadrature(mesh, degree)
    nf, nq, d = pts.shape
    fv = np.asarray(f(pts.reshape(-1, d)), dtype=float).reshape(nf, nq)
    local = order.c_s * np.einsum("fq,qk->fk", fv * weights, bary)
    load = np.bincount(faces.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)
    load[mesh.classification.dirichlet_nodes] = 0.0
    return load


def assemble_trace_mass(mesh: CylinderMesh) -> sp.csr_matrix:
    """Unweighted mass matrix of the traces on y = 0."""
    _, faces = mesh.trace_faces
    k = mesh.d + 1
    local = (np.ones((k, k)) + np.eye(k)) / (k * (k + 1))
    vals = mesh.trace_face_measures[:, None, None] * local[None]
    rows = np.repeat(faces, k, axis=1).ravel()
    cols = np.tile(faces, (1, k)).ravel()
    n = mesh.n_vertices
    return sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(n, n))


def weighted_energy_norm(mesh: CylinderMesh, u, a: float) -> float:
    """||grad u||_{L2(C_T, y^a)} with the plain gradient."""
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.n_vertices,):
        raise StructuralError("function does not live on this mesh")
    val = float(u @ (energy_matrix(mesh, a) @ u))
    return float(np.sqrt(max(val, 0.0)))


def write_coo(path, matrix: sp.spmatrix) -> None:
    """Coordinate text dump, one "row col value" per line."""
    coo = sp.coo_matrix(matrix)
    with open(path, "w") as fh:
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {float(v)!r}\n")
