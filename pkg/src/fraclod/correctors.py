"""Localized fine-scale correctors and the multiscale basis.

For a coarse dof node v and layer k the corrector problem lives on the fine
nodes strictly inside the patch omega_{v,k} (plus the part of y = 0 inside it)
and is constrained to the kernel of the quasi-interpolation rows. Correctors
of all coarse basis functions are obtained column-wise from the same patch
factorization.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import assemble_weighted_stiffness, energy_matrix
from .errors import DomainError, SolverError, StructuralError
from .interpolation import ConstraintSet, build_constraints
from .mesh import CylinderMesh, check_nested, locate_parents, node_star, patch, prolongation
from .quadrature import join_rule

log = logging.getLogger(__name__)

DENOMINATOR_GUARD = 1e-14
# relative eigenvalue cutoff for redundant constraints in the Schur complement
RANK_TOL = 1e-10


def locate_points(mesh: CylinderMesh, points) -> np.ndarray:
    """Element id containing each point (structured cylinder meshes only)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    d = mesh.d
    ns = mesh.n_elements // (mesh.n_x**d * mesh.n_y)
    h = 1.0 / mesh.n_x
    dy = mesh.T / mesh.n_y
    idx = [np.clip(np.floor(pts[:, i] / h).astype(int), 0, mesh.n_x - 1) for i in range(d)]
    iy = np.clip(np.floor(pts[:, -1] / dy).astype(int), 0, mesh.n_y - 1)
    cell = idx[0]
    stride = mesh.n_x
    for i in range(1, d):
        cell = cell + stride * idx[i]
        stride *= mesh.n_x
    cell = cell + stride * iy
    cand = cell[:, None] * ns + np.arange(ns)[None, :]
    bary = mesh.barycentric(cand.ravel(), np.repeat(pts, ns, axis=0)).reshape(len(pts), ns, -1)
    best = np.argmax(bary.min(axis=2), axis=1)
    return cand[np.arange(len(pts)), best]


def pou_weight(mesh: CylinderMesh, v: int, points) -> np.ndarray:
    """lambda_v / (sum of dof hats) at the points; 0 where the sum is below the guard."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    elems = locate_points(mesh, pts)
    bary = mesh.barycentric(elems, pts)
    simp = mesh.simplices[elems]
    dof = np.ones(mesh.n_vertices, dtype=bool)
    dof[mesh.classification.dirichlet_nodes] = False
    denom = np.sum(bary * dof[simp], axis=1)
    num = np.sum(bary * (simp == v), axis=1) * dof[v]
    out = np.zeros(len(pts))
    ok = denom > DENOMINATOR_GUARD
    out[ok] = num[ok] / denom[ok]
    return out


@dataclass(eq=False)
class CorrectorSystem:
    """Everything shared by the patch problems of one (coarse, fine, A, s, mode)."""

    coarse: CylinderMesh
    fine: CylinderMesh
    a: float
    coeff: np.ndarray
    constraints: ConstraintSet
    K: sp.csr_matrix = field(init=False)
    P: sp.csr_matrix = field(init=False)

    def __post_init__(self):
        self.K = assemble_weighted_stiffness(self.fine, self.coeff, self.a, apply_dirichlet=False)
        self.P = prolongation(self.coarse, self.fine)
        self.C = self.constraints.normalized.tocsc()
        self.parent = self.fine.parent if self.fine.parent is not None else locate_parents(self.coarse, self.fine)
        order = np.argsort(self.parent, kind="stable")
        ptr = np.concatenate([[0], np.cumsum(np.bincount(self.parent, minlength=self.coarse.n_elements))])
        self._order, self._ptr = order, ptr
        self._dof = np.ones(self.coarse.n_vertices, dtype=bool)
        self._dof[self.coarse.classification.dirichlet_nodes] = False
        self._fine_dirichlet = np.zeros(self.fine.n_vertices, dtype=bool)
        self._fine_dirichlet[self.fine.classification.dirichlet_nodes] = True
        self._pou_moments()
        self._flux()

    def _pou_moments(self):
        """S[e, j] = int_e lambda_hat_{c_j} y^a over each fine element e."""
        fine, coarse = self.fine, self.coarse
        nv = fine.simplices.shape[1]
        par = self.parent
        _, M2 = fine.weighted_moments(self.a)
        M1 = M2.sum(axis=2)
        pts = fine.vertices[fine.simplices].reshape(-1, fine.vertices.shape[1])
        bary = coarse.barycentric(np.repeat(par, nv), pts).reshape(len(par), nv, nv)
        dofmask = self._dof[coarse.simplices[par]]
        S = np.einsum("elj,el->ej", bary, M1) * dofmask
        partial = ~np.all(dofmask, axis=1) & np.any(dofmask, axis=1)
        if np.any(partial):
            S[partial] = self._pou_quadrature(np.flatnonzero(partial), dofmask)
        self.S = S

    def _pou_quadrature(self, elems, dofmask):
        fine, coarse = self.fine, self.coarse
        m_b, y_b, dy = fine.levels
        out = np.empty((len(elems), fine.simplices.shape[1]))
        for mb in np.unique(m_b[elems]):
            for on_plane in (True, False):
                sel = (m_b[elems] == mb) & ((y_b[elems] == 0.0) == on_plane)
                if not np.any(sel):
                    continue
                e = elems[sel]
                bq, w = join_rule(int(mb), fine.simplices.shape[1] - int(mb), self.a,
                                  y_b[e], dy[e], degree=6)
                verts = fine.vertices[fine.simplices[e]]
                pts = np.einsum("qk,ekx->eqx", bq, verts)
                nq = bq.shape[0]
                par = np.repeat(self.parent[e], nq)
                lam = coarse.barycentric(par, pts.reshape(-1, pts.shape[-1])).reshape(len(e), nq, -1)
                lam = lam * dofmask[e][:, None, :]
                denom = lam.sum(axis=2, keepdims=True)
                hat = np.where(denom > DENOMINATOR_GUARD, lam / np.maximum(denom, DENOMINATOR_GUARD), 0.0)
                out[sel] = np.einsum("eq,eqj->ej", w, hat) * fine.volumes[e][:, None]
        return out

    def _flux(self):
        """D[e, j, l] = B_e grad(lambda_{c_j}) . grad(phi_l) on each fine element."""
        gc = self.coarse.gradients[self.parent]
        gf = self.fine.gradients
        bx = np.repeat(self.coeff[:, None], gf.shape[2], axis=1)
        bx[:, -1] = 1.0
        self.D = np.einsum("ejk,elk->ejl", gc * bx[:, None, :], gf)

    def fine_elements(self, coarse_elems) -> np.ndarray:
        return np.concatenate([self._order[self._ptr[c]: self._ptr[c + 1]] for c in coarse_elems])

    def rhs(self, v: int) -> sp.csc_matrix:
        """Right sides r_w(z) for every coarse basis w, shape (n_fine, n_coarse)."""
        star = node_star(self.coarse, v)
        e = self.fine_elements(star)
        csimp = self.coarse.simplices[self.parent[e]]
        jv = np.argmax(csimp == v, axis=1)
        weight = self.S[e, jv]
        vals = weight[:, None, None] * self.D[e]
        rows = np.broadcast_to(self.fine.simplices[e][:, None, :], vals.shape)
        cols = np.broadcast_to(csimp[:, :, None], vals.shape)
        keep = self._dof[cols]
        R = sp.csc_matrix((vals[keep], (rows[keep], cols[keep])),
                          shape=(self.fine.n_vertices, self.coarse.n_vertices))
        return R

    def free_nodes(self, coarse_elems) -> np.ndarray:
        """Fine nodes whose incident elements all lie in the patch, minus Dirichlet nodes."""
        e = self.fine_elements(coarse_elems)
        mask = np.zeros(self.fine.n_elements, dtype=np.int32)
        mask[e] = 1
        inc = self.fine.incidence
        inside = inc.T @ mask
        total = np.asarray(inc.sum(axis=0)).ravel()
        free = (inside == total) & ~self._fine_dirichlet
        return np.flatnonzero(free)


def _constrained_solve(K: sp.csr_matrix, C: sp.csc_matrix, R: np.ndarray):
    """Minimizer of 1/2 q'Kq - q'R subject to Cq = 0 via the Schur complement.

    Redundant constraint rows are handled by a pseudo-inverse of the Schur
    complement.
    """
    try:
        lu = spla.splu(K.tocsc())
    except RuntimeError as exc:
        raise SolverError(f"patch stiffness is singular: {exc}") from exc
    Y = lu.solve(R)
    if C.shape[0] == 0:
        return Y
    X = lu.solve(C.T.toarray())
    S = C @ X
    S = 0.5 * (S + S.T)
    w, V = la.eigh(S)
    cut = RANK_TOL * max(w.max(), 0.0)
    good = w > cut
    if not np.any(good):
        return Y
    Vg = V[:, good]
    mu = Vg @ ((Vg.T @ (C @ Y)) / w[good][:, None])
    return Y - X @ mu


@dataclass
class CorrectorBasis:
    """Q[:, w] = Q_k(lambda_w) on the fine mesh; columns of Dirichlet nodes are zero."""

    layer: int
    Q: sp.csc_matrix
    P: sp.csr_matrix
    dof_nodes: np.ndarray
    diagnostics: list

    @property
    def multiscale_basis(self) -> sp.csc_matrix:
        """Fine representation of lambda_w - Q_k(lambda_w) for every dof node w."""
        return (self.P - self.Q).tocsc()[:, self.dof_nodes]


def solve_corrector(system: CorrectorSystem, v: int, k: int, u_H=None) -> np.ndarray:
    """Q_{v,k} applied to u_H, or to every coarse hat (matrix) when u_H is None."""
    coarse = system.coarse
    if not system._dof[v]:
        raise DomainError(f"node {v} is not a coarse dof node")
    elems = patch(coarse, v, k).elements
    R = system.rhs(v)
    if u_H is not None:
        R = sp.csc_matrix(R @ np.asarray(u_H, dtype=float)[:, None])
    block, _ = _solve_patch(system, elems, R, label=f"node {v}, layer {k}")
    return block.toarray() if u_H is None else block.toarray()[:, 0]


def _solve_patch(system: CorrectorSystem, elems, R: sp.csc_matrix, label: str):
    """Patch solve for the nonzero columns of R; returns (sparse Q block, diagnostics)."""
    free = system.free_nodes(elems)
    shape = (system.fine.n_vertices, R.shape[1])
    cols = np.flatnonzero(np.diff(R.indptr))
    if free.size == 0 or cols.size == 0:
        return sp.csc_matrix(shape), (label, int(free.size), 0, 0.0)
    Cp = system.C[:, free].tocsr()
    active = np.flatnonzero(np.diff(Cp.indptr))
    Cp = Cp[active]
    Kp = system.K[free][:, free]
    Rp = R[free][:, cols].toarray()
    try:
        q = _constrained_solve(Kp, Cp, Rp)
    except SolverError as exc:
        raise SolverError(f"{label}: {exc}") from exc
    residual = float(np.abs(Cp @ q).max()) if Cp.shape[0] else 0.0
    q[np.abs(q) < 1e-15 * max(np.abs(q).max(), 1e-300)] = 0.0
    qc = sp.coo_matrix(q)
    block = sp.csc_matrix((qc.data, (free[qc.row], cols[qc.col])), shape=shape)
    diag = (label, int(free.size), int(Cp.shape[0]), residual)
    log.debug("corrector %s: %d dofs, %d constraints, residual %.2e", *diag)
    return block, diag


def _cache_key(coarse, fine, k, coeff, a, mode) -> str:
    h = hashlib.sha1()
    for item in (coarse.d, coarse.n_x, coarse.n_y, coarse.T, fine.n_x, fine.n_y, k, a, mode):
        h.update(repr(item).encode())
    h.update(np.ascontiguousarray(coeff).tobytes())
    return h.hexdigest()[:20]


def corrector_basis(k: int, coarse: CylinderMesh, fine: CylinderMesh, coeff, order,
                    boundary_mode: str = "local", constraints: ConstraintSet | None = None,
                    cache_dir=None) -> CorrectorBasis:
    """Q_k(lambda_w) = sum_v Q_{v,k}(lambda_w) for every coarse dof node w.

    ``coeff`` is a CoefficientField, per-fine-element values, or None (A = 1).
    Patches shared by several nodes are factorized once and their right sides
    summed.
    """
    if k < 0:
        raise DomainError("layer must be non-negative")
    check_nested(coarse, fine)
    if coeff is None:
        cvals = np.ones(fine.n_elements)
    elif isinstance(coeff, np.ndarray):
        cvals = np.asarray(coeff, dtype=float)
    else:
        cvals = coeff.on_elements(fine)
    if cvals.shape != (fine.n_elements,):
        raise StructuralError("coefficient does not match the fine mesh")
    a = order.a
    dof_nodes = coarse.classification.dof_nodes
    cache_file = None
    if cache_dir is not None:
        key = _cache_key(coarse, fine, k, cvals, a, boundary_mode)
        cache_file = Path(cache_dir) / f"correctors_{key}.npz"
        if cache_file.exists():
            Q = sp.load_npz(cache_file).tocsc()
            return CorrectorBasis(k, Q, prolongation(coarse, fine), dof_nodes, [("cache", str(cache_file))])

    if constraints is None:
        constraints = build_constraints(coarse, fine, a, boundary_mode)
    system = CorrectorSystem(coarse, fine, a, cvals, constraints)

    groups: dict[bytes, list] = {}
    for v in dof_nodes:
        elems = patch(coarse, v, k).elements
        groups.setdefault(elems.tobytes(), [elems, []])[1].append(int(v))

    n_f, n_c = fine.n_vertices, coarse.n_vertices
    Q = sp.csc_matrix((n_f, n_c))
    diagnostics = []
    for elems, nodes in groups.values():
        R = system.rhs(nodes[0])
        for v in nodes[1:]:
            R = R + system.rhs(v)
        block, diag = _solve_patch(system, elems, R.tocsc(), label=f"node {nodes[0]}, layer {k}")
        Q = Q + block
        diagnostics.append(diag)
    Q = Q.tocsc()
    Q.eliminate_zeros()
    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        sp.save_npz(cache_file, Q)
    return CorrectorBasis(k, Q, system.P, dof_nodes, diagnostics)


def full_layer(coarse: CylinderMesh) -> int:
    """A layer count for which every patch is the whole cylinder."""
    return coarse.n_x + coarse.n_y + 1


@dataclass(frozen=True)
class DecayRecord:
    node: int
    layers: np.ndarray
    energies: np.ndarray
    theta: float
    slope: float
    r_squared: float


def _loglinear_fit(k, e):
    A = np.vstack([k, np.ones_like(k)]).T
    y = np.log(e)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), r2


def global_corrector(system: CorrectorSystem, w: int, k: int) -> np.ndarray:
    """Q_k(lambda_w) summed over the nodes v whose star meets the support of lambda_w."""
    coarse = system.coarse
    near = np.unique(coarse.simplices[node_star(coarse, w)])
    near = near[system._dof[near]]
    e_w = np.zeros(coarse.n_vertices)
    e_w[w] = 1.0
    q = np.zeros(system.fine.n_vertices)
    for v in near:
        elems = patch(coarse, v, k).elements
        R = sp.csc_matrix(system.rhs(v) @ e_w[:, None])
        block, _ = _solve_patch(system, elems, R, label=f"node {v}, layer {k}")
        q += block.toarray()[:, 0]
    return q


def measure_decay(coarse: CylinderMesh, fine: CylinderMesh, v: int, k_max: int, order,
                  coeff=None, boundary_mode: str = "local", floor: float = 1e-12) -> DecayRecord:
    """Energies e_k = ||grad(Q_full - Q_k)(lambda_v)|| for k = 1..k_max and a fitted rate."""
    cvals = np.ones(fine.n_elements) if coeff is None else (
        coeff if isinstance(coeff, np.ndarray) else coeff.on_elements(fine))
    constraints = build_constraints(coarse, fine, order.a, boundary_mode)
    system = CorrectorSystem(coarse, fine, order.a, cvals, constraints)
    ref = global_corrector(system, v, full_layer(coarse))
    E = energy_matrix(fine, order.a)
    ks = np.arange(1, k_max + 1)
    energies = []
    for k in ks:
        diff = ref - global_corrector(system, v, int(k))
        energies.append(float(np.sqrt(max(diff @ (E @ diff), 0.0))))
    energies = np.array(energies)
    ref_norm = float(np.sqrt(max(ref @ (E @ ref), 0.0)))
    usable = energies > floor * max(ref_norm, 1.0)
    if usable.sum() >= 2:
        slope, r2 = _loglinear_fit(ks[usable].astype(float), energies[usable])
    else:
        slope, r2 = float("-inf"), 1.0
    return DecayRecord(node=int(v), layers=ks, energies=energies,
                       theta=float(np.exp(slope)), slope=slope, r_squared=r2)
