"""Fine reference solves, multiscale and coarse Galerkin solves, spectral oracle."""
from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (assemble_trace_load, assemble_weighted_stiffness, energy_matrix,
                       trace_quadrature)
from .correctors import CorrectorBasis, corrector_basis
from .errors import DomainError, SolverError, StructuralError
from .mesh import CylinderMesh, prolongation
from .special import extension_profile

FINE_RTOL = 1e-10
RESTARTS = 3

log = logging.getLogger(__name__)


def _coefficient_values(mesh: CylinderMesh, field) -> np.ndarray | None:
    if field is None or isinstance(field, np.ndarray):
        return field
    return field.on_elements(mesh)


def solve_fine(mesh: CylinderMesh, field, order, f, rtol: float = FINE_RTOL) -> np.ndarray:
    """Galerkin solution on the fine mesh by Jacobi-preconditioned CG."""
    K = assemble_weighted_stiffness(mesh, _coefficient_values(mesh, field), order.a)
    b = assemble_trace_load(mesh, f, order)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(mesh.n_vertices)
    M = sp.diags(1.0 / K.diagonal())
    u = np.zeros_like(b)
    res = 1.0
    # restarting from the true residual recovers from round-off stagnation at high contrast
    for _ in range(RESTARTS):
        u, _ = spla.cg(K, b, x0=u, rtol=rtol, atol=0.0, maxiter=5 * mesh.n_vertices, M=M)
        res = np.linalg.norm(b - K @ u) / bnorm
        if res <= rtol:
            return u
    log.info("CG stalled at relative residual %.2e; using a direct solve", res)
    try:
        u = spla.spsolve(K.tocsc(), b)
    except RuntimeError as exc:
        raise SolverError(f"fine solve failed: {exc}") from exc
    res = np.linalg.norm(b - K @ u) / bnorm
    if not np.isfinite(res) or res > rtol:
        raise SolverError(f"fine solve did not converge: relative residual {res:.3e}")
    return u


@dataclass
class MultiscaleSolution:
    coefficients: np.ndarray
    fine: np.ndarray
    basis: sp.csc_matrix


def galerkin_on_basis(mesh: CylinderMesh, field, order, f, basis: sp.spmatrix) -> MultiscaleSolution:
    """Galerkin solve in span of the given fine-grid basis columns."""
    K = assemble_weighted_stiffness(mesh, _coefficient_values(mesh, field), order.a,
                                    apply_dirichlet=False)
    b = assemble_trace_load(mesh, f, order)
    B = sp.csc_matrix(basis)
    A = (B.T @ (K @ B)).toarray()
    A = 0.5 * (A + A.T)
    rhs = B.T @ b
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", la.LinAlgWarning)
            c = la.solve(A, rhs, assume_a="pos")
    except (la.LinAlgError, la.LinAlgWarning) as exc:
        raise SolverError(f"coarse system is singular: {exc}") from exc
    return MultiscaleSolution(coefficients=c, fine=B @ c, basis=B)


def solve_multiscale(coarse: CylinderMesh, fine: CylinderMesh, k: int, field, order, f,
                     boundary_mode: str = "local", correctors: CorrectorBasis | None = None,
                     cache_dir=None) -> MultiscaleSolution:
    """LOD solution with basis lambda_w - Q_k(lambda_w); returns coefficients and fine representation."""
    if correctors is None:
        correctors = corrector_basis(k, coarse, fine, _coefficient_values(fine, field), order,
                                     boundary_mode, cache_dir=cache_dir)
    return galerkin_on_basis(fine, field, order, f, correctors.multiscale_basis)


def solve_coarse_galerkin(coarse: CylinderMesh, fine: CylinderMesh, field, order, f) -> MultiscaleSolution:
    """Standard P1 Galerkin on the coarse mesh (coefficient resolved on the fine mesh)."""
    P = prolongation(coarse, fine).tocsc()[:, coarse.classification.dof_nodes]
    return galerkin_on_basis(fine, field, order, f, P)


def energy_error(mesh: CylinderMesh, u1, u2, a: float) -> float:
    """||grad(u1 - u2)||_{L2(C_T, y^a)}."""
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    if u1.shape != (mesh.n_vertices,) or u2.shape != (mesh.n_vertices,):
        raise StructuralError("both functions must live on the given mesh")
    e = u1 - u2
    return float(np.sqrt(max(e @ (energy_matrix(mesh, a) @ e), 0.0)))


@dataclass
class SpectralReference:
    """Truncated eigen-expansion of the constant-coefficient problem on (0,1)^d."""

    order: object
    d: int
    A: float
    modes: np.ndarray
    eigenvalues: np.ndarray
    load_coefficients: np.ndarray

    @property
    def solution_coefficients(self) -> np.ndarray:
        return self.eigenvalues ** (-self.order.s) * self.load_coefficients

    def eigenfunctions(self, x) -> np.ndarray:
        """phi_k(x), shape (n_points, n_modes)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.ones((x.shape[0], len(self.modes)))
        for i in range(self.d):
            out *= np.sqrt(2.0) * np.sin(np.pi * x[:, i: i + 1] * self.modes[None, :, i])
        return out

    def trace(self, x) -> np.ndarray:
        return self.eigenfunctions(x) @ self.solution_coefficients

    def extension(self, x, y) -> np.ndarray:
        """U(x, y) = sum u_k phi_k(x) psi_k(y)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.broadcast_to(np.asarray(y, dtype=float), (x.shape[0],))
        z = np.sqrt(self.eigenvalues)[None, :] * y[:, None]
        psi = extension_profile(self.order.s, z)
        return np.sum(self.eigenfunctions(x) * psi * self.solution_coefficients[None, :], axis=1)


def default_modes(d: int) -> int:
    return 64 if d == 1 else 32


def solve_spectral_reference(order, f, n_modes: int | None = None, d: int = 1, A: float = 1.0,
                             quad_points: int = 256) -> SpectralReference:
    """Modal coefficients f_k = (f, phi_k) by tensor Gauss-Legendre quadrature.

    ``n_modes`` counts modes per axis (n_modes**d modes in total).
    """
    if n_modes is None:
        n_modes = default_modes(d)
    if n_modes < 1:
        raise DomainError("n_modes must be at least 1")
    if A <= 0.0:
        raise DomainError("coefficient must be positive")
    t, w = np.polynomial.legendre.leggauss(quad_points)
    t, w = 0.5 * (t + 1.0), 0.5 * w
    grid = np.stack(np.meshgrid(*([t] * d), indexing="ij"), axis=-1).reshape(-1, d)
    wts = np.ones(len(grid))
    for i, wi in enumerate(np.meshgrid(*([w] * d), indexing="ij")):
        wts = wts * wi.ravel()
    modes = np.array(list(itertools.product(range(1, n_modes + 1), repeat=d)), dtype=float)
    ref = SpectralReference(order=order, d=d, A=A, modes=modes,
                            eigenvalues=A * np.pi**2 * np.sum(modes**2, axis=1),
                            load_coefficients=np.zeros(len(modes)))
    fv = np.asarray(f(grid), dtype=float)
    ref.load_coefficients = ref.eigenfunctions(grid).T @ (wts * fv)
    return ref


def trace_l2_error(mesh: CylinderMesh, u, exact, relative: bool = True) -> float:
    """L2(Omega) distance between tr(u) and a function of x on y = 0."""
    _, faces = mesh.trace_faces
    pts, weights, bary = trace_quadrature(mesh, degree=8)
    nf, nq, d = pts.shape
    uh = np.einsum("qk,fk->fq", bary, np.asarray(u)[faces])
    ex = np.asarray(exact(pts.reshape(-1, d))).reshape(nf, nq)
    err = np.sqrt(np.sum(weights * (uh - ex) ** 2))
    if not relative:
        return float(err)
    norm = np.sqrt(np.sum(weights * ex**2))
    return float(err / norm) if norm > 0 else float(err)
