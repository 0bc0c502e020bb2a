import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from fraclod.assembly import assemble_trace_load, assemble_weighted_stiffness
from fraclod.coefficient import log_uniform_random_field
from fraclod.correctors import corrector_basis, full_layer
from fraclod.errors import DomainError, SolverError, StructuralError
from fraclod.mesh import build_cylinder_mesh, refine
from fraclod.solvers import (energy_error, galerkin_on_basis, solve_coarse_galerkin, solve_fine,
                             solve_multiscale, solve_spectral_reference, trace_l2_error)
from fraclod.special import extension_constant, extension_profile
from fraclod.studies import forcing


def sine(order, d=1):
    return forcing("sine", order, d)


def test_zero_forcing():
    mesh = build_cylinder_mesh(1, 8, 1.0, 8)
    order = extension_constant(0.3)
    assert np.all(solve_fine(mesh, None, order, lambda x: np.zeros(len(x))) == 0.0)


def test_fine_matches_direct_and_is_linear():
    mesh = build_cylinder_mesh(1, 16, 1.0, 16)
    order = extension_constant(0.6)
    field = log_uniform_random_field(1e2, (16,), seed=0)
    f1 = sine(order)
    f2 = lambda x: x[:, 0] ** 2
    u1 = solve_fine(mesh, field, order, f1)
    u2 = solve_fine(mesh, field, order, f2)
    u12 = solve_fine(mesh, field, order, lambda x: f1(x) + 2 * f2(x))
    assert np.allclose(u12, u1 + 2 * u2, rtol=1e-8, atol=1e-10)
    K = assemble_weighted_stiffness(mesh, field, order.a)
    direct = spla.spsolve(K.tocsc(), assemble_trace_load(mesh, f1, order))
    assert np.allclose(u1, direct, rtol=1e-8, atol=1e-10)
    assert np.all(u1[mesh.classification.dirichlet_nodes] == 0.0)


def test_high_contrast_fine_solve():
    mesh = build_cylinder_mesh(1, 64, 1.0, 64)
    order = extension_constant(0.2)
    field = log_uniform_random_field(1e4, (64,), seed=0)
    u = solve_fine(mesh, field, order, sine(order))
    K = assemble_weighted_stiffness(mesh, field, order.a)
    b = assemble_trace_load(mesh, sine(order), order)
    assert np.linalg.norm(b - K @ u) <= 1e-10 * np.linalg.norm(b)


def test_trace_converges_to_spectral():
    order = extension_constant(0.5)
    ref = solve_spectral_reference(order, sine(order))
    errs = []
    for n in (8, 16, 32):
        mesh = build_cylinder_mesh(1, n, 3.0, 3 * n)
        errs.append(trace_l2_error(mesh, solve_fine(mesh, None, order, sine(order)), ref.trace))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-2


@pytest.mark.parametrize("mode", ["local", "global"])
def test_multiscale_galerkin_orthogonality(mode):
    coarse = build_cylinder_mesh(1, 4, 1.0, 4)
    fine = refine(coarse, 4)
    order = extension_constant(0.4)
    field = log_uniform_random_field(1e2, (16,), seed=1)
    ms = solve_multiscale(coarse, fine, 1, field, order, sine(order), mode)
    K = assemble_weighted_stiffness(fine, field, order.a, apply_dirichlet=False)
    b = assemble_trace_load(fine, sine(order), order)
    res = ms.basis.T @ (b - K @ ms.fine)
    assert np.abs(res).max() < 1e-10 * np.abs(b).max()


def test_h_equals_H_is_coarse_galerkin():
    coarse = build_cylinder_mesh(1, 8, 1.0, 8)
    order = extension_constant(0.7)
    fine = refine(coarse, 1)
    ms = solve_multiscale(coarse, fine, 2, None, order, sine(order))
    cg = solve_coarse_galerkin(coarse, fine, None, order, sine(order))
    u = solve_fine(coarse, None, order, sine(order))
    assert np.allclose(ms.fine, cg.fine, atol=1e-12)
    assert np.allclose(cg.fine, u, atol=1e-9)


def test_ideal_multiscale_beats_coarse_on_heterogeneous_field():
    coarse = build_cylinder_mesh(1, 4, 1.0, 4)
    fine = refine(coarse, 8)
    order = extension_constant(0.5)
    field = log_uniform_random_field(1e3, (32,), seed=3)
    f = sine(order)
    u_h = solve_fine(fine, field, order, f)
    ms = solve_multiscale(coarse, fine, full_layer(coarse), field, order, f, "global")
    cg = solve_coarse_galerkin(coarse, fine, field, order, f)
    assert energy_error(fine, u_h, ms.fine, order.a) < energy_error(fine, u_h, cg.fine, order.a)


def test_precomputed_correctors_reused():
    coarse = build_cylinder_mesh(1, 4, 1.0, 4)
    fine = refine(coarse, 2)
    order = extension_constant(0.5)
    basis = corrector_basis(1, coarse, fine, None, order)
    a = solve_multiscale(coarse, fine, 1, None, order, sine(order), correctors=basis)
    b = solve_multiscale(coarse, fine, 1, None, order, sine(order))
    assert np.array_equal(a.coefficients, b.coefficients)


def test_singular_basis_raises():
    mesh = build_cylinder_mesh(1, 4, 1.0, 4)
    order = extension_constant(0.5)
    col = np.zeros(mesh.n_vertices)
    col[mesh.classification.trace_nodes[0]] = 1.0
    B = sp.csc_matrix(np.column_stack([col, col]))
    with pytest.raises(SolverError):
        galerkin_on_basis(mesh, None, order, sine(order), B)


def test_energy_error_properties():
    mesh = build_cylinder_mesh(1, 4, 1.0, 4)
    rng = np.random.default_rng(0)
    u, v = rng.standard_normal((2, mesh.n_vertices))
    assert energy_error(mesh, u, u, 0.2) == 0.0
    assert energy_error(mesh, u, v, 0.2) == pytest.approx(energy_error(mesh, v, u, 0.2))
    assert energy_error(mesh, 2 * u, 2 * v, 0.2) == pytest.approx(2 * energy_error(mesh, u, v, 0.2))
    with pytest.raises(StructuralError):
        energy_error(mesh, u, v[:-1], 0.2)


@pytest.mark.parametrize("s", [0.2, 0.5, 0.8])
def test_spectral_single_mode(s):
    order = extension_constant(s)
    ref = solve_spectral_reference(order, sine(order), n_modes=8)
    x = np.linspace(0, 1, 11)[:, None]
    assert np.allclose(ref.trace(x), np.sin(np.pi * x[:, 0]), atol=1e-12)
    nz = np.abs(ref.solution_coefficients) > 1e-12
    assert nz.sum() == 1


@pytest.mark.parametrize("s", [0.3, 0.7])
def test_spectral_d2_extension_closed_form(s):
    order = extension_constant(s)
    ref = solve_spectral_reference(order, sine(order, 2), n_modes=3, d=2, quad_points=32)
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 1, size=(20, 2))
    y = rng.uniform(0, 2, size=20)
    expect = np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1]) * extension_profile(s, np.sqrt(2) * np.pi * y)
    assert np.allclose(ref.extension(x, y), expect, atol=1e-12)


def test_spectral_heterogeneous_scaling():
    # a constant A scales every eigenvalue, so the solution scales by A^{-s}
    order = extension_constant(0.4)
    r1 = solve_spectral_reference(order, sine(order), n_modes=4)
    r3 = solve_spectral_reference(order, sine(order), n_modes=4, A=3.0)
    x = np.linspace(0, 1, 5)[:, None]
    assert np.allclose(r3.trace(x), 3.0**-0.4 * r1.trace(x))


def test_spectral_errors():
    order = extension_constant(0.5)
    with pytest.raises(DomainError):
        solve_spectral_reference(order, sine(order), n_modes=0)
    with pytest.raises(DomainError):
        solve_spectral_reference(order, sine(order), A=0.0)


def test_trace_error_absolute():
    mesh = build_cylinder_mesh(1, 4, 1.0, 4)
    assert trace_l2_error(mesh, np.zeros(mesh.n_vertices), lambda x: np.ones(len(x)), relative=False) == pytest.approx(1.0)
