import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fraclod.errors import DomainError, StructuralError
from fraclod.mesh import (build_cylinder_mesh, check_nested, classify_nodes, cylinder_mesh_for,
                          node_star, patch, prolongation, refine)


def test_d1_counts_and_classification():
    mesh = build_cylinder_mesh(1, 2, 1.0, 2)
    assert mesh.n_vertices == 9 and mesh.n_elements == 8
    cls = classify_nodes(mesh)
    assert len(cls.interior_nodes) == 1
    assert len(cls.dirichlet_nodes) == 7
    assert len(cls.trace_nodes) == 1
    assert np.allclose(mesh.vertices[cls.trace_nodes[0]], [0.5, 0.0])


def test_d1_four_by_four_classification():
    cls = classify_nodes(build_cylinder_mesh(1, 4, 1.0, 4))
    assert len(cls.trace_nodes) == 3 and len(cls.interior_nodes) == 9


def test_d2_counts():
    mesh = build_cylinder_mesh(2, 1, 1.0, 1)
    assert mesh.n_vertices == 8 and mesh.n_elements == 6


@pytest.mark.parametrize("d,n,T,ny", [(1, 3, 1.5, 4), (2, 2, 1.0, 3), (2, 3, 0.5, 2)])
def test_classification_partitions(d, n, T, ny):
    mesh = build_cylinder_mesh(d, n, T, ny)
    cls = mesh.classification
    allnodes = np.concatenate([cls.interior_nodes, cls.trace_nodes, cls.dirichlet_nodes])
    assert np.array_equal(np.sort(allnodes), np.arange(mesh.n_vertices))
    x, y = mesh.vertices[:, :d], mesh.vertices[:, -1]
    open_bottom = (y == 0) & np.all((x > 0) & (x < 1), axis=1)
    assert np.array_equal(np.flatnonzero(open_bottom), cls.trace_nodes)


@pytest.mark.parametrize("d,n,T,ny", [(1, 4, 1.0, 4), (1, 3, 2.5, 5), (2, 2, 1.0, 2), (2, 3, 1.5, 3)])
def test_volume_sum(d, n, T, ny):
    mesh = build_cylinder_mesh(d, n, T, ny)
    assert mesh.volumes.sum() == pytest.approx(T, rel=1e-12)
    assert np.all(mesh.volumes > 0)


def test_patch_examples():
    mesh = build_cylinder_mesh(1, 2, 1.0, 2)
    v = mesh.classification.interior_nodes[0]
    assert len(patch(mesh, v, 0).elements) == 6
    assert len(patch(mesh, v, 1).elements) == 8


def test_patch_zero_is_star():
    mesh = build_cylinder_mesh(2, 3, 1.0, 3)
    for v in range(0, mesh.n_vertices, 7):
        star = set(np.flatnonzero(np.any(mesh.simplices == v, axis=1)))
        assert set(patch(mesh, v, 0).elements) == star


def test_patch_trace_faces():
    mesh = build_cylinder_mesh(1, 4, 1.0, 4)
    v = mesh.classification.trace_nodes[1]
    faces = patch(mesh, v, 0).boundary_trace_faces
    assert faces.shape == (2, 2)
    assert np.all(mesh.vertices[faces][:, :, -1] == 0.0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 80), st.integers(0, 4))
def test_patch_nesting(v, k):
    mesh = build_cylinder_mesh(1, 8, 1.0, 8)
    small = set(patch(mesh, v, k).elements)
    big = set(patch(mesh, v, k + 1).elements)
    assert small <= big


def test_patch_exhausts_domain():
    mesh = build_cylinder_mesh(2, 3, 1.0, 3)
    assert len(patch(mesh, 0, 6).elements) == mesh.n_elements


def _ring(mesh, v, k, l):
    outer = set(patch(mesh, v, k).elements)
    inner = set(patch(mesh, v, l).elements) if l >= 0 else set()
    return outer - inner


@pytest.mark.parametrize("d,n", [(1, 6), (2, 3)])
def test_quasi_inclusion(d, n):
    """Patches of nodes touching a ring stay within the ring widened by m+2 layers.

    With layer 0 equal to the node star, an m-layer patch spans m+1 element rings on
    each side of its node, so the widening needed is m+2 rather than m+1.
    """
    mesh = build_cylinder_mesh(d, n, 1.0, n)
    centre = mesh.classification.trace_nodes[len(mesh.classification.trace_nodes) // 2]
    for k in range(1, 4):
        for l in range(0, k):
            ring = _ring(mesh, centre, k, l)
            for m in range(0, 2):
                wide = _ring(mesh, centre, k + m + 2, l - m - 2)
                for w in range(mesh.n_vertices):
                    pw = set(patch(mesh, w, m).elements)
                    if pw & ring:
                        assert pw <= wide


def test_refine_children():
    coarse = build_cylinder_mesh(1, 2, 1.0, 2)
    fine = refine(coarse, 2)
    assert np.all(np.bincount(fine.parent) == 4)
    coarse3 = build_cylinder_mesh(2, 2, 1.0, 2)
    assert np.all(np.bincount(refine(coarse3, 2).parent) == 8)
    assert check_nested(coarse, fine) == 2


def test_refine_children_inside_parent():
    coarse = build_cylinder_mesh(2, 2, 1.0, 2)
    fine = refine(coarse, 3)
    bary = coarse.barycentric(fine.parent, fine.centroids)
    assert np.all(bary > -1e-12)


def test_nesting_errors():
    with pytest.raises(StructuralError):
        check_nested(build_cylinder_mesh(1, 2, 1.0, 2), build_cylinder_mesh(1, 3, 1.0, 3))
    with pytest.raises(StructuralError):
        check_nested(build_cylinder_mesh(1, 2, 1.0, 2), build_cylinder_mesh(1, 4, 1.5, 6))


def test_domain_errors():
    with pytest.raises(DomainError):
        build_cylinder_mesh(3, 2, 1.0, 2)
    with pytest.raises(DomainError):
        build_cylinder_mesh(1, 0, 1.0, 2)
    with pytest.raises(DomainError):
        cylinder_mesh_for(1, 0.3, 1.0)
    with pytest.raises(DomainError):
        patch(build_cylinder_mesh(1, 2, 1.0, 2), 0, -1)


@pytest.mark.parametrize("d", [1, 2])
def test_prolongation_partition_of_unity(d):
    coarse = build_cylinder_mesh(d, 2, 1.0, 2)
    fine = refine(coarse, 2)
    P = prolongation(coarse, fine)
    assert np.allclose(np.asarray(P.sum(axis=1)).ravel(), 1.0)
    # coarse nodes map to themselves
    idx = np.flatnonzero(np.abs(P.toarray() - 1.0) < 1e-14)
    assert len(idx) == coarse.n_vertices


def test_prolongation_reproduces_linear():
    coarse = build_cylinder_mesh(2, 2, 1.0, 2)
    fine = refine(coarse, 2)
    g = lambda p: 1.0 + 2 * p[:, 0] - p[:, 1] + 0.5 * p[:, 2]
    P = prolongation(coarse, fine)
    assert np.allclose(P @ g(coarse.vertices), g(fine.vertices))


def test_write(tmp_path):
    mesh = build_cylinder_mesh(1, 2, 1.0, 1)
    path = tmp_path / "mesh.txt"
    mesh.write(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "VERTICES 6"
    assert lines[7] == "SIMPLICES 4"


def test_node_star_matches_incidence():
    mesh = build_cylinder_mesh(1, 3, 1.0, 3)
    for v in range(mesh.n_vertices):
        assert np.array_equal(node_star(mesh, v), np.flatnonzero(np.any(mesh.simplices == v, axis=1)))
