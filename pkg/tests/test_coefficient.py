import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fraclod.coefficient import (CoefficientField, RasterError, constant_field, load_raster,
                                 log_uniform_random_field, parse_coefficient, write_raster)
from fraclod.errors import DomainError
from fraclod.mesh import build_cylinder_mesh


def test_constant_field():
    one = constant_field(1.0)
    assert one.alpha == one.beta == 1.0
    three = constant_field(3.0, (2, 2))
    assert three.sample([0.3, 0.9]) == 3.0
    assert np.array_equal(three.extended_tensor([0.1, 0.2]), np.diag([3.0, 3.0, 1.0]))
    assert np.array_equal(constant_field(3.0).extended_tensor(0.5), np.diag([3.0, 1.0]))


def test_two_cell_sample():
    field = CoefficientField(np.array([1.0, 10.0]))
    assert field.sample(0.25) == 1.0
    assert field.sample(0.75) == 10.0
    assert np.array_equal(field.sample(np.array([[0.0], [1.0]])), [1.0, 10.0])


def test_sample_d2_orientation():
    # row j holds cells with x2 in [j/ny, (j+1)/ny)
    field = CoefficientField(np.array([[1.0, 2.0], [3.0, 4.0]]))
    assert field.sample([0.75, 0.25]) == 2.0
    assert field.sample([0.25, 0.75]) == 3.0
    assert field.grid_shape == (2, 2)


def test_sample_outside_rejected():
    with pytest.raises(DomainError):
        constant_field(1.0).sample(1.5)


@pytest.mark.parametrize("values", [[0.0, 1.0], [1.0, -2.0], [np.nan], []])
def test_invalid_values_rejected(values):
    with pytest.raises(DomainError):
        CoefficientField(np.array(values))


def test_raster_roundtrip(tmp_path):
    path = tmp_path / "r.txt"
    path.write_text("2 2\n1 2\n3 4\n")
    field = load_raster(path)
    assert field.alpha == 1.0 and field.beta == 4.0
    assert field.d == 2
    out = tmp_path / "w.txt"
    write_raster(out, field)
    assert np.array_equal(load_raster(out).values, field.values)


def test_raster_zero_rejected_with_line(tmp_path):
    path = tmp_path / "r.txt"
    path.write_text("3\n1.0 2.0\n0.0\n")
    with pytest.raises(RasterError, match=":3:"):
        load_raster(path)


@pytest.mark.parametrize("text", ["", "2 x\n1 2\n", "2\n1 2 3\n", "2\n1 abc\n", "1 2 3\n1 1 1 1 1 1\n"])
def test_raster_malformed(tmp_path, text):
    path = tmp_path / "r.txt"
    path.write_text(text)
    with pytest.raises(RasterError):
        load_raster(path)


def test_raster_missing(tmp_path):
    with pytest.raises(RasterError):
        load_raster(tmp_path / "nope.txt")


def test_logrand_contrast_one():
    field = log_uniform_random_field(1.0, (4,), seed=3)
    assert np.all(field.values == 1.0)


def test_logrand_deterministic_and_bounded():
    a = log_uniform_random_field(1e4, (8, 8), seed=7)
    b = log_uniform_random_field(1e4, (8, 8), seed=7)
    assert np.array_equal(a.values, b.values)
    assert a.beta / a.alpha <= 1e4
    assert a.alpha >= 1.0 and a.beta <= 1e4
    assert not np.array_equal(a.values, log_uniform_random_field(1e4, (8, 8), seed=8).values)


def test_logrand_rejects_small_contrast():
    with pytest.raises(DomainError):
        log_uniform_random_field(0.5, (2,), seed=0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 16), st.floats(0.0, 1.0))
def test_sample_picks_containing_cell(n, x):
    field = CoefficientField(np.arange(1.0, n + 1.0))
    val = field.sample(x)
    lo, hi = (val - 1) / n, val / n
    assert lo - 1e-12 <= x <= hi + 1e-12


def test_on_elements_aligned():
    field = CoefficientField(np.array([[1.0, 2.0], [3.0, 4.0]]))
    mesh = build_cylinder_mesh(2, 4, 1.0, 2)
    vals = field.on_elements(mesh)
    x = mesh.centroids[:, :2]
    expect = np.where(x[:, 1] < 0.5, np.where(x[:, 0] < 0.5, 1.0, 2.0),
                      np.where(x[:, 0] < 0.5, 3.0, 4.0))
    assert np.array_equal(vals, expect)
    with pytest.raises(DomainError):
        field.on_elements(build_cylinder_mesh(1, 2, 1.0, 2))


def test_parse_coefficient(tmp_path):
    assert parse_coefficient("constant:2.5", 1).beta == 2.5
    field = parse_coefficient("logrand:100:4", 2, cells=4)
    assert field.values.shape == (4, 4)
    assert np.array_equal(field.values, log_uniform_random_field(100, (4, 4), 4).values)
    path = tmp_path / "r.txt"
    path.write_text("2\n1 5\n")
    assert parse_coefficient(f"raster:{path}", 1).beta == 5.0
    with pytest.raises(DomainError):
        parse_coefficient(f"raster:{path}", 2)
    with pytest.raises(DomainError):
        parse_coefficient("gauss:1", 1)
