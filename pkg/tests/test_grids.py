import numpy as np
import pytest
from hypothesis import given, strategies as st

from stochflow.grids import GridField


def _field(m=16, periodic=True):
    g = GridField.periodic_box(2 * np.pi, (m, m), np.zeros((2, m, m)))
    x, y = g.mesh()
    return GridField(g.lo, g.hi, np.stack([np.sin(x) * np.cos(2 * y), np.cos(y)]), periodic)


def test_geometry():
    g = _field(8)
    assert g.dim == 2 and g.ncomp == 2 and g.shape == (8, 8)
    np.testing.assert_allclose(g.spacing, 2 * np.pi / 8)
    assert g.points().shape == (64, 2)
    assert g.cell_volume == pytest.approx((2 * np.pi / 8) ** 2)
    with pytest.raises(ValueError):
        GridField([0, 0], [1, 0], np.zeros((1, 4, 4)))
    with pytest.raises(ValueError):
        GridField([0], [1], np.zeros((1, 4, 4)))


def test_values_are_read_only():
    g = _field()
    with pytest.raises(ValueError):
        g.values[0, 0, 0] = 1.0


def test_spectral_gradient_is_exact_for_trigonometric_fields():
    g = _field(16)
    x, y = g.mesh()
    grad = g.gradient()
    np.testing.assert_allclose(grad[0, 0], np.cos(x) * np.cos(2 * y), atol=1e-12)
    np.testing.assert_allclose(grad[0, 1], -2 * np.sin(x) * np.sin(2 * y), atol=1e-12)
    np.testing.assert_allclose(grad[1, 1], -np.sin(y), atol=1e-12)
    np.testing.assert_allclose(grad[1, 0], 0.0, atol=1e-12)


def test_norms():
    g = GridField.periodic_box(1.0, (10,), np.full((1, 10), 3.0))
    assert g.norm(2) == pytest.approx(3.0)
    assert g.norm(np.inf) == 3.0


@given(st.floats(-20, 20), st.floats(-20, 20))
def test_periodic_interpolation_wraps(x, y):
    g = _field(16)
    L = 2 * np.pi
    a = g(np.array([[x, y]]))
    b = g(np.array([[x + L, y - 2 * L]]))
    np.testing.assert_allclose(a, b, atol=1e-9)


@pytest.mark.parametrize("suffix", [".sfg", ".csv"])
@pytest.mark.parametrize("periodic", [True, False])
def test_save_load_roundtrip(tmp_path, suffix, periodic):
    g = _field(6, periodic)
    path = tmp_path / f"f{suffix}"
    g.save(path)
    back = GridField.load(path)
    assert back.periodic == periodic and back.shape == g.shape
    np.testing.assert_array_equal(back.values, g.values)
    np.testing.assert_array_equal(back.lo, g.lo)
    np.testing.assert_array_equal(back.hi, g.hi)


def test_load_rejects_garbage(tmp_path):
    p = tmp_path / "bad.sfg"
    p.write_bytes(b"nonsense")
    with pytest.raises(ValueError):
        GridField.load(p)
