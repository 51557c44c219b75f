import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nematic_fsi.basis import (
    BasisSet, BoundaryMode, boundary_extension_mode, enumerate_interior, interior_mode,
    mode_divergence, mode_velocity, push_to_moving_domain, shell_mode,
)
from nematic_fsi.geometry import TWO_PI, FourierProfile, HanzawaMap


def test_interleaved_ordering():
    b = BasisSet(3, 2)
    assert b.order == [("interior", 0), ("boundary", 0), ("interior", 1), ("boundary", 1), ("interior", 2)]
    assert list(b.boundary_globals) == [1, 3]
    assert b.to_global("boundary", 1) == 3
    assert b.to_local(4) == ("interior", 2)


def test_enumeration_unique():
    modes = enumerate_interior(30)
    assert len(set(modes)) == 30
    assert modes[0].k == 0 and modes[0].m == 1


def test_invalid_modes():
    with pytest.raises(ValueError):
        shell_mode(0)
    with pytest.raises(ValueError):
        interior_mode(1, 0)
    with pytest.raises(ValueError):
        BoundaryMode(0)


@given(st.integers(0, 6), st.integers(1, 6), st.booleans())
def test_interior_divergence_free_and_wall_trace(k, m, cos):
    mode = interior_mode(k, m, "cos" if cos else "sin")
    x = np.linspace(0, TWO_PI, 31)
    s = np.linspace(0, 1, 31)
    X, S = np.meshgrid(x, s, indexing="ij")
    assert np.max(np.abs(mode_divergence(mode, X, S))) == 0.0
    h = 1e-6
    fd = (mode_velocity(mode, X + h, S)[..., 0] - mode_velocity(mode, X - h, S)[..., 0]
          + mode_velocity(mode, X, S + h)[..., 1] - mode_velocity(mode, X, S - h)[..., 1]) / (2 * h)
    assert np.max(np.abs(fd)) < 1e-7
    for wall in (0.0, 1.0):
        assert np.allclose(mode_velocity(mode, x, np.full_like(x, wall)), 0.0, atol=1e-13)


@given(st.integers(1, 8), st.booleans())
def test_boundary_mode_trace_is_shell_normal(k, cos):
    mode = boundary_extension_mode(k, "cos" if cos else "sin")
    x = np.linspace(0, TWO_PI, 40)
    top = mode_velocity(mode, x, np.ones_like(x))
    assert np.allclose(top[:, 0], 0.0, atol=1e-14)
    assert np.allclose(top[:, 1], mode.shell(x), atol=1e-14)
    assert np.allclose(mode_velocity(mode, x, np.zeros_like(x)), 0.0)


def test_reference_fields_match_pointwise():
    b = BasisSet(5)
    x, s = np.linspace(0, TWO_PI, 7), np.linspace(0, 1, 6)
    ref = b.reference_fields(x, s)
    X, S = np.meshgrid(x, s, indexing="ij")
    for g, mode in enumerate(b.modes):
        v = mode_velocity(mode, X, S)
        assert np.allclose(ref.v[g, 0], v[..., 0])
        assert np.allclose(ref.v[g, 1], v[..., 1])
    # trace of the gradient is the divergence
    assert np.allclose(ref.dv[:, 0, 0] + ref.dv[:, 1, 1], 0.0)


def test_pushed_boundary_mode_has_shell_trace():
    hmap = HanzawaMap(FourierProfile([0.2, -0.1, 0.05]))
    mode = boundary_extension_mode(2)
    pm = push_to_moving_domain(hmap, mode)
    y = np.linspace(0, TWO_PI, 24, endpoint=False)
    top = hmap.boundary_image(y)
    vel = pm.velocity(top)
    assert np.allclose(vel, np.stack([0 * y, pm.shell_function(y) * pm.scaling(y)], axis=-1), atol=1e-12)
