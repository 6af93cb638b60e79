import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nematic.errors import GridError
from nematic.grid import Boundary, State, enforce_boundary, interior, make_grid, pad, zero_state


def test_make_grid_spacing_and_counts():
    g = make_grid(2, (8, 16), (1.0, 2.0))
    assert g.h == (0.125, 0.125)
    assert g.ncells == 128
    assert g.cell_volume == pytest.approx(0.125 ** 2)
    assert g.volume == pytest.approx(2.0)
    assert g.boundary is Boundary.DIRICHLET


@pytest.mark.parametrize("args", [(1, 8), (4, 8), (2, 3), (2, 8, -1.0), (2, 8, 0.0), (2, (8, 8, 8))])
def test_make_grid_rejects_bad_input(args):
    with pytest.raises(GridError):
        make_grid(*args)


def test_unknown_boundary():
    with pytest.raises(GridError):
        make_grid(2, 8, 1.0, "neumann")
    assert make_grid(2, 8, 1.0, " Periodic ").periodic


def test_centers_are_cell_midpoints():
    g = make_grid(2, 4, 1.0)
    X, Y = g.centers()
    assert X[0, 0] == pytest.approx(0.125) and X[-1, 0] == pytest.approx(0.875)
    assert np.all(Y[:, 0] == 0.125)


def test_kind_classification():
    g = make_grid(3, 4)
    assert g.kind(np.zeros((4, 4, 4))) == "scalar"
    assert g.kind(np.zeros((3, 4, 4, 4))) == "vector"
    assert g.kind(np.zeros((3, 3, 4, 4, 4))) == "matrix"
    with pytest.raises(GridError):
        g.kind(np.zeros((2, 4, 4, 4)))
    with pytest.raises(GridError):
        g.kind(np.zeros((5, 5, 5)))


def test_zero_state_shapes():
    s = zero_state(make_grid(3, 4))
    assert s.u.shape == (3, 4, 4, 4) and s.F.shape == (3, 3, 4, 4, 4) and s.P.shape == (4, 4, 4)
    c = s.copy()
    c.u[0] = 1.0
    assert not np.any(s.u)


def test_dirichlet_ghosts_give_zero_face_average(rng):
    g = make_grid(2, 6)
    f = rng.standard_normal((2, 6, 6))
    fp = pad(f, g, -1)
    # ghost + adjacent interior averages to zero on every face
    assert np.allclose(fp[:, 0, 1:-1] + fp[:, 1, 1:-1], 0)
    assert np.allclose(fp[:, -1, 1:-1] + fp[:, -2, 1:-1], 0)
    assert np.allclose(fp[:, 1:-1, 0] + fp[:, 1:-1, 1], 0)
    fe = pad(f, g, 1)
    assert np.allclose(fe[:, 0, 1:-1], fe[:, 1, 1:-1])


def test_periodic_ghosts_wrap(rng):
    g = make_grid(2, 5, 1.0, "periodic")
    f = rng.standard_normal((5, 5))
    fp = pad(f, g)
    assert np.array_equal(fp[0, 1:-1], f[-1])
    assert np.array_equal(fp[-1, 1:-1], f[0])
    assert np.array_equal(interior(fp, g), f)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 3), st.integers(4, 7), st.sampled_from([-1, 1]), st.booleans(), st.integers(0, 2 ** 31))
def test_enforce_boundary_idempotent(dim, n, parity, periodic, seed):
    g = make_grid(dim, n, 1.0, "periodic" if periodic else "dirichlet")
    fp = np.random.default_rng(seed).standard_normal((dim,) + (n + 2,) * dim)
    once = enforce_boundary(fp, g, parity)
    assert np.array_equal(once, enforce_boundary(once, g, parity))
    assert np.array_equal(interior(once, g), interior(fp, g))


def test_state_replace_keeps_grid():
    g = make_grid(2, 4)
    s = zero_state(g)
    s2 = s.replace(t=1.0)
    assert s2.t == 1.0 and s2.grid is g
    assert isinstance(s2, State)
