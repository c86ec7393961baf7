import numpy as np
import pytest

from edgeflat.grid import ConeGrid
from edgeflat.radial import MU_CLAMP, NU_CLAMP, RadialOperator, fd_weights


def _op(n_r=64, with_boundary=True):
    g = ConeGrid(n_r=n_r, n_theta=8)
    return g, RadialOperator(g.radial_nodes, r_right=1.0 if with_boundary else None)


def test_fd_weights_classic_stencil():
    # centered second derivative on 5 equispaced nodes
    nodes = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    w = fd_weights(nodes, 0.0, 2)
    assert np.allclose(w, [-1 / 12, 4 / 3, -5 / 2, 4 / 3, -1 / 12], atol=1e-13)
    w1 = fd_weights(nodes, 0.0, 1)
    assert np.allclose(w1, [1 / 12, -2 / 3, 0, 2 / 3, -1 / 12], atol=1e-13)


def test_derivatives_exact_on_quartics():
    g, op = _op()
    r = g.radial_nodes
    v = 2.0 * r**4 - r**3 + 0.5 * r - 3.0
    d1, d2 = op.apply_derivatives(v)
    assert np.allclose(d1, 8 * r**3 - 3 * r**2 + 0.5, atol=1e-9)
    assert np.allclose(d2, 24 * r**2 - 6 * r, atol=1e-7)


def test_boundary_stencils_use_dirichlet_value():
    g, op = _op()
    r = g.radial_nodes
    v = r**2
    d1, d2 = op.apply_derivatives(v, use_boundary=True, bc=np.array([1.0]))
    assert np.allclose(d1[:, None], 2 * r[:, None], atol=1e-9)
    assert np.allclose(d2[:, None], 2.0, atol=1e-8)


def test_mode_solve_parabola():
    # v'' + v'/r = 4 with v(1) = 0 has solution r**2 - 1
    g, op = _op()
    r = g.radial_nodes
    A, bc = op.mode_matrix(nu=0.0)
    rhs = 4.0 * np.ones_like(r)
    rhs[:2] = 0.0
    v = np.linalg.solve(A, rhs - bc * 0.0)
    assert np.allclose(v, r**2 - 1.0, atol=1e-10)


def test_mode_solve_picks_recessive_harmonic():
    # nu = 3 (beta = 1/3, |m| = 1): r**3 and r**-3 are both harmonic; the
    # closure rows must select r**3 from the boundary value alone
    g, op = _op()
    r = g.radial_nodes
    A, bc = op.mode_matrix(nu=3.0)
    v = np.linalg.solve(A, -bc * 1.0)
    assert np.allclose(v, r**3, atol=1e-10)


def test_closure_row_reproduces_local_solutions():
    g, op = _op()
    r = g.radial_nodes
    row = op.closure_row(2.5)
    assert row.shape == (2, 4)
    # recessive branch plus data-driven particular terms
    v = r**2.5 + 0.4 * r**2 - 0.2 * r**3
    assert row @ v[2:6] == pytest.approx([v[0], v[1]], rel=1e-9)
    # growing branch is rejected: extrapolating r**-2.5 inward from the
    # fit nodes undershoots the true blow-up by a large factor
    w = r**-2.5
    fitted = row @ w[2:6]
    assert abs(fitted[0]) < 0.2 * w[0]


def test_closure_clamps_steep_modes():
    g, op = _op()
    assert op.closure_row(NU_CLAMP + 1.0) is None
    A, _ = op.mode_matrix(nu=NU_CLAMP + 1.0)
    assert A[0, 0] == 1.0 and not A[0, 1:].any()
    # large tangential frequency clamps even when nu is small
    A, _ = op.mode_matrix(nu=1.0, mu2=(MU_CLAMP + 1.0) ** 2)
    assert A[1, 1] == 1.0 and not A[1, 2:].any()


def test_mode_matrix_rows_match_operator():
    g, op = _op()
    r = g.radial_nodes
    nu, mu2 = 2.0, 3.0
    A, bc = op.mode_matrix(nu=nu, mu2=mu2)
    v = np.sin(2.0 * r) * r**2
    vb = float(np.sin(2.0) * 1.0)
    d1, d2 = op.apply_derivatives(v, use_boundary=True, bc=np.array([vb]))
    d1, d2 = d1.ravel(), d2.ravel()
    expect = d2 + d1 / r - (nu**2 / r**2 + mu2) * v
    got = A @ v + bc * vb
    assert np.allclose(got[2:], expect[2:], atol=1e-10)
