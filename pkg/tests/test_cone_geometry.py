import numpy as np
import pytest

from edgeflat.cone_geometry import (from_cone_coords, holder_beta_seminorm,
                                    is_vanishing_class, model_laplacian,
                                    model_metric, pair_sample, to_cone_coords)
from edgeflat.grid import ConeGrid
from edgeflat.params import ConeParams


def test_straightening_known_values():
    # |xi| = |zeta|**beta with the argument preserved
    assert to_cone_coords(4.0, beta=0.5) == pytest.approx(2.0)
    z = from_cone_coords(8.0 * np.exp(1j * np.pi / 4), beta=1.0 / 3.0)
    assert z == pytest.approx(512.0 * np.exp(1j * np.pi / 4))
    assert to_cone_coords(0.0, beta=0.3) == 0.0
    assert from_cone_coords(0.0, beta=0.3) == 0.0


def test_straightening_round_trip():
    rng = np.random.default_rng(7)
    z = rng.standard_normal(50) + 1j * rng.standard_normal(50)
    for beta in (0.2, 1.0 / 3.0, 0.49):
        back = from_cone_coords(to_cone_coords(z, beta), beta)
        assert np.allclose(back, z, atol=1e-12)
        xi = to_cone_coords(z, beta)
        assert np.allclose(np.abs(xi), np.abs(z) ** beta)
        assert np.allclose(np.angle(xi), np.angle(z))


def test_model_metric_entries():
    g = ConeGrid(n_r=8, n_theta=8, n_tangential=(4,))
    p = ConeParams(beta=0.3)
    met = model_metric(g, p)
    assert met.frame == "zeta"
    absz = np.abs(g.zeta(p.beta))
    expect = p.beta**2 * absz ** (2 * p.beta - 2.0)
    assert np.allclose(met.diag[-1][:, :, 0, 0], expect)
    assert np.allclose(met.diag[0], 1.0)
    assert met.is_positive()


def test_model_laplacian_of_edge_potential_is_one():
    # |zeta|**(2 beta) reads r**2 in the straightened frame
    g = ConeGrid(n_r=32, n_theta=8)
    p = ConeParams(beta=0.37)
    vals = np.abs(g.xi()) ** 2
    lap = model_laplacian(vals, g, p)
    assert np.allclose(lap, 1.0, atol=1e-9)


def test_model_laplacian_kills_harmonic_mode():
    # beta = 1/3: Re zeta reads r**3 cos(theta), harmonic for the cone
    g = ConeGrid(n_r=32, n_theta=8)
    p = ConeParams(beta=1.0 / 3.0)
    xi = g.xi()
    vals = np.abs(xi) ** 3 * np.cos(np.angle(xi))
    lap = model_laplacian(vals, g, p)
    assert np.abs(lap).max() < 1e-9


def test_model_laplacian_harmonic_residual_converges():
    # Re zeta at beta = 0.4 is r**2.5 cos(theta); finite differences are
    # inexact on it but the residual off the cone tip must be tiny
    p = ConeParams(beta=0.4)
    g = ConeGrid(n_r=128, n_theta=8)
    xi = g.xi()
    vals = np.abs(xi) ** 2.5 * np.cos(np.angle(xi))
    lap = model_laplacian(vals, g, p)
    sel = g.radial_nodes > 0.25
    assert np.abs(lap[sel]).max() < 1e-6


def test_model_laplacian_tangential_eigenvalue():
    g = ConeGrid(n_r=16, n_theta=8, n_tangential=(8,))
    p = ConeParams(beta=0.3)
    x = g.tangential_nodes(0)
    f = np.broadcast_to(np.cos(2 * np.pi * x)[None, None, :, None], g.shape).copy()
    lap = model_laplacian(f, g, p)
    assert np.allclose(lap, -np.pi**2 * f, atol=1e-10)


def test_model_laplacian_mixed():
    g = ConeGrid(n_r=32, n_theta=8, n_tangential=(8,))
    p = ConeParams(beta=0.3)
    r2 = (np.abs(g.xi()) ** 2)[:, :, None, None]
    y = g.tangential_nodes(0)
    wave = np.sin(2 * np.pi * y)[None, None, None, :]
    f = np.broadcast_to(r2 + wave, g.shape).copy()
    lap = model_laplacian(f, g, p)
    assert np.allclose(lap, 1.0 - np.pi**2 * wave, atol=1e-9)


def test_model_laplacian_accepts_dirichlet_trace():
    g = ConeGrid(n_r=32, n_theta=8)
    p = ConeParams(beta=0.37)
    vals = np.abs(g.xi()) ** 2
    bc = np.ones(g.n_theta)  # r_max = 1
    lap = model_laplacian(vals, g, p, bc=bc)
    assert np.allclose(lap, 1.0, atol=1e-9)


def test_model_laplacian_rejects_unresolved_input():
    g = ConeGrid(n_r=16, n_theta=8)
    p = ConeParams(beta=0.3)
    nyquist = np.cos(g.theta_nodes * (g.n_theta // 2))[None, :] * np.ones((16, 1))
    with pytest.raises(ValueError, match="resolution insufficient"):
        model_laplacian(nyquist, g, p)


def test_model_laplacian_shape_mismatch():
    g = ConeGrid(n_r=16, n_theta=8)
    with pytest.raises(ValueError, match="shape"):
        model_laplacian(np.zeros((4, 4)), g, ConeParams(beta=0.3))


def test_holder_seminorm_of_power_profile():
    # sup |r1**a - r2**a| / |xi1 - xi2|**a = 1, attained toward the tip
    g = ConeGrid(n_r=256, n_theta=16)
    p = ConeParams(beta=0.3, alpha=0.5)
    vals = np.abs(g.xi()) ** p.alpha
    s = holder_beta_seminorm(vals, g, p)
    assert 0.95 <= s <= 1.0 + 1e-9


def test_holder_seminorm_basic_properties():
    g = ConeGrid(n_r=64, n_theta=8)
    p = ConeParams(beta=0.3, alpha=0.5)
    pairs = pair_sample(g)
    const = np.ones(g.shape)
    assert holder_beta_seminorm(const, g, p, pairs=pairs) == 0.0
    f = np.real(g.xi())
    s1 = holder_beta_seminorm(f, g, p, pairs=pairs)
    assert holder_beta_seminorm(3.0 * f, g, p, pairs=pairs) == pytest.approx(3.0 * s1)
    h = np.abs(g.xi()) ** 0.5
    s2 = holder_beta_seminorm(h, g, p, pairs=pairs)
    s12 = holder_beta_seminorm(f + h, g, p, pairs=pairs)
    assert s12 <= s1 + s2 + 1e-12


def test_vanishing_classifier():
    g = ConeGrid(n_r=64, n_theta=16)
    p = ConeParams(beta=0.3)
    r2 = np.abs(g.xi()) ** 2
    ok, rep = is_vanishing_class(r2, g, p)
    assert ok and rep["worst"] <= rep["threshold"]
    ok, _ = is_vanishing_class(np.ones(g.shape), g, p)
    assert not ok
    ok, _ = is_vanishing_class(np.real(g.xi()), g, p)
    assert ok
    # offset kills membership no matter the size of the slope
    ok, _ = is_vanishing_class(0.5 + np.abs(g.xi()), g, p)
    assert not ok
    # scale invariance: a tiny constant is still not vanishing
    ok, _ = is_vanishing_class(1e-12 * np.ones(g.shape), g, p)
    assert not ok
