import numpy as np
import pytest

from edgeflat.cone_geometry import model_laplacian, tangential_derivative
from edgeflat.grid import ConeGrid
from edgeflat.model_poisson import (ModeODE, check_vanishing_at_cone,
                                    greens_function, schauder_corpus,
                                    schauder_ratio, solve_model_poisson,
                                    transverse_gradient_magnitude)
from edgeflat.params import ConeParams
from edgeflat.radial import RadialOperator


@pytest.mark.parametrize("beta", [0.2, 1.0 / 3.0])
def test_constant_rhs_gives_parabola(beta):
    # f = 1, zero Dirichlet data: v = r**2 - 1, i.e. |zeta|**(2 beta) - 1
    g = ConeGrid(n_r=64, n_theta=8)
    p = ConeParams(beta=beta)
    f = np.ones(g.shape)
    v = solve_model_poisson(f, g, p)
    r = g.radial_nodes[:, None]
    assert np.allclose(v, r**2 - 1.0, atol=1e-10)
    res = model_laplacian(v, g, p, bc=np.zeros(g.n_theta)) - f
    assert np.abs(res[2:]).max() < 1e-8 * (1.0 + np.abs(f).max())


def test_zero_data_gives_zero():
    g = ConeGrid(n_r=32, n_theta=8)
    p = ConeParams(beta=0.3)
    v = solve_model_poisson(np.zeros(g.shape), g, p)
    assert np.abs(v).max() == 0.0


def test_boundary_mode_gives_indicial_solution():
    # f = 0 with boundary e^{i theta}: v = r**(1/beta) e^{i theta}
    g = ConeGrid(n_r=64, n_theta=8)
    p = ConeParams(beta=1.0 / 3.0)
    bc = np.exp(1j * g.theta_nodes)
    v = solve_model_poisson(np.zeros(g.shape), g, p, bc=bc)
    xi = g.xi()
    expect = np.abs(xi) ** 3 * np.exp(1j * np.angle(xi))
    assert np.allclose(v, expect, atol=1e-10)


def test_mode_ode_indicial_exponent_exact():
    ode = ModeODE(m=7, wavevector=(), beta=1.0 / 3.0)
    assert ode.nu == 21.0
    assert ode.recessive_exponent == 21.0
    ode2 = ModeODE(m=0, wavevector=(2 * np.pi, -2 * np.pi), beta=0.3)
    assert ode2.mu2 == pytest.approx(8 * np.pi**2)


def test_vanishing_check_on_radial_square():
    # v = r**2: dv/dxi = xibar, profile r, exponent 1
    g = ConeGrid(n_r=128, n_theta=8)
    p = ConeParams(beta=0.3)
    v = np.abs(g.xi()) ** 2
    # both Wirtinger derivatives are xi-bar-like, so |grad| = sqrt(2) r
    gmag = transverse_gradient_magnitude(v, g)
    assert np.allclose(gmag, np.sqrt(2.0) * np.abs(g.xi()), atol=1e-8)
    fit = check_vanishing_at_cone(v, g, p)
    assert fit.passed
    assert fit.exponent == pytest.approx(1.0, abs=0.05)


def test_vanishing_check_on_indicial_mode():
    # v = r**3 e^{i theta} (beta = 1/3): gradient magnitude ~ r**2
    g = ConeGrid(n_r=128, n_theta=8)
    p = ConeParams(beta=1.0 / 3.0)
    xi = g.xi()
    v = np.abs(xi) ** 3 * np.exp(1j * np.angle(xi))
    fit = check_vanishing_at_cone(v, g, p)
    assert fit.passed
    assert fit.exponent == pytest.approx(2.0, abs=0.05)


def test_vanishing_check_negative_control():
    # Re xi has constant transverse gradient: must fail
    g = ConeGrid(n_r=128, n_theta=8)
    p = ConeParams(beta=0.3)
    fit = check_vanishing_at_cone(np.real(g.xi()), g, p)
    assert not fit.passed
    assert abs(fit.exponent) < 0.05


def test_vanishing_check_needs_annuli():
    g = ConeGrid(n_r=8, n_theta=8)
    p = ConeParams(beta=0.3)
    with pytest.raises(ValueError, match="annul"):
        check_vanishing_at_cone(np.abs(g.xi()) ** 2, g, p)


def test_solved_corpus_entry_vanishes():
    g = ConeGrid(n_r=512, n_theta=16)
    p = ConeParams(beta=0.3, alpha=0.5)
    r = np.abs(g.xi())
    f = np.maximum(0.0, 1.0 - 2.0 * r) * np.cos(np.angle(g.xi()))
    v = solve_model_poisson(f, g, p)
    fit = check_vanishing_at_cone(v, g, p)
    assert fit.passed


def test_mixed_tangential_derivative_vanishes():
    # d/dz_k of the solution passes the same decay test
    g = ConeGrid(n_r=256, n_theta=8, n_tangential=(8,))
    p = ConeParams(beta=0.3)
    r = np.abs(g.xi())[:, :, None, None]
    x = g.tangential_nodes(0).reshape(1, 1, -1, 1)
    f = np.broadcast_to(np.maximum(0.0, 1.0 - 2.0 * r) * np.cos(2 * np.pi * x),
                        g.shape).copy()
    v = solve_model_poisson(f, g, p)
    w = tangential_derivative(v, g, direction=0)
    fit = check_vanishing_at_cone(w, g, p)
    assert fit.passed


def test_mode_sum_equals_full_two_dimensional_solve():
    g = ConeGrid(n_r=16, n_theta=8)
    p = ConeParams(beta=0.3)
    r, th = g.radial_nodes, g.theta_nodes
    f = ((1 - r) ** 2 * r**2)[:, None] * \
        (1.0 + 0.5 * np.cos(th) + 0.2 * np.sin(2 * th))[None, :]
    v = solve_model_poisson(f, g, p)
    rop = RadialOperator(r, r_right=1.0)
    n = g.n_theta
    big = np.zeros((g.n_r * n, g.n_r * n))
    for m in g.theta_wavenumbers:
        a_m, _ = rop.mode_matrix(nu=abs(m) / p.beta, mu2=0.0)
        phase = np.exp(1j * m * (th[:, None] - th[None, :])) / n
        big += np.kron(a_m, phase).real
    rhs = 4.0 * f
    rhs[:2] = 0.0
    v_full = np.linalg.solve(big, rhs.ravel()).reshape(g.n_r, n)
    assert np.allclose(v_full, v, atol=1e-10)


def test_maximum_principle():
    g = ConeGrid(n_r=64, n_theta=8)
    p = ConeParams(beta=0.3)
    f = -np.maximum(0.0, 1.0 - 2.0 * np.abs(g.xi()))
    v = solve_model_poisson(f, g, p, bc=0.1 * np.ones(g.n_theta))
    assert v.min() >= -1e-12


def test_schauder_ratio_scale_invariant():
    g = ConeGrid(n_r=32, n_theta=8, n_tangential=(8,))
    p = ConeParams(beta=1.0 / 3.0, alpha=0.5)
    r = np.abs(g.xi())[:, :, None, None]
    x = g.tangential_nodes(0).reshape(1, 1, -1, 1)
    f = np.broadcast_to(np.maximum(0.0, 1.0 - 2.0 * r) * np.cos(2 * np.pi * x),
                        g.shape).copy()
    s1 = schauder_ratio(f, g, p)
    s10 = schauder_ratio(10.0 * f, g, p)
    assert s1 > 0.0
    assert s10 == pytest.approx(s1, rel=1e-9)


def test_schauder_ratio_zero_rhs_errors():
    g = ConeGrid(n_r=32, n_theta=8)
    p = ConeParams(beta=0.3)
    with pytest.raises(ValueError, match="seminorm"):
        schauder_ratio(np.zeros(g.shape), g, p)


def test_schauder_corpus_has_twelve_entries():
    for tang in ((), (8,)):
        g = ConeGrid(n_r=16, n_theta=8, n_tangential=tang)
        p = ConeParams(beta=0.3)
        corpus = schauder_corpus(g, p, seed=0)
        assert len(corpus) == 12
        names = [n for n, _ in corpus]
        assert len(set(names)) == 12
        for _name, f in corpus:
            assert f.shape == g.shape
            assert np.isfinite(f).all()
            # compact support in the half disk
            sel = g.radial_nodes >= 0.5
            assert np.abs(f[sel]).max() == 0.0


def test_greens_function_values_and_normalization():
    # chart quadrature over the round sphere: z = tan(t/2) e^{i phi}
    nt, nphi = 1024, 256
    t = (np.arange(nt) + 0.5) * np.pi / nt
    phi = np.arange(nphi) * 2 * np.pi / nphi
    z = np.tan(t / 2)[:, None] * np.exp(1j * phi)[None, :]
    w = np.sin(t)[:, None] * (np.pi / nt) * (2 * np.pi / nphi) * np.ones((1, nphi))
    gp = greens_function(0.3 + 0.2j, z)
    assert gp.values.max() <= 0.0
    # mean of the shifted representative is -1/(2 pi); integral -2
    total = float((gp.values * w).sum())
    assert total == pytest.approx(-2.0, abs=5e-3)
    assert float((gp.mean_zero() * w).sum()) == pytest.approx(0.0, abs=5e-3)


def test_greens_function_symmetry():
    rng = np.random.default_rng(11)
    pts = rng.standard_normal(20).view(complex)
    for i in range(0, 10, 2):
        p, q = pts[i], pts[i + 1]
        a = greens_function(p, np.array([q])).values[0]
        b = greens_function(q, np.array([p])).values[0]
        assert a == pytest.approx(b, rel=1e-12)


def test_greens_function_depends_only_on_distance():
    # points at fixed geodesic distance from p via a sphere rotation
    p = 0.4 - 0.3j
    rho = np.tan(0.35)  # geodesic distance 0.7
    phi = np.linspace(0.0, 2 * np.pi, 64, endpoint=False)
    w = rho * np.exp(1j * phi)
    q = (w + p) / (1.0 - np.conj(p) * w)
    vals = greens_function(p, q).values
    assert np.var(vals) < 1e-12


def test_greens_function_equation_residual():
    # away from p: complex Laplacian of Gamma equals -1/(4 pi)
    p = 0.1 + 0.2j
    h = 1e-3
    for q in (0.5 + 0.1j, -0.3 + 0.6j, 1.2 - 0.4j):
        offs = np.array([-2, -1, 0, 1, 2]) * h
        gx = greens_function(p, q + offs).values
        gy = greens_function(p, q + 1j * offs).values
        stencil = np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / (12.0 * h * h)
        lap_flat = float(stencil @ gx + stencil @ gy)
        dens = 2.0 / (1.0 + abs(q) ** 2) ** 2
        val = 0.25 * lap_flat / dens
        assert val == pytest.approx(-1.0 / (4.0 * np.pi), abs=1e-6)


def test_greens_function_requires_closed_surface():
    with pytest.raises(ValueError, match="closed"):
        greens_function(0.0, np.array([1.0 + 0j]), closed=False)


def test_solver_rejects_unresolved_rhs():
    g = ConeGrid(n_r=16, n_theta=8)
    p = ConeParams(beta=0.3)
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError, match="resolution insufficient"):
        solve_model_poisson(rng.standard_normal(g.shape), g, p)
