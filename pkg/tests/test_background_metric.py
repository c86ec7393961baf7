"""Background construction, Ricci potential, and decay-scan checks."""

import numpy as np
import pytest
import sympy as sp

import edgeflat.background_metric as bm
import edgeflat.geometry_p1 as gp1
from edgeflat.geometry_cone_torus import PotentialTables, Z1, Z1B, ZE, ZEB
from edgeflat.params import ConeParams


@pytest.fixture(scope="module")
def cone_bg():
    spec = bm.GeometrySpec(variant="cone_torus")
    return bm.build_background(spec, ConeParams(beta=1 / 3, lam=0.1))


@pytest.fixture(scope="module")
def p1_bg():
    spec = bm.GeometrySpec(variant="p1_marked")
    return bm.build_background(spec, ConeParams(beta=1 / 3, lam=0.1))


def test_spec_validation():
    with pytest.raises(ValueError, match="variant"):
        bm.GeometrySpec(variant="torus")
    with pytest.raises(ValueError, match="model"):
        bm.GeometrySpec(variant="p1_marked", model=True)
    with pytest.raises(ValueError, match="preset"):
        bm.GeometrySpec(variant="cone_torus", rho_preset="bumpy")


def test_p1_class_condition_enforced():
    spec = bm.GeometrySpec(variant="p1_marked")
    with pytest.raises(ValueError, match="class condition"):
        bm.build_background(spec, ConeParams(beta=0.25))


# ---------------------------------------------------------------------------
# cone_torus construction
# ---------------------------------------------------------------------------


def test_cone_torus_positive_and_five_term(cone_bg):
    rep = cone_bg.positivity_report()
    assert rep["passed"] and rep["min_eigenvalue"] > 0.5
    assert cone_bg.five_term_error() < 1e-10
    # independent eigenvalue oracle on the assembled matrices
    t, zeta = cone_bg._nodes
    g = cone_bg.geom.metric_matrix(t, zeta, "zeta")
    ev = np.linalg.eigvalsh(g)
    assert abs(ev.min() - rep["min_eigenvalue"]) < 1e-12


def test_cone_torus_small_lam_positive():
    spec = bm.GeometrySpec(variant="cone_torus")
    bg = bm.build_background(spec, ConeParams(beta=1 / 3, lam=0.05))
    assert bg.positivity_report()["min_eigenvalue"] > 0.9


def test_cone_torus_lam_zero_is_flat_exactly():
    spec = bm.GeometrySpec(variant="cone_torus")
    bg = bm.build_background(spec, ConeParams(beta=1 / 3, lam=0.0))
    t, zeta = bg._nodes
    g = bg.geom.metric_matrix(t, zeta, "zeta")
    eye = np.zeros_like(g)
    eye[..., 0, 0] = eye[..., 1, 1] = 1.0
    assert np.abs(g - eye).max() == 0.0


def test_cone_torus_positivity_failure_reports_node():
    spec = bm.GeometrySpec(
        variant="cone_torus", rho_preset="tangential", rho_amplitude=0.9
    )
    with pytest.raises(ValueError) as err:
        bm.build_background(spec, ConeParams(beta=1 / 3, lam=0.6))
    msg = str(err.value)
    assert "eigenvalue" in msg and "node" in msg


def test_cone_torus_lower_bound_rank_one_identity(cone_bg):
    """g - g0 - lam psi ddbar(log rho) equals the rank-one remainder.

    Chain rule: ddbar psi = psi (beta T + beta^2 L Lbar) with
    L_a = d_a log(rho^{1/b} |zeta|^2), so the subtracted matrix must
    match lam b^2 psi L Lbar entrywise.
    """
    params = cone_bg.params
    beta, lam = params.beta, params.lam
    geom = cone_bg.geom
    rng = np.random.default_rng(7)
    zeta = (0.02 + 0.1 * rng.random(24)) * np.exp(2j * np.pi * rng.random(24))
    t = 0.4 * (rng.random(24) - 0.5) + 0.4j * (rng.random(24) - 0.5)

    g = geom.metric_matrix(t, zeta, "zeta")
    rho_tab = PotentialTables(sp.log(geom.rho), (Z1, ZE), (Z1B, ZEB))
    rho = geom.rho_values(t, zeta)
    psi = rho * np.abs(zeta) ** (2 * beta)
    m = g.copy()
    m[..., 0, 0] -= 1.0
    m[..., 1, 1] -= 1.0
    L = np.zeros(zeta.shape + (2,), dtype=complex)
    for a in range(2):
        for b in range(2):
            m[..., a, b] -= lam * psi * rho_tab.eval((a,), (b,), t, zeta)
        L[..., a] = rho_tab.eval((a,), (), t, zeta) / beta
    L[..., 1] += 1.0 / zeta
    rank_one = lam * beta**2 * psi[..., None, None] * (
        L[..., :, None] * np.conj(L[..., None, :])
    )
    assert np.abs(m - rank_one).max() < 1e-12 * np.abs(rank_one).max()


def test_cone_torus_lower_bound_report(cone_bg):
    rep = cone_bg.lower_bound_report()
    assert rep["passed"]


def test_cone_torus_a0_extrapolation(cone_bg):
    rep = cone_bg.a0_report()
    assert rep["passed"]
    assert rep["min_a0"] > 0.0
    assert rep["max_rel_err"] < 1e-3


# ---------------------------------------------------------------------------
# cone_torus scans
# ---------------------------------------------------------------------------


def test_cone_torus_curvature_bounded(cone_bg):
    rep = bm.curvature_tensor(cone_bg)
    assert rep["passed"]
    assert rep["symmetry_error"] < 1e-8
    assert rep["annulus_fit"]["exponent"] >= bm.BOUNDED_SLOPE_FLOOR


def test_cone_torus_curvature_derivative_threshold(cone_bg):
    fit = bm.curvature_derivative_scan(cone_bg)
    beta = cone_bg.params.beta
    expected = min(0.0, 1.0 / beta - 3.0, 2.0 / beta - 5.0) - bm.ENVELOPE_SLACK
    assert fit.threshold == pytest.approx(expected)
    assert fit.threshold == pytest.approx(-0.2)  # beta = 1/3
    assert fit.passed


def test_cone_torus_envelope_lines(cone_bg):
    rep = bm.derivative_envelope_scan(cone_bg)
    assert rep["passed"]
    floors = {row["name"]: row["floor"] for row in rep["lines"]}
    assert len(floors) == 12
    # beta = 1/3: 1/beta - 1 = 2, 1/beta - 2 = 1, 2/beta - 4 = 2
    assert floors["d1 g_11"] == 0.0
    assert floors["d1 g_n1"] == 1.0
    assert floors["d1 g_nn"] == 0.0
    assert floors["dn g_n1"] == pytest.approx(1.0)
    assert floors["dn g_nn"] == pytest.approx(2.0)
    assert floors["didjb g_nn (sum ij)"] == 0.0
    assert floors["dn djb g_nl (sum jl)"] == pytest.approx(1.0)
    assert floors["di dnb g_nn (sum i)"] == pytest.approx(2.0)
    assert floors["dn dnb g_nn"] == pytest.approx(2.0)
    assert floors["dn dn g_n1 (no curvature use)"] == pytest.approx(0.0)


def test_cone_torus_christoffel_classes(cone_bg):
    rep = bm.christoffel_symbols(cone_bg)
    assert rep["passed"]
    classes = [row["cls"] for row in rep["combos"]]
    assert classes == ["C", "C0", "C0", "C", "C0", "C0"]
    for row in rep["combos"]:
        if row["cls"] == "C":
            assert np.isfinite(row["seminorm"])


def test_cone_torus_ricci_potential(cone_bg):
    rep = bm.ricci_potential_F(cone_bg)
    assert rep["passed"]
    assert rep["residual"] < 1e-6
    assert rep["holder_rel_change"] < 0.1
    assert rep["ddbarF_rel_change"] < 0.1
    assert np.isfinite(rep["ddbarF_sup"])


def test_cone_torus_model_exact_zero():
    spec = bm.GeometrySpec(
        variant="cone_torus", rho_preset="one", rho_amplitude=0.0, model=True
    )
    bg = bm.build_background(spec, ConeParams(beta=1 / 3, lam=1.0))
    ct = bm.curvature_tensor(bg)
    assert ct["passed"]
    assert ct["sup_R"] < 1e-8
    fit = bm.curvature_derivative_scan(bg)
    assert fit.exact_zero and fit.passed
    env = bm.derivative_envelope_scan(bg)
    assert env["passed"]
    assert all(row["fit"]["exact_zero"] for row in env["lines"])
    ch = bm.christoffel_symbols(bg)
    assert ch["passed"]


# ---------------------------------------------------------------------------
# p1_marked
# ---------------------------------------------------------------------------


def test_p1_construction_checks(p1_bg):
    rep = p1_bg.positivity_report()
    assert rep["passed"] and rep["min_eigenvalue"] > 0.5
    assert p1_bg.five_term_error() < 1e-10
    assert p1_bg.pipeline_sample_error() < 1e-6
    assert p1_bg.lower_bound_report()["passed"]


def test_p1_a0_positive_and_symmetric(p1_bg):
    rep = p1_bg.a0_report()
    assert rep["passed"]
    assert rep["max_rel_err"] < 1e-3
    exacts = [row["a0_exact"] for row in rep["points"]]
    # the three marked points are related by a rotation symmetry
    assert np.allclose(exacts, exacts[0], rtol=1e-12)


def test_p1_chart_rotation_symmetry(p1_bg):
    """K at rotation-equivalent points agrees across the three charts.

    z -> omega z maps marked point 0 to marked point 1 and preserves
    the divisor, the bundle weight, and the background, so the Gauss
    curvature pulled to straightened coordinates must coincide under
    zn -> omega^{1/3} zn.
    """
    ch0, ch1 = p1_bg._charts[0], p1_bg._charts[1]
    rng = np.random.default_rng(3)
    zn = (0.05 + 0.4 * rng.random(12)) * np.exp(0.6j * rng.random(12))
    rot = np.exp(2j * np.pi / 9.0)
    k0 = ch0.call("k_n", zn)
    k1 = ch1.call("k_n", rot * zn)
    assert np.abs(k0 - k1).max() < 1e-11 * np.abs(k0).max()
    g0 = ch0.call("g_n", zn)
    g1 = ch1.call("g_n", rot * zn)
    assert np.abs(g0 - g1).max() < 1e-12 * np.abs(g0).max()


def test_p1_curvature_scans(p1_bg):
    ct = bm.curvature_tensor(p1_bg)
    assert ct["passed"]
    fit = bm.curvature_derivative_scan(p1_bg)
    assert fit.passed and fit.threshold == pytest.approx(-0.2)


def test_p1_envelope_lines(p1_bg):
    rep = bm.derivative_envelope_scan(p1_bg)
    assert rep["passed"]
    floors = {row["name"]: row["floor"] for row in rep["lines"]}
    assert floors == {"dn g_nn": pytest.approx(2.0),
                      "dn dnb g_nn": pytest.approx(2.0)}


def test_p1_christoffel_decay(p1_bg):
    rep = bm.christoffel_symbols(p1_bg)
    assert rep["passed"]
    for row in rep["combos"]:
        assert row["fit"]["exponent"] > 0.0


def test_p1_ricci_potential(p1_bg):
    rep = bm.ricci_potential_F(p1_bg)
    assert rep["passed"]
    assert rep["residual"] < 1e-6
    assert rep["exactness_integral"] < 1e-8
    assert rep["holder_rel_change"] < 0.1
    assert rep["ddbarF_rel_change"] < 0.1


def test_p1_ricci_potential_constant_limit(p1_bg):
    """F approaches F0 - log(lam b^2 rho(p)^{1/b} / g0(p)) at the divisor."""
    ctx = p1_bg.ctx
    params = p1_bg.params
    for p, ch in zip(gp1.MARKED_POINTS, p1_bg._charts):
        limit_log = np.log(
            params.lam * params.beta**2 * ch.rho0 ** (1.0 / params.beta) / ch.g00
        )
        z = p + 1e-6 * np.exp(1j * np.array([0.3, 2.1, 4.0]))
        f_near = ctx.sample(ctx.f_t, z).real
        f0_near = ctx.sample(ctx.f0_t, z).real
        assert np.abs(f_near - (f0_near - limit_log)).max() < 1e-2


def test_p1_fubini_study_curvature(p1_bg):
    rep = p1_bg.fs_curvature_report()
    assert rep["passed"]
    assert rep["variance"] < 1e-6
    assert rep["mean"] == pytest.approx(1.0, abs=1e-8)
