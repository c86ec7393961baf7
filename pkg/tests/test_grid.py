import numpy as np
import pytest

from edgeflat.grid import ConeGrid


def test_radial_nodes_are_cell_midpoints():
    g = ConeGrid(n_r=16, n_theta=8)
    assert g.dr == pytest.approx(1.0 / 16)
    assert g.radial_nodes[0] == pytest.approx(0.5 / 16)
    assert g.radial_nodes[-1] == pytest.approx(1.0 - 0.5 / 16)
    assert np.all(np.diff(g.radial_nodes) > 0)


def test_validation():
    with pytest.raises(ValueError, match="n_r"):
        ConeGrid(n_r=4, n_theta=8)
    with pytest.raises(ValueError, match="n_theta"):
        ConeGrid(n_r=16, n_theta=7)
    with pytest.raises(ValueError, match="r_max"):
        ConeGrid(n_r=16, n_theta=8, r_max=0.0)
    with pytest.raises(ValueError, match="frame"):
        ConeGrid(n_r=16, n_theta=8, frame="polar")
    with pytest.raises(ValueError, match="n_tangential"):
        ConeGrid(n_r=16, n_theta=8, n_tangential=(5,))


def test_shape_with_tangential_directions():
    g = ConeGrid(n_r=16, n_theta=8, n_tangential=(4,))
    assert g.shape == (16, 8, 4, 4)
    assert g.n_tan_directions == 1
    assert g.tangential_cell_measure() == pytest.approx(1.0 / 16)


def test_cone_area_is_exact():
    # midpoint rule integrates the density r exactly
    g = ConeGrid(n_r=32, n_theta=16, r_max=0.75)
    beta = 0.3
    assert g.cone_disk_area(beta) == pytest.approx(beta * np.pi * 0.75**2, rel=1e-13)


def test_xi_zeta_nodes_consistent():
    g = ConeGrid(n_r=8, n_theta=8)
    beta = 0.25
    xi = g.xi()
    zeta = g.zeta(beta)
    assert np.allclose(np.abs(zeta), np.abs(xi) ** (1.0 / beta))
    assert np.allclose(np.angle(zeta), np.angle(xi))


def test_annulus_index_dyadic():
    g = ConeGrid(n_r=64, n_theta=8)
    r = np.array([1.0, 0.51, 0.5, 0.26, 0.25, 0.01])
    # annulus j is (r_max 2^-(j+1), r_max 2^-j]
    assert list(g.annulus_index(r)) == [0, 0, 1, 1, 2, 6]


def test_innermost_levels_and_off_rim():
    g = ConeGrid(n_r=64, n_theta=8)
    lev = g.annulus_index(g.radial_nodes)
    inner = g.innermost_levels(2)
    assert set(inner) == {lev.max(), sorted(set(lev))[-2]}
    mask = g.off_rim_mask(2)
    assert mask.shape == (64,)
    assert not mask[0] and not mask[1] and mask[-1]


def test_refined_doubles_resolution():
    g = ConeGrid(n_r=16, n_theta=8, n_tangential=(4,))
    f = g.refined()
    assert f.n_r == 32 and f.n_theta == 16 and f.n_tangential == (8,)
    assert f.r_max == g.r_max
