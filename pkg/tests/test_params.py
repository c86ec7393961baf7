import dataclasses

import pytest

from edgeflat.params import ConeParams


def test_defaults():
    p = ConeParams(beta=1.0 / 3.0)
    assert p.alpha == 0.5
    assert p.lam == 0.1
    # epsilon defaults to beta / 4
    assert p.epsilon == pytest.approx(p.beta / 4.0)


@pytest.mark.parametrize("beta", [0.0, 0.5, -0.1, 0.7, 1.0])
def test_beta_range_is_open(beta):
    with pytest.raises(ValueError, match="beta"):
        ConeParams(beta=beta)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.2])
def test_alpha_range(alpha):
    with pytest.raises(ValueError, match="alpha"):
        ConeParams(beta=0.3, alpha=alpha)


def test_positive_fields():
    # lam = 0 is legal (degenerate background, omega = omega_0).
    assert ConeParams(beta=0.3, lam=0.0).lam == 0.0
    with pytest.raises(ValueError, match="lam"):
        ConeParams(beta=0.3, lam=-0.1)
    with pytest.raises(ValueError, match="epsilon"):
        ConeParams(beta=0.3, epsilon=-1.0)
    with pytest.raises(ValueError, match="kappa"):
        ConeParams(beta=0.3, kappa=0.0)


def test_frozen():
    p = ConeParams(beta=0.3)
    with pytest.raises(dataclasses.FrozenInstanceError):
        p.beta = 0.4


def test_decay_hypothesis():
    # alpha * beta < 1 - 2 beta
    ok = ConeParams(beta=1.0 / 3.0, alpha=0.5)
    assert ok.decay_hypothesis_ok
    ok.require_decay_hypothesis()

    bad = ConeParams(beta=0.45, alpha=0.9)
    assert not bad.decay_hypothesis_ok
    with pytest.raises(ValueError, match="0.4"):
        bad.require_decay_hypothesis()


def test_with_replaces():
    p = ConeParams(beta=0.3, alpha=0.5)
    q = p.with_(alpha=0.7)
    assert q.alpha == 0.7 and q.beta == 0.3
    assert p.alpha == 0.5
