"""Parameter records for cone-singular geometries."""

from __future__ import annotations

from dataclasses import dataclass, replace


@dataclass(frozen=True)
class ConeParams:
    """Analytic parameters of an edge-metric problem.

    Attributes
    ----------
    beta : float
        Cone angle divided by 2*pi.  Must lie in the open interval (0, 1/2).
    alpha : float
        Holder exponent used by seminorms and decay targets, in (0, 1).
    lam : float
        Coefficient of the edge potential |s|_h^(2*beta) added to the
        smooth background form.
    epsilon : float
        Barrier exponent.  Defaults to beta / 4 when not supplied.
    L : float or None
        Constant in the exponential weight of the Laplacian-bound test
        quantity.  When None it is derived from measured curvature
        (2 - min of the mixed bisectional component, floored at 1).
    kappa : float or None
        Barrier coefficient in the same test quantity.  When None a
        default of 1.0 is used by the estimate suite.
    """

    beta: float
    alpha: float = 0.5
    lam: float = 0.1
    epsilon: float | None = None
    L: float | None = None
    kappa: float | None = None

    def __post_init__(self):
        if not 0.0 < self.beta < 0.5:
            raise ValueError(
                f"beta must lie in the open interval (0, 0.5); got {self.beta!r}"
            )
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(
                f"alpha must lie in the open interval (0, 1); got {self.alpha!r}"
            )
        if not self.lam >= 0.0:
            raise ValueError(f"lam must be nonnegative; got {self.lam!r}")
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", self.beta / 4.0)
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive; got {self.epsilon!r}")
        if self.L is not None and not self.L > 0.0:
            raise ValueError(f"L must be positive when given; got {self.L!r}")
        if self.kappa is not None and not self.kappa > 0.0:
            raise ValueError(f"kappa must be positive when given; got {self.kappa!r}")

    @property
    def decay_hypothesis_ok(self) -> bool:
        """True when alpha*beta < 1 - 2*beta.

        This inequality is required by the auxiliary second-derivative
        decay result; callers relying on that result must refuse to run
        when it fails.
        """
        return self.alpha * self.beta < 1.0 - 2.0 * self.beta

    def require_decay_hypothesis(self):
        if not self.decay_hypothesis_ok:
            raise ValueError(
                "decay hypothesis alpha*beta < 1 - 2*beta violated: "
                f"alpha*beta = {self.alpha * self.beta:.6g}, "
                f"1 - 2*beta = {1.0 - 2.0 * self.beta:.6g}"
            )

    def with_(self, **kw) -> "ConeParams":
        return replace(self, **kw)
