"""Dyadic-annulus decay fits.

Every quantitative decay or boundedness claim of the form
Q = O(radius**gamma) near the cone point is checked the same way: take
the maximum of |Q| over each dyadic annulus, discard the innermost
annulus (dominated by closure/interpolation error), and fit a power law
through the remaining per-annulus maxima by least squares in log-log
coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: below this fraction of the data scale a fit degenerates to "exact zero"
ZERO_FRACTION = 1e-12


@dataclass(frozen=True)
class DecayFit:
    """Result of a log-log power fit over dyadic annuli.

    exponent is the fitted slope d log Q / d log(radius); a positive
    value means decay toward the cone point.  scale records the radial
    variable the exponent refers to ("xi" for r = |xi| = |zeta|**beta,
    "zeta" for |zeta|; the two slopes differ by the factor beta).
    """

    exponent: float
    intercept: float
    stderr: float
    levels: tuple
    radii: tuple
    maxima: tuple
    dropped_innermost: tuple
    scale: str = "xi"
    threshold: float | None = None
    passed: bool | None = None
    exact_zero: bool = False
    extrapolated: float = 0.0

    def summary(self) -> dict:
        return {
            "exponent": self.exponent,
            "stderr": self.stderr,
            "n_annuli": len(self.levels),
            "scale": self.scale,
            "threshold": self.threshold,
            "passed": self.passed,
            "exact_zero": self.exact_zero,
            "extrapolated": self.extrapolated,
            "radii": list(self.radii),
            "maxima": list(self.maxima),
        }


def annulus_maxima(radii, values, r_max=None):
    """Per-dyadic-annulus maxima of |values|.

    Annulus j collects radii in (r_max * 2**-(j+1), r_max * 2**-j].
    Returns (levels, radii_at_max, maxima) sorted from the outermost
    annulus inward; empty annuli are skipped.  The abscissa is the
    radius where the maximum is attained, so a pure power law fits
    exactly even when deep annuli hold a single node.
    """
    radii = np.asarray(radii, dtype=float).ravel()
    vals = np.abs(np.asarray(values)).ravel()
    if radii.shape != vals.shape:
        raise ValueError("radii and values must have matching sizes")
    if r_max is None:
        r_max = float(radii.max())
    with np.errstate(divide="ignore"):
        lev = np.maximum(np.ceil(-np.log2(radii / r_max) - 1.0 + 1e-12), 0).astype(int)
    levels, centers, maxima = [], [], []
    for j in np.unique(lev):
        sel = np.flatnonzero(lev == j)
        at = sel[np.argmax(vals[sel])]
        levels.append(int(j))
        centers.append(float(radii[at]))
        maxima.append(float(vals[at]))
    return np.array(levels), np.array(centers), np.array(maxima)


def dyadic_decay_fit(
    radii,
    values,
    *,
    scale="xi",
    threshold=None,
    r_max=None,
    min_annuli=4,
    drop_innermost=1,
    data_scale=None,
):
    """Fit max-per-annulus |values| ~ C * radius**gamma.

    Raises ValueError when fewer than ``min_annuli`` annuli survive after
    dropping the innermost ``drop_innermost`` levels.  When the retained
    maxima all sit below ZERO_FRACTION times the data scale the fit is
    reported as an exact-zero pass instead of a slope.
    """
    levels, centers, maxima = annulus_maxima(radii, values, r_max=r_max)
    if drop_innermost > 0 and len(levels) > drop_innermost:
        keep = slice(0, len(levels) - drop_innermost)
        dropped = tuple(zip(levels[keep.stop:].tolist(), maxima[keep.stop:].tolist()))
        levels, centers, maxima = levels[keep], centers[keep], maxima[keep]
    else:
        dropped = ()
    if len(levels) < min_annuli:
        raise ValueError(
            f"insufficient annuli for a decay fit: have {len(levels)}, need {min_annuli}"
        )
    if data_scale is None:
        data_scale = max(maxima.max(), 1.0)
    if maxima.max() <= ZERO_FRACTION * data_scale:
        fit = DecayFit(
            exponent=float("inf"),
            intercept=0.0,
            stderr=0.0,
            levels=tuple(levels.tolist()),
            radii=tuple(centers.tolist()),
            maxima=tuple(maxima.tolist()),
            dropped_innermost=dropped,
            scale=scale,
            threshold=threshold,
            passed=True,
            exact_zero=True,
            extrapolated=0.0,
        )
        return fit
    # guard against exact zeros in individual annuli
    floor = ZERO_FRACTION * data_scale
    logs = np.log(np.maximum(maxima, floor))
    x = np.log(centers)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, res, _, _ = np.linalg.lstsq(A, logs, rcond=None)
    slope, intercept = float(coef[0]), float(coef[1])
    dof = max(len(x) - 2, 1)
    resid = logs - A @ coef
    sigma2 = float(resid @ resid) / dof
    sxx = float(((x - x.mean()) ** 2).sum())
    stderr = float(np.sqrt(sigma2 / sxx)) if sxx > 0 else float("inf")
    # polynomial extrapolation toward r = 0 through the deepest retained
    # annuli; degree 2 keeps the error at the cube of the tip radius
    k = min(3, len(centers))
    if k == 1:
        extrap = float(maxima[-1])
    else:
        coef = np.polyfit(centers[-k:], maxima[-k:], k - 1)
        extrap = max(float(np.polyval(coef, 0.0)), 0.0)
    passed = None if threshold is None else bool(slope >= threshold)
    return DecayFit(
        exponent=slope,
        intercept=intercept,
        stderr=stderr,
        levels=tuple(levels.tolist()),
        radii=tuple(centers.tolist()),
        maxima=tuple(maxima.tolist()),
        dropped_innermost=dropped,
        scale=scale,
        threshold=threshold,
        passed=passed,
        exact_zero=False,
        extrapolated=float(extrap),
    )


def rescale_exponent(fit: DecayFit, beta: float, to_scale: str) -> float:
    """Convert a fitted exponent between the xi and zeta radial scales.

    |zeta| = r**(1/beta), so an exponent gamma in r corresponds to
    gamma * beta in |zeta|.
    """
    if fit.scale == to_scale:
        return fit.exponent
    if fit.scale == "xi" and to_scale == "zeta":
        return fit.exponent * beta
    if fit.scale == "zeta" and to_scale == "xi":
        return fit.exponent / beta
    raise ValueError(f"unknown scale conversion {fit.scale} -> {to_scale}")
