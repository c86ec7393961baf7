"""Local n = 2 model: cone disk times a flat tangential torus.

The background is omega = omega_0 + lam * i ddbar(rho |zeta|^{2beta}) for
a prescribed smooth positive rho; omega_0 is the flat product metric.
Everything derives from a single Kaehler potential that sympy
differentiates exactly, in two holomorphic pictures:

  zeta frame:  P = |z1|^2 + |zeta|^2 + lam rho (zeta zetab)^beta
  Psi frame:   P = |z1|^2 + beta^2 (zn znb)^(1/beta) + lam rho (zn znb)

with zn = zeta^beta the straightened transverse coordinate (principal
sector).  Powers are always taken of the real product zeta*zetab, so the
lambdified tables are branch-safe; derivatives across the cone are never
formed by differencing.  Dropping the transverse |zeta|^2 term of the
background (include_transverse_background=False) with rho = 1, lam = 1
gives the exact flat cone model, whose curvature vanishes identically.

Tensor assembly (metric, Christoffels, curvature, covariant derivative
of curvature) is numpy einsum over the 2 x 2 holomorphic index space,
applied to the lambdified derivative tables.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import sympy as sp

from .fields import MetricField
from .params import ConeParams

Z1, Z1B, ZE, ZEB = sp.symbols("z1 z1b ze zeb")
ZN, ZNB = sp.symbols("zn znb")

RHO_PRESETS = ("one", "radial", "tangential", "mixed")
# Positivity of 1 + a * X on |zeta| <= 1 given sup|X| per preset.
_RHO_AMPLITUDE_BOUND = {"one": 0.0, "radial": 0.9, "tangential": 0.9, "mixed": 0.45}


def rho_expression(preset: str, amplitude: float):
    """Smooth positive transverse weight rho(z1, zeta) as a sympy expr."""
    if preset not in RHO_PRESETS:
        raise ValueError(f"unknown rho preset {preset!r}; choose from {RHO_PRESETS}")
    bound = _RHO_AMPLITUDE_BOUND[preset]
    if abs(amplitude) > bound:
        raise ValueError(
            f"rho amplitude {amplitude!r} exceeds positivity bound {bound} "
            f"for preset {preset!r}"
        )
    t = ZE * ZEB
    cosx = sp.cos(sp.pi * (Z1 + Z1B))
    if preset == "one":
        return sp.Integer(1)
    if preset == "radial":
        return 1 + amplitude * t
    if preset == "tangential":
        return 1 + amplitude * cosx
    return 1 + amplitude * (t + (ZE + ZEB) / 2 * cosx)


class PotentialTables:
    """Lambdified mixed partials of a potential P(z1, zt, z1b, ztb).

    Index 0 is the tangential coordinate, index 1 the transverse one.
    ``table(hol, anti)`` returns the derivative with the given tuples of
    holomorphic / antiholomorphic variable indices applied.
    """

    def __init__(self, potential, hol, anti):
        self.potential = potential
        self.hol = hol
        self.anti = anti
        self._cache = {}

    def _func(self, hol_idx, anti_idx):
        key = (tuple(sorted(hol_idx)), tuple(sorted(anti_idx)))
        if key not in self._cache:
            e = self.potential
            for i in key[0]:
                e = sp.diff(e, self.hol[i])
            for j in key[1]:
                e = sp.diff(e, self.anti[j])
            args = (*self.hol, *self.anti)
            self._cache[key] = sp.lambdify(args, e, "numpy")
        return self._cache[key]

    def eval(self, hol_idx, anti_idx, t, z):
        """Evaluate at tangential t and transverse z (broadcast arrays)."""
        t = np.asarray(t, dtype=complex)
        z = np.asarray(z, dtype=complex)
        shape = np.broadcast(t, z).shape
        out = self._func(hol_idx, anti_idx)(t, z, np.conj(t), np.conj(z))
        return np.broadcast_to(np.asarray(out, dtype=complex), shape).copy()


def _tensor(tables, t, z, n_hol, n_anti):
    """Stack all derivative components into shape (..., 2^n_hol-layout).

    Returns an array with n_hol + n_anti trailing axes of length 2, the
    holomorphic derivative indices first.
    """
    shape = np.broadcast(np.asarray(t), np.asarray(z)).shape
    out = np.empty(shape + (2,) * (n_hol + n_anti), dtype=complex)
    for hol in np.ndindex(*(2,) * n_hol):
        for anti in np.ndindex(*(2,) * n_anti):
            out[(...,) + hol + anti] = tables.eval(hol, anti, t, z)
    return out


@dataclass(frozen=True)
class ConeTorusGeometry:
    """Cone-disk x torus background driven by a named rho preset.

    rho_amplitude scales the preset's deviation from 1 and is validated
    against the preset's positivity bound.  The tangential torus has
    period 1 in both real directions.
    """

    params: ConeParams
    rho_preset: str = "one"
    rho_amplitude: float = 0.0
    include_transverse_background: bool = True

    def __post_init__(self):
        rho_expression(self.rho_preset, self.rho_amplitude)  # validates

    @property
    def is_model(self) -> bool:
        return not self.include_transverse_background

    @cached_property
    def rho(self):
        return rho_expression(self.rho_preset, self.rho_amplitude)

    # ---- potentials ----------------------------------------------------------

    @cached_property
    def _tables_zeta(self) -> PotentialTables:
        beta = self.params.beta
        lam = self.params.lam
        pot = Z1 * Z1B + lam * self.rho * (ZE * ZEB) ** beta
        if self.include_transverse_background:
            pot = pot + ZE * ZEB
        return PotentialTables(pot, (Z1, ZE), (Z1B, ZEB))

    @cached_property
    def _tables_psi(self) -> PotentialTables:
        beta = self.params.beta
        lam = self.params.lam
        rho_psi = self.rho.subs(
            {ZE: ZN ** (1 / sp.Float(beta)), ZEB: ZNB ** (1 / sp.Float(beta))},
            simultaneous=True,
        )
        pot = Z1 * Z1B + lam * rho_psi * (ZN * ZNB)
        if self.include_transverse_background:
            # (zeta zetab) composed with zeta = zn^(1/beta).
            pot = pot + (ZN * ZNB) ** (1 / sp.Float(beta))
        return PotentialTables(pot, (Z1, ZN), (Z1B, ZNB))

    def tables(self, frame: str) -> PotentialTables:
        if frame == "zeta":
            return self._tables_zeta
        if frame == "psi":
            return self._tables_psi
        raise ValueError(f"frame must be 'zeta' or 'psi'; got {frame!r}")

    # ---- metric assembly -----------------------------------------------------

    def metric_matrix(self, t, z, frame: str = "zeta") -> np.ndarray:
        """g_{a b-bar} as (..., 2, 2); axis order (tangential, transverse)."""
        return _tensor(self.tables(frame), t, z, 1, 1)

    def metric_field(self, t, z, frame: str = "zeta") -> MetricField:
        g = self.metric_matrix(t, z, frame)
        return MetricField(
            [g[..., 0, 0].real, g[..., 1, 1].real],
            offdiag=g[..., 0, 1],
            frame=frame,
        )

    def metric_expanded_zeta(self, t, z) -> np.ndarray:
        """Five-term expansion of omega in the zeta frame.

        Independent of the potential route: assembled from rho and its
        derivatives term by term, for cross-validation.
        """
        beta = self.params.beta
        lam = self.params.lam
        rt = PotentialTables(self.rho, (Z1, ZE), (Z1B, ZEB))
        t = np.asarray(t, dtype=complex)
        z = np.asarray(z, dtype=complex)
        shape = np.broadcast(t, z).shape
        g = np.zeros(shape + (2, 2), dtype=complex)
        g[..., 0, 0] = 1.0
        if self.include_transverse_background:
            g[..., 1, 1] = 1.0
        r2b = (z * np.conj(z)).real ** beta
        r2bm1 = (z * np.conj(z)).real ** (beta - 1.0)
        rho = rt.eval((), (), t, z)
        # lam |zeta|^{2beta} ddbar rho
        for a in range(2):
            for b in range(2):
                g[..., a, b] += lam * r2b * rt.eval((a,), (b,), t, z)
        # lam beta |zeta|^{2beta-2} zeta  (d rho wedge dzetab)
        for a in range(2):
            g[..., a, 1] += lam * beta * r2bm1 * z * rt.eval((a,), (), t, z)
        # lam beta |zeta|^{2beta-2} zetab  (dzeta wedge dbar rho)
        for b in range(2):
            g[..., 1, b] += lam * beta * r2bm1 * np.conj(z) * rt.eval((), (b,), t, z)
        # lam beta^2 rho |zeta|^{2beta-2} dzeta dzetab
        g[..., 1, 1] += lam * beta**2 * rho * r2bm1
        return g

    # ---- scalar fields ---------------------------------------------------------

    def rho_values(self, t, z) -> np.ndarray:
        rt = PotentialTables(self.rho, (Z1, ZE), (Z1B, ZEB))
        return rt.eval((), (), t, z).real

    def f0_values(self, t, z) -> np.ndarray:
        """Reference potential: F0 = (1/beta - 1) log rho (exact).

        i ddbar F0 = Ric(omega_0) + (1-beta) i ddbar log |s|_h^2 with flat
        omega_0 and |s|_h^2 = rho^{1/beta} |zeta|^2; log|zeta|^2 is
        pluriharmonic away from the divisor.
        """
        beta = self.params.beta
        return (1.0 / beta - 1.0) * np.log(self.rho_values(t, z))

    def ricci_potential_values(self, t, z) -> np.ndarray:
        """F = F0 - log(|s|_h^{2-2beta} omega^n / omega_0^n).

        The singular powers cancel analytically; numerically the product
        |zeta|^{2-2beta} det g is formed before the log so only products
        of well-scaled factors appear.
        """
        beta = self.params.beta
        z = np.asarray(z, dtype=complex)
        g = self.metric_matrix(t, z, "zeta")
        det = (g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]).real
        r2 = (z * np.conj(z)).real
        ratio = r2 ** (1.0 - beta) * det
        rho = self.rho_values(t, z)
        if np.any(ratio <= 0.0):
            raise ValueError("volume ratio non-positive: lam too large")
        return self.f0_values(t, z) - (1.0 / beta - 1.0) * np.log(rho) - np.log(ratio)

    def a0_values(self, t, z=None) -> np.ndarray:
        """Leading transverse volume-ratio coefficient lam beta^2 rho|_{zeta=0}."""
        beta = self.params.beta
        t = np.asarray(t, dtype=complex)
        rho0 = self.rho_values(t, np.zeros_like(t))
        return self.params.lam * beta**2 * rho0

    # ---- curvature package -----------------------------------------------------

    def curvature_package(self, t, zn, derivative: bool = False, frame: str = "psi") -> dict:
        """Curvature data at straightened points zn (default Psi frame).

        Returns g, ginv, christoffel (Gamma[c,a,b] = Gamma^c_{ab}),
        riemann R[a,b,c,d] = R_{a b-bar c d-bar}, and the frame-invariant
        norms ``riemann_norm`` (|R|_g) and, if requested,
        ``covariant_derivative_norm`` (|DR|_g, both holomorphic and
        conjugate halves).  The zeta frame (transverse argument zeta,
        valid away from the cone point) computes the same invariants and
        serves as an independent cross-check of the index algebra.
        """
        tab = self.tables(frame)
        g = _tensor(tab, t, zn, 1, 1)
        dg = _tensor(tab, t, zn, 2, 1)  # dg[c,a,b] = d_c g_{a b-bar}
        ddg = _tensor(tab, t, zn, 2, 2)  # ddg[a,c,b,d] = d_a d_c d_bbar d_dbar P
        ginv = np.linalg.inv(g)

        # R_{a b-bar c d-bar} = -d_a d_bbar g_{c d-bar}
        #                      + g^{mu nu-bar} d_c g_{a nu-bar} d_dbar g_{mu b-bar}
        # ddg layout: d_a d_bbar g_{c d-bar} = P_{(a,c),(b,d)} = ddg[a,c,b,d].
        second = np.einsum("...acbd->...abcd", ddg)
        # ginv[n, m] = g^{m n-bar}; d_dbar g_{mu b-bar} = conj(d_d g_{b mu-bar}).
        corr = np.einsum(
            "...nm,...can,...dbm->...abcd", ginv, dg, np.conj(dg), optimize=True
        )
        riem = -second + corr

        # |R|^2 = R_{abcd} conj(R_{efgh}) g^{a e-bar} g^{f b-bar} g^{c g-bar} g^{h d-bar}
        r2 = np.einsum(
            "...abcd,...efgh,...ea,...bf,...gc,...dh->...",
            riem,
            np.conj(riem),
            ginv,
            ginv,
            ginv,
            ginv,
            optimize=True,
        )
        out = {
            "g": g,
            "ginv": ginv,
            "riemann": riem,
            "riemann_norm": np.sqrt(np.clip(r2.real, 0.0, None)),
        }
        gamma = np.einsum("...dc,...abd->...cab", ginv, dg, optimize=True)
        out["christoffel"] = gamma
        if not derivative:
            return out

        d3g = _tensor(tab, t, zn, 3, 1)  # P_{(m,c,a),(n)}
        d3g_mixed = _tensor(tab, t, zn, 3, 2)  # P_{(m,a,c),(b,d)}
        # d_m R: differentiate each factor.
        dsecond = np.einsum("...macbd->...mabcd", d3g_mixed)
        dginv = -np.einsum("...ni,...mij,...jk->...mnk", ginv, dg, ginv, optimize=True)
        # d_m conj(d_d g_{b k-bar}) = conj(P_{(d,b),(k,m)}) = conj(ddg[d,b,k,m]).
        dcorr = (
            np.einsum("...mnk,...can,...dbk->...mabcd", dginv, dg, np.conj(dg), optimize=True)
            + np.einsum("...nk,...mcan,...dbk->...mabcd", ginv, d3g, np.conj(dg), optimize=True)
            + np.einsum("...nk,...can,...dbkm->...mabcd", ginv, dg, np.conj(ddg), optimize=True)
        )
        driem = -dsecond + dcorr
        # Covariant correction on the two holomorphic lower slots.
        dcov = (
            driem
            - np.einsum("...nma,...nbcd->...mabcd", gamma, riem, optimize=True)
            - np.einsum("...nmc,...abnd->...mabcd", gamma, riem, optimize=True)
        )
        n2 = np.einsum(
            "...mabcd,...wefgh,...wm,...ea,...bf,...gc,...dh->...",
            dcov,
            np.conj(dcov),
            ginv,
            ginv,
            ginv,
            ginv,
            ginv,
            optimize=True,
        )
        out["covariant_derivative"] = dcov
        out["covariant_derivative_norm"] = np.sqrt(2.0 * np.clip(n2.real, 0.0, None))
        return out
