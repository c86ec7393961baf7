"""Closed n = 1 geometry: the sphere with three marked points.

The divisor is the zero set of s(z) = z^3 - 1 (the cube roots of unity),
a section of the degree-3 bundle, with bundle metric h = FS^3 * exp(-phi)
for a smooth weight phi.  The class condition k*(1 - beta) = 2 on the
sphere forces beta = 1/3 at k = 3 marked points.  The smooth background
omega_0 is Fubini-Study of area 4*pi (density 2/(1+|z|^2)^2, Gaussian
curvature 1) and the edge background is

    omega = omega_0 + lam * i ddbar |s|_h^(2 beta).

All global solves live on the hexagonal torus through the degree-3 cover
of hexcover, where the cone points become smooth; the z-chart closed
forms below are used for sampling, local-patch diagnostics, and oracles.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import hexcover as hx
from .params import ConeParams

K_MARKED = 3
MARKED_POINTS = hx.MARKED_Z

# d(xi)/d|u - c| at the branch points: z - p ~ A (u - c)^3 with
# |A| = sqrt(3) |v1|, and xi = |z - p|^beta with beta = 1/3.
XI_PER_CELL = float((np.sqrt(3.0) * abs(hx.V1)) ** (1.0 / 3.0))


def _to_complex(z):
    return np.asarray(z, dtype=complex)


@dataclass(frozen=True)
class P1Geometry:
    """Parameter record plus z-chart closed forms.

    weight is the coefficient q of the bundle weight
    phi(z) = q * (|z|^2 - 1)/(|z|^2 + 1) (a smooth height function on the
    sphere); q = 0 gives the symmetric bundle metric for which the F_0
    equation has the exact solution F_0 = const.
    """

    params: ConeParams
    weight: float = 0.15

    def __post_init__(self):
        beta = self.params.beta
        if abs(K_MARKED * (1.0 - beta) - 2.0) > 1e-12:
            raise ValueError(
                "class condition k*(1-beta) = 2 fails for k = 3: "
                f"beta must be 1/3, got {beta!r}"
            )

    # ---- z-chart scalars ----------------------------------------------------

    def fs_density(self, z):
        """Metric density of omega_0 (area 4*pi): 2/(1+|z|^2)^2."""
        z = _to_complex(z)
        return 2.0 / (1.0 + np.abs(z) ** 2) ** 2

    def phi_weight(self, z):
        z = _to_complex(z)
        a = np.abs(z) ** 2
        return self.weight * (a - 1.0) / (a + 1.0)

    def s_h_squared(self, z):
        """|s|_h^2 = |z^3-1|^2 exp(-phi) / (1+|z|^2)^3."""
        z = _to_complex(z)
        return (
            np.abs(z**3 - 1.0) ** 2
            * np.exp(-self.phi_weight(z))
            / (1.0 + np.abs(z) ** 2) ** 3
        )

    def psi(self, z):
        """The edge potential |s|_h^(2 beta)."""
        return self.s_h_squared(z) ** self.params.beta

    def local_rho(self, j: int, zeta):
        """rho near marked point j, where |s|_h^(2b) = rho |zeta|^(2b).

        Uses the exact factorization z^3 - 1 = (z - p)(z^2 + p z + p^2)
        at p^3 = 1, so rho is smooth and positive on the whole chart.
        """
        p = MARKED_POINTS[j]
        z = p + _to_complex(zeta)
        q = z * z + p * z + p * p
        base = (
            np.abs(q) ** 2
            * np.exp(-self.phi_weight(z))
            / (1.0 + np.abs(z) ** 2) ** 3
        )
        return base ** self.params.beta

    def make_context(self, n: int) -> "P1Context":
        return P1Context(self, hx.HexTorus(n))


class P1Context:
    """Torus-discretized fields of a P1Geometry.

    Scalar conformal densities are stored in the torus coordinate u: a
    Kahler form sigma = i * dens * du wedge dubar integrates to
    (2/3) * integrate_flat(dens) over the sphere (factor 2 from
    i du dubar = 2 dx dy, factor 1/3 from the covering degree).
    """

    def __init__(self, geometry: P1Geometry, torus: hx.HexTorus):
        self.geometry = geometry
        self.torus = torus

    # ---- chart-stable pullbacks ----------------------------------------------

    @cached_property
    def nodes_u(self) -> np.ndarray:
        return self.torus.nodes

    @cached_property
    def nodes_z(self) -> np.ndarray:
        return hx.cover(self.nodes_u)

    @cached_property
    def _inv_chart(self):
        return hx.cover_inverted_chart(self.nodes_u)

    @cached_property
    def jac_sq(self) -> np.ndarray:
        """|dz/du|^2 / (1+|z|^2)^2, evaluated in whichever chart is safe.

        This is the pullback density of the unit Fubini-Study form
        i dz dzbar/(1+|z|^2)^2; both charts give identical values.
        """
        z = self.nodes_z
        dz = hx.cover_jacobian(self.nodes_u)
        zi, dzi = self._inv_chart
        big = np.abs(z) > 1.0
        direct = np.abs(dz) ** 2 / (1.0 + np.abs(z) ** 2) ** 2
        flipped = np.abs(dzi) ** 2 / (1.0 + np.abs(zi) ** 2) ** 2
        return np.where(big, flipped, direct)

    @cached_property
    def w0(self) -> np.ndarray:
        """Conformal density of omega_0 on the torus (2 * jac_sq)."""
        return 2.0 * self.jac_sq

    @cached_property
    def phi_t(self) -> np.ndarray:
        """Bundle weight pulled back (chart-free formula)."""
        z = self.nodes_z
        a = np.abs(z) ** 2
        vals = (a - 1.0) / (a + 1.0)
        zi = self._inv_chart[0]
        ai = np.abs(zi) ** 2
        vals = np.where(np.abs(z) > 1.0, (1.0 - ai) / (1.0 + ai), vals)
        return self.geometry.weight * vals

    @cached_property
    def psi_t(self) -> np.ndarray:
        """|s|_h^(2 beta) pulled back; real-analytic on the torus."""
        z = self.nodes_z
        zi = self._inv_chart[0]
        big = np.abs(z) > 1.0
        # |z^3-1|^2/(1+|z|^2)^3 = |1-zi^3|^2/(1+|zi|^2)^3 in the 1/z chart
        zsafe = np.where(big, 0.0, z)
        direct = np.abs(zsafe**3 - 1.0) ** 2 / (1.0 + np.abs(zsafe) ** 2) ** 3
        flipped = np.abs(1.0 - zi**3) ** 2 / (1.0 + np.abs(zi) ** 2) ** 3
        base = np.where(big, flipped, direct) * np.exp(-self.phi_t)
        return base ** self.geometry.params.beta

    @cached_property
    def w_edge(self) -> np.ndarray:
        """Density of i ddbar psi on the torus (spectral)."""
        return self.torus.laplace_flat(self.psi_t)

    @cached_property
    def w(self) -> np.ndarray:
        """Conformal density of the edge background omega."""
        return self.w0 + self.geometry.params.lam * self.w_edge

    # ---- measures -------------------------------------------------------------

    def integrate_density(self, dens: np.ndarray) -> float:
        """Integral over the sphere of a form with torus density dens."""
        return (2.0 / 3.0) * self.torus.integrate_flat(dens)

    @cached_property
    def volume0(self) -> float:
        return self.integrate_density(self.w0)

    @cached_property
    def volume(self) -> float:
        return self.integrate_density(self.w)

    def mean_against(self, vals: np.ndarray, dens: np.ndarray) -> float:
        return self.integrate_density(vals * dens) / self.integrate_density(dens)

    # ---- Ricci potential --------------------------------------------------------

    @cached_property
    def f_h_density(self) -> np.ndarray:
        """Curvature density of the bundle metric h = FS^3 exp(-phi)."""
        return self.torus.laplace_flat(self.phi_t) + 3.0 * self.jac_sq

    @cached_property
    def f0_rhs_density(self) -> np.ndarray:
        """Density of Ric(omega_0) - (1-beta) * (curvature of h).

        Ric(omega_0) = omega_0 for the area-4*pi Fubini-Study metric, and
        the class condition makes the total integral vanish, so the
        Poisson problem below is solvable.
        """
        beta = self.geometry.params.beta
        return self.w0 - (1.0 - beta) * self.f_h_density

    @cached_property
    def f0_t(self) -> np.ndarray:
        """F_0 solving i ddbar F_0 = Ric(omega_0) - (1-beta) F_h.

        Flat-mean-zero representative (the additive constant is a gauge;
        it shifts c but not the solved potential).
        """
        return self.torus.solve_flat_poisson(self.f0_rhs_density)

    @cached_property
    def f_t(self) -> np.ndarray:
        """Ricci potential F = F_0 - log(|s|_h^(2-2b) omega/omega_0).

        The ratio psi^((1-b)/b) * W/W_0 extends real-analytically across
        the cone points (the zeros of psi and W_0 cancel exactly), so it
        is assembled as a single product before the log.
        """
        beta = self.geometry.params.beta
        ratio = self.psi_t ** ((1.0 - beta) / beta) * self.w / self.w0
        if not np.all(ratio > 0.0):
            raise ValueError("omega^n/omega_0^n ratio not positive")
        return self.f0_t - np.log(ratio)

    def ricci_density(self, dens: np.ndarray) -> np.ndarray:
        """Density of Ric(sigma) for a metric with torus density dens."""
        return -self.torus.laplace_flat(np.log(dens))

    def gauss_curvature(self, dens: np.ndarray) -> np.ndarray:
        """Gaussian curvature of a metric with torus density dens."""
        return self.ricci_density(dens) / dens

    # ---- sampling at sphere points ---------------------------------------------

    def sample(self, vals: np.ndarray, z_pts) -> np.ndarray:
        u = hx.preimage(np.asarray(z_pts, dtype=complex))
        return self.torus.interpolate(vals, u)

    def sample_at_u(self, vals: np.ndarray, u_pts) -> np.ndarray:
        return self.torus.interpolate(vals, u_pts)

    def derivatives_z(self, vals: np.ndarray, z_pts, order: int = 2):
        """Chain-rule derivatives of a torus scalar at sphere points.

        Returns a dict with keys among 'f', 'fz', 'fzb', 'fzz', 'fzzb',
        'fzzzb' (all spectral + exact Jacobian factors).  Points must stay
        in the finite chart (|z| bounded); the marked points themselves
        are excluded since derivatives may blow up there.
        """
        z_pts = np.asarray(z_pts, dtype=complex)
        u = hx.preimage(z_pts)
        jac = hx.cover_jacobian(u)
        hess = hx.cover_hessian(u)
        T = self.torus
        du = T.d_u(vals)
        dub = T.d_ubar(vals)
        out = {"f": T.interpolate(vals, u)}
        fu = T.interpolate(du, u)
        fub = T.interpolate(dub, u)
        out["fz"] = fu / jac
        out["fzb"] = fub / np.conj(jac)
        if order >= 2:
            duu = T.d_u(du)
            duub = T.d_ubar(du)
            fuu = T.interpolate(duu, u)
            fuub = T.interpolate(duub, u)
            out["fzz"] = (fuu - (hess / jac) * fu) / jac**2
            out["fzzb"] = fuub / (np.abs(jac) ** 2)
        if order >= 3:
            duuub = T.d_u(duub)
            fuuub = T.interpolate(duuub, u)
            fuub = T.interpolate(duub, u)
            out["fzzzb"] = (fuuub - (hess / jac) * fuub) / (
                jac**2 * np.conj(jac)
            )
        return out

    def marked_distance_xi(self, z=None, u=None) -> np.ndarray:
        """|zeta|^beta to the nearest marked point (local xi radius)."""
        if z is None:
            z = hx.cover(u)
        z = np.asarray(z, dtype=complex)
        d = np.min(
            np.stack([np.abs(z - p) for p in MARKED_POINTS]), axis=0
        )
        return d ** self.geometry.params.beta

    def edge_mask(self, cells: float = 2.0) -> np.ndarray:
        """Nodes at least `cells` grid cells from the marked points.

        Distance is measured in the xi scale, where one grid cell spans
        XI_PER_CELL / n near a branch point.  Quantities assembled from
        z^3 - 1 lose relative accuracy like 1/|z - p| at nodes adjacent
        to a marked point, so pointwise identity checks mask the two
        nearest rows of nodes (the torus analogue of dropping the two
        innermost annuli of a radial grid).
        """
        cut = cells * XI_PER_CELL / self.torus.n
        return self.marked_distance_xi(z=self.nodes_z) > cut

    def ricci_identity_residual(self, cells: float = 2.0) -> float:
        """max |Ric(omega) - i ddbar F|_omega away from the marked points.

        Ric(omega) = -i ddbar log W has to agree with i ddbar F because
        F collects exactly the log densities whose curvature contributions
        the construction prescribes; both sides are formed independently
        (W by assembling the edge potential, F by the Poisson solve plus
        closed-form logs), so the residual is a pipeline check, not a
        tautology.
        """
        resid = self.ricci_density(self.w) - self.torus.laplace_flat(self.f_t)
        scaled = np.abs(resid) / self.w
        return float(scaled[self.edge_mask(cells)].max())
