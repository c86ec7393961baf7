"""Continuity-method solver for the edge Monge-Ampere equation.

The perturbed-potential equation

    (omega + i ddbar u)^n = e^(t F - c) omega^n,      t in [0, 1],

is solved along a continuity path in t for both background variants.
At t = 1 the solution metric has vanishing Ricci curvature (n = 1: a
flat cone metric on the sphere away from the marked points).

n = 1 (marked sphere).  In conformal density form the equation reads
W + laplace(u) = W e^(tF-c), which is linear in laplace(u); the exact
spectral Poisson solve (`dim1_exact_solve`) therefore doubles as an
oracle for the Newton path.  The constant c makes the right-hand side
integrate to zero, so the discrete problem is compatible to rounding.

n = 2 (cone times torus slab).  A Dirichlet problem at r = r_max with a
manufactured target: the data F is produced by evaluating the discrete
Monge-Ampere operator on a reference potential u*, so the solver's
answer has an exact oracle on the same grid.  The two innermost radial
rings carry recessive-extrapolation closure conditions instead of
collocation rows (matching the radial discretization used everywhere
else); residual norms are taken over collocation rows.

Newton step.  Both problems update by solving

    Delta_ghat(du) = exp(-R) - 1,     R = log(omega_hat^n / omega^n) - (tF - c),

which is the exact Newton step for the density-ratio form of the
residual: it agrees with -R to first order, and when n = 1 it reaches
the solution in a single step because the density form is affine in u.
The linearized solve is preconditioned (n = 2) by banded per-mode
factorizations of a scaled model operator; the mean-value normalization
(n = 1) is enforced by projection, the spectral equivalent of bordering
the system with the quadrature functional.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from .background_metric import GeometrySpec, build_background
from .banded import BandedLU, dense_to_banded
from .cone_geometry import _radial_operator
from .fields import Field, MetricField
from .grid import ConeGrid
from .model_poisson import KL, KU, _mode_layout
from .params import ConeParams
from .radial import MU_CLAMP, NU_CLAMP

#: max-norm residual target for an accepted Newton stage
NEWTON_TOL = 1e-10
#: step halvings before the line search gives up
MAX_BACKTRACK = 30
#: continuation aborts when the t-step falls below this
DT_MIN = 1e-6
#: consecutive easy stages before the t-step doubles
EASY_STAGES = 3
#: Newton stages counted as easy when they need at most this many steps
EASY_ITERS = 5
#: singular values below tol * largest count as kernel directions
KERNEL_TOL = 1e-8

__all__ = [
    "SolveState",
    "PathRecord",
    "ContinuationError",
    "TorusProblem",
    "ConeProblem",
    "build_problem",
    "normalize_constant_c",
    "ma_residual",
    "newton_step",
    "continuity_solve",
    "dim1_exact_solve",
    "kernel_dimension",
    "kernel_spectrum",
    "equivalence_window",
    "volume_conservation_residual",
    "determinant_identity_residual",
]


@dataclass
class SolveState:
    """One point on the continuity path.

    newton_history holds the residual max-norms of the Newton iterates
    that produced this state (first entry: the residual before any
    step).  normalization_residual is the quadrature value of
    int u omega_0^n, which the solver keeps at rounding level for the
    closed geometry; for Dirichlet slab problems the boundary condition
    pins u instead and the integral is merely recorded.
    """

    t: float
    u: Field
    c: float
    newton_history: list = field(default_factory=list)
    normalization_residual: float = 0.0
    path: list = field(default_factory=list)


@dataclass(frozen=True)
class PathRecord:
    """Per-stage summary of the continuation."""

    t: float
    c: float
    newton_iters: int
    residual: float
    dt: float
    ratio_min: float
    ratio_max: float


class ContinuationError(RuntimeError):
    """Continuation failed; carries the path walked so far."""

    def __init__(self, message, path):
        super().__init__(message)
        self.path = path


def normalize_constant_c(F, t, metric, weights=None):
    """c = log of the omega^n-average of e^(tF).

    metric supplies the volume density: a MetricField (conformal density
    for a single diagonal entry, determinant otherwise) or a plain
    density array.  weights are extra quadrature weights per node
    (default uniform); only relative weights matter.  By the mean-value
    inequality inf tF <= c <= sup tF, with equality iff F is constant.
    """
    F = np.asarray(F, dtype=float)
    if isinstance(metric, MetricField):
        dens = metric.diag[0] if len(metric.diag) == 1 else metric.det()
    else:
        dens = np.asarray(metric, dtype=float)
    q = dens if weights is None else dens * np.asarray(weights, dtype=float)
    if np.any(q <= 0.0):
        raise ValueError("volume density must be positive")
    shift = float(np.max(t * F))
    return shift + float(np.log(np.sum(np.exp(t * F - shift) * q) / np.sum(q)))


# ---- n = 1: the marked sphere -------------------------------------------------


class TorusProblem:
    """Density form of the equation on the 3:1 torus cover of the sphere."""

    n = 1
    frame = "psi"

    def __init__(self, background):
        self.background = background
        self.ctx = background.ctx
        self.params = background.params
        self.F = self.ctx.f_t
        self.w = self.ctx.w
        self.w0 = self.ctx.w0

    def zero_potential(self):
        return np.zeros_like(self.w)

    def constant_c(self, t):
        return normalize_constant_c(self.F, t, MetricField([self.w], frame="psi"))

    def hat_density(self, u):
        return self.w + self.ctx.torus.laplace_flat(u)

    def residual(self, u, t, c):
        wh = self.hat_density(u)
        if np.any(wh <= 0.0):
            at = int(np.argmin(wh))
            raise ValueError(
                f"perturbed metric not positive: density {wh.ravel()[at]:.3e} "
                f"at node {np.unravel_index(at, wh.shape)}"
            )
        return np.log(wh / self.w) - (t * self.F - c)

    def residual_norm(self, resid):
        return float(np.max(np.abs(resid)))

    def is_positive(self, u):
        return bool(np.all(self.hat_density(u) > 0.0))

    def newton_delta(self, u, resid):
        # exact linearization of the density-ratio residual; the Poisson
        # solve projects out the quadrature-defect constant (bordered
        # normal equations collapse to this projection spectrally)
        wh = self.hat_density(u)
        rhs = wh * np.expm1(-resid)
        return self.ctx.torus.solve_flat_poisson(rhs)

    def normalize(self, u):
        return u - self.ctx.mean_against(u, self.w0)

    def normalization_residual(self, u):
        return float(self.ctx.integrate_density(u * self.w0))

    def equivalence_window(self, u):
        ratio = self.hat_density(u) / self.w
        return float(ratio.min()), float(ratio.max())

    def volume_residual(self, u):
        vol = self.ctx.integrate_density(self.hat_density(u))
        return abs(vol - self.ctx.volume) / self.ctx.volume

    def mean_log_ratio(self, u):
        wh = self.hat_density(u)
        return float(self.ctx.mean_against(np.log(wh / self.w), self.w))

    def mean_F(self):
        return float(self.ctx.mean_against(self.F, self.w))


# ---- n = 2: cone times torus slab ---------------------------------------------


class ConeProblem:
    """Dirichlet slab problem with a manufactured target potential.

    The reference potential u* = a phi(z1) r^2 (r_max^2 - r^2) vanishes
    at the rim, lies in the recessive-closure span of the radial scheme
    (angular mode zero, powers r^2 and r^4), and is edge-adapted in the
    transverse coordinate (r^2 = |zeta|^(2 beta)).  F is defined by
    evaluating the discrete operator on u* at t = 1 with c = 0, so the
    grid solution of the t = 1 problem is u* itself up to solver
    tolerance.  c stays 0 along the whole path: the volume normalization
    is a closed-geometry gauge with no local analogue, and the Dirichlet
    condition already pins additive constants.
    """

    n = 2
    frame = "xi"

    def __init__(self, background, amplitude=0.02):
        self.background = background
        self.geom = background.geom
        self.grid: ConeGrid = background.grid
        self.params: ConeParams = background.params
        grid = self.grid
        if grid.n_tan_directions != 1:
            raise ValueError("slab solver needs exactly one tangential direction")
        beta = self.params.beta
        self._rop = _radial_operator(grid)
        self._r = grid.radial_nodes.reshape(-1, 1, 1, 1)
        self._m = grid.theta_wavenumbers.reshape(1, -1, 1, 1)
        k = grid.tangential_wavevectors(0)
        self._kx = k.reshape(1, 1, -1, 1)
        self._ky = k.reshape(1, 1, 1, -1)
        zeta = grid.zeta(beta)[:, :, None, None]
        x = grid.tangential_nodes(0)
        t1 = (x[:, None] + 1j * x[None, :])[None, None]
        g = self.geom.metric_matrix(t1, zeta, "zeta")
        self.g = np.broadcast_to(g, grid.shape + (2, 2)).copy()
        det = (self.g[..., 0, 0] * self.g[..., 1, 1]
               - self.g[..., 0, 1] * self.g[..., 1, 0]).real
        if np.any(det <= 0.0) or np.any(self.g[..., 0, 0].real <= 0.0):
            raise ValueError("background metric not positive on the slab grid")
        self.det_g = det
        gi = np.empty_like(self.g)
        gi[..., 0, 0] = self.g[..., 1, 1] / det
        gi[..., 1, 1] = self.g[..., 0, 0] / det
        gi[..., 0, 1] = -self.g[..., 0, 1] / det
        gi[..., 1, 0] = -self.g[..., 1, 0] / det
        self.ginv = gi
        # zeta-plane area element per node, (1/beta) r^(2/beta - 1) dr dtheta
        rsh = grid.radial_nodes ** (2.0 / beta - 1.0) / beta
        self.volume_weights = (
            rsh[:, None, None, None]
            * np.ones(grid.shape)
            * (grid.dr * 2.0 * np.pi / grid.n_theta / grid.n_tangential[0] ** 2)
        )
        self._closure = self._closure_rows()
        self.amplitude = float(amplitude)
        x2 = x.reshape(-1, 1)
        phi = np.sin(2.0 * np.pi * x2) * np.cos(2.0 * np.pi * x2.T)
        rr = grid.radial_nodes.reshape(-1, 1, 1, 1) ** 2
        prof = rr * (grid.r_max**2 - rr)
        self.u_star = self.amplitude * phi[None, None] * prof * np.ones(grid.shape)
        k_star = self._k_matrix(self.hessian(self.u_star))
        detr = self._det_ratio(k_star)
        if np.any(detr <= 0.0):
            raise ValueError(
                "manufactured potential breaks positivity; lower the amplitude"
            )
        self.F = np.log(detr)

    # ---- discrete complex Hessian ---------------------------------------------

    def _hessian_modes(self, V):
        """Mode-space components of ddbar(u) from theta/tangential modes V.

        Transverse derivatives use the polar form of d_zeta d_zetabar on
        the straightened radius (chain rule r = |zeta|^beta folded in
        analytically); the Dirichlet value 0 at r_max enters the radial
        stencils.  Returns (h00, h01, h11) = (tangential, mixed,
        transverse) mode arrays; the mixed one is rolled to its shifted
        angular mode.
        """
        beta = self.params.beta
        r, m = self._r, self._m
        d1, d2 = self._rop.apply_derivatives(V, use_boundary=True)
        rb = r ** (-1.0 / beta)
        h11 = 0.25 * rb**2 * (beta**2 * (r**2 * d2 + r * d1) - m**2 * V)
        mult1 = 0.5 * (1j * self._kx + self._ky)
        W = mult1 * V
        d1w, _ = self._rop.apply_derivatives(W, use_boundary=True)
        h01 = np.roll(0.5 * rb * (beta * r * d1w - m * W), 1, axis=1)
        h00 = -0.25 * (self._kx**2 + self._ky**2) * V
        return h00, h01, h11

    def hessian(self, u):
        """Complex Hessian components (h00, h01, h11) at the nodes."""
        V = np.fft.fftn(np.asarray(u, dtype=complex), axes=(1, 2, 3))
        hm = self._hessian_modes(V)
        out = [np.fft.ifftn(h, axes=(1, 2, 3)) for h in hm]
        out[0] = out[0].real
        out[2] = out[2].real
        return tuple(out)

    def _k_matrix(self, hess):
        """K = g^(-1) ddbar(u), the well-scaled perturbation matrix."""
        h00, h01, h11 = hess
        h10 = np.conj(h01)
        gi = self.ginv
        k = np.empty(self.grid.shape + (2, 2), dtype=complex)
        k[..., 0, 0] = gi[..., 0, 0] * h00 + gi[..., 0, 1] * h10
        k[..., 0, 1] = gi[..., 0, 0] * h01 + gi[..., 0, 1] * h11
        k[..., 1, 0] = gi[..., 1, 0] * h00 + gi[..., 1, 1] * h10
        k[..., 1, 1] = gi[..., 1, 0] * h01 + gi[..., 1, 1] * h11
        return k

    @staticmethod
    def _det_ratio(k):
        """det(I + K) = omega_hat^n / omega^n pointwise."""
        return ((1.0 + k[..., 0, 0]) * (1.0 + k[..., 1, 1])
                - k[..., 0, 1] * k[..., 1, 0]).real

    def _positive(self, hess, detr):
        h00 = hess[0]
        return bool(np.all(self.g[..., 0, 0].real + h00 > 0.0)
                    and np.all(detr > 0.0))

    # ---- problem interface -----------------------------------------------------

    def zero_potential(self):
        return np.zeros(self.grid.shape)

    def constant_c(self, t):
        # local slab: the normalization constant is a closed-geometry
        # gauge; fixed to 0 and the Dirichlet data pins the potential
        return 0.0

    def residual(self, u, t, c):
        hess = self.hessian(u)
        detr = self._det_ratio(self._k_matrix(hess))
        if not self._positive(hess, detr):
            bad = int(np.argmin(detr))
            raise ValueError(
                f"perturbed metric not positive: det ratio {detr.ravel()[bad]:.3e} "
                f"at node {np.unravel_index(bad, detr.shape)}"
            )
        return np.log(detr) - (t * self.F - c)

    def residual_norm(self, resid):
        # collocation rows only; rings 0 and 1 carry closure conditions
        return float(np.max(np.abs(resid[2:])))

    def is_positive(self, u):
        hess = self.hessian(u)
        detr = self._det_ratio(self._k_matrix(hess))
        return self._positive(hess, detr)

    def _closure_rows(self):
        """Per-mode recessive extrapolation weights for rings 0 and 1."""
        nu, mu2 = _mode_layout(self.grid, self.params)
        shape = self.grid.shape[1:]
        rows = np.zeros((2, len(nu), 4))
        for val in np.unique(nu):
            if val >= NU_CLAMP:
                continue
            row = self._rop.closure_row(float(val))
            sel = (nu == val) & (mu2 <= MU_CLAMP**2)
            rows[0][sel] = row[0]
            rows[1][sel] = row[1]
        return rows.reshape((2,) + shape + (4,)), nu, mu2

    def _apply_closure(self, V):
        rows = self._closure[0]
        c0 = V[0] - np.einsum("...k,k...->...", rows[0], V[2:6])
        c1 = V[1] - np.einsum("...k,k...->...", rows[1], V[2:6])
        return c0, c1

    def _project_rows(self, values):
        """Zero the closure-row components of a physical field."""
        vhat = np.fft.fftn(np.asarray(values, dtype=complex), axes=(1, 2, 3))
        vhat[:2] = 0.0
        return np.fft.ifftn(vhat, axes=(1, 2, 3)).real

    @cached_property
    def _precond_lu(self):
        """Banded factors of a radially profiled model operator per mode.

        The transverse coefficient ghat^(zeta zetabar) interpolates
        between the cone scale at the tip and the flat background at
        the rim, so a single global scale clusters nothing; instead the
        cone-mode rows are scaled by the angular/tangential mean of the
        measured coefficient at each radius, leaving only the bounded
        in-plane variation for the Krylov iteration to absorb.
        """
        rop = self._rop
        r = rop.r
        nu, mu2 = self._closure[1], self._closure[2]
        beta = self.params.beta
        zeta_abs = np.abs(self.grid.zeta(beta))[:, :, None, None]
        cone_coeff = (self.ginv[..., 1, 1].real * beta**2
                      * zeta_abs ** (2.0 * beta - 2.0))
        c_r = cone_coeff.mean(axis=(1, 2, 3))
        b_r = self.ginv[..., 0, 0].real.mean(axis=(1, 2, 3))
        base_dense = rop.d2b + (1.0 / r)[:, None] * rop.d1b
        base = dense_to_banded(0.25 * c_r[:, None] * base_dense, KL, KU)
        bands = np.broadcast_to(base, (len(nu), rop.n, KL + KU + 1)).copy()
        bands[:, :, KL] -= (0.25 * c_r[None, :] * nu[:, None] ** 2 / r[None, :] ** 2
                            + 0.25 * mu2[:, None] * b_r[None, :])
        bands[:, :2, :] = 0.0
        bands[:, 0, KL] = 1.0
        bands[:, 1, KL] = 1.0
        for val in np.unique(nu):
            if val >= NU_CLAMP:
                continue
            row = rop.closure_row(float(val))
            sel = (nu == val) & (mu2 <= MU_CLAMP**2)
            bands[sel, 0, KL + 2:KL + 6] = -row[0]
            bands[sel, 1, KL + 1:KL + 5] = -row[1]
        return BandedLU(bands, KL, KU)

    def _precondition(self, y):
        grid = self.grid
        yhat = np.fft.fftn(y.reshape(grid.shape).astype(complex), axes=(1, 2, 3))
        rhs = np.moveaxis(yhat, 0, -1).reshape(-1, grid.n_r)
        x = self._precond_lu.solve(rhs)
        xhat = np.moveaxis(x.reshape(grid.shape[1:] + (grid.n_r,)), -1, 0)
        return np.fft.ifftn(xhat, axes=(1, 2, 3)).real.ravel()

    def newton_delta(self, u, resid, *, rtol):
        """Solve Delta_ghat(du) = expm1(-R) with closure rows at the tip."""
        grid = self.grid
        shape = grid.shape
        size = int(np.prod(shape))
        hess = self.hessian(u)
        k = self._k_matrix(hess)
        detr = self._det_ratio(k)
        gih = np.empty_like(self.g)  # ghat^(-1) = (I+K)^(-1) g^(-1)
        ik00 = 1.0 + k[..., 0, 0]
        ik11 = 1.0 + k[..., 1, 1]
        gi = self.ginv
        gih[..., 0, 0] = (ik11 * gi[..., 0, 0] - k[..., 0, 1] * gi[..., 1, 0]) / detr
        gih[..., 0, 1] = (ik11 * gi[..., 0, 1] - k[..., 0, 1] * gi[..., 1, 1]) / detr
        gih[..., 1, 0] = (ik00 * gi[..., 1, 0] - k[..., 1, 0] * gi[..., 0, 0]) / detr
        gih[..., 1, 1] = (ik00 * gi[..., 1, 1] - k[..., 1, 0] * gi[..., 0, 1]) / detr

        def matvec(x):
            V = np.fft.fftn(x.reshape(shape).astype(complex), axes=(1, 2, 3))
            hm = self._hessian_modes(V)
            h00 = np.fft.ifftn(hm[0], axes=(1, 2, 3))
            h01 = np.fft.ifftn(hm[1], axes=(1, 2, 3))
            h11 = np.fft.ifftn(hm[2], axes=(1, 2, 3))
            y = (gih[..., 0, 0] * h00 + gih[..., 0, 1] * np.conj(h01)
                 + gih[..., 1, 0] * h01 + gih[..., 1, 1] * h11).real
            yhat = np.fft.fftn(y.astype(complex), axes=(1, 2, 3))
            c0, c1 = self._apply_closure(V)
            yhat[0] = c0
            yhat[1] = c1
            return np.fft.ifftn(yhat, axes=(1, 2, 3)).real.ravel()

        b = self._project_rows(np.expm1(-resid)).ravel()
        op = LinearOperator((size, size), matvec=matvec, dtype=float)
        pre = LinearOperator((size, size), matvec=self._precondition, dtype=float)
        x0 = self._precondition(b)
        sol, info = gmres(op, b, x0=x0, M=pre, rtol=rtol, atol=0.0,
                          restart=30, maxiter=12)
        if info != 0:
            raise RuntimeError(f"linear solve failed: gmres info {info}")
        return sol.reshape(shape)

    def normalize(self, u):
        return u  # pinned by Dirichlet data

    def normalization_residual(self, u):
        return float(np.sum(u * self.volume_weights * self.det_g))

    def equivalence_window(self, u):
        k = self._k_matrix(self.hessian(u))
        tr = (2.0 + k[..., 0, 0] + k[..., 1, 1]).real
        det = self._det_ratio(k)
        disc = np.sqrt(np.maximum(tr**2 - 4.0 * det, 0.0))
        return (float(((tr - disc) / 2.0).min()),
                float(((tr + disc) / 2.0).max()))

    def volume_residual(self, u):
        # slab volumes differ by a boundary flux; reported, not conserved
        k = self._k_matrix(self.hessian(u))
        hat = np.sum(self._det_ratio(k) * self.det_g * self.volume_weights)
        ref = np.sum(self.det_g * self.volume_weights)
        return abs(hat - ref) / ref

    def mean_log_ratio(self, u):
        k = self._k_matrix(self.hessian(u))
        q = self.det_g * self.volume_weights
        return float(np.sum(np.log(self._det_ratio(k)) * q) / np.sum(q))

    def mean_F(self):
        q = self.det_g * self.volume_weights
        return float(np.sum(self.F * q) / np.sum(q))


def build_problem(spec: GeometrySpec, params: ConeParams, *, background=None,
                  amplitude=0.02):
    """Problem wrapper for a geometry spec; reuses a prebuilt background."""
    bg = background if background is not None else build_background(spec, params)
    if spec.variant == "p1_marked":
        return TorusProblem(bg)
    return ConeProblem(bg, amplitude=amplitude)


# ---- spec-level operations -----------------------------------------------------


def ma_residual(problem, u, t=None, c=None):
    """Pointwise log(omega_hat^n / omega^n) - (tF - c); errors if not positive.

    u may be a SolveState (t and c taken from it), a Field, or a plain
    array of potential values (t and c required).
    """
    if isinstance(u, SolveState):
        t, c = u.t, u.c
        u = u.u
    if t is None or c is None:
        raise TypeError("t and c are required unless a SolveState is given")
    values = u.values if isinstance(u, Field) else np.asarray(u)
    return problem.residual(values, t, c)


def _state_from(problem, u, t, c, history):
    return SolveState(
        t=t,
        u=Field(values=u, frame=problem.frame),
        c=c,
        newton_history=list(history),
        normalization_residual=problem.normalization_residual(u),
    )


def newton_step(problem, state: SolveState, *, newton_tol=NEWTON_TOL):
    """One backtracked Newton update at fixed (t, c).

    Solves the linearized equation, then halves the step until the
    perturbed metric stays positive and the residual norm decreases;
    the normalization is re-projected after acceptance.  Raises after
    MAX_BACKTRACK halvings.
    """
    u = np.array(state.u.values if isinstance(state.u, Field) else state.u)
    t, c = state.t, state.c
    resid = problem.residual(u, t, c)
    norm = problem.residual_norm(resid)
    if norm <= newton_tol:
        return _state_from(problem, u, t, c, state.newton_history + [norm])
    if problem.n == 1:
        delta = problem.newton_delta(u, resid)
    else:
        rtol = min(1e-4, max(1e-12, 0.05 * norm))
        delta = problem.newton_delta(u, resid, rtol=rtol)
    s = 1.0
    for _ in range(MAX_BACKTRACK + 1):
        trial = problem.normalize(u + s * delta)
        try:
            trial_resid = problem.residual(trial, t, c)
        except ValueError:
            s *= 0.5
            continue
        trial_norm = problem.residual_norm(trial_resid)
        if trial_norm < norm:
            return _state_from(problem, trial, t, c,
                               state.newton_history + [norm, trial_norm])
        s *= 0.5
    raise RuntimeError(f"line search exhausted after {MAX_BACKTRACK} halvings")


def _newton_stage(problem, u, t, c, *, newton_tol, max_newton):
    """Newton-iterate u at fixed (t, c) until the residual meets tol."""
    history = []
    resid = problem.residual(u, t, c)
    norm = problem.residual_norm(resid)
    history.append(norm)
    iters = 0
    while norm > newton_tol:
        if iters >= max_newton:
            raise RuntimeError(f"newton stalled at norm {norm:.3e}")
        if problem.n == 1:
            delta = problem.newton_delta(u, resid)
        else:
            rtol = min(1e-4, max(1e-12, 0.05 * norm))
            delta = problem.newton_delta(u, resid, rtol=rtol)
        s = 1.0
        accepted = False
        for _ in range(MAX_BACKTRACK + 1):
            trial = problem.normalize(u + s * delta)
            try:
                trial_resid = problem.residual(trial, t, c)
            except ValueError:
                s *= 0.5
                continue
            trial_norm = problem.residual_norm(trial_resid)
            if trial_norm < norm:
                u, resid, norm = trial, trial_resid, trial_norm
                accepted = True
                break
            s *= 0.5
        if not accepted:
            raise RuntimeError(
                f"line search exhausted after {MAX_BACKTRACK} halvings")
        history.append(norm)
        iters += 1
    return u, history, iters


def continuity_solve(spec: GeometrySpec, params: ConeParams, t_steps: int = 10, *,
                     background=None, amplitude=0.02, newton_tol=NEWTON_TOL,
                     max_newton=40, dt_min=DT_MIN):
    """Walk t: 0 -> 1 adaptively and return the t = 1 state.

    The t-step starts at 1/t_steps, halves whenever a Newton stage
    fails (positivity loss, stalled line search, or a linear-solve
    failure), and doubles after EASY_STAGES consecutive easy stages.
    Raises ContinuationError when the step underflows dt_min; the
    exception carries the path walked so far.
    """
    if t_steps < 1:
        raise ValueError("t_steps must be at least 1")
    problem = build_problem(spec, params, background=background,
                            amplitude=amplitude)
    u = problem.zero_potential()
    t = 0.0
    c = problem.constant_c(0.0)
    dt = 1.0 / t_steps
    path = []
    easy = 0
    last_history = [0.0]
    while t < 1.0:
        t_try = t + dt
        if t_try >= 1.0 - 1e-12:
            t_try = 1.0
        c_try = problem.constant_c(t_try)
        try:
            u_new, history, iters = _newton_stage(
                problem, u, t_try, c_try, newton_tol=newton_tol,
                max_newton=max_newton)
        except RuntimeError:
            dt *= 0.5
            easy = 0
            if dt < dt_min:
                raise ContinuationError(
                    f"continuation failed: t-step underflow below {dt_min:g} "
                    f"at t = {t:.6f}", path)
            continue
        t, u, c, last_history = t_try, u_new, c_try, history
        lo, hi = problem.equivalence_window(u)
        path.append(PathRecord(t=t, c=c, newton_iters=iters,
                               residual=history[-1], dt=dt,
                               ratio_min=lo, ratio_max=hi))
        if iters <= EASY_ITERS:
            easy += 1
            if easy >= EASY_STAGES:
                dt *= 2.0
                easy = 0
        else:
            easy = 0
    state = _state_from(problem, u, t, c, last_history)
    state.path = path
    return state


def dim1_exact_solve(spec: GeometrySpec, params: ConeParams, t: float, *,
                     background=None):
    """Exact n = 1 solve: laplace(u) = W (e^(tF - c) - 1), then normalize.

    The constant c makes the right-hand side integrate to zero (to
    rounding), so the spectral Poisson solve is compatible; the result
    solves the t-equation up to quadrature error and is the oracle the
    Newton path must match.
    """
    if spec.variant != "p1_marked":
        raise ValueError("dim1_exact_solve requires the p1_marked variant")
    problem = build_problem(spec, params, background=background)
    c = problem.constant_c(t)
    rhs = problem.w * np.expm1(t * problem.F - c)
    u = problem.ctx.torus.solve_flat_poisson(rhs)
    u = problem.normalize(u)
    resid = problem.residual(u, t, c)
    return _state_from(problem, u, t, c, [problem.residual_norm(resid)])


# ---- kernel surrogate ----------------------------------------------------------


def _flat_ddbar_matrix(n):
    """Dense d^2/(du dubar) on the n x n hex-periodic grid.

    Built from one-dimensional spectral differentiation matrices so it
    reproduces the FFT Laplacian exactly, Nyquist mode included.
    """
    k = np.fft.fftfreq(n, d=1.0 / n)
    fmat = np.fft.fft(np.eye(n), axis=0)
    d1 = np.fft.ifft(2j * np.pi * k[:, None] * fmat, axis=0)
    d2 = d1 @ d1
    eye = np.eye(n)
    return (np.kron(d2, eye) + np.kron(eye, d2) - np.kron(d1, d1)) / 3.0


def _kernel_singular_values(metric):
    if isinstance(metric, MetricField):
        if len(metric.diag) != 1:
            raise ValueError("kernel surrogate needs a conformal metric density")
        dens = metric.diag[0]
    else:
        dens = np.asarray(metric, dtype=float)
    if dens.ndim != 2 or dens.shape[0] != dens.shape[1]:
        raise ValueError("density must be a square torus sample array")
    if np.any(dens <= 0.0):
        raise ValueError("metric density must be positive")
    lap = _flat_ddbar_matrix(dens.shape[0])
    op = lap / dens.reshape(-1, 1)
    return np.linalg.svd(op, compute_uv=False)


def kernel_dimension(metric, *, tol=KERNEL_TOL):
    """Number of near-kernel directions of the metric Laplacian.

    Counts singular values of the dense discrete Laplacian below
    tol * largest; the continuum kernel is the constants, so the
    expected answer is 1 for any positive density.
    """
    sv = _kernel_singular_values(metric)
    return int(np.sum(sv < tol * sv[0]))


def kernel_spectrum(metric, count=6):
    """The `count` smallest singular values, ascending."""
    sv = _kernel_singular_values(metric)
    return sv[::-1][:count].copy()


# ---- invariants ----------------------------------------------------------------


def equivalence_window(problem, state: SolveState):
    """Eigenvalue range of ghat relative to g at the state."""
    u = state.u.values if isinstance(state.u, Field) else np.asarray(state.u)
    return problem.equivalence_window(u)


def volume_conservation_residual(problem, state: SolveState):
    """Relative defect of int omega_hat^n = int omega^n."""
    u = state.u.values if isinstance(state.u, Field) else np.asarray(state.u)
    return problem.volume_residual(u)


def determinant_identity_residual(problem, state: SolveState):
    """|mean log(omega_hat^n/omega^n) - (t mean F - c)| against omega^n."""
    u = state.u.values if isinstance(state.u, Field) else np.asarray(state.u)
    lhs = problem.mean_log_ratio(u)
    rhs = state.t * problem.mean_F() - state.c
    return abs(lhs - rhs)
