"""Hexagonal-torus cover of the sphere with three cone points.

For cone angle 2*pi/3 at three marked points the relevant flat model is
the quotient of the hexagonal torus T = C/(Z + tau*Z), tau = exp(i*pi/3),
by the order-3 rotation u -> omega*u, omega = exp(2*pi*i/3).  The
Weierstrass derivative wp' of that lattice is invariant under the
rotation (wp'(omega*u) = omega**-3 * wp'(u) = wp'(u)), so it descends to
a conformal bijection T/Z_3 -> P^1.  Composing with the Moebius map

    mu(w) = (w + i*sqrt(3)*v1) / (w - i*sqrt(3)*v1),   v1 = wp'((1+tau)/3)

places the three quotient points (the images of the rotation fixed
points) at the cube roots of unity.  The cover has local degree 3 exactly
at the fixed points, so any metric with cone angle 2*pi/3 there pulls
back to a smooth metric on the torus: global Poisson problems in
conformal densities become flat-torus FFT solves.

All functions are vectorized over numpy arrays of complex numbers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

TAU = np.exp(1j * np.pi / 3.0)
OMEGA = np.exp(2j * np.pi / 3.0)
NOME = np.exp(1j * np.pi * TAU)

# Rotation fixed points on the torus and their images on the sphere.
C1 = (1.0 + TAU) / 3.0
C2 = 2.0 * (1.0 + TAU) / 3.0
FIXED_POINTS = (0.0 + 0.0j, C1, C2)
MARKED_Z = (1.0 + 0.0j, OMEGA, OMEGA**2)

_N_TERMS = 8
_ODD = 2 * np.arange(_N_TERMS) + 1
_SIGNS = (-1.0) ** np.arange(_N_TERMS)
_QPOW = NOME ** ((np.arange(_N_TERMS) + 0.5) ** 2)


def reduce_to_cell(u):
    """Representative of u mod (Z + tau*Z) with |Im| <= Im(tau)/2."""
    u = np.asarray(u, dtype=complex)
    t = np.round(u.imag / TAU.imag)
    u = u - t * TAU
    return u - np.round(u.real)


def theta1(z, deriv: int = 0):
    """Jacobi theta_1 at the hexagonal nome, or a z-derivative (0..3).

    The series 2*sum (-1)^n q^((n+1/2)^2) sin((2n+1) pi z) is truncated
    at 8 terms, which is below rounding error for |Im z| <= Im(tau)/2;
    callers should reduce the argument first when it may be far from the
    fundamental cell.
    """
    z = np.asarray(z, dtype=complex)
    arg = np.multiply.outer(z, _ODD * np.pi)
    k = _ODD * np.pi
    if deriv == 0:
        terms = np.sin(arg)
        fac = np.ones_like(k)
    elif deriv == 1:
        terms = np.cos(arg)
        fac = k
    elif deriv == 2:
        terms = -np.sin(arg)
        fac = k**2
    elif deriv == 3:
        terms = -np.cos(arg)
        fac = k**3
    else:
        raise ValueError(f"deriv must be in 0..3; got {deriv!r}")
    return 2.0 * (terms * (_SIGNS * _QPOW * fac)).sum(axis=-1)


def _theta1_zero_derivs():
    th1 = 2.0 * (_SIGNS * _QPOW * _ODD * np.pi).sum()
    th3 = -2.0 * (_SIGNS * _QPOW * (_ODD * np.pi) ** 3).sum()
    return th1, th3


_TH1_0, _TH3_0 = _theta1_zero_derivs()

# Laurent constant: wp(z) = -(log theta1)''(z) + theta1'''(0)/(3 theta1'(0)).
C_WP = _TH3_0 / (3.0 * _TH1_0)


def wp(u):
    """Weierstrass P of the hexagonal lattice Z + tau*Z."""
    z = reduce_to_cell(u)
    f = theta1(z)
    f1 = theta1(z, 1)
    f2 = theta1(z, 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        return -(f2 * f - f1 * f1) / (f * f) + C_WP


def wp_prime(u):
    """Derivative wp'; invariant under u -> omega*u."""
    z = reduce_to_cell(u)
    f = theta1(z)
    f1 = theta1(z, 1)
    f2 = theta1(z, 2)
    f3 = theta1(z, 3)
    with np.errstate(divide="ignore", invalid="ignore"):
        return -(f3 * f * f - 3.0 * f2 * f1 * f + 2.0 * f1**3) / (f * f * f)


def wp_second(u):
    """wp'' = 6 wp^2 (the lattice has g2 = 0)."""
    p = wp(u)
    return 6.0 * p * p


def _g3():
    zs = 0.31 + 0.17j
    return 4.0 * wp(zs) ** 3 - wp_prime(zs) ** 2


G3 = complex(_g3())
V1 = complex(wp_prime(C1))
B_MOBIUS = 1j * np.sqrt(3.0) * V1


def mobius(w):
    """mu(w) = (w + B)/(w - B) sending {inf, v1, -v1} to {1, omega, omega^2}.

    Large |w| is evaluated through 1/w so the point at infinity maps to
    exactly 1.
    """
    w = np.asarray(w, dtype=complex)
    finite = np.isfinite(w.real) & np.isfinite(w.imag)
    # Non-finite input (the pole of wp' evaluated exactly) is the point
    # at infinity, whose image is exactly 1.
    big = ~finite | (np.abs(w) > 1.0)
    safe = np.where(big, 1.0, w)
    direct = (safe + B_MOBIUS) / (safe - B_MOBIUS)
    src = np.where(finite & big, w, 1.0)
    inv = np.where(finite & big, 1.0 / src, 0.0)
    flipped = (1.0 + B_MOBIUS * inv) / (1.0 - B_MOBIUS * inv)
    return np.where(big, flipped, direct)


def mobius_inv(z):
    z = np.asarray(z, dtype=complex)
    with np.errstate(divide="ignore", invalid="ignore"):
        return B_MOBIUS * (z + 1.0) / (z - 1.0)


def cover(u):
    """The degree-3 covering map z = mu(wp'(u)) from the torus to P^1."""
    return mobius(wp_prime(u))


def cover_jacobian(u):
    """dz/du; vanishes to second order at the rotation fixed points."""
    w = wp_prime(u)
    return -2.0 * B_MOBIUS * wp_second(u) / (w - B_MOBIUS) ** 2


def cover_hessian(u):
    """d^2 z/du^2 of the covering map (wp''' = 12 wp wp')."""
    w = wp_prime(u)
    p = wp(u)
    ppp = 6.0 * p * p
    pppp = 12.0 * p * w
    d = w - B_MOBIUS
    return -2.0 * B_MOBIUS * (pppp * d - 2.0 * ppp**2) / d**3


def cover_inverted_chart(u):
    """(1/z, d(1/z)/du), stable where |z| is large."""
    w = wp_prime(u)
    zi = (w - B_MOBIUS) / (w + B_MOBIUS)
    dzi = 2.0 * B_MOBIUS * wp_second(u) / (w + B_MOBIUS) ** 2
    return zi, dzi


def chordal(z1, z2):
    """Chordal distance on P^1 (diameter 2 normalization / 2: max 1)."""
    z1 = np.asarray(z1, dtype=complex)
    z2 = np.asarray(z2, dtype=complex)
    num = np.abs(z1 - z2)
    return num / np.sqrt((1.0 + np.abs(z1) ** 2) * (1.0 + np.abs(z2) ** 2))


@lru_cache(maxsize=1)
def _seed_table(n: int = 60):
    """Coarse torus sample of the cover for generic initial guesses."""
    a = (np.arange(n) + 0.5) / n
    u = a[:, None] + a[None, :] * TAU
    z = cover(u)
    return u.ravel(), z.ravel()


def preimage(z, tol: float = 1e-9, iters: int = 60):
    """A torus preimage of each sphere point under the cover.

    Any of the three Z_3-equivalent preimages may be returned; they
    represent the same quotient point.  Near the marked points the seed
    comes from the cube-root local model of the branch, elsewhere from a
    cached coarse table; Newton then iterates on wp'(u) = mu^-1(z).
    Raises if any point fails to reach `tol` in chordal distance.
    """
    z = np.asarray(z, dtype=complex)
    zf = z.ravel()
    w = mobius_inv(zf)

    dists = np.stack([chordal(zf, p) for p in MARKED_Z])
    nearest = dists.argmin(axis=0)
    near = dists.min(axis=0) < 0.4

    u0 = np.empty_like(zf)
    tab_u, tab_z = _seed_table()
    far = ~near
    if far.any():
        block = 4096
        idx_far = np.nonzero(far)[0]
        for lo in range(0, idx_far.size, block):
            sl = idx_far[lo : lo + block]
            d = chordal(zf[sl][:, None], tab_z[None, :])
            u0[sl] = tab_u[d.argmin(axis=1)]
    for p_idx, (u_star, z_star) in enumerate(zip(FIXED_POINTS, MARKED_Z)):
        m = near & (nearest == p_idx)
        if not m.any():
            continue
        if p_idx == 0:
            with np.errstate(divide="ignore", invalid="ignore"):
                delta = (-2.0 / w[m]) ** (1.0 / 3.0)
        else:
            v_star = V1 if p_idx == 1 else -V1
            delta = ((w[m] - v_star) / (2.0 * V1**2)) ** (1.0 / 3.0)
        # Exactly marked input has w non-finite; seed at the fixed point.
        delta = np.where(np.isfinite(delta), delta, 0.0)
        u0[m] = u_star + delta

    u = u0.copy()
    for _ in range(iters):
        # Exactly marked input (w non-finite) seeds at the fixed point and
        # must not move; nan propagation makes its step vanish below.
        with np.errstate(divide="ignore", invalid="ignore"):
            f = wp_prime(u) - w
            fp = wp_second(u)
            step = f / fp
        stuck = (np.abs(fp) < 1e-12) & (np.abs(f) > 1e-12)
        step = np.where(np.isfinite(step) & ~stuck, step, 0.0)
        u = u - step + np.where(stuck, 1e-8, 0.0)
    u = reduce_to_cell(u)

    err = chordal(cover(u), zf)
    # marked points themselves have w = inf and converge by construction
    exact = np.isin(nearest, [0, 1, 2]) & (dists.min(axis=0) < 1e-14)
    bad = (err > tol) & ~exact
    if bad.any():
        worst = float(err[bad].max())
        raise RuntimeError(
            f"preimage Newton failed for {int(bad.sum())} of {zf.size} "
            f"points (worst chordal error {worst:.3e})"
        )
    return u.reshape(z.shape)


@dataclass(frozen=True)
class HexTorus:
    """Uniform offset grid on C/(Z + tau*Z) with FFT calculus.

    Nodes are u = ((a+1/2) + (b+1/2)*tau)/N for a, b in 0..N-1; the
    half-cell offset keeps all three rotation fixed points off the grid
    for every N.  Index layout: axis 0 is the coefficient of 1, axis 1
    the coefficient of tau.
    """

    n: int

    def __post_init__(self):
        if self.n < 8 or self.n % 2:
            raise ValueError(f"n must be even and >= 8; got {self.n!r}")

    @cached_property
    def cell_area(self) -> float:
        """Euclidean area of one grid cell (Im tau / N^2)."""
        return float(TAU.imag) / self.n**2

    @cached_property
    def nodes(self) -> np.ndarray:
        a = (np.arange(self.n) + 0.5) / self.n
        return a[:, None] + a[None, :] * TAU

    @cached_property
    def freqs(self) -> np.ndarray:
        return np.fft.fftfreq(self.n, d=1.0 / self.n).astype(int)

    @cached_property
    def _eig_dudubar(self) -> np.ndarray:
        n = self.freqs[:, None]
        m = self.freqs[None, :]
        return -(4.0 * np.pi**2 / 3.0) * (n * n - n * m + m * m).astype(float)

    def d_u(self, vals: np.ndarray) -> np.ndarray:
        """Spectral d/du; du = (taubar d_s - d_t)/(taubar - tau)."""
        f = np.fft.fft2(vals)
        n = self.freqs[:, None]
        m = self.freqs[None, :]
        mult = 2j * np.pi * (np.conj(TAU) * n - m) / (np.conj(TAU) - TAU)
        return np.fft.ifft2(mult * f)

    def d_ubar(self, vals: np.ndarray) -> np.ndarray:
        f = np.fft.fft2(vals)
        n = self.freqs[:, None]
        m = self.freqs[None, :]
        mult = 2j * np.pi * (TAU * n - m) / (TAU - np.conj(TAU))
        return np.fft.ifft2(mult * f)

    def laplace_flat(self, vals: np.ndarray) -> np.ndarray:
        """d^2/du dubar (no factor 4); real input gives real output."""
        out = np.fft.ifft2(self._eig_dudubar * np.fft.fft2(vals))
        return out.real if np.isrealobj(vals) else out

    def solve_flat_poisson(self, rhs: np.ndarray) -> np.ndarray:
        """Mean-zero solution of d^2 f/du dubar = rhs - mean(rhs)."""
        f = np.fft.fft2(rhs)
        eig = self._eig_dudubar.copy()
        eig[0, 0] = 1.0
        f = f / eig
        f[0, 0] = 0.0
        out = np.fft.ifft2(f)
        return out.real if np.isrealobj(rhs) else out

    def integrate_flat(self, vals: np.ndarray) -> float:
        """Integral against the Euclidean area element dx dy."""
        return float(np.sum(vals) * self.cell_area)

    def spectral_tail_fraction(self, vals: np.ndarray) -> float:
        """Energy fraction carried by |freq| >= 0.9 * max along any axis."""
        f = np.abs(np.fft.fft2(vals)) ** 2
        cut = 0.9 * np.abs(self.freqs).max()
        hi = (np.abs(self.freqs)[:, None] >= cut) | (np.abs(self.freqs)[None, :] >= cut)
        total = f.sum()
        if total == 0.0:
            return 0.0
        return float(f[hi].sum() / total)

    def interpolate(self, vals: np.ndarray, u_points) -> np.ndarray:
        """Trigonometric interpolation of grid samples at arbitrary points.

        Smoothness is the caller's responsibility; the Nyquist mode of a
        smooth field is at rounding level so no symmetrization is done.
        """
        u_points = np.asarray(u_points, dtype=complex)
        pts = u_points.ravel()
        t = pts.imag / TAU.imag
        s = pts.real - t * TAU.real
        coeff = np.fft.fft2(vals) / self.n**2
        phase = np.exp(-1j * np.pi * (self.freqs[:, None] + self.freqs[None, :]) / self.n)
        coeff = coeff * phase
        es = np.exp(2j * np.pi * np.multiply.outer(s, self.freqs))
        et = np.exp(2j * np.pi * np.multiply.outer(t, self.freqs))
        out = np.einsum("pn,nm,pm->p", es, coeff, et, optimize=True)
        if np.isrealobj(vals):
            out = out.real
        return out.reshape(u_points.shape)
