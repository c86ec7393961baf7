"""Cone coordinates, the model edge metric, and Holder-class utilities.

The transverse model metric on C is beta**2 |zeta|^(2 beta - 2) i dzeta
dzbar, the flat cone of total angle 2 pi beta.  The substitution
xi = |zeta|**(beta-1) * zeta straightens it: in polar coordinates
xi = r e^{i theta} the metric becomes dr**2 + beta**2 r**2 dtheta**2 and
the complex model Laplacian turns into

    sum_k d^2/dz_k dzbar_k
      + (1/4) (d^2/dr^2 + (1/r) d/dr + (1/(beta^2 r^2)) d^2/dtheta^2).

Holder continuity is always measured through distances in the xi frame.
"""

from __future__ import annotations

import numpy as np

from .fields import Field, MetricField
from .grid import ConeGrid
from .params import ConeParams
from .radial import RadialOperator

SPECTRAL_TAIL_TOL = 1e-8


def to_cone_coords(zeta, beta: float):
    """Straightening map xi = |zeta|**(beta-1) * zeta (fixes 0)."""
    zeta = np.asarray(zeta, dtype=complex)
    out = np.zeros_like(zeta)
    nz = zeta != 0
    az = np.abs(zeta[nz])
    out[nz] = az ** (beta - 1.0) * zeta[nz]
    return out if out.shape else complex(out)


def from_cone_coords(xi, beta: float):
    """Inverse straightening zeta = |xi|**(1/beta - 1) * xi."""
    xi = np.asarray(xi, dtype=complex)
    out = np.zeros_like(xi)
    nz = xi != 0
    ax = np.abs(xi[nz])
    out[nz] = ax ** (1.0 / beta - 1.0) * xi[nz]
    return out if out.shape else complex(out)


def model_metric(grid: ConeGrid, params: ConeParams) -> MetricField:
    """Model metric samples in the zeta frame.

    Tangential blocks are the identity; the transverse entry is
    beta**2 |zeta|^(2 beta - 2).  The associated transverse line element
    in straightened polar coordinates is dr^2 + beta^2 r^2 dtheta^2, so a
    circle of straightened radius r has circumference 2 pi beta r.
    """
    beta = params.beta
    absz = np.abs(grid.zeta(beta))
    trans = beta**2 * absz ** (2.0 * beta - 2.0)
    shape = grid.shape
    trans = np.broadcast_to(trans.reshape(trans.shape + (1,) * (len(shape) - 2)), shape).copy()
    if grid.n_tan_directions == 0:
        return MetricField([trans], frame="zeta")
    tang = np.ones(shape)
    return MetricField([tang, trans], frame="zeta")


def _mode_multipliers(grid: ConeGrid):
    """Broadcastable m (angular) and tangential 1/4-Laplacian eigenvalues."""
    extra = 2 * grid.n_tan_directions
    m = grid.theta_wavenumbers.reshape((1, grid.n_theta) + (1,) * extra)
    lam = 0.0
    for ax in range(grid.n_tan_directions):
        kx = grid.tangential_wavevectors(ax)
        ky = grid.tangential_wavevectors(ax)
        shape_x = [1] * (2 + extra)
        shape_x[2 + 2 * ax] = len(kx)
        shape_y = [1] * (2 + extra)
        shape_y[3 + 2 * ax] = len(ky)
        lam = lam + (kx.reshape(shape_x) ** 2 + ky.reshape(shape_y) ** 2) / 4.0
    return m, lam


def _fft_axes(grid: ConeGrid):
    return tuple(range(1, 2 + 2 * grid.n_tan_directions))


def model_laplacian(field, grid: ConeGrid, params: ConeParams, bc=None):
    """Apply the model Laplacian to xi-frame samples.

    Spectral in the angle and tangential directions, fourth-order finite
    differences in r.  When ``bc`` (samples of the Dirichlet trace at
    r = r_max) is given, the outermost stencils use it; otherwise they
    are one-sided.  Raises when the spectral tail of the input exceeds
    SPECTRAL_TAIL_TOL of the total energy ("resolution insufficient").
    """
    values = field.values if isinstance(field, Field) else np.asarray(field)
    if values.shape != grid.shape:
        raise ValueError(f"field shape {values.shape} does not match grid {grid.shape}")
    axes = _fft_axes(grid)
    fhat = np.fft.fftn(values.astype(complex), axes=axes)
    _check_spectral_tail(fhat, grid)
    out_hat = _mode_laplacian(fhat, grid, params, bc)
    out = np.fft.ifftn(out_hat, axes=axes)
    if not np.iscomplexobj(values):
        out = out.real
    return out


def _check_spectral_tail(fhat, grid: ConeGrid):
    total = float((np.abs(fhat) ** 2).sum())
    if total == 0.0:
        return
    m = np.abs(grid.theta_wavenumbers)
    cut = 0.9 * m.max()
    sel = m >= cut
    tail = float((np.abs(fhat[:, sel]) ** 2).sum())
    frac = tail / total
    if frac > SPECTRAL_TAIL_TOL:
        raise ValueError(
            "resolution insufficient: angular spectral tail fraction "
            f"{frac:.3e} exceeds {SPECTRAL_TAIL_TOL:.1e}"
        )
    for ax in range(grid.n_tan_directions):
        k = np.abs(grid.tangential_wavevectors(ax))
        cut = 0.9 * k.max()
        for off in (2 + 2 * ax, 3 + 2 * ax):
            sl = [slice(None)] * fhat.ndim
            sl[off] = np.abs(k) >= cut
            tail = float((np.abs(fhat[tuple(sl)]) ** 2).sum())
            if tail / total > SPECTRAL_TAIL_TOL:
                raise ValueError(
                    "resolution insufficient: tangential spectral tail fraction "
                    f"{tail / total:.3e} exceeds {SPECTRAL_TAIL_TOL:.1e}"
                )


def _mode_laplacian(fhat, grid: ConeGrid, params: ConeParams, bc=None):
    beta = params.beta
    rop = _radial_operator(grid)
    bc_hat = None
    if bc is not None:
        bc_hat = np.fft.fftn(np.asarray(bc, dtype=complex),
                             axes=tuple(a - 1 for a in _fft_axes(grid)))
    d1, d2 = rop.apply_derivatives(fhat, use_boundary=bc_hat is not None, bc=bc_hat)
    r = grid.radial_nodes.reshape((grid.n_r,) + (1,) * (fhat.ndim - 1))
    m, lam = _mode_multipliers(grid)
    radial = d2 + d1 / r - (m**2 / (beta**2 * r**2)) * fhat
    return 0.25 * radial - lam * fhat


_RADIAL_CACHE: dict = {}


def _radial_operator(grid: ConeGrid) -> RadialOperator:
    key = (grid.n_r, grid.r_max)
    op = _RADIAL_CACHE.get(key)
    if op is None:
        op = RadialOperator(grid.radial_nodes, r_right=grid.r_max)
        _RADIAL_CACHE[key] = op
    return op


def xi_derivative(values, grid: ConeGrid, bar: bool = False):
    """d/dxi (bar=False) or d/dxibar (bar=True) of xi-frame samples.

    Spectral in theta, finite differences in r.  Per angular mode,
    d/dxi maps w_m(r) e^{i m theta} to (w_m' + m w_m / r) / 2 times
    e^{i (m-1) theta}; the conjugate derivative flips the sign of the
    m/r term and shifts the mode up instead of down.
    """
    values = np.asarray(values)
    fhat = np.fft.fft(values.astype(complex), axis=1)
    rop = _radial_operator(grid)
    d1, _ = rop.apply_derivatives(fhat)
    extra = values.ndim - 2
    m = grid.theta_wavenumbers.reshape((1, grid.n_theta) + (1,) * extra)
    r = grid.radial_nodes.reshape((grid.n_r,) + (1,) * (values.ndim - 1))
    sign = -1.0 if bar else 1.0
    shifted = 0.5 * (d1 + sign * m * fhat / r)
    out_hat = np.roll(shifted, 1 if bar else -1, axis=1)
    return np.fft.ifft(out_hat, axis=1)


def tangential_derivative(values, grid: ConeGrid, direction: int = 0,
                          bar: bool = False):
    """Holomorphic (or conjugate) derivative along tangential direction."""
    values = np.asarray(values)
    ax_x, ax_y = 2 + 2 * direction, 3 + 2 * direction
    fhat = np.fft.fftn(values.astype(complex), axes=(ax_x, ax_y))
    k = grid.tangential_wavevectors(direction)
    kx = k.reshape((1,) * ax_x + (len(k),) + (1,) * (values.ndim - ax_x - 1))
    ky = k.reshape((1,) * ax_y + (len(k),) + (1,) * (values.ndim - ax_y - 1))
    mult = 0.5 * (1j * kx - ky) if bar else 0.5 * (1j * kx + ky)
    return np.fft.ifftn(mult * fhat, axes=(ax_x, ax_y))


# ---- Holder seminorm --------------------------------------------------------


def _node_coordinates(grid: ConeGrid):
    """Flat arrays of xi and (optionally) tangential coordinates per node."""
    shape = grid.shape
    xi = grid.xi().reshape((grid.n_r, grid.n_theta) + (1,) * (len(shape) - 2))
    xi = np.broadcast_to(xi, shape).ravel()
    zs = []
    for ax in range(grid.n_tan_directions):
        t = grid.tangential_nodes(ax)
        x = t.reshape((1, 1) + (1,) * (2 * ax) + (len(t), 1) + (1,) * (2 * (grid.n_tan_directions - ax - 1)))
        y = t.reshape((1, 1) + (1,) * (2 * ax) + (1, len(t)) + (1,) * (2 * (grid.n_tan_directions - ax - 1)))
        z = x + 1j * y
        zs.append(np.broadcast_to(z, shape).ravel())
    rad = np.broadcast_to(
        grid.radial_nodes.reshape((grid.n_r,) + (1,) * (len(shape) - 1)), shape
    ).ravel()
    return xi, zs, rad


def pair_sample(grid: ConeGrid, per_annulus: int = 48, cross: int = 16):
    """Deterministic node-pair sample for Holder quotients.

    All pairs within a strided subsample of each dyadic annulus, plus
    aligned pairs between the subsamples of every pair of annuli.
    """
    _, _, rad = _node_coordinates(grid)
    levels = np.maximum(
        np.ceil(-np.log2(rad / grid.r_max) - 1.0 + 1e-12), 0
    ).astype(int)
    groups = []
    for j in np.unique(levels):
        idx = np.flatnonzero(levels == j)
        if len(idx) > per_annulus:
            stride = np.linspace(0, len(idx) - 1, per_annulus).astype(int)
            idx = idx[np.unique(stride)]
        groups.append(idx)
    a_list, b_list = [], []
    for idx in groups:
        if len(idx) < 2:
            continue
        ai, bi = np.triu_indices(len(idx), k=1)
        a_list.append(idx[ai])
        b_list.append(idx[bi])
    for gi in range(len(groups)):
        for gj in range(gi + 1, len(groups)):
            na = min(cross, len(groups[gi]), len(groups[gj]))
            if na == 0:
                continue
            sa = np.linspace(0, len(groups[gi]) - 1, na).astype(int)
            sb = np.linspace(0, len(groups[gj]) - 1, na).astype(int)
            a_list.append(groups[gi][sa])
            b_list.append(groups[gj][sb])
    # dyadic rows along the theta = 0 ray; the innermost-to-outermost pair
    # realizes the Holder supremum of radial profiles like |xi|**alpha
    stride = int(np.prod(grid.shape[1:]))
    rows = sorted({0, grid.n_r - 1} | {2**k - 1 for k in range(1, 20) if 2**k - 1 < grid.n_r})
    ray = np.array(rows) * stride
    ai, bi = np.triu_indices(len(ray), k=1)
    a_list.append(ray[ai])
    b_list.append(ray[bi])
    return np.concatenate(a_list), np.concatenate(b_list)


def xi_distances(grid: ConeGrid, idx_a, idx_b):
    """Straightened-frame distances between node pairs."""
    xi, zs, _ = _node_coordinates(grid)
    d2 = np.abs(xi[idx_a] - xi[idx_b]) ** 2
    for z in zs:
        dx = np.abs(z[idx_a].real - z[idx_b].real)
        dy = np.abs(z[idx_a].imag - z[idx_b].imag)
        dx = np.minimum(dx, 1.0 - dx)
        dy = np.minimum(dy, 1.0 - dy)
        d2 = d2 + dx**2 + dy**2
    return np.sqrt(d2)


def holder_beta_seminorm(field, grid: ConeGrid, params: ConeParams,
                         pairs=None) -> float:
    """Empirical Holder seminorm sup |f(x)-f(y)| / d_xi(x,y)**alpha.

    The supremum runs over the deterministic ``pair_sample``; the field
    is read in the xi frame (values at the straightened nodes).
    """
    values = field.values if isinstance(field, Field) else np.asarray(field)
    if values.shape != grid.shape:
        raise ValueError(f"field shape {values.shape} does not match grid {grid.shape}")
    if pairs is None:
        pairs = pair_sample(grid)
    ia, ib = pairs
    flat = values.ravel()
    d = xi_distances(grid, ia, ib)
    good = d > 0
    quot = np.abs(flat[ia][good] - flat[ib][good]) / d[good] ** params.alpha
    return float(quot.max()) if quot.size else 0.0


# ---- vanishing classifier ---------------------------------------------------


def is_vanishing_class(field, grid: ConeGrid, params: ConeParams,
                       rel_tol: float = 1e-6):
    """Decide membership in the subclass vanishing on the divisor.

    Per angular (and tangential) Fourier mode, the per-annulus maxima of
    the mode magnitude over the two innermost dyadic annuli are
    extrapolated linearly to r = 0; the field is vanishing when every
    extrapolated value stays below rel_tol times the sup norm.
    Returns (bool, report dict).
    """
    values = field.values if isinstance(field, Field) else np.asarray(field)
    if values.shape != grid.shape:
        raise ValueError(f"field shape {values.shape} does not match grid {grid.shape}")
    sup = float(np.abs(values).max())
    if sup == 0.0:
        return True, {"sup": 0.0, "worst": 0.0}
    axes = _fft_axes(grid)
    fhat = np.fft.fftn(values.astype(complex), axes=axes) \
        / np.prod([values.shape[a] for a in axes])
    mag = np.abs(fhat).reshape(grid.n_r, -1)  # radial profile per mode
    r = grid.radial_nodes
    lev = np.maximum(np.ceil(-np.log2(r / grid.r_max) - 1.0 + 1e-12), 0).astype(int)
    uniq = np.unique(lev)
    deep, prev = uniq[-1], uniq[-2]
    r_deep = r[lev == deep].mean()
    r_prev = r[lev == prev].mean()
    a_deep = mag[lev == deep].max(axis=0)
    a_prev = mag[lev == prev].max(axis=0)
    extrap = a_deep + (a_deep - a_prev) * (0.0 - r_deep) / (r_deep - r_prev)
    extrap = np.maximum(extrap, 0.0)
    worst = float(extrap.max())
    ok = worst < rel_tol * sup
    return bool(ok), {"sup": sup, "worst": worst, "threshold": rel_tol * sup}
