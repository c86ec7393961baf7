"""Cone-adapted grids.

The transverse plane is discretized in the straightened polar coordinates
(r, theta) with r = |xi|, xi = |zeta|^(beta-1) * zeta.  Radial nodes are
cell-centered (the node set excludes r = 0, where fields may be singular
in the zeta frame), the angle is uniform for FFT use, and optional
tangential complex directions are uniform periodic grids of period 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

FRAMES = ("zeta", "xi")


@dataclass(frozen=True)
class ConeGrid:
    """Tensor grid (radial x angular x tangential) around the cone point.

    Parameters
    ----------
    n_r : int
        Number of cell-centered radial nodes; node j sits at (j + 1/2) * h
        with h = r_max / n_r.
    n_theta : int
        Number of uniform angular nodes (equal to the number of Fourier
        modes carried by the grid).
    r_max : float
        Outer radius in the xi scale, at most 1.
    n_tangential : tuple of int
        Nodes per real direction of each tangential complex coordinate;
        each entry t gives a t x t periodic grid on [0,1)^2.
    frame : str
        Default interpretation of sampled fields, "xi" or "zeta".
    """

    n_r: int
    n_theta: int
    r_max: float = 1.0
    n_tangential: tuple = field(default_factory=tuple)
    frame: str = "xi"

    def __post_init__(self):
        if self.n_r < 8:
            raise ValueError(f"n_r must be >= 8; got {self.n_r!r}")
        if self.n_theta < 4 or self.n_theta % 2:
            raise ValueError(f"n_theta must be even and >= 4; got {self.n_theta!r}")
        if not 0.0 < self.r_max <= 1.0:
            raise ValueError(f"r_max must lie in (0, 1]; got {self.r_max!r}")
        if self.frame not in FRAMES:
            raise ValueError(f"frame must be one of {FRAMES}; got {self.frame!r}")
        nt = tuple(int(t) for t in self.n_tangential)
        if any(t < 4 or t % 2 for t in nt):
            raise ValueError(
                f"n_tangential entries must be even and >= 4; got {self.n_tangential!r}"
            )
        object.__setattr__(self, "n_tangential", nt)

    # ---- node coordinates -------------------------------------------------

    @cached_property
    def dr(self) -> float:
        return self.r_max / self.n_r

    @cached_property
    def radial_nodes(self) -> np.ndarray:
        h = self.dr
        return (np.arange(self.n_r) + 0.5) * h

    @cached_property
    def theta_nodes(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_theta) / self.n_theta

    @cached_property
    def theta_wavenumbers(self) -> np.ndarray:
        """Integer angular frequencies in FFT layout."""
        return np.fft.fftfreq(self.n_theta, d=1.0 / self.n_theta).astype(int)

    def tangential_nodes(self, axis: int = 0) -> np.ndarray:
        t = self.n_tangential[axis]
        return np.arange(t) / t

    def tangential_wavevectors(self, axis: int = 0) -> np.ndarray:
        t = self.n_tangential[axis]
        return 2.0 * np.pi * np.fft.fftfreq(t, d=1.0 / t)

    @property
    def n_tan_directions(self) -> int:
        return len(self.n_tangential)

    @property
    def shape(self) -> tuple:
        s = [self.n_r, self.n_theta]
        for t in self.n_tangential:
            s.extend([t, t])
        return tuple(s)

    def xi(self) -> np.ndarray:
        """Complex xi at the transverse nodes, shape (n_r, n_theta)."""
        r = self.radial_nodes[:, None]
        th = self.theta_nodes[None, :]
        return r * np.exp(1j * th)

    def zeta(self, beta: float) -> np.ndarray:
        """Complex zeta at the transverse nodes for cone angle 2*pi*beta."""
        r = self.radial_nodes[:, None]
        th = self.theta_nodes[None, :]
        return r ** (1.0 / beta) * np.exp(1j * th)

    # ---- quadrature ---------------------------------------------------------

    def transverse_weights(self, beta: float) -> np.ndarray:
        """Cone-area weights beta * r * dr * dtheta, shape (n_r, n_theta).

        The midpoint rule in r integrates the linear density r exactly, so
        the disk area beta * pi * r_max**2 is reproduced to rounding error.
        """
        w_r = self.radial_nodes * self.dr
        w_th = 2.0 * np.pi / self.n_theta
        return beta * w_th * w_r[:, None] * np.ones((1, self.n_theta))

    def cone_disk_area(self, beta: float) -> float:
        return float(self.transverse_weights(beta).sum())

    def tangential_cell_measure(self) -> float:
        m = 1.0
        for t in self.n_tangential:
            m *= (1.0 / t) ** 2
        return m

    # ---- dyadic annuli ------------------------------------------------------

    def annulus_index(self, r: np.ndarray) -> np.ndarray:
        """Dyadic level j with r in (r_max * 2**-(j+1), r_max * 2**-j]."""
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            j = np.ceil(-np.log2(r / self.r_max) - 1.0 + 1e-12)
        return np.maximum(j, 0).astype(int)

    def innermost_levels(self, count: int = 2) -> np.ndarray:
        """The `count` deepest dyadic levels present on the radial grid."""
        levels = np.unique(self.annulus_index(self.radial_nodes))
        return levels[-count:]

    def off_rim_mask(self, count: int = 2) -> np.ndarray:
        """Radial mask excluding the `count` innermost dyadic annuli."""
        levels = self.annulus_index(self.radial_nodes)
        drop = set(self.innermost_levels(count).tolist())
        return np.array([lv not in drop for lv in levels])

    def refined(self, factor: int = 2) -> "ConeGrid":
        return ConeGrid(
            n_r=self.n_r * factor,
            n_theta=self.n_theta * factor,
            r_max=self.r_max,
            n_tangential=tuple(t * factor for t in self.n_tangential),
            frame=self.frame,
        )
