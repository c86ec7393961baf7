"""Sampled fields and Hermitian metric data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

FIELD_FRAMES = ("zeta", "xi", "psi")


@dataclass(frozen=True)
class Field:
    """A scalar or tensor sample set on a cone-adapted grid.

    values carries one leading block matching the grid shape; trailing
    axes (if any) are tensor slots.  The frame tag records in which
    coordinate the samples are meant to be read; conversions between the
    zeta and xi frames reinterpret the same nodes, so only derivative
    conventions change.
    """

    values: np.ndarray
    frame: str = "xi"
    rank: int = 0

    def __post_init__(self):
        if self.frame not in FIELD_FRAMES:
            raise ValueError(f"frame must be one of {FIELD_FRAMES}; got {self.frame!r}")
        if not 0 <= self.rank <= 4:
            raise ValueError(f"rank must be in 0..4; got {self.rank!r}")
        object.__setattr__(self, "values", np.asarray(self.values))

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.values)

    def max_abs(self) -> float:
        return float(np.abs(self.values).max())


class MetricField:
    """Hermitian (1,1)-metric samples in a declared frame.

    Only the independent components are stored: the diagonal entries are
    real arrays, the single off-diagonal entry of a 2 x 2 metric is one
    complex array.  ``matrix()`` reconstructs the full Hermitian matrix
    exactly from this storage.
    """

    def __init__(self, diag, offdiag=None, frame="psi"):
        if not isinstance(diag, (list, tuple)):
            diag = [diag]
        diag = [np.asarray(d, dtype=float) for d in diag]
        self.n = len(diag)
        if self.n not in (1, 2):
            raise ValueError(f"metric dimension must be 1 or 2; got {self.n}")
        self.diag = diag
        if self.n == 2:
            if offdiag is None:
                offdiag = np.zeros_like(diag[0], dtype=complex)
            self.offdiag = np.asarray(offdiag, dtype=complex)
        else:
            self.offdiag = None
        self.frame = frame

    def matrix(self) -> np.ndarray:
        if self.n == 1:
            return self.diag[0][..., None, None].astype(complex)
        g = np.zeros(self.diag[0].shape + (2, 2), dtype=complex)
        g[..., 0, 0] = self.diag[0]
        g[..., 1, 1] = self.diag[1]
        g[..., 0, 1] = self.offdiag
        g[..., 1, 0] = np.conj(self.offdiag)
        return g

    def det(self) -> np.ndarray:
        if self.n == 1:
            return self.diag[0]
        return self.diag[0] * self.diag[1] - np.abs(self.offdiag) ** 2

    def inverse(self) -> np.ndarray:
        """Inverse matrices, shape (..., n, n)."""
        if self.n == 1:
            return (1.0 / self.diag[0])[..., None, None].astype(complex)
        d = self.det()
        inv = np.zeros(self.diag[0].shape + (2, 2), dtype=complex)
        inv[..., 0, 0] = self.diag[1] / d
        inv[..., 1, 1] = self.diag[0] / d
        inv[..., 0, 1] = -self.offdiag / d
        inv[..., 1, 0] = -np.conj(self.offdiag) / d
        return inv

    def min_eigenvalue(self) -> np.ndarray:
        if self.n == 1:
            return self.diag[0]
        tr = self.diag[0] + self.diag[1]
        disc = np.sqrt((self.diag[0] - self.diag[1]) ** 2 + 4.0 * np.abs(self.offdiag) ** 2)
        return 0.5 * (tr - disc)

    def is_positive(self, tol: float = 0.0) -> bool:
        return bool((self.min_eigenvalue() > tol).all())
