"""Batched LU factorization and solves for banded matrices.

scipy's banded solvers factor one matrix per call; the per-mode radial
systems here come in batches of up to tens of thousands of small banded
matrices that must be factored once and solved many times.  This module
stores bands as ``B[..., i, c]`` with ``c = j - i + kl`` (row-wise band
layout, shape ``batch + (n, kl + ku + 1)``) and runs Doolittle LU
without pivoting, vectorized across the batch.  No pivoting causes no
band fill-in; the diagonally dominant radial operators never need it,
and a zero pivot raises instead of silently corrupting the factors.
"""

from __future__ import annotations

import numpy as np


def dense_to_banded(a: np.ndarray, kl: int, ku: int) -> np.ndarray:
    """Extract row-wise band storage from a dense matrix (checks the rest)."""
    n = a.shape[-1]
    if a.shape[-2] != n:
        raise ValueError("matrix must be square")
    out = np.zeros(a.shape[:-2] + (n, kl + ku + 1), dtype=a.dtype)
    for i in range(n):
        lo, hi = max(0, i - kl), min(n, i + ku + 1)
        out[..., i, lo - i + kl:hi - i + kl] = a[..., i, lo:hi]
        if np.any(a[..., i, :lo]) or np.any(a[..., i, hi:]):
            raise ValueError(f"row {i} has entries outside band (kl={kl}, ku={ku})")
    return out


def banded_to_dense(bands: np.ndarray, kl: int, ku: int) -> np.ndarray:
    n = bands.shape[-2]
    out = np.zeros(bands.shape[:-2] + (n, n), dtype=bands.dtype)
    for i in range(n):
        lo, hi = max(0, i - kl), min(n, i + ku + 1)
        out[..., i, lo:hi] = bands[..., i, lo - i + kl:hi - i + kl]
    return out


class BandedLU:
    """LU factors of a batch of banded matrices, solved in place per RHS.

    Factorization is Doolittle without pivoting; L's unit diagonal is
    implicit and the multipliers overwrite the subdiagonal band slots.
    """

    def __init__(self, bands: np.ndarray, kl: int, ku: int):
        bands = np.array(bands, dtype=complex if np.iscomplexobj(bands) else float)
        self.kl, self.ku = int(kl), int(ku)
        self.n = bands.shape[-2]
        if bands.shape[-1] != self.kl + self.ku + 1:
            raise ValueError("band storage width does not match kl + ku + 1")
        self._factor(bands)
        self.bands = bands

    def _factor(self, b: np.ndarray):
        n, kl, ku = self.n, self.kl, self.ku
        for k in range(n - 1):
            piv = b[..., k, kl]
            if np.any(piv == 0):
                raise np.linalg.LinAlgError(f"zero pivot at row {k}")
            for i in range(k + 1, min(k + kl, n - 1) + 1):
                c_ik = k - i + kl
                m = b[..., i, c_ik] / piv
                b[..., i, c_ik] = m
                for j in range(k + 1, min(k + ku, n - 1) + 1):
                    b[..., i, j - i + kl] -= m * b[..., k, j - k + kl]
        if np.any(b[..., n - 1, kl] == 0):
            raise np.linalg.LinAlgError(f"zero pivot at row {n - 1}")

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve A x = rhs; rhs shaped batch + (n,), broadcast against bands."""
        n, kl, ku = self.n, self.kl, self.ku
        b = self.bands
        x = np.array(np.broadcast_arrays(rhs, b[..., 0])[0],
                     dtype=np.result_type(rhs, b))
        for i in range(1, n):
            for k in range(max(0, i - kl), i):
                x[..., i] -= b[..., i, k - i + kl] * x[..., k]
        for i in range(n - 1, -1, -1):
            for j in range(i + 1, min(i + ku, n - 1) + 1):
                x[..., i] -= b[..., i, j - i + kl] * x[..., j]
            x[..., i] /= b[..., i, kl]
        return x
