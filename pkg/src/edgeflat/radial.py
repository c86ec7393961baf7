"""Radial finite differences on the cell-centered cone grid.

Fourth-order stencils in r per angular/tangential Fourier mode.  The two
innermost nodes are never PDE rows: in solves they carry closure rows
expressing the recessive behavior r**nu (nu = |m| / beta) near the cone
point, and derivative applications there use one-sided stencils whose
accuracy is not relied upon by any check.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

#: closure basis switches to hard zero clamping beyond these
NU_CLAMP = 12.0
MU_CLAMP = 30.0


def fd_weights(nodes, x0, order):
    """Finite-difference weights on arbitrary nodes (Fornberg recursion).

    Returns an array w with sum_j w[j] * f(nodes[j]) ~ f^(order)(x0).
    """
    nodes = np.asarray(nodes, dtype=float)
    n = len(nodes)
    if order >= n:
        raise ValueError("need more nodes than derivative order")
    c = np.zeros((n, order + 1))
    c[0, 0] = 1.0
    c1 = 1.0
    c4 = nodes[0] - x0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = nodes[i] - x0
        for j in range(i):
            c3 = nodes[i] - nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


class RadialOperator:
    """Derivative matrices and mode-ODE assembly on one radial grid."""

    def __init__(self, nodes, r_right=None):
        self.r = np.asarray(nodes, dtype=float)
        self.n = len(self.r)
        if self.n < 8:
            raise ValueError("need at least 8 radial nodes")
        self.r_right = r_right  # boundary abscissa for Dirichlet closures
        self.d1, self.d2 = self._derivative_matrices(use_boundary=False)
        if r_right is not None:
            (self.d1b, self.d1b_bc), (self.d2b, self.d2b_bc) = \
                self._derivative_matrices(use_boundary=True)

    def _derivative_matrices(self, use_boundary):
        n, r = self.n, self.r
        mats = []
        for order in (1, 2):
            D = np.zeros((n, n))
            bc = np.zeros(n)
            for j in range(n):
                lo = j - 2
                hi = j + 3
                if lo >= 0 and hi <= n:
                    cols = np.arange(lo, hi)
                    D[j, cols] = fd_weights(r[cols], r[j], order)
                elif lo < 0:
                    cols = np.arange(0, 6)
                    D[j, cols] = fd_weights(r[cols], r[j], order)
                else:
                    if use_boundary and self.r_right is not None:
                        cols = np.arange(n - 5, n)
                        pts = np.concatenate([r[cols], [self.r_right]])
                        w = fd_weights(pts, r[j], order)
                        D[j, cols] = w[:-1]
                        bc[j] = w[-1]
                    else:
                        cols = np.arange(n - 6, n)
                        D[j, cols] = fd_weights(r[cols], r[j], order)
            mats.append((D, bc))
        if use_boundary:
            return mats
        return mats[0][0], mats[1][0]

    # ---- recessive closure --------------------------------------------------

    @lru_cache(maxsize=512)
    def closure_row(self, nu: float):
        """Weights w with v(r_j) = w . v(r_2..r_5), recessive branch only.

        Local solutions of the mode ODE near r = 0 combine the recessive
        power r**nu with data-driven terms starting at r**2; the growing
        branch r**-nu is excluded by fitting span{r**nu, r**2, r**3,
        r**4} through the four nodes r_2..r_5 (nu merging into the
        integer ladder when closer than 0.3).  Rows for j = 0, 1.
        Returns None when the branch is numerically zero at the inner
        nodes and plain clamping v = 0 is used instead.
        """
        if nu >= NU_CLAMP:
            return None
        if nu != 0.0 and min(abs(nu - e) for e in (2.0, 3.0, 4.0)) <= 0.3:
            exps = (2.0, 3.0, 4.0, 5.0)
        else:
            exps = (nu, 2.0, 3.0, 4.0)
        rs = self.r[2:6]
        scale = rs[-1]
        # B[node, i] = phi_i(r_node); value at r_j is b0 . B^{-1} v
        B = np.array([(rs / scale) ** e for e in exps]).T
        rows = []
        for j in (0, 1):
            b0 = np.array([(self.r[j] / scale) ** e for e in exps])
            rows.append(np.linalg.solve(B.T, b0))
        return np.array(rows)

    def mode_matrix(self, nu: float, mu2: float = 0.0):
        """Discrete radial operator for v'' + v'/r - (nu^2/r^2 + mu2) v.

        Rows 0 and 1 are closure rows (coefficients of the identity minus
        the recessive extrapolation, right-hand side zero).  Rows n-2 and
        n-1 use boundary-inclusive stencils; the returned bc_vec gives the
        coefficient multiplying the Dirichlet value, to be moved to the
        right-hand side.  PDE rows correspond to 4 * f_m on the RHS.
        """
        if self.r_right is None:
            raise ValueError("mode_matrix requires a grid built with r_right")
        n, r = self.n, self.r
        A = self.d2b + (1.0 / r)[:, None] * self.d1b
        bc_vec = self.d2b_bc + self.d1b_bc / r
        A -= np.diag(nu**2 / r**2)
        pde = np.ones(n, dtype=bool)
        pde[:2] = False
        A[pde] -= mu2 * np.eye(n)[pde]
        # closure rows
        A[0] = 0.0
        A[1] = 0.0
        bc_vec[:2] = 0.0
        row = self.closure_row(float(nu)) if mu2 <= MU_CLAMP**2 else None
        A[0, 0] = 1.0
        A[1, 1] = 1.0
        if row is not None:
            A[0, 2:6] = -row[0]
            A[1, 2:6] = -row[1]
        return A, bc_vec

    def apply_derivatives(self, V, use_boundary=False, bc=None):
        """First and second r-derivatives of mode data V (axis 0 radial)."""
        flat = V.reshape(self.n, -1)
        if use_boundary:
            d1 = self.d1b @ flat
            d2 = self.d2b @ flat
            if bc is not None:
                bflat = np.asarray(bc).reshape(1, -1)
                d1 += self.d1b_bc[:, None] * bflat
                d2 += self.d2b_bc[:, None] * bflat
        else:
            d1 = self.d1 @ flat
            d2 = self.d2 @ flat
        return d1.reshape(V.shape), d2.reshape(V.shape)
