"""Cholesky factor of a Gram matrix grown and shrunk one column at a time."""

import numpy as np
from scipy.linalg import cho_solve, solve_triangular


class CholeskyFactor:
    """Lower triangular L with L @ L.T equal to the Gram matrix of the
    columns added so far.

    Args:
        eps: Relative pivot threshold. Appending a column whose squared
            distance to the span of the current columns falls below
            eps times its squared norm raises RankDeficiencyError.
    """

    def __init__(self, eps=1e-10):
        self.eps = eps
        self._L = np.zeros((0, 0))

    def __len__(self):
        return self._L.shape[0]

    @property
    def L(self):
        return self._L

    def append(self, cross, diag):
        """Add a column to the factored Gram matrix.

        Args:
            cross: Inner products of the new column with the current columns.
            diag: Squared norm of the new column.

        Raises:
            RankDeficiencyError: The new column is (numerically) in the span
                of the current ones.
        """
        k = len(self)
        cross = np.asarray(cross, dtype=float)
        if cross.shape != (k,):
            raise ValueError(f"cross must have length {k}.")

        z = solve_triangular(self._L, cross, lower=True) if k else cross
        pivot = diag - z @ z
        if pivot <= self.eps * diag:
            raise RankDeficiencyError(
                f"pivot {pivot:.3e} below tolerance for column {k}."
            )

        grown = np.zeros((k + 1, k + 1))
        grown[:k, :k] = self._L
        grown[k, :k] = z
        grown[k, k] = np.sqrt(pivot)
        self._L = grown

    def remove(self, index):
        """Delete column `index`, restoring triangularity by Givens rotations."""
        k = len(self)
        if not 0 <= index < k:
            raise IndexError(f"column {index} out of range for size {k}.")

        M = np.delete(self._L, index, axis=0)
        for j in range(index, k - 1):
            a, b = M[j, j], M[j, j + 1]
            r = np.hypot(a, b)
            if r == 0:
                continue
            c, s = a / r, b / r
            left, right = M[:, j].copy(), M[:, j + 1].copy()
            M[:, j] = c * left + s * right
            M[:, j + 1] = -s * left + c * right
            M[j, j + 1] = 0.0
        M = M[:, : k - 1]
        # Column sign flips leave L @ L.T unchanged; keep the diagonal positive.
        flips = np.where(np.diag(M) < 0, -1.0, 1.0)
        self._L = M * flips

    def solve(self, rhs):
        """Solve (L @ L.T) x = rhs."""
        return cho_solve((self._L, True), rhs)


class RankDeficiencyError(Exception):
    pass
