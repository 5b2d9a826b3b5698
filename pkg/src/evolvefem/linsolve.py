"""Sparse SPD solves for the harmonic extension and BDF step matrices."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    """Factorization or solve failure, carrying the matrix role."""

    def __init__(self, role: str, detail: str):
        self.role = role
        super().__init__(f"{role}: {detail}")


class SpdSolver:
    """Direct sparse factorization with a per-solve residual contract.

    Every solve verifies ||K y - b|| <= tol ||b|| and raises otherwise;
    `max_residual` records the worst relative residual seen.  Immutable
    after construction, so concurrent solves are safe.
    """

    def __init__(self, K: sp.spmatrix, role: str = "matrix", tol: float = RESIDUAL_TOL):
        self.role = role
        self.tol = tol
        self.n = K.shape[0]
        self.max_residual = 0.0
        self.n_solves = 0
        self._K = K.tocsr()
        try:
            # MMD on A^T + A: markedly cheaper than COLAMD for these
            # structurally symmetric SPD matrices
            self._lu = spla.splu(K.tocsc(), permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise SolverError(role, f"factorization failed ({exc})") from exc
        # cheap SPD probe: the quadratic form must be positive on random vectors
        rng = np.random.default_rng(0)
        for _ in range(3):
            z = rng.standard_normal(self.n)
            q = z @ (self._K @ z)
            if not q > 0:
                raise SolverError(role, f"matrix is not positive definite (z'Kz = {q:.3e})")

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise SolverError(self.role, f"dimension mismatch: {b.shape[0]} != {self.n}")
        y = self._lu.solve(b)
        nb = np.linalg.norm(b, axis=0)
        res = np.linalg.norm(self._K @ y - b, axis=0)
        rel = float(np.max(res / np.where(nb > 0, nb, 1.0)))
        self.max_residual = max(self.max_residual, rel)
        self.n_solves += 1
        if rel > self.tol:
            raise SolverError(self.role, f"residual {rel:.3e} exceeds tolerance {self.tol:.1e}")
        return y


def factorize(K: sp.spmatrix, role: str = "matrix", tol: float = RESIDUAL_TOL) -> SpdSolver:
    return SpdSolver(K, role, tol)
