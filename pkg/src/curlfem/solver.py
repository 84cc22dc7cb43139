"""Sparse solves for the reduced complex-symmetric systems."""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


@dataclass(frozen=True)
class SolveReport:
    method: str
    relative_residual: float
    iterations: int = 0
    fill_factor: float = 0.0


class SolverError(RuntimeError):
    pass


def _as_system(system):
    if hasattr(system, "matrix"):
        return system.matrix, system.rhs
    return system


def solve(system, tol=1e-10, method="direct", maxiter=None):
    """Solve A x = b and verify the relative residual against tol.

    The direct path is a sparse LU factorization with fill-reducing column
    ordering (deterministic).  The iterative fallback is a stabilized Krylov
    method with diagonal (Jacobi) preconditioning; the curl-curl minus mass
    operator is indefinite in general, so plain conjugate gradients are not
    used.
    """
    matrix, rhs = _as_system(system)
    if matrix.shape[0] == 0:
        raise SolverError("reduced system is empty")
    n = matrix.shape[0]
    bnorm = np.linalg.norm(rhs)
    if bnorm == 0.0:
        return np.zeros(n, dtype=complex), SolveReport(method=method,
                                                       relative_residual=0.0)
    if method == "direct":
        try:
            lu = spla.splu(sp.csc_matrix(matrix, dtype=complex))
        except RuntimeError as exc:   # singular factorization
            raise SolverError(f"sparse LU factorization failed: {exc}") from exc
        x = lu.solve(rhs.astype(complex))
        fill = lu.nnz / max(matrix.nnz, 1)
        report = SolveReport(method="direct", relative_residual=_relres(matrix, x, rhs),
                             fill_factor=float(fill))
    elif method == "iterative":
        diag = matrix.diagonal()
        if (np.abs(diag) < 1e-300).any():
            raise SolverError("zero diagonal entry; Jacobi preconditioner undefined")
        precond = spla.LinearOperator(matrix.shape, matvec=lambda v: v / diag,
                                      dtype=complex)
        history = []
        x, info = spla.bicgstab(
            sp.csr_matrix(matrix, dtype=complex), rhs.astype(complex),
            rtol=tol / 10, atol=0.0, M=precond,
            maxiter=20 * n if maxiter is None else maxiter,
            callback=lambda xk: history.append(float(_relres(matrix, xk, rhs))))
        if info != 0:
            raise SolverError(
                f"iterative solve did not converge (info={info}); residual "
                f"history tail: {[f'{r:.2e}' for r in history[-5:]]}")
        report = SolveReport(method="iterative",
                             relative_residual=_relres(matrix, x, rhs),
                             iterations=len(history))
    else:
        raise ValueError(f"unknown solver method {method!r}")
    if report.relative_residual > tol:
        raise SolverError(
            f"solution residual {report.relative_residual:.3e} exceeds "
            f"tolerance {tol:.1e}")
    return x, report


def _relres(matrix, x, rhs):
    return float(np.linalg.norm(matrix @ x - rhs) / np.linalg.norm(rhs))
