from __future__ import annotations

import numpy as np

from ..numerics import generalized_power_iteration, spd_solver
from .system import EllipticParabolicSystem


def estimate_coupling(problem: EllipticParabolicSystem, tol: float = 1e-10, max_iter: int = 20000, seed: int = 0) -> float:
    """Discrete coupling strength: largest ``mu`` with ``D A^{-1} D^T phi = mu C phi``.

    The Schur operator is applied matrix-free with a factorized ``A``.
    """
    if problem.D.nnz == 0:
        return 0.0
    solve_A = spd_solver(problem.A)
    D, DT = problem.D, problem.D.T.tocsr()

    def schur(x: np.ndarray) -> np.ndarray:
        return D @ solve_A(DT @ x)

    return generalized_power_iteration(schur, problem.C, tol=tol, max_iter=max_iter, seed=seed)
