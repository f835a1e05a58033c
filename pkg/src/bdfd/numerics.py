"""Small linear-algebra toolbox used by the other modules.

Sparse matrices are plain :class:`scipy.sparse.csr_matrix` objects; the
helpers here only enforce the structural invariants (sorted indices, no
stored zeros, symmetric pattern) that the assembly code relies on.
"""
from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NonConvergenceError, SolverFailure

Operator = Callable[[np.ndarray], np.ndarray]


def _canonical_csr(M) -> sp.csr_matrix:
    M = sp.csr_matrix(M, dtype=float, copy=True)
    M.sum_duplicates()
    M.eliminate_zeros()
    M.sort_indices()
    return M


def sparse_symmetric(M, tol: float = 1e-13) -> sp.csr_matrix:
    """Return ``M`` as canonical CSR, raising if it is not symmetric."""
    M = _canonical_csr(M)
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"symmetric matrix must be square, got {M.shape}")
    diff = abs(M - M.T)
    scale = max(1.0, abs(M).max() if M.nnz else 0.0)
    if diff.nnz and diff.max() > tol * scale:
        raise ValueError(f"matrix is not symmetric (max asymmetry {diff.max():.3e})")
    return M


def sparse_rect(M) -> sp.csr_matrix:
    return _canonical_csr(M)


def _as_operator(A) -> Operator:
    if callable(A) and not sp.issparse(A):
        return A
    return lambda x: A @ x


def cg_solve(
    A,
    b: np.ndarray,
    rtol: float = 1e-12,
    max_iter: int | None = None,
    x0: np.ndarray | None = None,
    preconditioner: Operator | None = None,
    return_iterations: bool = False,
):
    """Preconditioned conjugate gradients for an SPD system ``A x = b``.

    ``A`` may be a sparse/dense matrix or a callable ``x -> A x``. Without an
    explicit ``preconditioner`` the Jacobi (diagonal) one is used whenever
    the diagonal of ``A`` is available. Convergence means
    ``||A x - b|| <= rtol * ||b||``. With ``return_iterations=True`` the
    result is ``(x, iterations)``.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    apply_A = _as_operator(A)
    if max_iter is None:
        max_iter = max(10 * n, 100)

    if preconditioner is None:
        if sp.issparse(A) or isinstance(A, np.ndarray):
            diag = np.asarray(A.diagonal() if sp.issparse(A) else np.diag(A), dtype=float)
            if np.any(diag <= 0):
                raise SolverFailure(
                    "Jacobi preconditioner needs a positive diagonal; matrix is not SPD",
                    residual=float("nan"),
                )
            inv_diag = 1.0 / diag
            preconditioner = lambda r: inv_diag * r  # noqa: E731
        else:
            preconditioner = lambda r: r  # noqa: E731

    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    def done(x, it):
        return (x, it) if return_iterations else x

    if bnorm == 0.0:
        return done(np.zeros(n), 0)
    r = b - apply_A(x)
    rnorm = np.linalg.norm(r)
    if rnorm <= rtol * bnorm:
        return done(x, 0)
    z = preconditioner(r)
    d = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        Ad = apply_A(d)
        dAd = d @ Ad
        if dAd <= 0:
            raise SolverFailure(
                "CG breakdown: non-positive curvature, operator is not SPD",
                residual=rnorm / bnorm,
            )
        alpha = rz / dAd
        x += alpha * d
        r -= alpha * Ad
        rnorm = np.linalg.norm(r)
        if rnorm <= rtol * bnorm:
            # recompute the true residual once to guard against drift
            true_r = np.linalg.norm(b - apply_A(x))
            if true_r <= rtol * bnorm:
                return done(x, it)
            r = b - apply_A(x)
        z = preconditioner(r)
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
    raise NonConvergenceError(
        f"CG did not converge in {max_iter} iterations (relative residual {rnorm / bnorm:.3e})",
        residual=rnorm / bnorm,
    )


def spd_solver(A, method: str = "direct", rtol: float = 1e-12) -> Operator:
    """Return ``b -> A^{-1} b`` for a sparse SPD matrix.

    ``"direct"`` factorizes once with SuperLU; ``"cg"`` runs Jacobi-PCG per call.
    """
    if method == "direct":
        lu = spla.splu(sp.csc_matrix(A))
        return lu.solve
    if method == "cg":
        return lambda b: cg_solve(A, b, rtol=rtol)
    raise ValueError(f"unknown solver method {method!r}")


def jacobi_eigs(M, tol: float = 1e-14, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a small dense symmetric matrix by cyclic Jacobi rotations.

    Returns the eigenvalues sorted ascending.
    """
    a = np.array(M, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, np.linalg.norm(a))
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-12 * scale:
        raise ValueError("jacobi_eigs needs a symmetric matrix")
    a = 0.5 * (a + a.T)

    mask = ~np.eye(n, dtype=bool)

    def off(m):
        return np.sqrt(np.sum(m[mask] ** 2))

    for _ in range(max_sweeps):
        if off(a) < tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                elif theta == 0.0:
                    t = 1.0
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                a[p, q] = a[q, p] = 0.0
    else:
        raise NonConvergenceError(
            f"Jacobi eigensolver did not converge in {max_sweeps} sweeps", residual=off(a)
        )
    return np.sort(np.diag(a))


def generalized_power_iteration(
    M_apply: Operator,
    C,
    tol: float = 1e-8,
    max_iter: int = 5000,
    solve_C: Operator | None = None,
    seed: int = 0,
    return_history: bool = False,
):
    """Largest eigenvalue of ``M phi = mu C phi`` with ``M`` C-self-adjoint, PSD.

    Iterates ``x <- C^{-1} M x`` and normalizes in the C-inner product. Stops
    once the Rayleigh quotient changes by less than ``tol`` relative.
    """
    n = C.shape[0]
    if solve_C is None:
        solve_C = spd_solver(C)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    x /= np.sqrt(x @ (C @ x))
    history = []
    mu_old = None
    for _ in range(max_iter):
        Mx = M_apply(x)
        mu = float(x @ Mx)
        history.append(mu)
        if mu <= 0.0 and np.linalg.norm(Mx) == 0.0:
            return (0.0, history) if return_history else 0.0
        if mu_old is not None and abs(mu - mu_old) <= tol * abs(mu):
            return (mu, history) if return_history else mu
        mu_old = mu
        y = solve_C(Mx)
        x = y / np.sqrt(y @ (C @ y))
    raise NonConvergenceError(
        f"power iteration did not converge in {max_iter} iterations",
        residual=abs(history[-1] - history[-2]) / max(abs(history[-1]), 1e-300),
    )
