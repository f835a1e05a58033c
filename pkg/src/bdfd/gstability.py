"""Weighted-norm (G-stability) certificates for the delayed BDF-k schemes.

For ``k = delta`` the energy identity

    <tau*dy + mu*D(tau*dy), y^n - eta*y^{n-1}>
        = |Y^n|_G^2 - |Y^{n-1}|_G^2 + (sum_i gamma_i y^{n-i})^2

holds for every sequence once the multiplier vector ``gamma`` solves a
small quadratic system (one equation per lag of its autocorrelation) and
``G = base + mu*M_mu + eta*M_eta + eta*mu*M_etamu - L L^T`` with ``L`` the
lower-triangular Toeplitz matrix built from ``gamma_0 .. gamma_{2k-1}``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import NoRealSolutionError, ShapeError, SolverFailure, UnsupportedOrderError
from .numerics import jacobi_eigs
from .stencils import apply_bdf, apply_delay, bdf_coefficients, delay_coefficients

SUPPORTED_ORDERS = (1, 2, 3)

_THRESHOLDS = {1: Fraction(1), 2: Fraction(1, 3), 3: Fraction(1, 7)}
_DEFAULT_ETA = {1: 0.0, 2: 0.0, 3: 0.12}

# Right-hand sides of the multiplier systems, one row per autocorrelation lag
# d = 0..2k, stored as coefficients of (1, mu, eta, eta*mu).
_GAMMA_RHS = {
    1: ["1 0 1 -1", "-1 1 -1 1", "0 -1 0 0"],
    2: ["3/2 0 2 -3", "-2 3 -2 11/2", "1/2 -11/2 0 -3", "0 3 0 1/2", "0 -1/2 0 0"],
    3: [
        "11/6 0 3 -11/2",
        "-3 11/2 -10/3 29/2",
        "3/2 -29/2 1/3 -46/3",
        "-1/3 46/3 0 17/2",
        "0 -17/2 0 -5/2",
        "0 5/2 0 1/3",
        "0 -1/3 0 0",
    ],
}

# G = base + mu*M_mu + eta*M_eta + eta*mu*M_etamu - L L^T
_G_PARTS = {
    1: {
        "base": ["1 -1/2", "-1/2 1"],
        "mu": ["0 1/2", "1/2 0"],
        "eta": ["0 -1/2", "-1/2 1"],
        "etamu": ["0 0", "0 -1"],
    },
    2: {
        "base": ["3/2 -1 1/4 0", "-1 3/2 -1 1/4", "1/4 -1 3/2 -1", "0 1/4 -1 3/2"],
        "mu": ["0 3/2 -11/4 3/2", "3/2 0 3/2 -11/4", "-11/4 3/2 0 3/2", "3/2 -11/4 3/2 0"],
        "eta": ["0 -3/4 0 0", "-3/4 2 -1 0", "0 -1 2 -1", "0 0 -1 2"],
        "etamu": ["0 0 0 0", "0 -3 11/4 -3/2", "0 11/4 -3 11/4", "0 -3/2 11/4 -3"],
    },
    3: {
        "base": [
            "11/6 -3/2 3/4 -1/6 0 0",
            "-3/2 11/6 -3/2 3/4 -1/6 0",
            "3/4 -3/2 11/6 -3/2 3/4 -1/6",
            "-1/6 3/4 -3/2 11/6 -3/2 3/4",
            "0 -1/6 3/4 -3/2 11/6 -3/2",
            "0 0 -1/6 3/4 -3/2 11/6",
        ],
        "mu": [
            "0 11/4 -29/4 23/3 -17/4 5/4",
            "11/4 0 11/4 -29/4 23/3 -17/4",
            "-29/4 11/4 0 11/4 -29/4 23/3",
            "23/3 -29/4 11/4 0 11/4 -29/4",
            "-17/4 23/3 -29/4 11/4 0 11/4",
            "5/4 -17/4 23/3 -29/4 11/4 0",
        ],
        "eta": [
            "0 -11/12 0 0 0 0",
            "-11/12 3 -5/3 1/6 0 0",
            "0 -5/3 3 -5/3 1/6 0",
            "0 1/6 -5/3 3 -5/3 1/6",
            "0 0 1/6 -5/3 3 -5/3",
            "0 0 0 1/6 -5/3 3",
        ],
        "etamu": [
            "0 0 0 0 0 0",
            "0 -11/2 29/4 -23/3 17/4 -5/4",
            "0 29/4 -11/2 29/4 -23/3 17/4",
            "0 -23/3 29/4 -11/2 29/4 -23/3",
            "0 17/4 -23/3 29/4 -11/2 29/4",
            "0 -5/4 17/4 -23/3 29/4 -11/2",
        ],
    },
}


def _check_order(k: int) -> None:
    if k not in SUPPORTED_ORDERS:
        raise UnsupportedOrderError(
            f"stability certificates exist only for k in {SUPPORTED_ORDERS}, got k={k}"
        )


def _parse_rows(rows: Sequence[str]) -> list[list[Fraction]]:
    return [[Fraction(tok) for tok in row.split()] for row in rows]


def gamma_rhs_table(k: int) -> list[list[Fraction]]:
    """Exact lag-by-lag right-hand sides as rows ``(1, mu, eta, eta*mu)``."""
    _check_order(k)
    return _parse_rows(_GAMMA_RHS[k])


def g_matrix_parts(k: int) -> dict[str, list[list[Fraction]]]:
    """Exact ``base``, ``mu``, ``eta`` and ``etamu`` matrices of ``G``."""
    _check_order(k)
    return {name: _parse_rows(rows) for name, rows in _G_PARTS[k].items()}


_RHS_FLOAT = {k: np.array(gamma_rhs_table(k), dtype=float) for k in SUPPORTED_ORDERS}
_G_FLOAT = {
    k: {name: np.array(m, dtype=float) for name, m in g_matrix_parts(k).items()}
    for k in SUPPORTED_ORDERS
}


def critical_threshold(k: int) -> Fraction:
    """Largest coupling value ``mu`` for which the k-step multiplier system is solvable."""
    _check_order(k)
    return _THRESHOLDS[k]


def default_eta(k: int) -> float:
    _check_order(k)
    return _DEFAULT_ETA[k]


def _check_mu(k: int, mu: float) -> None:
    if mu < 0:
        raise ValueError(f"coupling value must be non-negative, got mu={mu}")
    if mu > critical_threshold(k):
        raise NoRealSolutionError(
            f"no real multiplier vector for k={k} beyond mu={critical_threshold(k)} (got mu={mu})",
            mu=mu,
        )


def gamma_system_rhs(k: int, mu: float, eta: float) -> np.ndarray:
    coeffs = _RHS_FLOAT[k]
    return coeffs @ np.array([1.0, mu, eta, eta * mu])


def _autocorrelation(gamma: np.ndarray) -> np.ndarray:
    s = len(gamma) - 1
    out = np.empty(s + 1)
    out[0] = gamma @ gamma
    for d in range(1, s + 1):
        out[d] = 2.0 * (gamma[: s + 1 - d] @ gamma[d:])
    return out


def gamma_system_residual(k: int, mu: float, eta: float, gamma) -> np.ndarray:
    """Residual of the multiplier system; ordered by lag 0 .. 2k."""
    _check_order(k)
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (2 * k + 1,):
        raise ShapeError(f"gamma for k={k} must have {2 * k + 1} entries, got {gamma.shape}")
    return _autocorrelation(gamma) - gamma_system_rhs(k, mu, eta)


# ---------------------------------------------------------------------------
# closed-form solutions

def gamma_k1(mu: float, eta: float = 0.0) -> np.ndarray:
    if not 0.0 <= eta < 1.0:
        raise ValueError(f"multiplier eta must lie in [0, 1), got {eta}")
    _check_mu(1, mu)
    g1 = math.sqrt(0.5 * (1.0 + eta) * (1.0 - mu))
    root = math.sqrt(0.5 * mu + 0.125 * (1.0 + eta) * (1.0 - mu))
    return np.array([-0.5 * g1 + root, g1, -0.5 * g1 - root])


def gamma_k2(mu: float) -> tuple[np.ndarray, float]:
    """Certified k=2 branch (multiplier ``eta = 0``); returns ``(gamma, eta)``."""
    _check_mu(2, mu)
    s13 = math.sqrt(max(1.0 - 3.0 * mu, 0.0))
    s51 = math.sqrt(5.0 * mu + 1.0)
    theta = -0.25 * (s51 + s13)
    rad = math.sqrt(mu + theta * theta)
    frac = (3.0 * mu - s13 * theta) / (2.0 * rad)
    gamma = np.array(
        [
            0.5 * theta + 0.5 * rad,
            0.5 * s13 - frac,
            -0.75 * s13 + 0.25 * s51,
            0.5 * s13 + frac,
            0.5 * theta - 0.5 * rad,
        ]
    )
    return gamma, 0.0


# ---------------------------------------------------------------------------
# spectral factorization

_NEWTON_TOL = 1e-15
_UNIT_TOL = 1e-6


def _gamma_jacobian(gamma: np.ndarray) -> np.ndarray:
    n = len(gamma)
    jac = np.empty((n, n))
    jac[0] = 2.0 * gamma
    for d in range(1, n):
        row = np.zeros(n)
        row[: n - d] += 2.0 * gamma[d:]
        row[d:] += 2.0 * gamma[: n - d]
        jac[d] = row
    return jac


def _newton_polish(k, mu, eta, guess, max_iter=8):
    """Damped Newton steps that are kept only while they lower the residual."""
    g = np.array(guess, dtype=float)
    res = gamma_system_residual(k, mu, eta, g)
    rnorm = np.max(np.abs(res))
    for _ in range(max_iter):
        if rnorm <= _NEWTON_TOL:
            break
        step = np.linalg.lstsq(_gamma_jacobian(g), res, rcond=None)[0]
        lam = 1.0
        while lam > 1e-4:
            trial = g - lam * step
            trial_res = gamma_system_residual(k, mu, eta, trial)
            trial_norm = np.max(np.abs(trial_res))
            if trial_norm < rnorm:
                break
            lam *= 0.5
        else:
            break
        g, res, rnorm = trial, trial_res, trial_norm
    return g, rnorm


def _pair_unit_roots(roots: list[complex]) -> list[complex]:
    """Unit-circle roots of an autocorrelation come in pairs; keep one of each."""
    left = list(roots)
    kept = []
    while left:
        z = left.pop(0)
        j = min(range(len(left)), key=lambda i: abs(left[i] - z))
        w = left.pop(j)
        m = 0.5 * (z + w)
        kept.append(m / abs(m))
    return kept


def solve_gamma_spectral(k: int, mu: float, eta: float) -> np.ndarray:
    """Multiplier vector as the maximum-phase spectral factor of the system.

    The system says that ``gamma(z) * gamma(1/z)`` equals a known Laurent
    polynomial ``R(z)``. Every real solution is therefore a polynomial built
    from one root of each reciprocal pair of ``R``. The certified branch takes
    every root outside the unit circle (and one copy of each unit-circle
    root), with coefficients ordered so that ``gamma_0`` multiplies the
    highest power. At ``mu = 0`` the high lags vanish and the factor sits on
    the trailing ``k+1`` slots. A few Newton steps polish the result.
    """
    _check_order(k)
    if not 0.0 <= eta < 1.0:
        raise ValueError(f"multiplier eta must lie in [0, 1), got {eta}")
    _check_mu(k, mu)
    rhs = gamma_system_rhs(k, mu, eta)
    lags = np.concatenate([[rhs[0]], 0.5 * rhs[1:]])
    # lags far below roundoff only push roots toward infinity; drop them
    lags[np.abs(lags) <= 1e-14 * abs(lags[0])] = 0.0
    laurent = np.trim_zeros(np.concatenate([lags[::-1], lags[1:]]))
    # sum(gamma) = 0 forces a double root at z = 1; deflate it exactly
    quotient, _ = np.polydiv(laurent, np.poly([1.0, 1.0]))
    roots = np.roots(quotient)
    outside = [z for z in roots if abs(z) > 1.0 + _UNIT_TOL]
    unit = [z for z in roots if abs(abs(z) - 1.0) <= _UNIT_TOL]
    if len(unit) % 2:
        raise SolverFailure(
            f"odd number of unit-circle roots at mu={mu}", residual=float("nan"), mu=mu
        )
    factor = np.real(np.poly(outside + _pair_unit_roots(unit) + [1.0]))
    factor *= math.sqrt(lags[0] / (factor @ factor))
    gamma = np.zeros(2 * k + 1)
    gamma[2 * k + 1 - len(factor):] = factor
    # sign convention shared with the closed forms: odd-index sum positive
    if gamma[1::2].sum() < 0:
        gamma = -gamma
    gamma, res = _newton_polish(k, mu, eta, gamma)
    if res > 1e-10:
        raise SolverFailure(
            f"multiplier system residual {res:.3e} at mu={mu}", residual=res, mu=mu
        )
    return gamma


def solve_gamma_k3(mu: float, eta: float = 0.12) -> np.ndarray:
    return solve_gamma_spectral(3, mu, eta)


def solve_gamma(k: int, mu: float, eta: float | None = None) -> tuple[np.ndarray, float]:
    """Pick the certified multiplier branch for ``k``; returns ``(gamma, eta)``."""
    _check_order(k)
    if eta is None:
        eta = default_eta(k)
    if k == 1:
        return gamma_k1(mu, eta), eta
    if k == 2 and eta == 0.0:
        return gamma_k2(mu)
    return solve_gamma_spectral(k, mu, eta), eta


# ---------------------------------------------------------------------------
# G matrices and the summation identity

def assemble_G(k: int, mu: float, eta: float, gamma) -> np.ndarray:
    _check_order(k)
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (2 * k + 1,):
        raise ShapeError(f"gamma for k={k} must have {2 * k + 1} entries, got {gamma.shape}")
    parts = _G_FLOAT[k]
    s = 2 * k
    L = np.zeros((s, s))
    for i in range(s):
        L[i, : i + 1] = gamma[i::-1][: i + 1]
    G = parts["base"] + mu * parts["mu"] + eta * parts["eta"] + eta * mu * parts["etamu"] - L @ L.T
    return 0.5 * (G + G.T)


def eigenvalues_k1_closed_form(mu: float) -> tuple[float, float]:
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"closed-form k=1 eigenvalues need 0 <= mu <= 1, got {mu}")
    a = math.sqrt(1.0 - mu) * math.sqrt(3.0 * mu + 1.0)
    b = math.sqrt((3.0 + mu) * (1.0 - mu) + 2.0 * (1.0 - mu) * a)
    return 0.25 * a - 0.25 * b + 0.5, 0.25 * a + 0.25 * b + 0.5


@dataclass(frozen=True)
class StabilityCertificate:
    k: int
    delta: int
    mu: float
    eta: float
    gamma: np.ndarray
    g_matrix: np.ndarray
    gamma_residual: float
    identity_residual: float = float("nan")
    min_eig: float = float("nan")
    max_eig: float = float("nan")


def _identity_sides(k, delta, mu, eta, gamma, G, y):
    """Both sides of the summation identity for every admissible window of ``y``."""
    scheme = bdf_coefficients(k)
    stencil = delay_coefficients(delta)
    s = k + delta
    lhs, rhs = [], []
    for w in range(len(y) - s):
        win = y[w : w + s + 1]
        d0 = apply_bdf(scheme, win[: k + 1], 1.0)
        delayed = apply_delay(
            stencil, [apply_bdf(scheme, win[l : l + k + 1], 1.0) for l in range(1, delta + 1)]
        )
        lhs.append(np.sum((d0 + mu * delayed) * (win[0] - eta * win[1])))
        Yn, Yp = win[:s], win[1 : s + 1]
        comb = np.tensordot(gamma, win, axes=1)
        rhs.append(
            np.sum(Yn * np.tensordot(G, Yn, axes=1))
            - np.sum(Yp * np.tensordot(G, Yp, axes=1))
            + np.sum(comb * comb)
        )
    return np.array(lhs), np.array(rhs)


def verify_summation_identity(
    cert: StabilityCertificate, sequence, relative: bool = False
) -> float:
    """Max over windows of ``|LHS - RHS|`` for a newest-first sequence.

    ``sequence`` may be scalar (shape ``(L,)``) or vector valued (``(L, dim)``).
    With ``relative=True`` the residual is divided by ``max|y|^2``.
    """
    y = np.asarray(sequence, dtype=float)
    s = cert.k + cert.delta
    if y.shape[0] < s + 1:
        raise ShapeError(f"sequence needs at least {s + 1} entries for k={cert.k}, got {y.shape[0]}")
    lhs, rhs = _identity_sides(cert.k, cert.delta, cert.mu, cert.eta, cert.gamma, cert.g_matrix, y)
    res = float(np.max(np.abs(lhs - rhs)))
    if relative:
        scale = float(np.max(np.abs(y))) ** 2
        res = res / scale if scale > 0 else res
    return res


def certify(
    k: int,
    mu: float,
    eta: float | None = None,
    n_sequences: int = 100,
    length: int = 10,
    seed: int = 0,
) -> StabilityCertificate:
    """Solve for ``gamma``, build ``G``, and check the identity on random sequences."""
    gamma, eta = solve_gamma(k, mu, eta)
    G = assemble_G(k, mu, eta, gamma)
    eigs = jacobi_eigs(G)
    cert = StabilityCertificate(
        k=k,
        delta=k,
        mu=float(mu),
        eta=float(eta),
        gamma=gamma,
        g_matrix=G,
        gamma_residual=float(np.max(np.abs(gamma_system_residual(k, mu, eta, gamma)))),
        min_eig=float(eigs[0]),
        max_eig=float(eigs[-1]),
    )
    if n_sequences <= 0:
        return cert
    rng = np.random.default_rng(seed)
    worst = max(
        verify_summation_identity(cert, rng.standard_normal(length), relative=True)
        for _ in range(n_sequences)
    )
    return StabilityCertificate(**{**cert.__dict__, "identity_residual": worst})


# ---------------------------------------------------------------------------
# spectrum scans

@dataclass
class SpectrumScan:
    k: int
    eta: float
    mu_grid: np.ndarray
    eigenvalues: np.ndarray
    residuals: np.ndarray
    gammas: np.ndarray
    failed_mu: float | None = field(default=None)

    def header(self) -> list[str]:
        s = 2 * self.k
        return (
            ["mu"]
            + [f"lambda_{i}" for i in range(1, s + 1)]
            + ["residual"]
            + [f"gamma_{i}" for i in range(s + 1)]
        )

    def rows(self) -> list[list[float]]:
        out = [
            [mu, *eig, res, *g]
            for mu, eig, res, g in zip(self.mu_grid, self.eigenvalues, self.residuals, self.gammas)
        ]
        if self.failed_mu is not None:
            out.append([self.failed_mu] + [float("nan")] * (len(self.header()) - 1))
        return out

    def to_csv(self, path) -> None:
        write_csv(path, self.header(), self.rows())


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def write_csv(path, header: Sequence[str], rows: Sequence[Sequence[float]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(x) for x in row])


class ScanFailure(SolverFailure):
    """Raised by :func:`scan_spectrum`; ``partial`` holds the rows computed so far."""

    def __init__(self, message, partial: SpectrumScan, residual=float("nan"), mu=None):
        super().__init__(message, residual=residual, mu=mu)
        self.partial = partial


def scan_spectrum(k: int, eta: float | None, mu_grid) -> SpectrumScan:
    """Eigenvalues of ``G(mu)`` (cyclic Jacobi) and system residuals over a grid."""
    _check_order(k)
    if eta is None:
        eta = default_eta(k)
    grid = np.asarray(mu_grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0:
        raise ValueError("mu_grid must be a non-empty vector")
    if np.any(np.diff(grid) <= 0):
        raise ValueError("mu_grid must be strictly increasing")
    if grid[0] < 0 or grid[-1] > critical_threshold(k):
        raise ValueError(f"mu_grid must lie in [0, {critical_threshold(k)}]")
    eigs, residuals, gammas = [], [], []

    def partial(failed=None):
        s = 2 * k
        n = len(eigs)
        return SpectrumScan(
            k=k,
            eta=eta,
            mu_grid=grid[:n],
            eigenvalues=np.array(eigs).reshape(n, s),
            residuals=np.array(residuals),
            gammas=np.array(gammas).reshape(n, s + 1),
            failed_mu=failed,
        )

    for mu in grid:
        try:
            gamma, used_eta = solve_gamma(k, float(mu), eta)
        except (SolverFailure, NoRealSolutionError) as exc:
            raise ScanFailure(
                f"gamma solve failed at mu={mu:.17g}: {exc}",
                partial=partial(float(mu)),
                residual=getattr(exc, "residual", float("nan")),
                mu=float(mu),
            ) from exc
        G = assemble_G(k, float(mu), used_eta, gamma)
        eigs.append(jacobi_eigs(G))
        residuals.append(float(np.max(np.abs(gamma_system_residual(k, mu, used_eta, gamma)))))
        gammas.append(gamma)
    return partial()
