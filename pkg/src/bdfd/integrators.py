"""Time integrators for ``A u - D^T p = f``, ``D u' + C p' + B p = g``.

Three formulations share one set of factorized operators:

* ``semi_explicit``: the elastic equation sees only an extrapolation of past
  pressures, so each step is one solve with ``A`` followed by one solve with
  the flow matrix ``xi_0/tau * C + B``.
* ``monolithic``: the fully coupled BDF-k step, solved through the pressure
  Schur complement with an outer PCG preconditioned by the flow matrix.
* ``reduced``: the pressure-only recursion obtained by eliminating ``u``
  from the semi-explicit scheme.

All windows are newest-first.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DivergenceError, ShapeError, SolverFailure, UnsupportedOrderError, UnsupportedProblemError
from .numerics import cg_solve, spd_solver
from .problems.system import EllipticParabolicSystem
from .stencils import bdf_coefficients, delay_coefficients

SCHEMES = ("semi_explicit", "monolithic", "reduced")
STARTUPS = ("exact", "constant-history")


@dataclass(frozen=True)
class SchemeConfig:
    k: int
    delta: int
    tau: float
    T: float
    startup: str = "exact"
    solver: str = "direct"
    rtol: float = 1e-13

    def __post_init__(self):
        if self.k not in (1, 2, 3):
            raise UnsupportedOrderError(f"BDF order k={self.k} not supported; use 1 <= k <= 3")
        if self.delta not in (1, 2, 3):
            raise UnsupportedOrderError(f"delay count delta={self.delta} not supported; use 1 <= delta <= 3")
        if not self.tau > 0:
            raise ValueError(f"step size must be positive, got tau={self.tau}")
        if self.T < 0:
            raise ValueError(f"final time must be non-negative, got T={self.T}")
        ratio = self.T / self.tau
        if abs(ratio - round(ratio)) > 1e-12 * max(1.0, ratio):
            raise ValueError(f"T/tau = {ratio!r} is not an integer")
        if self.startup not in STARTUPS:
            raise ValueError(f"startup must be one of {STARTUPS}, got {self.startup!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.tau))

    @property
    def window(self) -> int:
        """Number of startup values, ``max(k, delta)``."""
        return max(self.k, self.delta)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    u: np.ndarray
    p: np.ndarray
    iterations: np.ndarray
    scheme: str = ""

    @property
    def final_u(self) -> np.ndarray:
        return self.u[-1]

    @property
    def final_p(self) -> np.ndarray:
        return self.p[-1]


class StepOperators:
    """Factorizations reused by every step of one ``(problem, k, tau)`` run."""

    def __init__(self, problem: EllipticParabolicSystem, cfg: SchemeConfig):
        self.problem = problem
        self.cfg = cfg
        self.xi = bdf_coefficients(cfg.k).as_array()
        self.c = delay_coefficients(cfg.delta).as_array()
        self.flow = sp.csr_matrix(self.xi[0] / cfg.tau * problem.C + problem.B)
        self.solve_A = self._solver(problem.A, "elastic")
        self.solve_flow = self._solver(self.flow, "flow")
        self.DT = problem.D.T.tocsr()

    def _solver(self, M, stage):
        inner = spd_solver(M, self.cfg.solver, rtol=self.cfg.rtol)

        def solve(b):
            try:
                return inner(b)
            except SolverFailure as exc:
                raise SolverFailure(f"{stage} solve failed: {exc}", residual=exc.residual, stage=stage) from exc

        return solve

    def schur(self, x):
        """``D A^{-1} D^T x``."""
        return self.problem.D @ self.solve_A(self.DT @ x)


def _ops(problem, cfg, ops):
    return ops if ops is not None else StepOperators(problem, cfg)


def _check_window(window, need, what):
    if len(window) < need:
        raise ShapeError(f"{what} needs {need} past values, got {len(window)}")


def semi_explicit_step(problem, cfg: SchemeConfig, u_window: Sequence, p_window: Sequence, t: float, ops=None):
    """One decoupled step; returns ``(u^n, p^n)``.

    ``u_window`` holds ``u^{n-1} .. u^{n-k}``, ``p_window`` holds
    ``p^{n-1} .. p^{n-max(k, delta)}``.
    """
    ops = _ops(problem, cfg, ops)
    k, delta, tau = cfg.k, cfg.delta, cfg.tau
    _check_window(u_window, k, "u_window")
    _check_window(p_window, max(k, delta), "p_window")
    P = sum(ops.c[l] * p_window[l] for l in range(delta))
    u = ops.solve_A(problem.f(t) + ops.DT @ P)
    du = ops.xi[0] * u + sum(ops.xi[l] * u_window[l - 1] for l in range(1, k + 1))
    Cp = problem.C @ sum(ops.xi[l] * p_window[l - 1] for l in range(1, k + 1))
    p = ops.solve_flow(problem.g(t) - (problem.D @ du + Cp) / tau)
    return u, p


def monolithic_step(problem, cfg: SchemeConfig, u_window: Sequence, p_window: Sequence, t: float, ops=None, info=None):
    """Fully coupled BDF-k step via the pressure Schur complement."""
    ops = _ops(problem, cfg, ops)
    k, tau = cfg.k, cfg.tau
    _check_window(u_window, k, "u_window")
    _check_window(p_window, k, "p_window")
    x0 = ops.xi[0] / tau
    f = problem.f(t)
    hist = sum(ops.xi[l] * (problem.D @ u_window[l - 1] + problem.C @ p_window[l - 1]) for l in range(1, k + 1))
    rhs = problem.g(t) - hist / tau - x0 * (problem.D @ ops.solve_A(f))

    def S(x):
        return x0 * (problem.C @ x + ops.schur(x)) + problem.B @ x

    try:
        p, iters = cg_solve(
            S, rhs, rtol=cfg.rtol, x0=p_window[0], preconditioner=ops.solve_flow, return_iterations=True
        )
    except SolverFailure as exc:
        if exc.stage is not None:
            raise
        raise SolverFailure(f"outer Schur CG failed: {exc}", residual=exc.residual, stage="outer") from exc
    if info is not None:
        info["iterations"] = iters
    u = ops.solve_A(f + ops.DT @ p)
    return u, p


def reduced_p_step(
    problem, cfg: SchemeConfig, p_window: Sequence, t: float, ops=None, rhs_mode: str = "discrete"
):
    """Pressure-only step equivalent to the semi-explicit scheme.

    Solves ``(xi_0/tau C + B) p^n = g^n - D A^{-1} df^n
    - (1/tau) sum_{l>=1} xi_l C p^{n-l} - M sum_l c_l dp^{n-l}`` with
    ``M = D A^{-1} D^T`` applied matrix-free and ``d`` the BDF-k difference.
    ``rhs_mode="discrete"`` differentiates the load samples with the same
    BDF stencil, which makes the recursion identical to the two-field scheme.
    ``rhs_mode="analytic"`` uses the exact load derivative instead.
    """
    ops = _ops(problem, cfg, ops)
    k, delta, tau = cfg.k, cfg.delta, cfg.tau
    _check_window(p_window, k + delta, "p_window")
    if rhs_mode == "analytic":
        if problem.f_dot is None:
            raise UnsupportedProblemError("analytic reduced right-hand side needs the load derivative f_dot")
        df = problem.f_dot(t)
    elif rhs_mode == "discrete":
        df = sum(ops.xi[l] * problem.f(t - l * tau) for l in range(k + 1)) / tau
    else:
        raise ValueError(f"rhs_mode must be 'discrete' or 'analytic', got {rhs_mode!r}")

    def dp(j):
        # BDF difference of p at step n-j (j >= 1), using only past values
        return sum(ops.xi[l] * p_window[j + l - 1] for l in range(k + 1)) / tau

    delayed = sum(ops.c[l - 1] * dp(l) for l in range(1, delta + 1))
    Cp = problem.C @ sum(ops.xi[l] * p_window[l - 1] for l in range(1, k + 1))
    rhs = problem.g(t) - problem.D @ ops.solve_A(df) - Cp / tau - ops.schur(delayed)
    return ops.solve_flow(rhs)


def consistent_u(problem, ops: StepOperators, t: float, p_history: Sequence) -> np.ndarray:
    """``u`` solving ``A u = f(t) + D^T sum_l c_l p^{-l}`` for a newest-first history."""
    P = sum(ops.c[l] * p_history[l] for l in range(len(ops.c)))
    return ops.solve_A(problem.f(t) + ops.DT @ P)


def _startup(problem, cfg, ops, startup_values):
    s = cfg.window
    if startup_values is not None:
        us, ps = startup_values
        if len(us) < s or len(ps) < s:
            raise ShapeError(f"startup_values need {s} states each, got {len(us)}, {len(ps)}")
        return [np.array(x, dtype=float) for x in us[:s]], [np.array(x, dtype=float) for x in ps[:s]]
    if cfg.startup == "exact":
        if problem.exact_p is None:
            raise UnsupportedProblemError("startup='exact' needs an exact pressure evaluator")
        ps = [np.asarray(problem.exact_p(j * cfg.tau), dtype=float) for j in range(s)]
        us = [ops.solve_A(problem.f(j * cfg.tau) + ops.DT @ ps[j]) for j in range(s)]
        return us, ps
    return [problem.u0.copy()], [problem.p0.copy()]


def integrate(
    problem: EllipticParabolicSystem,
    cfg: SchemeConfig,
    scheme: str = "semi_explicit",
    startup_values=None,
    rhs_mode: str = "discrete",
) -> Trajectory:
    """March from ``t = 0`` to ``cfg.T``.

    ``startup='exact'`` takes ``p`` at the first ``max(k, delta)`` steps from
    the exact solution and the matching ``u`` from the elastic equation.
    ``startup='constant-history'`` starts from ``(u0, p0)`` alone and treats
    every value before ``t = 0`` as equal to the initial one. Explicit
    ``startup_values=(us, ps)`` (oldest first) override both.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    ops = StepOperators(problem, cfg)
    us, ps = _startup(problem, cfg, ops, startup_values)
    N = cfg.n_steps
    us, ps = us[: N + 1], ps[: N + 1]
    start = len(ps)
    depth = cfg.k + cfg.delta if scheme == "reduced" else max(cfg.k, cfg.delta)
    iterations = [0] * start

    def window(states, n, m):
        # newest-first values n-1 .. n-m, padded with the oldest state
        return [states[max(n - l, 0)] for l in range(1, m + 1)]

    for n in range(start, N + 1):
        t = n * cfg.tau
        if scheme == "semi_explicit":
            u, p = semi_explicit_step(problem, cfg, window(us, n, cfg.k), window(ps, n, depth), t, ops)
            iters = 2
        elif scheme == "monolithic":
            info = {}
            u, p = monolithic_step(problem, cfg, window(us, n, cfg.k), window(ps, n, cfg.k), t, ops, info)
            iters = info["iterations"]
        else:
            p = reduced_p_step(problem, cfg, window(ps, n, depth), t, ops, rhs_mode)
            u = consistent_u(problem, ops, t, window(ps, n, cfg.delta))
            iters = 1
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(u))):
            raise DivergenceError(f"{scheme} k={cfg.k} delta={cfg.delta} tau={cfg.tau:g} diverged at t={t:g}")
        us.append(u)
        ps.append(p)
        iterations.append(iters)
    times = cfg.tau * np.arange(len(ps))
    return Trajectory(
        times=times, u=np.array(us), p=np.array(ps), iterations=np.array(iterations), scheme=scheme
    )


def energy_norm(M, e: np.ndarray) -> float:
    return math.sqrt(max(float(e @ (M @ e)), 0.0))


def error_norms(traj: Trajectory, problem: EllipticParabolicSystem, reference="exact") -> tuple[float, float]:
    """``(|u - u_ref|_A, |p - p_ref|_C)`` at the final time.

    ``reference`` is ``"exact"`` or a :class:`Trajectory` on a grid that
    contains the final time.
    """
    T = traj.times[-1]
    if isinstance(reference, Trajectory):
        idx = int(np.argmin(np.abs(reference.times - T)))
        if abs(reference.times[idx] - T) > 1e-9 * max(1.0, T):
            raise ValueError(f"reference trajectory has no state at t={T}")
        u_ref, p_ref = reference.u[idx], reference.p[idx]
    elif reference == "exact":
        if not problem.has_exact:
            raise UnsupportedProblemError("problem has no exact solution")
        u_ref, p_ref = problem.exact_u(T), problem.exact_p(T)
    else:
        raise ValueError(f"unknown reference {reference!r}")
    eu, ep = traj.final_u - u_ref, traj.final_p - p_ref
    if eu.shape != (problem.dim_u,) or ep.shape != (problem.dim_p,):
        raise ShapeError("trajectory and problem dimensions do not match")
    return energy_norm(problem.A, eu), energy_norm(problem.C, ep)


@dataclass
class ConvergenceReport:
    scheme: str
    k: int
    delta: int
    taus: list[float]
    err_u: list[float]
    err_p: list[float]
    notes: list[str] = field(default_factory=list)

    @staticmethod
    def _orders(errs):
        return [math.log2(a / b) if a > 0 and b > 0 else float("nan") for a, b in zip(errs, errs[1:])]

    @property
    def order_u(self) -> list[float]:
        return self._orders(self.err_u)

    @property
    def order_p(self) -> list[float]:
        return self._orders(self.err_p)

    @property
    def label(self) -> str:
        return f"{self.scheme}_k{self.k}_d{self.delta}"

    def rows(self):
        ou = [float("nan")] + self.order_u
        op = [float("nan")] + self.order_p
        return [list(r) for r in zip(self.taus, self.err_u, self.err_p, ou, op)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["tau", "err_u", "err_p", "order_u", "order_p"])
            for row in self.rows():
                writer.writerow([format(float(x), ".17g") for x in row])


def worker_count(max_workers: int | None = None) -> int:
    if max_workers is not None:
        return max(1, max_workers)
    env = os.environ.get("BDFD_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def reference_trajectory(problem, tau_ref: float, T: float, k: int = 3) -> Trajectory:
    """Monolithic BDF-k run used as the time-error reference (exact pressure startup)."""
    cfg = SchemeConfig(k=k, delta=k, tau=tau_ref, T=T, startup="exact")
    return integrate(problem, cfg, "monolithic")


def _check_halving(taus):
    for a, b in zip(taus, taus[1:]):
        if abs(a / b - 2.0) > 1e-12:
            raise ValueError(f"step sizes must halve, got {a} then {b}")


def convergence_study(
    problem: EllipticParabolicSystem,
    k_list: Sequence[int],
    delta_list: Sequence[int] | None,
    tau_list: Sequence[float],
    scheme: str = "semi_explicit",
    T: float = 10.0,
    reference="exact",
    startup: str = "exact",
    reference_order: int = 3,
    max_workers: int | None = None,
) -> list[ConvergenceReport]:
    """Errors at ``T`` for each ``(k, delta)`` pair (zipped) and each step size.

    ``reference="exact"`` compares with the exact nodal solution.
    ``reference="monolithic"`` compares with a monolithic BDF run at
    ``min(tau_list)/8``; runs then take their startup values from that
    reference so startup and spatial errors do not pollute the orders.
    """
    taus = [float(t) for t in tau_list]
    _check_halving(taus)
    if delta_list is None:
        delta_list = list(k_list)
    if len(delta_list) != len(k_list):
        raise ValueError("k_list and delta_list must have equal length")
    ref_traj = None
    notes = []
    if reference == "monolithic":
        tau_ref = min(taus) / 8
        ref_traj = reference_trajectory(problem, tau_ref, T, reference_order)
        notes.append(f"reference: monolithic BDF-{reference_order}, tau={tau_ref:g}")
    elif reference != "exact":
        raise ValueError(f"reference must be 'exact' or 'monolithic', got {reference!r}")
    init = energy_norm(problem.A, problem.u0) + energy_norm(problem.C, problem.p0)

    def run(args):
        k, delta, tau = args
        cfg = SchemeConfig(k=k, delta=delta, tau=tau, T=T, startup=startup)
        startup_values = None
        if ref_traj is not None:
            stride = int(round(tau / (ref_traj.times[1] - ref_traj.times[0])))
            idx = [j * stride for j in range(cfg.window)]
            startup_values = ([ref_traj.u[i] for i in idx], [ref_traj.p[i] for i in idx])
        try:
            traj = integrate(problem, cfg, scheme, startup_values=startup_values)
        except (SolverFailure, DivergenceError) as exc:
            raise type(exc)(f"run k={k} delta={delta} tau={tau:g}: {exc}") from exc
        errs = error_norms(traj, problem, ref_traj if ref_traj is not None else "exact")
        if max(errs) > 1e3 * max(init, 1e-300):
            raise DivergenceError(f"run k={k} delta={delta} tau={tau:g} diverged: errors {errs}")
        return errs

    jobs = [(k, d, tau) for k, d in zip(k_list, delta_list) for tau in taus]
    workers = min(worker_count(max_workers), len(jobs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(job) for job in jobs]

    reports = []
    for i, (k, d) in enumerate(zip(k_list, delta_list)):
        chunk = results[i * len(taus) : (i + 1) * len(taus)]
        reports.append(
            ConvergenceReport(
                scheme=scheme,
                k=k,
                delta=d,
                taus=taus,
                err_u=[e[0] for e in chunk],
                err_p=[e[1] for e in chunk],
                notes=list(notes) + [f"startup: {'reference trajectory' if ref_traj is not None else startup}"],
            )
        )
    return reports
