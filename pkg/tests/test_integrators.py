import itertools
import math

import numpy as np
import pytest
import scipy.sparse as sp

from bdfd.errors import DivergenceError, ShapeError, UnsupportedOrderError, UnsupportedProblemError
from bdfd.gstability import critical_threshold
from bdfd.integrators import (
    ConvergenceReport,
    SchemeConfig,
    StepOperators,
    Trajectory,
    consistent_u,
    convergence_study,
    error_norms,
    integrate,
    monolithic_step,
    reduced_p_step,
    semi_explicit_step,
)
from bdfd.problems import Profile, build_biot_problem, build_spectral_problem
from bdfd.problems.system import EllipticParabolicSystem
from bdfd.stencils import bdf_coefficients


def scalar_problem(D=0.0, A=1.0, B=1.0, C=1.0, f=None, g=None, p0=1.0, f_dot=None):
    f = f or (lambda t: np.zeros(1))
    g = g or (lambda t: np.zeros(1))
    u0 = (f(0.0) + D * p0) / A
    m = lambda v: sp.csr_matrix([[v]])  # noqa: E731
    return EllipticParabolicSystem(A=m(A), B=m(B), C=m(C), D=m(D), f=f, g=g, u0=u0, p0=[p0], f_dot=f_dot)


def spectral(mus=(0.05, 0.08, 0.11), **kw):
    mus = list(mus)
    kw.setdefault("mms", Profile.oscillating(1.0, 1.0, 0.5))
    kw.setdefault("load", Profile.oscillating(0.5, 2.0, 1.0))
    return build_spectral_problem(mus, np.arange(1.0, len(mus) + 1), **kw)


# -- configuration ----------------------------------------------------------

def test_config_validation():
    with pytest.raises(UnsupportedOrderError):
        SchemeConfig(4, 1, 0.1, 1.0)
    with pytest.raises(UnsupportedOrderError):
        SchemeConfig(1, 0, 0.1, 1.0)
    with pytest.raises(ValueError):
        SchemeConfig(1, 1, 0.0, 1.0)
    with pytest.raises(ValueError):
        SchemeConfig(1, 1, 0.3, 1.0)
    with pytest.raises(ValueError):
        SchemeConfig(1, 1, 0.1, 1.0, startup="magic")
    cfg = SchemeConfig(2, 3, 0.1, 10.0)
    assert cfg.n_steps == 100 and cfg.window == 3


# -- single steps -----------------------------------------------------------

@pytest.mark.parametrize("step", [semi_explicit_step, monolithic_step])
def test_implicit_euler_on_decay(step):
    P = scalar_problem()
    cfg = SchemeConfig(1, 1, 0.1, 0.1)
    u, p = step(P, cfg, [P.u0], [P.p0], 0.1)
    assert abs(p[0] - 1 / 1.1) <= 1e-15


def test_k1_matches_explicit_stepping_formula():
    rng = np.random.default_rng(0)
    for _ in range(20):
        M, Bv, tau = rng.uniform(0, 1), rng.uniform(0.1, 2), rng.uniform(0.01, 0.5)
        fvals = {0.0: rng.standard_normal(1), -tau: rng.standard_normal(1)}
        gval = rng.standard_normal(1)
        P = scalar_problem(D=math.sqrt(M), B=Bv, f=lambda t: fvals[round(t, 12) if t else 0.0], g=lambda t: gval)
        cfg = SchemeConfig(1, 1, tau, tau)
        p1, p2 = rng.standard_normal(1), rng.standard_normal(1)
        u_prev = fvals[-tau] + math.sqrt(M) * p2  # delay-consistent u^{n-1}
        _, p = semi_explicit_step(P, cfg, [u_prev], [p1], 0.0)
        r = gval - math.sqrt(M) * (fvals[0.0] - fvals[-tau]) / tau
        lhs = p - (1 - M) * p1 - M * p2 + tau * Bv * p
        assert abs(lhs[0] - tau * r[0]) <= 1e-13 * (1 + abs(p[0]) + abs(p1[0]) + abs(p2[0]))


def test_k2_reduced_matches_stepping_formula():
    rng = np.random.default_rng(1)
    for _ in range(20):
        M, Bv, tau = rng.uniform(0, 1), rng.uniform(0.1, 2), rng.uniform(0.01, 0.5)
        gval = rng.standard_normal(1)
        P = scalar_problem(D=math.sqrt(M), B=Bv, g=lambda t: gval)
        cfg = SchemeConfig(2, 2, tau, tau)
        hist = [rng.standard_normal(1) for _ in range(4)]
        p = reduced_p_step(P, cfg, hist, 0.0)
        # coefficients sum to zero, as a constant state must be a fixed point when B = 0
        lhs = 3 * p - 2 * (2 - 3 * M) * hist[0] + (1 - 11 * M) * hist[1] + 6 * M * hist[2] - M * hist[3] + 2 * tau * Bv * p
        assert abs(lhs[0] - 2 * tau * gval[0]) <= 1e-12


@pytest.mark.parametrize("k", [1, 2, 3])
def test_monolithic_matches_dense_block_solve(k):
    P = spectral()
    tau = 0.1
    cfg = SchemeConfig(k, k, tau, tau)
    rng = np.random.default_rng(k)
    us = [rng.standard_normal(3) for _ in range(k)]
    ps = [rng.standard_normal(3) for _ in range(k)]
    t = 0.7
    u, p = monolithic_step(P, cfg, us, ps, t)
    xi = bdf_coefficients(k).as_array()
    A, B, C, D = (M.toarray() for M in (P.A, P.B, P.C, P.D))
    block = np.block([[A, -D.T], [xi[0] / tau * D, xi[0] / tau * C + B]])
    hist = sum(xi[l] * (D @ us[l - 1] + C @ ps[l - 1]) for l in range(1, k + 1)) / tau
    sol = np.linalg.solve(block, np.concatenate([P.f(t), P.g(t) - hist]))
    np.testing.assert_allclose(np.concatenate([u, p]), sol, atol=1e-12)


def test_monolithic_equals_semi_without_coupling():
    P = spectral(mus=(0.0, 0.0))
    for k in (1, 2, 3):
        cfg = SchemeConfig(k, k, 0.1, 2.0)
        a = integrate(P, cfg, "semi_explicit")
        b = integrate(P, cfg, "monolithic")
        assert np.max(np.abs(a.p - b.p)) <= 1e-12
        assert np.max(np.abs(a.u - b.u)) <= 1e-12


def test_elastic_step_ignores_new_pressure():
    P = spectral()
    bad = EllipticParabolicSystem(
        A=P.A, B=P.B, C=P.C, D=P.D, f=P.f, g=lambda t: np.full(3, np.nan), u0=P.u0, p0=P.p0
    )
    cfg = SchemeConfig(2, 2, 0.1, 1.0)
    us = [P.exact_u(0.1), P.exact_u(0.0)]
    ps = [P.exact_p(0.1), P.exact_p(0.0)]
    u_ref, _ = semi_explicit_step(P, cfg, us, ps, 0.2)
    u_bad, p_bad = semi_explicit_step(bad, cfg, us, ps + [np.full(3, 1e300)], 0.2)
    np.testing.assert_array_equal(u_ref, u_bad)
    assert np.all(np.isnan(p_bad))


def test_window_checks():
    P = spectral()
    cfg = SchemeConfig(2, 3, 0.1, 1.0)
    with pytest.raises(ShapeError):
        semi_explicit_step(P, cfg, [P.u0, P.u0], [P.p0, P.p0], 0.1)
    with pytest.raises(ShapeError):
        reduced_p_step(P, cfg, [P.p0] * 4, 0.1)


def test_reduced_analytic_mode_needs_load_derivative():
    P = scalar_problem(D=0.5)
    cfg = SchemeConfig(1, 1, 0.1, 0.1)
    with pytest.raises(UnsupportedProblemError):
        reduced_p_step(P, cfg, [P.p0, P.p0], 0.1, rhs_mode="analytic")
    with pytest.raises(ValueError):
        reduced_p_step(P, cfg, [P.p0, P.p0], 0.1, rhs_mode="other")


def _equivalence_gap(k, delta, steps=50, tau=0.05, seed=0, rhs_mode="discrete"):
    P = spectral(mus=(0.02, 0.05, 0.11))
    cfg = SchemeConfig(k, delta, tau, steps * tau)
    ops = StepOperators(P, cfg)
    rng = np.random.default_rng(seed)
    depth = k + delta
    # oldest first: p at steps -depth .. -1, perturbed away from the exact solution
    ps = [P.exact_p((j - depth) * tau) + 0.1 * rng.standard_normal(3) for j in range(depth)]
    # u history consistent with the delayed elastic equation
    us = [consistent_u(P, ops, (j - depth) * tau, ps[j - 1 :: -1][:delta]) if j >= delta else None for j in range(depth)]
    p_semi, u_semi = list(ps), list(us)
    p_red = list(ps)
    for n in range(depth, depth + steps):
        t = (n - depth) * tau
        u, p = semi_explicit_step(P, cfg, u_semi[::-1][:k], p_semi[::-1][: max(k, delta)], t, ops)
        u_semi.append(u)
        p_semi.append(p)
        p_red.append(reduced_p_step(P, cfg, p_red[::-1][:depth], t, ops, rhs_mode))
    return np.max(np.abs(np.array(p_semi[depth:]) - np.array(p_red[depth:])))


@pytest.mark.parametrize("k,delta", list(itertools.product([1, 2, 3], repeat=2)))
def test_semi_explicit_and_reduced_agree(k, delta):
    assert _equivalence_gap(k, delta) <= 1e-10


def test_analytic_rhs_differs_at_truncation_level():
    gap = _equivalence_gap(2, 2, tau=0.05, rhs_mode="analytic")
    assert 1e-8 < gap < 1e-1


# -- trajectories -----------------------------------------------------------

def test_degenerate_run_returns_startup():
    P = spectral()
    cfg = SchemeConfig(3, 3, 0.1, 0.2)
    traj = integrate(P, cfg)
    assert len(traj.times) == 3
    np.testing.assert_allclose(traj.p[2], P.exact_p(0.2), atol=1e-15)
    traj0 = integrate(P, SchemeConfig(3, 3, 0.1, 0.0))
    assert len(traj0.times) == 1


def test_uniform_times_and_iterations():
    P = spectral()
    traj = integrate(P, SchemeConfig(2, 2, 0.1, 1.0), "monolithic")
    assert np.max(np.abs(np.diff(traj.times) - 0.1)) <= 1e-14
    assert traj.u.shape == (11, 3) and traj.p.shape == (11, 3)
    assert np.all(traj.iterations[2:] >= 1)
    assert np.all(traj.iterations[:2] == 0)


@pytest.mark.parametrize("scheme", ["semi_explicit", "monolithic", "reduced"])
def test_stationary_solution_is_fixed_point(scheme):
    P = spectral(mms=Profile.constant(2.0), load=Profile.constant(1.0))
    traj = integrate(P, SchemeConfig(3, 3, 0.1, 2.0), scheme)
    assert np.max(np.abs(traj.p - P.exact_p(0.0))) <= 1e-12
    assert np.max(np.abs(traj.u - P.exact_u(0.0))) <= 1e-12


def test_constant_history_startup():
    P = spectral()
    traj = integrate(P, SchemeConfig(2, 2, 0.05, 5.0, startup="constant-history"))
    err = error_norms(traj, P)
    assert max(err) < 0.1


def test_exact_startup_needs_exact_solution():
    P = scalar_problem()
    with pytest.raises(UnsupportedProblemError):
        integrate(P, SchemeConfig(2, 2, 0.1, 1.0))
    with pytest.raises(ValueError):
        integrate(P, SchemeConfig(1, 1, 0.1, 1.0, startup="constant-history"), "other")


def test_explicit_startup_values_checked():
    P = spectral()
    with pytest.raises(ShapeError):
        integrate(P, SchemeConfig(3, 3, 0.1, 1.0), startup_values=([P.u0], [P.p0]))


def test_divergence_detected():
    P = scalar_problem(g=lambda t: np.array([np.inf]))
    with pytest.raises(DivergenceError):
        integrate(P, SchemeConfig(1, 1, 0.1, 1.0, startup="constant-history"))


def test_k1_moderate_coupling_decays():
    P = spectral(mus=(0.5,), mms=Profile.exponential(1.0, 0.5), load=Profile.exponential(1.0, 0.5))
    traj = integrate(P, SchemeConfig(1, 1, 0.1, 10.0))
    assert np.all(np.isfinite(traj.p))
    errs = np.abs(traj.p[:, 0] - np.array([P.exact_p(t)[0] for t in traj.times]))
    assert errs[-1] < errs.max() and errs.max() < 0.05


@pytest.mark.parametrize("k", [1, 2, 3])
def test_bounded_below_threshold(k):
    mu = 0.9 * float(critical_threshold(k))
    P = spectral(mus=(mu / 3, mu))
    traj = integrate(P, SchemeConfig(k, k, 0.1, 20.0))
    exact = max(np.abs(P.exact_p(t)).max() for t in traj.times)
    assert np.abs(traj.p).max() <= 10 * exact


def test_solver_choice_is_consistent():
    P = build_biot_problem(8)
    a = integrate(P, SchemeConfig(2, 2, 0.25, 2.0))
    b = integrate(P, SchemeConfig(2, 2, 0.25, 2.0, solver="cg"))
    assert np.max(np.abs(a.p - b.p)) <= 1e-9


def test_biot_k3_stable_trajectory():
    P = build_biot_problem(32)
    traj = integrate(P, SchemeConfig(3, 3, 10 / 2**7, 10.0))
    assert np.abs(traj.p).max() <= 2 * np.abs(P.exact_p(0.0)).max()


# -- errors and studies -----------------------------------------------------

def test_error_norms():
    P = spectral()
    traj = integrate(P, SchemeConfig(1, 1, 0.1, 0.0))
    assert error_norms(traj, P) == (0.0, 0.0)
    assert error_norms(traj, P, traj) == (0.0, 0.0)
    with pytest.raises(ValueError):
        error_norms(traj, P, "nothing")


def test_error_norm_implicit_euler_hand_computation():
    P = scalar_problem()
    P = EllipticParabolicSystem(A=P.A, B=P.B, C=P.C, D=P.D, f=P.f, g=P.g, u0=P.u0, p0=P.p0,
                                exact_u=lambda t: np.zeros(1), exact_p=lambda t: np.array([math.exp(-t)]))
    traj = integrate(P, SchemeConfig(1, 1, 0.1, 0.1, startup="constant-history"))
    _, ep = error_norms(traj, P)
    assert abs(ep - abs(1 / 1.1 - math.exp(-0.1))) <= 1e-15
    assert abs(ep - 4.2535e-3) <= 1e-7


def test_error_norms_dimension_mismatch():
    P = spectral()
    Q = spectral(mus=(0.1,))
    traj = integrate(P, SchemeConfig(1, 1, 0.1, 0.0))
    with pytest.raises(ShapeError):
        error_norms(traj, Q)


def test_convergence_study_orders_and_csv(tmp_path):
    P = spectral()
    taus = [2.0**-j for j in range(3, 8)]
    reports = convergence_study(P, [1, 2], None, taus, T=5.0, max_workers=1)
    for report, k in zip(reports, (1, 2)):
        assert all(abs(o - k) <= 0.2 for o in report.order_p[-3:])
    path = tmp_path / "r.csv"
    reports[1].to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "tau,err_u,err_p,order_u,order_p"
    assert len(lines) == 6 and lines[1].endswith("nan,nan")


def test_convergence_study_mixed_orders():
    P = spectral()
    taus = [2.0**-j for j in range(3, 8)]
    rep = convergence_study(P, [2], [1], taus, T=10.0)[0]
    assert all(abs(o - 1.0) <= 0.2 for o in rep.order_p[-3:])


def test_convergence_study_threads_match_serial():
    P = spectral()
    taus = [0.25, 0.125, 0.0625]
    a = convergence_study(P, [2], None, taus, T=2.0, max_workers=1)[0]
    b = convergence_study(P, [2], None, taus, T=2.0, max_workers=3)[0]
    assert a.err_p == b.err_p and a.err_u == b.err_u


def test_convergence_study_validation():
    P = spectral()
    with pytest.raises(ValueError):
        convergence_study(P, [1], None, [0.1, 0.07], T=1.0)
    with pytest.raises(ValueError):
        convergence_study(P, [1, 2], [1], [0.1, 0.05], T=1.0)
    with pytest.raises(ValueError):
        convergence_study(P, [1], None, [0.1, 0.05], T=1.0, reference="bogus")


def test_report_orders():
    rep = ConvergenceReport("x", 1, 1, [1.0, 0.5, 0.25], [4.0, 1.0, 0.25], [8.0, 4.0, 0.0])
    assert rep.order_u == [2.0, 2.0]
    assert rep.order_p[0] == 1.0 and math.isnan(rep.order_p[1])
    assert rep.label == "x_k1_d1"
    assert isinstance(Trajectory, type)
