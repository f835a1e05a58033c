"""Command-line front end.

Exit codes: 0 success, 2 numerical failure, 3 divergence, 64 usage error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import gstability as gs
from .errors import DivergenceError, NoRealSolutionError, SolverFailure
from .integrators import convergence_study
from .problems import (
    BiotParameters,
    Profile,
    build_biot_problem,
    build_spectral_problem,
    dde_demo,
    estimate_coupling,
    growth_exponent,
)
from .problems.biot import REQUIRED_KEYS

EXIT_OK, EXIT_NUMERICAL, EXIT_DIVERGED, EXIT_USAGE = 0, 2, 3, 64

SCHEME_NAMES = {"semi": "semi_explicit", "mono": "monolithic"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _taus(text: str) -> list[float]:
    """``"start:count"`` -> ``[start, start/2, ..., start/2**(count-1)]``."""
    try:
        start, count = text.split(":")
        start, count = float(start), int(count)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"--taus expects 'start:count', got {text!r}") from exc
    if start <= 0 or count < 2:
        raise argparse.ArgumentTypeError("--taus needs a positive start and at least two step sizes")
    return [start / 2**j for j in range(count)]


def _out_dir(path) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_biot(config) -> BiotParameters:
    if config is None:
        raise UsageError(f"--problem biot needs --config FILE.json with keys {', '.join(REQUIRED_KEYS)}")
    try:
        data = json.loads(Path(config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {config}: {exc}") from exc
    try:
        return BiotParameters.from_mapping(data)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def default_spectral_problem(mu_values):
    n = len(mu_values)
    return build_spectral_problem(
        mu_values,
        np.arange(1, n + 1, dtype=float),
        mms=Profile.oscillating(1.0, 1.0, 0.5),
        load=Profile.oscillating(0.5, 2.0, 1.0),
    )


# ---------------------------------------------------------------------------

def cmd_gstability(args) -> int:
    k = args.k
    eta = gs.default_eta(k) if args.eta is None else args.eta
    thr = float(gs.critical_threshold(k))
    mu_max = thr - 1e-3 if args.mu_max is None else args.mu_max
    out = _out_dir(args.out)
    grid = np.linspace(0.0, mu_max, args.grid)
    code = EXIT_OK
    try:
        scan = gs.scan_spectrum(k, eta, grid)
    except gs.ScanFailure as exc:
        scan = exc.partial
        print(f"solver failure at mu={exc.mu}: {exc}", file=sys.stderr)
        code = EXIT_NUMERICAL
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    scan.to_csv(out / f"g_eigs_k{k}.csv")
    s = 2 * k
    gs.write_csv(
        out / f"gammas_k{k}.csv",
        ["mu", "residual"] + [f"gamma_{i}" for i in range(s + 1)],
        [[r[0], r[s + 1], *r[s + 2 :]] for r in scan.rows()],
    )
    print(f"k={k} eta={eta:g} threshold={gs.critical_threshold(k)} ({thr:.17g})")
    if len(scan.mu_grid):
        print(f"grid: {len(scan.mu_grid)} points on [0, {scan.mu_grid[-1]:.6g}]")
        print(f"min eigenvalue {scan.eigenvalues[:, 0].min():.6e}, max eigenvalue {scan.eigenvalues[:, -1].max():.6e}")
        print(f"max system residual {scan.residuals.max():.3e}")
    return code


def cmd_converge(args) -> int:
    k = args.k
    delta = k if args.delta is None else args.delta
    if args.problem == "biot":
        params = _load_biot(args.config)
        problem = build_biot_problem(args.mesh, params)
        reference = "monolithic"
    else:
        problem = default_spectral_problem(args.mu_values)
        reference = "exact"
    schemes = ["semi", "mono"] if args.scheme == "both" else [args.scheme]
    out = _out_dir(args.out)
    print(f"problem={args.problem} k={k} delta={delta} T={args.T:g} reference={reference}")
    for name in schemes:
        report = convergence_study(
            problem, [k], [delta], args.taus, SCHEME_NAMES[name], T=args.T, reference=reference
        )[0]
        path = out / f"converge_{args.problem}_{name}_k{k}_d{delta}.csv"
        report.to_csv(path)
        print(f"\n{SCHEME_NAMES[name]} ({'; '.join(report.notes)})")
        print(f"{'tau':>12} {'err_u':>12} {'err_p':>12} {'order_u':>8} {'order_p':>8}")
        for tau, eu, ep, ou, op in report.rows():
            print(f"{tau:12.5g} {eu:12.4e} {ep:12.4e} {ou:8.3f} {op:8.3f}")
    return EXIT_OK


def cmd_dde_demo(args) -> int:
    out = _out_dir(args.out)
    rows, s3 = [], []
    for n in args.n_list:
        if n < 1:
            raise UsageError(f"--n-list entries must be >= 1, got {n}")
        res = dde_demo(n, args.y0, args.inner_steps)
        rows.append([n, *res.sup_norms])
        s3.append(res.sup_norms[3])
        gs.write_csv(out / f"dde_traj_n{n}.csv", ["t", "y"], np.column_stack([res.t, res.y]).tolist())
    gs.write_csv(out / "dde_growth.csv", ["n", "s0", "s1", "s2", "s3"], rows)
    for row in rows:
        print("n={:<4d} s0={:.4e} s1={:.4e} s2={:.4e} s3={:.4e}".format(int(row[0]), *row[1:]))
    exponent = growth_exponent(args.n_list, s3)
    print("growth exponent of s3 vs n: " + ("NA" if exponent is None else f"{exponent:.3f}"))
    return EXIT_OK


def cmd_coupling(args) -> int:
    if args.problem == "biot":
        problem = build_biot_problem(args.mesh, _load_biot(args.config))
    else:
        problem = default_spectral_problem(args.mu_values)
    mu_max = estimate_coupling(problem, seed=args.seed)
    print(f"discrete coupling strength mu_max = {mu_max:.10g}")
    certified = []
    for k in gs.SUPPORTED_ORDERS:
        thr = gs.critical_threshold(k)
        ok = mu_max <= thr
        if ok:
            certified.append(k)
        print(f"  k={k}: threshold {thr} -> {'certified' if ok else 'not certified'}")
    if certified:
        print("certified orders: " + ", ".join(str(k) for k in certified))
    else:
        print("warning: coupling exceeds every threshold; no order is certified", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bdfd", description="Decoupled BDF-k schemes and their stability certificates")
    parser.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    parser.add_argument("--out", default=".", help="output directory (default: current)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gstability", help="eigenvalues of G(mu) and multiplier vectors")
    p.add_argument("--k", type=int, choices=[1, 2, 3], required=True)
    p.add_argument("--eta", type=float, default=None, help="multiplier (default 0, 0, 0.12 for k=1,2,3)")
    p.add_argument("--grid", type=int, default=200, help="number of mu grid points (default 200)")
    p.add_argument("--mu-max", type=float, default=None, help="grid end (default threshold - 1e-3)")
    p.set_defaults(func=cmd_gstability)

    p = sub.add_parser("converge", help="temporal convergence study")
    p.add_argument("--problem", choices=["spectral", "biot"], default="spectral")
    p.add_argument("--scheme", choices=["semi", "mono", "both"], default="both")
    p.add_argument("--k", type=int, choices=[1, 2, 3], required=True)
    p.add_argument("--delta", type=int, choices=[1, 2, 3], default=None)
    p.add_argument("--taus", type=_taus, default=_taus("0.125:6"), help="'start:count' halving sequence")
    p.add_argument("--T", type=float, default=10.0, help="final time (default 10)")
    p.add_argument("--mesh", type=int, default=32, help="cells per side for biot (default 32)")
    p.add_argument("--config", default=None, help="JSON file with Biot parameters")
    p.add_argument("--mu-values", type=_floats, default=[0.05, 0.08, 0.11])
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("dde-demo", help="method of steps for the advanced delay system")
    p.add_argument("--n-list", type=_ints, default=[4, 8, 16, 32])
    p.add_argument("--y0", type=float, default=1.0)
    p.add_argument("--inner-steps", type=int, default=4000)
    p.set_defaults(func=cmd_dde_demo)

    p = sub.add_parser("coupling", help="discrete coupling strength and certified orders")
    p.add_argument("--problem", choices=["spectral", "biot"], default="spectral")
    p.add_argument("--mesh", type=int, default=32)
    p.add_argument("--config", default=None)
    p.add_argument("--mu-values", type=_floats, default=[0.05, 0.08, 0.11])
    p.set_defaults(func=cmd_coupling)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"bdfd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"bdfd: diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (SolverFailure, NoRealSolutionError) as exc:
        print(f"bdfd: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"bdfd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
