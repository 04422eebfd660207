"""Command-line entry point: ``snapopt {solve,check,bench,verify}``.

Exit codes: 0 on success, 1 when a solve or check fails, 2 on usage
errors (bad flags, missing files, invalid parameters).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from snapopt.bench import (
    ALGORITHMS,
    build_solver_config,
    load_preset_spec,
    load_spec,
    preset_names,
    resolve_output,
    run_experiment,
    summary_row,
    trace_name,
    write_trace,
)
from snapopt.errors import ParameterError, SnapError
from snapopt.oracle import PROBLEM_PRESETS, initial_point, load_preset, make_problem, perturb_linear
from snapopt.poly import read_matrix_file
from snapopt.stationarity import SOSP2_MAX_DIM, check_sosp1, check_sosp2_bruteforce

SUCCESS_STATUSES = ("SOSP1-certified", "FOSP1-reached", "max-iter")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _floats(text):
    try:
        return np.array([float(t) for t in text.split(",") if t.strip()])
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _problem_args(p):
    g = p.add_argument_group("problem")
    g.add_argument("--preset", choices=sorted(PROBLEM_PRESETS), help="built-in problem")
    g.add_argument("--problem-file", help="quadratic 0.5 x^T Q x + c^T x from a matrix file with rows 'Q_i c_i'")
    g.add_argument("--lower", help="box lower bounds for --problem-file (comma-separated, default 0)")
    g.add_argument("--upper", help="box upper bounds for --problem-file (default 1)")
    g.add_argument("--seed", type=int, default=0, help="problem data seed (default 0)")
    g.add_argument("--perturb", help="linear tilt q: one number (norm of a random q) or a vector")


def _build_problem(args):
    if bool(args.preset) == bool(args.problem_file):
        raise UsageError("give exactly one of --preset or --problem-file")
    if args.preset:
        prob = load_preset(args.preset, args.seed)
    else:
        Q, c = read_matrix_file(args.problem_file)
        params = {"Q": Q, "c": c}
        if args.lower:
            params["lower"] = _floats(args.lower)
        if args.upper:
            params["upper"] = _floats(args.upper)
        prob = make_problem("box-qp", params, seed=args.seed, name=Path(args.problem_file).stem)
    if args.perturb:
        q = _floats(args.perturb)
        prob = perturb_linear(prob, float(q[0]), seed=args.seed) if q.size == 1 else perturb_linear(prob, 0.0, q=q)
    return prob


def cmd_solve(args):
    prob = _build_problem(args)
    if args.x0:
        x1 = _floats(args.x0)
        if x1.size != prob.dim:
            raise UsageError(f"--x0 has {x1.size} entries, problem has dimension {prob.dim}")
    else:
        x1 = initial_point(prob, args.init_scale, args.seed)
    opts = {"eps_G": args.eps_g, "delta": args.delta, "r_th": args.r_th, "no_stop": args.no_stop}
    for key, val in (("eps_H", args.eps_h), ("alpha_pi", args.alpha)):
        if val is not None:
            opts[key] = val
    for key, val in (("spgd_T", args.spgd_T), ("spgd_R", args.spgd_R), ("spgd_F", args.spgd_F),
                     ("beta", args.beta)):
        if val is not None:
            opts[key] = val
    algo = dict(ALGORITHMS[args.algo])
    if args.oracle and algo.get("oracle_kind"):
        algo["oracle_kind"] = args.oracle
    cfg = build_solver_config(opts, algo, args.seed, args.max_iter)
    from snapopt.solver import solve

    res = solve(prob, x1, cfg)
    out = resolve_output(args.out)
    out.mkdir(parents=True, exist_ok=True)
    name = trace_name(args.algo, args.seed, args.init_scale)
    write_trace(out / name, res.trace, canonical=args.canonical)
    np.savetxt(out / (name[:-4] + "_x.txt"), res.x_final, fmt="%.17g")
    row = summary_row(args.algo, args.seed, args.init_scale, res.status, res.trace,
                      res.oracle_calls, 0.0 if args.canonical else res.wall_time, str(out / name))
    for k, v in row.items():
        print(f"{k}: {v}")
    if res.message:
        print(f"message: {res.message}")
    return 0 if res.status in SUCCESS_STATUSES else 1


def cmd_check(args):
    prob = _build_problem(args)
    if args.point_file:
        x = np.loadtxt(args.point_file, ndmin=1)
    elif args.point:
        x = _floats(args.point)
    else:
        raise UsageError("give --point or --point-file")
    if x.size != prob.dim:
        raise UsageError(f"point has {x.size} entries, problem has dimension {prob.dim}")
    eps_H = args.eps_h if args.eps_h is not None else float(np.sqrt(args.eps_g))
    rep = check_sosp1(prob, x, args.eps_g, eps_H)
    print(rep.to_text())
    if prob.dim <= SOSP2_MAX_DIM and not args.no_sosp2:
        s2 = check_sosp2_bruteforce(prob, x, args.eps_g, eps_H)
        print(f"FOSP2 (brute force)     : {s2.fosp2}")
        print(f"SOSP2 (brute force)     : {s2.sosp2}")
        print(f"min quadratic form      : {s2.min_form:.6g}")
        if s2.witness is not None:
            print(f"witness                 : {np.array2string(s2.witness, precision=6)}")
    return 0 if rep.sosp1 else 1


def cmd_bench(args):
    if args.spec:
        spec = load_spec(args.spec)
    elif args.preset:
        spec = load_preset_spec(args.preset)
    else:
        raise UsageError("give --spec or --preset")
    if args.seeds:
        spec.seeds = [int(s) for s in args.seeds.split(",")]
    if args.max_iter is not None:
        spec.max_iter = args.max_iter
    art = run_experiment(spec, output=args.out, workers=args.workers,
                         canonical=args.canonical, plots=not args.no_plots)
    for row in art.summary:
        print(f"{row['algorithm']:<16} seed={row['seed']:<3} c={row['c']:<8g} "
              f"{row['status']:<18} f={row['f_last']:.6g}")
    print(f"summary: {art.summary_path}")
    for fig in art.figures:
        print(f"figure: {fig}")
    failed = [r for r in art.summary if str(r["status"]).startswith("error")]
    return 1 if failed else 0


def cmd_verify(args):
    from snapopt.verify import run_invariant_suite

    presets = args.presets.split(",") if args.presets else None
    checks = run_invariant_suite(presets, max_iter=args.max_iter, echo=print)
    bad = [c for c in checks if not c.ok]
    print(f"{len(checks) - len(bad)}/{len(checks)} checks passed")
    return 1 if bad else 0


def build_parser():
    p = _Parser(prog="snapopt", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="run one solver on one problem")
    _problem_args(s)
    s.add_argument("--algo", choices=sorted(ALGORITHMS), default="snap")
    s.add_argument("--oracle", choices=("hessian", "spgd"), help="override the algorithm's oracle")
    s.add_argument("--x0", help="start point (comma-separated); default c * proj(gaussian)")
    s.add_argument("--init-scale", type=float, default=1.0, help="c for the random start")
    s.add_argument("--eps-g", type=float, default=1e-3)
    s.add_argument("--eps-h", type=float, help="default sqrt(eps_g)")
    s.add_argument("--alpha", type=float, help="PGD step, default 1/L1")
    s.add_argument("--delta", type=float, default=0.1)
    s.add_argument("--r-th", type=int, default=10)
    s.add_argument("--max-iter", type=int, default=100_000)
    s.add_argument("--no-stop", action="store_true", help="run to --max-iter")
    s.add_argument("--spgd-T", type=int)
    s.add_argument("--spgd-R", type=float)
    s.add_argument("--spgd-F", type=float)
    s.add_argument("--beta", type=float)
    s.add_argument("--out", default="runs/solve")
    s.add_argument("--canonical", action="store_true", help="write 0 for timing columns")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("check", help="stationarity report at a point")
    _problem_args(c)
    c.add_argument("--point", help="comma-separated coordinates")
    c.add_argument("--point-file", help="whitespace-separated coordinates")
    c.add_argument("--eps-g", type=float, default=1e-6)
    c.add_argument("--eps-h", type=float, default=1e-6)
    c.add_argument("--no-sosp2", action="store_true", help="skip the brute-force check")
    c.set_defaults(func=cmd_check)

    b = sub.add_parser("bench", help="run an experiment grid")
    b.add_argument("--spec", help="experiment spec file")
    b.add_argument("--preset", choices=preset_names(), help="shipped experiment spec")
    b.add_argument("--out", help="output directory (overrides the spec)")
    b.add_argument("--seeds", help="comma-separated seeds (overrides the spec)")
    b.add_argument("--max-iter", type=int)
    b.add_argument("--workers", type=int, default=1)
    b.add_argument("--canonical", action="store_true", help="zero timing columns for byte comparison")
    b.add_argument("--no-plots", action="store_true")
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("verify", help="invariant suite over the shipped presets")
    v.add_argument("--presets", help="comma-separated subset")
    v.add_argument("--max-iter", type=int, default=2000)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"snapopt: error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ParameterError, FileNotFoundError) as exc:
        print(f"snapopt: error: {exc}", file=sys.stderr)
        return 2
    except SnapError as exc:
        print(f"snapopt: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
