"""Command-line frontend.

One JSON report per command on stdout; optional CSV series via --csv.
Exit codes: 0 success, 2 parse error, 3 evaluation error, 4 solver did not
converge, 5 verification raised flags.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .calculus import GridFunction, delta_integral, improper_integral
from .errors import InvalidWindow, ParseError, TsvarError
from .expressions import compile_expression
from .problemfile import load_problem_file
from .variational import el_residual, solve_truncated, verify_candidate

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_EVAL = 3
EXIT_NO_CONVERGENCE = 4
EXIT_FLAGS = 5


def _print_json(doc):
    sys.stdout.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def _horizons_arg(text):
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            "horizons must be a comma-separated list of numbers"
        )
    if len(vals) < 3:
        raise argparse.ArgumentTypeError("need at least three horizons")
    return vals


def _terminal_arg(text):
    if text == "free":
        return None
    if text.startswith("pinned="):
        try:
            return [float(x) for x in text[len("pinned="):].split(",")]
        except ValueError:
            raise argparse.ArgumentTypeError("bad pinned value list")
    raise argparse.ArgumentTypeError("use 'free' or 'pinned=V1[,V2,...]'")


def _scalarize(arr):
    arr = np.atleast_1d(np.asarray(arr, dtype=float))
    if arr.shape == (1,):
        return float(arr[0])
    return [float(v) for v in arr]


def _expr_generator(src):
    expr = compile_expression(src, ("t",))

    def fn(t):
        return expr(t=np.atleast_1d(np.asarray(t, dtype=float)))

    return fn


def _integrand(pf, args):
    if args.expr is not None:
        return _expr_generator(args.expr), f"expr:{args.expr}"
    return pf.candidate(args.candidate), f"candidate:{args.candidate}"


# ---------------------------------------------------------------------------
# subcommands


def cmd_integrate(args):
    pf = load_problem_file(args.file)
    ts, a = pf.problem.ts, pf.problem.a
    h = args.h if args.h is not None else pf.h
    fn, label = _integrand(pf, args)

    if args.improper:
        if args.horizons is None:
            raise ParseError("--improper requires --horizons")
        horizons = sorted(set(ts.floor_member(v) for v in args.horizons))
        est = improper_integral(ts, fn, a, horizons, h=h, config=pf.limit_config())
        doc = {
            "command": "integrate",
            "mode": "improper",
            "integrand": label,
            "from": a,
            "h": h,
            "horizons": horizons,
            "estimate": est.to_dict(),
        }
        _print_json(doc)
        if args.csv:
            _write_csv(args.csv, ["t_prime", "partial_integral"],
                       [(float(t), float(v)) for t, v in est.evidence])
        return EXIT_OK

    if args.to is None:
        raise ParseError("--to is required unless --improper is given")
    lo_raw = args.frm if args.frm is not None else a
    sign = 1.0
    lo_v, hi_v = float(lo_raw), float(args.to)
    if lo_v > hi_v:
        lo_v, hi_v, sign = hi_v, lo_v, -1.0
    lo = ts.ceil_member(lo_v)
    hi = ts.floor_member(hi_v)
    if lo >= hi:
        # int_c^c = 0, and a window holding no complete cell integrates to 0
        from .calculus import _call_on_times

        probe = _call_on_times(fn, np.array([hi if lo > hi else lo]))
        doc = {
            "command": "integrate",
            "mode": "window",
            "integrand": label,
            "from": lo_v if sign > 0 else hi_v,
            "to": hi_v if sign > 0 else lo_v,
            "h": h,
            "value": _scalarize(np.zeros(probe.shape[1])),
        }
        _print_json(doc)
        if args.csv:
            header = (["t"] + [f"f{j + 1}" for j in range(probe.shape[1])]
                      + [f"integral{j + 1}" for j in range(probe.shape[1])])
            _write_csv(args.csv, header, [])
        return EXIT_OK
    grid = ts.build_grid(lo, hi, h)
    gf = GridFunction.from_callable(grid, fn, extend=False)
    value = sign * np.atleast_1d(delta_integral(gf, lo, hi))
    doc = {
        "command": "integrate",
        "mode": "window",
        "integrand": label,
        "from": lo if sign > 0 else hi,
        "to": hi if sign > 0 else lo,
        "h": h,
        "value": _scalarize(value),
    }
    _print_json(doc)
    if args.csv:
        from .calculus import cumulative_delta_integral

        cum = cumulative_delta_integral(gf)
        rows = [
            (float(grid.nodes[i]),)
            + tuple(float(v) for v in gf.values[i])
            + tuple(float(v) for v in cum[i])
            for i in range(len(grid))
        ]
        dim = gf.dim
        header = (["t"] + [f"f{j + 1}" for j in range(dim)]
                  + [f"integral{j + 1}" for j in range(dim)])
        _write_csv(args.csv, header, rows)
    return EXIT_OK


def cmd_residual(args):
    pf = load_problem_file(args.file)
    prob = pf.problem
    ts, a = prob.ts, prob.a
    h = args.h if args.h is not None else pf.h
    gen = pf.candidate(args.candidate)
    if args.window is not None:
        win_lo, win_hi = args.window
    else:
        win_lo, win_hi = a, float(pf.config.get("t_max", 40.0))
    t_hi = ts.floor_member(win_hi)
    for _ in range(3):
        t_hi = ts.advance(t_hi, h)
    grid = ts.build_grid(a, t_hi, h)
    gf = GridFunction.from_callable(grid, gen)
    res = el_residual(prob, gf)
    nodes = res.grid.nodes
    sel = (nodes >= win_lo - 1e-12) & (nodes <= win_hi + 1e-12)
    if not sel.any():
        raise InvalidWindow("the requested window contains no residual nodes")
    sup = float(np.max(np.abs(res.values[sel])))
    doc = {
        "command": "residual",
        "candidate": args.candidate,
        "window": [float(win_lo), float(win_hi)],
        "h": h,
        "nodes": int(sel.sum()),
        "sup_norm": sup,
    }
    _print_json(doc)
    if args.csv:
        idx = np.nonzero(sel)[0]
        header = ["t"] + [f"residual{j + 1}" for j in range(res.dim)]
        rows = [
            (float(nodes[i]),) + tuple(float(v) for v in res.values[i]) for i in idx
        ]
        _write_csv(args.csv, header, rows)
    return EXIT_OK


def cmd_verify(args):
    pf = load_problem_file(args.file)
    gen = pf.candidate(args.candidate)
    overrides = {}
    if args.h is not None:
        overrides["h"] = args.h
    if args.t_max is not None:
        overrides["t_max"] = args.t_max
    cfg = pf.verify_config(**overrides)
    report = verify_candidate(pf.problem, gen, cfg)
    doc = {
        "command": "verify",
        "candidate": args.candidate,
        "h": cfg.h,
        "t_max": cfg.t_max,
        "report": report.to_dict(),
    }
    _print_json(doc)
    if args.csv:
        rows = [("transversality", report.transversality.kind.value,
                 repr(report.transversality.value))]
        rows += [
            (f"weak_max:{label}", est.kind.value, repr(est.value))
            for label, est in report.weak_max_probes
        ]
        _write_csv(args.csv, ["check", "kind", "value"], rows)
    return EXIT_FLAGS if report.flags else EXIT_OK


def cmd_solve(args):
    pf = load_problem_file(args.file)
    prob = pf.problem
    h = args.h if args.h is not None else pf.h
    t_end = prob.ts.floor_member(args.T)
    overrides = {"seed": args.seed}
    if args.multistart is not None:
        overrides["multistart"] = args.multistart
    params = pf.solve_params(**overrides)
    result = solve_truncated(prob, t_end, args.terminal, h=h, params=params)
    doc = {
        "command": "solve",
        "t_end": float(t_end),
        "h": h,
        "terminal": "free" if args.terminal is None else list(args.terminal),
        "seed": args.seed,
        **result.to_dict(),
    }
    _print_json(doc)
    if args.csv:
        traj = result.trajectory
        header = ["t"] + [f"x{j + 1}" for j in range(traj.x.dim)]
        rows = [
            (float(traj.grid.nodes[i]),)
            + tuple(float(v) for v in traj.x.values[i])
            for i in range(len(traj.grid))
        ]
        _write_csv(args.csv, header, rows)
    return EXIT_OK if result.converged else EXIT_NO_CONVERGENCE


# ---------------------------------------------------------------------------
# parser


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tsvar",
        description="Variational calculus on unbounded time scales.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_int = sub.add_parser("integrate", help="delta integral of an expression "
                                             "or candidate over a window, or an "
                                             "improper-integral estimate")
    p_int.add_argument("file", help="JSON problem file")
    group = p_int.add_mutually_exclusive_group(required=True)
    group.add_argument("--expr", help="integrand expression in t")
    group.add_argument("--candidate", help="integrate a named candidate")
    p_int.add_argument("--from", dest="frm", type=float, default=None)
    p_int.add_argument("--to", type=float, default=None)
    p_int.add_argument("--improper", action="store_true",
                       help="classify the improper integral from a")
    p_int.add_argument("--horizons", type=_horizons_arg, default=None,
                       help="comma-separated horizon list for --improper")
    p_int.add_argument("--h", type=float, default=None, help="dense grid step")
    p_int.add_argument("--csv", default=None, help="write per-node series here")
    p_int.set_defaults(func=cmd_integrate)

    p_res = sub.add_parser("residual", help="Euler-Lagrange residual of a candidate")
    p_res.add_argument("file")
    p_res.add_argument("--candidate", required=True)
    p_res.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"),
                       default=None)
    p_res.add_argument("--h", type=float, default=None)
    p_res.add_argument("--csv", default=None)
    p_res.set_defaults(func=cmd_residual)

    p_ver = sub.add_parser("verify", help="full first-order verdict for a candidate")
    p_ver.add_argument("file")
    p_ver.add_argument("--candidate", required=True)
    p_ver.add_argument("--h", type=float, default=None)
    p_ver.add_argument("--t-max", type=float, default=None)
    p_ver.add_argument("--csv", default=None)
    p_ver.set_defaults(func=cmd_verify)

    p_sol = sub.add_parser("solve", help="maximize the truncated functional")
    p_sol.add_argument("file")
    p_sol.add_argument("--T", type=float, required=True, help="truncation horizon")
    p_sol.add_argument("--terminal", type=_terminal_arg, default=None,
                       help="'free' (default) or 'pinned=V1[,V2,...]'")
    p_sol.add_argument("--h", type=float, default=None)
    p_sol.add_argument("--seed", type=int, default=0)
    p_sol.add_argument("--multistart", type=int, default=None)
    p_sol.add_argument("--csv", default=None, help="write the trajectory here")
    p_sol.set_defaults(func=cmd_solve)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except TsvarError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EVAL


if __name__ == "__main__":
    sys.exit(main())
