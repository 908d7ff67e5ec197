"""Command-line front end.

Subcommands: ``solve``, ``bench``, ``mindex-card``, ``dist-check``.
Exit codes: 0 success, 1 usage, 2 numerical failure, 3 I/O failure.
"""
import argparse
import json
import logging
import math
import sys

import numpy as np

from . import __version__
from ._backend import backend_name, default_workers
from .basis import christoffel
from .bench import SinBenchmark, confidence_interval, make_problem, run_row
from .dist import SamplingMeasure
from .engine import ProblemSpec
from .mindex import KINDS, build, cardinality
from .solver import MemoryMode, RunConfig, backward_solve

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("quasireg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_list(text):
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text):
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _index_flags(p):
    p.add_argument("--config", help="JSON file of defaults; flags override it")
    p.add_argument("--dim", type=int)
    p.add_argument("--kind", choices=KINDS)
    p.add_argument("--deg", type=int, help="DEG for total/hyperbolic, isotropic K for full")
    p.add_argument("--orders", type=_int_list, help="per-coordinate K_l for the full set")


def _solve_flags(p):
    _index_flags(p)
    p.add_argument("--mu", type=float, default=2.0)
    p.add_argument("--center", type=_float_list)
    p.add_argument("--q", type=float, default=0.0)
    p.add_argument("--steps", type=int)
    p.add_argument("--dt", type=float, help="time step; steps = horizon / dt")
    p.add_argument("--horizon", type=float, default=1.0)
    p.add_argument("--paths", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--memory-mode", choices=[m.value for m in MemoryMode], default="store")
    p.add_argument("--chunk-size", type=int, default=4096)
    p.add_argument("--problem", choices=("sin", "linear"), default="sin")
    p.add_argument("--kappa", type=float, default=0.6)
    p.add_argument("--lam", type=float, default=None)
    p.add_argument("--c-eta", type=float, default=1.0)
    p.add_argument("--output", "-o")
    p.add_argument("--format", choices=("json", "csv"), default=None)
    p.add_argument("--dry-run", action="store_true")


def make_parser():
    parser = _Parser(prog="quasireg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("solve", help="run the backward solver and write coefficients")
    _solve_flags(p)

    p = sub.add_parser("bench", help="solve the sine benchmark and report MSE metrics")
    _solve_flags(p)
    p.add_argument("--eval-seed", type=int, default=None)
    p.add_argument("--n-eval", type=int, default=1000)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--level", type=float, default=0.99)
    p.add_argument("--header", action="store_true", help="print the CSV header line")

    p = sub.add_parser("mindex-card", help="print the size of a multi-index set")
    _index_flags(p)

    p = sub.add_parser("dist-check", help="round-trip check of the inverse CDF")
    p.add_argument("--mu", type=float, default=2.0)
    p.add_argument("--grid", type=int, default=10001)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--config", help="JSON file of defaults; flags override it")
    parser.subcommands = sub.choices
    return parser


def _defaults_from_file(parser, argv):
    args = parser.parse_args(argv)
    path = getattr(args, "config", None)
    if not path:
        return args
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise UsageError("config file must hold a JSON object")
    known = vars(args)
    bad = [k for k in doc if k.replace("-", "_") not in known]
    if bad:
        raise UsageError(f"unknown config keys: {', '.join(sorted(bad))}")
    # flags given explicitly win: re-parse with file values as defaults
    parser.subcommands[args.command].set_defaults(**{k.replace("-", "_"): v for k, v in doc.items()})
    return parser.parse_args(argv)


def parse_args(argv):
    """Parse and validate; raises :class:`UsageError` on any problem."""
    parser = make_parser()
    args = _defaults_from_file(parser, list(argv))
    if args.command in ("solve", "bench", "mindex-card"):
        _validate_index(args)
    if args.command in ("solve", "bench"):
        _validate_solve(args)
    if args.command == "dist-check" and not args.mu > 0:
        raise UsageError("--mu must be positive")
    return args


def _validate_index(args):
    if args.dim is None or args.dim < 1:
        raise UsageError("--dim is required and must be >= 1")
    if args.kind is None:
        raise UsageError("--kind is required")
    if args.orders is not None:
        if args.kind != "full":
            raise UsageError("--orders only applies to --kind full")
        if args.deg is not None:
            raise UsageError("--deg and --orders are mutually exclusive")
        if len(args.orders) != args.dim or min(args.orders) < 0:
            raise UsageError("--orders needs dim non-negative integers")
    elif args.deg is None:
        raise UsageError("--deg is required")
    elif args.deg < (1 if args.kind == "hyperbolic" else 0):
        raise UsageError(f"--deg too small for kind {args.kind}")


def _validate_solve(args):
    if not (args.horizon > 0 and math.isfinite(args.horizon)):
        raise UsageError("--horizon must be positive")
    if args.steps is None and args.dt is None:
        raise UsageError("one of --steps or --dt is required")
    if args.dt is not None:
        n = round(args.horizon / args.dt)
        if n < 1 or not math.isclose(n * args.dt, args.horizon, rel_tol=1e-9):
            raise UsageError("--dt must divide --horizon")
        if args.steps is not None and args.steps != n:
            raise UsageError("--steps and --dt disagree")
        args.steps = n
    if args.steps < 1:
        raise UsageError("--steps must be >= 1")
    if args.paths is None:
        raise UsageError("--paths is required")
    if args.paths < 1:
        raise UsageError("--paths must be >= 1")
    if not (args.q >= 0 and math.isfinite(args.q)):
        raise UsageError("--q must be >= 0")
    if not args.mu > 0:
        raise UsageError("--mu must be positive")
    if args.center is not None and len(args.center) != args.dim:
        raise UsageError("--center needs dim values")
    if args.chunk_size < 1:
        raise UsageError("--chunk-size must be >= 1")
    if args.threads is not None and args.threads < 1:
        raise UsageError("--threads must be >= 1")
    if args.command == "bench" and args.problem != "sin":
        raise UsageError("bench only runs the sine benchmark")
    if getattr(args, "repeats", 1) < 1:
        raise UsageError("--repeats must be >= 1")


def _gamma(args):
    if args.orders is not None:
        return build(args.dim, args.kind, orders=args.orders)
    return build(args.dim, args.kind, deg=args.deg)


def _linear_problem(d, horizon):
    return ProblemSpec(
        dim=d, horizon=horizon,
        drift=lambda t, X: 0.0, diffusion=lambda t, X: 1.0,
        driver=lambda t, X, y: np.zeros(X.shape[0]),
        terminal=lambda X: np.sum(X, axis=-1),
        C_g=math.sqrt(d), eta_g=1.0, name=f"linear-d{d}",
    )


def _benchmark(args):
    return SinBenchmark(d=args.dim, kappa=args.kappa, lam=args.lam, T=args.horizon)


def _problem(args):
    if args.problem == "linear":
        return _linear_problem(args.dim, args.horizon)
    return make_problem(_benchmark(args), C_eta=args.c_eta)


def _run_config(args, gamma, seed=None):
    return RunConfig(
        steps=args.steps, paths=args.paths, gamma=gamma,
        measure=SamplingMeasure(args.mu, args.dim, args.center),
        q=args.q, seed=args.seed if seed is None else seed,
        workers=args.threads or default_workers(),
        memory_mode=args.memory_mode, chunk_size=args.chunk_size,
    )


def _summary(gamma, paths):
    lg = christoffel(gamma)
    return f"#Gamma={len(gamma)} christoffel={lg:.6g} christoffel/M={lg / paths:.3e}"


def _dry_run(args, gamma):
    d = args.dim
    cloud = args.paths * d * 8 if args.memory_mode == "store" else 0
    working = args.paths * 8 + args.chunk_size * d * (int(gamma.max_degrees.max()) + 1) * 8
    print(_summary(gamma, args.paths))
    print(f"memory estimate: {cloud + working} bytes (cloud {cloud}, working {working})")
    return EXIT_OK


def _write(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def cmd_solve(args):
    gamma = _gamma(args)
    if args.dry_run:
        return _dry_run(args, gamma)
    if args.format == "csv":
        raise UsageError("solve writes JSON; use bench for CSV rows")
    table = backward_solve(_problem(args), _run_config(args, gamma))
    if args.output:
        table.save(args.output)
    m = table.metadata
    print(f"solve {_summary(gamma, args.paths)} steps={args.steps} q={args.q} "
          f"wall={m['wall_seconds']:.3f}s backend={backend_name()} "
          f"y0(center)={table.evaluate(0, np.asarray(table.measure.center)):.6f}")
    return EXIT_OK


def cmd_bench(args):
    gamma = _gamma(args)
    if args.dry_run:
        return _dry_run(args, gamma)
    bm = _benchmark(args)
    rows, reports, y0 = [], [], []
    for r in range(args.repeats):
        cfg = _run_config(args, gamma, seed=args.seed + r)
        table, report = run_row(bm, cfg, args.eval_seed, args.n_eval)
        reports.append(report)
        y0.append(table.evaluate(0, np.asarray(cfg.measure.center)))
        rows.append(report.csv_row(header=args.header and r == 0))
        print(rows[-1], end="")
    print(f"bench {_summary(gamma, args.paths)}", file=sys.stderr)
    if args.repeats >= 2:
        lo, hi = confidence_interval(y0, args.level)
        print(f"y0(center) {args.level:.0%} CI over {args.repeats} runs: [{lo:.4f}, {hi:.4f}]")
    if args.output:
        if args.format == "json":
            payload = [json.loads(r.to_json()) for r in reports]
            _write(args.output, json.dumps(payload if len(payload) > 1 else payload[0],
                                           sort_keys=True) + "\n")
        else:
            _write(args.output, "".join(reports[0].csv_row(header=True).splitlines(True)[:1])
                   + "".join(r.csv_row() for r in reports))
    return EXIT_OK


def cmd_mindex_card(args):
    print(cardinality(args.dim, args.kind, deg=args.deg, orders=args.orders))
    return EXIT_OK


def cmd_dist_check(args):
    m = SamplingMeasure(args.mu, 1)
    u = np.concatenate([np.linspace(1e-6, 1 - 1e-6, args.grid), np.geomspace(1e-6, 0.5, 200),
                        1.0 - np.geomspace(1e-6, 0.5, 200)])
    err = float(np.max(np.abs(m.cdf(m.inv_cdf(u)) - u)))
    tol = args.tol if args.tol is not None else (1e-12 if m.closed_form else 1e-8)
    status = "ok" if err <= tol else "FAIL"
    print(f"mu={args.mu:g} max|cdf(inv_cdf(u)) - u|={err:.3e} tol={tol:.0e} {status}")
    return EXIT_OK if err <= tol else EXIT_NUMERIC


COMMANDS = {"solve": cmd_solve, "bench": cmd_bench, "mindex-card": cmd_mindex_card,
            "dist-check": cmd_dist_check}


def run(args):
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArithmeticError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"usage error: bad config file: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
