"""Command-line front end.

Every subcommand writes CSV (17 significant digits) to ``--output``, to
``$GEXPECT_OUTPUT_DIR/<subcommand>.csv`` when that variable is set, or to
standard output. The first line echoes the effective configuration as JSON
behind ``#``, so a run can be repeated from its own output. Exit codes:
0 success, 1 internal failure, 2 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, experiments, gheat_pde, scenario_tree as st
from .errors import GExpectError, PhiSyntaxError
from .girsanov import degenerate_pipeline, jeps_sweep, verify_identity
from .phi_lang import resolve
from .scenario_tree import PathFunctional, TreeSpec
from .stochastic import SimpleProcess, exp_martingale, exp_martingale_normalized
from .uncertainty import Generator

OUTPUT_DIR_ENV = "GEXPECT_OUTPUT_DIR"
ENGINE_ID = "tree-dp/chunked-layer-table + gheat-fd/explicit-monotone-cfl0.9"

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG = 0, 1, 2


class UsageError(GExpectError):
    """Bad command line; reported with exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _no_abbrev(add):
    def wrapped(*a, **kw):
        return add(*a, allow_abbrev=False, **kw)

    return wrapped


def _floats(text):
    try:
        return [float(v) for v in str(text).replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(v) for v in str(text).replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _common(p, sigma2=(0.25, 1.0)):
    p.add_argument("--sigma2", nargs=2, type=float, metavar=("MIN", "MAX"),
                   default=list(sigma2), help="variance band (variances, not volatilities)")
    p.add_argument("--output", default=None, help="CSV path (default stdout)")
    p.add_argument("--config", default=None, help="file of key = value lines")
    p.add_argument("--seed", type=int, default=0,
                   help="accepted for uniformity; the engines are deterministic")
    p.add_argument("--timing", action="store_true",
                   help="add a runtime column (output is then no longer byte-stable)")


def _phi_args(p, default="cos1"):
    p.add_argument("--phi", default=default, help="catalog name or expression in x1..xn")
    p.add_argument("--phi-arity", type=int, default=None)
    p.add_argument("--phi-bound", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gexpect", description=__doc__.splitlines()[0], allow_abbrev=False)
    parser.add_argument("--version", action="version",
                        version=f"gexpect {__version__} ({ENGINE_ID})")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.add_parser = _no_abbrev(sub.add_parser)

    p = sub.add_parser("pde", help="G-heat equation value u(t, 0)")
    _common(p)
    _phi_args(p)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--times", type=_floats, default=None,
                   help="observation times for arity 2 or 3 functionals")
    p.add_argument("--accuracy", choices=list(gheat_pde.ACCURACY_TIERS), default="medium")

    p = sub.add_parser("tree", help="scenario-tree upper or lower expectation")
    _common(p)
    p.add_argument("--steps", type=int, default=6)
    p.add_argument("--t", type=float, default=1.0, help="horizon T")
    p.add_argument("--sigma-levels", type=int, default=5)
    p.add_argument("--mode", choices=["upper", "lower"], default="upper")
    p.add_argument("--functional", default="cos1",
                   help="phi (name or expression) observed at --times, "
                        "or expmart / expmart-norm with --h")
    p.add_argument("--phi-arity", type=int, default=None)
    p.add_argument("--phi-bound", type=float, default=None)
    p.add_argument("--times", type=_floats, default=None, help="default: the horizon")
    p.add_argument("--h", default="const:0.5")

    p = sub.add_parser("girsanov-check", help="both sides of the Girsanov identity")
    _common(p, (0.0, 1.0))
    _phi_args(p)
    p.add_argument("--h", default="const:0.5")
    p.add_argument("--times", type=_floats, default=[1.0])
    p.add_argument("--m-list", type=_ints, default=[6, 8, 10, 12])
    p.add_argument("--sigma-levels", type=int, default=2)
    p.add_argument("--normalized", action="store_true")
    p.add_argument("--inject-bias", type=float, default=0.0, help=argparse.SUPPRESS)

    p = sub.add_parser("jeps-sweep", help="upper and lower expectation of J_eps")
    _common(p)
    p.add_argument("--h", default="const:1")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--eps-list", type=_floats, default=[0.4, 0.2, 0.1, 0.05])
    p.add_argument("--steps", type=int, default=12)
    p.add_argument("--sigma-levels", type=int, default=2)

    p = sub.add_parser("degenerate", help="epsilon-perturbation pipeline, degenerate band")
    _common(p, (0.0, 1.0))
    _phi_args(p)
    p.add_argument("--h", default="const:0.5")
    p.add_argument("--times", type=_floats, default=[1.0])
    p.add_argument("--eps-list", type=_floats, default=[0.4, 0.2, 0.1])
    p.add_argument("--steps", type=int, default=8)
    p.add_argument("--sigma-levels", type=int, default=2)

    p = sub.add_parser("axioms", help="randomized sublinear-expectation axiom checks")
    _common(p)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--steps", type=int, default=8)
    p.add_argument("--sigma-levels", type=int, default=2)

    p = sub.add_parser("reproduce-all", help="run every acceptance criterion")
    p.add_argument("--quick", action="store_true", help="coarse tiers and small trees")
    p.add_argument("--inject-bias", type=float, default=0.0,
                   help="harness self-test: shift identity right-hand sides")
    p.add_argument("--output", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=0)
    return parser


# -- configuration file -------------------------------------------------------


def _config_tokens(path: str) -> list[str]:
    """Translate ``key = value`` lines into flag tokens placed before the real flags."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    tokens = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        flag = "--" + key.strip().replace("_", "-")
        value = value.strip()
        if value.lower() in ("true", "yes", "on"):
            tokens.append(flag)
        elif value.lower() in ("false", "no", "off"):
            continue
        else:
            tokens += [flag, *value.split()] if flag == "--sigma2" else [flag, value]
    return tokens


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    argv = list(argv)
    if not argv:
        raise UsageError("missing subcommand; see --help")
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("missing subcommand; see --help")
    if getattr(args, "config", None):
        # flags override the file: file tokens go first, argparse keeps the last value
        args = parser.parse_args([argv[0], *_config_tokens(args.config), *argv[1:]]
                                 if argv[0] == args.command else
                                 [args.command, *_config_tokens(args.config), *argv])
    return args


# -- output --------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _config_echo(args) -> dict:
    skip = {"config", "output", "timing"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def render_csv(args, header, rows) -> str:
    buf = io.StringIO()
    buf.write("# config: " + json.dumps(_config_echo(args), sort_keys=True) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _destination(args) -> Path | None:
    if args.output:
        return Path(args.output)
    env = os.environ.get(OUTPUT_DIR_ENV)
    if env:
        return Path(env) / f"{args.command}.csv"
    return None


def _emit(args, text, stdout):
    dest = _destination(args)
    if dest is None:
        stdout.write(text)
    else:
        dest.parent.mkdir(parents=True, exist_ok=True)
        dest.write_text(text)


# -- subcommands -----------------------------------------------------------------


def _gen(args) -> Generator:
    return Generator.from_variances(*args.sigma2)


def _phi(args, name=None, arity=None):
    return resolve(name or args.phi, arity=arity if arity is not None else args.phi_arity,
                   bound=args.phi_bound)


def _with_runtime(args, header, rows, t0):
    if args.timing:
        elapsed = time.perf_counter() - t0
        header = [*header, "runtime_s"]
        rows = [[*r, elapsed] for r in rows]
    return header, rows


def cmd_pde(args):
    gen = _gen(args)
    times = args.times or [args.t]
    phi = _phi(args, arity=args.phi_arity or len(times))
    nx = gheat_pde.ACCURACY_TIERS[args.accuracy][0]
    grid = gheat_pde.make_grid(gen, times[0] if len(times) > 1 else times[-1], nx)
    value = gheat_pde.expect_cylinder(gen, phi, times, args.accuracy)
    return ["value", "nx", "dt"], [[value, nx, grid.t_final / grid.n_steps]]


def cmd_tree(args):
    gen = _gen(args)
    spec = TreeSpec(args.steps, args.t, gen.band, args.sigma_levels)
    spec.check_budget()
    if args.functional in ("expmart", "expmart-norm"):
        h = SimpleProcess.parse(args.h)
        F = exp_martingale(h) if args.functional == "expmart" else exp_martingale_normalized(h)
    else:
        times = args.times or [args.t]
        phi = _phi(args, args.functional, arity=args.phi_arity or len(times))
        F = PathFunctional.observe(phi, times)
    value = (st.upper_expectation if args.mode == "upper" else st.lower_expectation)(spec, F)
    return (["value", "m", "levels", "leaf_count"],
            [[value, spec.m, len(spec.levels), spec.leaf_count]])


def cmd_girsanov(args):
    times = args.times
    phi = _phi(args, arity=args.phi_arity or len(times))
    reports = verify_identity(_gen(args), SimpleProcess.parse(args.h), phi, times,
                              args.m_list, args.sigma_levels, normalized=args.normalized,
                              bias=args.inject_bias)
    return (["m", "sigma_levels", "lhs", "rhs", "abs_error"],
            [[r.m, r.sigma_levels, r.lhs, r.rhs, r.abs_error] for r in reports])


def cmd_jeps(args):
    sweep = jeps_sweep(_gen(args), SimpleProcess.parse(args.h), args.alpha, args.beta,
                       args.eps_list, m=args.steps, sigma_levels=args.sigma_levels)
    rows = [[r.eps, r.upper, r.lower, abs(r.upper - 1), abs(r.lower - 1)] for r in sweep.rows]
    return ["eps", "upper", "lower", "upper_dev", "lower_dev"], rows


def cmd_degenerate(args):
    times = args.times
    phi = _phi(args, arity=args.phi_arity or len(times))
    rep = degenerate_pipeline(_gen(args), SimpleProcess.parse(args.h), phi, times,
                              args.eps_list, m=args.steps, sigma_levels=args.sigma_levels)
    rows = [[r.eps, r.lhs, r.rhs, r.identity_error, r.step1, r.step2, r.step1_bound,
             rep.factorization_error] for r in rep.rows]
    return (["eps", "lhs", "rhs", "identity_error", "step1", "step2", "step1_bound",
             "factorization_error"], rows)


def cmd_axioms(args):
    tally = experiments.run_axioms(args.trials, args.steps, _gen(args).band,
                                   args.sigma_levels, args.seed)
    rows = [[k, tally.passed[k], tally.trials, tally.worst[k]] for k in experiments.AXIOMS]
    return ["axiom", "passed", "trials", "max_violation"], rows


def cmd_reproduce(args, stdout):
    settings = (experiments.Settings.quick_mode(args.inject_bias) if args.quick
                else experiments.Settings(bias=args.inject_bias))
    lines = []

    def emit(line):
        lines.append(line)
        stdout.write(line + "\n")
        stdout.flush()

    results = experiments.reproduce_all(settings, emit)
    failed = sum(not r.ok for r in results)
    emit(f"{len(results) - failed}/{len(results)} criteria passed")
    if args.output:
        Path(args.output).write_text("\n".join(lines) + "\n")
    return EXIT_OK if failed == 0 else EXIT_INTERNAL


COMMANDS = {"pde": cmd_pde, "tree": cmd_tree, "girsanov-check": cmd_girsanov,
            "jeps-sweep": cmd_jeps, "degenerate": cmd_degenerate, "axioms": cmd_axioms}


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
        if args.command == "reproduce-all":
            return cmd_reproduce(args, stdout)
        t0 = time.perf_counter()
        header, rows = COMMANDS[args.command](args)
        header, rows = _with_runtime(args, header, rows, t0)
        _emit(args, render_csv(args, header, rows), stdout)
        return EXIT_OK
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except PhiSyntaxError as exc:
        stderr.write(f"error: malformed phi: {exc}\n")
        return EXIT_CONFIG
    except (GExpectError, ValueError) as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        stderr.write(f"internal error: {type(exc).__name__}: {exc}\n")
        return EXIT_INTERNAL


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
