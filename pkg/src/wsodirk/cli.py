"""Command-line front end.

Subcommands: ``list``, ``analyze``, ``integrate``, ``converge``, ``search``.
Every subcommand also accepts ``--config FILE`` holding ``key = value``
lines; keys are long option names (dashes or underscores) and command-line
flags take precedence.

Exit codes: 0 success, 2 usage or input error, 3 computation failure.
CSV and tableau text go to stdout, diagnostics to stderr.
"""
from __future__ import annotations

import argparse
import logging
import math
import re
import sys
from typing import Sequence

import numpy as np

from . import __version__
from .analysis import DEFAULT_JMAX, DEFAULT_TOL, analyze
from .convergence import (PROBLEMS, StudyError, StudySpec, build_problem, dt_sequence,
                          emit_csv, run_study)
from .integrator import IntegrationError, NewtonSettings, integrate
from .search import SearchFailure, SearchSpec, search
from .tableau import TableauError, iter_registry, load, parse, serialize

EXIT_USAGE = 2
EXIT_FAILURE = 3

log = logging.getLogger("wsodirk")

# flag name -> problem parameter name
_PROBLEM_FLAGS = {"lam": "lam", "N": "N", "nu": "nu", "mu": "mu", "rate": "rate"}


class CliError(Exception):
    def __init__(self, msg: str, code: int = EXIT_USAGE):
        super().__init__(msg)
        self.code = code


def read_config(path: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise CliError(f"cannot read config file {path!r}: {exc}") from None
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep or not key.strip():
                raise CliError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            out[key.strip().replace("-", "_")] = val.strip()
    return out


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a list of numbers, got {text!r}") from None


def _positive(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not v > 0 or not math.isfinite(v):
        raise argparse.ArgumentTypeError(f"must be positive, got {text}")
    return v


def _scheme_args(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--scheme", help="registered scheme name")
    g.add_argument("--file", help="tableau file in the text format")


def _problem_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", choices=sorted(PROBLEMS), help="test problem")
    p.add_argument("--lambda", dest="lam", type=float, help="stiffness parameter of pr (default -1e4)")
    p.add_argument("--N", type=int, help="grid intervals (schrodinger 2000, burgers 2048)")
    p.add_argument("--nu", type=float, help="burgers viscosity (default 0.1)")
    p.add_argument("--mu", type=float, help="van der pol parameter (default 500)")
    p.add_argument("--rate", type=float, help="decay rate (default 1)")
    p.add_argument("--T", type=_positive, help="final time (problem default)")
    p.add_argument("--newton-rtol", type=_positive, default=NewtonSettings.rel_tol)
    p.add_argument("--newton-atol", type=_positive, default=NewtonSettings.abs_tol)
    p.add_argument("--newton-maxit", type=int, default=NewtonSettings.max_iters)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wsodirk", description="Weak stage order analysis, DIRK time stepping and convergence studies")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = parser.add_subparsers(dest="command", metavar="{list,analyze,integrate,converge,search}")

    p = sub.add_parser("list", help="registered schemes with their computed orders")
    p.add_argument("--config")

    p = sub.add_parser("analyze", help="diagnostics for a scheme or tableau file")
    p.add_argument("name", nargs="?", help="registered scheme name or tableau file")
    p.add_argument("--file", help="tableau file (alternative to NAME)")
    p.add_argument("--format", choices=("text", "kv"), default="text")
    p.add_argument("--tol", type=_positive, default=DEFAULT_TOL)
    p.add_argument("--jmax", type=int, default=DEFAULT_JMAX)
    p.add_argument("--config")

    p = sub.add_parser("integrate", help="advance one problem with a fixed step")
    _scheme_args(p)
    _problem_args(p)
    p.add_argument("--dt", type=_positive, help="time step")
    p.add_argument("--trajectory", action="store_true", help="print every step as CSV")
    p.add_argument("--output", help="write output here instead of stdout")
    p.add_argument("--config")

    p = sub.add_parser("converge", help="error versus time step study, CSV output")
    _scheme_args(p)
    _problem_args(p)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--dt", type=_float_list, help="explicit time steps, comma separated")
    g.add_argument("--dt-range", type=_float_list, metavar="'LO HI COUNT'",
                   help="COUNT steps T/n log-spaced in [LO, HI]")
    p.add_argument("--window", type=_float_list, metavar="'LO HI'", help="slope fit window")
    p.add_argument("--observables", help="comma separated subset of u,u_x,u_xx")
    p.add_argument("--output", help="write CSV here instead of stdout")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--config")

    p = sub.add_parser("search", help="search for DIRK coefficients")
    p.add_argument("--s", type=int, default=4, help="stages (default 4)")
    p.add_argument("--p", type=int, default=3, help="classical order (default 3)")
    p.add_argument("--qe", type=int, default=2, help="WSO eigenvector order (default 2)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--multistarts", type=int, default=SearchSpec.multistarts)
    p.add_argument("--max-draws", type=int, default=SearchSpec.max_draws)
    p.add_argument("--nm-maxiter", type=int, default=SearchSpec.nm_maxiter)
    p.add_argument("--name", help="name written into the tableau file")
    p.add_argument("--output", help="tableau file; the report then goes to stdout")
    p.add_argument("--config")
    return parser


_NEGATIVE = re.compile(r"^-(\d+\.?\d*|\.\d+)([eE][-+]?\d+)?$|^-inf$")


def _join_negative_values(argv: Sequence[str]) -> list[str]:
    """Turn ``--lambda -1e4`` into ``--lambda=-1e4``; argparse misreads exponent forms as flags."""
    out: list[str] = []
    for tok in argv:
        if out and _NEGATIVE.match(tok) and out[-1].startswith("--") and "=" not in out[-1]:
            out[-1] = f"{out[-1]}={tok}"
        else:
            out.append(tok)
    return out


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is None:
        return args
    cfg = read_config(args.config)
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    actions = {a.dest: a for a in subparser._actions}
    # allow the flag spelling for renamed destinations (lambda -> lam)
    aliases = {opt.lstrip("-").replace("-", "_"): a.dest
               for a in subparser._actions for opt in a.option_strings}
    defaults = {}
    for key, raw in cfg.items():
        dest = aliases.get(key, key)
        action = actions.get(dest)
        if action is None or dest in ("help", "config"):
            raise CliError(f"{args.config}: unknown key {key!r} for {args.command}")
        if isinstance(action, argparse._StoreTrueAction):
            val = raw.lower() in ("1", "true", "yes", "on")
        else:
            try:
                val = action.type(raw) if action.type else raw
            except (argparse.ArgumentTypeError, ValueError) as exc:
                raise CliError(f"{args.config}: bad value for {key!r}: {exc}") from None
            if action.choices is not None and val not in action.choices:
                raise CliError(f"{args.config}: {key!r} must be one of {sorted(action.choices)}")
        defaults[dest] = val
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def _tableau(args):
    src = getattr(args, "file", None) or getattr(args, "scheme", None)
    if src is None:
        raise CliError("one of --scheme or --file is required")
    try:
        if getattr(args, "file", None):
            with open(args.file) as fh:
                return parse(fh.read())
        return load(args.scheme)
    except OSError as exc:
        raise CliError(f"cannot read tableau file: {exc}") from None
    except KeyError as exc:
        raise CliError(exc.args[0]) from None


def _problem_params(args) -> dict:
    return {name: getattr(args, flag) for flag, name in _PROBLEM_FLAGS.items()
            if getattr(args, flag, None) is not None}


def _newton(args) -> NewtonSettings:
    try:
        return NewtonSettings(args.newton_rtol, args.newton_atol, args.newton_maxit)
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _out(args):
    path = getattr(args, "output", None)
    if not path:
        return sys.stdout, False
    try:
        return open(path, "w"), True
    except OSError as exc:
        raise CliError(f"cannot write {path!r}: {exc}") from None


def cmd_list(args) -> int:
    rows = []
    for t in iter_registry():
        rep = analyze(t)
        rows.append((t.name, t.s, rep.classical_order, rep.stage_order, rep.wso,
                     rep.wso_eigenvector, "yes" if rep.l_stable else "no", t.source or ""))
    head = ("name", "s", "p", "q", "wso", "wso_eig", "L-stable", "source")
    widths = [max(len(str(r[i])) for r in rows + [head]) for i in range(len(head))]
    for r in [head] + rows:
        print("  ".join(str(v).ljust(w) for v, w in zip(r, widths)).rstrip())
    return 0


def cmd_analyze(args) -> int:
    if args.name and args.file:
        raise CliError("give either NAME or --file, not both")
    src = args.file or args.name
    if src is None:
        raise CliError("a scheme name or --file is required")
    try:
        if args.file:
            with open(args.file) as fh:
                t = parse(fh.read())
        else:
            t = load(src)
    except OSError as exc:
        raise CliError(f"cannot read tableau file: {exc}") from None
    except KeyError as exc:
        raise CliError(exc.args[0]) from None
    rep = analyze(t, tol=args.tol, jmax=args.jmax)
    sys.stdout.write(rep.to_text() if args.format == "text" else rep.to_keyvalue())
    return 0


def cmd_integrate(args) -> int:
    if args.problem is None:
        raise CliError("--problem is required")
    if args.dt is None:
        raise CliError("--dt is required")
    tab = _tableau(args)
    try:
        ode = build_problem(args.problem, **_problem_params(args))
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad problem parameters: {exc}") from None
    T = args.T if args.T is not None else PROBLEMS[args.problem].T
    ns = _newton(args)
    try:
        res = integrate(tab, ode, ode.t0, ode.u0, T, args.dt, ns, trajectory=args.trajectory)
    except IntegrationError as exc:
        raise CliError(f"integration failed: {exc}", EXIT_FAILURE) from None
    fh, close = _out(args)
    try:
        params = " ".join(f"{k}={v!r}" for k, v in sorted(ode.params.items()))
        fh.write(f"# scheme: {tab.name}\n# problem: {args.problem}\n# params: {params}\n")
        fh.write(f"# T: {T!r}\n# dt: {args.dt!r}\n# steps: {res.steps}\n")
        fh.write(f"# newton: rtol={ns.rel_tol!r} atol={ns.abs_tol!r} maxit={ns.max_iters}\n")
        if ode.exact is not None:
            err = float(np.max(np.abs(ode.grid(res.t, res.u) - ode.grid(res.t, ode.exact(res.t)))))
            fh.write(f"# max_error: {err:.17g}\n")
        if args.trajectory:
            fh.write(",".join(["t"] + [f"u{i}" for i in range(ode.dim)]) + "\n")
            for tk, uk in zip(res.times, res.trajectory):
                fh.write(",".join(format(float(v), ".17g") for v in (tk, *uk)) + "\n")
        else:
            fh.write(f"t = {res.t!r}\n")
            for i, v in enumerate(res.u):
                fh.write(f"u[{i}] = {float(v)!r}\n")
    finally:
        if close:
            fh.close()
    return 0


def cmd_converge(args) -> int:
    if args.problem is None:
        raise CliError("--problem is required")
    tab = _tableau(args)
    pdef = PROBLEMS[args.problem]
    T = args.T if args.T is not None else pdef.T
    if args.dt_range is not None:
        if len(args.dt_range) != 3:
            raise CliError("--dt-range needs LO HI COUNT")
        lo, hi, count = args.dt_range
        if not (0 < lo <= hi) or count < 1:
            raise CliError("--dt-range needs 0 < LO <= HI and COUNT >= 1")
        dts = dt_sequence(T, np.rint(np.geomspace(T / hi, T / lo, int(count))).astype(int))
    elif args.dt is not None:
        if not args.dt or any(not v > 0 for v in args.dt):
            raise CliError("--dt values must be positive")
        dts = args.dt
    else:
        dts = None
    window = None
    if args.window is not None:
        if len(args.window) != 2 or not 0 < args.window[0] <= args.window[1]:
            raise CliError("--window needs 0 < LO <= HI")
        window = tuple(args.window)
    obs = tuple(o.strip() for o in args.observables.split(",")) if args.observables else None
    if args.jobs < 1:
        raise CliError("--jobs must be >= 1")
    ns = _newton(args)
    spec = StudySpec(scheme=tab.name, problem=args.problem, params=_problem_params(args),
                     dt_list=dts, observables=obs, slope_window=window, T=T, newton=ns, tableau=tab)
    try:
        spec = spec.resolved()
    except (KeyError, ValueError) as exc:
        raise CliError(str(exc.args[0])) from None
    log.info("running %d time steps for %s on %s", len(spec.dt_list), tab.name, args.problem)
    try:
        table = run_study(spec, jobs=args.jobs)
    except StudyError as exc:
        raise CliError(str(exc), EXIT_FAILURE) from None
    extra = {"newton": f"rtol={ns.rel_tol!r} atol={ns.abs_tol!r} maxit={ns.max_iters}",
             "jobs": args.jobs}
    fh, close = _out(args)
    try:
        emit_csv(table, fh, extra)
    finally:
        if close:
            fh.close()
    for o in table.observables:
        fit = table.slopes.get(o)
        msg = "none (fewer than 3 rows in window)" if fit is None else f"{fit.slope:.3f} ({fit.points} points)"
        print(f"{table.scheme} {table.problem} slope {o}: {msg}", file=sys.stderr)
    failed = [r for r in table.rows if not r.ok]
    for r in failed:
        print(f"failed dt={r.dt:.6g}: {r.failure}", file=sys.stderr)
    return EXIT_FAILURE if failed else 0


def cmd_search(args) -> int:
    spec = SearchSpec(s=args.s, p=args.p, qe=args.qe, multistarts=args.multistarts,
                      seed=args.seed, max_draws=args.max_draws, nm_maxiter=args.nm_maxiter)
    try:
        spec.validate()
    except ValueError as exc:
        raise CliError(str(exc)) from None
    try:
        res = search(spec, name=args.name)
    except SearchFailure as exc:
        print(f"search failed: {exc}", file=sys.stderr)
        worst = sorted(exc.best_residuals.items(), key=lambda kv: -abs(kv[1]))[:5]
        for k, v in worst:
            print(f"  {k} = {v:.3e}", file=sys.stderr)
        return EXIT_FAILURE
    header = (f"# search s={spec.s} p={spec.p} qe={spec.qe} seed={spec.seed} "
              f"multistarts={spec.multistarts} max_draws={spec.max_draws} nm_maxiter={spec.nm_maxiter}\n"
              f"# objective {res.objective:.17g} start {res.start}\n")
    text = serialize(res.tableau)
    if args.output:
        try:
            with open(args.output, "w") as fh:
                fh.write(header + text)
        except OSError as exc:
            raise CliError(f"cannot write {args.output!r}: {exc}") from None
        sys.stdout.write(res.report.to_text())
    else:
        sys.stdout.write(header + text)
        sys.stderr.write(res.report.to_text())
    return 0


COMMANDS = {
    "list": cmd_list,
    "analyze": cmd_analyze,
    "integrate": cmd_integrate,
    "converge": cmd_converge,
    "search": cmd_search,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    argv = _join_negative_values(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
    except CliError as exc:
        print(f"wsodirk: error: {exc}", file=sys.stderr)
        return exc.code
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except CliError as exc:
        print(f"wsodirk {args.command}: error: {exc}", file=sys.stderr)
        return exc.code
    except TableauError as exc:
        print(f"wsodirk {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
