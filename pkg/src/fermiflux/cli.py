"""``fermiflux`` command line.

Exit status: 0 success, 2 invalid input, 3 numerical failure, 4 violated
invariant.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .errors import EXIT_INVARIANT, EXIT_OK, EXIT_VALIDATION, FermifluxError, InvalidInputError, exit_status


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _float(text):
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fermiflux", description="Relaxation of Fermi reservoirs through shared fermionic modes.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="integrate one scenario and write its outputs")
    r.add_argument("--scenario", required=True, help="scenario file or bundled name (fig1, ...)")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--rtol", type=_float, help="relative tolerance override")
    r.add_argument("--t-end", type=_float, help="final time override")
    r.add_argument("--samples", type=_positive_int, help="number of output rows override")
    r.add_argument(
        "--plots",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="write plot_T.svg and plot_mu.svg (default: as the scenario says)",
    )

    s = sub.add_parser("sweep", help="run a scenario over a parameter grid")
    s.add_argument("--scenario", required=True)
    s.add_argument("--grid", required=True, help="TOML file with a [grid] table")
    s.add_argument("--out", required=True)
    s.add_argument("--jobs", type=_positive_int, default=1)

    e = sub.add_parser("equilibrium", help="print the equilibrium temperature and chemical potential")
    e.add_argument("--scenario", required=True)

    v = sub.add_parser("verify", help="check invariants on random states (seed: FERMIFLUX_SEED)")
    v.add_argument("--states", type=_positive_int, default=None, help="number of random states (default 10000)")
    v.add_argument("--ensembles", type=_positive_int, default=None, help="number of alpha=1 ensembles (default 1000)")
    return p


def _with_overrides(scenario, args):
    changes = {}
    if args.rtol is not None:
        changes["rtol"] = args.rtol
    if args.t_end is not None:
        changes["t_end"] = args.t_end
    if args.samples is not None:
        changes["n_samples"] = args.samples
    if not changes:
        return scenario
    if scenario.kind != "trajectory":
        raise InvalidInputError(f"--rtol/--t-end/--samples do not apply to a {scenario.kind} scenario")
    return scenario.replace(options=dataclasses.replace(scenario.options, **changes))


def _cmd_run(args):
    from .runner import run
    from .scenario import load_scenario

    scenario = _with_overrides(load_scenario(args.scenario), args)
    result = run(scenario, args.out, plots=args.plots)
    s = result.summary
    if scenario.kind == "slot-check":
        print(f"sum Y = {s['sum_heat']:.17g}")
        print(f"sum Y/T = {s['sum_heat_over_T']:.17g}")
        if result.status != EXIT_OK:
            print("second law violated", file=sys.stderr)
    else:
        print(f"T_eq = {s['T_eq']:.17g}")
        print(f"mu_eq = {s['mu_eq']:.17g}")
        print(f"min_ratio = {s['min_ratio']:.17g}")
        print(f"termination = {s['termination']}")
    return result.status


def _cmd_sweep(args):
    from .runner import sweep

    rows = sweep(args.scenario, args.grid, args.out, jobs=args.jobs)
    failed = [r for r in rows if r["status"] != "ok"]
    print(f"{len(rows)} points, {len(failed)} failed")
    for r in failed:
        print(f"point {r['point']}: {r['error'] or r['status']}", file=sys.stderr)
    return EXIT_OK


def _cmd_equilibrium(args):
    from .equilibrium import solve_equilibrium
    from .scenario import load_scenario

    scenario = load_scenario(args.scenario)
    if scenario.kind != "trajectory":
        raise InvalidInputError(f"{scenario.kind} scenario has no reservoirs")
    eq = solve_equilibrium(scenario.reservoirs, x_min=scenario.options.x_min)
    print(f"T_eq = {eq.T_eq:.17g}")
    print(f"mu_eq = {eq.mu_eq:.17g}")
    return EXIT_OK


def _cmd_verify(args):
    from .verify import DEFAULT_ENSEMBLES, DEFAULT_STATES, run_invariants

    results = run_invariants(
        n_states=args.states or DEFAULT_STATES,
        n_ensembles=args.ensembles or DEFAULT_ENSEMBLES,
        progress=print,
    )
    return EXIT_OK if all(r.passed for r in results.values()) else EXIT_INVARIANT


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "equilibrium": _cmd_equilibrium, "verify": _cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors, which matches the validation status
        return int(exc.code) if exc.code is not None else EXIT_VALIDATION
    try:
        return COMMANDS[args.command](args)
    except (FermifluxError, OSError) as exc:
        print(f"fermiflux {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exit_status(exc)


if __name__ == "__main__":
    sys.exit(main())
