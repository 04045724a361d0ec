"""Command line interface.

    dgcris run      one scenario, SolveResult as JSON
    dgcris sweep    experiment from a config file, CSV
    dgcris compare  one scenario point across architectures, CSV
    dgcris validate invariant self-test on random instances

Exit codes: 0 success, 1 failed validation check or failed trials,
2 usage or config error.
"""

import argparse
import json
import sys
from dataclasses import replace

from . import harness
from .channel import SystemConfig, dbm_to_mw, generate_channels, mw_to_dbm
from .selfcheck import CHECKS, run_checks
from .solver import Architecture, SolverOptions, parse_architectures, solve_scenario

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2
ALL_ARCHS = "cw-sc,cw-gc,cw-dgc,cw-fc"


def _note(args, msg):
    if not args.quiet:
        print(msg, file=sys.stderr, flush=True)


def _scenario_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="INI file; [system] and [solver] sections are used")
    p.add_argument("--seed", type=int, help="scenario seed (default: config or 0)")
    p.add_argument("--power-dbm", type=float, help="transmit power P in dBm")
    p.add_argument("--cells", type=int, help="number of cells M (laid out on a near-square grid)")
    p.add_argument("--groups", type=int, help="number of groups G")
    p.add_argument("--quiet", action="store_true", help="no progress output on stderr")
    return p


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dgcris", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    scen = _scenario_parent()

    p = sub.add_parser("run", parents=[scen], help="solve one scenario")
    p.add_argument("--arch", default="cw-dgc", help="architecture (default cw-dgc)")
    p.add_argument("--trial", type=int, default=0, help="trial index of the realization")
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.add_argument("--dump-matrices", action="store_true",
                   help="include Phi_t, Phi_r and W in the JSON")

    p = sub.add_parser("sweep", help="run the experiment described by a config file")
    p.add_argument("--config", required=True, help="INI file with an [experiment] section")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--arch", help="comma-separated architectures (overrides the file)")
    p.add_argument("--out", help="CSV path (default: [experiment] output, else stdout)")
    p.add_argument("--workers", type=int, help="worker processes")
    p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("compare", parents=[scen], help="compare architectures on one scenario")
    p.add_argument("--arch", default=ALL_ARCHS, help=f"comma-separated (default {ALL_ARCHS})")
    p.add_argument("--trials", type=int, default=harness.DEFAULT_TRIALS)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("validate", help="run the invariant self-test suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--only", help="comma-separated subset of: "
                   + ", ".join(name for name, _ in CHECKS))
    p.add_argument("--quiet", action="store_true", help="print failures only")
    return ap


def _scenario(args) -> tuple[SystemConfig, SolverOptions]:
    config, opts = SystemConfig(), SolverOptions()
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            parsed = harness.parse_config_text(fh.read(), args.config)
        config = harness.system_from_dict(parsed.system)
        opts = harness.solver_from_dict(parsed.solver)
    if args.cells is not None:
        config = config.with_cells(args.cells, args.groups)
    elif args.groups is not None:
        config = replace(config, num_groups=args.groups)
    kw = {}
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.power_dbm is not None:
        kw["transmit_power_mw"] = float(dbm_to_mw(args.power_dbm))
    return replace(config, **kw), opts


def _emit_csv(rows, out):
    text = harness.rows_to_csv(rows)
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    config, opts = _scenario(args)
    arch = Architecture.parse(args.arch)
    _note(args, f"{arch.label}: {harness.describe(config)} trial={args.trial}")
    res = solve_scenario(config, generate_channels(config, args.trial), arch, args.trial, opts)
    payload = {"config": harness.describe(config), "trial": args.trial,
               **res.to_dict(include_matrices=args.dump_matrices)}
    text = json.dumps(payload, indent=2) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _progress(args):
    def report(row):
        _note(args, f"{row.architecture} {row.sweep_axis}={row.sweep_value}: "
                    f"{row.mean_sum_rate:.4f} bit/s/Hz (sd {row.std_sum_rate:.4f}, "
                    f"{row.failures} failed)")
    return report


def cmd_sweep(args) -> int:
    archs = parse_architectures(args.arch) if args.arch else None
    spec = harness.load_spec(args.config, seed=args.seed, trials=args.trials,
                             architectures=archs, workers=args.workers)
    out = args.out or spec.output
    _note(args, f"sweep {spec.axis} over {list(spec.values)}, {spec.trials} trials, "
                f"{harness.describe(spec.base)}")
    rows = harness.run_experiment(spec, _progress(args))
    _emit_csv(rows, out)
    return EXIT_FAILED if any(r.failures for r in rows) else EXIT_OK


def cmd_compare(args) -> int:
    config, opts = _scenario(args)
    power = float(mw_to_dbm(config.transmit_power_mw))
    spec = harness.ExperimentSpec(
        base=config, axis="transmit_power_dbm", values=(power,),
        architectures=tuple(parse_architectures(args.arch)), trials=args.trials,
        solver=opts, workers=args.workers)
    _note(args, f"compare {', '.join(a.label for a in spec.architectures)}, "
                f"{spec.trials} trials, {harness.describe(config)}")
    rows = harness.run_experiment(spec, _progress(args))
    _emit_csv(rows, args.out)
    return EXIT_FAILED if any(r.failures for r in rows) else EXIT_OK


def cmd_validate(args) -> int:
    names = None
    if args.only:
        names = {n.strip() for n in args.only.split(",") if n.strip()}
        unknown = names - {n for n, _ in CHECKS}
        if unknown:
            raise ValueError(f"unknown checks: {', '.join(sorted(unknown))}")
    results = run_checks(args.seed, names)
    for r in results:
        if not (args.quiet and r.passed):
            print(r.line(), flush=True)
    failed = sum(not r.passed for r in results)
    if not args.quiet:
        print(f"{len(results) - failed}/{len(results)} checks passed")
    return EXIT_FAILED if failed else EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "compare": cmd_compare,
            "validate": cmd_validate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except harness.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
