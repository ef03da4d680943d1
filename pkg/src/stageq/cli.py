"""Command-line interface.

Subcommands:

    simulate      Monte Carlo ensemble (exact or fixed-step) -> stats CSV
    closure       moment-closure ODEs (optionally the mean-field baseline)
    stationary    exact stationary law -> pmf and moments CSVs
    oracle        truncated-generator transient law -> stats CSV
    compare       run several engines, write stats + summary + profiles
    list-presets  show the shipped scenario presets

Scenarios come from --preset <name> or --config <file>; individual
parameters can be overridden with flags.  Exit codes: 0 success,
2 configuration error, 3 engine precondition failure, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .configio import (apply_overrides, load_preset, load_scenario,
                       preset_description, preset_names)
from .errors import ConfigError, NumericalError, PreconditionError
from .harness import ENGINES, emit_plot_data, run_scenario
from .simulate import FixedStep

__all__ = ["main", "build_parser"]


def _add_scenario_flags(sub, engines_flag=False):
    src = sub.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", metavar="NAME", help="name of a shipped preset")
    src.add_argument("--config", metavar="FILE", help="scenario INI file")
    sub.add_argument("--out", metavar="DIR", default="stageq-out",
                     help="output directory (default: %(default)s)")
    sub.add_argument("--seed", type=int, metavar="U64", help="override RNG seed")
    sub.add_argument("--trials", type=int, metavar="M", help="override trial count")
    sub.add_argument("--scheme", metavar="exact|fixed:<dt>",
                     help="override the Monte Carlo scheme")
    sub.add_argument("--stages", type=int, metavar="N", help="override stage count")
    sub.add_argument("--times", metavar="T1,T2,...", help="override sample times")
    sub.add_argument("--horizon", type=float, metavar="T", help="override horizon")
    sub.add_argument("--front-threshold", type=float, metavar="X",
                     help="override the front-position threshold")
    sub.add_argument("--cap", type=int, metavar="K",
                     help="override the oracle per-stage occupancy cap")
    if engines_flag:
        sub.add_argument("--engines", metavar="E1,E2,...",
                         help=f"override engine list (valid: {', '.join(ENGINES)})")


def _parse_times(text):
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            out.append(float(item))
        except ValueError:
            raise ConfigError(f"--times: expected numbers, got {item!r}") from None
    if not out:
        raise ConfigError("--times: no sample times given")
    return tuple(out)


def _load(args, engines=None):
    scenario = load_preset(args.preset) if args.preset else load_scenario(args.config)
    return apply_overrides(
        scenario,
        stages=args.stages,
        trials=args.trials,
        seed=args.seed,
        scheme=args.scheme,
        engines=engines,
        sample_times=_parse_times(args.times) if args.times else None,
        horizon=args.horizon,
        front_threshold=args.front_threshold,
        oracle_cap=args.cap,
    )


def _run_and_report(scenario, out_dir):
    report = run_scenario(scenario, out_dir=out_dir)
    if not report.results:
        raise PreconditionError("; ".join(
            f"{engine}: {message}" for engine, message in report.errors.items()))
    for engine in report.results:
        suffix = "" if report.results[engine].time_resolved else " (stationary CSVs)"
        print(f"{engine}: wrote {os.path.join(out_dir, engine + '.csv') if not suffix else out_dir}{suffix}")
    return report


def _cmd_simulate(args):
    scenario = _load(args)
    engine = "mc-fixed" if isinstance(scenario.scheme, FixedStep) else "mc-exact"
    scenario = apply_overrides(scenario, engines=(engine,))
    _run_and_report(scenario, args.out)
    return 0


def _cmd_closure(args):
    engines = ("ode-nb", "ode-mf") if args.mean_field else ("ode-nb",)
    scenario = _load(args, engines=engines)
    _run_and_report(scenario, args.out)
    return 0


def _cmd_stationary(args):
    scenario = _load(args, engines=("stationary",))
    _run_and_report(scenario, args.out)
    return 0


def _cmd_oracle(args):
    scenario = _load(args, engines=("oracle",))
    _run_and_report(scenario, args.out)
    return 0


def _cmd_compare(args):
    engines = None
    if args.engines:
        engines = tuple(e.strip() for e in args.engines.split(",") if e.strip())
    scenario = _load(args, engines=engines)
    report = _run_and_report(scenario, args.out)
    for engine, message in report.errors.items():
        print(f"warning: engine {engine} skipped: {message}", file=sys.stderr)
    written = emit_plot_data(report, args.out)
    print(f"summary: {os.path.join(args.out, 'summary.csv')}")
    print(f"profiles: {len(written)} files in {args.out}")
    return 0


def _cmd_list_presets(args):
    for name in preset_names():
        print(f"{name:<16} {preset_description(name)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stageq",
        description="Throttled multi-stage queue: simulation, moment closure, "
                    "exact references, and comparison harness.")
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("simulate", help="Monte Carlo ensemble")
    _add_scenario_flags(sub)
    sub.set_defaults(func=_cmd_simulate)

    sub = subs.add_parser("closure", help="moment-closure ODE trajectories")
    _add_scenario_flags(sub)
    sub.add_argument("--mean-field", action="store_true",
                     help="also run the means-only mean-field baseline")
    sub.set_defaults(func=_cmd_closure)

    sub = subs.add_parser("stationary", help="exact stationary law")
    _add_scenario_flags(sub)
    sub.set_defaults(func=_cmd_stationary)

    sub = subs.add_parser("oracle", help="matrix-exponential transient law")
    _add_scenario_flags(sub)
    sub.set_defaults(func=_cmd_oracle)

    sub = subs.add_parser("compare", help="run engines and compare profiles")
    _add_scenario_flags(sub, engines_flag=True)
    sub.set_defaults(func=_cmd_compare)

    sub = subs.add_parser("list-presets", help="show shipped presets")
    sub.set_defaults(func=_cmd_list_presets)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PreconditionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
