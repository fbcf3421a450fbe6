"""Command line entry point: run, sweep, report, validate."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import BUILTIN, ValidationError, resolve, scenario_from
from .report import EmptyInput, render, report
from .scenario import ScenarioError, render_run, render_sweep, run_scenario, run_sweep

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("scadasim")

SWEEP_IDS = {"payload": "DOS_PAYLOAD_SWEEP", "interval": "DOS_INTERVAL_SWEEP"}


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scadasim", description="DNP3/SCADA attack co-simulation")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario")
    run.add_argument("--scenario", required=True, help=f"built-in id ({', '.join(BUILTIN)}) or config path")
    run.add_argument("--seed", type=_u64)
    run.add_argument("--duration", type=float, help="unscaled seconds")
    run.add_argument("--masters", type=int)
    run.add_argument("--poll-interval", type=float, help="unscaled seconds")
    run.add_argument("--out-dir", type=Path)

    sweep = sub.add_parser("sweep", help="run a DoS payload or interval sweep")
    sweep.add_argument("--kind", choices=sorted(SWEEP_IDS), required=True)
    sweep.add_argument("--target", choices=["sub", "ucc", "both"], default="both")
    sweep.add_argument("--config", help="sweep config path; defaults to the built-in sweep of that kind")
    sweep.add_argument("--seed", type=_u64)
    sweep.add_argument("--seeds", type=int, help="trials per sweep point")
    sweep.add_argument("--out-dir", type=Path)

    rep = sub.add_parser("report", help="summarise finished runs and sweeps")
    rep.add_argument("--in", dest="inputs", nargs="+", required=True, type=Path)
    rep.add_argument("--out-dir", type=Path)

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("--config", required=True)
    return parser


def _override(scenario, **changes):
    """Re-resolve ``scenario`` with nested overrides applied on top of its config."""
    doc = dict(scenario.config)
    for key, value in changes.items():
        if value is None:
            continue
        if "." in key:
            outer, inner = key.split(".", 1)
            doc[outer] = {**doc[outer], inner: value}
        else:
            doc[key] = value
    return resolve(doc, None, scenario.source)


def cmd_run(args) -> int:
    scenario = _override(scenario_from(args.scenario), seed=args.seed, duration=args.duration,
                         **{"masters.count": args.masters, "masters.poll_interval": args.poll_interval})
    if scenario.config["sweep"] is not None:
        raise ValidationError("scenario", f"{scenario.id} is a sweep; use the sweep command")
    result = run_scenario(scenario, args.out_dir)
    print(render_run(result.report), end="")
    return EXIT_OK


def cmd_sweep(args) -> int:
    scenario = scenario_from(args.config or SWEEP_IDS[args.kind])
    if scenario.config["sweep"] is None or scenario.config["sweep"]["kind"] != args.kind:
        raise ValidationError("sweep.kind", f"{scenario.id} is not a {args.kind} sweep")
    if args.seeds is not None:
        scenario = _override(scenario, **{"sweep.seeds": args.seeds})
    scenario = _override(scenario, seed=args.seed)
    targets = None if args.target == "both" else [args.target]
    result = run_sweep(scenario, args.out_dir, targets)
    print(render_sweep(result), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    summary = report(args.inputs, args.out_dir)
    print(render(summary), end="")
    return EXIT_OK


def cmd_validate(args) -> int:
    scenario = scenario_from(args.config)
    print(f"{args.config}: valid {scenario.id} scenario, seed {scenario.seed}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "report": cmd_report, "validate": cmd_validate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ScenarioError, EmptyInput, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
