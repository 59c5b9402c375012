"""Command-line surface: bound evaluation, curve sweeps, simulations.

Three subcommands:

* ``exponent``: evaluate one bound at one rate (or the achieved curve at
  one parameter value) and print the value with its achieving parameter.
* ``figure``: sweep sphere-packing, focusing, and achieved bounds over a
  rate grid; write a CSV, a gnuplot script, and a run manifest; report
  the crossover rate where the achieved curve passes sphere packing.
* ``simulate``: run one of the closed-loop schemes and write its
  delay/error table with a fitted decay slope.

Exit codes: 0 success, 2 malformed input, 3 domain violation, 4 when the
printed result carries a numerical flag. Rates are accepted in bits
(``--rate-bits``); ``--unit`` rescales displayed rates and exponents by
exactly ln 2 and leaves dimensionless fields untouched. All file outputs
are deterministic functions of the full flag set, and the manifest is
always the last file written.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .channel import Channel, capacity, load_channel, make_bec, make_bsc
from .curves import convert, crossover_rate, emit_csv, emit_plot_script, sweep
from .errors import BadInputError, DomainError
from .exponents import (
    FLAG_FLAT_CURVATURE,
    achieved_exponent,
    achieved_exponent_at_rate,
    bec_feedback_exponent,
    capacity_slopes,
    focusing_bound,
    haroutunian_oracle,
    list_random_coding,
    random_coding,
    sphere_packing,
)
from .sim_anytime import SchemeConfig, fortified_run, synthesized_run
from .sim_queue import (
    AllZeroErrorsError,
    TooFewPointsError,
    fit_exponent,
    simulate_bec_feedback,
)

LN2 = math.log(2.0)

FIGURE_BOUNDS = ("sp", "focusing", "achieved")
FIGURE_RATE_LO = 0.01   # fraction of capacity
FIGURE_RATE_HI = 0.999

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DOMAIN = 3
EXIT_FLAGGED = 4


@dataclass(frozen=True)
class RunManifest:
    """What a command produced: inputs, randomness, and files.

    ``artifacts`` lists every file the run emitted, the manifest itself
    included; the manifest is written after all the files it names.
    """

    command_line: str
    seeds: tuple[int, ...]
    artifacts: tuple[str, ...]
    tool_version: str

    def to_json(self) -> str:
        return json.dumps(
            {"command_line": self.command_line,
             "seeds": list(self.seeds),
             "artifacts": list(self.artifacts),
             "tool_version": self.tool_version},
            indent=2) + "\n"


def _write_manifest(outdir: Path, command_line: str, seeds, artifact_paths) -> Path:
    path = outdir / "manifest.json"
    manifest = RunManifest(command_line, tuple(int(s) for s in seeds),
                           tuple(str(p) for p in artifact_paths) + (str(path),),
                           __version__)
    path.write_text(manifest.to_json(), encoding="utf-8")
    return path


def _resolve_outdir(flag_value: str | None) -> Path:
    raw = flag_value or os.environ.get("DELAYEXP_OUTDIR") or "."
    path = Path(raw)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _build_channel(args) -> Channel:
    if args.bsc is not None:
        return make_bsc(args.bsc)
    if args.bec is not None:
        return make_bec(args.bec)
    return load_channel(args.matrix)


def _add_channel_flags(parser: argparse.ArgumentParser, required: bool = True) -> None:
    group = parser.add_mutually_exclusive_group(required=required)
    group.add_argument("--bsc", type=float, metavar="DELTA",
                       help="binary symmetric channel with crossover DELTA")
    group.add_argument("--bec", type=float, metavar="DELTA",
                       help="binary erasure channel with erasure DELTA")
    group.add_argument("--matrix", metavar="FILE",
                       help="JSON file holding {\"matrix\": [[...], ...]}")


def _parse_delays(text: str) -> tuple[int, ...]:
    try:
        delays = tuple(int(part) for part in text.split(","))
    except ValueError as exc:
        raise BadInputError(f"delays must be comma-separated integers, got {text!r}") from exc
    if not delays:
        raise BadInputError("need at least one delay")
    return delays


def _scale(value_nats: float, unit: str) -> float:
    return value_nats / LN2 if unit == "bits" else value_nats


def _rate_nats(args) -> float:
    if args.rate_bits is None:
        raise BadInputError(f"bound {args.bound!r} requires --rate-bits")
    return args.rate_bits * LN2


# -- exponent ----------------------------------------------------------------

def cmd_exponent(args) -> int:
    ch = _build_channel(args)
    unit = args.unit
    flags: tuple[str, ...] = ()
    if args.bound == "achieved" and args.rho is not None:
        point = achieved_exponent(ch, args.rho)
        print(f"rate {_scale(point.rate, unit):.9f} {unit}")
        print(f"exponent {_scale(point.exponent, unit):.9f} {unit}")
        print(f"param {point.rho:.9f}")
    elif args.bound == "haroutunian":
        value = haroutunian_oracle(ch, _rate_nats(args), grid_steps=args.grid_steps)
        print(f"exponent {_scale(value, unit):.9f} {unit}")
    else:
        rate = _rate_nats(args)
        if args.bound == "sp":
            result = sphere_packing(ch, rate)
        elif args.bound == "rc":
            result = random_coding(ch, rate)
        elif args.bound == "list":
            result = list_random_coding(ch, rate, args.list_size)
        elif args.bound == "focusing":
            result = focusing_bound(ch, rate)
        else:
            result = achieved_exponent_at_rate(ch, rate)
        print(f"exponent {_scale(result.value, unit):.9f} {unit}")
        if result.param is not None:
            print(f"param {result.param:.9f}")
        flags = result.flags
    if flags:
        print(f"flag {','.join(flags)}: result carries a numerical edge condition",
              file=sys.stderr)
        return EXIT_FLAGGED
    return EXIT_OK


# -- figure ------------------------------------------------------------------

def cmd_figure(args, command_line: str) -> int:
    ch = _build_channel(args)
    outdir = _resolve_outdir(args.outdir)
    cap = capacity(ch)
    table = sweep(ch, FIGURE_RATE_LO * cap, FIGURE_RATE_HI * cap, args.points,
                  FIGURE_BOUNDS)
    table = convert(table, args.unit)

    csv_path = outdir / "curves.csv"
    csv_path.write_text(emit_csv(table), encoding="utf-8")
    print(f"wrote {csv_path}")
    gp_path = outdir / "curves.gp"
    gp_path.write_text(emit_plot_script(table, csv_path.name), encoding="utf-8")
    print(f"wrote {gp_path}")

    crossing = crossover_rate(table)
    if crossing is None:
        print("crossover_rate none")
    else:
        print(f"crossover_rate {crossing:.9f} {args.unit}")
    slopes = capacity_slopes(ch)
    if FLAG_FLAT_CURVATURE in slopes.flags:
        print("flag flat_curvature: curve slopes at capacity diverge")

    manifest_path = _write_manifest(outdir, command_line, (), (csv_path, gp_path))
    print(f"wrote {manifest_path}")
    return EXIT_OK


# -- simulate ----------------------------------------------------------------

def _print_fit(table) -> None:
    try:
        fit = fit_exponent(table)
    except (AllZeroErrorsError, TooFewPointsError) as exc:
        print(f"fit unavailable: {exc}")
        return
    print(f"slope {fit.slope:.9f} nats_per_use")
    print(f"r_squared {fit.r_squared:.6f}")


def _emit_table(table, outdir: Path) -> Path:
    path = outdir / "table.csv"
    path.write_text(table.to_csv(), encoding="utf-8")
    print(f"wrote {path}")
    return path


def cmd_simulate_bec_queue(args, command_line: str) -> int:
    outdir = _resolve_outdir(args.outdir)
    table = simulate_bec_feedback(args.delta, args.horizon,
                                  _parse_delays(args.delays), args.seed)
    csv_path = _emit_table(table, outdir)
    _print_fit(table)
    print(f"reference {bec_feedback_exponent(args.delta):.9f} nats_per_use")
    manifest_path = _write_manifest(outdir, command_line, (args.seed,), (csv_path,))
    print(f"wrote {manifest_path}")
    return EXIT_OK


def cmd_simulate_scheme(args, command_line: str) -> int:
    if args.config is None:
        raise BadInputError(f"scheme {args.scheme!r} requires --config")
    cfg = SchemeConfig.from_json(args.config)
    ch = _build_channel(args)
    outdir = _resolve_outdir(args.outdir)
    delays = _parse_delays(args.delays)
    if args.scheme == "fortified":
        table = fortified_run(cfg, ch, args.horizon, delays, args.seed)
    else:
        table = synthesized_run(cfg, ch, args.horizon, delays, args.seed,
                                noiseless_flow=args.ideal_flow)
    csv_path = _emit_table(table, outdir)
    _print_fit(table)
    print(f"blocks_confirmed {table.blocks_confirmed}")
    manifest_path = _write_manifest(outdir, command_line, (cfg.seed, args.seed),
                                    (csv_path,))
    print(f"wrote {manifest_path}")
    return EXIT_OK


# -- wiring ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="delayexp",
        description="Fixed-delay reliability bounds and feedback scheme simulators.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_exp = sub.add_parser("exponent", help="evaluate one bound at one rate")
    _add_channel_flags(p_exp)
    p_exp.add_argument("--bound", required=True,
                       choices=("sp", "rc", "list", "haroutunian", "focusing",
                                "achieved"))
    p_exp.add_argument("--rate-bits", type=float,
                       help="rate in bits per channel use")
    p_exp.add_argument("--rho", type=float,
                       help="curve parameter for --bound achieved")
    p_exp.add_argument("--list-size", type=int, default=2,
                       help="list size for --bound list (default 2)")
    p_exp.add_argument("--grid-steps", type=int, default=100,
                       help="grid refinement for --bound haroutunian")
    p_exp.add_argument("--unit", choices=("nats", "bits"), default="nats")

    p_fig = sub.add_parser("figure", help="sweep the three bounds over a rate grid")
    _add_channel_flags(p_fig)
    p_fig.add_argument("--points", type=int, default=128)
    p_fig.add_argument("--unit", choices=("nats", "bits"), default="nats")
    p_fig.add_argument("--outdir", help="output directory (default $DELAYEXP_OUTDIR or .)")

    p_sim = sub.add_parser("simulate", help="run a closed-loop scheme")
    sim_sub = p_sim.add_subparsers(dest="scheme", required=True)

    p_queue = sim_sub.add_parser("bec-queue",
                                 help="repeat-until-correct scheme on an erasure channel")
    p_queue.add_argument("--delta", type=float, required=True)
    p_queue.add_argument("--horizon", type=int, required=True)
    p_queue.add_argument("--delays", required=True,
                         help="comma-separated delays in channel uses")
    p_queue.add_argument("--seed", type=int, default=0)
    p_queue.add_argument("--outdir", help="output directory (default $DELAYEXP_OUTDIR or .)")

    for scheme in ("fortified", "synthesized"):
        p_s = sim_sub.add_parser(scheme, help=f"{scheme} block scheme")
        _add_channel_flags(p_s)
        p_s.add_argument("--config", help="scheme config JSON file")
        p_s.add_argument("--horizon", type=int, required=True)
        p_s.add_argument("--delays", required=True,
                         help="comma-separated delays in channel uses")
        p_s.add_argument("--seed", type=int, default=0)
        p_s.add_argument("--outdir", help="output directory (default $DELAYEXP_OUTDIR or .)")
        if scheme == "synthesized":
            p_s.add_argument("--ideal-flow", action="store_true",
                             help="replace the in-band flow link by the ideal one")

    return parser


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    args = build_parser().parse_args(argv)
    command_line = "delayexp " + " ".join(argv)
    try:
        if args.command == "exponent":
            return cmd_exponent(args)
        if args.command == "figure":
            return cmd_figure(args, command_line)
        if args.scheme == "bec-queue":
            return cmd_simulate_bec_queue(args, command_line)
        return cmd_simulate_scheme(args, command_line)
    except BadInputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
