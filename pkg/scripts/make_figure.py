#!/usr/bin/env python3
"""Sweep the three exponent curves for one channel and write figure files.

Produces curves.csv and curves.gp (gnuplot) in the output directory and
prints the capacity, the crossover rate where the achieved curve passes
sphere packing, and the capacity slopes of the focusing and achieved
curves. Render with: gnuplot -p curves.gp
"""

import argparse
from pathlib import Path

from delayexp import (
    capacity,
    capacity_slopes,
    convert,
    crossover_rate,
    emit_csv,
    emit_plot_script,
    load_channel,
    make_bec,
    make_bsc,
    sweep,
)

BOUNDS = ("sp", "focusing", "achieved")


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__)
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--bsc", type=float, metavar="DELTA")
    group.add_argument("--bec", type=float, metavar="DELTA")
    group.add_argument("--matrix", metavar="FILE")
    parser.add_argument("--points", type=int, default=128)
    parser.add_argument("--unit", choices=("nats", "bits"), default="nats")
    parser.add_argument("--outdir", default="figure_out")
    return parser.parse_args()


def main():
    args = parse_args()
    if args.bsc is not None:
        ch = make_bsc(args.bsc)
    elif args.bec is not None:
        ch = make_bec(args.bec)
    else:
        ch = load_channel(args.matrix)

    cap = capacity(ch)
    table = convert(sweep(ch, 0.01 * cap, 0.999 * cap, args.points, BOUNDS),
                    args.unit)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / "curves.csv"
    csv_path.write_text(emit_csv(table), encoding="utf-8")
    (outdir / "curves.gp").write_text(emit_plot_script(table, csv_path.name),
                                      encoding="utf-8")

    print(f"channel: {table.channel_descriptor}")
    print(f"capacity: {table.capacity:.9f} {table.unit}")
    crossing = crossover_rate(table)
    if crossing is None:
        print("crossover: none on this grid")
    else:
        print(f"crossover: {crossing:.9f} {table.unit} "
              f"({crossing / table.capacity:.3f} of capacity)")
    slopes = capacity_slopes(ch)
    print(f"capacity slopes: focusing {slopes.focusing_slope:.6f}, "
          f"achieved {slopes.achieved_slope:.6f}"
          + (f"  [{', '.join(slopes.flags)}]" if slopes.flags else ""))
    print(f"wrote {csv_path} and {outdir / 'curves.gp'}")


if __name__ == "__main__":
    main()
