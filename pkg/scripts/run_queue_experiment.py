#!/usr/bin/env python3
"""Erasure-queue delay experiment: fitted decay slopes vs the closed form.

For each erasure probability, simulates the repeat-until-correct scheme
at rate 1/2 bit, fits the per-use decay of the delay-error curve, and
compares it against ln((1-delta)/delta). Writes one delay/error CSV per
delta when --outdir is given.
"""

import argparse
from pathlib import Path

from delayexp import bec_feedback_exponent, fit_exponent, simulate_bec_feedback
from delayexp.sim_queue import AllZeroErrorsError, TooFewPointsError


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--deltas", default="0.1,0.2,0.3,0.4",
                        help="comma-separated erasure probabilities in (0, 1/2)")
    parser.add_argument("--horizon", type=int, default=2_000_000)
    parser.add_argument("--delays",
                        help="comma-separated decoding delays in channel uses "
                             "(default: scaled to the closed-form exponent)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--outdir", help="also write per-delta CSV tables here")
    return parser.parse_args()


def auto_delays(closed_slope: float) -> tuple[int, ...]:
    """Delays putting the expected errors in a measurable decade range."""
    grid = tuple(dict.fromkeys(max(1, round(t / closed_slope)) for t in (2, 4, 6, 8)))
    if len(grid) >= 4:
        return grid
    first = max(1, round(2 / closed_slope))
    return tuple(range(first, first + 4))


def main():
    args = parse_args()
    deltas = [float(d) for d in args.deltas.split(",")]
    fixed = tuple(int(d) for d in args.delays.split(",")) if args.delays else None
    outdir = Path(args.outdir) if args.outdir else None
    if outdir:
        outdir.mkdir(parents=True, exist_ok=True)

    print(f"{'delta':>6}  {'delays':>14}  {'fitted':>9}  {'closed':>9}  "
          f"{'rel.err':>8}  {'r^2':>8}")
    for delta in deltas:
        closed = bec_feedback_exponent(delta)
        delays = fixed if fixed else auto_delays(closed)
        table = simulate_bec_feedback(delta, args.horizon, delays, args.seed)
        label = ",".join(str(d) for d in delays)
        if outdir:
            path = outdir / f"queue_delta{delta:.3f}.csv"
            path.write_text(table.to_csv(), encoding="utf-8")
        try:
            fit = fit_exponent(table)
        except (AllZeroErrorsError, TooFewPointsError) as exc:
            print(f"{delta:6.3f}  {label:>14}  fit unavailable: {exc}")
            continue
        rel = abs(fit.slope - closed) / closed
        print(f"{delta:6.3f}  {label:>14}  {fit.slope:9.5f}  {closed:9.5f}  "
              f"{rel:8.2%}  {fit.r_squared:8.5f}")


if __name__ == "__main__":
    main()
