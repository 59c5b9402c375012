"""Queue-based simulation of the erasure channel with perfect feedback.

The transmitter repeats the head-of-line bit until a use survives erasure,
with new bits arriving deterministically every two uses (one-half bit per
use). The backlog then forms a birth-death chain whose geometric tail sets
the delay exponent; this module simulates the system, estimates per-delay
error probabilities, and fits the exponent for comparison with the closed
form ln((1-delta)/delta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .channel import OutOfRangeError
from .errors import DomainError

# Substream tag separating the erasure draws from any other consumer of the
# same user seed.
QUEUE_STREAM = 0x51

# A bit that misses its deadline is resolved by a fair guess; the deterministic
# estimator counts it wrong with exactly this weight.
MISS_WEIGHT = 0.5

Z95 = 1.96


class HorizonTooShortError(DomainError):
    """The run is too short for the requested delays."""


class TooFewPointsError(DomainError):
    """Fewer than three usable rows for the exponent fit."""


class AllZeroErrorsError(DomainError):
    """Every error estimate is zero; no decay rate can be fit."""


@dataclass(frozen=True)
class QueueChain:
    """Birth-death chain of the backlog, observed every two channel uses."""

    delta: float
    birth_prob: float
    death_prob: float


@dataclass(frozen=True)
class DelayErrorTable:
    """Per-delay error estimates with binomial 95% half-widths."""

    delays: tuple[int, ...]
    errors: tuple[float, ...]
    trials: tuple[int, ...]
    half_widths: tuple[float, ...]

    def __post_init__(self):
        n = len(self.delays)
        if not (len(self.errors) == len(self.trials) == len(self.half_widths) == n):
            raise DomainError("table columns have mismatched lengths")
        if any(b <= a for a, b in zip(self.delays, self.delays[1:])):
            raise DomainError("delays must be strictly increasing")
        if any(not 0.0 <= e <= 1.0 for e in self.errors):
            raise DomainError("error estimates must lie in [0, 1]")
        if any(t <= 0 for t in self.trials):
            raise DomainError("trial counts must be positive")

    def to_csv(self) -> str:
        lines = ["delay,error,trials,half_width"]
        for d, e, t, w in zip(self.delays, self.errors, self.trials, self.half_widths):
            lines.append(f"{d},{e:.10e},{t},{w:.10e}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class FitResult:
    """Least-squares decay rate of -ln(error) against delay."""

    slope: float
    r_squared: float
    excluded_delays: tuple[int, ...] = ()


def birth_death(delta: float) -> QueueChain:
    """The backlog chain for erasure probability ``delta``.

    Over a two-use step the backlog grows by one when both uses are erased
    (the arriving bit is not worked off) and shrinks by one when both
    survive. delta >= 1/2 makes the chain transient and is rejected.
    """
    if not 0.0 < delta < 0.5:
        raise OutOfRangeError(f"erasure probability must lie in (0, 1/2), got {delta}")
    return QueueChain(delta, delta ** 2, (1.0 - delta) ** 2)


def tail_exponent(chain: QueueChain) -> float:
    """Decay rate, per channel use, of the chain's stationary tail."""
    # Tail ratio birth/death per two-use step, halved per use.
    return -0.5 * math.log(chain.birth_prob / chain.death_prob)


def _service_times(delta: float, horizon: int, seed: int):
    """Delivery time of every bit arriving within the horizon (+inf if never).

    Bit i (1-based) arrives at use 2i and is served by the first surviving
    use at or after its arrival that is not consumed by an earlier bit.
    """
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), QUEUE_STREAM)))
    survived = rng.random(horizon) < (1.0 - delta)
    succ_times = np.flatnonzero(survived) + 1  # 1-based use indices
    n_bits = horizon // 2
    arrivals = 2 * np.arange(1, n_bits + 1, dtype=np.int64)
    first_free = np.searchsorted(succ_times, arrivals)
    order = np.arange(n_bits, dtype=np.int64)
    # FIFO: each bit consumes one surviving use, so the service index is the
    # running maximum of (first eligible success) shifted by the backlog.
    idx = order + np.maximum.accumulate(first_free - order)
    delivery = np.full(n_bits, np.inf)
    ok = idx < len(succ_times)
    delivery[ok] = succ_times[idx[ok]]
    return arrivals, delivery


def simulate_bec_feedback(delta: float, horizon: int, delays, seed: int) -> DelayErrorTable:
    """Estimate per-delay error probabilities of the repeat-until-received scheme.

    A bit errs at delay d exactly when it is undelivered at its arrival
    time plus d; such misses count with weight 1/2 (the decoder's fair
    guess, taken deterministically). Bits arriving within max(delays) uses
    of either end of the run are excluded so estimates reflect the
    stationary chain.
    """
    if not 0.0 < delta < 0.5:
        raise OutOfRangeError(f"erasure probability must lie in (0, 1/2), got {delta}")
    dgrid = tuple(sorted(set(int(d) for d in delays)))
    if not dgrid:
        raise DomainError("need at least one delay")
    if any(d < 0 for d in dgrid):
        raise DomainError("delays must be nonnegative")
    horizon = int(horizon)
    dmax = dgrid[-1]
    if horizon < 10 * max(dmax, 1):
        raise HorizonTooShortError(
            f"horizon {horizon} is too short for max delay {dmax}; need >= {10 * max(dmax, 1)}")
    arrivals, delivery = _service_times(delta, horizon, seed)
    eligible = (arrivals > dmax) & (arrivals <= horizon - dmax)
    arr = arrivals[eligible]
    dlv = delivery[eligible]
    trials = int(arr.size)
    if trials == 0:
        raise HorizonTooShortError("no bits survive the burn-in exclusion")
    errors, half_widths = [], []
    for d in dgrid:
        p = MISS_WEIGHT * float(np.count_nonzero(dlv > arr + d)) / trials
        errors.append(p)
        half_widths.append(Z95 * math.sqrt(p * (1.0 - p) / trials))
    return DelayErrorTable(dgrid, tuple(errors), (trials,) * len(dgrid), tuple(half_widths))


def queue_level_frequencies(delta: float, horizon: int, seed: int, max_level: int = 12) -> np.ndarray:
    """Occupancy counts of backlog levels sampled at every bit arrival."""
    if not 0.0 < delta < 0.5:
        raise OutOfRangeError(f"erasure probability must lie in (0, 1/2), got {delta}")
    arrivals, delivery = _service_times(delta, int(horizon), seed)
    finite = np.sort(delivery[np.isfinite(delivery)])
    # Backlog just after an arrival = bits arrived so far minus bits delivered.
    delivered = np.searchsorted(finite, arrivals, side="right")
    levels = np.arange(1, len(arrivals) + 1) - delivered
    return np.bincount(np.minimum(levels, max_level), minlength=max_level + 1)


def replica_seeds(seed: int, count: int) -> tuple[int, ...]:
    """Derive independent 64-bit run seeds from one user seed."""
    return tuple(int(np.random.SeedSequence((int(seed), k)).generate_state(1, np.uint64)[0])
                 for k in range(count))


def merge_tables(tables) -> DelayErrorTable:
    """Pool replica tables: totals weighted by trials, intervals recomputed."""
    tables = list(tables)
    if not tables:
        raise DomainError("nothing to merge")
    dgrid = tables[0].delays
    if any(t.delays != dgrid for t in tables):
        raise DomainError("replica tables disagree on the delay grid")
    errors, trials, half_widths = [], [], []
    for j in range(len(dgrid)):
        n = sum(t.trials[j] for t in tables)
        p = sum(t.errors[j] * t.trials[j] for t in tables) / n
        errors.append(p)
        trials.append(n)
        half_widths.append(Z95 * math.sqrt(p * (1.0 - p) / n))
    return DelayErrorTable(dgrid, tuple(errors), tuple(trials), tuple(half_widths))


def run_replicas(delta: float, horizon: int, delays, seed: int, replicas: int,
                 workers: int | None = None) -> DelayErrorTable:
    """Merged estimate over ``replicas`` independent runs with derived seeds."""
    if replicas < 1:
        raise DomainError(f"replicas must be >= 1, got {replicas}")
    seeds = replica_seeds(seed, replicas)
    if workers is not None and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            tables = list(pool.map(
                lambda s: simulate_bec_feedback(delta, horizon, delays, s), seeds))
    else:
        tables = [simulate_bec_feedback(delta, horizon, delays, s) for s in seeds]
    return merge_tables(tables)


def fit_exponent(table: DelayErrorTable) -> FitResult:
    """Fit -ln(error) = slope * delay + b by least squares.

    Rows with zero estimates carry no decay information and are excluded
    (and reported); at least three usable rows are required.
    """
    usable = [(d, e) for d, e in zip(table.delays, table.errors) if e > 0.0]
    excluded = tuple(d for d, e in zip(table.delays, table.errors) if e == 0.0)
    if not usable:
        raise AllZeroErrorsError("every estimate is zero; increase the horizon or lower the delays")
    if len(usable) < 3:
        raise TooFewPointsError(f"need >= 3 nonzero rows, have {len(usable)}")
    x = np.array([d for d, _ in usable], dtype=float)
    y = np.array([-math.log(e) for _, e in usable])
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    total = y - y.mean()
    ss_tot = float(total @ total)
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(residual @ residual) / ss_tot
    return FitResult(float(slope), r2, excluded)
