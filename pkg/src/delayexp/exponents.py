"""Reliability-exponent bounds for DMCs, in fixed-blocklength and
fixed-delay (feedback) flavors.

Everything here works in nats and returns plain result objects. Numerical
edge conditions (rate above capacity, optimizer pinned at a bracket edge,
structurally unbounded objectives) are reported as flags on the result,
never as exceptions; exceptions are reserved for domain violations.

The exponent functions come in two families:

* fixed-blocklength bounds: the Gallager function ``E0``, the
  sphere-packing bound (converse), the random-coding and list-decoding
  achievability bounds, and a grid-search oracle for the change-of-channel
  converse that upper-bounds fixed-delay performance;
* fixed-delay quantities for feedback schemes: the rate-focusing converse,
  the exponent achieved by a confirm/deny repeat strategy, the fraction of
  channel uses such a strategy spends on confirmations, and the slopes of
  both curves at capacity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from numbers import Integral

import numpy as np

from .channel import (
    Channel,
    as_input_dist,
    capacity,
    capacity_batch,
    is_symmetric,
    OutOfRangeError,
)
from .errors import DomainError

RHO_MIN = 1e-6
RHO_MAX = 64.0
GOLDEN_TOL = 1e-10
BISECT_XTOL = 1e-10
BISECT_FTOL = 1e-12
DEGENERATE_CAPACITY = 1e-9
CURVATURE_STEP = 1e-4
# Cancellation noise in the second difference is about eps / h^2 ~ 4e-8 at
# the step above, so the flatness cutoff sits well clear of it; channels
# that are not error free have |E0''(0)| larger than this by orders of
# magnitude (even BSC(1e-6) is near 2e-4).
FLAT_CURVATURE_TOL = 1e-6
ORACLE_MAX_GRID = 200
_ORACLE_CHUNK = 1 << 18
_BIG = 1e300

FLAG_RATE_ABOVE_CAPACITY = "rate_above_capacity"
FLAG_RATE_OUT_OF_RANGE = "rate_out_of_range"
FLAG_BRACKET_EDGE = "bracket_edge"
FLAG_UNBOUNDED = "unbounded"
FLAG_SURROGATE = "surrogate"
FLAG_FLAT_CURVATURE = "flat_curvature"

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_INVPHI2 = (3.0 - math.sqrt(5.0)) / 2.0


class NonPositiveRateError(DomainError):
    """Rate arguments must be strictly positive."""


class UnsupportedAlphabetError(DomainError):
    """The operation is restricted to small alphabets."""


class BadListSizeError(DomainError):
    """List sizes must be integers >= 1."""


class DegenerateChannelError(DomainError):
    """The channel has (numerically) zero capacity."""


@dataclass(frozen=True)
class ExponentValue:
    """An exponent in nats plus how it was attained.

    ``param`` is the achieving optimizer parameter (rho, eta, or lambda,
    depending on the bound) and ``q`` the achieving input distribution;
    either may be None when not meaningful. ``flags`` carries numerical
    edge conditions.
    """

    value: float
    param: float | None = None
    q: np.ndarray | None = None
    flags: tuple[str, ...] = ()


@dataclass(frozen=True)
class ParametricPoint:
    """One point of a parametric rate/exponent curve: exponent == rho * rate."""

    rho: float
    rate: float
    exponent: float


@dataclass(frozen=True)
class CapacitySlopes:
    """Slopes (as positive magnitudes) of the fixed-delay curves at capacity.

    ``e0_curvature`` is the second derivative of the Gallager function at
    rho = 0, which is negative for any channel that is not error free. When
    it vanishes both slopes are reported as +inf with a flag.
    """

    focusing_slope: float
    achieved_slope: float
    e0_curvature: float
    flags: tuple[str, ...] = ()


# -- generic 1-D searches ----------------------------------------------------

def _golden_max(f, lo: float, hi: float, tol: float = GOLDEN_TOL):
    """Golden-section maximization of a unimodal function on [lo, hi]."""
    a, b = float(lo), float(hi)
    h = b - a
    c, d = a + _INVPHI2 * h, a + _INVPHI * h
    fc, fd = f(c), f(d)
    while h > tol:
        if fc >= fd:
            b, h = d, d - a
            d, fd = c, fc
            c = a + _INVPHI2 * h
            fc = f(c)
        else:
            a, h = c, b - c
            c, fc = d, fd
            d = a + _INVPHI * h
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


def _bisect_root(f, lo: float, hi: float, xtol: float = BISECT_XTOL,
                 ftol: float = BISECT_FTOL) -> float:
    """Root of a decreasing-through-zero function with a sign change on [lo, hi]."""
    flo = f(lo)
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) < ftol:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- the Gallager function ---------------------------------------------------

def _e0_raw(p: np.ndarray, rho: float, q: np.ndarray) -> float:
    # Valid for any rho > -1; callers police the public domain rho >= 0.
    a = 1.0 / (1.0 + rho)
    inner = q @ np.power(p, a)
    return -math.log(float(np.sum(np.power(inner, 1.0 + rho))))


def gallager_e0(ch: Channel, rho: float, q=None) -> float:
    """The Gallager function E0(rho, q) in nats; uniform q by default."""
    if rho < 0:
        raise DomainError(f"rho must be >= 0, got {rho}")
    if q is None:
        qv = np.full(ch.inputs, 1.0 / ch.inputs)
    else:
        qv = as_input_dist(q, ch.inputs)
    return _e0_raw(ch.p, float(rho), qv)


def _ascend_q(p: np.ndarray, rho: float, q0: np.ndarray,
              tol: float = 1e-10, max_sweeps: int = 200):
    """Maximize E0 over q by cyclic pairwise mass transfers.

    Each sweep reoptimizes the mass split of every input pair by a
    golden-section line search; E0 is concave in q, so this converges to
    the maximizer from any interior start.
    """
    q = np.array(q0, dtype=float)
    k = len(q)
    best = _e0_raw(p, rho, q)
    for _ in range(max_sweeps):
        gain = 0.0
        for i in range(k):
            for j in range(i + 1, k):
                mass = q[i] + q[j]
                if mass <= 0:
                    continue

                def split(t, _i=i, _j=j, _m=mass):
                    trial = q.copy()
                    trial[_i], trial[_j] = t * _m, (1.0 - t) * _m
                    return _e0_raw(p, rho, trial)

                t, val = _golden_max(split, 0.0, 1.0)
                if val > best:
                    gain += val - best
                    best = val
                    q[i], q[j] = t * mass, (1.0 - t) * mass
        if gain < tol:
            break
    return q, best


def _grid_q(p: np.ndarray, rho: float, points: int = 33):
    """Dense simplex scan for up to three inputs; None for larger alphabets."""
    k = p.shape[0]
    axis = np.linspace(0.0, 1.0, points)
    best_q, best = None, -math.inf
    if k == 2:
        cands = [(a, 1.0 - a) for a in axis]
    elif k == 3:
        cands = [(a, b, 1.0 - a - b) for a in axis for b in axis if a + b <= 1.0 + 1e-12]
    else:
        return None
    for cand in cands:
        q = np.clip(np.asarray(cand), 0.0, None)
        q /= q.sum()
        val = _e0_raw(p, rho, q)
        if val > best:
            best_q, best = q, val
    return best_q, best


def e0_max(ch: Channel, rho: float) -> ExponentValue:
    """max_q E0(rho, q) with the achieving input distribution.

    Symmetric channels take the uniform shortcut; otherwise coordinate
    ascent runs from the uniform start, cross-checked (and reseeded when
    beaten) by a coarse simplex grid on small input alphabets.
    """
    if rho < 0:
        raise DomainError(f"rho must be >= 0, got {rho}")
    p = ch.p
    if is_symmetric(ch):
        q = np.full(ch.inputs, 1.0 / ch.inputs)
        return ExponentValue(_e0_raw(p, rho, q), None, q)
    q0 = np.full(ch.inputs, 1.0 / ch.inputs)
    q, val = _ascend_q(p, rho, q0)
    grid = _grid_q(p, rho)
    if grid is not None and grid[1] > val + 1e-12:
        q, val = _ascend_q(p, rho, grid[0])
        if grid[1] > val:
            q, val = grid
    return ExponentValue(val, None, np.asarray(q))


# -- fixed-blocklength bounds ------------------------------------------------

def _require_positive_rate(rate: float) -> None:
    if not rate > 0:
        raise NonPositiveRateError(f"rate must be > 0 nats, got {rate}")


def _positive_capacity(ch: Channel) -> float:
    cap = capacity(ch)
    if cap < DEGENERATE_CAPACITY:
        raise DegenerateChannelError(f"channel capacity {cap!r} is numerically zero")
    return cap


def _has_full_support_column(ch: Channel) -> bool:
    return bool(np.any(np.all(ch.p > 0, axis=0)))


def _parametric_bound(ch: Channel, rate: float, rho_hi: float,
                      edge_flags: bool) -> ExponentValue:
    """max over rho in [RHO_MIN, rho_hi] of max_q E0(rho, q) - rho * rate."""
    _require_positive_rate(rate)
    cap = _positive_capacity(ch)
    if rate >= cap:
        return ExponentValue(0.0, None, None, (FLAG_RATE_ABOVE_CAPACITY,))

    def objective(rho):
        return e0_max(ch, rho).value - rho * rate

    rho_star, val = _golden_max(objective, RHO_MIN, rho_hi)
    ev = e0_max(ch, rho_star)
    flags = ()
    if edge_flags and rho_hi - rho_star < 1e-4:
        if not _has_full_support_column(ch):
            # No output letter is reachable from every input, so the
            # objective grows without bound in rho: the true value is +inf.
            return ExponentValue(math.inf, math.inf, ev.q, (FLAG_UNBOUNDED,))
        flags = (FLAG_BRACKET_EDGE,)
    return ExponentValue(max(val, 0.0), rho_star, ev.q, flags)


def sphere_packing(ch: Channel, rate: float) -> ExponentValue:
    """Sphere-packing exponent at ``rate`` (nats): the fixed-blocklength converse.

    Zero at and above capacity. When the maximizing rho is pinned at the
    top of the search bracket the value is either reported with a
    ``bracket_edge`` flag, or as +inf with an ``unbounded`` flag when the
    channel structure makes the supremum infinite (zero-error regime).
    """
    return _parametric_bound(ch, rate, RHO_MAX, edge_flags=True)


def random_coding(ch: Channel, rate: float) -> ExponentValue:
    """Random-coding exponent: same objective as sphere packing, rho capped at 1."""
    return _parametric_bound(ch, rate, 1.0, edge_flags=False)


def list_random_coding(ch: Channel, rate: float, list_size) -> ExponentValue:
    """Random-coding exponent with list decoding; rho is capped at the list size."""
    if isinstance(list_size, bool) or not isinstance(list_size, Integral) or list_size < 1:
        raise BadListSizeError(f"list size must be an integer >= 1, got {list_size!r}")
    return _parametric_bound(ch, rate, float(int(list_size)), edge_flags=False)


# -- change-of-channel oracle ------------------------------------------------

def _simplex_grid(m: int, steps: int) -> np.ndarray:
    axis = np.arange(steps + 1) / steps
    if m == 2:
        return np.column_stack([axis, 1.0 - axis])
    rows = [(a, b, 1.0 - a - b) for a in axis for b in axis if a + b <= 1.0 + 1e-12]
    return np.clip(np.asarray(rows), 0.0, 1.0)


def _window_grid(row: np.ndarray, steps: int) -> np.ndarray:
    """A refined simplex grid covering +-2 coarse cells around ``row``."""
    m = len(row)
    half = 2.0 / steps

    def axis_around(x):
        return np.linspace(max(0.0, x - half), min(1.0, x + half), steps + 1)

    if m == 2:
        a = axis_around(row[0])
        return np.column_stack([a, 1.0 - a])
    a, b = axis_around(row[0]), axis_around(row[1])
    rows = [(x, y, 1.0 - x - y) for x in a for y in b if x + y <= 1.0 + 1e-12]
    return np.clip(np.asarray(rows), 0.0, 1.0)


def _kl_rows(rows: np.ndarray, p_row: np.ndarray) -> np.ndarray:
    """KL(row || p_row) for each row; +inf where the support leaks."""
    sup = p_row > 0
    vals = np.full(len(rows), math.inf)
    ok = rows[:, ~sup].sum(axis=1) <= 0
    r = rows[ok][:, sup]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(r > 0, r * np.log(np.where(r > 0, r / p_row[sup], 1.0)), 0.0)
    vals[ok] = t.sum(axis=1)
    return vals


def _max_over_r_grid(d0: np.ndarray, d1: np.ndarray, steps: int) -> np.ndarray:
    # The objective is linear in the input law, so a 1-D grid over binary
    # input laws is exhaustive enough; infinities ride along as a large
    # finite sentinel to keep 0 * inf out of the products.
    t = np.arange(steps + 1) / steps
    a = np.where(np.isfinite(d0), d0, _BIG)
    b = np.where(np.isfinite(d1), d1, _BIG)
    return np.max(t[None, :] * a[:, None] + (1.0 - t)[None, :] * b[:, None], axis=1)


def _oracle_pass(p: np.ndarray, rate: float, rows0: np.ndarray,
                 rows1: np.ndarray, steps: int):
    """Best (lowest) worst-case divergence over feasible row pairs on a grid."""
    d0 = _kl_rows(rows0, p[0])
    d1 = _kl_rows(rows1, p[1])
    n0, n1 = len(rows0), len(rows1)
    best_val, best_pair = math.inf, None
    for start in range(0, n0 * n1, _ORACLE_CHUNK):
        flat = np.arange(start, min(start + _ORACLE_CHUNK, n0 * n1))
        i0, i1 = np.divmod(flat, n1)
        mats = np.empty((len(flat), 2, p.shape[1]))
        mats[:, 0, :] = rows0[i0]
        mats[:, 1, :] = rows1[i1]
        feasible = capacity_batch(mats) < rate
        if not np.any(feasible):
            continue
        obj = _max_over_r_grid(d0[i0[feasible]], d1[i1[feasible]], steps)
        k = int(np.argmin(obj))
        if obj[k] < best_val:
            best_val = float(obj[k])
            sel = flat[feasible][k]
            best_pair = (rows0[sel // n1], rows1[sel % n1])
    return best_val, best_pair


def haroutunian_oracle(ch: Channel, rate: float, grid_steps: int = 100) -> float:
    """Grid-search evaluation of the change-of-channel converse.

    Minimizes, over channels G on a per-row simplex grid with capacity
    below ``rate``, the worst-case (over input laws) conditional divergence
    D(G || P | r). A second pass refines the grid in a window of two coarse
    cells around the first incumbent. Binary input alphabets with at most
    three outputs only; this is a deliberately direct oracle for
    cross-checking the parametric sphere-packing route, not a fast bound.
    """
    if ch.inputs != 2 or ch.outputs > 3:
        raise UnsupportedAlphabetError(
            f"oracle supports 2 inputs and <= 3 outputs, got {ch.inputs}x{ch.outputs}")
    if not 4 <= grid_steps <= ORACLE_MAX_GRID:
        raise DomainError(f"grid_steps must lie in [4, {ORACLE_MAX_GRID}], got {grid_steps}")
    _require_positive_rate(rate)
    if rate >= capacity(ch):
        return 0.0
    rows = _simplex_grid(ch.outputs, grid_steps)
    val, pair = _oracle_pass(ch.p, rate, rows, rows, grid_steps)
    if pair is None:
        return math.inf
    refined, _ = _oracle_pass(ch.p, rate, _window_grid(pair[0], grid_steps),
                              _window_grid(pair[1], grid_steps), grid_steps)
    return min(val, refined)


# -- fixed-delay bounds ------------------------------------------------------

def focusing_bound(ch: Channel, rate: float) -> ExponentValue:
    """Rate-focusing converse on the fixed-delay exponent at ``rate`` (nats).

    On symmetric channels this is computed parametrically: the value is
    E0(eta) at the eta solving E0(eta) / eta = rate. Other channels fall
    back to the defining outer minimization over rate splits, with the
    sphere-packing bound standing in for the change-of-channel converse;
    the result then carries a ``surrogate`` flag.
    """
    _require_positive_rate(rate)
    cap = _positive_capacity(ch)
    if rate >= cap:
        return ExponentValue(0.0, None, None, (FLAG_RATE_ABOVE_CAPACITY,))
    if is_symmetric(ch):
        return _focusing_parametric(ch, rate)
    return _focusing_surrogate(ch, rate)


def _focusing_parametric(ch: Channel, rate: float) -> ExponentValue:
    def gap(eta):
        return e0_max(ch, eta).value - eta * rate

    if gap(RHO_MAX) > 0:
        ev = e0_max(ch, RHO_MAX)
        return ExponentValue(ev.value, RHO_MAX, ev.q, (FLAG_BRACKET_EDGE,))
    eta = _bisect_root(gap, RHO_MIN, RHO_MAX)
    ev = e0_max(ch, eta)
    return ExponentValue(ev.value, eta, ev.q)


def _focusing_surrogate(ch: Channel, rate: float) -> ExponentValue:
    def stretched(lam):
        return sphere_packing(ch, lam * rate).value / (1.0 - lam)

    lo, hi = 1e-6, 1.0 - 1e-6
    probes = np.linspace(lo, hi, 33)
    finite = [x for x in probes if math.isfinite(stretched(x))]
    if not finite:
        return ExponentValue(math.inf, None, None, (FLAG_SURROGATE, FLAG_UNBOUNDED))
    lam, neg = _golden_max(lambda x: -stretched(x), finite[0], hi)
    return ExponentValue(-neg, lam, None, (FLAG_SURROGATE,))


def overhead_fraction(ch: Channel, rho: float) -> float:
    """Fraction of uses a confirm/deny strategy devotes to confirmations.

    At curve parameter rho this is E0(rho) / (E0(1) + E0(rho)), which
    balances the error contributions of the data and confirmation phases.
    """
    if rho <= 0:
        raise DomainError(f"rho must be > 0, got {rho}")
    e0_one = e0_max(ch, 1.0).value
    if e0_one < 1e-15:
        raise DegenerateChannelError("E0(1) is numerically zero")
    e0_rho = e0_max(ch, rho).value
    return e0_rho / (e0_one + e0_rho)


def achieved_exponent(ch: Channel, rho: float) -> ParametricPoint:
    """Fixed-delay exponent achieved by the confirm/deny repeat strategy.

    The exponent at parameter rho is the harmonic combination
    1 / (1/E0(rho) + 1/E0(1)) and sits at rate exponent / rho.
    """
    if rho <= 0:
        raise DomainError(f"rho must be > 0, got {rho}")
    e0_one = e0_max(ch, 1.0).value
    if e0_one < 1e-15:
        raise DegenerateChannelError("E0(1) is numerically zero")
    e0_rho = e0_max(ch, rho).value
    exponent = 1.0 / (1.0 / e0_rho + 1.0 / e0_one)
    psi = e0_rho / (e0_one + e0_rho)
    assert abs(psi * e0_one - (1.0 - psi) * e0_rho) <= 1e-12
    return ParametricPoint(rho, exponent / rho, exponent)


def achieved_exponent_at_rate(ch: Channel, rate: float) -> ExponentValue:
    """Invert the achieved curve: exponent of the repeat strategy at ``rate``.

    The parametric rate is strictly decreasing in rho, so a bisection
    recovers rho from the rate. Rates at or above the curve's rate at
    RHO_MIN (essentially capacity) report 0 with a flag; rates below the
    rate at RHO_MAX clamp there with a ``bracket_edge`` flag.
    """
    _require_positive_rate(rate)
    _positive_capacity(ch)

    def rate_at(rho):
        return achieved_exponent(ch, rho).rate

    if rate >= rate_at(RHO_MIN):
        return ExponentValue(0.0, None, None, (FLAG_RATE_OUT_OF_RANGE,))
    if rate <= rate_at(RHO_MAX):
        point = achieved_exponent(ch, RHO_MAX)
        ev = e0_max(ch, RHO_MAX)
        return ExponentValue(point.exponent, RHO_MAX, ev.q, (FLAG_BRACKET_EDGE,))
    rho = _bisect_root(lambda r: rate_at(r) - rate, RHO_MIN, RHO_MAX)
    point = achieved_exponent(ch, rho)
    return ExponentValue(point.exponent, rho, e0_max(ch, rho).q)


def bec_feedback_exponent(delta: float) -> float:
    """Exact fixed-delay exponent of the erasure channel with feedback."""
    if not 0.0 < delta < 0.5:
        raise OutOfRangeError(f"erasure probability must lie in (0, 1/2), got {delta}")
    return math.log((1.0 - delta) / delta)


def capacity_slopes(ch: Channel) -> CapacitySlopes:
    """Slopes of the focusing and achieved curves as rate approaches capacity.

    Both slopes are reported as positive magnitudes:
    2 C / |E0''(0)| for the focusing converse and
    E0(1) / (C + E0(1) |E0''(0)| / (2 C)) for the repeat strategy.
    The curvature is estimated by Richardson-extrapolated central
    differences; a flat curvature (error-free channels) yields +inf slopes
    and a ``flat_curvature`` flag.
    """
    if not is_symmetric(ch):
        raise DomainError("capacity slopes are defined here for symmetric channels only")
    cap = _positive_capacity(ch)
    q = np.full(ch.inputs, 1.0 / ch.inputs)

    def second_diff(h):
        return (_e0_raw(ch.p, h, q) - 2.0 * _e0_raw(ch.p, 0.0, q)
                + _e0_raw(ch.p, -h, q)) / h ** 2

    h = CURVATURE_STEP
    d2 = (4.0 * second_diff(h / 2.0) - second_diff(h)) / 3.0
    if abs(d2) < FLAT_CURVATURE_TOL:
        return CapacitySlopes(math.inf, math.inf, d2, (FLAG_FLAT_CURVATURE,))
    e0_one = e0_max(ch, 1.0).value
    focusing = 2.0 * cap / (-d2)
    achieved = e0_one / (cap - (e0_one / (2.0 * cap)) * d2)
    return CapacitySlopes(focusing, achieved, d2)
