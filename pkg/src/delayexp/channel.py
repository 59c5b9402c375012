"""Discrete memoryless channel primitives.

A channel is a row-stochastic matrix ``p[x, y]`` over finite input and
output alphabets. This module owns construction and validation, the
information measures everything else is built from (mutual information,
conditional divergence), capacity via alternating maximization, and the
symmetry test that decides when the uniform input distribution is optimal.

All information quantities are in nats.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import BadInputError

ROW_SUM_SLACK = 1e-9
CAPACITY_REL_TOL = 1e-12
CAPACITY_MAX_ITER = 10_000
SYMMETRY_ATOL = 1e-9

# Up to this many columns share a letter-frequency class before the exact
# partition search is abandoned for the single-group test (see is_symmetric).
_PARTITION_SEARCH_LIMIT = 16


class NonStochasticError(BadInputError):
    """A row of the transition matrix does not sum to one."""


class NegativeEntryError(BadInputError):
    """The transition matrix contains a negative probability."""


class TooFewLettersError(BadInputError):
    """Input or output alphabet has fewer than two letters."""


class OutOfRangeError(BadInputError):
    """A channel parameter lies outside its admissible interval."""


class DimensionMismatchError(BadInputError):
    """Vector or matrix shapes are incompatible."""


@dataclass(frozen=True, eq=False)
class Channel:
    """A DMC as a row-stochastic matrix with a human-readable label."""

    p: np.ndarray
    label: str = ""

    @property
    def inputs(self) -> int:
        return self.p.shape[0]

    @property
    def outputs(self) -> int:
        return self.p.shape[1]

    @cached_property
    def _capacity_detail(self) -> "CapacityResult":
        return _alternating_maximization(self.p)

    @cached_property
    def _symmetric(self) -> bool:
        return _partition_symmetric(self.p)

    def describe(self) -> str:
        return self.label or f"DMC({self.inputs}x{self.outputs})"


@dataclass(frozen=True, eq=False)
class InputDist:
    """A probability distribution over channel inputs."""

    q: np.ndarray

    @classmethod
    def uniform(cls, n: int) -> "InputDist":
        return cls(np.full(n, 1.0 / n))


@dataclass(frozen=True)
class CapacityResult:
    """Capacity value together with the achieving input distribution.

    ``converged`` is False when the iteration cap was reached first; the
    best value found so far is still reported.
    """

    value: float
    q: np.ndarray
    converged: bool
    iterations: int


def make_dmc(matrix, label: str = "") -> Channel:
    """Validate a transition matrix and wrap it as a Channel.

    Rows must be nonnegative and sum to one within ``ROW_SUM_SLACK``;
    rows passing that check are renormalized exactly.
    """
    p = np.asarray(matrix, dtype=float)
    if p.ndim != 2:
        raise DimensionMismatchError(f"transition matrix must be 2-D, got shape {p.shape}")
    if p.shape[0] < 2 or p.shape[1] < 2:
        raise TooFewLettersError(f"need at least 2 inputs and 2 outputs, got {p.shape[0]}x{p.shape[1]}")
    if not np.all(np.isfinite(p)):
        raise BadInputError("transition matrix contains non-finite entries")
    if np.any(p < 0):
        raise NegativeEntryError("transition matrix contains a negative entry")
    sums = p.sum(axis=1)
    bad = np.abs(sums - 1.0) > ROW_SUM_SLACK
    if np.any(bad):
        row = int(np.argmax(bad))
        raise NonStochasticError(f"row {row} sums to {sums[row]!r}, expected 1")
    return Channel(p / sums[:, None], label)


def make_bsc(delta: float) -> Channel:
    """Binary symmetric channel with crossover probability ``delta``."""
    if not 0.0 <= delta <= 0.5:
        raise OutOfRangeError(f"BSC crossover must lie in [0, 1/2], got {delta}")
    d = float(delta)
    return make_dmc([[1.0 - d, d], [d, 1.0 - d]], label=f"BSC({d:g})")


def make_bec(delta: float) -> Channel:
    """Binary erasure channel with erasure probability ``delta``.

    Outputs are ordered (0, 1, erasure).
    """
    if not 0.0 <= delta <= 1.0:
        raise OutOfRangeError(f"BEC erasure probability must lie in [0, 1], got {delta}")
    d = float(delta)
    return make_dmc([[1.0 - d, 0.0, d], [0.0, 1.0 - d, d]], label=f"BEC({d:g})")


def load_channel(path) -> Channel:
    """Read a channel from a JSON file holding ``{"matrix": [[...], ...]}``."""
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise BadInputError(f"cannot read channel file {path}: {exc}") from exc
    if not isinstance(payload, dict) or "matrix" not in payload:
        raise BadInputError(f"channel file {path} must be a JSON object with a 'matrix' key")
    label = payload.get("label", "")
    if not isinstance(label, str):
        raise BadInputError("channel label must be a string")
    return make_dmc(payload["matrix"], label=label)


def as_input_dist(r, n: int) -> np.ndarray:
    """Coerce ``r`` (InputDist, sequence, or ndarray) to a validated probability vector."""
    q = np.asarray(r.q if isinstance(r, InputDist) else r, dtype=float)
    if q.shape != (n,):
        raise DimensionMismatchError(f"input distribution has shape {q.shape}, expected ({n},)")
    if np.any(q < 0):
        raise NegativeEntryError("input distribution contains a negative entry")
    total = q.sum()
    if abs(total - 1.0) > ROW_SUM_SLACK:
        raise NonStochasticError(f"input distribution sums to {total!r}, expected 1")
    return q / total


def mutual_information(r, ch: Channel) -> float:
    """I(r; p) in nats, with the 0 log 0 = 0 convention."""
    q = as_input_dist(r, ch.inputs)
    p = ch.p
    m = q @ p
    mask = (p > 0) & (q[:, None] > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(mask, p * np.log(np.where(mask, p / np.maximum(m, 1e-300), 1.0)), 0.0)
    return max(float(q @ terms.sum(axis=1)), 0.0)


def conditional_divergence(g: Channel, p: Channel, r) -> float:
    """D(g || p | r): average row-wise relative entropy under input law ``r``.

    Returns ``math.inf`` when some row of ``g`` puts mass (with positive
    input weight) where the corresponding row of ``p`` has none.
    """
    if g.p.shape != p.p.shape:
        raise DimensionMismatchError(f"channel shapes differ: {g.p.shape} vs {p.p.shape}")
    q = as_input_dist(r, g.inputs)
    G, P = g.p, p.p
    if np.any((G > 0) & (P == 0) & (q[:, None] > 0)):
        return math.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(G > 0, G * np.log(np.where(P > 0, G / np.where(P > 0, P, 1.0), 1.0)), 0.0)
    return float(q @ terms.sum(axis=1))


def capacity(ch: Channel) -> float:
    """Channel capacity in nats."""
    return ch._capacity_detail.value


def capacity_detail(ch: Channel) -> CapacityResult:
    """Capacity plus achieving distribution and convergence diagnostics."""
    return ch._capacity_detail


def _alternating_maximization(p: np.ndarray, tol: float = CAPACITY_REL_TOL,
                              max_iter: int = CAPACITY_MAX_ITER) -> CapacityResult:
    """Alternating maximization of mutual information from the uniform start.

    The update multiplies ``q`` by the exponentiated per-input divergence
    and renormalizes; the objective is monotone, so the relative change of
    the value is the stop criterion.
    """
    k = p.shape[0]
    q = np.full(k, 1.0 / k)
    support = p > 0
    value = 0.0
    previous = -1.0
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        m = q @ p
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(support, p * np.log(np.where(support, p / np.maximum(m, 1e-300), 1.0)), 0.0).sum(axis=1)
        value = float(q @ d)
        if abs(value - previous) <= tol * max(1.0, abs(value)):
            converged = True
            break
        previous = value
        w = q * np.exp(d - d.max())
        q = w / w.sum()
    return CapacityResult(max(value, 0.0), q, converged, iterations)


def capacity_batch(mats: np.ndarray, tol: float = CAPACITY_REL_TOL,
                   max_iter: int = CAPACITY_MAX_ITER) -> np.ndarray:
    """Capacities of a stack of channels ``mats[i]``, all with one shape.

    Same algorithm and tolerances as :func:`capacity`, vectorized over the
    leading axis so grid searches over channel space stay affordable.
    """
    p = np.asarray(mats, dtype=float)
    n, k, _ = p.shape
    q = np.full((n, k), 1.0 / k)
    support = p > 0
    logp = np.where(support, np.log(np.where(support, p, 1.0)), 0.0)
    value = np.zeros(n)
    previous = np.full(n, -1.0)
    for _ in range(max_iter):
        m = np.einsum("nk,nkm->nm", q, p)
        with np.errstate(divide="ignore", invalid="ignore"):
            logm = np.where(m > 0, np.log(np.maximum(m, 1e-300)), 0.0)
        d = np.where(support, p * (logp - logm[:, None, :]), 0.0).sum(axis=2)
        value = np.einsum("nk,nk->n", q, d)
        if np.all(np.abs(value - previous) <= tol * np.maximum(1.0, np.abs(value))):
            break
        previous = value
        w = q * np.exp(d - d.max(axis=1, keepdims=True))
        q = w / w.sum(axis=1, keepdims=True)
    return np.maximum(value, 0.0)


def is_symmetric(ch: Channel) -> bool:
    """Whether the channel splits into column groups whose sub-matrices have
    mutually permuted rows and mutually permuted columns.

    For such channels the uniform input distribution maximizes both mutual
    information and the exponent functions this package evaluates.
    """
    return ch._symmetric


def _valid_group(p: np.ndarray, cols: tuple) -> bool:
    """Do these columns form one admissible sub-matrix?"""
    sub = p[:, list(cols)]
    rows_sorted = np.sort(sub, axis=1)
    if not np.allclose(rows_sorted, rows_sorted[0], atol=SYMMETRY_ATOL, rtol=0.0):
        return False
    cols_sorted = np.sort(sub, axis=0)
    return bool(np.allclose(cols_sorted.T, cols_sorted[:, 0], atol=SYMMETRY_ATOL, rtol=0.0))


def _partition_symmetric(p: np.ndarray) -> bool:
    # Columns in one group must share their sorted letter multiset, so first
    # bucket columns by that key and search each bucket independently.
    classes: dict[tuple, list[int]] = {}
    for y in range(p.shape[1]):
        key = tuple(np.round(np.sort(p[:, y]), 9))
        classes.setdefault(key, []).append(y)
    return all(_class_partitions(p, members) for members in classes.values())


def _class_partitions(p: np.ndarray, members: list[int]) -> bool:
    """Exact search for a full partition of one column class into valid groups."""
    m = len(members)
    if m > _PARTITION_SEARCH_LIMIT:
        # Degenerate fallback for huge classes: accept only the single-group split.
        return _valid_group(p, tuple(members))
    memo: dict[int, bool] = {0: True}

    def solve(mask: int) -> bool:
        if mask in memo:
            return memo[mask]
        low = (mask & -mask).bit_length() - 1
        rest = mask & ~(1 << low)
        sub = rest
        ok = False
        while True:
            cand = sub | (1 << low)
            cols = tuple(members[i] for i in range(m) if cand >> i & 1)
            if _valid_group(p, cols) and solve(mask & ~cand):
                ok = True
                break
            if sub == 0:
                break
            sub = (sub - 1) & rest
        memo[mask] = ok
        return ok

    return solve((1 << m) - 1)
