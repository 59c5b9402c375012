"""Closed-loop simulation of chunked feedback coding schemes.

Two schemes share one mechanical core. In both, data bits queue at the
encoder, are grouped into fixed-size payload blocks, and each block is
transmitted as a random codeword that the decoder list-decodes; a
confirm/deny control message tells the decoder when (and as which list
entry) a block is resolved.

* ``fortified_run``: the control messages travel a noiseless side link,
  modeled as one confirm/deny opportunity per channel use. Control is
  never wrong, so all residual errors are missed deadlines.
* ``synthesized_run``: control rides the same channel. Each chunk of
  ``c`` uses ends with ``theta`` flow-control uses carrying a tree-coded
  confirm/deny stream; the decoder maximum-likelihood-decodes a sliding
  window of that stream and re-parses the data stream under its current
  punctuation estimate at every chunk boundary.

Everything is deterministic given the config seed (code randomness) and
the run seed (channel noise). Desk-scale caps keep all decoding searches
exhaustive and exact: payloads of at most 14 bits and flow hypothesis
windows of at most 24 bits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from hashlib import blake2b

import numpy as np

from .channel import Channel, is_symmetric
from .errors import BadInputError, DomainError
from .exponents import e0_max
from .sim_queue import (
    DelayErrorTable,
    HorizonTooShortError,
    MISS_WEIGHT,
    Z95,
)

IDLE_LETTER = 0
PAYLOAD_BITS_MAX = 14
FLOW_HYPOTHESIS_BITS_MAX = 24

# Substream tags keep the independent random ingredients of a run apart.
_NOISE_STREAM = 0xA1  # channel noise, keyed by the run seed
_BITS_STREAM = 0xB2   # message content, keyed by the config seed
_CODE_STREAM = 0xC3   # data codebooks, keyed by the config seed
_FLOW_SALT = b"flow"  # tree-code root, keyed by the config seed

_CODE_SLAB = 256
_LOG_ZERO = -1e30
_ARRIVAL_EPS = 1e-9


class PayloadTooLargeError(DomainError):
    """Block payload exceeds the exhaustive-enumeration cap."""


class WindowTooLargeError(DomainError):
    """Flow re-decode window exceeds the exhaustive-search cap."""


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class SchemeConfig:
    """Parameters of a chunked feedback scheme.

    ``n`` is the block length in chunks' worth of data uses, ``c`` the
    chunk length in channel uses, ``l`` the list parameter (list size
    2^l), ``theta`` the per-chunk flow-control uses (0 means the ideal
    noiseless link), ``rate_bits`` the arrival rate in bits per channel
    use, ``seed`` the code/message seed, and ``redecode_window`` how many
    trailing chunks of flow history are re-decoded each chunk.
    """

    n: int
    c: int
    l: int
    theta: int = 0
    rate_bits: float = 0.5
    seed: int = 0
    redecode_window: int = 4

    def __post_init__(self):
        if self.c < 1:
            raise DomainError(f"chunk length must be >= 1, got {self.c}")
        if not self.n > self.l >= 0:
            raise DomainError(f"need n > l >= 0, got n={self.n}, l={self.l}")
        if not 0 <= self.theta < self.c:
            raise DomainError(f"need 0 <= theta < c, got theta={self.theta}, c={self.c}")
        if not self.rate_bits > 0:
            raise DomainError(f"rate_bits must be > 0, got {self.rate_bits}")
        if self.redecode_window < 1:
            raise DomainError(f"redecode_window must be >= 1, got {self.redecode_window}")
        raw = self.n * self.c * self.rate_bits
        if abs(raw - round(raw)) > 1e-6 or round(raw) < 1:
            raise DomainError(
                f"block payload n*c*rate_bits = {raw} must be a whole number of bits >= 1")

    @property
    def payload_bits(self) -> int:
        return int(round(self.n * self.c * self.rate_bits))

    @property
    def rate_nats(self) -> float:
        return self.rate_bits * math.log(2.0)

    @property
    def data_uses_per_chunk(self) -> int:
        return self.c - self.theta

    def to_dict(self) -> dict:
        return {"n": self.n, "c": self.c, "l": self.l, "theta": self.theta,
                "rate_bits": self.rate_bits, "seed": self.seed,
                "redecode_window": self.redecode_window}

    @classmethod
    def from_dict(cls, payload: dict) -> "SchemeConfig":
        if not isinstance(payload, dict):
            raise BadInputError("scheme config must be a JSON object")
        known = {"n", "c", "l", "theta", "rate_bits", "seed", "redecode_window"}
        extra = set(payload) - known
        if extra:
            raise BadInputError(f"unknown scheme config keys: {sorted(extra)}")
        missing = {"n", "c", "l"} - set(payload)
        if missing:
            raise BadInputError(f"scheme config is missing keys: {sorted(missing)}")
        try:
            return cls(**payload)
        except TypeError as exc:
            raise BadInputError(f"bad scheme config: {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "SchemeConfig":
        try:
            with open(path) as fh:
                payload = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise BadInputError(f"cannot read scheme config {path}: {exc}") from exc
        return cls.from_dict(payload)


@dataclass(frozen=True)
class FlowMessage:
    """One chunk-boundary control message.

    A deny serializes to the single bit 0; a confirm to a 1 followed by
    the l-bit list index of the true block. The variable bit count is
    absorbed by the tree code, which hashes whole messages.
    """

    confirm: bool
    index: int = 0

    def __post_init__(self):
        if self.index < 0:
            raise DomainError("disambiguation index must be >= 0")
        if not self.confirm and self.index != 0:
            raise DomainError("deny messages carry no disambiguation index")

    def bits(self, l: int) -> str:
        if not self.confirm:
            return "0"
        if self.index >= 1 << l:
            raise DomainError(f"index {self.index} needs more than {l} bits")
        return "1" + format(self.index, f"0{l}b") if l else "1"

    def token(self) -> bytes:
        return b"1:%d" % self.index if self.confirm else b"0"


@dataclass(frozen=True)
class SchemeRunResult(DelayErrorTable):
    """A DelayErrorTable plus how the scheme's failures decompose.

    ``punctuation_chunk_errors`` counts settled flow messages that differ
    from what the encoder sent; ``data_block_errors`` counts settled
    confirmations whose decoded payload is wrong; ``spurious_confirms``
    counts estimated confirms that were dynamically impossible under the
    parse and were ignored.
    """

    blocks_confirmed: int = 0
    punctuation_chunk_errors: int = 0
    data_block_errors: int = 0
    spurious_confirms: int = 0
    wrong_bit_weight: float = 0.0
    missed_bit_weight: float = 0.0


# -- deterministic random ingredients ---------------------------------------

class _NoiseSource:
    """Per-use channel noise: one uniform per channel use, indexed by time."""

    def __init__(self, ch: Channel, horizon: int, seed: int):
        rng = np.random.default_rng(np.random.SeedSequence((int(seed), _NOISE_STREAM)))
        self.u = rng.random(int(horizon))
        self.cdf = np.cumsum(ch.p, axis=1)
        self.cdf[:, -1] = 1.0
        self.outputs = ch.outputs

    def emit(self, x: int, t: int) -> int:
        # t is 1-based
        y = int(np.searchsorted(self.cdf[x], self.u[t - 1], side="right"))
        return min(y, self.outputs - 1)

    def emit_batch(self, letters: np.ndarray, t0: int) -> np.ndarray:
        """Outputs for a run of consecutive uses starting at 1-based t0."""
        u = self.u[t0 - 1:t0 - 1 + len(letters)]
        # Row-wise searchsorted(..., side="right"), identical to emit().
        return np.sum(self.cdf[letters] <= u[:, None], axis=1)


def _block_values(cfg: SchemeConfig, count: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence((int(cfg.seed), _BITS_STREAM)))
    return rng.integers(0, 1 << cfg.payload_bits, size=max(count, 1), dtype=np.int64)


def _code_input_dist(ch: Channel) -> np.ndarray:
    if is_symmetric(ch):
        return np.full(ch.inputs, 1.0 / ch.inputs)
    return np.asarray(e0_max(ch, 1.0).q)


def _arrival_count(t: int, rate_bits: float) -> int:
    return int(t * rate_bits + _ARRIVAL_EPS)


def _arrival_time(i: int, rate_bits: float) -> int:
    return int(math.ceil(i / rate_bits - _ARRIVAL_EPS))


def _log_likelihoods(ch: Channel) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.where(ch.p > 0, np.log(np.where(ch.p > 0, ch.p, 1.0)), _LOG_ZERO)


# -- data-block codebooks ----------------------------------------------------

class BlockCodebook:
    """Per-block random codewords, reproducible from (seed, block, position).

    For binary-input channels with a uniform code distribution the
    codebook is a random coset code: candidate m's letter at position t is
    <m, g_t> xor s_t with g_t a uniform nonzero mask and s_t a uniform
    dither. Pairwise codeword agreement is exactly 1/2 per position and at
    one-bit payloads the two codewords are antipodal. Other channels fall
    back to i.i.d. letters drawn from the code distribution.
    """

    def __init__(self, ch: Channel, payload_bits: int, seed: int, q=None):
        if payload_bits > PAYLOAD_BITS_MAX:
            raise PayloadTooLargeError(
                f"payload of {payload_bits} bits exceeds the cap of {PAYLOAD_BITS_MAX}")
        if payload_bits < 1:
            raise DomainError("payload must hold at least one bit")
        self.ch = ch
        self.payload_bits = payload_bits
        self.n_candidates = 1 << payload_bits
        self.seed = int(seed)
        self.q = np.full(ch.inputs, 1.0 / ch.inputs) if q is None else np.asarray(q, dtype=float)
        self.logp = _log_likelihoods(ch)
        self.coset = ch.inputs == 2 and np.max(np.abs(self.q - 0.5)) < 1e-9
        if self.coset:
            par = np.zeros(self.n_candidates, dtype=np.int8)
            for i in range(1, self.n_candidates):
                par[i] = par[i >> 1] ^ (i & 1)
            self._parity = par
        else:
            self._qcdf = np.cumsum(self.q)
            self._qcdf[-1] = 1.0
        self._slabs: dict[tuple[int, int], tuple] = {}

    def _slab(self, block_id: int, slab_idx: int):
        key = (block_id, slab_idx)
        slab = self._slabs.get(key)
        if slab is None:
            rng = np.random.default_rng(
                np.random.SeedSequence((self.seed, _CODE_STREAM, block_id, slab_idx)))
            if self.coset:
                g = rng.integers(1, self.n_candidates, size=_CODE_SLAB, dtype=np.int64)
                s = rng.integers(0, 2, size=_CODE_SLAB, dtype=np.int8)
                slab = (g, s)
            else:
                u = rng.random((self.n_candidates, _CODE_SLAB))
                slab = (np.searchsorted(self._qcdf, u, side="right")
                        .astype(np.int8, copy=False),)
            if len(self._slabs) > 64:
                self._slabs.pop(next(iter(self._slabs)))
            self._slabs[key] = slab
        return slab

    def candidates_at(self, block_id: int, pos: int) -> np.ndarray:
        """Letters of every candidate codeword at one position."""
        slab = self._slab(block_id, pos // _CODE_SLAB)
        off = pos % _CODE_SLAB
        if self.coset:
            g, s = slab
            idx = np.arange(self.n_candidates, dtype=np.int64) & g[off]
            return (self._parity[idx] ^ s[off]).astype(np.int64, copy=False)
        return slab[0][:, off].astype(np.int64, copy=False)

    def candidates_range(self, block_id: int, start: int, count: int) -> np.ndarray:
        """Letters of every candidate over positions [start, start+count)."""
        out = np.empty((self.n_candidates, count), dtype=np.int64)
        pos = start
        col = 0
        while col < count:
            slab = self._slab(block_id, pos // _CODE_SLAB)
            off = pos % _CODE_SLAB
            take = min(_CODE_SLAB - off, count - col)
            if self.coset:
                g, s = slab
                idx = np.arange(self.n_candidates, dtype=np.int64)[:, None] & g[off:off + take]
                out[:, col:col + take] = self._parity[idx] ^ s[off:off + take]
            else:
                out[:, col:col + take] = slab[0][:, off:off + take]
            pos += take
            col += take
        return out

    def symbol(self, block_id: int, pos: int, payload: int) -> int:
        """The transmitted letter of one candidate at one position."""
        slab = self._slab(block_id, pos // _CODE_SLAB)
        off = pos % _CODE_SLAB
        if self.coset:
            g, s = slab
            return int(self._parity[payload & g[off]] ^ s[off])
        return int(slab[0][payload, off])


def _block_scores(codebook: BlockCodebook, block_id: int, outputs: np.ndarray) -> np.ndarray:
    y = np.asarray(outputs, dtype=np.int64)
    scores = np.zeros(codebook.n_candidates)
    pos = 0
    while pos < len(y):
        take = min(_CODE_SLAB, len(y) - pos)
        letters = codebook.candidates_range(block_id, pos, take)
        scores += codebook.logp[letters, y[pos:pos + take]].sum(axis=1)
        pos += take
    return scores


def list_decode_block(codebook: BlockCodebook, block_id: int, outputs,
                      list_size: int) -> np.ndarray:
    """Top candidates by exact log-likelihood, ties broken by ascending index."""
    if codebook.payload_bits > PAYLOAD_BITS_MAX:
        raise PayloadTooLargeError(
            f"payload of {codebook.payload_bits} bits exceeds the cap of {PAYLOAD_BITS_MAX}")
    if list_size < 1:
        raise DomainError(f"list size must be >= 1, got {list_size}")
    scores = _block_scores(codebook, block_id, outputs)
    k = min(int(list_size), codebook.n_candidates)
    return np.argsort(-scores, kind="stable")[:k]


def _ranked(scores: np.ndarray, k: int) -> np.ndarray:
    return np.argsort(-scores, kind="stable")[:k]

def _confirmable(scores: np.ndarray, truth: int, list_len: int) -> bool:
    # Strict separation: the truth and everything scoring at least as high
    # must all fit in the list, so the confirmed index is unambiguous under
    # any tie ordering. An all-tied chunk (e.g. all-erased outputs) denies.
    return int(np.count_nonzero(scores >= scores[truth])) <= list_len


def _list_index(scores: np.ndarray, truth: int) -> int:
    s = scores[truth]
    return int(np.count_nonzero(scores > s) + np.count_nonzero(scores[:truth] == s))


# -- flow-control tree code --------------------------------------------------

def _hash_uniforms(digest: bytes, chunk_index: int, count: int) -> np.ndarray:
    blocks = []
    need = count * 8
    for b in range((need + 63) // 64):
        h = blake2b(digest + chunk_index.to_bytes(8, "little")
                    + b.to_bytes(2, "little"), digest_size=64).digest()
        blocks.append(np.frombuffer(h, dtype=np.uint64))
    words = np.concatenate(blocks)[:count]
    return words.astype(np.float64) / 2.0 ** 64


_FLOW_MEMORY_MIN = 8


class FlowCode:
    """Tree code over the flow slots, hashed from the recent message history.

    The letters of chunk k are derived from a seeded hash of the chunk
    index and the last ``memory`` messages ending at chunk k. Histories
    that first differ at chunk k therefore get independent letters for
    ``memory`` consecutive chunks -- in particular for every hypothesis
    pair a window decoder of depth at most ``memory`` can compare -- while
    a difference older than ``memory`` chunks ages out, so a settled
    decoding error desynchronizes the stream only transiently instead of
    permanently.
    """

    def __init__(self, ch: Channel, theta: int, seed: int, q=None,
                 memory: int = _FLOW_MEMORY_MIN):
        if theta < 1:
            raise DomainError(f"theta must be >= 1, got {theta}")
        if memory < 1:
            raise DomainError(f"memory must be >= 1, got {memory}")
        self.theta = theta
        self.memory = int(memory)
        self.q = np.full(ch.inputs, 1.0 / ch.inputs) if q is None else np.asarray(q, dtype=float)
        self._qcdf = np.cumsum(self.q)
        self._qcdf[-1] = 1.0
        self._root = blake2b(_FLOW_SALT + (int(seed) & (2 ** 64 - 1)).to_bytes(8, "little"),
                             digest_size=16).digest()

    def root_digest(self) -> bytes:
        return self._root

    def extend(self, digest: bytes, message: FlowMessage) -> bytes:
        return blake2b(digest + message.token(), digest_size=16).digest()

    def context_digest(self, history) -> bytes:
        """Digest of the trailing ``memory`` messages of a history."""
        digest = self._root
        for message in tuple(history)[-self.memory:]:
            digest = self.extend(digest, message)
        return digest

    def letters(self, digest: bytes, chunk_index: int) -> np.ndarray:
        u = _hash_uniforms(digest, int(chunk_index), self.theta)
        return np.searchsorted(self._qcdf, u, side="right").astype(np.int64)


def flow_encode(ch: Channel, history, chunk_index: int, theta: int, seed: int,
                q=None) -> np.ndarray:
    """Flow letters for one chunk given the message history through that chunk."""
    if chunk_index < 0 or chunk_index >= len(history):
        raise DomainError(f"history of length {len(history)} has no chunk {chunk_index}")
    code = FlowCode(ch, theta, seed, q)
    digest = code.context_digest(history[:chunk_index + 1])
    return code.letters(digest, chunk_index)


class FlowDecoder:
    """Sliding-window exact-ML decoder of the tree-coded message stream.

    Each step appends one chunk of flow outputs. Once the window is full,
    appending first freezes the oldest chunk's message under the current
    best path (decision feedback); the exhaustive search then covers only
    the trailing window. Ties prefer the enumeration order deny,
    confirm(0), confirm(1), ...
    """

    def __init__(self, code: FlowCode, ch: Channel, l: int, window: int):
        if window * (l + 1) > FLOW_HYPOTHESIS_BITS_MAX:
            raise WindowTooLargeError(
                f"window of {window} chunks at l={l} exceeds "
                f"{FLOW_HYPOTHESIS_BITS_MAX} hypothesis bits")
        if window > code.memory:
            raise WindowTooLargeError(
                f"window of {window} chunks exceeds the code memory of {code.memory}")
        self.code = code
        self.logp = _log_likelihoods(ch)
        self.window = window
        self.alphabet = (FlowMessage(False),) + tuple(FlowMessage(True, j) for j in range(1 << l))
        self.frozen: list[FlowMessage] = []
        self.pending: list[np.ndarray] = []
        self.base_chunk = 0
        self._last_best: list[FlowMessage] = []

    def _search(self) -> list[FlowMessage]:
        # Exhaustive depth-first scan of the window hypotheses. The hash
        # context of each hypothesis chunk is the trailing frozen messages
        # plus the hypothesis prefix, so every candidate's letters are
        # recomputed from its own history suffix.
        context = tuple(self.frozen[-(self.code.memory - 1):]) if self.code.memory > 1 else ()
        best_score = -math.inf
        best_path: list[FlowMessage] = []
        stack = [(0.0, ())]
        while stack:
            score, path = stack.pop()
            depth = len(path)
            if depth == len(self.pending):
                if score > best_score:
                    best_score = score
                    best_path = list(path)
                continue
            y = self.pending[depth]
            # Push in reverse so the canonical order is explored first and
            # strict improvement keeps the enumeration-least tie winner.
            for message in reversed(self.alphabet):
                extended = path + (message,)
                digest = self.code.context_digest(context + extended)
                letters = self.code.letters(digest, self.base_chunk + depth)
                s = float(self.logp[letters, y].sum())
                stack.append((score + s, extended))
        return best_path

    def step(self, outputs) -> tuple[list[FlowMessage], list[FlowMessage]]:
        """Consume one chunk of flow outputs.

        Returns (newly frozen messages, current best estimate for the
        pending window). The full history estimate is ``frozen`` plus the
        window estimate.
        """
        newly: list[FlowMessage] = []
        if len(self.pending) == self.window:
            head = self._last_best[0]
            self.frozen.append(head)
            newly.append(head)
            self.pending.pop(0)
            self.base_chunk += 1
        self.pending.append(np.asarray(outputs, dtype=np.int64))
        self._last_best = self._search()
        return newly, list(self._last_best)


def flow_decode(ch: Channel, chunk_outputs, theta: int, l: int,
                redecode_window: int, seed: int, q=None) -> list[FlowMessage]:
    """Decode a whole flow-output stream; returns the full message estimate."""
    code = FlowCode(ch, theta, seed, q,
                    memory=max(_FLOW_MEMORY_MIN, int(redecode_window)))
    dec = FlowDecoder(code, ch, l, redecode_window)
    for outputs in chunk_outputs:
        dec.step(outputs)
    return dec.frozen + dec._last_best


# -- the data-stream parse ---------------------------------------------------

class _ParseState:
    """Decoder-side reconstruction of the encoder's block timeline."""

    __slots__ = ("next_block", "active", "pos", "scores", "values", "spurious")

    def __init__(self, n_candidates: int):
        self.next_block = 0
        self.active = False
        self.pos = 0
        self.scores = np.zeros(n_candidates)
        self.values: list[int] = []
        self.spurious = 0

    def copy(self) -> "_ParseState":
        twin = _ParseState(len(self.scores))
        twin.next_block = self.next_block
        twin.active = self.active
        twin.pos = self.pos
        twin.scores = self.scores.copy()
        twin.values = list(self.values)
        twin.spurious = self.spurious
        return twin


def _walk_chunk(state: _ParseState, cfg: SchemeConfig, codebook: BlockCodebook,
                chunk_index: int, message: FlowMessage, data_outputs: np.ndarray,
                list_len: int) -> None:
    """Advance a parse by one chunk under one (estimated) flow message."""
    start_use = chunk_index * cfg.c + 1
    if not state.active and (_arrival_count(start_use, cfg.rate_bits)
                             >= (state.next_block + 1) * cfg.payload_bits):
        state.active = True
        state.pos = 0
        state.scores = np.zeros(codebook.n_candidates)
    span = cfg.data_uses_per_chunk
    if state.active and span > 0:
        letters = codebook.candidates_range(state.next_block, state.pos, span)
        state.scores += codebook.logp[letters, data_outputs].sum(axis=1)
        state.pos += span
    if message.confirm:
        if not state.active:
            # A confirm with no block in flight is impossible under this
            # parse; ignore it and remember that the estimate disagreed.
            state.spurious += 1
            return
        order = _ranked(state.scores, list_len)
        state.values.append(int(order[min(message.index, len(order) - 1)]))
        state.active = False
        state.next_block += 1


def parse_history(cfg: SchemeConfig, codebook: BlockCodebook, messages,
                  data_outputs: np.ndarray) -> _ParseState:
    """Parse the data stream from scratch under a punctuation estimate.

    ``data_outputs`` holds one row of c - theta outputs per chunk. The
    returned state carries the decoded block values in confirmation order;
    feeding a corrected estimate re-derives the block boundaries, which is
    exactly the decoder's recovery path after a punctuation error.
    """
    list_len = min(1 << cfg.l, 1 << cfg.payload_bits)
    state = _ParseState(1 << cfg.payload_bits)
    for k, message in enumerate(messages):
        _walk_chunk(state, cfg, codebook, k, message, data_outputs[k], list_len)
    return state


# -- the fortified scheme ----------------------------------------------------

class FortifiedEncoder:
    """Data encoder whose confirm/deny link is ideal: checked every use.

    The encoder simulates the decoder from the fed-back outputs, so it
    knows exactly when the decoder could confirm; the confirm (with its
    list index) is then delivered error-free.
    """

    def __init__(self, cfg: SchemeConfig, codebook: BlockCodebook,
                 block_values: np.ndarray):
        self.cfg = cfg
        self.codebook = codebook
        self.block_values = block_values
        self.list_len = min(1 << cfg.l, codebook.n_candidates)
        self.next_block = 0
        self.active = False
        self.pos = 0
        self.scores = np.zeros(codebook.n_candidates)
        self.delivery_uses: list[int] = []

    def queue_bits(self, t: int) -> int:
        """Bits arrived but not yet confirmed, as of use t."""
        return _arrival_count(t, self.cfg.rate_bits) - self.cfg.payload_bits * self.next_block

    def next_input(self, t: int) -> int:
        if not self.active and self.queue_bits(t) >= self.cfg.payload_bits:
            self.active = True
            self.pos = 0
            self.scores = np.zeros(self.codebook.n_candidates)
        if not self.active:
            return IDLE_LETTER
        value = int(self.block_values[self.next_block])
        return self.codebook.symbol(self.next_block, self.pos, value)

    def observe(self, t: int, y: int) -> FlowMessage:
        if not self.active:
            return FlowMessage(False)
        letters = self.codebook.candidates_at(self.next_block, self.pos)
        self.scores += self.codebook.logp[letters, y]
        self.pos += 1
        truth = int(self.block_values[self.next_block])
        if _confirmable(self.scores, truth, self.list_len):
            index = _list_index(self.scores, truth)
            self.delivery_uses.append(t)
            self.active = False
            self.next_block += 1
            return FlowMessage(True, index)
        return FlowMessage(False)


_SERVE_STRIDE_MIN = 8
_SERVE_STRIDE_MAX = 512


def _serve_blocks(cfg: SchemeConfig, codebook: BlockCodebook, values: np.ndarray,
                  noise: _NoiseSource, horizon: int) -> list[int]:
    """Block delivery uses under the ideal flow link, block by block.

    Processes each in-flight block in vectorized strides; step-for-step
    equivalent to driving FortifiedEncoder one use at a time (the idle
    uses between blocks touch no state, and the noise uniforms are
    indexed by absolute time either way).
    """
    payload = cfg.payload_bits
    list_len = min(1 << cfg.l, codebook.n_candidates)
    deliveries: list[int] = []
    t_free = 1
    block = 0
    while True:
        t_start = max(_arrival_time((block + 1) * payload, cfg.rate_bits), t_free)
        if t_start > horizon:
            break
        value = int(values[block])
        scores = np.zeros(codebook.n_candidates)
        pos = 0
        t = t_start
        stride = _SERVE_STRIDE_MIN
        delivered = False
        while t <= horizon:
            take = min(stride, horizon - t + 1)
            stride = min(stride * 4, _SERVE_STRIDE_MAX)
            letters = codebook.candidates_range(block, pos, take)
            y = noise.emit_batch(letters[value], t)
            cum = scores[:, None] + np.cumsum(codebook.logp[letters, y], axis=1)
            counts = np.count_nonzero(cum >= cum[value][None, :], axis=0)
            ok = np.flatnonzero(counts <= list_len)
            if ok.size:
                j = int(ok[0])
                deliveries.append(t + j)
                t_free = t + j + 1
                delivered = True
                break
            scores = cum[:, -1]
            pos += take
            t += take
        if not delivered:
            break
        block += 1
    return deliveries


def _delay_grid(delays) -> tuple[int, ...]:
    grid = tuple(sorted(set(int(d) for d in delays)))
    if not grid:
        raise DomainError("need at least one delay")
    if grid[0] < 0:
        raise DomainError("delays must be nonnegative")
    return grid


def _assemble_table(dgrid, weights, trials):
    errors, half_widths = [], []
    for d in dgrid:
        p = weights[d] / trials
        errors.append(p)
        half_widths.append(Z95 * math.sqrt(max(p * (1.0 - p), 0.0) / trials))
    return tuple(errors), (trials,) * len(dgrid), tuple(half_widths)


def fortified_run(cfg: SchemeConfig, ch: Channel, horizon: int, delays,
                  seed: int) -> SchemeRunResult:
    """Closed-loop run of the scheme with an ideal flow link.

    Control messages are never corrupted, so confirmed blocks are always
    correct and the only error events are deadlines missed while a block
    is still in flight (weight 1/2 each, as in the queue simulator).
    """
    if cfg.theta != 0:
        raise DomainError("fortified mode requires theta == 0")
    dgrid = _delay_grid(delays)
    horizon = int(horizon)
    dmax = dgrid[-1]
    if horizon < 10 * max(dmax, 1):
        raise HorizonTooShortError(
            f"horizon {horizon} too short for max delay {dmax}; need >= {10 * max(dmax, 1)}")
    n_bits = _arrival_count(horizon, cfg.rate_bits)
    n_blocks = n_bits // cfg.payload_bits + 1
    codebook = BlockCodebook(ch, cfg.payload_bits, cfg.seed, q=_code_input_dist(ch))
    values = _block_values(cfg, n_blocks)
    noise = _NoiseSource(ch, horizon, seed)
    delivery_uses = _serve_blocks(cfg, codebook, values, noise, horizon)

    deliveries = np.full(n_blocks, np.inf)
    deliveries[:len(delivery_uses)] = delivery_uses
    bit_index = np.arange(1, n_bits + 1)
    arrivals = np.ceil(bit_index / cfg.rate_bits - _ARRIVAL_EPS).astype(np.int64)
    delivered_at = deliveries[(bit_index - 1) // cfg.payload_bits]
    eligible = (arrivals > dmax) & (arrivals <= horizon - dmax)
    trials = int(np.count_nonzero(eligible))
    if trials == 0:
        raise HorizonTooShortError("no bits survive the burn-in exclusion")
    arr = arrivals[eligible]
    dlv = delivered_at[eligible]
    weights = {d: MISS_WEIGHT * float(np.count_nonzero(dlv > arr + d)) for d in dgrid}
    errors, trials_t, half_widths = _assemble_table(dgrid, weights, trials)
    missed = sum(weights.values())
    return SchemeRunResult(dgrid, errors, trials_t, half_widths,
                           blocks_confirmed=len(delivery_uses),
                           missed_bit_weight=missed)


# -- the synthesized scheme --------------------------------------------------

def synthesized_run(cfg: SchemeConfig, ch: Channel, horizon: int, delays,
                    seed: int, noiseless_flow: bool = False) -> SchemeRunResult:
    """Closed-loop run with flow control on the shared channel.

    Each chunk sends c - theta data uses followed by theta tree-coded flow
    uses. The decoder ML-decodes the flow stream over a sliding window,
    re-parses the data stream under the resulting punctuation estimate at
    every chunk boundary, and resolves each bit's deadline at the last
    boundary not after it (unresolved bits count 1/2, wrongly decoded bits
    count 1).

    With ``noiseless_flow`` the reserved flow slots are pointless, and the
    idealized scheme is exactly the fortified one on the same config with
    theta = 0; the call delegates accordingly.
    """
    if noiseless_flow:
        return synthesized_noiseless_reference(cfg, ch, horizon, delays, seed)
    if cfg.theta < 1:
        raise DomainError("synthesized mode requires theta >= 1")
    dgrid = _delay_grid(delays)
    dmax = dgrid[-1]
    chunks = int(horizon) // cfg.c
    span = chunks * cfg.c
    if span < 10 * max(dmax, 1) or chunks < cfg.redecode_window + 1:
        raise HorizonTooShortError(
            f"horizon {horizon} too short for max delay {dmax} at chunk length {cfg.c}")

    payload = cfg.payload_bits
    list_len = min(1 << cfg.l, 1 << payload)
    n_bits = _arrival_count(span, cfg.rate_bits)
    n_blocks = n_bits // payload + 1
    data_len = cfg.data_uses_per_chunk
    q = _code_input_dist(ch)
    codebook = BlockCodebook(ch, payload, cfg.seed, q=q)
    values = _block_values(cfg, n_blocks)
    # Memory equal to the window keeps every window hypothesis pair fully
    # separated while letting a rare settled error age out of the hash
    # context as fast as possible (resync after window - 1 clean commits).
    flow_code = FlowCode(ch, cfg.theta, cfg.seed, q=q, memory=cfg.redecode_window)
    flow_dec = FlowDecoder(flow_code, ch, cfg.l, cfg.redecode_window)
    noise = _NoiseSource(ch, span, seed)

    encoder = _ParseState(codebook.n_candidates)  # truth-side block timeline
    true_messages: list[FlowMessage] = []
    settled = _ParseState(codebook.n_candidates)
    settled_chunks = 0
    punctuation_errors = 0
    data_block_errors = 0

    bit_index = np.arange(1, n_bits + 1)
    arrivals = np.ceil(bit_index / cfg.rate_bits - _ARRIVAL_EPS).astype(np.int64)
    blocks_of_bits = (bit_index - 1) // payload
    offsets = (bit_index - 1) % payload
    truth_bits = (values[blocks_of_bits] >> (payload - 1 - offsets)) & 1
    eligible = (arrivals > dmax) & (arrivals <= span - dmax)
    trials = int(np.count_nonzero(eligible))
    if trials == 0:
        raise HorizonTooShortError("no bits survive the burn-in exclusion")
    wrong_weight = {d: 0.0 for d in dgrid}
    miss_weight = {d: 0.0 for d in dgrid}

    data_rows = np.empty((chunks, data_len), dtype=np.int64)

    for k in range(chunks):
        base = k * cfg.c
        # Data portion: advance the encoder's (true) parse state manually so
        # we can transmit the active block's codeword letter by letter.
        start_use = base + 1
        if not encoder.active and (_arrival_count(start_use, cfg.rate_bits)
                                   >= (encoder.next_block + 1) * payload):
            encoder.active = True
            encoder.pos = 0
            encoder.scores = np.zeros(codebook.n_candidates)
        value = int(values[encoder.next_block])
        if encoder.active and data_len > 0:
            letters = codebook.candidates_range(encoder.next_block, encoder.pos, data_len)
            row = noise.emit_batch(letters[value], base + 1)
            encoder.scores += codebook.logp[letters, row].sum(axis=1)
            encoder.pos += data_len
        else:
            row = noise.emit_batch(np.full(data_len, IDLE_LETTER, dtype=np.int64), base + 1)
        data_rows[k] = row
        if encoder.active and _confirmable(encoder.scores, value, list_len):
            message = FlowMessage(True, _list_index(encoder.scores, value))
            encoder.values.append(value)
            encoder.active = False
            encoder.next_block += 1
        else:
            message = FlowMessage(False)
        true_messages.append(message)
        # Flow portion, tree-coded over the recent true message history.
        flow_letters = flow_code.letters(flow_code.context_digest(true_messages), k)
        flow_out = noise.emit_batch(flow_letters, base + data_len + 1)

        newly_frozen, window_best = flow_dec.step(flow_out)
        for frozen_msg in newly_frozen:
            if frozen_msg != true_messages[settled_chunks]:
                punctuation_errors += 1
            before = len(settled.values)
            _walk_chunk(settled, cfg, codebook, settled_chunks, frozen_msg,
                        data_rows[settled_chunks], list_len)
            if len(settled.values) > before:
                slot = len(settled.values) - 1
                if slot >= len(encoder.values) or settled.values[-1] != encoder.values[slot]:
                    data_block_errors += 1
            settled_chunks += 1
        # Provisional parse: settled prefix plus the current window estimate.
        provisional = settled.copy()
        for j, message_hat in enumerate(window_best):
            _walk_chunk(provisional, cfg, codebook, settled_chunks + j, message_hat,
                        data_rows[settled_chunks + j], list_len)
        decoded = provisional.values
        # Emit every (bit, delay) whose last boundary at or before its
        # deadline is this one.
        boundary = (k + 1) * cfg.c
        for d in dgrid:
            lo = np.searchsorted(arrivals, boundary - d, side="left")
            hi = np.searchsorted(arrivals, boundary + cfg.c - d, side="left")
            for i in range(lo, hi):
                if not eligible[i]:
                    continue
                b = blocks_of_bits[i]
                if b >= len(decoded):
                    miss_weight[d] += MISS_WEIGHT
                elif (decoded[b] >> (payload - 1 - offsets[i])) & 1 != truth_bits[i]:
                    wrong_weight[d] += 1.0

    totals = {d: wrong_weight[d] + miss_weight[d] for d in dgrid}
    errors, trials_t, half_widths = _assemble_table(dgrid, totals, trials)
    return SchemeRunResult(dgrid, errors, trials_t, half_widths,
                           blocks_confirmed=len(encoder.values),
                           punctuation_chunk_errors=punctuation_errors,
                           data_block_errors=data_block_errors,
                           spurious_confirms=settled.spurious,
                           wrong_bit_weight=sum(wrong_weight.values()),
                           missed_bit_weight=sum(miss_weight.values()))


def synthesized_noiseless_reference(cfg: SchemeConfig, ch: Channel, horizon: int,
                                    delays, seed: int) -> SchemeRunResult:
    """The noiseless-flow idealization of a synthesized config.

    With an error-free flow link the theta reserved slots carry no risk
    and no information the fortified model does not already deliver, so
    the reference behavior is the fortified run of the same config with
    theta returned to the data stream.
    """
    return fortified_run(replace(cfg, theta=0), ch, horizon, delays, seed)
