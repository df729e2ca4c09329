"""Adaptive order-0 arithmetic coding kernels (numba-jitted).

A single 32-bit binary-fraction coder drives two kinds of frequency models:

* a dynamic symbol table over the working range [-32768, 32767] whose slot 0
  is an ESCAPE symbol, and
* eight positional byte models used to transmit escaped values (zigzagged
  64-bit, little-endian byte at a time).

Escaped in-range symbols are inserted into the table (count 1) so repeats are
cheap; out-of-range symbols escape on every occurrence. Counts grow by INC
per use and every model is halved (floored at 1) once its total exceeds
2**16, which keeps the coder adaptive and the range arithmetic inside int64.
The decoder replays the exact same model updates, so both sides stay in lock
step by construction.
"""

from __future__ import annotations

import numpy as np
from numba import njit

STATE_BITS = 32
FULL = 1 << STATE_BITS
HALF = FULL >> 1
QUARTER = FULL >> 2
MASK = FULL - 1
LOW_MASK = MASK >> 1

TABLE_CAP = 65537  # escape slot + every in-range symbol
WMIN = -32768
WMAX = 32767
INC = 32
HALVE_LIMIT = 1 << 16


@njit(cache=True)
def _fen_update(tree, i, delta):
    n = tree.shape[0] - 1
    i += 1
    while i <= n:
        tree[i] += delta
        i += i & (-i)


@njit(cache=True)
def _fen_prefix(tree, i):
    # sum of counts[0..i)
    s = 0
    while i > 0:
        s += tree[i]
        i -= i & (-i)
    return s


@njit(cache=True)
def _fen_find(tree, target):
    # largest slot index s with prefix(s) <= target; also returns prefix(s)
    n = tree.shape[0] - 1
    pos = 0
    rem = target
    bit = 1
    while (bit << 1) <= n:
        bit <<= 1
    while bit != 0:
        nxt = pos + bit
        if nxt <= n and tree[nxt] <= rem:
            pos = nxt
            rem -= tree[nxt]
        bit >>= 1
    return pos, target - rem


@njit(cache=True)
def _fen_rebuild(tree, counts, size):
    n = tree.shape[0] - 1
    for i in range(n + 1):
        tree[i] = 0
    for i in range(size):
        tree[i + 1] = counts[i]
    for i in range(1, n + 1):
        j = i + (i & (-i))
        if j <= n:
            tree[j] += tree[i]


@njit(cache=True)
def _halve(tree, counts, size):
    total = 0
    for i in range(size):
        c = counts[i] >> 1
        if c < 1:
            c = 1
        counts[i] = c
        total += c
    _fen_rebuild(tree, counts, size)
    return total


@njit(cache=True)
def _enc_step(st, out, lo_c, hi_c, total):
    """Narrow [low, high] to the slot's sub-range and renormalize.

    st = [low, high, pending, cur_byte, nbits, opos]; returns -1 on buffer
    overflow, else 0.
    """
    low = st[0]
    high = st[1]
    pending = st[2]
    cur = st[3]
    nbits = st[4]
    opos = st[5]
    cap = out.shape[0]

    span = high - low + 1
    high = low + (span * hi_c) // total - 1
    low = low + (span * lo_c) // total
    while True:
        if ((low ^ high) & HALF) == 0:
            bit = low >> (STATE_BITS - 1)
            cur = (cur << 1) | bit
            nbits += 1
            if nbits == 8:
                if opos >= cap:
                    return -1
                out[opos] = cur
                opos += 1
                cur = 0
                nbits = 0
            inv = bit ^ 1
            while pending > 0:
                cur = (cur << 1) | inv
                nbits += 1
                if nbits == 8:
                    if opos >= cap:
                        return -1
                    out[opos] = cur
                    opos += 1
                    cur = 0
                    nbits = 0
                pending -= 1
            low = (low << 1) & MASK
            high = ((high << 1) & MASK) | 1
        elif (low & ~high & QUARTER) != 0:
            pending += 1
            low = (low << 1) & LOW_MASK
            high = ((high << 1) & LOW_MASK) | HALF | 1
        else:
            break
    st[0] = low
    st[1] = high
    st[2] = pending
    st[3] = cur
    st[4] = nbits
    st[5] = opos
    return 0


@njit(cache=True)
def _enc_finish(st, out):
    """Emit the quadrant-disambiguating bit and flush the partial byte."""
    low = st[0]
    pending = st[2] + 1
    cur = st[3]
    nbits = st[4]
    opos = st[5]
    cap = out.shape[0]

    bit = 0 if low < QUARTER else 1
    cur = (cur << 1) | bit
    nbits += 1
    if nbits == 8:
        if opos >= cap:
            return -1
        out[opos] = cur
        opos += 1
        cur = 0
        nbits = 0
    inv = bit ^ 1
    while pending > 0:
        cur = (cur << 1) | inv
        nbits += 1
        if nbits == 8:
            if opos >= cap:
                return -1
            out[opos] = cur
            opos += 1
            cur = 0
            nbits = 0
        pending -= 1
    if nbits > 0:
        if opos >= cap:
            return -1
        out[opos] = (cur << (8 - nbits)) & 0xFF
        opos += 1
    st[5] = opos
    return 0


@njit(cache=True)
def _encode_core(syms, out):
    tree = np.zeros(TABLE_CAP + 1, dtype=np.int64)
    counts = np.zeros(TABLE_CAP, dtype=np.int64)
    sym_of = np.zeros(TABLE_CAP, dtype=np.int64)
    slot_of = np.full(65536, -1, dtype=np.int32)
    counts[0] = 1  # escape
    _fen_update(tree, 0, 1)
    size = 1
    total = 1

    bcounts = np.ones((8, 256), dtype=np.int64)
    btrees = np.zeros((8, 257), dtype=np.int64)
    btotals = np.full(8, 256, dtype=np.int64)
    for p in range(8):
        _fen_rebuild(btrees[p], bcounts[p], 256)

    st = np.zeros(6, dtype=np.int64)
    st[1] = MASK  # high

    for si in range(syms.shape[0]):
        k = syms[si]
        inrange = WMIN <= k <= WMAX
        slot = slot_of[k - WMIN] if inrange else -1

        if slot >= 0:
            lo_c = _fen_prefix(tree, slot)
            if _enc_step(st, out, lo_c, lo_c + counts[slot], total) < 0:
                return -1
            counts[slot] += INC
            _fen_update(tree, slot, INC)
            total += INC
        else:
            if _enc_step(st, out, 0, counts[0], total) < 0:
                return -1
            counts[0] += INC
            _fen_update(tree, 0, INC)
            total += INC
            z = (k << 1) ^ (k >> 63)  # zigzag
            for p in range(8):
                bb = (z >> (8 * p)) & 0xFF
                btree = btrees[p]
                blo = _fen_prefix(btree, bb)
                if _enc_step(st, out, blo, blo + bcounts[p, bb], btotals[p]) < 0:
                    return -1
                bcounts[p, bb] += INC
                _fen_update(btree, bb, INC)
                btotals[p] += INC
                if btotals[p] > HALVE_LIMIT:
                    btotals[p] = _halve(btree, bcounts[p], 256)
            if inrange and size < TABLE_CAP:
                sym_of[size] = k
                slot_of[k - WMIN] = size
                counts[size] = 1
                _fen_update(tree, size, 1)
                size += 1
                total += 1
        if total > HALVE_LIMIT:
            total = _halve(tree, counts, size)

    if _enc_finish(st, out) < 0:
        return -1
    return st[5]


@njit(cache=True)
def _read_bit(payload, bitpos):
    byte_i = bitpos >> 3
    if byte_i < payload.shape[0]:
        return (payload[byte_i] >> (7 - (bitpos & 7))) & 1
    return 0  # past-the-end bits read as zero


@njit(cache=True)
def _dec_step(st, payload, lo_c, hi_c, total):
    """Mirror of _enc_step; st = [low, high, code, bitpos]."""
    low = st[0]
    high = st[1]
    code = st[2]
    bitpos = st[3]

    span = high - low + 1
    high = low + (span * hi_c) // total - 1
    low = low + (span * lo_c) // total
    while True:
        if ((low ^ high) & HALF) == 0:
            code = ((code << 1) & MASK) | _read_bit(payload, bitpos)
            bitpos += 1
            low = (low << 1) & MASK
            high = ((high << 1) & MASK) | 1
        elif (low & ~high & QUARTER) != 0:
            code = (code & HALF) | ((code << 1) & LOW_MASK) | _read_bit(payload, bitpos)
            bitpos += 1
            low = (low << 1) & LOW_MASK
            high = ((high << 1) & LOW_MASK) | HALF | 1
        else:
            break
    st[0] = low
    st[1] = high
    st[2] = code
    st[3] = bitpos


@njit(cache=True)
def _decode_core(payload, out):
    tree = np.zeros(TABLE_CAP + 1, dtype=np.int64)
    counts = np.zeros(TABLE_CAP, dtype=np.int64)
    sym_of = np.zeros(TABLE_CAP, dtype=np.int64)
    counts[0] = 1
    _fen_update(tree, 0, 1)
    size = 1
    total = 1

    bcounts = np.ones((8, 256), dtype=np.int64)
    btrees = np.zeros((8, 257), dtype=np.int64)
    btotals = np.full(8, 256, dtype=np.int64)
    for p in range(8):
        _fen_rebuild(btrees[p], bcounts[p], 256)

    st = np.zeros(4, dtype=np.int64)
    st[1] = MASK  # high
    code = 0
    for _ in range(STATE_BITS):
        code = (code << 1) | _read_bit(payload, st[3])
        st[3] += 1
    st[2] = code

    for si in range(out.shape[0]):
        span = st[1] - st[0] + 1
        val = ((st[2] - st[0] + 1) * total - 1) // span
        if val < 0 or val >= total:
            return -1  # corrupt stream
        slot, lo_c = _fen_find(tree, val)
        _dec_step(st, payload, lo_c, lo_c + counts[slot], total)

        if slot != 0:
            k = sym_of[slot]
            counts[slot] += INC
            _fen_update(tree, slot, INC)
            total += INC
        else:
            counts[0] += INC
            _fen_update(tree, 0, INC)
            total += INC
            z = 0
            for p in range(8):
                btree = btrees[p]
                bspan = st[1] - st[0] + 1
                bval = ((st[2] - st[0] + 1) * btotals[p] - 1) // bspan
                if bval < 0 or bval >= btotals[p]:
                    return -1
                bb, blo = _fen_find(btree, bval)
                _dec_step(st, payload, blo, blo + bcounts[p, bb], btotals[p])
                bcounts[p, bb] += INC
                _fen_update(btree, bb, INC)
                btotals[p] += INC
                if btotals[p] > HALVE_LIMIT:
                    btotals[p] = _halve(btree, bcounts[p], 256)
                z |= bb << (8 * p)
            k = ((z >> 1) & 0x7FFFFFFFFFFFFFFF) ^ -(z & 1)  # un-zigzag
            if WMIN <= k <= WMAX and size < TABLE_CAP:
                sym_of[size] = k
                counts[size] = 1
                _fen_update(tree, size, 1)
                size += 1
                total += 1
        if total > HALVE_LIMIT:
            total = _halve(tree, counts, size)
        out[si] = k
    return 0


def encode_adaptive(symbols: np.ndarray) -> bytes | None:
    """Run the adaptive coder; None when the buffer bound is exceeded."""
    syms = np.ascontiguousarray(symbols, dtype=np.int64)
    cap = int(syms.shape[0]) * 24 + 65536
    out = np.empty(cap, dtype=np.uint8)
    n = _encode_core(syms, out)
    if n < 0:
        return None
    return bytes(out[: int(n)].tobytes())


def decode_adaptive(payload: bytes, n_symbols: int) -> np.ndarray | None:
    """Inverse of encode_adaptive; None when the stream is inconsistent."""
    buf = np.frombuffer(payload, dtype=np.uint8)
    out = np.empty(int(n_symbols), dtype=np.int64)
    if _decode_core(buf, out) < 0:
        return None
    return out
