"""Slot array for a quotient filter with in-place fingerprint extension.

Layout.  The table is a circular array of ``2**q`` slots.  Every slot
carries an ``r``-bit payload (widened by ``value_bits`` when the caller
stores a per-fingerprint flag) plus three metadata bits:

* ``occupied`` marks a canonical slot whose quotient has at least one
  stored fingerprint.  It is indexed by quotient and never moves.
* ``runend`` on a remainder slot terminates a run.  On an extension-
  flagged slot it marks a counter digit instead; the double duty is safe
  because run termination is only ever tested on remainder slots.
* ``extension`` marks a slot that continues the preceding remainder:
  with runend clear it holds one adaptation chunk, with runend set one
  base-``2**r`` digit of the duplicate count.

Fingerprints with equal quotient form a run, stored contiguously at or
after their canonical slot (Robin Hood displacement, wrapping past the
top of the array).  Inside a run, fingerprints are ordered by remainder;
the group sharing one (quotient, remainder) is a minirun, and a
fingerprint's index inside its minirun is the rank the reverse map keys
off.  New fingerprints append at the end of their minirun, so existing
ranks never change, and extending a fingerprint inserts slots in place,
which is what lets adaptation leave the reverse map untouched.

A slot's duplicate count ``c`` occupies zero extra slots when ``c == 1``
and otherwise the little-endian base-``2**r`` digits of ``c - 1``.

Metadata bit vectors live in uint64 word arrays.  Navigation is cluster
local: scans gather the handful of words covering one cluster into
Python ints and bit-twiddle from there, so nothing pays for the size of
the whole table.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    FilterFullError,
    FormatError,
    NotFoundError,
    StateCorruptionError,
)
from .hashing import MASK64, FilterConfig, HashStream, extension_chunk, split, split_batch
from .snapshot import ByteReader, pack_section

SNAPSHOT_MAGIC = b"AQF1"
SNAPSHOT_VERSION = 1

# magic + version + q + r + seed + occupied slot count = 26 bytes
HEADER_BITS = (4 + 4 + 1 + 1 + 8 + 8) * 8

# load factor ceiling: used slots may not exceed 19/20 of the table
_LOAD_NUM, _LOAD_DEN = 19, 20


@dataclass(frozen=True)
class Fingerprint:
    """Decoded fingerprint: baseline pair, extension chunks, duplicate count."""

    quotient: int
    remainder: int
    ext: tuple[int, ...] = ()
    count: int = 1


def pack_minirun_id(quotient: int, remainder: int, q: int) -> int:
    """Minirun ids carry the remainder above the quotient so that the
    quotient width alone suffices to unpack them."""
    return (remainder << q) | quotient


def unpack_minirun_id(mid: int, q: int) -> tuple[int, int]:
    return mid & ((1 << q) - 1), mid >> q


@dataclass
class SpaceReport:
    total_bits: int
    metadata_bits: int
    remainder_bits: int
    extension_slots: int
    counter_slots: int
    load_factor: float
    bits_per_item: float


def _count_digits(count: int, r: int) -> list[int]:
    """Base-2**r little-endian digits of count-1; empty when count == 1."""
    v = count - 1
    out = []
    while v:
        out.append(v & ((1 << r) - 1))
        v >>= r
    return out


class _Win:
    """Cluster-local window over the metadata bit vectors.

    Gathers bits lazily, anchored at a cluster start, so per-operation
    cost tracks the cluster length rather than the table size.  Reads
    past the gathered region extend it; reads past the cluster hit the
    zero bits of unused slots, which every walk treats as a stop sign.
    For tables smaller than one chunk the window wraps and repeats, which
    valid walks never see because they stop at the first unused slot.
    """

    __slots__ = ("arr", "base", "length", "run", "ext", "occ", "used", "_full")

    _CHUNK = 128

    def __init__(self, arr: "SlotArray", base: int, full: bool = False):
        self.arr = arr
        self.base = base
        self.length = 0
        self.run = 0
        self.ext = 0
        self.occ = 0
        self.used = 0
        self._full = full

    def _grow(self, upto: int):
        arr = self.arr
        while self.length <= upto:
            at = (self.base + self.length) % arr.nslots
            take = self._CHUNK
            self.run |= arr._read_bits(arr.run, at, take) << self.length
            self.ext |= arr._read_bits(arr.ext, at, take) << self.length
            if self._full:
                self.occ |= arr._read_bits(arr.occ, at, take) << self.length
                self.used |= arr._read_bits(arr.used, at, take) << self.length
            self.length += take
            if self.length > 2 * arr.nslots + self._CHUNK:
                raise StateCorruptionError("window walk escaped the table")

    def run_bit(self, i: int) -> int:
        if i >= self.length:
            self._grow(i)
        return (self.run >> i) & 1

    def ext_bit(self, i: int) -> int:
        if i >= self.length:
            self._grow(i)
        return (self.ext >> i) & 1

    def occ_bit(self, i: int) -> int:
        if i >= self.length:
            self._grow(i)
        return (self.occ >> i) & 1

    def used_bit(self, i: int) -> int:
        if i >= self.length:
            self._grow(i)
        return (self.used >> i) & 1


class SlotArray:
    """Physical quotient-filter table; all indices are slot numbers mod 2**q."""

    def __init__(self, cfg: FilterConfig, value_bits: int = 0):
        if value_bits < 0 or cfg.r + value_bits > 63:
            raise ValueError("value_bits out of range")
        self.cfg = cfg
        self.value_bits = value_bits
        self.slot_bits = cfg.r + value_bits
        n = cfg.nslots
        self.nslots = n
        self.nwords = (n + 63) >> 6
        self.occ = np.zeros(self.nwords, dtype=np.uint64)
        self.run = np.zeros(self.nwords, dtype=np.uint64)
        self.ext = np.zeros(self.nwords, dtype=np.uint64)
        self.used = np.zeros(self.nwords, dtype=np.uint64)
        self.slots = np.zeros(n, dtype=np.uint64)
        self.used_count = 0
        self.fp_count = 0
        self.ext_slot_count = 0
        self.ctr_slot_count = 0

    # ------------------------------------------------------------------
    # word-level bit plumbing

    def _get_bit(self, vec: np.ndarray, i: int) -> int:
        return (int(vec[i >> 6]) >> (i & 63)) & 1

    def _set_bit(self, vec: np.ndarray, i: int):
        vec[i >> 6] = int(vec[i >> 6]) | (1 << (i & 63))

    def _clear_bit(self, vec: np.ndarray, i: int):
        vec[i >> 6] = int(vec[i >> 6]) & ~(1 << (i & 63)) & MASK64

    def _read_bits(self, vec: np.ndarray, start: int, length: int) -> int:
        """Bits [start, start+length) circularly; bit k of the result is
        slot start+k.  Bits past the table read as zero via wraparound."""
        n = self.nslots
        out = 0
        got = 0
        pos = start
        while got < length:
            if pos >= n:
                pos -= n
            off = pos & 63
            take = min(length - got, 64 - off, n - pos)
            chunk = (int(vec[pos >> 6]) >> off) & ((1 << take) - 1)
            out |= chunk << got
            got += take
            pos += take
        return out

    def _write_bits(self, vec: np.ndarray, start: int, length: int, value: int):
        n = self.nslots
        pos = start
        put = 0
        while put < length:
            if pos >= n:
                pos -= n
            off = pos & 63
            take = min(length - put, 64 - off, n - pos)
            mask = (1 << take) - 1
            chunk = (value >> put) & mask
            w = pos >> 6
            vec[w] = (int(vec[w]) & ~(mask << off) & MASK64) | (chunk << off)
            put += take
            pos += take

    def _find_first_unused(self, start: int) -> int:
        n = self.nslots
        nw = self.nwords
        tail = n & 63
        w = start >> 6
        off = start & 63
        scanned = 0
        while scanned <= n + 64:
            inv = ~int(self.used[w]) & MASK64
            if tail and w == nw - 1:
                inv &= (1 << tail) - 1
            inv &= ~((1 << off) - 1) & MASK64
            if inv:
                return (w << 6) + ((inv & -inv).bit_length() - 1)
            scanned += 64 - off
            off = 0
            w += 1
            if w == nw:
                w = 0
        raise FilterFullError("no unused slot in the table")

    def _cluster_start(self, pos: int) -> int:
        """First slot of the cluster containing used slot ``pos``."""
        n = self.nslots
        nw = self.nwords
        tail = n & 63
        w = pos >> 6
        limit = pos & 63
        scanned = 0
        while scanned <= n + 64:
            inv = ~int(self.used[w]) & MASK64
            if tail and w == nw - 1:
                inv &= (1 << tail) - 1
            if limit is not None:
                inv &= (1 << limit) - 1
            if inv:
                return ((w << 6) + inv.bit_length()) % n
            scanned += 64
            w -= 1
            if w < 0:
                w = nw - 1
            limit = tail if (tail and w == nw - 1) else None
        raise StateCorruptionError("no cluster boundary found")

    def _shift_payload_right(self, start: int, free: int):
        """Move payloads [start, free) one slot right; ``free`` is unused."""
        s = self.slots
        n = self.nslots
        if free >= start:
            s[start + 1 : free + 1] = s[start:free]
        else:
            s[1 : free + 1] = s[0:free]
            s[0] = s[n - 1]
            s[start + 1 : n] = s[start : n - 1]

    def _open_slot(self, pos: int):
        """Make slot ``pos`` writable, shifting the tail of its cluster
        right by one.  Leaves runend/extension clear at ``pos``."""
        free = self._find_first_unused(pos)
        if free != pos:
            length = (free - pos) % self.nslots
            self._shift_payload_right(pos, free)
            for vec in (self.run, self.ext):
                v = self._read_bits(vec, pos, length)
                self._write_bits(vec, pos, length + 1, v << 1)
        self._set_bit(self.used, free)
        self.used_count += 1

    # ------------------------------------------------------------------
    # run navigation

    def _walk_to_run(self, qt: int) -> tuple[int, _Win, int]:
        """(cluster start, window, run start relative to cluster).

        Precondition: slot ``qt`` is used.  The run located is the one
        for quotient ``qt`` if occupied, else the position where that
        run would begin.
        """
        c = self._cluster_start(qt)
        dist = (qt - c) % self.nslots
        skip = self._read_bits(self.occ, c, dist).bit_count() if dist else 0
        win = _Win(self, c)
        pos = 0
        for _ in range(skip):
            while not (win.run_bit(pos) and not win.ext_bit(pos)):
                pos += 1
            pos += 1
            while win.ext_bit(pos):
                pos += 1
        return c, win, pos

    def find_run(self, quotient: int) -> tuple[int, int] | None:
        """Physical (start, length) of the run for ``quotient``, trailing
        extension and counter slots included, or None if unoccupied."""
        if not self._get_bit(self.occ, quotient):
            return None
        c, win, pos = self._walk_to_run(quotient)
        start = pos
        while not (win.run_bit(pos) and not win.ext_bit(pos)):
            pos += 1
        pos += 1
        while win.ext_bit(pos):
            pos += 1
        return (c + start) % self.nslots, pos - start

    def _scan_fp(self, win: _Win, pos: int) -> tuple[int, int, int, bool]:
        """From a remainder slot at window offset ``pos``: offsets of the
        extension and counter groups and whether this fp ends the run.
        Returns (first_ext, first_ctr, next_fp, is_terminator)."""
        is_term = bool(win.run_bit(pos))
        pos += 1
        e0 = pos
        while win.ext_bit(pos) and not win.run_bit(pos):
            pos += 1
        c0 = pos
        while win.ext_bit(pos) and win.run_bit(pos):
            pos += 1
        return e0, c0, pos, is_term

    # ------------------------------------------------------------------
    # public operations

    def query_fp(self, stream: HashStream) -> tuple[int, int] | None:
        """First stored fingerprint that is a prefix of ``stream``.

        Returns (minirun rank, matched extension length) or None.
        """
        cfg = self.cfg
        qt, rem = split(stream, cfg)
        if not self._get_bit(self.occ, qt):
            return None
        c, win, pos = self._walk_to_run(qt)
        n = self.nslots
        vb = self.value_bits
        rank = 0
        while True:
            payload = int(self.slots[(c + pos) % n])
            rem_i = payload >> vb
            e0, c0, nxt, is_term = self._scan_fp(win, pos)
            if rem_i > rem:
                return None
            if rem_i == rem:
                n_ext = c0 - e0
                for t in range(n_ext):
                    stored = int(self.slots[(c + e0 + t) % n]) >> vb
                    if stored != extension_chunk(stream, cfg, t):
                        break
                else:
                    return rank, n_ext
                rank += 1
            if is_term:
                return None
            pos = nxt

    def insert_fp(self, fp: Fingerprint, value: int = 0) -> tuple[int, int]:
        """Insert a fingerprint; returns (minirun id, rank).

        Appends at the end of its minirun so existing ranks survive.
        """
        cfg = self.cfg
        qt, rem = fp.quotient, fp.remainder
        digits = _count_digits(fp.count, cfg.r)
        width = 1 + len(fp.ext) + len(digits)
        if _LOAD_DEN * (self.used_count + width) > _LOAD_NUM * self.nslots:
            raise FilterFullError(
                f"insert of {width} slot(s) would exceed the load limit"
            )
        vb = self.value_bits
        vmask = (1 << vb) - 1
        payloads = [(rem << vb) | (value & vmask)]
        payloads += [(ch << vb) for ch in fp.ext]
        payloads += [(d << vb) for d in digits]

        mid = pack_minirun_id(qt, rem, cfg.q)
        n = self.nslots

        if not self._get_bit(self.occ, qt) and not self._get_bit(self.used, qt):
            at, rank, new_term, old_term_abs = qt, 0, True, None
        elif not self._get_bit(self.occ, qt):
            c, win, pos = self._walk_to_run(qt)
            at, rank, new_term, old_term_abs = (c + pos) % n, 0, True, None
        else:
            c, win, pos = self._walk_to_run(qt)
            rank = 0
            insert_rel = None
            new_term = False
            term_rem_rel = None
            while True:
                payload = int(self.slots[(c + pos) % n])
                rem_i = payload >> vb
                term_rem_rel = pos
                e0, c0, nxt, is_term = self._scan_fp(win, pos)
                if rem_i > rem:
                    insert_rel = pos
                    break
                if rem_i == rem:
                    rank += 1
                if is_term:
                    insert_rel = nxt
                    new_term = True
                    break
                pos = nxt
            at = (c + insert_rel) % n
            old_term_abs = (c + term_rem_rel) % n if new_term else None

        for i, payload in enumerate(payloads):
            p = (at + i) % n
            self._open_slot(p)
            self.slots[p] = payload
            if i == 0:
                if new_term:
                    self._set_bit(self.run, p)
            else:
                self._set_bit(self.ext, p)
                if i > len(fp.ext):
                    self._set_bit(self.run, p)
        if old_term_abs is not None:
            self._clear_bit(self.run, old_term_abs)
        self._set_bit(self.occ, qt)
        self.fp_count += 1
        self.ext_slot_count += len(fp.ext)
        self.ctr_slot_count += len(digits)
        return mid, rank

    def _locate_fp(self, mid: int, rank: int) -> tuple[int, _Win, int, int, int, int]:
        """(cluster, window, fp offset, ext group offset, ctr offset, next)
        for the rank-th fingerprint of a minirun.  Raises if missing."""
        qt, rem = unpack_minirun_id(mid, self.cfg.q)
        if not self._get_bit(self.occ, qt):
            raise NotFoundError(f"quotient {qt} has no run")
        c, win, pos = self._walk_to_run(qt)
        n = self.nslots
        vb = self.value_bits
        seen = 0
        while True:
            payload = int(self.slots[(c + pos) % n])
            rem_i = payload >> vb
            e0, c0, nxt, is_term = self._scan_fp(win, pos)
            if rem_i > rem:
                break
            if rem_i == rem:
                if seen == rank:
                    return c, win, pos, e0, c0, nxt
                seen += 1
            if is_term:
                break
            pos = nxt
        raise NotFoundError(f"minirun {mid} has no rank {rank}")

    def get_ext(self, mid: int, rank: int) -> tuple[int, ...]:
        c, _, _, e0, c0, _ = self._locate_fp(mid, rank)
        n, vb = self.nslots, self.value_bits
        return tuple(int(self.slots[(c + i) % n]) >> vb for i in range(e0, c0))

    def extend_fp(self, mid: int, rank: int, chunks) -> None:
        """Append extension chunks to one fingerprint, in place."""
        chunks = list(chunks)
        if not chunks:
            return
        if _LOAD_DEN * (self.used_count + len(chunks)) > _LOAD_NUM * self.nslots:
            raise FilterFullError("extension would exceed the load limit")
        c, _, _, e0, c0, _ = self._locate_fp(mid, rank)
        n, vb = self.nslots, self.value_bits
        for t, ch in enumerate(chunks):
            p = (c + c0 + t) % n
            self._open_slot(p)
            self.slots[p] = ch << vb
            self._set_bit(self.ext, p)
        self.ext_slot_count += len(chunks)

    def get_count(self, mid: int, rank: int) -> int:
        c, _, _, e0, c0, nxt = self._locate_fp(mid, rank)
        n, vb = self.nslots, self.value_bits
        r = self.cfg.r
        v = 0
        for i in range(nxt - c0):
            v |= (int(self.slots[(c + c0 + i) % n]) >> vb) << (i * r)
        return v + 1

    def set_count(self, mid: int, rank: int, count: int) -> None:
        if count < 1:
            raise ValueError("count must be at least 1")
        c, _, pos, e0, c0, nxt = self._locate_fp(mid, rank)
        digits = _count_digits(count, self.cfg.r)
        have = nxt - c0
        n, vb = self.nslots, self.value_bits
        if len(digits) >= have:
            extra = len(digits) - have
            if _LOAD_DEN * (self.used_count + extra) > _LOAD_NUM * self.nslots:
                raise FilterFullError("counter growth would exceed the load limit")
            for i in range(have):
                p = (c + c0 + i) % n
                self.slots[p] = digits[i] << vb
            for i in range(have, len(digits)):
                p = (c + c0 + i) % n
                self._open_slot(p)
                self.slots[p] = digits[i] << vb
                self._set_bit(self.ext, p)
                self._set_bit(self.run, p)
            self.ctr_slot_count += extra
        else:
            self._edit_cluster(mid, rank, ("count", count))

    def get_value(self, mid: int, rank: int) -> int:
        c, _, pos, _, _, _ = self._locate_fp(mid, rank)
        return int(self.slots[(c + pos) % self.nslots]) & ((1 << self.value_bits) - 1)

    def set_value(self, mid: int, rank: int, value: int) -> None:
        c, _, pos, _, _, _ = self._locate_fp(mid, rank)
        p = (c + pos) % self.nslots
        vb = self.value_bits
        rem_part = (int(self.slots[p]) >> vb) << vb
        self.slots[p] = rem_part | (value & ((1 << vb) - 1))

    def remove_fp(self, mid: int, rank: int) -> None:
        self._edit_cluster(mid, rank, ("remove",))

    def truncate_ext(self, mid: int, rank: int, keep: int) -> None:
        """Drop extension chunks beyond the first ``keep``."""
        current = self.get_ext(mid, rank)
        if keep >= len(current):
            return
        self._edit_cluster(mid, rank, ("ext", current[:keep]))

    # ------------------------------------------------------------------
    # cluster rewrite (shrinking edits)

    def _decode_cluster(self, c: int) -> tuple[list, int]:
        """Decode the cluster starting at ``c`` into
        [(quotient, [[remainder, value, ext list, count], ...]), ...]
        plus the cluster length in slots."""
        win = _Win(self, c, full=True)
        n, vb, r = self.nslots, self.value_bits, self.cfg.r
        runs = []
        pos = 0
        occ_at = 0
        while True:
            while not win.occ_bit(occ_at):
                occ_at += 1
            qt = (c + occ_at) % n
            fps = []
            while True:
                payload = int(self.slots[(c + pos) % n])
                e0, c0, nxt, is_term = self._scan_fp(win, pos)
                ext = [int(self.slots[(c + i) % n]) >> vb for i in range(e0, c0)]
                v = 0
                for i in range(nxt - c0):
                    v |= (int(self.slots[(c + c0 + i) % n]) >> vb) << (i * r)
                fps.append([payload >> vb, payload & ((1 << vb) - 1), ext, v + 1])
                pos = nxt
                if is_term:
                    break
            runs.append((qt, fps))
            occ_at += 1
            if not win.used_bit(pos):
                return runs, pos

    def _edit_cluster(self, mid: int, rank: int, edit: tuple) -> None:
        """Apply a shrinking edit to one fingerprint and rewrite its cluster."""
        qt, rem = unpack_minirun_id(mid, self.cfg.q)
        self._locate_fp(mid, rank)  # existence check, uniform errors
        c = self._cluster_start(qt)
        runs, old_len = self._decode_cluster(c)
        for ri, (rq, fps) in enumerate(runs):
            if rq != qt:
                continue
            seen = 0
            for fi, rec in enumerate(fps):
                if rec[0] != rem:
                    continue
                if seen == rank:
                    old_slots = 1 + len(rec[2]) + len(_count_digits(rec[3], self.cfg.r))
                    if edit[0] == "remove":
                        fps.pop(fi)
                        self.fp_count -= 1
                        self.ext_slot_count -= len(rec[2])
                        self.ctr_slot_count -= len(_count_digits(rec[3], self.cfg.r))
                        self.used_count -= old_slots
                        if not fps:
                            runs.pop(ri)
                            self._clear_bit(self.occ, qt)
                    elif edit[0] == "ext":
                        dropped = len(rec[2]) - len(edit[1])
                        rec[2] = list(edit[1])
                        self.ext_slot_count -= dropped
                        self.used_count -= dropped
                    elif edit[0] == "count":
                        dropped = len(_count_digits(rec[3], self.cfg.r)) - len(
                            _count_digits(edit[1], self.cfg.r)
                        )
                        rec[3] = edit[1]
                        self.ctr_slot_count -= dropped
                        self.used_count -= dropped
                    self._rewrite_cluster(c, old_len, runs)
                    return
                seen += 1
        raise NotFoundError(f"minirun {mid} has no rank {rank}")

    def _rewrite_cluster(self, c: int, old_len: int, runs: list) -> None:
        n = self.nslots
        self._write_bits(self.run, c, old_len, 0)
        self._write_bits(self.ext, c, old_len, 0)
        self._write_bits(self.used, c, old_len, 0)
        end = c + old_len
        if end <= n:
            self.slots[c:end] = 0
        else:
            self.slots[c:n] = 0
            self.slots[0 : end - n] = 0
        vb, r = self.value_bits, self.cfg.r
        prev_end = -1
        for qt, fps in runs:
            qt_rel = (qt - c) % n
            pos = max(qt_rel, prev_end + 1)
            for k, (rem, value, ext, count) in enumerate(fps):
                digits = _count_digits(count, r)
                p = (c + pos) % n
                self.slots[p] = (rem << vb) | value
                self._set_bit(self.used, p)
                if k == len(fps) - 1:
                    self._set_bit(self.run, p)
                pos += 1
                for ch in ext:
                    p = (c + pos) % n
                    self.slots[p] = ch << vb
                    self._set_bit(self.used, p)
                    self._set_bit(self.ext, p)
                    pos += 1
                for d in digits:
                    p = (c + pos) % n
                    self.slots[p] = d << vb
                    self._set_bit(self.used, p)
                    self._set_bit(self.ext, p)
                    self._set_bit(self.run, p)
                    pos += 1
            prev_end = pos - 1
        if prev_end + 1 > old_len:
            raise StateCorruptionError("cluster rewrite grew the cluster")

    # ------------------------------------------------------------------
    # whole-table iteration

    def iter_fps(self):
        """Yield (Fingerprint, value) in filter order: by quotient, then
        remainder, then minirun rank."""
        n = self.nslots
        if self.used_count == 0:
            return
        anchor = (self._find_first_unused(0) + 1) % n
        visited = 0
        pos = anchor
        while visited < n:
            if (pos & 63) == 0 and visited + 64 <= n and int(self.used[pos >> 6]) == 0:
                pos = (pos + 64) % n
                visited += 64
                continue
            if not self._get_bit(self.used, pos):
                pos = (pos + 1) % n
                visited += 1
                continue
            runs, length = self._decode_cluster(pos)
            for qt, fps in runs:
                for rem, value, ext, count in fps:
                    yield Fingerprint(qt, rem, tuple(ext), count), value
            pos = (pos + length) % n
            visited += length

    # ------------------------------------------------------------------
    # accounting and serialization

    @property
    def load_factor(self) -> float:
        return self.used_count / self.nslots

    def space_report(self) -> SpaceReport:
        n = self.nslots
        metadata = 3 * n + ((n * 8) >> 6) + HEADER_BITS
        remainder = n * self.slot_bits
        total = metadata + remainder
        per_item = total / self.fp_count if self.fp_count else float("inf")
        return SpaceReport(
            total_bits=total,
            metadata_bits=metadata,
            remainder_bits=remainder,
            extension_slots=self.ext_slot_count,
            counter_slots=self.ctr_slot_count,
            load_factor=self.used_count / n,
            bits_per_item=per_item,
        )

    def _block_offsets(self) -> np.ndarray:
        """Derived per-block acceleration bytes: distance from each block
        base to the next unused slot, saturating at 255."""
        n = self.nslots
        nblocks = (n + 63) >> 6
        used_b = np.unpackbits(self.used.view(np.uint8), bitorder="little")[:n]
        zeros = np.flatnonzero(used_b == 0)
        out = np.zeros(nblocks, dtype=np.uint8)
        if zeros.size == 0:
            out[:] = 255
            return out
        bases = np.arange(nblocks, dtype=np.int64) << 6
        idx = np.searchsorted(zeros, bases)
        wrapped = np.concatenate([zeros, zeros[:1] + n])
        dist = wrapped[idx] - bases
        out[:] = np.minimum(dist, 255).astype(np.uint8)
        return out

    def _bits_to_bytes(self, vec: np.ndarray) -> bytes:
        nbytes = (self.nslots + 7) >> 3
        return vec.tobytes()[:nbytes]

    def to_bytes(self) -> bytes:
        cfg = self.cfg
        head = struct.pack(
            "<4sIBBQQ",
            SNAPSHOT_MAGIC,
            SNAPSHOT_VERSION,
            cfg.q,
            cfg.r,
            cfg.seed,
            self.used_count,
        )
        n = self.nslots
        w = self.slot_bits
        cols = (self.slots[:, None] >> np.arange(w, dtype=np.uint64)) & np.uint64(1)
        payload_bits = np.packbits(
            cols.astype(np.uint8).reshape(-1), bitorder="little"
        ).tobytes()
        out = bytearray(head)
        out += pack_section(self._bits_to_bytes(self.occ))
        out += pack_section(self._bits_to_bytes(self.run))
        out += pack_section(self._bits_to_bytes(self.ext))
        out += pack_section(self._block_offsets().tobytes())
        out += pack_section(bytes([w]) + payload_bits)
        return bytes(out)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "SlotArray":
        rd = ByteReader(data)
        rd.expect_magic(SNAPSHOT_MAGIC)
        version = rd.u32()
        if version != SNAPSHOT_VERSION:
            raise FormatError(f"unsupported filter snapshot version {version}")
        q, r = rd.u8(), rd.u8()
        seed = rd.u64()
        used_count = rd.u64()
        try:
            cfg = FilterConfig(q=q, r=r, seed=seed)
        except ValueError as exc:
            raise FormatError(str(exc)) from exc
        n = 1 << q
        nbytes = (n + 7) >> 3
        sections = [rd.section() for _ in range(3)]
        offsets = rd.section()
        payload = rd.section()
        rd.done()
        if any(len(s) != nbytes for s in sections):
            raise FormatError("bit vector section has the wrong size")
        if len(offsets) != (n + 63) >> 6:
            raise FormatError("block offset section has the wrong size")
        if not payload:
            raise FormatError("payload section empty")
        w = payload[0]
        if w < r or w > 63:
            raise FormatError("slot width out of range")
        if len(payload) - 1 != (n * w + 7) >> 3:
            raise FormatError("payload section has the wrong size")
        arr = cls(cfg, value_bits=w - r)
        for vec, blob in zip((arr.occ, arr.run, arr.ext), sections):
            padded = blob + b"\0" * (arr.nwords * 8 - len(blob))
            vec[:] = np.frombuffer(padded, dtype=np.uint64)
        bits = np.unpackbits(np.frombuffer(payload[1:], dtype=np.uint8), bitorder="little")
        bits = bits[: n * w].reshape(n, w).astype(np.uint64)
        arr.slots[:] = (bits << np.arange(w, dtype=np.uint64)).sum(axis=1, dtype=np.uint64)
        anchor = None
        for b, off in enumerate(offsets):
            if off < 64:
                cand = (b << 6) + off
                if cand < n:
                    anchor = cand
                    break
        if anchor is None:
            raise FormatError("block offsets identify no unused slot")
        arr._reconstruct_used(used_count, anchor)
        if arr._block_offsets().tobytes() != offsets:
            raise FormatError("block offsets disagree with the decoded table")
        return arr

    @classmethod
    def load(cls, path) -> "SlotArray":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def _reconstruct_used(self, expect_used: int, anchor: int) -> None:
        """Rebuild the derived used bits from the canonical vectors.

        ``anchor`` must name an unused slot (the block offsets encode
        one).  Runs are replayed left to right in coordinates rotated so
        the anchor sits at the top; no cluster can cross it, which makes
        the replay a single linear pass.
        """
        n = self.nslots
        if expect_used > (_LOAD_NUM * n) // _LOAD_DEN:
            raise FormatError("used-slot count exceeds the load limit")
        rot = (anchor + 1) % n
        occ_b = np.unpackbits(self.occ.view(np.uint8), bitorder="little")[:n]
        quotients = np.sort((np.flatnonzero(occ_b) - rot) % n)
        run_words = [int(x) for x in self.run]
        ext_words = [int(x) for x in self.ext]

        def rbit(i):
            i = (i + rot) % n
            return (run_words[i >> 6] >> (i & 63)) & 1

        def ebit(i):
            i = (i + rot) % n
            return (ext_words[i >> 6] >> (i & 63)) & 1

        pos = 0
        total = 0
        for qt in quotients:
            start = max(int(qt), pos)
            t = start
            while t < n and not (rbit(t) and not ebit(t)):
                t += 1
            if t == n:
                raise FormatError("run has no terminator")
            t += 1
            while t < n and ebit(t):
                t += 1
            if self._read_bits(self.used, (start + rot) % n, t - start):
                raise FormatError("runs overlap")
            self._write_bits(
                self.used, (start + rot) % n, t - start, (1 << (t - start)) - 1
            )
            total += t - start
            pos = t
        if total != expect_used:
            raise FormatError(
                f"decoded {total} used slots, header says {expect_used}"
            )
        if self._get_bit(self.used, anchor):
            raise FormatError("anchor slot decoded as used")
        self.used_count = total
        ext_only = np.bitwise_count(self.ext & ~self.run).sum()
        ctr = np.bitwise_count(self.ext & self.run).sum()
        fps = np.bitwise_count(self.used & ~self.ext).sum()
        self.ext_slot_count = int(ext_only)
        self.ctr_slot_count = int(ctr)
        self.fp_count = int(fps)
        if int(np.bitwise_count(self.used).sum()) != total:
            raise StateCorruptionError("used bit accounting mismatch")


def new_filter(cfg: FilterConfig, value_bits: int = 0) -> SlotArray:
    return SlotArray(cfg, value_bits=value_bits)


class FrozenIndex:
    """Read-only decode of a slot array for bulk membership probes.

    Baseline pairs go into one sorted array; the rare miniruns whose
    fingerprints are all extended keep their chunk tuples on the side.
    Must be rebuilt after any mutation.  Equivalence with the slot-walk
    query is pinned by tests.
    """

    def __init__(self, arr: SlotArray):
        self.cfg = arr.cfg
        cfg = arr.cfg
        n = arr.nslots
        if arr.fp_count == 0:
            self.base = np.empty(0, dtype=np.uint64)
            self.ext_only = np.empty(0, dtype=np.uint64)
            self.ext_map = {}
            return
        rot = (arr._find_first_unused(0) + 1) % n
        def unpack(vec):
            return np.unpackbits(vec.view(np.uint8), bitorder="little")[:n]
        used_b = np.roll(unpack(arr.used), -rot).astype(bool)
        run_b = np.roll(unpack(arr.run), -rot).astype(bool)
        ext_b = np.roll(unpack(arr.ext), -rot).astype(bool)
        occ_b = np.roll(unpack(arr.occ), -rot).astype(bool)
        slots_r = np.roll(arr.slots, -rot)

        rem_mask = used_b & ~ext_b
        R = np.flatnonzero(rem_mask)
        T = np.flatnonzero(rem_mask & run_b)
        Q = np.flatnonzero(occ_b)
        if len(T) != len(Q):
            raise StateCorruptionError("terminator and quotient counts differ")
        run_idx = np.searchsorted(T, R, side="left")
        quot = ((Q[run_idx] + rot) % n).astype(np.uint64)
        rems = slots_r[R] >> np.uint64(arr.value_bits)
        rems &= np.uint64((1 << cfg.r) - 1)
        packed = (quot << np.uint64(cfg.r)) | rems

        nxt = R + 1
        has_ext = np.zeros(len(R), dtype=bool)
        ok = nxt < n
        has_ext[ok] = ext_b[nxt[ok]] & ~run_b[nxt[ok]]

        order = np.argsort(packed, kind="stable")
        ps = packed[order]
        he = has_ext[order].astype(np.uint8)
        uniq, starts = np.unique(ps, return_index=True)
        all_ext = np.minimum.reduceat(he, starts).astype(bool)
        self.base = uniq
        self.ext_only = uniq[all_ext]
        self.ext_map: dict[int, list[tuple[int, ...]]] = {}
        if self.ext_only.size:
            vb = arr.value_bits
            need = np.isin(packed, self.ext_only)
            for i in np.flatnonzero(need):
                chunks = []
                p = int(R[i]) + 1
                while p < n and ext_b[p] and not run_b[p]:
                    chunks.append(int(slots_r[p]) >> vb)
                    p += 1
                self.ext_map.setdefault(int(packed[i]), []).append(tuple(chunks))

    def query_keys(self, keys: np.ndarray) -> np.ndarray:
        """Membership verdict per key, adaptation frozen."""
        cfg = self.cfg
        packed = split_batch(np.asarray(keys, dtype=np.uint64), cfg)
        if self.base.size == 0:
            return np.zeros(len(packed), dtype=bool)
        idx = np.searchsorted(self.base, packed)
        idx_c = np.minimum(idx, self.base.size - 1)
        found = self.base[idx_c] == packed
        if self.ext_map:
            recheck = found & np.isin(packed, self.ext_only)
            for i in np.flatnonzero(recheck):
                stream = HashStream(int(keys[i]), cfg.seed)
                hit = False
                for chunks in self.ext_map[int(packed[i])]:
                    if all(
                        extension_chunk(stream, cfg, t) == ch
                        for t, ch in enumerate(chunks)
                    ):
                        hit = True
                        break
                found[i] = hit
        return found

    def contains(self, key: int) -> bool:
        return bool(self.query_keys(np.array([key], dtype=np.uint64))[0])
