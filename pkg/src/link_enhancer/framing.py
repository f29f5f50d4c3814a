"""Frame format and block synchronization for the radio side.

Wire format: ``[1A CF FC 1D][n-byte RS codeword]`` repeated, MSB first, no
scrambling and no gap between frames.  The receiver hunts bit by bit for an
exact marker, confirms it ``m_confirm`` times one frame period apart with a
Hamming tolerance of ``h_tol`` bits, then flywheels in lock until ``l_loss``
consecutive markers miss.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

MARKER = bytes([0x1A, 0xCF, 0xFC, 0x1D])
MARKER_BITS = 32
H_TOL = 2
M_CONFIRM = 2
L_LOSS = 3
E1_LINE_RATE = 2.048e6

POPCOUNT8 = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)
_SCAN_BYTES = 1 << 20


@dataclass(frozen=True)
class Frame:
    codeword: bytes
    marker: bytes = MARKER

    def to_bytes(self) -> bytes:
        return self.marker + self.codeword

    def __len__(self) -> int:
        return len(self.marker) + len(self.codeword)


def frame_encode(codeword, n: int = 255) -> bytes:
    """Prepend the sync marker to one n-byte codeword."""
    codeword = bytes(codeword)
    if len(codeword) != n:
        raise ValueError(f"codeword must be {n} bytes, got {len(codeword)}")
    return MARKER + codeword


def frame_encode_batch(codewords: np.ndarray) -> np.ndarray:
    """(B, n) codewords -> (B, 4 + n) frames."""
    codewords = np.asarray(codewords, dtype=np.uint8)
    out = np.empty((codewords.shape[0], len(MARKER) + codewords.shape[1]), dtype=np.uint8)
    out[:, :len(MARKER)] = np.frombuffer(MARKER, dtype=np.uint8)
    out[:, len(MARKER):] = codewords
    return out


class SyncMode(enum.Enum):
    HUNT = "hunt"
    PRESYNC = "presync"
    LOCK = "lock"


@dataclass
class SyncEvents:
    acquired: int = 0
    lost: int = 0
    false_candidates: int = 0
    acquired_at: list[int] = field(default_factory=list)   # absolute bit where lock was declared

    def merge(self, other: "SyncEvents") -> None:
        self.acquired += other.acquired
        self.lost += other.lost
        self.false_candidates += other.false_candidates
        self.acquired_at.extend(other.acquired_at)


@dataclass
class SyncState:
    mode: SyncMode = SyncMode.HUNT
    count: int = 0            # confirmations in PRESYNC, consecutive misses in LOCK
    pos: int = 0              # bit position (relative to buf) of the next thing to examine
    candidate: int = 0        # PRESYNC: bit position of the hunted marker
    base: int = 0             # absolute bit offset of buf[0]
    release_floor: int = 0    # absolute bit where the current lock was declared
    buf: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8), repr=False)


class Codewords(NamedTuple):
    data: np.ndarray          # (B, n) aligned codewords
    starts: np.ndarray        # (B,) absolute bit offset of each frame's marker
    ends: np.ndarray          # (B,) absolute bit offset just past each codeword
    released: np.ndarray      # (B,) absolute bit offset at which each codeword became known


class FrameSynchronizer:
    def __init__(self, n: int = 255, h_tol: int = H_TOL, m_confirm: int = M_CONFIRM,
                 l_loss: int = L_LOSS, marker: bytes = MARKER, state: SyncState | None = None):
        if not 0 <= h_tol <= 8 * len(marker):
            raise ValueError("h_tol must lie in [0, marker bits]")
        if m_confirm < 0 or l_loss < 1:
            raise ValueError("m_confirm must be >= 0 and l_loss >= 1")
        self.n = n
        self.h_tol = h_tol
        self.m_confirm = m_confirm
        self.l_loss = l_loss
        self.marker = marker
        self.marker_bits = 8 * len(marker)
        self.frame_bytes = len(marker) + n
        self.frame_bits = 8 * self.frame_bytes
        self._marker_int = int.from_bytes(marker, "big")
        self._marker_arr = np.frombuffer(marker, dtype=np.uint8)
        self.state = state if state is not None else SyncState()
        self.events = SyncEvents()

    @property
    def mode(self) -> SyncMode:
        return self.state.mode

    @property
    def locked(self) -> bool:
        return self.state.mode is SyncMode.LOCK

    def push(self, data) -> Codewords:
        st = self.state
        data = np.frombuffer(data, dtype=np.uint8) if isinstance(data, (bytes, bytearray, memoryview)) \
            else np.asarray(data, dtype=np.uint8)
        st.buf = np.concatenate([st.buf, data]) if st.buf.size else data.copy()
        out: list[Codewords] = []
        while True:
            if st.mode is SyncMode.HUNT:
                if not self._hunt():
                    break
            elif st.mode is SyncMode.PRESYNC:
                if not self._presync():
                    break
            else:
                words, more = self._lock()
                if words is not None:
                    out.append(words)
                if not more:
                    break
        self._compact()
        if not out:
            empty = np.zeros(0, dtype=np.int64)
            return Codewords(np.zeros((0, self.n), dtype=np.uint8), empty, empty, empty)
        return Codewords(*(np.concatenate(parts) for parts in zip(*out)))

    # helpers --------------------------------------------------------------
    @property
    def _avail_bits(self) -> int:
        return 8 * self.state.buf.size

    def _distance(self, bitpos: int) -> int:
        buf = self.state.buf
        lo = bitpos >> 3
        shift = bitpos & 7
        nbytes = len(self.marker) + (1 if shift else 0)
        word = int.from_bytes(buf[lo:lo + nbytes].tobytes(), "big")
        if shift:
            word = (word >> (8 - shift)) & ((1 << self.marker_bits) - 1)
        return (word ^ self._marker_int).bit_count()

    def _find_exact(self, start: int) -> int | None:
        """Smallest bit position >= start holding the exact marker, scanning what is buffered."""
        st = self.state
        buf = st.buf
        mlen = len(self.marker)
        while True:
            lo = start >> 3
            # windows need mlen + 1 bytes so every bit shift is available
            hi = min(buf.size - mlen, lo + _SCAN_BYTES)
            if hi <= lo:
                st.pos = start
                return None
            seg = buf[lo:hi + mlen].astype(np.uint64)
            nwin = hi - lo
            v = np.zeros(nwin, dtype=np.uint64)
            for j in range(mlen + 1):
                v = (v << np.uint64(8)) | seg[j:j + nwin]
            mask = np.uint64((1 << self.marker_bits) - 1)
            target = np.uint64(self._marker_int)
            best = None
            for s in range(8):
                hits = np.flatnonzero(((v >> np.uint64(8 - s)) & mask) == target)
                if hits.size:
                    cand = 8 * (lo + hits) + s
                    cand = cand[cand >= start]
                    if cand.size and (best is None or cand[0] < best):
                        best = int(cand[0])
            if best is not None:
                return best
            start = 8 * hi

    # states ---------------------------------------------------------------
    def _hunt(self) -> bool:
        st = self.state
        hit = self._find_exact(st.pos)
        if hit is None:
            return False
        st.candidate = hit
        st.pos = hit + self.frame_bits
        st.count = 0
        if self.m_confirm == 0:
            self._declare_lock()
        else:
            st.mode = SyncMode.PRESYNC
        return True

    def _presync(self) -> bool:
        st = self.state
        while st.count < self.m_confirm:
            if st.pos + self.marker_bits > self._avail_bits:
                return False
            if self._distance(st.pos) > self.h_tol:
                self.events.false_candidates += 1
                st.mode = SyncMode.HUNT
                st.pos = st.candidate + 1
                st.count = 0
                return True
            st.count += 1
            if st.count < self.m_confirm:
                st.pos += self.frame_bits
        self._declare_lock()
        return True

    def _declare_lock(self) -> None:
        st = self.state
        self.events.acquired += 1
        st.release_floor = st.base + st.pos + self.marker_bits
        self.events.acquired_at.append(st.release_floor)
        st.mode = SyncMode.LOCK
        st.count = 0
        # rewind so the held frames (candidate onwards) are re-checked and released
        st.pos = st.candidate

    def _lock(self) -> tuple[Codewords | None, bool]:
        st = self.state
        F = self.frame_bits
        nframes = (self._avail_bits - st.pos) // F
        if nframes <= 0:
            return None, False
        a, r = st.pos >> 3, st.pos & 7
        span = nframes * self.frame_bytes
        buf = st.buf
        if r:
            seg = (buf[a:a + span] << np.uint8(r)) | (buf[a + 1:a + span + 1] >> np.uint8(8 - r))
        else:
            seg = buf[a:a + span]
        frames = seg.reshape(nframes, self.frame_bytes)
        mlen = len(self.marker)
        dist = POPCOUNT8[frames[:, :mlen] ^ self._marker_arr].sum(axis=1, dtype=np.int32)
        stop = nframes
        lost = False
        run = st.count
        prev = -1
        for i in np.flatnonzero(dist > self.h_tol).tolist():
            run = run + 1 if i == prev + 1 else 1
            prev = i
            if run >= self.l_loss:
                stop = i
                lost = True
                break
        if prev != nframes - 1:
            run = 0
        starts = st.base + st.pos + F * np.arange(stop, dtype=np.int64)
        ends = starts + F
        words = Codewords(frames[:stop, mlen:].copy(), starts, ends, np.maximum(ends, st.release_floor))
        if lost:
            self.events.lost += 1
            st.pos += stop * F
            st.mode = SyncMode.HUNT
            st.count = 0
            return words, True
        st.pos += nframes * F
        st.count = run
        return words, False

    def _compact(self) -> None:
        st = self.state
        keep_bit = st.candidate if st.mode is SyncMode.PRESYNC else st.pos
        keep = min(keep_bit >> 3, st.buf.size)
        if keep > 0:
            st.buf = st.buf[keep:].copy()
            st.base += 8 * keep
            st.pos -= 8 * keep
            st.candidate -= 8 * keep


def sync_step(data, sync: FrameSynchronizer | None = None) -> tuple[FrameSynchronizer, Codewords, SyncEvents]:
    """Feed ``data`` to a synchronizer; returns it with the emitted codewords and this call's events."""
    sync = sync if sync is not None else FrameSynchronizer()
    before = sync.events
    sync.events = SyncEvents()
    words = sync.push(data)
    step_events = sync.events
    before.merge(step_events)
    sync.events = before
    return sync, words, step_events


def _binom_cdf(nbits: int, k: int, p: float) -> float:
    if k >= nbits:
        return 1.0
    return math.fsum(math.comb(nbits, i) * p ** i * (1 - p) ** (nbits - i) for i in range(k + 1))


@dataclass(frozen=True)
class SyncBudget:
    expected_false_locks_per_10_days: float
    per_frame_detection_prob: float
    overhead_fraction: float
    exact_match_prob: float            # hunted marker survives the channel unchanged
    lock_loss_prob_per_frame: float    # l_loss consecutive misses


def sync_budget(line_rate: float = E1_LINE_RATE, marker_bits: int = MARKER_BITS, h_tol: int = H_TOL,
                m_confirm: int = M_CONFIRM, l_loss: int = L_LOSS, n: int = 255,
                ber: float = 1e-3, days: float = 10.0) -> SyncBudget:
    """Closed-form false-lock, detection and overhead figures for the synchronizer.

    False locks assume uniformly random line bits: an exact hunt match has
    probability 2^-marker_bits at each bit position and each confirmation
    passes with probability sum_{i<=h_tol} C(marker_bits, i) / 2^marker_bits.
    """
    positions = line_rate * 86400.0 * days
    confirm = sum(math.comb(marker_bits, i) for i in range(min(h_tol, marker_bits) + 1)) / 2.0 ** marker_bits
    false_locks = positions * 2.0 ** -marker_bits * confirm ** m_confirm
    detect = _binom_cdf(marker_bits, h_tol, ber)
    marker_bytes = marker_bits / 8
    return SyncBudget(
        expected_false_locks_per_10_days=false_locks * 10.0 / days,
        per_frame_detection_prob=detect,
        overhead_fraction=marker_bytes / (marker_bytes + n),
        exact_match_prob=(1 - ber) ** marker_bits,
        lock_loss_prob_per_frame=(1 - detect) ** l_loss,
    )
