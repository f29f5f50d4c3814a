"""Encoder and decoder halves of the link enhancer, and run harnesses.

Encoder: delineate switch-side cells, drop idle/unassigned filler, queue the
assigned cells in a bounded FIFO, cut the resulting byte pipe into k-byte
RS payloads (cells straddle payload boundaries), encode and frame.  One
(4 + n)-byte frame leaves for every 4 + n input bytes, so the link runs at
the switch line rate.  When fewer than k bytes are queued at frame time the
pipe is topped up with whole idle cells.

Decoder: acquire frame sync, RS-decode every codeword (failed blocks are
passed on uncorrected), re-delineate the recovered pipe, drop its filler and
clock cells out on the switch-side cell-slot grid, minting idle cells when
nothing is ready.  Every received link byte produces one output byte.

Time is counted in line bytes on both sides; a frame assembled at input
byte ``(4+n)(f+1)`` is on the wire during the next frame period, and a
decoded cell may leave in the first output slot starting after the frame
carrying its last byte has fully arrived.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .atm import CELL_BYTES, IDLE_CELL_ARRAY, CellDelineator, filler_mask
from .channel import Channel, ChannelConfig
from .framing import H_TOL, L_LOSS, M_CONFIRM, MARKER, FrameSynchronizer, POPCOUNT8, frame_encode_batch
from .gf256 import DEFAULT_PARAMS, RsCodeParams, get_codec
from .measurement import CbrGenerator, LinkMetrics, StreamVerifier, TrafficConfig

FIFO_DEPTH = 64
DRAIN_SLOTS = 256


def idle_cells(rows: int) -> np.ndarray:
    """(rows, 53) array of idle cells."""
    block = np.empty((rows, CELL_BYTES), dtype=np.uint8)
    block[:] = IDLE_CELL_ARRAY
    return block


def _as_array(data) -> np.ndarray:
    if isinstance(data, np.ndarray):
        return data.astype(np.uint8, copy=False).ravel()
    return np.frombuffer(bytes(data), dtype=np.uint8)


def _slot_schedule(earliest: np.ndarray, first_free: int) -> np.ndarray:
    """In-order slot assignment: slot_i = max(slot_{i-1} + 1, earliest_i), slot_{-1} = first_free - 1."""
    if earliest.size == 0:
        return np.zeros(0, dtype=np.int64)
    base = np.arange(earliest.size, dtype=np.int64) + first_free
    return base + np.maximum.accumulate(np.maximum(earliest - base, 0))


@dataclass
class EncoderCounters:
    bytes_in: int = 0
    cells_in: int = 0
    idle_dropped: int = 0
    hec_invalid_dropped: int = 0
    assigned_accepted: int = 0
    assigned_dropped_overflow: int = 0
    fill_cells: int = 0
    frames_emitted: int = 0


class LinkEncoder:
    """Switch-side cell stream in, framed RS codewords out."""

    def __init__(self, params: RsCodeParams = DEFAULT_PARAMS, fifo_depth: int = FIFO_DEPTH,
                 marker: bytes = MARKER):
        if fifo_depth < 1:
            raise ValueError("fifo_depth must be >= 1")
        self.params = params
        self.codec = get_codec(params)
        self.k = params.k
        self.frame_bytes = len(marker) + params.n
        self.marker = marker
        self.fifo_depth = fifo_depth
        self.delineator = CellDelineator()
        self.counters = EncoderCounters()
        self._fifo = np.zeros((0, CELL_BYTES), dtype=np.uint8)
        self._fifo_ready = np.zeros(0, dtype=np.int64)
        self._tail = np.zeros(0, dtype=np.uint8)     # pipe bytes pulled but not yet framed
        self._next_frame = 0
        self._next_slot = 0                          # pipe cell slots pulled so far
        self.last_payloads = np.zeros((0, self.k), dtype=np.uint8)
        self.last_first_frame = 0

    @property
    def fifo_occupancy(self) -> int:
        return self._fifo.shape[0]

    def push(self, data) -> np.ndarray:
        """Feed switch-side bytes; returns the frame bytes due by the end of this input."""
        arr = _as_array(data)
        c = self.counters
        c.bytes_in += arr.size
        batch = self.delineator.push(arr)
        cells, ready = batch.cells, batch.ready
        if len(batch):
            c.cells_in += len(batch)
            bad = ~batch.hec_ok
            filler = filler_mask(cells) & ~bad
            c.hec_invalid_dropped += int(bad.sum())
            c.idle_dropped += int(filler.sum())
            keep = ~(bad | filler)
            cells, ready = cells[keep], ready[keep]
        return self._assemble(cells, ready, c.bytes_in // self.frame_bytes)

    def flush(self) -> np.ndarray:
        """Emit frames until every queued cell and pipe byte has been framed."""
        queued = self._tail.size + CELL_BYTES * self._fifo.shape[0]
        frames = -(-queued // self.k)
        empty = (np.zeros((0, CELL_BYTES), dtype=np.uint8), np.zeros(0, dtype=np.int64))
        return self._assemble(*empty, self._next_frame + frames, drain=True)

    # scheduling -----------------------------------------------------------
    def _assemble(self, new_cells, new_ready, frames_due: int, drain: bool = False) -> np.ndarray:
        k, fb = self.k, self.frame_bytes
        f0, c0 = self._next_frame, self._next_slot
        n_old = self._fifo.shape[0]
        cells = np.concatenate([self._fifo, new_cells]) if n_old else new_cells
        ready = np.concatenate([self._fifo_ready, new_ready]) if n_old else new_ready
        slot_end = -(-k * frames_due // CELL_BYTES) if frames_due > f0 else c0
        slots = self._fast_slots(ready, c0, slot_end, n_old, drain)
        dropped = 0
        if slots is None:
            slots, admitted = self._exact_slots(ready, f0, frames_due, c0, n_old)
            dropped = int((~admitted).sum())
            self.counters.assigned_dropped_overflow += dropped
            cells, ready, slots = cells[admitted], ready[admitted], slots[admitted]
        self.counters.assigned_accepted += new_cells.shape[0] - dropped
        placed = slots < slot_end
        self._fifo, self._fifo_ready = cells[~placed], ready[~placed]
        self._next_slot = slot_end
        nframes = frames_due - f0
        if nframes <= 0:
            self.last_payloads = np.zeros((0, k), dtype=np.uint8)
            self.last_first_frame = f0
            return np.zeros(0, dtype=np.uint8)
        block = idle_cells(slot_end - c0)
        block[slots[placed] - c0] = cells[placed]
        self.counters.fill_cells += block.shape[0] - int(placed.sum())
        pipe = np.concatenate([self._tail, block.ravel()])
        payloads = pipe[:k * nframes].reshape(nframes, k)
        self._tail = pipe[k * nframes:].copy()
        self._next_frame = frames_due
        self.counters.frames_emitted += nframes
        self.last_payloads = payloads
        self.last_first_frame = f0
        frames = frame_encode_batch(self.codec.encode_batch(payloads)) if self.marker == MARKER else \
            np.hstack([np.tile(np.frombuffer(self.marker, np.uint8), (nframes, 1)),
                       self.codec.encode_batch(payloads)])
        return frames.ravel()

    def _pull_time(self, slots: np.ndarray) -> np.ndarray:
        return self.frame_bytes * ((CELL_BYTES * slots) // self.k + 1)

    def _fast_slots(self, ready, c0, slot_end, n_old, drain) -> np.ndarray | None:
        """Slot assignment assuming no FIFO overflow; None if the FIFO would overflow."""
        if ready.size == 0:
            return np.zeros(0, dtype=np.int64)
        if drain:
            return _slot_schedule(np.full(ready.size, c0, dtype=np.int64), c0)
        # frame that first sees the cell, then the first pipe slot that frame pulls
        frame = np.maximum(-(-ready // self.frame_bytes) - 1, 0)
        earliest = np.maximum(-(-self.k * frame // CELL_BYTES), c0)
        slots = _slot_schedule(earliest, c0)
        pulled = np.where(slots < slot_end, self._pull_time(slots), np.iinfo(np.int64).max)
        idx = np.arange(n_old, ready.size)
        occupancy = idx - np.searchsorted(pulled, ready[n_old:], side="left")
        if occupancy.size and occupancy.max() >= self.fifo_depth:
            return None
        return slots

    def _exact_slots(self, ready, f0, frames_due, c0, n_old):
        """Frame-by-frame FIFO simulation with tail-drop on overflow."""
        total = ready.size
        slots = np.full(total, np.iinfo(np.int64).max, dtype=np.int64)
        admitted = np.zeros(total, dtype=bool)
        admitted[:n_old] = True
        queue = list(range(n_old))
        head = 0
        nxt = n_old
        slot = c0
        ready_l = ready.tolist()
        cap = self.fifo_depth
        for f in range(f0, frames_due):
            now = self.frame_bytes * (f + 1)
            while nxt < total and ready_l[nxt] <= now:
                if len(queue) - head < cap:
                    queue.append(nxt)
                    admitted[nxt] = True
                nxt += 1
            last_slot = -(-self.k * (f + 1) // CELL_BYTES)
            while slot < last_slot:
                if head < len(queue):
                    slots[queue[head]] = slot
                    head += 1
                slot += 1
        while nxt < total:
            if len(queue) - head < cap:
                queue.append(nxt)
                admitted[nxt] = True
            nxt += 1
        return slots, admitted


@dataclass
class DecoderCounters:
    link_bytes: int = 0
    blocks_ok: int = 0
    blocks_failed: int = 0
    symbols_corrected: int = 0
    pipe_resets: int = 0
    hec_invalid_forwarded: int = 0
    filler_removed: int = 0
    cells_out: int = 0
    idle_minted: int = 0

    @property
    def blocks_total(self) -> int:
        return self.blocks_ok + self.blocks_failed


class LinkDecoder:
    """Link bytes in, switch-side cell stream out (one output byte per link byte)."""

    def __init__(self, params: RsCodeParams = DEFAULT_PARAMS, h_tol: int = H_TOL,
                 m_confirm: int = M_CONFIRM, l_loss: int = L_LOSS, marker: bytes = MARKER):
        self.params = params
        self.codec = get_codec(params)
        self.k = params.k
        self.sync = FrameSynchronizer(params.n, h_tol, m_confirm, l_loss, marker)
        self.delineator = CellDelineator()
        self.counters = DecoderCounters()
        self._pending = np.zeros((0, CELL_BYTES), dtype=np.uint8)
        self._pending_avail = np.zeros(0, dtype=np.int64)
        self._next_slot = 0
        self._last_end = None
        self._pipe_fed = 0
        self.last_words = None
        self.last_decoded = None

    def push(self, data) -> np.ndarray:
        arr = _as_array(data)
        c = self.counters
        c.link_bytes += arr.size
        words = self.sync.push(arr)
        self.last_words = words
        self.last_decoded = None
        if words.data.shape[0]:
            res = self.codec.decode_batch(words.data)
            self.last_decoded = res
            nfail = int((~res.ok).sum())
            c.blocks_failed += nfail
            c.blocks_ok += res.ok.size - nfail
            c.symbols_corrected += int(res.corrected.sum(dtype=np.int64))
            self._unpack(res.data, words.starts, words.ends, words.released)
        return self._schedule()

    def _unpack(self, payloads: np.ndarray, starts: np.ndarray, ends: np.ndarray,
                released: np.ndarray) -> None:
        prev = np.concatenate([[-1 if self._last_end is None else self._last_end], ends[:-1]])
        breaks = np.flatnonzero(starts != prev).tolist()
        bounds = breaks + [payloads.shape[0]]
        if not breaks or breaks[0] != 0:
            bounds = [0] + bounds
        self._last_end = int(ends[-1])
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            if lo in breaks:
                self.delineator.reset()
                self.counters.pipe_resets += 1
                self._pipe_fed = self.delineator.state.offset
            chunk = payloads[lo:hi]
            batch = self.delineator.push(chunk.ravel())
            base = self._pipe_fed
            self._pipe_fed += chunk.size
            if not len(batch):
                continue
            frame = -(-(batch.ready - base) // self.k) - 1
            avail = -(-released[lo:hi][frame] // 8)
            filler = filler_mask(batch.cells)
            self.counters.filler_removed += int(filler.sum())
            self.counters.hec_invalid_forwarded += int((~batch.hec_ok).sum())
            self._pending = np.concatenate([self._pending, batch.cells[~filler]])
            self._pending_avail = np.concatenate([self._pending_avail, avail[~filler]])

    def _schedule(self) -> np.ndarray:
        s0 = self._next_slot
        slot_end = self.counters.link_bytes // CELL_BYTES
        if slot_end <= s0:
            return np.zeros(0, dtype=np.uint8)
        earliest = -(-self._pending_avail // CELL_BYTES)
        slots = _slot_schedule(earliest, s0)
        out = slots < slot_end
        block = idle_cells(slot_end - s0)
        block[slots[out] - s0] = self._pending[out]
        sent = int(out.sum())
        self.counters.cells_out += sent
        self.counters.idle_minted += block.shape[0] - sent
        self._pending = self._pending[~out]
        self._pending_avail = self._pending_avail[~out]
        self._next_slot = slot_end
        return block.ravel()


def encode_stream(input_bytes, encoder: LinkEncoder | None = None) -> tuple[bytes, LinkEncoder]:
    encoder = encoder if encoder is not None else LinkEncoder()
    return encoder.push(input_bytes).tobytes(), encoder


def decode_stream(link_bytes, decoder: LinkDecoder | None = None) -> tuple[bytes, LinkDecoder]:
    decoder = decoder if decoder is not None else LinkDecoder()
    return decoder.push(link_bytes).tobytes(), decoder


# run harness ----------------------------------------------------------------

@dataclass
class CodingStats:
    """Post-decode comparison of RS payloads against what was transmitted."""
    link_bits: int = 0
    frames_compared: int = 0
    frames_unaligned: int = 0
    channel_symbol_errors: int = 0      # codeword symbols hit by the channel
    codeword_symbols: int = 0
    output_symbol_errors: int = 0       # payload symbols still wrong after decoding
    output_bit_errors: int = 0
    payload_symbols: int = 0

    @property
    def output_ber(self) -> float:
        return self.output_bit_errors / (8 * self.payload_symbols) if self.payload_symbols else 0.0

    @property
    def output_ser(self) -> float:
        return self.output_symbol_errors / self.payload_symbols if self.payload_symbols else 0.0

    @property
    def channel_ser(self) -> float:
        return self.channel_symbol_errors / self.codeword_symbols if self.codeword_symbols else 0.0

    def merge(self, other: "CodingStats") -> "CodingStats":
        return CodingStats(*(getattr(self, f) + getattr(other, f) for f in self.__dataclass_fields__))


@dataclass
class LinkResult:
    metrics: LinkMetrics
    mode: str
    encoder: EncoderCounters | None = None
    decoder: DecoderCounters | None = None
    coding: CodingStats = field(default_factory=CodingStats)
    sync_acquired: int = 0
    sync_lost: int = 0
    cells_in: int = 0
    cells_out: int = 0


class _TxLog:
    """Recent transmitted payloads and codewords, by frame index."""

    def __init__(self, keep: int):
        self.keep = keep
        self._parts: list[tuple[int, np.ndarray, np.ndarray]] = []

    def add(self, first: int, payloads: np.ndarray, codewords: np.ndarray) -> None:
        if payloads.shape[0]:
            self._parts.append((first, payloads, codewords))
            while sum(p[1].shape[0] for p in self._parts) > self.keep and len(self._parts) > 2:
                self._parts.pop(0)

    def lookup(self, idx: np.ndarray):
        pay = np.zeros((idx.size, self._parts[0][1].shape[1] if self._parts else 0), dtype=np.uint8)
        cw = np.zeros((idx.size, self._parts[0][2].shape[1] if self._parts else 0), dtype=np.uint8)
        found = np.zeros(idx.size, dtype=bool)
        for first, p, c in self._parts:
            hit = (idx >= first) & (idx < first + p.shape[0])
            pay[hit] = p[idx[hit] - first]
            cw[hit] = c[idx[hit] - first]
            found |= hit
        return pay, cw, found


def _compare(stats: CodingStats, log: _TxLog, decoder: LinkDecoder, frame_bits: int) -> None:
    words, res = decoder.last_words, decoder.last_decoded
    if res is None:
        return
    aligned = words.starts % frame_bits == 0
    idx = words.starts // frame_bits
    pay, cw, found = log.lookup(idx)
    use = aligned & found
    stats.frames_unaligned += int((~use).sum())
    if not use.any():
        return
    rx, dec, tx_cw, tx_pay = words.data[use], res.data[use], cw[use], pay[use]
    stats.frames_compared += int(use.sum())
    stats.channel_symbol_errors += int((rx != tx_cw).sum())
    stats.codeword_symbols += rx.size
    diff = dec ^ tx_pay
    stats.output_symbol_errors += int((diff != 0).sum())
    stats.output_bit_errors += int(POPCOUNT8[diff].sum(dtype=np.int64))
    stats.payload_symbols += dec.size


def run_link(traffic: TrafficConfig, channel: ChannelConfig, mode: str = "enhanced",
             params: RsCodeParams = DEFAULT_PARAMS, fifo_depth: int = FIFO_DEPTH,
             h_tol: int = H_TOL, m_confirm: int = M_CONFIRM, l_loss: int = L_LOSS,
             block_size: int | None = None, secb_threshold: int | None = None,
             chunk_cells: int = 1 << 15, drain_slots: int = DRAIN_SLOTS,
             tap: Callable[[np.ndarray, np.ndarray], None] | None = None) -> LinkResult:
    """One direction: generator -> [encoder ->] channel -> [decoder ->] verifier.

    ``mode`` is "baseline" (raw cells over the channel) or "enhanced".
    ``tap(sent, received)`` sees every switch-side chunk pair when given.
    """
    if mode not in ("baseline", "enhanced"):
        raise ValueError(f"mode must be baseline or enhanced, got {mode!r}")
    gen = CbrGenerator(traffic)
    vkw = {}
    if block_size is not None:
        vkw["block_size"] = block_size
    if secb_threshold is not None:
        vkw["secb_threshold"] = secb_threshold
    verifier = StreamVerifier(traffic, **vkw)
    chan = Channel(channel)
    result = LinkResult(metrics=LinkMetrics(), mode=mode)
    enc = dec = None
    if mode == "enhanced":
        enc = LinkEncoder(params, fifo_depth)
        dec = LinkDecoder(params, h_tol, m_confirm, l_loss)
        log = _TxLog(keep=4 * (chunk_cells * CELL_BYTES // enc.frame_bytes + 8))
        frame_bits = 8 * enc.frame_bytes
    total = gen.total_slots + drain_slots
    for lo in range(0, total, chunk_cells):
        hi = min(lo + chunk_cells, total)
        live_hi = min(hi, gen.total_slots)
        cells = gen.slots(lo, live_hi) if live_hi > lo else np.zeros((0, CELL_BYTES), dtype=np.uint8)
        if hi > live_hi:
            cells = np.concatenate([cells, idle_cells(hi - max(lo, live_hi))])
        sent = cells.ravel()
        result.cells_in += cells.shape[0]
        if mode == "baseline":
            received = chan.corrupt_array(sent.copy())
            result.coding.link_bits += 8 * sent.size
        else:
            link = enc.push(sent)
            log.add(enc.last_first_frame, enc.last_payloads,
                    link.reshape(-1, enc.frame_bytes)[:, len(MARKER):])
            result.coding.link_bits += 8 * link.size
            received = dec.push(chan.corrupt_array(link.copy()))
            _compare(result.coding, log, dec, frame_bits)
        result.cells_out += received.size // CELL_BYTES
        if tap is not None:
            tap(sent, received)
        verifier.push_bytes(received)
    result.metrics = verifier.finish()
    if mode == "enhanced":
        result.encoder = enc.counters
        result.decoder = dec.counters
        result.sync_acquired = dec.sync.events.acquired
        result.sync_lost = dec.sync.events.lost
    return result


@dataclass
class DuplexResult:
    a_to_b: LinkResult
    b_to_a: LinkResult

    @property
    def directions(self) -> tuple[LinkResult, LinkResult]:
        return self.a_to_b, self.b_to_a


def run_duplex(traffic_a: TrafficConfig, traffic_b: TrafficConfig, channel_ab: ChannelConfig,
               channel_ba: ChannelConfig, parallel: bool = False, **kwargs) -> DuplexResult:
    """Two independent enhancer pairs bridged by two independent channels."""
    jobs = [(traffic_a, channel_ab), (traffic_b, channel_ba)]
    if parallel:
        with ThreadPoolExecutor(max_workers=2) as pool:
            futures = [pool.submit(run_link, t, ch, **kwargs) for t, ch in jobs]
            a, b = (f.result() for f in futures)
    else:
        a, b = (run_link(t, ch, **kwargs) for t, ch in jobs)
    return DuplexResult(a, b)


def max_utilization(params: RsCodeParams = DEFAULT_PARAMS, marker: bytes = MARKER) -> float:
    """Largest assigned-cell share of the line the encoder sustains."""
    return params.k / (len(marker) + params.n)


def marker_overhead(params: RsCodeParams = DEFAULT_PARAMS, marker: bytes = MARKER) -> float:
    return len(marker) / (len(marker) + params.n)


def expansion_ratio(params: RsCodeParams = DEFAULT_PARAMS, marker: bytes = MARKER) -> float:
    """Link bytes per assigned-cell byte on a fully loaded link."""
    return (len(marker) + params.n) / params.k


__all__ = [
    "LinkEncoder", "LinkDecoder", "idle_cells", "EncoderCounters", "DecoderCounters", "encode_stream",
    "decode_stream", "run_link", "run_duplex", "LinkResult", "DuplexResult", "CodingStats",
    "max_utilization", "marker_overhead", "expansion_ratio", "FIFO_DEPTH",
]
