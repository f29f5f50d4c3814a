"""Test-cell traffic generation and cell-transfer performance measurement.

Test cell payload (48 bytes, local format):

    0..3    sequence number, uint32 big-endian
    4..11   transmit timestamp, virtual ns, uint64 big-endian
    12..45  pad, 0x55
    46..47  CRC-16/CCITT (poly 0x1021, init 0xFFFF) over bytes 0..45, big-endian

Timestamps are cell-slot times, ``slot * 424 / line_rate`` seconds, so all
latency figures are in simulated time.
"""
from __future__ import annotations

import binascii
import csv
import io
import math
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from typing import Iterator

import numpy as np

from .atm import (CELL_BYTES, IDLE_CELL_ARRAY, CellBatch, CellDelineator, filler_mask,
                  hec_ok_batch, pack_header, compute_hec)
from .framing import E1_LINE_RATE, POPCOUNT8

CELL_BITS = 8 * CELL_BYTES
PAD_BYTE = 0x55
CRC_SPAN = 46
DEFAULT_VPI = 1
DEFAULT_VCI = 32
BLOCK_SIZE = 16384
SECB_THRESHOLD = 32
SEQ_WINDOW = 1 << 16


def _crc16_table() -> np.ndarray:
    table = np.zeros(256, dtype=np.uint16)
    for byte in range(256):
        crc = byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) & 0xFFFF if crc & 0x8000 else (crc << 1) & 0xFFFF
        table[byte] = crc
    return table


CRC16_TABLE = _crc16_table()


def crc16_ccitt(data: bytes) -> int:
    return binascii.crc_hqx(bytes(data), 0xFFFF)


def crc16_batch(rows: np.ndarray) -> np.ndarray:
    """CRC-16/CCITT-FALSE of every row of a uint8 array."""
    crc = np.full(rows.shape[0], 0xFFFF, dtype=np.uint16)
    for j in range(rows.shape[1]):
        crc = (crc << np.uint16(8)) ^ CRC16_TABLE[((crc >> np.uint16(8)) ^ rows[:, j]) & 0xFF]
    return crc


def make_test_payload(seq: int, timestamp_ns: int) -> bytes:
    body = seq.to_bytes(4, "big") + timestamp_ns.to_bytes(8, "big") + bytes([PAD_BYTE]) * 34
    return body + crc16_ccitt(body).to_bytes(2, "big")


def parse_test_payload(payload: bytes) -> tuple[int, int, bool]:
    """Return (seq, timestamp_ns, crc_ok)."""
    payload = bytes(payload)
    ok = crc16_ccitt(payload[:CRC_SPAN]) == int.from_bytes(payload[CRC_SPAN:48], "big")
    return int.from_bytes(payload[:4], "big"), int.from_bytes(payload[4:12], "big"), ok


def traffic_header(vpi: int = DEFAULT_VPI, vci: int = DEFAULT_VCI) -> bytes:
    return pack_header(vpi, vci)


def cell_time_ns(line_rate: float) -> float:
    return CELL_BITS * 1e9 / line_rate


@dataclass(frozen=True)
class TrafficConfig:
    utilization: float = 0.5
    line_rate: float = E1_LINE_RATE
    vpi: int = DEFAULT_VPI
    vci: int = DEFAULT_VCI
    duration: float | None = 1.0      # seconds of line time
    cells: int | None = None          # test cells; overrides duration when set

    def __post_init__(self):
        if not 0.0 < self.utilization <= 1.0:
            raise ValueError(f"traffic.utilization must lie in (0, 1], got {self.utilization}")
        if self.line_rate <= 0:
            raise ValueError("line_rate must be positive")

    @property
    def ratio(self) -> Fraction:
        return Fraction(self.utilization).limit_denominator(1 << 20)

    @property
    def total_slots(self) -> int:
        if self.cells is not None:
            r = self.ratio
            # smallest slot count carrying the requested number of test cells
            return -(-self.cells * r.denominator // r.numerator)
        return int(math.floor(self.duration * self.line_rate / CELL_BITS + 1e-9))

    @property
    def test_cells(self) -> int:
        r = self.ratio
        return self.total_slots * r.numerator // r.denominator

    @property
    def header(self) -> bytes:
        return traffic_header(self.vpi, self.vci)


class CbrGenerator:
    """Evenly spaced test cells at ``utilization`` of the cell-slot rate, idle elsewhere.

    Slot ``i`` carries a test cell when ``floor((i+1)u) > floor(iu)``.
    """

    def __init__(self, config: TrafficConfig):
        self.config = config
        self.total_slots = config.total_slots
        self.test_cells = config.test_cells
        hdr = config.header
        self._header = np.frombuffer(hdr + bytes([compute_hec(hdr)]), dtype=np.uint8)
        self._slot_ns_num = CELL_BITS * 10 ** 9
        self._slot = 0

    def slots(self, start: int, stop: int) -> np.ndarray:
        r = self.config.ratio
        i = np.arange(start, stop, dtype=np.int64)
        first = (i * r.numerator) // r.denominator
        is_test = ((i + 1) * r.numerator) // r.denominator > first
        cells = np.empty((stop - start, CELL_BYTES), dtype=np.uint8)
        cells[:] = IDLE_CELL_ARRAY
        t = np.flatnonzero(is_test)
        if t.size:
            seq = first[t].astype(np.uint64)
            ts = ((i[t] * self._slot_ns_num) / self.config.line_rate).round().astype(np.uint64)
            body = np.empty((t.size, 48), dtype=np.uint8)
            body[:, 0:4] = seq.astype(">u4").view(np.uint8).reshape(-1, 4)
            body[:, 4:12] = ts.astype(">u8").view(np.uint8).reshape(-1, 8)
            body[:, 12:CRC_SPAN] = PAD_BYTE
            crc = crc16_batch(body[:, :CRC_SPAN])
            body[:, 46] = crc >> 8
            body[:, 47] = crc & 0xFF
            cells[t, :5] = self._header
            cells[t, 5:] = body
        return cells

    def chunks(self, chunk_cells: int = 1 << 16) -> Iterator[np.ndarray]:
        for lo in range(0, self.total_slots, chunk_cells):
            yield self.slots(lo, min(lo + chunk_cells, self.total_slots))

    def to_bytes(self) -> bytes:
        return self.slots(0, self.total_slots).tobytes()


def generate_cbr(utilization: float, duration: float, line_rate: float = E1_LINE_RATE,
                 vpi_vci: tuple[int, int] = (DEFAULT_VPI, DEFAULT_VCI)) -> bytes:
    """Whole CBR test stream as contiguous 53-byte cells."""
    cfg = TrafficConfig(utilization, line_rate, vpi_vci[0], vpi_vci[1], duration=duration)
    return CbrGenerator(cfg).to_bytes()


@dataclass
class LinkMetrics:
    total_tx: int = 0
    total_rx: int = 0
    errored: int = 0
    lost: int = 0
    misinserted: int = 0
    cer: float = 0.0
    clr: float = 0.0
    secbr: float = 0.0
    block_size: int = BLOCK_SIZE
    secb_threshold: int = SECB_THRESHOLD
    mean_latency: float = 0.0
    latency_p99: float = 0.0
    good: int = 0
    header_errored: int = 0
    severely_errored_blocks: int = 0
    total_blocks: int = 0
    max_latency: float = 0.0
    duration: float = 0.0

    @classmethod
    def csv_header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def csv_row(self) -> list:
        return [getattr(self, name) for name in self.csv_header()]

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(self.csv_header())
        w.writerow(self.csv_row())
        return buf.getvalue()

    def as_dict(self) -> dict:
        return asdict(self)

    def summary(self) -> str:
        rate = self.total_rx / self.duration if self.duration else 0.0
        rows = [
            ("Cells/Sec", f"{rate:.3f}"),
            ("Mbps", f"{rate * CELL_BITS / 1e6:.4f}"),
            ("Total", f"{self.total_rx}"),
            ("Cells Lost", f"{self.lost}"),
            ("Cell Loss Ratio", f"{self.clr:.6g}"),
            ("Errored Cells", f"{self.errored}"),
            ("Cell Error Rate", f"{self.cer:.6g}"),
            ("Severely Errored Blocks", f"{self.severely_errored_blocks}"),
            ("Severely Errored Blocks Ratio", f"{self.secbr:.6g}"),
            ("Misinserted Cells", f"{self.misinserted}"),
            ("Mean Latency (s)", f"{self.mean_latency:.6g}"),
            ("Latency p99 (s)", f"{self.latency_p99:.6g}"),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


class StreamVerifier:
    """Classifies received cells against the generated test stream.

    A test cell is recognised by its header.  Cells whose HEC fails are
    attributed to the test stream when their header is nearer (in bits) to
    the test header than to the idle header.  Only payload corruption, as
    seen by the payload CRC, makes a cell errored; header-only damage is
    tallied separately in ``header_errored``.
    """

    def __init__(self, traffic: TrafficConfig, block_size: int = BLOCK_SIZE,
                 secb_threshold: int = SECB_THRESHOLD, window: int = SEQ_WINDOW,
                 rx_offset_ns: float = 0.0):
        self.traffic = traffic
        self.block_size = block_size
        self.secb_threshold = secb_threshold
        self.window = window
        self.rx_offset_ns = rx_offset_ns
        self._test_hdr = np.frombuffer(traffic.header, dtype=np.uint8)
        self._idle_hdr = IDLE_CELL_ARRAY[:4]
        self._delineator = CellDelineator()
        self.next_seq = 0
        self.pending_errored = 0
        self.good = 0
        self.errored = 0
        self.lost = 0
        self.misinserted = 0
        self.header_errored = 0
        self.rx_cells = 0
        self._impairments: dict[int, int] = {}
        self._latencies: list[np.ndarray] = []

    # input ----------------------------------------------------------------
    def push_bytes(self, data) -> None:
        self.push_cells(self._delineator.push(data))

    def push_cells(self, batch: CellBatch) -> None:
        if not len(batch):
            return
        cells = batch.cells
        self.rx_cells += cells.shape[0]
        hec_ok = batch.hec_ok & hec_ok_batch(cells)
        is_test_hdr = (cells[:, :4] == self._test_hdr).all(axis=1)
        filler = filler_mask(cells)
        foreign = hec_ok & ~is_test_hdr & ~filler
        bad_hdr = ~hec_ok
        if bad_hdr.any():
            d_test = POPCOUNT8[cells[bad_hdr, :4] ^ self._test_hdr].sum(axis=1)
            d_idle = POPCOUNT8[cells[bad_hdr, :4] ^ self._idle_hdr].sum(axis=1)
            near_test = np.zeros(cells.shape[0], dtype=bool)
            near_test[np.flatnonzero(bad_hdr)[d_test < d_idle]] = True
        else:
            near_test = np.zeros(cells.shape[0], dtype=bool)
        self.header_errored += int(near_test.sum())
        test = (hec_ok & is_test_hdr) | near_test
        # foreign cells interleave with test cells; keep arrival order
        rows = np.flatnonzero(test | foreign)
        if rows.size == 0:
            return
        payload = cells[rows, 5:]
        crc_ok = crc16_batch(payload[:, :CRC_SPAN]) == (
            (payload[:, 46].astype(np.uint16) << 8) | payload[:, 47])
        seq = payload[:, 0:4].copy().view(">u4").ravel().astype(np.int64)
        ts = payload[:, 4:12].copy().view(">u8").ravel().astype(np.float64)
        rx_slot = (batch.ends[rows] - CELL_BYTES) // CELL_BYTES
        rx_ns = self.rx_offset_ns + np.round(rx_slot * (CELL_BITS * 10 ** 9) / self.traffic.line_rate)
        kind_foreign = foreign[rows]
        self._consume(crc_ok, seq, rx_ns - ts, kind_foreign)

    def _consume(self, crc_ok, seq, latency, foreign) -> None:
        n = seq.size
        expect = np.arange(self.next_seq, self.next_seq + n)
        if self.pending_errored == 0 and crc_ok.all() and not foreign.any() and (seq == expect).all():
            self.good += n
            self.next_seq += n
            self._latencies.append(latency)
            return
        lat_keep = np.zeros(n, dtype=bool)
        crc_l, seq_l, foreign_l = crc_ok.tolist(), seq.tolist(), foreign.tolist()
        for i in range(n):
            if foreign_l[i]:
                self.misinserted += 1
                self._impair_one(self.next_seq)
                continue
            if not crc_l[i]:
                self.errored += 1
                self.pending_errored += 1
                continue
            s = seq_l[i]
            if self.next_seq <= s < self.next_seq + self.window:
                self._close_gap(s)
                self.good += 1
                self.next_seq = s + 1
                lat_keep[i] = True
            else:
                self.misinserted += 1
                self._impair_one(self.next_seq)
        self._latencies.append(latency[lat_keep])

    def _close_gap(self, upto: int) -> None:
        """Account errored/lost cells between next_seq and ``upto`` (exclusive)."""
        gap = upto - self.next_seq
        e = min(self.pending_errored, gap)
        self._impair_range(self.next_seq, self.next_seq + gap)
        if self.pending_errored > e:
            self._impair_one(upto, self.pending_errored - e)
        self.lost += gap - e
        self.pending_errored = 0

    def _impair_one(self, seq: int, count: int = 1) -> None:
        b = seq // self.block_size
        self._impairments[b] = self._impairments.get(b, 0) + count

    def _impair_range(self, lo: int, hi: int) -> None:
        while lo < hi:
            b = lo // self.block_size
            end = min(hi, (b + 1) * self.block_size)
            self._impairments[b] = self._impairments.get(b, 0) + (end - lo)
            lo = end

    # results --------------------------------------------------------------
    def finish(self, total_tx: int | None = None, duration: float | None = None) -> LinkMetrics:
        total_tx = self.traffic.test_cells if total_tx is None else total_tx
        if duration is None:
            duration = self.traffic.total_slots * CELL_BITS / self.traffic.line_rate
        lost = self.lost
        errored_pending = self.pending_errored
        if total_tx > self.next_seq:
            gap = total_tx - self.next_seq
            e = min(errored_pending, gap)
            lost += gap - e
            impair = dict(self._impairments)
            lo = self.next_seq
            while lo < total_tx:
                b = lo // self.block_size
                end = min(total_tx, (b + 1) * self.block_size)
                impair[b] = impair.get(b, 0) + (end - lo)
                lo = end
        else:
            impair = self._impairments
        blocks = total_tx // self.block_size
        severe = sum(1 for b, c in impair.items() if b < blocks and c > self.secb_threshold)
        lat = np.concatenate(self._latencies) if self._latencies else np.zeros(0)
        lat_s = lat * 1e-9
        total_rx = self.good + self.errored + self.misinserted
        return LinkMetrics(
            total_tx=total_tx,
            total_rx=total_rx,
            errored=self.errored,
            lost=lost,
            misinserted=self.misinserted,
            cer=self.errored / total_tx if total_tx else 0.0,
            clr=lost / total_tx if total_tx else 0.0,
            secbr=severe / blocks if blocks else 0.0,
            block_size=self.block_size,
            secb_threshold=self.secb_threshold,
            mean_latency=float(lat_s.mean()) if lat_s.size else 0.0,
            latency_p99=float(np.percentile(lat_s, 99)) if lat_s.size else 0.0,
            good=self.good,
            header_errored=self.header_errored,
            severely_errored_blocks=severe,
            total_blocks=blocks,
            max_latency=float(lat_s.max()) if lat_s.size else 0.0,
            duration=duration,
        )


def verify_stream(received, traffic: TrafficConfig, **kwargs) -> LinkMetrics:
    """Metrics for a received byte stream (or a delineated CellBatch)."""
    v = StreamVerifier(traffic, **kwargs)
    if isinstance(received, CellBatch):
        v.push_cells(received)
    else:
        v.push_bytes(received)
    return v.finish()
