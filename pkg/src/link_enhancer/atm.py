"""ATM cells, HEC, idle-cell handling and HEC-based cell delineation.

Serialized cell layout (53 bytes, UNI):

    byte 0   GFC(4) | VPI[7:4]
    byte 1   VPI[3:0] | VCI[15:12]
    byte 2   VCI[11:4]
    byte 3   VCI[3:0] | PTI(3) | CLP(1)
    byte 4   HEC = CRC-8(bytes 0..3, x^8+x^2+x+1) XOR 0x55
    5..52    payload
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

CELL_BYTES = 53
HEADER_BYTES = 4
PAYLOAD_BYTES = 48
HEC_COSET = 0x55
HEC_POLY = 0x07
IDLE_HEADER = bytes([0x00, 0x00, 0x00, 0x01])
IDLE_PAYLOAD_BYTE = 0x6A

# I.432 delineation hysteresis
ALPHA = 7
DELTA = 6
_HUNT_WINDOW = 4096


def _crc8_table() -> np.ndarray:
    table = np.zeros(256, dtype=np.uint8)
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = ((crc << 1) ^ HEC_POLY) & 0xFF if crc & 0x80 else (crc << 1) & 0xFF
        table[byte] = crc
    return table


CRC8_TABLE = _crc8_table()
_CRC8 = CRC8_TABLE.tolist()


def compute_hec(header: bytes) -> int:
    """HEC octet for a 4-byte cell header."""
    if len(header) != HEADER_BYTES:
        raise ValueError(f"ATM header is {HEADER_BYTES} bytes, got {len(header)}")
    crc = 0
    for b in header:
        crc = _CRC8[crc ^ b]
    return crc ^ HEC_COSET


def verify_hec(header: bytes, hec: int) -> bool:
    return compute_hec(header) == hec


def hec_batch(headers: np.ndarray) -> np.ndarray:
    """HEC for each row of an (N, >=4) uint8 array (uses the first 4 columns)."""
    crc = CRC8_TABLE[headers[:, 0]]
    crc = CRC8_TABLE[crc ^ headers[:, 1]]
    crc = CRC8_TABLE[crc ^ headers[:, 2]]
    crc = CRC8_TABLE[crc ^ headers[:, 3]]
    return crc ^ np.uint8(HEC_COSET)


def hec_ok_batch(cells: np.ndarray) -> np.ndarray:
    return hec_batch(cells) == cells[:, 4]


class CellClass(enum.Enum):
    ASSIGNED = "assigned"
    IDLE = "idle"
    HEC_INVALID = "hec_invalid"


def pack_header(vpi: int, vci: int, pti: int = 0, clp: int = 0, gfc: int = 0) -> bytes:
    if not (0 <= gfc < 16 and 0 <= vpi < 256 and 0 <= vci < 65536 and 0 <= pti < 8 and clp in (0, 1)):
        raise ValueError("header field out of range")
    word = (gfc << 28) | (vpi << 20) | (vci << 4) | (pti << 1) | clp
    return word.to_bytes(4, "big")


@dataclass(frozen=True)
class AtmCell:
    header: bytes
    hec: int
    payload: bytes = field(repr=False)

    def __post_init__(self):
        if len(self.header) != HEADER_BYTES or len(self.payload) != PAYLOAD_BYTES:
            raise ValueError("ATM cell needs a 4-byte header and 48-byte payload")

    @classmethod
    def build(cls, vpi: int, vci: int, payload: bytes, pti: int = 0, clp: int = 0, gfc: int = 0) -> "AtmCell":
        header = pack_header(vpi, vci, pti, clp, gfc)
        return cls(header, compute_hec(header), bytes(payload))

    @classmethod
    def from_bytes(cls, raw: bytes) -> "AtmCell":
        if len(raw) != CELL_BYTES:
            raise ValueError(f"ATM cell is {CELL_BYTES} bytes, got {len(raw)}")
        raw = bytes(raw)
        return cls(raw[:4], raw[4], raw[5:])

    def to_bytes(self) -> bytes:
        return self.header + bytes([self.hec]) + self.payload

    @property
    def word(self) -> int:
        return int.from_bytes(self.header, "big")

    @property
    def gfc(self) -> int:
        return self.word >> 28

    @property
    def vpi(self) -> int:
        return (self.word >> 20) & 0xFF

    @property
    def vci(self) -> int:
        return (self.word >> 4) & 0xFFFF

    @property
    def pti(self) -> int:
        return (self.word >> 1) & 0x7

    @property
    def clp(self) -> int:
        return self.word & 1

    @property
    def hec_valid(self) -> bool:
        return verify_hec(self.header, self.hec)


def classify(cell: AtmCell) -> CellClass:
    # payload is deliberately ignored so a corrupted idle payload still drops
    if not cell.hec_valid:
        return CellClass.HEC_INVALID
    if cell.header == IDLE_HEADER:
        return CellClass.IDLE
    return CellClass.ASSIGNED


def make_idle_cell() -> AtmCell:
    return AtmCell(IDLE_HEADER, compute_hec(IDLE_HEADER), bytes([IDLE_PAYLOAD_BYTE]) * PAYLOAD_BYTES)


IDLE_CELL_BYTES = make_idle_cell().to_bytes()
IDLE_CELL_ARRAY = np.frombuffer(IDLE_CELL_BYTES, dtype=np.uint8)


def filler_mask(cells: np.ndarray) -> np.ndarray:
    """Rows that are regenerable filler: idle cells and unassigned cells.

    Unassigned cells have an all-zero header apart from PTI, with CLP = 0.
    Only rows with a valid HEC qualify.
    """
    h = cells[:, :4]
    zero_top = (h[:, 0] == 0) & (h[:, 1] == 0) & (h[:, 2] == 0)
    idle = zero_top & (h[:, 3] == 0x01)
    unassigned = zero_top & ((h[:, 3] & 0xF1) == 0)
    return (idle | unassigned) & hec_ok_batch(cells)


class DelineationMode(enum.Enum):
    HUNT = "hunt"
    PRESYNC = "presync"
    SYNC = "sync"


class CellBatch(NamedTuple):
    cells: np.ndarray       # (N, 53) uint8
    hec_ok: np.ndarray      # (N,) bool; False only for cells passed through in SYNC
    ends: np.ndarray        # (N,) int64 stream offset just past each cell
    ready: np.ndarray       # (N,) int64 stream offset at which each cell was released

    @classmethod
    def empty(cls) -> "CellBatch":
        return cls(np.zeros((0, CELL_BYTES), dtype=np.uint8), np.zeros(0, dtype=bool),
                   np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return self.cells.shape[0]


def concat_batches(batches: list[CellBatch]) -> CellBatch:
    batches = [b for b in batches if len(b)]
    if not batches:
        return CellBatch.empty()
    if len(batches) == 1:
        return batches[0]
    return CellBatch(*(np.concatenate(parts) for parts in zip(*batches)))


@dataclass
class DelineationState:
    """Delineator state: mode, hysteresis counter and unconsumed input.

    ``count`` is the number of confirmed cells in PRESYNC (1..DELTA) or the
    run of consecutive HEC failures in SYNC (0..ALPHA-1).
    """

    mode: DelineationMode = DelineationMode.HUNT
    count: int = 0
    offset: int = 0                  # absolute stream offset of buf[0]
    pos: int = 0                     # next position to examine, relative to buf
    buf: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint8), repr=False)
    held: int = 0                    # PRESYNC cells awaiting confirmation, ending at pos
    discarded: int = 0               # bytes skipped while hunting, cumulative
    cells_emitted: int = 0
    hec_errors: int = 0              # HEC-invalid cells passed in SYNC
    sync_losses: int = 0


class CellDelineator:
    """Byte-aligned HEC delineation (HUNT -> PRESYNC -> SYNC).

    Cells validated during PRESYNC are held back and released together once
    SYNC is declared; if PRESYNC fails they are dropped.  In SYNC every cell
    is released, HEC-invalid ones flagged, until ALPHA consecutive HEC
    failures send the machine back to HUNT.
    """

    def __init__(self, alpha: int = ALPHA, delta: int = DELTA, state: DelineationState | None = None):
        if alpha < 1 or delta < 0:
            raise ValueError("alpha must be >= 1 and delta >= 0")
        self.alpha = alpha
        self.delta = delta
        self.state = state if state is not None else DelineationState()

    @property
    def mode(self) -> DelineationMode:
        return self.state.mode

    def reset(self) -> None:
        """Drop buffered bytes and return to HUNT (stream discontinuity)."""
        st = self.state
        st.offset += st.buf.size
        st.buf = np.zeros(0, dtype=np.uint8)
        st.pos = 0
        st.held = 0
        st.count = 0
        st.mode = DelineationMode.HUNT

    def skip(self, nbytes: int) -> None:
        """Account for a gap of ``nbytes`` in the stream, resetting alignment."""
        self.reset()
        self.state.offset += nbytes

    def push(self, data) -> CellBatch:
        st = self.state
        data = np.frombuffer(data, dtype=np.uint8) if isinstance(data, (bytes, bytearray, memoryview)) \
            else np.asarray(data, dtype=np.uint8)
        st.buf = np.concatenate([st.buf, data]) if st.buf.size else data.copy()
        out: list[CellBatch] = []
        while True:
            if st.mode is DelineationMode.HUNT:
                if not self._hunt():
                    break
            elif st.mode is DelineationMode.PRESYNC:
                released = self._presync()
                if released is None:
                    break
                out.append(released)
            else:
                batch, more = self._sync()
                out.append(batch)
                if not more:
                    break
        self._compact()
        result = concat_batches(out)
        st.cells_emitted += len(result)
        return result

    # states ---------------------------------------------------------------
    def _hunt(self) -> bool:
        st = self.state
        buf = st.buf
        while True:
            last = min(buf.size - 5, st.pos + _HUNT_WINDOW - 1)   # last offset with header + HEC
            if last < st.pos:
                return False
            headers = np.lib.stride_tricks.sliding_window_view(buf[st.pos:last + 5], 5)
            hits = np.flatnonzero(hec_batch(headers) == headers[:, 4])
            if hits.size:
                break
            st.discarded += last + 1 - st.pos
            st.pos = last + 1
        st.discarded += int(hits[0])
        st.pos += int(hits[0])
        if self.delta == 0:
            st.mode = DelineationMode.SYNC
            st.count = 0
            return True
        st.mode = DelineationMode.PRESYNC
        st.count = 1
        st.held = 1
        st.pos += CELL_BYTES
        return True

    def _presync(self) -> CellBatch | None:
        st = self.state
        buf = st.buf
        while st.count < self.delta + 1:
            if st.pos + 5 > buf.size:
                return None
            hdr = buf[st.pos:st.pos + 5]
            if compute_hec(hdr[:4].tobytes()) != int(hdr[4]):
                # resume hunting just past the first held cell's start
                first = st.pos - st.held * CELL_BYTES
                st.discarded += 1
                st.pos = first + 1
                st.held = 0
                st.count = 0
                st.mode = DelineationMode.HUNT
                return CellBatch.empty()
            if st.count == self.delta:
                break
            st.count += 1
            st.held += 1
            st.pos += CELL_BYTES
        # the DELTA-th confirming cell must be complete before SYNC releases it
        if st.pos + CELL_BYTES > buf.size:
            return None
        st.held += 1
        st.pos += CELL_BYTES
        start = st.pos - st.held * CELL_BYTES
        cells = buf[start:st.pos].reshape(st.held, CELL_BYTES).copy()
        ends = st.offset + start + CELL_BYTES * np.arange(1, st.held + 1, dtype=np.int64)
        ready = np.full(st.held, st.offset + st.pos, dtype=np.int64)
        st.held = 0
        st.count = 0
        st.mode = DelineationMode.SYNC
        return CellBatch(cells, np.ones(cells.shape[0], dtype=bool), ends, ready)

    def _sync(self) -> tuple[CellBatch, bool]:
        st = self.state
        ncells = (st.buf.size - st.pos) // CELL_BYTES
        if ncells == 0:
            return CellBatch.empty(), False
        cells = st.buf[st.pos:st.pos + ncells * CELL_BYTES].reshape(ncells, CELL_BYTES)
        ok = hec_ok_batch(cells)
        stop = ncells
        lost = False
        run = st.count
        prev = -1
        for i in np.flatnonzero(~ok).tolist():
            run = run + 1 if i == prev + 1 else 1
            prev = i
            if run >= self.alpha:
                stop = i            # the ALPHA-th bad cell is not released
                lost = True
                break
        if prev != ncells - 1:
            run = 0
        ends = st.offset + st.pos + CELL_BYTES * np.arange(1, stop + 1, dtype=np.int64)
        batch = CellBatch(cells[:stop].copy(), ok[:stop].copy(), ends, ends.copy())
        st.hec_errors += int((~ok[:stop]).sum())
        if lost:
            st.pos += stop * CELL_BYTES + 1
            st.mode = DelineationMode.HUNT
            st.count = 0
            st.sync_losses += 1
            return batch, True
        st.pos += ncells * CELL_BYTES
        st.count = run
        return batch, False

    def _compact(self) -> None:
        st = self.state
        # keep held PRESYNC cells; they are released from the buffer later
        keep_from = st.pos - st.held * CELL_BYTES if st.mode is DelineationMode.PRESYNC else st.pos
        keep_from = max(0, min(keep_from, st.buf.size))
        if keep_from:
            st.buf = st.buf[keep_from:].copy()
            st.offset += keep_from
            st.pos -= keep_from


def delineate(data, state: DelineationState | None = None) -> tuple[DelineationState, CellBatch, int]:
    """Advance a delineation state over ``data``.

    Returns ``(state', cells, discarded_bytes)`` where ``discarded_bytes``
    counts bytes skipped while hunting during this call.
    """
    d = CellDelineator(state=state)
    before = d.state.discarded
    cells = d.push(data)
    return d.state, cells, d.state.discarded - before
