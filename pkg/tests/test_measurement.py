import binascii

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from link_enhancer.atm import CELL_BYTES, IDLE_CELL_BYTES, AtmCell, filler_mask, hec_ok_batch
from link_enhancer.channel import ChannelConfig, corrupt
from link_enhancer.analysis import theoretical_cer
from link_enhancer.measurement import (CbrGenerator, LinkMetrics, StreamVerifier, TrafficConfig, crc16_batch,
                                       crc16_ccitt, generate_cbr, make_test_payload, parse_test_payload,
                                       traffic_header, verify_stream)


def cells_of(stream: bytes) -> np.ndarray:
    return np.frombuffer(stream, dtype=np.uint8).reshape(-1, CELL_BYTES)


def test_crc_matches_reference():
    assert crc16_ccitt(b"123456789") == 0x29B1
    rows = np.random.default_rng(0).integers(0, 256, size=(200, 46), dtype=np.uint8)
    assert [binascii.crc_hqx(r.tobytes(), 0xFFFF) for r in rows] == crc16_batch(rows).tolist()


@given(st.integers(0, 2 ** 32 - 1), st.integers(0, 2 ** 64 - 1))
def test_payload_roundtrip(seq, ts):
    payload = make_test_payload(seq, ts)
    assert len(payload) == 48 and payload[12:46] == b"\x55" * 34
    assert parse_test_payload(payload) == (seq, ts, True)


@given(st.integers(0, 383))
def test_payload_crc_catches_single_bit(bit):
    payload = bytearray(make_test_payload(7, 99))
    payload[bit // 8] ^= 0x80 >> (bit % 8)
    assert not parse_test_payload(bytes(payload))[2]


def test_cbr_rate_arithmetic():
    stream = generate_cbr(0.5, 1.0)
    cells = cells_of(stream)
    assert cells.shape[0] == 4830
    test = ~filler_mask(cells)
    assert test.sum() == 2415
    assert hec_ok_batch(cells).all()


def test_cbr_even_spacing_and_sequence():
    gen = CbrGenerator(TrafficConfig(utilization=0.3, duration=0.2))
    cells = gen.slots(0, gen.total_slots)
    idx = np.flatnonzero(~filler_mask(cells))
    assert set(np.diff(idx).tolist()) <= {3, 4}
    seqs = [parse_test_payload(cells[i, 5:].tobytes()) for i in idx]
    assert [s[0] for s in seqs] == list(range(len(idx)))
    assert all(s[2] for s in seqs)
    slot_ns = 424e9 / 2.048e6
    assert [s[1] for s in seqs[:3]] == [round(i * slot_ns) for i in idx[:3]]


def test_full_utilization_has_no_idle():
    cells = cells_of(generate_cbr(1.0, 0.05))
    assert not filler_mask(cells).any()


def test_cells_option_and_chunking():
    cfg = TrafficConfig(utilization=0.5, cells=1000)
    gen = CbrGenerator(cfg)
    assert gen.test_cells == 1000
    assert np.array_equal(np.concatenate(list(gen.chunks(77))), gen.slots(0, gen.total_slots))


def test_traffic_validation():
    with pytest.raises(ValueError):
        TrafficConfig(utilization=0.0)
    with pytest.raises(ValueError):
        TrafficConfig(utilization=1.5)


def test_identity_fixpoint():
    cfg = TrafficConfig(utilization=0.5, duration=5.0)
    m = verify_stream(generate_cbr(0.5, 5.0), cfg)
    assert (m.errored, m.lost, m.misinserted, m.cer, m.clr, m.secbr) == (0, 0, 0, 0.0, 0.0, 0.0)
    assert m.total_rx == m.total_tx == m.good == cfg.test_cells
    assert m.mean_latency == 0.0


def _stream(cfg):
    return bytearray(CbrGenerator(cfg).to_bytes())


def _test_rows(stream):
    return np.flatnonzero(~filler_mask(cells_of(bytes(stream))))


def test_loss_error_and_misinsertion_accounting():
    cfg = TrafficConfig(utilization=0.5, cells=100)
    raw = _stream(cfg)
    rows = _test_rows(raw)
    # payload hit on seq 10, drop seq 20-22, duplicate seq 30 at the end
    raw[rows[10] * 53 + 30] ^= 0x01
    dup = bytes(raw[rows[30] * 53:(rows[30] + 1) * 53])
    for r in rows[20:23]:
        raw[r * 53:(r + 1) * 53] = IDLE_CELL_BYTES
    raw += dup
    m = verify_stream(bytes(raw), cfg)
    assert (m.errored, m.lost, m.misinserted) == (1, 3, 1)
    assert m.good == 96 and m.total_rx == 98
    assert m.good + m.errored + m.misinserted == m.total_rx


def test_header_damage_counts_separately():
    cfg = TrafficConfig(utilization=0.5, cells=50)
    raw = _stream(cfg)
    rows = _test_rows(raw)
    raw[rows[5] * 53 + 2] ^= 0x04          # header bit: HEC fails, payload intact
    m = verify_stream(bytes(raw), cfg)
    assert m.header_errored == 1 and m.errored == 0 and m.lost == 0


def test_errored_cells_not_counted_lost():
    cfg = TrafficConfig(utilization=0.5, cells=60)
    raw = _stream(cfg)
    rows = _test_rows(raw)
    for r in rows[40:45]:
        raw[r * 53 + 20] ^= 0xFF
    m = verify_stream(bytes(raw), cfg)
    assert (m.errored, m.lost) == (5, 0)


def test_trailing_loss():
    cfg = TrafficConfig(utilization=0.5, cells=100)
    raw = _stream(cfg)
    rows = _test_rows(raw)
    m = verify_stream(bytes(raw[:rows[90] * 53]), cfg)
    assert m.lost == 10 and m.clr == pytest.approx(0.1)


def test_foreign_cell_is_misinserted():
    cfg = TrafficConfig(utilization=0.5, cells=20)
    raw = _stream(cfg)
    raw += AtmCell.build(9, 99, bytes(48)).to_bytes()
    assert verify_stream(bytes(raw), cfg).misinserted == 1


def test_severely_errored_blocks():
    cfg = TrafficConfig(utilization=1.0, cells=3 * 100)
    gen = CbrGenerator(cfg)
    raw = bytearray(gen.to_bytes())
    for i in range(100, 140):                     # 40 errored cells inside block 1
        raw[i * 53 + 25] ^= 0x01
    v = StreamVerifier(cfg, block_size=100, secb_threshold=32)
    v.push_bytes(bytes(raw))
    m = v.finish()
    assert m.total_blocks == 3 and m.severely_errored_blocks == 1
    assert m.secbr == pytest.approx(1 / 3)


def test_baseline_cer_tracks_theory():
    cfg = TrafficConfig(utilization=1.0, cells=100_000)
    rx = corrupt(CbrGenerator(cfg).to_bytes(), ChannelConfig.bsc(1e-3, 12))
    m = verify_stream(rx, cfg)
    p = theoretical_cer(1e-3)
    sigma = (p * (1 - p) / cfg.test_cells) ** 0.5
    assert abs(m.cer - p) < 4 * sigma


def test_metrics_formats():
    m = LinkMetrics(total_tx=10, total_rx=10, good=10, duration=1.0)
    lines = m.to_csv().splitlines()
    assert lines[0].split(",")[:8] == ["total_tx", "total_rx", "errored", "lost", "misinserted",
                                       "cer", "clr", "secbr"]
    text = m.summary()
    for label in ("Cells/Sec", "Mbps", "Total", "Cells Lost", "Cell Loss Ratio", "Errored Cells",
                  "Severely Errored Blocks", "Misinserted Cells"):
        assert label in text


@settings(max_examples=30)
@given(st.integers(0, 2 ** 32 - 1))
def test_conservation_under_random_damage(seed):
    rng = np.random.default_rng(seed)
    cfg = TrafficConfig(utilization=0.7, cells=300)
    raw = bytearray(CbrGenerator(cfg).to_bytes())
    for _ in range(rng.integers(0, 20)):
        raw[int(rng.integers(0, len(raw)))] ^= int(rng.integers(1, 256))
    m = verify_stream(bytes(raw), cfg)
    assert m.good + m.errored + m.misinserted == m.total_rx
    assert m.lost + m.good <= m.total_tx
    assert 0 <= m.cer <= 1 and 0 <= m.clr <= 1


def test_header_helper():
    assert traffic_header(1, 32) == bytes([0x00, 0x10, 0x02, 0x00])
