import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from link_enhancer.channel import Channel, ChannelConfig, bit_errors, corrupt, empirical_ber


def test_identity_and_inversion():
    data = np.random.default_rng(0).bytes(10_000)
    assert corrupt(data, ChannelConfig.bsc(0.0)) == data
    flipped = corrupt(data, ChannelConfig.bsc(1.0))
    assert bytes(a ^ 0xFF for a in data) == flipped


@pytest.mark.parametrize("p", [1e-2, 1e-3])
def test_bsc_rate_within_binomial_bounds(p):
    nbits = 8 * 2_000_000
    errs = bit_errors(bytes(nbits // 8), corrupt(bytes(nbits // 8), ChannelConfig.bsc(p, seed=4)))
    sigma = math.sqrt(nbits * p * (1 - p))
    assert abs(errs - nbits * p) < 4 * sigma


def test_bsc_flip_gaps_are_memoryless():
    ch = Channel(ChannelConfig.bsc(0.01, seed=8))
    pos = ch.flip_positions(5_000_000)
    gaps = np.diff(pos)
    # geometric(p): mean 1/p, variance (1-p)/p^2
    assert gaps.mean() == pytest.approx(100, rel=0.03)
    assert gaps.var() == pytest.approx(0.99 / 1e-4, rel=0.06)


@settings(max_examples=40)
@given(st.integers(0, 2 ** 63), st.lists(st.integers(0, 50_000), max_size=12),
       st.sampled_from(["bsc", "ge"]))
def test_chunking_invariance(seed, cuts, mode):
    cfg = ChannelConfig.bsc(3e-3, seed) if mode == "bsc" else \
        ChannelConfig.gilbert_elliott(1e-4, 0.1, 1e-3, 0.05, seed)
    data = bytes(200_000)
    whole = Channel(cfg).corrupt(data)
    ch, out, pos = Channel(cfg), [], 0
    for c in cuts + [len(data)]:
        out.append(ch.corrupt(data[pos:pos + c]))
        pos = min(len(data), pos + c)
    assert b"".join(out) == whole


def test_seed_determinism_and_independence():
    data = bytes(100_000)
    a = corrupt(data, ChannelConfig.bsc(1e-2, 5))
    assert a == corrupt(data, ChannelConfig.bsc(1e-2, 5))
    assert a != corrupt(data, ChannelConfig.bsc(1e-2, 6))


def test_gilbert_elliott_long_run_ber():
    cfg = ChannelConfig.gilbert_elliott(p_good=1e-4, p_bad=0.2, p_g2b=1e-4, p_b2g=5e-3, seed=3)
    nbytes = 10_000_000
    errs = Channel(cfg).flip_positions(8 * nbytes).size
    # bursts make the count overdispersed; mean burst carries ~40 flips over 2.5e3 runs
    assert errs / (8 * nbytes) == pytest.approx(cfg.mean_ber, rel=0.15)


def test_gilbert_elliott_is_bursty():
    cfg = ChannelConfig.gilbert_elliott(p_good=0.0, p_bad=0.5, p_g2b=1e-4, p_b2g=0.01, seed=2)
    pos = Channel(cfg).flip_positions(4_000_000)
    gaps = np.diff(pos)
    # inside a bad run gaps are ~2 bits; between runs ~1e4
    assert np.median(gaps) <= 3 and gaps.max() > 1000


def test_gilbert_elliott_degenerates_to_bsc():
    cfg = ChannelConfig.gilbert_elliott(p_good=2e-3, p_bad=2e-3, p_g2b=0.3, p_b2g=0.3, seed=1)
    n = 8 * 1_000_000
    errs = Channel(cfg).flip_positions(n).size
    assert abs(errs - n * 2e-3) < 4 * math.sqrt(n * 2e-3)


def test_stationary_probability():
    cfg = ChannelConfig.gilbert_elliott(0.0, 1.0, 0.01, 0.04)
    assert cfg.stationary_bad == pytest.approx(0.2)
    assert cfg.mean_ber == pytest.approx(0.2)


@pytest.mark.parametrize("kwargs", [dict(mode="awgn"), dict(p_e=1.5), dict(p_e=-0.1), dict(seed=-1),
                                    dict(mode="gilbert_elliott", p_g2b=0.0, p_b2g=0.0)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        ChannelConfig(**kwargs)


def test_empirical_ber():
    assert empirical_ber(b"\x00\x00", b"\x01\x80") == 2 / 16
    with pytest.raises(ValueError):
        empirical_ber(b"\x00", b"\x00\x00")
    assert empirical_ber(b"", b"") == 0.0
