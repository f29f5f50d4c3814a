"""Seeded bit-error channels: binary symmetric and Gilbert-Elliott.

Streams are packed bytes, bit 0 of the stream being the MSB of byte 0.
Flips are generated from geometric gap draws taken in fixed-size blocks,
so the output depends only on the seed and the bit positions, never on
how the input is chunked.  The generator is numpy's PCG64.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_BLOCK = 1 << 14


@dataclass(frozen=True)
class ChannelConfig:
    mode: str = "bsc"               # "bsc" or "gilbert_elliott"
    p_e: float = 0.0
    p_good: float = 0.0
    p_bad: float = 0.0
    p_g2b: float = 0.0
    p_b2g: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("bsc", "gilbert_elliott"):
            raise ValueError(f"unknown channel mode {self.mode!r}")
        for name in ("p_e", "p_good", "p_bad", "p_g2b", "p_b2g"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"channel.{name} must lie in [0, 1], got {value}")
        if self.mode == "gilbert_elliott" and self.p_g2b + self.p_b2g == 0:
            raise ValueError("gilbert_elliott needs p_g2b + p_b2g > 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @classmethod
    def bsc(cls, p_e: float, seed: int = 0) -> "ChannelConfig":
        return cls("bsc", p_e=p_e, seed=seed)

    @classmethod
    def gilbert_elliott(cls, p_good: float, p_bad: float, p_g2b: float, p_b2g: float,
                        seed: int = 0) -> "ChannelConfig":
        return cls("gilbert_elliott", p_good=p_good, p_bad=p_bad, p_g2b=p_g2b, p_b2g=p_b2g, seed=seed)

    @property
    def stationary_bad(self) -> float:
        return self.p_g2b / (self.p_g2b + self.p_b2g)

    @property
    def mean_ber(self) -> float:
        if self.mode == "bsc":
            return self.p_e
        pi_b = self.stationary_bad
        return (1 - pi_b) * self.p_good + pi_b * self.p_bad


class _GapProcess:
    """Positions of successes in an iid Bernoulli(p) sequence over bit indices."""

    def __init__(self, p: float, rng: np.random.Generator):
        self.p = p
        self.rng = rng
        self._pending = np.zeros(0, dtype=np.int64)    # absolute positions already drawn
        self._last = -1

    def take(self, start: int, stop: int) -> np.ndarray:
        """Success positions in [start, stop); positions must be requested in order."""
        if self.p <= 0.0 or stop <= start:
            return np.zeros(0, dtype=np.int64)
        chunks = [self._pending]
        last = self._last
        while last < stop:
            gaps = self.rng.geometric(self.p, size=_BLOCK).astype(np.int64)
            pos = last + np.cumsum(gaps)
            chunks.append(pos)
            last = int(pos[-1])
        self._last = last
        allpos = np.concatenate(chunks)
        lo = np.searchsorted(allpos, start)
        hi = np.searchsorted(allpos, stop)
        self._pending = allpos[hi:]
        return allpos[lo:hi]


class _StateProcess:
    """Gilbert-Elliott state sequence, stored as the bit indices where it toggles."""

    _NEVER = 1 << 40

    def __init__(self, cfg: ChannelConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.bad = bool(rng.random() < cfg.stationary_bad)   # state at the current position
        self._bounds = np.zeros(0, dtype=np.int64)
        self._last = 0
        self._run_bad = self.bad                              # state of the run starting at _last

    def _lengths(self, p: float) -> np.ndarray:
        if p <= 0.0:
            return np.full(_BLOCK, self._NEVER, dtype=np.int64)
        return self.rng.geometric(p, size=_BLOCK).astype(np.int64)

    def _extend(self) -> None:
        good = self._lengths(self.cfg.p_g2b)
        bad = self._lengths(self.cfg.p_b2g)
        runs = np.empty(2 * _BLOCK, dtype=np.int64)
        first, second = (bad, good) if self._run_bad else (good, bad)
        runs[0::2] = first
        runs[1::2] = second
        bounds = self._last + np.cumsum(runs)
        self._bounds = np.concatenate([self._bounds, bounds])
        self._last = int(bounds[-1])

    def bad_mask(self, start: int, stop: int) -> np.ndarray:
        while self._last < stop:
            self._extend()
        cut = np.searchsorted(self._bounds, stop)
        inside = self._bounds[:cut]
        self._bounds = self._bounds[cut:]
        toggles = np.zeros(stop - start, dtype=np.uint8)
        toggles[inside - start] = 1
        mask = np.bitwise_xor.accumulate(toggles) ^ np.uint8(self.bad)
        if inside.size & 1:
            self.bad = not self.bad
        return mask.astype(bool)


class Channel:
    """Stateful channel instance; successive ``corrupt`` calls continue one stream."""

    def __init__(self, config: ChannelConfig):
        self.config = config
        seeds = np.random.SeedSequence(config.seed).spawn(3)
        self.position = 0
        self.flips = 0
        if config.mode == "bsc":
            self._flip = _GapProcess(config.p_e, np.random.Generator(np.random.PCG64(seeds[0])))
        else:
            self._good = _GapProcess(config.p_good, np.random.Generator(np.random.PCG64(seeds[0])))
            self._bad = _GapProcess(config.p_bad, np.random.Generator(np.random.PCG64(seeds[1])))
            self._state = _StateProcess(config, np.random.Generator(np.random.PCG64(seeds[2])))

    def flip_positions(self, nbits: int) -> np.ndarray:
        """Advance by ``nbits`` and return the flipped bit indices relative to the start."""
        start, stop = self.position, self.position + nbits
        if self.config.mode == "bsc":
            pos = self._flip.take(start, stop)
        else:
            bad = self._state.bad_mask(start, stop)
            g = self._good.take(start, stop)
            b = self._bad.take(start, stop)
            g = g[~bad[g - start]]
            b = b[bad[b - start]]
            pos = np.sort(np.concatenate([g, b]))
        self.position = stop
        self.flips += pos.size
        return pos - start

    def corrupt(self, data) -> bytes:
        arr = np.frombuffer(bytes(data), dtype=np.uint8).copy() \
            if not isinstance(data, np.ndarray) else np.array(data, dtype=np.uint8)
        pos = self.flip_positions(8 * arr.size)
        if pos.size:
            np.bitwise_xor.at(arr, pos >> 3, (0x80 >> (pos & 7)).astype(np.uint8))
        return arr.tobytes()

    def corrupt_array(self, arr: np.ndarray) -> np.ndarray:
        """In-place variant for uint8 arrays."""
        pos = self.flip_positions(8 * arr.size)
        if pos.size:
            np.bitwise_xor.at(arr, pos >> 3, (0x80 >> (pos & 7)).astype(np.uint8))
        return arr


def corrupt(bits, config: ChannelConfig) -> bytes:
    """Pass a packed bit stream through a fresh channel built from ``config``."""
    return Channel(config).corrupt(bits)


_POPCOUNT8 = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)


def bit_errors(a, b) -> int:
    a = np.frombuffer(bytes(a), dtype=np.uint8) if not isinstance(a, np.ndarray) else a
    b = np.frombuffer(bytes(b), dtype=np.uint8) if not isinstance(b, np.ndarray) else b
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.size} vs {b.size} bytes")
    return int(_POPCOUNT8[np.bitwise_xor(a, b)].sum(dtype=np.int64))


def empirical_ber(sent, received) -> float:
    """Hamming distance between two packed streams divided by their bit length."""
    nbits = 8 * len(sent)
    if len(sent) != len(received):
        raise ValueError(f"length mismatch: {len(sent)} vs {len(received)} bytes")
    if nbits == 0:
        return 0.0
    return bit_errors(sent, received) / nbits
