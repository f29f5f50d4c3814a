"""GF(2^m) arithmetic and a systematic Reed-Solomon codec.

Conventions (these fix the wire format):

* field GF(2^8) built on x^8 + x^4 + x^3 + x^2 + 1 (0x11D), alpha = 2
* generator polynomial roots alpha^0 .. alpha^(2t-1)
* codeword layout is ``data[0:k] + parity[0:n-k]``; symbol ``j`` of the
  array is the coefficient of x^(n-1-j)
* shortened codes (n < 2^m - 1) behave as if padded with leading zeros

Decoding is syndrome -> Berlekamp-Massey -> Chien search -> Forney, done
on whole batches of codewords at once with numpy.  Single-codeword helpers
wrap the batch path.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np

PRIMITIVE_POLYS = {3: 0b1011, 4: 0b10011, 5: 0b100101, 6: 0b1000011,
                   7: 0b10001001, 8: 0x11D}


class DecodeFailure(Exception):
    """Raised when a received word has no consistent error pattern of weight <= t."""


class GaloisField:
    """Log/antilog tables for GF(2^m).

    ``exp`` is laid out so that ``exp[log[a] + log[b]]`` is the product for
    any a, b including zero: ``log[0]`` points into a zero-filled tail.
    """

    def __init__(self, m: int = 8, prim: int | None = None):
        self.m = m
        self.q = 1 << m
        self.order = self.q - 1
        self.prim = PRIMITIVE_POLYS[m] if prim is None else prim
        order = self.order
        self.zero_log = 2 * order
        exp = np.zeros(4 * order + 4, dtype=np.uint8)
        log = np.zeros(self.q, dtype=np.int32)
        x = 1
        for i in range(order):
            if i and x == 1:
                break
            exp[i] = x
            log[x] = i
            x <<= 1
            if x & self.q:
                x ^= self.prim
        if x != 1 or 0 in exp[1:order]:
            raise ValueError(f"polynomial {self.prim:#x} is not primitive for m={m}")
        exp[order:2 * order] = exp[:order]
        log[0] = self.zero_log
        self.exp = exp
        self.log = log
        self._exp_list = exp[:2 * order].tolist()
        self._log_list = log.tolist()
        self.mul_table = exp[log[:, None] + log[None, :]]
        self.mul_table.setflags(write=False)
        exp.setflags(write=False)
        log.setflags(write=False)

    # scalar helpers -------------------------------------------------------
    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        return self._exp_list[self._log_list[a] + self._log_list[b]]

    def div(self, a: int, b: int) -> int:
        if b == 0:
            raise ZeroDivisionError("division by zero in GF(2^m)")
        if a == 0:
            return 0
        return self._exp_list[(self._log_list[a] - self._log_list[b]) % self.order]

    def pow(self, a: int, e: int) -> int:
        if a == 0:
            return 0 if e else 1
        return self._exp_list[(self._log_list[a] * e) % self.order]

    def inv(self, a: int) -> int:
        return self.div(1, a)

    def alpha_pow(self, e: int) -> int:
        return self._exp_list[e % self.order]

    def poly_mul(self, p: list[int], q: list[int]) -> list[int]:
        """Product of two polynomials, coefficients highest degree first."""
        out = [0] * (len(p) + len(q) - 1)
        for i, a in enumerate(p):
            if a == 0:
                continue
            for j, b in enumerate(q):
                out[i + j] ^= self.mul(a, b)
        return out

    # array helpers --------------------------------------------------------
    def vmul(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.exp[self.log[a] + self.log[b]]

    def vdiv(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Elementwise a / b; b must be nonzero wherever a is nonzero."""
        return self.exp[self.log[a] + (self.order - self.log[b]) % self.order]


GF256 = GaloisField(8)


def gf_mul(a: int, b: int) -> int:
    """Product of two GF(2^8) elements."""
    return GF256.mul(a, b)


def gf_add(a: int, b: int) -> int:
    return a ^ b


def gf_div(a: int, b: int) -> int:
    return GF256.div(a, b)


def gf_inv(a: int) -> int:
    return GF256.inv(a)


@dataclass(frozen=True)
class RsCodeParams:
    n: int = 255
    k: int = 235
    m: int = 8

    @property
    def t(self) -> int:
        return (self.n - self.k) // 2

    @property
    def d_min(self) -> int:
        return self.n - self.k + 1

    @property
    def nsym(self) -> int:
        return self.n - self.k


def make_params(n: int, k: int, m: int = 8) -> RsCodeParams:
    """Validate (n, k) against ``0 < k < n < 2^m + 2`` and return params.

    Extended codes (n = 2^m or 2^m + 1) satisfy the existence condition but
    are not implemented, so n is capped at 2^m - 1.
    """
    if m not in PRIMITIVE_POLYS:
        raise ValueError(f"unsupported symbol size m={m}")
    if not 0 < k < n < (1 << m) + 2:
        raise ValueError(f"no RS({n},{k}) code over GF(2^{m}): need 0 < k < n < {(1 << m) + 2}")
    if n > (1 << m) - 1:
        raise ValueError(f"extended RS codes (n={n} > {(1 << m) - 1}) are not supported")
    return RsCodeParams(n, k, m)


DEFAULT_PARAMS = RsCodeParams(255, 235, 8)


class DecodeBatch(NamedTuple):
    data: np.ndarray          # (B, k) corrected data; failed rows are passed through
    corrected: np.ndarray     # (B,) symbols corrected, 0 for failed rows
    ok: np.ndarray            # (B,) False where decoding failed


class DecodeResult(NamedTuple):
    data: bytes
    symbol_errors_corrected: int


def _pack_rows(table: np.ndarray) -> np.ndarray:
    """Pack the last axis of a uint8 table into uint64 words (zero padded)."""
    width = table.shape[-1]
    words = -(-width // 8)
    padded = np.zeros(table.shape[:-1] + (words * 8,), dtype=np.uint8)
    padded[..., :width] = table
    return padded.view(np.uint64)


class ReedSolomon:
    """Systematic RS(n, k) encoder/decoder over GF(2^m)."""

    def __init__(self, params: RsCodeParams = DEFAULT_PARAMS):
        self.params = params
        self.gf = gf = GaloisField(params.m)
        n, k, nsym = params.n, params.k, params.nsym
        self.generator = self._generator_poly(nsym)

        # parity contributed by symbol value v at data position j, and the
        # syndrome contributed by symbol value v at codeword position j;
        # both maps are linear, so a codeword is a XOR over positions.
        unit = np.zeros((k, n), dtype=np.uint8)
        unit[np.arange(k), np.arange(k)] = 1
        parity_unit = np.array([self._encode_slow(row[:k].tolist())[k:] for row in unit],
                               dtype=np.uint8).reshape(k, nsym)
        values = np.arange(gf.q)
        self._parity_table = _pack_rows(self._scale(parity_unit, values))
        powers = (n - 1 - np.arange(n))[:, None] * np.arange(nsym)[None, :]  # (n, nsym)
        syn_unit = gf.exp[powers % gf.order]                                 # alpha^(i*p)
        self._syndrome_table = _pack_rows(self._scale(syn_unit, values))
        self._words = self._syndrome_table.shape[-1]

        t = params.t
        # chien exponents: -(i * p) mod order for i = 0..nsym, p = 0..n-1
        p = np.arange(n)
        self._chien_exp = ((-np.arange(nsym + 1)[:, None] * p[None, :]) % gf.order).astype(np.int32)
        self._t = t

    def _scale(self, unit: np.ndarray, values: np.ndarray) -> np.ndarray:
        """table[j, v, :] = v * unit[j, :] in GF(2^m)."""
        gf = self.gf
        return gf.exp[gf.log[values][None, :, None] + gf.log[unit][:, None, :]]

    def _generator_poly(self, nsym: int) -> list[int]:
        g = [1]
        for i in range(nsym):
            g = self.gf.poly_mul(g, [1, self.gf.alpha_pow(i)])
        return g

    def _encode_slow(self, data: list[int]) -> list[int]:
        """Long division by the generator polynomial (reference path)."""
        nsym = self.params.nsym
        rem = list(data) + [0] * nsym
        g = self.generator
        for i in range(len(data)):
            coef = rem[i]
            if coef:
                for j in range(1, len(g)):
                    rem[i + j] ^= self.gf.mul(g[j], coef)
        return list(data) + rem[len(data):]

    # encoding -------------------------------------------------------------
    def encode_batch(self, data: np.ndarray) -> np.ndarray:
        """Encode a (B, k) uint8 array into a (B, n) array of codewords."""
        data = np.asarray(data, dtype=np.uint8)
        k, n, nsym = self.params.k, self.params.n, self.params.nsym
        if data.ndim != 2 or data.shape[1] != k:
            raise ValueError(f"expected data of shape (B, {k}), got {data.shape}")
        out = np.empty((data.shape[0], n), dtype=np.uint8)
        out[:, :k] = data
        for lo in range(0, data.shape[0], 4096):
            hi = min(lo + 4096, data.shape[0])
            acc = np.bitwise_xor.reduce(self._parity_table[np.arange(k), data[lo:hi]], axis=1)
            out[lo:hi, k:] = acc.view(np.uint8).reshape(hi - lo, -1)[:, :nsym]
        return out

    def encode(self, data) -> np.ndarray:
        data = np.frombuffer(bytes(data), dtype=np.uint8) if not isinstance(data, np.ndarray) \
            else np.asarray(data, dtype=np.uint8)
        if data.shape != (self.params.k,):
            raise ValueError(f"RS({self.params.n},{self.params.k}) needs {self.params.k} data "
                             f"symbols, got {data.size}")
        return self.encode_batch(data[None, :])[0]

    # decoding -------------------------------------------------------------
    def syndromes(self, received: np.ndarray) -> np.ndarray:
        """(B, n) codewords -> (B, 2t) syndromes S_i = r(alpha^i)."""
        received = np.asarray(received, dtype=np.uint8)
        n, nsym = self.params.n, self.params.nsym
        out = np.empty((received.shape[0], nsym), dtype=np.uint8)
        for lo in range(0, received.shape[0], 4096):
            hi = min(lo + 4096, received.shape[0])
            acc = np.bitwise_xor.reduce(self._syndrome_table[np.arange(n), received[lo:hi]], axis=1)
            out[lo:hi] = acc.view(np.uint8).reshape(hi - lo, -1)[:, :nsym]
        return out

    def _berlekamp_massey(self, synd: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Batched BM.  Returns error locators (B, 2t+2), low degree first, and lengths L."""
        gf = self.gf
        rows, nsym = synd.shape
        width = nsym + 2
        C = np.zeros((rows, width), dtype=np.uint8)
        C[:, 0] = 1
        Bx = np.zeros_like(C)       # x^m * B(x)
        Bx[:, 1] = 1
        L = np.zeros(rows, dtype=np.int32)
        b = np.ones(rows, dtype=np.uint8)
        for r in range(nsym):
            d = np.bitwise_xor.reduce(gf.vmul(C[:, :r + 1], synd[:, r::-1]), axis=1)
            coef = gf.vdiv(d, b)
            T = C ^ gf.vmul(coef[:, None], Bx)
            update = (d != 0) & (2 * L <= r)
            shifted = np.where(update[:, None], C, Bx)
            Bx = np.zeros_like(C)
            Bx[:, 1:] = shifted[:, :-1]
            b = np.where(update, d, b)
            L = np.where(update, r + 1 - L, L)
            C = T
        return C, L

    def decode_batch(self, received: np.ndarray) -> DecodeBatch:
        """Bounded-distance decode of a (B, n) array of received words."""
        received = np.asarray(received, dtype=np.uint8)
        n, k, nsym = self.params.n, self.params.k, self.params.nsym
        if received.ndim != 2 or received.shape[1] != n:
            raise ValueError(f"expected received words of shape (B, {n}), got {received.shape}")
        rows = received.shape[0]
        corrected = np.zeros(rows, dtype=np.int32)
        ok = np.ones(rows, dtype=bool)
        synd = self.syndromes(received)
        bad = np.flatnonzero(synd.any(axis=1))
        if bad.size == 0:
            return DecodeBatch(received[:, :k].copy(), corrected, ok)

        fixed = received.copy()
        for lo in range(0, bad.size, 8192):
            idx = bad[lo:lo + 8192]
            words, nerr, good = self._correct(received[idx], synd[idx])
            fixed[idx] = words
            corrected[idx] = np.where(good, nerr, 0)
            ok[idx] = good
        return DecodeBatch(fixed[:, :k], corrected, ok)

    def _correct(self, words: np.ndarray, synd: np.ndarray):
        gf = self.gf
        n, nsym, t = self.params.n, self.params.nsym, self._t
        rows = words.shape[0]
        C, L = self._berlekamp_massey(synd)
        good = (L <= t) & ~C[:, t + 1:].any(axis=1)

        # Chien search over the n valid locations, grouped by locator degree
        lam_log = gf.log[C[:, :t + 1]]
        acc = np.ones((rows, n), dtype=np.uint8)
        for deg in np.unique(L[good]):
            sel = np.flatnonzero(good & (L == deg))
            part = np.zeros((sel.size, n), dtype=np.uint8)
            for i in range(deg + 1):
                part ^= gf.exp[lam_log[sel, i, None] + self._chien_exp[i][None, :]]
            acc[sel] = part
        roots = acc == 0
        good &= roots.sum(axis=1) == L

        out = words.copy()
        r_idx, p = np.nonzero(roots & good[:, None])
        if r_idx.size:
            # Omega(x) = S(x) * Lambda(x) mod x^(2t)
            omega = np.zeros((rows, nsym), dtype=np.uint8)
            for i in range(t + 1):
                omega[:, i:] ^= gf.vmul(C[:, i, None], synd[:, :nsym - i])
            e_om = (-(p[:, None]) * np.arange(nsym)[None, :]) % gf.order
            om_val = np.bitwise_xor.reduce(
                gf.exp[gf.log[omega[r_idx]] + e_om], axis=1)
            # formal derivative: odd-index coefficients of Lambda, shifted down
            odd = np.arange(1, t + 1, 2)
            e_der = (-(p[:, None]) * (odd - 1)[None, :]) % gf.order
            der_val = np.bitwise_xor.reduce(
                gf.exp[gf.log[C[r_idx][:, odd]] + e_der], axis=1)
            zero_der = der_val == 0
            if zero_der.any():
                good[np.unique(r_idx[zero_der])] = False
            der_safe = np.where(zero_der, 1, der_val).astype(np.uint8)
            # e = X * Omega(X^-1) / Lambda'(X^-1) with X = alpha^p
            x_val = gf.exp[p % gf.order]
            mag = gf.vdiv(gf.vmul(x_val, om_val), der_safe)
            keep = good[r_idx]
            out[r_idx[keep], n - 1 - p[keep]] ^= mag[keep]

            # the error pattern must reproduce every syndrome
            e_syn = (p[:, None] * np.arange(nsym)[None, :]) % gf.order
            contrib = gf.exp[gf.log[mag][:, None] + e_syn]
            contrib[~keep] = 0
            check = synd.copy()
            np.bitwise_xor.at(check, r_idx, contrib)
            good &= ~check.any(axis=1)

        out[~good] = words[~good]
        return out, L, good

    def decode(self, received) -> DecodeResult:
        received = np.frombuffer(bytes(received), dtype=np.uint8) \
            if not isinstance(received, np.ndarray) else np.asarray(received, dtype=np.uint8)
        if received.shape != (self.params.n,):
            raise ValueError(f"RS({self.params.n},{self.params.k}) needs {self.params.n} "
                             f"received symbols, got {received.size}")
        res = self.decode_batch(received[None, :])
        if not res.ok[0]:
            raise DecodeFailure("more than t symbol errors detected")
        return DecodeResult(res.data[0].tobytes(), int(res.corrected[0]))


@lru_cache(maxsize=None)
def get_codec(params: RsCodeParams = DEFAULT_PARAMS) -> ReedSolomon:
    return ReedSolomon(params)


def rs_encode(data, params: RsCodeParams = DEFAULT_PARAMS) -> bytes:
    """Systematic encode of k data symbols into an n-symbol codeword."""
    return get_codec(params).encode(data).tobytes()


def rs_decode(received, params: RsCodeParams = DEFAULT_PARAMS) -> DecodeResult:
    """Decode n received symbols; raises DecodeFailure beyond t errors (when detected)."""
    return get_codec(params).decode(received)
