"""Closed-form error models: cell error rate, RS decoded symbol error rate, curves.

Conventions
-----------
* ``theoretical_cer(p)`` is the chance that a 384-bit cell payload holds at
  least one bit error on a BSC with bit error probability ``p``.
* ``theoretical_pe(p, m, t)`` is the decoded symbol error probability of a
  t-error-correcting RS code of length N = 2^m - 1 on a channel with symbol
  error probability ``p``: (1/N) sum_{j=t+1}^{N} j C(N, j) p^j (1-p)^(N-j).
* Bit <-> symbol conversions: input ``p = 1 - (1 - ber)^m``.  The output
  side defaults to the exact inverse, ``ber = 1 - (1 - P_E)^(1/m)``, which
  treats a wrong symbol as carrying a single bit error (what a BSC at small
  BER produces).  ``conversion="symbol_average"`` instead scales by the
  mean number of wrong bits in a uniformly random wrong symbol,
  2^(m-1)/(2^m - 1).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

PAYLOAD_BITS = 384
DEFAULT_T_SWEEP = (0, 1, 2, 4, 8, 10, 16)
DEFAULT_BER_GRID = tuple(10.0 ** (-e / 4) for e in range(8, 25))   # 1e-2 .. 1e-6
CONVERSIONS = ("inverse", "symbol_average")


def _check_prob(name: str, p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0 or math.isnan(p):
        raise ValueError(f"{name} must lie in [0, 1], got {p}")
    return p


def theoretical_cer(p_e: float, payload_bits: int = PAYLOAD_BITS) -> float:
    p_e = _check_prob("p_e", p_e)
    if p_e == 1.0:
        return 1.0
    return -math.expm1(payload_bits * math.log1p(-p_e))


def cer_binomial_sum(p_e: float, payload_bits: int = PAYLOAD_BITS) -> float:
    """The same quantity as an explicit sum over error counts 1..payload_bits."""
    p_e = _check_prob("p_e", p_e)
    return math.fsum(_binom_terms(payload_bits, 1, p_e, weighted=False))


def _binom_terms(n: int, lo: int, p: float, weighted: bool) -> Iterable[float]:
    """Terms [j *] C(n, j) p^j (1-p)^(n-j) for j = lo..n, via logs."""
    if p == 0.0:
        return [] if lo > 0 else [0.0 if weighted else 1.0]
    if p == 1.0:
        return [float(n) if weighted else 1.0]
    lp, lq = math.log(p), math.log1p(-p)
    out = []
    for j in range(lo, n + 1):
        lt = math.lgamma(n + 1) - math.lgamma(j + 1) - math.lgamma(n - j + 1) + j * lp + (n - j) * lq
        if weighted:
            if j == 0:
                continue
            lt += math.log(j)
        out.append(math.exp(lt))
    return out


def theoretical_pe(p: float, m: int = 8, t: int = 10) -> float:
    """Decoded symbol error probability of a t-correcting RS code over GF(2^m)."""
    p = _check_prob("p", p)
    n = (1 << m) - 1
    if not 0 <= t < n:
        raise ValueError(f"t must lie in [0, {n - 1}], got {t}")
    return min(1.0, math.fsum(_binom_terms(n, t + 1, p, weighted=True)) / n)


def block_failure_prob(p: float, m: int = 8, t: int = 10, n: int | None = None) -> float:
    """Probability that more than t of the n symbols of a block are wrong."""
    p = _check_prob("p", p)
    n = (1 << m) - 1 if n is None else n
    return min(1.0, math.fsum(_binom_terms(n, t + 1, p, weighted=False)))


def symbol_error_prob(ber: float, m: int = 8) -> float:
    ber = _check_prob("ber", ber)
    if ber == 1.0:
        return 1.0
    return -math.expm1(m * math.log1p(-ber))


def symbol_to_bit(p_symbol: float, m: int = 8, conversion: str = "inverse") -> float:
    p_symbol = _check_prob("p_symbol", p_symbol)
    if conversion == "inverse":
        if p_symbol == 1.0:
            return 1.0
        return -math.expm1(math.log1p(-p_symbol) / m)
    if conversion == "symbol_average":
        return p_symbol * (1 << (m - 1)) / ((1 << m) - 1)
    raise ValueError(f"conversion must be one of {CONVERSIONS}, got {conversion!r}")


def output_ber(input_ber: float, t: int, m: int = 8, conversion: str = "inverse") -> float:
    return symbol_to_bit(theoretical_pe(symbol_error_prob(input_ber, m), m, t), m, conversion)


def predicted_output_cer(input_ber: float, t: int = 10, m: int = 8, payload_bytes: int = 48) -> float:
    """Cell error rate if each payload symbol were wrong independently with probability P_E."""
    pe = theoretical_pe(symbol_error_prob(input_ber, m), m, t)
    return -math.expm1(payload_bytes * math.log1p(-pe)) if pe < 1 else 1.0


@dataclass(frozen=True)
class CurveRow:
    input_ber: float
    t: int
    n: int
    k: int
    output_estimate: float


def redundancy_curves(ber_grid: Sequence[float] = DEFAULT_BER_GRID,
                      t_list: Sequence[int] = DEFAULT_T_SWEEP, m: int = 8,
                      conversion: str = "inverse") -> list[CurveRow]:
    """Output error estimate for every (t, input BER) pair, t-major then BER in given order."""
    n = (1 << m) - 1
    rows = []
    for t in t_list:
        for ber in ber_grid:
            rows.append(CurveRow(float(ber), int(t), n, n - 2 * int(t), output_ber(ber, t, m, conversion)))
    return rows


def cer_table(bers: Sequence[float] = (1e-3, 1e-8)) -> list[tuple[float, float]]:
    return [(float(b), theoretical_cer(b)) for b in bers]


def curves_csv(rows: Sequence[CurveRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["input_ber", "t", "n", "k", "output_estimate"])
    for r in rows:
        w.writerow([f"{r.input_ber:.6e}", r.t, r.n, r.k, f"{r.output_estimate:.6e}"])
    return buf.getvalue()


def cer_csv(rows: Sequence[tuple[float, float]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["ber", "cer"])
    for ber, cer in rows:
        w.writerow([f"{ber:.1e}", f"{cer:.8g}"])
    return buf.getvalue()
