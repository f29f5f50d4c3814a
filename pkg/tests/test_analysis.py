import csv
import io
import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from link_enhancer.analysis import (block_failure_prob, cer_binomial_sum, cer_csv, cer_table, curves_csv,
                                    output_ber, predicted_output_cer, redundancy_curves, symbol_error_prob,
                                    symbol_to_bit, theoretical_cer, theoretical_pe)

# Frozen from exact rational summation (p = 1 - (1 - 1e-3)^8 exactly).
PE_ORACLE = {
    1: 6.928195554845536231e-03,
    2: 4.797494308575946247e-03,
    4: 1.169361540187573886e-03,
    8: 8.878195793675296829e-06,
    10: 3.659049022496483173e-07,
    16: 3.148124455536664323e-12,
}
BLOCK_FAIL_T10 = 8.339356844756233866e-06


def exact_pe(p: Fraction, n: int, t: int) -> Fraction:
    return sum(j * math.comb(n, j) * p ** j * (1 - p) ** (n - j) for j in range(t + 1, n + 1)) / n


def test_cer_table_values():
    assert f"{theoretical_cer(1e-3):.8g}" == "0.31899942"
    assert f"{theoretical_cer(1e-8):.8g}" == "3.8399926e-06"
    assert theoretical_cer(0.0) == 0.0
    assert theoretical_cer(1.0) == 1.0


@pytest.mark.parametrize("exp", range(1, 10))
def test_cer_closed_form_equals_binomial_sum(exp):
    p = 10.0 ** -exp
    assert cer_binomial_sum(p) == pytest.approx(theoretical_cer(p), rel=1e-12)


@pytest.mark.parametrize("p", [-0.1, 1.1, float("nan")])
def test_domain_errors(p):
    with pytest.raises(ValueError):
        theoretical_cer(p)
    with pytest.raises(ValueError):
        theoretical_pe(p)


def test_pe_trivial_cases():
    assert theoretical_pe(0.0) == 0.0
    assert theoretical_pe(1.0, 8, 0) == 1.0
    with pytest.raises(ValueError):
        theoretical_pe(0.1, 8, 255)


@pytest.mark.parametrize("t", sorted(PE_ORACLE))
def test_pe_matches_frozen_oracle(t):
    p = symbol_error_prob(1e-3)
    assert theoretical_pe(p, 8, t) == pytest.approx(PE_ORACLE[t], rel=5e-7)


def test_pe_matches_live_exact_oracle():
    p = symbol_error_prob(1e-3)
    assert theoretical_pe(p, 8, 10) == pytest.approx(float(exact_pe(Fraction(p), 255, 10)), rel=1e-9)
    assert block_failure_prob(p, 8, 10) == pytest.approx(BLOCK_FAIL_T10, rel=1e-9)


@given(st.floats(1e-6, 0.3), st.floats(1e-6, 0.3), st.integers(0, 30))
def test_pe_monotone_in_p(p1, p2, t):
    lo, hi = sorted((p1, p2))
    assert theoretical_pe(lo, 8, t) <= theoretical_pe(hi, 8, t) * (1 + 1e-12)


@given(st.floats(1e-6, 0.3), st.integers(0, 60))
def test_pe_antitone_in_t(p, t):
    assert theoretical_pe(p, 8, t + 1) <= theoretical_pe(p, 8, t) * (1 + 1e-12)


@given(st.floats(0, 0.5))
def test_conversions_roundtrip(ber):
    assert symbol_to_bit(symbol_error_prob(ber)) == pytest.approx(ber, rel=1e-12, abs=1e-300)


def test_t0_is_identity():
    for ber in (1e-2, 1e-3, 1e-5):
        assert output_ber(ber, 0) == pytest.approx(ber, rel=1e-12)


def test_headline_mapping():
    assert output_ber(1e-3, 10) < 1e-7
    assert output_ber(1e-3, 10) == pytest.approx(4.5738e-8, rel=1e-4)
    # the symbol-average conversion is kept for comparison and lands higher
    assert output_ber(1e-3, 10, conversion="symbol_average") == pytest.approx(
        PE_ORACLE[10] * 128 / 255, rel=1e-9)


def test_predicted_cer():
    pe = PE_ORACLE[10]
    assert predicted_output_cer(1e-3) == pytest.approx(1 - (1 - pe) ** 48, rel=1e-9)


def test_curves_monotone_and_csv():
    bers = [1e-2, 3e-3, 1e-3, 3e-4, 1e-4]
    ts = [0, 1, 2, 4, 8, 10, 16]
    rows = redundancy_curves(bers, ts)
    table = {(r.t, r.input_ber): r.output_estimate for r in rows}
    for t in ts:
        col = [table[(t, b)] for b in bers]
        assert all(a >= b for a, b in zip(col, col[1:]))
    for b in bers:
        row = [table[(t, b)] for t in ts]
        assert all(a >= c for a, c in zip(row, row[1:]))
    parsed = list(csv.reader(io.StringIO(curves_csv(rows))))
    assert parsed[0] == ["input_ber", "t", "n", "k", "output_estimate"]
    assert len(parsed) == 1 + len(rows)
    assert parsed[1][2:4] == ["255", "255"]


def test_cer_csv():
    text = cer_csv(cer_table())
    assert text.splitlines() == ["ber,cer", "1.0e-03,0.31899942", "1.0e-08,3.8399926e-06"]
