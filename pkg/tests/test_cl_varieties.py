import itertools

import numpy as np
import pytest

from corner_lab.cl_kernel import joint_distribution
from corner_lab.cl_ratfun import derivative, pair_values, parse_ratfun, reduce_pair_mod_p
from corner_lab.cl_util import (
    CL_COUNT_METHOD,
    InvariantViolationError,
    MemoryCapExceededError,
    PrimeTooLargeError,
)
from corner_lab.cl_varieties import (
    N8_SIGNS,
    W_SIGNS,
    X_SIGNS,
    StructuredRothCounter,
    VarietyCountReport,
    check_diagonal_bound,
    dimension_scan,
    histogram_reports,
    left_cycle_count_direct,
    roth_count_brute,
    roth_count_charsum,
    roth_count_structured,
    roth_subvariety_counts,
    signed_sum_histogram,
    yprime_910_count,
    zprime_count,
    zprime_count_direct,
)


def pair(P: str, Q: str, p: int):
    return reduce_pair_mod_p(parse_ratfun(P), parse_ratfun(Q), p)


@pytest.mark.parametrize("P, Q", [("t", "t^2"), ("t", "t^3")])
def test_roth_methods_agree_at_two(P, Q) -> None:
    Pp, Qp = pair(P, Q, 2)
    brute = roth_count_brute(Pp, Qp)
    assert roth_count_structured(Pp, Qp) == brute
    charsum = roth_count_charsum(Pp, Qp)
    assert charsum.reliable
    assert charsum.count == brute


@pytest.mark.slow
@pytest.mark.parametrize("P, Q", [("t", "t^2"), ("1/t", "t^2")])
def test_roth_methods_agree_at_three(P, Q) -> None:
    Pp, Qp = pair(P, Q, 3)
    brute = roth_count_brute(Pp, Qp)
    assert roth_count_structured(Pp, Qp) == brute
    assert roth_count_charsum(Pp, Qp).count == brute


@pytest.mark.parametrize("P, Q", [("t", "t^2"), ("1/t", "t^3"), ("t^3", "t^3-t^2+t")])
@pytest.mark.parametrize("p", [5, 7])
def test_structured_matches_charsum(P, Q, p) -> None:
    Pp, Qp = pair(P, Q, p)
    charsum = roth_count_charsum(Pp, Qp)
    assert charsum.reliable
    assert charsum.residual < 1e-3
    assert roth_count_structured(Pp, Qp) == charsum.count


def test_roth_count_is_at_least_the_diagonal() -> None:
    Pp, Qp = pair("t", "t^2", 7)
    roth = roth_count_charsum(Pp, Qp)
    n8 = signed_sum_histogram(Pp, Qp, N8_SIGNS)[0, 0]
    assert roth.count >= n8
    check_diagonal_bound(roth, int(n8))


def test_check_diagonal_bound_raises() -> None:
    roth = VarietyCountReport("Y", 5, 10, 6, CL_COUNT_METHOD.CHARSUM)
    with pytest.raises(InvariantViolationError):
        check_diagonal_bound(roth, 11)
    unreliable = VarietyCountReport("Y", 5, 10, 6, CL_COUNT_METHOD.CHARSUM, reliable=False)
    check_diagonal_bound(unreliable, 11)


def test_variety_report_row() -> None:
    report = VarietyCountReport("Y", 5, 2 * 5**6, 6, CL_COUNT_METHOD.CHARSUM, residual=1e-9)
    row = report.to_row()
    assert report.ratio == 2.0
    assert row["method"] == "charsum"
    assert row["ratio"] == 2.0


@pytest.mark.parametrize("offsets", [(0,) * 8, (1, 2, 3, 4, 0, 1, 2, 3), (4, 4, 1, 0, 2, 3, 0, 1)])
def test_left_trace_matches_direct(offsets) -> None:
    Pp, Qp = pair("t", "t^2", 5)
    counter = StructuredRothCounter(Pp, Qp)
    assert counter.left_trace(offsets) == left_cycle_count_direct(Pp, Qp, offsets)


def test_left_trace_with_poles() -> None:
    Pp, Qp = pair("1/t", "t^2", 5)
    counter = StructuredRothCounter(Pp, Qp)
    assert counter.n == 4
    offsets = (1, 0, 2, 0, 0, 3, 1, 0)
    assert counter.left_trace(offsets) == left_cycle_count_direct(Pp, Qp, offsets)


def test_subvariety_inclusion() -> None:
    counts = roth_subvariety_counts(*pair("t", "t^2", 2))
    assert counts["sp_outside_union"] == 0
    assert counts["Y"] == roth_count_brute(*pair("t", "t^2", 2))
    for name in [f"Y_{i}" for i in range(1, 9)] + ["Y_9_10", "Z", "Y_sp"]:
        assert 0 <= counts[name] <= counts["Y"]


@pytest.mark.slow
def test_subvariety_inclusion_at_three() -> None:
    counts = roth_subvariety_counts(*pair("t", "t^2", 3))
    assert counts["sp_outside_union"] == 0
    assert counts["Y_sp"] <= counts["Y"]


def test_histogram_single_variable() -> None:
    p = 7
    Pp, Qp = pair("t", "t^2", p)
    N = signed_sum_histogram(Pp, Qp, (1,))
    for a in range(p):
        assert N[a, a * a % p] == 1
    assert N.sum() == p
    flipped = signed_sum_histogram(Pp, Qp, (-1,))
    assert flipped[p - 2, p - 4] == 1


@pytest.mark.parametrize("signs", [X_SIGNS, W_SIGNS, N8_SIGNS])
@pytest.mark.parametrize("P, Q", [("t", "t^2"), ("1/t", "t^2")])
def test_histogram_mass(signs, P, Q) -> None:
    p = 5
    Pp, Qp = pair(P, Q, p)
    n = int(joint_distribution(Pp, Qp).sum())
    assert signed_sum_histogram(Pp, Qp, signs).sum() == n ** len(signs)


def test_histogram_matches_direct() -> None:
    p = 5
    Pp, Qp = pair("1/t", "t^3", p)
    _, Pv, Qv = pair_values(Pp, Qp)
    expected = np.zeros((p, p), dtype=np.int64)
    for idx in itertools.product(range(len(Pv)), repeat=len(X_SIGNS)):
        a = sum(s * Pv[i] for s, i in zip(X_SIGNS, idx)) % p
        b = sum(s * Qv[i] for s, i in zip(X_SIGNS, idx)) % p
        expected[a, b] += 1
    assert np.array_equal(signed_sum_histogram(Pp, Qp, X_SIGNS), expected)


@pytest.mark.parametrize("signs", [(), (1,) * 9, (1, 2)])
def test_histogram_rejects_bad_signs(signs) -> None:
    with pytest.raises(ValueError):
        signed_sum_histogram(*pair("t", "t^2", 5), signs)


def test_histogram_reports() -> None:
    Pp, Qp = pair("t", "t^2", 5)
    x_sup, w_sup, n8 = histogram_reports(Pp, Qp)
    assert (x_sup.variety, x_sup.exponent) == ("X_sup", 3)
    assert (w_sup.variety, w_sup.exponent) == ("W_sup", 4)
    assert (n8.variety, n8.exponent) == ("N8_origin", 6)
    assert x_sup.count == signed_sum_histogram(Pp, Qp, X_SIGNS).max()


def test_yprime_910_matches_direct() -> None:
    p = 3
    Pp, Qp = pair("t", "t^2", p)
    dP, dQ = derivative(Pp), derivative(Qp)
    expected = 0
    for y in itertools.product(range(p), repeat=8):
        Pv = [Pp.evaluate(v) for v in y]
        Qv = [Qp.evaluate(v) for v in y]
        if sum(s * v for s, v in zip(N8_SIGNS, Pv)) % p or sum(s * v for s, v in zip(N8_SIGNS, Qv)) % p:
            continue
        if (-dP.evaluate(y[0]) * dQ.evaluate(y[1]) + dQ.evaluate(y[0]) * dP.evaluate(y[1])) % p == 0:
            expected += 1
    assert yprime_910_count(Pp, Qp) == expected


@pytest.mark.parametrize("P, Q", [("t", "t^2"), ("t^2", "t^3+t"), ("1/t", "t^2")])
@pytest.mark.parametrize("p", [3, 5])
def test_zprime_join_matches_direct(P, Q, p) -> None:
    Pp, Qp = pair(P, Q, p)
    report = zprime_count(Pp, Qp)
    assert report.count == zprime_count_direct(Pp, Qp)
    assert zprime_count(Pp, Qp, swap_halves=True).count == report.count


def test_zprime_report() -> None:
    Pp, Qp = pair("t", "t^2", 5)
    report = zprime_count(Pp, Qp)
    assert report.r_undefined > 0  # Q' = 2t vanishes at 0
    converted = report.to_report()
    assert converted.variety == "Zprime"
    assert converted.exponent == 5


def test_prime_guards() -> None:
    with pytest.raises(PrimeTooLargeError):
        roth_count_brute(*pair("t", "t^2", 5))
    with pytest.raises(PrimeTooLargeError):
        StructuredRothCounter(*pair("t", "t^2", 13))
    with pytest.raises(PrimeTooLargeError):
        zprime_count(*pair("t", "t^2", 37))


def test_bucket_cap(monkeypatch) -> None:
    monkeypatch.setattr("corner_lab.cl_varieties.BUCKET_CAP", 1)
    with pytest.raises(MemoryCapExceededError):
        roth_count_structured(*pair("t", "t^2", 3))


def test_dimension_scan() -> None:
    df = dimension_scan(parse_ratfun("t"), parse_ratfun("t^2"), [5, 7])
    assert list(df.columns) == ["p", "variety", "count", "exponent", "ratio", "method", "residual", "seconds"]
    assert list(df["p"]) == [5] * 5 + [7] * 5
    assert list(df["variety"][:5]) == ["Y", "Zprime", "X_sup", "W_sup", "N8_origin"]
    assert np.allclose(df["ratio"], df["count"] / df["p"] ** df["exponent"])


def test_dimension_scan_skips_bad_primes() -> None:
    df = dimension_scan(parse_ratfun("t^2/5"), parse_ratfun("t^3"), [5, 7])
    assert set(df["p"]) == {7}
