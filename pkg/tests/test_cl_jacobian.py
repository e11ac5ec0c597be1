import json

import pytest

from corner_lab.cl_jacobian import (
    DerivativeTables,
    d_function,
    jacobian_closed_form,
    jacobian_det_10,
    jacobian_matrix_10,
    nonvanishing_witness,
    pair_wronskian,
    s_function,
    verify_identity,
)
from corner_lab.cl_ratfun import parse_ratfun, reduce_pair_mod_p
from corner_lab.cl_util import CL_IDENTITY, CL_NONVANISHING, POLE
from corner_lab.constants import TESTING_PRIME

PAIRS = [
    ("t", "t^2"),
    ("t", "t^3"),
    ("1/t", "t^2"),
    ("t^2/(t^7-5*t^3)", "t^17+1/(t^13+19)"),
]
POINT = list(range(1, 11))


def pair(P: str, Q: str, p: int = TESTING_PRIME):
    return reduce_pair_mod_p(parse_ratfun(P), parse_ratfun(Q), p)


def test_closed_form_at_a_fixed_point() -> None:
    Pp, Qp = pair("t", "t^2")
    # 32 (y2 y3 y5 y8 - y1 y4 y6 y7)(y9 - y10) at y_i = i
    assert jacobian_closed_form(Pp, Qp, POINT) == (-2304) % TESTING_PRIME
    assert jacobian_det_10(Pp, Qp, POINT) == (-2304) % TESTING_PRIME


def test_closed_form_small_prime() -> None:
    p = 101
    Pp, Qp = pair("t", "t^2", p)
    assert jacobian_det_10(Pp, Qp, POINT) == jacobian_closed_form(Pp, Qp, POINT) == (-2304) % p


def test_closed_form_vanishes_on_equal_last_pair() -> None:
    Pp, Qp = pair("t", "t^3")
    point = POINT[:9] + [POINT[8]]
    assert jacobian_closed_form(Pp, Qp, point) == 0
    assert jacobian_det_10(Pp, Qp, point) == 0


def test_swapping_last_pair_flips_sign() -> None:
    Pp, Qp = pair("t", "t^3")
    swapped = POINT[:8] + [POINT[9], POINT[8]]
    a = jacobian_closed_form(Pp, Qp, POINT)
    b = jacobian_closed_form(Pp, Qp, swapped)
    assert a != 0
    assert (a + b) % TESTING_PRIME == 0


def test_matrix_shape_and_poles() -> None:
    Pp, Qp = pair("1/t", "t^2")
    M = jacobian_matrix_10(Pp, Qp, POINT)
    assert len(M) == 10 and all(len(row) == 10 for row in M)
    at_pole = [0] + POINT[1:]
    assert jacobian_matrix_10(Pp, Qp, at_pole) is None
    assert jacobian_det_10(Pp, Qp, at_pole) is POLE
    assert jacobian_closed_form(Pp, Qp, at_pole) is POLE


def test_derivative_tables() -> None:
    tables = DerivativeTables(*pair("t", "t^2", 13))
    assert tables.values(3, "dP", "dQ", "ddP", "ddQ") == [1, 6, 0, 2]
    # R = 1/(2t), undefined at 0
    assert tables.values(0, "R") is None
    assert tables.values(1, "R") == [pow(2, -1, 13)]
    assert tables.values(0, "dP", "R") is None


def test_derivative_tables_at_a_pole() -> None:
    p = 13
    tables = DerivativeTables(*pair("1/t", "t^2", p))
    assert tables.values(0, "dP") is None
    assert tables.values(0, "dQ") == [0]
    # P' = -1/t^2
    assert tables.values(2, "dP", "dQ") == [(-pow(4, -1, p)) % p, 4]


def test_s_and_d_functions() -> None:
    p = 13
    tables = DerivativeTables(*pair("t", "t^2", p))
    # S = -1/t for (t, t^2)
    assert s_function(tables, 2) == (-pow(2, -1, p)) % p
    assert s_function(tables, 0) is None
    assert pair_wronskian(tables, 3, 3) == 0
    assert pair_wronskian(tables, 2, 5) == (-10 + 4) % p
    assert d_function(tables, 1, 2, 2) == 0
    assert d_function(tables, 1, 2, 3) != 0


@pytest.mark.parametrize("identity", list(CL_IDENTITY))
@pytest.mark.parametrize("P, Q", PAIRS)
def test_identities_hold(identity, P, Q) -> None:
    report = verify_identity(identity, parse_ratfun(P), parse_ratfun(Q), trials=40, seed=1)
    assert report.passed, report.to_json_str()
    assert report.trials == 40
    assert report.witnesses == []


def test_identity_report_json() -> None:
    report = verify_identity(CL_IDENTITY.S_LOG_DERIVATIVE, parse_ratfun("t"), parse_ratfun("t^3"), trials=5)
    payload = json.loads(report.to_json_str())
    assert payload["identity"] == "s_log_derivative"
    assert payload["passed"]


def test_verify_is_seeded() -> None:
    P, Q = parse_ratfun("1/t"), parse_ratfun("t^2")
    a = verify_identity(CL_IDENTITY.PROP_JAC, P, Q, trials=10, seed=7)
    b = verify_identity(CL_IDENTITY.PROP_JAC, P, Q, trials=10, seed=7)
    assert a.to_json() == b.to_json()


@pytest.mark.parametrize("identity", list(CL_NONVANISHING))
@pytest.mark.parametrize("P, Q", PAIRS)
def test_witnesses_found(identity, P, Q) -> None:
    result = nonvanishing_witness(identity, parse_ratfun(P), parse_ratfun(Q), seed=3)
    assert result.found
    assert result.point is not None
    assert 1 <= result.draws <= 64


def test_dependent_pair_exhausts_budget() -> None:
    result = nonvanishing_witness(
        CL_NONVANISHING.PAIR_WRONSKIAN, parse_ratfun("t"), parse_ratfun("3*t+5"), budget=16, seed=0
    )
    assert not result.found
    assert result.point is None
    assert result.draws == 16
    assert result.to_json()["found"] is False
