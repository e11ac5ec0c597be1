import json

import numpy as np
import pytest

from corner_lab.cl_counting import (
    StepRecord,
    corner_census,
    corner_operator,
    count_corners,
    degree_lowering_trace,
    dual_function,
    error_scan,
    main_term,
    two_term_operator,
    two_term_scan,
    validate_inequality_chain,
)
from corner_lab.cl_grid import GridFn, generate, generate_triple
from corner_lab.cl_ratfun import parse_ratfun, reduce_mod_p, reduce_pair_mod_p
from corner_lab.cl_util import (
    CL_AGGREGATE,
    CL_COORDINATE,
    CL_STEP_MODE,
    CL_TRACE_BRANCH,
    PrimeMismatchError,
)
from corner_lab.cl_varieties import roth_count_charsum


def pair(P: str, Q: str, p: int):
    return reduce_pair_mod_p(parse_ratfun(P), parse_ratfun(Q), p)


def ones(p: int) -> GridFn:
    return generate("const", p, 0)


T7 = pair("t", "t^2", 7)
ROTH_RATIO_11 = roth_count_charsum(*pair("t", "t^2", 11)).ratio


@pytest.mark.parametrize(
    "P, Q, p, expected",
    [
        ("t", "t^2", 7, 1.0),
        ("t", "t^3", 11, 1.0),
        ("1/t", "t^2", 7, 6 / 7),
        ("1/t", "1/(t-1)", 11, 9 / 11),
    ],
)
def test_all_ones(P, Q, p, expected) -> None:
    report = count_corners(ones(p), ones(p), ones(p), *pair(P, Q, p))
    assert report.lambda_value == pytest.approx(expected)
    assert report.main_term == pytest.approx(1.0)
    assert report.error == pytest.approx(1.0 - expected, abs=1e-12)


def test_main_term_vanishes_for_character_in_second_slot() -> None:
    p = 7
    f2 = generate("char:0,1", p, 0)
    assert abs(main_term(ones(p), ones(p), f2)) < 1e-12


def test_corner_operator_by_definition() -> None:
    p = 5
    P, Q = pair("t", "t^2", p)
    f0, f1, f2 = generate_triple(["bounded"], p, 4)
    total = 0j
    for x1 in range(p):
        for x2 in range(p):
            for y in range(p):
                total += f0.values[x1, x2] * f1.values[(x1 + y) % p, x2] * f2.values[x1, (x2 + y * y) % p]
    assert abs(corner_operator(f0, f1, f2, P, Q) - total / p**3) < 1e-12


def test_count_corners_metadata_and_json() -> None:
    report = count_corners(ones(7), ones(7), ones(7), *T7, metadata={"seed": 3})
    assert report.metadata["seed"] == 3
    payload = json.loads(json.dumps(report.to_json()))
    assert payload["p"] == 7
    assert payload["lambda"][0] == pytest.approx(1.0)


def test_unbounded_inputs_are_not_rejected() -> None:
    big = generate("const:2", 7, 0)
    report = count_corners(big, big, big, *T7)
    assert report.lambda_value == pytest.approx(8.0)


def test_prime_mismatch() -> None:
    with pytest.raises(PrimeMismatchError):
        corner_operator(ones(5), ones(5), ones(5), *T7)


@pytest.mark.parametrize("axis", list(CL_COORDINATE))
@pytest.mark.parametrize("seed", range(3))
def test_two_term_linear_shift_is_exact(axis, seed) -> None:
    p = 11
    f0, f1, _ = generate_triple(["unimodular"], p, seed)
    report = two_term_operator(f0, f1, reduce_mod_p(parse_ratfun("t"), p), axis)
    assert report.error < 1e-12


def test_two_term_pole_mass() -> None:
    p = 13
    report = two_term_operator(ones(p), ones(p), reduce_mod_p(parse_ratfun("1/t"), p), CL_COORDINATE.FIRST)
    assert report.lambda_value == pytest.approx((p - 1) / p)
    assert report.main_term == pytest.approx(1.0)
    assert report.error == pytest.approx(1 / p)


@pytest.mark.parametrize("P, Q", [("t", "t^2"), ("1/t", "t^3"), ("t^2", "t^3+t")])
@pytest.mark.parametrize("seed", range(3))
def test_duality(P, Q, seed) -> None:
    p = 11
    Pp, Qp = pair(P, Q, p)
    f0, f1, f2 = generate_triple(["bounded"], p, seed)
    lam = corner_operator(f0, f1, f2, Pp, Qp)
    F1 = dual_function(f0, f2, Pp, Qp, CL_AGGREGATE.F1)
    F2 = dual_function(f0, f1, Pp, Qp, CL_AGGREGATE.F2)
    assert abs(lam - np.mean(f1.values * F1.values)) < 1e-10
    assert abs(lam - np.mean(f2.values * F2.values)) < 1e-10
    assert F1.bounded and F2.bounded


@pytest.mark.parametrize("seed", range(3))
def test_linearity_split(seed) -> None:
    p = 7
    f0, f1, f2 = generate_triple(["unimodular"], p, seed)
    g = f2.demean(CL_COORDINATE.SECOND)
    lam = corner_operator(f0, f1, f2, *T7)
    split = corner_operator(f0, f1, g, *T7) + corner_operator(f0, f1, f2 - g, *T7)
    assert abs(lam - split) < 1e-10


def test_dual_of_constants() -> None:
    F = dual_function(ones(7), ones(7), *T7, CL_AGGREGATE.F1)
    assert np.allclose(F.values, 1.0)
    F = dual_function(ones(7), ones(7), *pair("1/t", "t^2", 7), CL_AGGREGATE.F2)
    assert np.allclose(F.values, 6 / 7)


def test_census_full_and_empty() -> None:
    p = 7
    full = corner_census(np.ones((p, p), dtype=bool), *T7)
    assert full.count == p**3
    assert full.delta == 1.0
    assert full.ratio == pytest.approx(1.0)
    assert full.main_over_delta3 == pytest.approx(1.0)
    empty = corner_census(np.zeros((p, p), dtype=bool), *T7)
    assert empty.count == 0
    assert empty.ratio is None
    assert empty.main_over_delta3 is None


@pytest.mark.parametrize("seed", range(3))
def test_census_matches_operator(seed) -> None:
    p = 11
    Pp, Qp = pair("t", "t^2", p)
    A = generate("set:0.4", p, seed)
    report = corner_census(A, Pp, Qp)
    assert report.count == round(p**3 * corner_operator(A, A, A, Pp, Qp).real)


def test_census_prime_mismatch() -> None:
    with pytest.raises(PrimeMismatchError):
        corner_census(np.ones((5, 5), dtype=bool), *T7)


def test_step_record() -> None:
    step = StepRecord("x", 1.0, 2.0, CL_STEP_MODE.STRICT)
    assert step.slack == 1.0
    assert step.ratio == 0.5
    assert step.ok
    assert not StepRecord("x", 2.0, 1.0, CL_STEP_MODE.STRICT).ok
    assert StepRecord("x", 2.0, 1.0, CL_STEP_MODE.RATIO_ONLY).ok
    assert StepRecord("x", 1.0, 0.0, CL_STEP_MODE.RATIO_ONLY).ratio is None


@pytest.mark.parametrize("gen", ["unimodular", "bounded", "set:0.5"])
@pytest.mark.parametrize("seed", range(5))
def test_inequality_chain(gen, seed) -> None:
    p = 11
    f0, f1, f2 = generate_triple([gen], p, seed)
    report = validate_inequality_chain(f0, f1, f2, *pair("t", "t^2", p), ROTH_RATIO_11)
    assert report.ok, report.to_frame()
    assert report.min_slack >= -1e-9


def test_inequality_chain_all_ones() -> None:
    p = 11
    report = validate_inequality_chain(ones(p), ones(p), ones(p), *pair("t", "t^2", p), ROTH_RATIO_11)
    frame = report.to_frame().set_index("name")
    assert frame.loc["aggregate_bound", "lhs"] == pytest.approx(1.0)
    assert frame.loc["box_norm_monotonicity", "slack"] == pytest.approx(0.0, abs=1e-12)
    assert report.ok


@pytest.mark.parametrize("seed", range(5))
def test_degree_lowering_general(seed) -> None:
    p = 17
    f0, f1, f2 = generate_triple(["unimodular"], p, seed)
    trace = degree_lowering_trace(f0, f1, f2, *pair("t", "t^2", p))
    assert trace.branch == CL_TRACE_BRANCH.GENERAL
    assert trace.ok
    names = {s.name for s in trace.steps}
    assert "raw:delta_le_dual_l2" in names
    assert "raw:pet_bound" not in names
    assert trace.dual_l2 is not None


@pytest.mark.parametrize("seed", range(5))
def test_degree_lowering_u_threshold(seed) -> None:
    p = 17
    f0, f1, f2 = generate_triple(["unimodular"], p, seed)
    trace = degree_lowering_trace(f0, f1, f2, *pair("t", "t^2", p))
    pipelines = [pl for pl in (trace.raw, trace.demeaned) if pl is not None and pl.u_density is not None]
    assert pipelines
    for pipeline in pipelines:
        (step,) = [s for s in pipeline.steps if s.name.endswith(":u_density")]
        assert step.lhs == pytest.approx(pipeline.dual_directional_u2**4 / 2, rel=1e-12)
        assert step.rhs == pipeline.u_density
        assert step.mode == CL_STEP_MODE.RATIO_ONLY


def test_degree_lowering_with_roth_ratio() -> None:
    p = 11
    f0, f1, f2 = generate_triple(["bounded"], p, 2)
    trace = degree_lowering_trace(f0, f1, f2, *pair("t", "t^2", p), roth_ratio=ROTH_RATIO_11)
    assert trace.ok
    assert any(s.name == "raw:pet_bound" for s in trace.steps)


def test_degree_lowering_line_mean_identity() -> None:
    p = 13
    f0, f1, f2 = generate_triple(["bounded"], p, 7)
    trace = degree_lowering_trace(f0, f1, f2, *pair("t", "t^3", p))
    identity = [s for s in trace.steps if s.name.endswith("line_mean_identity")]
    assert identity
    assert all(s.lhs < 1e-10 for s in identity)


def test_degree_lowering_both_eigen() -> None:
    p = 13
    f0, f1, f2 = generate_triple(["unimodular", "eigen:first", "eigen:second"], p, 0)
    trace = degree_lowering_trace(f0, f1, f2, *pair("t", "t^2", p))
    assert trace.branch == CL_TRACE_BRANCH.BOTH_EIGEN
    (step,) = trace.branch_steps
    assert step.mode == CL_STEP_MODE.STRICT
    assert step.ok
    assert trace.terminated


def test_degree_lowering_second_eigen() -> None:
    p = 13
    f0, f1, f2 = generate_triple(["unimodular", "unimodular", "eigen:second"], p, 1)
    trace = degree_lowering_trace(f0, f1, f2, *pair("t", "t^2", p))
    assert trace.branch == CL_TRACE_BRANCH.SECOND_EIGEN
    assert trace.raw is not None and trace.demeaned is not None
    assert trace.ok


def test_degree_lowering_all_ones() -> None:
    p = 7
    trace = degree_lowering_trace(ones(p), ones(p), ones(p), *T7)
    assert trace.delta == pytest.approx(1.0)
    assert trace.demeaned_delta == pytest.approx(0.0, abs=1e-12)
    assert trace.terminated
    payload = json.loads(trace.to_json_str())
    assert payload["terminated"]
    assert payload["branch"] == str(trace.branch)


def test_degree_lowering_zero_frequency_eigen() -> None:
    p = 7
    f0, f1, _ = generate_triple(["unimodular"], p, 0)
    trace = degree_lowering_trace(f0, f1, ones(p), *T7)
    assert trace.branch == CL_TRACE_BRANCH.BOTH_EIGEN
    (step,) = trace.branch_steps
    assert step.mode == CL_STEP_MODE.RATIO_ONLY
    # constant f2 makes Lambda equal to the main term for a polynomial pair
    assert step.lhs < 1e-12


def test_error_scan_frame() -> None:
    P, Q = parse_ratfun("t"), parse_ratfun("t^2")
    df = error_scan(P, Q, [5, 7], [0, 1, 2], ["unimodular"])
    assert list(df.columns) == ["p", "seed", "abs_lambda", "abs_main", "error", "error_sqrt_p"]
    assert len(df) == 6
    assert np.allclose(df["error_sqrt_p"], df["error"] * np.sqrt(df["p"]))
    again = error_scan(P, Q, [5, 7], [0, 1, 2], ["unimodular"])
    assert df.equals(again)


def test_error_scan_skips_bad_primes() -> None:
    df = error_scan(parse_ratfun("t^2/7"), parse_ratfun("t^3"), [5, 7], [0], ["unimodular"])
    assert list(df["p"]) == [5]


def test_two_term_scan() -> None:
    df = two_term_scan(parse_ratfun("t"), [5, 7], [0, 1], "bounded", CL_COORDINATE.SECOND)
    assert len(df) == 4
    assert (df["error"] < 1e-12).all()


def test_unimodular_inputs_stay_bounded() -> None:
    f = generate("unimodular", 7, 0)
    assert abs(count_corners(f, f, f, *T7).lambda_value) <= 1.0 + 1e-12
