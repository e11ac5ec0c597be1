"""Cross-method and invariant suite over every module.

Each check returns (ok, detail); exceptions count as failures. The quick suite
uses the smallest primes where each check is meaningful, `full=True` widens the
prime ranges and trial counts.
"""

import time
from typing import Callable

import numpy as np
import pandas as pd

from .cl_counting import (
    corner_operator,
    degree_lowering_trace,
    dual_function,
    two_term_operator,
    validate_inequality_chain,
)
from .cl_gowers import (
    DirectionSpec,
    box_norm,
    directional_u2,
    directional_u2_via_lines,
    u2_inverse,
)
from .cl_grid import GridFn, dft2, fourier_aggregate, generate, generate_triple, idft2, norm
from .cl_jacobian import nonvanishing_witness, verify_identity
from .cl_kernel import bombieri_check, kernel_by_definition, kernel_table
from .cl_ratfun import (
    BadPrime,
    RatFunQ,
    derivative,
    is_linearly_independent_with_one,
    parse_ratfun,
    reduce_mod_p,
    reduce_pair_mod_p,
)
from .cl_util import (
    CL_AGGREGATE,
    CL_COORDINATE,
    CL_IDENTITY,
    CL_NONVANISHING,
    CL_NORM,
    CL_SUBGROUP,
    CL_TRACE_BRANCH,
    POLE,
    format_time,
    get_logger,
)
from .cl_varieties import (
    N8_SIGNS,
    X_SIGNS,
    StructuredRothCounter,
    left_cycle_count_direct,
    roth_count_brute,
    roth_count_charsum,
    roth_count_structured,
    roth_subvariety_counts,
    signed_sum_histogram,
    zprime_count,
    zprime_count_direct,
)
from .constants import TESTING_PRIME, TOLERANCES

logger = get_logger("CL_Selftest")

GENERATORS = [
    "const",
    "const:0.5",
    "char:1,2",
    "unimodular",
    "bounded",
    "set:0.3",
    "eigen:first",
    "eigen:second",
    "eigen0:second",
]

# fmt: off
INDEPENDENT_PAIRS = [
    ("t", "t^2"),
    ("t", "t^3"),
    ("t^3", "t^3-t^2+t"),
    ("y^2/(y^7-5*y^3)", "y^17+1/(y^13+19)"),
]
# fmt: on
DEPENDENT_PAIR = ("t", "3*t+5")

_CHECKS: list[tuple[str, str, Callable[[bool], tuple[bool, str]]]] = []


def _check(module: str):
    def register(fn: Callable[[bool], tuple[bool, str]]):
        _CHECKS.append((module, fn.__name__.removeprefix("check_"), fn))
        return fn

    return register


def _pair(P: str, Q: str, p: int):
    pair = reduce_pair_mod_p(parse_ratfun(P), parse_ratfun(Q), p)
    if isinstance(pair, BadPrime):
        raise ValueError(str(pair))
    return pair


# ratfun


@_check("ratfun")
def check_parse_normalization(full: bool) -> tuple[bool, str]:
    f = parse_ratfun("t^2/(t^7-5*t^3)")
    expected = RatFunQ.from_coefficients([1], [1, 0, 0, 0, -5, 0])
    return f == expected, str(f)


@_check("ratfun")
def check_independence(full: bool) -> tuple[bool, str]:
    dependent = is_linearly_independent_with_one(*map(parse_ratfun, DEPENDENT_PAIR))
    independent = all(is_linearly_independent_with_one(*map(parse_ratfun, pq)) for pq in INDEPENDENT_PAIRS)
    return independent and not dependent and dependent.coefficients == (3, -1, 5), repr(dependent)


@_check("ratfun")
def check_bad_primes(full: bool) -> tuple[bool, str]:
    bad = reduce_mod_p(parse_ratfun("t^2/7"), 7)
    const = reduce_mod_p(parse_ratfun("5*t+1"), 5)
    good = reduce_mod_p(parse_ratfun("5*t+1"), 7)
    ok = isinstance(bad, BadPrime) and isinstance(const, BadPrime) and not isinstance(good, BadPrime)
    return ok, f"{bad}; {const}"


@_check("ratfun")
def check_derivative_rules(full: bool) -> tuple[bool, str]:
    """Product and quotient rules at random points of the testing field."""
    P, Q = _pair(*INDEPENDENT_PAIRS[3], TESTING_PRIME)
    dP, dQ = derivative(P), derivative(Q)
    d_prod, d_quot = derivative(P * Q), derivative(P / Q)
    rng = np.random.default_rng(0)
    checked = 0
    for y in rng.integers(0, TESTING_PRIME, size=50 if full else 10, dtype=np.int64):
        values = [f.evaluate(int(y)) for f in (P, Q, dP, dQ, d_prod, d_quot)]
        if any(v is POLE for v in values) or values[1] == 0:
            continue
        p_, q_, dp_, dq_, prod_, quot_ = values
        m = TESTING_PRIME
        if prod_ != (dp_ * q_ + p_ * dq_) % m:
            return False, f"product rule fails at {y}"
        if quot_ * q_ % m * q_ % m != (dp_ * q_ - p_ * dq_) % m:
            return False, f"quotient rule fails at {y}"
        checked += 1
    return checked > 0, f"{checked} points"


# grid


def _grid_primes(full: bool) -> list[int]:
    return [5, 7, 11, 13] if full else [5, 7]


@_check("grid")
def check_parseval_and_inversion(full: bool) -> tuple[bool, str]:
    worst = 0.0
    for p in _grid_primes(full):
        for spec in GENERATORS:
            f = generate(spec, p, 0)
            fh = dft2(f)
            worst = max(worst, abs(np.sum(np.abs(fh.values) ** 2) - np.mean(np.abs(f.values) ** 2)))
            worst = max(worst, float(np.max(np.abs(idft2(fh).values - f.values))))
    return worst <= TOLERANCES.identity, f"max defect {worst:.3e}"


@_check("grid")
def check_norm_monotonicity(full: bool) -> tuple[bool, str]:
    for p in _grid_primes(full):
        for spec in GENERATORS:
            f = generate(spec, p, 1)
            chain = [norm(f, CL_NORM.MEAN, r) for r in (1, 2, 4, 8)]
            if any(a > b + TOLERANCES.slack for a, b in zip(chain, chain[1:])):
                return False, f"{spec} at p={p}: {chain}"
            if norm(f, CL_NORM.SUM, 2) < norm(f, CL_NORM.SUM, 4) - TOLERANCES.slack:
                return False, f"{spec} at p={p}: l2 < l4"
    return True, ""


@_check("grid")
def check_aggregate_bounds(full: bool) -> tuple[bool, str]:
    for p in _grid_primes(full):
        for spec in GENERATORS:
            f = generate(spec, p, 2)
            l4 = norm(f, CL_NORM.MEAN, 4) ** 2
            for kind in CL_AGGREGATE:
                if fourier_aggregate(f, kind).l2() > l4 + TOLERANCES.slack:
                    return False, f"{kind} of {spec} at p={p}"
    return True, ""


# gowers


@_check("gowers")
def check_u2_line_identity(full: bool) -> tuple[bool, str]:
    worst = 0.0
    for p in _grid_primes(full):
        for spec in GENERATORS:
            f = generate(spec, p, 3)
            for coordinate in CL_COORDINATE:
                worst = max(worst, abs(directional_u2(f, coordinate) - directional_u2_via_lines(f, coordinate)))
    return worst <= TOLERANCES.identity, f"max defect {worst:.3e}"


@_check("gowers")
def check_box_norm_monotonicity(full: bool) -> tuple[bool, str]:
    vertical = CL_SUBGROUP.VERTICAL
    for p in _grid_primes(full):
        for spec in GENERATORS:
            f = generate(spec, p, 4)
            lower = box_norm(f, DirectionSpec((vertical, CL_SUBGROUP.FULL)))
            upper = box_norm(f, DirectionSpec((vertical, vertical)))
            if lower > upper + TOLERANCES.slack:
                return False, f"{spec} at p={p}: {lower} > {upper}"
    return True, ""


@_check("gowers")
def check_u2_inverse(full: bool) -> tuple[bool, str]:
    p = 13
    for seed in range(20 if full else 3):
        f = generate("bounded", p, seed)
        for coordinate in CL_COORDINATE:
            _, corr = u2_inverse(f, coordinate)
            if corr < directional_u2(f, coordinate) ** 4 - TOLERANCES.slack:
                return False, f"seed {seed} {coordinate}: correlation {corr}"
    for coordinate in CL_COORDINATE:
        _, corr = u2_inverse(generate("char:3,5", p, 0), coordinate)
        if abs(corr - 1.0) > TOLERANCES.identity:
            return False, f"single character correlation {corr}"
    return True, ""


# kernel


@_check("kernel")
def check_kernel_invariants(full: bool) -> tuple[bool, str]:
    for P, Q, p in [("t", "t^2", 11), ("1/t", "t^2", 7), ("t^3", "t^3-t^2+t", 13)]:
        Pp, Qp = _pair(P, Q, p)
        K = kernel_table(Pp, Qp)
        if K.conjugate_symmetry_defect() > TOLERANCES.kernel_symmetry:
            return False, f"conjugate symmetry for {P}, {Q}"
        if abs(K[0, 0] - (p - K.pole_count) / p) > TOLERANCES.identity:
            return False, f"K(0,0) = {K[0, 0]} for {P}, {Q}"
        if abs(K.mass() - K.collision_count()) > TOLERANCES.identity * max(K.mass(), 1.0):
            return False, f"mass {K.mass()} != collisions {K.collision_count()}"
        for a, b in [(1, 0), (2, 3), (p - 1, 1)]:
            if abs(K[a, b] - kernel_by_definition(Pp, Qp, a, b)) > TOLERANCES.identity:
                return False, f"K({a},{b}) disagrees with its definition"
    return True, ""


@_check("kernel")
def check_gauss_normalization(full: bool) -> tuple[bool, str]:
    values = []
    for p in [11, 31, 61] if full else [11, 31]:
        _, normalized = bombieri_check(kernel_table(*_pair("t", "t^2", p)))
        values.append(normalized)
    return all(abs(v - 1.0) <= TOLERANCES.slack for v in values), str(values)


# counting


@_check("counting")
def check_all_ones(full: bool) -> tuple[bool, str]:
    p = 7
    one = GridFn(np.ones((p, p)), bounded=True)
    lam = corner_operator(one, one, one, *_pair("t", "t^2", p))
    lam_pole = corner_operator(one, one, one, *_pair("1/t", "t^2", p))
    return abs(lam - 1.0) <= TOLERANCES.identity and abs(lam_pole - 6 / 7) <= TOLERANCES.identity, f"{lam}, {lam_pole}"


@_check("counting")
def check_duality_and_split(full: bool) -> tuple[bool, str]:
    worst = 0.0
    for p in [11, 17, 31] if full else [11]:
        Pp, Qp = _pair("t", "t^2", p)
        for seed in range(20 if full else 3):
            f0, f1, f2 = generate_triple(["bounded"], p, seed)
            lam = corner_operator(f0, f1, f2, Pp, Qp)
            F1 = dual_function(f0, f2, Pp, Qp, CL_AGGREGATE.F1)
            F2 = dual_function(f0, f1, Pp, Qp, CL_AGGREGATE.F2)
            worst = max(worst, abs(lam - np.mean(f1.values * F1.values)), abs(lam - np.mean(f2.values * F2.values)))
            g = f2.demean(CL_COORDINATE.SECOND)
            split = corner_operator(f0, f1, g, Pp, Qp) + corner_operator(f0, f1, f2 - g, Pp, Qp)
            worst = max(worst, abs(lam - split))
    return worst <= TOLERANCES.identity, f"max defect {worst:.3e}"


@_check("counting")
def check_two_term_exact(full: bool) -> tuple[bool, str]:
    worst = 0.0
    for p in [11, 31] if full else [11]:
        P = reduce_mod_p(parse_ratfun("t"), p)
        for seed in range(5):
            f0, f1, _ = generate_triple(["unimodular"], p, seed)
            for axis in CL_COORDINATE:
                worst = max(worst, two_term_operator(f0, f1, P, axis).error)
    return worst <= TOLERANCES.identity, f"max error {worst:.3e}"


@_check("counting")
def check_inequality_chain(full: bool) -> tuple[bool, str]:
    worst = np.inf
    for p in [11, 31] if full else [11]:
        Pp, Qp = _pair("t", "t^2", p)
        ratio = roth_count_charsum(Pp, Qp).ratio
        for seed in range(50 if full else 5):
            f0, f1, f2 = generate_triple(["bounded"], p, seed)
            report = validate_inequality_chain(f0, f1, f2, Pp, Qp, ratio)
            worst = min(worst, report.min_slack)
    return worst >= -TOLERANCES.slack, f"min slack {worst:.3e}"


@_check("counting")
def check_degree_lowering(full: bool) -> tuple[bool, str]:
    p = 17 if full else 11
    Pp, Qp = _pair("t", "t^2", p)
    for seed in range(20 if full else 3):
        trace = degree_lowering_trace(*generate_triple(["bounded"], p, seed), Pp, Qp)
        if not trace.ok:
            return False, f"seed {seed}: strict step failure"
    eigen = generate_triple(["unimodular", "eigen:first", "eigen:second"], p, 0)
    trace = degree_lowering_trace(*eigen, Pp, Qp)
    residual = trace.branch_steps[0].lhs if trace.branch_steps else np.inf
    ok = trace.branch == CL_TRACE_BRANCH.BOTH_EIGEN and trace.ok and np.isfinite(residual)
    return ok, f"eigen-branch residual * sqrt(p) = {residual * p**0.5:.3f}"


# varieties


@_check("varieties")
def check_roth_cross_method(full: bool) -> tuple[bool, str]:
    details = []
    cases = [("t", "t^2", 2)] + ([("t", "t^2", 3), ("1/t", "t^2", 3)] if full else [])
    for P, Q, p in cases:
        Pp, Qp = _pair(P, Q, p)
        brute = roth_count_brute(Pp, Qp)
        charsum = roth_count_charsum(Pp, Qp)
        counts = {brute, charsum.count}
        if P == "t":
            counts.add(roth_count_structured(Pp, Qp))
        details.append(f"{P},{Q}@{p}: {sorted(counts)}")
        if len(counts) != 1 or not charsum.reliable:
            return False, "; ".join(details)
    for p in [5, 7] if full else [5]:
        Pp, Qp = _pair("t", "t^2", p)
        structured, charsum = roth_count_structured(Pp, Qp), roth_count_charsum(Pp, Qp)
        details.append(f"t,t^2@{p}: {structured} vs {charsum.count}")
        if structured != charsum.count or not charsum.reliable:
            return False, "; ".join(details)
    return True, "; ".join(details)


@_check("varieties")
def check_transfer_matrix_trace(full: bool) -> tuple[bool, str]:
    Pp, Qp = _pair("t", "t^2", 3)
    counter = StructuredRothCounter(Pp, Qp)
    rng = np.random.default_rng(5)
    for _ in range(6 if full else 2):
        offsets = tuple(int(c) for c in rng.integers(0, 3, size=8))
        if counter.left_trace(offsets) != left_cycle_count_direct(Pp, Qp, offsets):
            return False, f"offsets {offsets}"
    return True, ""


@_check("varieties")
def check_subvariety_inclusion(full: bool) -> tuple[bool, str]:
    counts = roth_subvariety_counts(*_pair("t", "t^2", 3 if full else 2))
    return counts["sp_outside_union"] == 0, f"|Y| = {counts['Y']}, |Y_sp| = {counts['Y_sp']}"


@_check("varieties")
def check_diagonal_bound(full: bool) -> tuple[bool, str]:
    for p in [5, 7, 11, 13] if full else [5]:
        Pp, Qp = _pair("t", "t^2", p)
        roth = roth_count_charsum(Pp, Qp)
        n8 = int(signed_sum_histogram(Pp, Qp, N8_SIGNS)[0, 0])
        if roth.count < n8:
            return False, f"p={p}: |Y| = {roth.count} < N8(0,0) = {n8}"
    return True, ""


@_check("varieties")
def check_histogram_mass(full: bool) -> tuple[bool, str]:
    Pp, Qp = _pair("1/t", "t^2", 7)
    N = signed_sum_histogram(Pp, Qp, X_SIGNS)
    return int(N.sum()) == 6 ** len(X_SIGNS), f"total {int(N.sum())}"


@_check("varieties")
def check_zprime_join(full: bool) -> tuple[bool, str]:
    for p in [3, 5] if full else [3]:
        Pp, Qp = _pair("t", "t^2", p)
        joined = zprime_count(Pp, Qp)
        swapped = zprime_count(Pp, Qp, swap_halves=True)
        direct = zprime_count_direct(Pp, Qp)
        if not joined.count == swapped.count == direct:
            return False, f"p={p}: join {joined.count}, swapped {swapped.count}, direct {direct}"
    return True, ""


# jacobian


@_check("jacobian")
def check_jacobian_identities(full: bool) -> tuple[bool, str]:
    trials = 200 if full else 10
    for P, Q in INDEPENDENT_PAIRS:
        for identity in CL_IDENTITY:
            report = verify_identity(identity, parse_ratfun(P), parse_ratfun(Q), trials, seed=1)
            if not report.passed:
                return False, f"{identity} on ({P}, {Q}): {report.failures} failures"
    return True, f"{trials} trials per identity"


@_check("jacobian")
def check_nonvanishing(full: bool) -> tuple[bool, str]:
    for P, Q in INDEPENDENT_PAIRS:
        for identity in (CL_NONVANISHING.D, CL_NONVANISHING.J_X, CL_NONVANISHING.J_W):
            if not nonvanishing_witness(identity, parse_ratfun(P), parse_ratfun(Q), seed=2).found:
                return False, f"no witness for {identity} on ({P}, {Q})"
    dependent = nonvanishing_witness(CL_NONVANISHING.PAIR_WRONSKIAN, *map(parse_ratfun, DEPENDENT_PAIR), seed=2)
    return not dependent.found, f"dependent pair exhausted after {dependent.draws} draws"


def run_selftest(full: bool = False) -> pd.DataFrame:
    """One row per check: module, check, ok, detail, seconds."""
    rows = []
    for module, name, fn in _CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = fn(full)
        except Exception as e:
            logger.error(f"Selftest {module}.{name} raised {type(e).__name__}: {e}")
            ok, detail = False, f"{type(e).__name__}: {e}"
        seconds = time.perf_counter() - t0
        logger.info(f"{module}.{name}: {'ok' if ok else 'FAILED'} in {format_time(seconds)}.")
        rows.append({"module": module, "check": name, "ok": bool(ok), "detail": detail, "seconds": seconds})
    return pd.DataFrame(rows, columns=["module", "check", "ok", "detail", "seconds"])
