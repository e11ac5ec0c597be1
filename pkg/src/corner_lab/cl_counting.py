"""Corner counting operator, main term, two-term operators, dual functions,
the Cauchy-Schwarz chain validator, corner census and the degree-lowering trace.

Every average over y runs over the common non-pole set of P and Q and is
normalized by 1/p, so polynomial pairs give plain averages and each pole
removes exactly 1/p of mass.
"""

import json
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Optional

import numpy as np
import pandas as pd

from .cl_gowers import (
    DirectionSpec,
    box_norm,
    detect_eigenfunction,
    directional_subgroup,
    directional_u2,
    line_correlations,
    u2_inverse,
)
from .cl_grid import AggregateTable, GridFn, fourier_aggregate, generate_triple, indicator, norm
from .cl_kernel import bombieri_check, kernel_table
from .cl_ratfun import BadPrime, RatFunFp, RatFunQ, reduce_mod_p, reduce_pair_mod_p, valid_points
from .cl_util import (
    CL_AGGREGATE,
    CL_COORDINATE,
    CL_ERROR_ROW,
    CL_NORM,
    CL_STEP_MODE,
    CL_SUBGROUP,
    CL_TRACE_BRANCH,
    InvariantViolationError,
    PrimeMismatchError,
    format_time,
    get_logger,
)
from .constants import TOLERANCES

logger = get_logger("CL_Counting")


def _check_prime(*objects: GridFn | RatFunFp) -> int:
    primes = {o.p for o in objects}
    if len(primes) != 1:
        raise PrimeMismatchError(f"Inputs live over different primes {sorted(primes)}.")
    return primes.pop()


def _shift_table(P: RatFunFp, Q: Optional[RatFunFp] = None) -> tuple[np.ndarray, np.ndarray]:
    """(P(y), Q(y)) over the non-pole y, Q values zero when Q is None."""
    ys = valid_points(P, Q)
    Pv = P.value_table()[0][ys]
    Qv = Q.value_table()[0][ys] if Q is not None else np.zeros_like(Pv)
    return Pv, Qv


@dataclass
class CountReport:
    p: int
    lambda_value: complex
    main_term: complex
    error: float
    metadata: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "lambda": [self.lambda_value.real, self.lambda_value.imag],
            "main_term": [self.main_term.real, self.main_term.imag],
            "error": self.error,
            "metadata": self.metadata,
        }


def corner_operator(f0: GridFn, f1: GridFn, f2: GridFn, P: RatFunFp, Q: RatFunFp) -> complex:
    """E_{x,y} f0(x1,x2) f1(x1+P(y),x2) f2(x1,x2+Q(y))."""
    p = _check_prime(f0, f1, f2, P, Q)
    total = 0j
    for u, v in zip(*_shift_table(P, Q)):
        shifted1 = np.roll(f1.values, -u, axis=0)
        shifted2 = np.roll(f2.values, -v, axis=1)
        total += np.sum(f0.values * shifted1 * shifted2)
    return complex(total / p**3)


def main_term(f0: GridFn, f1: GridFn, f2: GridFn) -> complex:
    """E_x f0(x) E_a f1(a,x2) E_b f2(x1,b)."""
    _check_prime(f0, f1, f2)
    m1 = f1.values.mean(axis=0)[None, :]
    m2 = f2.values.mean(axis=1)[:, None]
    return complex(np.mean(f0.values * m1 * m2))


def count_corners(
    f0: GridFn, f1: GridFn, f2: GridFn, P: RatFunFp, Q: RatFunFp, metadata: Optional[dict] = None
) -> CountReport:
    lam = corner_operator(f0, f1, f2, P, Q)
    main = main_term(f0, f1, f2)
    if f0.bounded and f1.bounded and f2.bounded and abs(lam) > 1.0 + TOLERANCES.bounded:
        raise InvariantViolationError(f"|Lambda| = {abs(lam)} exceeds 1 for 1-bounded inputs.")
    return CountReport(P.p, lam, main, abs(lam - main), dict(metadata or {}, P=str(P), Q=str(Q)))


def two_term_operator(f0: GridFn, f1: GridFn, P: RatFunFp, axis: CL_COORDINATE) -> CountReport:
    """E_{x,y} f0(x) f1(x + P(y) e_axis) against E_x f0(x) (line average of f1 along axis)."""
    p = _check_prime(f0, f1, P)
    ax = 0 if axis == CL_COORDINATE.FIRST else 1
    total = 0j
    for u in _shift_table(P)[0]:
        total += np.sum(f0.values * np.roll(f1.values, -u, axis=ax))
    lam = complex(total / p**3)
    m = f1.values.mean(axis=ax)
    m = m[None, :] if ax == 0 else m[:, None]
    main = complex(np.mean(f0.values * m))
    return CountReport(p, lam, main, abs(lam - main), {"P": str(P), "axis": str(axis)})


def dual_function(f0: GridFn, g: GridFn, P: RatFunFp, Q: RatFunFp, which: CL_AGGREGATE) -> GridFn:
    """F1(x) = E_y f0(x1-P,x2) g(x1-P,x2+Q), paired with f1;
    F2(x) = E_y f0(x1,x2-Q) g(x1+P,x2-Q), paired with f2."""
    p = _check_prime(f0, g, P, Q)
    out = np.zeros((p, p), dtype=np.complex128)
    for u, v in zip(*_shift_table(P, Q)):
        if which == CL_AGGREGATE.F1:
            out += np.roll(f0.values, u, axis=0) * np.roll(g.values, (u, -v), axis=(0, 1))
        else:
            out += np.roll(f0.values, v, axis=1) * np.roll(g.values, (-u, v), axis=(0, 1))
    return GridFn(out / p, bounded=f0.bounded and g.bounded)


@dataclass
class CensusReport:
    p: int
    count: int
    delta: float
    ratio: Optional[float]
    main_over_delta3: Optional[float]


def corner_census(A: np.ndarray | GridFn, P: RatFunFp, Q: RatFunFp) -> CensusReport:
    """Counts (x1,x2,y), y non-pole, with all three corner points in A."""
    mask = np.asarray(A.values.real > 0.5 if isinstance(A, GridFn) else A, dtype=bool)
    p = mask.shape[0]
    _check_prime(P, Q)
    if p != P.p:
        raise PrimeMismatchError(f"Point set is over p={p}, functions over p={P.p}.")
    a = mask.astype(np.int64)
    count = 0
    for u, v in zip(*_shift_table(P, Q)):
        count += int(np.sum(a * np.roll(a, -u, axis=0) * np.roll(a, -v, axis=1)))
    delta = float(a.sum()) / p**2
    if delta == 0.0:
        return CensusReport(p, count, delta, None, None)
    f = indicator(mask)
    main = main_term(f, f, f).real
    return CensusReport(p, count, delta, count / (p**3 * delta**3), main / delta**3)


@dataclass
class StepRecord:
    name: str
    lhs: float
    rhs: float
    mode: CL_STEP_MODE

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    @property
    def ratio(self) -> Optional[float]:
        return self.lhs / self.rhs if self.rhs != 0.0 else None

    @property
    def ok(self) -> bool:
        return self.mode != CL_STEP_MODE.STRICT or self.slack >= -TOLERANCES.slack

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "mode": str(self.mode),
            "ratio": self.ratio,
            "ok": self.ok,
        }


def _identity_step(name: str, a: complex, b: complex) -> StepRecord:
    return StepRecord(name, abs(a - b), 0.0, CL_STEP_MODE.STRICT)


@dataclass
class ChainReport:
    p: int
    roth_ratio: float
    steps: list[StepRecord]

    @property
    def min_slack(self) -> float:
        return min(s.slack for s in self.steps if s.mode == CL_STEP_MODE.STRICT)

    @property
    def ok(self) -> bool:
        return all(s.ok for s in self.steps)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([s.to_json() for s in self.steps])


def gowers_control_bound(f0: GridFn, f1: GridFn, f2: GridFn, roth_ratio: float, mirror: bool = False) -> float:
    """||f0||_2 ||f1||_4 ||f2||_4^{1/2} ||f2||_{U2(0xFp)}^{1/4} r^{1/16}, or the mirror
    with f1, f2 swapped and U2(Fp x 0)."""
    a, b = (f2, f1) if mirror else (f1, f2)
    coordinate = CL_COORDINATE.FIRST if mirror else CL_COORDINATE.SECOND
    return (
        norm(f0, CL_NORM.MEAN, 2)
        * norm(a, CL_NORM.MEAN, 4)
        * norm(b, CL_NORM.MEAN, 4) ** 0.5
        * directional_u2(b, coordinate) ** 0.25
        * roth_ratio ** (1 / 16)
    )


def validate_inequality_chain(
    f0: GridFn, f1: GridFn, f2: GridFn, P: RatFunFp, Q: RatFunFp, roth_ratio: float
) -> ChainReport:
    p = _check_prime(f0, f1, f2, P, Q)
    lam = abs(corner_operator(f0, f1, f2, P, Q))
    agg1: AggregateTable = fourier_aggregate(f1, CL_AGGREGATE.F1)
    agg2: AggregateTable = fourier_aggregate(f2, CL_AGGREGATE.F2)
    f0_l2 = norm(f0, CL_NORM.MEAN, 2)
    f1_l4 = norm(f1, CL_NORM.MEAN, 4)
    f2_l4 = norm(f2, CL_NORM.MEAN, 4)
    f2_u2 = directional_u2(f2, CL_COORDINATE.SECOND)
    r16 = roth_ratio ** (1 / 16)

    strict = CL_STEP_MODE.STRICT
    aggregate_bound = f0_l2 * agg1.l2() ** 0.5 * agg2.l2() ** 0.25 * agg2.pair_l2() ** 0.125 * r16
    vertical = CL_SUBGROUP.VERTICAL
    steps = [
        StepRecord("aggregate_bound", lam, aggregate_bound, strict),
        StepRecord("gowers_control", lam, gowers_control_bound(f0, f1, f2, roth_ratio), strict),
        StepRecord("gowers_control_mirror", lam, gowers_control_bound(f0, f1, f2, roth_ratio, mirror=True), strict),
        StepRecord("aggregate_F1_l2", agg1.l2(), f1_l4**2, strict),
        StepRecord("aggregate_F2_l2", agg2.l2(), f2_l4**2, strict),
        StepRecord("aggregate_F2_pair_energy", agg2.pair_l2() ** 2, f2_u2**4, strict),
        StepRecord(
            "box_norm_monotonicity",
            box_norm(f2, DirectionSpec((vertical, CL_SUBGROUP.FULL))),
            box_norm(f2, DirectionSpec((vertical, vertical))),
            strict,
        ),
    ]
    report = ChainReport(p, roth_ratio, steps)
    logger.debug(f"Inequality chain at p={p}: min slack {report.min_slack:.3e}.")
    return report


@dataclass
class PipelineTrace:
    label: str
    delta: float
    dual_l2: Optional[float] = None
    dual_directional_u2: Optional[float] = None
    eigen_correlation: Optional[float] = None
    u_density: Optional[float] = None
    terminated: bool = False
    steps: list[StepRecord] = field(default_factory=list)

    def to_json(self) -> dict:
        out = asdict(self)
        out["steps"] = [s.to_json() for s in self.steps]
        return out


@dataclass
class DegreeLoweringTrace:
    p: int
    branch: CL_TRACE_BRANCH
    lambda_value: complex
    main_term: complex
    delta: float
    demeaned_delta: float
    branch_steps: list[StepRecord] = field(default_factory=list)
    raw: Optional[PipelineTrace] = None
    demeaned: Optional[PipelineTrace] = None

    @property
    def _primary(self) -> Optional[PipelineTrace]:
        return self.demeaned if self.demeaned is not None else self.raw

    @property
    def terminated(self) -> bool:
        return self._primary is None or self._primary.terminated

    @property
    def dual_l2(self) -> Optional[float]:
        return self._primary.dual_l2 if self._primary else None

    @property
    def dual_directional_u2(self) -> Optional[float]:
        return self._primary.dual_directional_u2 if self._primary else None

    @property
    def eigen_correlation(self) -> Optional[float]:
        return self._primary.eigen_correlation if self._primary else None

    @property
    def u_density(self) -> Optional[float]:
        return self._primary.u_density if self._primary else None

    @property
    def steps(self) -> list[StepRecord]:
        out = list(self.branch_steps)
        for pipeline in (self.raw, self.demeaned):
            if pipeline is not None:
                out.extend(pipeline.steps)
        return out

    @property
    def min_strict_slack(self) -> Optional[float]:
        slacks = [s.slack for s in self.steps if s.mode == CL_STEP_MODE.STRICT]
        return min(slacks) if slacks else None

    @property
    def ok(self) -> bool:
        return all(s.ok for s in self.steps)

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "branch": str(self.branch),
            "lambda": [self.lambda_value.real, self.lambda_value.imag],
            "main_term": [self.main_term.real, self.main_term.imag],
            "delta": self.delta,
            "demeaned_delta": self.demeaned_delta,
            "terminated": self.terminated,
            "branch_steps": [s.to_json() for s in self.branch_steps],
            "raw": self.raw.to_json() if self.raw else None,
            "demeaned": self.demeaned.to_json() if self.demeaned else None,
        }

    def to_json_str(self) -> str:
        return json.dumps(self.to_json(), indent=2)


def _dual_pipeline(
    label: str,
    f0: GridFn,
    g: GridFn,
    delta: float,
    P: RatFunFp,
    Q: RatFunFp,
    slot: CL_AGGREGATE,
    roth_ratio: Optional[float],
) -> PipelineTrace:
    """Runs dual -> PET -> U2 inverse -> pigeonhole -> final reduction.

    slot F1: the dual pairs with f1 and is measured in U2(Fp x 0).
    slot F2: the dual pairs with f2 and is measured in U2(0 x Fp).
    """
    trace = PipelineTrace(label, delta)
    p = f0.p
    strict, ratio_only = CL_STEP_MODE.STRICT, CL_STEP_MODE.RATIO_ONLY
    if delta <= TOLERANCES.bounded:
        trace.terminated = True
        return trace

    F = dual_function(f0, g, P, Q, slot)
    coordinate = CL_COORDINATE.FIRST if slot == CL_AGGREGATE.F1 else CL_COORDINATE.SECOND
    trace.dual_l2 = norm(F, CL_NORM.MEAN, 2)
    trace.steps.append(StepRecord(f"{label}:delta_le_dual_l2", delta, trace.dual_l2, strict))
    trace.steps.append(StepRecord(f"{label}:delta2_le_dual_l2", delta**2, trace.dual_l2, strict))

    trace.dual_directional_u2 = directional_u2(F, coordinate)
    trace.steps.append(StepRecord(f"{label}:pet_control", delta**2, trace.dual_directional_u2**0.25, ratio_only))
    if roth_ratio is not None:
        if slot == CL_AGGREGATE.F1:
            bound = gowers_control_bound(f0, F.conj(), g, roth_ratio, mirror=True)
        else:
            bound = gowers_control_bound(f0, g, F.conj(), roth_ratio)
        trace.steps.append(StepRecord(f"{label}:pet_bound", trace.dual_l2**2, bound, strict))

    chi, corr = u2_inverse(F, coordinate)
    trace.eigen_correlation = corr
    trace.steps.append(StepRecord(f"{label}:eigen_correlation", trace.dual_directional_u2**4, corr, strict))

    guaranteed = trace.dual_directional_u2**4
    per_line = line_correlations(F, chi).real
    U = per_line >= guaranteed / 2
    trace.u_density = float(U.sum()) / p
    # Pigeonhole on the per-line correlations; no constant to check.
    trace.steps.append(StepRecord(f"{label}:u_density", guaranteed / 2, trace.u_density, ratio_only))

    # Lines of U carrying frequency zero only see the line mean of F.
    line_means = np.abs(F.values.mean(axis=0 if coordinate == CL_COORDINATE.FIRST else 1))
    u1 = box_norm(F, DirectionSpec((directional_subgroup(coordinate),)))
    flat = float(np.mean(U * (chi.phi == 0) * line_means))
    trace.steps.append(StepRecord(f"{label}:u1_control", flat, u1, strict))

    m = F.values.mean(axis=0)[None, :] if slot == CL_AGGREGATE.F1 else F.values.mean(axis=1)[:, None]
    m_grid = GridFn(np.broadcast_to(m.conj(), (p, p)))
    if slot == CL_AGGREGATE.F1:
        lam_mean = corner_operator(f0, m_grid, g, P, Q)
    else:
        lam_mean = corner_operator(f0, g, m_grid, P, Q)
    trace.steps.append(_identity_step(f"{label}:line_mean_identity", lam_mean, u1**2))

    chi_u = chi.restrict(U).to_grid()
    if slot == CL_AGGREGATE.F1:
        lam_final, main_final = corner_operator(f0, chi_u, g, P, Q), main_term(f0, chi_u, g)
    else:
        lam_final, main_final = corner_operator(f0, g, chi_u, P, Q), main_term(f0, g, chi_u)
    residual = abs(lam_final - main_final)
    trace.steps.append(StepRecord(f"{label}:final_reduction", residual, p**-0.5, ratio_only))
    return trace


def degree_lowering_trace(
    f0: GridFn,
    f1: GridFn,
    f2: GridFn,
    P: RatFunFp,
    Q: RatFunFp,
    roth_ratio: Optional[float] = None,
) -> DegreeLoweringTrace:
    t0 = time.perf_counter()
    p = _check_prime(f0, f1, f2, P, Q)
    lam = corner_operator(f0, f1, f2, P, Q)
    main = main_term(f0, f1, f2)
    delta = abs(lam)

    chi2 = detect_eigenfunction(f2, CL_COORDINATE.SECOND)
    chi1 = detect_eigenfunction(f1, CL_COORDINATE.FIRST)
    strict, ratio_only = CL_STEP_MODE.STRICT, CL_STEP_MODE.RATIO_ONLY

    if chi2 is not None and (chi1 is not None or not np.any(chi2.phi[chi2.support])):
        g = f2.demean(CL_COORDINATE.SECOND) * 0.5
        demeaned_delta = abs(corner_operator(f0, f1, g, P, Q))
        residual = abs(lam - main)
        if chi1 is not None:
            K = kernel_table(P, Q)
            sup, _ = bombieri_check(K)
            bound = max(sup, abs(K[0, 0] - 1.0))
            step = StepRecord("eigen_branch_residual", residual, bound, strict)
        else:
            step = StepRecord("eigen_branch_residual", residual, p**-0.5, ratio_only)
        trace = DegreeLoweringTrace(
            p, CL_TRACE_BRANCH.BOTH_EIGEN, lam, main, delta, demeaned_delta, branch_steps=[step]
        )
    elif chi2 is not None:
        g = f2.demean(CL_COORDINATE.SECOND) * 0.5
        demeaned_delta = abs(corner_operator(f0, f1, g, P, Q))
        trace = DegreeLoweringTrace(p, CL_TRACE_BRANCH.SECOND_EIGEN, lam, main, delta, demeaned_delta)
        trace.raw = _dual_pipeline("raw", f0, f2, delta, P, Q, CL_AGGREGATE.F1, roth_ratio)
        trace.demeaned = _dual_pipeline("demeaned", f0, g, demeaned_delta, P, Q, CL_AGGREGATE.F1, roth_ratio)
    else:
        g = f1.demean(CL_COORDINATE.FIRST) * 0.5
        demeaned_delta = abs(corner_operator(f0, g, f2, P, Q))
        trace = DegreeLoweringTrace(p, CL_TRACE_BRANCH.GENERAL, lam, main, delta, demeaned_delta)
        trace.raw = _dual_pipeline("raw", f0, f1, delta, P, Q, CL_AGGREGATE.F2, roth_ratio)
        trace.demeaned = _dual_pipeline("demeaned", f0, g, demeaned_delta, P, Q, CL_AGGREGATE.F2, roth_ratio)

    for step in trace.steps:
        if not step.ok:
            logger.warning(f"Strict step {step.name} failed with slack {step.slack:.3e}.")
    logger.debug(f"degree_lowering_trace(p={p}) branch {trace.branch} took {format_time(time.perf_counter() - t0)}.")
    return trace


def error_scan(
    P: RatFunQ,
    Q: RatFunQ,
    primes: list[int],
    seeds: list[int],
    generators: list[str],
) -> pd.DataFrame:
    """One row per (p, seed) of |Lambda|, |main|, the error and error * sqrt(p)."""
    rows: list[CL_ERROR_ROW] = []
    for p in primes:
        pair = reduce_pair_mod_p(P, Q, p)
        if isinstance(pair, BadPrime):
            logger.info(f"Skipping {pair}.")
            continue
        Pp, Qp = pair
        for seed in seeds:
            f0, f1, f2 = generate_triple(generators, p, seed)
            report = count_corners(f0, f1, f2, Pp, Qp)
            rows.append(
                CL_ERROR_ROW(
                    p=p,
                    seed=seed,
                    abs_lambda=abs(report.lambda_value),
                    abs_main=abs(report.main_term),
                    error=report.error,
                    error_sqrt_p=report.error * p**0.5,
                )
            )
    return pd.DataFrame(rows, columns=list(CL_ERROR_ROW.__annotations__))


def two_term_scan(
    P: RatFunQ, primes: list[int], seeds: list[int], generator: str, axis: CL_COORDINATE
) -> pd.DataFrame:
    rows = []
    for p in primes:
        Pp = reduce_mod_p(P, p)
        if isinstance(Pp, BadPrime):
            logger.info(f"Skipping {Pp}.")
            continue
        for seed in seeds:
            f0, f1, _ = generate_triple([generator], p, seed)
            report = two_term_operator(f0, f1, Pp, axis)
            rows.append(
                {
                    "p": p,
                    "seed": seed,
                    "abs_lambda": abs(report.lambda_value),
                    "abs_main": abs(report.main_term),
                    "error": report.error,
                    "error_sqrt_p": report.error * p**0.5,
                }
            )
    return pd.DataFrame(rows, columns=list(CL_ERROR_ROW.__annotations__))
