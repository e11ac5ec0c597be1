"""Randomized identity testing for the Jacobian determinant identities.

All evaluations happen in one large prime field (2^61 - 1 by default), where a
nonzero rational expression of modest degree vanishes at a uniform random point
with negligible probability.
"""

import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np
from sympy.polys.domains import GF
from sympy.polys.matrices import DomainMatrix

from .cl_ratfun import (
    BadPrime,
    RatFunFp,
    RatFunQ,
    derivative,
    is_linearly_independent_with_one,
    reduce_pair_mod_p,
)
from .cl_util import (
    CL_IDENTITY,
    CL_NONVANISHING,
    CL_POLE,
    POLE,
    ResampleBudgetError,
    get_logger,
)
from .constants import TESTING_PRIME

logger = get_logger("CL_Jacobian")

RESAMPLE_BUDGET = 64
WITNESS_BUDGET = 64


class DerivativeTables:
    """P', Q', P'', Q'', R = P'/Q', R' over one prime field."""

    def __init__(self, P: RatFunFp, Q: RatFunFp):
        if P.p != Q.p:
            raise ValueError(f"Prime mismatch {P.p} != {Q.p}.")
        self.p = P.p
        self.P, self.Q = P, Q
        self.dP = derivative(P)
        self.dQ = derivative(Q)
        self.ddP = derivative(self.dP)
        self.ddQ = derivative(self.dQ)
        self.R = self.dP / self.dQ if self.dQ.numerator else None
        self.dR = derivative(self.R) if self.R is not None else None

    def values(self, y: int, *names: str) -> Optional[list[int]]:
        """Values of the named functions at y, or None if any of them has a pole."""
        out = []
        for name in names:
            f = getattr(self, name)
            if f is None:
                return None
            v = f.evaluate(y)
            if v is POLE:
                return None
            out.append(v)
        return out


def _det(rows: list[list[int]], p: int) -> int:
    K = GF(p)
    mat = DomainMatrix([[K.convert(x % p) for x in row] for row in rows], (len(rows), len(rows[0])), K)
    return int(K.to_int(mat.det())) % p


def jacobian_matrix_10(P: RatFunFp, Q: RatFunFp, point: list[int]) -> Optional[list[list[int]]]:
    """The 10 x 10 Jacobian of the ten Roth equations in y1..y10; None at a pole."""
    tables = DerivativeTables(P, Q)
    a, b = [], []
    for y in point:
        v = tables.values(y, "dP", "dQ")
        if v is None:
            return None
        a.append(v[0])
        b.append(v[1])
    M = [[0] * 10 for _ in range(10)]
    # fmt: off
    entries = [
        (0, 0, a[0]), (0, 2, -a[2]), (0, 8, -a[8]),
        (1, 1, a[1]), (1, 3, -a[3]), (1, 9, -a[9]),
        (2, 4, a[4]), (2, 6, -a[6]),
        (3, 5, a[5]), (3, 7, -a[7]),
        (4, 0, b[0]), (4, 1, -b[1]), (4, 8, -b[8]), (4, 9, b[9]),
        (5, 2, b[2]), (5, 6, -b[6]),
        (6, 3, b[3]), (6, 7, -b[7]),
        (7, 4, b[4]), (7, 5, -b[5]),
        (8, 8, a[8]), (8, 9, -a[9]),
        (9, 8, b[8]), (9, 9, -b[9]),
    ]
    # fmt: on
    for i, j, v in entries:
        M[i][j] = v % P.p
    return M


def jacobian_det_10(P: RatFunFp, Q: RatFunFp, point: list[int]) -> int | CL_POLE:
    M = jacobian_matrix_10(P, Q, point)
    if M is None:
        return POLE
    return _det(M, P.p)


def jacobian_closed_form(P: RatFunFp, Q: RatFunFp, point: list[int]) -> int | CL_POLE:
    """(P'1 Q'2 Q'3 P'4 Q'5 P'6 P'7 Q'8 - Q'1 P'2 P'3 Q'4 P'5 Q'6 Q'7 P'8)(-P'9 Q'10 + Q'9 P'10)."""
    p = P.p
    tables = DerivativeTables(P, Q)
    a, b = [], []
    for y in point:
        v = tables.values(y, "dP", "dQ")
        if v is None:
            return POLE
        a.append(v[0])
        b.append(v[1])
    first = a[0] * b[1] * b[2] * a[3] * b[4] * a[5] * a[6] * b[7]
    second = b[0] * a[1] * a[2] * b[3] * a[4] * b[5] * b[6] * a[7]
    return (first - second) * (-a[8] * b[9] + b[8] * a[9]) % p


def pair_wronskian(tables: DerivativeTables, u: int, v: int) -> Optional[int]:
    """-P'(u) Q'(v) + Q'(u) P'(v)."""
    fu = tables.values(u, "dP", "dQ")
    fv = tables.values(v, "dP", "dQ")
    if fu is None or fv is None:
        return None
    return (-fu[0] * fv[1] + fu[1] * fv[0]) % tables.p


def s_function(tables: DerivativeTables, y: int) -> Optional[int]:
    """S = P''/P' - Q''/Q', None where undefined."""
    v = tables.values(y, "dP", "dQ", "ddP", "ddQ")
    if v is None or v[0] == 0 or v[1] == 0:
        return None
    p = tables.p
    return (v[2] * pow(v[0], -1, p) - v[3] * pow(v[1], -1, p)) % p


def d_function(tables: DerivativeTables, y1: int, y4: int, y6: int) -> Optional[int]:
    """det [[P'], [Q'], [S]] at (y1, y4, y6)."""
    cols = []
    for y in (y1, y4, y6):
        v = tables.values(y, "dP", "dQ")
        s = s_function(tables, y)
        if v is None or s is None:
            return None
        cols.append((v[0], v[1], s))
    return _det([[c[k] for c in cols] for k in range(3)], tables.p)


def jzprime(tables: DerivativeTables, y1: int, y4: int, y6: int, y7: int) -> Optional[int]:
    """Columns y1, y4, y6 of the Jacobian of the Z' equations, by direct determinant."""
    vals = []
    for y in (y1, y4, y6, y7):
        v = tables.values(y, "dP", "dQ", "R", "dR")
        if v is None:
            return None
        vals.append(v)
    p = tables.p
    R = [v[2] for v in vals]
    # d/dy_i of R1 R4 R6 R7 replaces R_i by R'_i
    row3 = []
    for i in range(3):
        term = vals[i][3]
        for j in range(4):
            if j != i:
                term = term * R[j] % p
        row3.append(term)
    rows = [[v[0] for v in vals[:3]], [v[1] for v in vals[:3]], row3]
    return _det(rows, p)


@dataclass
class IdentityReport:
    identity: CL_IDENTITY
    prime: int
    trials: int
    failures: int = 0
    resamples: int = 0
    witnesses: list[list[int]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.failures == 0

    def to_json(self) -> dict:
        out = asdict(self)
        out["identity"] = str(self.identity)
        out["passed"] = self.passed
        return out

    def to_json_str(self) -> str:
        return json.dumps(self.to_json())


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, trial]))


def _draw(rng: np.random.Generator, k: int, p: int) -> list[int]:
    return [int(x) for x in rng.integers(0, p, size=k, dtype=np.int64)]


def _reduce(P: RatFunQ, Q: RatFunQ, prime: int) -> tuple[RatFunFp, RatFunFp]:
    pair = reduce_pair_mod_p(P, Q, prime)
    if isinstance(pair, BadPrime):
        raise ValueError(f"{P}, {Q} reduce badly mod the testing prime: {pair}.")
    return pair


def _identity_sides(identity: CL_IDENTITY, P: RatFunFp, Q: RatFunFp, tables: DerivativeTables):
    """Returns (number of coordinates, evaluator point -> (lhs, rhs) or None)."""
    p = P.p
    match identity:
        case CL_IDENTITY.PROP_JAC:

            def evaluate(point: list[int]):
                lhs = jacobian_det_10(P, Q, point)
                rhs = jacobian_closed_form(P, Q, point)
                return None if lhs is POLE or rhs is POLE else (lhs, rhs)

            return 10, evaluate
        case CL_IDENTITY.JZPRIME_FACTORIZATION:

            def evaluate(point: list[int]):
                y1, y4, y6, y7 = point
                lhs = jzprime(tables, y1, y4, y6, y7)
                D = d_function(tables, y1, y4, y6)
                Rs = [tables.values(y, "R") for y in point]
                if lhs is None or D is None or any(r is None for r in Rs):
                    return None
                prod = 1
                for r in Rs:
                    prod = prod * r[0] % p
                return lhs, prod * D % p

            return 4, evaluate
        case CL_IDENTITY.S_LOG_DERIVATIVE:

            def evaluate(point: list[int]):
                (y,) = point
                v = tables.values(y, "R", "dR")
                s = s_function(tables, y)
                if v is None or s is None or v[0] == 0:
                    return None
                return v[1] * pow(v[0], -1, p) % p, s

            return 1, evaluate
    raise ValueError(f"Unknown identity {identity}.")


def verify_identity(
    identity: CL_IDENTITY,
    P: RatFunQ,
    Q: RatFunQ,
    trials: int = 200,
    seed: int = 0,
    prime: int = TESTING_PRIME,
) -> IdentityReport:
    Pp, Qp = _reduce(P, Q, prime)
    tables = DerivativeTables(Pp, Qp)
    k, evaluate = _identity_sides(CL_IDENTITY(identity), Pp, Qp, tables)
    report = IdentityReport(CL_IDENTITY(identity), prime, trials)
    for trial in range(trials):
        rng = _trial_rng(seed, trial)
        for _ in range(RESAMPLE_BUDGET):
            point = _draw(rng, k, prime)
            sides = evaluate(point)
            if sides is not None:
                break
            report.resamples += 1
        else:
            raise ResampleBudgetError(
                f"{identity}: no evaluable point in {RESAMPLE_BUDGET} draws for {P}, {Q}."
            )
        if sides[0] != sides[1]:
            report.failures += 1
            report.witnesses.append(point)
            logger.warning(f"{identity} fails at {point}: {sides[0]} != {sides[1]}.")
    logger.debug(f"verify_identity {identity}: {report.failures} failures, {report.resamples} resamples.")
    return report


@dataclass
class WitnessResult:
    identity: CL_NONVANISHING
    found: bool
    point: Optional[list[int]]
    draws: int

    def to_json(self) -> dict:
        return {"identity": str(self.identity), "found": self.found, "point": self.point, "draws": self.draws}


def _nonvanishing_expression(
    identity: CL_NONVANISHING, tables: DerivativeTables
) -> tuple[int, Callable[[list[int]], Optional[int]]]:
    match identity:
        case CL_NONVANISHING.D:
            return 3, lambda pt: d_function(tables, *pt)
        case CL_NONVANISHING.J_X | CL_NONVANISHING.J_W | CL_NONVANISHING.PAIR_WRONSKIAN:
            return 2, lambda pt: pair_wronskian(tables, *pt)
    raise ValueError(f"Unknown expression {identity}.")


def nonvanishing_witness(
    identity: CL_NONVANISHING,
    P: RatFunQ,
    Q: RatFunQ,
    budget: int = WITNESS_BUDGET,
    seed: int = 0,
    prime: int = TESTING_PRIME,
) -> WitnessResult:
    """Samples points until the expression is defined and nonzero."""
    identity = CL_NONVANISHING(identity)
    if not is_linearly_independent_with_one(P, Q):
        logger.info(f"{P}, {Q} are dependent with 1; expecting {identity} to vanish identically.")
    Pp, Qp = _reduce(P, Q, prime)
    tables = DerivativeTables(Pp, Qp)
    k, expression = _nonvanishing_expression(identity, tables)
    for draw in range(budget):
        point = _draw(_trial_rng(seed, draw), k, prime)
        value = expression(point)
        if value is not None and value != 0:
            return WitnessResult(identity, True, point, draw + 1)
    return WitnessResult(identity, False, None, budget)
