"""Point counts for the Roth variety Y and the auxiliary varieties Z', X_{a,b},
W_{a,b} and Y'_{9,10}.

Y is cut out by ten equations in y_1..y_16 (P_i = P(y_i), Q_i = Q(y_i)):

    P1 - P3 - P9  + P11 = 0        Q1 - Q2 - Q9  + Q10 = 0
    P2 - P4 - P10 + P12 = 0        Q3 - Q7 - Q11 + Q15 = 0
    P5 - P7 - P13 + P15 = 0        Q4 - Q8 - Q12 + Q16 = 0
    P6 - P8 - P14 + P16 = 0        Q5 - Q6 - Q13 + Q14 = 0
    P9 - P10 - P11 + P12 - P13 + P14 + P15 - P16 = 0   (and the same with Q)

Every y_i ranges over the common non-pole set of P and Q. Three counters
overlap on small primes: exhaustive enumeration, a transfer-matrix counter and
a character-sum contraction of the kernel table.
"""

import itertools
import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from .cl_kernel import KernelTable, joint_distribution, kernel_table
from .cl_ratfun import BadPrime, RatFunFp, RatFunQ, derivative, pair_values, reduce_pair_mod_p
from .cl_util import (
    CL_COUNT_METHOD,
    CL_SCAN_ROW,
    InvariantViolationError,
    MemoryCapExceededError,
    NumericalHealthError,
    PrimeTooLargeError,
    format_time,
    get_logger,
)
from .constants import BRUTE_MAX_P, BUCKET_CAP, STRUCTURED_MAX_P, TOLERANCES, ZPRIME_MAX_P

logger = get_logger("CL_Varieties")

# fmt: off
X_SIGNS = (-1, -1, -1, 1, -1)              # y2, y3, y5, y7, y8
W_SIGNS = (-1, 1, -1, 1, 1, -1)            # y11 .. y16
N8_SIGNS = (1, -1, -1, 1, -1, 1, 1, -1)    # y9 .. y16, also y1..y8 of Z'
# fmt: on


@dataclass
class VarietyCountReport:
    variety: str
    p: int
    count: int
    exponent: int
    method: CL_COUNT_METHOD
    residual: Optional[float] = None
    reliable: bool = True
    seconds: float = 0.0

    @property
    def ratio(self) -> float:
        return self.count / self.p**self.exponent

    def to_row(self) -> CL_SCAN_ROW:
        return CL_SCAN_ROW(
            p=self.p,
            variety=self.variety,
            count=self.count,
            exponent=self.exponent,
            ratio=self.ratio,
            method=str(self.method),
            residual=self.residual,
            seconds=self.seconds,
        )


def _derivative_values(f: RatFunFp, ys: np.ndarray) -> np.ndarray:
    values, _ = derivative(f).value_table()
    return values[ys]


def _roth_mask(Pv: list, Qv: list, p: int) -> np.ndarray:
    """Pv[i], Qv[i] hold the values at y_{i+1}, scalars or aligned arrays."""
    # fmt: off
    equations = (
        Pv[0] - Pv[2] - Pv[8] + Pv[10],
        Pv[1] - Pv[3] - Pv[9] + Pv[11],
        Pv[4] - Pv[6] - Pv[12] + Pv[14],
        Pv[5] - Pv[7] - Pv[13] + Pv[15],
        Qv[0] - Qv[1] - Qv[8] + Qv[9],
        Qv[2] - Qv[6] - Qv[10] + Qv[14],
        Qv[3] - Qv[7] - Qv[11] + Qv[15],
        Qv[4] - Qv[5] - Qv[12] + Qv[13],
        Pv[8] - Pv[9] - Pv[10] + Pv[11] - Pv[12] + Pv[13] + Pv[14] - Pv[15],
        Qv[8] - Qv[9] - Qv[10] + Qv[11] - Qv[12] + Qv[13] + Qv[14] - Qv[15],
    )
    # fmt: on
    mask = np.asarray(True)
    for e in equations:
        mask = mask & (np.asarray(e) % p == 0)
    return mask


def _brute_scan(P: RatFunFp, Q: RatFunFp, with_subvarieties: bool) -> dict[str, int]:
    p = P.p
    if p > BRUTE_MAX_P:
        raise PrimeTooLargeError(f"Exhaustive Roth enumeration supports p <= {BRUTE_MAX_P}, got p={p}.")
    ys, Pt, Qt = pair_values(P, Q)
    n = len(ys)
    names = ["Y"]
    if with_subvarieties:
        names += [f"Y_{i}" for i in range(1, 9)] + ["Y_9_10", "Z", "Y_sp", "sp_outside_union"]
    counts = {name: 0 for name in names}
    if n == 0:
        return counts
    if with_subvarieties:
        dP, dQ = _derivative_values(P, ys), _derivative_values(Q, ys)

    rest = np.indices((n,) * 12, dtype=np.int8).reshape(12, -1)
    size = rest.shape[1]
    for prefix in itertools.product(range(n), repeat=4):
        idx = list(prefix) + list(rest)
        Pv = [Pt[i] for i in idx]
        Qv = [Qt[i] for i in idx]
        Y = np.broadcast_to(_roth_mask(Pv, Qv, p), (size,))
        counts["Y"] += int(Y.sum())
        if not with_subvarieties:
            continue
        a = [dP[i] for i in idx]
        b = [dQ[i] for i in idx]
        in_union = np.zeros(size, dtype=bool)
        for i in range(8):
            Yi = Y & (b[i] % p == 0)
            counts[f"Y_{i + 1}"] += int(Yi.sum())
            in_union |= Yi
        wronskian = (-a[8] * b[9] + b[8] * a[9]) % p
        Y910 = Y & (wronskian == 0)
        counts["Y_9_10"] += int(Y910.sum())
        q_nonzero = np.ones(size, dtype=bool)
        for i in range(8):
            q_nonzero &= b[i] % p != 0
        # R1 R4 R6 R7 = R2 R3 R5 R8 with denominators cleared
        lhs = a[0] * a[3] * a[5] * a[6] % p * (b[1] * b[2] * b[4] * b[7] % p)
        rhs = a[1] * a[2] * a[4] * a[7] % p * (b[0] * b[3] * b[5] * b[6] % p)
        Z = Y & q_nonzero & ((lhs - rhs) % p == 0)
        counts["Z"] += int(Z.sum())
        in_union |= Y910 | Z
        det8 = (lhs - rhs) % p
        sp = Y & (det8 * wronskian % p == 0)
        counts["Y_sp"] += int(sp.sum())
        counts["sp_outside_union"] += int((sp & ~in_union).sum())
    return counts


def roth_count_brute(P: RatFunFp, Q: RatFunFp) -> int:
    t0 = time.perf_counter()
    count = _brute_scan(P, Q, with_subvarieties=False)["Y"]
    logger.debug(f"roth_count_brute(p={P.p}) = {count} in {format_time(time.perf_counter() - t0)}.")
    return count


def roth_subvariety_counts(P: RatFunFp, Q: RatFunFp) -> dict[str, int]:
    """|Y|, |Y_1..Y_8|, |Y_{9,10}|, |Z|, |Y_sp| and the points of Y_sp outside their union."""
    counts = _brute_scan(P, Q, with_subvarieties=True)
    if counts["sp_outside_union"] != 0:
        raise InvariantViolationError(f"{counts['sp_outside_union']} points of Y_sp lie outside Z and the Y_i.")
    return counts


def _difference_matrices(values: np.ndarray, p: int) -> np.ndarray:
    """M[c][u, v] = [F(u) - F(v) = c] over the non-pole set."""
    diff = (values[:, None] - values[None, :]) % p
    return (diff[None, :, :] == np.arange(p)[:, None, None]).astype(np.int64)


class StructuredRothCounter:
    """Transfer-matrix count of Y.

    The left block y1..y8 is a closed walk y1 -P-> y3 -Q-> y7 -P-> y5 -Q-> y6
    -P-> y8 -Q-> y4 -P-> y2 -Q-> y1. Each edge u -> v carries the constraint
    F(u) - F(v) = c with an offset fixed by the right block y9..y16.
    """

    def __init__(self, P: RatFunFp, Q: RatFunFp):
        p = P.p
        if p > STRUCTURED_MAX_P:
            raise PrimeTooLargeError(f"Structured Roth counting supports p <= {STRUCTURED_MAX_P}, got p={p}.")
        self.p = p
        self.P = P
        self.Q = Q
        ys, self.Pv, self.Qv = pair_values(P, Q)
        self.n = len(ys)
        self.D = joint_distribution(P, Q)

        neg = (-np.arange(p)) % p
        MP = _difference_matrices(self.Pv, p)
        MQ = _difference_matrices(self.Qv, p)
        PQ = np.matmul(MP[:, None], MQ[None, :])  # [c, c'] -> M_P(c) M_Q(c')
        # first half: c1, c6, c3, c8 ; second half: c4, c7, c2, c5
        half1 = np.matmul(PQ[:, :, None, None], PQ[neg][None, None, :, :])
        half2 = np.matmul(PQ[:, neg][:, :, None, None], PQ[neg][:, neg][None, None, :, :])
        self.half1 = half1.reshape(p**4, self.n, self.n)
        self.half2 = half2.reshape(p**4, self.n, self.n)

        logger.debug(f"Created {self}.")

    def __repr__(self) -> str:
        return f"StructuredRothCounter(p={self.p}, n={self.n})"

    def left_trace(self, offsets: tuple[int, ...]) -> int:
        """Closed-walk count for offsets (c1, .., c8)."""
        c1, c2, c3, c4, c5, c6, c7, c8 = (int(c) % self.p for c in offsets)
        p = self.p
        a = ((c1 * p + c6) * p + c3) * p + c8
        b = ((c4 * p + c7) * p + c2) * p + c5
        return int(np.trace(self.half1[a] @ self.half2[b]))

    def buckets(self) -> pd.Series:
        """Right-block weight per encoded offset vector code_a * p^4 + code_b."""
        p, n = self.p, self.n
        Pv, Qv = self.Pv, self.Qv
        rest = np.indices((n,) * 5).reshape(5, -1)  # y11 .. y15
        pending: list[pd.Series] = []
        merged = pd.Series(dtype=np.int64)
        for i9, i10 in itertools.product(range(n), repeat=2):
            P9, P10, Q9, Q10 = Pv[i9], Pv[i10], Qv[i9], Qv[i10]
            P11, P12, P13, P14, P15 = (Pv[r] for r in rest)
            Q11, Q12, Q13, Q14, Q15 = (Qv[r] for r in rest)
            P16 = (P9 - P10 - P11 + P12 - P13 + P14 + P15) % p
            Q16 = (Q9 - Q10 - Q11 + Q12 - Q13 + Q14 + Q15) % p
            weight = self.D[P16, Q16]
            keep = weight > 0
            if not keep.any():
                continue
            c1, c2, c3, c4 = (P9 - P11) % p, (P10 - P12) % p, (P13 - P15) % p, (P14 - P16) % p
            c5, c6, c7, c8 = (Q9 - Q10) % p, (Q11 - Q15) % p, (Q12 - Q16) % p, (Q13 - Q14) % p
            code_a = ((c1 * p + c6) * p + c3) * p + c8
            code_b = ((c4 * p + c7) * p + c2) * p + c5
            key = (code_a * p**4 + code_b)[keep]
            pending.append(pd.Series(weight[keep]).groupby(key).sum())
            if len(pending) >= 16:
                merged = pd.concat([merged, *pending]).groupby(level=0).sum()
                pending.clear()
                self._check_cap(len(merged))
        merged = pd.concat([merged, *pending]).groupby(level=0).sum().astype(np.int64)
        self._check_cap(len(merged))
        return merged

    @staticmethod
    def _check_cap(size: int) -> None:
        if size > BUCKET_CAP:
            raise MemoryCapExceededError(f"{size} distinct offset buckets exceed the cap of {BUCKET_CAP}.")

    def count(self, chunk: int = 4096) -> int:
        t0 = time.perf_counter()
        buckets = self.buckets()
        if buckets.empty:
            return 0
        keys = buckets.index.to_numpy(dtype=np.int64)
        weights = buckets.to_numpy(dtype=np.int64)
        code_a, code_b = keys // self.p**4, keys % self.p**4
        total = 0
        for start in range(0, len(keys), chunk):
            sl = slice(start, start + chunk)
            traces = np.einsum("bij,bji->b", self.half1[code_a[sl]], self.half2[code_b[sl]])
            total += int(np.sum(weights[sl] * traces))
        logger.debug(
            f"{self}: {len(keys)} buckets, count {total} in {format_time(time.perf_counter() - t0)}."
        )
        return total


def roth_count_structured(P: RatFunFp, Q: RatFunFp) -> int:
    return StructuredRothCounter(P, Q).count()


def left_cycle_count_direct(P: RatFunFp, Q: RatFunFp, offsets: tuple[int, ...]) -> int:
    """#{y1..y8 : P1-P3=c1, P2-P4=c2, P5-P7=c3, P6-P8=c4, Q1-Q2=c5, Q3-Q7=c6, Q4-Q8=c7, Q5-Q6=c8}."""
    p = P.p
    _, Pt, Qt = pair_values(P, Q)
    n = len(Pt)
    if n == 0:
        return 0
    c = [int(x) % p for x in offsets]
    i = np.indices((n,) * 8).reshape(8, -1)
    Pv = [Pt[k] for k in i]
    Qv = [Qt[k] for k in i]
    # fmt: off
    mask = (
        ((Pv[0] - Pv[2] - c[0]) % p == 0)
        & ((Pv[1] - Pv[3] - c[1]) % p == 0)
        & ((Pv[4] - Pv[6] - c[2]) % p == 0)
        & ((Pv[5] - Pv[7] - c[3]) % p == 0)
        & ((Qv[0] - Qv[1] - c[4]) % p == 0)
        & ((Qv[2] - Qv[6] - c[5]) % p == 0)
        & ((Qv[3] - Qv[7] - c[6]) % p == 0)
        & ((Qv[4] - Qv[5] - c[7]) % p == 0)
    )
    # fmt: on
    return int(mask.sum())


def _charsum_terms(K: KernelTable, dtype: type) -> np.ndarray:
    """||B_h||_F^2 for every h, indexed [h1, h2]."""
    p = K.p
    values = K.values.astype(dtype)
    m = np.arange(p)
    cols = (m[None, :] + m[:, None]) % p  # [h2, m] -> m + h2
    terms = np.empty((p, p), dtype=dtype)
    for h1 in range(p):
        rolled = np.roll(values, h1, axis=0)  # [n] -> K[n - h1]
        G = values[None, :, :] * rolled[:, cols].transpose(1, 0, 2).conj()  # [h2, n, m]
        A = np.matmul(G.transpose(0, 2, 1), G.conj())
        B = np.matmul(A.transpose(0, 2, 1), A.conj())
        terms[h1] = np.einsum("hij,hij->h", B.conj(), B)
    return terms


def roth_count_charsum(P: RatFunFp, Q: RatFunFp, K: Optional[KernelTable] = None) -> VarietyCountReport:
    """|Y| = p^6 sum_h ||B_h||_F^2 from the kernel table."""
    t0 = time.perf_counter()
    K = K if K is not None else kernel_table(P, Q)
    p = K.p
    count, residual = 0, 0.0
    for dtype in (np.complex128, np.clongdouble):
        terms = _charsum_terms(K, dtype).ravel()
        if dtype is np.complex128:
            S = math.fsum(sorted(terms.real.tolist()))
        else:
            S = np.sort(terms.real).sum(dtype=np.longdouble)
        imag = float(abs(terms.imag.sum()))
        if imag >= TOLERANCES.charsum_imag * max(float(S), 1.0):
            raise NumericalHealthError(f"Charsum at p={p} has imaginary residue {imag} against S={S}.")
        raw = S * p**6
        count = int(np.rint(raw))
        residual = float(abs(raw - count))
        if residual < TOLERANCES.charsum_residual:
            break
        logger.warning(f"Charsum residual {residual:.3e} at p={p} with {np.dtype(dtype).name}.")
    reliable = residual < TOLERANCES.charsum_residual
    return VarietyCountReport(
        "Y", p, count, 6, CL_COUNT_METHOD.CHARSUM, residual, reliable, time.perf_counter() - t0
    )


def signed_sum_histogram(P: RatFunFp, Q: RatFunFp, signs: tuple[int, ...]) -> np.ndarray:
    """N(a, b) = #{y_1..y_k non-pole : sum s_i P(y_i) = a, sum s_i Q(y_i) = b}."""
    if not 1 <= len(signs) <= 8:
        raise ValueError(f"Histograms support 1 to 8 variables, got {len(signs)}.")
    p = P.p
    D = joint_distribution(P, Q)
    neg = (-np.arange(p)) % p
    flipped = D[np.ix_(neg, neg)]
    step = {1: D, -1: flipped}

    def single(s: int) -> np.ndarray:
        if s not in step:
            raise ValueError(f"Signs must be +1 or -1, got {s}.")
        return step[s]

    out = single(signs[0]).copy()
    for s in signs[1:]:
        kernel = single(s)
        acc = np.zeros_like(out)
        for u, v in zip(*np.nonzero(kernel)):
            acc += kernel[u, v] * np.roll(out, (u, v), axis=(0, 1))
        out = acc
    return out


def yprime_910_count(P: RatFunFp, Q: RatFunFp) -> int:
    """#{y9..y16 : the two signed sums vanish and -P'(y9)Q'(y10) + Q'(y9)P'(y10) = 0}."""
    p = P.p
    ys, Pv, Qv = pair_values(P, Q)
    dP, dQ = _derivative_values(P, ys), _derivative_values(Q, ys)
    NW = signed_sum_histogram(P, Q, W_SIGNS)
    wronskian = (-dP[:, None] * dQ[None, :] + dQ[:, None] * dP[None, :]) % p
    i9, i10 = np.nonzero(wronskian == 0)
    a = (-Pv[i9] + Pv[i10]) % p
    b = (-Qv[i9] + Qv[i10]) % p
    return int(NW[a, b].sum())


@dataclass
class ZPrimeReport:
    p: int
    count: int
    r_undefined: int
    zero_product: int

    def to_report(self) -> VarietyCountReport:
        return VarietyCountReport("Zprime", self.p, self.count, 5, CL_COUNT_METHOD.JOIN)


def _zprime_half(P: RatFunFp, Q: RatFunFp) -> pd.DataFrame:
    """All 4-tuples with their (P-sum, Q-sum, R-product) key; r is -1 where some R is undefined."""
    p = P.p
    ys, Pv, Qv = pair_values(P, Q)
    n = len(ys)
    dP, dQ = _derivative_values(P, ys), _derivative_values(Q, ys)
    defined = dQ % p != 0
    R = np.zeros(n, dtype=np.int64)
    R[defined] = dP[defined] * np.array([pow(int(x), -1, p) for x in dQ[defined]], dtype=np.int64) % p
    i = np.indices((n,) * 4).reshape(4, -1)
    ps = sum(Pv[k] for k in i) % p
    qs = sum(Qv[k] for k in i) % p
    r = np.ones(i.shape[1], dtype=np.int64)
    ok = np.ones(i.shape[1], dtype=bool)
    for k in i:
        r = r * R[k] % p
        ok &= defined[k]
    return pd.DataFrame({"ps": ps, "qs": qs, "r": np.where(ok, r, -1)})


def _join_size(left: pd.DataFrame, right: pd.DataFrame, keys: list[str]) -> int:
    lc = left.groupby(keys).size().rename("n_left").reset_index()
    rc = right.groupby(keys).size().rename("n_right").reset_index()
    joined = lc.merge(rc, on=keys, how="inner")
    return int((joined["n_left"].astype(np.int64) * joined["n_right"].astype(np.int64)).sum())


def zprime_count(P: RatFunFp, Q: RatFunFp, swap_halves: bool = False) -> ZPrimeReport:
    """Meet-in-the-middle count of Z' over (y1,y4,y6,y7) against (y2,y3,y5,y8)."""
    p = P.p
    if p > ZPRIME_MAX_P:
        raise PrimeTooLargeError(f"Z' counting supports p <= {ZPRIME_MAX_P}, got p={p}.")
    t0 = time.perf_counter()
    left = _zprime_half(P, Q)
    right = _zprime_half(P, Q)
    if swap_halves:
        left, right = right, left
    left_def, right_def = left[left["r"] >= 0], right[right["r"] >= 0]
    count = _join_size(left_def, right_def, ["ps", "qs", "r"])
    sums_all = _join_size(left, right, ["ps", "qs"])
    sums_def = _join_size(left_def, right_def, ["ps", "qs"])
    zero = _join_size(left_def[left_def["r"] == 0], right_def[right_def["r"] == 0], ["ps", "qs"])
    logger.debug(f"zprime_count(p={p}) = {count} in {format_time(time.perf_counter() - t0)}.")
    return ZPrimeReport(p, count, sums_all - sums_def, zero)


def zprime_count_direct(P: RatFunFp, Q: RatFunFp) -> int:
    """Direct 8-variable enumeration of Z'; small p only."""
    p = P.p
    ys, Pt, Qt = pair_values(P, Q)
    n = len(ys)
    if n == 0:
        return 0
    dP, dQ = _derivative_values(P, ys), _derivative_values(Q, ys)
    i = np.indices((n,) * 8).reshape(8, -1)
    Pv = [Pt[k] for k in i]
    Qv = [Qt[k] for k in i]
    a = [dP[k] for k in i]
    b = [dQ[k] for k in i]
    s = N8_SIGNS
    mask = (sum(si * v for si, v in zip(s, Pv)) % p == 0) & (sum(si * v for si, v in zip(s, Qv)) % p == 0)
    for k in range(8):
        mask &= b[k] % p != 0
    lhs = a[0] * a[3] * a[5] * a[6] % p * (b[1] * b[2] * b[4] * b[7] % p)
    rhs = a[1] * a[2] * a[4] * a[7] % p * (b[0] * b[3] * b[5] * b[6] % p)
    mask &= (lhs - rhs) % p == 0
    return int(mask.sum())


def histogram_reports(P: RatFunFp, Q: RatFunFp) -> list[VarietyCountReport]:
    """sup_{a,b} |X_{a,b}|, sup_{a,b} |W_{a,b}| and N8(0,0)."""
    p = P.p
    out = []
    for name, signs, exponent in (("X_sup", X_SIGNS, 3), ("W_sup", W_SIGNS, 4)):
        t0 = time.perf_counter()
        N = signed_sum_histogram(P, Q, signs)
        out.append(
            VarietyCountReport(
                name, p, int(N.max()), exponent, CL_COUNT_METHOD.HISTOGRAM, seconds=time.perf_counter() - t0
            )
        )
    t0 = time.perf_counter()
    N8 = signed_sum_histogram(P, Q, N8_SIGNS)
    out.append(
        VarietyCountReport(
            "N8_origin", p, int(N8[0, 0]), 6, CL_COUNT_METHOD.HISTOGRAM, seconds=time.perf_counter() - t0
        )
    )
    return out


def check_diagonal_bound(roth: VarietyCountReport, n8_origin: int) -> None:
    """|Y| >= N8(0,0): the diagonal y_i = y_{i+8} family lies on Y."""
    if roth.reliable and roth.count < n8_origin:
        raise InvariantViolationError(f"|Y| = {roth.count} < N8(0,0) = {n8_origin} at p={roth.p}.")


def dimension_scan(P: RatFunQ, Q: RatFunQ, primes: list[int]) -> pd.DataFrame:
    rows: list[CL_SCAN_ROW] = []
    for p in primes:
        pair = reduce_pair_mod_p(P, Q, p)
        if isinstance(pair, BadPrime):
            logger.info(f"Skipping {pair}.")
            continue
        Pp, Qp = pair
        roth = roth_count_charsum(Pp, Qp)
        reports = [roth]
        if p <= ZPRIME_MAX_P:
            t0 = time.perf_counter()
            zp = zprime_count(Pp, Qp).to_report()
            zp.seconds = time.perf_counter() - t0
            reports.append(zp)
        hist = histogram_reports(Pp, Qp)
        check_diagonal_bound(roth, hist[-1].count)
        reports += hist
        rows.extend(r.to_row() for r in reports)
    return pd.DataFrame(rows, columns=list(CL_SCAN_ROW.__annotations__))
