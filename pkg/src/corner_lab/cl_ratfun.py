"""Exact rational functions in one variable over Q and over F_p.

The representation is always reduced: numerator and denominator are coprime and
the denominator carries a positive leading coefficient (over Q) or is monic
(over F_p), so structural equality is equality of functions.
"""

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from math import gcd, lcm
from typing import Optional, Union

import numpy as np
from sympy import Matrix, Poly, Symbol
from sympy.polys.domains import GF, ZZ
from sympy.polys.galoistools import (
    gf_add,
    gf_degree,
    gf_diff,
    gf_eval,
    gf_from_int_poly,
    gf_gcd,
    gf_monic,
    gf_mul,
    gf_mul_ground,
    gf_neg,
    gf_quo,
    gf_sub,
)
from sympy.polys.matrices import DomainMatrix

from .cl_util import (
    CL_BAD_PRIME_REASON,
    CL_POLE,
    POLE,
    ExpressionSyntaxError,
    PrimeTooLargeError,
    ZeroDenominatorError,
    get_logger,
)

logger = get_logger("CL_RatFun")

T = Symbol("t")
VARIABLE_NAMES = ("t", "y")
VALUE_TABLE_MAX_P = 2**31
POLE_SCAN_MAX_P = 10**7


def _coeffs(poly: Poly) -> tuple[int, ...]:
    if poly.is_zero:
        return ()
    return tuple(int(c) for c in poly.all_coeffs())


def _format_poly(coeffs: tuple[int, ...]) -> str:
    if len(coeffs) == 0:
        return "0"
    deg = len(coeffs) - 1
    out = ""
    for i, c in enumerate(coeffs):
        if c == 0:
            continue
        e = deg - i
        sign = "-" if c < 0 else "+"
        if out == "" and sign == "+":
            sign = ""
        a = abs(c)
        if e == 0:
            mono = str(a)
        else:
            power = "t" if e == 1 else f"t^{e}"
            mono = power if a == 1 else f"{a}*{power}"
        out += sign + mono
    return out


class RatFunQ:
    """A rational function numerator/denominator with integer coefficients."""

    def __init__(self, numerator: Poly, denominator: Poly):
        numerator = Poly(numerator, T, domain=ZZ)
        denominator = Poly(denominator, T, domain=ZZ)
        if denominator.is_zero:
            raise ZeroDenominatorError("Denominator is the zero polynomial.")
        if numerator.is_zero:
            numerator, denominator = Poly(0, T, domain=ZZ), Poly(1, T, domain=ZZ)
        else:
            g = numerator.gcd(denominator)
            numerator = numerator.exquo(g)
            denominator = denominator.exquo(g)
            if denominator.LC() < 0:
                numerator, denominator = -numerator, -denominator
        self._num = numerator
        self._den = denominator

    @classmethod
    def from_coefficients(
        cls, numerator: list[int] | tuple[int, ...], denominator: list[int] | tuple[int, ...] = (1,)
    ) -> "RatFunQ":
        """Coefficients in descending powers of t."""
        return cls(Poly(list(numerator) or [0], T, domain=ZZ), Poly(list(denominator) or [0], T, domain=ZZ))

    @classmethod
    def constant(cls, c: int) -> "RatFunQ":
        return cls.from_coefficients([c])

    @property
    def numerator(self) -> tuple[int, ...]:
        return _coeffs(self._num)

    @property
    def denominator(self) -> tuple[int, ...]:
        return _coeffs(self._den)

    @property
    def numerator_poly(self) -> Poly:
        return self._num

    @property
    def denominator_poly(self) -> Poly:
        return self._den

    @property
    def degree(self) -> int:
        """Sum of numerator and denominator degrees."""
        return max(self._num.degree(), 0) + self._den.degree()

    @property
    def is_constant(self) -> bool:
        return max(self._num.degree(), 0) == 0 and self._den.degree() == 0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, RatFunQ):
            return NotImplemented
        return self.numerator == other.numerator and self.denominator == other.denominator

    def __hash__(self) -> int:
        return hash((self.numerator, self.denominator))

    def __str__(self) -> str:
        return f"({_format_poly(self.numerator)})/({_format_poly(self.denominator)})"

    def __repr__(self) -> str:
        return f"RatFunQ({self})"

    @staticmethod
    def _lift(other: Union["RatFunQ", int]) -> "RatFunQ":
        if isinstance(other, RatFunQ):
            return other
        if isinstance(other, int):
            return RatFunQ.constant(other)
        raise TypeError(f"Can't combine RatFunQ with {type(other).__name__}.")

    def __add__(self, other: Union["RatFunQ", int]) -> "RatFunQ":
        o = RatFunQ._lift(other)
        return RatFunQ(self._num * o._den + o._num * self._den, self._den * o._den)

    __radd__ = __add__

    def __neg__(self) -> "RatFunQ":
        return RatFunQ(-self._num, self._den)

    def __sub__(self, other: Union["RatFunQ", int]) -> "RatFunQ":
        return self + (-RatFunQ._lift(other))

    def __rsub__(self, other: int) -> "RatFunQ":
        return RatFunQ._lift(other) - self

    def __mul__(self, other: Union["RatFunQ", int]) -> "RatFunQ":
        o = RatFunQ._lift(other)
        return RatFunQ(self._num * o._num, self._den * o._den)

    __rmul__ = __mul__

    def __truediv__(self, other: Union["RatFunQ", int]) -> "RatFunQ":
        o = RatFunQ._lift(other)
        if o._num.is_zero:
            raise ZeroDenominatorError("Division by the zero polynomial.")
        return RatFunQ(self._num * o._den, self._den * o._num)

    def __rtruediv__(self, other: int) -> "RatFunQ":
        return RatFunQ._lift(other) / self

    def __pow__(self, k: int) -> "RatFunQ":
        if k < 0:
            return RatFunQ.constant(1) / (self ** (-k))
        return RatFunQ(self._num**k, self._den**k)

    def evaluate(self, y: int | Fraction) -> Fraction | CL_POLE:
        y = Fraction(y)
        d = sum(Fraction(c) * y**e for e, c in enumerate(reversed(self.denominator)))
        if d == 0:
            return POLE
        n = sum(Fraction(c) * y**e for e, c in enumerate(reversed(self.numerator)))
        return n / d


class BadPrime:
    def __init__(self, p: int, reason: CL_BAD_PRIME_REASON, detail: str = ""):
        self.p = p
        self.reason = reason
        self.detail = detail

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return f"BadPrime(p={self.p}, reason={self.reason})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, BadPrime) and (self.p, self.reason) == (other.p, other.reason)


@dataclass(frozen=True, eq=True)
class RatFunFp:
    """Reduced rational function over F_p with monic denominator.

    `annihilated` marks a derivative that lost terms because p divides an exponent.
    """

    p: int
    numerator: tuple[int, ...]
    denominator: tuple[int, ...]
    annihilated: bool = False

    @classmethod
    def from_coefficients(
        cls, numerator: list[int] | tuple[int, ...], denominator: list[int] | tuple[int, ...], p: int
    ) -> "RatFunFp":
        num = gf_from_int_poly([int(c) for c in numerator], p)
        den = gf_from_int_poly([int(c) for c in denominator], p)
        if len(den) == 0:
            raise ZeroDenominatorError(f"Denominator vanishes mod {p}.")
        g = gf_gcd(num, den, p, ZZ)
        num = gf_quo(num, g, p, ZZ)
        den = gf_quo(den, g, p, ZZ)
        lc, den = gf_monic(den, p, ZZ)
        num = gf_mul_ground(num, pow(int(lc), -1, p), p, ZZ)
        return cls(p, tuple(int(c) for c in num), tuple(int(c) for c in den))

    @property
    def degree(self) -> int:
        return max(gf_degree(list(self.numerator)), 0) + gf_degree(list(self.denominator))

    @property
    def is_constant(self) -> bool:
        return len(self.numerator) <= 1 and len(self.denominator) == 1

    def __str__(self) -> str:
        return f"({_format_poly(self.numerator)})/({_format_poly(self.denominator)}) mod {self.p}"

    def _lift(self, other: Union["RatFunFp", int]) -> "RatFunFp":
        if isinstance(other, RatFunFp):
            if other.p != self.p:
                raise ValueError(f"Prime mismatch {self.p} != {other.p}.")
            return other
        if isinstance(other, int):
            return RatFunFp.from_coefficients([other], [1], self.p)
        raise TypeError(f"Can't combine RatFunFp with {type(other).__name__}.")

    def __add__(self, other: Union["RatFunFp", int]) -> "RatFunFp":
        o, p = self._lift(other), self.p
        a, b, c, d = list(self.numerator), list(self.denominator), list(o.numerator), list(o.denominator)
        num = gf_add(gf_mul(a, d, p, ZZ), gf_mul(c, b, p, ZZ), p, ZZ)
        return RatFunFp.from_coefficients(num, gf_mul(b, d, p, ZZ), p)

    __radd__ = __add__

    def __neg__(self) -> "RatFunFp":
        return RatFunFp(self.p, tuple(int(c) for c in gf_neg(list(self.numerator), self.p, ZZ)), self.denominator)

    def __sub__(self, other: Union["RatFunFp", int]) -> "RatFunFp":
        return self + (-self._lift(other))

    def __mul__(self, other: Union["RatFunFp", int]) -> "RatFunFp":
        o, p = self._lift(other), self.p
        num = gf_mul(list(self.numerator), list(o.numerator), p, ZZ)
        return RatFunFp.from_coefficients(num, gf_mul(list(self.denominator), list(o.denominator), p, ZZ), p)

    __rmul__ = __mul__

    def __truediv__(self, other: Union["RatFunFp", int]) -> "RatFunFp":
        o, p = self._lift(other), self.p
        if len(o.numerator) == 0:
            raise ZeroDenominatorError(f"Division by the zero polynomial mod {p}.")
        num = gf_mul(list(self.numerator), list(o.denominator), p, ZZ)
        return RatFunFp.from_coefficients(num, gf_mul(list(self.denominator), list(o.numerator), p, ZZ), p)

    def evaluate(self, y: int) -> int | CL_POLE:
        y = int(y) % self.p
        d = int(gf_eval(list(self.denominator), y, self.p, ZZ))
        if d == 0:
            return POLE
        n = int(gf_eval(list(self.numerator), y, self.p, ZZ))
        return n * pow(d, -1, self.p) % self.p

    @cached_property
    def pole_set(self) -> frozenset[int]:
        """Roots of the denominator in F_p, by exhaustive scan."""
        if self.p > POLE_SCAN_MAX_P:
            raise PrimeTooLargeError(f"Exhaustive pole scan is not supported for p={self.p}.")
        if len(self.denominator) == 1:
            return frozenset()
        _, mask = self.value_table()
        return frozenset(int(y) for y in np.flatnonzero(~mask))

    def value_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Values on all of F_p and the non-pole mask; pole entries are 0."""
        p = self.p
        if p >= VALUE_TABLE_MAX_P:
            raise PrimeTooLargeError(f"Value tables need p < 2^31, got p={p}.")
        ys = np.arange(p, dtype=np.int64)
        num = np.zeros(p, dtype=np.int64)
        for c in self.numerator:
            num = (num * ys + c) % p
        den = np.zeros(p, dtype=np.int64)
        for c in self.denominator:
            den = (den * ys + c) % p
        mask = den != 0
        inv = np.zeros(p, dtype=np.int64)
        # Fermat inverse, vectorized square-and-multiply.
        base = den.copy()
        e = p - 2
        acc = np.ones(p, dtype=np.int64)
        while e > 0:
            if e & 1:
                acc = acc * base % p
            base = base * base % p
            e >>= 1
        inv[mask] = acc[mask]
        return num * inv % p, mask


def evaluate(f: RatFunFp, y: int) -> int | CL_POLE:
    return f.evaluate(y)


def reduce_mod_p(f: RatFunQ, p: int) -> RatFunFp | BadPrime:
    num = gf_from_int_poly(list(f.numerator), p)
    den = gf_from_int_poly(list(f.denominator), p)
    if len(den) == 0:
        logger.debug(f"Denominator of {f} vanishes mod {p}.")
        return BadPrime(p, CL_BAD_PRIME_REASON.DENOMINATOR_VANISHES, str(f))
    reduced = RatFunFp.from_coefficients(num, den, p)
    if reduced.is_constant and not f.is_constant:
        logger.debug(f"{f} becomes constant mod {p}.")
        return BadPrime(p, CL_BAD_PRIME_REASON.BECOMES_CONSTANT, str(f))
    return reduced


def _poly_derivative_coeffs(coeffs: tuple[int, ...]) -> list[int]:
    deg = len(coeffs) - 1
    return [c * (deg - i) for i, c in enumerate(coeffs[:-1])]


def derivative(f: RatFunQ | RatFunFp) -> RatFunQ | RatFunFp:
    if isinstance(f, RatFunQ):
        a, b = f.numerator_poly, f.denominator_poly
        return RatFunQ(a.diff(T) * b - a * b.diff(T), b * b)

    p = f.p
    annihilated = False
    for coeffs in (f.numerator, f.denominator):
        deg = len(coeffs) - 1
        if any(c != 0 and (deg - i) > 0 and (deg - i) % p == 0 for i, c in enumerate(coeffs)):
            annihilated = True
    if annihilated:
        logger.warning(f"Derivative of {f} drops terms whose exponent is divisible by p={p}.")
    a, b = list(f.numerator), list(f.denominator)
    num = gf_sub(gf_mul(gf_diff(a, p, ZZ), b, p, ZZ), gf_mul(a, gf_diff(b, p, ZZ), p, ZZ), p, ZZ)
    den = gf_mul(b, b, p, ZZ)
    out = RatFunFp.from_coefficients(num, den, p)
    if annihilated:
        out = RatFunFp(out.p, out.numerator, out.denominator, annihilated=True)
    return out


class IndependenceCertificate:
    def __init__(self, independent: bool, coefficients: Optional[tuple[int, int, int]] = None):
        self.independent = independent
        self.coefficients = coefficients

    def __bool__(self) -> bool:
        return self.independent

    def __repr__(self) -> str:
        if self.independent:
            return "IndependenceCertificate(independent)"
        return f"IndependenceCertificate(dependent, (alpha, beta, gamma)={self.coefficients})"


def _coefficient_rows(polys: list[list[int]]) -> list[list[int]]:
    """Rows indexed by power of t, columns by polynomial (coefficients ascending)."""
    width = max((len(c) for c in polys), default=0)
    cols = [list(reversed(c)) + [0] * (width - len(c)) for c in polys]
    return [[col[k] for col in cols] for k in range(width)]


def is_linearly_independent_with_one(P: RatFunQ, Q: RatFunQ) -> IndependenceCertificate:
    """Decides whether alpha*P + beta*Q + gamma = 0 forces alpha = beta = gamma = 0 over Q.

    Denominators are cleared first, alpha*a*d + beta*c*b + gamma*b*d = 0 for
    P = a/b and Q = c/d, and the nullspace of the integer coefficient matrix is
    computed exactly.
    """
    a, b = P.numerator_poly, P.denominator_poly
    c, d = Q.numerator_poly, Q.denominator_poly
    columns = [_coeffs(a * d) or (0,), _coeffs(c * b) or (0,), _coeffs(b * d)]
    rows = _coefficient_rows([list(col) for col in columns])
    nullspace = Matrix(rows).nullspace()
    if len(nullspace) == 0:
        return IndependenceCertificate(True)

    vec = nullspace[0]
    scale = lcm(*[int(x.q) for x in vec])
    ints = [int(x * scale) for x in vec]
    g = gcd(*ints)
    ints = [x // g for x in ints]
    first = next(x for x in ints if x != 0)
    if first < 0:
        ints = [-x for x in ints]
    return IndependenceCertificate(False, (ints[0], ints[1], ints[2]))


def is_linearly_independent_with_one_mod_p(P: RatFunFp, Q: RatFunFp) -> bool:
    if P.p != Q.p:
        raise ValueError(f"Prime mismatch {P.p} != {Q.p}.")
    p = P.p
    a, b = list(P.numerator), list(P.denominator)
    c, d = list(Q.numerator), list(Q.denominator)
    polys = [gf_mul(a, d, p, ZZ), gf_mul(c, b, p, ZZ), gf_mul(b, d, p, ZZ)]
    rows = _coefficient_rows([[int(x) for x in poly] or [0] for poly in polys])
    K = GF(p)
    mat = DomainMatrix([[K.convert(x % p) for x in row] for row in rows], (len(rows), 3), K)
    return mat.rank() == 3


def reduce_pair_mod_p(P: RatFunQ, Q: RatFunQ, p: int) -> tuple[RatFunFp, RatFunFp] | BadPrime:
    Pp = reduce_mod_p(P, p)
    if isinstance(Pp, BadPrime):
        return Pp
    Qp = reduce_mod_p(Q, p)
    if isinstance(Qp, BadPrime):
        return Qp
    if is_linearly_independent_with_one(P, Q) and not is_linearly_independent_with_one_mod_p(Pp, Qp):
        logger.debug(f"{P}, {Q} lose independence mod {p}.")
        return BadPrime(p, CL_BAD_PRIME_REASON.LOSES_INDEPENDENCE, f"{P}, {Q}")
    return Pp, Qp


def valid_points(P: RatFunFp, Q: Optional[RatFunFp] = None) -> np.ndarray:
    """The y in F_p where P (and Q, if given) is defined."""
    _, mask = P.value_table()
    if Q is not None:
        if Q.p != P.p:
            raise ValueError(f"Prime mismatch {P.p} != {Q.p}.")
        mask = mask & Q.value_table()[1]
    return np.flatnonzero(mask).astype(np.int64)


def pair_values(P: RatFunFp, Q: RatFunFp) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(ys, P(ys), Q(ys)) over the common non-pole set."""
    ys = valid_points(P, Q)
    Pv, _ = P.value_table()
    Qv, _ = Q.value_table()
    return ys, Pv[ys], Qv[ys]


class _ExpressionParser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def _skip(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def _peek(self) -> str:
        self._skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def _take(self, ch: str) -> None:
        if self._peek() != ch:
            found = self._peek() or "end of input"
            raise ExpressionSyntaxError(f"Expected '{ch}', found '{found}'", self.pos)
        self.pos += 1

    def _uint(self) -> int:
        self._skip()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        if start == self.pos:
            raise ExpressionSyntaxError("Expected an unsigned integer", start)
        return int(self.text[start : self.pos])

    def parse(self) -> RatFunQ:
        out = self.expr()
        if self._peek() != "":
            raise ExpressionSyntaxError(f"Unexpected '{self._peek()}'", self.pos)
        return out

    def expr(self) -> RatFunQ:
        negate = False
        if self._peek() == "-":
            self.pos += 1
            negate = True
        out = self.term()
        if negate:
            out = -out
        while self._peek() in ("+", "-"):
            op = self._peek()
            self.pos += 1
            rhs = self.term()
            out = out + rhs if op == "+" else out - rhs
        return out

    def term(self) -> RatFunQ:
        out = self.factor()
        while self._peek() in ("*", "/"):
            op = self._peek()
            self.pos += 1
            at = self.pos
            rhs = self.factor()
            if op == "*":
                out = out * rhs
            else:
                if rhs.numerator == ():
                    raise ZeroDenominatorError(f"Division by the zero polynomial at position {at}.")
                out = out / rhs
        return out

    def factor(self) -> RatFunQ:
        out = self.base()
        if self._peek() == "^":
            self.pos += 1
            out = out ** self._uint()
        return out

    def base(self) -> RatFunQ:
        ch = self._peek()
        if ch in VARIABLE_NAMES:
            self.pos += 1
            return RatFunQ.from_coefficients([1, 0])
        if ch.isdigit():
            return RatFunQ.constant(self._uint())
        if ch == "(":
            self.pos += 1
            out = self.expr()
            self._take(")")
            return out
        raise ExpressionSyntaxError(f"Unexpected '{ch or 'end of input'}'", self.pos)


def parse_ratfun(text: str) -> RatFunQ:
    """Parses expressions like "t^2/(t^7-5*t^3)" into a reduced RatFunQ."""
    return _ExpressionParser(text).parse()
