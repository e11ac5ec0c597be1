import json
from pathlib import Path
from typing import Optional

import numpy as np

from .cl_util import (
    CL_AGGREGATE,
    CL_COORDINATE,
    CL_DOMAIN,
    CL_NORM,
    GridFormatError,
    PrimeMismatchError,
    get_logger,
)
from .constants import TOLERANCES

logger = get_logger("CL_Grid")


def phase_table(p: int) -> np.ndarray:
    """e_p(k) for k = 0..p-1."""
    return np.exp(2j * np.pi * np.arange(p) / p)


def character_matrix(p: int, sign: int = -1) -> np.ndarray:
    """W[a, x] = e_p(sign * a * x), built from exact residues."""
    k = np.arange(p, dtype=np.int64)
    return phase_table(p)[(sign * np.outer(k, k)) % p]


class GridFn:
    """Complex function on F_p^2, stored densely with index (x1, x2)."""

    def __init__(
        self,
        values: np.ndarray,
        bounded: bool = False,
        domain: CL_DOMAIN = CL_DOMAIN.SPACE,
    ):
        values = np.array(values, dtype=np.complex128)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError(f"Grid values must be a square p x p array, got shape {values.shape}.")
        if bounded:
            sup = float(np.abs(values).max(initial=0.0))
            if sup > 1.0 + TOLERANCES.bounded:
                raise ValueError(f"Grid flagged 1-bounded but sup |f| = {sup}.")
        values.flags.writeable = False
        self.values = values
        self.bounded = bounded
        self.domain = domain

    @property
    def p(self) -> int:
        return self.values.shape[0]

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return f"GridFn(p={self.p}, bounded={self.bounded}, domain={self.domain})"

    def __add__(self, other: "GridFn") -> "GridFn":
        _check_same_p(self, other)
        return GridFn(self.values + other.values, domain=self.domain)

    def __sub__(self, other: "GridFn") -> "GridFn":
        _check_same_p(self, other)
        return GridFn(self.values - other.values, domain=self.domain)

    def __mul__(self, other: "GridFn | complex") -> "GridFn":
        if isinstance(other, GridFn):
            _check_same_p(self, other)
            return GridFn(
                self.values * other.values,
                bounded=self.bounded and other.bounded,
                domain=self.domain,
            )
        out = self.values * other
        return GridFn(out, bounded=self.bounded and abs(other) <= 1.0, domain=self.domain)

    __rmul__ = __mul__

    def conj(self) -> "GridFn":
        return GridFn(self.values.conj(), bounded=self.bounded, domain=self.domain)

    def line_mean(self, coordinate: CL_COORDINATE) -> np.ndarray:
        """Average over the given coordinate: FIRST averages x1 (result indexed by x2)."""
        axis = 0 if coordinate == CL_COORDINATE.FIRST else 1
        return self.values.mean(axis=axis)

    def demean(self, coordinate: CL_COORDINATE) -> "GridFn":
        """f minus its average along the coordinate; sup norm may double."""
        m = self.line_mean(coordinate)
        if coordinate == CL_COORDINATE.FIRST:
            return GridFn(self.values - m[None, :])
        return GridFn(self.values - m[:, None])

    def mean(self) -> complex:
        return complex(self.values.mean())

    def to_json(self) -> dict:
        return {
            "p": self.p,
            "values": [[[float(z.real), float(z.imag)] for z in row] for row in self.values],
        }


def _check_same_p(*grids: GridFn) -> int:
    primes = {g.p for g in grids}
    if len(primes) != 1:
        raise PrimeMismatchError(f"Grids live over different primes {sorted(primes)}.")
    return primes.pop()


def dft2(f: GridFn) -> GridFn:
    """f_hat(xi) = E_x f(x) e_p(-x . xi) as a frequency-domain grid."""
    p = f.p
    W = character_matrix(p, -1)
    return GridFn(W @ f.values @ W / p**2, domain=CL_DOMAIN.FREQUENCY)


def idft2(f_hat: GridFn) -> GridFn:
    """f(x) = sum_xi f_hat(xi) e_p(xi . x)."""
    W = character_matrix(f_hat.p, 1)
    return GridFn(W @ f_hat.values @ W, domain=CL_DOMAIN.SPACE)


def norm(f: GridFn, kind: CL_NORM = CL_NORM.MEAN, r: float = 2.0) -> float:
    """L^r averages over the uniform measure, l^r sums."""
    if r < 1:
        raise ValueError(f"Norm exponent must be >= 1, got {r}.")
    power = np.abs(f.values) ** r
    total = power.mean() if kind == CL_NORM.MEAN else power.sum()
    return float(total ** (1.0 / r))


def line_dft(f: GridFn, coordinate: CL_COORDINATE) -> np.ndarray:
    """1D transform of each line along the coordinate, E_t g(t) e_p(-t xi).

    SECOND: lines x1 = const, output [x1, xi]. FIRST: lines x2 = const, output [x2, xi].
    """
    p = f.p
    W = character_matrix(p, -1)
    if coordinate == CL_COORDINATE.SECOND:
        return f.values @ W / p
    return f.values.T @ W / p


class AggregateTable:
    """F1(n1, h) or F2(m2, h) stored as values[line, h1, h2]."""

    def __init__(self, p: int, kind: CL_AGGREGATE, values: np.ndarray):
        if values.shape != (p, p, p):
            raise ValueError(f"Aggregate table must have shape {(p, p, p)}, got {values.shape}.")
        self.p = p
        self.kind = kind
        self.values = values

    def __repr__(self) -> str:
        return f"AggregateTable(p={self.p}, kind={self.kind})"

    def l2(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2)))

    def pair_l2(self) -> float:
        """|| conj(F)(m', h) F(m'', h) ||_{l^2} over (m', m'', h)."""
        per_h = np.sum(np.abs(self.values) ** 2, axis=0)
        return float(np.sqrt(np.sum(per_h**2)))


def fourier_aggregate(f: GridFn, kind: CL_AGGREGATE) -> AggregateTable:
    """F1(n1,h) = sum_{n2} f_hat(n1,n2) conj f_hat(n1-h1, n2-h2);
    F2(m2,h) = sum_{m1} f_hat(m1,m2) conj f_hat(m1+h1, m2+h2)."""
    p = f.p
    fh = dft2(f).values if f.domain == CL_DOMAIN.SPACE else f.values
    k = np.arange(p)
    out = np.empty((p, p, p), dtype=np.complex128)
    if kind == CL_AGGREGATE.F1:
        idx = (k[None, :] - k[:, None]) % p  # [h2, n2] -> n2 - h2
        for h1 in range(p):
            shifted = np.roll(fh, h1, axis=0)  # [n1] -> f_hat[n1 - h1]
            out[:, h1, :] = np.einsum("an,ahn->ah", fh, shifted[:, idx].conj())
    else:
        idx = (k[:, None] + k[None, :]) % p  # [h1, m1] -> m1 + h1
        for h2 in range(p):
            shifted = np.roll(fh, -h2, axis=1)  # [:, m2] -> f_hat[:, m2 + h2]
            out[:, :, h2] = np.einsum("ma,hma->ah", fh, shifted[idx, :].conj())
    return AggregateTable(p, kind, out)


def _parse_generator(spec: str) -> tuple[str, list[str]]:
    name, _, rest = spec.partition(":")
    return name.strip().lower(), [s for s in rest.split(",") if s != ""] if rest else []


def generate(spec: str, p: int, seed: int) -> GridFn:
    """Seeded grid generator.

    Descriptors: const[:c], char:a,b, unimodular, bounded, set:density,
    file:path, eigen:first|second, eigen0:first|second.
    """
    name, args = _parse_generator(spec)
    rng = np.random.default_rng(seed)
    match name:
        case "const":
            c = complex(args[0]) if args else 1.0
            return GridFn(np.full((p, p), c), bounded=abs(c) <= 1.0)
        case "char":
            if len(args) != 2:
                raise ValueError(f"Character descriptor needs two frequencies, got '{spec}'.")
            a, b = int(args[0]) % p, int(args[1]) % p
            k = np.arange(p, dtype=np.int64)
            phases = (a * k[:, None] + b * k[None, :]) % p
            return GridFn(phase_table(p)[phases], bounded=True)
        case "unimodular":
            return GridFn(np.exp(2j * np.pi * rng.random((p, p))), bounded=True)
        case "bounded":
            radius = np.sqrt(rng.random((p, p)))
            return GridFn(radius * np.exp(2j * np.pi * rng.random((p, p))), bounded=True)
        case "set":
            density = float(args[0]) if args else 0.5
            if not 0.0 <= density <= 1.0:
                raise ValueError(f"Set density must lie in [0, 1], got {density}.")
            return GridFn((rng.random((p, p)) < density).astype(np.float64), bounded=True)
        case "file":
            return load_grid(Path(":".join(args)) if args else Path(""), p)
        case "eigen" | "eigen0":
            from .cl_gowers import Eigenfunction

            coordinate = CL_COORDINATE(args[0] if args else "second")
            phi = np.zeros(p, dtype=np.int64) if name == "eigen0" else rng.integers(0, p, p)
            psi = rng.random(p)
            chi = Eigenfunction(coordinate, np.ones(p, dtype=bool), phi, psi)
            return chi.to_grid()
        case _:
            raise ValueError(f"Unknown generator descriptor '{spec}'.")


def generate_triple(specs: list[str], p: int, seed: int) -> tuple[GridFn, GridFn, GridFn]:
    """Three grids with independent streams derived from (seed, slot)."""
    if len(specs) == 1:
        specs = specs * 3
    if len(specs) != 3:
        raise ValueError(f"Need one or three generator descriptors, got {len(specs)}.")
    children = np.random.SeedSequence(seed).spawn(3)
    seeds = [int(child.generate_state(1)[0]) for child in children]
    return tuple(generate(s, p, sd) for s, sd in zip(specs, seeds))  # type: ignore[return-value]


def load_grid(path: Path, p: Optional[int] = None) -> GridFn:
    try:
        with open(path, "r") as file:
            data = json.load(file)
    except (OSError, json.JSONDecodeError) as e:
        raise GridFormatError(f"Couldn't read grid file '{path}': {e}") from e
    if not isinstance(data, dict) or "p" not in data or "values" not in data:
        raise GridFormatError(f"Grid file '{path}' needs keys 'p' and 'values'.")
    q = int(data["p"])
    if p is not None and q != p:
        raise PrimeMismatchError(f"Grid file '{path}' is over p={q}, expected p={p}.")
    arr = np.asarray(data["values"], dtype=np.float64)
    if arr.shape != (q, q, 2):
        raise GridFormatError(f"Grid file '{path}' values must be {q}x{q} [re, im] pairs, got {arr.shape}.")
    values = arr[..., 0] + 1j * arr[..., 1]
    bounded = bool(np.abs(values).max(initial=0.0) <= 1.0 + TOLERANCES.bounded)
    return GridFn(values, bounded=bounded)


def save_grid(f: GridFn, path: Path) -> None:
    with open(path, "w") as file:
        json.dump(f.to_json(), file)


def indicator(points: np.ndarray) -> GridFn:
    """Grid of a boolean p x p mask."""
    return GridFn(np.asarray(points, dtype=bool).astype(np.float64), bounded=True)
