"""Gowers box norms over subgroups of F_p^2 and the constructive U^2 inverse step.

Box norms are evaluated from the nested-difference definition, with the
innermost difference collapsed to a coset average. The line-DFT identity for
directional U^2 norms is kept as an independent cross-check.
"""

import json
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .cl_grid import GridFn, line_dft, phase_table
from .cl_util import (
    CL_COORDINATE,
    CL_SUBGROUP,
    InvariantViolationError,
    get_logger,
)
from .constants import BOX_NORM_MAX_DEGREE, TOLERANCES

logger = get_logger("CL_Gowers")


@dataclass(frozen=True)
class DirectionSpec:
    subgroups: tuple[CL_SUBGROUP, ...]

    def __post_init__(self) -> None:
        if not 1 <= len(self.subgroups) <= BOX_NORM_MAX_DEGREE:
            raise ValueError(
                f"Box norm degree must lie in [1, {BOX_NORM_MAX_DEGREE}], got {len(self.subgroups)}."
            )
        object.__setattr__(self, "subgroups", tuple(CL_SUBGROUP(s) for s in self.subgroups))

    @classmethod
    def parse(cls, text: str) -> "DirectionSpec":
        """Comma separated list such as '0xFp,Fp2'."""
        return cls(tuple(CL_SUBGROUP(s.strip()) for s in text.split(",") if s.strip()))

    @property
    def degree(self) -> int:
        return len(self.subgroups)

    def __str__(self) -> str:
        return ",".join(str(s) for s in self.subgroups)


def directional_subgroup(coordinate: CL_COORDINATE) -> CL_SUBGROUP:
    """Lines varying in x2 belong to 0 x F_p, lines varying in x1 to F_p x 0."""
    return CL_SUBGROUP.VERTICAL if coordinate == CL_COORDINATE.SECOND else CL_SUBGROUP.HORIZONTAL


def _subgroup_elements(subgroup: CL_SUBGROUP, p: int) -> Iterable[tuple[int, int]]:
    match subgroup:
        case CL_SUBGROUP.VERTICAL:
            return ((0, k) for k in range(p))
        case CL_SUBGROUP.HORIZONTAL:
            return ((k, 0) for k in range(p))
        case CL_SUBGROUP.FULL:
            return ((a, b) for a in range(p) for b in range(p))


def _coset_energy(g: np.ndarray, subgroup: CL_SUBGROUP) -> complex:
    # E_x E_{h in H} g(x) conj g(x+h) = E over cosets |E_{coset} g|^2
    match subgroup:
        case CL_SUBGROUP.VERTICAL:
            return complex(np.mean(np.abs(g.mean(axis=1)) ** 2))
        case CL_SUBGROUP.HORIZONTAL:
            return complex(np.mean(np.abs(g.mean(axis=0)) ** 2))
        case CL_SUBGROUP.FULL:
            return complex(abs(g.mean()) ** 2)


def _box_average(g: np.ndarray, subgroups: Sequence[CL_SUBGROUP]) -> complex:
    if len(subgroups) == 1:
        return _coset_energy(g, subgroups[0])
    p = g.shape[0]
    total = 0j
    count = 0
    for h1, h2 in _subgroup_elements(subgroups[0], p):
        shifted = np.roll(g, (-h1, -h2), axis=(0, 1))
        total += _box_average(g * shifted.conj(), subgroups[1:])
        count += 1
    return total / count


def box_norm(f: GridFn, dirs: DirectionSpec | Sequence[CL_SUBGROUP]) -> float:
    if not isinstance(dirs, DirectionSpec):
        dirs = DirectionSpec(tuple(dirs))
    average = _box_average(f.values, dirs.subgroups)
    value = average.real
    if value < 0.0:
        if value < -TOLERANCES.clamp:
            raise InvariantViolationError(
                f"Box norm average {value} over ({dirs}) is negative beyond tolerance."
            )
        value = 0.0
    return float(value ** (1.0 / 2**dirs.degree))


def directional_u2(f: GridFn, coordinate: CL_COORDINATE) -> float:
    sub = directional_subgroup(coordinate)
    return box_norm(f, DirectionSpec((sub, sub)))


def directional_u2_via_lines(f: GridFn, coordinate: CL_COORDINATE) -> float:
    """(E_line ||line DFT||_{l^4}^4)^{1/4}."""
    spectra = line_dft(f, coordinate)
    return float(np.mean(np.sum(np.abs(spectra) ** 4, axis=1)) ** 0.25)


class Eigenfunction:
    """chi = 1_E(line) e_p(phi(line) t) e(psi(line)), t running along each line.

    FIRST: lines indexed by x2, t = x1. SECOND: lines indexed by x1, t = x2.
    """

    def __init__(
        self,
        coordinate: CL_COORDINATE,
        support: np.ndarray,
        phi: np.ndarray,
        psi: np.ndarray,
    ):
        p = len(support)
        if len(phi) != p or len(psi) != p:
            raise ValueError("Eigenfunction support, phi and psi must all have length p.")
        self.coordinate = CL_COORDINATE(coordinate)
        self.support = np.asarray(support, dtype=bool)
        self.phi = np.asarray(phi, dtype=np.int64) % p
        self.psi = np.mod(np.asarray(psi, dtype=np.float64), 1.0)

    @property
    def p(self) -> int:
        return len(self.support)

    def __repr__(self) -> str:
        return f"Eigenfunction(p={self.p}, coordinate={self.coordinate}, |E|={int(self.support.sum())})"

    def to_grid(self) -> GridFn:
        p = self.p
        t = np.arange(p, dtype=np.int64)
        lines = phase_table(p)[(self.phi[:, None] * t[None, :]) % p]
        lines = lines * np.exp(2j * np.pi * self.psi)[:, None] * self.support[:, None]
        values = lines if self.coordinate == CL_COORDINATE.SECOND else lines.T
        return GridFn(values, bounded=True)

    def restrict(self, lines: np.ndarray) -> "Eigenfunction":
        """Multiplies the support by the indicator of a set of lines."""
        return Eigenfunction(self.coordinate, self.support & lines, self.phi, self.psi)

    def to_json(self) -> dict:
        return {
            "coordinate": str(self.coordinate),
            "E": [int(b) for b in self.support],
            "phi": [int(v) for v in self.phi],
            "psi": [float(v) for v in self.psi],
        }

    @classmethod
    def from_json(cls, data: dict | str) -> "Eigenfunction":
        if isinstance(data, str):
            data = json.loads(data)
        return cls(data["coordinate"], np.array(data["E"]), np.array(data["phi"]), np.array(data["psi"]))


def _lines(f: GridFn, coordinate: CL_COORDINATE) -> np.ndarray:
    return f.values if coordinate == CL_COORDINATE.SECOND else f.values.T


def u2_inverse(f: GridFn, coordinate: CL_COORDINATE) -> tuple[Eigenfunction, float]:
    """Per line pick the largest Fourier coefficient, smallest index among ties.

    Returns chi with E = F_p and the real correlation E_x f chi; every per-line
    correlation is |g_hat(xi*)|. Raises ValueError unless f is 1-bounded.
    """
    if not f.bounded:
        sup = float(np.abs(f.values).max())
        if sup > 1.0 + TOLERANCES.bounded:
            raise ValueError(f"u2_inverse needs a 1-bounded input, got sup |f| = {sup}.")
    p = f.p
    spectra = line_dft(f, coordinate)
    mags = np.abs(spectra)
    near_max = mags >= mags.max(axis=1, keepdims=True) - TOLERANCES.argmax_tie
    xi_star = np.argmax(near_max, axis=1)
    top = spectra[np.arange(p), xi_star]

    phi = (-xi_star) % p
    psi = np.mod(-np.angle(top) / (2 * np.pi), 1.0)
    psi[np.isclose(psi, 1.0, rtol=0.0, atol=1e-12)] = 0.0
    chi = Eigenfunction(coordinate, np.ones(p, dtype=bool), phi, psi)

    correlation = complex(np.mean(f.values * chi.to_grid().values))
    if abs(correlation.imag) > 1e-9:
        raise InvariantViolationError(f"u2_inverse correlation {correlation} is not real.")
    logger.debug(f"u2_inverse on {f}: correlation {correlation.real:.6g}.")
    return chi, float(correlation.real)


def line_correlations(f: GridFn, chi: Eigenfunction) -> np.ndarray:
    """E_t f chi on each line of chi's coordinate."""
    return np.mean(_lines(f, chi.coordinate) * _lines(chi.to_grid(), chi.coordinate), axis=1)


def detect_eigenfunction(f: GridFn, coordinate: CL_COORDINATE) -> Optional[Eigenfunction]:
    """Recognizes grids of the form 1_E(line) e_p(phi t) e(psi), else None."""
    p = f.p
    tol = 1e-9
    lines = _lines(f, coordinate)
    mags = np.abs(lines)
    support = mags.max(axis=1) > tol
    if np.any(np.abs(mags[support] - 1.0) > tol) or np.any(mags[~support] > tol):
        return None

    phi = np.zeros(p, dtype=np.int64)
    psi = np.zeros(p, dtype=np.float64)
    t = np.arange(p, dtype=np.int64)
    table = phase_table(p)
    for line in np.flatnonzero(support):
        g = lines[line]
        step = np.angle(g[1 % p] * np.conj(g[0])) if p > 1 else 0.0
        freq = int(np.rint(step * p / (2 * np.pi))) % p
        candidate = g[0] * table[(freq * t) % p]
        if np.max(np.abs(candidate - g)) > tol:
            return None
        phi[line] = freq
        psi[line] = np.angle(g[0]) / (2 * np.pi)
    return Eigenfunction(coordinate, support, phi, psi)
