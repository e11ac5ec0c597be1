"""Exponential-sum kernel K(a,b) = (1/p) sum_y e_p(a P(y) + b Q(y)).

Poles of P and of Q are excluded uniformly for every (a,b).
"""

import time
from pathlib import Path

import numpy as np

from .cl_grid import character_matrix
from .cl_ratfun import RatFunFp, pair_values
from .cl_util import (
    CL_BOMBIERI_ROW,
    PrimeMismatchError,
    format_byte_size,
    format_time,
    get_logger,
)

logger = get_logger("CL_Kernel")


def joint_distribution(P: RatFunFp, Q: RatFunFp) -> np.ndarray:
    """D[u, v] = #{non-pole y : P(y) = u, Q(y) = v}."""
    if P.p != Q.p:
        raise PrimeMismatchError(f"P is over p={P.p}, Q over p={Q.p}.")
    p = P.p
    _, Pv, Qv = pair_values(P, Q)
    D = np.zeros((p, p), dtype=np.int64)
    np.add.at(D, (Pv, Qv), 1)
    return D


class KernelTable:
    def __init__(self, p: int, values: np.ndarray, pole_count: int, distribution: np.ndarray | None = None):
        if values.shape != (p, p):
            raise ValueError(f"Kernel values must have shape {(p, p)}, got {values.shape}.")
        values = np.array(values, dtype=np.complex128)
        values.flags.writeable = False
        self.p = p
        self.values = values
        self.pole_count = pole_count
        self.distribution = distribution

        logger.debug(f"Created {self}, {format_byte_size(values.nbytes)}.")

    def __str__(self) -> str:
        return self.__repr__()

    def __repr__(self) -> str:
        return f"KernelTable(p={self.p}, pole_count={self.pole_count})"

    def __getitem__(self, ab: tuple[int, int]) -> complex:
        a, b = ab
        return complex(self.values[a % self.p, b % self.p])

    def conjugate_symmetry_defect(self) -> float:
        """max |conj K(a,b) - K(-a,-b)|."""
        k = np.arange(self.p)
        flipped = self.values[np.ix_((-k) % self.p, (-k) % self.p)]
        return float(np.max(np.abs(self.values.conj() - flipped)))

    def mass(self) -> float:
        """sum_{a,b} |K(a,b)|^2."""
        return float(np.sum(np.abs(self.values) ** 2))

    def collision_count(self) -> int:
        """#{(y, y') non-pole : P(y) = P(y'), Q(y) = Q(y')}, equal to mass()."""
        if self.distribution is None:
            raise ValueError(f"{self} was loaded without its joint distribution.")
        return int(np.sum(self.distribution**2))

    def dump(self, path: Path) -> None:
        """Little-endian header (p, pole_count) as int64, then row-major complex128."""
        with open(path, "wb") as file:
            file.write(np.array([self.p, self.pole_count], dtype="<i8").tobytes())
            file.write(self.values.astype("<c16").tobytes())

    @classmethod
    def load(cls, path: Path) -> "KernelTable":
        raw = Path(path).read_bytes()
        p, pole_count = (int(x) for x in np.frombuffer(raw[:16], dtype="<i8"))
        values = np.frombuffer(raw[16:], dtype="<c16")
        if values.size != p * p:
            raise ValueError(f"Kernel dump '{path}' has {values.size} entries, expected {p * p}.")
        return cls(p, values.reshape(p, p), pole_count)


def kernel_table(P: RatFunFp, Q: RatFunFp) -> KernelTable:
    """K = E D E^T / p with E[a, u] = e_p(a u) and D the joint value distribution."""
    t0 = time.perf_counter()
    D = joint_distribution(P, Q)
    p = P.p
    E = character_matrix(p, 1)
    values = E @ D.astype(np.complex128) @ E.T / p
    pole_count = p - int(D.sum())
    table = KernelTable(p, values, pole_count, D)
    logger.debug(f"kernel_table(p={p}) took {format_time(time.perf_counter() - t0)}.")
    return table


def kernel_by_definition(P: RatFunFp, Q: RatFunFp, a: int, b: int) -> complex:
    """Single entry by direct summation over y."""
    p = P.p
    _, Pv, Qv = pair_values(P, Q)
    phases = (a * Pv + b * Qv) % p
    return complex(np.sum(np.exp(2j * np.pi * phases / p)) / p)


def delta_kernel(K: KernelTable, h: tuple[int, int]) -> np.ndarray:
    """G_h(n, m) = K(n, m) conj K(n - h1, m + h2)."""
    h1, h2 = h
    shifted = np.roll(np.roll(K.values, h1, axis=0), -h2, axis=1)
    return K.values * shifted.conj()


def bombieri_check(K: KernelTable) -> tuple[float, float]:
    """(max_{(a,b) != 0} |K(a,b)|, that value times sqrt(p))."""
    mags = np.abs(K.values).copy()
    mags[0, 0] = 0.0
    sup = float(mags.max())
    return sup, sup * float(np.sqrt(K.p))


def bombieri_row(P: RatFunFp, Q: RatFunFp) -> CL_BOMBIERI_ROW:
    K = kernel_table(P, Q)
    sup, normalized = bombieri_check(K)
    return CL_BOMBIERI_ROW(p=K.p, sup=sup, normalized=normalized, pole_count=K.pole_count)
