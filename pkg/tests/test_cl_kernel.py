import numpy as np
import pytest

from corner_lab.cl_kernel import (
    KernelTable,
    bombieri_check,
    bombieri_row,
    delta_kernel,
    joint_distribution,
    kernel_by_definition,
    kernel_table,
)
from corner_lab.cl_ratfun import parse_ratfun, reduce_pair_mod_p
from corner_lab.cl_util import PrimeMismatchError


def pair(P: str, Q: str, p: int):
    return reduce_pair_mod_p(parse_ratfun(P), parse_ratfun(Q), p)


K7 = kernel_table(*pair("t", "t^2", 7))


def test_joint_distribution_mass() -> None:
    D = joint_distribution(*pair("1/t", "t^2", 7))
    assert D.sum() == 6
    assert D[1, 1] == 1


def test_prime_mismatch() -> None:
    P7, _ = pair("t", "t^2", 7)
    _, Q5 = pair("t", "t^2", 5)
    with pytest.raises(PrimeMismatchError):
        joint_distribution(P7, Q5)


@pytest.mark.parametrize("p", [5, 7, 11])
def test_kernel_origin(p) -> None:
    assert kernel_table(*pair("t", "t^2", p))[0, 0] == pytest.approx(1.0)
    K = kernel_table(*pair("1/t", "t^2", p))
    assert K[0, 0] == pytest.approx((p - 1) / p)
    assert K.pole_count == 1


def test_complete_sums_vanish() -> None:
    for a in range(1, 7):
        assert abs(K7[a, 0]) < 1e-12


@pytest.mark.parametrize("p", [7, 11, 13])
def test_gauss_magnitude(p) -> None:
    K = kernel_table(*pair("t", "t^2", p))
    assert np.allclose(np.abs(K.values[:, 1:]), p**-0.5)


@pytest.mark.parametrize("P, Q, p", [("t", "t^2", 7), ("1/t", "t^3", 11), ("t^3", "t^3-t^2+t", 13)])
def test_table_matches_definition(P, Q, p) -> None:
    Pp, Qp = pair(P, Q, p)
    K = kernel_table(Pp, Qp)
    for a, b in [(0, 0), (1, 2), (p - 1, 3), (4, p - 2)]:
        assert abs(K[a, b] - kernel_by_definition(Pp, Qp, a, b)) < 1e-12


@pytest.mark.parametrize("P, Q, p", [("t", "t^2", 11), ("1/t", "t^2", 7), ("t^2", "t^4+t", 13)])
def test_symmetry_and_mass(P, Q, p) -> None:
    K = kernel_table(*pair(P, Q, p))
    assert K.conjugate_symmetry_defect() < 1e-12
    assert K.mass() == pytest.approx(K.collision_count(), rel=1e-10)


def test_collision_count_is_injective_count() -> None:
    # y -> (y, y^2) is injective, so only the diagonal collides
    K = kernel_table(*pair("t", "t^2", 11))
    assert K.collision_count() == 11


def test_delta_kernel() -> None:
    assert np.allclose(delta_kernel(K7, (0, 0)), np.abs(K7.values) ** 2)
    h1, h2 = 1, 0
    G = delta_kernel(K7, (h1, h2))
    for n in range(7):
        for m in range(7):
            assert abs(G[n, m] - K7[n, m] * np.conj(K7[n - h1, m + h2])) < 1e-12
    assert np.abs(G).max() <= np.abs(K7.values).max() ** 2 + 1e-12


@pytest.mark.parametrize("p", [11, 31, 61])
def test_bombieri_gauss(p) -> None:
    _, normalized = bombieri_check(kernel_table(*pair("t", "t^2", p)))
    assert normalized == pytest.approx(1.0, abs=1e-9)


def test_bombieri_row() -> None:
    row = bombieri_row(*pair("t", "t^3", 11))
    assert row["p"] == 11
    assert row["pole_count"] == 0
    assert row["normalized"] == pytest.approx(row["sup"] * 11**0.5)
    assert row["normalized"] <= 2.0 + 1e-9


def test_dump_and_load(tmp_path) -> None:
    path = tmp_path / "kernel.bin"
    K7.dump(path)
    assert path.stat().st_size == 16 + 16 * 49
    loaded = KernelTable.load(path)
    assert loaded.p == 7
    assert np.array_equal(loaded.values, K7.values)
    with pytest.raises(ValueError):
        loaded.collision_count()
