import numpy as np
import pytest

from corner_lab.cl_gowers import (
    DirectionSpec,
    Eigenfunction,
    box_norm,
    detect_eigenfunction,
    directional_subgroup,
    directional_u2,
    directional_u2_via_lines,
    line_correlations,
    u2_inverse,
)
from corner_lab.cl_grid import GridFn, generate
from corner_lab.cl_util import CL_COORDINATE, CL_SUBGROUP

V, H, F = CL_SUBGROUP.VERTICAL, CL_SUBGROUP.HORIZONTAL, CL_SUBGROUP.FULL


def point_mass(p: int) -> GridFn:
    values = np.zeros((p, p))
    values[2 % p, 1 % p] = 1.0
    return GridFn(values, bounded=True)


def test_direction_spec_parse() -> None:
    dirs = DirectionSpec.parse("0xFp, Fp2")
    assert dirs.subgroups == (V, F)
    assert dirs.degree == 2
    assert str(dirs) == "0xFp,Fp2"


@pytest.mark.parametrize("text", ["", "0xFp,0xFp,0xFp,0xFp", "1xFp"])
def test_direction_spec_rejects(text) -> None:
    with pytest.raises(ValueError):
        DirectionSpec.parse(text)


@pytest.mark.parametrize("dirs", [(V,), (V, V), (H, F), (V, H, F), (F, F)])
def test_constant_has_norm_one(dirs) -> None:
    assert box_norm(generate("const", 5, 0), dirs) == pytest.approx(1.0)


@pytest.mark.parametrize("p", [3, 5, 7])
def test_point_mass_u2(p) -> None:
    assert box_norm(point_mass(p), (V, V)) == pytest.approx(p**-1)


@pytest.mark.parametrize("seed", range(10))
def test_subgroup_monotonicity(seed) -> None:
    f = generate("bounded", 11, seed)
    assert box_norm(f, (V, F)) <= box_norm(f, (V, V)) + 1e-12
    assert box_norm(f, (H, F)) <= box_norm(f, (H, H)) + 1e-12


@pytest.mark.parametrize("coordinate", list(CL_COORDINATE))
@pytest.mark.parametrize("spec", ["bounded", "unimodular", "set:0.4", "eigen:second", "char:3,4"])
def test_line_identity(coordinate, spec) -> None:
    f = generate(spec, 7, 2)
    assert abs(directional_u2(f, coordinate) - directional_u2_via_lines(f, coordinate)) < 1e-10


def test_directional_subgroup() -> None:
    assert directional_subgroup(CL_COORDINATE.SECOND) == V
    assert directional_subgroup(CL_COORDINATE.FIRST) == H


def test_u2_inverse_single_frequency() -> None:
    p = 11
    chi, corr = u2_inverse(generate("char:0,3", p, 0), CL_COORDINATE.SECOND)
    assert corr == pytest.approx(1.0)
    assert np.all(chi.phi == p - 3)
    assert np.allclose(chi.psi, 0.0)
    assert chi.support.all()


def test_u2_inverse_zero() -> None:
    _, corr = u2_inverse(generate("const:0", 7, 0), CL_COORDINATE.FIRST)
    assert corr == pytest.approx(0.0)


def test_u2_inverse_rejects_unbounded() -> None:
    with pytest.raises(ValueError):
        u2_inverse(GridFn(np.full((5, 5), 2.0)), CL_COORDINATE.SECOND)
    _, corr = u2_inverse(GridFn(np.full((5, 5), 0.5)), CL_COORDINATE.SECOND)
    assert corr == pytest.approx(0.5)


@pytest.mark.parametrize("coordinate", list(CL_COORDINATE))
@pytest.mark.parametrize("seed", range(20))
def test_u2_inverse_bound(coordinate, seed) -> None:
    f = generate("bounded", 13, seed)
    chi, corr = u2_inverse(f, coordinate)
    assert corr >= directional_u2(f, coordinate) ** 4 - 1e-9
    per_line = line_correlations(f, chi)
    assert np.allclose(per_line.imag, 0.0, atol=1e-9)
    assert per_line.real.mean() == pytest.approx(corr)


@pytest.mark.parametrize("coordinate", list(CL_COORDINATE))
def test_detect_eigenfunction(coordinate) -> None:
    p = 7
    rng = np.random.default_rng(0)
    support = rng.random(p) < 0.7
    chi = Eigenfunction(coordinate, support, rng.integers(0, p, p), rng.random(p))
    found = detect_eigenfunction(chi.to_grid(), coordinate)
    assert found is not None
    assert np.array_equal(found.support, chi.support)
    assert np.allclose(found.to_grid().values, chi.to_grid().values)


def test_detect_eigenfunction_rejects_generic() -> None:
    assert detect_eigenfunction(generate("unimodular", 7, 1), CL_COORDINATE.SECOND) is None
    assert detect_eigenfunction(generate("bounded", 7, 1), CL_COORDINATE.FIRST) is None


def test_eigenfunction_restrict_and_json() -> None:
    p = 5
    chi = Eigenfunction(CL_COORDINATE.FIRST, np.ones(p, dtype=bool), np.arange(p), np.linspace(0, 0.8, p))
    lines = np.array([True, False, True, False, True])
    restricted = chi.restrict(lines)
    assert np.array_equal(restricted.support, lines)
    copy = Eigenfunction.from_json(restricted.to_json())
    assert np.allclose(copy.to_grid().values, restricted.to_grid().values)
    assert np.allclose(restricted.to_grid().values[:, 1], 0.0)


def test_eigenfunction_rejects_length_mismatch() -> None:
    with pytest.raises(ValueError):
        Eigenfunction(CL_COORDINATE.FIRST, np.ones(5, dtype=bool), np.zeros(4), np.zeros(5))
