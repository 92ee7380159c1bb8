import numpy as np
import pytest

from mcflow.errors import GeometryMismatch
from mcflow.grid import (
    GridGeometry,
    PhaseMask,
    ScalarField,
    discrete_laplacian,
    disk_mask,
    exact_signed_distance,
    lipschitz_check,
    seed_field,
)

from conftest import brute_signed_distance


def test_geometry_invariants():
    with pytest.raises(ValueError):
        GridGeometry((2, 5))
    with pytest.raises(ValueError):
        GridGeometry((5, 5), 0.0)
    g = GridGeometry((5, 7), 0.5)
    assert g.dim == 2 and g.shape == (5, 7)
    assert g.reflect((-1, 7)) == (0, 6)


def test_field_shape_mismatch():
    with pytest.raises(GeometryMismatch):
        ScalarField(GridGeometry((4, 4)), np.zeros((4, 5)))


def test_laplacian_constant_is_zero():
    f = ScalarField(GridGeometry((6, 5)), np.full((6, 5), 3.7))
    assert np.all(discrete_laplacian(f).values == 0)


def test_laplacian_1d_middle_cell():
    f = ScalarField(GridGeometry((3,)), np.array([0.0, 1.0, 4.0]))
    assert discrete_laplacian(f).values[1] == 2.0


def test_laplacian_quadratic_interior():
    g = GridGeometry((9, 9))
    i, j = g.index_grids()
    f = ScalarField(g, (i - 4.0) ** 2 + (j - 4.0) ** 2)
    lap = discrete_laplacian(f).values[1:-1, 1:-1]
    assert np.allclose(lap, 2 * g.dim, atol=1e-9)


def test_laplacian_linear_and_affine():
    g = GridGeometry((7, 8), 0.5)
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=g.shape), rng.normal(size=g.shape)
    la = discrete_laplacian(ScalarField(g, a)).values
    lb = discrete_laplacian(ScalarField(g, b)).values
    lab = discrete_laplacian(ScalarField(g, 2 * a - 3 * b)).values
    assert np.allclose(lab, 2 * la - 3 * lb, rtol=1e-12, atol=1e-12)
    i, j = g.index_grids()
    aff = discrete_laplacian(ScalarField(g, 0.3 * i - 1.2 * j + 4)).values
    assert np.allclose(aff[1:-1, 1:-1], 0, atol=1e-9)


def test_signed_distance_single_cell():
    g = GridGeometry((8, 8))
    labels = np.ones(g.shape, dtype=int)
    labels[0, 0] = 0
    d = exact_signed_distance(PhaseMask(g, labels), 100.0)
    assert d.values[3, 4] == 5.0
    assert d.values[0, 0] == -1.0


def test_signed_distance_one_phase_empty():
    g = GridGeometry((5, 5))
    d = exact_signed_distance(PhaseMask(g, np.zeros(g.shape, int)), 7.0)
    assert np.all(d.values == -7.0)
    assert "one_phase_empty" in d.flags


def test_signed_distance_matches_double_loop():
    g = GridGeometry((9, 9))
    mask = disk_mask(g, 2.5)
    d = exact_signed_distance(mask, 100.0)
    assert np.array_equal(d.values, brute_signed_distance(mask.inside))
    assert lipschitz_check(d, tol=1.0 + 1e-9).ok
    assert np.array_equal(d.values < 0, mask.inside)


def test_seed_field_values():
    g = GridGeometry((6, 6))
    empty = seed_field(PhaseMask(g, np.ones(g.shape, int)))
    assert np.all(empty.values == 0.5)
    i, j = g.index_grids()
    checker = seed_field(PhaseMask(g, (i + j) % 2))
    assert set(np.unique(checker.values)) == {-0.5, 0.5}
    assert lipschitz_check(checker).ok


def _lattice_count(R):
    n = 0
    r = int(R)
    for x in range(-r, r + 1):
        for y in range(-r, r + 1):
            if x * x + y * y <= R * R:
                n += 1
    return n


def test_seed_disk_count():
    g = GridGeometry((128, 128))
    seed = seed_field(disk_mask(g, 50))
    assert seed.negative_count == _lattice_count(50)
    assert abs(seed.negative_count - 7845) <= 30


def test_cell_center_distance_lipschitz_only_up_to_eps():
    # -1 at (3,3) and 3.606 at (0,1) are sqrt(13) apart: excess of exactly eps
    g = GridGeometry((10, 10))
    d = exact_signed_distance(disk_mask(g, 3), 100.0)
    rep = lipschitz_check(d)
    assert not rep.ok
    assert abs(rep.worst_excess - 1.0) < 1e-9
    assert lipschitz_check(d, tol=1.0 + 1e-9).ok
    big = exact_signed_distance(disk_mask(GridGeometry((40, 40)), 12.3), 100.0)
    assert lipschitz_check(big, tol=1.0 + 1e-9).ok


def test_lipschitz_check_detects_bump():
    g = GridGeometry((10, 10))
    i, j = g.index_grids()
    d = ScalarField(g, 0.5 * i - 3.0, 100.0)
    assert lipschitz_check(d).ok
    bumped = d.values.copy()
    bumped[5, 5] += 2.0
    rep = lipschitz_check(ScalarField(g, bumped, 100.0))
    assert not rep.ok
    assert (5, 5) in rep.worst_pair
    assert rep.worst_excess > 0.9


def test_lipschitz_long_range_pairs():
    # adjacent steps of exactly 1 along both axes: fine for l1 but not for l2
    g = GridGeometry((20, 20))
    i, j = g.index_grids()
    rep = lipschitz_check(ScalarField(g, (i + j).astype(float), 100.0))
    assert not rep.ok
