import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcflow.analysis import random_lipschitz_field
from mcflow.errors import NotLipschitz
from mcflow.grid import GridGeometry, PhaseMask, ScalarField, disk_mask, exact_signed_distance, lipschitz_check
from mcflow.kernels import apply_kernel, builtin_kernel
from mcflow.redistance import (
    RedistanceConfig,
    compdist_constant,
    d_minus,
    d_plus,
    gamma,
    gamma_inv,
    nonlinear_redistance,
    redistance,
    sd_minus,
    sd_plus,
    sd_strip,
)

from conftest import brute_sd_plus, field_of


def test_d_plus_identity_1d():
    u = field_of(np.arange(11) - 5.0, saturation=100.0)
    assert np.array_equal(d_plus(u).values, u.values)
    assert np.array_equal(sd_plus(u).values, u.values)


def test_d_plus_empty_inf_saturates():
    u = field_of(np.full((6, 6), 0.25), saturation=9.0)
    assert np.all(d_plus(u).values == 9.0)


def test_d_plus_matches_oracle_on_cone():
    g = GridGeometry((9, 9))
    r = g.distance_from((4, 4))
    u = ScalarField(g, r - 2.0, 100.0, lipschitz=True)
    v = u.values
    pts = np.argwhere(np.ones(g.shape, bool))
    dist = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
    neg = v.ravel() < 0
    oracle = np.min(np.where(neg[None], v.ravel()[None] + dist, np.inf), axis=1).reshape(g.shape)
    assert np.array_equal(d_plus(u).values, oracle)


def test_d_minus_mirror():
    u = random_lipschitz_field(GridGeometry((10, 10)), 4)
    assert np.array_equal(d_minus(u).values, -d_plus(u.with_values(-u.values, lipschitz=True)).values)


@pytest.mark.parametrize("seed", range(8))
def test_sd_plus_matches_two_pass_oracle(seed):
    u = random_lipschitz_field(GridGeometry((12, 12)), seed)
    got = sd_plus(u).values
    want = brute_sd_plus(u.values, 1.0, u.saturation)
    # exact up to one rounding of the cone terms (the oracle sums in another order)
    assert np.max(np.abs(got - want)) <= 1e-12 * u.saturation


def test_sd_plus_oracle_with_truncation():
    g = GridGeometry((20, 20))
    u = ScalarField(g, g.distance_from((9.3, 10.1)) - 6.0, 3.0, lipschitz=True)
    got = sd_plus(u).values
    assert np.max(np.abs(got - brute_sd_plus(u.values, 1.0, 3.0))) <= 1e-12 * 3.0
    assert got.min() >= -3.0 and got.max() <= 3.0


def test_sd_plus_spacing_half():
    g = GridGeometry((10, 9), 0.5)
    u = ScalarField(g, g.distance_from((4.5, 4.0)) - 1.3, 100.0, lipschitz=True)
    assert np.max(np.abs(sd_plus(u).values - brute_sd_plus(u.values, 0.5, 100.0))) <= 1e-12 * 100


def test_sd_plus_compdist_bound_2d():
    u = random_lipschitz_field(GridGeometry((24, 24)), 11)
    sd = sd_plus(u).values
    d = exact_signed_distance(PhaseMask(u.geometry, np.where(u.values < 0, 0, 1)), u.saturation).values
    C = compdist_constant(2)
    assert abs(C - 6.656854) < 1e-6
    pos = u.values >= 0
    assert np.all(sd[pos] <= d[pos] + 1e-9) and np.all(d[pos] <= sd[pos] + C)
    assert np.all(d[~pos] <= sd[~pos] + 1e-9) and np.all(sd[~pos] <= d[~pos] + C)


def test_sd_minus_symmetry_and_order():
    for seed in range(5):
        u = random_lipschitz_field(GridGeometry((14, 11)), seed)
        neg = u.with_values(-u.values, lipschitz=True)
        assert np.array_equal(sd_minus(u).values, -sd_plus(neg).values)
        assert np.all(sd_minus(u).values <= sd_plus(u).values)


def test_step_field_plus_minus_on_half_cell_step():
    # the literal formulas give the same field for both operators here: the
    # +-0.5 step is already the cell-center signed distance shifted by half a cell
    u = field_of(np.where(np.arange(10) < 4, -0.5, 0.5), saturation=100.0)
    want = np.arange(10) - 3.5
    assert np.array_equal(sd_plus(u).values, want)
    assert np.array_equal(sd_minus(u).values, want)
    assert np.array_equal(brute_sd_plus(u.values, 1.0, 100.0), want)


def test_step_field_with_zero_level_differs_by_eps():
    # cells exactly at 0 belong to {u >= 0} for sd+ and to {u <= 0} for sd-
    u = field_of(np.where(np.arange(10) < 4, -1.0, 0.0) + np.where(np.arange(10) > 4, 1.0, 0.0),
                 saturation=100.0)
    p, m = sd_plus(u).values, sd_minus(u).values
    assert p[4] == 0.0 and m[4] == 0.0
    assert np.all(m <= p)


def test_not_lipschitz_raises():
    u = ScalarField(GridGeometry((5, 5)), np.where(np.arange(25).reshape(5, 5) % 2, 3.0, -3.0))
    with pytest.raises(NotLipschitz):
        sd_plus(u)


def test_variants_and_flags():
    u = random_lipschitz_field(GridGeometry((12, 12)), 2)
    p, m = sd_plus(u).values, sd_minus(u).values
    avg = redistance(u, RedistanceConfig("average")).values
    assert np.array_equal(avg, 0.5 * (p + m))
    split = redistance(u, RedistanceConfig("split")).values
    assert np.array_equal(split, np.maximum(p, 0) + np.minimum(m, 0))
    allpos = redistance(field_of(np.full((5, 5), 1.0)), RedistanceConfig())
    assert "one_phase_empty" in allpos.flags
    with pytest.raises(ValueError):
        RedistanceConfig("median")
    with pytest.raises(ValueError):
        RedistanceConfig(nonlinear_cap=20.0)


def test_sign_preservation_and_lipschitz():
    for seed in range(10):
        u = random_lipschitz_field(GridGeometry((16, 16)), 100 + seed)
        nz = u.values != 0
        for variant in ("plus", "minus", "average", "split"):
            sd = redistance(u, RedistanceConfig(variant)).values
            assert np.array_equal(sd[nz] >= 0, u.values[nz] >= 0)
            if variant == "split":
                assert lipschitz_check(u.with_values(np.maximum(sd, 0))).ok
                assert lipschitz_check(u.with_values(np.minimum(sd, 0))).ok
            else:
                assert lipschitz_check(u.with_values(sd)).ok
        assert np.array_equal(sd_plus(u).values >= 0, u.values >= 0)
        assert np.array_equal(sd_minus(u).values > 0, u.values > 0)


def test_idempotence_up_to_compdist():
    u = random_lipschitz_field(GridGeometry((20, 20)), 7)
    once = sd_plus(u)
    twice = sd_plus(once)
    assert np.max(np.abs(twice.values - once.values)) <= compdist_constant(2)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_monotone_without_shift_is_exact(seed):
    g = GridGeometry((10, 10))
    hi = random_lipschitz_field(g, seed)
    other = random_lipschitz_field(g, seed + 1)
    lo = hi.with_values(np.minimum(hi.values, other.values), lipschitz=True)
    for op in (sd_plus, sd_minus):
        assert np.all(op(lo).values <= op(hi).values)
    assert np.all(sd_minus(hi).values <= sd_plus(hi).values)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), s=st.floats(0.0, 3.0))
def test_comparison_with_shift(seed, s):
    # shifting does not commute with rounding: allow one ulp at the scale of
    # the cone terms (distances up to the box diameter)
    g = GridGeometry((10, 10))
    hi = random_lipschitz_field(g, seed)
    other = random_lipschitz_field(g, seed + 1)
    lo = hi.with_values(np.minimum(hi.values, other.values) - s, lipschitz=True)
    for op in (sd_plus, sd_minus):
        a, b = op(lo).values, op(hi).values
        assert np.all(a <= b - s + np.spacing(30.0))


def test_strip_full_width_equals_sd_plus():
    u = random_lipschitz_field(GridGeometry((16, 16)), 3)
    assert np.array_equal(sd_strip(u, 100.0).values, sd_plus(u).values)


def test_strip_bounds_on_disk():
    g = GridGeometry((64, 64))
    mask = disk_mask(g, 20)
    u = ScalarField(g, g.distance_from((32, 32)) - 20.0, 200.0, lipschitz=True)
    full = sd_plus(u).values
    sdm = sd_strip(u, 10.0).values
    oracle = exact_signed_distance(mask, 200.0).values
    from mcflow.analysis import strip_cells

    cells = strip_cells(u, 10.0)
    assert np.all(sdm[cells] <= full[cells] + 0.8 + 1e-9)
    assert np.all(np.abs(sdm[cells] - oracle[cells]) <= math.sqrt(2) + 1e-9)


def test_strip_width_must_exceed_spacing():
    u = random_lipschitz_field(GridGeometry((8, 8)), 0)
    with pytest.raises(ValueError):
        sd_strip(u, 1.0)


def test_gamma_constant_profile():
    c = -3.25
    p = field_of(np.full((6, 6), math.tanh(c)))
    assert abs(gamma_inv(np.array(math.tanh(c))) - c) < 1e-9
    out = nonlinear_redistance(p, RedistanceConfig())
    assert "one_phase_empty" in out.flags
    assert np.all(out.values == -15.0)


def test_gamma_round_trip():
    g = GridGeometry((64, 64))
    d = np.clip(exact_signed_distance(disk_mask(g, 20), 15.0).values, -15, 15)
    back = gamma_inv(gamma(d), 15.0)
    # float64 limit: one ulp of tanh near 1 is amplified by 1 / (1 - tanh^2)
    bound = 2.3e-16 / (1.0 - np.tanh(np.abs(d)) ** 2) + 1e-15
    assert np.all(np.abs(back - d) <= bound)
    small = np.abs(d) <= 9.5
    assert np.max(np.abs(back - d)[small]) < 1e-8


@pytest.mark.parametrize("name", ["explicit", "implicit", "heat"])
def test_nonlinear_composition_lipschitz(name):
    g = GridGeometry((40, 40))
    u = ScalarField(g, np.clip(g.distance_from((20, 20)) - 12.0, -15, 15), 15.0, lipschitz=True)
    k = builtin_kernel(name, g, tau=2.0)
    p = apply_kernel(k, u.with_values(gamma(u.values)))
    w = u.with_values(gamma_inv(p.values, 15.0))
    assert lipschitz_check(w).ok
