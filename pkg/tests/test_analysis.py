import math

import numpy as np
import pytest

from mcflow.analysis import (
    AnalyticTrace,
    RadiusLaw,
    ball_excess,
    ball_step_scaling,
    compare_to_law,
    radius_from_field,
    random_lipschitz_field,
    redistance_oracle_violations,
    strip_cells,
    strip_equivalence,
)
from mcflow.errors import HypothesisViolated, WrongDimension
from mcflow.grid import GridGeometry, ScalarField, disk_mask, exact_signed_distance, lipschitz_check


def test_radius_from_disk():
    g = GridGeometry((128, 128))
    d = exact_signed_distance(disk_mask(g, 50))
    assert abs(radius_from_field(d) - 49.97) <= 0.15


def test_radius_edge_cases():
    g = GridGeometry((8, 8))
    assert radius_from_field(ScalarField(g, np.ones(g.shape))) == 0.0
    one = np.ones(g.shape)
    one[3, 3] = -1
    assert radius_from_field(ScalarField(g, one)) == pytest.approx(math.sqrt(1 / math.pi))
    with pytest.raises(WrongDimension):
        radius_from_field(ScalarField(GridGeometry((4, 4, 4)), np.ones((4, 4, 4))))


def test_law():
    law = RadiusLaw(50.0)
    assert law.extinction_time == 1250.0
    assert float(law.radius(0.0)) == 50.0
    assert float(law.radius(2000.0)) == 0.0
    r = law.radius(np.linspace(0, 1250, 50))
    assert np.all(np.diff(r) < 0)
    assert RadiusLaw(10.0, 3).extinction_time == 25.0
    with pytest.raises(ValueError):
        RadiusLaw(0.0)


def test_analytic_trace_has_zero_deviation():
    law = RadiusLaw(50.0)
    rep = compare_to_law(AnalyticTrace(law, 0.25), law)
    assert rep.max_deviation == 0.0
    assert rep.ok


def test_ball_scaling_hypothesis():
    with pytest.raises(HypothesisViolated):
        ball_step_scaling([1.0, 2.0], [10.0], "explicit", 1.0)
    with pytest.raises(HypothesisViolated):
        ball_excess(2.0, 10.0)


def test_ball_excess_scales_with_eps_and_R():
    e1 = ball_excess(1.0, 20.0).excess
    e2 = ball_excess(0.5, 20.0).excess
    e3 = ball_excess(1.0, 40.0).excess
    assert 4 * 0.7 <= e1 / e2 <= 4 * 1.3
    assert 2 * 0.7 <= e1 / e3 <= 2 * 1.3


def test_random_fields():
    g = GridGeometry((20, 20))
    a, b = random_lipschitz_field(g, 0), random_lipschitz_field(g, 0)
    assert np.array_equal(a.values, b.values)
    assert lipschitz_check(a).ok
    for seed in range(100):
        v = random_lipschitz_field(GridGeometry((12, 12)), seed).values
        assert (v < 0).any() and (v >= 0).any()


def test_strip_cells_and_full_width():
    g = GridGeometry((30, 30))
    u = ScalarField(g, g.distance_from((15, 15)) - 8.0, lipschitz=True)
    cells = strip_cells(u, 3.0)
    r = g.distance_from((15, 15))
    assert cells[15, 15 + 8] and not cells[15, 15] and not cells[0, 0]
    checks = strip_equivalence(u, [100.0])
    assert checks[0].max_excess_over_full <= 0.0
    assert checks[0].ok


def test_strip_equivalence_disk():
    g = GridGeometry((64, 64))
    u = ScalarField(g, g.distance_from((32, 32)) - 20.0, lipschitz=True)
    for c in strip_equivalence(u, [5, 10, 20]):
        assert c.ok, c


def test_oracle_violations_on_disk_and_random():
    g = GridGeometry((48, 48))
    u = ScalarField(g, g.distance_from((24, 24)) - 15.0, lipschitz=True)
    assert redistance_oracle_violations(u)[0] == 0
    for seed in range(5):
        assert redistance_oracle_violations(random_lipschitz_field(GridGeometry((32, 32)), seed))[0] == 0
