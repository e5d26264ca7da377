import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toruslab.torus_core import (direction_dist, direction_from_vector,
                                 direction_spread, direction_unit, lift_near,
                                 project, torus_dist)

coord = st.floats(min_value=-50, max_value=50, allow_nan=False,
                  allow_infinity=False)


def test_project_examples():
    assert np.allclose(project((1.25, -0.5)), (0.25, 0.5))
    assert np.allclose(project((0.0, 0.0)), (0.0, 0.0))
    assert np.allclose(project((3.0, 7.0)), (0.0, 0.0))


def test_lift_near_examples():
    assert np.allclose(lift_near((0.9, 0.1), (0.0, 0.0)), (-0.1, 0.1))
    assert np.allclose(lift_near((0.0, 0.0), (5.4, -2.2)), (5.0, -2.0))
    # tie broken toward the lexicographically smallest deck vector
    got = lift_near((0.5, 0.5), (0.0, 0.0))
    assert np.allclose(got, (-0.5, -0.5))


def test_torus_dist_examples():
    assert torus_dist((0.95, 0.0), (0.05, 0.0)) == pytest.approx(0.10)
    assert torus_dist((0.3, 0.7), (0.3, 0.7)) == 0.0
    assert torus_dist((0.0, 0.0), (0.5, 0.5)) == pytest.approx(math.sqrt(2) / 2)


def test_direction_dist_examples():
    assert direction_dist(0.0, math.pi / 2) == pytest.approx(math.pi / 2)
    assert direction_dist(0.1, 0.1) == 0.0
    assert direction_dist(0.05, 3.10) == pytest.approx(math.pi - 3.05)


@given(coord, coord, st.integers(-20, 20), st.integers(-20, 20))
@settings(max_examples=200, deadline=None)
def test_project_deck_invariant(x, y, n1, n2):
    # equality as torus classes (representatives may straddle the seam)
    assert torus_dist(project((x + n1, y + n2)), project((x, y))) < 1e-9


@given(coord, coord, coord, coord)
@settings(max_examples=200, deadline=None)
def test_lift_near_is_section(px, py, bx, by):
    p = project((px, py))
    lift = lift_near(p, (bx, by))
    assert torus_dist(project(lift), p) < 1e-12
    assert np.hypot(*(lift - np.array([bx, by]))) <= math.sqrt(2) / 2 + 1e-12


@given(coord, coord, coord, coord, coord, coord)
@settings(max_examples=200, deadline=None)
def test_torus_dist_metric(ax, ay, bx, by, cx, cy):
    p, q, r = project((ax, ay)), project((bx, by)), project((cx, cy))
    assert torus_dist(p, q) == pytest.approx(torus_dist(q, p))
    assert torus_dist(p, q) <= torus_dist(p, r) + torus_dist(r, q) + 1e-12


@given(st.floats(0, math.pi, exclude_max=True),
       st.floats(0, math.pi, exclude_max=True),
       st.integers(-3, 3))
@settings(max_examples=200, deadline=None)
def test_direction_dist_mod_pi(t1, t2, k):
    assert direction_dist(t1 + k * math.pi, t2) == pytest.approx(
        direction_dist(t1, t2), abs=1e-9)
    assert 0.0 <= direction_dist(t1, t2) <= math.pi / 2 + 1e-12


def test_direction_helpers():
    v = direction_unit(direction_from_vector((3.0, -1.0)))
    assert abs(v[0] * (-1.0) - v[1] * 3.0) < 1e-12  # same line
    assert direction_spread([0.1, 0.1]) == 0.0
    assert direction_spread([0.0, 0.2, 0.1]) == pytest.approx(0.2)
    # wraparound cluster near the ends of [0, pi)
    assert direction_spread([0.01, math.pi - 0.01]) == pytest.approx(0.02)
