import math

import numpy as np
import pytest

from toruslab.errors import Degenerate, Expanding, NonHyperbolic
from toruslab.linear_model import (IntMatrix2, classify, coset_reps,
                                   covering_radius, fit_decay_slope,
                                   fixed_point_count, leaf_density_probe,
                                   linear_leaf, mat_power, preimage_density,
                                   smith_normal_form, torus_preimages_linear)
from toruslab.torus_core import direction_unit, torus_dist

A = IntMatrix2(3, 1, 1, 1)
SQRT2 = math.sqrt(2.0)


def test_classify_oracle():
    spec = classify(A)
    # quadratic-formula oracle on the characteristic polynomial t^2 - 4t + 2
    assert spec.mu_s == pytest.approx(2 - SQRT2, abs=1e-13)
    assert spec.mu_u == pytest.approx(2 + SQRT2, abs=1e-13)
    assert spec.det == 2 and spec.degree == 2
    assert spec.mu_s * spec.mu_u == pytest.approx(spec.det, abs=1e-12)
    # eigenlines match (1, sqrt(2)-1) and (1, -sqrt(2)-1) projectively
    eu = direction_unit(spec.e_u)
    assert abs(eu[0] * (SQRT2 - 1) - eu[1]) < 1e-12
    assert np.allclose(np.abs(eu), [0.92388, 0.38268], atol=1e-5)
    es = direction_unit(spec.e_s)
    assert abs(es[0] * (-SQRT2 - 1) - es[1]) < 1e-12


def test_classify_rejections():
    with pytest.raises(NonHyperbolic):
        classify([[1, 1], [0, 1]])
    with pytest.raises(Expanding):
        classify([[2, 0], [0, 2]])
    with pytest.raises(Expanding):
        classify([[0, -2], [1, 0]])  # complex pair, modulus sqrt(2)
    with pytest.raises(NonHyperbolic):
        classify([[0, -1], [1, 0]])  # complex pair on the unit circle


def test_smith_normal_form_random():
    rng = np.random.default_rng(0)
    for _ in range(300):
        m = rng.integers(-9, 10, size=(2, 2))
        if m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0] == 0:
            continue
        u, s, v = smith_normal_form(m)
        assert np.array_equal(u @ s @ v, m)
        assert abs(round(np.linalg.det(u))) == 1
        assert abs(round(np.linalg.det(v))) == 1
        assert s[0, 1] == s[1, 0] == 0
        assert s[0, 0] >= 0 and s[1, 1] >= 0
        assert s[1, 1] % max(s[0, 0], 1) == 0


def test_coset_reps_distinct():
    reps = coset_reps(A.as_int_array())
    assert len(reps) == 2
    diff = reps[0] - reps[1]
    # distinct cosets: difference is not in A Z^2
    sol = np.linalg.solve(A.as_array(), diff)
    assert not np.allclose(sol, np.round(sol), atol=1e-9)


def test_torus_preimages_linear():
    pre = torus_preimages_linear(A, (0, 0), 1)
    assert len(pre) == 2
    dists = sorted(torus_dist(p, (0.0, 0.0)) for p in pre)
    assert dists[0] == pytest.approx(0.0, abs=1e-12)
    assert dists[1] == pytest.approx(math.sqrt(0.5), abs=1e-12)
    pre2 = torus_preimages_linear(A, (0, 0), 2)
    assert len(pre2) == 4
    a2 = mat_power(A, 2).astype(float)
    for p in pre2:
        img = a2 @ p
        assert np.allclose(img - np.round(img), 0.0, atol=1e-10)
    # pairwise distinct
    for i in range(4):
        for j in range(i + 1, 4):
            assert torus_dist(pre2[i], pre2[j]) > 1e-9
    # invertible matrix: single preimage
    b = IntMatrix2(2, 1, 1, 1)
    assert len(torus_preimages_linear(b, (0.3, 0.4), 1)) == 1


def test_preimage_density_decay():
    dens = preimage_density(A, (0, 0), 8, grid_n=200)
    eps = dict(dens)
    assert eps[0] == pytest.approx(math.sqrt(0.5), abs=2e-2)
    assert eps[1] < eps[0]
    # monotone nonincreasing up to grid resolution
    for k in range(8):
        assert eps[k + 1] <= eps[k] + 1e-9
    slope = fit_decay_slope(dens, 2, 8)
    assert slope <= math.log(2 ** -0.5) + 0.1


def test_covering_radius_single_point():
    assert covering_radius([(0.0, 0.0)], 200) == pytest.approx(math.sqrt(0.5),
                                                               abs=1e-2)


def test_fixed_point_count():
    assert fixed_point_count(A, 1) == 1
    assert fixed_point_count(A, 2) == 7
    assert fixed_point_count(A, 3) == 31
    with pytest.raises(Degenerate):
        fixed_point_count(A, 0)


def test_linear_leaf():
    spec = classify(A)
    x = np.array([0.2, -0.4])
    assert np.allclose(linear_leaf(spec, x, "u", 0.0), x)
    p = linear_leaf(spec, np.zeros(2), "u", 1.0)
    assert np.allclose(p, [0.92388, 0.38268], atol=1e-5)
    # eigen-invariance: A(leaf(t)) = leaf at mu*t through Ax
    a = A.as_array()
    t = 0.7
    lhs = a @ linear_leaf(spec, x, "u", t)
    rhs = linear_leaf(spec, a @ x, "u", spec.mu_u * t)
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_leaf_density_probe():
    spec = classify(A)
    dense = leaf_density_probe(spec, np.zeros(2), "u", 0, 1.0, 21, budget=8)
    assert dense < 0.51
    single = leaf_density_probe(spec, np.zeros(2), "u", 0, 1.0, 21, budget=0)
    assert single > dense
    bigger = leaf_density_probe(spec, np.zeros(2), "u", 0, 1.0, 21, budget=12)
    assert bigger <= dense + 1e-12
