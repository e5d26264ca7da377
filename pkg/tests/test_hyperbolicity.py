import math

import numpy as np
import pytest

from toruslab.errors import ConeBroken, NotConverged
from toruslab.hyperbolicity import (ConeParams, bundle_E1, bundle_E2,
                                    check_cone_invariance, classify_ph,
                                    cone_for_linear,
                                    count_transverse_intersections,
                                    enumerate_branches, global_product_check,
                                    global_product_check_batch, integrate_leaf,
                                    leaf_tangency_defect, quasi_isometry_probe,
                                    specialness_spread, two_branch_spread)
from toruslab.torus_core import direction_dist, direction_unit


def test_cone_params_validation(spec):
    with pytest.raises(ValueError):
        ConeParams(e1=spec.e_s, e2=spec.e_u, alpha=0.5, alpha1=0.6, alpha2=0.9, k=1)
    with pytest.raises(ValueError):
        ConeParams(e1=spec.e_s, e2=spec.e_s, alpha=0.5, alpha1=0.4, alpha2=0.9, k=1)


def test_cone_invariance_linear(linear_model, spec):
    for alpha in (0.02, 0.1, 0.3):
        cone = ConeParams(e1=spec.e_s, e2=spec.e_u, alpha=alpha,
                          alpha1=0.5 * alpha, alpha2=min(1.5 * alpha, 0.99), k=2)
        assert check_cone_invariance(linear_model, cone, 40) == 0.0


def test_cone_invariance_g0(g0):
    assert check_cone_invariance(g0, g0.certificate.cone, 200) == 0.0


def test_cone_invariance_broken_aperture(g0):
    c = g0.certificate.cone
    bad = ConeParams(e1=c.e1, e2=c.e2, alpha=c.alpha / 100,
                     alpha1=c.alpha1 / 100, alpha2=c.alpha2 / 100, k=c.k)
    assert check_cone_invariance(g0, bad, 60) > 0.0


def test_classify_linear_anosov(linear_model, spec):
    cone = cone_for_linear(spec)
    cert = classify_ph(linear_model, cone, 40)
    assert cert.classification == "anosov"
    # closed-form oracle: ratio_1 = mu_s^k (denominator capped at 1)
    assert cert.worst_ratio_1 == pytest.approx(abs(spec.mu_s) ** cone.k, rel=1e-6)
    assert cert.worst_ratio_2 == pytest.approx(abs(spec.mu_u) ** -cone.k, rel=1e-6)


def test_classify_g0_sc(g0):
    cert = classify_ph(g0, g0.certificate.cone, 60)
    assert cert.classification == "sc"
    assert cert.worst_ratio_1 < 0.5
    assert cert.worst_ratio_2 > 0.5  # the sink forces a non-expanding center


def test_classify_g1_sc(g1):
    cert = classify_ph(g1, g1.certificate.cone, 40)
    assert cert.classification == "sc"


def test_classify_cu(cu_model):
    cert = classify_ph(cu_model, cu_model.certificate.cone, 40)
    assert cert.classification == "cu"
    assert cert.worst_ratio_2 < 0.5
    assert cert.worst_ratio_1 > 0.5  # neutral stable direction at the origin


def test_classify_precondition(g0):
    c = g0.certificate.cone
    bad = ConeParams(e1=c.e1, e2=c.e2, alpha=c.alpha / 100,
                     alpha1=c.alpha1 / 100, alpha2=c.alpha2 / 100, k=c.k)
    with pytest.raises(ConeBroken):
        classify_ph(g0, bad, 60)


def test_bundle_e1_linear(linear_model, spec):
    for depth in (8, 20):
        ang = bundle_E1(linear_model, np.array([0.3, 0.7]), depth=depth)
        assert direction_dist(ang, spec.e_s) < 1e-12


def test_bundle_e1_outside_support(g0, spec):
    # a point whose forward orbit misses the perturbation strip long enough
    ang = bundle_E1(g0, np.array([0.31, 0.77]), depth=48)
    d = g0.deriv_frame(np.array([0.31, 0.77]))
    assert d[2] == 0.0 or direction_dist(ang, spec.e_s) < 0.05


def test_bundle_e1_equivariance(g0, rng):
    from toruslab.torus_core import project

    for _ in range(5):
        x = rng.random(2)
        ang = bundle_E1(g0, x, depth=56)
        v = direction_unit(ang)
        w = g0.deriv(x) @ v
        fx = project(g0.lift(x))
        ang_fx = bundle_E1(g0, fx, depth=56)
        assert direction_dist(math.atan2(w[1], w[0]) % math.pi, ang_fx) < 1e-7


def test_bundle_e2_linear_and_g0(linear_model, g0, spec):
    assert direction_dist(bundle_E2(linear_model, (0.2, 0.9), [0, 1, 0]),
                          spec.e_u) < 1e-12
    # unstable lines are g0-invariant: E2 is e_u along every branch
    for br in ([0], [1], [0, 1, 1, 0]):
        assert direction_dist(bundle_E2(g0, (0.37, 0.81), br), spec.e_u) < 1e-12


def test_bundle_e2_branch_consistency(g0, rng):
    # one more backward step then one pushforward returns the same direction
    x = rng.random(2)
    a1 = bundle_E2(g0, x, [0, 1])
    a2 = bundle_E2(g0, x, [0, 1, 1])
    assert direction_dist(a1, a2) < 1e-8


def test_specialness_g0_depth12(g0, rng):
    worst = 0.0
    for _ in range(5):
        worst = max(worst, specialness_spread(g0, rng.random(2), depth=12))
    assert worst < 1e-8


def test_specialness_monotone_depth(g0):
    x = np.array([0.37, 0.81])
    s6 = specialness_spread(g0, x, depth=6)
    s10 = specialness_spread(g0, x, depth=10)
    assert s10 <= s6 + 1e-12


def test_specialness_g1_probe(g1):
    sp = two_branch_spread(g1, g1.meta["spread_probe"], g1.meta["spread_branches"])
    assert sp > 1e-3


def test_specialness_cu_probe(cu_model):
    sp = two_branch_spread(cu_model, cu_model.meta["spread_probe"],
                           cu_model.meta["spread_branches"])
    assert sp > 1e-3


def test_bundle_e2_not_converged_without_tail(g0):
    # at depth 2 the pushforward has only contracted the seed cone by
    # (mu_s/mu_u)^2 ~ 3e-2, far from the 1e-9 seed-independence demand
    with pytest.raises(NotConverged):
        bundle_E2(g0, (0.37, 0.81), [0, 1], tail=0)


def test_enumerate_branches():
    br = enumerate_branches(2, 3)
    assert br.shape == (8, 3)
    assert len({tuple(b) for b in br}) == 8
    capped = enumerate_branches(2, 20, budget=64, seed=1)
    assert capped.shape == (64, 20)


def test_leaf_linear_straight(linear_model, spec):
    ts, pts = integrate_leaf(linear_model, np.zeros(2), "E2", 10.0)
    assert np.max(np.abs(pts - ts[:, None] * direction_unit(spec.e_u))) < 1e-10
    ts, pts = integrate_leaf(linear_model, np.zeros(2), "E1", 10.0)
    assert np.max(np.abs(pts - ts[:, None] * direction_unit(spec.e_s))) < 1e-10


def test_leaf_g0_unstable_is_line(g0, spec):
    ts, pts = integrate_leaf(g0, np.zeros(2), "E2", 10.0)
    assert np.max(np.abs(pts - ts[:, None] * direction_unit(spec.e_u))) < 1e-10


def test_leaf_g0_stable_through_zero(g0, spec):
    # the s-eigenline through 0 is exactly invariant, so the leaf is straight
    ts, pts = integrate_leaf(g0, np.zeros(2), "E1", 2.0, step=1e-3)
    line_dev = np.abs(pts @ np.array([direction_unit(spec.e_s)[1],
                                      -direction_unit(spec.e_s)[0]]))
    # residual tilt of the depth-48 bundle pullback bounds the deviation
    assert np.max(line_dev) < 1e-7
    assert leaf_tangency_defect(g0, ts, pts, "E1") < 1e-6


def test_leaf_g0_stable_in_cone(g0, spec):
    # generic stable leaf stays within the certificate cone of the s-axis
    ts, pts = integrate_leaf(g0, np.array([0.3, 0.7]), "E1", 2.0, step=1e-3)
    seg = np.diff(pts, axis=0)
    ang = np.arctan2(seg[:, 1], seg[:, 0]) % math.pi
    a = g0.certificate.aperture
    assert max(direction_dist(t, spec.e_s) for t in ang) < math.atan(a) + 1e-6


def test_gps_linear_and_degenerate(linear_model):
    assert global_product_check(linear_model, np.array([0.2, 0.1]),
                                np.array([-0.3, 0.5]), 2.0) == 1
    ts, pts = integrate_leaf(linear_model, np.zeros(2), "E1", 3.0)
    assert count_transverse_intersections(pts, pts) == 0


def test_gps_g0_pairs(g0, rng):
    xs = rng.uniform(-1, 1, (4, 2))
    ys = rng.uniform(-1, 1, (4, 2))
    counts = global_product_check_batch(g0, xs, ys, 2.0)
    assert counts == [1, 1, 1, 1]


def test_quasi_isometry(g0):
    leaf = integrate_leaf(g0, np.zeros(2), "E2", 20.0)
    c1, c2 = quasi_isometry_probe(g0, leaf)
    assert c1 == 1.0 and c2 == 1.0
    leaf_s = integrate_leaf(g0, np.array([0.3, 0.7]), "E1", 4.0, step=2e-3)
    c1s, _ = quasi_isometry_probe(g0, leaf_s)
    assert 1.0 <= c1s < 3.0


def test_quasi_isometry_monotone_in_arclen(g0):
    l1 = integrate_leaf(g0, np.array([0.3, 0.7]), "E1", 2.0, step=2e-3)
    l2 = integrate_leaf(g0, np.array([0.3, 0.7]), "E1", 4.0, step=2e-3)
    assert quasi_isometry_probe(g0, l2)[0] >= quasi_isometry_probe(g0, l1)[0] - 1e-12
