import math

import numpy as np
import pytest

from toruslab.linear_model import mat_power
from toruslab.semiconj import (conj_residual, deck_commutation_defect,
                               decay_fit_slope, fiber_interval, lambda_atlas,
                               lambda_membership, plateau_cantor_probe,
                               solve_H, stable_decay_check)
from toruslab.torus_core import project


def grid(n):
    g = (np.arange(n) + 0.5) / n
    gx, gy = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def test_linear_H_is_identity(h_linear, linear_model):
    pts = grid(25)
    assert np.max(np.abs(h_linear(pts) - pts)) == 0.0
    assert conj_residual(h_linear, linear_model, 25) == 0.0
    assert deck_commutation_defect(h_linear, 20) == (0.0, 0.0)


def test_g0_truncation_certificate(h_g0, g0, spec):
    mu_s, mu_u = abs(spec.mu_s), abs(spec.mu_u)
    nd = h_g0.sup_delta
    expected = nd * (mu_s ** 60 / (1 - mu_s) + mu_u ** -30 / (1 - 1 / mu_u))
    assert h_g0.trunc_bound == pytest.approx(expected, rel=1e-12)
    assert h_g0.trunc_bound < 1e-12
    bound = nd * (1 / (1 - mu_s) + 1 / (mu_u - 1))
    assert h_g0.C_H_est <= bound + h_g0.trunc_bound + 1e-12


def test_g0_conjugation_residual(h_g0, g0):
    assert conj_residual(h_g0, g0, 100) < 1e-10


def test_g0_residual_scales_with_truncation(g0):
    h_shallow = solve_H(g0, 3, 2)
    r = conj_residual(h_shallow, g0, 30)
    mu_u = abs(g0.spec.mu_u)
    assert r <= 10.0 * (mu_u + 1.0) * h_shallow.trunc_bound


def test_g0_deck_commutation(h_g0):
    d1, d2 = deck_commutation_defect(h_g0, 40)
    assert d1 < 1e-10 and d2 < 1e-10


def test_g0_uniqueness_depth_doubling(h_g0, g0):
    h2 = solve_H(g0, 120, 60)
    pts = grid(40)
    assert np.max(np.abs(h_g0(pts) - h2(pts))) < 1e-11


def test_g0_stable_defects_vanish(h_g0, g0, spec, rng):
    # the Mane displacement is purely along e_u, so u_s vanishes identically
    decay = stable_decay_check(h_g0, spec, rng.random(2), 8)
    assert all(d == 0.0 for _, d in decay)
    floor = 10 * h_g0.trunc_bound + 1e-14
    assert decay_fit_slope(decay, 2, 8, floor) == -math.inf


def test_g0_translate_u_component_exact_zero(h_g0, rng):
    for _ in range(20):
        n = rng.integers(-7, 8, 2)
        s, u = h_g0.translate_defect(rng.random(2), n)
        assert u == 0.0
        assert s == 0.0  # no stable displacement at all for g0


def test_g1_deck_defect_exceeds_threshold(h_g1, g1):
    d1, d2 = deck_commutation_defect(h_g1, 30,
                                     extra_points=g1.meta["deck_probe"])
    assert max(d1, d2) > 1e-4
    assert max(d1, d2) > 10.0 * h_g1.trunc_bound


def test_g1_conjugation_still_valid(h_g1, g1):
    assert conj_residual(h_g1, g1, 60) < 1e-10


def test_g1_stable_decay_geometric(h_g1, g1, spec):
    decay = stable_decay_check(h_g1, spec, np.asarray(g1.meta["deck_probe"]), 10)
    floor = 10 * h_g1.trunc_bound + 1e-15
    slope = decay_fit_slope(decay, 2, 10, floor)
    mu_s = abs(spec.mu_s)
    assert slope <= math.log(mu_s) + 0.05
    # each defect obeys the displacement bound
    for k, d in decay:
        assert d <= 2.0 * h_g1.C_H_est * mu_s ** k + 4.0 * h_g1.trunc_bound + 1e-13


def test_g1_unstable_component_stays_flat(h_g1, spec, rng):
    for _ in range(10):
        n = mat_power(spec.matrix, int(rng.integers(0, 8))) @ np.array([1, 0])
        _, u = h_g1.translate_defect(rng.random(2), n)
        assert abs(u) <= 4.0 * h_g1.trunc_bound


def test_fiber_interval_linear(h_linear, linear_model):
    fi = fiber_interval(h_linear, linear_model, np.array([0.3, 0.4]), 0.5)
    assert fi.diameter <= 2e-7  # plateau tolerance resolution


def test_fiber_through_sink(h_g0, g0):
    ys = g0.meta["y_saddle"]
    fi = fiber_interval(h_g0, g0, np.zeros(2), 8.0 * ys)
    assert fi.diameter >= 0.8 * (2.0 * ys)
    assert fi.t_plus == pytest.approx(ys, rel=1e-3)
    assert fi.t_minus == pytest.approx(-ys, rel=1e-3)


def test_fiber_far_from_collapse(h_g0, g0):
    fi = fiber_interval(h_g0, g0, np.array([0.33, 0.71]),
                        8.0 * g0.meta["y_saddle"])
    assert fi.diameter < 1e-6


def test_membership_flags(h_g0, g0):
    tol = 1e-4
    assert not lambda_membership(h_g0, g0, np.zeros(2), tol)  # sink interior
    for sd in g0.meta["saddles"]:
        assert lambda_membership(h_g0, g0, sd, tol)  # fiber endpoints
    assert lambda_membership(h_g0, g0, np.array([0.33, 0.71]), tol)


def test_monotone_along_center_leaf(h_g0, g0, rng):
    eu = g0.spec.e_u_vec
    x = rng.random(2)
    ts = np.linspace(-0.3, 0.3, 401)
    pts = x[None, :] + ts[:, None] * eu[None, :]
    _, uu = h_g0.u_components(pts)
    psi = ts + uu - uu[200]
    assert np.all(np.diff(psi) > -1e-7)


def test_H_maps_center_leaf_into_unstable_line(h_g0, g0):
    # H(x + t e_u) stays on the A-unstable line through H(x)
    eu = g0.spec.e_u_vec
    es = g0.spec.e_s_vec
    x = np.array([0.3, 0.7])
    ts = np.linspace(-1.0, 1.0, 101)
    pts = x[None, :] + ts[:, None] * eu[None, :]
    imgs = h_g0(pts)
    rel = imgs - h_g0(x)[None, :]
    s_comp = rel @ es
    assert np.max(np.abs(s_comp - ts * 0.0 - (rel @ es)[50])) < 1e-10


def test_plateau_cantor_probe(h_g0, g0):
    ys = g0.meta["y_saddle"]
    assert plateau_cantor_probe(h_g0, g0, np.zeros(2), 2.5 * ys)
    with pytest.raises(ValueError):
        plateau_cantor_probe(h_g0, g0, np.zeros(2), 0.5 * ys)


def test_lambda_atlas_summary(h_g0, g0):
    atlas = lambda_atlas(h_g0, g0, 60, 2e-5)
    assert atlas["member_fraction"] > 0.95  # collapse strips are thin
    assert atlas["invariance_defect"] < 0.01
    assert atlas["min_center_log_deriv_members"] > 0.0
    assert atlas["saturation_fraction"] > 0.95
    assert len(atlas["rows"]) == 60 * 60


def test_atlas_sees_nonmembers_near_sink(h_g0, g0):
    from toruslab.semiconj import _fiber_edges_batch

    ys = g0.meta["y_saddle"]
    eu = g0.spec.e_u_vec
    pts = project(np.array([0.3 * ys * eu, 0.6 * ys * eu, np.zeros(2)]))
    tp, tm = _fiber_edges_batch(h_g0, g0, pts, 8.0 * ys, 1e-7, 64, 40)
    gap = np.minimum(-tm, tp)
    assert np.all(gap > 1e-4)  # interior points of the collapsed segment
