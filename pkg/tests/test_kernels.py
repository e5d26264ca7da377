"""Backend equivalence: the compiled core must match the numpy fallback."""
import numpy as np
import pytest

from toruslab._kernels import BACKEND, available_backends

BACKENDS = available_backends()
needs_both = pytest.mark.skipif(len(BACKENDS) < 2,
                                reason="compiled backend not built")


@pytest.fixture(scope="module")
def models(spec, linear_model, g0, g1, cu_model):
    return [linear_model, g0, g1, cu_model]


@pytest.fixture(scope="module")
def points(rng):
    return np.random.default_rng(42).uniform(-2, 3, (300, 2))


@needs_both
def test_lift_and_derivatives_match(models, points):
    for m in models:
        for fn in ("lift", "deriv_frame", "deriv_std"):
            a = getattr(BACKENDS["py"], fn)(m.pack, points)
            b = getattr(BACKENDS["cy"], fn)(m.pack, points)
            assert np.max(np.abs(a - b)) < 1e-13, (m.label, fn)
        sa, ua = BACKENDS["py"].delta_frame(m.pack, points)
        sb, ub = BACKENDS["cy"].delta_frame(m.pack, points)
        assert np.max(np.abs(sa - sb)) < 1e-14
        assert np.max(np.abs(ua - ub)) < 1e-14


@needs_both
def test_newton_inverse_match(models, points):
    for m in models:
        ia, oka = BACKENDS["py"].newton_inverse(m.pack, points)
        ib, okb = BACKENDS["cy"].newton_inverse(m.pack, points)
        assert np.all(oka) and np.all(okb)
        assert np.max(np.abs(ia - ib)) < 1e-9


@needs_both
def test_h_series_match(models, points):
    off = np.array([3, -2], dtype=np.int64)
    for m in models:
        for kw in ({}, {"offset": off}):
            ha = BACKENDS["py"].h_series(m.pack, points[:80], 50, 30, **kw)
            hb = BACKENDS["cy"].h_series(m.pack, points[:80], 50, 30, **kw)
            assert np.max(np.abs(ha[0] - hb[0])) < 1e-12
            assert np.max(np.abs(ha[1] - hb[1])) < 1e-12


@needs_both
def test_bundle_kernels_match(models, points):
    br = np.array([[0, 1, 0], [1, 1, 0], [0, 0, 1]], dtype=np.int64)
    for m in models:
        ea = BACKENDS["py"].e2_angles(m.pack, points[:40], br, tail=8)
        eb = BACKENDS["cy"].e2_angles(m.pack, points[:40], br, tail=8)
        assert np.max(np.abs(ea - eb)) < 1e-10
        a1 = BACKENDS["py"].e1_angles(m.pack, points[:40], 32)
        b1 = BACKENDS["cy"].e1_angles(m.pack, points[:40], 32)
        assert np.max(np.abs(a1 - b1)) < 1e-10
        ga, fa = BACKENDS["py"].pushforward_log_growth(m.pack, points[:40], a1, 8)
        gb, fb = BACKENDS["cy"].pushforward_log_growth(m.pack, points[:40], b1, 8)
        assert np.max(np.abs(ga - gb)) < 1e-11
        ma = BACKENDS["py"].monodromy_frame(m.pack, points[:40], 4)
        mb = BACKENDS["cy"].monodromy_frame(m.pack, points[:40], 4)
        assert np.max(np.abs(ma - mb)) < 1e-9


@needs_both
def test_leaf_batch_match(g0):
    starts = np.random.default_rng(5).random((8, 2))
    la = BACKENDS["py"].e1_leaf_batch(g0.pack, starts, 120, 2e-3, 40)
    lb = BACKENDS["cy"].e1_leaf_batch(g0.pack, starts, 120, 2e-3, 40)
    assert np.max(np.abs(la - lb)) < 1e-12


@needs_both
def test_newton_periodic_match(g0):
    seeds = np.random.default_rng(6).random((60, 2))
    sa, oka, ra = BACKENDS["py"].newton_periodic(g0.pack, 2, (1.0, 0.0), seeds)
    sb, okb, rb = BACKENDS["cy"].newton_periodic(g0.pack, 2, (1.0, 0.0), seeds)
    both = oka & okb
    assert np.sum(both) > 0
    assert np.max(np.abs(sa[both] - sb[both])) < 1e-8


def test_exact_deck_bookkeeping(g1, h_g1):
    # the forward series is evaluated on the identical reduced orbit, so the
    # e_u part of a deck-translate defect cancels to exactly 0.0
    rng = np.random.default_rng(9)
    for _ in range(10):
        n = rng.integers(-200, 200, 2)
        _, u = h_g1.translate_defect(rng.random(2), n)
        assert u == 0.0


def test_huge_translates_stay_exact(h_g1, spec):
    # A^10 e_1 has entries ~2e5; the offset path must not lose precision
    from toruslab.linear_model import mat_power

    n = mat_power(spec.matrix, 10) @ np.array([1, 0])
    assert np.max(np.abs(n)) > 1e4
    s, u = h_g1.translate_defect(np.array([0.37, 0.71]), n)
    assert u == 0.0
    assert abs(s) < 2.0 * h_g1.C_H_est * abs(spec.mu_s) ** 10 + 1e-12


def test_depth_cap_guard(g1):
    from toruslab.semiconj import solve_H

    with pytest.raises(ValueError):
        solve_H(g1, 80, 30)


def test_backend_name_reported():
    assert BACKEND in ("py", "cy")
