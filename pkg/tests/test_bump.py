import numpy as np
import pytest

from toruslab.bump import (BAND, PLATEAU, SLOPE, SUPPORT, build_bump,
                           bump_deriv, bump_eval, bump_root, plateau_fall,
                           plateau_fall_deriv, ramp_integral, smoothstep)


def test_plateau_and_support_exact():
    phi = build_bump()
    assert phi(0.0) == 1.0
    assert phi(0.125) == 1.0
    assert phi(-0.1) == 1.0
    assert phi(0.25) == 0.0
    assert phi(0.3) == 0.0
    assert bump_deriv(0.25) == 0.0
    assert bump_deriv(0.0) == 0.0


def test_even():
    ts = np.linspace(0, 0.3, 1000)
    for t in ts:
        assert bump_eval(t) == bump_eval(-t)
        assert bump_deriv(t) == -bump_deriv(-t)


def test_slope_bound_on_band():
    # bound: -9 < phi' < 0 strictly on the open band, max <= 8.8; within
    # ~7e-6 of the band edges the exp-flat ramp underflows to an exact 0.0,
    # so strict negativity is asserted on the representable range
    ts = np.linspace(PLATEAU, SUPPORT, 100001)[1:-1]
    ds = np.array([bump_deriv(t) for t in ts])
    assert np.all(ds <= 0.0)
    assert np.all(ds > -9.0)
    assert np.max(np.abs(ds)) <= 8.8
    assert np.max(np.abs(ds)) == pytest.approx(SLOPE)
    inner = (ts > PLATEAU + 1e-5) & (ts < SUPPORT - 1e-5)
    assert np.all(ds[inner] < 0.0)


def test_monotone_and_continuous():
    ts = np.linspace(0.12, 0.26, 20001)
    vs = np.array([bump_eval(t) for t in ts])
    assert np.all(np.diff(vs) <= 1e-15)
    assert np.max(np.abs(np.diff(vs))) < 2.5 * SLOPE * (ts[1] - ts[0])


def test_deriv_matches_finite_differences():
    h = 1e-7
    for t in (0.13, 0.16, 0.21, 0.24, 0.1251, 0.2499):
        fd = (bump_eval(t + h) - bump_eval(t - h)) / (2 * h)
        assert fd == pytest.approx(bump_deriv(t), abs=5e-7)


def test_average_slope_is_eight():
    # integral of -phi' over the band is exactly the unit drop
    assert (1.0 - 0.0) / BAND == pytest.approx(8.0)
    assert SLOPE == pytest.approx(8.0 / 0.96)


def test_ramp_integral_endpoints():
    assert ramp_integral(0.0) == 0.0
    assert ramp_integral(1.0) == 0.5
    assert smoothstep(0.5) == pytest.approx(0.5)
    assert smoothstep(0.2) + smoothstep(0.8) == pytest.approx(1.0)


def test_bump_root():
    val = 0.9285
    t = bump_root(val)
    assert bump_eval(t) == pytest.approx(val, abs=1e-12)
    assert PLATEAU < t < SUPPORT


def test_plateau_fall():
    assert plateau_fall(0.0) == 1.0
    assert plateau_fall(1.0) == 0.0
    ss = np.linspace(0, 1, 5001)
    d = np.array([plateau_fall_deriv(s) for s in ss])
    assert np.min(d) >= -1.0 / 0.96 - 1e-12
    h = 1e-7
    for s in (0.2, 0.5, 0.8):
        fd = (plateau_fall(s + h) - plateau_fall(s - h)) / (2 * h)
        assert fd == pytest.approx(plateau_fall_deriv(s), abs=1e-6)
