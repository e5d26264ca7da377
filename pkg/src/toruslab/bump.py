"""Smooth bump profile with plateau 1/8, support 1/4 and slope bound 9.

A plain exp-based smoothstep peaks at slope ~16 over the transition band and
would break the strict bound; instead the derivative profile is a mollified
trapezoid: constant slope 8/(1-RAMP_FRAC) ~ 8.33 on the middle 92% of the band
with all-orders-flat ramps at both ends. The ramp integral has no closed form,
so it is tabulated once at import (Hermite interpolation with exact nodal
derivatives) with the endpoint values pinned exactly.
"""
import math
from dataclasses import dataclass

import numpy as np

PLATEAU = 0.125
SUPPORT = 0.25
BAND = SUPPORT - PLATEAU
RAMP_FRAC = 0.04
SLOPE = 1.0 / (BAND * (1.0 - RAMP_FRAC))  # ~8.3333, average slope over the band is 8

_N_TABLE = 4096


def smoothstep(v):
    """C-infinity step: 0 for v <= 0, 1 for v >= 1, exp-flat at both ends."""
    if v <= 0.0:
        return 0.0
    if v >= 1.0:
        return 1.0
    a = math.exp(-1.0 / v)
    b = math.exp(-1.0 / (1.0 - v))
    return a / (a + b)


def smoothstep_deriv(v):
    if v <= 0.0 or v >= 1.0:
        return 0.0
    a = math.exp(-1.0 / v)
    b = math.exp(-1.0 / (1.0 - v))
    da = a / (v * v)
    db = b / ((1.0 - v) * (1.0 - v))
    return (da * b + a * db) / ((a + b) * (a + b))


def _build_ramp_table(n=_N_TABLE):
    """Nodal values of T(v) = int_0^v smoothstep on a uniform grid over [0,1].

    Composite Simpson with 16 panels per interval; endpoints pinned to the
    exact values T(0) = 0 and T(1) = 1/2 (symmetry of the step).
    """
    h = 1.0 / n
    vals = np.empty(n + 1)
    vals[0] = 0.0
    sub = 16
    acc = 0.0
    for i in range(n):
        x0 = i * h
        hh = h / sub
        s = 0.0
        for j in range(sub):
            a = x0 + j * hh
            s += (smoothstep(a) + 4.0 * smoothstep(a + 0.5 * hh) + smoothstep(a + hh)) * (hh / 6.0)
        acc += s
        vals[i + 1] = acc
    vals *= 0.5 / vals[n]
    return vals


RAMP_T = _build_ramp_table()


def ramp_integral(v):
    """T(v) = int_0^v smoothstep, cubic Hermite on the table (exact derivs)."""
    if v <= 0.0:
        return 0.0
    if v >= 1.0:
        return 0.5
    x = v * _N_TABLE
    i = int(x)
    if i >= _N_TABLE:
        i = _N_TABLE - 1
    t = x - i
    h = 1.0 / _N_TABLE
    y0, y1 = RAMP_T[i], RAMP_T[i + 1]
    d0, d1 = smoothstep(i * h), smoothstep((i + 1) * h)
    t2 = t * t
    t3 = t2 * t
    return ((2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h * d0
            + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * h * d1)


def _band_shape(s):
    """Plateau profile psi on [0,1]: smooth ramps of width RAMP_FRAC, else 1."""
    r = RAMP_FRAC
    if s <= 0.0 or s >= 1.0:
        return 0.0
    if s < r:
        return smoothstep(s / r)
    if s > 1.0 - r:
        return smoothstep((1.0 - s) / r)
    return 1.0


def _band_integral(s):
    """int_0^s psi, piecewise exact (mid segment and full ramps are closed form)."""
    r = RAMP_FRAC
    if s <= 0.0:
        return 0.0
    if s >= 1.0:
        return 1.0 - r
    if s < r:
        return r * ramp_integral(s / r)
    if s <= 1.0 - r:
        return 0.5 * r + (s - r)
    return (1.0 - r) - r * ramp_integral((1.0 - s) / r)


def bump_eval(t):
    """phi(t): 1 on |t| <= 1/8, 0 on |t| >= 1/4, mollified trapezoid between."""
    a = abs(t)
    if a <= PLATEAU:
        return 1.0
    if a >= SUPPORT:
        return 0.0
    return 1.0 - SLOPE * BAND * _band_integral((a - PLATEAU) / BAND)


def bump_deriv(t):
    """phi'(t), closed form; strictly inside (-9, 0) on the positive band."""
    a = abs(t)
    if a <= PLATEAU or a >= SUPPORT:
        return 0.0
    d = -SLOPE * _band_shape((a - PLATEAU) / BAND)
    return d if t > 0.0 else -d


@dataclass(frozen=True)
class BumpProfile:
    """The fixed bump phi with its certificate constants."""

    plateau: float = PLATEAU
    support: float = SUPPORT
    slope_bound: float = 9.0
    max_slope: float = SLOPE

    def eval(self, t):
        return bump_eval(t)

    def deriv(self, t):
        return bump_deriv(t)

    def __call__(self, t):
        return bump_eval(t)


def build_bump():
    """The bump profile used by every constructed model."""
    return BumpProfile()


def plateau_fall(s):
    """Unit fall profile: 1 at s <= 0, 0 at s >= 1, mollified-trapezoid slope.

    The maximal slope is 1/(1 - RAMP_FRAC) ~ 1.042, the least possible for a
    unit drop up to the smooth-ramp correction (a smoothstep would peak at 2).
    """
    if s <= 0.0:
        return 1.0
    if s >= 1.0:
        return 0.0
    return 1.0 - _band_integral(s) / (1.0 - RAMP_FRAC)


def plateau_fall_deriv(s):
    if s <= 0.0 or s >= 1.0:
        return 0.0
    return -_band_shape(s) / (1.0 - RAMP_FRAC)


def bump_root(value, lo=PLATEAU, hi=SUPPORT, iters=80):
    """The t in (plateau, support) with phi(t) = value, by bisection."""
    if not 0.0 < value < 1.0:
        raise ValueError("bump_root needs a value strictly between 0 and 1")
    a, b = lo, hi
    for _ in range(iters):
        m = 0.5 * (a + b)
        if bump_eval(m) > value:
            a = m
        else:
            b = m
    return 0.5 * (a + b)
