"""Covering-space arithmetic for T^2 = R^2/Z^2.

Points on the universal cover are float pairs (arrays of shape (2,) or (n, 2));
torus points are canonical representatives in [0, 1)^2; deck vectors are integer
pairs; projective directions are angles in [0, pi).
"""
import math

import numpy as np

TWO_PI = 2.0 * math.pi


def project(p):
    """Canonical torus representative of a cover point, coordinates in [0,1)."""
    p = np.asarray(p, dtype=float)
    return p - np.floor(p)


def deck_candidates():
    # 3x3 neighborhood is enough once the base offset is rounded.
    g = np.array([-1.0, 0.0, 1.0])
    return np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(9, 2)


_CAND = deck_candidates()


def lift_near(p, base):
    """Lift of torus point ``p`` closest to ``base``.

    Ties are broken by the lexicographically smallest deck vector.
    """
    p = project(p)
    base = np.asarray(base, dtype=float)
    n0 = np.round(base - p)
    cands = p + n0 + _CAND
    d2 = np.sum((cands - base) ** 2, axis=-1)
    best = np.min(d2)
    idx = np.nonzero(d2 <= best + 1e-15)[0]
    if idx.size > 1:
        decks = np.round(cands[idx] - p).astype(int)
        order = np.lexsort((decks[:, 1], decks[:, 0]))
        return cands[idx[order[0]]]
    return cands[idx[0]]


def torus_dist(p, q):
    """Distance on the torus: min over deck translates of Euclidean distance."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    d = p - q
    d = d - np.round(d)
    return float(np.hypot(d[..., 0], d[..., 1])) if d.ndim == 1 else np.hypot(d[..., 0], d[..., 1])


def torus_dist_batch(pts, q):
    """Vectorized torus distance from each row of ``pts`` to ``q``."""
    d = np.asarray(pts, dtype=float) - np.asarray(q, dtype=float)
    d -= np.round(d)
    return np.hypot(d[:, 0], d[:, 1])


def direction_from_vector(v):
    """Angle in [0, pi) of the line spanned by a nonzero vector."""
    v = np.asarray(v, dtype=float)
    theta = math.atan2(v[1], v[0]) % math.pi
    # atan2 of (-x, 0-) can land exactly on pi
    return 0.0 if theta >= math.pi else theta


def direction_unit(theta):
    """Unit representative (cos t, sin t) of a direction."""
    return np.array([math.cos(theta), math.sin(theta)])


def direction_dist(t1, t2):
    """Projective angle between two lines; value in [0, pi/2]."""
    d = abs((t1 % math.pi) - (t2 % math.pi))
    return min(d, math.pi - d)


def direction_spread(thetas):
    """Diameter of a set of directions in the mod-pi metric.

    Equals pi minus the largest angular gap between consecutive angles on the
    projective circle, capped at pi/2 (two lines are never farther apart).
    """
    t = np.sort(np.asarray(thetas, dtype=float) % math.pi)
    if t.size < 2:
        return 0.0
    gaps = np.diff(t)
    wrap = math.pi - (t[-1] - t[0])
    diam = math.pi - max(float(np.max(gaps)), wrap)
    return min(diam, math.pi / 2.0)
