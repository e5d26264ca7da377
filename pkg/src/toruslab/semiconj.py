"""The semi-conjugacy H on the universal cover and every H-based diagnostic.

H = Id + u_s e_s + u_u e_u solves H o F = A o H through the geometric series
    u_u(x) =  sum_{j>=0} mu_u^{-(j+1)} Delta_u(F^j x),
    u_s(x) = -sum_{j>=1} mu_s^{j-1}  Delta_s(F^{-j} x),
truncated at certified depths. Deck-translated evaluations H(x + n) keep the
integer part exact, so translate defects are measured at feature precision.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import LeafIntegrationFailure
from .linear_model import mat_power
from .torus_core import project

K = _kernels.impl


@dataclass
class FiberInterval:
    """Plateau of H along a center leaf: arclength endpoints around the base."""

    leaf_id: str
    t_minus: float
    t_plus: float
    diameter: float


class SemiConjugacy:
    """Evaluator for H with certified truncation error."""

    def __init__(self, model, depth_s, depth_u, trunc_bound, c_h_est, sup_delta):
        self.model = model
        self.model_label = model.label
        self.spec = model.spec
        self.depth_s = depth_s
        self.depth_u = depth_u
        self.trunc_bound = trunc_bound
        self.C_H_est = c_h_est
        self.sup_delta = sup_delta

    def u_components(self, pts, offset=None):
        p = np.asarray(pts, dtype=float)
        single = p.ndim == 1
        us, uu = K.h_series(self.model.pack, p.reshape(-1, 2),
                            self.depth_s, self.depth_u, offset=offset)
        if single:
            return float(us[0]), float(uu[0])
        return us, uu

    def __call__(self, pts):
        p = np.asarray(pts, dtype=float)
        single = p.ndim == 1
        q = p.reshape(-1, 2)
        us, uu = K.h_series(self.model.pack, q, self.depth_s, self.depth_u)
        es = self.spec.e_s_vec
        eu = self.spec.e_u_vec
        out = q + us[:, None] * es[None, :] + uu[:, None] * eu[None, :]
        return out[0] if single else out

    def translate_defect(self, x, n):
        """Frame components (s, u) of H(x + n) - H(x) - n for integer n.

        The unstable series is Z^2-periodic, so its difference vanishes
        exactly; the stable series feels the non-integer translates A^{-j} n
        of the backward orbit.
        """
        x = np.asarray(x, dtype=float).reshape(1, 2)
        n = np.asarray(n, dtype=np.int64).reshape(1, 2)
        us0, uu0 = K.h_series(self.model.pack, x, self.depth_s, self.depth_u)
        us1, uu1 = K.h_series(self.model.pack, x, self.depth_s, self.depth_u,
                              offset=n)
        return float(us1[0] - us0[0]), float(uu1[0] - uu0[0])


def solve_H(model, depth_s, depth_u):
    """Truncated-series semi-conjugacy with certified truncation bound."""
    if model.has_stable_displacement and depth_s > 72:
        raise ValueError("depth_s > 72 would overflow exact deck bookkeeping; "
                         "terms beyond depth 72 are below 1e-16 anyway")
    mu_s = abs(model.spec.mu_s)
    mu_u = abs(model.spec.mu_u)
    nd = model.sup_delta(200)
    trunc = nd * (mu_s ** depth_s / (1.0 - mu_s)
                  + mu_u ** (-depth_u) / (1.0 - 1.0 / mu_u))
    h = SemiConjugacy(model, depth_s, depth_u, trunc, c_h_est=0.0, sup_delta=nd)
    g = (np.arange(60) + 0.5) / 60
    gx, gy = np.meshgrid(g, g, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    us, uu = h.u_components(pts)
    h.C_H_est = float(np.max(np.hypot(us, uu)))
    bound = nd * (1.0 / (1.0 - mu_s) + 1.0 / (mu_u - 1.0)) + trunc
    assert h.C_H_est <= bound + 1e-12, (h.C_H_est, bound)
    return h


def conj_residual(h, model, grid_n):
    """sup over a torus grid of |H(F x) - A H(x)|."""
    g = (np.arange(grid_n) + 0.5) / grid_n
    gx, gy = np.meshgrid(g, g, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    fx = model.lift(pts)
    hf = h(fx)
    hx = h(pts)
    a = model.spec.matrix.as_array()
    ahx = hx @ a.T
    return float(np.max(np.hypot(hf[:, 0] - ahx[:, 0], hf[:, 1] - ahx[:, 1])))


def deck_commutation_defect(h, grid_n, extra_points=None):
    """(d1, d2) with d_i the sup of |H(x + e_i) - H(x) - e_i| over the grid.

    For special models both vanish to truncation level (H descends to T^2);
    values beyond 10x the truncation bound certify non-descent.
    """
    g = (np.arange(grid_n) + 0.5) / grid_n
    gx, gy = np.meshgrid(g, g, indexing="ij")
    pts = [np.column_stack([gx.ravel(), gy.ravel()])]
    if extra_points is not None:
        pts.append(np.atleast_2d(np.asarray(extra_points, dtype=float)))
    pts = np.vstack(pts)
    out = []
    for e in (np.array([1, 0], dtype=np.int64), np.array([0, 1], dtype=np.int64)):
        us0, uu0 = K.h_series(h.model.pack, pts, h.depth_s, h.depth_u)
        us1, uu1 = K.h_series(h.model.pack, pts, h.depth_s, h.depth_u,
                              offset=np.broadcast_to(e, pts.shape))
        out.append(float(np.max(np.hypot(us1 - us0, uu1 - uu0))))
    return tuple(out)


def stable_decay_check(h, spec, x, k_max):
    """Defects |H(x + A^k e1) - H(x) - A^k e1| for k = 0..k_max."""
    out = []
    for k in range(k_max + 1):
        n = mat_power(spec.matrix, k) @ np.array([1, 0], dtype=np.int64)
        s, u = h.translate_defect(x, n)
        out.append((k, math.hypot(s, u)))
    return out


def decay_fit_slope(pairs, k_lo, k_hi, floor):
    """Log-linear slope of defects above the noise floor; -inf if all vanish."""
    ks = [k for k, d in pairs if k_lo <= k <= k_hi and d > floor]
    ds = [d for k, d in pairs if k_lo <= k <= k_hi and d > floor]
    if len(ks) < 2:
        return -math.inf
    slope, _ = np.polyfit(np.array(ks, dtype=float), np.log(ds), 1)
    return float(slope)


def _center_leaf(h, model, x, leaf_arclen):
    if not model.invariant_u_line:
        raise LeafIntegrationFailure(
            "fiber analysis is restricted to models with an invariant "
            "unstable line (sc-DA special models)")
    return model.spec.e_u_vec


def _psi_batch(h, model, x, ts):
    """e_u component of H along the center leaf, relative to the base point."""
    eu = _center_leaf(h, model, x, None)
    pts = np.asarray(x, dtype=float)[None, :] + np.asarray(ts)[:, None] * eu[None, :]
    _, uu = h.u_components(pts)
    _, uu0 = h.u_components(np.asarray(x, dtype=float))
    return np.asarray(ts) + uu - uu0


def fiber_interval(h, model, x, leaf_arclen, plateau_tol=1e-7, scan_n=96,
                   bisect_iters=40):
    """Maximal parameter interval around x where H is constant along the leaf.

    The e_u component of H is monotone along center leaves, so each endpoint
    is located by bisection on the plateau indicator |psi| <= plateau_tol.
    """
    x = project(x)
    half = 0.5 * leaf_arclen
    out = {}
    for sgn in (1.0, -1.0):
        ts = sgn * np.linspace(0.0, half, scan_n + 1)[1:]
        psi = np.abs(_psi_batch(h, model, x, ts))
        above = np.nonzero(psi > plateau_tol)[0]
        if len(above) == 0:
            out[sgn] = sgn * half  # plateau reaches the scan window
            continue
        i = above[0]
        lo = 0.0 if i == 0 else float(np.abs(ts[i - 1]))
        hi = float(np.abs(ts[i]))
        for _ in range(bisect_iters):
            mid = 0.5 * (lo + hi)
            if abs(float(_psi_batch(h, model, x, [sgn * mid])[0])) <= plateau_tol:
                lo = mid
            else:
                hi = mid
        out[sgn] = sgn * 0.5 * (lo + hi)
    return FiberInterval(leaf_id=f"{h.model_label}@{x[0]:.6f},{x[1]:.6f}",
                         t_minus=out[-1.0], t_plus=out[1.0],
                         diameter=out[1.0] - out[-1.0])


def lambda_membership(h, model, x, tol, leaf_arclen=None, plateau_tol=1e-7):
    """True iff x sits within tol (leaf arclength) of a fiber endpoint."""
    if leaf_arclen is None:
        leaf_arclen = _default_leaf_window(model)
    fi = fiber_interval(h, model, x, leaf_arclen, plateau_tol)
    return min(-fi.t_minus, fi.t_plus) <= tol


def _default_leaf_window(model):
    ys = model.meta.get("y_saddle")
    return 8.0 * ys if ys else 0.5


def lambda_atlas(h, model, grid_n, tol, leaf_arclen=None, plateau_tol=1e-7,
                 scan_n=48, bisect_iters=36, saturation_samples=64, seed=0):
    """Membership map of the injectivity-set closure over a torus grid.

    Returns a dict with the boolean grid, fiber diameters, the invariance
    defect (members mapping to non-members), a stable-saturation probe and
    the minimal center log-derivative over members, plus CSV-ready rows.

    ``tol`` decides endpoint proximity; for the center-expansion statistic to
    be meaningful it must stay below the gap between the fiber endpoints and
    the non-expanding zone {|DF on e_u| <= 1} strictly inside the collapse
    strip (a few 1e-5 for the reference construction).
    """
    if leaf_arclen is None:
        leaf_arclen = _default_leaf_window(model)
    g = (np.arange(grid_n) + 0.5) / grid_n
    gx, gy = np.meshgrid(g, g, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    t_plus, t_minus = _fiber_edges_batch(h, model, pts, leaf_arclen,
                                         plateau_tol, scan_n, bisect_iters)
    member = np.minimum(-t_minus, t_plus) <= tol
    diam = t_plus - t_minus
    mf = K.deriv_frame(model.pack, pts)
    center_log = np.log(np.abs(mf[:, 3]))
    # invariance: members should map to members
    idx = np.nonzero(member)[0]
    rng = np.random.default_rng(seed)
    if len(idx) > 4000:
        idx = rng.choice(idx, size=4000, replace=False)
    img = project(model.lift(pts[idx]))
    ip, im = _fiber_edges_batch(h, model, img, leaf_arclen, plateau_tol,
                                scan_n, bisect_iters)
    img_member = np.minimum(-im, ip) <= tol
    invariance_defect = 1.0 - float(np.mean(img_member)) if len(idx) else 0.0
    # stable saturation: small steps along e_s stay members
    sat_idx = idx[:saturation_samples]
    sat_ok = 1.0
    if len(sat_idx):
        es = model.spec.e_s_vec
        nb = project(np.vstack([pts[sat_idx] + 1e-3 * es, pts[sat_idx] - 1e-3 * es]))
        sp, sm = _fiber_edges_batch(h, model, nb, leaf_arclen, plateau_tol,
                                    scan_n, bisect_iters)
        sat_ok = float(np.mean(np.minimum(-sm, sp) <= tol))
    min_center = float(np.min(center_log[member])) if np.any(member) else math.nan
    rows = [(pts[i, 0], pts[i, 1], bool(member[i]), diam[i], center_log[i])
            for i in range(len(pts))]
    return dict(points=pts, member=member, fiber_diameter=diam,
                center_log_deriv=center_log,
                invariance_defect=invariance_defect,
                saturation_fraction=sat_ok,
                min_center_log_deriv_members=min_center,
                member_fraction=float(np.mean(member)), rows=rows)


def _fiber_edges_batch(h, model, pts, leaf_arclen, plateau_tol, scan_n,
                       bisect_iters):
    """Vectorized fiber-endpoint location for a batch of base points."""
    eu = _center_leaf(h, model, pts[0], None)
    n = len(pts)
    _, uu0 = h.u_components(pts)
    half = 0.5 * leaf_arclen

    def psi_abs(tvals):
        p = pts + tvals[:, None] * eu[None, :]
        _, uu = h.u_components(p)
        return np.abs(tvals + uu - uu0)

    out = {}
    for sgn in (1.0, -1.0):
        lo = np.zeros(n)
        hi = np.full(n, half)
        found = np.zeros(n, dtype=bool)
        prev = np.zeros(n)
        for s in np.linspace(0.0, half, scan_n + 1)[1:]:
            above = psi_abs(np.full(n, sgn * s)) > plateau_tol
            new = above & ~found
            lo[new] = prev[new]
            hi[new] = s
            found |= above
            prev = np.where(found, prev, s)
            if np.all(found):
                break
        lo[~found] = half
        hi[~found] = half
        for _ in range(bisect_iters):
            mid = 0.5 * (lo + hi)
            inside = psi_abs(sgn * mid) <= plateau_tol
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        out[sgn] = sgn * 0.5 * (lo + hi)
    return out[1.0], out[-1.0]


def plateau_cantor_probe(h, model, x, y_t, plateau_tol=1e-7, leaf_arclen=None,
                         max_evals=40):
    """Search for an injective point strictly between the fiber edge and y.

    ``y_t`` is the leaf parameter of a point beyond the plateau endpoint
    x+; returns True when a point with sub-tolerance fiber diameter is found
    strictly inside (t_plus, y_t), by bisection on plateau diameters.
    """
    if leaf_arclen is None:
        leaf_arclen = _default_leaf_window(model)
    x = project(x)
    fi = fiber_interval(h, model, x, leaf_arclen, plateau_tol)
    if y_t <= fi.t_plus:
        raise ValueError("probe point must lie beyond the plateau endpoint")
    eu = model.spec.e_u_vec
    lo, hi = fi.t_plus, y_t
    for _ in range(max_evals):
        mid = 0.5 * (lo + hi)
        z = project(np.asarray(x, dtype=float) + mid * eu)
        fz = fiber_interval(h, model, z, leaf_arclen, plateau_tol)
        if fz.diameter <= 4.0 * plateau_tol:
            return True
        # stay strictly between the plateau around x+ and y
        if fz.t_minus + mid <= fi.t_plus:
            lo = mid + fz.t_plus
        else:
            hi = mid
        if hi - lo <= 0.0:
            break
    return False
