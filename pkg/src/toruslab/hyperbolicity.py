"""Cone fields, domination classification, invariant bundles and foliations.

The two domination ratios are evaluated along numerically converged invariant
directions: cone-boundary vectors carry a component of the dominating
direction whose growth would swamp the contracting ratio at any fixed
aperture, so invariance is certified on cone boundaries (check_cone_invariance)
while the ratio test transports the bundle directions themselves.
"""
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _kernels
from .errors import ConeBroken, FailNoDomination, LeafIntegrationFailure, NotConverged
from .torus_core import direction_dist, direction_spread, direction_unit

K = _kernels.impl


@dataclass
class ConeParams:
    """Cone-field data: axes e1, e2 (angles), apertures 0<alpha1<alpha<alpha2<1, power k."""

    e1: float
    e2: float
    alpha: float
    alpha1: float
    alpha2: float
    k: int

    def __post_init__(self):
        if not (0.0 < self.alpha1 < self.alpha < self.alpha2 < 1.0):
            raise ValueError(f"need 0 < alpha1 < alpha < alpha2 < 1, got "
                             f"{self.alpha1}, {self.alpha}, {self.alpha2}")
        if direction_dist(self.e1, self.e2) < 1e-9:
            raise ValueError("cone axes coincide")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass
class PHCertificate:
    model_label: str
    cone: ConeParams
    grid_n: int
    classification: str  # sc | cu | anosov
    worst_ratio_1: float
    worst_ratio_2: float


def cone_for_linear(spec, k=None, alpha=None):
    """Eigen-aligned cone parameters certifying the linear model."""
    mu_s, mu_u = abs(spec.mu_s), abs(spec.mu_u)
    if k is None:
        k = 1
        while mu_s ** k >= 0.45:
            k += 1
    if alpha is None:
        alpha = min(0.01, 0.1 * (mu_s / mu_u) ** k)
    return ConeParams(e1=spec.e_s, e2=spec.e_u, alpha=alpha,
                      alpha1=0.5 * alpha, alpha2=min(0.99, 1.5 * alpha), k=k)


def _grid_points(grid_n):
    g = (np.arange(grid_n) + 0.5) / grid_n
    gx, gy = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])


def check_cone_invariance(model, cone, grid_n, extra_points=None):
    """Maximal angular violation of the two cone inclusions on a torus grid.

    Returns 0.0 when Df(C^{E2}_alpha) lies in C^{E2}_{alpha1} and the image of
    C^{E1}_alpha covers C^{E1}_{alpha2} at every grid point (checked on
    boundary vectors, where the extremal violation occurs). ``extra_points``
    adds targeted samples, e.g. inside a perturbation region a coarse grid
    would miss.
    """
    pts = _grid_points(grid_n)
    if extra_points is not None:
        pts = np.vstack([pts, np.atleast_2d(np.asarray(extra_points, dtype=float))])
    q = np.column_stack([direction_unit(cone.e1), direction_unit(cone.e2)])
    qinv = np.linalg.inv(q)
    j = model.deriv(pts).reshape(-1, 2, 2)
    m = np.einsum("ab,nbc,cd->nad", qinv, j, q)
    defect = 0.0
    # E2 side: boundary vectors (+-alpha, 1) must land strictly inside alpha1
    for s in (1.0, -1.0):
        w1 = m[:, 0, 0] * (s * cone.alpha) + m[:, 0, 1]
        w2 = m[:, 1, 0] * (s * cone.alpha) + m[:, 1, 1]
        ratio = np.abs(w1) / np.maximum(np.abs(w2), 1e-300)
        defect = max(defect, float(np.max(np.arctan(ratio) - math.atan(cone.alpha1))))
    # E1 side: pull the alpha2-cone boundary back; it must lie inside alpha
    det = m[:, 0, 0] * m[:, 1, 1] - m[:, 0, 1] * m[:, 1, 0]
    for s in (1.0, -1.0):
        u1 = (m[:, 1, 1] * 1.0 - m[:, 0, 1] * (s * cone.alpha2)) / det
        u2 = (-m[:, 1, 0] * 1.0 + m[:, 0, 0] * (s * cone.alpha2)) / det
        ratio = np.abs(u2) / np.maximum(np.abs(u1), 1e-300)
        defect = max(defect, float(np.max(np.arctan(ratio) - math.atan(cone.alpha))))
    return max(0.0, defect)


def _bundle_angles_grid(model, pts, depth, n_branches, rng):
    """E1 and E2 direction angles at each grid point (E2 per sampled branch)."""
    ang1 = K.e1_angles(model.pack, pts, depth)
    deg = model.degree
    branch_list = [np.zeros((1, depth), dtype=np.int64)]
    for _ in range(max(0, n_branches - 1)):
        branch_list.append(rng.integers(0, deg, size=(1, depth)).astype(np.int64))
    angs2 = [K.e2_angles(model.pack, pts, br, tail=0)[:, 0] for br in branch_list]
    return ang1, angs2


def _adverse_points(model, scan_n=256, count=64):
    """Grid points where the center-direction derivative is least expanding.

    A coarse ratio grid can miss the thin strip where |DF restricted to the
    dominating direction| dips below one; these targeted samples witness it.
    """
    pts = _grid_points(scan_n)
    mf = K.deriv_frame(model.pack, pts)
    idx = np.argsort(np.abs(mf[:, 3]))[:count]
    return pts[idx]


def classify_ph(model, cone, grid_n, depth=48, n_branches=3, seed=0):
    """Evaluate both domination ratios at the certificate power k on a grid.

    Classification is sc / cu / anosov according to which strict 1/2 bounds
    hold for the transported invariant directions at every grid point, plus
    targeted samples where the dominating direction expands least.
    Raises ConeBroken when the cone-invariance precondition fails and
    FailNoDomination when neither inequality holds.
    """
    defect = check_cone_invariance(model, cone, grid_n)
    if defect > 0.0:
        raise ConeBroken(f"cone invariance defect {defect:.3e} on grid {grid_n}")
    pts = np.vstack([_grid_points(grid_n), _adverse_points(model)])
    rng = np.random.default_rng(seed)
    ang1, angs2 = _bundle_angles_grid(model, pts, depth, n_branches, rng)
    g1, _ = K.pushforward_log_growth(model.pack, pts, ang1, cone.k)
    n1 = np.exp(cone.k * g1)
    worst1 = 0.0
    worst2 = 0.0
    for ang2 in angs2:
        g2, _ = K.pushforward_log_growth(model.pack, pts, ang2, cone.k)
        n2 = np.exp(cone.k * g2)
        worst1 = max(worst1, float(np.max(n1 / np.minimum(n2, 1.0))))
        worst2 = max(worst2, float(np.max(np.maximum(n1, 1.0) / n2)))
    sc = worst1 < 0.5
    cu = worst2 < 0.5
    if sc and cu:
        cls = "anosov"
    elif sc:
        cls = "sc"
    elif cu:
        cls = "cu"
    else:
        raise FailNoDomination(f"ratios {worst1:.3f}, {worst2:.3f} on grid {grid_n}")
    return PHCertificate(model_label=model.label, cone=cone, grid_n=grid_n,
                         classification=cls, worst_ratio_1=worst1, worst_ratio_2=worst2)


def bundle_E1(model, x, depth=48, depth_max=70, tol=1e-9):
    """Contracting invariant direction at x by cone pullback (Cauchy-checked)."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    d = depth
    while d <= depth_max:
        a1 = float(K.e1_angles(model.pack, pts, d)[0])
        a0 = float(K.e1_angles(model.pack, pts, d - 4)[0])
        if direction_dist(a0, a1) < tol:
            return a1
        d += 8
    raise NotConverged(f"E1 pullback not Cauchy at depth {depth_max}")


def bundle_E2(model, x, branch, tail=None, tol=1e-9):
    """Dominating direction at x along a backward branch.

    ``branch`` lists coset digits for the first backward steps; it is extended
    by digit-0 steps to a total depth where the pushforward forgets the seed
    (seed-independence enforced within ``tol``).
    """
    branch = list(branch)
    if tail is None:
        tail = max(0, 64 - len(branch))
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    br = np.array([branch], dtype=np.int64)
    a_center = float(K.e2_angles(model.pack, pts, br, tail=tail)[0, 0])
    a_side = float(K.e2_angles(model.pack, pts, br, tail=tail,
                               seed_s=0.5, seed_u=1.0)[0, 0])
    if direction_dist(a_center, a_side) >= tol:
        raise NotConverged(f"E2 seed dependence {direction_dist(a_center, a_side):.2e}"
                           f" at depth {len(branch) + tail}")
    return a_center


def enumerate_branches(degree, depth, budget=2 ** 14, seed=0):
    """All degree^depth digit tuples, or a stratified fixed-seed sample."""
    total = degree ** depth
    if total <= budget:
        digits = np.empty((total, depth), dtype=np.int64)
        idx = np.arange(total)
        for j in range(depth):
            digits[:, depth - 1 - j] = (idx // degree ** j) % degree
        return digits
    rng = np.random.default_rng(seed)
    digits = rng.integers(0, degree, size=(budget, depth)).astype(np.int64)
    digits[:degree] = np.repeat(np.arange(degree), depth).reshape(degree, depth)
    return digits


def specialness_spread(model, x, depth, branch_budget=2 ** 14, seed=0, tail=0,
                       chunk=4096):
    """Angular diameter of the dominating directions over backward branches.

    Zero (up to tolerance) at probed depth iff the model is special at x.
    Seeded at the exact unstable eigendirection, so the measured spread is the
    genuine branch dependence rather than seed residue.
    """
    branches = enumerate_branches(model.degree, depth, branch_budget, seed)
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    angs = []
    for i in range(0, len(branches), chunk):
        a = K.e2_angles(model.pack, pts, branches[i:i + chunk], tail=tail)
        angs.append(a[0])
    return direction_spread(np.concatenate(angs))


def two_branch_spread(model, x, branches, tail=48):
    """Spread across an explicit pair (or list) of branches, tail-extended."""
    angs = [bundle_E2(model, x, br, tail=tail) for br in branches]
    return direction_spread(angs)


# ---------------------------------------------------------------------------
# leaf integration and foliation diagnostics


def _field_angles(model, pts, which, depth):
    if which == "E2":
        if model.invariant_u_line:
            return np.full(len(pts), model.spec.e_u)
        raise LeafIntegrationFailure(
            "E2 leaf integration requires an invariant unstable line "
            "(branch-dependent direction field otherwise)")
    if model.kind == 0:
        return np.full(len(pts), model.spec.e_s)
    return K.e1_angles(model.pack, pts, depth)


def integrate_leaf(model, x, which, arclen, step=1e-3, depth=48):
    """Arclength-parameterized polyline tangent to the E1 or E2 bundle.

    Fourth-order stepping on the unit direction field, symmetric about x.
    E2 leaves of models with an invariant unstable line are exact lines.
    Returns (params, points) with params[i] the signed arclength of
    points[i].
    """
    ts, pts = integrate_leaf_batch(model, np.asarray(x, dtype=float)[None, :],
                                   which, arclen, step, depth)
    return ts, pts[0]


def integrate_leaf_batch(model, starts, which, arclen, step=1e-3, depth=48):
    """Leaves through each start point at once (shared arclength parameter)."""
    starts = np.asarray(starts, dtype=float)
    n_half = int(math.ceil(arclen / step))
    if which == "E2":
        if not model.invariant_u_line:
            raise LeafIntegrationFailure(
                "E2 leaf integration requires an invariant unstable line "
                "(branch-dependent direction field otherwise)")
        ts = np.linspace(-arclen, arclen, 2 * n_half + 1)
        e = direction_unit(model.spec.e_u)
        return ts, starts[:, None, :] + ts[None, :, None] * e[None, None, :]
    if which != "E1":
        raise ValueError("which must be 'E1' or 'E2'")
    if model.kind == 0:
        ts = np.linspace(-arclen, arclen, 2 * n_half + 1)
        e = direction_unit(model.spec.e_s)
        return ts, starts[:, None, :] + ts[None, :, None] * e[None, None, :]
    ts = step * np.arange(-n_half, n_half + 1)
    pts = K.e1_leaf_batch(model.pack, starts, n_half, step, depth)
    return ts, pts


def leaf_tangency_defect(model, ts, pts, which, depth=48, samples=64):
    """Max angle between polyline secants and the bundle field (diagnostic)."""
    idx = np.linspace(0, len(pts) - 2, min(samples, len(pts) - 1)).astype(int)
    mids = 0.5 * (pts[idx] + pts[idx + 1])
    ang = _field_angles(model, mids, which, depth)
    seg = pts[idx + 1] - pts[idx]
    seg_ang = np.arctan2(seg[:, 1], seg[:, 0]) % math.pi
    return float(np.max([direction_dist(a, b) for a, b in zip(ang, seg_ang)]))


def _orient(ax, ay, bx, by, cx, cy):
    v = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    if abs(v) < 1e-14 * max(1.0, abs(bx - ax) + abs(by - ay)):
        # exact fallback for near-degenerate crossings
        fv = (Fraction(float(bx)) - Fraction(float(ax))) * (Fraction(float(cy)) - Fraction(float(ay))) \
            - (Fraction(float(by)) - Fraction(float(ay))) * (Fraction(float(cx)) - Fraction(float(ax)))
        return int(fv > 0) - int(fv < 0)
    return int(v > 0) - int(v < 0)


def count_transverse_intersections(poly1, poly2):
    """Transverse crossings of two polylines; 0 for an identical pair."""
    p1 = np.asarray(poly1, dtype=float)
    p2 = np.asarray(poly2, dtype=float)
    if p1.shape == p2.shape and np.array_equal(p1, p2):
        return 0
    count = 0
    # bounding-box prefilter of segment pairs
    a1, b1 = p1[:-1], p1[1:]
    a2, b2 = p2[:-1], p2[1:]
    lo1 = np.minimum(a1, b1)
    hi1 = np.maximum(a1, b1)
    lo2 = np.minimum(a2, b2)
    hi2 = np.maximum(a2, b2)
    for i in range(len(a1)):
        mask = np.all(lo1[i] <= hi2, axis=1) & np.all(lo2 <= hi1[i], axis=1)
        for j in np.nonzero(mask)[0]:
            o1 = _orient(*a1[i], *b1[i], *a2[j])
            o2 = _orient(*a1[i], *b1[i], *b2[j])
            o3 = _orient(*a2[j], *b2[j], *a1[i])
            o4 = _orient(*a2[j], *b2[j], *b1[i])
            if o1 * o2 < 0 and o3 * o4 < 0:
                count += 1
    return count


def _clip_to_box(poly, box):
    inside = np.all(np.abs(poly) <= box, axis=1)
    keep = inside.copy()
    keep[1:] |= inside[:-1]
    keep[:-1] |= inside[1:]
    return poly[keep]


def global_product_check(model, x, y, window, step=2e-3, depth=48):
    """Number of transverse intersections of the E1 leaf through x and the
    E2 leaf through y inside [-window, window]^2 (expected exactly 1)."""
    return global_product_check_batch(model, np.asarray(x, dtype=float)[None, :],
                                      np.asarray(y, dtype=float)[None, :],
                                      window, step, depth)[0]


def global_product_check_batch(model, xs, ys, window, step=2e-3, depth=48):
    """Intersection counts for many (x, y) pairs; leaves integrated in batch."""
    arclen = 4.0 * window + 4.0
    _, leaves1 = integrate_leaf_batch(model, xs, "E1", arclen, step, depth)
    _, leaves2 = integrate_leaf_batch(model, ys, "E2", arclen, step, depth)
    box = window + 1e-9
    out = []
    for l1, l2 in zip(leaves1, leaves2):
        c1 = _clip_to_box(l1, box)
        c2 = _clip_to_box(l2, box)
        if len(c1) < 2 or len(c2) < 2:
            out.append(0)
        else:
            out.append(count_transverse_intersections(c1, c2))
    return out


def quasi_isometry_probe(model, leaf, max_samples=400):
    """Smallest C1 (with C2 = 1) bounding arclength by C1*chord + 1 on the leaf.

    ``leaf`` is (params, points) as returned by integrate_leaf. Clamped below
    at 1; a straight line reports exactly 1.
    """
    ts, pts = leaf
    if len(pts) > max_samples:
        idx = np.linspace(0, len(pts) - 1, max_samples).astype(int)
        ts, pts = ts[idx], pts[idx]
    c1 = 1.0
    for i in range(len(pts)):
        arc = np.abs(ts[i:] - ts[i])
        chord = np.hypot(pts[i:, 0] - pts[i, 0], pts[i:, 1] - pts[i, 1])
        mask = arc > 1.0
        if np.any(mask):
            c1 = max(c1, float(np.max((arc[mask] - 1.0) / np.maximum(chord[mask], 1e-300))))
    return c1, 1.0
