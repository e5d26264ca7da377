"""Concrete torus endomorphisms behind one uniform model interface.

Builders: the linear model, the Mane-type sc-DA map g0 (perturbation of A along
the unstable eigendirection inside a thin strip), its non-special shear
perturbation g1, and a dual cu-DA model with a weakened stable direction.
Every model carries a kernel parameter pack; lifts, Jacobians and Newton
inversion run through the selected kernel backend.
"""
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._kernels import pack as kpack
from ._kernels.pack import (I_CX, I_CY, I_D_DIP, I_HAS_DS, I_HAS_DU, I_KBUMP,
                            I_LAM, I_NU, I_P_RISE, I_Q_EDGE, I_R, I_RHO_S,
                            I_RHO_U, I_SHEAR, I_WPLAT, KIND_LINEAR,
                            KIND_MANE_CU, KIND_MANE_SC, KIND_NONSPECIAL)
from .bump import bump_deriv, bump_eval, bump_root
from .errors import (ConeBroken, ConeFailure, NewtonDivergence,
                     RegionIntersectsLambda, SupportOverlap)
from .hyperbolicity import ConeParams
from .linear_model import IntMatrix2, classify
from .torus_core import project

K = _kernels.impl


@dataclass(frozen=True)
class ManeParams:
    """Parameters of the sc-DA construction.

    mu1, mu2 are the eigenvalue moduli of the linearization, lam the strength
    of the shear along e_u, k the strip-compression factor and support_scale
    the edge factor of the perturbation square.
    """

    mu1: float
    mu2: float
    lam: float
    k: int | None = None
    support_scale: float | None = None


@dataclass
class ConeCertificate:
    """Accepted cone-field data for a Mane-type model."""

    kind: str
    mu1: float
    mu2: float
    lam: float
    k: int
    c0: float
    aperture: float
    cone: ConeParams
    k_ph: int
    grid_n: int
    margins: dict = field(default_factory=dict)

    def to_json(self):
        d = dict(kind=self.kind, mu1=self.mu1, mu2=self.mu2, lam=self.lam,
                 k=self.k, c0=self.c0, aperture=self.aperture, k_ph=self.k_ph,
                 grid_n=self.grid_n, margins=self.margins,
                 cone=dict(e1=self.cone.e1, e2=self.cone.e2, alpha=self.cone.alpha,
                           alpha1=self.cone.alpha1, alpha2=self.cone.alpha2,
                           k=self.cone.k))
        return json.dumps(d, indent=2, sort_keys=True)


class EndomorphismModel:
    """A lift F of a torus endomorphism with derivative and numeric inverse."""

    def __init__(self, label, spec, pack, certificate=None, meta=None):
        self.label = label
        self.spec = spec
        self.pack = pack
        self.certificate = certificate
        self.meta = meta or {}

    @property
    def kind(self):
        return int(self.pack.params[0])

    @property
    def degree(self):
        return self.pack.degree

    @property
    def has_stable_displacement(self):
        return self.pack.params[I_HAS_DS] != 0.0

    @property
    def has_unstable_displacement(self):
        return self.pack.params[I_HAS_DU] != 0.0

    @property
    def invariant_u_line(self):
        """True when the e_u line field is exactly DF-invariant."""
        return self.kind in (KIND_LINEAR, KIND_MANE_SC)

    @property
    def invariant_s_line(self):
        return self.kind in (KIND_LINEAR, KIND_MANE_CU)

    def _batch(self, fn, pts, *args, **kw):
        p = np.asarray(pts, dtype=float)
        single = p.ndim == 1
        out = fn(self.pack, p.reshape(-1, 2), *args, **kw)
        if single:
            if isinstance(out, tuple):
                return tuple(o[0] for o in out)
            return out[0]
        return out

    def lift(self, pts):
        return self._batch(K.lift, pts)

    def deriv(self, pts):
        """Standard-coordinate Jacobian; (2,2) for a point, (n,4) for a batch."""
        p = np.asarray(pts, dtype=float)
        if p.ndim == 1:
            return K.deriv_std(self.pack, p.reshape(1, 2))[0].reshape(2, 2)
        return K.deriv_std(self.pack, p)

    def deriv_frame(self, pts):
        return self._batch(K.deriv_frame, pts)

    def delta_frame(self, pts):
        return self._batch(K.delta_frame, pts)

    def sup_delta(self, grid_n=200):
        """Sampled sup of |F - A| over the torus (frame components)."""
        g = (np.arange(grid_n) + 0.5) / grid_n
        gx, gy = np.meshgrid(g, g, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        ds, du = K.delta_frame(self.pack, pts)
        return float(np.max(np.hypot(ds, du)))


def lift_inverse(model, y, tol=1e-12, maxit=50):
    """Solve F(p) = y; Newton seeded at A^{-1} y (exact for the linear model)."""
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    pts, ok = K.newton_inverse(model.pack, y.reshape(-1, 2), tol=tol, maxit=maxit)
    if not np.all(ok):
        raise NewtonDivergence(f"lift inversion failed for {int(np.sum(~ok))} target(s)")
    return pts[0] if single else pts


def torus_preimages(model, x):
    """The degree-many f-preimages of a torus point, one per deck coset."""
    x = project(x)
    targets = x[None, :] + model.pack.reps.astype(float)
    pts, ok = K.newton_inverse(model.pack, targets)
    if not np.all(ok):
        raise NewtonDivergence("preimage Newton failed")
    return project(pts)


def conservativity_defect(model, samples=400, rng=None):
    """sup over sampled x of | sum over f-preimages of 1/|Jac| - 1 |."""
    rng = np.random.default_rng(rng if rng is not None else 0)
    xs = rng.random((samples, 2))
    worst = 0.0
    for x in xs:
        pre = torus_preimages(model, x)
        d = model.deriv_frame(pre)
        jac = np.abs(d[:, 0] * d[:, 3] - d[:, 1] * d[:, 2])
        worst = max(worst, abs(float(np.sum(1.0 / jac)) - 1.0))
    return worst


def build_linear(mat):
    """The linearization itself as a model."""
    spec = classify(mat)
    params = kpack.base_params(KIND_LINEAR, spec)
    pk = kpack.finish_pack(params, spec)
    return EndomorphismModel(label=f"linear[{spec.matrix.a},{spec.matrix.b};"
                                   f"{spec.matrix.c},{spec.matrix.d}]",
                             spec=spec, pack=pk)


# ---------------------------------------------------------------------------
# sc-DA validator and builder


def _bc_grid(mu2, lam, k, grid_n):
    """Pointwise values of B and C over the (x, y) support square.

    In bump-argument units s = x-position and t = k*y the support scale drops
    out: B = lam*phi'(s)*phi(t)*t/k and C = mu2 + lam*phi(s)*(t*phi'(t)+phi(t)).
    """
    s = np.linspace(0.0, 0.25, grid_n)
    t = np.linspace(0.0, 0.25, grid_n)
    ps = np.array([bump_eval(v) for v in s])
    dps = np.array([bump_deriv(v) for v in s])
    pt = np.array([bump_eval(v) for v in t])
    dpt = np.array([bump_deriv(v) for v in t])
    b = lam * dps[:, None] * (pt * t)[None, :] / k
    c = mu2 + lam * ps[:, None] * (t * dpt + pt)[None, :]
    return b, c


def validate_mane_params(p, grid_n=241):
    """Check the cone-field inequalities for sc-DA parameters.

    Returns a ConeCertificate or raises ConeFailure naming the first violated
    inequality. The cone aperture is a = 2*C0(k) with C0(k) the numerically
    maximized value of B/(C - mu1) over the support square.
    """
    mu1, mu2, lam = p.mu1, p.mu2, p.lam
    if not (0.0 < mu1 < 1.0 < mu2):
        raise ConeFailure("eigenvalue-range", f"mu1={mu1}, mu2={mu2}")
    if not (mu1 - mu2 < lam < 1.0 - mu2):
        raise ConeFailure("sink-range", f"lam={lam} outside ({mu1 - mu2}, {1 - mu2})")
    if p.k is None:
        raise ConeFailure("missing-k", "call choose_k first or pass k")
    k = int(p.k)
    if k < 1:
        raise ConeFailure("k-range", "k must be >= 1")
    if mu2 + lam - mu1 <= 0.0:
        raise ConeFailure("center-above-stable", f"mu2+lam-mu1 = {mu2 + lam - mu1}")
    b, c = _bc_grid(mu2, lam, k, grid_n)
    cmin = float(np.min(c))
    if cmin - mu1 <= 0.0:
        raise ConeFailure("center-above-stable", f"min C - mu1 = {cmin - mu1}")
    c0 = float(np.max(np.abs(b) / (c - mu1)))
    a = 2.0 * c0
    # inequality (ii): B - C a < -mu1 a pointwise
    m2 = float(np.max(np.abs(b) - (c - mu1) * a))
    if m2 >= 0.0:
        raise ConeFailure("cone-field-2", f"max(B - (C-mu1)a) = {m2}")
    # inequality (iii): (C^2-1) b^2 + 2BCb + B^2 + mu1^2 - 1 < 0 for |b| <= a
    bb = np.abs(b)
    quad_end = (c * c - 1.0) * a * a + 2.0 * bb * c * a + bb * bb + mu1 * mu1 - 1.0
    m3 = float(np.max(quad_end))
    concave = c * c < 1.0
    if np.any(concave):
        bv = np.where(concave, bb * c / np.maximum(1.0 - c * c, 1e-300), 0.0)
        inside = concave & (bv <= a)
        vertex = bb * bb + mu1 * mu1 - 1.0 + (bb * c) ** 2 / np.maximum(1.0 - c * c, 1e-300)
        if np.any(inside):
            m3 = max(m3, float(np.max(vertex[inside])))
    if m3 >= 0.0:
        raise ConeFailure("vector-contraction", f"max quadratic = {m3}")
    # cone-invariance margins for the certificate cone
    ratio_e2 = float(np.max(mu1 * a / np.maximum(c - bb * a, 1e-300)))
    if not ratio_e2 < 0.95 * a:
        raise ConeFailure("cone-field-1", f"E2 contraction ratio {ratio_e2} vs alpha {a}")
    cover = float(np.min((c * a - bb) / mu1))
    if cover <= a:
        raise ConeFailure("cone-field-2", f"E1 coverage {cover} <= alpha {a}")
    from .linear_model import SpectralData  # noqa: F401  (for doc cross-ref)

    k_ph = 1
    base = mu1 / min(mu2 + lam, 1.0)
    while 1.1 * base ** k_ph >= 0.5:
        k_ph += 1
    return ConeCertificate(
        kind="sc", mu1=mu1, mu2=mu2, lam=lam, k=k, c0=c0, aperture=a,
        cone=None, k_ph=k_ph, grid_n=grid_n,
        margins=dict(ineq2_max=m2, ineq3_max=m3, e2_ratio=ratio_e2,
                     e1_cover=cover, c_min=cmin, c_max=float(np.max(c)),
                     b_max=float(np.max(np.abs(b)))),
    )


def choose_k(mu1, mu2, lam, grid_n=241, k_max=4096):
    """Smallest strip compression k accepted by the validator."""
    k = 1
    while k <= k_max:
        try:
            validate_mane_params(ManeParams(mu1, mu2, lam, k), grid_n)
            break
        except ConeFailure:
            k *= 2
    else:
        raise ConeFailure("k-search", f"no k <= {k_max} accepted")
    lo, hi = max(1, k // 2), k
    while lo < hi:
        mid = (lo + hi) // 2
        try:
            validate_mane_params(ManeParams(mu1, mu2, lam, mid), grid_n)
            hi = mid
        except ConeFailure:
            lo = mid + 1
    return hi


def _default_support_scale(spec, k):
    """Largest r in {1, 1/2, ...} with strictly disjoint translated supports."""
    es = spec.e_s_vec
    eu = spec.e_u_vec
    r = 1.0
    while r > 1e-6:
        corner = 0.25 * r * np.abs(es) + 0.25 * (r / k) * np.abs(eu)
        if float(np.hypot(*corner)) < 0.45:
            return r
        r *= 0.5
    raise SupportOverlap("no admissible support scale")


def build_mane_sc(mat, p):
    """The sc-DA model: F(q) = A q + lam*phi(xi_s/r)*phi(k xi_u/r)*xi_u*e_u.

    (xi_s, xi_u) are eigen-frame coordinates of q relative to its nearest
    lattice point. The parameter set must pass validate_mane_params; k and
    support_scale are auto-selected when omitted.
    """
    spec = classify(mat)
    mu1, mu2 = abs(spec.mu_s), abs(spec.mu_u)
    if abs(p.mu1 - mu1) > 1e-9 or abs(p.mu2 - mu2) > 1e-9:
        raise ValueError("ManeParams eigenvalues disagree with the matrix spectrum")
    k = p.k if p.k is not None else choose_k(mu1, mu2, p.lam)
    cert = validate_mane_params(ManeParams(mu1, mu2, p.lam, k))
    r = p.support_scale if p.support_scale is not None else _default_support_scale(spec, k)
    corner = 0.25 * r * np.abs(spec.e_s_vec) + 0.25 * (r / k) * np.abs(spec.e_u_vec)
    if float(np.hypot(*corner)) >= 0.5:
        raise SupportOverlap(f"support_scale {r} overlaps lattice translates")
    params = kpack.base_params(KIND_MANE_SC, spec)
    params[I_HAS_DS] = 0.0
    params[I_HAS_DU] = 1.0
    params[I_LAM] = p.lam
    params[I_KBUMP] = float(k)
    params[I_R] = r
    pk = kpack.finish_pack(params, spec)
    a = cert.aperture
    cone = ConeParams(e1=spec.e_s, e2=spec.e_u, alpha=a,
                      alpha1=0.5 * (cert.margins["e2_ratio"] + a),
                      alpha2=min(0.98, 0.5 * (cert.margins["e1_cover"] + 1.0)
                                 if cert.margins["e1_cover"] >= 1.0
                                 else 0.5 * (cert.margins["e1_cover"] + a)),
                      k=cert.k_ph)
    cert.cone = cone
    tstar = bump_root((1.0 - mu2) / p.lam)
    y_saddle = tstar * r / k
    model = EndomorphismModel(
        label=f"mane_sc[lam={p.lam},k={k},r={r}]", spec=spec, pack=pk,
        certificate=cert,
        meta=dict(tstar=tstar, y_saddle=y_saddle,
                  saddles=[project(-y_saddle * spec.e_u_vec),
                           project(y_saddle * spec.e_u_vec)],
                  sink=np.zeros(2), lam=p.lam, k=k, support_scale=r),
    )
    # structural checks: fixed sink with derivative diag(mu1, mu2+lam)
    assert float(np.max(np.abs(model.lift(np.zeros(2))))) < 1e-14
    d0 = model.deriv_frame(np.zeros(2))
    assert abs(d0[0] - mu1) < 1e-12 and abs(d0[3] - (mu2 + p.lam)) < 1e-12
    return model


# ---------------------------------------------------------------------------
# non-special shear perturbation


def _ellipse_samples(center, rho_s, rho_u, spec, n=48):
    th = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    out = [center + rho_s * math.cos(t) * spec.e_s_vec
           + rho_u * math.sin(t) * spec.e_u_vec for t in th]
    for f in (0.5, 0.25):
        out.extend(center + f * rho_s * math.cos(t) * spec.e_s_vec
                   + f * rho_u * math.sin(t) * spec.e_u_vec for t in th[::4])
    out.append(center)
    return np.array(out)


W_PLATEAU = 0.1


def build_nonspecial(base, region_center=None, rho_s=None, rho_u=None, shear=None,
                     check_lambda=True):
    """Shear the sc-DA model along e_s inside a thin ellipse to break specialness.

    The shear is a post-composition S(q) = q + shear * w(q) * e_s with w a
    periodic bump on an eigen-frame-aligned ellipse. Every admissible region
    is a strip that is thin along e_u (the injectivity set bounds the
    u-extent by the plateau length), so the region defaults to an ellipse
    centered at the sink, where the collapse strip is widest. The shear
    strength is capped by the tilt budget of a wide-aperture cone family that
    is re-verified for the perturbed derivative; non-specialness is verified
    a posteriori through the stored probes.
    """
    if base.kind != KIND_MANE_SC:
        raise ValueError("build_nonspecial expects a mane_sc base model")
    spec = base.spec
    mu1, mu2 = abs(spec.mu_s), abs(spec.mu_u)
    center = np.zeros(2) if region_center is None else project(region_center)
    strip_half = _strip_halfwidth(base, center)
    if rho_u is None:
        rho_u = 0.85 * strip_half
    if rho_s is None:
        rho_s = 0.02
    if check_lambda:
        _require_region_clear(base, center, rho_s, rho_u,
                              leaf_arclen=8.0 * base.meta["y_saddle"])
    # wide-aperture cone for the perturbed model; the shear tilt must fit
    # strictly under alpha1 at the perturbed points
    alpha = 0.9
    alpha1 = 0.99 * alpha
    from .bump import RAMP_FRAC

    gmax = 1.0 / ((1.0 - RAMP_FRAC) * (1.0 - W_PLATEAU))
    gu = gmax / rho_u
    gs = gmax / rho_s
    local = _local_frame_bounds(base, center, rho_s, rho_u)
    cone = _sc_cone_wide(base, alpha, alpha1)
    alpha2 = cone.alpha2
    # tilt caps from both cone inclusions at the perturbed points
    cap_e2 = alpha1 - (mu1 * alpha + local["b_max"]) / local["c_min"]
    cap_e1 = (1.0 - alpha2 * mu1 / (alpha * local["c_min"])) / alpha2
    tilt_budget = min(cap_e2, cap_e1) - 5e-3
    if tilt_budget <= 0.0:
        raise ConeBroken("no tilt budget at the requested region")
    shear_cap = 0.95 * tilt_budget / (gu + mu1 * alpha * gs / local["c_min"])
    if shear is None:
        shear = shear_cap
    elif shear > shear_cap:
        raise ConeBroken(f"shear {shear} exceeds the cone budget {shear_cap:.3e}")
    params = base.pack.params.copy()
    params[0] = float(KIND_NONSPECIAL)
    params[I_HAS_DS] = 1.0
    params[I_SHEAR] = float(shear)
    params[I_CX] = center[0]
    params[I_CY] = center[1]
    params[I_RHO_S] = rho_s
    params[I_RHO_U] = rho_u
    params[I_WPLAT] = W_PLATEAU
    pk = kpack.finish_pack(params, spec)
    cert = ConeCertificate(kind="sc", mu1=mu1, mu2=mu2, lam=base.meta["lam"],
                           k=base.meta["k"], c0=base.certificate.c0,
                           aperture=alpha, cone=cone, k_ph=cone.k,
                           grid_n=base.certificate.grid_n,
                           margins=dict(base.certificate.margins,
                                        tilt_budget=tilt_budget,
                                        shear_cap=shear_cap))
    model = EndomorphismModel(
        label=f"nonspecial[shear={shear:.3e}]", spec=spec, pack=pk,
        certificate=cert,
        meta=dict(base.meta, shear=shear, region_center=center,
                  rho_s=rho_s, rho_u=rho_u),
    )
    _attach_probes(model, base, center, rho_u)
    _check_cone_preserved(model)
    return model


def _strip_halfwidth(base, center):
    """Halfwidth along e_u of the fiber-collapse strip through ``center``."""
    from .semiconj import fiber_interval, solve_H

    h = solve_H(base, depth_s=0, depth_u=40)
    fi = fiber_interval(h, base, center, leaf_arclen=8.0 * base.meta["y_saddle"],
                        plateau_tol=1e-7)
    if fi.diameter <= 6.4e-6:  # no plateau beyond numerical noise
        raise RegionIntersectsLambda(f"no collapse strip through {center}")
    return min(-fi.t_minus, fi.t_plus)


def _local_frame_bounds(base, center, rho_s, rho_u):
    """Worst-case frame-derivative entries where the shear will act.

    The shear factor multiplies DG0 at points mapping into the region, i.e.
    at the region's g0-preimages.
    """
    samples = _ellipse_samples(center, rho_s, rho_u, base.spec, n=24)
    pre = []
    for rep in base.pack.reps.astype(float):
        pts, ok = K.newton_inverse(base.pack, samples + rep[None, :])
        if not np.all(ok):
            raise NewtonDivergence("region preimage Newton failed")
        pre.append(pts)
    pre = np.vstack(pre)
    mf = K.deriv_frame(base.pack, pre)
    return dict(c_min=float(np.min(mf[:, 3])), c_max=float(np.max(mf[:, 3])),
                b_max=float(np.max(np.abs(mf[:, 2]))))


def _sc_cone_wide(base, alpha, alpha1):
    """Wide-aperture cone parameters valid for the sc family (pre-shear)."""
    mu1 = abs(base.spec.mu_s)
    cmin = base.certificate.margins["c_min"]
    bmax = base.certificate.margins["b_max"]
    cover = (cmin * alpha - bmax) / mu1
    alpha2 = min(0.5 * (alpha + 0.94), 0.98 * cover)
    if not alpha2 > alpha:
        raise ConeBroken("wide cone has no E1 coverage margin")
    k_ph = 1
    base_ratio = mu1 / min(cmin, 1.0)
    while 1.1 * base_ratio ** k_ph >= 0.5:
        k_ph += 1
    return ConeParams(e1=base.spec.e_s, e2=base.spec.e_u, alpha=alpha,
                      alpha1=alpha1, alpha2=alpha2, k=k_ph)


def _require_region_clear(base, center, rho_s, rho_u, leaf_arclen,
                          tol_factor=0.14):
    """The ellipse must sit inside the fiber-collapse strip (off Lambda)."""
    from .semiconj import _fiber_edges_batch, solve_H

    h = solve_H(base, depth_s=0, depth_u=40)
    samples = _ellipse_samples(center, rho_s, rho_u, base.spec, n=24)
    t_plus, t_minus = _fiber_edges_batch(h, base, project(samples), leaf_arclen,
                                         plateau_tol=1e-7, scan_n=64,
                                         bisect_iters=40)
    gap = np.minimum(-t_minus, t_plus)
    diam = t_plus - t_minus
    bad = (diam <= 0.0) | (gap < tol_factor * rho_u)
    if np.any(bad):
        i = int(np.argmax(bad))
        raise RegionIntersectsLambda(
            f"sample {samples[i]} too close to a fiber endpoint "
            f"(gap {gap[i]:.3e})")


def _attach_probes(model, base, center, rho_u):
    """Designed probe points: the perturbed fixed point for the deck defect
    (its backward orbit stays inside the shear region) and a gradient-ring
    point for the two-branch spread oracle."""
    spec = model.spec
    c_lift = center.astype(float)
    sol, ok, _ = K.newton_periodic(model.pack, 1, np.zeros(2),
                                   c_lift[None, :], tol=1e-13)
    # the deck probe is a cover point: take the lift nearest the region
    # center so its backward orbit stays inside the shear region
    pstar = sol[0] if ok[0] else c_lift
    deck_probe = pstar - np.round(pstar - c_lift)
    ring = c_lift + (model.pack.params[I_WPLAT] + 0.55 * (1 - model.pack.params[I_WPLAT])) \
        * rho_u * spec.e_u_vec
    pre_ring = lift_inverse(base, ring)
    spread_probe = project(model.lift(pre_ring))
    idx_ring = _branch_digit_of(model, spread_probe, pre_ring)
    model.meta["deck_probe"] = deck_probe
    model.meta["spread_probe"] = spread_probe
    model.meta["spread_branches"] = [[idx_ring], [(idx_ring + 1) % model.degree]]


def _branch_digit_of(model, x, preimage):
    """Coset digit whose branch of x recovers the given preimage."""
    pre = torus_preimages(model, x)
    d = pre - project(preimage)
    d -= np.round(d)
    return int(np.argmin(np.hypot(d[:, 0], d[:, 1])))


def _check_cone_preserved(model, grid_n=96):
    """Cone invariance on a grid plus targeted samples at the shear region."""
    from .hyperbolicity import check_cone_invariance

    extra = None
    if model.kind == KIND_NONSPECIAL:
        center = model.meta["region_center"]
        rho_s = model.meta["rho_s"]
        rho_u = model.meta["rho_u"]
        samples = _ellipse_samples(center, rho_s, rho_u, model.spec, n=48)
        fine = [f * samples + (1 - f) * center[None, :]
                for f in (1.0, 0.9, 0.75, 0.6, 0.45, 0.3)]
        targets = np.vstack(fine)
        pre = []
        for rep in model.pack.reps.astype(float):
            pts, ok = K.newton_inverse(model.pack, targets + rep[None, :])
            if not np.all(ok):
                raise NewtonDivergence("region preimage Newton failed")
            pre.append(project(pts))
        extra = np.vstack(pre)
    defect = check_cone_invariance(model, model.certificate.cone, grid_n,
                                   extra_points=extra)
    if defect > 0.0:
        raise ConeBroken(f"shear breaks the cone certificate (defect {defect:.3e})")


# ---------------------------------------------------------------------------
# dual cu-DA model


@dataclass(frozen=True)
class CuParams:
    """Parameters of the cu-DA construction (displacement along e_s)."""

    target_deriv: float = 1.05   # stable-direction derivative at the fixed point
    support_scale: float = 0.5
    p_rise: float = 0.1
    q_edge: float = 0.1


def build_mane_cu(mat, p=None):
    """cu-DA model: F(q) = A q + nu * W(xi_s) * phi(xi_u / r) * e_s.

    W is odd with a fast unit-slope rise and a shallow tail, so the stable
    direction keeps a derivative >= target at the fixed point while the map
    stays a local diffeomorphism and the unstable cone-field survives.
    """
    p = p or CuParams()
    spec = classify(mat)
    mu1, mu2 = abs(spec.mu_s), abs(spec.mu_u)
    nu = p.target_deriv - mu1
    if nu <= 0.0:
        raise ConeFailure("target-deriv", "target must exceed |mu_s|")
    d_dip = (0.75 * p.p_rise) / (1.0 - p.p_rise - p.q_edge)
    if mu1 - nu * d_dip <= 0.02:
        raise ConeFailure("positivity", "stable derivative would change sign")
    r = p.support_scale
    corner = 0.25 * r * (np.abs(spec.e_s_vec) + np.abs(spec.e_u_vec))
    if float(np.hypot(*corner)) >= 0.5:
        raise SupportOverlap(f"support_scale {r} overlaps lattice translates")
    params = kpack.base_params(KIND_MANE_CU, spec)
    params[I_HAS_DS] = 1.0
    params[I_HAS_DU] = 0.0
    params[I_NU] = nu
    params[I_R] = r
    params[I_P_RISE] = p.p_rise
    params[I_Q_EDGE] = p.q_edge
    params[I_D_DIP] = d_dip
    pk = kpack.finish_pack(params, spec)
    # validate on a support grid: positivity, cone invariance, expansion
    g = np.linspace(-0.26 * r, 0.26 * r, 201)
    xs, xu = np.meshgrid(g, g, indexing="ij")
    pts = xs.ravel()[:, None] * spec.e_s_vec + xu.ravel()[:, None] * spec.e_u_vec
    mf = K.deriv_frame(pk, pts)
    a11 = mf[:, 0]
    b12 = np.abs(mf[:, 1])
    if float(np.min(a11)) <= 0.02:
        raise ConeFailure("positivity", f"min stable derivative {np.min(a11)}")
    c0 = float(np.max(b12 / (mu2 - np.abs(a11))))
    a = 2.0 * c0
    ratio = float(np.max((np.abs(a11) * a + b12) / mu2))
    if not ratio < 0.95 * a:
        raise ConeFailure("cone-field-1", f"unstable cone ratio {ratio} vs {a}")
    expansion = float(np.min((mu2 - a * b12) / np.sqrt(1.0 + a * a)))
    if expansion <= 1.0:
        raise ConeFailure("expansion", f"unstable cone growth {expansion} <= 1")
    amax = float(np.max(np.abs(a11)))
    k_ph = 1
    while 1.1 * max(amax, 1.0) ** k_ph / (mu2 - a * float(np.max(b12))) ** k_ph >= 0.5:
        k_ph += 1
    cone = ConeParams(e1=spec.e_s, e2=spec.e_u, alpha=a,
                      alpha1=0.5 * (ratio + a), alpha2=min(0.98, 1.5 * a), k=k_ph)
    cert = ConeCertificate(kind="cu", mu1=mu1, mu2=mu2, lam=nu, k=1, c0=c0,
                           aperture=a, cone=cone, k_ph=k_ph, grid_n=201,
                           margins=dict(a11_min=float(np.min(a11)), a11_max=amax,
                                        tilt_max=float(np.max(b12)),
                                        expansion=expansion))
    model = EndomorphismModel(label=f"mane_cu[nu={nu:.4f},r={r}]", spec=spec,
                              pack=pk, certificate=cert,
                              meta=dict(nu=nu, support_scale=r, d_dip=d_dip))
    d0 = model.deriv_frame(np.zeros(2))
    assert abs(d0[0] - p.target_deriv) < 1e-10
    # probe: a point whose two backward branches split at the max-tilt region
    imax = int(np.argmax(b12))
    q_t = pts[imax]
    probe = project(model.lift(q_t))
    digit = _branch_digit_of(model, probe, q_t)
    model.meta["spread_probe"] = probe
    model.meta["spread_branches"] = [[digit], [(digit + 1) % model.degree]]
    return model


# ---------------------------------------------------------------------------
# JSON configuration interface


def model_from_config(cfg):
    """Build a model from the JSON configuration mapping.

    Schema: {"model": "linear"|"mane_sc"|"nonspecial"|"mane_cu"|"t3",
             "matrix": [[a, b], [c, d]], "params": {...}}.
    """
    kind = cfg.get("model")
    mat = IntMatrix2.from_rows(cfg.get("matrix", [[3, 1], [1, 1]]))
    par = cfg.get("params", {}) or {}
    if kind == "linear":
        return build_linear(mat)
    if kind == "mane_sc":
        return build_mane_sc(mat, _mane_from_json(mat, par))
    if kind == "nonspecial":
        base = build_mane_sc(mat, _mane_from_json(mat, par))
        return build_nonspecial(base, shear=par.get("shear"))
    if kind == "mane_cu":
        return build_mane_cu(mat, CuParams(
            target_deriv=par.get("target_deriv", 1.05),
            support_scale=par.get("support_scale", 0.5)))
    if kind == "t3":
        from .circle_maps import build_t3_example

        return build_t3_example(mat)
    raise ValueError(f"unknown model kind {kind!r}")


def _mane_from_json(mat, par):
    spec = classify(mat)
    return ManeParams(mu1=abs(spec.mu_s), mu2=abs(spec.mu_u),
                      lam=par.get("lambda", -2.6), k=par.get("k"),
                      support_scale=par.get("support_scale"))
