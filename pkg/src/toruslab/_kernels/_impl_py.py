"""Vectorized numpy backend for the hot kernels.

Reference semantics for the compiled backend: every function here is mirrored
by toruslab._kernels._impl_cy with identical signatures and tolerance-level
identical results.
"""
import numpy as np

from ..bump import BAND, PLATEAU, RAMP_T, SLOPE, SUPPORT, RAMP_FRAC
from .pack import (I_AINV, I_CX, I_CY, I_D_DIP, I_HAS_DS, I_HAS_DU,
                   I_KBUMP, I_KIND, I_LAM, I_MU_S, I_MU_U, I_NU, I_P, I_PINV,
                   I_P_RISE, I_Q_EDGE, I_R, I_RHO_S, I_RHO_U, I_SHEAR,
                   I_WPLAT, KIND_LINEAR, KIND_MANE_SC,
                   KIND_NONSPECIAL, RAMP_S)

BACKEND = "py"

_NT = len(RAMP_T) - 1


def _smoothstep_vec(v):
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    lo = v <= 0.0
    hi = v >= 1.0
    mid = ~(lo | hi)
    out[lo] = 0.0
    out[hi] = 1.0
    vm = v[mid]
    a = np.exp(-1.0 / vm)
    b = np.exp(-1.0 / (1.0 - vm))
    out[mid] = a / (a + b)
    return out


def _ramp_integral_vec(v):
    """T(v) = int_0^v smoothstep via the tabulated cubic Hermite."""
    v = np.clip(np.asarray(v, dtype=float), 0.0, 1.0)
    x = v * _NT
    i = np.minimum(x.astype(np.int64), _NT - 1)
    t = x - i
    h = 1.0 / _NT
    y0 = RAMP_T[i]
    y1 = RAMP_T[i + 1]
    d0 = RAMP_S[i]
    d1 = RAMP_S[i + 1]
    t2 = t * t
    t3 = t2 * t
    return ((2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h * d0
            + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * h * d1)


def _band_integral_vec(s):
    r = RAMP_FRAC
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    a = s < r
    b = (s >= r) & (s <= 1.0 - r)
    c = s > 1.0 - r
    out[a] = r * _ramp_integral_vec(s[a] / r)
    out[b] = 0.5 * r + (s[b] - r)
    out[c] = (1.0 - r) - r * _ramp_integral_vec((1.0 - s[c]) / r)
    return out


def phi_vec(t):
    """Vectorized bump phi."""
    a = np.abs(np.asarray(t, dtype=float))
    out = np.ones_like(a)
    out[a >= SUPPORT] = 0.0
    band = (a > PLATEAU) & (a < SUPPORT)
    out[band] = 1.0 - SLOPE * BAND * _band_integral_vec((a[band] - PLATEAU) / BAND)
    return out


def phi_deriv_vec(t):
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    out = np.zeros_like(a)
    band = (a > PLATEAU) & (a < SUPPORT)
    s = (a[band] - PLATEAU) / BAND
    r = RAMP_FRAC
    shape = np.where(s < r, _smoothstep_vec(s / r),
                     np.where(s > 1.0 - r, _smoothstep_vec((1.0 - s) / r), 1.0))
    out[band] = -SLOPE * shape
    return out * np.sign(t)


def _cu_wprofile(params, xi):
    """Odd displacement profile W and W' of the cu model (fast rise, shallow tail)."""
    r4 = 0.25 * params[I_R]
    p = params[I_P_RISE]
    q = params[I_Q_EDGE]
    d = params[I_D_DIP]
    v = np.abs(np.asarray(xi, dtype=float)) / r4
    inside = v < 1.0
    vv = np.clip(v, 0.0, 1.0)
    # rise profile P: 1 on [0, p/2], smooth fall to 0 on [p/2, p]
    pv = np.where(vv <= 0.5 * p, 1.0,
                  np.where(vv < p, _smoothstep_vec((p - vv) / (0.5 * p)), 0.0))
    # tail profile Q: smooth box on [p, 1]
    qv = np.where((vv > p) & (vv < p + q), _smoothstep_vec((vv - p) / q),
                  np.where((vv >= p + q) & (vv <= 1.0 - q), 1.0,
                           np.where(vv > 1.0 - q, _smoothstep_vec((1.0 - vv) / q), 0.0)))
    wprime = np.where(inside, pv - d * qv, 0.0)
    # integrals: int_0^v P and int_0^v Q, piecewise exact
    ip = np.where(vv <= 0.5 * p, vv,
                  np.where(vv < p, 0.5 * p + 0.5 * p * _table_gap(vv, p),
                           0.75 * p))
    iq = np.where(vv <= p, 0.0,
                  np.where(vv < p + q, q * _ramp_integral_vec((vv - p) / q),
                           np.where(vv <= 1.0 - q, 0.5 * q + (vv - p - q),
                                    (1.0 - p - q) - q * _ramp_integral_vec((1.0 - vv) / q))))
    w = np.where(inside, r4 * (ip - d * iq), 0.0) * np.sign(xi)
    return w, wprime


def _table_gap(vv, p):
    # int over the falling S((p-v)/(p/2)) piece from p/2 to vv, normalized by p/2
    return 0.5 - _ramp_integral_vec((p - vv) / (0.5 * p))


def _frame_coords(params, dx, dy):
    pinv = params[I_PINV:I_PINV + 4]
    xs = pinv[0] * dx + pinv[1] * dy
    xu = pinv[2] * dx + pinv[3] * dy
    return xs, xu


def _nearest_offset(px, py):
    nx = np.round(px)
    ny = np.round(py)
    return px - nx, py - ny


def _g0_displacement_u(params, px, py):
    """e_u component of the mane_sc displacement at cover points."""
    dx, dy = _nearest_offset(px, py)
    xs, xu = _frame_coords(params, dx, dy)
    r = params[I_R]
    return params[I_LAM] * phi_vec(xs / r) * phi_vec(params[I_KBUMP] * xu / r) * xu


def _fall_profile_vec(s):
    """Unit mollified-trapezoid fall: 1 at s<=0, 0 at s>=1, |slope| <= 1.05."""
    s = np.asarray(s, dtype=float)
    out = np.empty_like(s)
    lo = s <= 0.0
    hi = s >= 1.0
    mid = ~(lo | hi)
    out[lo] = 1.0
    out[hi] = 0.0
    out[mid] = 1.0 - _band_integral_vec(s[mid]) / (1.0 - RAMP_FRAC)
    return out


def _fall_profile_deriv_vec(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    mid = (s > 0.0) & (s < 1.0)
    sm = s[mid]
    r = RAMP_FRAC
    shape = np.where(sm < r, _smoothstep_vec(sm / r),
                     np.where(sm > 1.0 - r, _smoothstep_vec((1.0 - sm) / r), 1.0))
    out[mid] = -shape / (1.0 - r)
    return out


def _g1_wfield(params, px, py):
    """Periodic ellipse bump w and its frame gradient at cover points.

    The radial profile is the mollified trapezoid of the bump module, which
    keeps the gradient near the least possible for a unit drop (the shear
    budget of the cone certificate scales inversely with this gradient).
    """
    ex = px - params[I_CX]
    ey = py - params[I_CY]
    ex -= np.round(ex)
    ey -= np.round(ey)
    es, eu = _frame_coords(params, ex, ey)
    rs = params[I_RHO_S]
    ru = params[I_RHO_U]
    a = es / rs
    b = eu / ru
    rho = np.sqrt(a * a + b * b)
    pl = params[I_WPLAT]
    s = (rho - pl) / (1.0 - pl)
    w = _fall_profile_vec(s)
    sp = _fall_profile_deriv_vec(s)
    safe = np.where(rho > 1e-300, rho, 1.0)
    fac = sp / ((1.0 - pl) * safe)
    gs = np.where(rho > 0, fac * es / (rs * rs), 0.0)
    gu = np.where(rho > 0, fac * eu / (ru * ru), 0.0)
    return w, gs, gu


def _smoothstep_deriv_vec(v):
    v = np.asarray(v, dtype=float)
    out = np.zeros_like(v)
    mid = (v > 0.0) & (v < 1.0)
    vm = v[mid]
    a = np.exp(-1.0 / vm)
    b = np.exp(-1.0 / (1.0 - vm))
    da = a / (vm * vm)
    db = b / ((1.0 - vm) * (1.0 - vm))
    out[mid] = (da * b + a * db) / ((a + b) * (a + b))
    return out


def lift(pack, pts):
    """F(p) for cover points pts[n, 2]."""
    params = pack.params
    kind = int(params[I_KIND])
    p = np.asarray(pts, dtype=float)
    px, py = p[:, 0], p[:, 1]
    a = params[1:5]
    fx = a[0] * px + a[1] * py
    fy = a[2] * px + a[3] * py
    if kind == KIND_LINEAR:
        return np.column_stack([fx, fy])
    pm = params[I_P:I_P + 4]
    if kind in (KIND_MANE_SC, KIND_NONSPECIAL):
        du = _g0_displacement_u(params, px, py)
        fx = fx + du * pm[1]
        fy = fy + du * pm[3]
        if kind == KIND_NONSPECIAL:
            w, _, _ = _g1_wfield(params, fx, fy)
            ds = params[I_SHEAR] * w
            fx = fx + ds * pm[0]
            fy = fy + ds * pm[2]
        return np.column_stack([fx, fy])
    # mane_cu
    dx, dy = _nearest_offset(px, py)
    xs, xu = _frame_coords(params, dx, dy)
    r = params[I_R]
    w, _ = _cu_wprofile(params, xs)
    ds = params[I_NU] * w * phi_vec(xu / r)
    fx = fx + ds * pm[0]
    fy = fy + ds * pm[2]
    return np.column_stack([fx, fy])


def deriv_frame(pack, pts):
    """Jacobian of the lift in the (e_s, e_u) frame: rows (a11, a12, a21, a22)."""
    params = pack.params
    kind = int(params[I_KIND])
    p = np.asarray(pts, dtype=float)
    px, py = p[:, 0], p[:, 1]
    n = px.shape[0]
    mu_s = params[I_MU_S]
    mu_u = params[I_MU_U]
    out = np.empty((n, 4))
    out[:, 0] = mu_s
    out[:, 1] = 0.0
    out[:, 2] = 0.0
    out[:, 3] = mu_u
    if kind == KIND_LINEAR:
        return out
    dx, dy = _nearest_offset(px, py)
    xs, xu = _frame_coords(params, dx, dy)
    r = params[I_R]
    if kind in (KIND_MANE_SC, KIND_NONSPECIAL):
        lam = params[I_LAM]
        kb = params[I_KBUMP]
        ps = phi_vec(xs / r)
        pu = phi_vec(kb * xu / r)
        dps = phi_deriv_vec(xs / r) / r
        dpu = phi_deriv_vec(kb * xu / r) * (kb / r)
        out[:, 2] = lam * dps * pu * xu                      # d(delta_u)/d xi_s
        out[:, 3] = mu_u + lam * ps * (dpu * xu + pu)        # d(delta_u)/d xi_u
        if kind == KIND_NONSPECIAL:
            fp = lift_g0_only(pack, p)
            w, gs, gu = _g1_wfield(params, fp[:, 0], fp[:, 1])
            sh = params[I_SHEAR]
            # frame shear factor [[1 + sh*gs, sh*gu], [0, 1]] composed after g0
            a11 = (1.0 + sh * gs) * out[:, 0] + sh * gu * out[:, 2]
            a12 = (1.0 + sh * gs) * out[:, 1] + sh * gu * out[:, 3]
            out[:, 0] = a11
            out[:, 1] = a12
        return out
    nu = params[I_NU]
    w, wp = _cu_wprofile(params, xs)
    pu = phi_vec(xu / r)
    dpu = phi_deriv_vec(xu / r) / r
    out[:, 0] = mu_s + nu * wp * pu
    out[:, 1] = nu * w * dpu
    return out


def lift_g0_only(pack, pts):
    """The mane_sc part of a nonspecial lift (used to evaluate the shear field)."""
    params = pack.params
    p = np.asarray(pts, dtype=float)
    px, py = p[:, 0], p[:, 1]
    a = params[1:5]
    fx = a[0] * px + a[1] * py
    fy = a[2] * px + a[3] * py
    pm = params[I_P:I_P + 4]
    du = _g0_displacement_u(params, px, py)
    return np.column_stack([fx + du * pm[1], fy + du * pm[3]])


def deriv_std(pack, pts):
    """Standard-coordinate Jacobian rows (j11, j12, j21, j22)."""
    params = pack.params
    mf = deriv_frame(pack, pts)
    pm = params[I_P:I_P + 4].reshape(2, 2)
    pinv = params[I_PINV:I_PINV + 4].reshape(2, 2)
    m = mf.reshape(-1, 2, 2)
    j = np.einsum("ab,nbc,cd->nad", pm, m, pinv)
    return j.reshape(-1, 4)


def delta_frame(pack, pts):
    """Frame components (delta_s, delta_u) of the displacement F - A."""
    params = pack.params
    kind = int(params[I_KIND])
    p = np.asarray(pts, dtype=float)
    px, py = p[:, 0], p[:, 1]
    n = px.shape[0]
    ds = np.zeros(n)
    du = np.zeros(n)
    if kind == KIND_LINEAR:
        return ds, du
    if kind in (KIND_MANE_SC, KIND_NONSPECIAL):
        du = _g0_displacement_u(params, px, py)
        if kind == KIND_NONSPECIAL:
            fp = lift_g0_only(pack, p)
            w, _, _ = _g1_wfield(params, fp[:, 0], fp[:, 1])
            ds = params[I_SHEAR] * w
        return ds, du
    dx, dy = _nearest_offset(px, py)
    xs, xu = _frame_coords(params, dx, dy)
    w, _ = _cu_wprofile(params, xs)
    ds = params[I_NU] * w * phi_vec(xu / params[I_R])
    return ds, du


def newton_inverse(pack, targets, tol=1e-12, maxit=50, halvings=8):
    """Solve F(p) = t per row; damped Newton seeded at A^{-1} t.

    Step halving tames the strong curvature across the thin perturbation
    strip. Returns (points, ok mask).
    """
    params = pack.params
    t = np.asarray(targets, dtype=float)
    ainv = params[I_AINV:I_AINV + 4]
    x = np.column_stack([ainv[0] * t[:, 0] + ainv[1] * t[:, 1],
                         ainv[2] * t[:, 0] + ainv[3] * t[:, 1]])
    if int(params[I_KIND]) == KIND_LINEAR:
        return x, np.ones(len(x), dtype=bool)
    ok = np.zeros(len(x), dtype=bool)
    active = np.arange(len(x))
    r = lift(pack, x) - t
    rn = np.hypot(r[:, 0], r[:, 1])
    for _ in range(maxit):
        done = rn[active] <= tol
        ok[active[done]] = True
        active = active[~done]
        if active.size == 0:
            break
        ra = r[active]
        j = deriv_std(pack, x[active])
        det = j[:, 0] * j[:, 3] - j[:, 1] * j[:, 2]
        dx = (j[:, 3] * ra[:, 0] - j[:, 1] * ra[:, 1]) / det
        dy = (-j[:, 2] * ra[:, 0] + j[:, 0] * ra[:, 1]) / det
        step = np.ones(len(dx))
        trial = np.column_stack([x[active, 0] - dx, x[active, 1] - dy])
        for _ in range(halvings):
            rt = lift(pack, trial) - t[active]
            rtn = np.hypot(rt[:, 0], rt[:, 1])
            worse = rtn > rn[active]
            if not np.any(worse):
                break
            step[worse] *= 0.5
            trial[worse, 0] = x[active[worse], 0] - step[worse] * dx[worse]
            trial[worse, 1] = x[active[worse], 1] - step[worse] * dy[worse]
        x[active] = trial
        rt = lift(pack, trial) - t[active]
        r[active] = rt
        rn[active] = np.hypot(rt[:, 0], rt[:, 1])
    return x, ok


def _coset_index(pack, n_int):
    """Coset index of integer vectors n_int[n, 2] in Z^2 / A Z^2."""
    u = pack.uinv
    d1, d2 = int(pack.snf_diag[0]), int(pack.snf_diag[1])
    w0 = u[0, 0] * n_int[:, 0] + u[0, 1] * n_int[:, 1]
    w1 = u[1, 0] * n_int[:, 0] + u[1, 1] * n_int[:, 1]
    return (w0 % d1) * d2 + (w1 % d2)


def h_series(pack, pts, depth_s, depth_u, offset=None, tol=1e-13):
    """Frame components (u_s, u_u) of H - Id at cover points.

    u_u(x) = sum_j mu_u^{-(j+1)} Delta_u(F^j x)  -- forward torus orbit;
    u_s(x) = -sum_{j>=1} mu_s^{j-1} Delta_s(F^{-j} x) -- backward orbit with
    exact integer deck bookkeeping so that the series is evaluated at
    feature precision for any cover point.

    ``offset``: optional int64 deck translation added to pts exactly (the
    evaluation point is pts + offset without forming the float sum, so huge
    translates like A^k e_1 lose no precision).
    """
    params = pack.params
    p = np.asarray(pts, dtype=float)
    n = len(p)
    us = np.zeros(n)
    uu = np.zeros(n)
    mu_s = params[I_MU_S]
    mu_u = params[I_MU_U]
    if params[I_HAS_DU] != 0.0 and depth_u > 0:
        # the forward series is Z^2-periodic: any deck offset drops out exactly
        q = p - np.floor(p)
        w = 1.0 / mu_u
        for _ in range(depth_u):
            _, du = delta_frame(pack, q)
            uu += w * du
            w /= mu_u
            q = lift(pack, q)
            q -= np.floor(q)
    if params[I_HAS_DS] != 0.0 and depth_s > 0:
        if depth_s > 72:
            raise ValueError("depth_s > 72 overflows the exact deck bookkeeping")
        y = p - np.floor(p)
        nint = np.floor(p).astype(np.int64)
        if offset is not None:
            nint = nint + np.asarray(offset, dtype=np.int64)
        w = 1.0
        det = pack.det_a
        adj = pack.adj_a
        for j in range(1, depth_s + 1):
            idx = _coset_index(pack, nint)
            rho = pack.reps[idx]
            m0 = nint - rho
            mx = (adj[0, 0] * m0[:, 0] + adj[0, 1] * m0[:, 1]) // det
            my = (adj[1, 0] * m0[:, 0] + adj[1, 1] * m0[:, 1]) // det
            z, ok = newton_inverse(pack, y + rho.astype(float), tol=tol)
            if not np.all(ok):
                raise _newton_error()
            zf = np.floor(z)
            y = z - zf
            nint = np.column_stack([mx, my]) + zf.astype(np.int64)
            ds, _ = delta_frame(pack, y)
            us -= w * ds
            w *= mu_s
    return us, uu


def _newton_error():
    from ..errors import NewtonDivergence

    return NewtonDivergence("lift inversion failed inside h_series")


def e2_angles(pack, pts, branches, tail=0, seed_s=0.0, seed_u=1.0, tol=1e-12):
    """Dominating directions at pts for each backward branch.

    ``branches``: int64 [nb, depth] coset-digit choices; the branch is extended
    by ``tail`` extra digit-0 steps before pushing the seed frame vector
    forward. Returns angles[n, nb] in [0, pi), standard coordinates.
    """
    params = pack.params
    p = np.asarray(pts, dtype=float)
    p = p - np.floor(p)
    n = len(p)
    branches = np.asarray(branches, dtype=np.int64)
    nb, depth = branches.shape
    total = depth + tail
    reps = pack.reps.astype(float)
    # flatten (point, branch) pairs
    q = np.repeat(p, nb, axis=0)
    dig = np.tile(branches, (n, 1))
    orbit = np.empty((total + 1, n * nb, 2))
    orbit[0] = q
    for j in range(total):
        d = dig[:, j] if j < depth else np.zeros(n * nb, dtype=np.int64)
        target = orbit[j] + reps[d]
        z, ok = newton_inverse(pack, target, tol=tol)
        if not np.all(ok):
            raise _newton_error()
        orbit[j + 1] = z - np.floor(z)
    vs = np.full(n * nb, seed_s)
    vu = np.full(n * nb, seed_u)
    for j in range(total, 0, -1):
        mf = deriv_frame(pack, orbit[j])
        nvs = mf[:, 0] * vs + mf[:, 1] * vu
        nvu = mf[:, 2] * vs + mf[:, 3] * vu
        norm = np.hypot(nvs, nvu)
        vs = nvs / norm
        vu = nvu / norm
    pm = params[I_P:I_P + 4]
    wx = pm[0] * vs + pm[1] * vu
    wy = pm[2] * vs + pm[3] * vu
    ang = np.arctan2(wy, wx) % np.pi
    ang[ang >= np.pi] = 0.0
    return ang.reshape(n, nb)


def e1_angles(pack, pts, depth, seed_tilt=0.1):
    """Contracting invariant directions by cone pullback along forward orbits."""
    params = pack.params
    p = np.asarray(pts, dtype=float)
    p = p - np.floor(p)
    n = len(p)
    orbit = np.empty((depth + 1, n, 2))
    orbit[0] = p
    for j in range(depth):
        z = lift(pack, orbit[j])
        orbit[j + 1] = z - np.floor(z)
    vs = np.ones(n)
    vu = np.full(n, seed_tilt)
    for j in range(depth - 1, -1, -1):
        mf = deriv_frame(pack, orbit[j])
        det = mf[:, 0] * mf[:, 3] - mf[:, 1] * mf[:, 2]
        nvs = (mf[:, 3] * vs - mf[:, 1] * vu) / det
        nvu = (-mf[:, 2] * vs + mf[:, 0] * vu) / det
        norm = np.hypot(nvs, nvu)
        vs = nvs / norm
        vu = nvu / norm
    pm = params[I_P:I_P + 4]
    wx = pm[0] * vs + pm[1] * vu
    wy = pm[2] * vs + pm[3] * vu
    ang = np.arctan2(wy, wx) % np.pi
    ang[ang >= np.pi] = 0.0
    return ang


def _e1_field(pack, pts, depth, ref=None):
    """Unit vectors of the contracting bundle at pts, oriented along ref."""
    ang = e1_angles(pack, pts, depth)
    v = np.column_stack([np.cos(ang), np.sin(ang)])
    if ref is not None:
        flip = np.sum(v * ref, axis=1) < 0.0
        v[flip] *= -1.0
    return v


def e1_leaf_batch(pack, starts, half_steps, step, depth):
    """Fixed-step RK4 polylines tangent to the E1 bundle, both directions.

    Returns pts[n, 2*half_steps+1, 2] with row half_steps the start points;
    arclength spacing is ``step``.
    """
    starts = np.asarray(starts, dtype=float)
    n = len(starts)
    out = np.empty((n, 2 * half_steps + 1, 2))
    out[:, half_steps] = starts
    v0 = _e1_field(pack, starts, depth)
    for sgn in (1.0, -1.0):
        p = starts.copy()
        ref = v0 * sgn
        for i in range(1, half_steps + 1):
            k1 = _e1_field(pack, p, depth, ref)
            k2 = _e1_field(pack, p + 0.5 * step * k1, depth, k1)
            k3 = _e1_field(pack, p + 0.5 * step * k2, depth, k2)
            k4 = _e1_field(pack, p + step * k3, depth, k3)
            v = (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
            v /= np.hypot(v[:, 0], v[:, 1])[:, None]
            p = p + step * v
            idx = half_steps + i if sgn > 0 else half_steps - i
            out[:, idx] = p
            ref = k4
    return out


def pushforward_log_growth(pack, pts, angles, nsteps):
    """(1/N) sum of log growth of a direction transported along the orbit.

    Returns (exponents[n], final direction angles[n]). Norms are measured in
    standard coordinates.
    """
    params = pack.params
    p = np.asarray(pts, dtype=float)
    p = p - np.floor(p)
    pm = params[I_P:I_P + 4]
    pinv = params[I_PINV:I_PINV + 4]
    ang = np.asarray(angles, dtype=float)
    wx = np.cos(ang)
    wy = np.sin(ang)
    vs = pinv[0] * wx + pinv[1] * wy
    vu = pinv[2] * wx + pinv[3] * wy
    acc = np.zeros(len(p))
    q = p
    for _ in range(nsteps):
        mf = deriv_frame(pack, q)
        nvs = mf[:, 0] * vs + mf[:, 1] * vu
        nvu = mf[:, 2] * vs + mf[:, 3] * vu
        nx = pm[0] * nvs + pm[1] * nvu
        ny = pm[2] * nvs + pm[3] * nvu
        ox = pm[0] * vs + pm[1] * vu
        oy = pm[2] * vs + pm[3] * vu
        g = np.hypot(nx, ny) / np.hypot(ox, oy)
        acc += np.log(g)
        norm = np.hypot(nvs, nvu)
        vs = nvs / norm
        vu = nvu / norm
        q = lift(pack, q)
        q -= np.floor(q)
    wx = pm[0] * vs + pm[1] * vu
    wy = pm[2] * vs + pm[3] * vu
    fin = np.arctan2(wy, wx) % np.pi
    fin[fin >= np.pi] = 0.0
    return acc / nsteps, fin


def monodromy_frame(pack, pts, n_steps):
    """Frame-coordinate product of Jacobians along the n-step torus orbit."""
    p = np.asarray(pts, dtype=float)
    p = p - np.floor(p)
    n = len(p)
    m = np.zeros((n, 4))
    m[:, 0] = 1.0
    m[:, 3] = 1.0
    q = p
    for _ in range(n_steps):
        mf = deriv_frame(pack, q)
        a = mf[:, 0] * m[:, 0] + mf[:, 1] * m[:, 2]
        b = mf[:, 0] * m[:, 1] + mf[:, 1] * m[:, 3]
        c = mf[:, 2] * m[:, 0] + mf[:, 3] * m[:, 2]
        d = mf[:, 2] * m[:, 1] + mf[:, 3] * m[:, 3]
        m = np.column_stack([a, b, c, d])
        q = lift(pack, q)
        q -= np.floor(q)
    return m


def newton_periodic(pack, n_steps, deck, seeds, tol=1e-12, maxit=60, halvings=8):
    """Damped Newton for F^n(x) - x - m = 0 over a batch of seeds.

    ``deck`` is one integer vector or one per seed. Returns (points, ok,
    residuals).
    """
    params = pack.params
    x = np.array(seeds, dtype=float)
    nseeds = len(x)
    m = np.broadcast_to(np.atleast_2d(np.asarray(deck, dtype=float)),
                        (nseeds, 2)).copy()
    pm = params[I_P:I_P + 4].reshape(2, 2)
    pinv = params[I_PINV:I_PINV + 4].reshape(2, 2)

    def gval(xs, ms):
        q = xs.copy()
        mm = np.zeros((len(xs), 4))
        mm[:, 0] = 1.0
        mm[:, 3] = 1.0
        for _ in range(n_steps):
            mf = deriv_frame(pack, q)
            a = mf[:, 0] * mm[:, 0] + mf[:, 1] * mm[:, 2]
            b = mf[:, 0] * mm[:, 1] + mf[:, 1] * mm[:, 3]
            c = mf[:, 2] * mm[:, 0] + mf[:, 3] * mm[:, 2]
            d = mf[:, 2] * mm[:, 1] + mf[:, 3] * mm[:, 3]
            mm = np.column_stack([a, b, c, d])
            q = lift(pack, q)
        g = q - xs - ms
        jf = np.einsum("ab,nbc,cd->nad", pm, mm.reshape(-1, 2, 2), pinv).reshape(-1, 4)
        jf[:, 0] -= 1.0
        jf[:, 3] -= 1.0
        return g, jf

    ok = np.zeros(nseeds, dtype=bool)
    res = np.full(nseeds, np.inf)
    active = np.arange(nseeds)
    for _ in range(maxit):
        g, j = gval(x[active], m[active])
        rn = np.hypot(g[:, 0], g[:, 1])
        res[active] = rn
        done = rn <= tol
        ok[active[done]] = True
        active = active[~done]
        if active.size == 0:
            break
        g = g[~done]
        j = j[~done]
        det = j[:, 0] * j[:, 3] - j[:, 1] * j[:, 2]
        bad = np.abs(det) < 1e-300
        det[bad] = 1.0
        dx = (j[:, 3] * g[:, 0] - j[:, 1] * g[:, 1]) / det
        dy = (-j[:, 2] * g[:, 0] + j[:, 0] * g[:, 1]) / det
        dx[bad] = 0.0
        dy[bad] = 0.0
        rn0 = np.hypot(g[:, 0], g[:, 1])
        step = np.ones(len(dx))
        trial = np.column_stack([x[active, 0] - dx, x[active, 1] - dy])
        for _ in range(halvings):
            gt, _ = gval(trial, m[active])
            rt = np.hypot(gt[:, 0], gt[:, 1])
            worse = rt > rn0
            if not np.any(worse):
                break
            step[worse] *= 0.5
            trial[worse, 0] = x[active[worse], 0] - step[worse] * dx[worse]
            trial[worse, 1] = x[active[worse], 1] - step[worse] * dy[worse]
        x[active] = trial
    return x, ok, res
