# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernel backend; mirrors _impl_py semantics function by function."""
import numpy as np

cimport numpy as cnp
from libc.math cimport atan2, cos, exp, fabs, floor, hypot, log, sin, sqrt

from ..bump import BAND, PLATEAU, RAMP_FRAC, RAMP_T, SLOPE, SUPPORT
from .pack import RAMP_S

BACKEND = "cy"

cdef double PI = 3.141592653589793238462643383279502884

cdef double[::1] _RAMP_T = np.ascontiguousarray(RAMP_T)
cdef double[::1] _RAMP_S = np.ascontiguousarray(RAMP_S)
cdef int _NT = len(RAMP_T) - 1
cdef double _PLATEAU = PLATEAU
cdef double _SUPPORT = SUPPORT
cdef double _BAND = BAND
cdef double _RAMP_FRAC = RAMP_FRAC
cdef double _SLOPE = SLOPE

# params vector layout (keep in sync with pack.py)
cdef int I_KIND = 0, I_A = 1, I_MU_S = 5, I_MU_U = 6, I_P = 7, I_PINV = 11
cdef int I_DEGREE = 15, I_AINV = 16, I_HAS_DS = 20, I_HAS_DU = 21
cdef int I_LAM = 22, I_KBUMP = 23, I_R = 24, I_SHEAR = 25, I_CX = 26
cdef int I_CY = 27, I_RHO_S = 28, I_RHO_U = 29, I_WPLAT = 30, I_NU = 31
cdef int I_P_RISE = 32, I_Q_EDGE = 33, I_D_DIP = 34


cdef inline double _smoothstep(double v) nogil:
    cdef double a, b
    if v <= 0.0:
        return 0.0
    if v >= 1.0:
        return 1.0
    a = exp(-1.0 / v)
    b = exp(-1.0 / (1.0 - v))
    return a / (a + b)


cdef inline double _ramp_integral(double v) nogil:
    cdef int i
    cdef double x, t, h, y0, y1, d0, d1, t2, t3
    if v <= 0.0:
        return 0.0
    if v >= 1.0:
        return 0.5
    x = v * _NT
    i = <int> x
    if i >= _NT:
        i = _NT - 1
    t = x - i
    h = 1.0 / _NT
    y0 = _RAMP_T[i]
    y1 = _RAMP_T[i + 1]
    d0 = _RAMP_S[i]
    d1 = _RAMP_S[i + 1]
    t2 = t * t
    t3 = t2 * t
    return ((2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h * d0
            + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * h * d1)


cdef inline double _band_integral(double s) nogil:
    cdef double r = _RAMP_FRAC
    if s <= 0.0:
        return 0.0
    if s >= 1.0:
        return 1.0 - r
    if s < r:
        return r * _ramp_integral(s / r)
    if s <= 1.0 - r:
        return 0.5 * r + (s - r)
    return (1.0 - r) - r * _ramp_integral((1.0 - s) / r)


cdef inline double _band_shape(double s) nogil:
    cdef double r = _RAMP_FRAC
    if s <= 0.0 or s >= 1.0:
        return 0.0
    if s < r:
        return _smoothstep(s / r)
    if s > 1.0 - r:
        return _smoothstep((1.0 - s) / r)
    return 1.0


cdef inline double _phi(double t) nogil:
    cdef double a = fabs(t)
    if a <= _PLATEAU:
        return 1.0
    if a >= _SUPPORT:
        return 0.0
    return 1.0 - _SLOPE * _BAND * _band_integral((a - _PLATEAU) / _BAND)


cdef inline double _phi_deriv(double t) nogil:
    cdef double a = fabs(t)
    cdef double d
    if a <= _PLATEAU or a >= _SUPPORT:
        return 0.0
    d = -_SLOPE * _band_shape((a - _PLATEAU) / _BAND)
    if t > 0.0:
        return d
    return -d


cdef inline double _fall_profile(double s) nogil:
    if s <= 0.0:
        return 1.0
    if s >= 1.0:
        return 0.0
    return 1.0 - _band_integral(s) / (1.0 - _RAMP_FRAC)


cdef inline double _fall_profile_deriv(double s) nogil:
    if s <= 0.0 or s >= 1.0:
        return 0.0
    return -_band_shape(s) / (1.0 - _RAMP_FRAC)


cdef inline void _cu_w(const double* par, double xi, double* w, double* wp) nogil:
    cdef double r4 = 0.25 * par[I_R]
    cdef double p = par[I_P_RISE]
    cdef double q = par[I_Q_EDGE]
    cdef double d = par[I_D_DIP]
    cdef double v = fabs(xi) / r4
    cdef double pv, qv, ip, iq, sgn
    if v >= 1.0:
        w[0] = 0.0
        wp[0] = 0.0
        return
    if v <= 0.5 * p:
        pv = 1.0
    elif v < p:
        pv = _smoothstep((p - v) / (0.5 * p))
    else:
        pv = 0.0
    if v > p and v < p + q:
        qv = _smoothstep((v - p) / q)
    elif v >= p + q and v <= 1.0 - q:
        qv = 1.0
    elif v > 1.0 - q:
        qv = _smoothstep((1.0 - v) / q)
    else:
        qv = 0.0
    wp[0] = pv - d * qv
    if v <= 0.5 * p:
        ip = v
    elif v < p:
        ip = 0.5 * p + 0.5 * p * (0.5 - _ramp_integral((p - v) / (0.5 * p)))
    else:
        ip = 0.75 * p
    if v <= p:
        iq = 0.0
    elif v < p + q:
        iq = q * _ramp_integral((v - p) / q)
    elif v <= 1.0 - q:
        iq = 0.5 * q + (v - p - q)
    else:
        iq = (1.0 - p - q) - q * _ramp_integral((1.0 - v) / q)
    sgn = 1.0 if xi > 0.0 else (-1.0 if xi < 0.0 else 0.0)
    w[0] = sgn * r4 * (ip - d * iq)


cdef inline double _round(double x) nogil:
    # numpy-compatible round-half-to-even
    cdef double f = floor(x)
    cdef double d = x - f
    if d > 0.5:
        return f + 1.0
    if d < 0.5:
        return f
    if fabs((f * 0.5) - floor(f * 0.5)) < 0.25:
        return f
    return f + 1.0


cdef inline void _frame_coords(const double* par, double dx, double dy,
                               double* xs, double* xu) nogil:
    xs[0] = par[I_PINV] * dx + par[I_PINV + 1] * dy
    xu[0] = par[I_PINV + 2] * dx + par[I_PINV + 3] * dy


cdef inline double _g0_du(const double* par, double px, double py) nogil:
    cdef double dx = px - _round(px)
    cdef double dy = py - _round(py)
    cdef double xs, xu, r
    _frame_coords(par, dx, dy, &xs, &xu)
    r = par[I_R]
    return par[I_LAM] * _phi(xs / r) * _phi(par[I_KBUMP] * xu / r) * xu


cdef inline void _g1_w(const double* par, double px, double py,
                       double* w, double* gs, double* gu) nogil:
    cdef double ex = px - par[I_CX]
    cdef double ey = py - par[I_CY]
    cdef double es, eu, rs, ru, a, b, rho, pl, s, sp, fac
    ex -= _round(ex)
    ey -= _round(ey)
    _frame_coords(par, ex, ey, &es, &eu)
    rs = par[I_RHO_S]
    ru = par[I_RHO_U]
    a = es / rs
    b = eu / ru
    rho = sqrt(a * a + b * b)
    pl = par[I_WPLAT]
    s = (rho - pl) / (1.0 - pl)
    w[0] = _fall_profile(s)
    if rho <= 0.0:
        gs[0] = 0.0
        gu[0] = 0.0
        return
    sp = _fall_profile_deriv(s)
    fac = sp / ((1.0 - pl) * rho)
    gs[0] = fac * es / (rs * rs)
    gu[0] = fac * eu / (ru * ru)


cdef inline void _lift_g0(const double* par, double px, double py,
                          double* fx, double* fy) nogil:
    cdef double du = _g0_du(par, px, py)
    fx[0] = par[I_A] * px + par[I_A + 1] * py + du * par[I_P + 1]
    fy[0] = par[I_A + 2] * px + par[I_A + 3] * py + du * par[I_P + 3]


cdef void _lift_one(const double* par, double px, double py,
                    double* fx, double* fy) nogil:
    cdef int kind = <int> par[I_KIND]
    cdef double dx, dy, xs, xu, r, ds, w, wp, gx, gy
    if kind == 0:
        fx[0] = par[I_A] * px + par[I_A + 1] * py
        fy[0] = par[I_A + 2] * px + par[I_A + 3] * py
        return
    if kind == 1 or kind == 2:
        _lift_g0(par, px, py, fx, fy)
        if kind == 2:
            _g1_w(par, fx[0], fy[0], &w, &gx, &gy)
            ds = par[I_SHEAR] * w
            fx[0] += ds * par[I_P]
            fy[0] += ds * par[I_P + 2]
        return
    dx = px - _round(px)
    dy = py - _round(py)
    _frame_coords(par, dx, dy, &xs, &xu)
    r = par[I_R]
    _cu_w(par, xs, &w, &wp)
    ds = par[I_NU] * w * _phi(xu / r)
    fx[0] = par[I_A] * px + par[I_A + 1] * py + ds * par[I_P]
    fy[0] = par[I_A + 2] * px + par[I_A + 3] * py + ds * par[I_P + 2]


cdef void _deriv_frame_one(const double* par, double px, double py,
                           double* m) nogil:
    cdef int kind = <int> par[I_KIND]
    cdef double mu_s = par[I_MU_S]
    cdef double mu_u = par[I_MU_U]
    cdef double dx, dy, xs, xu, r, lam, kb, ps, pu, dps, dpu
    cdef double fx, fy, w, gs, gu, sh, a11, a12, nu, wp
    m[0] = mu_s
    m[1] = 0.0
    m[2] = 0.0
    m[3] = mu_u
    if kind == 0:
        return
    dx = px - _round(px)
    dy = py - _round(py)
    _frame_coords(par, dx, dy, &xs, &xu)
    r = par[I_R]
    if kind == 1 or kind == 2:
        lam = par[I_LAM]
        kb = par[I_KBUMP]
        ps = _phi(xs / r)
        pu = _phi(kb * xu / r)
        dps = _phi_deriv(xs / r) / r
        dpu = _phi_deriv(kb * xu / r) * (kb / r)
        m[2] = lam * dps * pu * xu
        m[3] = mu_u + lam * ps * (dpu * xu + pu)
        if kind == 2:
            _lift_g0(par, px, py, &fx, &fy)
            _g1_w(par, fx, fy, &w, &gs, &gu)
            sh = par[I_SHEAR]
            a11 = (1.0 + sh * gs) * m[0] + sh * gu * m[2]
            a12 = (1.0 + sh * gs) * m[1] + sh * gu * m[3]
            m[0] = a11
            m[1] = a12
        return
    nu = par[I_NU]
    _cu_w(par, xs, &w, &wp)
    pu = _phi(xu / r)
    dpu = _phi_deriv(xu / r) / r
    m[0] = mu_s + nu * wp * pu
    m[1] = nu * w * dpu


cdef inline void _frame_to_std(const double* par, const double* mf,
                               double* j) nogil:
    # J = P @ Mf @ Pinv
    cdef double p0 = par[I_P], p1 = par[I_P + 1], p2 = par[I_P + 2], p3 = par[I_P + 3]
    cdef double q0 = par[I_PINV], q1 = par[I_PINV + 1], q2 = par[I_PINV + 2], q3 = par[I_PINV + 3]
    cdef double t0 = p0 * mf[0] + p1 * mf[2]
    cdef double t1 = p0 * mf[1] + p1 * mf[3]
    cdef double t2 = p2 * mf[0] + p3 * mf[2]
    cdef double t3 = p2 * mf[1] + p3 * mf[3]
    j[0] = t0 * q0 + t1 * q2
    j[1] = t0 * q1 + t1 * q3
    j[2] = t2 * q0 + t3 * q2
    j[3] = t2 * q1 + t3 * q3


cdef void _delta_frame_one(const double* par, double px, double py,
                           double* ds, double* du) nogil:
    cdef int kind = <int> par[I_KIND]
    cdef double dx, dy, xs, xu, w, wp, fx, fy, gs, gu
    ds[0] = 0.0
    du[0] = 0.0
    if kind == 0:
        return
    if kind == 1 or kind == 2:
        du[0] = _g0_du(par, px, py)
        if kind == 2:
            _lift_g0(par, px, py, &fx, &fy)
            _g1_w(par, fx, fy, &w, &gs, &gu)
            ds[0] = par[I_SHEAR] * w
        return
    dx = px - _round(px)
    dy = py - _round(py)
    _frame_coords(par, dx, dy, &xs, &xu)
    _cu_w(par, xs, &w, &wp)
    ds[0] = par[I_NU] * w * _phi(xu / par[I_R])


cdef int _newton_one(const double* par, double tx, double ty,
                     double* ox, double* oy, double tol, int maxit,
                     int halvings) nogil:
    cdef double x = par[I_AINV] * tx + par[I_AINV + 1] * ty
    cdef double y = par[I_AINV + 2] * tx + par[I_AINV + 3] * ty
    cdef double fx, fy, rx, ry, rn, det, dx, dy, tx2, ty2, rtn, step
    cdef double mf[4]
    cdef double j[4]
    cdef int it, hv
    if (<int> par[I_KIND]) == 0:
        ox[0] = x
        oy[0] = y
        return 1
    _lift_one(par, x, y, &fx, &fy)
    rx = fx - tx
    ry = fy - ty
    rn = hypot(rx, ry)
    for it in range(maxit):
        if rn <= tol:
            ox[0] = x
            oy[0] = y
            return 1
        _deriv_frame_one(par, x, y, mf)
        _frame_to_std(par, mf, j)
        det = j[0] * j[3] - j[1] * j[2]
        dx = (j[3] * rx - j[1] * ry) / det
        dy = (-j[2] * rx + j[0] * ry) / det
        step = 1.0
        for hv in range(halvings + 1):
            tx2 = x - step * dx
            ty2 = y - step * dy
            _lift_one(par, tx2, ty2, &fx, &fy)
            rtn = hypot(fx - tx, fy - ty)
            if rtn <= rn or hv == halvings:
                break
            step *= 0.5
        x = tx2
        y = ty2
        rx = fx - tx
        ry = fy - ty
        rn = rtn
    if rn <= tol:
        ox[0] = x
        oy[0] = y
        return 1
    ox[0] = x
    oy[0] = y
    return 0


# ---------------------------------------------------------------------------
# batch entry points (signatures mirror _impl_py)


def lift(pack, pts):
    cdef double[::1] par = pack.params
    cdef double[:, ::1] p = np.ascontiguousarray(pts, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], i
    out = np.empty((n, 2))
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            _lift_one(&par[0], p[i, 0], p[i, 1], &o[i, 0], &o[i, 1])
    return out


def deriv_frame(pack, pts):
    cdef double[::1] par = pack.params
    cdef double[:, ::1] p = np.ascontiguousarray(pts, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], i
    out = np.empty((n, 4))
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            _deriv_frame_one(&par[0], p[i, 0], p[i, 1], &o[i, 0])
    return out


def deriv_std(pack, pts):
    cdef double[::1] par = pack.params
    cdef double[:, ::1] p = np.ascontiguousarray(pts, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], i
    cdef double mf[4]
    out = np.empty((n, 4))
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            _deriv_frame_one(&par[0], p[i, 0], p[i, 1], mf)
            _frame_to_std(&par[0], mf, &o[i, 0])
    return out


def delta_frame(pack, pts):
    cdef double[::1] par = pack.params
    cdef double[:, ::1] p = np.ascontiguousarray(pts, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], i
    ds = np.empty(n)
    du = np.empty(n)
    cdef double[::1] s = ds
    cdef double[::1] u = du
    with nogil:
        for i in range(n):
            _delta_frame_one(&par[0], p[i, 0], p[i, 1], &s[i], &u[i])
    return ds, du


def lift_g0_only(pack, pts):
    cdef double[::1] par = pack.params
    cdef double[:, ::1] p = np.ascontiguousarray(pts, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], i
    out = np.empty((n, 2))
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            _lift_g0(&par[0], p[i, 0], p[i, 1], &o[i, 0], &o[i, 1])
    return out


def newton_inverse(pack, targets, double tol=1e-12, int maxit=50, int halvings=8):
    cdef double[::1] par = pack.params
    cdef double[:, ::1] t = np.ascontiguousarray(targets, dtype=np.float64)
    cdef Py_ssize_t n = t.shape[0], i
    out = np.empty((n, 2))
    okv = np.empty(n, dtype=np.uint8)
    cdef double[:, ::1] o = out
    cdef unsigned char[::1] ok = okv
    with nogil:
        for i in range(n):
            ok[i] = <unsigned char> _newton_one(&par[0], t[i, 0], t[i, 1],
                                                &o[i, 0], &o[i, 1], tol, maxit,
                                                halvings)
    return out, okv.astype(bool)


cdef inline long _coset_idx(const long* uinv, long d1, long d2,
                            long nx, long ny) nogil:
    cdef long w0 = uinv[0] * nx + uinv[1] * ny
    cdef long w1 = uinv[2] * nx + uinv[3] * ny
    w0 = w0 % d1
    if w0 < 0:
        w0 += d1
    w1 = w1 % d2
    if w1 < 0:
        w1 += d2
    return w0 * d2 + w1


def h_series(pack, pts, int depth_s, int depth_u, offset=None, double tol=1e-13):
    cdef double[::1] par = pack.params
    cdef double[:, ::1] p = np.ascontiguousarray(pts, dtype=np.float64)
    cdef long[:, ::1] reps = np.ascontiguousarray(pack.reps, dtype=np.int64)
    cdef long[:, ::1] uinv = np.ascontiguousarray(pack.uinv, dtype=np.int64)
    cdef long[::1] diag = np.ascontiguousarray(pack.snf_diag, dtype=np.int64)
    cdef long[:, ::1] adj = np.ascontiguousarray(pack.adj_a, dtype=np.int64)
    cdef long det = pack.det_a
    cdef Py_ssize_t n = p.shape[0], i
    cdef int j, has_off = 0
    cdef long[:, ::1] off
    if offset is not None:
        off = np.broadcast_to(
            np.asarray(offset, dtype=np.int64), (n, 2)).copy()
        has_off = 1
    else:
        off = np.zeros((1, 2), dtype=np.int64)
    us = np.zeros(n)
    uu = np.zeros(n)
    cdef double[::1] s = us
    cdef double[::1] u = uu
    cdef double mu_s = par[I_MU_S], mu_u = par[I_MU_U]
    cdef double qx, qy, w, dsv, duv, fx, fy, zx, zy, zfx, zfy
    cdef long nx, ny, mx, my, idx
    cdef int fail = 0
    if depth_s > 72 and par[I_HAS_DS] != 0.0:
        raise ValueError("depth_s > 72 overflows the exact deck bookkeeping")
    with nogil:
        for i in range(n):
            if par[I_HAS_DU] != 0.0 and depth_u > 0:
                qx = p[i, 0] - floor(p[i, 0])
                qy = p[i, 1] - floor(p[i, 1])
                w = 1.0 / mu_u
                for j in range(depth_u):
                    # fused step: F(q) = A q + ds e_s + du e_u
                    _delta_frame_one(&par[0], qx, qy, &dsv, &duv)
                    u[i] += w * duv
                    w /= mu_u
                    fx = (par[I_A] * qx + par[I_A + 1] * qy
                          + dsv * par[I_P] + duv * par[I_P + 1])
                    fy = (par[I_A + 2] * qx + par[I_A + 3] * qy
                          + dsv * par[I_P + 2] + duv * par[I_P + 3])
                    qx = fx - floor(fx)
                    qy = fy - floor(fy)
            if par[I_HAS_DS] != 0.0 and depth_s > 0:
                qx = p[i, 0] - floor(p[i, 0])
                qy = p[i, 1] - floor(p[i, 1])
                nx = <long> floor(p[i, 0])
                ny = <long> floor(p[i, 1])
                if has_off:
                    nx += off[i, 0]
                    ny += off[i, 1]
                w = 1.0
                for j in range(depth_s):
                    idx = _coset_idx(&uinv[0, 0], diag[0], diag[1], nx, ny)
                    mx = (adj[0, 0] * (nx - reps[idx, 0])
                          + adj[0, 1] * (ny - reps[idx, 1])) / det
                    my = (adj[1, 0] * (nx - reps[idx, 0])
                          + adj[1, 1] * (ny - reps[idx, 1])) / det
                    if _newton_one(&par[0], qx + reps[idx, 0], qy + reps[idx, 1],
                                   &zx, &zy, tol, 50, 8) == 0:
                        fail = 1
                        break
                    zfx = floor(zx)
                    zfy = floor(zy)
                    qx = zx - zfx
                    qy = zy - zfy
                    nx = mx + (<long> zfx)
                    ny = my + (<long> zfy)
                    _delta_frame_one(&par[0], qx, qy, &dsv, &duv)
                    s[i] -= w * dsv
                    w *= mu_s
            if fail:
                break
    if fail:
        from ..errors import NewtonDivergence
        raise NewtonDivergence("lift inversion failed inside h_series")
    return us, uu


def e2_angles(pack, pts, branches, int tail=0, double seed_s=0.0,
              double seed_u=1.0, double tol=1e-12):
    cdef double[::1] par = pack.params
    p0 = np.ascontiguousarray(pts, dtype=np.float64)
    p0 = p0 - np.floor(p0)
    cdef double[:, ::1] p = p0
    cdef long[:, ::1] br = np.ascontiguousarray(branches, dtype=np.int64)
    cdef long[:, ::1] reps = np.ascontiguousarray(pack.reps, dtype=np.int64)
    cdef Py_ssize_t n = p.shape[0], nb = br.shape[0], i, b
    cdef int depth = br.shape[1], total = br.shape[1] + tail, j, d
    orbit_np = np.empty((total + 1, 2))
    cdef double[:, ::1] orbit = orbit_np
    out = np.empty((n, nb))
    cdef double[:, ::1] o = out
    cdef double vs, vu, nvs, nvu, norm, wx, wy, ang, zx, zy
    cdef double mf[4]
    cdef int fail = 0
    with nogil:
        for i in range(n):
            for b in range(nb):
                orbit[0, 0] = p[i, 0]
                orbit[0, 1] = p[i, 1]
                for j in range(total):
                    d = br[b, j] if j < depth else 0
                    if _newton_one(&par[0], orbit[j, 0] + reps[d, 0],
                                   orbit[j, 1] + reps[d, 1], &zx, &zy,
                                   tol, 50, 8) == 0:
                        fail = 1
                        break
                    orbit[j + 1, 0] = zx - floor(zx)
                    orbit[j + 1, 1] = zy - floor(zy)
                if fail:
                    break
                vs = seed_s
                vu = seed_u
                for j in range(total, 0, -1):
                    _deriv_frame_one(&par[0], orbit[j, 0], orbit[j, 1], mf)
                    nvs = mf[0] * vs + mf[1] * vu
                    nvu = mf[2] * vs + mf[3] * vu
                    norm = hypot(nvs, nvu)
                    vs = nvs / norm
                    vu = nvu / norm
                wx = par[I_P] * vs + par[I_P + 1] * vu
                wy = par[I_P + 2] * vs + par[I_P + 3] * vu
                ang = atan2(wy, wx)
                while ang < 0.0:
                    ang += PI
                while ang >= PI:
                    ang -= PI
                o[i, b] = ang
            if fail:
                break
    if fail:
        from ..errors import NewtonDivergence
        raise NewtonDivergence("lift inversion failed inside h_series")
    return out


def e1_angles(pack, pts, int depth, double seed_tilt=0.1):
    cdef double[::1] par = pack.params
    p0 = np.ascontiguousarray(pts, dtype=np.float64)
    p0 = p0 - np.floor(p0)
    cdef double[:, ::1] p = p0
    cdef Py_ssize_t n = p.shape[0], i
    cdef int j
    orbit_np = np.empty((depth + 1, 2))
    cdef double[:, ::1] orbit = orbit_np
    out = np.empty(n)
    cdef double[::1] o = out
    cdef double vs, vu, nvs, nvu, norm, det, wx, wy, ang, fx, fy
    cdef double mf[4]
    with nogil:
        for i in range(n):
            orbit[0, 0] = p[i, 0]
            orbit[0, 1] = p[i, 1]
            for j in range(depth):
                _lift_one(&par[0], orbit[j, 0], orbit[j, 1], &fx, &fy)
                orbit[j + 1, 0] = fx - floor(fx)
                orbit[j + 1, 1] = fy - floor(fy)
            vs = 1.0
            vu = seed_tilt
            for j in range(depth - 1, -1, -1):
                _deriv_frame_one(&par[0], orbit[j, 0], orbit[j, 1], mf)
                det = mf[0] * mf[3] - mf[1] * mf[2]
                nvs = (mf[3] * vs - mf[1] * vu) / det
                nvu = (-mf[2] * vs + mf[0] * vu) / det
                norm = hypot(nvs, nvu)
                vs = nvs / norm
                vu = nvu / norm
            wx = par[I_P] * vs + par[I_P + 1] * vu
            wy = par[I_P + 2] * vs + par[I_P + 3] * vu
            ang = atan2(wy, wx)
            while ang < 0.0:
                ang += PI
            while ang >= PI:
                ang -= PI
            o[i] = ang
    return out


cdef void _e1_dir(const double* par, double px, double py, int depth,
                  double refx, double refy, double* vx, double* vy,
                  double* orbit) nogil:
    """Oriented unit E1 direction at a cover point (orbit is scratch)."""
    cdef double qx = px - floor(px)
    cdef double qy = py - floor(py)
    cdef double fx, fy, vs, vu, nvs, nvu, norm, det, wx, wy
    cdef double mf[4]
    cdef int j
    orbit[0] = qx
    orbit[1] = qy
    for j in range(depth):
        _lift_one(par, orbit[2 * j], orbit[2 * j + 1], &fx, &fy)
        orbit[2 * j + 2] = fx - floor(fx)
        orbit[2 * j + 3] = fy - floor(fy)
    vs = 1.0
    vu = 0.1
    for j in range(depth - 1, -1, -1):
        _deriv_frame_one(par, orbit[2 * j], orbit[2 * j + 1], mf)
        det = mf[0] * mf[3] - mf[1] * mf[2]
        nvs = (mf[3] * vs - mf[1] * vu) / det
        nvu = (-mf[2] * vs + mf[0] * vu) / det
        norm = hypot(nvs, nvu)
        vs = nvs / norm
        vu = nvu / norm
    wx = par[I_P] * vs + par[I_P + 1] * vu
    wy = par[I_P + 2] * vs + par[I_P + 3] * vu
    if wx * refx + wy * refy < 0.0:
        wx = -wx
        wy = -wy
    vx[0] = wx
    vy[0] = wy


def e1_leaf_batch(pack, starts, int half_steps, double step, int depth):
    cdef double[::1] par = pack.params
    cdef double[:, ::1] st = np.ascontiguousarray(starts, dtype=np.float64)
    cdef Py_ssize_t n = st.shape[0], i
    cdef int k, sgn, idx
    out = np.empty((n, 2 * half_steps + 1, 2))
    cdef double[:, :, ::1] o = out
    scratch_np = np.empty(2 * (depth + 1))
    cdef double[::1] scratch = scratch_np
    cdef double px, py, rx, ry, k1x, k1y, k2x, k2y, k3x, k3y, k4x, k4y
    cdef double vx, vy, nv, e1x, e1y
    with nogil:
        for i in range(n):
            o[i, half_steps, 0] = st[i, 0]
            o[i, half_steps, 1] = st[i, 1]
            # orient like the angle convention of the numpy backend
            _e1_dir(&par[0], st[i, 0], st[i, 1], depth, 0.0, 1.0,
                    &e1x, &e1y, &scratch[0])
            if e1y == 0.0 and e1x < 0.0:
                e1x = -e1x
            for sgn in range(2):
                px = st[i, 0]
                py = st[i, 1]
                if sgn == 0:
                    rx = e1x
                    ry = e1y
                else:
                    rx = -e1x
                    ry = -e1y
                for k in range(1, half_steps + 1):
                    _e1_dir(&par[0], px, py, depth, rx, ry, &k1x, &k1y, &scratch[0])
                    _e1_dir(&par[0], px + 0.5 * step * k1x, py + 0.5 * step * k1y,
                            depth, k1x, k1y, &k2x, &k2y, &scratch[0])
                    _e1_dir(&par[0], px + 0.5 * step * k2x, py + 0.5 * step * k2y,
                            depth, k2x, k2y, &k3x, &k3y, &scratch[0])
                    _e1_dir(&par[0], px + step * k3x, py + step * k3y,
                            depth, k3x, k3y, &k4x, &k4y, &scratch[0])
                    vx = (k1x + 2.0 * k2x + 2.0 * k3x + k4x) / 6.0
                    vy = (k1y + 2.0 * k2y + 2.0 * k3y + k4y) / 6.0
                    nv = hypot(vx, vy)
                    px += step * vx / nv
                    py += step * vy / nv
                    idx = half_steps + k if sgn == 0 else half_steps - k
                    o[i, idx, 0] = px
                    o[i, idx, 1] = py
                    rx = k4x
                    ry = k4y
    return out


def pushforward_log_growth(pack, pts, angles, int nsteps):
    cdef double[::1] par = pack.params
    p0 = np.ascontiguousarray(pts, dtype=np.float64)
    p0 = p0 - np.floor(p0)
    cdef double[:, ::1] p = p0
    cdef double[::1] ang = np.ascontiguousarray(angles, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], i
    cdef int j
    acc = np.zeros(n)
    fin = np.empty(n)
    cdef double[::1] a = acc
    cdef double[::1] f = fin
    cdef double qx, qy, wx, wy, vs, vu, nvs, nvu, nx, ny, ox, oy, g, norm, fx, fy, an
    cdef double mf[4]
    with nogil:
        for i in range(n):
            qx = p[i, 0]
            qy = p[i, 1]
            wx = cos(ang[i])
            wy = sin(ang[i])
            vs = par[I_PINV] * wx + par[I_PINV + 1] * wy
            vu = par[I_PINV + 2] * wx + par[I_PINV + 3] * wy
            for j in range(nsteps):
                _deriv_frame_one(&par[0], qx, qy, mf)
                nvs = mf[0] * vs + mf[1] * vu
                nvu = mf[2] * vs + mf[3] * vu
                nx = par[I_P] * nvs + par[I_P + 1] * nvu
                ny = par[I_P + 2] * nvs + par[I_P + 3] * nvu
                ox = par[I_P] * vs + par[I_P + 1] * vu
                oy = par[I_P + 2] * vs + par[I_P + 3] * vu
                g = hypot(nx, ny) / hypot(ox, oy)
                a[i] += log(g)
                norm = hypot(nvs, nvu)
                vs = nvs / norm
                vu = nvu / norm
                _lift_one(&par[0], qx, qy, &fx, &fy)
                qx = fx - floor(fx)
                qy = fy - floor(fy)
            ox = par[I_P] * vs + par[I_P + 1] * vu
            oy = par[I_P + 2] * vs + par[I_P + 3] * vu
            an = atan2(oy, ox)
            while an < 0.0:
                an += PI
            while an >= PI:
                an -= PI
            a[i] /= nsteps
            f[i] = an
    return acc, fin


def monodromy_frame(pack, pts, int n_steps):
    cdef double[::1] par = pack.params
    p0 = np.ascontiguousarray(pts, dtype=np.float64)
    p0 = p0 - np.floor(p0)
    cdef double[:, ::1] p = p0
    cdef Py_ssize_t n = p.shape[0], i
    cdef int j
    out = np.empty((n, 4))
    cdef double[:, ::1] o = out
    cdef double qx, qy, a, b, c, d, fx, fy
    cdef double mf[4]
    with nogil:
        for i in range(n):
            qx = p[i, 0]
            qy = p[i, 1]
            o[i, 0] = 1.0
            o[i, 1] = 0.0
            o[i, 2] = 0.0
            o[i, 3] = 1.0
            for j in range(n_steps):
                _deriv_frame_one(&par[0], qx, qy, mf)
                a = mf[0] * o[i, 0] + mf[1] * o[i, 2]
                b = mf[0] * o[i, 1] + mf[1] * o[i, 3]
                c = mf[2] * o[i, 0] + mf[3] * o[i, 2]
                d = mf[2] * o[i, 1] + mf[3] * o[i, 3]
                o[i, 0] = a
                o[i, 1] = b
                o[i, 2] = c
                o[i, 3] = d
                _lift_one(&par[0], qx, qy, &fx, &fy)
                qx = fx - floor(fx)
                qy = fy - floor(fy)
    return out


def newton_periodic(pack, int n_steps, deck, seeds, double tol=1e-12,
                    int maxit=60, int halvings=8):
    cdef double[::1] par = pack.params
    cdef double[:, ::1] x0 = np.ascontiguousarray(seeds, dtype=np.float64)
    cdef Py_ssize_t n = x0.shape[0], i
    m0 = np.broadcast_to(
        np.atleast_2d(np.asarray(deck, dtype=np.float64)), (n, 2)).copy()
    cdef double[:, ::1] m = m0
    out = np.array(x0, dtype=np.float64)
    okv = np.zeros(n, dtype=np.uint8)
    res = np.full(n, np.inf)
    cdef double[:, ::1] o = out
    cdef unsigned char[::1] ok = okv
    cdef double[::1] r = res
    cdef double x, y, gx, gy, rn, det, dx, dy, step, tx, ty, gtx, gty, rtn
    cdef double jf[4]
    cdef double jt[4]
    cdef int it, hv
    with nogil:
        for i in range(n):
            x = o[i, 0]
            y = o[i, 1]
            _gval(&par[0], n_steps, x, y, m[i, 0], m[i, 1], &gx, &gy, jf)
            rn = hypot(gx, gy)
            for it in range(maxit):
                if rn <= tol:
                    ok[i] = 1
                    break
                det = jf[0] * jf[3] - jf[1] * jf[2]
                if fabs(det) < 1e-300:
                    break
                dx = (jf[3] * gx - jf[1] * gy) / det
                dy = (-jf[2] * gx + jf[0] * gy) / det
                step = 1.0
                for hv in range(halvings + 1):
                    tx = x - step * dx
                    ty = y - step * dy
                    _gval(&par[0], n_steps, tx, ty, m[i, 0], m[i, 1],
                          &gtx, &gty, jt)
                    rtn = hypot(gtx, gty)
                    if rtn <= rn or hv == halvings:
                        break
                    step *= 0.5
                x = tx
                y = ty
                gx = gtx
                gy = gty
                jf[0] = jt[0]
                jf[1] = jt[1]
                jf[2] = jt[2]
                jf[3] = jt[3]
                rn = rtn
            o[i, 0] = x
            o[i, 1] = y
            r[i] = rn
            if rn <= tol:
                ok[i] = 1
    return out, okv.astype(bool), res


cdef void _gval(const double* par, int n_steps, double x, double y,
                double mx, double my, double* gx, double* gy,
                double* jstd) nogil:
    cdef double qx = x, qy = y
    cdef double m0 = 1.0, m1 = 0.0, m2 = 0.0, m3 = 1.0
    cdef double a, b, c, d, fx, fy
    cdef double mf[4]
    cdef double prod[4]
    cdef int j
    for j in range(n_steps):
        _deriv_frame_one(par, qx, qy, mf)
        a = mf[0] * m0 + mf[1] * m2
        b = mf[0] * m1 + mf[1] * m3
        c = mf[2] * m0 + mf[3] * m2
        d = mf[2] * m1 + mf[3] * m3
        m0 = a
        m1 = b
        m2 = c
        m3 = d
        _lift_one(par, qx, qy, &fx, &fy)
        qx = fx
        qy = fy
    gx[0] = qx - x - mx
    gy[0] = qy - y - my
    prod[0] = m0
    prod[1] = m1
    prod[2] = m2
    prod[3] = m3
    _frame_to_std(par, prod, jstd)
    jstd[0] -= 1.0
    jstd[3] -= 1.0
