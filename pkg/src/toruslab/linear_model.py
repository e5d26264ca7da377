"""Integer-matrix linearizations: spectra, preimage lattices, linear foliations.

The linearization A acts on T^2 = R^2/Z^2; hyperbolicity is classified from the
characteristic polynomial, coset representatives of Z^2/A^k Z^2 come from the
Smith normal form, and the preimage-density estimate is measured against a
finite torus grid.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import Degenerate, Expanding, NonHyperbolic
from .torus_core import direction_from_vector, direction_unit, project


@dataclass(frozen=True)
class IntMatrix2:
    """Row-major integer 2x2 matrix [[a, b], [c, d]] with nonzero determinant."""

    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        if self.det == 0:
            raise ValueError("singular integer matrix")

    @property
    def det(self):
        return self.a * self.d - self.b * self.c

    @property
    def trace(self):
        return self.a + self.d

    def as_array(self):
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=float)

    def as_int_array(self):
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=np.int64)

    @staticmethod
    def from_rows(rows):
        (a, b), (c, d) = rows
        return IntMatrix2(int(a), int(b), int(c), int(d))


@dataclass(frozen=True)
class SpectralData:
    """Eigendata of a hyperbolic (non-expanding) linearization."""

    mu_s: float
    mu_u: float
    e_s: float  # direction angle in [0, pi)
    e_u: float
    det: int
    degree: int
    matrix: IntMatrix2

    @property
    def e_s_vec(self):
        return direction_unit(self.e_s)

    @property
    def e_u_vec(self):
        return direction_unit(self.e_u)

    def frame(self):
        """Column matrix P = [e_s | e_u] and its inverse."""
        p = np.column_stack([self.e_s_vec, self.e_u_vec])
        return p, np.linalg.inv(p)


def _eigvec_for(mat, lam):
    """Integer-friendly eigenvector of a 2x2 matrix for eigenvalue lam."""
    a, b, c, d = mat.a, mat.b, mat.c, mat.d
    # rows of (A - lam I) are orthogonal to the eigenvector
    r1 = np.array([a - lam, b])
    r2 = np.array([c, d - lam])
    r = r1 if np.dot(r1, r1) >= np.dot(r2, r2) else r2
    v = np.array([-r[1], r[0]])
    # normalize with first nonzero coordinate positive
    if abs(v[0]) > 1e-14:
        v = v * math.copysign(1.0, v[0])
    else:
        v = v * math.copysign(1.0, v[1])
    return v / np.hypot(v[0], v[1])


def classify(mat):
    """Spectral data of a hyperbolic linearization.

    Raises NonHyperbolic when an eigenvalue has modulus one or the pair is
    complex, and Expanding when no stable direction exists.
    """
    if not isinstance(mat, IntMatrix2):
        mat = IntMatrix2.from_rows(mat)
    t, d = mat.trace, mat.det
    disc = t * t - 4 * d
    if disc < 0:
        # complex pair of modulus |det|^(1/2): no real directions at all
        if abs(d) == 1:
            raise NonHyperbolic(f"complex pair of modulus one: trace {t}, det {d}")
        raise Expanding(f"complex expanding pair: trace {t}, det {d}")
    if disc == 0:
        lam = 0.5 * t
        if abs(lam) <= 1:
            raise NonHyperbolic(f"double eigenvalue {lam}")
        raise Expanding(f"double eigenvalue {lam}")
    sq = math.sqrt(float(disc))
    l1 = 0.5 * (t - sq)
    l2 = 0.5 * (t + sq)
    mods = sorted([abs(l1), abs(l2)])
    if any(abs(m - 1.0) < 1e-12 for m in mods):
        raise NonHyperbolic(f"eigenvalue of modulus one: {l1}, {l2}")
    if mods[0] > 1.0:
        raise Expanding(f"both eigenvalue moduli exceed one: {l1}, {l2}")
    if abs(l1) < 1.0:
        mu_s, mu_u = l1, l2
    else:
        mu_s, mu_u = l2, l1
    e_s = direction_from_vector(_eigvec_for(mat, mu_s))
    e_u = direction_from_vector(_eigvec_for(mat, mu_u))
    return SpectralData(mu_s=mu_s, mu_u=mu_u, e_s=e_s, e_u=e_u,
                        det=d, degree=abs(d), matrix=mat)


def smith_normal_form(m):
    """Smith decomposition M = U S V of an integer 2x2 matrix.

    Returns (U, S, V) as int64 arrays with U, V unimodular and
    S = diag(d1, d2) with d1, d2 >= 0 and d1 | d2.
    """
    s = np.array(m, dtype=np.int64).copy()
    u = np.eye(2, dtype=np.int64)
    v = np.eye(2, dtype=np.int64)
    # invariant throughout: U @ S @ V == M

    def row_sub(q):  # row1 -= q*row0, so U gains +q in (0,1)... tracked via U @ E^-1
        s[1, :] -= q * s[0, :]
        u[:, 0] += q * u[:, 1]

    def col_sub(q):  # col1 -= q*col0
        s[:, 1] -= q * s[:, 0]
        v[0, :] += q * v[1, :]

    def row_swap():
        s[[0, 1], :] = s[[1, 0], :]
        u[:, [0, 1]] = u[:, [1, 0]]

    def col_swap():
        s[:, [0, 1]] = s[:, [1, 0]]
        v[[0, 1], :] = v[[1, 0], :]

    while True:
        # bring a nonzero entry of least modulus to (0, 0)
        nz = [(abs(s[i, j]), i, j) for i in range(2) for j in range(2) if s[i, j] != 0]
        _, i, j = min(nz)
        if i == 1:
            row_swap()
        if j == 1:
            col_swap()
        if s[1, 0] % s[0, 0] != 0:
            row_sub(s[1, 0] // s[0, 0])
            continue
        if s[0, 1] % s[0, 0] != 0:
            col_sub(s[0, 1] // s[0, 0])
            continue
        row_sub(s[1, 0] // s[0, 0])
        col_sub(s[0, 1] // s[0, 0])
        if s[1, 1] % s[0, 0] != 0:
            s[:, 0] += s[:, 1]
            v[1, :] -= v[0, :]
            continue
        break
    if s[0, 0] < 0:
        s[0, :] *= -1
        u[:, 0] *= -1
    if s[1, 1] < 0:
        s[1, :] *= -1
        u[:, 1] *= -1
    return u, s, v


def coset_reps(m):
    """Canonical representatives of Z^2 / M Z^2 for an integer matrix M.

    Exactly |det M| representatives, computed as U (i, j) over the Smith box.
    """
    u, s, _ = smith_normal_form(m)
    d1, d2 = int(s[0, 0]), int(s[1, 1])
    reps = []
    for i in range(abs(d1)):
        for j in range(abs(d2)):
            reps.append(u @ np.array([i, j], dtype=np.int64))
    return np.array(reps, dtype=np.int64)


def coset_index_map(m):
    """Return (fn, reps) where fn maps an integer vector to its coset index."""
    u, s, _ = smith_normal_form(m)
    d1, d2 = abs(int(s[0, 0])), abs(int(s[1, 1]))
    uinv = np.array([[u[1, 1], -u[0, 1]], [-u[1, 0], u[0, 0]]], dtype=np.int64)
    det_u = int(round(np.linalg.det(u)))
    uinv = uinv * det_u  # unimodular: inverse = sign * adjugate
    reps = coset_reps(m)

    def index_of(n):
        w = uinv @ np.asarray(n, dtype=np.int64)
        return int((w[0] % d1) * d2 + (w[1] % d2))

    return index_of, reps


def mat_power(mat, k):
    m = np.eye(2, dtype=np.int64)
    a = mat.as_int_array() if isinstance(mat, IntMatrix2) else np.array(mat, dtype=np.int64)
    for _ in range(k):
        m = m @ a
    return m


def torus_preimages_linear(mat, x, k):
    """All degree^k solutions of A^k y = x on the torus.

    Enumerated as A^{-k}(x + n) over coset representatives n of Z^2/A^k Z^2.
    """
    if not isinstance(mat, IntMatrix2):
        mat = IntMatrix2.from_rows(mat)
    ak = mat_power(mat, k)
    reps = coset_reps(ak)
    akinv = np.linalg.inv(ak.astype(float))
    x = project(x)
    pts = (akinv @ (x[None, :] + reps.astype(float)).T).T
    return project(pts)


def covering_radius(points, grid_n):
    """Max over a grid_n x grid_n torus grid of the distance to ``points``."""
    pts = project(np.asarray(points, dtype=float))
    g = np.arange(grid_n) / grid_n
    eps = 0.0
    # chunk grid rows; min-distance via wrapped differences
    for gx in g:
        dx = pts[:, 0] - gx
        dx -= np.round(dx)
        dy = pts[:, 1][:, None] - g[None, :]
        dy -= np.round(dy)
        d2 = dx[:, None] ** 2 + dy ** 2
        eps = max(eps, float(np.sqrt(np.max(np.min(d2, axis=0)))))
    return eps


def preimage_density(mat, x, k_max, grid_n=400):
    """Covering radii eps_k of the k-preimage sets P_k(x), k = 0..k_max."""
    if not isinstance(mat, IntMatrix2):
        mat = IntMatrix2.from_rows(mat)
    out = []
    for k in range(k_max + 1):
        pts = torus_preimages_linear(mat, x, k)
        out.append((k, covering_radius(pts, grid_n)))
    return out


def fit_decay_slope(pairs, k_lo, k_hi):
    """Least-squares slope of log eps_k against k over k in [k_lo, k_hi]."""
    ks = np.array([k for k, e in pairs if k_lo <= k <= k_hi and e > 0.0], dtype=float)
    es = np.array([e for k, e in pairs if k_lo <= k <= k_hi and e > 0.0], dtype=float)
    if ks.size < 2:
        return -math.inf
    slope, _ = np.polyfit(ks, np.log(es), 1)
    return float(slope)


def fixed_point_count(mat, n):
    """|det(A^n - I)|, the number of n-periodic points of A on the torus."""
    if not isinstance(mat, IntMatrix2):
        mat = IntMatrix2.from_rows(mat)
    m = mat_power(mat, n) - np.eye(2, dtype=np.int64)
    det = int(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])
    if det == 0:
        raise Degenerate(f"det(A^{n} - I) = 0")
    return abs(det)


def linear_leaf(spec, x, sigma, t):
    """Point at signed arclength t along the sigma in {'s','u'} eigenline at x."""
    e = spec.e_s_vec if sigma == "s" else spec.e_u_vec
    return np.asarray(x, dtype=float) + t * e


def leaf_density_probe(spec, x, sigma, k, window, grid_n, budget=8):
    """Max grid distance to the union of A^k Z^2-translates of the sigma-leaf.

    ``budget`` bounds the lattice enumeration: translates n = A^k m over
    integer m with |m|_inf <= budget.
    """
    e = spec.e_s_vec if sigma == "s" else spec.e_u_vec
    perp = np.array([-e[1], e[0]])
    ak = mat_power(spec.matrix, k).astype(float)
    rng = np.arange(-budget, budget + 1)
    ms = np.stack(np.meshgrid(rng, rng, indexing="ij"), axis=-1).reshape(-1, 2).astype(float)
    anchors = np.asarray(x, dtype=float)[None, :] + ms @ ak.T
    g = np.linspace(-window, window, grid_n)
    gx, gy = np.meshgrid(g, g, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=-1)
    # distance from each grid point to nearest line: |(p - anchor) . perp|
    d = np.abs((pts[:, None, :] - anchors[None, :, :]) @ perp)
    return float(np.max(np.min(d, axis=1)))
