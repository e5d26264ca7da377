"""Conservative circle pair and the T^3 = T^2 x S^1 example built from it.

The degree-2 circle map Psi agrees with T(x) = 2x outside two windows around
0 and 1/2; inside, the branches are reshaped by phi_1 and phi_2 so that the
reciprocals of the branch derivatives sum to one at every point (Lebesgue
invariance). The implicit slope equation for phi_2 integrates in closed form:
phi_2^{-1}(y) = 2 y - phi_1^{-1}(y).
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .bump import smoothstep
from .errors import IntegrationFailure
from .linear_model import IntMatrix2, classify
from .torus_core import project

U_EDGE = 1.0 / 6.0
PHI1_SLOPE0 = 1.2


def _phi1_raw(x):
    """Odd quintic through (0,0) slope 1.2 and (1/6, 1/6) slope 1; Id outside."""
    if abs(x) >= U_EDGE:
        return x
    return 1.2 * x - 14.4 * x ** 3 + 259.2 * x ** 5


def _phi1_raw_prime(x):
    if abs(x) >= U_EDGE:
        return 1.0
    return 1.2 - 43.2 * x * x + 1296.0 * x ** 4


class _Profile:
    """A monotone reshaping x -> x + w*(phi1_raw(x) - x) of [-1/6, 1/6]."""

    def __init__(self, weight=1.0):
        self.w = weight

    def __call__(self, x):
        return x + self.w * (_phi1_raw(x) - x)

    def prime(self, x):
        return 1.0 + self.w * (_phi1_raw_prime(x) - 1.0)

    def inverse(self, y, tol=1e-14):
        if abs(y) >= U_EDGE:
            return y
        x = y
        for _ in range(60):
            r = self(x) - y
            if abs(r) < tol:
                break
            x -= r / self.prime(x)
        return x

    def inv_prime(self, y):
        return 1.0 / self.prime(self.inverse(y))


class _Phi2:
    """phi_2 determined by the conservativity identity: phi2^{-1} = 2y - phi1^{-1}."""

    def __init__(self, phi1):
        self.phi1 = phi1
        # the slope equation needs 2 - (phi1^{-1})' > 0, i.e. phi1' > 1/2
        xs = np.linspace(-U_EDGE, U_EDGE, 2001)
        mn = min(phi1.prime(float(x)) for x in xs)
        if mn <= 0.5:
            raise IntegrationFailure(f"phi1 slope {mn} <= 1/2 breaks dx/dy > 0")

    def inverse(self, y):
        if abs(y) >= U_EDGE:
            return y
        return 2.0 * y - self.phi1.inverse(y)

    def __call__(self, x, tol=1e-14):
        if abs(x) >= U_EDGE:
            return x
        y = x
        for _ in range(60):
            r = self.inverse(y) - x
            if abs(r) < tol:
                break
            y -= r / (2.0 - self.phi1.inv_prime(y))
        return y

    def prime(self, x):
        y = self(x)
        return 1.0 / (2.0 - self.phi1.inv_prime(y))


@dataclass
class CirclePair:
    """phi_1, phi_2 and the induced degree-2 conservative circle map Psi."""

    phi1: object
    phi2: object

    def lift(self, x):
        """Strictly increasing lift with Psi(x + 1) = Psi(x) + 2."""
        n = math.floor(x + 0.25)
        xr = x - n  # in [-1/4, 3/4)
        if abs(xr) < 0.125:
            v = self.phi1(2.0 * xr)
        elif abs(xr - 0.5) < 0.125:
            v = self.phi2(2.0 * xr - 1.0) + 1.0
        else:
            v = 2.0 * xr
        return v + 2.0 * n

    def __call__(self, x):
        return self.lift(x) % 1.0

    def prime(self, x):
        xr = x - math.floor(x + 0.25)
        if abs(xr) < 0.125:
            return 2.0 * self.phi1.prime(2.0 * xr)
        if abs(xr - 0.5) < 0.125:
            return 2.0 * self.phi2.prime(2.0 * xr - 1.0)
        return 2.0

    def _lift_inverse(self, c, tol=1e-14):
        lo, hi = -0.25, 0.75
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if self.lift(mid) < c:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def preimages(self, c):
        """The two circle preimages of c in [0, 1)."""
        cw = c - math.floor(c + 0.5)  # wrap to [-1/2, 1/2)
        return sorted(( self._lift_inverse(cw) % 1.0,
                        self._lift_inverse(cw + 1.0) % 1.0))

    def conservativity_residual(self, samples=10000, seed=0):
        rng = np.random.default_rng(seed)
        worst = 0.0
        for c in rng.random(samples):
            a, b = self.preimages(c)
            worst = max(worst, abs(1.0 / self.prime(a) + 1.0 / self.prime(b) - 1.0))
        return worst


def build_circle_pair(weight=1.0):
    """The conservative pair (phi_1, phi_2, Psi); weight < 1 fades phi_1 to Id."""
    phi1 = _Profile(weight)
    phi2 = _Phi2(phi1)
    return CirclePair(phi1=phi1, phi2=phi2)


# ---------------------------------------------------------------------------
# the T^3 example


@dataclass
class Map3Model:
    """Phi(z, t) = (B z, Psi_z(t)) on T^3 with per-fiber conservative pairs."""

    mat: IntMatrix2
    fade_radius: float = 0.3
    fade_plateau: float = 0.3
    label: str = "t3"
    _cache: dict = field(default_factory=dict)

    def fade(self, z):
        """Radial weight: 1 near the fixed point, 0 outside V_0."""
        d = np.asarray(project(z), dtype=float)
        d = d - np.round(d)
        rho = float(np.hypot(*d)) / self.fade_radius
        return smoothstep((1.0 - rho) / (1.0 - self.fade_plateau))

    def fiber_pair(self, z):
        w = self.fade(z)
        key = round(w, 14)
        if key not in self._cache:
            self._cache[key] = build_circle_pair(weight=w)
        return self._cache[key]

    def eval(self, z, t):
        z = np.asarray(z, dtype=float)
        bz = self.mat.as_array() @ z
        pair = self.fiber_pair(z)
        return project(bz), pair(float(t))

    def lift_t(self, z, t):
        return self.fiber_pair(z).lift(float(t))

    def deriv(self, z, t, h=1e-6):
        """3x3 block-triangular Jacobian at (z, t); z-derivatives of the fiber
        map by central differences."""
        z = np.asarray(z, dtype=float)
        j = np.zeros((3, 3))
        j[:2, :2] = self.mat.as_array()
        pair = self.fiber_pair(z)
        j[2, 2] = pair.prime(float(t))
        for i in range(2):
            zp = z.copy()
            zm = z.copy()
            zp[i] += h
            zm[i] -= h
            j[2, i] = (self.lift_t(zp, t) - self.lift_t(zm, t)) / (2.0 * h)
        return j

    def jacobian(self, z, t):
        return abs(self.mat.det) * self.fiber_pair(z).prime(float(t))

    def preimages(self, z, t):
        """The |det B| * 2 preimages of (z, t)."""
        from .linear_model import torus_preimages_linear

        zs = torus_preimages_linear(self.mat, project(z), 1)
        out = []
        for w in zs:
            pair = self.fiber_pair(w)
            for s in pair.preimages(float(t) % 1.0):
                out.append((w, s))
        return out

    def conservativity_defect(self, samples=200, seed=0):
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(samples):
            z = rng.random(2)
            t = float(rng.random())
            total = sum(1.0 / self.jacobian(w, s) for w, s in self.preimages(z, t))
            worst = max(worst, abs(total - 1.0))
        return worst


def build_t3_example(mat=None, fade_radius=0.3):
    """The conservative Anosov endomorphism of T^3 without Jacobian rigidity."""
    mat = IntMatrix2.from_rows(mat) if isinstance(mat, (list, tuple)) else \
        (mat or IntMatrix2(3, 1, 1, 1))
    spec = classify(mat)  # must be hyperbolic (special Anosov linearization)
    if abs(spec.mu_s) >= 1.0:
        raise ValueError("base matrix must have a contracting direction")
    # B must be injective on V_0: the shortest nonzero vector of B^{-1} Z^2
    binv = np.linalg.inv(mat.as_array())
    shortest = min(float(np.hypot(*(binv @ np.array([i, j], dtype=float))))
                   for i in range(-2, 3) for j in range(-2, 3) if (i, j) != (0, 0))
    if 2.0 * fade_radius >= shortest:
        raise ValueError(f"fade radius {fade_radius} too large for injectivity "
                         f"(needs diameter < {shortest})")
    return Map3Model(mat=mat, fade_radius=fade_radius)
