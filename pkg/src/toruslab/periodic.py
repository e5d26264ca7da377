"""Periodic points over deck classes, Lyapunov exponents and rigidity reports.

Periodic points of f with period n correspond to lifted solutions of
F^n(x) = x + m over deck classes m; Newton runs per class from seed grids,
solutions are deduplicated into orbit cycles, and exponents come from the
eigenvalues of the frame-coordinate monodromy (exactly triangular for the
Mane-type models, which is what makes the stable exponent rigid).
"""
import csv
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import BudgetTooSmall
from .linear_model import mat_power
from .torus_core import project, torus_dist_batch

K = _kernels.impl


@dataclass
class PeriodicOrbit:
    period: int
    deck_class: tuple
    point: np.ndarray          # lexicographically smallest cycle point
    points: np.ndarray         # the full cycle, period rows
    monodromy: np.ndarray      # frame-coordinate DF^period at ``point``
    lambda_small: float
    lambda_big: float
    residual: float
    complex_pair: bool = False


@dataclass
class RigidityReport:
    model_label: str
    target: float
    rows: list  # (orbit, in_lambda, lambda_small, deviation)

    def max_deviation(self, in_lambda_only=True):
        devs = [r[3] for r in self.rows if r[1] or not in_lambda_only]
        return max(devs) if devs else 0.0

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["period", "deck_m1", "deck_m2", "x", "y", "in_lambda",
                        "lambda_small", "lambda_big", "deviation", "residual"])
            for orbit, memb, lam, dev in self.rows:
                w.writerow([orbit.period, orbit.deck_class[0], orbit.deck_class[1],
                            f"{orbit.point[0]:.15g}", f"{orbit.point[1]:.15g}",
                            int(memb), f"{lam:.15g}", f"{orbit.lambda_big:.15g}",
                            f"{dev:.3e}", f"{orbit.residual:.3e}"])


def _orbit_cycle(model, x, n):
    pts = [project(x)]
    for _ in range(n - 1):
        pts.append(project(model.lift(pts[-1])))
    return np.array(pts)


def _minimal_period(model, x, n, tol=1e-8):
    for d in range(1, n + 1):
        if n % d:
            continue
        y = x
        for _ in range(d):
            y = project(model.lift(y))
        dd = y - project(x)
        dd -= np.round(dd)
        if float(np.hypot(*dd)) < tol:
            return d
    return n


def _make_orbit(model, x, n, residual):
    period = _minimal_period(model, x, n)
    cycle = _orbit_cycle(model, x, period)
    order = np.lexsort((cycle[:, 1].round(9), cycle[:, 0].round(9)))
    base = cycle[order[0]]
    cycle = _orbit_cycle(model, base, period)
    lifted = base.astype(float)
    for _ in range(period):
        lifted = model.lift(lifted)
    deck = tuple(int(v) for v in np.round(lifted - base))
    mono = K.monodromy_frame(model.pack, base[None, :], period)[0].reshape(2, 2)
    lam_small, lam_big, cplx = _exponents(mono, period)
    return PeriodicOrbit(period=period, deck_class=deck, point=base,
                         points=cycle, monodromy=mono, lambda_small=lam_small,
                         lambda_big=lam_big, residual=residual,
                         complex_pair=cplx)


def _exponents(mono, period):
    tr = mono[0, 0] + mono[1, 1]
    det = mono[0, 0] * mono[1, 1] - mono[0, 1] * mono[1, 0]
    disc = tr * tr - 4.0 * det
    if disc < 0.0:
        half = 0.5 * math.log(abs(det)) / period
        return half, half, True
    sq = math.sqrt(disc)
    l1, l2 = 0.5 * (tr - sq), 0.5 * (tr + sq)
    mods = sorted([abs(l1), abs(l2)])
    lo = math.log(mods[0]) / period if mods[0] > 0 else -math.inf
    hi = math.log(mods[1]) / period
    return lo, hi, False


def _dedupe(model, sols, n, residuals, dedupe_tol=1e-8):
    """Group period-n solutions into orbit cycles keyed by their least point."""
    orbits = []
    taken = np.zeros(len(sols), dtype=bool)
    reps = []
    for i in np.argsort(residuals):
        if taken[i]:
            continue
        x = project(sols[i])
        close = torus_dist_batch(np.array(reps), x) if reps else np.array([])
        if len(close) and np.min(close) < dedupe_tol:
            taken[i] = True
            continue
        orb = _make_orbit(model, x, n, residuals[i])
        dup = False
        for r in reps:
            if np.min(torus_dist_batch(orb.points, r)) < dedupe_tol:
                dup = True
                break
        if dup:
            continue
        reps.extend(orb.points)
        orbits.append(orb)
    return orbits


def find_periodic(model, n, deck, seeds=None, seed_grid=64, tol=1e-11,
                  dedupe_tol=1e-8):
    """Solutions of F^n(x) = x + deck from a seed grid, as orbit cycles.

    Divergent seeds are discarded; solutions are deduplicated at dedupe_tol
    and must have residual below 1e-10.
    """
    if seeds is None:
        g = (np.arange(seed_grid) + 0.5) / seed_grid
        gx, gy = np.meshgrid(g, g, indexing="ij")
        seeds = np.column_stack([gx.ravel(), gy.ravel()])
        an = mat_power(model.spec.matrix, n).astype(float) - np.eye(2)
        if abs(np.linalg.det(an)) > 1e-9:
            seeds = np.vstack([seeds, np.linalg.solve(an, np.asarray(deck, dtype=float))[None, :]])
    sol, ok, res = K.newton_periodic(model.pack, n, np.asarray(deck, dtype=float),
                                     np.asarray(seeds, dtype=float), tol=tol)
    good = ok & (res < 1e-10)
    if not np.any(good):
        return []
    sols = sol[good]
    # keep solutions whose base point lies in this deck class's domain
    want = np.asarray(deck, dtype=float)
    lifted = sols.copy()
    for _ in range(n):
        lifted = K.lift(model.pack, lifted)
    m = np.round(lifted - sols)
    keep = (np.abs(m[:, 0] - want[0]) < 0.5) & (np.abs(m[:, 1] - want[1]) < 0.5)
    if not np.any(keep):
        return []
    return _dedupe(model, sols[keep], n, res[good][keep], dedupe_tol)


def support_seed_points(model, n_s=48, n_u=12, scale=0.3):
    """Seed grid covering the perturbation strip in eigen-frame coordinates.

    The extra periodic points of the Mane models (the saddle pair and their
    continuations) live inside the strip, far below uniform-grid resolution.
    """
    from ._kernels.pack import I_KBUMP, I_R

    spec = model.spec
    r = model.pack.params[I_R]
    kb = max(model.pack.params[I_KBUMP], 1.0)
    gs = np.linspace(-scale * r, scale * r, n_s)
    gu = np.linspace(-scale * r / kb, scale * r / kb, n_u)
    xs, xu = np.meshgrid(gs, gu, indexing="ij")
    return xs.ravel()[:, None] * spec.e_s_vec + xu.ravel()[:, None] * spec.e_u_vec


def _deck_classes(model, n, inflate=0.5):
    """All deck classes m whose A-linear solution lies in the inflated domain."""
    an = mat_power(model.spec.matrix, n).astype(float) - np.eye(2)
    corners = np.array([[-inflate, -inflate], [-inflate, 1 + inflate],
                        [1 + inflate, -inflate], [1 + inflate, 1 + inflate]])
    img = corners @ an.T
    lo = np.floor(img.min(axis=0)).astype(np.int64)
    hi = np.ceil(img.max(axis=0)).astype(np.int64)
    aninv = np.linalg.inv(an)
    decks = []
    sols = []
    m2 = np.arange(lo[1], hi[1] + 1, dtype=np.int64)
    for m1 in range(int(lo[0]), int(hi[0]) + 1):
        z1 = aninv[0, 0] * m1 + aninv[0, 1] * m2
        z2 = aninv[1, 0] * m1 + aninv[1, 1] * m2
        keep = ((z1 >= -inflate) & (z1 <= 1 + inflate)
                & (z2 >= -inflate) & (z2 <= 1 + inflate))
        if np.any(keep):
            decks.append(np.column_stack([np.full(np.sum(keep), m1), m2[keep]]))
            sols.append(np.column_stack([z1[keep], z2[keep]]))
    if not decks:
        return np.zeros((0, 2)), np.zeros((0, 2))
    return np.vstack(decks).astype(float), np.vstack(sols)


def enumerate_periodic(model, n, inflate=0.5, jitter=1e-3, support_grid=(48, 12),
                       tol=1e-11, dedupe_tol=1e-8):
    """All period-n points: linear-seed phase plus support-strip seeds.

    Phase 1 Newtons from the A-linear solution of every admissible deck class
    (with a small jitter cloud); phase 2 seeds the perturbation strip, where
    solutions born off the linear model live. Raises BudgetTooSmall when a
    solution lands at the inflated-domain edge.
    """
    class_decks, class_sols = _deck_classes(model, n, inflate)
    offs = np.array([[0.0, 0.0], [jitter, 0.0], [-jitter, 0.0],
                     [0.0, jitter], [0.0, -jitter]])
    seeds = (class_sols[:, None, :] + offs[None, :, :]).reshape(-1, 2)
    decks = np.repeat(class_decks, len(offs), axis=0)
    sol, ok, res = K.newton_periodic(model.pack, n, decks, seeds, tol=tol)
    sols = [sol[ok & (res < 1e-10)]]
    ress = [res[ok & (res < 1e-10)]]
    if model.kind != 0:
        pts = support_seed_points(model, *support_grid)
        lifted = pts.copy()
        for _ in range(n):
            lifted = K.lift(model.pack, lifted)
        m2 = np.round(lifted - pts)
        sol2, ok2, res2 = K.newton_periodic(model.pack, n, m2, pts, tol=tol)
        good2 = ok2 & (res2 < 1e-10)
        sols.append(sol2[good2])
        ress.append(res2[good2])
    allsol = np.vstack(sols)
    allres = np.concatenate(ress)
    inside = np.all((allsol > -inflate + 1e-9) & (allsol < 1 + inflate - 1e-9), axis=1)
    edge = np.any((np.abs(allsol + inflate) < 1e-6)
                  | (np.abs(allsol - 1 - inflate) < 1e-6), axis=1)
    if np.any(edge):
        raise BudgetTooSmall("periodic solution at the deck-budget boundary")
    orbits = _dedupe(model, allsol[inside], n, allres[inside], dedupe_tol)
    return orbits


def count_points(orbits, n):
    """Number of distinct points with f^n(x) = x among the found orbits."""
    return sum(o.period for o in orbits if n % o.period == 0)


def lyapunov_at_orbit(model, orbit):
    """Exponent pair of the orbit monodromy (recomputed at the base point)."""
    mono = K.monodromy_frame(model.pack, orbit.point[None, :], orbit.period)[0]
    lo, hi, cplx = _exponents(mono.reshape(2, 2), orbit.period)
    return lo, hi


def rigidity_report(model, spec, orbits, membership_fn):
    """Deviation table |lambda_small - log|mu_s(A)|| with membership flags."""
    target = math.log(abs(spec.mu_s))
    rows = []
    for orbit in orbits:
        memb = bool(membership_fn(orbit.point))
        dev = abs(orbit.lambda_small - target)
        rows.append((orbit, memb, orbit.lambda_small, dev))
    rows.sort(key=lambda r: r[3])
    return RigidityReport(model_label=model.label, target=target, rows=rows)


def finite_time_center_exponent(model, x, nsteps, which="E2"):
    """(1/N) sum of log |DF| along the transported bundle direction at x."""
    from .hyperbolicity import bundle_E1, bundle_E2

    x = project(x)
    if which == "E2":
        ang = model.spec.e_u if model.invariant_u_line else bundle_E2(model, x, [0])
    else:
        ang = model.spec.e_s if model.kind == 0 else bundle_E1(model, x)
    val, _ = K.pushforward_log_growth(model.pack, x[None, :],
                                      np.array([ang]), nsteps)
    return float(val[0])
