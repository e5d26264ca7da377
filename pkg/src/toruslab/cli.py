"""Command-line laboratory: build models from JSON configs and run check suites.

Subcommands: ``spectrum`` (classify an integer matrix), ``verify`` (run a
check suite against a model config, emitting report.json and per-check CSVs)
and ``report-merge`` (combine verify reports). Exit codes: 0 success,
1 config error, 2 not hyperbolic, 3 expanding, 4 check failure.
"""
import argparse
import csv
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__, _kernels
from .errors import Expanding, NonHyperbolic, ToruslabError, VersionMismatch
from .linear_model import (IntMatrix2, classify, fit_decay_slope,
                           fixed_point_count, preimage_density)

KNOWN_CHECKS = ("ph-classify", "special-test", "periodic", "rigidity",
                "semiconj", "lambda-atlas", "conservativity", "density")

DEFAULT_SUITES = {
    "linear": ["ph-classify", "special-test", "periodic", "rigidity",
               "semiconj", "density", "conservativity"],
    "mane_sc": ["ph-classify", "special-test", "periodic", "rigidity",
                "semiconj", "lambda-atlas", "conservativity"],
    "nonspecial": ["ph-classify", "special-test", "semiconj"],
    "mane_cu": ["ph-classify", "special-test"],
    "t3": ["conservativity"],
}

EXPECTED_CLASS = {0: "anosov", 1: "sc", 2: "sc", 3: "cu"}


def _load_config(path, overrides):
    with open(path) as fh:
        cfg = json.load(fh)
    cfg.setdefault("model", "linear")
    cfg.setdefault("matrix", [[3, 1], [1, 1]])
    cfg.setdefault("params", {})
    cfg.setdefault("seed", 0)
    cfg.setdefault("parallelism", 1)
    cfg.setdefault("tolerances", {})
    cfg.setdefault("output_dir", "lab-out")
    for key, val in overrides.items():
        if val is not None:
            cfg[key] = val
    suite = cfg.get("suite") or DEFAULT_SUITES.get(cfg["model"], [])
    for name in suite:
        if name not in KNOWN_CHECKS:
            raise ValueError(f"unknown check name {name!r}")
    cfg["suite"] = suite
    return cfg


def cmd_spectrum(args):
    vals = [int(v) for v in args.matrix.split(",")]
    if len(vals) != 4:
        print("matrix must be a,b,c,d", file=sys.stderr)
        return 1
    try:
        spec = classify(IntMatrix2(*vals))
    except NonHyperbolic as e:
        print(json.dumps({"error": "not hyperbolic", "detail": str(e)}))
        return 2
    except Expanding as e:
        print(json.dumps({"error": "expanding", "detail": str(e)}))
        return 3
    print(json.dumps({"det": spec.det, "degree": spec.degree,
                      "mu_s": spec.mu_s, "mu_u": spec.mu_u,
                      "e_s_angle": spec.e_s, "e_u_angle": spec.e_u},
                     indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# verify checks


def _check_ph_classify(model, cfg, tol, outdir, rng):
    from .hyperbolicity import check_cone_invariance, classify_ph, cone_for_linear

    cone = model.certificate.cone if model.certificate else cone_for_linear(model.spec)
    grid = int(tol.get("cone_grid", 200))
    defect = check_cone_invariance(model, cone, grid)
    cert = classify_ph(model, cone, int(tol.get("ratio_grid", 48)))
    expected = EXPECTED_CLASS[model.kind]
    ok = defect == 0.0 and cert.classification == expected
    if model.certificate is not None:
        with open(os.path.join(outdir, "cone_certificate.json"), "w") as fh:
            fh.write(model.certificate.to_json())
    return dict(status="pass" if ok else "fail",
                values=dict(cone_defect=defect, classification=cert.classification,
                            worst_ratio_1=cert.worst_ratio_1,
                            worst_ratio_2=cert.worst_ratio_2, grid_n=grid),
                tolerances=dict(expected=expected, cone_defect=0.0))


def _check_special(model, cfg, tol, outdir, rng):
    from concurrent.futures import ThreadPoolExecutor

    from .hyperbolicity import specialness_spread, two_branch_spread

    rows = []
    if "spread_probe" in model.meta:
        spread = two_branch_spread(model, model.meta["spread_probe"],
                                   model.meta["spread_branches"])
        thresh = float(tol.get("nonspecial_spread", 1e-3))
        detected = spread > thresh
        rows.append((*model.meta["spread_probe"], spread))
        status = "info" if detected else "fail"
        values = dict(verdict="NOT-SPECIAL" if detected else "UNDETECTED",
                      spread=spread)
    else:
        n_pts = int(tol.get("special_points", 9))
        depth = int(tol.get("special_depth", 12))
        pts = rng.random((n_pts, 2))
        workers = max(1, int(cfg.get("parallelism", 1)))
        if workers > 1:
            # index-ordered gather keeps the report deterministic
            with ThreadPoolExecutor(max_workers=workers) as pool:
                spreads = list(pool.map(
                    lambda p: specialness_spread(model, p, depth), pts))
        else:
            spreads = [specialness_spread(model, p, depth) for p in pts]
        rows = [(p[0], p[1], s) for p, s in zip(pts, spreads)]
        worst = max(spreads) if spreads else 0.0
        thresh = float(tol.get("special_spread", 1e-8))
        status = "pass" if worst < thresh else "fail"
        values = dict(verdict="SPECIAL" if worst < thresh else "NOT-SPECIAL",
                      max_spread=worst, depth=depth, points=n_pts)
    with open(os.path.join(outdir, "specialness.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "spread"])
        w.writerows(rows)
    return dict(status=status, values=values, tolerances=dict(threshold=thresh))


def _check_periodic(model, cfg, tol, outdir, rng):
    from .periodic import count_points, enumerate_periodic

    n_max = int(tol.get("period_max", 2))
    rows = []
    ok = True
    counts = {}
    for n in range(1, n_max + 1):
        orbits = enumerate_periodic(model, n)
        cnt = count_points(orbits, n)
        counts[n] = cnt
        oracle = fixed_point_count(model.spec.matrix, n)
        if model.kind == 0 and cnt != oracle:
            ok = False
        if model.kind != 0 and cnt < oracle:
            ok = False
        for o in orbits:
            if o.residual > 1e-10:
                ok = False
            rows.append([n, o.period, o.deck_class[0], o.deck_class[1],
                         o.point[0], o.point[1], o.lambda_small, o.lambda_big,
                         o.residual])
    with open(os.path.join(outdir, "periodic.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "period", "deck_m1", "deck_m2", "x", "y",
                    "lambda_small", "lambda_big", "residual"])
        w.writerows(rows)
    return dict(status="pass" if ok else "fail",
                values=dict(counts=counts),
                tolerances=dict(residual=1e-10))


def _membership_fn(model, tol):
    from .semiconj import lambda_membership, solve_H

    if model.kind == 0:
        return lambda x: True
    h = solve_H(model, depth_s=0 if not model.has_stable_displacement else 60,
                depth_u=40)
    mtol = float(tol.get("membership_tol", 1e-4))
    return lambda x: lambda_membership(h, model, x, mtol)


def _check_rigidity(model, cfg, tol, outdir, rng):
    from .periodic import enumerate_periodic, rigidity_report

    n_max = int(tol.get("rigidity_period_max", 3))
    orbits = []
    for n in range(1, n_max + 1):
        orbits.extend(enumerate_periodic(model, n))
    seen = set()
    unique = []
    for o in orbits:
        key = (round(o.point[0], 8), round(o.point[1], 8))
        if key not in seen:
            seen.add(key)
            unique.append(o)
    try:
        member = _membership_fn(model, tol)
    except ToruslabError:
        member = None
    report = rigidity_report(model, model.spec, unique,
                             member or (lambda x: True))
    report.write_csv(os.path.join(outdir, "rigidity.csv"))
    dev_tol = float(tol.get("rigidity_dev", 1e-9 if model.kind else 1e-12))
    worst = report.max_deviation(in_lambda_only=True)
    return dict(status="pass" if worst < dev_tol else "fail",
                values=dict(orbits=len(unique), max_in_lambda_deviation=worst,
                            target=report.target),
                tolerances=dict(deviation=dev_tol))


def _check_semiconj(model, cfg, tol, outdir, rng):
    from .semiconj import (conj_residual, deck_commutation_defect,
                           decay_fit_slope, solve_H, stable_decay_check)

    ds = int(tol.get("depth_s", 60))
    du = int(tol.get("depth_u", 30))
    h = solve_H(model, ds, du)
    resid = conj_residual(h, model, int(tol.get("resid_grid", 100)))
    extra = model.meta.get("deck_probe")
    d1, d2 = deck_commutation_defect(h, int(tol.get("deck_grid", 40)),
                                     extra_points=extra)
    h2 = solve_H(model, min(2 * ds, 72 if model.has_stable_displacement else 2 * ds),
                 2 * du)
    g = (np.arange(40) + 0.5) / 40
    gx, gy = np.meshgrid(g, g, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    unique = float(np.max(np.abs(h(pts) - h2(pts))))
    x0 = rng.random(2)
    decay = stable_decay_check(h, model.spec, x0, int(tol.get("decay_kmax", 10)))
    floor = 10.0 * h.trunc_bound + 1e-14
    slope = decay_fit_slope(decay, 2, len(decay) - 1, floor)
    with open(os.path.join(outdir, "stable_decay.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "defect"])
        w.writerows(decay)
    rtol = float(tol.get("conj_residual", 1e-10))
    dtol = float(tol.get("deck_defect", 1e-10))
    utol = float(tol.get("uniqueness", 1e-11))
    slope_tol = math.log(abs(model.spec.mu_s)) + 0.05
    values = dict(conj_residual=resid, deck_defect=[d1, d2], uniqueness=unique,
                  decay_slope=slope, trunc_bound=h.trunc_bound, C_H_est=h.C_H_est)
    if model.kind == 2:
        # non-special: the deck defect is the detection signal
        detected = max(d1, d2) > float(tol.get("nonspecial_deck", 1e-4))
        ok = resid < rtol and unique < utol and detected
        values["verdict"] = "NOT-DESCENDING" if detected else "UNDETECTED"
        return dict(status="info" if ok else "fail", values=values,
                    tolerances=dict(conj_residual=rtol, uniqueness=utol,
                                    nonspecial_deck=tol.get("nonspecial_deck", 1e-4)))
    ok = (resid < rtol and max(d1, d2) < dtol and unique < utol
          and slope <= slope_tol)
    return dict(status="pass" if ok else "fail", values=values,
                tolerances=dict(conj_residual=rtol, deck_defect=dtol,
                                uniqueness=utol, decay_slope=slope_tol))


def _check_atlas(model, cfg, tol, outdir, rng):
    from .semiconj import lambda_atlas, solve_H

    if model.kind == 0:
        return dict(status="pass",
                    values=dict(note="linear model: injectivity set is all of T^2"),
                    tolerances={})
    h = solve_H(model, depth_s=0 if not model.has_stable_displacement else 60,
                depth_u=40)
    grid = int(tol.get("atlas_grid", 100))
    atlas = lambda_atlas(h, model, grid,
                        float(tol.get("atlas_membership_tol", 2e-5)))
    with open(os.path.join(outdir, "lambda_atlas.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "member", "fiber_diameter", "center_log_deriv"])
        w.writerows(atlas["rows"])
    inv_tol = float(tol.get("atlas_invariance", 0.01))
    ok = (atlas["invariance_defect"] < inv_tol
          and atlas["min_center_log_deriv_members"] > 0.0)
    return dict(status="pass" if ok else "fail",
                values=dict(member_fraction=atlas["member_fraction"],
                            invariance_defect=atlas["invariance_defect"],
                            saturation_fraction=atlas["saturation_fraction"],
                            min_center_log_deriv=atlas["min_center_log_deriv_members"]),
                tolerances=dict(invariance=inv_tol, center_log_deriv=0.0))


def _check_conservativity(model, cfg, tol, outdir, rng):
    if cfg["model"] == "t3":
        pair = model.fiber_pair(np.zeros(2))
        res = pair.conservativity_residual(int(tol.get("pair_samples", 10000)),
                                           seed=int(cfg["seed"]))
        psi0 = pair(0.0)
        psi_half = pair(0.5)
        dpsi0 = pair.prime(0.0)
        jac0 = float(np.linalg.det(model.deriv(np.zeros(2), 0.0)))
        defect = model.conservativity_defect(int(tol.get("map_samples", 200)),
                                             seed=int(cfg["seed"]))
        ok = (res < float(tol.get("pair_residual", 1e-8))
              and abs(psi0) < 1e-12 and abs(psi_half) < 1e-12
              and dpsi0 > 2.0 and jac0 > abs(model.mat.det) * 2.0
              and defect < float(tol.get("map_defect", 1e-7)))
        return dict(status="pass" if ok else "fail",
                    values=dict(pair_residual=res, psi0=psi0, psi_half=psi_half,
                                dpsi0=dpsi0, jac0=jac0, map_defect=defect),
                    tolerances=dict(pair_residual=tol.get("pair_residual", 1e-8),
                                    map_defect=tol.get("map_defect", 1e-7)))
    from .models import conservativity_defect

    defect = conservativity_defect(model, int(tol.get("samples", 200)),
                                   rng=int(cfg["seed"]))
    if model.kind == 0:
        ok = defect < 1e-12
        return dict(status="pass" if ok else "fail",
                    values=dict(defect=defect), tolerances=dict(defect=1e-12))
    return dict(status="info", values=dict(defect=defect,
                                           note="nonlinear models need not preserve volume"),
                tolerances={})


def _check_density(model, cfg, tol, outdir, rng):
    k_max = int(tol.get("density_kmax", 12))
    grid = int(tol.get("density_grid", 400))
    dens = preimage_density(model.spec.matrix, np.zeros(2), k_max, grid)
    with open(os.path.join(outdir, "preimage_density.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "eps_k"])
        w.writerows(dens)
    slope = fit_decay_slope(dens, 2, k_max)
    bound = math.log(model.spec.degree ** -0.5) + 0.1
    return dict(status="pass" if slope <= bound else "fail",
                values=dict(slope=slope, eps=dict(dens)),
                tolerances=dict(slope_bound=bound))


CHECK_FNS = {
    "ph-classify": _check_ph_classify,
    "special-test": _check_special,
    "periodic": _check_periodic,
    "rigidity": _check_rigidity,
    "semiconj": _check_semiconj,
    "lambda-atlas": _check_atlas,
    "conservativity": _check_conservativity,
    "density": _check_density,
}


def run_suite(cfg):
    """Build the configured model, run its suite, return (report, all_pass)."""
    from .models import model_from_config

    outdir = cfg["output_dir"]
    os.makedirs(outdir, exist_ok=True)
    model = model_from_config(cfg)
    report = dict(artifact_version=__version__, backend=_kernels.BACKEND,
                  config={k: cfg[k] for k in ("model", "matrix", "params",
                                              "suite", "seed", "parallelism")},
                  model_label=getattr(model, "label", cfg["model"]),
                  checks={})
    ok = True
    for i, name in enumerate(cfg["suite"]):
        rng = np.random.default_rng([int(cfg["seed"]), i])
        t0 = time.time()
        try:
            res = CHECK_FNS[name](model, cfg, cfg["tolerances"], outdir, rng)
        except ToruslabError as e:
            res = dict(status="fail", values=dict(error=str(e)), tolerances={})
        res["runtime_s"] = round(time.time() - t0, 3)
        report["checks"][name] = res
        if res["status"] == "fail":
            ok = False
    with open(os.path.join(outdir, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    return report, ok


def cmd_verify(args):
    try:
        overrides = dict(seed=args.seed, output_dir=args.out,
                         parallelism=args.parallelism,
                         suite=args.check if args.check else None)
        cfg = _load_config(args.config, overrides)
    except (OSError, ValueError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 1
    try:
        report, ok = run_suite(cfg)
    except NonHyperbolic:
        return 2
    except Expanding:
        return 3
    for name, res in report["checks"].items():
        print(f"{name}: {res['status']} ({res['runtime_s']}s)")
    if not ok:
        failing = [n for n, r in report["checks"].items() if r["status"] == "fail"]
        print(f"FAILED: {', '.join(failing)}", file=sys.stderr)
        return 4
    return 0


def cmd_report_merge(args):
    if not args.reports:
        print("no reports given", file=sys.stderr)
        return 1
    merged = {"artifact_version": None, "models": {}}
    rows = []
    try:
        for path in args.reports:
            with open(path) as fh:
                rep = json.load(fh)
            ver = rep.get("artifact_version")
            if merged["artifact_version"] is None:
                merged["artifact_version"] = ver
            elif ver != merged["artifact_version"]:
                raise VersionMismatch(f"{path}: version {ver} != "
                                      f"{merged['artifact_version']}")
            label = rep.get("model_label", "model")
            base = label
            k = 2
            while label in merged["models"]:
                label = f"{base}#{k}"
                k += 1
            merged["models"][label] = rep["checks"]
            rig = os.path.join(os.path.dirname(path), "rigidity.csv")
            if os.path.exists(rig):
                with open(rig) as fh:
                    for row in list(csv.DictReader(fh)):
                        rows.append({"model": label, **row})
    except (OSError, json.JSONDecodeError, VersionMismatch) as e:
        print(f"merge error: {e}", file=sys.stderr)
        return 1
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "merged.json"), "w") as fh:
        json.dump(merged, fh, indent=2, sort_keys=True)
    if rows:
        keys = ["model"] + [k for k in rows[0] if k != "model"]
        with open(os.path.join(args.out, "rigidity_merged.csv"), "w",
                  newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            w.writerows(rows)
    print(f"merged {len(args.reports)} report(s) into {args.out}")
    return 0


def main(argv=None):
    ap = argparse.ArgumentParser(prog="toruslab", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)
    sp = sub.add_parser("spectrum", help="classify an integer matrix")
    sp.add_argument("--matrix", required=True, help="a,b,c,d row-major")
    sv = sub.add_parser("verify", help="run a check suite from a JSON config")
    sv.add_argument("--config", required=True)
    sv.add_argument("--seed", type=int, default=None)
    sv.add_argument("--out", default=None)
    sv.add_argument("--parallelism", type=int, default=None)
    sv.add_argument("--check", action="append",
                    help="run only this check (repeatable)")
    sm = sub.add_parser("report-merge", help="merge verify reports")
    sm.add_argument("reports", nargs="*")
    sm.add_argument("--out", default="merged-out")
    args = ap.parse_args(argv)
    if os.environ.get("LAB_LOG"):
        print(f"toruslab {__version__} backend={_kernels.BACKEND}",
              file=sys.stderr)
    if args.cmd == "spectrum":
        return cmd_spectrum(args)
    if args.cmd == "verify":
        return cmd_verify(args)
    return cmd_report_merge(args)


if __name__ == "__main__":
    sys.exit(main())
