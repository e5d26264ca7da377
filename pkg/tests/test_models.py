import json

import numpy as np
import pytest

from toruslab.bump import bump_eval
from toruslab.errors import ConeBroken, ConeFailure, SupportOverlap
from toruslab.linear_model import IntMatrix2
from toruslab.models import (CuParams, ManeParams, build_mane_cu, build_mane_sc,
                             build_nonspecial, choose_k, conservativity_defect,
                             lift_inverse, model_from_config, torus_preimages,
                             validate_mane_params)
from toruslab.torus_core import project, torus_dist

MAT = IntMatrix2(3, 1, 1, 1)


def test_validator_accepts_reference_params(spec):
    mu1, mu2 = abs(spec.mu_s), abs(spec.mu_u)
    cert = validate_mane_params(ManeParams(mu1, mu2, -2.6, 216))
    assert mu2 - 2.6 == pytest.approx(0.8142, abs=1e-4)
    assert cert.aperture == 2.0 * cert.c0
    assert cert.margins["ineq2_max"] < 0.0
    assert cert.margins["ineq3_max"] < 0.0


def test_validator_rejects_sink_range(spec):
    mu1, mu2 = abs(spec.mu_s), abs(spec.mu_u)
    with pytest.raises(ConeFailure) as ei:
        validate_mane_params(ManeParams(mu1, mu2, -3.0, 64))
    assert ei.value.which == "sink-range"


def test_validator_rejects_small_k(spec):
    mu1, mu2 = abs(spec.mu_s), abs(spec.mu_u)
    with pytest.raises(ConeFailure) as ei:
        validate_mane_params(ManeParams(mu1, mu2, -2.6, 1))
    assert ei.value.which == "vector-contraction"


def test_choose_k_is_minimal(spec):
    mu1, mu2 = abs(spec.mu_s), abs(spec.mu_u)
    k = choose_k(mu1, mu2, -2.6)
    assert k == 216
    with pytest.raises(ConeFailure):
        validate_mane_params(ManeParams(mu1, mu2, -2.6, k - 1))


def test_g0_fixed_sink(g0, spec):
    assert np.max(np.abs(g0.lift(np.zeros(2)))) < 1e-14
    d0 = g0.deriv_frame(np.zeros(2))
    assert d0[0] == pytest.approx(abs(spec.mu_s), abs=1e-13)
    assert d0[3] == pytest.approx(abs(spec.mu_u) - 2.6, abs=1e-13)
    assert 0 < d0[3] < 1  # sink in the center direction as well


def test_g0_saddles(g0, spec):
    # phi at the saddle height solves phi = (1 - mu2)/lam ~ 0.9285
    target = (1 - abs(spec.mu_u)) / -2.6
    assert target == pytest.approx(0.9285, abs=1e-4)
    assert bump_eval(g0.meta["tstar"]) == pytest.approx(target, abs=1e-12)
    for sd in g0.meta["saddles"]:
        img = project(g0.lift(sd))
        assert torus_dist(img, sd) < 1e-12
        y = sd if torus_dist(sd, (0, 0)) < 0.25 else sd - 1.0
        d = g0.deriv_frame(np.asarray(y, dtype=float))
        assert d[3] > 1.0  # expanding along the center at the saddle


def test_g0_triangular_frame_derivative(g0, rng):
    pts = rng.uniform(-2, 2, (400, 2))
    d = g0.deriv_frame(pts)
    assert np.max(np.abs(d[:, 1])) == 0.0  # exactly lower triangular


def test_g0_outside_support_is_linear(g0, spec):
    # a point whose eigen-offset is far outside the support
    q = np.array([0.4, 0.0]) * spec.e_s_vec + 0.3 * spec.e_u_vec
    a = spec.matrix.as_array()
    assert np.allclose(g0.lift(q), a @ q, atol=1e-15)


def test_homotopy_condition(g0, g1, cu_model, rng):
    a = MAT.as_array()
    pts = rng.uniform(-3, 3, (300, 2))
    for m in (g0, g1, cu_model):
        for e in (np.array([1.0, 0.0]), np.array([0.0, 1.0])):
            d = m.lift(pts + e) - m.lift(pts) - a @ e
            assert np.max(np.abs(d)) < 1e-12


def test_jacobian_matches_finite_differences(linear_model, g0, g1, cu_model):
    # fixed 30x30 grid; central differences with h = 1e-5
    g = (np.arange(30) + 0.5) / 30
    gx, gy = np.meshgrid(g, g, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    h = 1e-5
    for m in (linear_model, g0, g1, cu_model):
        j = m.deriv(pts)
        for i, e in enumerate((np.array([h, 0.0]), np.array([0.0, h]))):
            fd = (m.lift(pts + e) - m.lift(pts - e)) / (2 * h)
            assert np.max(np.abs(fd[:, 0] - j[:, 0 + i])) < 1e-6, m.label
            assert np.max(np.abs(fd[:, 1] - j[:, 2 + i])) < 1e-6, m.label


def test_jacobian_inside_support_adaptive(g0, rng):
    # relative agreement with step adapted to the strip feature scale
    r = g0.meta["support_scale"]
    k = g0.meta["k"]
    spec = g0.spec
    xs = rng.uniform(-0.25, 0.25, 60) * r
    xu = rng.uniform(-0.25, 0.25, 60) * r / k
    pts = xs[:, None] * spec.e_s_vec + xu[:, None] * spec.e_u_vec
    h = 1e-9
    j = g0.deriv(pts)
    for i, e in enumerate((np.array([h, 0.0]), np.array([0.0, h]))):
        fd = (g0.lift(pts + e) - g0.lift(pts - e)) / (2 * h)
        assert np.max(np.abs(fd[:, 0] - j[:, 0 + i])) < 2e-5
        assert np.max(np.abs(fd[:, 1] - j[:, 2 + i])) < 2e-5


def test_sup_delta_bound(g0, spec):
    # |Delta| <= |lam| * max(phi(t) t) * r / k from the bump geometry
    ts = np.linspace(0, 0.25, 20001)
    mx = max(bump_eval(t) * t for t in ts)
    bound = 2.6 * mx * g0.meta["support_scale"] / g0.meta["k"]
    assert g0.sup_delta(300) <= bound + 1e-12
    assert g0.sup_delta(300) > 0.5 * bound


def test_lift_inverse(g0, linear_model, rng):
    pts = rng.uniform(0, 1, (200, 2))
    inv = lift_inverse(g0, pts)
    assert np.max(np.abs(g0.lift(inv) - pts)) < 1e-11
    y = np.array([0.37, -1.2])
    exact = np.linalg.solve(MAT.as_array(), y)
    assert np.allclose(lift_inverse(linear_model, y), exact, atol=1e-14)
    # equivariance under A-deck translation
    n = MAT.as_array() @ np.array([2.0, -1.0])
    assert np.allclose(lift_inverse(g0, y + n),
                       lift_inverse(g0, y) + np.array([2.0, -1.0]), atol=1e-10)


def test_torus_preimages(g0, linear_model):
    pre = torus_preimages(g0, np.zeros(2))
    assert len(pre) == 2
    assert min(torus_dist(p, (0.0, 0.0)) for p in pre) < 1e-12
    for p in pre:
        assert torus_dist(project(g0.lift(p)), (0.0, 0.0)) < 1e-10
    prelin = torus_preimages(linear_model, np.array([0.3, 0.9]))
    assert len(prelin) == 2


def test_conservativity_defect(linear_model, g0):
    assert conservativity_defect(linear_model, 100) < 1e-12
    assert conservativity_defect(g0, 150) > 1e-3


def test_support_overlap_rejected(spec):
    mu1, mu2 = abs(spec.mu_s), abs(spec.mu_u)
    with pytest.raises(SupportOverlap):
        build_mane_sc(MAT, ManeParams(mu1, mu2, -2.6, 216, support_scale=2.0))


def test_nonspecial_probes_and_cap(g0, g1):
    assert g1.meta["shear"] <= g1.certificate.margins["shear_cap"]
    assert "spread_probe" in g1.meta and "deck_probe" in g1.meta
    with pytest.raises(ConeBroken):
        build_nonspecial(g0, shear=100.0 * g1.meta["shear"])


def test_nonspecial_region_off_lambda(g0):
    from toruslab.errors import RegionIntersectsLambda

    saddle_t = g0.meta["y_saddle"]
    bad_center = project(1.5 * saddle_t * g0.spec.e_u_vec)  # beyond the saddle
    with pytest.raises(RegionIntersectsLambda):
        build_nonspecial(g0, region_center=bad_center)


def test_cu_model_structure(cu_model, spec):
    d0 = cu_model.deriv_frame(np.zeros(2))
    assert d0[0] == pytest.approx(1.05, abs=1e-10)  # weakened stable direction
    assert d0[2] == 0.0  # upper triangular frame derivative
    assert np.max(np.abs(cu_model.lift(np.zeros(2)))) < 1e-14
    # local diffeomorphism: frame determinant positive on a grid
    g = (np.arange(60) + 0.5) / 60
    gx, gy = np.meshgrid(g, g, indexing="ij")
    d = cu_model.deriv_frame(np.column_stack([gx.ravel(), gy.ravel()]))
    assert np.min(d[:, 0] * d[:, 3] - d[:, 1] * d[:, 2]) > 0.0


def test_cu_rejects_bad_target():
    with pytest.raises(ConeFailure):
        build_mane_cu(MAT, CuParams(target_deriv=0.5))


def test_model_from_config(tmp_path):
    cfg = {"model": "mane_sc", "matrix": [[3, 1], [1, 1]],
           "params": {"lambda": -2.6, "k": 216}}
    m = model_from_config(cfg)
    assert m.kind == 1
    lin = model_from_config({"model": "linear", "matrix": [[3, 1], [1, 1]]})
    assert lin.kind == 0
    # certificate serializes to JSON
    data = json.loads(m.certificate.to_json())
    assert data["k"] == 216 and data["kind"] == "sc"
    with pytest.raises(ValueError):
        model_from_config({"model": "nope"})
