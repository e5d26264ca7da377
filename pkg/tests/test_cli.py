import json

import pytest

from toruslab.cli import main


def run(args):
    return main(args)


def test_spectrum_ok(capsys):
    assert run(["spectrum", "--matrix", "3,1,1,1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["det"] == 2
    assert out["mu_u"] == pytest.approx(3.41421356, abs=1e-6)


def test_spectrum_not_hyperbolic(capsys):
    assert run(["spectrum", "--matrix", "1,1,0,1"]) == 2


def test_spectrum_expanding(capsys):
    assert run(["spectrum", "--matrix", "2,0,0,2"]) == 3


def test_verify_unknown_check(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"model": "linear", "suite": ["nope"]}))
    assert run(["verify", "--config", str(cfg)]) == 1


def test_verify_missing_config(capsys):
    assert run(["verify", "--config", "/does/not/exist.json"]) == 1


def test_verify_linear_suite(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    out = tmp_path / "out"
    cfg.write_text(json.dumps({
        "model": "linear", "matrix": [[3, 1], [1, 1]],
        "suite": ["ph-classify", "special-test", "periodic", "density",
                  "conservativity"],
        "tolerances": {"cone_grid": 60, "ratio_grid": 24, "period_max": 2,
                       "density_kmax": 8, "density_grid": 200,
                       "special_points": 2, "special_depth": 8,
                       "samples": 60},
        "seed": 3,
    }))
    assert run(["verify", "--config", str(cfg), "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["checks"]["ph-classify"]["values"]["classification"] == "anosov"
    assert report["checks"]["periodic"]["values"]["counts"]["2"] == 7
    assert (out / "preimage_density.csv").exists()
    assert (out / "periodic.csv").exists()


def test_verify_determinism(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "model": "linear", "matrix": [[3, 1], [1, 1]],
        "suite": ["special-test"],
        "tolerances": {"special_points": 3, "special_depth": 8},
        "seed": 11,
    }))
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert run(["verify", "--config", str(cfg), "--out", str(out)]) == 0
        rep = json.loads((out / "report.json").read_text())
        for check in rep["checks"].values():
            check.pop("runtime_s")
        outs.append(rep)
    assert outs[0] == outs[1]


def test_verify_check_flag_overrides_suite(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    out = tmp_path / "out"
    cfg.write_text(json.dumps({"model": "linear", "matrix": [[3, 1], [1, 1]],
                               "suite": ["density"],
                               "tolerances": {"density_kmax": 6,
                                              "density_grid": 150}}))
    assert run(["verify", "--config", str(cfg), "--out", str(out),
                "--check", "conservativity"]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert list(rep["checks"]) == ["conservativity"]


def test_verify_t3_conservativity(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    out = tmp_path / "out"
    cfg.write_text(json.dumps({
        "model": "t3", "matrix": [[3, 1], [1, 1]],
        "suite": ["conservativity"],
        "tolerances": {"pair_samples": 1500, "map_samples": 40},
        "seed": 5,
    }))
    assert run(["verify", "--config", str(cfg), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    vals = rep["checks"]["conservativity"]["values"]
    assert vals["pair_residual"] < 1e-8
    assert vals["jac0"] > 4.0


def test_report_merge(tmp_path, capsys):
    reports = []
    for i, name in enumerate(("r1", "r2")):
        out = tmp_path / name
        cfg = tmp_path / f"cfg{i}.json"
        cfg.write_text(json.dumps({"model": "linear", "matrix": [[3, 1], [1, 1]],
                                   "suite": ["conservativity"],
                                   "tolerances": {"samples": 40}}))
        assert run(["verify", "--config", str(cfg), "--out", str(out)]) == 0
        reports.append(str(out / "report.json"))
    merged = tmp_path / "merged"
    assert run(["report-merge", *reports, "--out", str(merged)]) == 0
    data = json.loads((merged / "merged.json").read_text())
    labels = list(data["models"])
    assert len(labels) == 2 and labels[0] != labels[1]  # suffixed duplicate


def test_report_merge_empty(capsys):
    assert run(["report-merge"]) == 1


def test_report_merge_version_mismatch(tmp_path, capsys):
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    a.write_text(json.dumps({"artifact_version": "0.1.0", "model_label": "m1",
                             "checks": {}}))
    b.write_text(json.dumps({"artifact_version": "9.9.9", "model_label": "m2",
                             "checks": {}}))
    assert run(["report-merge", str(a), str(b),
                "--out", str(tmp_path / "m")]) == 1
