import csv
import io
import json

import numpy as np
import pytest

from confrecon import __version__
from confrecon.cli import SWEEP_HEADER, main
from confrecon.metrics import (
    avg_cra_closed,
    marginal_accuracy,
    marginal_confidentiality,
    metric_report,
)
from confrecon.model import ChannelPair, Policy, SourceModel

REF = ["--p", "0.5", "--q", "0.5", "--ps", "0.8", "--pse", "0.2"]
GEN = ["--p", "0.2", "--q", "0.3", "--ps", "0.9", "--pse", "0.1"]


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_analyze_pass_through(capsys):
    code, out, _ = run(capsys, "analyze", *REF, "--palpha", "1")
    assert code == 0
    doc = json.loads(out)
    src, ch, pol = SourceModel(0.5, 0.5), ChannelPair(0.8, 0.2), Policy(1.0)
    assert doc["cra"] == metric_report(src, ch, pol).cra
    assert doc["cra"] == pytest.approx(avg_cra_closed(src, ch, pol), abs=1e-15)


def test_analyze_endpoint_weights(capsys):
    _, out, _ = run(capsys, "analyze", *GEN, "--palpha", "0.4", "--omega", "0,1")
    doc = json.loads(out)
    assert doc["weighted"] == [doc["accuracy"], doc["confidentiality"]]
    src, ch, pol = SourceModel(0.2, 0.3), ChannelPair(0.9, 0.1), Policy(0.4)
    assert doc["accuracy"] == pytest.approx(marginal_accuracy(src, ch, pol), abs=1e-12)
    assert doc["confidentiality"] == pytest.approx(marginal_confidentiality(src, ch, pol), abs=1e-12)


def test_analyze_csv(capsys):
    _, out, _ = run(capsys, "analyze", *GEN, "--palpha", "0.4", "--format", "csv")
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["metric", "value"]
    assert [r[0] for r in rows[1:]] == ["cra", "accuracy", "confidentiality",
                                         "non_confidential_accuracy", "weighted[0.5]"]


def test_domain_violation_exit_2_without_files(capsys, tmp_path):
    out_dir = tmp_path / "out"
    code, out, err = run(capsys, "analyze", *REF, "--palpha", "0", "--out-dir", str(out_dir))
    assert code == 2 and out == "" and "p_alpha" in err
    assert not out_dir.exists()


def test_argparse_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["analyze", "--p", "0.5"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["sweep", *REF, "--palphas", "0.1,x"])
    assert exc.value.code == 2


def test_sweep_header_and_agreement(capsys):
    _, out, _ = run(capsys, "sweep", *GEN, "--num", "7", "--numeric", "--format", "csv")
    lines = out.splitlines()
    assert lines[0] == "p_alpha,cra_closed,cra_numeric,cra_sim_mean,cra_sim_stderr,a0,a1,a_omega"
    assert tuple(lines[0].split(",")) == SWEEP_HEADER
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 7
    for row in rows:
        assert abs(float(row["cra_closed"]) - float(row["cra_numeric"])) < 1e-10
        assert row["cra_sim_mean"] == "" and row["cra_sim_stderr"] == ""
    assert "\r" not in out


def test_sweep_full_precision(capsys):
    _, out, _ = run(capsys, "sweep", *GEN, "--palphas", "0.3", "--format", "csv")
    row = next(csv.DictReader(io.StringIO(out)))
    value = avg_cra_closed(SourceModel(0.2, 0.3), ChannelPair(0.9, 0.1), Policy(0.3))
    assert float(row["cra_closed"]) == pytest.approx(value, abs=1e-15)
    assert len(row["cra_closed"].replace("0.", "").lstrip("0")) >= 15


def test_sweep_simulation_deterministic(capsys, tmp_path):
    args = ["sweep", *GEN, "--num", "3", "--sim", "--horizon", "3000", "--runs", "10",
            "--warmup", "100", "--seed", "5", "--format", "csv"]
    run(capsys, *args, "--out-dir", str(tmp_path / "a"))
    run(capsys, *args, "--out-dir", str(tmp_path / "b"))
    a = (tmp_path / "a" / "sweep.csv").read_bytes()
    assert a == (tmp_path / "b" / "sweep.csv").read_bytes()
    rows = list(csv.DictReader(io.StringIO(a.decode())))
    for row in rows:
        assert abs(float(row["cra_sim_mean"]) - float(row["cra_closed"])) < 5 * float(row["cra_sim_stderr"])


@pytest.mark.parametrize("extra", [["--num", "0"], ["--palphas", "0.5,1.5"], ["--start", "0", "--num", "3"]])
def test_sweep_bad_grid(capsys, extra):
    code, _, _ = run(capsys, "sweep", *GEN, *extra)
    assert code == 2


def test_optimize_symmetric_alternating(capsys):
    code, out, _ = run(capsys, "optimize", "--p", "0.9", "--q", "0.9", "--ps", "0.5", "--pse", "0.5",
                       "--pmax", "0.8")
    doc = json.loads(out)
    assert code == 0
    assert doc["branch"] == "SymmetricAlternating" and doc["p_alpha_star"] == 0.8


def test_optimize_matches_sweep(capsys):
    _, out, _ = run(capsys, "optimize", *GEN)
    p_star = json.loads(out)["p_alpha_star"]
    _, out, _ = run(capsys, "sweep", *GEN, "--start", "0.001", "--stop", "1", "--num", "1000",
                    "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    best = max(rows, key=lambda r: float(r["cra_closed"]))
    assert abs(float(best["p_alpha"]) - p_star) <= 1e-3


def test_optimize_projection(capsys):
    tup = ["--p", "0.14", "--q", "0.06", "--ps", "0.33", "--pse", "0.14"]
    _, out, _ = run(capsys, "optimize", *tup)
    assert json.loads(out)["p_alpha_star"] == pytest.approx(0.18, abs=2e-3)
    _, out, _ = run(capsys, "optimize", *tup, "--pmin", "0.2", "--pmax", "0.4")
    doc = json.loads(out)
    assert doc["p_alpha_star"] == 0.2 and doc["branch"] == "Clamped"


def test_optimize_bad_interval(capsys):
    code, _, err = run(capsys, "optimize", *GEN, "--pmin", "0.5", "--pmax", "0.4")
    assert code == 2 and "interval" in err


def test_optimize_csv(capsys):
    _, out, _ = run(capsys, "optimize", *GEN, "--format", "csv")
    assert out.splitlines()[0] == "p_alpha_star,value,branch,delta"


def test_validate_green(capsys, tmp_path):
    code, out, _ = run(capsys, "validate", "--tuples", "20", "--sim-tuples", "2", "--out-dir", str(tmp_path))
    assert code == 0
    report = json.loads((tmp_path / "validate.json").read_text())
    assert report["passed"] and all(c["margin"] >= 0 for c in report["checks"])
    assert {c["name"] for c in report["checks"]} >= {"closed_vs_numeric", "rational_vs_stationary",
                                                     "optimizer_vs_grid", "simulation_agreement"}


def test_validate_detects_coefficient_fault(capsys, monkeypatch):
    import confrecon.metrics as metrics

    good = metrics.cra_coefficients

    def flipped(src, ch):
        c = good(src, ch)
        return metrics.CraRational(c.A, -c.B, c.C, c.D, c.E)

    monkeypatch.setattr(metrics, "cra_coefficients", flipped)
    code, out, err = run(capsys, "validate", "--tuples", "10", "--sim-tuples", "0")
    assert code == 1
    assert "coefficient_signs" in err and "rational_vs_stationary" in err
    failed = {c["name"] for c in json.loads(out)["checks"] if not c["passed"]}
    assert "coefficient_signs" in failed


def test_validate_deterministic(capsys):
    args = ["validate", "--tuples", "500", "--sim-tuples", "1", "--horizon", "2000", "--runs", "10",
            "--seed", "7"]
    first = run(capsys, *args)[1]
    assert first == run(capsys, *args)[1]


def test_validate_bad_counts(capsys):
    assert run(capsys, "validate", "--tuples", "0")[0] == 2


@pytest.fixture(scope="module")
def geofence_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("geo")
    code = main(["geofence", "demo", "--out-dir", str(out)])
    return code, out


def test_geofence_outputs(geofence_run):
    code, out = geofence_run
    assert code == 0
    names = {p.name for p in out.iterdir()}
    for stem in ("eve_success", "optimal_cra", "optimal_p_alpha"):
        assert {f"{stem}.csv", f"{stem}.grid"} <= names
    assert {"contour.geojson", "manifest.json"} <= names
    geo = json.loads((out / "contour.geojson").read_text())
    assert len(geo["features"]) == 1 and geo["features"][0]["properties"]["closed"]


def test_geofence_manifest_digests_stable(geofence_run, tmp_path):
    _, out = geofence_run
    assert main(["geofence", "demo", "--out-dir", str(tmp_path)]) == 0
    first = json.loads((out / "manifest.json").read_text())
    second = json.loads((tmp_path / "manifest.json").read_text())
    assert first["outputs"] == second["outputs"]
    assert first["version"] == __version__ and first["subcommand"] == "geofence"


def test_manifest_replay_is_byte_exact(geofence_run, tmp_path):
    _, out = geofence_run
    assert main(["replay", str(out / "manifest.json"), "--out-dir", str(tmp_path)]) == 0
    for p in out.iterdir():
        assert (tmp_path / p.name).read_bytes() == p.read_bytes()


def test_replay_other_subcommands(capsys, tmp_path):
    run(capsys, "sweep", *GEN, "--num", "4", "--format", "csv", "--out-dir", str(tmp_path / "a"))
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert "--out-dir" not in manifest["argv"] and manifest["params"]["num"] == 4
    run(capsys, "replay", str(tmp_path / "a" / "manifest.json"), "--out-dir", str(tmp_path / "b"))
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == (tmp_path / "b" / "sweep.csv").read_bytes()
    assert (tmp_path / "a" / "manifest.json").read_bytes() == (tmp_path / "b" / "manifest.json").read_bytes()


def test_replay_bad_manifest(capsys, tmp_path):
    bad = tmp_path / "m.json"
    bad.write_text("{}")
    assert run(capsys, "replay", str(bad), "--out-dir", str(tmp_path / "o"))[0] == 2


def _write_scene(tmp_path, **over):
    scene = {"schema": "confrecon.scene/v1", "bob_position": [0.5, 10.5],
             "extent": [-60, 60, -60, 60], "resolution": 1.0, "bob_success_override": 0.8, **over}
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(scene))
    return path


def test_geofence_open_scene_closed_contour(capsys, tmp_path):
    path = _write_scene(tmp_path)
    code, out, _ = run(capsys, "geofence", str(path), "--tau", "0.1", "--out-dir", str(tmp_path / "o"))
    assert code == 0 and json.loads(out)["contours"] == 1
    geo = json.loads((tmp_path / "o" / "contour.geojson").read_text())
    coords = np.array(geo["features"][0]["geometry"]["coordinates"])
    assert np.array_equal(coords[0], coords[-1])


def test_geofence_threshold_above_map(capsys, tmp_path):
    path = _write_scene(tmp_path)
    code, _, _ = run(capsys, "geofence", str(path), "--tau", "0.99", "--out-dir", str(tmp_path / "o"))
    assert code == 0
    geo = json.loads((tmp_path / "o" / "contour.geojson").read_text())
    assert geo["type"] == "FeatureCollection" and geo["features"] == []


def test_geofence_malformed_scene(capsys, tmp_path):
    path = _write_scene(tmp_path, resolution=-1)
    assert run(capsys, "geofence", str(path), "--out-dir", str(tmp_path / "o"))[0] == 2
    assert not (tmp_path / "o").exists()
    assert run(capsys, "geofence", str(tmp_path / "missing.json"), "--out-dir", str(tmp_path / "o"))[0] == 2


def test_geofence_failed_cells_exit_1(capsys, tmp_path, monkeypatch):
    import confrecon.geofence as geo

    real = geo.optimize

    def flaky(src, ch, interval):
        if ch.p_s_e < 0.01:
            raise ArithmeticError("injected")
        return real(src, ch, interval)

    monkeypatch.setattr(geo, "optimize", flaky)
    code, out, err = run(capsys, "geofence", "demo", "--out-dir", str(tmp_path))
    assert code == 1 and "optimal_cra" in err
    assert json.loads(out)["failed_maps"] == ["optimal_cra", "optimal_p_alpha"]
    assert not (tmp_path / "contour.geojson").exists()
