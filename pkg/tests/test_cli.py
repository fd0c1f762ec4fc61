import json

import numpy as np
import pytest

from nullitylab.cli import RunConfig, main
from nullitylab.errors import ValidationError
from nullitylab.immersion import Plane, sample, save_sampled_grid
from nullitylab.io import read_csv


def run(tmp_path, *argv):
    return main([*argv, "--out-dir", str(tmp_path)])


def load(path):
    return json.loads(path.read_text())


def test_analyze_cylinder(tmp_path):
    assert run(tmp_path, "analyze", "--family", "cylinder", "--resolution", "101") == 0
    cert = load(tmp_path / "certificate.json")
    assert cert["status"] == "PASS" and cert["max_strain"] <= 1e-10
    assert cert["schema_version"] == 1
    header, rows = read_csv(tmp_path / "strain.csv")
    assert header == ["x_1", "x_2", "value"] and len(rows) == cert["points"]
    header, _ = read_csv(tmp_path / "codazzi.csv")
    assert header == ["x_1", "x_2", "value"]
    assert (tmp_path / "sff_summary.json").exists() and (tmp_path / "gauss.csv").exists()


def test_analyze_sphere_chart_fails(tmp_path, capsys):
    assert run(tmp_path, "analyze", "--family", "sphere-chart") == 3
    assert load(tmp_path / "certificate.json")["status"] == "FAIL"
    assert "not an isometric" in capsys.readouterr().err


def test_analyze_sampled_plane_file(tmp_path):
    path = tmp_path / "plane.json"
    save_sampled_grid(sample(Plane(), 41), path)
    assert run(tmp_path, "analyze", "--grid", str(path), "--resolution", "41") == 0
    assert load(tmp_path / "certificate.json")["status"] == "PASS"


@pytest.mark.parametrize("argv", [
    ["analyze", "--grid", "missing.json"],
    ["analyze", "--family", "plane", "--resolution", "20"],
    ["analyze", "--family", "plane", "--resolution", "11"],
    ["analyze", "--family", "plane", "--tol-rank", "-1"],
    ["trace", "--family", "plane", "--epsilon", "0.05", "0.1"],
    ["analyze"],
    ["analyze", "--family", "cone", "--param", "opening=0.4"],
    ["analyze", "--family", "cone", "--param", "opening"],
    ["trace", "--family", "cylinder", "--direction", "0,1"],
])
def test_input_errors(tmp_path, argv):
    assert run(tmp_path, *argv) == 2


def test_bad_grid_file(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("not json")
    assert run(tmp_path, "analyze", "--grid", str(bad)) == 2


def test_argparse_errors_exit_2(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run(tmp_path, "analyze", "--family", "torus-of-doom")
    assert exc.value.code == 2


@pytest.mark.parametrize("family, seq", [("bent-flap-disk", [1, 2]), ("plane", [2]),
                                         ("confinement-torus", [0])])
def test_stratify(tmp_path, family, seq):
    assert run(tmp_path, "stratify", "--family", family) == 0
    s = load(tmp_path / "strata.json")
    assert s["index_sequence"] == seq
    assert sum(s["stratum_counts"].values()) == s["nodes"] - s["excluded_nodes"]
    header, rows = read_csv(tmp_path / "nullity.csv")
    assert header == ["x_1", "x_2", "nu", "stratum", "open"] and len(rows) == s["nodes"]


@pytest.mark.parametrize("family, segments", [("bent-flap-disk", 2), ("cylinder", 1), ("plane", 1)])
def test_trace_chains(tmp_path, family, segments):
    assert run(tmp_path, "trace", "--family", family) == 0
    run0 = load(tmp_path / "chain.json")["runs"][0]
    assert len(run0["segments"]) == segments and run0["reached_boundary"]
    if family == "plane":
        assert run0["measured_defect"] == 0
    header, rows = read_csv(tmp_path / "polyline.csv")
    assert header == ["run", "segment", "x_1", "x_2", "y_1", "y_2", "y_3"]
    assert {int(r[1]) for r in rows} == set(range(segments))


def test_trace_single_direction(tmp_path):
    assert run(tmp_path, "trace", "--family", "cylinder", "--point", "0,0.2", "--direction", "1,0") == 0
    seg = load(tmp_path / "chain.json")["segment"]
    assert seg["reason"] == "boundary" and seg["certified"]


def test_trace_resolution_error(tmp_path):
    assert run(tmp_path, "trace", "--family", "bent-flap-disk", "--resolution", "21",
               "--epsilon", "0.01") == 4


def test_trace_epsilon_schedule(tmp_path):
    assert run(tmp_path, "trace", "--family", "bent-flap-disk", "--epsilon", "0.1", "0.05",
               "--format", "json") == 0
    rep = load(tmp_path / "chain.json")
    assert [r["epsilon"] for r in rep["runs"]] == [0.1, 0.05]
    assert len(rep["refinement_slopes"]) == 1
    assert not (tmp_path / "polyline.csv").exists()


def test_span_torus(tmp_path):
    assert run(tmp_path, "span", "--family", "confinement-torus", "--param", "R_s=0.1") == 0
    rep = load(tmp_path / "confinement.json")["reports"][0]
    assert rep["enclosing_radius"] == pytest.approx(0.1 / np.sqrt(2), abs=1e-9)
    assert rep["span_estimate"]["value"] == pytest.approx(0.1 * np.sqrt(2), abs=1e-3)
    assert rep["verdict"].startswith("CONFINABLE")
    assert "verdict" in (tmp_path / "confinement.txt").read_text()


def test_span_cylinder_and_non_isometric(tmp_path):
    assert run(tmp_path, "span", "--family", "cylinder", "--format", "csv") == 0
    header, rows = read_csv(tmp_path / "span.csv")
    assert header[0] == "epsilon" and float(rows[0][1]) >= 2 - 1e-12
    assert run(tmp_path, "span", "--family", "sphere-chart") == 3


def test_cartan_sweep(tmp_path):
    assert run(tmp_path, "cartan", "--samples", "1000", "--inject-asymmetric") == 0
    s = load(tmp_path / "cartan_sweep.json")
    assert s["violations"] == 0 and s["samples"] == 1000
    assert s["max_residual"] <= 1e-9 and s["min_nullity_margin"] >= 0
    assert s["skipped_dimV_le_dimU"] > 0 and "note" in s
    assert s["asymmetric_injection"]["rejected"]


@pytest.mark.parametrize("argv", [
    ["analyze", "--family", "bent-flap-disk"],
    ["stratify", "--family", "cone"],
    ["trace", "--family", "bent-flap-disk", "--epsilon", "0.1", "0.05"],
    ["span", "--family", "confinement-torus", "--sampler", "dense"],
    ["cartan", "--samples", "200", "--seed", "7"],
])
def test_outputs_byte_identical(tmp_path, argv):
    a, b = tmp_path / "a", tmp_path / "b"
    code_a = main([*argv, "--out-dir", str(a)])
    code_b = main([*argv, "--out-dir", str(b)])
    assert code_a == code_b
    files = sorted(p.name for p in a.iterdir())
    assert files == sorted(p.name for p in b.iterdir()) and files
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_cartan_seed_changes_sample(tmp_path):
    main(["cartan", "--samples", "50", "--seed", "1", "--out-dir", str(tmp_path / "a")])
    main(["cartan", "--samples", "50", "--seed", "2", "--out-dir", str(tmp_path / "b")])
    a = load(tmp_path / "a" / "cartan_sweep.json")
    b = load(tmp_path / "b" / "cartan_sweep.json")
    assert a["max_abs_component"] != b["max_abs_component"]


def test_run_config_validation():
    RunConfig("analyze", family="plane").validate()
    with pytest.raises(ValidationError):
        RunConfig("analyze", family="plane", grid_file="x.json").validate()
    with pytest.raises(ValidationError):
        RunConfig("analyze", family="plane", epsilons=(0.1, 0.1)).validate()
