import csv
import json

import numpy as np
import pytest

from fixtures import gmsc_schema, gmsc_spec, linear_model
from monogrove import grove
from monogrove.cli import EXIT_ERROR, EXIT_FAIL, EXIT_OK, family_setup, main
from monogrove.schema import GroveArchitecture, derive_groups
from synth import write_csv

QUICK = ["--epochs", "60", "--max-rounds", "2", "--grid-1d", "16", "--grid-group", "5"]


@pytest.fixture(scope="module")
def gmsc_csv(tmp_path_factory):
    return write_csv(tmp_path_factory.mktemp("data"), "gmsc", n=300)


def train(csv_path, out, family, *extra):
    return main(["train", "--data", str(csv_path), "--recipe", "gmsc", "--model", family, "--out-dir", str(out), *QUICK, *extra])


def test_nam_run_keeps_lambda_zero(gmsc_csv, tmp_path):
    assert train(gmsc_csv, tmp_path, "nam") == EXIT_OK
    for f in ("model.json", "trace.csv", "metrics.json", "manifest.json"):
        assert (tmp_path / f).exists()
    rows = list(csv.DictReader(open(tmp_path / "trace.csv")))
    assert len(rows) == 1 and float(rows[0]["lambda3"]) == 0.0
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["seed"] == 0 and len(manifest["dataset_fingerprint"]) == 64
    for p in [manifest["model_path"], *manifest["report_paths"]]:
        assert (tmp_path / p.split("/")[-1]).exists()


def test_mgnam_groups_and_exit_code_matches_trace(gmsc_csv, tmp_path):
    code = train(gmsc_csv, tmp_path, "mgnam")
    d = json.loads((tmp_path / "model.json").read_text())
    assert ["x3", "x7", "x9"] in d["architecture"]["groups"]
    assert code == (EXIT_OK if d["certified"] else EXIT_FAIL)
    assert "timestamp" not in json.dumps(d) and "started" not in d


def test_fcnn_single_group(gmsc_csv, tmp_path):
    assert train(gmsc_csv, tmp_path, "fcnn") == EXIT_OK
    d = json.loads((tmp_path / "model.json").read_text())
    assert len(d["architecture"]["groups"]) == 1


def test_train_is_byte_deterministic(gmsc_csv, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    train(gmsc_csv, a, "mgnam")
    train(gmsc_csv, b, "mgnam")
    assert (a / "model.json").read_bytes() == (b / "model.json").read_bytes()


def test_family_desugaring():
    s, spec = gmsc_schema(), gmsc_spec()
    arch, tspec = family_setup("mnam", s, spec, (2,))
    assert all(len(g) == 1 for g in arch.groups)
    assert tspec.strong_pairs == () and set(tspec.weak_pairs) == set(spec.strong_pairs)
    assert family_setup("gnam", s, spec, (2,))[1].is_empty
    assert family_setup("mgnam", s, spec, (2,))[1] == spec
    with pytest.raises(ValueError):
        family_setup("xgb", s, spec, (2,))


def save(model, path, spec=None):
    extra = {"spec": (spec or gmsc_spec()).to_dict()}
    path.write_text(grove.dumps(model, extra))
    return path


def test_certify_constant_model_passes(tmp_path, capsys):
    s = gmsc_schema()
    m = grove.zero_model(derive_groups(s, gmsc_spec()), s, "binary_classification")
    p = save(m, tmp_path / "m.json")
    assert main(["certify", "--model", str(p), "--out-dir", str(tmp_path)]) == EXIT_OK
    rep = json.loads((tmp_path / "certification.json").read_text())
    assert rep["pass"] and rep["discrete"]["pass"]


def test_certify_failure_prints_witness(tmp_path, capsys):
    s = gmsc_schema()
    m = linear_model(s, derive_groups(s, gmsc_spec()), {"x3": 1.0, "x9": 2.0, "x7": 0.5})
    p = save(m, tmp_path / "m.json")
    assert main(["certify", "--model", str(p), "--out-dir", str(tmp_path), "--grid-group", "5"]) == EXIT_FAIL
    out = capsys.readouterr().out
    assert "FAIL" in out and "witness" in out


def test_export_tables_mirror_block_layout(tmp_path):
    s = gmsc_schema()
    m = linear_model(s, derive_groups(s, gmsc_spec()), {"x3": 1.0, "x9": 2.0, "x7": 3.0})
    p = save(m, tmp_path / "m.json")
    out = tmp_path / "t"
    assert main(["export-tables", "--model", str(p), "--out-dir", str(out)]) == EXIT_OK
    lines = (out / "table_x3_x7_x9_blocks.csv").read_text().splitlines()
    assert [l for l in lines if l.startswith("x7=")] == ["x7=0", "x7=1", "x7=2"]
    assert lines[1] == "x3\\x9,0,1,2"
    assert lines[2] == "0,0.000000,2.000000,4.000000"
    long = list(csv.DictReader(open(out / "table_x3_x7_x9.csv")))
    assert len(long) == 27
    assert main(["export-tables", "--model", str(p), "--lattice", "", "--out-dir", str(out)]) == EXIT_ERROR
    assert main(["export-tables", "--model", str(p), "--group", "x1+x2", "--out-dir", str(out)]) == EXIT_ERROR


def test_export_curves_one_per_feature(tmp_path):
    s = gmsc_schema()
    m = linear_model(s, GroveArchitecture.singletons(s), {"x1": 1.0})
    p = save(m, tmp_path / "m.json")
    assert main(["export-curves", "--model", str(p), "--out-dir", str(tmp_path), "--points", "5"]) == EXIT_OK
    rows = list(csv.DictReader(open(tmp_path / "curves.csv")))
    assert {r["feature"] for r in rows} == set(s.names)
    x1 = [float(r["value"]) for r in rows if r["feature"] == "x1"]
    assert x1 == sorted(x1) and len(x1) == 5
    assert len([r for r in rows if r["feature"] == "x3"]) == 5  # integer points 0..4


def test_evaluate_reuses_split(gmsc_csv, tmp_path, capsys):
    train(gmsc_csv, tmp_path, "nam")
    capsys.readouterr()
    assert main(["evaluate", "--model", str(tmp_path / "model.json"), "--data", str(gmsc_csv), "--recipe", "gmsc", "--out-dir", str(tmp_path)]) == EXIT_OK
    ev = json.loads((tmp_path / "evaluation.json").read_text())
    assert ev == json.loads((tmp_path / "metrics.json").read_text())["test"]


def test_separability_command(gmsc_csv, tmp_path):
    code = main(["separability", "--data", str(gmsc_csv), "--recipe", "gmsc", "--group-u", "x7,x9", "--group-v", "x3", "--out-dir", str(tmp_path), *QUICK])
    v = json.loads((tmp_path / "separability.json").read_text())
    assert code == EXIT_FAIL and not v["monotone_feasible"]


def test_errors_exit_one(tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "missing.csv"), "--recipe", "gmsc", "--out-dir", str(tmp_path)]) == EXIT_ERROR
    assert main(["certify", "--model", str(tmp_path / "nope.json"), "--out-dir", str(tmp_path)]) == EXIT_ERROR
    assert "error:" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["train"])
    assert exc.value.code == EXIT_ERROR


def test_out_dir_env_default(gmsc_csv, tmp_path, monkeypatch):
    monkeypatch.setenv("MONOGROVE_OUT", str(tmp_path / "envout"))
    assert main(["train", "--data", str(gmsc_csv), "--recipe", "gmsc", "--model", "nam", *QUICK]) == EXIT_OK
    assert (tmp_path / "envout" / "model.json").exists()
