import json
import subprocess
import sys
from importlib import resources

import jsonschema
import pytest

from hetchoice import reference as ref
from hetchoice.cli import EXIT_COVERAGE, EXIT_INPUT, EXIT_NOT_CONVERGED, EXIT_OK, OUT_ENV, main


def _schema():
    return json.loads(resources.files("hetchoice").joinpath("schemas/estimation_result.schema.json").read_text())


def _strip_times(doc):
    doc = json.loads(json.dumps(doc))
    doc.get("manifest", {}).pop("timestamps", None)
    return doc


@pytest.fixture(scope="module")
def sim_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert main(["simulate", "--model", "bl", "--n", "300", "--seed", "4", "--out", str(out)]) == EXIT_OK
    return out


def test_simulate_outputs(sim_dir):
    manifest = json.loads((sim_dir / "manifest.json").read_text())
    assert manifest["subcommand"] == "simulate"
    assert manifest["config"]["truth"]["ASC_Give"] == 2.33
    assert "unreported" in manifest["config"]["population"]["acceleration"]["note"]
    lines = (sim_dir / "dataset.csv").read_text().strip().split("\n")
    assert len(lines) == 901


def test_estimate_bl(sim_dir, tmp_path, capsys):
    code = main(["estimate", "--model", "bl", "--data", str(sim_dir / "dataset.csv"), "--out", str(tmp_path)])
    assert code == EXIT_OK
    doc = json.loads((tmp_path / "result.json").read_text())
    jsonschema.validate(doc, _schema())
    assert doc["n_params"] == 8 and doc["bic_n"] == "observations"
    assert len(doc["manifest"]["inputs"]["dataset.csv"]) == 64
    table = (tmp_path / "table.txt").read_text()
    for row in ("Number of parameters", "Akaike Information Criterion",
                "Bayesian Information Criterion", "Rho-square-bar", "not significant at 95%"):
        assert row in table
    assert sum(1 for line in table.splitlines() if line.startswith(("ASC_Give", "B_"))) == 8
    assert "Rho-square-bar" in capsys.readouterr().out


def test_estimate_missing_data_is_input_error(capsys):
    assert main(["estimate", "--model", "bl"]) == EXIT_INPUT
    assert "usage" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["estimate", "--model", "bl", "--data", "/nonexistent.csv"],
    ["estimate", "--model", "probit", "--data", "x.csv"],
    ["classify", "--data", "/nonexistent.csv"],
])
def test_input_errors(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_INPUT


def test_spec_family_mismatch(sim_dir, tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(ref.spec_text("MIXL"))
    code = main(["estimate", "--model", "bl", "--spec", str(spec), "--data", str(sim_dir / "dataset.csv"),
                 "--out", str(tmp_path)])
    assert code == EXIT_INPUT


def test_lcml_forced_non_convergence(sim_dir, tmp_path):
    code = main(["estimate", "--model", "lcml", "--data", str(sim_dir / "dataset.csv"), "--max-iter", "1",
                 "--draws", "20", "--restarts", "2", "--out", str(tmp_path)])
    assert code == EXIT_NOT_CONVERGED
    doc = json.loads((tmp_path / "result.json").read_text())
    assert doc["convergence"]["converged"] is False
    jsonschema.validate(doc, _schema())


def test_estimate_bit_identical_across_threads(sim_dir, tmp_path):
    docs = []
    for threads in ("1", "4", "1"):
        out = tmp_path / f"t{threads}_{len(docs)}"
        assert main(["estimate", "--model", "mixl", "--data", str(sim_dir / "dataset.csv"), "--draws", "50",
                     "--threads", threads, "--out", str(out)]) == EXIT_OK
        docs.append(_strip_times(json.loads((out / "result.json").read_text())))
    assert docs[0] == docs[1] == docs[2]
    assert (tmp_path / "t1_0" / "table.txt").read_bytes() == (tmp_path / "t4_1" / "table.txt").read_bytes()


def test_out_dir_from_environment(sim_dir, tmp_path, monkeypatch):
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "envout"))
    assert main(["estimate", "--model", "bl", "--data", str(sim_dir / "dataset.csv")]) == EXIT_OK
    assert (tmp_path / "envout" / "result.json").is_file()


def test_recover_single_seed(tmp_path):
    code = main(["recover", "--model", "bl", "--n", "400", "--seeds", "1", "--out", str(tmp_path)])
    assert code in (EXIT_OK, EXIT_COVERAGE)
    report = json.loads((tmp_path / "recovery.json").read_text())
    assert report["n_seeds"] == 1
    assert all(p["coverage"] in (0.0, 1.0) for p in report["parameters"])
    assert (code == EXIT_OK) == report["all_covered"]


def test_recover_unknown_truth_name(tmp_path):
    truth = dict(zip(ref.builtin_spec("BL").param_names, ref.truth("BL")))
    truth["B_NOT_THERE"] = 1.0
    path = tmp_path / "truth.json"
    path.write_text(json.dumps(truth))
    assert main(["recover", "--model", "bl", "--truth", str(path), "--n", "50", "--seeds", "1",
                 "--out", str(tmp_path)]) == EXIT_INPUT


def test_recover_accepts_unused_threshold(tmp_path):
    spec = ref.builtin_spec("OL")
    truth = dict(zip(spec.param_names, ref.truth("OL")))
    truth["delta3"] = 17.20
    path = tmp_path / "truth.json"
    path.write_text(json.dumps(truth))
    code = main(["recover", "--model", "ol", "--truth", str(path), "--n", "300", "--seeds", "1",
                 "--out", str(tmp_path)])
    assert code in (EXIT_OK, EXIT_COVERAGE)


def test_classify_jenks_and_fixed(tmp_path):
    data = tmp_path / "props.csv"
    data.write_text("auto_proportion\n0.1\n0.12\n0.5\n0.55\n0.9\n0.92\n")
    assert main(["classify", "--data", str(data), "--k", "3", "--out", str(tmp_path / "j")]) == EXIT_OK
    breaks = json.loads((tmp_path / "j" / "breaks.json").read_text())
    assert breaks["breakpoints"] == [0.12, 0.55, 0.92] and breaks["counts"] == [2, 2, 2]
    assert main(["classify", "--data", str(data), "--breaks", "0.39,0.66,0.95",
                 "--out", str(tmp_path / "f")]) == EXIT_OK
    rows = (tmp_path / "f" / "classified.csv").read_text().strip().split("\n")
    assert rows[0] == "value,category,level"
    assert rows[3].endswith(",2,medium") and rows[6].endswith(",3,high")


def test_classify_bad_value(tmp_path):
    data = tmp_path / "props.csv"
    data.write_text("p\n0.1\nabc\n")
    assert main(["classify", "--data", str(data), "--out", str(tmp_path)]) == EXIT_INPUT


def test_compare_sorted_by_bic(tmp_path, capsys):
    paths = []
    for fam in ("LCML", "BL", "MIXL"):
        d = tmp_path / fam
        d.mkdir()
        (d / "result.json").write_text(ref.reported_result(fam).to_json())
        paths.append(str(d / "result.json"))
    assert main(["compare", *paths, "--out", str(tmp_path / "cmp")]) == EXIT_OK
    head = (tmp_path / "cmp" / "compare.txt").read_text().splitlines()[0].split()
    assert head == ["BL", "MIXL", "LCML"]


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hetchoice.cli", "classify", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "--breaks" in proc.stdout
