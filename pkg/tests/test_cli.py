import json

import pytest

from nsdiag.cli import main
from nsdiag.fixtures import COVIDR_FILE, FEEDBACK_FILE, fixture_path
from nsdiag.neural import read_synth_dir

A_MATRIX = {"tp": 26, "fn": 4, "fp": 1, "tn": 297}
B_MATRIX = {"tp": 23, "fn": 7, "fp": 2, "tn": 296}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One full CLI workflow: synth -> stubs -> features -> tree -> bundle."""
    ws = tmp_path_factory.mktemp("cli")
    spec = ws / "spec.json"
    spec.write_text(json.dumps({
        "counts": {"covid": 6, "healthy": 4, "tuberculosis": 3, "pneumonia": 3},
        "seed": 7,
    }))
    data = ws / "cases"
    assert main(["synth", "--spec", str(spec), "--out", str(data)]) == 0

    common = ["--data", str(data), "--lr", "0.1", "--epochs", "40", "--hidden", "6"]
    assert main(["train-stub", "--kind", "s", *common, "--out", str(ws / "s.json")]) == 0
    assert main([
        "train-stub", "--kind", "r", *common,
        "--s", str(ws / "s.json"), "--out", str(ws / "r.json"),
    ]) == 0
    assert main(["train-stub", "--kind", "e2e", *common, "--out", str(ws / "e2e.json")]) == 0

    assert main([
        "features", "--s", str(ws / "s.json"), "--r", str(ws / "r.json"),
        "--cases", str(data), "--out", str(ws / "features.csv"),
    ]) == 0
    assert main([
        "fit-tree", "--data", str(ws / "features.csv"),
        "--max-depth", "4", "--max-leaves", "6", "--out", str(ws / "tree.json"),
    ]) == 0
    return ws


class TestWorkflow:
    def test_outputs_exist_without_temp_leftovers(self, workspace):
        for name in ("s.json", "r.json", "e2e.json", "features.csv", "tree.json"):
            assert (workspace / name).exists()
            assert not (workspace / f"{name}.tmp").exists()
        assert not (workspace / "cases.partial").exists()

    def test_features_csv_header(self, workspace):
        header = (workspace / "features.csv").read_text().splitlines()[0]
        assert header.startswith("case_id,Atelectasis,")
        assert header.endswith(",p_aso,p_ggo,p_aso_ggo,p_none,p_missing,truth")

    def test_sweep(self, workspace, capsys):
        out = workspace / "sweep.csv"
        code = main([
            "sweep", "--data", str(workspace / "features.csv"),
            "--param", "leaves", "--values", "2,4",
            "--eval-split", "0.25", "--out", str(out),
        ])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "param,value,accuracy"
        assert len(lines) == 3
        printed = capsys.readouterr().out
        assert "max_leaves=2" in printed and "max_leaves=4" in printed

    def test_explain_bundle(self, workspace):
        case_id = read_synth_dir(workspace / "cases")[0].case.case_id
        out = workspace / "bundles"
        code = main([
            "explain", "--tree", str(workspace / "tree.json"),
            "--s", str(workspace / "s.json"), "--r", str(workspace / "r.json"),
            "--cases", str(workspace / "cases"), "--case", case_id,
            "--out", str(out),
        ])
        assert code == 0
        names = sorted(p.name for p in (out / case_id).iterdir())
        assert "saliency.pgm" in names and "inductive.txt" in names

    def test_explain_unknown_case(self, workspace, capsys):
        code = main([
            "explain", "--tree", str(workspace / "tree.json"),
            "--s", str(workspace / "s.json"), "--r", str(workspace / "r.json"),
            "--cases", str(workspace / "cases"), "--case", "nope",
            "--out", str(workspace / "bundles"),
        ])
        assert code == 1
        assert "error:" in capsys.readouterr().err


class TestParseCovidr:
    def test_fixture_annotations(self, tmp_path, capsys):
        out = tmp_path / "classes.csv"
        code = main(["parse-covidr", "--in", str(fixture_path(COVIDR_FILE)), "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "image_id,cohort,morph_class"
        assert len(lines) == 246
        assert "mapped 245 annotations" in capsys.readouterr().out

    def test_bad_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("image,cohort\n")
        code = main(["parse-covidr", "--in", str(bad), "--out", str(tmp_path / "o.csv")])
        assert code == 1


class TestEval:
    def setup_matrices(self, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        a.write_text(json.dumps(A_MATRIX))
        b.write_text(json.dumps(B_MATRIX))
        return a, b

    def test_human_output(self, tmp_path, capsys):
        a, b = self.setup_matrices(tmp_path)
        assert main(["eval", "--pred-a", str(a), "--pred-b", str(b)]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == "a: 0.985 ± 0.007"
        assert out[1] == "b: 0.973 ± 0.009"
        assert out[2] == "difference: not significant"

    def test_json_output(self, tmp_path, capsys):
        a, b = self.setup_matrices(tmp_path)
        assert main(["eval", "--pred-a", str(a), "--pred-b", str(b), "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["significant"] is False
        assert payload["a"]["n"] == 328
        assert payload["a"]["p"] == pytest.approx(0.9847560975609756)

    def test_bad_matrix(self, tmp_path, capsys):
        a = tmp_path / "a.json"
        a.write_text(json.dumps({"tp": 1}))
        b = tmp_path / "b.json"
        b.write_text(json.dumps(B_MATRIX))
        assert main(["eval", "--pred-a", str(a), "--pred-b", str(b)]) == 1


class TestReport:
    def test_text_to_stdout(self, capsys):
        assert main(["report", "--log", str(fixture_path(FEEDBACK_FILE))]) == 0
        out = capsys.readouterr().out
        assert out.startswith("completed reviews: 30")

    def test_json_payload(self, capsys):
        assert main(["report", "--log", str(fixture_path(FEEDBACK_FILE)), "--json"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["record_count"] == 30
        assert payload["usefulness"]["vis_ind"] == [14, 7, 9]

    def test_report_directory(self, tmp_path):
        out = tmp_path / "report"
        assert main(["report", "--log", str(fixture_path(FEEDBACK_FILE)), "--out", str(out)]) == 0
        assert (out / "report.txt").exists()
        assert (out / "usefulness.csv").exists()

    def test_missing_log(self, tmp_path, capsys):
        assert main(["report", "--log", str(tmp_path / "none.jsonl")]) == 1


class TestRun:
    def test_pipeline_from_config(self, tmp_path, capsys):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({
            "seed": 5,
            "source": {"kind": "synth", "counts": {"covid": 8, "healthy": 8}},
            "out_dir": str(tmp_path / "run"),
            "s_epochs": 40,
            "e2e_epochs": 40,
            "lr_grid": [0.1],
            "epochs_grid": [40],
        }))
        assert main(["run", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        assert "tree accuracy:" in out and "e2e accuracy:" in out
        assert (tmp_path / "run" / "manifest.json").exists()

    def test_stage_failure_exits_2(self, tmp_path, capsys):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({
            "seed": 1,
            "source": {"kind": "features", "path": str(tmp_path / "absent.csv")},
            "out_dir": str(tmp_path / "run"),
        }))
        assert main(["run", "--config", str(config)]) == 2
        assert "load-data" in capsys.readouterr().err


class TestErrorHandling:
    def test_unknown_flag_exits_1(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["fit-tree", "--bogus"])
        assert exc.value.code == 1
        assert "usage:" in capsys.readouterr().err

    def test_unknown_subcommand_exits_1(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["teleport"])
        assert exc.value.code == 1

    def test_constraint_violation_exits_1(self, workspace, capsys):
        code = main([
            "fit-tree", "--data", str(workspace / "features.csv"),
            "--max-depth", "4", "--max-leaves", "1", "--out", str(workspace / "t2.json"),
        ])
        assert code == 1
        assert "max_leaves" in capsys.readouterr().err

    def test_missing_input_exits_1(self, tmp_path, capsys):
        code = main([
            "fit-tree", "--data", str(tmp_path / "none.csv"),
            "--max-depth", "2", "--max-leaves", "2", "--out", str(tmp_path / "t.json"),
        ])
        assert code == 1


class TestSeedResolution:
    def spec_without_seed(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"counts": {"covid": 3, "healthy": 3}}))
        return spec

    def test_env_seed_matches_flag_seed(self, tmp_path, monkeypatch):
        spec = self.spec_without_seed(tmp_path)
        assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "a"), "--seed", "3"]) == 0
        monkeypatch.setenv("DX_SEED", "3")
        assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "b")]) == 0
        a = (tmp_path / "a" / "cases.csv").read_text()
        b = (tmp_path / "b" / "cases.csv").read_text()
        assert a == b

    def test_default_seed_is_zero(self, tmp_path):
        spec = self.spec_without_seed(tmp_path)
        assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "a")]) == 0
        ids = [sc.case.case_id for sc in read_synth_dir(tmp_path / "a")]
        assert all(cid.startswith("case-0-") for cid in ids)

    def test_bad_env_seed(self, tmp_path, monkeypatch, capsys):
        spec = self.spec_without_seed(tmp_path)
        monkeypatch.setenv("DX_SEED", "many")
        assert main(["synth", "--spec", str(spec), "--out", str(tmp_path / "a")]) == 1
        assert "DX_SEED" in capsys.readouterr().err


def test_console_script_installed():
    import shutil as _shutil

    assert _shutil.which("nsdiag") is not None


def test_main_module_entrypoint():
    # `python -m nsdiag.cli` must work for environments without the script
    import subprocess
    import sys

    proc = subprocess.run(
        [sys.executable, "-m", "nsdiag.cli", "--help"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "parse-covidr" in proc.stdout
