import json

import pytest

from jssdesign import datagen
from jssdesign.cli import EXIT_OK, EXIT_STAGE, EXIT_USAGE, main, theory_check
from jssdesign.experiment import ExperimentConfig, ModeRow, Report, emit_report, run_experiment

FAST = ["--jobs", "3", "--machines", "3", "--steps", "10", "--epochs", "20"]


def _rows():
    return [ModeRow("standard", 9.5, 2.0, 100.0, 50.0, 1.5, 0.1),
            ModeRow("od", 1.0, None, 40.0, 20.0, 0.0, 0.7)]


class TestConfig:
    def test_round_trip(self):
        cfg = ExperimentConfig(jobs=3, steps=7, max_increase=0.25, node_limit=100,
                               standardize_inputs=False, overrides={"od.epochs": "12"})
        back = ExperimentConfig.from_text(cfg.to_text())
        assert back == cfg
        assert back.train_config("od").epochs == 12
        assert back.train_config("standard").epochs == 500

    def test_comments_and_overrides(self):
        cfg = ExperimentConfig.from_text("# c\njobs = 2\n\nsteps=3\n", {"steps": "5"})
        assert cfg.jobs == 2 and cfg.steps == 5

    @pytest.mark.parametrize("text", ["nokey\n", "bogus=1\n", "od.bogus=1\n", "steps=1\n",
                                      "standardize_inputs=maybe\n", "duration_min=5\nduration_max=2\n"])
    def test_invalid(self, text):
        with pytest.raises(ValueError):
            ExperimentConfig.from_text(text)

    def test_per_mode_budget(self):
        cfg = ExperimentConfig(overrides={"standard.time_limit": "5", "od.solve_seed": "3"})
        assert cfg.budget("standard").time_limit == 5.0
        assert cfg.budget("od").seed == 3 and cfg.budget("standard").seed == 0


class TestReport:
    def test_json_round_trip(self):
        rep = Report(_rows(), [{"index": 0, "standard": 0, "od": 0}, {"index": 1, "standard": 4, "od": 1}])
        assert Report.from_json(rep.to_json()) == rep
        obj = json.loads(rep.to_json())
        assert obj["schema"] == "jssdesign-report" and obj["version"] == 1
        assert "generation_seconds" not in obj["rows"][0]

    def test_two_rows_and_header_only_curve(self, tmp_path):
        rep = Report(_rows(), [])
        emit_report(rep, tmp_path)
        lines = (tmp_path / "report.csv").read_text().splitlines()
        assert lines[0] == "mode,total_variation,lipschitz_constant,prediction_error,constraint_violation,optimality_gap"
        assert len(lines) == 3
        assert lines[2].split(",")[2] == ""  # missing Lipschitz constant
        assert (tmp_path / "curve.csv").read_text() == "index,standard,od\n"

    def test_unknown_format(self, tmp_path):
        with pytest.raises(ValueError):
            emit_report(Report(_rows()), tmp_path, formats=("xml",))

    def test_rejects_other_json(self):
        with pytest.raises(ValueError):
            Report.from_json('{"schema": "x", "version": 1}')


class TestRunExperiment:
    def test_pipeline_outputs(self, tmp_path):
        cfg = ExperimentConfig(jobs=3, machines=3, steps=10, epochs=20, out_dir=str(tmp_path))
        rep = run_experiment(cfg)
        by_mode = {r.mode: r for r in rep.rows}
        assert len(rep.rows) == 2
        assert by_mode["od"].total_variation <= by_mode["standard"].total_variation
        assert len(rep.curve) == 10 and rep.curve[0] == {"index": 0, "standard": 0, "od": 0}
        for name in ("family.jsonl", "standard.jsonl", "od.jsonl", "model_standard.json",
                     "model_od.json", "report.json", "report.csv", "curve.csv", "timings.json", "config.txt"):
            assert (tmp_path / name).exists(), name
        for mode in ("standard", "od"):
            datagen.load_dataset(tmp_path / f"{mode}.jsonl").validate()
        assert ExperimentConfig.from_text((tmp_path / "config.txt").read_text()) == cfg

    def test_zero_perturbation(self, tmp_path):
        cfg = ExperimentConfig(jobs=3, machines=3, steps=2, max_increase=0.0, epochs=5, out_dir=str(tmp_path))
        rep = run_experiment(cfg)
        od = next(r for r in rep.rows if r.mode == "od")
        assert od.total_variation == 0
        assert all(r.lipschitz_constant is None for r in rep.rows)
        assert [p["od"] for p in rep.curve] == [0, 0]


class TestMain:
    def test_run_is_byte_reproducible(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["run", *FAST, "--out-dir", str(a)]) == EXIT_OK
        assert main(["run", *FAST, "--out-dir", str(b), "--workers", "2"]) == EXIT_OK
        for name in ("report.json", "report.csv", "curve.csv", "standard.jsonl", "od.jsonl", "model_od.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_stagewise_commands(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("JSSDESIGN_OUTPUT_DIR", str(tmp_path))
        assert main(["gen-family", "--steps", "4"]) == EXIT_OK
        assert main(["gen-data", "--mode", "od"]) == EXIT_OK
        assert main(["gen-data", "--mode", "standard", "--workers", "2"]) == EXIT_OK
        assert main(["train", "--data", str(tmp_path / "od.jsonl"), "--epochs", "3"]) == EXIT_OK
        capsys.readouterr()
        assert main(["evaluate", "--data", str(tmp_path / "od.jsonl"),
                     "--model", str(tmp_path / "model_od.json"), "--out", str(tmp_path / "m.json")]) == EXIT_OK
        metrics = json.loads(capsys.readouterr().out)
        assert metrics["count"] == 4
        assert json.loads((tmp_path / "m.json").read_text()) == metrics

    def test_config_file_and_flag_precedence(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(f"steps=9\nout_dir={tmp_path}\n")
        assert main(["gen-family", "--config", str(cfg), "--steps", "3"]) == EXIT_OK
        assert len(datagen.load_family(tmp_path / "family.jsonl")) == 3
        assert main(["gen-family", "--config", str(cfg), "--steps", "3", "--set", "steps=5"]) == EXIT_OK
        assert len(datagen.load_family(tmp_path / "family.jsonl")) == 5

    def test_missing_instance_is_stage_failure(self, tmp_path, capsys):
        code = main(["run", "--instance", str(tmp_path / "nope.txt"), "--out-dir", str(tmp_path)])
        assert code == EXIT_STAGE
        assert "load-instance" in capsys.readouterr().err

    def test_missing_family_is_stage_failure(self, tmp_path):
        assert main(["gen-data", "--mode", "od", "--out-dir", str(tmp_path)]) == EXIT_STAGE

    @pytest.mark.parametrize("argv", [[], ["frobnicate"], ["run", "--bogus"], ["gen-data"],
                                      ["run", "--set", "nokey"], ["run", "--steps", "x"],
                                      ["run", "--config", "/nonexistent.cfg"]])
    def test_usage_errors(self, argv):
        assert main(argv) == EXIT_USAGE

    def test_instance_file_input(self, tmp_path):
        inst = tmp_path / "a.txt"
        inst.write_text("2 2\n0 2 1 2\n1 1 0 3\n")
        assert main(["gen-family", "--instance", str(inst), "--steps", "2", "--scale", "1",
                     "--out", str(tmp_path / "f.jsonl")]) == EXIT_OK
        fam = datagen.load_family(tmp_path / "f.jsonl")
        assert fam[1].duration.tolist() == [[3, 2], [1, 5]]

    def test_theory_check(self, capsys):
        assert main(["theory-check", "--trials", "50"]) == EXIT_OK
        out = json.loads(capsys.readouterr().out)
        assert out["ok"] and out["bound_violations"] == 0
        assert theory_check(10)["tight_example"] == {"bound": 0.5, "actual": 0.5}
